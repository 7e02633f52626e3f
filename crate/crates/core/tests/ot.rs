use otvq::diffcore::Tensor;
use otvq::ot::{
    exact_ot_weights, independent_coupling, semi_dual_from_cost, sinkhorn_weights, GroundCost,
    SinkhornOptions,
};
use proptest::prelude::*;

fn simplex(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.05f64..1.0, n).prop_map(|w| {
        let s: f64 = w.iter().sum();
        w.into_iter().map(|x| x / s).collect()
    })
}

fn instance() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Tensor)> {
    (1usize..7, 1usize..7).prop_flat_map(|(n, k)| {
        (
            simplex(n),
            simplex(k),
            prop::collection::vec(0.0f64..2.0, n * k)
                .prop_map(move |c| Tensor::new(vec![n, k], c).unwrap()),
        )
    })
}

proptest! {
    #[test]
    fn exact_plan_is_feasible_and_optimal_vs_sinkhorn((a, b, c) in instance()) {
        let exact = exact_ot_weights(&a, &b, &c).unwrap();
        prop_assert!(exact.marginal_error(&a, &b) < 1e-9);
        prop_assert!(exact.matrix.data().iter().all(|&x| x >= 0.0));
        let sk = sinkhorn_weights(&a, &b, &c, SinkhornOptions::new(0.05)).unwrap();
        prop_assert!(sk.marginal_error < 1e-8);
        // Up to its marginal slack, the Sinkhorn plan is feasible and cannot beat the LP optimum.
        let c_max = c.data().iter().cloned().fold(0.0, f64::max);
        let slack = 2.0 * (a.len() + b.len()) as f64 * sk.marginal_error * c_max + 1e-12;
        prop_assert!(sk.transport_cost >= exact.value - slack);
        prop_assert!(sk.entropic_value >= sk.transport_cost - 1e-12);
    }

    #[test]
    fn semi_dual_is_weakly_dual(
        (a, b, c) in instance(),
        phi in prop::collection::vec(-1.0f64..1.0, 6),
    ) {
        // The semi-dual treats rows as a uniform batch.
        let n = a.len();
        let uniform = vec![1.0 / n as f64; n];
        let eps = 0.1;
        let sk = sinkhorn_weights(&uniform, &b, &c, SinkhornOptions::new(eps)).unwrap();
        let k = b.len();
        let r = semi_dual_from_cost(&c, &b, &phi[..k], eps).unwrap();
        prop_assert!(r <= sk.entropic_value + 1e-9);
        let at_opt = semi_dual_from_cost(&c, &b, &sk.g, eps).unwrap();
        prop_assert!((at_opt - sk.entropic_value).abs() < 1e-8);
    }

    #[test]
    fn independent_coupling_marginals(
        (a, b1, c1) in instance(),
        c2 in prop::collection::vec(0.0f64..2.0, 36),
    ) {
        let (n, k) = (a.len(), b1.len());
        let b2: Vec<f64> = b1.iter().rev().copied().collect();
        let c2 = Tensor::new(vec![n, k], c2[..n * k].to_vec()).unwrap();
        let p1 = exact_ot_weights(&a, &b1, &c1).unwrap();
        let p2 = exact_ot_weights(&a, &b2, &c2).unwrap();
        let g = independent_coupling(&[p1.clone(), p2.clone()]).unwrap();
        // Summing the joint plan over everything but component m returns plan m.
        for (m, p) in [p1, p2].iter().enumerate() {
            for i in 0..n {
                for k in 0..p.cols() {
                    let s: f64 = (0..g.joint_weights.len())
                        .filter(|&t| g.tuple_component(t, m) == k)
                        .map(|t| g.matrix.at2(i, t))
                        .sum();
                    prop_assert!((s - p.matrix.at2(i, k)).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn proportional_targets_give_assignments(
        z in prop::collection::vec(-1.0f64..1.0, 24),
        atoms in prop::collection::vec(-1.0f64..1.0, 6),
    ) {
        let z = Tensor::new(vec![12, 2], z).unwrap();
        let atoms = Tensor::new(vec![3, 2], atoms).unwrap();
        let c = GroundCost::SquaredEuclidean.matrix(&z, &atoms).unwrap();
        let plan = exact_ot_weights(&[1.0 / 12.0; 12], &[6.0 / 12.0, 4.0 / 12.0, 2.0 / 12.0], &c)
            .unwrap();
        let assign = plan.assignment();
        prop_assert!(assign.is_some(), "{:?}", plan.matrix.data());
        let mut counts = [0; 3];
        for j in assign.unwrap() {
            counts[j] += 1;
        }
        prop_assert_eq!(counts, [6, 4, 2]);
    }
}

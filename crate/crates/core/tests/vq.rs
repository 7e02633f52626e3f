use otvq::diffcore::Tensor;
use otvq::vq::{kl_to_uniform, perplexity, pi_from_beta, quantize, usage_histogram, Codebook};
use proptest::prelude::*;

proptest! {
    #[test]
    fn quantized_codeword_is_nearest(
        atoms in prop::collection::vec(-2.0f64..2.0, 12),
        z in prop::collection::vec(-3.0f64..3.0, 18),
    ) {
        let cb = Codebook::new(
            Tensor::new(vec![4, 3], atoms.clone()).unwrap(),
            Tensor::zeros(&[2, 4]),
        )
        .unwrap();
        let q = quantize(&Tensor::new(vec![3, 2, 3], z.clone()).unwrap(), &cb).unwrap();
        for (p, point) in z.chunks(3).enumerate() {
            let d = |k: usize| -> f64 {
                point.iter().zip(&atoms[k * 3..k * 3 + 3]).map(|(a, b)| (a - b) * (a - b)).sum()
            };
            let chosen = q.indices[p];
            for k in 0..4 {
                prop_assert!(d(chosen) <= d(k) + 1e-12);
            }
            prop_assert_eq!(&q.quantized.data()[p * 3..p * 3 + 3], &atoms[chosen * 3..chosen * 3 + 3]);
        }
        prop_assert_eq!(&q.st_output, &q.quantized);
    }

    #[test]
    fn pi_is_a_distribution(beta in prop::collection::vec(-30.0f64..30.0, 10)) {
        let pi = pi_from_beta(&Tensor::new(vec![2, 5], beta).unwrap());
        for row in pi.data().chunks(5) {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(row.iter().all(|&p| p >= 0.0));
            let kl = kl_to_uniform(row);
            prop_assert!(kl >= -1e-12 && kl <= 5f64.ln() + 1e-12);
        }
    }

    #[test]
    fn histogram_totals(idx in prop::collection::vec(0usize..7, 3..60)) {
        let m = 3;
        let idx = &idx[..idx.len() / m * m];
        prop_assume!(!idx.is_empty());
        let s = usage_histogram(idx, m, 7).unwrap();
        for c in 0..m {
            prop_assert_eq!(s.counts[c].iter().sum::<u64>(), s.total);
            prop_assert!((s.perplexity[c] - perplexity(&s.counts[c]).unwrap()).abs() < 1e-15);
            prop_assert!(s.perplexity[c] >= 1.0 - 1e-12 && s.perplexity[c] <= 7.0 + 1e-9);
        }
    }
}

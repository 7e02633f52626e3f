use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::diffcore::Tensor;
use crate::ot::{
    exact_ot_weights, semi_dual_from_cost, sinkhorn_weights, GroundCost, SinkhornOptions,
};
use crate::{Error, Result};

/// Exact, entropic and semi-dual values on one instance.
///
/// The source side is uniform over `n` points and the target carries random weights over
/// `k` atoms, both in the unit square. `semi_dual` is the semi-dual objective at Sinkhorn's
/// target potential, which should match `sinkhorn_entropic`.
#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub n: usize,
    pub k: usize,
    pub eps: f64,
    /// `"random"` or `"identical"` (target equals source).
    pub kind: &'static str,
    pub exact: f64,
    pub sinkhorn_cost: f64,
    pub sinkhorn_entropic: f64,
    pub semi_dual: f64,
    /// `|sinkhorn_cost − exact| / exact`, or the absolute gap when `exact` is 0.
    pub rel_gap: f64,
    pub duality_gap: f64,
    pub converged: bool,
}

pub const BENCH_HEADER: [&str; 11] = [
    "n",
    "k",
    "eps",
    "kind",
    "exact",
    "sinkhorn_cost",
    "sinkhorn_entropic",
    "semi_dual",
    "rel_gap",
    "duality_gap",
    "converged",
];

fn points(rng: &mut ChaCha8Rng, n: usize) -> Tensor {
    let data = (0..2 * n).map(|_| rng.random_range(0.0..1.0)).collect();
    Tensor::new(vec![n, 2], data).expect("sized")
}

fn bench_instance(
    a: &[f64],
    b: &[f64],
    cost: &Tensor,
    eps: f64,
    kind: &'static str,
) -> Result<BenchRow> {
    let exact = exact_ot_weights(a, b, cost)?.value;
    let sk = sinkhorn_weights(a, b, cost, SinkhornOptions::new(eps))?;
    let semi_dual = semi_dual_from_cost(cost, b, &sk.g, eps)?;
    let gap = (sk.transport_cost - exact).abs();
    Ok(BenchRow {
        n: a.len(),
        k: b.len(),
        eps,
        kind,
        exact,
        sinkhorn_cost: sk.transport_cost,
        sinkhorn_entropic: sk.entropic_value,
        semi_dual,
        rel_gap: if exact > 0.0 { gap / exact } else { gap },
        duality_gap: (semi_dual - sk.entropic_value).abs(),
        converged: sk.converged,
    })
}

/// For every size and ε: one random instance, plus an identical-marginals instance when the
/// size is square.
pub fn ot_bench(sizes: &[(usize, usize)], eps: &[f64], seed: u64) -> Result<Vec<BenchRow>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();
    for &(n, k) in sizes {
        if n == 0 || k == 0 {
            return Err(Error::InvalidArgument(format!("empty size {n}x{k}")));
        }
        let src = points(&mut rng, n);
        let dst = points(&mut rng, k);
        let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.1..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let b: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let a = vec![1.0 / n as f64; n];
        let cost = GroundCost::SquaredEuclidean.matrix(&src, &dst)?;
        let self_cost = GroundCost::SquaredEuclidean.matrix(&src, &src)?;
        for &e in eps {
            rows.push(bench_instance(&a, &b, &cost, e, "random")?);
            if n == k {
                rows.push(bench_instance(&a, &a, &self_cost, e, "identical")?);
            }
        }
    }
    Ok(rows)
}

pub fn bench_table(rows: &[BenchRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:>3} {:>3} {:>8} {:>9} {:>12} {:>12} {:>12} {:>12} {:>10} {:>10} {:>5}",
        "n",
        "k",
        "eps",
        "kind",
        "exact",
        "sinkhorn",
        "entropic",
        "semi-dual",
        "rel_gap",
        "dual_gap",
        "conv"
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{:>3} {:>3} {:>8.1e} {:>9} {:>12.6e} {:>12.6e} {:>12.6e} {:>12.6e} {:>10.2e} {:>10.2e} {:>5}",
            r.n,
            r.k,
            r.eps,
            r.kind,
            r.exact,
            r.sinkhorn_cost,
            r.sinkhorn_entropic,
            r.semi_dual,
            r.rel_gap,
            r.duality_gap,
            r.converged
        );
    }
    out
}

pub fn write_bench_csv(rows: &[BenchRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Io(std::io::Error::other(e)))?;
    let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(BENCH_HEADER).map_err(io)?;
    for r in rows {
        w.write_record([
            r.n.to_string(),
            r.k.to_string(),
            r.eps.to_string(),
            r.kind.to_string(),
            r.exact.to_string(),
            r.sinkhorn_cost.to_string(),
            r.sinkhorn_entropic.to_string(),
            r.semi_dual.to_string(),
            r.rel_gap.to_string(),
            r.duality_gap.to_string(),
            r.converged.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

/// Parses `"6x4,8x8"` into sizes.
pub fn parse_sizes(s: &str) -> Result<Vec<(usize, usize)>> {
    s.split(',')
        .map(|part| {
            let (n, k) = part
                .trim()
                .split_once(['x', 'X'])
                .ok_or_else(|| Error::InvalidArgument(format!("size `{part}` is not NxK")))?;
            let parse = |v: &str| {
                v.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::InvalidArgument(format!("size `{part}` is not NxK")))
            };
            Ok((parse(n)?, parse(k)?))
        })
        .collect()
}

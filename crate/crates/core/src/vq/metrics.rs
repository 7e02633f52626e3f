use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Per-component codeword usage over a pass of the data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UsageStats {
    /// `counts[m][k]`: how often component m was quantized to codeword k.
    pub counts: Vec<Vec<u64>>,
    pub perplexity: Vec<f64>,
    /// Latent vectors counted per component.
    pub total: u64,
}

impl UsageStats {
    pub fn mean_perplexity(&self) -> f64 {
        self.perplexity.iter().sum::<f64>() / self.perplexity.len().max(1) as f64
    }

    /// Codewords used at least once, per component.
    pub fn active_codewords(&self) -> Vec<usize> {
        self.counts
            .iter()
            .map(|c| c.iter().filter(|&&n| n > 0).count())
            .collect()
    }
}

/// Tallies row-major `B×M` indices into per-component histograms over `k` codewords.
pub fn usage_histogram(indices: &[usize], components: usize, k: usize) -> Result<UsageStats> {
    if components == 0 || !indices.len().is_multiple_of(components) {
        return Err(Error::shape(
            "usage_histogram",
            format!("{} indices for {components} components", indices.len()),
        ));
    }
    let mut counts = vec![vec![0u64; k]; components];
    for (p, &i) in indices.iter().enumerate() {
        if i >= k {
            return Err(Error::IndexOutOfRange { index: i, size: k });
        }
        counts[p % components][i] += 1;
    }
    let total = (indices.len() / components) as u64;
    let perplexity = if total > 0 {
        counts
            .iter()
            .map(|c| perplexity(c))
            .collect::<Result<_>>()?
    } else {
        vec![0.0; components]
    };
    Ok(UsageStats {
        counts,
        perplexity,
        total,
    })
}

/// `exp(−Σ p ln p)` of the empirical distribution `p_k = N_k / Σ N`.
pub fn perplexity(counts: &[u64]) -> Result<f64> {
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(Error::ZeroCounts);
    }
    let n = total as f64;
    let entropy: f64 = counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum();
    Ok(entropy.exp())
}

//! Sample statistics for the synchronisation bound.

use serde::{Deserialize, Serialize};

/// `P(X ≤ k)` for `X` the sum of two independent geometric variables on
/// `{1, 2, …}` with success probability `p` (trials until the second success).
pub fn two_geo_cdf(p: f64, k: u64) -> f64 {
    if k < 2 {
        return 0.0;
    }
    let q = 1.0 - p;
    let k = k as f64;
    1.0 - q.powf(k) - k * p * q.powf(k - 1.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyncStats {
    pub samples: usize,
    /// Runs where the correct nodes never settled on a common digest.
    pub unsettled: usize,
    pub mean: f64,
    pub std_dev: f64,
    pub std_err: f64,
    /// `2n`.
    pub bound: f64,
    /// Mean of the two-geometric reference, `2/p`.
    pub reference_mean: f64,
    pub reference_std: f64,
    /// `mean ≤ 2n + 3·std_err`.
    pub mean_within_bound: bool,
    /// `mean ≤ reference_mean + 3·reference_std/√N`.
    pub mean_within_reference: bool,
    /// Largest `F_ref(k) − F_emp(k)` in units of the binomial standard error of `F_emp(k)`.
    pub worst_cdf_gap_sigmas: f64,
    pub cdf_dominated: bool,
    pub pass: bool,
}

/// Summarises `s_same − GST` samples (`None` = never settled) for `n` nodes.
pub fn sync_stats(samples: &[Option<u64>], n: u32) -> SyncStats {
    let vals: Vec<f64> = samples.iter().flatten().map(|&x| x as f64).collect();
    let m = vals.len() as f64;
    let mean = if vals.is_empty() { f64::NAN } else { vals.iter().sum::<f64>() / m };
    let var = if vals.len() > 1 { vals.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0) } else { 0.0 };
    let std_dev = var.sqrt();
    let std_err = if vals.is_empty() { f64::NAN } else { std_dev / m.sqrt() };
    let p = 1.0 / n as f64;
    let reference_mean = 2.0 / p;
    let reference_std = (2.0 * (1.0 - p) / (p * p)).sqrt();
    let bound = 2.0 * n as f64;
    let mean_within_bound = mean <= bound + 3.0 * std_err;
    let mean_within_reference = mean <= reference_mean + 3.0 * reference_std / m.sqrt();
    let max_k = vals.iter().cloned().fold(0.0, f64::max) as u64 + 1;
    let mut worst = f64::NEG_INFINITY;
    for k in 0..=max_k.max(4 * n as u64) {
        let f_ref = two_geo_cdf(p, k);
        let f_emp = vals.iter().filter(|&&x| x <= k as f64).count() as f64 / m;
        let se = (f_ref * (1.0 - f_ref) / m).sqrt();
        let gap = f_ref - f_emp;
        let sig = if se > 0.0 { gap / se } else if gap > 0.0 { f64::INFINITY } else { 0.0 };
        worst = worst.max(sig);
    }
    let unsettled = samples.iter().filter(|x| x.is_none()).count();
    let cdf_dominated = worst <= 3.0;
    SyncStats {
        samples: samples.len(),
        unsettled,
        mean,
        std_dev,
        std_err,
        bound,
        reference_mean,
        reference_std,
        mean_within_bound,
        mean_within_reference,
        worst_cdf_gap_sigmas: worst,
        cdf_dominated,
        pass: unsettled == 0 && !vals.is_empty() && mean_within_bound && mean_within_reference && cdf_dominated,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Brute-force convolution of two geometric pmfs.
    fn convolved_cdf(p: f64, k: u64) -> f64 {
        let geo = |i: u64| if i == 0 { 0.0 } else { (1.0 - p).powi(i as i32 - 1) * p };
        (0..=k).map(|s| (0..=s).map(|i| geo(i) * geo(s - i)).sum::<f64>()).sum()
    }

    #[test]
    fn cdf_matches_convolution() {
        for n in [2u32, 4, 5, 10] {
            let p = 1.0 / n as f64;
            for k in 0..60 {
                assert!((two_geo_cdf(p, k) - convolved_cdf(p, k)).abs() < 1e-12, "n={n} k={k}");
            }
        }
    }

    #[test]
    fn reference_samples_pass_and_slow_samples_fail() {
        use rand::{RngExt, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let n = 4;
        let geo = |rng: &mut rand_chacha::ChaCha8Rng| {
            let mut k = 1;
            while !rng.random_bool(1.0 / n as f64) {
                k += 1;
            }
            k
        };
        let good: Vec<Option<u64>> = (0..400).map(|_| Some(geo(&mut rng) + geo(&mut rng))).collect();
        let s = sync_stats(&good, n);
        assert!(s.pass, "{s:?}");
        assert!((s.mean - 8.0).abs() < 1.0);
        let slow: Vec<Option<u64>> = good.iter().map(|x| x.map(|v| v + 6)).collect();
        assert!(!sync_stats(&slow, n).pass);
        let mut stuck = good.clone();
        stuck[0] = None;
        assert!(!sync_stats(&stuck, n).pass);
        let zeros = vec![Some(0); 200];
        assert!(sync_stats(&zeros, n).pass);
    }
}

use rand::Rng;

/// Effective sample size `1 / Σ wᵢ²` of normalized weights.
pub fn effective_sample_size(weights: &[f64]) -> f64 {
    1.0 / weights.iter().map(|w| w * w).sum::<f64>()
}

/// Turns log-weights into normalized linear weights in place (log-sum-exp).
/// Returns `false` and resets to uniform when no weight is finite.
pub fn normalize_log_weights(log_w: &[f64], out: &mut Vec<f64>) -> bool {
    let n = log_w.len();
    out.clear();
    let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        out.resize(n, 1.0 / n as f64);
        return false;
    }
    out.extend(log_w.iter().map(|&l| (l - max).exp()));
    let sum: f64 = out.iter().sum();
    for w in out.iter_mut() {
        *w /= sum;
    }
    true
}

/// Systematic resampling with a fixed offset `u ∈ [0, 1/n_out)`. Output slot `m`
/// takes the particle whose cumulative-weight interval `[c_{i-1}, c_i)` holds
/// `u + m/n_out`, so zero-weight particles are never chosen.
pub fn resample_low_variance_indices(weights: &[f64], n_out: usize, u: f64) -> Vec<usize> {
    assert!(!weights.is_empty());
    let step = 1.0 / n_out as f64;
    let last = weights.len() - 1;
    let mut out = Vec::with_capacity(n_out);
    let mut i = 0;
    let mut c = weights[0];
    for m in 0..n_out {
        let target = u + m as f64 * step;
        while target >= c && i < last {
            i += 1;
            c += weights[i];
        }
        // Rounding can leave the total a hair under 1; fall back to the last
        // particle that carries weight.
        while weights[i] == 0.0 && i > 0 {
            i -= 1;
        }
        out.push(i);
    }
    out
}

/// Draws the offset and resamples `weights.len()` indices.
pub fn resample_low_variance<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> Vec<usize> {
    let n = weights.len();
    let u = rng.random::<f64>() / n as f64;
    resample_low_variance_indices(weights, n, u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn counts(idx: &[usize], n: usize) -> Vec<usize> {
        let mut c = vec![0; n];
        for &i in idx {
            c[i] += 1;
        }
        c
    }

    #[test]
    fn uniform_weights_keep_everyone_once() {
        let w = vec![0.2; 5];
        for k in 0..100 {
            let u = k as f64 / 100.0 * 0.2;
            assert_eq!(resample_low_variance_indices(&w, 5, u), vec![0, 1, 2, 3, 4]);
        }
        assert!((effective_sample_size(&w) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_weight_takes_all() {
        let w = [0.0, 0.0, 1.0, 0.0];
        assert_eq!(resample_low_variance_indices(&w, 4, 0.13), vec![2; 4]);
        assert_eq!(effective_sample_size(&w), 1.0);
    }

    #[test]
    fn half_quarter_quarter_for_every_offset() {
        // The selection is piecewise constant in u, with breakpoints only where
        // some u + m/4 crosses a cumulative weight; a fine sweep covers every piece.
        let w = [0.5, 0.25, 0.25];
        for k in 0..10_000 {
            let u = k as f64 / 10_000.0 * 0.25;
            assert_eq!(counts(&resample_low_variance_indices(&w, 4, u), 3), vec![2, 1, 1], "u = {u}");
        }
    }

    #[test]
    fn log_weight_normalization() {
        let mut w = Vec::new();
        assert!(normalize_log_weights(&[-1000.0, -1000.0 + 2f64.ln()], &mut w));
        assert!((w[0] - 1.0 / 3.0).abs() < 1e-12 && (w[1] - 2.0 / 3.0).abs() < 1e-12);
        assert!(!normalize_log_weights(&[f64::NEG_INFINITY; 3], &mut w));
        assert_eq!(w, vec![1.0 / 3.0; 3]);
    }

    proptest! {
        #[test]
        fn copy_counts_bracket_expectation(
            raw in prop::collection::vec(0.0..1.0f64, 1..40), u01 in 0.0..1.0f64,
        ) {
            let total: f64 = raw.iter().sum();
            prop_assume!(total > 1e-6);
            let w: Vec<f64> = raw.iter().map(|x| x / total).collect();
            let n = w.len();
            let idx = resample_low_variance_indices(&w, n, u01 / n as f64);
            prop_assert_eq!(idx.len(), n);
            prop_assert!(idx.windows(2).all(|p| p[0] <= p[1]));
            for (i, c) in counts(&idx, n).into_iter().enumerate() {
                let e = n as f64 * w[i];
                prop_assert!(c as f64 >= (e - 1e-9).floor());
                prop_assert!(c as f64 <= (e + 1e-9).ceil());
                if w[i] == 0.0 { prop_assert_eq!(c, 0); }
            }
            let neff = effective_sample_size(&w);
            prop_assert!(neff >= 1.0 - 1e-9 && neff <= n as f64 + 1e-9);
        }

        #[test]
        fn mean_copy_count_is_n_w(raw in prop::collection::vec(0.01..1.0f64, 2..10)) {
            let total: f64 = raw.iter().sum();
            let w: Vec<f64> = raw.iter().map(|x| x / total).collect();
            let n = w.len();
            let k = 2000;
            let mut acc = vec![0.0; n];
            for j in 0..k {
                let u = (j as f64 + 0.5) / k as f64 / n as f64;
                for (i, c) in counts(&resample_low_variance_indices(&w, n, u), n).into_iter().enumerate() {
                    acc[i] += c as f64 / k as f64;
                }
            }
            for i in 0..n {
                prop_assert!((acc[i] - n as f64 * w[i]).abs() < 2e-3, "{} vs {}", acc[i], n as f64 * w[i]);
            }
        }
    }
}

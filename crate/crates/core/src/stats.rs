//! Small descriptive statistics used by the scoring stages.

/// Empirical quantile with linear interpolation between order statistics
/// (position `q·(n−1)`). Returns NaN on empty input.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, q)
}

pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 0 {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + (sorted[hi] - sorted[lo]) * frac
    }
}

/// Median taking the lower of the two middle elements for even counts.
pub fn lower_median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v[(v.len() - 1) / 2]
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Population standard deviation.
pub fn std_dev(values: &[f64]) -> f64 {
    let m = mean(values);
    (values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / values.len() as f64).sqrt()
}

/// Quantile min-max normalization followed by clipping to [0, 1].
///
/// When the quantile range collapses the full range is used instead; a
/// constant input maps to 0.5.
pub fn quantile_minmax(values: &[f64], q_lo: f64, q_hi: f64) -> Vec<f64> {
    if values.is_empty() {
        return Vec::new();
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut lo = quantile_sorted(&sorted, q_lo);
    let mut hi = quantile_sorted(&sorted, q_hi);
    if !(hi > lo) {
        lo = sorted[0];
        hi = sorted[sorted.len() - 1];
    }
    if !(hi > lo) {
        return vec![0.5; values.len()];
    }
    values.iter().map(|v| ((v - lo) / (hi - lo)).clamp(0.0, 1.0)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn quantile_interpolates() {
        let v = [4.0, 1.0, 3.0, 2.0];
        assert_eq!(quantile(&v, 0.0), 1.0);
        assert_eq!(quantile(&v, 1.0), 4.0);
        assert!((quantile(&v, 0.5) - 2.5).abs() < 1e-15);
        assert!((quantile(&v, 0.3) - 1.9).abs() < 1e-12);
    }

    #[test]
    fn lower_median_even_and_odd() {
        assert_eq!(lower_median(&[0.9, 0.1, 0.4]), 0.4);
        assert_eq!(lower_median(&[4.0, 1.0, 3.0, 2.0]), 2.0);
    }

    #[test]
    fn constant_input_maps_to_half() {
        assert_eq!(quantile_minmax(&[3.0; 5], 0.02, 0.98), vec![0.5; 5]);
    }

    proptest! {
        #[test]
        fn minmax_is_affine_invariant(v in prop::collection::vec(-10.0f64..10.0, 3..60), a in 0.1f64..20.0, b in -5.0f64..5.0) {
            let x = quantile_minmax(&v, 0.02, 0.98);
            let w: Vec<f64> = v.iter().map(|t| a * t + b).collect();
            let y = quantile_minmax(&w, 0.02, 0.98);
            for (p, q) in x.iter().zip(&y) {
                prop_assert!((p - q).abs() < 1e-9);
            }
        }

        #[test]
        fn minmax_preserves_order(v in prop::collection::vec(-10.0f64..10.0, 2..60)) {
            let x = quantile_minmax(&v, 0.02, 0.98);
            for i in 0..v.len() {
                prop_assert!((0.0..=1.0).contains(&x[i]));
                for j in 0..v.len() {
                    if v[i] < v[j] {
                        prop_assert!(x[i] <= x[j]);
                    }
                }
            }
        }
    }
}

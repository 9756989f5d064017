//! Distribution summaries used by the resampling modules.

use serde::{Deserialize, Serialize};

/// Mean over standard deviation of a resampled distribution.
///
/// `z` is `None` when the distribution has no spread (all draws equal).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZSummary {
    pub mean: f64,
    pub sd: f64,
    pub z: Option<f64>,
}

impl ZSummary {
    pub fn from_draws(draws: impl IntoIterator<Item = f64>) -> ZSummary {
        let values: Vec<f64> = draws.into_iter().collect();
        let (mean, sd) = mean_sd(&values);
        let degenerate = !(sd > 0.0) || sd <= 1e-13 * mean.abs();
        ZSummary {
            mean,
            sd,
            z: if degenerate { None } else { Some(mean / sd) },
        }
    }

    pub fn is_degenerate(&self) -> bool {
        self.z.is_none()
    }
}

/// Mean and sample (n − 1) standard deviation; sd is 0 for fewer than two values.
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, (ss / (n - 1.0)).sqrt())
}

/// Linear-interpolation percentile (`q` in `[0, 1]`) of unsorted data.
pub fn percentile(values: &mut [f64], q: f64) -> f64 {
    assert!(!values.is_empty(), "percentile of empty data");
    values.sort_by(|a, b| a.total_cmp(b));
    let pos = q.clamp(0.0, 1.0) * (values.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    values[lo] + (values[hi] - values[lo]) * frac
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn z_is_scale_free() {
        let draws = [0.2, 0.5, 0.1, 0.4, 0.33];
        let a = ZSummary::from_draws(draws);
        let b = ZSummary::from_draws(draws.iter().map(|d| d * 7.5));
        assert!((a.z.unwrap() - b.z.unwrap()).abs() < 1e-12);
    }

    #[test]
    fn constant_draws_are_degenerate() {
        let s = ZSummary::from_draws([1.0; 10]);
        assert!(s.is_degenerate());
        assert_eq!(s.mean, 1.0);
        assert_eq!(s.sd, 0.0);
    }

    #[test]
    fn percentile_interpolates() {
        let mut v = vec![4.0, 1.0, 3.0, 2.0, 5.0];
        assert_eq!(percentile(&mut v, 0.5), 3.0);
        assert_eq!(percentile(&mut v, 0.0), 1.0);
        assert_eq!(percentile(&mut v, 1.0), 5.0);
        assert!((percentile(&mut v, 0.1) - 1.4).abs() < 1e-12);
    }
}

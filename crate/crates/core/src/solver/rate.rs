use crate::error::{Error, Result};

use super::MetricRecord;

/// Fewest usable records a rate fit accepts.
pub const MIN_FIT_RECORDS: usize = 10;

/// Least-squares fit of `ln(residual_max)` against `k`.
#[derive(Clone, Debug, PartialEq)]
pub struct RateEstimate {
    /// Per-round change of the log residual.
    pub slope: f64,
    pub r_squared: f64,
    /// First and last round of the records used.
    pub window: (usize, usize),
    pub samples: usize,
}

impl RateEstimate {
    /// Geometric decay verdict: negative slope with `r^2 >= 0.95`.
    pub fn is_linear(&self) -> bool {
        self.slope < 0.0 && self.r_squared >= 0.95
    }

    /// Per-round contraction factor `exp(slope)`.
    pub fn factor(&self) -> f64 {
        self.slope.exp()
    }
}

/// Fits records whose `residual_max` exceeds ten times `floor`.
///
/// With `window = Some((k0, k1))` only records with `k0 <= k <= k1` are
/// used. Without a window the first quarter of the usable records is
/// dropped as transient.
pub fn estimate_linear_rate(
    records: &[MetricRecord],
    floor: f64,
    window: Option<(usize, usize)>,
) -> Result<RateEstimate> {
    let usable: Vec<&MetricRecord> = records
        .iter()
        .filter(|r| r.residual_max > 10.0 * floor)
        .filter(|r| window.is_none_or(|(lo, hi)| r.k >= lo && r.k <= hi))
        .collect();
    let points: &[&MetricRecord] = match window {
        Some(_) => &usable,
        None => &usable[usable.len() / 4..],
    };
    if points.len() < MIN_FIT_RECORDS {
        return Err(Error::Estimation(format!(
            "{} usable records above the numerical floor, need {MIN_FIT_RECORDS}",
            points.len()
        )));
    }
    let count = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|r| r.k as f64).collect();
    let ys: Vec<f64> = points.iter().map(|r| r.residual_max.ln()).collect();
    let x_mean = xs.iter().sum::<f64>() / count;
    let y_mean = ys.iter().sum::<f64>() / count;
    let sxx: f64 = xs.iter().map(|x| (x - x_mean).powi(2)).sum();
    let sxy: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (x - x_mean) * (y - y_mean))
        .sum();
    if sxx == 0.0 {
        return Err(Error::Estimation("all records share one round".into()));
    }
    let slope = sxy / sxx;
    let intercept = y_mean - slope * x_mean;
    let ss_tot: f64 = ys.iter().map(|y| (y - y_mean).powi(2)).sum();
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let r_squared = if ss_tot > 0.0 {
        (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
    } else {
        0.0
    };
    Ok(RateEstimate {
        slope,
        r_squared,
        window: (points[0].k, points[points.len() - 1].k),
        samples: points.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn records(values: impl IntoIterator<Item = (usize, f64)>) -> Vec<MetricRecord> {
        values
            .into_iter()
            .map(|(k, r)| MetricRecord {
                k,
                residual_mean: r,
                residual_max: r,
                disagreement: 0.0,
                consensus_error: 0.0,
                objective: 0.0,
                lyapunov_distance: None,
                ergodic_bound_lhs: 0.0,
                trace: None,
            })
            .collect()
    }

    #[test]
    fn geometric_input_recovers_log_ratio() {
        let recs = records((0..60).map(|k| (k, 3.0 * 0.9f64.powi(k as i32))));
        let est = estimate_linear_rate(&recs, 1e-12, None).unwrap();
        assert!((est.slope - 0.9f64.ln()).abs() < 1e-8);
        assert!((est.r_squared - 1.0).abs() < 1e-12);
        assert!(est.is_linear());
        assert_eq!(est.window, (15, 59));
    }

    #[test]
    fn constant_input_is_not_linear() {
        let recs = records((0..40).map(|k| (k * 10, 0.5)));
        let est = estimate_linear_rate(&recs, 1e-12, None).unwrap();
        assert_eq!(est.slope, 0.0);
        assert!(!est.is_linear());
    }

    #[test]
    fn explicit_window_and_floor() {
        let recs = records((0..100).map(|k| (k, 0.8f64.powi(k as i32))));
        let est = estimate_linear_rate(&recs, 1e-12, Some((20, 40))).unwrap();
        assert_eq!(est.window, (20, 40));
        assert_eq!(est.samples, 21);
        // only k <= 10 clears ten times a 1e-2 floor
        assert!(matches!(
            estimate_linear_rate(&recs, 1e-2, None),
            Err(Error::Estimation(_))
        ));
    }
}

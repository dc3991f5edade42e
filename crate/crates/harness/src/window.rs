use serde::Serialize;

use crate::error::{HarnessError, Result};

/// Decay window of a correlation series after a reference time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Window {
    /// Time after `t_ref` until the series first falls to a third of its
    /// value at `t_ref`; a lower bound when `censored`.
    pub delta_t: f64,
    /// The threshold was never crossed before the end of the series.
    pub censored: bool,
    pub t_ref: f64,
    pub reference_value: f64,
}

fn interpolate(t: &[f64], y: &[f64], at: f64) -> f64 {
    let k = t.partition_point(|&x| x < at);
    if k == 0 {
        return y[0];
    }
    if k == t.len() {
        return y[t.len() - 1];
    }
    let (t0, t1) = (t[k - 1], t[k]);
    let w = if t1 > t0 { (at - t0) / (t1 - t0) } else { 0.0 };
    y[k - 1] + w * (y[k] - y[k - 1])
}

/// `Δt = t* - t_ref`, where `t*` is the first time with
/// `y(t*) ≤ y(t_ref)/3`, linearly interpolated between samples.
pub fn measure_window(t: &[f64], y: &[f64], t_ref: f64) -> Result<Window> {
    if t.len() != y.len() || t.len() < 2 {
        return Err(HarnessError::validation("series", "need at least two (t, value) samples of equal length"));
    }
    if t.windows(2).any(|w| w[1] <= w[0]) {
        return Err(HarnessError::validation("series", "times must be strictly increasing"));
    }
    if t_ref < t[0] || t_ref > t[t.len() - 1] {
        return Err(HarnessError::validation(
            "t_ref",
            format!("{t_ref} outside the series range [{}, {}]", t[0], t[t.len() - 1]),
        ));
    }
    let y_ref = interpolate(t, y, t_ref);
    let threshold = y_ref / 3.0;
    let start = t.partition_point(|&x| x <= t_ref);
    let mut prev = (t_ref, y_ref);
    for k in start..t.len() {
        if y[k] <= threshold {
            let (t0, y0) = prev;
            let cross = if y0 > y[k] {
                t0 + (y0 - threshold) / (y0 - y[k]) * (t[k] - t0)
            } else {
                t[k]
            };
            return Ok(Window {
                delta_t: cross - t_ref,
                censored: false,
                t_ref,
                reference_value: y_ref,
            });
        }
        prev = (t[k], y[k]);
    }
    Ok(Window {
        delta_t: t[t.len() - 1] - t_ref,
        censored: true,
        t_ref,
        reference_value: y_ref,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay() {
        let tau0 = 3.7;
        let t: Vec<f64> = (0..=4000).map(|k| k as f64 * 0.01).collect();
        let y: Vec<f64> = t.iter().map(|&x| (-(x - 8.0) / tau0).exp()).collect();
        let w = measure_window(&t, &y, 8.0).unwrap();
        assert!(!w.censored);
        assert!((w.delta_t - tau0 * 3f64.ln()).abs() < 1e-4);
    }

    #[test]
    fn constant_series_is_censored() {
        let t: Vec<f64> = (0..=20).map(f64::from).collect();
        let y = vec![0.4; t.len()];
        let w = measure_window(&t, &y, 8.0).unwrap();
        assert!(w.censored);
        assert_eq!(w.delta_t, 12.0);
    }

    #[test]
    fn reference_must_be_covered() {
        let t = [0.0, 1.0, 2.0];
        assert!(measure_window(&t, &[1.0, 0.5, 0.2], 8.0).is_err());
        assert!(measure_window(&t, &[1.0, 0.5], 1.0).is_err());
    }
}

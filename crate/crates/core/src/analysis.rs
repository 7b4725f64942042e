//! Post-processing of observable time series: decay probabilities and rates,
//! late-time slopes, spectral widths and the rate-versus-width law.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Samples on strictly increasing times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    times: Vec<f64>,
    values: Vec<f64>,
}

impl TimeSeries {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.len() != values.len() {
            return Err(Error::BadSeries(format!("{} times, {} values", times.len(), values.len())));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::BadSeries("times must be strictly increasing".into()));
        }
        if times.iter().chain(&values).any(|v| !v.is_finite()) {
            return Err(Error::BadSeries("non-finite sample".into()));
        }
        Ok(TimeSeries { times, values })
    }

    pub fn empty() -> Self {
        TimeSeries { times: vec![], values: vec![] }
    }

    pub fn push(&mut self, t: f64, v: f64) -> Result<()> {
        if self.times.last().is_some_and(|&last| !(t > last)) || !t.is_finite() || !v.is_finite() {
            return Err(Error::BadSeries(format!("sample ({t}, {v}) out of order or non-finite")));
        }
        self.times.push(t);
        self.values.push(v);
        Ok(())
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last(&self) -> Option<(f64, f64)> {
        self.times.last().map(|&t| (t, *self.values.last().unwrap()))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> TimeSeries {
        TimeSeries { times: self.times.clone(), values: self.values.iter().map(|&v| f(v)).collect() }
    }
}

/// `d(T) = |saturation - N(T)|`.
pub fn decay_probability(n: &TimeSeries, saturation: f64) -> TimeSeries {
    n.map(|v| (saturation - v).abs())
}

/// Ordinary least-squares line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root mean square of the residuals.
    pub rms: f64,
    pub r_squared: f64,
    pub samples: usize,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return Err(Error::WindowTooShort { found: n, needed: 2 });
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::BadSeries("degenerate abscissa".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let r_squared = if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 };
    Ok(LinearFit { slope, intercept, rms: (ss_res / nf).sqrt(), r_squared, samples: n })
}

/// Sample selection for decay-rate fits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitWindow {
    pub d_min: f64,
    pub d_max: f64,
    /// Samples before this time are ignored.
    pub t_min: f64,
    pub min_samples: usize,
}

impl Default for FitWindow {
    fn default() -> Self {
        FitWindow { d_min: 0.05, d_max: 0.8, t_min: 0.0, min_samples: 10 }
    }
}

/// Exponential decay `d ∝ e^{-Γt}` fitted on `ln d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub gamma: f64,
    /// RMS residual of the fit to `ln d`.
    pub residual: f64,
    pub r_squared: f64,
    pub t_first: f64,
    pub t_last: f64,
    pub samples: usize,
    pub window: FitWindow,
}

pub fn fit_decay_rate(d: &TimeSeries, window: FitWindow) -> Result<DecayFit> {
    let (t, y): (Vec<f64>, Vec<f64>) = d
        .times()
        .iter()
        .zip(d.values())
        .filter(|(t, v)| **t >= window.t_min && **v >= window.d_min && **v <= window.d_max && **v > 0.0)
        .map(|(t, v)| (*t, v.ln()))
        .unzip();
    let needed = window.min_samples.max(2);
    if t.len() < needed {
        return Err(Error::WindowTooShort { found: t.len(), needed });
    }
    let fit = linear_fit(&t, &y)?;
    Ok(DecayFit {
        gamma: -fit.slope,
        residual: fit.rms,
        r_squared: fit.r_squared,
        t_first: t[0],
        t_last: *t.last().unwrap(),
        samples: t.len(),
        window,
    })
}

/// Least-squares slope over the final third of the series.
pub fn late_slope(n: &TimeSeries) -> Result<LinearFit> {
    let len = n.len();
    let start = len - len / 3;
    let found = len - start;
    if found < 3 {
        return Err(Error::WindowTooShort { found, needed: 3 });
    }
    linear_fit(&n.times()[start..], &n.values()[start..])
}

/// Full width at half maximum of the dominant peak, with linear interpolation
/// between samples at the half-height crossings.
pub fn fwhm(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 3 {
        return Err(Error::BadSeries("spectrum needs at least three samples".into()));
    }
    let (ipk, &ymax) = y
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .ok_or(Error::EmptySpectrum)?;
    if !(ymax > 0.0) {
        return Err(Error::EmptySpectrum);
    }
    let half = 0.5 * ymax;
    let cross = |i: usize, j: usize| x[i] + (half - y[i]) * (x[j] - x[i]) / (y[j] - y[i]);
    let left = (1..=ipk).rev().find(|&i| y[i - 1] < half).map(|i| cross(i - 1, i)).ok_or(Error::NoCrossing("left"))?;
    let right = (ipk..y.len() - 1).find(|&i| y[i + 1] < half).map(|i| cross(i, i + 1)).ok_or(Error::NoCrossing("right"))?;
    Ok(right - left)
}

/// One tuned well of a rate-versus-width sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub d: f64,
    pub v0: f64,
    pub w: f64,
    pub e_g: f64,
    pub w_b: f64,
    pub gamma: Option<f64>,
    pub fit: Option<DecayFit>,
    /// Why the row has no rate, if it has none.
    pub flag: Option<String>,
}

/// `Γ ∝ exp(-C W_b)` fitted on rows outside an excluded width window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WidthLaw {
    pub c: f64,
    pub prefactor: f64,
    pub r_squared: f64,
    pub used: usize,
    /// Widths of rows left out because they fall in the window or lack a rate.
    pub excluded: Vec<f64>,
    pub strictly_decreasing: bool,
    /// Largest `|ln Γ - fit|` among excluded rows that do have a rate.
    pub excluded_max_deviation: Option<f64>,
}

pub fn fit_width_law(rows: &[SweepRow], exclude: (f64, f64)) -> Result<WidthLaw> {
    let mut used: Vec<(f64, f64)> = Vec::new();
    let mut excluded = Vec::new();
    let mut outside_rows = Vec::new();
    for r in rows {
        let inside = r.w_b > exclude.0 && r.w_b < exclude.1;
        match r.gamma {
            Some(g) if !inside && g > 0.0 => used.push((r.w_b, g)),
            Some(g) if g > 0.0 => {
                excluded.push(r.w_b);
                outside_rows.push((r.w_b, g));
            }
            _ => excluded.push(r.w_b),
        }
    }
    used.sort_by(|a, b| a.0.total_cmp(&b.0));
    let x: Vec<f64> = used.iter().map(|u| u.0).collect();
    let y: Vec<f64> = used.iter().map(|u| u.1.ln()).collect();
    let fit = linear_fit(&x, &y)?;
    let strictly_decreasing = used.windows(2).all(|w| w[1].1 < w[0].1);
    let excluded_max_deviation = outside_rows
        .iter()
        .map(|(w, g)| (g.ln() - fit.intercept - fit.slope * w).abs())
        .reduce(f64::max);
    Ok(WidthLaw {
        c: -fit.slope,
        prefactor: fit.intercept.exp(),
        r_squared: fit.r_squared,
        used: used.len(),
        excluded,
        strictly_decreasing,
        excluded_max_deviation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn series(f: impl Fn(f64) -> f64, t0: f64, t1: f64, n: usize) -> TimeSeries {
        let t: Vec<f64> = (0..n).map(|i| t0 + (t1 - t0) * i as f64 / (n - 1) as f64).collect();
        let v = t.iter().map(|&x| f(x)).collect();
        TimeSeries::new(t, v).unwrap()
    }

    #[test]
    fn series_rejects_unordered_times() {
        assert!(TimeSeries::new(vec![0.0, 0.0], vec![1.0, 2.0]).is_err());
        assert!(TimeSeries::new(vec![0.0], vec![1.0, 2.0]).is_err());
        let mut s = TimeSeries::empty();
        s.push(1.0, 0.0).unwrap();
        assert!(s.push(0.5, 0.0).is_err());
    }

    #[test]
    fn decay_probability_limits() {
        let zero = series(|_| 0.0, 0.0, 1.0, 5);
        assert!(decay_probability(&zero, 1.0).values().iter().all(|&v| v == 1.0));
        let one = series(|_| 1.0, 0.0, 1.0, 5);
        assert!(decay_probability(&one, 1.0).values().iter().all(|&v| v == 0.0));
        assert!(decay_probability(&series(|t| 2.5 * t, 0.0, 1.0, 5), 2.0).values().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn exact_exponential_rate() {
        let d = series(|t| (-2.0 * t).exp(), 0.0, 2.0, 200);
        let fit = fit_decay_rate(&d, FitWindow::default()).unwrap();
        assert_relative_eq!(fit.gamma, 2.0, max_relative = 1e-6);
        assert!(fit.residual < 1e-10);
        assert!(fit.t_first > 0.1 && fit.t_last < 1.5);
    }

    #[test]
    fn short_window_is_an_error() {
        let d = series(|t| (-2.0 * t).exp(), 0.0, 2.0, 12);
        assert!(matches!(fit_decay_rate(&d, FitWindow::default()), Err(Error::WindowTooShort { .. })));
    }

    #[test]
    fn ramp_samples_are_skipped() {
        let d = series(|t| if t < 1.0 { 0.3 } else { (-0.5 * t).exp() }, 0.0, 6.0, 300);
        let w = FitWindow { t_min: 1.0, ..FitWindow::default() };
        assert_relative_eq!(fit_decay_rate(&d, w).unwrap().gamma, 0.5, max_relative = 1e-9);
    }

    #[test]
    fn slope_of_line() {
        let n = series(|t| 1.0 + 0.5 * t, 0.0, 10.0, 30);
        assert_relative_eq!(late_slope(&n).unwrap().slope, 0.5, epsilon = 1e-12);
        assert!(late_slope(&series(|t| t, 0.0, 1.0, 5)).is_err());
    }

    #[test]
    fn lorentzian_width() {
        let gamma = 0.05;
        let x: Vec<f64> = (0..2001).map(|i| 1.0 + i as f64 * 0.001).collect();
        let y: Vec<f64> = x.iter().map(|e| 1.0 / ((e - 1.5f64).powi(2) + gamma * gamma)).collect();
        assert!((fwhm(&x, &y).unwrap() - 2.0 * gamma).abs() < 0.001);
    }

    #[test]
    fn missing_crossing() {
        let x: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| 10.0 - v).collect();
        assert!(matches!(fwhm(&x, &y), Err(Error::NoCrossing("left"))));
    }

    fn row(w_b: f64, gamma: f64) -> SweepRow {
        SweepRow { d: 0.0, v0: 0.0, w: 0.3, e_g: -0.4, w_b, gamma: Some(gamma), fit: None, flag: None }
    }

    #[test]
    fn two_row_law() {
        let rows = [row(1.5, 3.0), row(2.5, 1.0)];
        let law = fit_width_law(&rows, (2.062, 2.197)).unwrap();
        assert_relative_eq!(law.c, 3.0f64.ln() / 1.0, epsilon = 1e-12);
        assert!(law.strictly_decreasing);
    }

    #[test]
    fn window_rows_are_excluded() {
        let mut rows: Vec<SweepRow> = [1.6, 1.8, 2.0, 2.3, 2.5].iter().map(|&w| row(w, (-2.0 * w).exp())).collect();
        rows.push(row(2.1, 5.0));
        let law = fit_width_law(&rows, (2.062, 2.197)).unwrap();
        assert_relative_eq!(law.c, 2.0, epsilon = 1e-12);
        assert_eq!(law.used, 5);
        assert_eq!(law.excluded, vec![2.1]);
        assert!(law.excluded_max_deviation.unwrap() > 1.0);
    }

    proptest! {
        #[test]
        fn recovers_any_rate(gamma in 0.01f64..5.0) {
            let d = series(|t| 0.9 * (-gamma * t).exp(), 0.0, 4.0 / gamma, 400);
            let fit = fit_decay_rate(&d, FitWindow::default()).unwrap();
            prop_assert!(((fit.gamma - gamma) / gamma).abs() < 1e-6);
        }

        #[test]
        fn gaussian_width_within_a_bin(sigma in 0.02f64..0.3, bins in 100usize..400) {
            let h = 2.0 / bins as f64;
            let x: Vec<f64> = (0..=bins).map(|i| i as f64 * h).collect();
            let y: Vec<f64> = x.iter().map(|v| (-(v - 1.0f64).powi(2) / (2.0 * sigma * sigma)).exp()).collect();
            let want = 2.0 * (2.0 * 2f64.ln()).sqrt() * sigma;
            prop_assert!((fwhm(&x, &y).unwrap() - want).abs() < h);
        }
    }
}

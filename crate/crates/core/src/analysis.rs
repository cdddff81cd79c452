//! Scaling-law fits, the F-test between extensive and area laws, critical
//! rates, and the separable single-site magic model.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::ensemble::{AggregateRow, Quantity};
use crate::error::{Error, Result};
use crate::exact::{RenyiIndex, StateVector};
use crate::clifford::gates;
use crate::pauli::C64;

/// Fits use at most this many of the largest system sizes.
pub const MAX_FIT_POINTS: usize = 7;
pub const MIN_FIT_POINTS: usize = 4;
pub const EXTENSIVE_GAMMA_MIN: f64 = 1e-4;
pub const GAMMA_MAX: f64 = 3.0;
const GAMMA_GRID: usize = 600;
const GAMMA_TOL: f64 = 1e-9;
const COLLINEAR_TOL: f64 = 1e-13;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Law {
    /// `a + b N^γ` with `γ > 0`.
    Extensive,
    /// `a + b N^γ` with `γ ≤ 0`.
    Area,
    /// `a + b ln N`.
    Log,
}

impl Law {
    pub const ALL: [Law; 3] = [Law::Extensive, Law::Area, Law::Log];

    fn gamma_range(self) -> Option<(f64, f64)> {
        match self {
            Law::Extensive => Some((EXTENSIVE_GAMMA_MIN, GAMMA_MAX)),
            Law::Area => Some((-GAMMA_MAX, 0.0)),
            Law::Log => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub law: Law,
    pub a: f64,
    pub b: f64,
    pub gamma: Option<f64>,
    pub chi2: f64,
    pub chi2_per_dof: f64,
    pub n_points: usize,
    pub dof: usize,
    /// System sizes actually used, ascending.
    pub n_values: Vec<f64>,
}

impl FitResult {
    pub fn predict(&self, n: f64) -> f64 {
        match (self.law, self.gamma) {
            (Law::Log, _) => self.a + self.b * n.ln(),
            (_, Some(g)) => self.a + self.b * n.powf(g),
            (_, None) => self.a,
        }
    }
}

/// Weighted straight-line fit `y ≈ a + b x`. Returns `(a, b, χ²)`; when the
/// `x` values are numerically constant only `a` is fitted.
fn weighted_line(x: &[f64], y: &[f64], w: &[f64]) -> (f64, f64, f64) {
    let sw: f64 = w.iter().sum();
    let xm = x.iter().zip(w).map(|(x, w)| x * w).sum::<f64>() / sw;
    let ym = y.iter().zip(w).map(|(y, w)| y * w).sum::<f64>() / sw;
    let sxx: f64 = x.iter().zip(w).map(|(x, w)| w * (x - xm).powi(2)).sum();
    let sxy: f64 = x
        .iter()
        .zip(y)
        .zip(w)
        .map(|((x, y), w)| w * (x - xm) * (y - ym))
        .sum();
    let scale: f64 = x.iter().zip(w).map(|(x, w)| w * x * x).sum::<f64>().max(f64::MIN_POSITIVE);
    let (a, b) = if sxx <= COLLINEAR_TOL * scale {
        (ym, 0.0)
    } else {
        let b = sxy / sxx;
        (ym - b * xm, b)
    };
    let chi2 = x
        .iter()
        .zip(y)
        .zip(w)
        .map(|((x, y), w)| w * (y - a - b * x).powi(2))
        .sum();
    (a, b, chi2)
}

fn profile(n: &[f64], y: &[f64], w: &[f64], gamma: f64) -> (f64, f64, f64) {
    let x: Vec<f64> = n.iter().map(|n| n.powf(gamma)).collect();
    weighted_line(&x, y, w)
}

fn golden_section(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - r * (hi - lo);
    let mut d = lo + r * (hi - lo);
    let (mut fc, mut fd) = (f(c), f(d));
    while hi - lo > tol {
        if fc <= fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - r * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + r * (hi - lo);
            fd = f(d);
        }
    }
    if fc <= fd {
        c
    } else {
        d
    }
}

/// Weighted least-squares fit of `(N, mean, σ)` points to one law, using the
/// largest [`MAX_FIT_POINTS`] sizes.
pub fn fit_scaling(points: &[(f64, f64, f64)], law: Law) -> Result<FitResult> {
    if points.len() < MIN_FIT_POINTS {
        return Err(Error::Fit(format!(
            "need at least {MIN_FIT_POINTS} points, got {}",
            points.len()
        )));
    }
    let bad: Vec<String> = points
        .iter()
        .filter(|(n, y, s)| !(*s > 0.0 && s.is_finite() && y.is_finite() && *n > 0.0))
        .map(|(n, y, s)| format!("(N = {n}, mean = {y}, sigma = {s})"))
        .collect();
    if !bad.is_empty() {
        return Err(Error::Fit(format!("degenerate points: {}", bad.join(", "))));
    }
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let pts = &pts[pts.len().saturating_sub(MAX_FIT_POINTS)..];
    let n: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let y: Vec<f64> = pts.iter().map(|p| p.1).collect();
    let w: Vec<f64> = pts.iter().map(|p| 1.0 / (p.2 * p.2)).collect();
    let n_points = pts.len();

    let (a, b, gamma, chi2, dof) = match law.gamma_range() {
        None => {
            let x: Vec<f64> = n.iter().map(|n| n.ln()).collect();
            let (a, b, chi2) = weighted_line(&x, &y, &w);
            (a, b, None, chi2, n_points - 2)
        }
        Some((lo, hi)) => {
            let chi = |g: f64| profile(&n, &y, &w, g).2;
            let step = (hi - lo) / GAMMA_GRID as f64;
            let grid: Vec<f64> = (0..=GAMMA_GRID).map(|i| lo + step * i as f64).collect();
            let (best_i, _) = grid
                .iter()
                .map(|&g| chi(g))
                .enumerate()
                .fold((0, f64::INFINITY), |acc, (i, c)| if c < acc.1 { (i, c) } else { acc });
            let blo = grid[best_i.saturating_sub(1)];
            let bhi = grid[(best_i + 1).min(GAMMA_GRID)];
            let refined = golden_section(chi, blo, bhi, GAMMA_TOL).clamp(lo, hi);
            let g = if chi(refined) <= chi(grid[best_i]) {
                refined
            } else {
                grid[best_i]
            };
            let (a, b, chi2) = profile(&n, &y, &w, g);
            (a, b, Some(g), chi2, n_points - 3)
        }
    };
    Ok(FitResult {
        law,
        a,
        b,
        gamma,
        chi2,
        chi2_per_dof: chi2 / dof as f64,
        n_points,
        dof,
        n_values: n,
    })
}

/// `ln F = ln(E_ext / E_area)` with `E = χ²/dof`. Negative favors the
/// extensive law.
pub fn f_ratio(extensive: &FitResult, area: &FitResult) -> Result<f64> {
    if extensive.law != Law::Extensive || area.law != Law::Area {
        return Err(Error::DegenerateRatio("expected an extensive and an area fit".into()));
    }
    if extensive.n_values != area.n_values {
        return Err(Error::DegenerateRatio("fits use different points".into()));
    }
    if area.chi2_per_dof == 0.0 {
        return Err(Error::DegenerateRatio("area-law chi2/dof is exactly zero".into()));
    }
    if extensive.chi2_per_dof == 0.0 {
        return Err(Error::DegenerateRatio("extensive-law chi2/dof is exactly zero".into()));
    }
    Ok((extensive.chi2_per_dof / area.chi2_per_dof).ln())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticalPoint {
    pub quantity: Quantity,
    pub eta: f64,
    pub p_c: f64,
    pub sigma_a: f64,
    pub sigma_b: f64,
    pub sigma: f64,
    /// `ln F = ±1` was not reached on at least one side and `σ_A` was capped
    /// at the scan boundary.
    pub boundary_capped: bool,
    pub multiple_crossings: bool,
}

/// Points where the piecewise-linear series crosses `level`.
fn crossings(series: &[(f64, f64)], level: f64) -> Vec<f64> {
    let mut out = Vec::new();
    for (i, w) in series.windows(2).enumerate() {
        let (p0, f0) = (w[0].0, w[0].1 - level);
        let (p1, f1) = (w[1].0, w[1].1 - level);
        if f0 == 0.0 {
            if out.last() != Some(&p0) {
                out.push(p0);
            }
        } else if f0 * f1 < 0.0 {
            out.push(p0 + (p1 - p0) * f0 / (f0 - f1));
        }
        if i + 2 == series.len() && f1 == 0.0 {
            out.push(p1);
        }
    }
    out
}

fn check_series(series: &[(f64, f64)]) -> Result<()> {
    if series.len() < 2 {
        return Err(Error::NoTransition);
    }
    if series.windows(2).any(|w| !(w[0].0 < w[1].0)) {
        return Err(Error::param("series", "p values must be strictly increasing"));
    }
    if series.iter().any(|s| !s.1.is_finite()) {
        return Err(Error::param("series", "ln F values must be finite"));
    }
    Ok(())
}

/// Zero crossing closest to the middle of the scanned range, and whether
/// there was more than one.
fn zero_crossing(series: &[(f64, f64)]) -> Result<(f64, bool)> {
    check_series(series)?;
    let xs = crossings(series, 0.0);
    let mid = 0.5 * (series[0].0 + series[series.len() - 1].0);
    let best = xs
        .iter()
        .copied()
        .min_by(|a, b| (a - mid).abs().total_cmp(&(b - mid).abs()))
        .ok_or(Error::NoTransition)?;
    Ok((best, xs.len() > 1))
}

/// Critical rate from an `(p, ln F)` series, with `σ_A` from the `ln F = ±1`
/// points and `σ_B` from the series with the largest system size dropped.
pub fn critical_rate(
    series: &[(f64, f64)],
    restricted: &[(f64, f64)],
    quantity: Quantity,
    eta: f64,
) -> Result<CriticalPoint> {
    let (p_c, multiple) = zero_crossing(series)?;
    if multiple {
        log::warn!("{quantity} at eta = {eta}: ln F crosses zero more than once; using the crossing nearest the scan midpoint");
    }
    let (p_lo, p_hi) = (series[0].0, series[series.len() - 1].0);
    let mut capped = false;
    let mut sigma_a: f64 = 0.0;
    for level in [1.0, -1.0] {
        let nearest = crossings(series, level)
            .into_iter()
            .min_by(|a, b| (a - p_c).abs().total_cmp(&(b - p_c).abs()));
        let reach = match nearest {
            Some(p) => p,
            None => {
                capped = true;
                // the side of p_c on which ln F has the sign of `level`
                let right_sign = series[series.len() - 1].1;
                if right_sign * level > 0.0 {
                    p_hi
                } else {
                    p_lo
                }
            }
        };
        sigma_a = sigma_a.max((reach - p_c).abs());
    }
    let (p_c_restricted, _) = zero_crossing(restricted)?;
    let sigma_b = (p_c - p_c_restricted).abs();
    Ok(CriticalPoint {
        quantity,
        eta,
        p_c,
        sigma_a,
        sigma_b,
        sigma: sigma_a.hypot(sigma_b),
        boundary_capped: capped,
        multiple_crossings: multiple,
    })
}

/// Average stabilizer 2-Rényi entropy gained by applying T to each of the six
/// single-qubit stabilizer states.
pub fn mean_single_site_magic() -> f64 {
    static VALUE: OnceLock<f64> = OnceLock::new();
    *VALUE.get_or_init(|| {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let c = |re: f64, im: f64| C64::new(re, im);
        let states = [
            [c(1.0, 0.0), c(0.0, 0.0)],
            [c(0.0, 0.0), c(1.0, 0.0)],
            [c(h, 0.0), c(h, 0.0)],
            [c(h, 0.0), c(-h, 0.0)],
            [c(h, 0.0), c(0.0, h)],
            [c(h, 0.0), c(0.0, -h)],
        ];
        let t = gates::t_gate();
        let total: f64 = states
            .iter()
            .map(|amps| {
                let mut s = StateVector::from_amplitudes(amps.to_vec()).expect("valid state");
                s.apply_gate1(0, &t).expect("valid site");
                s.exact_stabilizer_entropy(RenyiIndex::Two).expect("one qubit")
            })
            .sum();
        total / states.len() as f64
    })
}

/// Steady-state magic of the separable model, `η M̄ (1−p)/p N^{1−β}`.
pub fn separable_prediction(eta: f64, p: f64, beta: f64, n: usize) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::param("p", format!("{p} must lie strictly between 0 and 1")));
    }
    if !(beta > 0.0) {
        return Err(Error::param("beta", format!("{beta} must be positive")));
    }
    if !(eta >= 0.0) {
        return Err(Error::param("eta", format!("{eta} must be non-negative")));
    }
    if n == 0 {
        return Err(Error::param("n_qubits", "must be positive"));
    }
    Ok(eta * mean_single_site_magic() * (1.0 - p) / p * (n as f64).powf(1.0 - beta))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitRow {
    pub quantity: Quantity,
    pub eta: f64,
    pub p: f64,
    #[serde(flatten)]
    pub fit: FitResult,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FTestRow {
    pub quantity: Quantity,
    pub eta: f64,
    pub p: f64,
    pub ln_f: f64,
    /// Same, with the largest system size dropped.
    pub ln_f_restricted: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub fits: Vec<FitRow>,
    pub f_test: Vec<FTestRow>,
    pub critical: Option<CriticalPoint>,
    /// Why no critical point could be extracted, if so.
    pub critical_error: Option<String>,
}

/// `(N, mean, rescaled_std)` for every present aggregate row of one cell.
pub fn cell_points(rows: &[AggregateRow], quantity: Quantity, eta: f64, p: f64) -> Vec<(f64, f64, f64)> {
    let mut pts: Vec<(f64, f64, f64)> = rows
        .iter()
        .filter(|r| {
            r.quantity == quantity
                && r.eta.to_bits() == eta.to_bits()
                && r.p.to_bits() == p.to_bits()
                && r.is_present()
        })
        .filter_map(|r| Some((r.n as f64, r.mean?, r.rescaled_std?)))
        .collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    pts
}

/// Fits every law at every `p` of one `(quantity, η)` slice, forms the ln F
/// series with and without the largest size, and extracts the critical rate.
pub fn analyze(rows: &[AggregateRow], quantity: Quantity, eta: f64) -> Result<AnalysisReport> {
    let mut ps: Vec<f64> = rows
        .iter()
        .filter(|r| r.quantity == quantity && r.eta.to_bits() == eta.to_bits())
        .map(|r| r.p)
        .collect();
    ps.sort_by(|a, b| a.total_cmp(b));
    ps.dedup_by(|a, b| a.to_bits() == b.to_bits());
    if ps.is_empty() {
        return Err(Error::Fit(format!("no {quantity} rows for eta = {eta}")));
    }
    let missing: Vec<String> = ps
        .iter()
        .filter_map(|&p| {
            let k = cell_points(rows, quantity, eta, p).len();
            (k < MIN_FIT_POINTS + 1).then(|| format!("p = {p} has {k} sizes"))
        })
        .collect();
    if !missing.is_empty() {
        return Err(Error::Fit(format!(
            "insufficient data for {quantity} at eta = {eta} (need {} sizes per p): {}",
            MIN_FIT_POINTS + 1,
            missing.join("; ")
        )));
    }

    let mut fits = Vec::new();
    let mut f_test = Vec::new();
    for &p in &ps {
        let pts = cell_points(rows, quantity, eta, p);
        let restricted = &pts[..pts.len() - 1];
        let mut by_law = Vec::new();
        for law in Law::ALL {
            let fit = fit_scaling(&pts, law)?;
            fits.push(FitRow {
                quantity,
                eta,
                p,
                fit: fit.clone(),
            });
            by_law.push(fit);
        }
        let ln_f = f_ratio(&by_law[0], &by_law[1])?;
        let ln_f_restricted = f_ratio(
            &fit_scaling(restricted, Law::Extensive)?,
            &fit_scaling(restricted, Law::Area)?,
        )?;
        f_test.push(FTestRow {
            quantity,
            eta,
            p,
            ln_f,
            ln_f_restricted,
        });
    }
    let series: Vec<(f64, f64)> = f_test.iter().map(|r| (r.p, r.ln_f)).collect();
    let restricted: Vec<(f64, f64)> = f_test.iter().map(|r| (r.p, r.ln_f_restricted)).collect();
    let (critical, critical_error) = match critical_rate(&series, &restricted, quantity, eta) {
        Ok(c) => (Some(c), None),
        Err(e) => (None, Some(e.to_string())),
    };
    Ok(AnalysisReport {
        fits,
        f_test,
        critical,
        critical_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn noiseless(f: impl Fn(f64) -> f64) -> Vec<(f64, f64, f64)> {
        [8.0, 12.0, 16.0, 24.0, 32.0, 48.0, 64.0]
            .iter()
            .map(|&n| (n, f(n), 0.01))
            .collect()
    }

    #[test]
    fn recovers_extensive_law() {
        let fit = fit_scaling(&noiseless(|n| 2.0 + 0.5 * n.sqrt()), Law::Extensive).unwrap();
        assert!((fit.a - 2.0).abs() < 1e-4, "{fit:?}");
        assert!((fit.b - 0.5).abs() < 1e-4);
        assert!((fit.gamma.unwrap() - 0.5).abs() < 1e-4);
        assert!(fit.chi2_per_dof < 1e-8);
        assert_eq!(fit.dof, 4);
    }

    #[test]
    fn constant_data_area_law() {
        let fit = fit_scaling(&noiseless(|_| 3.0), Law::Area).unwrap();
        assert!((fit.a - 3.0).abs() < 1e-9);
        for n in [8.0f64, 64.0] {
            assert!((fit.b * n.powf(fit.gamma.unwrap())).abs() < 1e-6);
        }
        assert!(fit.chi2_per_dof < 1e-12);
    }

    #[test]
    fn log_law_and_point_selection() {
        let mut pts = noiseless(|n| 1.0 + 2.0 * n.ln());
        pts.insert(0, (4.0, 1000.0, 0.01)); // dropped: not among the 7 largest
        let fit = fit_scaling(&pts, Law::Log).unwrap();
        assert!((fit.a - 1.0).abs() < 1e-9 && (fit.b - 2.0).abs() < 1e-9);
        assert_eq!((fit.n_points, fit.dof), (7, 5));
        assert!(fit.gamma.is_none());
    }

    #[test]
    fn rejects_bad_input() {
        assert!(fit_scaling(&noiseless(|n| n)[..3], Law::Area).is_err());
        let mut pts = noiseless(|n| n);
        pts[2].2 = 0.0;
        let err = fit_scaling(&pts, Law::Area).unwrap_err().to_string();
        assert!(err.contains("N = 16"), "{err}");
    }

    #[test]
    fn f_ratio_signs() {
        let pts = noiseless(|n| 1.0 + 0.1 * n.powf(0.7) + if (n as usize).is_multiple_of(16) { 0.02 } else { -0.02 });
        let ext = fit_scaling(&pts, Law::Extensive).unwrap();
        let area = fit_scaling(&pts, Law::Area).unwrap();
        assert!(f_ratio(&ext, &area).unwrap() < 0.0);
        assert!(f_ratio(&ext, &ext).is_err());
        let mut same = area.clone();
        same.law = Law::Extensive;
        assert_eq!(f_ratio(&same, &area).unwrap(), 0.0);
    }

    #[test]
    fn critical_rate_by_hand() {
        let s = [(0.1, -1.0), (0.2, 1.0)];
        let c = critical_rate(&s, &s, Quantity::Entanglement, 1.0).unwrap();
        assert!((c.p_c - 0.15).abs() < 1e-15);
        assert!((c.sigma_a - 0.05).abs() < 1e-15);
        assert_eq!(c.sigma_b, 0.0);
        assert!(!c.boundary_capped);
        let flat = [(0.1, 1.0), (0.2, 2.0)];
        assert!(matches!(
            critical_rate(&flat, &flat, Quantity::Magic, 1.0),
            Err(Error::NoTransition)
        ));
    }

    #[test]
    fn sigma_a_capped_at_boundary() {
        let s = [(0.1, -0.5), (0.2, 0.5), (0.3, 0.8)];
        let c = critical_rate(&s, &s, Quantity::Entanglement, 1.0).unwrap();
        assert!((c.p_c - 0.15).abs() < 1e-12);
        assert!(c.boundary_capped);
        assert!((c.sigma_a - 0.15).abs() < 1e-12);
    }

    #[test]
    fn multiple_crossings_prefer_midpoint() {
        let s = [(0.1, -1.0), (0.2, 1.0), (0.3, -1.0), (0.4, 1.0), (0.5, 2.0)];
        let c = critical_rate(&s, &s, Quantity::Magic, 2.0).unwrap();
        assert!(c.multiple_crossings);
        assert!((c.p_c - 0.25).abs() < 1e-12);
    }

    #[test]
    fn separable_model_values() {
        let m = mean_single_site_magic();
        assert!((m - 2.0 / 3.0 * (4.0f64 / 3.0).log2()).abs() < 1e-12);
        assert!((separable_prediction(1.0, 0.5, 1.0, 32).unwrap() - m).abs() < 1e-15);
        assert_eq!(
            separable_prediction(1.0, 0.3, 1.0, 8).unwrap(),
            separable_prediction(1.0, 0.3, 1.0, 1024).unwrap()
        );
        assert!(separable_prediction(1.0, 0.3, 2.0, 1_000_000).unwrap() < 1e-5);
        assert!(separable_prediction(1.0, 0.0, 1.0, 8).is_err());
        assert!(separable_prediction(1.0, 1.0, 1.0, 8).is_err());
    }
}

//! Norm records, exponential decay fits, and inequality monitors.

use thiserror::Error;

use crate::field::{Axis, Field, LpNorm};
use crate::hydrostatics::{baroclinic_part, boundary_residuals, reconstruct_w, vertical_average};
use crate::operator::bilinear_ratio;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagnosticsError {
    #[error("insufficient data: {got} samples, need at least {need}")]
    InsufficientData { got: usize, need: usize },
    #[error("nonpositive value {value} at sample {index}")]
    NonpositiveValue { index: usize, value: f64 },
    #[error("order k = {0} unsupported (1, 2 or 3)")]
    UnsupportedOrder(usize),
}

/// One time sample of the difference field `v_d`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub l2: f64,
    pub h1: f64,
    pub h2: f64,
    pub h3: f64,
    /// Needed for the `L^2_t H^4` integral in [`hk_boundedness`] at `k = 3`.
    pub h4: f64,
    /// `||v_d - vbar_d||_{L^4}`.
    pub l4_tilde: f64,
    /// `||v_d||_{L^2}^2`.
    pub energy: f64,
    /// `2 h^2 ||grad_H v_d||^2 - ||w(v_d)||^2`.
    pub jensen_slack: f64,
    /// `h ||d_z v_d|| - ||v_d||`.
    pub poincare_slack: f64,
    /// `||grad_H vbar_d||_{L^2(T^2)}`.
    pub barotropic_h1: f64,
    /// NaN for the zero field.
    pub bilinear_ratio_k0: f64,
    /// Bound on `max |d_z v_d(0)|`.
    pub boundary_top: f64,
    /// Bound on `max |v_d(-h)|`.
    pub boundary_bottom: f64,
}

impl DiagnosticsRecord {
    pub const CSV_HEADER: &'static str =
        "t,l2,h1,h2,h3,l4_tilde,energy,jensen_slack,poincare_slack,barotropic_h1,bilinear_ratio_k0";

    /// CSV row matching [`Self::CSV_HEADER`], 17 significant digits.
    pub fn csv_row(&self) -> String {
        [
            self.t,
            self.l2,
            self.h1,
            self.h2,
            self.h3,
            self.l4_tilde,
            self.energy,
            self.jensen_slack,
            self.poincare_slack,
            self.barotropic_h1,
            self.bilinear_ratio_k0,
        ]
        .iter()
        .map(|x| format!("{x:.16e}"))
        .collect::<Vec<_>>()
        .join(",")
    }

    /// Sobolev norm of order `k` in `0..=4`.
    pub fn hk(&self, k: usize) -> Option<f64> {
        match k {
            0 => Some(self.l2),
            1 => Some(self.h1),
            2 => Some(self.h2),
            3 => Some(self.h3),
            4 => Some(self.h4),
            _ => None,
        }
    }
}

/// Evaluates every monitored quantity of `v_d` at time `t`.
pub fn record(v_d: &Field, t: f64) -> DiagnosticsRecord {
    let v = v_d.to_spectral();
    let g = v.grid().clone();
    let sob = |k| v.sobolev_norm(k).expect("k <= 4");
    let l2 = v.l2_norm();
    let grad2 = v.horizontal_gradient_norm_squared();
    let w = reconstruct_w(&v).l2_norm();
    let dz = v.diff(Axis::Z).l2_norm();
    let (boundary_top, boundary_bottom) = boundary_residuals(&v);
    DiagnosticsRecord {
        t,
        l2,
        h1: sob(1),
        h2: sob(2),
        h3: sob(3),
        h4: sob(4),
        l4_tilde: baroclinic_part(&v).lp_norm(LpNorm::L4),
        energy: l2 * l2,
        jensen_slack: 2.0 * g.h * g.h * grad2 - w * w,
        poincare_slack: g.h * dz - l2,
        barotropic_h1: vertical_average(&v).gradient_norm(),
        bilinear_ratio_k0: bilinear_ratio(&v, 0).unwrap_or(f64::NAN),
        boundary_top,
        boundary_bottom,
    }
}

/// Least-squares fit `value ~ amplitude * exp(rate * t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayFit {
    pub amplitude: f64,
    pub rate: f64,
    pub r2: f64,
    pub samples: usize,
}

/// Default fraction of leading samples dropped as transient.
pub const DEFAULT_TRANSIENT: f64 = 0.2;

/// [`decay_fit_with`] with the default 20% transient exclusion.
pub fn decay_fit(series: &[(f64, f64)]) -> Result<DecayFit, DiagnosticsError> {
    decay_fit_with(series, DEFAULT_TRANSIENT)
}

/// Fits a line to `(t, ln value)` after dropping the first
/// `floor(transient * n)` samples. Needs at least 5 samples.
pub fn decay_fit_with(series: &[(f64, f64)], transient: f64) -> Result<DecayFit, DiagnosticsError> {
    if series.len() < 5 {
        return Err(DiagnosticsError::InsufficientData {
            got: series.len(),
            need: 5,
        });
    }
    if let Some((index, &(_, value))) = series.iter().enumerate().find(|(_, (_, v))| !(*v > 0.0)) {
        return Err(DiagnosticsError::NonpositiveValue { index, value });
    }
    let skip = ((transient.clamp(0.0, 1.0) * series.len() as f64).floor() as usize).min(series.len() - 2);
    let window = &series[skip..];
    let n = window.len() as f64;
    let mt = window.iter().map(|p| p.0).sum::<f64>() / n;
    let my = window.iter().map(|p| p.1.ln()).sum::<f64>() / n;
    let (mut stt, mut sty, mut syy) = (0.0, 0.0, 0.0);
    for &(t, v) in window {
        let (dt, dy) = (t - mt, v.ln() - my);
        stt += dt * dt;
        sty += dt * dy;
        syy += dy * dy;
    }
    if stt == 0.0 {
        return Err(DiagnosticsError::InsufficientData {
            got: 1,
            need: 2,
        });
    }
    let rate = sty / stt;
    let intercept = my - rate * mt;
    let sse: f64 = window
        .iter()
        .map(|&(t, v)| (v.ln() - intercept - rate * t).powi(2))
        .sum();
    let r2 = if syy <= f64::EPSILON * f64::EPSILON * n { 1.0 } else { 1.0 - sse / syy };
    Ok(DecayFit {
        amplitude: intercept.exp(),
        rate,
        r2,
        samples: window.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonotoneReport {
    pub pass: bool,
    /// Index `n + 1` of the first sample with `e_{n+1} > e_n (1 + 1e-10)`.
    pub first_violation: Option<usize>,
    /// Largest `e_{n+1} / e_n` seen.
    pub worst_ratio: f64,
}

/// Relative tolerance per step.
pub const ENERGY_TOLERANCE: f64 = 1e-10;

/// Checks `energy(t_{n+1}) <= energy(t_n) (1 + 1e-10)` along the series.
pub fn check_energy_monotone(series: &[DiagnosticsRecord]) -> MonotoneReport {
    let e: Vec<f64> = series.iter().map(|r| r.energy).collect();
    check_monotone_values(&e)
}

/// [`check_energy_monotone`] on raw energies.
pub fn check_monotone_values(energy: &[f64]) -> MonotoneReport {
    let mut first = None;
    let mut worst: f64 = 0.0;
    for n in 1..energy.len() {
        let (a, b) = (energy[n - 1], energy[n]);
        if a > 0.0 {
            worst = worst.max(b / a);
        }
        if b > a * (1.0 + ENERGY_TOLERANCE) && first.is_none() {
            first = Some(n);
        }
    }
    MonotoneReport {
        pass: first.is_none(),
        first_violation: first,
        worst_ratio: worst,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HkReport {
    pub k: usize,
    /// `max_t ||v_d||_{H^k}`.
    pub max_norm: f64,
    /// `int ||v_d||_{H^{k+1}}^2 dt` by the trapezoid rule.
    pub integral: f64,
    pub finite: bool,
    /// After the first 20% of samples the `H^k` norm never exceeds its value
    /// at the start of that window, and ends below it.
    pub eventually_decreasing: bool,
}

/// Finiteness and eventual decrease of `H^k` along a series, `k` in 1..=3.
pub fn hk_boundedness(series: &[DiagnosticsRecord], k: usize) -> Result<HkReport, DiagnosticsError> {
    if !(1..=3).contains(&k) {
        return Err(DiagnosticsError::UnsupportedOrder(k));
    }
    let norm: Vec<f64> = series.iter().map(|r| r.hk(k).expect("k <= 3")).collect();
    let next: Vec<f64> = series.iter().map(|r| r.hk(k + 1).expect("k + 1 <= 4")).collect();
    let max_norm = norm.iter().copied().fold(0.0, f64::max);
    let integral = series
        .windows(2)
        .zip(next.windows(2))
        .map(|(r, n)| 0.5 * (r[1].t - r[0].t) * (n[0] * n[0] + n[1] * n[1]))
        .sum::<f64>();
    let finite = max_norm.is_finite() && integral.is_finite();
    let eventually_decreasing = if norm.len() < 2 {
        true
    } else {
        let start = ((DEFAULT_TRANSIENT * norm.len() as f64).floor() as usize).min(norm.len() - 2);
        let w = &norm[start..];
        let ref_value = w[0];
        let bounded = w.iter().all(|&x| x <= ref_value * (1.0 + 1e-12));
        bounded && (w[w.len() - 1] < ref_value || ref_value == 0.0)
    };
    Ok(HkReport {
        k,
        max_norm,
        integral,
        finite,
        eventually_decreasing,
    })
}

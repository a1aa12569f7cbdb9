//! Density, phase, quantum potential and energies derived from a state.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::domain::TimePoint;
use crate::dynamics::{node_threshold, IntegratorOptions, Trajectory};
use crate::error::Result;
use crate::fractal::GridRule;
use crate::spectral::{SpectralState, WavefieldSample};

/// Quantum potential value, or a marker where the density vanishes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PotentialValue {
    Finite(f64),
    /// Below the node threshold. `sign` is the side the potential diverges
    /// to; `last_finite` is the closest preceding finite value, if any.
    Singular { sign: f64, last_finite: Option<f64> },
}

impl PotentialValue {
    pub fn finite(&self) -> Option<f64> {
        match *self {
            PotentialValue::Finite(v) => Some(v),
            PotentialValue::Singular { .. } => None,
        }
    }

    /// The value, with singular markers mapped to signed infinity.
    pub fn value(&self) -> f64 {
        match *self {
            PotentialValue::Finite(v) => v,
            PotentialValue::Singular { sign, .. } => sign * f64::INFINITY,
        }
    }

    pub fn is_singular(&self) -> bool {
        matches!(self, PotentialValue::Singular { .. })
    }

    fn plus(self, k: f64) -> Self {
        match self {
            PotentialValue::Finite(q) => PotentialValue::Finite(q + k),
            PotentialValue::Singular { sign, last_finite } => PotentialValue::Singular {
                sign,
                last_finite: last_finite.map(|q| q + k),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldProfile {
    pub t: f64,
    pub x: Vec<f64>,
    pub rho: Vec<f64>,
    /// Unwrapped phase `S = ħ arg Ψ`; `None` where the density is below `ε_node`.
    pub phase: Vec<Option<f64>>,
    pub potential: Vec<PotentialValue>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergySample {
    pub t: f64,
    pub x: f64,
    pub kinetic: f64,
    pub potential: PotentialValue,
    /// External potential, identically zero inside the box.
    pub external: f64,
    pub total: PotentialValue,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyTrace {
    pub x0: f64,
    pub truncation: usize,
    pub samples: Vec<EnergySample>,
}

/// `−(ħ²/2m) R''/R` from `R''/R = Re(Ψ''/Ψ) + Im(Ψ'/Ψ)²`.
fn potential_from(state: &SpectralState, w: &WavefieldSample) -> f64 {
    let d = state.domain();
    let a = w.dpsi / w.psi;
    let b = w.d2psi / w.psi;
    -d.hbar() * d.hbar() / (2.0 * d.mass()) * (b.re + a.im * a.im)
}

fn singular_sign(state: &SpectralState, time: TimePoint, x: f64, n_terms: usize, w: &WavefieldSample) -> Result<f64> {
    let raw = if w.psi.norm_sqr() > 0.0 {
        potential_from(state, w)
    } else {
        // exactly on a zero: look just inside the box
        let l = state.domain().length();
        let probe = if x < 0.5 * l { x + 1e-9 * l } else { x - 1e-9 * l };
        let wp = state.evaluate(time, probe, n_terms)?;
        if wp.psi.norm_sqr() > 0.0 {
            potential_from(state, &wp)
        } else {
            1.0
        }
    };
    Ok(if raw < 0.0 { -1.0 } else { 1.0 })
}

/// `Q_t(x)` for the first `n_terms` terms.
pub fn quantum_potential(
    state: &SpectralState,
    t: impl Into<TimePoint>,
    x: f64,
    n_terms: usize,
) -> Result<PotentialValue> {
    let time = t.into();
    let w = state.evaluate(time, x, n_terms)?;
    let threshold = node_threshold(state, n_terms, IntegratorOptions::default().node_factor);
    if w.psi.norm_sqr() < threshold {
        return Ok(PotentialValue::Singular {
            sign: singular_sign(state, time, x, n_terms, &w)?,
            last_finite: None,
        });
    }
    Ok(PotentialValue::Finite(potential_from(state, &w)))
}

/// Density, unwrapped phase and quantum potential along a grid.
///
/// The phase is unwrapped left to right; every masked gap restarts the
/// unwrapping from the principal value.
pub fn density_phase(
    state: &SpectralState,
    t: impl Into<TimePoint>,
    xs: &[f64],
    n_terms: usize,
) -> Result<FieldProfile> {
    let time = t.into();
    let samples = state.evaluate_grid(time, xs, n_terms)?;
    let threshold = node_threshold(state, n_terms, IntegratorOptions::default().node_factor);
    let hbar = state.domain().hbar();

    let rho: Vec<f64> = samples.iter().map(|w| w.psi.norm_sqr()).collect();
    let mut phase = Vec::with_capacity(xs.len());
    let mut potential = Vec::with_capacity(xs.len());
    let mut prev_arg: Option<f64> = None;
    let mut last_finite = None;
    for ((w, &r), &x) in samples.iter().zip(&rho).zip(xs) {
        if r < threshold {
            phase.push(None);
            prev_arg = None;
            potential.push(PotentialValue::Singular {
                sign: singular_sign(state, time, x, n_terms, w)?,
                last_finite,
            });
            continue;
        }
        let raw = w.psi.arg();
        let arg = match prev_arg {
            None => raw,
            Some(p) => raw + TAU * ((p - raw) / TAU).round(),
        };
        prev_arg = Some(arg);
        phase.push(Some(hbar * arg));
        let q = potential_from(state, w);
        last_finite = Some(q);
        potential.push(PotentialValue::Finite(q));
    }
    Ok(FieldProfile {
        t: time.t,
        x: xs.to_vec(),
        rho,
        phase,
        potential,
    })
}

/// Kinetic energy, quantum potential and total energy along the output
/// samples of a trajectory.
pub fn energy_along(trajectory: &Trajectory, state: &SpectralState) -> Result<EnergyTrace> {
    let m = state.domain().mass();
    let n = trajectory.truncation;
    let mut last_finite = None;
    let mut samples = Vec::with_capacity(trajectory.samples.len());
    for s in &trajectory.samples {
        let kinetic = 0.5 * m * s.v * s.v;
        let potential = match quantum_potential(state, s.t, s.x, n)? {
            PotentialValue::Finite(q) => {
                last_finite = Some(q);
                PotentialValue::Finite(q)
            }
            PotentialValue::Singular { sign, .. } => PotentialValue::Singular { sign, last_finite },
        };
        samples.push(EnergySample {
            t: s.t,
            x: s.x,
            kinetic,
            potential,
            external: 0.0,
            total: potential.plus(kinetic),
        });
    }
    Ok(EnergyTrace {
        x0: trajectory.x0,
        truncation: n,
        samples,
    })
}

/// Ensemble energy `Σ_{n≤N} |c_n|² E_n`; time independent.
pub fn ensemble_energy(state: &SpectralState, n_terms: usize) -> Result<f64> {
    state.check_truncation(n_terms)?;
    Ok(state.mean_energy(n_terms) + state.energy_offset() * state.norm_sqr(n_terms))
}

/// Quadrature cross-check `∫ (ħ²/2m) |∂_xΨ|² dx` with composite Simpson.
///
/// `points` defaults to eight per half-wavelength of the highest mode.
pub fn ensemble_energy_quadrature(
    state: &SpectralState,
    t: impl Into<TimePoint>,
    n_terms: usize,
    points: Option<usize>,
) -> Result<f64> {
    state.check_truncation(n_terms)?;
    let d = state.domain();
    let points = points.unwrap_or_else(|| GridRule::default().points(state.max_mode(n_terms)));
    let points = points.max(3) | 1;
    let xs = d.grid(points);
    let samples = state.evaluate_grid(t, &xs, n_terms)?;
    let f: Vec<f64> = samples.iter().map(|w| w.dpsi.norm_sqr()).collect();
    let h = d.length() / (points - 1) as f64;
    Ok(d.hbar() * d.hbar() / (2.0 * d.mass()) * simpson(&f, h))
}

/// Composite Simpson over an odd number of equally spaced samples.
pub fn simpson(f: &[f64], h: f64) -> f64 {
    debug_assert!(f.len() % 2 == 1 && f.len() >= 3);
    let n = f.len() - 1;
    let mut odd = 0.0;
    let mut even = 0.0;
    for (i, v) in f.iter().enumerate().take(n).skip(1) {
        if i % 2 == 1 {
            odd += v;
        } else {
            even += v;
        }
    }
    (f[0] + f[n] + 4.0 * odd + 2.0 * even) * h / 3.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecurrenceEntry {
    pub time: TimePoint,
    pub sup_diff: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecurrenceReport {
    pub truncation: usize,
    pub grid_points: usize,
    pub entries: Vec<RecurrenceEntry>,
    /// `sup_x |ρ_T − ρ_0|`.
    pub period_diff: f64,
    pub exact_at_period: bool,
    /// `sup_x |ρ_{jT/64} − ρ_0|` for `j = 1..=63`.
    pub scan: Vec<f64>,
    /// First scan index with a difference below `1e-3`, if any.
    pub earliest_scan_recurrence: Option<usize>,
}

/// Density recurrence diagnostics against `ρ_0` on a reference grid.
pub fn recurrence_check(
    state: &SpectralState,
    n_terms: usize,
    times: &[TimePoint],
    grid_points: Option<usize>,
) -> Result<RecurrenceReport> {
    state.check_truncation(n_terms)?;
    let d = state.domain();
    let points = grid_points.unwrap_or_else(|| GridRule::default().points(state.max_mode(n_terms)));
    let xs = d.grid(points);
    let density = |time: TimePoint| -> Result<Vec<f64>> {
        Ok(state
            .at_time(time, n_terms)?
            .psi_grid(&xs)?
            .iter()
            .map(|p| p.norm_sqr())
            .collect())
    };
    let rho0 = density(TimePoint::at(0.0))?;
    let sup_diff = |time: TimePoint| -> Result<f64> {
        Ok(density(time)?
            .iter()
            .zip(&rho0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    };
    let entries = times
        .iter()
        .map(|&time| {
            Ok(RecurrenceEntry {
                time,
                sup_diff: sup_diff(time)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let period_diff = sup_diff(TimePoint::rational(d, 1, 1)?)?;
    let scan = (1..64)
        .map(|j| sup_diff(TimePoint::rational(d, j, 64)?))
        .collect::<Result<Vec<_>>>()?;
    Ok(RecurrenceReport {
        truncation: n_terms,
        grid_points: points,
        entries,
        period_diff,
        exact_at_period: period_diff <= 1e-10,
        earliest_scan_recurrence: scan.iter().position(|&s| s < 1e-3).map(|i| i + 1),
        scan,
    })
}

/// Probability current `j = (ħ/m) Im(Ψ* ∂_xΨ)`.
pub fn current(state: &SpectralState, w: &WavefieldSample) -> f64 {
    let d = state.domain();
    d.hbar() / d.mass() * (w.psi.conj() * w.dpsi).im
}

/// Central-difference residual of `∂_t ρ + ∂_x j` at `(t, x)`, with steps
/// `h·T` in time and `h·L` in space.
pub fn continuity_residual(
    state: &SpectralState,
    t: f64,
    x: f64,
    n_terms: usize,
    h: f64,
) -> Result<f64> {
    let d = state.domain();
    let (ht, hx) = (h * d.period(), h * d.length());
    let rho = |tt: f64| -> Result<f64> { Ok(state.evaluate(tt, x, n_terms)?.psi.norm_sqr()) };
    let flux = |xx: f64| -> Result<f64> { Ok(current(state, &state.evaluate(t, xx, n_terms)?)) };
    let drho = (rho(t + ht)? - rho(t - ht)?) / (2.0 * ht);
    let dflux = (flux(x + hx)? - flux(x - hx)?) / (2.0 * hx);
    Ok(drho + dflux)
}

/// Phase of the global factor `e^{-iE_1 t/ħ}` modulo `2π`; handy for gauge checks.
pub fn ground_phase(state: &SpectralState, t: f64) -> f64 {
    let d = state.domain();
    (-d.mode_energy(1) * t / d.hbar()).rem_euclid(2.0 * PI)
}

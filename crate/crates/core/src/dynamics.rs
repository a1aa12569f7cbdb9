//! Guidance velocity, trajectory integration at fixed truncation and the
//! truncation-ladder limit.
//!
//! Steps are dyadic fractions of the output spacing, so every output time
//! is hit exactly and per-term time phases can be advanced by cached
//! complex multipliers instead of fresh trigonometric calls. Phases are
//! re-anchored exactly at every output sample.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::TimePoint;
use crate::error::{Error, Result};
use crate::spectral::{Kernel, SpectralState};

/// Finest dyadic refinement of the output spacing the integrator will try.
const MAX_LEVEL: u32 = 40;
/// Stored proximity events per trajectory; further events are only counted.
const MAX_EVENTS: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IntegratorOptions {
    /// Initial step; `None` means `T/2000` rounded down to a dyadic fraction
    /// of the output spacing.
    pub dt_init: Option<f64>,
    /// Local error tolerance per step, in position units.
    pub tol_step: f64,
    /// Smallest step before giving up; `None` means `T·1e-9`.
    pub dt_min: Option<f64>,
    /// Shared output samples per period.
    pub samples_per_period: usize,
    /// Node threshold relative to `Σ|c_n|²·2/L`.
    pub node_factor: f64,
    /// Wall proximity band, relative to `L`.
    pub wall_eps: f64,
    /// Ladder convergence tolerance on the sup-norm delta, relative to `L`.
    pub limit_tol: f64,
    /// Keep every accepted step, not just the shared output samples.
    pub record_steps: bool,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        Self {
            dt_init: None,
            tol_step: 1e-8,
            dt_min: None,
            samples_per_period: 2048,
            node_factor: 1e-12,
            wall_eps: 1e-9,
            limit_tol: 1e-3,
            record_steps: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub x: f64,
    pub v: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    /// A stage point fell below the node threshold and the step was halved.
    Node,
    /// An accepted position came within `wall_eps` of a wall.
    Wall,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub t: f64,
    pub x: f64,
    pub kind: EventKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub x0: f64,
    pub truncation: usize,
    /// Positions on the shared output grid.
    pub samples: Vec<Sample>,
    /// Every accepted step (empty unless `record_steps`).
    pub steps: Vec<Sample>,
    pub events: Vec<Event>,
    pub node_events: usize,
    pub wall_events: usize,
    pub rejected_steps: usize,
}

impl Trajectory {
    /// The densest recorded path: accepted steps if kept, else output samples.
    pub fn path(&self) -> &[Sample] {
        if self.steps.is_empty() {
            &self.samples
        } else {
            &self.steps
        }
    }

    fn push_event(&mut self, t: f64, x: f64, kind: EventKind) {
        match kind {
            EventKind::Node => self.node_events += 1,
            EventKind::Wall => self.wall_events += 1,
        }
        if self.events.len() < MAX_EVENTS {
            self.events.push(Event { t, x, kind });
        }
    }
}

/// Strictly increasing truncation sizes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct TruncationLadder(Vec<usize>);

impl TruncationLadder {
    pub fn new(levels: Vec<usize>) -> Result<Self> {
        if levels.len() < 3 {
            return Err(Error::Domain(format!(
                "ladder needs at least 3 levels, got {}",
                levels.len()
            )));
        }
        if levels[0] == 0 || levels.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Domain(format!(
                "ladder must be positive and strictly increasing: {levels:?}"
            )));
        }
        Ok(Self(levels))
    }

    /// `{2^lo, …, 2^hi}`.
    pub fn powers_of_two(lo: u32, hi: u32) -> Result<Self> {
        Self::new((lo..=hi).map(|k| 1usize << k).collect())
    }

    pub fn levels(&self) -> &[usize] {
        &self.0
    }

    pub fn top(&self) -> usize {
        *self.0.last().expect("ladder is never empty")
    }
}

impl Default for TruncationLadder {
    fn default() -> Self {
        Self::powers_of_two(4, 13).expect("static ladder")
    }
}

impl TryFrom<Vec<usize>> for TruncationLadder {
    type Error = Error;

    fn try_from(v: Vec<usize>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<TruncationLadder> for Vec<usize> {
    fn from(l: TruncationLadder) -> Self {
        l.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitTrajectory {
    pub ladder: TruncationLadder,
    pub per_level: Vec<Trajectory>,
    /// `sup_t |x_{N_{k+1}}(t) − x_{N_k}(t)|` on the shared grid.
    pub deltas: Vec<f64>,
    pub converged: bool,
}

impl LimitTrajectory {
    /// Best available representative: the top ladder level.
    pub fn limit_estimate(&self) -> &[Sample] {
        &self.per_level.last().expect("ladder is never empty").samples
    }
}

/// Node threshold `ε_node` for the first `n_terms` terms.
pub fn node_threshold(state: &SpectralState, n_terms: usize, node_factor: f64) -> f64 {
    node_factor * state.norm_sqr(n_terms) * 2.0 / state.domain().length()
}

/// Guidance velocity `(ħ/m) Im(∂_xΨ / Ψ)` with the default node threshold.
pub fn velocity(state: &SpectralState, t: impl Into<TimePoint>, x: f64, n_terms: usize) -> Result<f64> {
    velocity_with(state, t, x, n_terms, IntegratorOptions::default().node_factor)
}

pub fn velocity_with(
    state: &SpectralState,
    t: impl Into<TimePoint>,
    x: f64,
    n_terms: usize,
    node_factor: f64,
) -> Result<f64> {
    let time = t.into();
    let d = state.domain();
    if !(x > 0.0 && x < d.length()) {
        return Err(Error::Domain(format!("velocity needs 0 < x < L, got {x}")));
    }
    let w = state.at_time(time, n_terms)?.sample(x)?;
    let rho = w.psi.norm_sqr();
    let threshold = node_threshold(state, n_terms, node_factor);
    if rho <= threshold {
        return Err(Error::NodeSingularity {
            t: time.t,
            x,
            density: rho,
            threshold,
        });
    }
    Ok(d.hbar() / d.mass() * (w.psi.conj() * w.dpsi).im / rho)
}

/// Shared output grid for a time span: spacing at most `T / samples_per_period`.
pub fn output_grid(state: &SpectralState, t_span: [f64; 2], opts: &IntegratorOptions) -> Vec<f64> {
    let [ta, tb] = t_span;
    let per = state.domain().period() / opts.samples_per_period.max(1) as f64;
    let intervals = ((tb - ta) / per).ceil().max(1.0) as usize;
    (0..=intervals)
        .map(|k| {
            if k == intervals {
                tb
            } else {
                ta + (tb - ta) * (k as f64 / intervals as f64)
            }
        })
        .collect()
}

/// Stage evaluation failure.
enum StageFault {
    /// `|Ψ|²` below threshold at this position.
    Node(f64),
    /// Stage position left the open box.
    Outside,
}

struct Field<'a> {
    kernel: Kernel,
    inv_length: f64,
    length: f64,
    velocity_scale: f64,
    threshold: f64,
    _state: &'a SpectralState,
}

impl Field<'_> {
    #[inline]
    fn velocity(&self, weights: &[Complex64], x: f64) -> std::result::Result<f64, StageFault> {
        if !(x > 0.0 && x < self.length) {
            return Err(StageFault::Outside);
        }
        let (psi, dpsi) = self.kernel.first(weights, x * self.inv_length);
        let rho = psi.norm_sqr();
        if rho.is_nan() || rho <= self.threshold {
            return Err(StageFault::Node(x));
        }
        Ok(self.velocity_scale * (psi.conj() * dpsi).im / rho)
    }
}

fn multiply(a: &[Complex64], b: &[Complex64], out: &mut [Complex64]) {
    for ((o, x), y) in out.iter_mut().zip(a).zip(b) {
        *o = x * y;
    }
}

/// Integrates `ẋ = v_N(t, x)` from `x0` over `t_span` with adaptive RK4.
///
/// Each attempt takes one full step and two half steps; their difference is
/// the local error estimate and the half-step result, Richardson-corrected,
/// is kept. A step is halved when the estimate exceeds `tol_step`, when a
/// stage lands within `ε_node` of a node, or when a stage leaves the box.
pub fn integrate(
    state: &SpectralState,
    x0: f64,
    t_span: [f64; 2],
    n_terms: usize,
    opts: &IntegratorOptions,
) -> Result<Trajectory> {
    state.check_truncation(n_terms)?;
    let d = *state.domain();
    let [ta, tb] = t_span;
    if !(ta.is_finite() && tb.is_finite() && ta < tb) {
        return Err(Error::Domain(format!("need t_a < t_b, got [{ta}, {tb}]")));
    }
    if !(x0 > 0.0 && x0 < d.length()) {
        return Err(Error::Domain(format!("initial position {x0} not inside (0, L)")));
    }
    if opts.tol_step.is_nan() || opts.tol_step <= 0.0 {
        return Err(Error::Domain("tol_step must be > 0".into()));
    }

    let grid = output_grid(state, t_span, opts);
    let spacing = grid[1] - grid[0];
    let period = d.period();
    let dt_init = opts.dt_init.unwrap_or(period / 2000.0);
    let dt_min = opts.dt_min.unwrap_or(period * 1e-9);
    let level_of = |dt: f64| -> u32 {
        let mut j = 0;
        while j < MAX_LEVEL && spacing / f64::powi(2.0, j as i32) > dt {
            j += 1;
        }
        j
    };
    // finest level whose step is still >= dt_min
    let mut finest = 0;
    while finest < MAX_LEVEL && spacing / f64::powi(2.0, finest as i32 + 1) >= dt_min {
        finest += 1;
    }
    let start_level = level_of(dt_init).min(finest);

    let field = Field {
        kernel: Kernel::new(state, n_terms),
        inv_length: 1.0 / d.length(),
        length: d.length(),
        velocity_scale: d.hbar() / d.mass(),
        threshold: node_threshold(state, n_terms, opts.node_factor),
        _state: state,
    };
    let wall_band = opts.wall_eps * d.length();

    let multipliers: Vec<Vec<Complex64>> = (0..=finest + 2)
        .map(|j| state.step_multipliers(spacing / f64::powi(2.0, j as i32), n_terms))
        .collect();

    let mut traj = Trajectory {
        x0,
        truncation: n_terms,
        samples: Vec::with_capacity(grid.len()),
        steps: Vec::new(),
        events: Vec::new(),
        node_events: 0,
        wall_events: 0,
        rejected_steps: 0,
    };

    let stalled = |traj: Trajectory, t: f64, x: f64| Error::Stalled {
        t,
        x,
        truncation: n_terms,
        partial: Box::new(traj),
    };

    let mut x = x0;
    let mut level = start_level;
    let mut phase = vec![Complex64::default(); n_terms];
    let mut quarter = phase.clone();
    let mut half = phase.clone();
    let mut three_quarter = phase.clone();
    let mut whole = phase.clone();
    let units = 1u64 << finest;

    for (k, &tk) in grid.iter().enumerate() {
        // exact re-anchoring at every output time
        phase.copy_from_slice(&state.phased_weights(&TimePoint::at(tk), n_terms));
        let vk = match field.velocity(&phase, x) {
            Ok(v) => v,
            Err(StageFault::Node(_)) => {
                traj.push_event(tk, x, EventKind::Node);
                return Err(stalled(traj, tk, x));
            }
            Err(StageFault::Outside) => return Err(stalled(traj, tk, x)),
        };
        traj.samples.push(Sample { t: tk, x, v: vk });
        if opts.record_steps {
            traj.steps.push(Sample { t: tk, x, v: vk });
        }
        if k + 1 == grid.len() {
            break;
        }

        let mut pos = 0u64;
        let mut k1 = vk;
        while pos < units {
            let span = units >> level;
            let h = spacing * span as f64 / units as f64;
            let t = tk + spacing * (pos as f64 / units as f64);
            let lv = level as usize;
            multiply(&phase, &multipliers[lv + 2], &mut quarter);
            multiply(&phase, &multipliers[lv + 1], &mut half);
            multiply(&half, &multipliers[lv + 2], &mut three_quarter);
            multiply(&phase, &multipliers[lv], &mut whole);

            let attempt = (|| -> std::result::Result<(f64, f64), StageFault> {
                let v = |w: &[Complex64], y: f64| field.velocity(w, y);
                // one full step
                let f2 = v(&half, x + 0.5 * h * k1)?;
                let f3 = v(&half, x + 0.5 * h * f2)?;
                let f4 = v(&whole, x + h * f3)?;
                let full = x + h / 6.0 * (k1 + 2.0 * f2 + 2.0 * f3 + f4);
                // two half steps
                let hh = 0.5 * h;
                let a2 = v(&quarter, x + 0.5 * hh * k1)?;
                let a3 = v(&quarter, x + 0.5 * hh * a2)?;
                let a4 = v(&half, x + hh * a3)?;
                let mid = x + hh / 6.0 * (k1 + 2.0 * a2 + 2.0 * a3 + a4);
                let b1 = v(&half, mid)?;
                let b2 = v(&three_quarter, mid + 0.5 * hh * b1)?;
                let b3 = v(&three_quarter, mid + 0.5 * hh * b2)?;
                let b4 = v(&whole, mid + hh * b3)?;
                let fine = mid + hh / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4);
                Ok((fine + (fine - full) / 15.0, (fine - full).abs()))
            })();

            let accepted = match attempt {
                Ok((next, err)) if err <= opts.tol_step && next > 0.0 && next < field.length => {
                    Some((next, err))
                }
                Ok(_) => None,
                Err(StageFault::Node(xn)) => {
                    traj.push_event(t, xn, EventKind::Node);
                    None
                }
                Err(StageFault::Outside) => None,
            };

            let Some((next, err)) = accepted else {
                traj.rejected_steps += 1;
                if level >= finest {
                    return Err(stalled(traj, t, x));
                }
                level += 1;
                continue;
            };

            x = next;
            pos += span;
            std::mem::swap(&mut phase, &mut whole);
            let t_new = tk + spacing * (pos as f64 / units as f64);
            let near_wall = x <= wall_band || x >= field.length - wall_band;
            if near_wall {
                traj.push_event(t_new, x, EventKind::Wall);
            }
            if pos < units {
                k1 = match field.velocity(&phase, x) {
                    Ok(v) => v,
                    Err(StageFault::Node(_)) | Err(StageFault::Outside) => {
                        traj.push_event(t_new, x, EventKind::Node);
                        return Err(stalled(traj, t_new, x));
                    }
                };
                if opts.record_steps {
                    traj.steps.push(Sample { t: t_new, x, v: k1 });
                }
            }
            if near_wall && level < finest {
                level += 1;
            } else if err < opts.tol_step / 32.0 && level > 0 && pos.is_multiple_of(span << 1) {
                level -= 1;
            }
        }
    }
    Ok(traj)
}

/// Integrates at every ladder level on a shared output grid and reports the
/// sup-norm differences between consecutive levels.
pub fn integrate_limit(
    state: &SpectralState,
    x0: f64,
    t_span: [f64; 2],
    ladder: &TruncationLadder,
    opts: &IntegratorOptions,
) -> Result<LimitTrajectory> {
    if ladder.top() > state.len() {
        return Err(Error::Range(format!(
            "ladder top {} exceeds the {} stored terms",
            ladder.top(),
            state.len()
        )));
    }
    let per_level = ladder
        .levels()
        .par_iter()
        .map(|&n| integrate(state, x0, t_span, n, opts))
        .collect::<Result<Vec<_>>>()?;
    let deltas: Vec<f64> = per_level
        .windows(2)
        .map(|w| {
            w[0].samples
                .iter()
                .zip(&w[1].samples)
                .map(|(a, b)| (a.x - b.x).abs())
                .fold(0.0, f64::max)
        })
        .collect();
    let tol = opts.limit_tol * state.domain().length();
    let converged = deltas.last().is_some_and(|&d| d <= tol);
    Ok(LimitTrajectory {
        ladder: ladder.clone(),
        per_level,
        deltas,
        converged,
    })
}

/// Independent integrations for a strictly increasing list of starting points.
pub fn ensemble(
    state: &SpectralState,
    x0s: &[f64],
    t_span: [f64; 2],
    n_terms: usize,
    opts: &IntegratorOptions,
) -> Result<Vec<Result<Trajectory>>> {
    if x0s.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Domain("initial positions must be strictly increasing".into()));
    }
    let l = state.domain().length();
    if let Some(bad) = x0s.iter().find(|&&x| !(x > 0.0 && x < l)) {
        return Err(Error::Domain(format!("initial position {bad} not inside (0, L)")));
    }
    Ok(x0s
        .par_iter()
        .map(|&x0| integrate(state, x0, t_span, n_terms, opts))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::BoxDomain;

    fn uniform(count: usize) -> SpectralState {
        SpectralState::uniform_full(BoxDomain::unit(), count, false).unwrap()
    }

    #[test]
    fn real_initial_state_has_no_velocity() {
        let s = uniform(200);
        for x in [0.05, 0.3, 0.71] {
            assert_eq!(velocity(&s, 0.0, x, 200).unwrap(), 0.0);
        }
    }

    #[test]
    fn eigenstates_do_not_move() {
        let s = SpectralState::eigenstate(BoxDomain::unit(), 2).unwrap();
        for t in [0.0, 0.1, 2.3] {
            for x in [0.1, 0.3, 0.8] {
                assert!(velocity(&s, t, x, 1).unwrap().abs() < 1e-12);
            }
        }
        let d = BoxDomain::unit();
        let traj = integrate(&s, 0.3, [0.0, d.period()], 1, &Default::default()).unwrap();
        assert!(traj.samples.iter().all(|p| (p.x - 0.3).abs() < 1e-14));
    }

    #[test]
    fn centre_is_a_velocity_zero() {
        let s = uniform(64);
        let d = BoxDomain::unit();
        for tau in [0.1, 0.37, 0.71] {
            let t = tau * d.period();
            assert!(velocity(&s, t, 0.5, 64).unwrap().abs() < 1e-9);
            let left = velocity(&s, t, 0.5 - 1e-3, 64).unwrap();
            let right = velocity(&s, t, 0.5 + 1e-3, 64).unwrap();
            assert!((left + right).abs() < 1e-9 * left.abs().max(1.0));
        }
    }

    #[test]
    fn velocity_errors() {
        let s = uniform(16);
        assert!(matches!(velocity(&s, 0.0, 0.0, 16), Err(Error::Domain(_))));
        assert!(matches!(velocity(&s, 0.0, 1.0, 16), Err(Error::Domain(_))));
        let e = SpectralState::eigenstate(BoxDomain::unit(), 2).unwrap();
        assert!(matches!(
            velocity(&e, 0.0, 0.5, 1),
            Err(Error::NodeSingularity { .. })
        ));
    }

    #[test]
    fn ladder_validation() {
        assert!(TruncationLadder::new(vec![4, 8]).is_err());
        assert!(TruncationLadder::new(vec![4, 8, 8]).is_err());
        assert!(TruncationLadder::new(vec![0, 8, 16]).is_err());
        assert_eq!(TruncationLadder::default().levels().len(), 10);
        assert_eq!(TruncationLadder::default().top(), 8192);
        let json = serde_json::to_string(&TruncationLadder::powers_of_two(1, 3).unwrap()).unwrap();
        assert_eq!(json, "[2,4,8]");
        assert!(serde_json::from_str::<TruncationLadder>("[3,2,1]").is_err());
    }

    #[test]
    fn integrate_rejects_bad_input() {
        let s = uniform(8);
        let o = IntegratorOptions::default();
        assert!(integrate(&s, 0.0, [0.0, 0.1], 8, &o).is_err());
        assert!(integrate(&s, 0.3, [0.1, 0.1], 8, &o).is_err());
        assert!(integrate(&s, 0.3, [0.0, 0.1], 9, &o).is_err());
        assert!(ensemble(&s, &[0.3, 0.2], [0.0, 0.1], 8, &o).is_err());
    }

    #[test]
    fn output_grid_spacing() {
        let s = uniform(8);
        let t = s.domain().period();
        let g = output_grid(&s, [0.0, t], &IntegratorOptions::default());
        assert_eq!(g.len(), 2049);
        assert_eq!(g[2048], t);
    }
}

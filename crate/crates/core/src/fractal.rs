//! Fractal-dimension estimates from curve-length growth across a truncation
//! ladder, and from the power-law decay of the coefficient spectrum.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::TimePoint;
use crate::dynamics::{integrate, IntegratorOptions, TruncationLadder};
use crate::error::{Error, Result};
use crate::spectral::SpectralState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMethod {
    Length,
    Spectrum,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FitFlags {
    /// Final-window slope below the saturation threshold.
    pub saturated: bool,
    /// Doubling the grid at the top level moved the length by 1% or more.
    pub under_resolved: bool,
    /// A length dropped by more than 1% from one level to the next.
    pub non_monotone: bool,
    /// Spectral exponent outside `1 < β ≤ 3`.
    pub out_of_regime: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FractalFit {
    pub method: FitMethod,
    /// Truncations (length method) or mode indices (spectrum method).
    #[serde(rename = "N_values")]
    pub n_values: Vec<f64>,
    /// Curve lengths, or `|c_n|²` for the spectrum method.
    pub lengths: Vec<f64>,
    /// Half-open index range `[start, end)` used in the regression.
    pub fit_window: [usize; 2],
    pub slope: f64,
    pub stderr: f64,
    #[serde(rename = "D_f")]
    pub d_f: f64,
    /// Spectral exponent, spectrum method only.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub beta: Option<f64>,
    pub flags: FitFlags,
}

/// Number of x samples for a truncation whose highest mode is `n_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridRule {
    pub points_per_mode: usize,
    pub min_points: usize,
}

impl Default for GridRule {
    fn default() -> Self {
        Self {
            points_per_mode: 8,
            min_points: 1001,
        }
    }
}

impl GridRule {
    pub fn points(&self, n_max: u64) -> usize {
        (self.points_per_mode as u64 * n_max).max(self.min_points as u64) as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    /// Regression window `[start, end)`; `None` is the upper half of the ladder.
    pub window: Option<[usize; 2]>,
    pub saturation_slope: f64,
    pub check_resolution: bool,
    /// Minimum nonzero coefficients for the spectrum method.
    pub min_spectrum_terms: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            window: None,
            saturation_slope: 0.05,
            check_resolution: true,
            min_spectrum_terms: 16,
        }
    }
}

/// What the length is measured on.
#[derive(Debug, Clone, PartialEq)]
pub enum LengthTarget {
    /// `ρ_t(x)` on the `(x, ρ)` plane.
    Density,
    /// `x_N(t)` on the normalized `(t/T, x/L)` plane, along every accepted step.
    Trajectory {
        x0: f64,
        t_span: [f64; 2],
        options: IntegratorOptions,
    },
}

/// Polyline length `Σ √(Δx² + Δy²)` with both coordinates taken as raw numbers.
pub fn curve_length(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::Domain(format!(
            "coordinate lengths differ: {} vs {}",
            xs.len(),
            ys.len()
        )));
    }
    if xs.len() < 2 {
        return Err(Error::TooFew {
            what: "curve length",
            need: 2,
            got: xs.len(),
        });
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("curve coordinates"));
    }
    Ok(xs
        .windows(2)
        .zip(ys.windows(2))
        .map(|(x, y)| (x[1] - x[0]).hypot(y[1] - y[0]))
        .sum())
}

/// Length of `ρ_t(x; N)` on a grid of `points` positions.
pub fn density_length(
    state: &SpectralState,
    time: TimePoint,
    n_terms: usize,
    points: usize,
) -> Result<f64> {
    let xs = state.domain().grid(points);
    let psi = state.at_time(time, n_terms)?.psi_grid(&xs)?;
    let rho: Vec<f64> = psi.iter().map(|p| p.norm_sqr()).collect();
    curve_length(&xs, &rho)
}

/// Length of a trajectory on the `(t/T, x/L)` plane.
pub fn trajectory_length(
    state: &SpectralState,
    x0: f64,
    t_span: [f64; 2],
    n_terms: usize,
    options: &IntegratorOptions,
) -> Result<f64> {
    let opts = IntegratorOptions {
        record_steps: true,
        ..options.clone()
    };
    let traj = integrate(state, x0, t_span, n_terms, &opts)?;
    let d = state.domain();
    let (inv_t, inv_l) = (1.0 / d.period(), 1.0 / d.length());
    let path = traj.path();
    let ts: Vec<f64> = path.iter().map(|s| s.t * inv_t).collect();
    let xs: Vec<f64> = path.iter().map(|s| s.x * inv_l).collect();
    curve_length(&ts, &xs)
}

/// Ordinary least squares `y = a + b x`; returns `(b, stderr(b))`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<(f64, f64)> {
    let n = xs.len();
    if n < 2 || ys.len() != n {
        return Err(Error::TooFew {
            what: "linear fit",
            need: 2,
            got: n.min(ys.len()),
        });
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Domain("linear fit needs distinct abscissae".into()));
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let stderr = if n > 2 {
        let ssr: f64 = xs
            .iter()
            .zip(ys)
            .map(|(x, y)| (y - my - slope * (x - mx)).powi(2))
            .sum();
        (ssr / (n - 2) as f64 / sxx).sqrt()
    } else {
        0.0
    };
    Ok((slope, stderr))
}

fn resolve_window(window: Option<[usize; 2]>, len: usize) -> Result<[usize; 2]> {
    let w = window.unwrap_or([len / 2, len]);
    if w[0] >= w[1] || w[1] > len || w[1] - w[0] < 2 {
        return Err(Error::Domain(format!(
            "fit window {w:?} invalid for {len} points"
        )));
    }
    Ok(w)
}

/// `D_f = 1 + slope` of `log10 𝓛` against `log10 N` over the ladder.
pub fn length_scaling_fit(
    state: &SpectralState,
    time: impl Into<TimePoint>,
    grid: GridRule,
    ladder: &TruncationLadder,
    target: &LengthTarget,
    opts: &FitOptions,
) -> Result<FractalFit> {
    let time = time.into();
    let levels = ladder.levels();
    if levels.len() < 4 {
        return Err(Error::TooFew {
            what: "length-scaling ladder",
            need: 4,
            got: levels.len(),
        });
    }
    state.check_truncation(ladder.top())?;
    let window = resolve_window(opts.window, levels.len())?;

    let length_at = |n: usize, points: usize| -> Result<f64> {
        match target {
            LengthTarget::Density => density_length(state, time, n, points),
            LengthTarget::Trajectory {
                x0,
                t_span,
                options,
            } => trajectory_length(state, *x0, *t_span, n, options),
        }
    };
    let lengths = levels
        .par_iter()
        .map(|&n| length_at(n, grid.points(state.max_mode(n))))
        .collect::<Result<Vec<f64>>>()?;

    let mut flags = FitFlags {
        non_monotone: lengths.windows(2).any(|w| w[1] < 0.99 * w[0]),
        ..FitFlags::default()
    };
    if opts.check_resolution && matches!(target, LengthTarget::Density) {
        let top = ladder.top();
        let points = grid.points(state.max_mode(top));
        let finer = length_at(top, 2 * points - 1)?;
        let coarse = *lengths.last().expect("ladder is never empty");
        flags.under_resolved = ((finer - coarse) / coarse).abs() >= 0.01;
    }

    let logn: Vec<f64> = levels.iter().map(|&n| (n as f64).log10()).collect();
    let logl: Vec<f64> = lengths.iter().map(|l| l.log10()).collect();
    let [a, b] = window;
    let (slope, stderr) = linear_fit(&logn[a..b], &logl[a..b])?;
    flags.saturated = slope < opts.saturation_slope;
    Ok(FractalFit {
        method: FitMethod::Length,
        n_values: levels.iter().map(|&n| n as f64).collect(),
        lengths,
        fit_window: window,
        slope,
        stderr,
        d_f: 1.0 + slope,
        beta: None,
        flags,
    })
}

/// `D_f = (5 − β)/2` from `|c_n|² ∼ n^{−β}` over the nonzero coefficients.
pub fn spectrum_dimension(state: &SpectralState, opts: &FitOptions) -> Result<FractalFit> {
    let (modes, power): (Vec<f64>, Vec<f64>) = state
        .terms()
        .iter()
        .filter(|t| t.c.norm_sqr() > 0.0)
        .map(|t| (t.n as f64, t.c.norm_sqr()))
        .unzip();
    if modes.len() < opts.min_spectrum_terms.max(2) {
        return Err(Error::TooFew {
            what: "spectrum fit",
            need: opts.min_spectrum_terms.max(2),
            got: modes.len(),
        });
    }
    let window = opts.window.map_or(Ok([0, modes.len()]), |w| {
        resolve_window(Some(w), modes.len())
    })?;
    let [a, b] = window;
    let logn: Vec<f64> = modes[a..b].iter().map(|n| n.log10()).collect();
    let logp: Vec<f64> = power[a..b].iter().map(|p| p.log10()).collect();
    let (slope, stderr) = linear_fit(&logn, &logp)?;
    let beta = -slope;
    Ok(FractalFit {
        method: FitMethod::Spectrum,
        n_values: modes,
        lengths: power,
        fit_window: window,
        slope,
        stderr,
        d_f: (5.0 - beta) / 2.0,
        beta: Some(beta),
        flags: FitFlags {
            out_of_regime: !(beta > 1.0 && beta <= 3.0),
            ..FitFlags::default()
        },
    })
}

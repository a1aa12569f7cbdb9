//! The six run commands. Each writes its files under an output directory
//! and finishes with `run.json`, also when it fails part way.

use std::path::Path;

use serde::Serialize;
use serde_json::json;

use crate::domain::{BoxDomain, TimePoint};
use crate::dynamics::{ensemble, integrate, integrate_limit, Trajectory, TruncationLadder};
use crate::error::{Error, Result};
use crate::fractal::{length_scaling_fit, spectrum_dimension, FractalFit, LengthTarget};
use crate::io::{
    coefficients_text, energy_csv, fmt_f64, profile_csv, trajectories_csv, write_bytes, write_json,
    write_text, CarpetGrid, RunConfig, TimeSpec,
};
use crate::observables::{density_phase, energy_along, ensemble_energy, ensemble_energy_quadrature};
use crate::spectral::SpectralState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    BuildState,
    Carpet,
    Trajectories,
    Profile,
    Energy,
    Fractal,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::BuildState => "build-state",
            Command::Carpet => "carpet",
            Command::Trajectories => "trajectories",
            Command::Profile => "profile",
            Command::Energy => "energy",
            Command::Fractal => "fractal",
        }
    }
}

/// Files written by a command, relative to the output directory.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Outputs {
    pub files: Vec<String>,
    pub failures: Vec<String>,
}

impl Outputs {
    fn text(&mut self, out: &Path, name: String, text: &str) -> Result<()> {
        write_text(&out.join(&name), text)?;
        self.files.push(name);
        Ok(())
    }

    fn json<T: Serialize>(&mut self, out: &Path, name: String, value: &T) -> Result<()> {
        write_json(&out.join(&name), value)?;
        self.files.push(name);
        Ok(())
    }
}

/// Runs `command` and writes `run.json`. Returns the first numerical
/// failure, if any, after every output that could be produced is on disk.
pub fn run(command: Command, cfg: &RunConfig, out: &Path) -> Result<Outputs> {
    let mut outputs = Outputs::default();
    let result = execute(command, cfg, out, &mut outputs);
    let resolved = resolved(cfg);
    let status = match &result {
        Ok(()) if outputs.failures.is_empty() => json!("ok"),
        Ok(()) => json!({ "partial": outputs.failures }),
        Err(e) => json!({ "error": e.to_string() }),
    };
    let doc = json!({
        "command": command.name(),
        "version": env!("CARGO_PKG_VERSION"),
        "deterministic": true,
        "config": cfg,
        "resolved": resolved,
        "status": status,
        "outputs": outputs.files,
    });
    write_json(&out.join("run.json"), &doc)?;
    result?;
    if outputs.failures.is_empty() {
        Ok(outputs)
    } else {
        Err(Error::Partial(outputs.failures))
    }
}

fn resolved(cfg: &RunConfig) -> serde_json::Value {
    let Ok(state) = cfg.build_state() else {
        return serde_json::Value::Null;
    };
    let n = cfg.truncation_for(&state).ok();
    json!({
        "period": state.domain().period(),
        "state": state.label(),
        "terms": state.len(),
        "truncation": n,
        "max_mode": n.map(|n| state.max_mode(n)),
        "grid_points": n.map(|n| cfg.grid_for(&state, n).len()),
        "ladder": cfg.ladder_or_default(&state).ok(),
    })
}

fn execute(command: Command, cfg: &RunConfig, out: &Path, o: &mut Outputs) -> Result<()> {
    let state = cfg.build_state()?;
    match command {
        Command::BuildState => build_state(cfg, &state, out, o),
        Command::Carpet => carpet(cfg, &state, out, o),
        Command::Trajectories => trajectories(cfg, &state, out, o),
        Command::Profile => profile(cfg, &state, out, o),
        Command::Energy => energy(cfg, &state, out, o),
        Command::Fractal => fractal(cfg, &state, out, o),
    }
}

fn resolve_all(specs: &[TimeSpec], d: &BoxDomain) -> Result<Vec<TimePoint>> {
    specs.iter().map(|s| s.resolve(d)).collect()
}

fn span(a: &TimeSpec, b: &TimeSpec, d: &BoxDomain) -> Result<[f64; 2]> {
    let span = [a.resolve(d)?.t, b.resolve(d)?.t];
    if span[1] <= span[0] {
        return Err(Error::Config(format!(
            "time span '{}' .. '{}' is empty",
            a.as_str(),
            b.as_str()
        )));
    }
    Ok(span)
}

fn build_state(cfg: &RunConfig, state: &SpectralState, out: &Path, o: &mut Outputs) -> Result<()> {
    let n = cfg.truncation_for(state)?;
    o.text(out, "coefficients.txt".into(), &coefficients_text(state))?;
    let modes: Vec<u64> = state.terms().iter().map(|t| t.n).collect();
    let summary = json!({
        "state": state.label(),
        "terms": state.len(),
        "n_max": state.max_mode(state.len()),
        "modes": modes,
        "truncation": n,
        "norm_sqr": state.norm_sqr(n),
        "mean_energy": ensemble_energy(state, n)?,
    });
    o.json(out, "state.json".into(), &summary)
}

/// Row times from `a` to `b`, exact fractions of `T` when both ends are.
fn carpet_times(cfg: &RunConfig, d: &BoxDomain) -> Result<Vec<TimePoint>> {
    let c = &cfg.carpet;
    if c.rows < 2 {
        return Err(Error::Config("carpet needs at least 2 rows".into()));
    }
    let a = c.t_start.resolve(d)?;
    let b = c.t_end.resolve(d)?;
    let r = (c.rows - 1) as i128;
    if let (Some(fa), Some(fb)) = (a.fraction_of_period, b.fraction_of_period) {
        let den = fa.den as i128 * fb.den as i128 * r;
        if let Ok(den) = u64::try_from(den) {
            return (0..=r)
                .map(|k| {
                    let num = fa.num as i128 * fb.den as i128 * (r - k) + fb.num as i128 * fa.den as i128 * k;
                    let num = i64::try_from(num).map_err(|_| Error::Config("carpet times overflow".into()))?;
                    TimePoint::rational(d, num, den)
                })
                .collect();
        }
    }
    Ok((0..=r)
        .map(|k| {
            let s = k as f64 / r as f64;
            TimePoint::at(if k == r { b.t } else { a.t + s * (b.t - a.t) })
        })
        .collect())
}

fn carpet(cfg: &RunConfig, state: &SpectralState, out: &Path, o: &mut Outputs) -> Result<()> {
    let n = cfg.truncation_for(state)?;
    let xs = cfg.grid_for(state, n);
    let times = carpet_times(cfg, state.domain())?;
    let grid = CarpetGrid::compute(state, n, &xs, &times)?;
    let meta = [
        ("state", state.label().name().to_string()),
        ("N", n.to_string()),
        ("period", fmt_f64(state.domain().period())),
    ];
    o.text(out, "carpet.csv".into(), &grid.to_csv(&meta))?;
    if cfg.carpet.binary {
        write_bytes(&out.join("carpet.f64"), &grid.to_bytes())?;
        o.files.push("carpet.f64".into());
        o.json(out, "carpet.json".into(), &grid.sidecar("carpet.f64"))?;
    }
    Ok(())
}

fn trajectories(cfg: &RunConfig, state: &SpectralState, out: &Path, o: &mut Outputs) -> Result<()> {
    let n = cfg.truncation_for(state)?;
    let tc = &cfg.trajectories;
    let t_span = span(&tc.t_start, &tc.t_end, state.domain())?;
    let results = ensemble(state, &tc.x0, t_span, n, &cfg.integrator)?;
    let mut kept: Vec<Trajectory> = Vec::new();
    for r in results {
        match r {
            Ok(t) => kept.push(t),
            Err(Error::Stalled { partial, .. }) => {
                o.failures.push(format!("trajectory from x0={} stalled", partial.x0));
                kept.push(*partial);
            }
            Err(e) => o.failures.push(e.to_string()),
        }
    }
    let meta = [
        ("N", n.to_string()),
        ("t_start", fmt_f64(t_span[0])),
        ("t_end", fmt_f64(t_span[1])),
        ("period", fmt_f64(state.domain().period())),
    ];
    let refs: Vec<&Trajectory> = kept.iter().collect();
    o.text(out, "trajectories.csv".into(), &trajectories_csv(state, &refs, &meta))?;
    let events: Vec<_> = kept
        .iter()
        .map(|t| {
            json!({
                "x0": t.x0,
                "rejected_steps": t.rejected_steps,
                "node_events": t.node_events,
                "wall_events": t.wall_events,
            })
        })
        .collect();
    o.json(out, "trajectories.json".into(), &events)?;

    if tc.limit {
        let ladder = cfg.ladder_or_default(state)?;
        let mut report = Vec::new();
        let mut levels: Vec<Trajectory> = Vec::new();
        for &x0 in &tc.x0 {
            match integrate_limit(state, x0, t_span, &ladder, &cfg.integrator) {
                Ok(lim) => {
                    report.push(json!({
                        "x0": x0,
                        "ladder": lim.ladder,
                        "deltas": lim.deltas,
                        "converged": lim.converged,
                    }));
                    levels.extend(lim.per_level);
                }
                Err(e) if e.is_numerical() => o.failures.push(format!("limit from x0={x0}: {e}")),
                Err(e) => return Err(e),
            }
        }
        let refs: Vec<&Trajectory> = levels.iter().collect();
        o.text(out, "limit_trajectories.csv".into(), &trajectories_csv(state, &refs, &meta))?;
        o.json(out, "limit.json".into(), &report)?;
    }
    Ok(())
}

fn profile(cfg: &RunConfig, state: &SpectralState, out: &Path, o: &mut Outputs) -> Result<()> {
    let n = cfg.truncation_for(state)?;
    let xs = cfg.grid_for(state, n);
    let times = if cfg.times.is_empty() {
        vec![TimePoint::at(0.0)]
    } else {
        resolve_all(&cfg.times, state.domain())?
    };
    for (i, &t) in times.iter().enumerate() {
        let p = density_phase(state, t, &xs, n)?;
        o.text(out, format!("profile_{i:03}.csv"), &profile_csv(state, n, &p))?;
    }
    Ok(())
}

fn energy(cfg: &RunConfig, state: &SpectralState, out: &Path, o: &mut Outputs) -> Result<()> {
    let n = cfg.truncation_for(state)?;
    let ec = &cfg.energy;
    let d = state.domain();
    let t_span = span(&ec.t_start, &ec.t_end, d)?;

    let levels = if ec.truncations.is_empty() {
        cfg.ladder_or_default(state)?.levels().to_vec()
    } else {
        ec.truncations.clone()
    };
    let t0 = ec.t_start.resolve(d)?;
    let mut table = String::new();
    table.push_str(&format!("# state={}\n# t={}\n", state.label().name(), fmt_f64(t0.t)));
    table.push_str(if ec.quadrature { "N,E_spectral,E_quadrature\n" } else { "N,E_spectral\n" });
    for &k in &levels {
        let e = ensemble_energy(state, k)?;
        table.push_str(&format!("{k},{}", fmt_f64(e)));
        if ec.quadrature {
            table.push(',');
            table.push_str(&fmt_f64(ensemble_energy_quadrature(state, t0, k, None)?));
        }
        table.push('\n');
    }
    o.text(out, "energy_table.csv".into(), &table)?;

    for (i, &x0) in ec.x0.iter().enumerate() {
        let traj = match integrate(state, x0, t_span, n, &cfg.integrator) {
            Ok(t) => t,
            Err(Error::Stalled { partial, .. }) => {
                o.failures.push(format!("trajectory from x0={x0} stalled"));
                *partial
            }
            Err(e) => return Err(e),
        };
        let trace = energy_along(&traj, state)?;
        o.text(out, format!("energy_{i:03}.csv"), &energy_csv(state, &trace))?;
    }
    Ok(())
}

fn fractal(cfg: &RunConfig, state: &SpectralState, out: &Path, o: &mut Outputs) -> Result<()> {
    let fc = &cfg.fractal;
    let d = state.domain();
    let ladder = || cfg.ladder_or_default(state);
    for (i, t) in resolve_all(&fc.density_times, d)?.into_iter().enumerate() {
        let ladder = ladder()?;
        let fit = length_scaling_fit(state, t, cfg.grid, &ladder, &LengthTarget::Density, &fc.fit)?;
        o.json(out, format!("fractal_density_{i:03}.json"), &fit)?;
    }
    if !fc.trajectory_x0.is_empty() {
        let t_span = span(&fc.trajectory_t_start, &fc.trajectory_t_end, d)?;
        let tl: TruncationLadder = match &fc.trajectory_ladder {
            Some(l) => l.clone(),
            None => ladder()?,
        };
        for (i, &x0) in fc.trajectory_x0.iter().enumerate() {
            let target = LengthTarget::Trajectory {
                x0,
                t_span,
                options: cfg.integrator.clone(),
            };
            let fit: FractalFit = match length_scaling_fit(state, 0.0, cfg.grid, &tl, &target, &fc.trajectory_fit) {
                Ok(f) => f,
                Err(e) if e.is_numerical() => {
                    o.failures.push(format!("trajectory fit from x0={x0}: {e}"));
                    continue;
                }
                Err(e) => return Err(e),
            };
            o.json(out, format!("fractal_trajectory_{i:03}.json"), &fit)?;
        }
    }
    if fc.spectrum {
        o.json(out, "fractal_spectrum.json".into(), &spectrum_dimension(state, &fc.fit)?)?;
    }
    Ok(())
}

//! Run configuration and the on-disk formats: coefficient files, CSV tables
//! with `#` metadata headers, the flat binary carpet and JSON documents.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::domain::{BoxDomain, TimePoint};
use crate::dynamics::{IntegratorOptions, Trajectory, TruncationLadder};
use crate::error::{Error, Result};
use crate::fractal::{FitOptions, GridRule};
use crate::observables::{EnergyTrace, FieldProfile, PotentialValue};
use crate::spectral::{SpectralState, StateLabel, Term};

/// Formats a float with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else if v.is_nan() {
        "nan".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

/// A time as written in config files.
///
/// * `rational p/q`: exactly `p/q` periods,
/// * `irrational sqrt2`: `T/√2`,
/// * `period τ`: `τ` periods as a float,
/// * a bare number: absolute time.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct TimeSpec(String);

impl TimeSpec {
    pub fn parse(s: &str) -> Result<Self> {
        let spec = TimeSpec(s.trim().to_string());
        spec.resolve(&BoxDomain::unit())?;
        Ok(spec)
    }

    pub fn resolve(&self, domain: &BoxDomain) -> Result<TimePoint> {
        let bad = || Error::Config(format!("unrecognised time spec '{}'", self.0));
        let mut words = self.0.split_whitespace();
        match (words.next(), words.next(), words.next()) {
            (Some("rational"), Some(frac), None) => {
                let (p, q) = frac.split_once('/').ok_or_else(bad)?;
                let p: i64 = p.trim().parse().map_err(|_| bad())?;
                let q: u64 = q.trim().parse().map_err(|_| bad())?;
                TimePoint::rational(domain, p, q).map_err(|_| bad())
            }
            (Some("irrational"), Some("sqrt2"), None) => {
                Ok(TimePoint::at(domain.period() / 2f64.sqrt()))
            }
            (Some("period"), Some(tau), None) => {
                let tau: f64 = tau.parse().map_err(|_| bad())?;
                tau.is_finite()
                    .then(|| TimePoint::periods(domain, tau))
                    .ok_or_else(bad)
            }
            (Some(t), None, None) => {
                let t: f64 = t.parse().map_err(|_| bad())?;
                t.is_finite().then(|| TimePoint::at(t)).ok_or_else(bad)
            }
            _ => Err(bad()),
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for TimeSpec {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        TimeSpec::parse(&s)
    }
}

impl From<TimeSpec> for String {
    fn from(t: TimeSpec) -> Self {
        t.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DomainConfig {
    pub length: f64,
    pub mass: f64,
    pub hbar: f64,
}

impl Default for DomainConfig {
    fn default() -> Self {
        Self {
            length: 1.0,
            mass: 1.0,
            hbar: 1.0,
        }
    }
}

impl DomainConfig {
    pub fn build(&self) -> Result<BoxDomain> {
        BoxDomain::new(self.length, self.mass, self.hbar)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StateSpec {
    Uniform {
        #[serde(default)]
        x1: Option<f64>,
        #[serde(default)]
        x2: Option<f64>,
        n_max: u64,
        #[serde(default)]
        normalize: bool,
    },
    Weierstrass {
        s: f64,
        base: u64,
        levels: u32,
        #[serde(default = "yes")]
        normalize: bool,
    },
    Triangle {
        n_max: u64,
    },
    Parabola {
        n_max: u64,
    },
    Eigenstate {
        n: u64,
    },
    Custom {
        path: PathBuf,
    },
}

fn yes() -> bool {
    true
}

impl StateSpec {
    pub fn build(&self, domain: BoxDomain) -> Result<SpectralState> {
        match self {
            StateSpec::Uniform {
                x1,
                x2,
                n_max,
                normalize,
            } => SpectralState::uniform(
                domain,
                x1.unwrap_or(0.0),
                x2.unwrap_or(domain.length()),
                *n_max,
                *normalize,
            ),
            StateSpec::Weierstrass {
                s,
                base,
                levels,
                normalize,
            } => SpectralState::weierstrass(domain, *s, *base, *levels, *normalize),
            StateSpec::Triangle { n_max } => SpectralState::triangle(domain, *n_max),
            StateSpec::Parabola { n_max } => SpectralState::parabola(domain, *n_max),
            StateSpec::Eigenstate { n } => SpectralState::eigenstate(domain, *n),
            StateSpec::Custom { path } => {
                SpectralState::new(domain, read_coefficients(path)?, StateLabel::Custom)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CarpetConfig {
    pub t_start: TimeSpec,
    pub t_end: TimeSpec,
    /// Number of time rows, endpoints included.
    pub rows: usize,
    /// Also write `carpet.f64` with a JSON sidecar.
    pub binary: bool,
}

impl Default for CarpetConfig {
    fn default() -> Self {
        Self {
            t_start: TimeSpec("0".into()),
            t_end: TimeSpec("rational 1/1".into()),
            rows: 129,
            binary: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrajectoryConfig {
    pub x0: Vec<f64>,
    pub t_start: TimeSpec,
    pub t_end: TimeSpec,
    /// Also run every starting point across the ladder.
    pub limit: bool,
}

impl Default for TrajectoryConfig {
    fn default() -> Self {
        Self {
            x0: vec![0.1, 0.3, 0.5],
            t_start: TimeSpec("0".into()),
            t_end: TimeSpec("rational 1/1".into()),
            limit: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnergyConfig {
    pub x0: Vec<f64>,
    pub t_start: TimeSpec,
    pub t_end: TimeSpec,
    /// Truncations for the `Ē(N)` table; empty means the ladder.
    pub truncations: Vec<usize>,
    /// Add the quadrature cross-check column.
    pub quadrature: bool,
}

impl Default for EnergyConfig {
    fn default() -> Self {
        Self {
            x0: vec![0.3],
            t_start: TimeSpec("0".into()),
            t_end: TimeSpec("rational 1/1".into()),
            truncations: Vec::new(),
            quadrature: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FractalConfig {
    pub density_times: Vec<TimeSpec>,
    pub trajectory_x0: Vec<f64>,
    pub trajectory_t_start: TimeSpec,
    pub trajectory_t_end: TimeSpec,
    /// Ladder for trajectory fits; falls back to the run ladder.
    pub trajectory_ladder: Option<TruncationLadder>,
    pub spectrum: bool,
    pub fit: FitOptions,
    pub trajectory_fit: FitOptions,
}

impl Default for FractalConfig {
    fn default() -> Self {
        Self {
            density_times: vec![TimeSpec("irrational sqrt2".into())],
            trajectory_x0: Vec::new(),
            trajectory_t_start: TimeSpec("0".into()),
            trajectory_t_end: TimeSpec("rational 1/2".into()),
            trajectory_ladder: None,
            spectrum: true,
            fit: FitOptions::default(),
            trajectory_fit: FitOptions {
                window: None,
                check_resolution: false,
                ..FitOptions::default()
            },
        }
    }
}

/// Everything a command needs; re-serialised verbatim into `run.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub domain: DomainConfig,
    pub state: StateSpec,
    #[serde(default)]
    pub ladder: Option<TruncationLadder>,
    /// Truncation used by single-level commands; defaults to every stored term.
    #[serde(default)]
    pub truncation: Option<usize>,
    #[serde(default)]
    pub times: Vec<TimeSpec>,
    /// Explicit x-grid size; otherwise the grid rule decides.
    #[serde(default)]
    pub grid_points: Option<usize>,
    #[serde(default)]
    pub grid: GridRule,
    #[serde(default)]
    pub integrator: IntegratorOptions,
    #[serde(default)]
    pub carpet: CarpetConfig,
    #[serde(default)]
    pub trajectories: TrajectoryConfig,
    #[serde(default)]
    pub energy: EnergyConfig,
    #[serde(default)]
    pub fractal: FractalConfig,
    /// Used when no output directory is given on the command line.
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        if path.extension().is_some_and(|e| e == "json") {
            return Self::from_run_json(&text).map_err(|e| Error::Config(e.to_string()));
        }
        Self::from_toml(&text)
    }

    /// Rebuilds a config from an emitted `run.json`.
    pub fn from_run_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Envelope {
            config: RunConfig,
        }
        let env: Envelope = serde_json::from_str(text)?;
        Ok(env.config)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn build_domain(&self) -> Result<BoxDomain> {
        self.domain.build()
    }

    pub fn build_state(&self) -> Result<SpectralState> {
        self.state.build(self.build_domain()?)
    }

    pub fn ladder_or_default(&self, state: &SpectralState) -> Result<TruncationLadder> {
        match &self.ladder {
            Some(l) => Ok(l.clone()),
            None => {
                // powers of two up to what the state holds, plus the top
                let len = state.len();
                let start = if len >= 64 { 4 } else { 1 };
                let mut levels: Vec<usize> = (start..=13).map(|k| 1usize << k).filter(|&n| n <= len).collect();
                if levels.last() != Some(&len) {
                    levels.push(len);
                }
                TruncationLadder::new(levels)
            }
        }
    }

    pub fn truncation_for(&self, state: &SpectralState) -> Result<usize> {
        let n = self.truncation.unwrap_or(state.len());
        state.check_truncation(n)?;
        Ok(n)
    }

    pub fn grid_for(&self, state: &SpectralState, n_terms: usize) -> Vec<f64> {
        let points = self
            .grid_points
            .unwrap_or_else(|| self.grid.points(state.max_mode(n_terms)));
        state.domain().grid(points)
    }
}

fn create(path: &Path) -> Result<fs::File> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::File::create(path).map_err(|e| Error::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    create(path)?
        .write_all(text.as_bytes())
        .map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

/// Reads `n re im` lines; `#` starts a comment. Modes must strictly increase.
pub fn read_coefficients(path: &Path) -> Result<Vec<Term>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_coefficients(&text, path)
}

pub fn parse_coefficients(text: &str, path: &Path) -> Result<Vec<Term>> {
    let err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut terms: Vec<Term> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let [n, re, im] = fields[..] else {
            return Err(err(i + 1, format!("expected 3 fields, got {}", fields.len())));
        };
        let n: u64 = n
            .parse()
            .map_err(|_| err(i + 1, format!("bad mode index '{n}'")))?;
        let re: f64 = re
            .parse()
            .map_err(|_| err(i + 1, format!("bad real part '{re}'")))?;
        let im: f64 = im
            .parse()
            .map_err(|_| err(i + 1, format!("bad imaginary part '{im}'")))?;
        if n == 0 {
            return Err(err(i + 1, "mode index must be >= 1".into()));
        }
        if let Some(prev) = terms.last() {
            if n <= prev.n {
                return Err(err(
                    i + 1,
                    format!("mode {n} does not increase on previous {}", prev.n),
                ));
            }
        }
        if !(re.is_finite() && im.is_finite()) {
            return Err(err(i + 1, "non-finite coefficient".into()));
        }
        terms.push(Term {
            n,
            c: num_complex::Complex64::new(re, im),
        });
    }
    if terms.is_empty() {
        return Err(err(0, "no coefficients".into()));
    }
    Ok(terms)
}

pub fn coefficients_text(state: &SpectralState) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# state={}", state.label().name());
    let _ = writeln!(out, "# terms={}", state.len());
    let _ = writeln!(out, "# n re(c_n) im(c_n)");
    for t in state.terms() {
        let _ = writeln!(out, "{} {} {}", t.n, fmt_f64(t.c.re), fmt_f64(t.c.im));
    }
    out
}

fn header(out: &mut String, meta: &[(&str, String)]) {
    for (k, v) in meta {
        let _ = writeln!(out, "# {k}={v}");
    }
}

/// All trajectories of an ensemble in one table: `t,x,v,N,x0`.
pub fn trajectories_csv(state: &SpectralState, trajs: &[&Trajectory], meta: &[(&str, String)]) -> String {
    let mut out = String::new();
    header(&mut out, &[("state", state.label().name().to_string())]);
    header(&mut out, meta);
    out.push_str("t,x,v,N,x0\n");
    for tr in trajs {
        for s in &tr.samples {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                fmt_f64(s.t),
                fmt_f64(s.x),
                fmt_f64(s.v),
                tr.truncation,
                fmt_f64(tr.x0)
            );
        }
    }
    out
}

fn potential_field(q: &PotentialValue) -> String {
    fmt_f64(q.value())
}

/// `x,rho,S,Q`; masked phases are empty, singular potentials are `±inf`.
pub fn profile_csv(state: &SpectralState, n_terms: usize, p: &FieldProfile) -> String {
    let mut out = String::new();
    header(
        &mut out,
        &[
            ("state", state.label().name().to_string()),
            ("N", n_terms.to_string()),
            ("t", fmt_f64(p.t)),
            ("points", p.x.len().to_string()),
        ],
    );
    out.push_str("x,rho,S,Q\n");
    for i in 0..p.x.len() {
        let s = p.phase[i].map(fmt_f64).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{}",
            fmt_f64(p.x[i]),
            fmt_f64(p.rho[i]),
            s,
            potential_field(&p.potential[i])
        );
    }
    out
}

/// `t,x,K,Q,E`.
pub fn energy_csv(state: &SpectralState, trace: &EnergyTrace) -> String {
    let mut out = String::new();
    header(
        &mut out,
        &[
            ("state", state.label().name().to_string()),
            ("N", trace.truncation.to_string()),
            ("x0", fmt_f64(trace.x0)),
        ],
    );
    out.push_str("t,x,K,Q,E\n");
    for e in &trace.samples {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            fmt_f64(e.t),
            fmt_f64(e.x),
            fmt_f64(e.kinetic),
            potential_field(&e.potential),
            potential_field(&e.total)
        );
    }
    out
}

/// Density over a space-time grid, one row per time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CarpetGrid {
    pub x_grid: Vec<f64>,
    pub t_grid: Vec<f64>,
    pub rho: Vec<Vec<f64>>,
}

impl CarpetGrid {
    pub fn compute(state: &SpectralState, n_terms: usize, xs: &[f64], times: &[TimePoint]) -> Result<Self> {
        let rho = times
            .iter()
            .map(|&t| {
                Ok(state
                    .at_time(t, n_terms)?
                    .psi_grid(xs)?
                    .iter()
                    .map(|p| p.norm_sqr())
                    .collect())
            })
            .collect::<Result<Vec<Vec<f64>>>>()?;
        Ok(Self {
            x_grid: xs.to_vec(),
            t_grid: times.iter().map(|t| t.t).collect(),
            rho,
        })
    }

    /// Header row `t,<x values>` then `t,<rho values>` per time.
    pub fn to_csv(&self, meta: &[(&str, String)]) -> String {
        let mut out = String::new();
        header(&mut out, meta);
        header(
            &mut out,
            &[
                ("rows", self.t_grid.len().to_string()),
                ("cols", self.x_grid.len().to_string()),
                ("layout", "first row holds x; first column holds t".to_string()),
            ],
        );
        out.push('t');
        for x in &self.x_grid {
            out.push(',');
            out.push_str(&fmt_f64(*x));
        }
        out.push('\n');
        for (t, row) in self.t_grid.iter().zip(&self.rho) {
            out.push_str(&fmt_f64(*t));
            for r in row {
                out.push(',');
                out.push_str(&fmt_f64(*r));
            }
            out.push('\n');
        }
        out
    }

    /// Row-major little-endian `f64` values.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.rho
            .iter()
            .flatten()
            .flat_map(|v| v.to_le_bytes())
            .collect()
    }

    pub fn sidecar(&self, binary_name: &str) -> serde_json::Value {
        serde_json::json!({
            "file": binary_name,
            "dtype": "float64",
            "byte_order": "little",
            "order": "row-major",
            "shape": [self.t_grid.len(), self.x_grid.len()],
            "x_grid": self.x_grid,
            "t_grid": self.t_grid,
        })
    }
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    create(path)?.write_all(bytes).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn time_specs() {
        let d = BoxDomain::unit();
        let t = TimeSpec::parse("rational 7/10").unwrap().resolve(&d).unwrap();
        assert_eq!(t.fraction_of_period.unwrap().num, 7);
        let t = TimeSpec::parse("irrational sqrt2").unwrap().resolve(&d).unwrap();
        assert_eq!(t.t, d.period() / 2f64.sqrt());
        let t = TimeSpec::parse("period 0.25").unwrap().resolve(&d).unwrap();
        assert_eq!(t.t, 0.25 * d.period());
        assert_eq!(TimeSpec::parse("0.05").unwrap().resolve(&d).unwrap().t, 0.05);
        for bad in ["rational 1/0", "irrational pi", "soon", "rational x/2", "inf"] {
            assert!(TimeSpec::parse(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn coefficient_parsing() {
        let p = Path::new("mem");
        let terms = parse_coefficients("# header\n1 0.5 0\n3 0.25 -0.1 # trailing\n\n", p).unwrap();
        assert_eq!(terms.len(), 2);
        assert_eq!(terms[1].c.im, -0.1);
        assert!(matches!(
            parse_coefficients("3 1 0\n2 1 0\n", p),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(parse_coefficients("0 1 0\n", p).is_err());
        assert!(parse_coefficients("1 1\n", p).is_err());
        assert!(parse_coefficients("1 nan 0\n", p).is_err());
        assert!(parse_coefficients("# nothing\n", p).is_err());
    }

    #[test]
    fn coefficient_file_round_trip() {
        let s = SpectralState::weierstrass(BoxDomain::unit(), 0.7, 3, 4, true).unwrap();
        let back = parse_coefficients(&coefficients_text(&s), Path::new("mem")).unwrap();
        assert_eq!(back, s.terms());
    }

    #[test]
    fn config_round_trip() {
        let text = r#"
            ladder = [16, 32, 64, 128]
            times = ["rational 7/10", "irrational sqrt2"]

            [state]
            kind = "uniform"
            n_max = 255

            [integrator]
            tol_step = 1e-7
        "#;
        let cfg = RunConfig::from_toml(text).unwrap();
        assert_eq!(cfg.integrator.tol_step, 1e-7);
        assert_eq!(cfg.integrator.samples_per_period, 2048);
        let again = RunConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(cfg, again);
        let json = serde_json::json!({ "config": cfg });
        assert_eq!(RunConfig::from_run_json(&json.to_string()).unwrap(), cfg);
    }

    #[test]
    fn config_errors() {
        assert!(RunConfig::from_toml("[state]\nkind = \"blob\"\n").is_err());
        assert!(RunConfig::from_toml("times = [\"later\"]\n[state]\nkind = \"triangle\"\nn_max = 9\n").is_err());
        assert!(RunConfig::from_toml("ladder = [4, 2, 1]\n[state]\nkind = \"triangle\"\nn_max = 9\n").is_err());
    }

    #[test]
    fn float_format_has_17_digits() {
        assert_eq!(fmt_f64(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt_f64(f64::NEG_INFINITY), "-inf");
        let v = std::f64::consts::PI / 7.0;
        assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
    }
}

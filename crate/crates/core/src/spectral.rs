//! Spectral states: finite expansions over the box eigenbasis.
//!
//! Every wavefunction in the crate is a [`SpectralState`], a list of
//! `(n, c_n)` pairs with strictly increasing mode index. Evaluation always
//! uses the first `N` stored terms with their stored coefficients, so a
//! state built once at a large cutoff gives every truncation of the same
//! coefficient sequence.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{frac_product, sin_cos_turns, BoxDomain, TimePoint};
use crate::error::{Error, Result};

/// Terms between direct `sin_cos` refreshes of the mode-stepping recurrence.
const BLOCK: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub n: u64,
    pub c: Complex64,
}

/// Where a state's coefficients came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StateLabel {
    Uniform { x1: f64, x2: f64 },
    Weierstrass { s: f64, base: u64, levels: u32 },
    Triangle,
    Parabola,
    Custom,
}

impl StateLabel {
    pub fn name(&self) -> &'static str {
        match self {
            StateLabel::Uniform { .. } => "uniform",
            StateLabel::Weierstrass { .. } => "weierstrass",
            StateLabel::Triangle => "triangle",
            StateLabel::Parabola => "parabola",
            StateLabel::Custom => "custom",
        }
    }
}

/// `Ψ`, `∂Ψ/∂x` and `∂²Ψ/∂x²` at one point, all from termwise derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WavefieldSample {
    pub psi: Complex64,
    pub dpsi: Complex64,
    pub d2psi: Complex64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralState {
    domain: BoxDomain,
    terms: Vec<Term>,
    label: StateLabel,
    /// Constant added to every `E_n`; only produces a global phase.
    #[serde(default)]
    energy_offset: f64,
}

impl SpectralState {
    pub fn new(domain: BoxDomain, terms: Vec<Term>, label: StateLabel) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::Domain("state needs at least one term".into()));
        }
        let mut prev = 0u64;
        for t in &terms {
            if t.n <= prev {
                return Err(Error::Domain(format!(
                    "mode indices must be >= 1 and strictly increasing (got {} after {})",
                    t.n, prev
                )));
            }
            if !(t.c.re.is_finite() && t.c.im.is_finite()) {
                return Err(Error::NonFinite("state coefficients"));
            }
            prev = t.n;
        }
        Ok(Self {
            domain,
            terms,
            label,
            energy_offset: 0.0,
        })
    }

    /// Single eigenstate `φ_n` with unit coefficient.
    pub fn eigenstate(domain: BoxDomain, n: u64) -> Result<Self> {
        Self::new(
            domain,
            vec![Term {
                n,
                c: Complex64::new(1.0, 0.0),
            }],
            StateLabel::Custom,
        )
    }

    /// Uniform density `1/√ℓ` on `(x1, x2)`, expanded up to mode `n_max`.
    ///
    /// Exactly vanishing coefficients (all even modes for the full box) are
    /// dropped, so the stored term count is the number of surviving modes.
    pub fn uniform(
        domain: BoxDomain,
        x1: f64,
        x2: f64,
        n_max: u64,
        normalize: bool,
    ) -> Result<Self> {
        let l = domain.length();
        if !(0.0 <= x1 && x1 < x2 && x2 <= l) {
            return Err(Error::Domain(format!(
                "need 0 <= x1 < x2 <= L, got x1={x1}, x2={x2}, L={l}"
            )));
        }
        if n_max < 1 {
            return Err(Error::Domain("n_max must be >= 1".into()));
        }
        let width = x2 - x1;
        let scale = (2.0 / l).sqrt() / width.sqrt() * l / PI;
        let (u1, u2) = (0.5 * x1 / l, 0.5 * x2 / l);
        let terms = (1..=n_max)
            .filter_map(|n| {
                let nf = n as f64;
                let c1 = sin_cos_turns(frac_product(nf, u1)).1;
                let c2 = sin_cos_turns(frac_product(nf, u2)).1;
                let c = scale / nf * (c1 - c2);
                (c != 0.0).then(|| Term {
                    n,
                    c: Complex64::new(c, 0.0),
                })
            })
            .collect();
        let state = Self::new(domain, terms, StateLabel::Uniform { x1, x2 })?;
        Ok(if normalize { state.normalized() } else { state })
    }

    /// Uniform state over the whole box with `count` odd modes (`n ≤ 2·count − 1`).
    pub fn uniform_full(domain: BoxDomain, count: usize, normalize: bool) -> Result<Self> {
        if count == 0 {
            return Err(Error::Domain("need at least one odd mode".into()));
        }
        Self::uniform(domain, 0.0, domain.length(), 2 * count as u64 - 1, normalize)
    }

    /// Lacunary state with modes `base^r`, `r = 0..=levels`, weights `base^{r(s−2)}`.
    pub fn weierstrass(
        domain: BoxDomain,
        s: f64,
        base: u64,
        levels: u32,
        normalize: bool,
    ) -> Result<Self> {
        if !(s > 0.0 && s < 2.0) {
            return Err(Error::Domain(format!("need 0 < s < 2, got {s}")));
        }
        if base < 2 {
            return Err(Error::Domain(format!("need base >= 2, got {base}")));
        }
        // phases and positions are reduced exactly only while n fits in an f64 mantissa
        let limit = 1u64 << 53;
        let max_levels = (53.0 / (base as f64).log2()).floor() as u32;
        match base.checked_pow(levels) {
            Some(top) if top <= limit => {}
            _ => {
                return Err(Error::Range(format!(
                    "{base}^{levels} exceeds 2^53; use levels <= {max_levels}"
                )))
            }
        }
        let terms = (0..=levels)
            .map(|r| Term {
                n: base.pow(r),
                c: Complex64::new((base as f64).powf(r as f64 * (s - 2.0)), 0.0),
            })
            .collect();
        let state = Self::new(domain, terms, StateLabel::Weierstrass { s, base, levels })?;
        Ok(if normalize { state.normalized() } else { state })
    }

    /// Unit-norm triangle peaked at `L/2`, zero at both walls.
    ///
    /// `c_n = 4√6 sin(nπ/2) / (nπ)²` for odd `n`.
    pub fn triangle(domain: BoxDomain, n_max: u64) -> Result<Self> {
        if n_max < 1 {
            return Err(Error::Domain("n_max must be >= 1".into()));
        }
        let terms = (1..=n_max)
            .step_by(2)
            .map(|n| {
                let sign = if (n / 2) % 2 == 0 { 1.0 } else { -1.0 };
                let np = n as f64 * PI;
                Term {
                    n,
                    c: Complex64::new(sign * 4.0 * 6f64.sqrt() / (np * np), 0.0),
                }
            })
            .collect();
        Self::new(domain, terms, StateLabel::Triangle)
    }

    /// Unit-norm parabola `∝ x(L − x)`.
    ///
    /// `c_n = 8√15 / (nπ)³` for odd `n`.
    pub fn parabola(domain: BoxDomain, n_max: u64) -> Result<Self> {
        if n_max < 1 {
            return Err(Error::Domain("n_max must be >= 1".into()));
        }
        let terms = (1..=n_max)
            .step_by(2)
            .map(|n| {
                let np = n as f64 * PI;
                Term {
                    n,
                    c: Complex64::new(8.0 * 15f64.sqrt() / (np * np * np), 0.0),
                }
            })
            .collect();
        Self::new(domain, terms, StateLabel::Parabola)
    }

    pub fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn label(&self) -> &StateLabel {
        &self.label
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn energy_offset(&self) -> f64 {
        self.energy_offset
    }

    /// Highest mode index among the first `n_terms` terms.
    pub fn max_mode(&self, n_terms: usize) -> u64 {
        self.terms[n_terms.clamp(1, self.len()) - 1].n
    }

    /// Coefficient of mode `n`, zero when the mode is not stored.
    pub fn coefficient(&self, n: u64) -> Complex64 {
        self.terms
            .binary_search_by_key(&n, |t| t.n)
            .map(|i| self.terms[i].c)
            .unwrap_or_default()
    }

    /// `Σ |c_n|²` over the first `n_terms` terms.
    pub fn norm_sqr(&self, n_terms: usize) -> f64 {
        self.terms[..n_terms.min(self.len())]
            .iter()
            .map(|t| t.c.norm_sqr())
            .sum()
    }

    /// `Σ |c_n|² E_n` over the first `n_terms` terms (offset excluded).
    pub fn mean_energy(&self, n_terms: usize) -> f64 {
        self.terms[..n_terms.min(self.len())]
            .iter()
            .map(|t| t.c.norm_sqr() * self.domain.mode_energy(t.n))
            .sum()
    }

    /// Rescaled so that `Σ |c_n|² = 1` over all stored terms.
    pub fn normalized(mut self) -> Self {
        let norm = self.norm_sqr(self.len()).sqrt();
        if norm > 0.0 {
            for t in &mut self.terms {
                t.c /= norm;
            }
        }
        self
    }

    /// Every coefficient multiplied by `e^{iθ}`.
    pub fn with_global_phase(mut self, theta: f64) -> Self {
        let z = Complex64::from_polar(1.0, theta);
        for t in &mut self.terms {
            t.c *= z;
        }
        self
    }

    /// Every `E_n` shifted by `offset`, i.e. a global factor `e^{-i·offset·t/ħ}`.
    pub fn with_energy_offset(mut self, offset: f64) -> Self {
        self.energy_offset = offset;
        self
    }

    pub fn check_truncation(&self, n_terms: usize) -> Result<()> {
        if n_terms == 0 || n_terms > self.len() {
            return Err(Error::Range(format!(
                "truncation N={n_terms} outside 1..={}",
                self.len()
            )));
        }
        Ok(())
    }

    /// Evaluator for the first `n_terms` terms at a fixed time.
    pub fn at_time(&self, time: impl Into<TimePoint>, n_terms: usize) -> Result<Snapshot<'_>> {
        self.check_truncation(n_terms)?;
        let time = time.into();
        let weights = self.phased_weights(&time, n_terms);
        Ok(Snapshot {
            state: self,
            time,
            kernel: Kernel::new(self, n_terms),
            weights,
        })
    }

    /// `Ψ_t(x; N)` and its first two spatial derivatives.
    pub fn evaluate(&self, t: impl Into<TimePoint>, x: f64, n_terms: usize) -> Result<WavefieldSample> {
        self.at_time(t, n_terms)?.sample(x)
    }

    /// [`evaluate`](Self::evaluate) over a grid; per-point results are bit-identical.
    pub fn evaluate_grid(
        &self,
        t: impl Into<TimePoint>,
        xs: &[f64],
        n_terms: usize,
    ) -> Result<Vec<WavefieldSample>> {
        self.at_time(t, n_terms)?.sample_grid(xs)
    }

    /// `|ĤΨ − iħ∂_tΨ|` with both sides summed termwise.
    pub fn schrodinger_residual(
        &self,
        t: impl Into<TimePoint>,
        x: f64,
        n_terms: usize,
    ) -> Result<f64> {
        let snap = self.at_time(t, n_terms)?;
        self.domain.check_position(x)?;
        let u = x / self.domain.length();
        let hbar = self.domain.hbar();
        let kinetic = -hbar * hbar / (2.0 * self.domain.mass());
        let mut h_psi = Complex64::default();
        let mut dt_psi = Complex64::default();
        snap.kernel.for_each_mode(u, |k, s, _| {
            let w = snap.weights[k] * s;
            let kn = snap.kernel.wavenumbers[k];
            h_psi += w * (kinetic * -(kn * kn)) + w * self.energy_offset;
            dt_psi += w * (self.domain.mode_energy(self.terms[k].n) + self.energy_offset);
        });
        Ok((h_psi - dt_psi).norm())
    }

    /// `c_n √(2/L) e^{-i(E_n + offset) t/ħ}` for the first `n_terms` terms.
    pub(crate) fn phased_weights(&self, time: &TimePoint, n_terms: usize) -> Vec<Complex64> {
        let scale = (2.0 / self.domain.length()).sqrt();
        let offset_turns = if self.energy_offset == 0.0 {
            0.0
        } else {
            (self.energy_offset * time.t / self.domain.hbar() / std::f64::consts::TAU).fract()
        };
        self.terms[..n_terms]
            .iter()
            .map(|t| {
                let turns = time.mode_turns(&self.domain, t.n) + offset_turns;
                let (s, c) = sin_cos_turns(turns);
                t.c * scale * Complex64::new(c, -s)
            })
            .collect()
    }

    /// Per-term phase advance `e^{-i(E_n + offset) h/ħ}` for a time step `h`.
    pub(crate) fn step_multipliers(&self, h: f64, n_terms: usize) -> Vec<Complex64> {
        let step = TimePoint::at(h);
        let offset_turns = (self.energy_offset * h / self.domain.hbar() / std::f64::consts::TAU).fract();
        self.terms[..n_terms]
            .iter()
            .map(|t| {
                let (s, c) = sin_cos_turns(step.mode_turns(&self.domain, t.n) + offset_turns);
                Complex64::new(c, -s)
            })
            .collect()
    }
}

/// A state frozen at one time and truncation, ready for repeated sampling.
pub struct Snapshot<'a> {
    state: &'a SpectralState,
    time: TimePoint,
    kernel: Kernel,
    weights: Vec<Complex64>,
}

impl Snapshot<'_> {
    pub fn time(&self) -> TimePoint {
        self.time
    }

    pub fn state(&self) -> &SpectralState {
        self.state
    }

    pub fn sample(&self, x: f64) -> Result<WavefieldSample> {
        self.state.domain.check_position(x)?;
        Ok(self.kernel.sample(&self.weights, x / self.state.domain.length()))
    }

    pub fn sample_grid(&self, xs: &[f64]) -> Result<Vec<WavefieldSample>> {
        for &x in xs {
            self.state.domain.check_position(x)?;
        }
        let l = self.state.domain.length();
        Ok(xs
            .par_iter()
            .map(|&x| self.kernel.sample(&self.weights, x / l))
            .collect())
    }

    /// Only `Ψ`, skipping the derivative sums.
    pub fn psi_grid(&self, xs: &[f64]) -> Result<Vec<Complex64>> {
        for &x in xs {
            self.state.domain.check_position(x)?;
        }
        let l = self.state.domain.length();
        Ok(xs
            .par_iter()
            .map(|&x| self.kernel.psi(&self.weights, x / l))
            .collect())
    }
}

/// Mode layout of a truncated state, shared by every evaluation path.
#[derive(Debug, Clone)]
pub(crate) struct Kernel {
    modes: Vec<f64>,
    pub(crate) wavenumbers: Vec<f64>,
    /// `(first, stride)` when the modes form an arithmetic progression.
    progression: Option<(f64, f64)>,
}

impl Kernel {
    pub(crate) fn new(state: &SpectralState, n_terms: usize) -> Self {
        let terms = &state.terms[..n_terms];
        let k0 = PI / state.domain.length();
        let progression = match terms {
            [a, b, rest @ ..] => {
                let stride = b.n - a.n;
                let mut prev = b.n;
                rest.iter()
                    .all(|t| {
                        let ok = t.n - prev == stride;
                        prev = t.n;
                        ok
                    })
                    .then_some((a.n as f64, stride as f64))
            }
            _ => None,
        };
        Self {
            modes: terms.iter().map(|t| t.n as f64).collect(),
            wavenumbers: terms.iter().map(|t| t.n as f64 * k0).collect(),
            progression,
        }
    }

    pub(crate) fn len(&self) -> usize {
        self.modes.len()
    }

    /// Calls `f(k, sin(n_k π u), cos(n_k π u))` for every term in order.
    ///
    /// Arithmetic progressions advance by complex rotation and restart from a
    /// directly reduced angle every [`BLOCK`] terms.
    #[inline]
    pub(crate) fn for_each_mode(&self, u: f64, mut f: impl FnMut(usize, f64, f64)) {
        let half = 0.5 * u;
        let direct = |n: f64| {
            let (s, c) = sin_cos_turns(frac_product(n, half));
            Complex64::new(c, s)
        };
        match self.progression {
            Some((_, stride)) => {
                let rot = direct(stride);
                for start in (0..self.len()).step_by(BLOCK) {
                    let end = (start + BLOCK).min(self.len());
                    let mut z = direct(self.modes[start]);
                    for k in start..end {
                        f(k, z.im, z.re);
                        z *= rot;
                    }
                }
            }
            None => {
                for (k, &n) in self.modes.iter().enumerate() {
                    let z = direct(n);
                    f(k, z.im, z.re);
                }
            }
        }
    }

    pub(crate) fn sample(&self, weights: &[Complex64], u: f64) -> WavefieldSample {
        let (psi, dpsi, d2psi) = self.sum::<true>(weights, u);
        WavefieldSample { psi, dpsi, d2psi }
    }

    /// `(Ψ, ∂Ψ/∂x)` only.
    #[inline]
    pub(crate) fn first(&self, weights: &[Complex64], u: f64) -> (Complex64, Complex64) {
        let (psi, dpsi, _) = self.sum::<false>(weights, u);
        (psi, dpsi)
    }

    pub(crate) fn psi(&self, weights: &[Complex64], u: f64) -> Complex64 {
        let mut acc = Pairwise::<1>::default();
        self.for_each_mode(u, |k, s, _| acc.add(k, [weights[k] * s]));
        acc.finish()[0]
    }

    #[inline]
    fn sum<const SECOND: bool>(&self, weights: &[Complex64], u: f64) -> (Complex64, Complex64, Complex64) {
        let mut acc = Pairwise::<3>::default();
        let wn = &self.wavenumbers;
        self.for_each_mode(u, |k, s, c| {
            let w = weights[k];
            let d2 = if SECOND { w * (-wn[k] * wn[k] * s) } else { Complex64::default() };
            acc.add(k, [w * s, w * (wn[k] * c), d2]);
        });
        let [a, b, c] = acc.finish();
        (a, b, c)
    }
}

/// Streaming pairwise summation: sequential within blocks of [`BLOCK`] terms,
/// block sums merged as a binary tree. The order depends only on the term
/// count, never on the caller.
struct Pairwise<const K: usize> {
    block: [Complex64; K],
    stack: [[Complex64; K]; 48],
    levels: [u32; 48],
    depth: usize,
}

impl<const K: usize> Default for Pairwise<K> {
    fn default() -> Self {
        Self {
            block: [Complex64::default(); K],
            stack: [[Complex64::default(); K]; 48],
            levels: [0; 48],
            depth: 0,
        }
    }
}

impl<const K: usize> Pairwise<K> {
    #[inline]
    fn add(&mut self, index: usize, v: [Complex64; K]) {
        for (b, x) in self.block.iter_mut().zip(v) {
            *b += x;
        }
        if (index + 1).is_multiple_of(BLOCK) {
            self.flush();
        }
    }

    fn flush(&mut self) {
        let mut carry = std::mem::replace(&mut self.block, [Complex64::default(); K]);
        let mut level = 0;
        while self.depth > 0 && self.levels[self.depth - 1] == level {
            self.depth -= 1;
            let lower = self.stack[self.depth];
            for (c, l) in carry.iter_mut().zip(lower) {
                *c = l + *c;
            }
            level += 1;
        }
        self.stack[self.depth] = carry;
        self.levels[self.depth] = level;
        self.depth += 1;
    }

    fn finish(mut self) -> [Complex64; K] {
        let mut total = self.block;
        while self.depth > 0 {
            self.depth -= 1;
            let lower = self.stack[self.depth];
            for (t, l) in total.iter_mut().zip(lower) {
                *t = l + *t;
            }
        }
        total
    }
}

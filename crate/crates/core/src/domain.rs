//! Box parameters, the eigenbasis of the infinite well and time bookkeeping.
//!
//! All phases are carried in *turns* (fractions of a full cycle) and reduced
//! modulo one before any trigonometric call. Mode phases grow like `n²`, so
//! reducing first is what keeps high modes accurate at late times, and it
//! lets times given as exact fractions of the period produce exact phases.

use std::f64::consts::{PI, TAU};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Physical parameters of the infinite square well on `[0, L]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxDomain {
    length: f64,
    mass: f64,
    hbar: f64,
}

impl Default for BoxDomain {
    fn default() -> Self {
        Self::unit()
    }
}

impl BoxDomain {
    pub fn new(length: f64, mass: f64, hbar: f64) -> Result<Self> {
        for (name, v) in [("L", length), ("m", mass), ("hbar", hbar)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Domain(format!("{name} must be finite and > 0, got {v}")));
            }
        }
        Ok(Self { length, mass, hbar })
    }

    /// `L = m = ħ = 1`.
    pub fn unit() -> Self {
        Self {
            length: 1.0,
            mass: 1.0,
            hbar: 1.0,
        }
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    /// Density recurrence period `T = m L² / (2π ħ)`.
    pub fn period(&self) -> f64 {
        self.mass * self.length * self.length / (TAU * self.hbar)
    }

    pub fn momentum(&self, n: u64) -> f64 {
        n as f64 * PI * self.hbar / self.length
    }

    pub fn mode_energy(&self, n: u64) -> f64 {
        let p = self.momentum(n);
        p * p / (2.0 * self.mass)
    }

    pub fn mode(&self, n: u64) -> Result<Mode> {
        if n == 0 {
            return Err(Error::Domain("mode index must be >= 1".into()));
        }
        Ok(Mode {
            n,
            momentum: self.momentum(n),
            energy: self.mode_energy(n),
        })
    }

    /// Orthonormal eigenfunction `√(2/L) sin(nπx/L)`, exactly zero at both walls.
    pub fn eigenfunction(&self, n: u64, x: f64) -> Result<f64> {
        if n == 0 {
            return Err(Error::Domain("mode index must be >= 1".into()));
        }
        self.check_position(x)?;
        let (s, _) = sin_cos_turns(frac_product(n as f64, 0.5 * x / self.length));
        Ok((2.0 / self.length).sqrt() * s)
    }

    pub fn check_position(&self, x: f64) -> Result<()> {
        if !(0.0..=self.length).contains(&x) {
            return Err(Error::Domain(format!(
                "position {x} outside [0, {}]",
                self.length
            )));
        }
        Ok(())
    }

    /// Uniform grid of `points` positions spanning `[0, L]`, endpoints exact.
    pub fn grid(&self, points: usize) -> Vec<f64> {
        uniform_grid(0.0, self.length, points)
    }
}

/// One eigenmode of the box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mode {
    pub n: u64,
    pub momentum: f64,
    pub energy: f64,
}

/// Exact rational multiple `num/den` of the period.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeriodFraction {
    pub num: i64,
    pub den: u64,
}

impl fmt::Display for PeriodFraction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

/// A time value, optionally tagged with the exact fraction of `T` it came from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimePoint {
    pub t: f64,
    pub fraction_of_period: Option<PeriodFraction>,
}

impl TimePoint {
    pub fn at(t: f64) -> Self {
        Self {
            t,
            fraction_of_period: None,
        }
    }

    /// `t = (num/den)·T`, with the fraction kept for exact phase reduction.
    pub fn rational(domain: &BoxDomain, num: i64, den: u64) -> Result<Self> {
        if den == 0 {
            return Err(Error::Domain("zero denominator in period fraction".into()));
        }
        let g = gcd(num.unsigned_abs(), den);
        let (num, den) = (num / g as i64, den / g);
        Ok(Self {
            t: num as f64 / den as f64 * domain.period(),
            fraction_of_period: Some(PeriodFraction { num, den }),
        })
    }

    /// `t = tau·T` without an exact fraction.
    pub fn periods(domain: &BoxDomain, tau: f64) -> Self {
        Self::at(tau * domain.period())
    }

    /// `t / T`.
    pub fn tau(&self, domain: &BoxDomain) -> f64 {
        match self.fraction_of_period {
            Some(f) => f.num as f64 / f.den as f64,
            None => self.t / domain.period(),
        }
    }

    /// Phase `E_n t / ħ` of mode `n`, in turns reduced to `[0, 1)`.
    ///
    /// With `L`, `m`, `ħ` eliminated this is `n² τ / 8` turns for `τ = t/T`.
    pub fn mode_turns(&self, domain: &BoxDomain, n: u64) -> f64 {
        match self.fraction_of_period {
            Some(f) => {
                let modulus = 8 * f.den as u128;
                let n2 = (n as u128 % modulus).pow(2) % modulus;
                let p = f.num.rem_euclid(modulus as i64) as u128;
                let r = n2 * p % modulus;
                r as f64 / modulus as f64
            }
            None => square_turns(n as f64, self.tau(domain) / 8.0),
        }
    }
}

impl From<f64> for TimePoint {
    fn from(t: f64) -> Self {
        TimePoint::at(t)
    }
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a.max(1)
}

/// `frac(n·x)` using an error-free product, accurate to an ulp of one for
/// integer-valued `n < 2⁵³`.
pub(crate) fn frac_product(n: f64, x: f64) -> f64 {
    let p = n * x;
    let e = n.mul_add(x, -p);
    let r = (p - p.floor()) + e;
    r - r.floor()
}

/// `frac(n²·x)` without forming `n²` (which is inexact above `2^26.5`).
pub(crate) fn square_turns(n: f64, x: f64) -> f64 {
    let p1 = n * x;
    let e1 = n.mul_add(x, -p1);
    let f1 = p1 - p1.floor();
    let p2 = n * f1;
    let e2 = n.mul_add(f1, -p2);
    let r = (p2 - p2.floor()) + (e2 + n * e1);
    r - r.floor()
}

/// `(sin 2πr, cos 2πr)` with exact values on quarter turns.
#[inline]
pub(crate) fn sin_cos_turns(r: f64) -> (f64, f64) {
    let r = r - r.floor();
    if r == 0.0 {
        (0.0, 1.0)
    } else if r == 0.25 {
        (1.0, 0.0)
    } else if r == 0.5 {
        (0.0, -1.0)
    } else if r == 0.75 {
        (-1.0, 0.0)
    } else {
        let r = if r >= 0.5 { r - 1.0 } else { r };
        (TAU * r).sin_cos()
    }
}

/// `points` uniformly spaced values from `a` to `b`, both endpoints exact.
pub fn uniform_grid(a: f64, b: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![a],
        _ => {
            let last = points - 1;
            (0..points)
                .map(|i| {
                    if i == last {
                        b
                    } else {
                        a + (b - a) * (i as f64 / last as f64)
                    }
                })
                .collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn eigenfunction_values() {
        let d = BoxDomain::unit();
        assert_eq!(d.eigenfunction(1, 0.0).unwrap(), 0.0);
        assert_eq!(d.eigenfunction(1, 1.0).unwrap(), 0.0);
        assert_relative_eq!(d.eigenfunction(1, 0.5).unwrap(), 2f64.sqrt(), epsilon = 1e-15);
        assert_eq!(d.eigenfunction(2, 0.5).unwrap(), 0.0);
        assert!(d.eigenfunction(1, 1.5).is_err());
        assert!(d.eigenfunction(1, -1e-9).is_err());
        assert!(d.eigenfunction(0, 0.3).is_err());
    }

    #[test]
    fn energies_and_period() {
        let d = BoxDomain::unit();
        assert_relative_eq!(d.mode_energy(1), PI * PI / 2.0, max_relative = 1e-15);
        assert_relative_eq!(d.mode_energy(3), 9.0 * PI * PI / 2.0, max_relative = 1e-15);
        assert_relative_eq!(d.mode_energy(2) / d.mode_energy(1), 4.0, max_relative = 1e-15);
        assert_relative_eq!(d.period(), 0.15915494309189535, max_relative = 1e-15);
        let via_gap = TAU * d.hbar() / (d.mode_energy(3) - d.mode_energy(1));
        assert_relative_eq!(via_gap, d.period(), max_relative = 1e-14);

        let d2 = BoxDomain::new(2.0, 1.0, 1.0).unwrap();
        assert_relative_eq!(d2.period(), 4.0 / TAU, max_relative = 1e-15);
        let d3 = BoxDomain::new(1.7, 0.3, 2.2).unwrap();
        let via_gap = TAU * d3.hbar() / (d3.mode_energy(3) - d3.mode_energy(1));
        assert_relative_eq!(via_gap, d3.period(), max_relative = 1e-14);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(BoxDomain::new(0.0, 1.0, 1.0).is_err());
        assert!(BoxDomain::new(1.0, -1.0, 1.0).is_err());
        assert!(BoxDomain::new(1.0, 1.0, f64::NAN).is_err());
        assert!(BoxDomain::unit().mode(0).is_err());
    }

    #[test]
    fn odd_mode_recurrence_identity() {
        for d in [BoxDomain::unit(), BoxDomain::new(2.5, 0.7, 1.3).unwrap()] {
            let t = d.period();
            for k in 1..=200u64 {
                let n = 2 * (k - 1) + 3;
                let lhs = (d.mode_energy(n) - d.mode_energy(1)) * t / d.hbar();
                let rhs = (k * (k + 1)) as f64 * PI;
                assert_relative_eq!(lhs, rhs, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn orthonormal_eigenfunctions() {
        // composite Simpson on 4001 points resolves sin(100πx) products
        let d = BoxDomain::new(1.3, 1.0, 1.0).unwrap();
        let xs = d.grid(4001);
        let h = xs[1] - xs[0];
        for n in (1..=50).step_by(7) {
            for m in (1..=50).step_by(5) {
                let f: Vec<f64> = xs
                    .iter()
                    .map(|&x| d.eigenfunction(n, x).unwrap() * d.eigenfunction(m, x).unwrap())
                    .collect();
                let s = simpson(&f, h);
                let expect = if n == m { 1.0 } else { 0.0 };
                assert!((s - expect).abs() < 1e-10, "n={n} m={m} got {s}");
            }
        }
    }

    fn simpson(f: &[f64], h: f64) -> f64 {
        let n = f.len() - 1;
        let mut s = f[0] + f[n];
        for (i, v) in f.iter().enumerate().take(n).skip(1) {
            s += if i % 2 == 1 { 4.0 * v } else { 2.0 * v };
        }
        s * h / 3.0
    }

    #[test]
    fn rational_time_is_reduced() {
        let d = BoxDomain::unit();
        let tp = TimePoint::rational(&d, 14, 20).unwrap();
        assert_eq!(tp.fraction_of_period, Some(PeriodFraction { num: 7, den: 10 }));
        assert_relative_eq!(tp.t, 0.7 * d.period(), max_relative = 1e-15);
    }

    #[test]
    fn exact_and_float_phases_agree() {
        let d = BoxDomain::unit();
        let exact = TimePoint::rational(&d, 7, 10).unwrap();
        let float = TimePoint::periods(&d, 0.7);
        for n in [1u64, 3, 5, 99, 1001, 8191] {
            let a = exact.mode_turns(&d, n);
            let b = float.mode_turns(&d, n);
            let diff = (a - b).abs().min(1.0 - (a - b).abs());
            // float τ=0.7 is off by ~1e-17; n² amplifies that
            assert!(diff < 1e-16 * (n * n) as f64 + 1e-15, "n={n}: {a} vs {b}");
            // direct, unreduced evaluation for comparison
            let direct = (d.mode_energy(n) * exact.t / d.hbar() / TAU).fract();
            let diff = (a - direct).abs().min(1.0 - (a - direct).abs());
            assert!(diff < 1e-15 * (n * n) as f64 + 1e-14);
        }
        // at t = T every odd mode is advanced by exactly 1/8 turn
        let tp = TimePoint::rational(&d, 1, 1).unwrap();
        for n in (1..200).step_by(2) {
            assert_eq!(tp.mode_turns(&d, n), 0.125);
        }
    }

    #[test]
    fn negative_fractions_wrap() {
        let d = BoxDomain::unit();
        let tp = TimePoint::rational(&d, -1, 2).unwrap();
        for n in [1u64, 3, 7] {
            let r = tp.mode_turns(&d, n);
            let f = TimePoint::periods(&d, -0.5).mode_turns(&d, n);
            assert!((r - f).abs() < 1e-14, "{r} {f}");
        }
    }

    #[test]
    fn grid_endpoints_exact() {
        let g = uniform_grid(0.0, 1.3, 7);
        assert_eq!(g[0], 0.0);
        assert_eq!(g[6], 1.3);
        assert_eq!(uniform_grid(0.0, 1.0, 1), vec![0.0]);
    }
}

//! Fundamental solutions of the periodic equation, the discriminant, Dirichlet
//! roots and band edges.

use crate::error::{Error, Result};
use crate::numeric::brent_with;
use crate::ode::{integrate, propagate, State, Tolerance};
use crate::potentials::PeriodicPotential;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

const ONE: Complex64 = Complex64::new(1.0, 0.0);
const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Values of the two normalized solutions at `x = 1`, for the potential shifted by `tau`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Monodromy {
    pub z: Complex64,
    pub tau: f64,
    pub theta1: Complex64,
    pub phi1: Complex64,
    pub theta1p: Complex64,
    pub phi1p: Complex64,
    pub delta: Complex64,
    pub beta: Complex64,
}

impl Monodromy {
    fn from_state(z: Complex64, tau: f64, s: &State<4>) -> Self {
        Monodromy {
            z,
            tau,
            theta1: s[0],
            theta1p: s[1],
            phi1: s[2],
            phi1p: s[3],
            delta: 0.5 * (s[3] + s[0]),
            beta: 0.5 * (s[3] - s[0]),
        }
    }

    /// `theta phi' - theta' phi`, identically one.
    pub fn wronskian(&self) -> Complex64 {
        self.theta1 * self.phi1p - self.theta1p * self.phi1
    }
}

/// z-derivatives of the monodromy entries.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MonodromyDerivative {
    pub theta1: Complex64,
    pub phi1: Complex64,
    pub theta1p: Complex64,
    pub phi1p: Complex64,
    pub delta: Complex64,
    pub beta: Complex64,
}

/// Solution pair `(theta, theta', phi, phi')` at a point.
pub type Fundamental = State<4>;

/// Propagate the fundamental matrix of `-y'' + v y = energy y` from `x0` to `x1`.
pub(crate) fn fundamental_with<V: Fn(f64) -> f64>(
    v: &V,
    energy: Complex64,
    x0: f64,
    x1: f64,
    start: Fundamental,
    breaks: &[f64],
    tol: &Tolerance,
) -> Result<Fundamental> {
    let rhs = |x: f64, y: &State<4>| {
        let w = v(x) - energy;
        [y[1], y[0] * w, y[3], y[2] * w]
    };
    propagate(&rhs, x0, x1, start, breaks, tol, energy)
}

pub(crate) const IDENTITY: Fundamental = [ONE, ZERO, ZERO, ONE];

/// Monodromy data of the working potential `p(. + tau)` at momentum `z`.
pub fn monodromy(p: &PeriodicPotential, z: Complex64, tau: f64, tol: &Tolerance) -> Result<Monodromy> {
    let v = |x: f64| p.eval(x + tau);
    let s = fundamental_with(&v, z * z, 0.0, 1.0, IDENTITY, &[], tol)?;
    Ok(Monodromy::from_state(z, tau, &s))
}

/// Monodromy together with its derivative in `z`.
pub fn monodromy_with_derivative(
    p: &PeriodicPotential,
    z: Complex64,
    tol: &Tolerance,
) -> Result<(Monodromy, MonodromyDerivative)> {
    let energy = z * z;
    let two_z = 2.0 * z;
    let rhs = |x: f64, y: &State<8>| {
        let w = p.eval(x) - energy;
        [
            y[1],
            y[0] * w,
            y[3],
            y[2] * w,
            y[5],
            y[4] * w - two_z * y[0],
            y[7],
            y[6] * w - two_z * y[2],
        ]
    };
    let start = [ONE, ZERO, ZERO, ONE, ZERO, ZERO, ZERO, ZERO];
    let s = propagate(&rhs, 0.0, 1.0, start, &[], tol, energy)?;
    let m = Monodromy::from_state(z, 0.0, &[s[0], s[1], s[2], s[3]]);
    let d = MonodromyDerivative {
        theta1: s[4],
        theta1p: s[5],
        phi1: s[6],
        phi1p: s[7],
        delta: 0.5 * (s[7] + s[4]),
        beta: 0.5 * (s[7] - s[4]),
    };
    Ok((m, d))
}

/// Fundamental solutions of the working potential at each point of `xs` (ascending, `>= 0`).
pub fn solve_on_grid(p: &PeriodicPotential, z: Complex64, xs: &[f64], tol: &Tolerance) -> Result<Vec<Fundamental>> {
    let v = |x: f64| p.eval(x);
    let mut out = Vec::with_capacity(xs.len());
    let mut state = IDENTITY;
    let mut x = 0.0;
    for &xi in xs {
        if xi < x {
            return Err(Error::InvalidRegion("grid must be ascending and non-negative".into()));
        }
        state = fundamental_with(&v, z * z, x, xi, state, &[], tol)?;
        x = xi;
        out.push(state);
    }
    Ok(out)
}

/// Discriminant of the raw potential at real energy `lambda`.
fn raw_discriminant(p: &PeriodicPotential, lambda: f64, tol: &Tolerance) -> Result<f64> {
    let v = |x: f64| p.eval_raw(x);
    let s = fundamental_with(&v, Complex64::new(lambda, 0.0), 0.0, 1.0, IDENTITY, &[], tol)?;
    Ok(0.5 * (s[0].re + s[3].re))
}

/// Lowest periodic eigenvalue of the raw potential.
pub(crate) fn ground_energy(p: &PeriodicPotential) -> Result<f64> {
    if let crate::potentials::PeriodicForm::Series { mean, cos, sin } = p.form() {
        if cos.iter().chain(sin.iter()).all(|&c| c == 0.0) {
            return Ok(*mean);
        }
    }
    let tol = Tolerance::tight();
    let (lo_v, _) = p.raw_range();
    let mean = p.fourier(0).0;
    let lo = lo_v - 1.0;
    let hi = mean;
    let f = |l: f64| raw_discriminant(p, l, &tol).map(|d| d - 1.0);
    let steps = 64;
    let mut a = lo;
    let mut fa = f(a)?;
    for j in 1..=steps {
        let b = lo + (hi - lo) * j as f64 / steps as f64;
        let fb = f(b)?;
        if fb <= 0.0 {
            return brent_with(f, a, b, fa, fb, 1e-15 * (1.0 + b.abs()), 200);
        }
        a = b;
        fa = fb;
    }
    Err(Error::InvalidPotential("could not locate the bottom of the spectrum".into()))
}

/// Number of zeros of `phi(., z)` in `(0, 1)` and the value `phi(1, z)`, for real `z`.
pub fn dirichlet_count(p: &PeriodicPotential, z: f64, tol: &Tolerance) -> Result<(usize, f64)> {
    let energy = Complex64::new(z * z, 0.0);
    let rhs = |x: f64, y: &State<2>| [y[1], y[0] * (p.eval(x) - energy)];
    let mut count = 0usize;
    let mut prev_sign = 1.0f64;
    let end = integrate(&rhs, 0.0, 1.0, [ZERO, ONE], &[], tol, energy, &mut |x, y| {
        let v = y[0].re;
        if x < 1.0 && v != 0.0 && v.signum() != prev_sign {
            count += 1;
            prev_sign = v.signum();
        }
    })?;
    Ok((count, end[0].re))
}

/// The `n`-th Dirichlet root `mu_n` (n >= 1) of `phi(1, .)`.
pub fn dirichlet_root(p: &PeriodicPotential, n: usize, tol: &Tolerance) -> Result<f64> {
    assert!(n >= 1);
    let (p0, pcn, _) = p.fourier(n);
    let mean = p0 - p.gauge_shift();
    let nn = PI * n as f64;
    let seed = nn + (mean - pcn) / (2.0 * nn);
    let count = |z: f64| dirichlet_count(p, z, tol).map(|c| c.0);
    let mut lo = (seed - 0.5 * PI).max(0.0);
    let mut clo = count(lo)?;
    while clo >= n {
        lo = (lo - PI).max(0.0);
        clo = count(lo)?;
        if lo == 0.0 {
            break;
        }
    }
    let mut hi = seed + 0.5 * PI;
    let mut chi = count(hi)?;
    while chi < n {
        hi += PI;
        chi = count(hi)?;
    }
    for _ in 0..200 {
        if clo == n - 1 && chi == n {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let c = count(mid)?;
        if c < n {
            lo = mid;
            clo = c;
        } else {
            hi = mid;
            chi = c;
        }
    }
    if clo != n - 1 || chi != n {
        return Err(Error::RootFailure(format!("could not isolate Dirichlet root {n}")));
    }
    let phi1 = |z: f64| dirichlet_count(p, z, tol).map(|c| c.1);
    let flo = phi1(lo)?;
    let fhi = phi1(hi)?;
    brent_with(phi1, lo, hi, flo, fhi, 1e-15 * hi.max(1.0), 200)
}

/// Location of a gap on the positive momentum axis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gap {
    pub n: usize,
    /// Left momentum edge.
    pub lower: f64,
    /// Right momentum edge.
    pub upper: f64,
    /// Dirichlet root inside the closed gap.
    pub mu: f64,
    /// Critical point of the discriminant inside the gap.
    pub apex: f64,
    pub open: bool,
}

impl Gap {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    /// Energy length `upper^2 - lower^2`.
    pub fn energy_width(&self) -> f64 {
        self.upper * self.upper - self.lower * self.lower
    }
}

/// Where a non-negative real momentum sits relative to the bands.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Location {
    /// Inside a band; `m` gaps lie to the left, so `Re k` is in `(pi m, pi (m+1))`.
    Band(usize),
    /// Strictly inside open gap `n`.
    Gap(usize),
    /// Within edge tolerance of an edge of open gap `n` (gap 0 means the origin).
    Edge(usize),
}

/// Gaps `1..=n_max` with their edges and Dirichlet roots, in momentum units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandStructure {
    pub gaps: Vec<Gap>,
    /// Zeros of the discriminant, one per band, `band_zeros[m]` inside band `m+1`.
    pub band_zeros: Vec<f64>,
    pub gauge_shift: f64,
}

pub const EDGE_TOL: f64 = 1e-10;

impl BandStructure {
    pub fn n_max(&self) -> usize {
        self.gaps.len()
    }

    pub fn gap(&self, n: usize) -> Option<&Gap> {
        if n == 0 {
            None
        } else {
            self.gaps.get(n - 1)
        }
    }

    /// Largest momentum the structure can classify.
    pub fn coverage(&self) -> f64 {
        *self.band_zeros.last().unwrap_or(&0.0)
    }

    pub fn locate(&self, x: f64) -> Result<Location> {
        let x = x.abs();
        if x <= EDGE_TOL {
            return Ok(Location::Edge(0));
        }
        if x > self.coverage() {
            return Err(Error::BeyondTruncation { z: x, n_max: self.n_max() });
        }
        let mut below = 0usize;
        for g in &self.gaps {
            if g.open {
                if (x - g.lower).abs() <= EDGE_TOL || (x - g.upper).abs() <= EDGE_TOL {
                    return Ok(Location::Edge(g.n));
                }
                if x > g.lower && x < g.upper {
                    return Ok(Location::Gap(g.n));
                }
                if x >= g.upper {
                    below = g.n;
                }
            } else if x >= g.apex {
                below = g.n;
            }
        }
        Ok(Location::Band(below))
    }
}

/// Compute gaps `1..=n_max` of the working potential.
pub fn band_edges(p: &PeriodicPotential, n_max: usize, tol: &Tolerance) -> Result<BandStructure> {
    let mus: Vec<f64> = (1..=n_max + 1)
        .into_par_iter()
        .map(|n| dirichlet_root(p, n, tol))
        .collect::<Result<_>>()?;
    let delta = |z: f64| monodromy(p, Complex64::new(z, 0.0), 0.0, tol).map(|m| m.delta.re);
    let delta_prime = |z: f64| monodromy_with_derivative(p, Complex64::new(z, 0.0), tol).map(|(_, d)| d.delta.re);

    // One zero of the discriminant between consecutive Dirichlet roots.
    let band_zeros: Vec<f64> = (1..=n_max + 1)
        .into_par_iter()
        .map(|n| {
            let lo = if n == 1 { 0.0 } else { mus[n - 2] };
            let hi = mus[n - 1];
            let flo = if n == 1 { 1.0 } else { delta(lo)? };
            let fhi = delta(hi)?;
            let sgn = if (n - 1) % 2 == 0 { 1.0 } else { -1.0 };
            // The Dirichlet roots sit where |delta| >= 1; enforce the expected signs
            // against rounding at touching edges.
            let flo = if flo * sgn <= 0.0 { sgn } else { flo };
            let fhi = if fhi * sgn >= 0.0 { -sgn } else { fhi };
            brent_with(delta, lo, hi, flo, fhi, 1e-15 * hi.max(1.0), 200)
        })
        .collect::<Result<_>>()?;

    let closure = 20.0 * tol.rtol.max(1e-14);
    let gaps: Vec<Gap> = (1..=n_max)
        .into_par_iter()
        .map(|n| {
            let sgn = if n % 2 == 0 { 1.0 } else { -1.0 };
            let a = band_zeros[n - 1];
            let b = band_zeros[n];
            let apex = brent_with(delta_prime, a, b, sgn, -sgn, 1e-15 * b, 200)
                .or_else(|_| {
                    let fa = delta_prime(a)?;
                    let fb = delta_prime(b)?;
                    brent_with(delta_prime, a, b, fa, fb, 1e-15 * b, 200)
                })?;
            // delta^2 - 1 in the Wronskian form beta^2 + phi1 theta1'; both terms are
            // small across a narrow gap, so the edges keep their relative accuracy.
            let g = |z: f64| {
                monodromy(p, Complex64::new(z, 0.0), 0.0, tol).map(|m| (m.beta * m.beta + m.phi1 * m.theta1p).re)
            };
            let top = g(apex)?;
            let mu = mus[n - 1];
            if top <= closure {
                // Collapse onto the Dirichlet root so that lower <= mu <= upper holds.
                return Ok(Gap { n, lower: mu, upper: mu, mu, apex, open: false });
            }
            let lower = brent_with(g, a, apex, -1.0, top, 1e-16 * b, 200)?;
            let upper = brent_with(g, apex, b, top, -1.0, 1e-16 * b, 200)?;
            let open = upper - lower >= 1e-8;
            let mu = mu.clamp(lower, upper);
            Ok(Gap { n, lower, upper, mu, apex, open })
        })
        .collect::<Result<_>>()?;

    Ok(BandStructure { gaps, band_zeros, gauge_shift: p.gauge_shift() })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mathieu() -> PeriodicPotential {
        PeriodicPotential::series(0.0, vec![2.0], vec![]).unwrap()
    }

    #[test]
    fn free_monodromy_is_trigonometric() {
        let p = PeriodicPotential::zero();
        for &z in &[Complex64::new(0.0, 0.0), Complex64::new(3.0, 0.5), Complex64::new(0.0, 2.0)] {
            let m = monodromy(&p, z, 0.0, &Tolerance::default()).unwrap();
            assert!((m.delta - z.cos()).norm() < 1e-10);
            assert!((m.phi1 - crate::numeric::sin_over(z, 1.0)).norm() < 1e-10);
            assert!(m.beta.norm() < 1e-10);
        }
    }

    #[test]
    fn wronskian_is_one() {
        let p = PeriodicPotential::series(0.3, vec![2.0, -1.0], vec![0.7]).unwrap();
        for &z in &[Complex64::new(1.0, 0.0), Complex64::new(12.0, -3.0), Complex64::new(0.2, 5.0)] {
            let m = monodromy(&p, z, 0.37, &Tolerance::default()).unwrap();
            let scale = (m.theta1 * m.phi1p).norm() + (m.theta1p * m.phi1).norm();
            assert!((m.wronskian() - 1.0).norm() <= 1e-10 * scale.max(1.0));
        }
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let p = PeriodicPotential::series(0.0, vec![2.0], vec![0.5]).unwrap();
        let z = Complex64::new(4.1, 0.3);
        let tol = Tolerance::tight();
        let (_, d) = monodromy_with_derivative(&p, z, &tol).unwrap();
        let h = 1e-5;
        let up = monodromy(&p, z + h, 0.0, &tol).unwrap();
        let dn = monodromy(&p, z - h, 0.0, &tol).unwrap();
        let fd = (up.delta - dn.delta) / (2.0 * h);
        assert!((fd - d.delta).norm() < 1e-7);
        let fd_phi = (up.phi1 - dn.phi1) / (2.0 * h);
        assert!((fd_phi - d.phi1).norm() < 1e-7);
    }

    #[test]
    fn gauge_puts_ground_state_at_zero() {
        let p = mathieu();
        let m = monodromy(&p, Complex64::new(0.0, 0.0), 0.0, &Tolerance::tight()).unwrap();
        assert!((m.delta.re - 1.0).abs() < 1e-11);
        assert!(p.gauge_shift() < 0.0);
    }

    #[test]
    fn free_band_structure_has_closed_gaps() {
        let p = PeriodicPotential::zero();
        let b = band_edges(&p, 4, &Tolerance::tight()).unwrap();
        for g in &b.gaps {
            assert!(!g.open);
            assert!((g.apex - PI * g.n as f64).abs() < 1e-9);
            assert!((g.mu - PI * g.n as f64).abs() < 1e-9);
        }
        assert_eq!(b.locate(1.0).unwrap(), Location::Band(0));
        assert_eq!(b.locate(4.0).unwrap(), Location::Band(1));
    }

    #[test]
    fn mathieu_gaps_contain_dirichlet_roots() {
        let p = mathieu();
        let b = band_edges(&p, 3, &Tolerance::tight()).unwrap();
        let g1 = b.gap(1).unwrap();
        assert!(g1.open);
        assert!(g1.lower <= g1.mu && g1.mu <= g1.upper);
        // Even potential: the Dirichlet root is an edge.
        assert!((g1.mu - g1.lower).abs() < 1e-9 || (g1.mu - g1.upper).abs() < 1e-9);
        for g in b.gaps.iter().filter(|g| g.open) {
            let m = monodromy(&p, Complex64::new(g.lower, 0.0), 0.0, &Tolerance::tight()).unwrap();
            assert!((m.delta.re.abs() - 1.0).abs() < 1e-10);
        }
        let mid = 0.5 * (g1.lower + g1.upper);
        assert_eq!(b.locate(mid).unwrap(), Location::Gap(1));
        assert_eq!(b.locate(g1.upper + 0.1).unwrap(), Location::Band(1));
        assert!(b.locate(1e3).is_err());
    }

    #[test]
    fn dirichlet_count_is_monotone() {
        let p = PeriodicPotential::series(0.5, vec![3.0], vec![-1.0]).unwrap();
        let tol = Tolerance::default();
        let mut last = 0;
        for j in 0..60 {
            let z = 0.25 * j as f64;
            let (c, _) = dirichlet_count(&p, z, &tol).unwrap();
            assert!(c >= last);
            last = c;
        }
        assert!(last >= 4);
    }
}

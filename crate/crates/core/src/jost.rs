//! Perturbed solutions, the Jost function and the entire locator `F`.
//!
//! Everything here is evaluated at a single momentum. The perturbed equation is
//! `-y'' + (p + q) y = z^2 y` on the half-line with `q` supported on `[0, t]`.

use crate::error::{Error, Result};
use crate::hill::{band_edges, fundamental_with, monodromy, solve_on_grid, BandStructure, Fundamental, Location, Monodromy, IDENTITY};
use crate::momentum::{branch, weyl, Branch, SurfacePoint};
use crate::ode::Tolerance;
use crate::potentials::{constants, CompactPotential, Constants, PeriodicPotential};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

const I: Complex64 = Complex64::new(0.0, 1.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);
const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Above this distance from the real axis the decaying Floquet solution is
/// carried back from `n_t` instead of being assembled at the origin.
const BACKWARD_ROUTE: f64 = 0.5;

/// A periodic background, a compact perturbation and the derived band data.
#[derive(Clone, Debug)]
pub struct Model {
    pub p: PeriodicPotential,
    pub q: CompactPotential,
    pub bands: BandStructure,
    pub constants: Constants,
    pub tol: Tolerance,
}

impl Model {
    /// Build a model, computing gaps `1..=n_max` at tight tolerance.
    pub fn new(p: PeriodicPotential, q: CompactPotential, n_max: usize) -> Result<Self> {
        let bands = band_edges(&p, n_max, &Tolerance::tight())?;
        Ok(Self::with_bands(p, q, bands))
    }

    /// Reuse a band structure already computed for `p`.
    pub fn with_bands(p: PeriodicPotential, q: CompactPotential, bands: BandStructure) -> Self {
        let constants = constants(&p, &q);
        Model { p, q, bands, constants, tol: Tolerance::tight() }
    }

    pub fn tolerance(mut self, tol: Tolerance) -> Self {
        self.tol = tol;
        self
    }

    /// Same background with a different perturbation.
    pub fn perturbed(&self, q: CompactPotential) -> Self {
        let mut m = Self::with_bands(self.p.clone(), q, self.bands.clone());
        m.tol = self.tol;
        m
    }

    pub fn t(&self) -> f64 {
        self.q.t()
    }

    pub fn n_t(&self) -> usize {
        self.constants.n_t
    }

    /// `p + q` in the working gauge.
    pub fn total(&self, x: f64) -> f64 {
        self.p.eval(x) + self.q.eval(x)
    }

    /// Gauge-restored energy of a momentum.
    pub fn energy(&self, z: Complex64) -> Complex64 {
        z * z + self.bands.gauge_shift
    }

    fn perturbed_transfer(&self, energy: Complex64, x0: f64, x1: f64, start: Fundamental) -> Result<Fundamental> {
        let v = |x: f64| self.total(x);
        fundamental_with(&v, energy, x0, x1, start, &self.q.breakpoints(), &self.tol)
    }

    /// Dirichlet gap index when `x` is inside or at the edge of an open gap.
    fn gap_of(&self, x: f64) -> Option<usize> {
        match self.bands.locate(x) {
            Ok(Location::Gap(n)) | Ok(Location::Edge(n)) if n > 0 => Some(n),
            _ => None,
        }
    }
}

/// Values at `x = 0` of the perturbed solutions normalized at `x = t` by
/// `y1(t) = y2'(t) = 1`, `y1'(t) = y2(t) = 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbedBoundaryData {
    pub y1_0: Complex64,
    pub y2_0: Complex64,
    pub y1p_0: Complex64,
    pub y2p_0: Complex64,
}

impl PerturbedBoundaryData {
    pub fn wronskian(&self) -> Complex64 {
        self.y1_0 * self.y2p_0 - self.y1p_0 * self.y2_0
    }
}

pub fn y_pair(model: &Model, z: Complex64) -> Result<PerturbedBoundaryData> {
    let s = model.perturbed_transfer(z * z, model.t(), 0.0, IDENTITY)?;
    Ok(PerturbedBoundaryData { y1_0: s[0], y1p_0: s[1], y2_0: s[2], y2p_0: s[3] })
}

/// Perturbed solutions that coincide with the unperturbed pair for `x >= t`, at `x = 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TildePair {
    pub theta0: Complex64,
    pub theta0p: Complex64,
    pub phi0: Complex64,
    pub phi0p: Complex64,
}

/// All transfer data at one momentum.
#[derive(Clone, Copy, Debug)]
pub struct Evaluation {
    pub mono: Monodromy,
    /// Unperturbed `(theta, theta', phi, phi')` at `x = t`.
    pub at_t: Fundamental,
    pub pair: PerturbedBoundaryData,
    pub tilde: TildePair,
}

impl Evaluation {
    /// `F = phi1 theta~^2 + 2 beta theta~ phi~ - theta1' phi~^2`.
    pub fn big_f(&self) -> Complex64 {
        let m = &self.mono;
        let (a, b) = (self.tilde.theta0, self.tilde.phi0);
        m.phi1 * a * a + 2.0 * m.beta * a * b - m.theta1p * b * b
    }

    /// Magnitude of the largest term of [`Evaluation::big_f`], for relative comparisons.
    pub fn big_f_scale(&self) -> f64 {
        let m = &self.mono;
        let (a, b) = (self.tilde.theta0, self.tilde.phi0);
        (m.phi1 * a * a).norm().max((2.0 * m.beta * a * b).norm()).max((m.theta1p * b * b).norm())
    }

    /// Regularized rim products `phi1 theta~ + (beta +- s) phi~` for `s = i sin k`.
    pub fn rim_products(&self, s: Complex64) -> (Complex64, Complex64) {
        let m = &self.mono;
        let base = m.phi1 * self.tilde.theta0 + m.beta * self.tilde.phi0;
        (base + s * self.tilde.phi0, base - s * self.tilde.phi0)
    }
}

pub fn evaluate(model: &Model, z: Complex64) -> Result<Evaluation> {
    let t = model.t();
    // Past the support of q the tilde pair is the unperturbed one, and carrying it
    // through that stretch only adds cancellation.
    let reach = model.q.support_end();
    let mut grid = vec![reach, t, 1.0];
    grid.sort_by(|x, y| x.partial_cmp(y).unwrap());
    grid.dedup();
    let sols = solve_on_grid(&model.p, z, &grid, &model.tol)?;
    let at = |x: f64| sols[grid.iter().position(|&g| g == x).unwrap()];
    let (mono, at_t) = (mono_from(z, &at(1.0)), at(t));
    let pair = y_pair(model, z)?;
    let tilde = if reach == 0.0 {
        TildePair { theta0: ONE, theta0p: ZERO, phi0: ZERO, phi0p: ONE }
    } else {
        let s = model.perturbed_transfer(z * z, reach, 0.0, IDENTITY)?;
        let f = at(reach);
        TildePair {
            theta0: f[0] * s[0] + f[1] * s[2],
            theta0p: f[0] * s[1] + f[1] * s[3],
            phi0: f[2] * s[0] + f[3] * s[2],
            phi0p: f[2] * s[1] + f[3] * s[3],
        }
    };
    Ok(Evaluation { mono, at_t, pair, tilde })
}

fn mono_from(z: Complex64, s: &Fundamental) -> Monodromy {
    Monodromy {
        z,
        tau: 0.0,
        theta1: s[0],
        theta1p: s[1],
        phi1: s[2],
        phi1p: s[3],
        delta: 0.5 * (s[3] + s[0]),
        beta: 0.5 * (s[3] - s[0]),
    }
}

pub fn tilde_pair(model: &Model, z: Complex64) -> Result<TildePair> {
    evaluate(model, z).map(|e| e.tilde)
}

/// Forward perturbed solution with `Phi(0) = 0`, `Phi'(0) = 1`; returns `(Phi(x), Phi'(x))`.
pub fn phi_pert(model: &Model, x: f64, z: Complex64) -> Result<(Complex64, Complex64)> {
    if x < 0.0 {
        return Err(Error::InvalidRegion("Phi is evaluated for x >= 0".into()));
    }
    let s = model.perturbed_transfer(z * z, 0.0, x, IDENTITY)?;
    Ok((s[2], s[3]))
}

/// Jost data at a surface point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct JostValue {
    pub psi0_plus: Complex64,
    pub psi0_minus: Complex64,
    pub psi0_plus_prime: Complex64,
    pub psi0_minus_prime: Complex64,
    #[serde(rename = "F")]
    pub big_f: Complex64,
    pub theta_tilde0: Complex64,
    pub phi_tilde0: Complex64,
}

/// Carry `e^{+-ik n_t} (1, m)` back to the origin through `p + q`.
fn from_infinity(model: &Model, z: Complex64, m: Complex64, multiplier: Complex64) -> Result<(Complex64, Complex64)> {
    let n_t = model.n_t();
    let start = [Complex64::new(1.0, 0.0), m, Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0)];
    let s = model.perturbed_transfer(z * z, n_t as f64, 0.0, start)?;
    let scale = multiplier.powi(n_t as i32);
    Ok((scale * s[0], scale * s[1]))
}

pub fn jost0(model: &Model, pt: &SurfacePoint) -> Result<JostValue> {
    let ev = evaluate(model, pt.z)?;
    let br = branch(&ev.mono, pt, &model.bands)?;
    jost_from(model, pt, &ev, &br)
}

pub(crate) fn jost_from(model: &Model, pt: &SurfacePoint, ev: &Evaluation, br: &Branch) -> Result<JostValue> {
    let (mp, mm) = weyl(&ev.mono, br, model.gap_of(pt.z.re))?;
    let tl = &ev.tilde;
    let mut plus = (tl.theta0 + mp * tl.phi0, tl.theta0p + mp * tl.phi0p);
    let mut minus = (tl.theta0 + mm * tl.phi0, tl.theta0p + mm * tl.phi0p);
    if pt.z.im > BACKWARD_ROUTE {
        plus = from_infinity(model, pt.z, mp, br.exp_ik)?;
    } else if pt.z.im < -BACKWARD_ROUTE {
        minus = from_infinity(model, pt.z, mm, br.exp_ik.inv())?;
    }
    Ok(JostValue {
        psi0_plus: plus.0,
        psi0_plus_prime: plus.1,
        psi0_minus: minus.0,
        psi0_minus_prime: minus.1,
        big_f: ev.big_f(),
        theta_tilde0: tl.theta0,
        phi_tilde0: tl.phi0,
    })
}

/// `Psi0+` alone, with the magnitude of the terms it was assembled from.
pub fn jost_plus(model: &Model, pt: &SurfacePoint) -> Result<(Complex64, f64)> {
    if pt.z.im > BACKWARD_ROUTE {
        let mono = monodromy(&model.p, pt.z, 0.0, &model.tol)?;
        let br = branch(&mono, pt, &model.bands)?;
        let (mp, _) = weyl(&mono, &br, None)?;
        let (v, _) = from_infinity(model, pt.z, mp, br.exp_ik)?;
        return Ok((v, v.norm()));
    }
    let ev = evaluate(model, pt.z)?;
    let br = branch(&ev.mono, pt, &model.bands)?;
    let (mp, _) = weyl(&ev.mono, &br, model.gap_of(pt.z.re))?;
    let tl = &ev.tilde;
    Ok((tl.theta0 + mp * tl.phi0, tl.theta0.norm() + (mp * tl.phi0).norm()))
}

/// Evaluate [`jost0`] over many points in parallel.
pub fn jost_batch(model: &Model, pts: &[SurfacePoint]) -> Vec<Result<JostValue>> {
    pts.par_iter().map(|pt| jost0(model, pt)).collect()
}

/// The entire locator, assembled from the tilde pair.
pub fn big_f(model: &Model, z: Complex64) -> Result<Complex64> {
    evaluate(model, z).map(|e| e.big_f())
}

/// The entire locator from the perturbed pair and the monodromy of `p(. + t)`.
pub fn big_f_dual(model: &Model, z: Complex64) -> Result<Complex64> {
    let pair = y_pair(model, z)?;
    let shifted = monodromy(&model.p, z, model.t(), &model.tol)?;
    Ok(shifted.phi1 * pair.y1_0 * pair.y1_0 + 2.0 * shifted.beta * pair.y1_0 * pair.y2_0
        - shifted.theta1p * pair.y2_0 * pair.y2_0)
}

/// Rim data at a real momentum inside (or at an edge of) an open gap.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RimProducts {
    pub x: f64,
    /// `phi1 Psi0+` on the upper rim.
    pub g_up: f64,
    /// `phi1 Psi0+` on the lower rim.
    pub g_dn: f64,
    pub phi1: f64,
    pub big_f: f64,
    /// Value at an edge, where the two rims meet.
    pub edge_value: f64,
}

pub fn rim_products(model: &Model, x: f64) -> Result<RimProducts> {
    let z = Complex64::new(x, 0.0);
    let ev = evaluate(model, z)?;
    let d = ev.mono.delta.re;
    // On the upper rim of gap n, i sin k = (-1)^{n+1} sinh h with h = arccosh |delta|.
    // delta^2 - 1 = beta^2 + phi1 theta1' by the Wronskian, without the cancellation near an edge.
    let m = &ev.mono;
    let sinh_h = (m.beta.re * m.beta.re + m.phi1.re * m.theta1p.re).max(0.0).sqrt();
    let s = Complex64::new(-d.signum() * sinh_h, 0.0);
    let (up, dn) = ev.rim_products(s);
    let (edge, _) = ev.rim_products(Complex64::new(0.0, 0.0));
    Ok(RimProducts { x, g_up: up.re, g_dn: dn.re, phi1: ev.mono.phi1.re, big_f: ev.big_f().re, edge_value: edge.re })
}

/// Scattering coefficient `conj(D) / D` at a real band momentum.
pub fn smatrix(model: &Model, x: f64) -> Result<Complex64> {
    match model.bands.locate(x)? {
        Location::Band(_) => {}
        _ => return Err(Error::OnGapEdge(x)),
    }
    let j = jost0(model, &SurfacePoint::new(Complex64::new(x, 0.0)))?;
    Ok(j.psi0_minus / j.psi0_plus)
}

/// Resonance-free region with the support-length exponent: `4 C_F e^{2t|Im z|} < |z|`.
pub fn forbidden(model: &Model, z: Complex64) -> bool {
    4.0 * model.constants.c_f * (2.0 * model.t() * z.im.abs()).exp() < z.norm()
}

/// Variant with exponent `2|Im z|`, independent of the support length.
pub fn forbidden_unit(model: &Model, z: Complex64) -> bool {
    4.0 * model.constants.c_f * (2.0 * z.im.abs()).exp() < z.norm()
}

/// Logarithmic law `|z sin z| <= C_F e^{(2t+1)|Im z|}`.
pub fn log_law_holds(model: &Model, z: Complex64) -> bool {
    (z * z.sin()).norm() <= model.constants.c_f * ((2.0 * model.t() + 1.0) * z.im.abs()).exp()
}

/// Smallest `|Im z|` a resonance of modulus `|z|` can have.
pub fn resonance_envelope(model: &Model, modulus: f64) -> f64 {
    let c = 4.0 * model.constants.c_f;
    if modulus <= c {
        return 0.0;
    }
    (modulus / c).ln() / (2.0 * model.t())
}

/// `e^{+-ik n_t} (Phi'(n_t) - m+- Phi(n_t))`: the Jost values through the forward solution.
pub fn jost_via_phi(model: &Model, pt: &SurfacePoint) -> Result<(Complex64, Complex64, f64)> {
    let ev = evaluate(model, pt.z)?;
    let br = branch(&ev.mono, pt, &model.bands)?;
    let (mp, mm) = weyl(&ev.mono, &br, model.gap_of(pt.z.re))?;
    let n_t = model.n_t() as i32;
    let (phi, phip) = phi_pert(model, model.n_t() as f64, pt.z)?;
    let up = br.exp_ik.powi(n_t);
    let dn = br.exp_ik.powi(-n_t);
    let scale = up.norm() * (phip.norm() + mp.norm() * phi.norm());
    Ok((up * (phip - mp * phi), dn * (phip - mm * phi), scale))
}

/// Asymptotic first-order Jost approximation `1 + (qhat(z) - qhat(0)) / (2iz)`.
pub fn jost_first_order(model: &Model, z: Complex64) -> Complex64 {
    1.0 + (model.q.transform(z) - model.q.transform(Complex64::new(0.0, 0.0))) / (2.0 * I * z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::momentum::Rim;
    use crate::oracle::square_well;
    use crate::potentials::Piece;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn square_well_model() -> Model {
        Model::new(PeriodicPotential::zero(), CompactPotential::constant(1.0, -4.0).unwrap(), 30)
            .unwrap()
            .tolerance(Tolerance::tight())
    }

    fn mathieu_bump() -> Model {
        let p = PeriodicPotential::series(0.0, vec![2.0], vec![]).unwrap();
        let q = CompactPotential::new(1.5, vec![Piece { from: 0.0, to: 1.5, coeffs: vec![0.0, 2.0, -1.0] }]).unwrap();
        Model::new(p, q, 12).unwrap().tolerance(Tolerance::tight())
    }

    #[test]
    fn free_pair_is_trigonometric() {
        let m = Model::new(PeriodicPotential::zero(), CompactPotential::zero(0.7).unwrap(), 4).unwrap();
        let z = c(3.0, -0.4);
        let y = y_pair(&m, z).unwrap();
        assert!((y.y1_0 - (z * 0.7).cos()).norm() < 1e-9);
        assert!((y.y2_0 + (z * 0.7).sin() / z).norm() < 1e-9);
        assert!((y.wronskian() - 1.0).norm() < 1e-10);
    }

    #[test]
    fn square_well_matches_closed_form() {
        let m = square_well_model();
        for &z in &[c(1.0, 0.3), c(-4.0, -2.0), c(7.5, 3.0), c(0.2, -0.1), c(12.0, -6.0), c(2.0, 9.0)] {
            let j = jost0(&m, &SurfacePoint::new(z)).unwrap();
            let exact = square_well::jost(4.0, 1.0, z);
            assert!((j.psi0_plus - exact).norm() <= 1e-8 * exact.norm().max(1.0), "{z}: {} vs {exact}", j.psi0_plus);
        }
    }

    #[test]
    fn unperturbed_jost_is_one() {
        let p = PeriodicPotential::series(0.0, vec![2.0], vec![0.5]).unwrap();
        let m = Model::new(p, CompactPotential::zero(1.0).unwrap(), 6).unwrap();
        for &z in &[c(2.0, 0.7), c(5.0, -1.0), c(0.5, 3.0)] {
            let pt = SurfacePoint::new(z);
            let j = jost0(&m, &pt).unwrap();
            assert!((j.psi0_plus - 1.0).norm() < 1e-9);
            let ev = evaluate(&m, z).unwrap();
            assert!((j.big_f - ev.mono.phi1).norm() < 1e-9);
        }
    }

    #[test]
    fn locator_dual_forms_agree() {
        let m = mathieu_bump();
        for &z in &[c(2.0, 0.5), c(9.0, -2.0), c(20.0, 4.0), c(0.3, 0.0), c(-6.0, 1.0)] {
            let a = big_f(&m, z).unwrap();
            let b = big_f_dual(&m, z).unwrap();
            let scale = evaluate(&m, z).unwrap().big_f_scale().max(1.0);
            assert!((a - b).norm() < 1e-9 * scale, "{z}: {a} vs {b}");
        }
    }

    #[test]
    fn forward_identity_holds() {
        let m = mathieu_bump();
        for &z in &[c(2.0, 0.3), c(8.0, -1.5), c(15.0, 2.5)] {
            let pt = SurfacePoint::new(z);
            let j = jost0(&m, &pt).unwrap();
            let (plus, _, scale) = jost_via_phi(&m, &pt).unwrap();
            assert!((j.psi0_plus - plus).norm() < 1e-8 * scale.max(j.psi0_plus.norm()), "{z}");
        }
    }

    #[test]
    fn rim_products_factor_the_locator() {
        let m = mathieu_bump();
        let g = *m.bands.gap(1).unwrap();
        let x = 0.3 * g.lower + 0.7 * g.upper;
        let r = rim_products(&m, x).unwrap();
        assert!((r.g_up * r.g_dn / r.phi1 - r.big_f).abs() < 1e-9 * r.big_f.abs().max(1.0));
        let up = jost0(&m, &SurfacePoint::on_rim(x, Rim::Upper)).unwrap();
        assert!((up.psi0_plus.re - r.g_up / r.phi1).abs() < 1e-8 * up.psi0_plus.norm().max(1.0));
        let dn = jost0(&m, &SurfacePoint::on_rim(x, Rim::Lower)).unwrap();
        assert!((dn.psi0_plus.re - r.g_dn / r.phi1).abs() < 1e-8 * dn.psi0_plus.norm().max(1.0));
    }

    #[test]
    fn smatrix_is_unimodular() {
        let m = mathieu_bump();
        let x = m.bands.band_zeros[2];
        let s = smatrix(&m, x).unwrap();
        assert!((s.norm() - 1.0).abs() < 1e-9);
        let g = m.bands.gap(1).unwrap();
        assert!(matches!(smatrix(&m, 0.5 * (g.lower + g.upper)), Err(Error::OnGapEdge(_))));
    }

    #[test]
    fn forbidden_predicates() {
        let m = square_well_model();
        assert!(!forbidden(&m, c(1.0, -10.0)));
        let far = c(0.0, -1.0) + 1e8;
        assert!(forbidden(&m, far));
        assert!(forbidden_unit(&m, far));
    }
}

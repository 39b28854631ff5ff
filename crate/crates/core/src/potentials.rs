//! Periodic background potentials and compactly supported perturbations.
//!
//! A [`PeriodicPotential`] stores the raw 1-periodic function together with the
//! energy shift that moves the bottom of its spectrum to zero. All spectral
//! computations use the shifted ("working") potential; the raw values are kept
//! only for reporting.

use crate::error::{Error, Result};
use crate::numeric::integrate_piecewise;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

const TWO_PI: f64 = 2.0 * PI;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum PeriodicForm {
    /// `mean + sum_m cos[m-1] cos(2 pi m x) + sin[m-1] sin(2 pi m x)`.
    Series { mean: f64, cos: Vec<f64>, sin: Vec<f64> },
    /// Values on the uniform grid `j / len`, interpolated by a periodic cubic spline.
    Sampled { values: Vec<f64> },
}

#[derive(Clone, Debug)]
struct PeriodicSpline {
    values: Vec<f64>,
    second: Vec<f64>,
}

impl PeriodicSpline {
    fn new(values: Vec<f64>) -> Self {
        let n = values.len();
        let h = 1.0 / n as f64;
        let rhs: Vec<f64> = (0..n)
            .map(|j| 6.0 * (values[(j + 1) % n] - 2.0 * values[j] + values[(j + n - 1) % n]) / (h * h))
            .collect();
        // m_{j-1} + 4 m_j + m_{j+1} = rhs_j; strictly diagonally dominant, Gauss-Seidel converges.
        let mut second = vec![0.0; n];
        for _ in 0..200 {
            let mut delta = 0.0f64;
            for j in 0..n {
                let new = (rhs[j] - second[(j + n - 1) % n] - second[(j + 1) % n]) / 4.0;
                delta = delta.max((new - second[j]).abs());
                second[j] = new;
            }
            let scale = second.iter().fold(1.0f64, |m, v| m.max(v.abs()));
            if delta <= 1e-16 * scale {
                break;
            }
        }
        PeriodicSpline { values, second }
    }

    fn eval(&self, x: f64) -> f64 {
        let n = self.values.len();
        let h = 1.0 / n as f64;
        let u = x.rem_euclid(1.0) * n as f64;
        let j = (u.floor() as usize).min(n - 1);
        let s = u - j as f64;
        let j1 = (j + 1) % n;
        let a = 1.0 - s;
        a * self.values[j]
            + s * self.values[j1]
            + h * h / 6.0 * ((a * a * a - a) * self.second[j] + (s * s * s - s) * self.second[j1])
    }
}

/// A real 1-periodic potential with its spectral gauge.
#[derive(Clone, Debug)]
pub struct PeriodicPotential {
    form: PeriodicForm,
    mean: f64,
    cos: Vec<f64>,
    sin: Vec<f64>,
    spline: Option<PeriodicSpline>,
    gauge_shift: f64,
    l1_norm: f64,
    min: f64,
    max: f64,
}

impl PeriodicPotential {
    pub fn series(mean: f64, cos: Vec<f64>, sin: Vec<f64>) -> Result<Self> {
        Self::from_form(PeriodicForm::Series { mean, cos, sin })
    }

    pub fn sampled(values: Vec<f64>) -> Result<Self> {
        Self::from_form(PeriodicForm::Sampled { values })
    }

    pub fn zero() -> Self {
        Self::series(0.0, vec![], vec![]).expect("zero potential is valid")
    }

    pub fn from_form(form: PeriodicForm) -> Result<Self> {
        let mut pot = match &form {
            PeriodicForm::Series { mean, cos, sin } => {
                if !mean.is_finite() || cos.iter().chain(sin.iter()).any(|c| !c.is_finite()) {
                    return Err(Error::InvalidPotential("non-finite Fourier coefficient".into()));
                }
                let mut cos = cos.clone();
                let mut sin = sin.clone();
                let m = cos.len().max(sin.len());
                cos.resize(m, 0.0);
                sin.resize(m, 0.0);
                PeriodicPotential {
                    form: form.clone(),
                    mean: *mean,
                    cos,
                    sin,
                    spline: None,
                    gauge_shift: 0.0,
                    l1_norm: 0.0,
                    min: 0.0,
                    max: 0.0,
                }
            }
            PeriodicForm::Sampled { values } => {
                if values.len() < 4 {
                    return Err(Error::InvalidPotential("need at least 4 samples".into()));
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidPotential("non-finite sample".into()));
                }
                let spline = PeriodicSpline::new(values.clone());
                let knots: Vec<f64> = (0..=values.len()).map(|j| j as f64 / values.len() as f64).collect();
                let mean = integrate_piecewise(|x| spline.eval(x), &knots, 1e-14);
                PeriodicPotential {
                    form: form.clone(),
                    mean,
                    cos: vec![],
                    sin: vec![],
                    spline: Some(spline),
                    gauge_shift: 0.0,
                    l1_norm: 0.0,
                    min: 0.0,
                    max: 0.0,
                }
            }
        };
        let grid = 4096;
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for j in 0..grid {
            let v = pot.eval_raw(j as f64 / grid as f64);
            lo = lo.min(v);
            hi = hi.max(v);
        }
        pot.min = lo;
        pot.max = hi;
        pot.gauge_shift = crate::hill::ground_energy(&pot)?;
        let shift = pot.gauge_shift;
        pot.l1_norm = integrate_piecewise(|x| (pot.eval_raw(x) - shift).abs(), &pot.knots(0.0, 1.0), 1e-13);
        Ok(pot)
    }

    pub fn form(&self) -> &PeriodicForm {
        &self.form
    }

    /// Bottom of the spectrum of the raw potential; subtracted in [`Self::eval`].
    pub fn gauge_shift(&self) -> f64 {
        self.gauge_shift
    }

    /// Raw value `p(x)`.
    pub fn eval_raw(&self, x: f64) -> f64 {
        match &self.spline {
            Some(s) => s.eval(x),
            None => {
                let mut v = self.mean;
                if self.cos.is_empty() {
                    return v;
                }
                let (s1, c1) = (TWO_PI * x).sin_cos();
                let (mut cm, mut sm) = (c1, s1);
                for (a, b) in self.cos.iter().zip(&self.sin) {
                    v += a * cm + b * sm;
                    let next = cm * c1 - sm * s1;
                    sm = sm * c1 + cm * s1;
                    cm = next;
                }
                v
            }
        }
    }

    /// Working value `p(x) - gauge_shift`.
    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        self.eval_raw(x) - self.gauge_shift
    }

    pub fn raw_range(&self) -> (f64, f64) {
        (self.min, self.max)
    }

    /// `int_0^1 |p - gauge_shift|`.
    pub fn l1_norm(&self) -> f64 {
        self.l1_norm
    }

    /// Mean of the working potential.
    pub fn working_mean(&self) -> f64 {
        self.mean - self.gauge_shift
    }

    /// `(p0, p_cn, p_sn)`: raw mean and `int_0^1 p cos(2 pi n x)`, `int_0^1 p sin(2 pi n x)`.
    pub fn fourier(&self, n: usize) -> (f64, f64, f64) {
        if n == 0 {
            return (self.mean, self.mean, 0.0);
        }
        match &self.spline {
            None => {
                let c = self.cos.get(n - 1).copied().unwrap_or(0.0);
                let s = self.sin.get(n - 1).copied().unwrap_or(0.0);
                (self.mean, 0.5 * c, 0.5 * s)
            }
            Some(_) => {
                let knots = self.knots(0.0, 1.0);
                let w = TWO_PI * n as f64;
                let c = integrate_piecewise(|x| self.eval_raw(x) * (w * x).cos(), &knots, 1e-14);
                let s = integrate_piecewise(|x| self.eval_raw(x) * (w * x).sin(), &knots, 1e-14);
                (self.mean, c, s)
            }
        }
    }

    /// Whether `p(x) = p(1 - x)`.
    pub fn is_even(&self) -> bool {
        match &self.spline {
            None => self.sin.iter().all(|&b| b == 0.0),
            Some(s) => {
                let n = s.values.len();
                (1..n).all(|j| (s.values[j] - s.values[n - j]).abs() <= 1e-14 * (1.0 + s.values[j].abs()))
            }
        }
    }

    /// Quadrature knots inside `[a, b]`: spline nodes for sampled data, unit marks otherwise.
    pub(crate) fn knots(&self, a: f64, b: f64) -> Vec<f64> {
        let per_unit = match &self.spline {
            Some(s) => s.values.len(),
            None => 8 * (1 + self.cos.len()),
        };
        let n = ((b - a) * per_unit as f64).ceil().max(1.0) as usize;
        (0..=n).map(|j| a + (b - a) * j as f64 / n as f64).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Piece {
    pub from: f64,
    pub to: f64,
    /// Polynomial coefficients in powers of `(x - from)`.
    pub coeffs: Vec<f64>,
}

impl Piece {
    fn eval(&self, x: f64) -> f64 {
        let s = x - self.from;
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * s + c)
    }
}

/// Piecewise polynomial perturbation supported in `[0, t]`.
#[derive(Clone, Debug, PartialEq)]
pub struct CompactPotential {
    t: f64,
    pieces: Vec<Piece>,
}

impl CompactPotential {
    pub fn new(t: f64, pieces: Vec<Piece>) -> Result<Self> {
        if !(t.is_finite() && t > 0.0) {
            return Err(Error::InvalidPotential(format!("support length must be positive, got {t}")));
        }
        let eps = 1e-12 * t.max(1.0);
        let mut prev_end = 0.0;
        for (i, pc) in pieces.iter().enumerate() {
            if !(pc.from.is_finite() && pc.to.is_finite() && pc.from < pc.to) {
                return Err(Error::InvalidPotential(format!("piece {i} has an empty or invalid interval")));
            }
            if pc.from < prev_end - eps || pc.from < -eps || pc.to > t + eps {
                return Err(Error::InvalidPotential(format!("piece {i} overlaps or leaves [0, t]")));
            }
            if pc.coeffs.is_empty() || pc.coeffs.iter().any(|c| !c.is_finite()) {
                return Err(Error::InvalidPotential(format!("piece {i} has invalid coefficients")));
            }
            prev_end = pc.to;
        }
        if let Some(last) = pieces.last() {
            if (last.to - t).abs() > eps {
                return Err(Error::InvalidPotential(format!(
                    "support ends at {} but t = {t}",
                    last.to
                )));
            }
            if last.coeffs.iter().all(|&c| c == 0.0) {
                return Err(Error::InvalidPotential("perturbation vanishes next to t".into()));
            }
        }
        Ok(CompactPotential { t, pieces })
    }

    /// The zero perturbation with nominal support `[0, t]`.
    pub fn zero(t: f64) -> Result<Self> {
        Self::new(t, vec![])
    }

    /// A constant `value` on `[0, t]`.
    pub fn constant(t: f64, value: f64) -> Result<Self> {
        Self::new(t, vec![Piece { from: 0.0, to: t, coeffs: vec![value] }])
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    pub fn is_zero(&self) -> bool {
        self.pieces.is_empty()
    }

    pub fn eval(&self, x: f64) -> f64 {
        if x < 0.0 || x > self.t {
            return 0.0;
        }
        for (i, pc) in self.pieces.iter().enumerate() {
            let last = i + 1 == self.pieces.len();
            if x >= pc.from && (x < pc.to || (last && x <= pc.to)) {
                return pc.eval(x);
            }
        }
        0.0
    }

    /// Right end of the closed support: the last piece with a nonzero coefficient.
    pub fn support_end(&self) -> f64 {
        self.pieces.iter().filter(|pc| pc.coeffs.iter().any(|&c| c != 0.0)).map(|pc| pc.to).fold(0.0, f64::max)
    }

    /// Interior breakpoints where `q` may jump.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut b: Vec<f64> = self.pieces.iter().flat_map(|p| [p.from, p.to]).collect();
        b.sort_by(|a, c| a.partial_cmp(c).unwrap());
        b.dedup_by(|a, c| (*a - *c).abs() < 1e-14);
        b
    }

    /// `int_0^t q`.
    pub fn integral(&self) -> f64 {
        self.transform(Complex64::new(0.0, 0.0)).re
    }

    /// `int_0^t q(x) e^{2 i z x} dx`, in closed form piece by piece.
    pub fn transform(&self, z: Complex64) -> Complex64 {
        let w = Complex64::new(0.0, 2.0) * z;
        self.pieces
            .iter()
            .map(|pc| {
                let len = pc.to - pc.from;
                let moments = exp_moments(w, len, pc.coeffs.len());
                let s: Complex64 = pc.coeffs.iter().zip(&moments).map(|(c, m)| m * c).sum();
                (w * pc.from).exp() * s
            })
            .sum()
    }

    /// `q(x / tau)`, supported on `[0, tau t]`.
    pub fn scaled(&self, tau: f64) -> Result<Self> {
        if !(tau.is_finite() && tau > 0.0) {
            return Err(Error::InvalidPotential(format!("scale must be positive, got {tau}")));
        }
        let pieces = self
            .pieces
            .iter()
            .map(|pc| Piece {
                from: pc.from * tau,
                to: pc.to * tau,
                coeffs: pc.coeffs.iter().enumerate().map(|(k, c)| c / tau.powi(k as i32)).collect(),
            })
            .collect();
        Self::new(self.t * tau, pieces)
    }
}

/// `I_k = int_0^len s^k e^{w s} ds` for `k < count`.
fn exp_moments(w: Complex64, len: f64, count: usize) -> Vec<Complex64> {
    let wl = w * len;
    if wl.norm() <= (count as f64 + 1.0).max(2.0) {
        // Power series in w: I_k = sum_j w^j len^{k+j+1} / (j! (k+j+1)).
        (0..count)
            .map(|k| {
                let mut term = Complex64::new(len.powi(k as i32 + 1), 0.0);
                let mut acc = term / (k as f64 + 1.0);
                for j in 1..200 {
                    term = term * wl / j as f64;
                    let add = term / (k + j + 1) as f64;
                    acc += add;
                    if add.norm() <= 1e-18 * acc.norm() && j > 4 {
                        break;
                    }
                }
                acc
            })
            .collect()
    } else {
        let e = wl.exp();
        let mut out = Vec::with_capacity(count);
        let mut prev = (e - 1.0) / w;
        out.push(prev);
        let mut lk = 1.0;
        for k in 1..count {
            lk *= len;
            prev = (e * lk - prev * k as f64) / w;
            out.push(prev);
        }
        out
    }
}

/// Derived scalars of a problem.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Constants {
    pub t: f64,
    pub n_t: usize,
    pub c_f: f64,
    pub p_l1: f64,
    pub pq_l1: f64,
}

/// Support length, its ceiling, and the Jost-function bound constant.
pub fn constants(p: &PeriodicPotential, q: &CompactPotential) -> Constants {
    let t = q.t();
    let n_t = t.ceil() as usize;
    let mut knots = p.knots(0.0, t);
    knots.extend(q.breakpoints());
    knots.sort_by(|a, b| a.partial_cmp(b).unwrap());
    knots.dedup_by(|a, b| (*a - *b).abs() < 1e-14);
    let pq_l1 = integrate_piecewise(|x| (p.eval(x) + q.eval(x)).abs(), &knots, 1e-13);
    let p_l1 = p.l1_norm();
    let c_f = 3.0 * (p_l1 + pq_l1) * (2.0 * pq_l1 + p_l1).exp();
    Constants { t, n_t, c_f, p_l1, pq_l1 }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::integrate_complex;
    use proptest::prelude::*;

    #[test]
    fn cosine_potential_fourier_data() {
        let p = PeriodicPotential::series(0.0, vec![2.0], vec![]).unwrap();
        let (p0, c1, s1) = p.fourier(1);
        assert_eq!((p0, c1, s1), (0.0, 1.0, 0.0));
        assert!(p.is_even());
        assert!((p.eval_raw(0.25)).abs() < 1e-15);
        assert!((p.eval_raw(0.0) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn zero_potential_has_zero_gauge() {
        let p = PeriodicPotential::zero();
        assert_eq!(p.gauge_shift(), 0.0);
        assert_eq!(p.l1_norm(), 0.0);
    }

    #[test]
    fn sampled_spline_reproduces_a_smooth_series() {
        let n = 256;
        let values: Vec<f64> = (0..n)
            .map(|j| {
                let x = j as f64 / n as f64;
                1.0 + 2.0 * (TWO_PI * x).cos() - 0.5 * (2.0 * TWO_PI * x).sin()
            })
            .collect();
        let s = PeriodicPotential::sampled(values).unwrap();
        let r = PeriodicPotential::series(1.0, vec![2.0, 0.0], vec![0.0, -0.5]).unwrap();
        for j in 0..37 {
            let x = j as f64 / 37.0;
            assert!((s.eval_raw(x) - r.eval_raw(x)).abs() < 1e-6);
        }
        let (m, c1, s2) = (s.fourier(0).0, s.fourier(1).1, s.fourier(2).2);
        assert!((m - 1.0).abs() < 1e-8);
        assert!((c1 - 1.0).abs() < 1e-6);
        assert!((s2 + 0.25).abs() < 1e-6);
        assert!((s.gauge_shift() - r.gauge_shift()).abs() < 1e-5);
    }

    #[test]
    fn invalid_perturbations_are_rejected() {
        assert!(CompactPotential::zero(0.0).is_err());
        assert!(CompactPotential::new(1.0, vec![Piece { from: 0.0, to: 0.5, coeffs: vec![1.0] }]).is_err());
        assert!(CompactPotential::new(1.0, vec![Piece { from: 0.0, to: 1.0, coeffs: vec![0.0] }]).is_err());
        assert!(CompactPotential::new(
            1.0,
            vec![
                Piece { from: 0.0, to: 0.6, coeffs: vec![1.0] },
                Piece { from: 0.5, to: 1.0, coeffs: vec![1.0] }
            ]
        )
        .is_err());
        assert!(PeriodicPotential::series(f64::NAN, vec![], vec![]).is_err());
    }

    #[test]
    fn constants_of_square_well() {
        let p = PeriodicPotential::zero();
        let q = CompactPotential::constant(1.0, -4.0).unwrap();
        let c = constants(&p, &q);
        assert_eq!(c.n_t, 1);
        assert!((c.pq_l1 - 4.0).abs() < 1e-12);
        assert!((c.c_f - 12.0 * 8.0f64.exp()).abs() < 1e-6 * c.c_f);
        let q2 = CompactPotential::constant(1.5, 1.0).unwrap();
        assert_eq!(constants(&p, &q2).n_t, 2);
    }

    #[test]
    fn scaling_stretches_support() {
        let q = CompactPotential::new(1.0, vec![Piece { from: 0.0, to: 1.0, coeffs: vec![1.0, 2.0, -3.0] }]).unwrap();
        let s = q.scaled(4.0).unwrap();
        assert_eq!(s.t(), 4.0);
        for &x in &[0.0, 0.7, 2.3, 4.0] {
            assert!((s.eval(x) - q.eval(x / 4.0)).abs() < 1e-14);
        }
    }

    fn arb_piecewise() -> impl Strategy<Value = CompactPotential> {
        (0.3f64..2.5, prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 1..5), 1..4)).prop_map(|(t, polys)| {
            let n = polys.len();
            let pieces = polys
                .into_iter()
                .enumerate()
                .map(|(i, mut c)| {
                    if i + 1 == n {
                        c[0] += 5.0;
                    }
                    Piece { from: t * i as f64 / n as f64, to: t * (i + 1) as f64 / n as f64, coeffs: c }
                })
                .collect();
            CompactPotential::new(t, pieces).unwrap()
        })
    }

    proptest! {
        #[test]
        fn vanishes_outside_support(q in arb_piecewise(), x in 0.0f64..10.0) {
            prop_assert_eq!(q.eval(q.t() + 1e-9 + x), 0.0);
            prop_assert_eq!(q.eval(-1e-9 - x), 0.0);
        }

        #[test]
        fn transform_matches_quadrature(q in arb_piecewise(), re in -30.0f64..30.0, im in -3.0f64..3.0) {
            let z = Complex64::new(re, im);
            let closed = q.transform(z);
            let mut brk = q.breakpoints();
            brk.insert(0, 0.0);
            brk.push(q.t());
            brk.dedup();
            let quad: Complex64 = brk.windows(2).map(|w| integrate_complex(
                |x| Complex64::new(q.eval(x), 0.0) * (Complex64::new(0.0, 2.0) * z * x).exp(), w[0], w[1], 1e-13)).sum();
            prop_assert!((closed - quad).norm() <= 1e-9 * (1.0 + quad.norm()), "{} vs {}", closed, quad);
        }

        #[test]
        fn transform_is_conjugate_symmetric(q in arb_piecewise(), re in -20.0f64..20.0, im in -2.0f64..2.0) {
            let z = Complex64::new(re, im);
            let a = q.transform(-z.conj());
            let b = q.transform(z).conj();
            prop_assert!((a - b).norm() <= 1e-10 * (1.0 + b.norm()));
        }
    }
}

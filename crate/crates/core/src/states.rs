//! Real gap states, states on the imaginary axis, resonances, norming
//! constants and structural diagnostics.

use crate::error::{Error, Result};
use crate::hill::{monodromy, Gap};
use crate::jost::{evaluate, jost0, jost_plus, phi_pert, resonance_envelope, rim_products, Model, RimProducts};
use crate::momentum::{branch, weyl, Rim, SurfacePoint};
use crate::numeric::brent_with;
use crate::ode::{propagate, State as OdeState};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Bound,
    Antibound,
    Virtual,
    Resonance,
}

impl Kind {
    pub fn as_str(self) -> &'static str {
        match self {
            Kind::Bound => "bound",
            Kind::Antibound => "antibound",
            Kind::Virtual => "virtual",
            Kind::Resonance => "resonance",
        }
    }

    fn rim(self) -> Option<Rim> {
        match self {
            Kind::Bound => Some(Rim::Upper),
            Kind::Antibound => Some(Rim::Lower),
            _ => None,
        }
    }
}

/// A located state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub z: Complex64,
    pub rim: Option<Rim>,
    pub kind: Kind,
    pub multiplicity: usize,
    /// Gap index for real states; `Some(0)` for the imaginary axis.
    pub gap: Option<usize>,
    pub residual_f: f64,
    pub residual_up: f64,
    pub residual_dn: f64,
    /// Gauge-restored energy `z^2 + gauge_shift`.
    pub energy: Complex64,
}

impl State {
    pub fn point(&self) -> SurfacePoint {
        match self.rim {
            Some(r) => SurfacePoint::on_rim(self.z.re, r),
            None => SurfacePoint::new(self.z),
        }
    }
}

/// Decision thresholds. `tol_mu` and `tol_edge` are fractions of the gap width.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    pub tol_mu: f64,
    pub tol_edge: f64,
    pub tol_cls: f64,
    pub samples: usize,
    pub persistence: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds { tol_mu: 1e-6, tol_edge: 1e-6, tol_cls: 1e-3, samples: 40, persistence: 1e-8 }
    }
}

/// Relative size below which a sampled value counts as an exact zero.
const ZERO_REL: f64 = 1e-13;

/// Roots of a real function from samples: sign changes, exact hits, and
/// sign-preserving dips that reach or cross zero. Returns `(root, multiplicity)`.
pub fn real_roots<F>(f: F, xs: &[f64]) -> Result<Vec<(f64, usize)>>
where
    F: Fn(f64) -> Result<(f64, f64)> + Sync,
{
    let vals: Vec<(f64, f64)> = xs.par_iter().map(|&x| f(x)).collect::<Result<_>>()?;
    let value = |x: f64| f(x).map(|v| v.0);
    let is_zero = |i: usize| vals[i].0.abs() <= ZERO_REL * vals[i].1;
    let span = xs[xs.len() - 1] - xs[0];
    let xtol = 1e-15 * xs[xs.len() - 1].abs().max(1.0);
    let mut roots = Vec::new();
    for i in 0..xs.len() {
        if is_zero(i) {
            let crossing = i > 0 && i + 1 < xs.len() && vals[i - 1].0 * vals[i + 1].0 < 0.0;
            let edge = i == 0 || i + 1 == xs.len();
            roots.push((xs[i], if crossing || edge { 1 } else { 2 }));
        }
    }
    for i in 0..xs.len() - 1 {
        if is_zero(i) || is_zero(i + 1) {
            continue;
        }
        let (a, b) = (vals[i].0, vals[i + 1].0);
        if a * b < 0.0 {
            roots.push((brent_with(value, xs[i], xs[i + 1], a, b, xtol, 200)?, 1));
        }
    }
    for i in 1..xs.len() - 1 {
        if is_zero(i - 1) || is_zero(i) || is_zero(i + 1) {
            continue;
        }
        let (l, m, r) = (vals[i - 1].0, vals[i].0, vals[i + 1].0);
        if l * m <= 0.0 || m * r <= 0.0 || m.abs() >= l.abs() || m.abs() >= r.abs() {
            continue;
        }
        let sgn = m.signum();
        let (x_min, v_min) = golden_min(|x| value(x).map(|v| sgn * v), xs[i - 1], xs[i + 1], 1e-13 * span)?;
        let scale = vals[i].1;
        if v_min.abs() <= ZERO_REL * scale * 10.0 {
            roots.push((x_min, 2));
        } else if v_min < 0.0 {
            let v = |x: f64| value(x).map(|v| sgn * v);
            roots.push((brent_with(v, xs[i - 1], x_min, sgn * l, v_min, xtol, 200)?, 1));
            roots.push((brent_with(v, x_min, xs[i + 1], v_min, sgn * r, xtol, 200)?, 1));
        }
    }
    roots.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    Ok(roots)
}

fn golden_min<F: Fn(f64) -> Result<f64>>(f: F, mut a: f64, mut b: f64, xtol: f64) -> Result<(f64, f64)> {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    while (b - a).abs() > xtol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d)?;
        }
    }
    Ok(if fc < fd { (c, fc) } else { (d, fd) })
}

/// The state of the unperturbed operator on gap `n`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnperturbedState {
    pub n: usize,
    pub mu: f64,
    /// Signed `Im k` at the Dirichlet root: positive on the physical rim.
    pub h: f64,
    pub kind: Kind,
}

fn open_gap(model: &Model, n: usize) -> Result<Gap> {
    match model.bands.gap(n) {
        Some(g) if g.open => Ok(*g),
        Some(_) => Err(Error::ClosedGap(n)),
        None => Err(Error::BeyondTruncation { z: f64::NAN, n_max: model.bands.n_max() }),
    }
}

fn parity(n: usize) -> f64 {
    if n.is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

pub fn unperturbed_state(model: &Model, n: usize, th: &Thresholds) -> Result<UnperturbedState> {
    let g = open_gap(model, n)?;
    let edge_tol = th.tol_edge * g.width();
    let mono = monodromy(&model.p, Complex64::new(g.mu, 0.0), 0.0, &model.tol)?;
    let h = (-parity(n) * mono.beta.re).asinh();
    let kind = if (g.mu - g.lower).abs() <= edge_tol || (g.upper - g.mu).abs() <= edge_tol {
        Kind::Virtual
    } else if h > 0.0 {
        Kind::Bound
    } else {
        Kind::Antibound
    };
    Ok(UnperturbedState { n, mu: g.mu, h, kind })
}

/// `Phi(n_t, mu_n)` relative to `Phi'(n_t, mu_n) / mu_n`; zero iff the unperturbed state survives.
pub fn persistence_residual(model: &Model, n: usize) -> Result<f64> {
    let g = open_gap(model, n)?;
    let (phi, phip) = phi_pert(model, model.n_t() as f64, Complex64::new(g.mu, 0.0))?;
    Ok(phi.norm() / (phip.norm() / g.mu.max(1.0)).max(f64::MIN_POSITIVE))
}

/// States found on one gap.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub n: usize,
    pub lower: f64,
    pub upper: f64,
    pub mu: f64,
    pub states: Vec<State>,
    /// Total multiplicity.
    pub count: usize,
    pub parity_odd: bool,
    pub persistent: bool,
    pub unperturbed: UnperturbedState,
}

fn make_real_state(model: &Model, n: usize, x: f64, kind: Kind, multiplicity: usize, r: &RimProducts) -> State {
    let z = Complex64::new(x, 0.0);
    State {
        z,
        rim: kind.rim(),
        kind,
        multiplicity,
        gap: Some(n),
        residual_f: r.big_f.abs(),
        residual_up: r.g_up.abs(),
        residual_dn: r.g_dn.abs(),
        energy: model.energy(z),
    }
}

/// Re-solve a simple root of `F` on the smaller rim factor alone. A steep
/// factor leaves a residual far above rounding when only `F` was solved.
fn polish_on_factor(model: &Model, x: f64, r: RimProducts, gap: (f64, f64)) -> Result<(f64, RimProducts)> {
    let factor = |y: f64| -> Result<f64> {
        let v = rim_products(model, y)?;
        Ok(if r.g_up.abs() <= r.g_dn.abs() { v.g_up } else { v.g_dn })
    };
    let f0 = factor(x)?;
    if f0 == 0.0 {
        return Ok((x, r));
    }
    let mut h = 1e-13 * x.abs().max(1.0);
    while h < 1e-6 * (gap.1 - gap.0) {
        let (a, b) = ((x - h).max(gap.0), (x + h).min(gap.1));
        let (fa, fb) = (factor(a)?, factor(b)?);
        if fa.signum() != fb.signum() {
            let y = brent_with(factor, a, b, fa, fb, 4.0 * f64::EPSILON * x.abs(), 200)?;
            let ry = rim_products(model, y)?;
            return Ok((y, ry));
        }
        h *= 8.0;
    }
    Ok((x, r))
}

pub fn find_gap_states(model: &Model, n: usize, th: &Thresholds) -> Result<GapReport> {
    let g = open_gap(model, n)?;
    let unperturbed = unperturbed_state(model, n, th)?;
    let persistent = persistence_residual(model, n)? <= th.persistence;
    let w = g.width();
    let samples = th.samples.max(2);
    let mut xs: Vec<f64> = (0..=samples).map(|j| g.lower + w * j as f64 / samples as f64).collect();
    if g.mu > g.lower && g.mu < g.upper && xs.iter().all(|x| (x - g.mu).abs() > 1e-12 * w) {
        xs.push(g.mu);
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    }
    let f = |x: f64| {
        let ev = evaluate(model, Complex64::new(x, 0.0))?;
        Ok((ev.big_f().re, ev.big_f_scale()))
    };
    let roots = real_roots(f, &xs)?;

    let mut states = Vec::new();
    for (x, mult) in roots {
        let r = rim_products(model, x)?;
        if (x - g.mu).abs() <= th.tol_mu * w && persistent {
            let mu_r = rim_products(model, g.mu)?;
            states.push(make_real_state(model, n, g.mu, unperturbed.kind, mult, &mu_r));
            continue;
        }
        if (x - g.lower).abs() <= th.tol_edge * w || (g.upper - x).abs() <= th.tol_edge * w {
            let ev = evaluate(model, Complex64::new(x, 0.0))?;
            let scale = (ev.mono.phi1 * ev.tilde.theta0).norm() + (ev.mono.beta * ev.tilde.phi0).norm() + ev.tilde.phi0.norm();
            if r.edge_value.abs() <= th.tol_cls * scale {
                states.push(make_real_state(model, n, x, Kind::Virtual, mult, &r));
            }
            // A root this close to an edge that is not explained by the edge value is dropped.
            continue;
        }
        let (x, r) = polish_on_factor(model, x, r, (g.lower, g.upper))?;
        let (up, dn) = (r.g_up.abs(), r.g_dn.abs());
        let kind = if up <= th.tol_cls * dn {
            Kind::Bound
        } else if dn <= th.tol_cls * up {
            Kind::Antibound
        } else {
            return Err(Error::ClassificationAmbiguous { n, z: x });
        };
        states.push(make_real_state(model, n, x, kind, mult, &r));
    }
    let count: usize = states.iter().map(|s| s.multiplicity).sum();
    Ok(GapReport { n, lower: g.lower, upper: g.upper, mu: g.mu, states, count, parity_odd: count % 2 == 1, persistent, unperturbed })
}

/// Reports for every open gap `1..=n_max`, in order.
pub fn find_all_gap_states(model: &Model, th: &Thresholds) -> Result<Vec<GapReport>> {
    let open: Vec<usize> = model.bands.gaps.iter().filter(|g| g.open).map(|g| g.n).collect();
    open.par_iter().map(|&n| find_gap_states(model, n, th)).collect()
}

/// States on the imaginary axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxisReport {
    pub states: Vec<State>,
    /// `Psi0+` vanishes at the origin.
    pub virtual_at_zero: bool,
}

/// Distance kept from the origin on the imaginary axis.
const AXIS_GUARD: f64 = 1e-6;

pub fn find_negative_states(model: &Model, z_max: f64) -> Result<AxisReport> {
    let depth = lowest_potential(model);
    let top = (-depth).max(0.0).sqrt() + 0.5;
    let upper = axis_grid(AXIS_GUARD, top.min(z_max.max(AXIS_GUARD * 2.0)), 60.0);
    let lower = axis_grid(AXIS_GUARD, z_max, 20.0);
    let psi = |h: f64| {
        let (v, s) = jost_plus(model, &SurfacePoint::new(Complex64::new(0.0, h)))?;
        Ok((v.re, s))
    };
    let mut states = Vec::new();
    for (h, mult) in real_roots(psi, &upper)? {
        states.push(axis_state(model, h, Kind::Bound, mult)?);
    }
    let neg: Vec<f64> = lower.iter().rev().map(|h| -h).collect();
    for (h, mult) in real_roots(psi, &neg)? {
        states.push(axis_state(model, h, Kind::Antibound, mult)?);
    }
    let (near0, _) = jost_plus(model, &SurfacePoint::new(Complex64::new(0.0, AXIS_GUARD)))?;
    Ok(AxisReport { states, virtual_at_zero: near0.norm() < 1e3 * AXIS_GUARD })
}

fn axis_grid(from: f64, to: f64, per_unit: f64) -> Vec<f64> {
    let n = ((to - from) * per_unit).ceil().max(8.0) as usize;
    (0..=n).map(|j| from + (to - from) * j as f64 / n as f64).collect()
}

/// Lower bound for `p + q` in the working gauge.
fn lowest_potential(model: &Model) -> f64 {
    let span = model.t().max(1.0);
    let n = 4000;
    (0..=n)
        .map(|j| model.total(span * j as f64 / n as f64))
        .fold(f64::INFINITY, f64::min)
}

fn axis_state(model: &Model, h: f64, kind: Kind, multiplicity: usize) -> Result<State> {
    let z = Complex64::new(0.0, h);
    let (v, _) = jost_plus(model, &SurfacePoint::new(z))?;
    Ok(State {
        z,
        rim: None,
        kind,
        multiplicity,
        gap: Some(0),
        residual_f: v.norm(),
        residual_up: v.norm(),
        residual_dn: f64::NAN,
        energy: model.energy(z),
    })
}

/// Rectangle in the lower half-plane.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub re_min: f64,
    pub re_max: f64,
    pub im_min: f64,
    pub im_max: f64,
}

impl Region {
    pub fn parse(s: &str) -> Result<Self> {
        let v: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::InvalidRegion(format!("{s}: {e}")))?;
        if v.len() != 4 {
            return Err(Error::InvalidRegion(format!("expected x0,x1,y0,y1, got {s}")));
        }
        let r = Region { re_min: v[0], re_max: v[1], im_min: v[2], im_max: v[3] };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.re_min < self.re_max && self.im_min < self.im_max && self.im_max < 0.0) {
            return Err(Error::InvalidRegion(format!("{self:?} must be a non-empty box below the real axis")));
        }
        Ok(())
    }
}

/// Order of vanishing of `q` at the right end of its support.
fn end_order(model: &Model) -> usize {
    match model.q.pieces().last() {
        None => 0,
        Some(pc) => {
            let len = pc.to - pc.from;
            let mut coeffs = pc.coeffs.clone();
            for order in 0..coeffs.len() {
                let v: f64 = coeffs.iter().enumerate().map(|(j, c)| c * len.powi(j as i32)).sum();
                let size: f64 = coeffs.iter().enumerate().map(|(j, c)| (c * len.powi(j as i32)).abs()).sum();
                if v.abs() > 1e-12 * size.max(1e-300) {
                    return order;
                }
                coeffs = coeffs.iter().enumerate().skip(1).map(|(j, c)| c * j as f64).collect();
            }
            coeffs.len()
        }
    }
}

/// Search box for resonances of modulus up to `r`: the log curve along which
/// `|q^(z)| / |z|` stays of order one, widened by 20%, and at least 20% below
/// the edge of the resonance-free region.
pub fn default_region(model: &Model, r: f64) -> Region {
    let t = model.t();
    let order = end_order(model) as f64;
    let mass = model.q.pieces().iter().map(|pc| pc.coeffs.iter().map(|c| c.abs()).sum::<f64>() * (pc.to - pc.from)).sum::<f64>();
    // A weak perturbation pushes its resonances deeper, a strong one too.
    let coupling = mass.max(1e-12).ln().abs();
    let curve = ((order + 2.0) * r.max(std::f64::consts::E).ln() + coupling + 2.0) / (2.0 * t);
    let floor = 1.2 * resonance_envelope(model, r);
    Region { re_min: -r, re_max: r, im_min: -(1.2 * curve).max(floor).max(1.0), im_max: -AXIS_GUARD }
}

/// Resonance search settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResonanceSearch {
    pub region: Region,
    /// Half-width of the excluded strip around the imaginary axis.
    pub strip: f64,
    /// Only zeros with `|z| <= radius` are kept.
    pub radius: Option<f64>,
    pub max_depth: usize,
    /// Skip cells that lie entirely in the resonance-free region.
    pub prune_forbidden: bool,
}

impl ResonanceSearch {
    pub fn new(region: Region) -> Self {
        ResonanceSearch { region, strip: AXIS_GUARD, radius: None, max_depth: 30, prune_forbidden: true }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Cell {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Cell {
    fn diameter(&self) -> f64 {
        (self.x1 - self.x0).hypot(self.y1 - self.y0)
    }

    fn center(&self) -> Complex64 {
        Complex64::new(0.5 * (self.x0 + self.x1), 0.5 * (self.y0 + self.y1))
    }

    fn contains(&self, z: Complex64, margin: f64) -> bool {
        z.re >= self.x0 - margin && z.re <= self.x1 + margin && z.im >= self.y0 - margin && z.im <= self.y1 + margin
    }

    fn min_modulus(&self) -> f64 {
        let cx = 0.0f64.clamp(self.x0, self.x1);
        let cy = 0.0f64.clamp(self.y0, self.y1);
        cx.hypot(cy)
    }

    fn corners(&self) -> [Complex64; 4] {
        [
            Complex64::new(self.x0, self.y0),
            Complex64::new(self.x1, self.y0),
            Complex64::new(self.x1, self.y1),
            Complex64::new(self.x0, self.y1),
        ]
    }

    fn split(&self, fx: f64, fy: f64) -> [Cell; 4] {
        let xm = self.x0 + fx * (self.x1 - self.x0);
        let ym = self.y0 + fy * (self.y1 - self.y0);
        [
            Cell { x0: self.x0, x1: xm, y0: self.y0, y1: ym },
            Cell { x0: xm, x1: self.x1, y0: self.y0, y1: ym },
            Cell { x0: self.x0, x1: xm, y0: ym, y1: self.y1 },
            Cell { x0: xm, x1: self.x1, y0: ym, y1: self.y1 },
        ]
    }
}

fn wholly_forbidden(model: &Model, c: &Cell) -> bool {
    let deepest = c.y0.abs().max(c.y1.abs());
    let nearest = c.min_modulus();
    4.0 * model.constants.c_f * (2.0 * model.t() * deepest).exp() < nearest
}

fn psi_at(model: &Model, z: Complex64) -> Result<Complex64> {
    jost_plus(model, &SurfacePoint::new(z)).map(|v| v.0)
}

/// Change of `arg Psi0+` along a segment, refined until every step is small.
fn arg_change(model: &Model, a: Complex64, b: Complex64, fa: Complex64, fb: Complex64, level: usize) -> Result<f64> {
    let m = 0.5 * (a + b);
    let fm = psi_at(model, m)?;
    if fm.norm() == 0.0 || !fm.re.is_finite() {
        return Err(Error::ContourThroughZero(m));
    }
    let d1 = (fm / fa).arg();
    let d2 = (fb / fm).arg();
    let d = (fb / fa).arg();
    if d1.abs() < PI / 4.0 && d2.abs() < PI / 4.0 && (d1 + d2 - d).abs() < 1e-8 {
        return Ok(d1 + d2);
    }
    if level > 48 {
        return Err(Error::ContourThroughZero(m));
    }
    Ok(arg_change(model, a, m, fa, fm, level + 1)? + arg_change(model, m, b, fm, fb, level + 1)?)
}

/// Number of zeros of `Psi0+` inside a cell.
fn winding(model: &Model, c: &Cell) -> Result<i64> {
    let corners = c.corners();
    let vals: Vec<Complex64> = corners.iter().map(|&z| psi_at(model, z)).collect::<Result<_>>()?;
    let mut total = 0.0;
    for i in 0..4 {
        let (a, b) = (corners[i], corners[(i + 1) % 4]);
        let pieces = ((b - a).norm() / 0.25).ceil().max(1.0) as usize;
        let mut fa = vals[i];
        for j in 0..pieces {
            let za = a + (b - a) * (j as f64 / pieces as f64);
            let zb = a + (b - a) * ((j + 1) as f64 / pieces as f64);
            let fb = if j + 1 == pieces { vals[(i + 1) % 4] } else { psi_at(model, zb)? };
            total += arg_change(model, za, zb, fa, fb, 0)?;
            fa = fb;
        }
    }
    let w = total / (2.0 * PI);
    let r = w.round();
    if (w - r).abs() > 0.05 {
        return Err(Error::ContourThroughZero(c.center()));
    }
    Ok(r as i64)
}

fn newton(model: &Model, start: Complex64) -> Result<Option<Complex64>> {
    let mut z = start;
    for _ in 0..60 {
        let f = psi_at(model, z)?;
        let h = 1e-6 * (1.0 + z.norm());
        let d = (psi_at(model, z + h)? - psi_at(model, z - h)?) / (2.0 * h);
        if d.norm() == 0.0 || !d.re.is_finite() {
            return Ok(None);
        }
        let step = f / d;
        z -= step;
        if !z.re.is_finite() || z.im >= 0.0 {
            return Ok(None);
        }
        if step.norm() < 1e-13 * (1.0 + z.norm()) {
            return Ok(Some(z));
        }
    }
    Ok(None)
}

fn solve_cell(model: &Model, search: &ResonanceSearch, c: Cell, w: i64, depth: usize) -> Result<Vec<(Complex64, usize)>> {
    if w == 0 {
        return Ok(vec![]);
    }
    if w < 0 {
        return Err(Error::ContourThroughZero(c.center()));
    }
    if w == 1 && c.diameter() < 1.0 {
        if let Some(z) = newton(model, c.center())? {
            if c.contains(z, 1e-9 * (1.0 + z.norm())) {
                return Ok(vec![(z, 1)]);
            }
        }
    }
    if c.diameter() < 1e-7 {
        return Ok(vec![(c.center(), w as usize)]);
    }
    if depth >= search.max_depth {
        return Err(Error::RootFailure(format!("resonance cell at {} did not resolve", c.center())));
    }
    let mut last_err = None;
    for &(fx, fy) in &[(0.5, 0.5), (0.47, 0.53), (0.531, 0.469)] {
        let kids = c.split(fx, fy);
        let counts: Result<Vec<i64>> = kids.iter().map(|k| winding(model, k)).collect();
        match counts {
            Ok(counts) if counts.iter().sum::<i64>() == w => {
                let mut out = Vec::new();
                for (k, &cw) in kids.iter().zip(&counts) {
                    out.extend(solve_cell(model, search, *k, cw, depth + 1)?);
                }
                return Ok(out);
            }
            Ok(_) => last_err = Some(Error::ContourThroughZero(c.center())),
            Err(e) => last_err = Some(e),
        }
    }
    Err(last_err.unwrap())
}

fn resolve_cell(model: &Model, search: &ResonanceSearch, c: Cell) -> Result<Vec<(Complex64, usize)>> {
    if search.prune_forbidden && wholly_forbidden(model, &c) {
        return Ok(vec![]);
    }
    if let Some(r) = search.radius {
        if c.min_modulus() > r {
            return Ok(vec![]);
        }
    }
    let w = winding(model, &c)?;
    solve_cell(model, search, c, w, 0)
}

/// Zeros of `Psi0+` in the search region off the imaginary axis.
pub fn find_resonances(model: &Model, search: &ResonanceSearch) -> Result<Vec<State>> {
    let r = search.region;
    r.validate()?;
    let top = r.im_max.min(-AXIS_GUARD);
    let mut cells = Vec::new();
    let mut add_half = |x0: f64, x1: f64| {
        if x1 <= x0 {
            return;
        }
        let nx = ((x1 - x0) / 2.0).ceil().max(1.0) as usize;
        let ny = ((top - r.im_min) / 2.0).ceil().max(1.0) as usize;
        for i in 0..nx {
            for j in 0..ny {
                cells.push(Cell {
                    x0: x0 + (x1 - x0) * i as f64 / nx as f64,
                    x1: x0 + (x1 - x0) * (i + 1) as f64 / nx as f64,
                    y0: r.im_min + (top - r.im_min) * j as f64 / ny as f64,
                    y1: r.im_min + (top - r.im_min) * (j + 1) as f64 / ny as f64,
                });
            }
        }
    };
    add_half(r.re_min.max(search.strip), r.re_max);
    add_half(r.re_min, r.re_max.min(-search.strip));
    let found: Vec<Vec<(Complex64, usize)>> = cells.par_iter().map(|c| resolve_cell(model, search, *c)).collect::<Result<_>>()?;
    let mut states: Vec<State> = found
        .into_iter()
        .flatten()
        .filter(|(z, _)| search.radius.is_none_or(|rad| z.norm() <= rad))
        .map(|(z, m)| {
            let v = psi_at(model, z).map(|v| v.norm()).unwrap_or(f64::NAN);
            State {
                z,
                rim: None,
                kind: Kind::Resonance,
                multiplicity: m,
                gap: None,
                residual_f: v,
                residual_up: v,
                residual_dn: f64::NAN,
                energy: model.energy(z),
            }
        })
        .collect();
    // Zeros on a shared cell edge can be reported twice.
    states.sort_by(|a, b| a.z.re.partial_cmp(&b.z.re).unwrap().then(a.z.im.partial_cmp(&b.z.im).unwrap()));
    states.dedup_by(|a, b| (a.z - b.z).norm() < 1e-8 * (1.0 + a.z.norm()));
    Ok(states)
}

/// Cumulative resonance count against radius.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CountCurve {
    pub radii: Vec<f64>,
    pub counts: Vec<usize>,
    /// Least-squares slope of the count over the upper half of the radii.
    pub slope: f64,
    /// `2t / pi`.
    pub target: f64,
}

pub fn count_curve(resonances: &[State], t: f64, r_max: f64, points: usize) -> CountCurve {
    let radii: Vec<f64> = (1..=points).map(|j| r_max * j as f64 / points as f64).collect();
    let counts: Vec<usize> = radii
        .iter()
        .map(|&r| resonances.iter().filter(|s| s.z.norm() <= r).map(|s| s.multiplicity).sum())
        .collect();
    let upper: Vec<(f64, f64)> = radii
        .iter()
        .zip(&counts)
        .filter(|(r, _)| **r >= 0.5 * r_max)
        .map(|(r, c)| (*r, *c as f64))
        .collect();
    let n = upper.len() as f64;
    let mx = upper.iter().map(|p| p.0).sum::<f64>() / n;
    let my = upper.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = upper.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = upper.iter().map(|p| (p.0 - mx).powi(2)).sum();
    CountCurve { radii, counts, slope: if sxx > 0.0 { sxy / sxx } else { 0.0 }, target: 2.0 * t / PI }
}

/// Resonances with `|z| <= r_max` and their counting curve.
pub fn count_states(model: &Model, r_max: f64, points: usize) -> Result<(Vec<State>, CountCurve)> {
    let mut search = ResonanceSearch::new(default_region(model, r_max));
    search.radius = Some(r_max);
    let res = find_resonances(model, &search)?;
    let curve = count_curve(&res, model.t(), r_max, points);
    Ok((res, curve))
}

/// Two evaluations of the norming constant of a bound state.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Norming {
    /// `int_0^inf |Psi+|^2` with a geometric Floquet tail.
    pub integral: f64,
    /// `-(Psi+'(0) / 2z) dPsi+(0)/dz`.
    pub derivative_formula: f64,
    /// `(-1)^n F'(z) / z > 0` for gap states.
    pub sign_check: Option<bool>,
}

impl Norming {
    pub fn relative_gap(&self) -> f64 {
        (self.integral - self.derivative_formula).abs() / self.integral.abs()
    }
}

pub fn norming(model: &Model, state: &State) -> Result<Norming> {
    if state.kind != Kind::Bound {
        return Err(Error::NotABoundState(state.z));
    }
    let pt = state.point();
    let z = state.z;
    let mono = monodromy(&model.p, z, 0.0, &model.tol)?;
    let br = branch(&mono, &pt, &model.bands)?;
    let (mp, _) = weyl(&mono, &br, state.gap)?;
    let energy = z * z;
    let n_t = model.n_t();

    let square = |v: &dyn Fn(f64) -> f64, from: f64, start: [Complex64; 3], breaks: &[f64]| -> Result<f64> {
        let rhs = |x: f64, y: &OdeState<3>| [y[1], y[0] * (v(x) - energy), Complex64::new(y[0].norm_sqr(), 0.0)];
        let s = propagate(&rhs, from, 0.0, start, breaks, &model.tol, energy)?;
        Ok(-s[2].re)
    };
    let zero = Complex64::new(0.0, 0.0);
    let mult = br.exp_ik.powi(n_t as i32);
    let total = |x: f64| model.total(x);
    let inner = square(&total, n_t as f64, [mult, mult * mp, zero], &model.q.breakpoints())?;
    let per = |x: f64| model.p.eval(x);
    let cell = square(&per, 1.0, [br.exp_ik, br.exp_ik * mp, zero], &[])?;
    let q2 = br.exp_ik.norm_sqr();
    let tail = q2.powi(n_t as i32) * cell / (1.0 - q2);
    let integral = inner + tail;

    let j = jost0(model, &pt)?;
    let (step, dir) = match state.gap {
        Some(n) if n > 0 => {
            let g = open_gap(model, n)?;
            let room = (z.re - g.lower).min(g.upper - z.re).min(if (z.re - g.mu).abs() > 0.0 { (z.re - g.mu).abs() } else { f64::INFINITY });
            ((1e-4 * g.width()).min(0.25 * room), Complex64::new(1.0, 0.0))
        }
        _ => ((1e-4 * z.norm()).min(0.25 * z.norm()), Complex64::new(0.0, 1.0)),
    };
    let at = |s: f64| -> Result<Complex64> {
        let zz = z + dir * s;
        let p = match state.rim {
            Some(r) => SurfacePoint::on_rim(zz.re, r),
            None => SurfacePoint::new(zz),
        };
        jost0(model, &p).map(|v| v.psi0_plus)
    };
    let d = (-at(2.0 * step)? + 8.0 * at(step)? - 8.0 * at(-step)? + at(-2.0 * step)?) / (12.0 * step * dir);
    let derivative_formula = (-(j.psi0_plus_prime / (2.0 * z)) * d).re;

    let sign_check = match state.gap {
        Some(n) if n > 0 => {
            let h = step;
            let fp = |x: f64| crate::jost::big_f(model, Complex64::new(x, 0.0)).map(|v| v.re);
            let dfdz = (fp(z.re + h)? - fp(z.re - h)?) / (2.0 * h);
            Some(parity(n) * dfdz / z.re > 0.0)
        }
        _ => None,
    };
    Ok(Norming { integral, derivative_formula, sign_check })
}

/// A failed structural property.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "check")]
pub enum Violation {
    /// Total multiplicity on an open gap is even.
    EvenCount { n: usize, count: usize },
    /// A bound state whose mirror point on the other rim is also a zero.
    BoundAlsoAntibound { n: usize, x: f64 },
    /// Two consecutive bound states enclose an even number of antibound states.
    Interlacing { n: usize, lower: f64, upper: f64, antibound: usize },
}

/// Value of `Psi0+` on the lower rim, finite even at the Dirichlet root.
fn lower_rim_value(model: &Model, n: usize, x: f64) -> Result<f64> {
    let g = open_gap(model, n)?;
    let ratio = |x: f64| rim_products(model, x).map(|r| r.g_dn / r.phi1);
    let near_mu = (x - g.mu).abs() <= 1e-4 * g.width();
    if !near_mu {
        return ratio(x);
    }
    let h = 1e-3 * g.width();
    let (a, b) = (x - h, x + h);
    if a > g.lower && b < g.upper {
        Ok(0.5 * (ratio(a)? + ratio(b)?))
    } else {
        ratio(if a > g.lower { a } else { b })
    }
}

pub fn structural_checks(model: &Model, reports: &[GapReport]) -> Result<Vec<Violation>> {
    let mut out = Vec::new();
    for r in reports {
        if !r.parity_odd {
            out.push(Violation::EvenCount { n: r.n, count: r.count });
        }
        for s in r.states.iter().filter(|s| s.kind == Kind::Bound) {
            let x = s.z.re;
            let lower = lower_rim_value(model, r.n, x)?;
            let ev = evaluate(model, s.z)?;
            let scale = ev.tilde.theta0.norm().max(1.0);
            if lower.abs() <= 1e-6 * scale {
                out.push(Violation::BoundAlsoAntibound { n: r.n, x });
            }
        }
        let bound: Vec<f64> = r.states.iter().filter(|s| s.kind == Kind::Bound).map(|s| s.z.re).collect();
        for pair in bound.windows(2) {
            let antibound: usize = r
                .states
                .iter()
                .filter(|s| s.kind == Kind::Antibound && s.z.re > pair[0] && s.z.re < pair[1])
                .map(|s| s.multiplicity)
                .sum();
            if antibound.is_multiple_of(2) {
                out.push(Violation::Interlacing { n: r.n, lower: pair[0], upper: pair[1], antibound });
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::square_well;
    use crate::ode::Tolerance;
    use crate::potentials::{CompactPotential, PeriodicPotential};

    fn well() -> Model {
        Model::new(PeriodicPotential::zero(), CompactPotential::constant(1.0, -4.0).unwrap(), 20)
            .unwrap()
            .tolerance(Tolerance::tight())
    }

    #[test]
    fn real_roots_finds_simple_and_double_roots() {
        let f = |x: f64| Ok(((x - 0.3) * (x - 0.55).powi(2) * (x - 0.82), 1.0));
        let xs: Vec<f64> = (0..=10).map(|j| j as f64 / 10.0).collect();
        let roots = real_roots(f, &xs).unwrap();
        assert!((roots[0].0 - 0.3).abs() < 1e-12);
        assert_eq!(roots.iter().map(|r| r.1).sum::<usize>(), 4);
    }

    #[test]
    fn unperturbed_gaps_carry_one_state_at_the_dirichlet_root() {
        let p = PeriodicPotential::series(0.0, vec![1.0], vec![-1.5]).unwrap();
        let m = Model::new(p, CompactPotential::zero(1.0).unwrap(), 3).unwrap();
        let th = Thresholds::default();
        for r in find_all_gap_states(&m, &th).unwrap() {
            assert_eq!(r.count, 1, "gap {}", r.n);
            assert!(r.persistent);
            assert!((r.states[0].z.re - r.mu).abs() < 1e-12);
            assert_eq!(r.states[0].kind, r.unperturbed.kind);
        }
    }

    #[test]
    fn even_background_gives_virtual_states() {
        let p = PeriodicPotential::series(0.0, vec![2.0], vec![]).unwrap();
        let m = Model::new(p, CompactPotential::zero(1.0).unwrap(), 2).unwrap();
        let u = unperturbed_state(&m, 1, &Thresholds::default()).unwrap();
        assert_eq!(u.kind, Kind::Virtual);
    }

    #[test]
    fn square_well_bound_states_on_the_axis() {
        let m = well();
        let rep = find_negative_states(&m, 6.0).unwrap();
        let exact = square_well::bound_states(4.0, 1.0);
        let bound: Vec<f64> = rep.states.iter().filter(|s| s.kind == Kind::Bound).map(|s| s.z.im).collect();
        assert_eq!(bound.len(), exact.len());
        for (a, b) in bound.iter().zip(&exact) {
            assert!((a - b).abs() < 1e-9);
        }
        assert!(!rep.virtual_at_zero);
    }

    #[test]
    fn square_well_resonances_near_the_origin() {
        let m = well();
        let mut search = ResonanceSearch::new(Region { re_min: -8.0, re_max: 8.0, im_min: -4.0, im_max: -1e-6 });
        search.radius = Some(8.0);
        let found = find_resonances(&m, &search).unwrap();
        let exact: Vec<Complex64> = square_well::resonances(4.0, 1.0, 8.0, 4.0)
            .into_iter()
            .filter(|z| z.re.abs() > 1e-6 && z.im > -4.0)
            .collect();
        assert_eq!(found.len(), exact.len(), "{found:?} vs {exact:?}");
        for e in &exact {
            assert!(found.iter().any(|s| (s.z - e).norm() < 1e-6));
        }
    }

    #[test]
    fn square_well_norming_constant() {
        let m = well();
        let rep = find_negative_states(&m, 6.0).unwrap();
        let s = rep.states.iter().find(|s| s.kind == Kind::Bound).unwrap();
        let c = norming(&m, s).unwrap();
        let exact = square_well::norming_integral(4.0, 1.0, s.z.im);
        assert!((c.integral - exact).abs() < 1e-8 * exact);
        assert!(c.relative_gap() < 1e-4);
    }
}

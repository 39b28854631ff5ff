//! Independent reference computations used to validate the shooting pipeline.
//!
//! Everything here is deliberately simple: three-point finite differences with
//! Richardson extrapolation, and closed forms for a constant well with `p = 0`.
//! Energies are raw (not shifted by the gauge).

use crate::error::{Error, Result};
use crate::numeric::brent;
use crate::potentials::{CompactPotential, PeriodicPotential};
use nalgebra::DMatrix;
use num_complex::Complex64;

/// Richardson table for an `h^2, h^4, ...` error expansion; `levels[i]` uses step `h / 2^i`.
pub fn richardson(levels: &[f64]) -> f64 {
    let mut row: Vec<f64> = levels.to_vec();
    let mut factor = 4.0;
    while row.len() > 1 {
        row = row.windows(2).map(|w| (factor * w[1] - w[0]) / (factor - 1.0)).collect();
        factor *= 4.0;
    }
    row[0]
}

/// Sorted eigenvalues of the periodic (`sign = -1`) or antiperiodic (`sign = +1`)
/// three-point discretization on `[0, 1]` with `m` nodes.
fn cyclic_eigenvalues(p: &PeriodicPotential, m: usize, sign: f64) -> Vec<f64> {
    let h = 1.0 / m as f64;
    let inv = 1.0 / (h * h);
    let mut a = DMatrix::<f64>::zeros(m, m);
    for j in 0..m {
        a[(j, j)] = 2.0 * inv + p.eval_raw(j as f64 * h);
        if j + 1 < m {
            a[(j, j + 1)] = -inv;
            a[(j + 1, j)] = -inv;
        }
    }
    a[(0, m - 1)] += sign * inv;
    a[(m - 1, 0)] += sign * inv;
    let mut ev: Vec<f64> = a.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|x, y| x.partial_cmp(y).unwrap());
    ev
}

/// Periodic and antiperiodic eigenvalues merged: `[E0+, E1-, E1+, E2-, ...]`.
fn merged_edges(p: &PeriodicPotential, m: usize, count: usize) -> Vec<f64> {
    let mut all = cyclic_eigenvalues(p, m, -1.0);
    all.extend(cyclic_eigenvalues(p, m, 1.0));
    all.sort_by(|x, y| x.partial_cmp(y).unwrap());
    all.truncate(count);
    all
}

/// Raw band-edge energies `(E_n-, E_n+)` for `n = 1..=n_max` and the ground energy,
/// from the two-period discretization with `m` nodes per period (refined twice).
pub fn periodic_edges(p: &PeriodicPotential, n_max: usize, m: usize) -> Result<(f64, Vec<(f64, f64)>)> {
    if m < 20 * n_max.max(1) {
        return Err(Error::MeshTooCoarse(format!("{m} nodes per period for {n_max} gaps")));
    }
    let count = 2 * n_max + 1;
    let runs: Vec<Vec<f64>> = [m, 2 * m, 4 * m].iter().map(|&k| merged_edges(p, k, count)).collect();
    let extrap: Vec<f64> = (0..count).map(|i| richardson(&[runs[0][i], runs[1][i], runs[2][i]])).collect();
    let edges = (1..=n_max).map(|n| (extrap[2 * n - 1], extrap[2 * n])).collect();
    Ok((extrap[0], edges))
}

/// Number of eigenvalues below `lambda` of the symmetric tridiagonal matrix.
fn sturm_count(diag: &[f64], off: f64, lambda: f64) -> usize {
    let mut count = 0;
    let mut d = 1.0;
    let off2 = off * off;
    for (i, &a) in diag.iter().enumerate() {
        d = a - lambda - if i == 0 { 0.0 } else { off2 / d };
        if d == 0.0 {
            d = -1e-300;
        }
        if d < 0.0 {
            count += 1;
        }
    }
    count
}

/// The `k`-th (0-based) eigenvalue of a symmetric tridiagonal matrix with constant off-diagonal.
fn tridiagonal_eigenvalue(diag: &[f64], off: f64, k: usize) -> f64 {
    let spread = 2.0 * off.abs();
    let mut lo = diag.iter().copied().fold(f64::INFINITY, f64::min) - spread;
    let mut hi = diag.iter().copied().fold(f64::NEG_INFINITY, f64::max) + spread;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if sturm_count(diag, off, mid) > k {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 1e-15 * hi.abs().max(1.0) {
            break;
        }
    }
    0.5 * (lo + hi)
}

fn dirichlet_diag<V: Fn(f64) -> f64>(v: &V, length: f64, intervals: usize) -> (Vec<f64>, f64) {
    let h = length / intervals as f64;
    let inv = 1.0 / (h * h);
    let diag = (1..intervals).map(|j| 2.0 * inv + v(j as f64 * h)).collect();
    (diag, -inv)
}

/// Raw Dirichlet eigenvalues `mu_n^2`, `n = 1..=n_max`, on `[0, 1]`.
pub fn dirichlet_spectrum(p: &PeriodicPotential, n_max: usize, m: usize) -> Result<Vec<f64>> {
    if m < 20 * n_max.max(1) {
        return Err(Error::MeshTooCoarse(format!("{m} intervals for {n_max} roots")));
    }
    let v = |x: f64| p.eval_raw(x);
    let runs: Vec<Vec<f64>> = [m, 2 * m, 4 * m]
        .iter()
        .map(|&k| {
            let (diag, off) = dirichlet_diag(&v, 1.0, k);
            (0..n_max).map(|i| tridiagonal_eigenvalue(&diag, off, i)).collect()
        })
        .collect();
    Ok((0..n_max).map(|i| richardson(&[runs[0][i], runs[1][i], runs[2][i]])).collect())
}

/// `p + q` sampled at a node, averaging the two one-sided values of `q` at its jumps.
fn total_potential<'a>(p: &'a PeriodicPotential, q: &'a CompactPotential) -> impl Fn(f64) -> f64 + 'a {
    move |x: f64| {
        let eps = 1e-12 * (1.0 + x.abs());
        let qv = 0.5 * (q.eval(x - eps) + q.eval(x + eps));
        p.eval_raw(x) + qv
    }
}

/// Raw Dirichlet eigenvalues of `p + q` on `[0, length]` inside `(lo, hi)`,
/// with `per_unit` intervals per unit length, extrapolated over two refinements.
pub fn box_spectrum(
    p: &PeriodicPotential,
    q: &CompactPotential,
    length: f64,
    window: (f64, f64),
    per_unit: usize,
) -> Result<Vec<f64>> {
    let (lo, hi) = window;
    if !(hi > lo) {
        return Err(Error::EmptyWindow(format!("({lo}, {hi})")));
    }
    if per_unit < 40 {
        return Err(Error::MeshTooCoarse(format!("{per_unit} intervals per unit")));
    }
    let v = total_potential(p, q);
    let base = (length * per_unit as f64).round() as usize;
    let meshes = [base, 2 * base, 4 * base];
    let mut runs = Vec::new();
    for &k in &meshes {
        let (diag, off) = dirichlet_diag(&v, length, k);
        let first = sturm_count(&diag, off, lo);
        let last = sturm_count(&diag, off, hi);
        runs.push((first, last, diag, off));
    }
    // Use index ranges from the finest mesh; coarse meshes may shift by discretization error.
    let (first, last) = (runs[2].0, runs[2].1);
    let mut out = Vec::new();
    for k in first..last {
        let vals: Vec<f64> = runs.iter().map(|(_, _, d, o)| tridiagonal_eigenvalue(d, *o, k)).collect();
        let e = richardson(&vals);
        if e > lo && e < hi {
            out.push(e);
        }
    }
    Ok(out)
}

/// Closed forms for `p = 0` and `q = -depth` on `[0, width]`.
pub mod square_well {
    use super::*;
    use crate::numeric::sin_over;

    /// Jost value `Psi+(0, z) = e^{i z t}(cos kt - i z sin(kt)/k)`, `k^2 = z^2 + depth`.
    pub fn jost(depth: f64, width: f64, z: Complex64) -> Complex64 {
        let kappa = (z * z + depth).sqrt();
        let i = Complex64::new(0.0, 1.0);
        (i * z * width).exp() * ((kappa * width).cos() - i * z * sin_over(kappa, width))
    }

    /// Positive `g` with `jost(i g) = 0`: bound states at energy `-g^2`.
    pub fn bound_states(depth: f64, width: f64) -> Vec<f64> {
        let f = |g: f64| {
            let kappa = (depth - g * g).max(0.0).sqrt();
            (kappa * width).cos() + g * sin_over(Complex64::new(kappa, 0.0), width).re
        };
        let top = depth.sqrt();
        let n = 4000;
        let mut roots = Vec::new();
        let mut a = 1e-9 * top;
        let mut fa = f(a);
        for j in 1..=n {
            let b = top * j as f64 / n as f64;
            let fb = f(b);
            if fa * fb < 0.0 {
                if let Ok(r) = brent(|x| Ok(f(x)), a, b, 1e-15, 200) {
                    roots.push(r);
                }
            }
            a = b;
            fa = fb;
        }
        roots
    }

    /// `int_0^inf Psi+(x)^2 dx` for the bound state `z = i g`.
    pub fn norming_integral(depth: f64, width: f64, g: f64) -> f64 {
        let kappa = (depth - g * g).sqrt();
        let t = width;
        let s = (2.0 * kappa * t).sin();
        let c = (2.0 * kappa * t).cos();
        let r = g / kappa;
        let inside = t / 2.0 + s / (4.0 * kappa) + r * r * (t / 2.0 - s / (4.0 * kappa)) - 2.0 * r * (c - 1.0) / (4.0 * kappa);
        (-2.0 * g * t).exp() * (inside + 1.0 / (2.0 * g))
    }

    /// Zeros of [`jost`] in the lower half-plane with `|z| <= radius`, by Newton from a seed lattice.
    pub fn resonances(depth: f64, width: f64, radius: f64, depth_im: f64) -> Vec<Complex64> {
        let f = |z: Complex64| jost(depth, width, z);
        let mut roots: Vec<Complex64> = Vec::new();
        let step = 0.2;
        let nx = ((2.0 * radius + 2.0) / step) as usize;
        let ny = (depth_im / step) as usize + 1;
        for ix in 0..=nx {
            for iy in 0..=ny {
                let mut z = Complex64::new(-radius - 1.0 + ix as f64 * step, -(iy as f64) * step - 0.05);
                let mut ok = false;
                for _ in 0..60 {
                    let h = 1e-7 * (1.0 + z.norm());
                    let d = (f(z + h) - f(z - h)) / (2.0 * h);
                    if d.norm() == 0.0 {
                        break;
                    }
                    let dz = f(z) / d;
                    z -= dz;
                    if !z.re.is_finite() || z.norm() > 2.0 * radius + 10.0 {
                        break;
                    }
                    if dz.norm() < 1e-14 * (1.0 + z.norm()) {
                        ok = true;
                        break;
                    }
                }
                if ok && z.im < -1e-9 && z.norm() <= radius && !roots.iter().any(|r| (r - z).norm() < 1e-7) {
                    roots.push(z);
                }
            }
        }
        roots.sort_by(|a, b| a.re.partial_cmp(&b.re).unwrap());
        roots
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn richardson_removes_quadratic_and_quartic_terms() {
        let f = |h: f64| 3.0 + 2.0 * h * h - 5.0 * h.powi(4);
        assert!((richardson(&[f(0.1), f(0.05), f(0.025)]) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn free_periodic_edges_are_squares_of_multiples_of_pi() {
        let p = PeriodicPotential::zero();
        let (ground, edges) = periodic_edges(&p, 3, 80).unwrap();
        assert!(ground.abs() < 1e-9);
        for (n, (lo, hi)) in edges.iter().enumerate() {
            let e = (PI * (n + 1) as f64).powi(2);
            assert!((lo - e).abs() < 1e-5 && (hi - e).abs() < 1e-5, "{lo} {hi} {e}");
        }
        assert!(periodic_edges(&p, 3, 40).is_err());
    }

    #[test]
    fn second_order_convergence_of_dirichlet_discretization() {
        let p = PeriodicPotential::series(0.0, vec![2.0], vec![1.0]).unwrap();
        let v = |x: f64| p.eval_raw(x);
        let e = |m: usize| {
            let (d, o) = dirichlet_diag(&v, 1.0, m);
            tridiagonal_eigenvalue(&d, o, 1)
        };
        let (a, b, c) = (e(100), e(200), e(400));
        let ratio = (a - b) / (b - c);
        assert!((3.5..=4.5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn square_well_box_matches_closed_form() {
        let p = PeriodicPotential::zero();
        let q = CompactPotential::constant(1.0, -4.0).unwrap();
        let g = square_well::bound_states(4.0, 1.0);
        assert_eq!(g.len(), 1);
        let boxed = box_spectrum(&p, &q, 30.0, (-4.0, -1e-3), 200).unwrap();
        assert_eq!(boxed.len(), 1);
        assert!((boxed[0] + g[0] * g[0]).abs() < 1e-6, "{} vs {}", boxed[0], -g[0] * g[0]);
        assert!(square_well::jost(4.0, 1.0, Complex64::new(0.0, g[0])).norm() < 1e-12);
    }

    #[test]
    fn square_well_resonances_are_zeros() {
        let roots = square_well::resonances(4.0, 1.0, 12.0, 6.0);
        assert!(roots.len() >= 6);
        for r in &roots {
            assert!(square_well::jost(4.0, 1.0, *r).norm() < 1e-10);
            assert!(r.im < 0.0);
        }
        // Symmetric under z -> -conj(z).
        for r in &roots {
            assert!(roots.iter().any(|s| (s + r.conj()).norm() < 1e-8));
        }
    }
}

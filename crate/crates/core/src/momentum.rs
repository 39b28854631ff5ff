//! Quasimomentum on the two-sheeted momentum surface, the integrated density of
//! states, Weyl functions and Floquet solutions.
//!
//! A point of the surface is a complex momentum `z`, plus a rim tag when `z` is
//! real and inside a gap. Off the real axis the branch is fixed by requiring
//! `Im k` to have the sign of `Im z`; inside bands by continuity from above.

use crate::error::{Error, Result};
use crate::hill::{monodromy, solve_on_grid, BandStructure, Location, Monodromy};
use crate::ode::Tolerance;
use crate::potentials::PeriodicPotential;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Hash)]
#[serde(rename_all = "lowercase")]
pub enum Rim {
    /// Physical side, approached from `Im z > 0`.
    Upper,
    /// Non-physical side, approached from `Im z < 0`.
    Lower,
}

impl Rim {
    pub fn sign(self) -> f64 {
        match self {
            Rim::Upper => 1.0,
            Rim::Lower => -1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SurfacePoint {
    pub z: Complex64,
    pub rim: Option<Rim>,
}

impl SurfacePoint {
    pub fn new(z: Complex64) -> Self {
        SurfacePoint { z, rim: None }
    }

    pub fn on_rim(x: f64, rim: Rim) -> Self {
        SurfacePoint { z: Complex64::new(x, 0.0), rim: Some(rim) }
    }

    fn side(&self) -> Result<Option<f64>> {
        match self.rim {
            Some(r) => {
                if self.z.im != 0.0 {
                    return Err(Error::NotOnSurface(self.z));
                }
                Ok(Some(r.sign()))
            }
            None if self.z.im != 0.0 => Ok(Some(self.z.im.signum())),
            None => Ok(None),
        }
    }
}

/// `sin k` and `e^{ik}` at a surface point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Branch {
    pub sin_k: Complex64,
    pub exp_ik: Complex64,
}

const IM_K_RESOLVED: f64 = 1e-12;

/// Choose the root `sin k` of `1 - delta^2` belonging to the point.
pub fn branch(mono: &Monodromy, pt: &SurfacePoint, bands: &BandStructure) -> Result<Branch> {
    let d = mono.delta;
    let w = (1.0 - d * d).sqrt();
    // e^{ik} e^{-ik} = 1: take the larger root and invert it for the smaller one.
    let make = |w: Complex64| {
        let (up, dn) = (d + I * w, d - I * w);
        Branch { sin_k: w, exp_ik: if up.norm() >= dn.norm() { up } else { dn.inv() } }
    };
    let side = pt.side()?;
    if let Some(sigma) = side {
        let im_k = -(d + I * w).norm().ln();
        if im_k.abs() > IM_K_RESOLVED {
            return Ok(make(if im_k * sigma < 0.0 { -w } else { w }));
        }
        // Nearly real k: Im(cos k) = -sin(Re k) sinh(Im k).
        if d.im.abs() > 1e-15 * (1.0 + d.norm()) && w.re.abs() > 1e-8 {
            let im_sign = -d.im.signum() * w.re.signum();
            return Ok(make(if im_sign * sigma < 0.0 { -w } else { w }));
        }
    }
    let x = pt.z.re;
    match bands.locate(x)? {
        Location::Band(m) => {
            let parity = if m % 2 == 0 { 1.0 } else { -1.0 };
            Ok(make(w * parity * x.signum()))
        }
        Location::Gap(_) | Location::Edge(_) => match side {
            Some(_) => Ok(make(w)),
            None => Err(Error::BranchAmbiguity(pt.z)),
        },
    }
}

/// Real quasimomentum `k(x + i0)` real part for `x >= 0` given the discriminant there.
fn real_axis_quasimomentum(bands: &BandStructure, x: f64, delta: f64) -> Result<f64> {
    Ok(match bands.locate(x)? {
        Location::Band(m) => {
            let parity = if m % 2 == 0 { 1.0 } else { -1.0 };
            PI * m as f64 + (parity * delta).clamp(-1.0, 1.0).acos()
        }
        Location::Gap(n) | Location::Edge(n) => PI * n as f64,
    })
}

/// Full quasimomentum `k(z)` including the `2 pi` branch, tracked from the real axis.
pub fn quasimomentum(p: &PeriodicPotential, bands: &BandStructure, pt: &SurfacePoint, tol: &Tolerance) -> Result<Complex64> {
    let x = pt.z.re;
    let mono0 = monodromy(p, Complex64::new(x.abs(), 0.0), 0.0, tol)?;
    let mut k_prev = Complex64::new(x.signum() * real_axis_quasimomentum(bands, x.abs(), mono0.delta.re)?, 0.0);
    if x == 0.0 {
        k_prev = Complex64::new(0.0, 0.0);
    }
    let y = pt.z.im;
    let steps = if y == 0.0 { 1 } else { (y.abs() / 0.5).ceil().max(1.0) as usize };
    let mut k = k_prev;
    for s in 1..=steps {
        let zs = Complex64::new(x, y * s as f64 / steps as f64);
        let here = if s == steps { *pt } else { SurfacePoint::new(zs) };
        let mono = if zs.im == 0.0 { mono0 } else { monodromy(p, zs, 0.0, tol)? };
        let b = branch(&mono, &here, bands)?;
        let e = b.exp_ik;
        let k0 = Complex64::new(e.arg(), -e.norm().ln());
        let j = ((k_prev.re - k0.re) / (2.0 * PI)).round();
        k = k0 + 2.0 * PI * j;
        k_prev = k;
    }
    Ok(k)
}

/// Integrated density of states `(1/pi) Re k(sqrt(lambda + i0))` in working energy.
pub fn ids(p: &PeriodicPotential, bands: &BandStructure, lambda: f64, tol: &Tolerance) -> Result<f64> {
    if lambda <= 0.0 {
        return Ok(0.0);
    }
    let x = lambda.sqrt();
    match bands.locate(x)? {
        Location::Gap(n) | Location::Edge(n) => Ok(n as f64),
        Location::Band(_) => {
            let mono = monodromy(p, Complex64::new(x, 0.0), 0.0, tol)?;
            Ok(real_axis_quasimomentum(bands, x, mono.delta.re)? / PI)
        }
    }
}

/// Weyl functions `(m+, m-) = ((beta +- i sin k) / phi1)`.
pub fn weyl(mono: &Monodromy, br: &Branch, mu_pole: Option<usize>) -> Result<(Complex64, Complex64)> {
    let scale = mono.z.norm().max(1.0);
    if mono.phi1.norm() * scale < 1e-11 {
        return Err(Error::PoleAtMu(mu_pole.unwrap_or(0)));
    }
    let s = I * br.sin_k;
    Ok(((mono.beta + s) / mono.phi1, (mono.beta - s) / mono.phi1))
}

/// Floquet solutions and derivatives at `x >= 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FloquetValue {
    pub plus: Complex64,
    pub plus_prime: Complex64,
    pub minus: Complex64,
    pub minus_prime: Complex64,
}

pub fn floquet(
    p: &PeriodicPotential,
    bands: &BandStructure,
    pt: &SurfacePoint,
    x: f64,
    tol: &Tolerance,
) -> Result<FloquetValue> {
    if x < 0.0 {
        return Err(Error::InvalidRegion("Floquet solutions are evaluated for x >= 0".into()));
    }
    let mono = monodromy(p, pt.z, 0.0, tol)?;
    let br = branch(&mono, pt, bands)?;
    let (mp, mm) = weyl(&mono, &br, None)?;
    let whole = x.floor();
    let frac = x - whole;
    let f = solve_on_grid(p, pt.z, &[frac], tol)?[0];
    let j = whole as i32;
    let up = br.exp_ik.powi(j);
    let dn = br.exp_ik.powi(-j);
    Ok(FloquetValue {
        plus: up * (f[0] + mp * f[2]),
        plus_prime: up * (f[1] + mp * f[3]),
        minus: dn * (f[0] + mm * f[2]),
        minus_prime: dn * (f[1] + mm * f[3]),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hill::band_edges;

    fn setup() -> (PeriodicPotential, BandStructure) {
        let p = PeriodicPotential::series(0.0, vec![2.0], vec![]).unwrap();
        let b = band_edges(&p, 12, &Tolerance::tight()).unwrap();
        (p, b)
    }

    #[test]
    fn free_quasimomentum_is_identity() {
        let p = PeriodicPotential::zero();
        let b = band_edges(&p, 8, &Tolerance::tight()).unwrap();
        for &z in &[Complex64::new(2.5, 0.7), Complex64::new(-7.0, 1.5), Complex64::new(11.0, -2.0)] {
            let k = quasimomentum(&p, &b, &SurfacePoint::new(z), &Tolerance::default()).unwrap();
            assert!((k - z).norm() < 1e-8, "{k} vs {z}");
        }
    }

    #[test]
    fn imaginary_part_follows_the_sheet() {
        let (p, b) = setup();
        let tol = Tolerance::default();
        for &z in &[Complex64::new(3.0, 0.4), Complex64::new(-5.0, -2.0), Complex64::new(0.0, 3.0), Complex64::new(0.0, -1.0)] {
            let k = quasimomentum(&p, &b, &SurfacePoint::new(z), &tol).unwrap();
            assert!(k.im * z.im > 0.0);
            let m = monodromy(&p, z, 0.0, &tol).unwrap();
            assert!((k.cos() - m.delta).norm() < 1e-8 * m.delta.norm().max(1.0));
        }
    }

    #[test]
    fn rim_values_in_first_gap() {
        let (p, b) = setup();
        let g = *b.gap(1).unwrap();
        let x = 0.5 * (g.lower + g.upper);
        let tol = Tolerance::default();
        let up = quasimomentum(&p, &b, &SurfacePoint::on_rim(x, Rim::Upper), &tol).unwrap();
        let dn = quasimomentum(&p, &b, &SurfacePoint::on_rim(x, Rim::Lower), &tol).unwrap();
        assert!((up.re - PI).abs() < 1e-9 && up.im > 0.0);
        assert!((dn - up.conj()).norm() < 1e-9);
        let m = monodromy(&p, Complex64::new(x, 0.0), 0.0, &tol).unwrap();
        let br = branch(&m, &SurfacePoint::on_rim(x, Rim::Upper), &b).unwrap();
        // (-1)^{n+1} i sin k = sinh(h) > 0 on the upper rim of gap 1.
        let v = (I * br.sin_k).re;
        assert!(v > 0.0 && (v - up.im.sinh()).abs() < 1e-9);
        assert!(branch(&m, &SurfacePoint::new(Complex64::new(x, 0.0)), &b).is_err());
    }

    #[test]
    fn ids_is_monotone_with_integer_plateaus() {
        let (p, b) = setup();
        let tol = Tolerance::default();
        let g = *b.gap(1).unwrap();
        let mid = 0.5 * (g.lower + g.upper);
        assert_eq!(ids(&p, &b, mid * mid, &tol).unwrap(), 1.0);
        assert_eq!(ids(&p, &b, -3.0, &tol).unwrap(), 0.0);
        let mut last = 0.0;
        for j in 1..80 {
            let lam = 0.5 * j as f64;
            let r = ids(&p, &b, lam, &tol).unwrap();
            assert!(r >= last - 1e-12);
            last = r;
        }
    }

    #[test]
    fn floquet_multipliers() {
        let (p, b) = setup();
        let tol = Tolerance::tight();
        let pt = SurfacePoint::new(Complex64::new(4.0, 0.8));
        let a = floquet(&p, &b, &pt, 0.3, &tol).unwrap();
        let c = floquet(&p, &b, &pt, 1.3, &tol).unwrap();
        let m = monodromy(&p, pt.z, 0.0, &tol).unwrap();
        let br = branch(&m, &pt, &b).unwrap();
        assert!((c.plus - br.exp_ik * a.plus).norm() < 1e-9 * c.plus.norm());
        assert!((c.minus - a.minus / br.exp_ik).norm() < 1e-9 * c.minus.norm());
        // psi+ decays in the upper half-plane.
        assert!(br.exp_ik.norm() < 1.0);
    }
}

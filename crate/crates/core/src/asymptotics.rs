//! Large-`n` predictions for gap states and band data, and their comparison
//! with computed values.

use crate::error::{Error, Result};
use crate::jost::{jost_first_order, jost_plus, Model};
use crate::momentum::{ids, SurfacePoint};
use crate::numeric::integrate_piecewise;
use crate::states::{find_gap_states, unperturbed_state, GapReport, Kind, Thresholds};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Formula {
    Generic,
    EvenStatement,
    EvenProof,
    Unperturbed,
}

/// Quantities entering the predictions for gap `n`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ingredients {
    pub mu: f64,
    pub p_cn: f64,
    pub p_sn: f64,
    /// `int_0^t q`.
    pub q0: f64,
    /// `Re q^(pi n)`.
    pub q_cn: f64,
    /// `q0 - q_cn`.
    pub b: f64,
    /// Momentum gap length.
    pub gap_momentum: f64,
    /// Energy gap length.
    pub gap_energy: f64,
    /// `+1` when the Dirichlet root is the lower edge, `-1` for the upper, `0` inside.
    pub side: i8,
}

pub fn ingredients(model: &Model, n: usize, th: &Thresholds) -> Result<Ingredients> {
    let g = match model.bands.gap(n) {
        Some(g) if g.open => *g,
        _ => return Err(Error::ClosedGap(n)),
    };
    let (_, p_cn, p_sn) = model.p.fourier(n);
    let q0 = model.q.integral();
    let q_cn = model.q.transform(Complex64::new(PI * n as f64, 0.0)).re;
    let tol = th.tol_edge * g.width();
    let side = if (g.mu - g.lower).abs() <= tol {
        1
    } else if (g.upper - g.mu).abs() <= tol {
        -1
    } else {
        0
    };
    Ok(Ingredients {
        mu: g.mu,
        p_cn,
        p_sn,
        q0,
        q_cn,
        b: q0 - q_cn,
        gap_momentum: g.width(),
        gap_energy: g.energy_width(),
        side,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub n: usize,
    pub predicted: f64,
    pub formula: Formula,
    pub ingredients: Ingredients,
}

/// `mu_n - b_n p_sn / (2 (pi n)^2)`.
pub fn predict_generic(model: &Model, n: usize, th: &Thresholds) -> Result<Prediction> {
    let ing = ingredients(model, n, th)?;
    let pn = PI * n as f64;
    Ok(Prediction { n, predicted: ing.mu - ing.b * ing.p_sn / (2.0 * pn * pn), formula: Formula::Generic, ingredients: ing })
}

/// Both readings of the even-background shift, with energy and with momentum gap length.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvenPrediction {
    pub statement: Prediction,
    pub proof: Prediction,
}

pub fn predict_even(model: &Model, n: usize, th: &Thresholds) -> Result<EvenPrediction> {
    let ing = ingredients(model, n, th)?;
    if ing.side == 0 {
        return Err(Error::NotEdgeCase(n));
    }
    let eps = 1.0 / (2.0 * PI * n as f64);
    let s = ing.side as f64;
    let b2 = ing.b * ing.b;
    let make = |len: f64, formula| Prediction { n, predicted: ing.mu + s * len * eps * eps * b2, formula, ingredients: ing };
    Ok(EvenPrediction { statement: make(ing.gap_energy, Formula::EvenStatement), proof: make(ing.gap_momentum, Formula::EvenProof) })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Above,
    Below,
}

/// Expected kind and displacement of the gap state.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignPrediction {
    pub n: usize,
    pub kind: Kind,
    pub side: Side,
}

/// Kind preservation and displacement side, emitted only when
/// `|p_sn| > n^-alpha` and `|b_n| > n^-(1-alpha)` hold at this `n`.
pub fn sign_test(model: &Model, n: usize, alpha: f64, th: &Thresholds) -> Result<SignPrediction> {
    let ing = ingredients(model, n, th)?;
    let nf = n as f64;
    if ing.p_sn.abs() <= nf.powf(-alpha) || ing.b.abs() <= nf.powf(alpha - 1.0) {
        return Err(Error::Inconclusive(n));
    }
    let u = unperturbed_state(model, n, th)?;
    let up = ing.b > 0.0;
    let side = match (u.kind, up) {
        (Kind::Bound, true) | (Kind::Antibound, false) => Side::Above,
        (Kind::Bound, false) | (Kind::Antibound, true) => Side::Below,
        _ => return Err(Error::Inconclusive(n)),
    };
    Ok(SignPrediction { n, kind: u.kind, side })
}

/// Scaled band-data residuals for gap `n`: Dirichlet root, `Im k` at it, and both edges.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandResiduals {
    pub n: usize,
    pub mu: f64,
    pub h: f64,
    pub edge: f64,
}

pub fn band_residuals(model: &Model, n: usize, th: &Thresholds) -> Result<BandResiduals> {
    let g = model.bands.gap(n).ok_or(Error::BeyondTruncation { z: f64::NAN, n_max: model.bands.n_max() })?;
    let (_, p_cn, p_sn) = model.p.fourier(n);
    let p0 = model.p.working_mean();
    let nf = n as f64;
    let pn = PI * nf;
    let eps = 1.0 / (2.0 * pn);
    let mu = nf * (g.mu - pn - eps * (p0 - p_cn)).abs();
    let h = if g.open {
        let u = unperturbed_state(model, n, th)?;
        nf * (u.h + eps * p_sn).abs()
    } else {
        0.0
    };
    let pabs = p_cn.hypot(p_sn);
    let edge = nf * (g.lower - pn - eps * (p0 - pabs)).abs().max((g.upper - pn - eps * (p0 + pabs)).abs());
    Ok(BandResiduals { n, mu, h, edge })
}

/// One row of a comparison table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub n: usize,
    pub predicted: f64,
    pub computed: f64,
    pub scaled_residual: f64,
    pub verdict: String,
}

/// The single computed state of a gap, if there is exactly one.
fn single_state(report: &GapReport) -> Option<f64> {
    if report.count == 1 {
        report.states.first().map(|s| s.z.re)
    } else {
        None
    }
}

/// `(z_n - mu_n) 2 (pi n)^2 + b_n p_sn` for each gap in `ns`.
pub fn generic_comparison(model: &Model, ns: &[usize], th: &Thresholds) -> Result<Vec<Comparison>> {
    let mut rows = Vec::new();
    for &n in ns {
        let pred = predict_generic(model, n, th)?;
        let rep = find_gap_states(model, n, th)?;
        let pn = PI * n as f64;
        let (computed, scaled, verdict) = match single_state(&rep) {
            Some(z) => {
                let r = (z - pred.ingredients.mu) * 2.0 * pn * pn + pred.ingredients.b * pred.ingredients.p_sn;
                (z, r.abs(), "single".to_string())
            }
            None => (f64::NAN, f64::NAN, format!("{} states", rep.count)),
        };
        rows.push(Comparison { n, predicted: pred.predicted, computed, scaled_residual: scaled, verdict });
    }
    Ok(rows)
}

/// Least-squares slope of `log y` against `log x`, ignoring non-finite or zero entries.
pub fn log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|(x, y)| **x > 0.0 && y.is_finite() && **y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return f64::NAN;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// Per-gap data for deciding between the two readings of the even-background shift.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvenRow {
    pub n: usize,
    /// `s_n (z_n - mu_n)`.
    pub shift: f64,
    pub statement: f64,
    pub proof: f64,
    /// `|shift - predicted| / (eps_n^2 |g_n|)` for each reading.
    pub residual_statement: f64,
    pub residual_proof: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvenAdjudication {
    pub rows: Vec<EvenRow>,
    /// `"proof"` or `"statement"`: the reading with the smaller median residual.
    pub preferred: String,
    /// Log-log slope of the preferred residual against `n`.
    pub trend: f64,
}

pub fn even_adjudication(model: &Model, ns: &[usize], th: &Thresholds) -> Result<EvenAdjudication> {
    let mut rows = Vec::new();
    for &n in ns {
        let pred = match predict_even(model, n, th) {
            Ok(p) => p,
            Err(Error::NotEdgeCase(_)) | Err(Error::ClosedGap(_)) => continue,
            Err(e) => return Err(e),
        };
        let rep = find_gap_states(model, n, th)?;
        let Some(z) = single_state(&rep) else { continue };
        let ing = pred.proof.ingredients;
        let s = ing.side as f64;
        let eps = 1.0 / (2.0 * PI * n as f64);
        let unit = eps * eps * ing.gap_momentum;
        let shift = s * (z - ing.mu);
        let st = s * (pred.statement.predicted - ing.mu);
        let pr = s * (pred.proof.predicted - ing.mu);
        rows.push(EvenRow {
            n,
            shift,
            statement: st,
            proof: pr,
            residual_statement: (shift - st).abs() / unit,
            residual_proof: (shift - pr).abs() / unit,
        });
    }
    let median = |mut v: Vec<f64>| {
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        if v.is_empty() {
            f64::NAN
        } else {
            v[v.len() / 2]
        }
    };
    let ms = median(rows.iter().map(|r| r.residual_statement).collect());
    let mp = median(rows.iter().map(|r| r.residual_proof).collect());
    let proof = !(ms < mp);
    let ns: Vec<f64> = rows.iter().map(|r| r.n as f64).collect();
    let res: Vec<f64> = rows.iter().map(|r| if proof { r.residual_proof } else { r.residual_statement }).collect();
    Ok(EvenAdjudication { rows, preferred: if proof { "proof" } else { "statement" }.into(), trend: log_slope(&ns, &res) })
}

/// Outcome of comparing a sign prediction with the computed state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignOutcome {
    pub n: usize,
    pub predicted_kind: Kind,
    pub predicted_side: Side,
    pub computed_kind: Option<Kind>,
    pub computed_side: Option<Side>,
    pub agrees: bool,
}

/// Run [`sign_test`] over `ns`, skipping gaps where it is inconclusive.
pub fn sign_outcomes(model: &Model, ns: &[usize], alpha: f64, th: &Thresholds) -> Result<Vec<SignOutcome>> {
    let mut out = Vec::new();
    for &n in ns {
        let pred = match sign_test(model, n, alpha, th) {
            Ok(p) => p,
            Err(Error::Inconclusive(_)) | Err(Error::ClosedGap(_)) => continue,
            Err(e) => return Err(e),
        };
        let rep = find_gap_states(model, n, th)?;
        let (kind, side) = match rep.states.as_slice() {
            [s] if rep.count == 1 => {
                let side = if s.z.re > rep.mu { Side::Above } else { Side::Below };
                (Some(s.kind), Some(side))
            }
            _ => (None, None),
        };
        out.push(SignOutcome {
            n,
            predicted_kind: pred.kind,
            predicted_side: pred.side,
            computed_kind: kind,
            computed_side: side,
            agrees: kind == Some(pred.kind) && side == Some(pred.side),
        });
    }
    Ok(out)
}

/// `|Psi0+ - 1 - (q^(z) - q^(0)) / (2iz)| |z|^2 e^{-t(|Im z| - Im z)}` at each point.
pub fn jost_remainder(model: &Model, zs: &[Complex64]) -> Result<Vec<f64>> {
    let t = model.t();
    zs.iter()
        .map(|&z| {
            let (psi, _) = jost_plus(model, &SurfacePoint::new(z))?;
            let r = (psi - jost_first_order(model, z)).norm();
            Ok(r * z.norm_sqr() * (-t * (z.im.abs() - z.im)).exp())
        })
        .collect()
}

/// Leading-order count of bound states of `p + q(x / tau)` with working energy in `[e1, e2]`.
pub fn semiclassical_count(model: &Model, e1: f64, e2: f64, tau: f64) -> Result<f64> {
    let mut breaks = model.q.breakpoints();
    if breaks.first().is_none_or(|&b| b > 0.0) {
        breaks.insert(0, 0.0);
    }
    if breaks.last().is_none_or(|&b| b < model.t()) {
        breaks.push(model.t());
    }
    let mut err = None;
    let integrand = |x: f64| {
        let v = model.q.eval(x);
        match (ids(&model.p, &model.bands, e2 - v, &model.tol), ids(&model.p, &model.bands, e1 - v, &model.tol)) {
            (Ok(a), Ok(b)) => a - b,
            (Err(e), _) | (_, Err(e)) => {
                err = Some(e);
                0.0
            }
        }
    };
    let value = integrate_piecewise(integrand, &breaks, 1e-9);
    if let Some(e) = err {
        return Err(e);
    }
    Ok(tau * value)
}

/// Bound and antibound counts of a report inside `[x1, x2]` (momenta).
pub fn counts_in(report: &GapReport, x1: f64, x2: f64) -> (usize, usize) {
    let inside = |k: Kind| {
        report
            .states
            .iter()
            .filter(|s| s.kind == k && s.z.re >= x1 && s.z.re <= x2)
            .map(|s| s.multiplicity)
            .sum()
    };
    (inside(Kind::Bound), inside(Kind::Antibound))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potentials::{CompactPotential, PeriodicPotential};

    #[test]
    fn unperturbed_predictions_are_the_dirichlet_root() {
        let p = PeriodicPotential::series(0.0, vec![1.0], vec![0.7]).unwrap();
        let m = Model::new(p, CompactPotential::zero(1.0).unwrap(), 3).unwrap();
        let th = Thresholds::default();
        let pred = predict_generic(&m, 1, &th).unwrap();
        assert_eq!(pred.predicted, pred.ingredients.mu);
        assert!(matches!(predict_even(&m, 1, &th), Err(Error::NotEdgeCase(1))));
    }

    #[test]
    fn even_prediction_moves_into_the_gap() {
        let p = PeriodicPotential::series(0.0, vec![2.0], vec![]).unwrap();
        let m = Model::new(p, CompactPotential::constant(0.5, 1.0).unwrap(), 2).unwrap();
        let th = Thresholds::default();
        let e = predict_even(&m, 1, &th).unwrap();
        let ing = e.proof.ingredients;
        assert!(ing.b > 0.0);
        let inward = (e.proof.predicted - ing.mu) * ing.side as f64;
        assert!(inward > 0.0);
        assert!(e.statement.predicted != e.proof.predicted);
    }

    #[test]
    fn free_jost_remainder_vanishes() {
        let m = Model::new(PeriodicPotential::zero(), CompactPotential::zero(1.0).unwrap(), 2).unwrap();
        let r = jost_remainder(&m, &[Complex64::new(20.0, 6.0)]).unwrap();
        assert!(r[0] < 1e-6);
    }

    #[test]
    fn semiclassical_count_is_zero_without_perturbation() {
        let p = PeriodicPotential::series(0.0, vec![2.0], vec![]).unwrap();
        let m = Model::new(p, CompactPotential::zero(1.0).unwrap(), 4).unwrap();
        let g = m.bands.gap(1).unwrap();
        let c = semiclassical_count(&m, g.lower.powi(2), g.upper.powi(2), 10.0).unwrap();
        assert_eq!(c, 0.0);
    }
}

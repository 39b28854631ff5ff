//! Run configuration: potentials, truncation, search settings and tolerance
//! overrides. A run is reproducible from its serialized config alone.

use crate::error::{Error, Result};
use crate::jost::Model;
use crate::ode::Tolerance;
use crate::potentials::{CompactPotential, PeriodicForm, PeriodicPotential, Piece};
use crate::states::{Region, Thresholds};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Perturbation `q` as piecewise polynomials on `[0, t]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationSpec {
    pub t: f64,
    #[serde(default)]
    pub pieces: Vec<Piece>,
}

impl PerturbationSpec {
    pub fn build(&self) -> Result<CompactPotential> {
        CompactPotential::new(self.t, self.pieces.clone())
    }
}

/// Integrator tolerances; defaults are the tight ones used by [`Model`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorSpec {
    pub atol: f64,
    pub rtol: f64,
}

impl Default for IntegratorSpec {
    fn default() -> Self {
        let t = Tolerance::tight();
        IntegratorSpec { atol: t.atol, rtol: t.rtol }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyOptions {
    pub n_from: usize,
    pub n_to: usize,
    /// Exponent in the validity thresholds of the sign rule.
    pub alpha: f64,
    /// Bound on the scaled band-data residuals.
    pub band_bound: f64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions { n_from: 5, n_to: 25, alpha: 0.9, band_bound: 0.05 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CountOptions {
    /// Largest radius; falls back to `z_max`.
    pub r_max: Option<f64>,
    pub points: usize,
}

impl Default for CountOptions {
    fn default() -> Self {
        CountOptions { r_max: None, points: 40 }
    }
}

fn default_n_max() -> usize {
    10
}

fn default_z_max() -> f64 {
    20.0
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub p: PeriodicForm,
    pub q: PerturbationSpec,
    #[serde(default = "default_n_max")]
    pub n_max: usize,
    #[serde(default = "default_z_max")]
    pub z_max: f64,
    #[serde(default)]
    pub region: Option<Region>,
    #[serde(default)]
    pub thresholds: Thresholds,
    #[serde(default)]
    pub integrator: IntegratorSpec,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default)]
    pub threads: Option<usize>,
    #[serde(default)]
    pub verify: VerifyOptions,
    #[serde(default)]
    pub count: CountOptions,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| Error::Config {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Apply a `KEY=VAL` tolerance override.
    pub fn set_tolerance(&mut self, assignment: &str) -> Result<()> {
        let bad = |message: String| Error::Config { path: format!("--tol {assignment}"), message };
        let (key, value) = assignment.split_once('=').ok_or_else(|| bad("expected KEY=VAL".into()))?;
        let key = key.trim();
        let value = value.trim();
        let number = || value.parse::<f64>().map_err(|e| bad(e.to_string()));
        match key {
            "tol_mu" => self.thresholds.tol_mu = number()?,
            "tol_edge" => self.thresholds.tol_edge = number()?,
            "tol_cls" => self.thresholds.tol_cls = number()?,
            "persistence" => self.thresholds.persistence = number()?,
            "samples" => self.thresholds.samples = value.parse().map_err(|e: std::num::ParseIntError| bad(e.to_string()))?,
            "atol" => self.integrator.atol = number()?,
            "rtol" => self.integrator.rtol = number()?,
            _ => return Err(bad(format!("unknown tolerance key `{key}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |path: &str, message: &str| Err(Error::Config { path: path.into(), message: message.into() });
        if self.n_max == 0 {
            return bad("n_max", "must be at least 1");
        }
        if !(self.z_max.is_finite() && self.z_max > 0.0) {
            return bad("z_max", "must be positive");
        }
        if let Some(r) = &self.region {
            r.validate().map_err(|e| Error::Config { path: "region".into(), message: e.to_string() })?;
        }
        let th = &self.thresholds;
        if !(th.tol_mu > 0.0 && th.tol_edge > 0.0 && th.tol_cls > 0.0 && th.persistence > 0.0) {
            return bad("thresholds", "tolerances must be positive");
        }
        if !(self.integrator.atol > 0.0 && self.integrator.rtol > 0.0) {
            return bad("integrator", "tolerances must be positive");
        }
        if self.verify.n_from == 0 || self.verify.n_from > self.verify.n_to {
            return bad("verify", "need 1 <= n_from <= n_to");
        }
        Ok(())
    }

    pub fn tolerance(&self) -> Tolerance {
        Tolerance { atol: self.integrator.atol, rtol: self.integrator.rtol, ..Tolerance::tight() }
    }

    pub fn periodic(&self) -> Result<PeriodicPotential> {
        PeriodicPotential::from_form(self.p.clone())
    }

    /// Model truncated at `n_max` gaps (more if `extra` asks for it).
    pub fn model_with(&self, n_max: usize) -> Result<Model> {
        let p = self.periodic()?;
        let q = self.q.build()?;
        let tol = self.tolerance();
        let bands = crate::hill::band_edges(&p, n_max, &tol)?;
        Ok(Model::with_bands(p, q, bands).tolerance(tol))
    }

    pub fn model(&self) -> Result<Model> {
        self.model_with(self.n_max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MATHIEU: &str = r#"{"p": {"kind": "series", "mean": 0.0, "cos": [2.0], "sin": []},
                              "q": {"t": 1.0, "pieces": [{"from": 0.0, "to": 1.0, "coeffs": [-1.0]}]}}"#;

    #[test]
    fn defaults_fill_optional_fields() {
        let c = RunConfig::from_json(MATHIEU).unwrap();
        assert_eq!(c.n_max, 10);
        assert_eq!(c.thresholds, Thresholds::default());
        assert_eq!(RunConfig::from_json(&c.to_json()).unwrap(), c);
    }

    #[test]
    fn missing_perturbation_names_the_field() {
        let err = RunConfig::from_json(r#"{"p": {"kind": "series", "mean": 0.0, "cos": [], "sin": []}}"#).unwrap_err();
        match err {
            Error::Config { message, .. } => assert!(message.contains("`q`"), "{message}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn nested_errors_carry_their_path() {
        let text = MATHIEU.replace("\"coeffs\": [-1.0]", "\"coeffs\": \"x\"");
        match RunConfig::from_json(&text).unwrap_err() {
            Error::Config { path, .. } => assert_eq!(path, "q.pieces[0].coeffs"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn tolerance_overrides() {
        let mut c = RunConfig::from_json(MATHIEU).unwrap();
        c.set_tolerance("tol_edge=0.25").unwrap();
        c.set_tolerance("samples=80").unwrap();
        assert_eq!(c.thresholds.tol_edge, 0.25);
        assert_eq!(c.thresholds.samples, 80);
        assert!(c.set_tolerance("nope=1").is_err());
        assert!(c.set_tolerance("tol_mu").is_err());
    }
}

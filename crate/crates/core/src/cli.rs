//! Commands behind the `hillres` binary. Each one reads a [`RunConfig`], writes
//! its tables into the output directory and returns a summary the binary turns
//! into an exit code.

use crate::asymptotics::{band_residuals, even_adjudication, generic_comparison, log_slope, sign_outcomes, Side};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::jost::Model;
use crate::states::{
    count_curve, default_region, find_all_gap_states, find_negative_states, find_resonances, structural_checks, AxisReport,
    GapReport, ResonanceSearch, State, Violation,
};
use serde::Serialize;
use std::f64::consts::PI;
use std::fs;
use std::path::Path;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_STRUCTURE: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

/// Exit code for an error raised by a command.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config { .. } | Error::Io(_) | Error::InvalidPotential(_) | Error::InvalidRegion(_) => EXIT_CONFIG,
        _ => EXIT_NUMERICAL,
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Io(format!("{}: {e}", path.display()))
}

fn prepare(cfg: &RunConfig) -> Result<()> {
    fs::create_dir_all(&cfg.out).map_err(|e| io_err(&cfg.out, e))?;
    let path = cfg.out.join("run_config.json");
    fs::write(&path, cfg.to_json()).map_err(|e| io_err(&path, e))
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| io_err(path, e))?;
    fs::write(path, text).map_err(|e| io_err(path, e))
}

/// Gaps needed so that the band structure covers momenta up to `z`.
fn gaps_to_cover(z: f64) -> usize {
    (z / PI).ceil() as usize + 2
}

#[derive(Clone, Debug, Serialize)]
pub struct BandRow {
    pub n: usize,
    pub e_minus: f64,
    pub e_plus: f64,
    pub mu_sq: f64,
    pub gap_len: f64,
    pub gauge_shift: f64,
    pub open: bool,
}

/// Band table in the original energy scale.
pub fn cmd_bands(cfg: &RunConfig) -> Result<Vec<BandRow>> {
    prepare(cfg)?;
    let model = cfg.model()?;
    let gs = model.bands.gauge_shift;
    let rows: Vec<BandRow> = model
        .bands
        .gaps
        .iter()
        .map(|g| BandRow {
            n: g.n,
            e_minus: g.lower * g.lower + gs,
            e_plus: g.upper * g.upper + gs,
            mu_sq: g.mu * g.mu + gs,
            gap_len: if g.open { g.energy_width() } else { 0.0 },
            gauge_shift: gs,
            open: g.open,
        })
        .collect();
    write_csv(&cfg.out.join("bands.csv"), &rows)?;
    Ok(rows)
}

#[derive(Clone, Debug, Serialize)]
pub struct StateRow {
    /// `gap`, `axis` or `resonance`.
    pub source: &'static str,
    pub n: Option<usize>,
    pub kind: &'static str,
    pub re_z: f64,
    pub im_z: f64,
    pub energy_re: f64,
    pub energy_im: f64,
    pub multiplicity: usize,
    pub residual: f64,
    pub gauge_shift: f64,
}

impl StateRow {
    fn new(source: &'static str, s: &State, gauge_shift: f64) -> Self {
        StateRow {
            source,
            n: s.gap,
            kind: s.kind.as_str(),
            re_z: s.z.re,
            im_z: s.z.im,
            energy_re: s.energy.re,
            energy_im: s.energy.im,
            multiplicity: s.multiplicity,
            residual: s.residual_f,
            gauge_shift,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Verdicts {
    pub parity: bool,
    pub no_double_zero: bool,
    pub interlacing: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct StatesReport {
    pub gauge_shift: f64,
    pub z_max: f64,
    pub gaps: Vec<GapReport>,
    pub axis: AxisReport,
    pub resonances: Vec<State>,
    pub violations: Vec<Violation>,
    pub verdicts: Verdicts,
}

impl StatesReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Gap, axis and resonance states up to `z_max`, with the structural checks.
pub fn cmd_states(cfg: &RunConfig) -> Result<StatesReport> {
    prepare(cfg)?;
    let model = cfg.model_with(cfg.n_max.max(gaps_to_cover(cfg.z_max)))?;
    let gs = model.bands.gauge_shift;
    let th = cfg.thresholds;
    let gaps: Vec<GapReport> = find_all_gap_states(&model, &th)?
        .into_iter()
        .filter(|r| r.n <= cfg.n_max && r.lower <= cfg.z_max)
        .collect();
    let violations = structural_checks(&model, &gaps)?;
    let axis = find_negative_states(&model, cfg.z_max)?;
    let resonances = resonances(&model, cfg, cfg.z_max)?;

    let mut rows = Vec::new();
    for r in &gaps {
        rows.extend(r.states.iter().map(|s| StateRow::new("gap", s, gs)));
    }
    rows.extend(axis.states.iter().map(|s| StateRow::new("axis", s, gs)));
    rows.extend(resonances.iter().map(|s| StateRow::new("resonance", s, gs)));
    write_csv(&cfg.out.join("states.csv"), &rows)?;

    let verdicts = Verdicts {
        parity: !violations.iter().any(|v| matches!(v, Violation::EvenCount { .. })),
        no_double_zero: !violations.iter().any(|v| matches!(v, Violation::BoundAlsoAntibound { .. })),
        interlacing: !violations.iter().any(|v| matches!(v, Violation::Interlacing { .. })),
    };
    let report = StatesReport { gauge_shift: gs, z_max: cfg.z_max, gaps, axis, resonances, violations, verdicts };
    write_json(&cfg.out.join("states.json"), &report)?;
    Ok(report)
}

fn resonances(model: &Model, cfg: &RunConfig, r: f64) -> Result<Vec<State>> {
    let mut search = ResonanceSearch::new(cfg.region.unwrap_or_else(|| default_region(model, r)));
    search.radius = Some(r);
    find_resonances(model, &search)
}

#[derive(Clone, Debug, Serialize)]
pub struct VerifyRow {
    pub section: &'static str,
    pub n: usize,
    pub predicted: f64,
    pub computed: f64,
    pub scaled_residual: f64,
    pub verdict: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct TrendTest {
    pub name: &'static str,
    /// `None` when the test does not apply to this configuration.
    pub passed: Option<bool>,
    pub detail: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct VerifyReport {
    pub trends: Vec<TrendTest>,
    /// Reading of the even-background shift with the smaller residuals, if `p` is even.
    pub even_preferred: Option<String>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.trends.iter().all(|t| t.passed != Some(false))
    }
}

/// Residuals at or below this are treated as exact zeros in a trend.
const EXACT: f64 = 1e-12;

/// Predictions against computed values for gaps `n_from..=n_to`.
pub fn cmd_verify(cfg: &RunConfig) -> Result<VerifyReport> {
    prepare(cfg)?;
    let opts = cfg.verify;
    let model = cfg.model_with(cfg.n_max.max(opts.n_to))?;
    let th = cfg.thresholds;
    let open: Vec<usize> = (1..=opts.n_to).filter(|&n| model.bands.gap(n).is_some_and(|g| g.open)).collect();
    let window: Vec<usize> = open.iter().copied().filter(|&n| n >= opts.n_from).collect();
    let mut rows = Vec::new();
    let mut trends = Vec::new();

    let mut worst = 0.0f64;
    for n in 1..=opts.n_to {
        let b = band_residuals(&model, n, &th)?;
        for (section, value) in [("band_mu", b.mu), ("band_h", b.h), ("band_edge", b.edge)] {
            worst = worst.max(value);
            let verdict = if value <= opts.band_bound { "within" } else { "above" };
            rows.push(VerifyRow { section, n, predicted: f64::NAN, computed: f64::NAN, scaled_residual: value, verdict: verdict.into() });
        }
    }
    trends.push(TrendTest {
        name: "band_residuals_bounded",
        passed: Some(worst <= opts.band_bound),
        detail: format!("max scaled residual {worst:.3e}, bound {}", opts.band_bound),
    });

    let generic = generic_comparison(&model, &window, &th)?;
    for c in &generic {
        rows.push(VerifyRow {
            section: "generic",
            n: c.n,
            predicted: c.predicted,
            computed: c.computed,
            scaled_residual: c.scaled_residual,
            verdict: c.verdict.clone(),
        });
    }
    trends.push(generic_trend(&generic, model.p.is_even()));

    let mut even_preferred = None;
    if model.p.is_even() {
        let adj = even_adjudication(&model, &open, &th)?;
        for r in &adj.rows {
            rows.push(VerifyRow {
                section: "even_statement",
                n: r.n,
                predicted: r.statement,
                computed: r.shift,
                scaled_residual: r.residual_statement,
                verdict: String::new(),
            });
            rows.push(VerifyRow {
                section: "even_proof",
                n: r.n,
                predicted: r.proof,
                computed: r.shift,
                scaled_residual: r.residual_proof,
                verdict: String::new(),
            });
        }
        let exact = adj.rows.iter().all(|r| r.residual_proof.min(r.residual_statement) <= EXACT);
        trends.push(TrendTest {
            name: "even_adjudication",
            passed: Some(exact || adj.trend < 0.0),
            detail: format!("{} gaps, preferred {}, log-slope {:.3}", adj.rows.len(), adj.preferred, adj.trend),
        });
        even_preferred = Some(adj.preferred);
    }

    let signs = sign_outcomes(&model, &open, opts.alpha, &th)?;
    let side = |s: Option<Side>| match s {
        Some(Side::Above) => 1.0,
        Some(Side::Below) => -1.0,
        None => f64::NAN,
    };
    for s in &signs {
        rows.push(VerifyRow {
            section: "sign",
            n: s.n,
            predicted: side(Some(s.predicted_side)),
            computed: side(s.computed_side),
            scaled_residual: if s.agrees { 0.0 } else { 1.0 },
            verdict: format!("{} {}", s.predicted_kind.as_str(), if s.agrees { "agrees" } else { "disagrees" }),
        });
    }
    let agree = signs.iter().filter(|s| s.agrees).count();
    trends.push(TrendTest {
        name: "sign_rule",
        passed: if signs.is_empty() { None } else { Some(agree == signs.len()) },
        detail: format!("{agree} of {} gating-valid gaps agree (alpha {})", signs.len(), opts.alpha),
    });

    write_csv(&cfg.out.join("verify.csv"), &rows)?;
    let report = VerifyReport { trends, even_preferred };
    write_json(&cfg.out.join("verify.json"), &report)?;
    Ok(report)
}

fn generic_trend(rows: &[crate::asymptotics::Comparison], even: bool) -> TrendTest {
    let name = "generic_decreasing";
    if even {
        return TrendTest { name, passed: None, detail: "p is even; see even_adjudication".into() };
    }
    let residuals: Vec<f64> = rows.iter().map(|r| r.scaled_residual).collect();
    if residuals.iter().any(|r| !r.is_finite()) {
        return TrendTest { name, passed: Some(false), detail: "a gap has no single state".into() };
    }
    if residuals.iter().all(|&r| r <= EXACT) {
        return TrendTest { name, passed: Some(true), detail: "all residuals vanish".into() };
    }
    let ns: Vec<f64> = rows.iter().map(|r| r.n as f64).collect();
    let slope = log_slope(&ns, &residuals);
    TrendTest { name, passed: Some(slope < 0.0), detail: format!("log-slope {slope:.3} over {} gaps", rows.len()) }
}

#[derive(Clone, Debug, Serialize)]
pub struct CountRow {
    pub r: f64,
    pub count: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct CountReport {
    pub r_max: f64,
    pub resonances: usize,
    pub slope: f64,
    pub target: f64,
    pub relative_error: f64,
}

/// Resonance counting curve and its slope against `2t / pi`.
pub fn cmd_count(cfg: &RunConfig) -> Result<CountReport> {
    prepare(cfg)?;
    let r_max = cfg.count.r_max.unwrap_or(cfg.z_max);
    let model = cfg.model_with(cfg.n_max.max(gaps_to_cover(r_max)))?;
    let res = resonances(&model, cfg, r_max)?;
    let curve = count_curve(&res, model.t(), r_max, cfg.count.points);
    let rows: Vec<CountRow> = curve.radii.iter().zip(&curve.counts).map(|(&r, &count)| CountRow { r, count }).collect();
    write_csv(&cfg.out.join("count.csv"), &rows)?;
    let report = CountReport {
        r_max,
        resonances: res.len(),
        slope: curve.slope,
        target: curve.target,
        relative_error: (curve.slope - curve.target).abs() / curve.target,
    };
    write_json(&cfg.out.join("count.json"), &report)?;
    Ok(report)
}

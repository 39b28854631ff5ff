//! C ABI over the `hillres` solver.
//!
//! A model is created from the same JSON document the command-line tool reads
//! and handed out as an opaque pointer. Every call returns a [`HillresStatus`];
//! on failure the message is kept per thread and read with
//! [`hillres_last_error`]. Arrays are written into caller buffers: when a buffer
//! is too small the call fails with `BufferTooSmall` and reports the required
//! length through `written`.

use hillres::config::RunConfig;
use hillres::jost::{big_f, jost0, Model};
use hillres::hill::monodromy;
use hillres::momentum::SurfacePoint;
use hillres::states::{find_gap_states, Kind};
use hillres::Error;
use num_complex::Complex64;
use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HillresStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Config = 3,
    InvalidPotential = 4,
    BeyondTruncation = 5,
    ClosedGap = 6,
    Ambiguous = 7,
    Numerical = 8,
    BufferTooSmall = 9,
    Panic = 10,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct HillresComplex {
    pub re: f64,
    pub im: f64,
}

impl From<Complex64> for HillresComplex {
    fn from(z: Complex64) -> Self {
        HillresComplex { re: z.re, im: z.im }
    }
}

impl From<HillresComplex> for Complex64 {
    fn from(z: HillresComplex) -> Self {
        Complex64::new(z.re, z.im)
    }
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct HillresMonodromy {
    pub theta1: HillresComplex,
    pub theta1p: HillresComplex,
    pub phi1: HillresComplex,
    pub phi1p: HillresComplex,
    pub delta: HillresComplex,
    pub beta: HillresComplex,
}

/// One gap, with momenta and the original-scale energies of its edges.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct HillresGap {
    pub n: usize,
    pub lower: f64,
    pub upper: f64,
    pub mu: f64,
    pub e_minus: f64,
    pub e_plus: f64,
    pub open: bool,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HillresKind {
    Bound = 0,
    Antibound = 1,
    Virtual = 2,
    Resonance = 3,
}

impl From<Kind> for HillresKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::Bound => HillresKind::Bound,
            Kind::Antibound => HillresKind::Antibound,
            Kind::Virtual => HillresKind::Virtual,
            Kind::Resonance => HillresKind::Resonance,
        }
    }
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HillresState {
    pub z: HillresComplex,
    /// Energy in the original scale.
    pub energy: HillresComplex,
    pub kind: HillresKind,
    pub multiplicity: usize,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct HillresJost {
    pub psi_plus: HillresComplex,
    pub psi_minus: HillresComplex,
    pub locator: HillresComplex,
}

/// Opaque model handle.
pub struct HillresModel {
    model: Model,
    config: RunConfig,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(message: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = message);
}

fn status_of(err: &Error) -> HillresStatus {
    match err {
        Error::Config { .. } | Error::Io(_) | Error::InvalidRegion(_) => HillresStatus::Config,
        Error::InvalidPotential(_) => HillresStatus::InvalidPotential,
        Error::BeyondTruncation { .. } => HillresStatus::BeyondTruncation,
        Error::ClosedGap(_) => HillresStatus::ClosedGap,
        Error::ClassificationAmbiguous { .. } | Error::BranchAmbiguity(_) => HillresStatus::Ambiguous,
        _ => HillresStatus::Numerical,
    }
}

/// Run `body`, recording errors and panics for [`hillres_last_error`].
fn guard(body: impl FnOnce() -> Result<(), (HillresStatus, String)>) -> HillresStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => HillresStatus::Ok,
        Ok(Err((status, message))) => {
            set_error(message);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            HillresStatus::Panic
        }
    }
}

fn lift<T>(r: hillres::Result<T>) -> Result<T, (HillresStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(what: &str) -> (HillresStatus, String) {
    (HillresStatus::NullPointer, format!("{what} is null"))
}

unsafe fn model_ref<'a>(model: *const HillresModel) -> Result<&'a HillresModel, (HillresStatus, String)> {
    model.as_ref().ok_or_else(|| null("model"))
}

unsafe fn write_slice<T: Copy>(items: &[T], out: *mut T, capacity: usize, written: *mut usize) -> Result<(), (HillresStatus, String)> {
    if written.is_null() {
        return Err(null("written"));
    }
    *written = items.len();
    if items.len() > capacity {
        return Err((HillresStatus::BufferTooSmall, format!("need room for {} entries, got {capacity}", items.len())));
    }
    if !items.is_empty() {
        if out.is_null() {
            return Err(null("out"));
        }
        std::ptr::copy_nonoverlapping(items.as_ptr(), out, items.len());
    }
    Ok(())
}

/// Build a model from a JSON configuration (the command-line format).
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hillres_model_from_json(json: *const c_char, out: *mut *mut HillresModel) -> HillresStatus {
    guard(|| {
        if json.is_null() {
            return Err(null("json"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let text = CStr::from_ptr(json).to_str().map_err(|e| (HillresStatus::InvalidUtf8, e.to_string()))?;
        let config = lift(RunConfig::from_json(text))?;
        lift(config.validate())?;
        let model = lift(config.model())?;
        *out = Box::into_raw(Box::new(HillresModel { model, config }));
        Ok(())
    })
}

/// Release a model. Null is ignored.
///
/// # Safety
/// `model` must come from [`hillres_model_from_json`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn hillres_model_free(model: *mut HillresModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of gaps in the band structure and the gauge shift.
///
/// # Safety
/// Pointers must be valid; either output may be null.
#[no_mangle]
pub unsafe extern "C" fn hillres_model_info(model: *const HillresModel, gaps: *mut usize, gauge_shift: *mut f64) -> HillresStatus {
    guard(|| {
        let m = model_ref(model)?;
        if let Some(g) = gaps.as_mut() {
            *g = m.model.bands.gaps.len();
        }
        if let Some(s) = gauge_shift.as_mut() {
            *s = m.model.bands.gauge_shift;
        }
        Ok(())
    })
}

/// Monodromy data of the background at momentum `z`.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn hillres_monodromy(model: *const HillresModel, z: HillresComplex, out: *mut HillresMonodromy) -> HillresStatus {
    guard(|| {
        let m = model_ref(model)?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let mono = lift(monodromy(&m.model.p, z.into(), 0.0, &m.model.tol))?;
        *out = HillresMonodromy {
            theta1: mono.theta1.into(),
            theta1p: mono.theta1p.into(),
            phi1: mono.phi1.into(),
            phi1p: mono.phi1p.into(),
            delta: mono.delta.into(),
            beta: mono.beta.into(),
        };
        Ok(())
    })
}

/// Gaps `1..=n_max` into `out`.
///
/// # Safety
/// `out` must hold `capacity` entries; `written` must be valid.
#[no_mangle]
pub unsafe extern "C" fn hillres_band_edges(
    model: *const HillresModel,
    out: *mut HillresGap,
    capacity: usize,
    written: *mut usize,
) -> HillresStatus {
    guard(|| {
        let m = model_ref(model)?;
        let gs = m.model.bands.gauge_shift;
        let gaps: Vec<HillresGap> = m
            .model
            .bands
            .gaps
            .iter()
            .map(|g| HillresGap {
                n: g.n,
                lower: g.lower,
                upper: g.upper,
                mu: g.mu,
                e_minus: g.lower * g.lower + gs,
                e_plus: g.upper * g.upper + gs,
                open: g.open,
            })
            .collect();
        write_slice(&gaps, out, capacity, written)
    })
}

/// Jost values and the locator at `z` on the physical sheet.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn hillres_jost(model: *const HillresModel, z: HillresComplex, out: *mut HillresJost) -> HillresStatus {
    guard(|| {
        let m = model_ref(model)?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let j = lift(jost0(&m.model, &SurfacePoint::new(z.into())))?;
        *out = HillresJost { psi_plus: j.psi0_plus.into(), psi_minus: j.psi0_minus.into(), locator: j.big_f.into() };
        Ok(())
    })
}

/// The entire locator `F(z)`, defined on the whole plane.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn hillres_locator(model: *const HillresModel, z: HillresComplex, out: *mut HillresComplex) -> HillresStatus {
    guard(|| {
        let m = model_ref(model)?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = lift(big_f(&m.model, z.into()))?.into();
        Ok(())
    })
}

/// States in gap `n`, using the thresholds from the model's configuration.
///
/// # Safety
/// `out` must hold `capacity` entries; `written` must be valid.
#[no_mangle]
pub unsafe extern "C" fn hillres_gap_states(
    model: *const HillresModel,
    n: usize,
    out: *mut HillresState,
    capacity: usize,
    written: *mut usize,
) -> HillresStatus {
    guard(|| {
        let m = model_ref(model)?;
        let report = lift(find_gap_states(&m.model, n, &m.config.thresholds))?;
        let states: Vec<HillresState> = report
            .states
            .iter()
            .map(|s| HillresState { z: s.z.into(), energy: s.energy.into(), kind: s.kind.into(), multiplicity: s.multiplicity })
            .collect();
        write_slice(&states, out, capacity, written)
    })
}

/// Copy the last error message of this thread into `buffer` (NUL-terminated,
/// truncated to fit) and return its full length without the terminator.
///
/// # Safety
/// `buffer` must hold `capacity` bytes, or be null with `capacity` 0.
#[no_mangle]
pub unsafe extern "C" fn hillres_last_error(buffer: *mut c_char, capacity: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        let bytes = msg.as_bytes();
        if !buffer.is_null() && capacity > 0 {
            let n = bytes.len().min(capacity - 1);
            std::ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buffer, n);
            *buffer.add(n) = 0;
        }
        bytes.len()
    })
}

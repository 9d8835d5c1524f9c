//! C interface to the emulator, the test objectives and the sequential
//! design loop.
//!
//! Every fallible function returns a [`MiceStatus`]. On failure the message
//! is available from [`mice_last_error_message`] on the same thread until the
//! next failing call. Handles are opaque and must be released with their
//! `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, c_void, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;
use std::sync::atomic::{AtomicI32, Ordering};

use mice_core::bench;
use mice_core::likelihood::MleConfig;
use mice_core::sampling::maximin_lhd;
use mice_core::seq_design::{run_sequential, HyperSpec, PoolSpec};
use mice_core::testbed::{Objective, ObjectiveName};
use mice_core::{Criterion, Design, Error, GpModel, KernelSpec, PointSet, SequentialConfig};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MiceStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Numerical = 3,
    Callback = 4,
    Panic = 5,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MiceFamily {
    SquaredExponential = 0,
    Matern52 = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MiceCriterion {
    Alm = 0,
    Alc = 1,
    Mi = 2,
    Mice = 3,
    Random = 4,
}

impl From<MiceCriterion> for Criterion {
    fn from(c: MiceCriterion) -> Self {
        match c {
            MiceCriterion::Alm => Criterion::Alm,
            MiceCriterion::Alc => Criterion::Alc,
            MiceCriterion::Mi => Criterion::Mi,
            MiceCriterion::Mice => Criterion::Mice,
            MiceCriterion::Random => Criterion::Random,
        }
    }
}

/// Correlation function with lengthscales, process variance and nugget.
pub struct MiceKernel(KernelSpec);

/// A fitted emulator.
pub struct MiceGp(GpModel);

/// One of the built-in test functions on the scaled domain [0,1]^p.
pub struct MiceObjective(Objective);

/// Objective supplied by the caller. Writes f(x) to `out` and returns 0 on
/// success; any other value aborts the run with `MICE_STATUS_CALLBACK`.
pub type MiceObjectiveCallback =
    Option<extern "C" fn(x: *const f64, dim: usize, user_data: *mut c_void, out: *mut f64) -> c_int>;

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

/// Message of the last failure on this thread, or NULL if none. The pointer
/// stays valid until the next failing call on this thread.
#[no_mangle]
pub extern "C" fn mice_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn mice_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

enum Failure {
    Null(&'static str),
    Arg(String),
    Core(Error),
    Callback(c_int),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> MiceStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MiceStatus::Ok,
        Ok(Err(Failure::Null(what))) => {
            set_last_error(format!("{what} is NULL"));
            MiceStatus::NullPointer
        }
        Ok(Err(Failure::Arg(msg))) => {
            set_last_error(msg);
            MiceStatus::InvalidArgument
        }
        Ok(Err(Failure::Callback(code))) => {
            set_last_error(format!("objective callback returned {code}"));
            MiceStatus::Callback
        }
        Ok(Err(Failure::Core(e))) => {
            set_last_error(e.to_string());
            if e.is_numerical() {
                MiceStatus::Numerical
            } else {
                MiceStatus::InvalidArgument
            }
        }
        Err(_) => {
            set_last_error("internal panic");
            MiceStatus::Panic
        }
    }
}

unsafe fn slice_in<'a>(p: *const f64, len: usize, what: &'static str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn out_ref<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or(Failure::Null(what))
}

/// Creates a kernel with `dim` lengthscales, unit process variance and the
/// given nugget.
///
/// # Safety
/// `lengthscales` must point to `dim` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mice_kernel_new(
    family: MiceFamily,
    lengthscales: *const f64,
    dim: usize,
    nugget: f64,
    out: *mut *mut MiceKernel,
) -> MiceStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let ell = slice_in(lengthscales, dim, "lengthscales")?.to_vec();
        let k = match family {
            MiceFamily::SquaredExponential => KernelSpec::squared_exponential(ell)?,
            MiceFamily::Matern52 => KernelSpec::matern52(ell)?,
        };
        *out = Box::into_raw(Box::new(MiceKernel(k.with_nugget(nugget)?)));
        Ok(())
    })
}

/// # Safety
/// `kernel` must come from `mice_kernel_new` or be NULL.
#[no_mangle]
pub unsafe extern "C" fn mice_kernel_free(kernel: *mut MiceKernel) {
    if !kernel.is_null() {
        drop(Box::from_raw(kernel));
    }
}

/// Fits the emulator to `n` points of dimension `dim` stored row-major in
/// `xs` with outputs `ys`. Outputs are standardized internally.
///
/// # Safety
/// `xs` must hold `n * dim` doubles, `ys` `n` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mice_gp_fit(
    kernel: *const MiceKernel,
    xs: *const f64,
    n: usize,
    dim: usize,
    ys: *const f64,
    out: *mut *mut MiceGp,
) -> MiceStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let kernel = &kernel.as_ref().ok_or(Failure::Null("kernel"))?.0;
        let points = PointSet::from_flat(dim, slice_in(xs, n * dim, "xs")?.to_vec())?;
        let mut design = Design::from_data(&points, slice_in(ys, n, "ys")?)?;
        design.normalize_outputs();
        *out = Box::into_raw(Box::new(MiceGp(GpModel::fit(&design, kernel)?)));
        Ok(())
    })
}

/// Predictive mean (original output units) and variance (standardized
/// units) at `x`. Either output pointer may be NULL.
///
/// # Safety
/// `x` must hold `dim` doubles.
#[no_mangle]
pub unsafe extern "C" fn mice_gp_predict(
    gp: *const MiceGp,
    x: *const f64,
    dim: usize,
    mean: *mut f64,
    variance: *mut f64,
) -> MiceStatus {
    guard(|| {
        let gp = &gp.as_ref().ok_or(Failure::Null("gp"))?.0;
        let x = slice_in(x, dim, "x")?;
        if let Some(m) = mean.as_mut() {
            *m = gp.predict_mean_original(x)?;
        }
        if let Some(v) = variance.as_mut() {
            *v = gp.predict_variance(x)?;
        }
        Ok(())
    })
}

/// # Safety
/// `gp` must come from `mice_gp_fit` or be NULL.
#[no_mangle]
pub unsafe extern "C" fn mice_gp_free(gp: *mut MiceGp) {
    if !gp.is_null() {
        drop(Box::from_raw(gp));
    }
}

/// Looks up a built-in objective by name (`grf2d`, `branin`,
/// `oscillatory4d`, `oscillatory8d`, `piston`).
///
/// # Safety
/// `name` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mice_objective_new(
    name: *const c_char,
    seed: u64,
    out: *mut *mut MiceObjective,
) -> MiceStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        if name.is_null() {
            return Err(Failure::Null("name"));
        }
        let name = CStr::from_ptr(name).to_str().map_err(|_| Failure::Arg("name is not UTF-8".into()))?;
        let name: ObjectiveName = name.parse()?;
        *out = Box::into_raw(Box::new(MiceObjective(Objective::by_name(name, seed)?)));
        Ok(())
    })
}

/// Input dimension, or 0 for a NULL handle.
///
/// # Safety
/// `objective` must come from `mice_objective_new` or be NULL.
#[no_mangle]
pub unsafe extern "C" fn mice_objective_dim(objective: *const MiceObjective) -> usize {
    objective.as_ref().map_or(0, |o| o.0.dim())
}

/// Evaluates the objective at a scaled point `u` in [0,1]^dim.
///
/// # Safety
/// `u` must hold `dim` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mice_objective_eval(
    objective: *const MiceObjective,
    u: *const f64,
    dim: usize,
    out: *mut f64,
) -> MiceStatus {
    guard(|| {
        let o = &objective.as_ref().ok_or(Failure::Null("objective"))?.0;
        let out = out_ref(out, "out")?;
        *out = o.eval_scaled(slice_in(u, dim, "u")?)?;
        Ok(())
    })
}

/// # Safety
/// `objective` must come from `mice_objective_new` or be NULL.
#[no_mangle]
pub unsafe extern "C" fn mice_objective_free(objective: *mut MiceObjective) {
    if !objective.is_null() {
        drop(Box::from_raw(objective));
    }
}

/// Options for [`mice_run_sequential`].
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct MiceSequentialOptions {
    pub criterion: MiceCriterion,
    pub family: MiceFamily,
    /// Final design size.
    pub budget: usize,
    /// Initial maximin LHD size.
    pub initial: usize,
    /// Candidates per step; the discretization and reference set match it.
    pub n_cand: usize,
    pub nugget: f64,
    pub tau_s: f64,
    /// `dim` fixed lengthscales, or NULL to estimate them by maximum likelihood.
    pub lengthscales: *const f64,
    pub seed: u64,
}

/// Default options: MICE with 150 candidates, Matérn 5/2, estimated
/// lengthscales, an initial design of 10 and a budget of 50.
#[no_mangle]
pub extern "C" fn mice_sequential_options_default() -> MiceSequentialOptions {
    MiceSequentialOptions {
        criterion: MiceCriterion::Mice,
        family: MiceFamily::Matern52,
        budget: 50,
        initial: 10,
        n_cand: 150,
        nugget: mice_core::seq_design::DEFAULT_NUGGET,
        tau_s: mice_core::criteria::DEFAULT_TAU_S,
        lengthscales: ptr::null(),
        seed: 1,
    }
}

struct Callback {
    f: extern "C" fn(*const f64, usize, *mut c_void, *mut f64) -> c_int,
    user_data: *mut c_void,
}

// The callback may be invoked from worker threads; the caller guarantees it
// is safe to do so.
unsafe impl Sync for Callback {}

impl Callback {
    fn call(&self, x: &[f64], y: &mut f64) -> c_int {
        (self.f)(x.as_ptr(), x.len(), self.user_data, y)
    }
}

/// Runs a sequential design on [0,1]^dim against a caller-supplied objective.
/// On success `points` holds `budget * dim` doubles row-major and `values`
/// the `budget` outputs, in selection order. `callback` must be safe to call
/// from any thread.
///
/// # Safety
/// `points` and `values` must be writable for the sizes above; `lengthscales`
/// in `options` must be NULL or hold `dim` doubles.
#[no_mangle]
pub unsafe extern "C" fn mice_run_sequential(
    callback: MiceObjectiveCallback,
    user_data: *mut c_void,
    dim: usize,
    options: *const MiceSequentialOptions,
    points: *mut f64,
    values: *mut f64,
) -> MiceStatus {
    guard(|| {
        let cb = Callback { f: callback.ok_or(Failure::Null("callback"))?, user_data };
        let opts = *options.as_ref().ok_or(Failure::Null("options"))?;
        if points.is_null() {
            return Err(Failure::Null("points"));
        }
        if values.is_null() {
            return Err(Failure::Null("values"));
        }
        if dim == 0 {
            return Err(Failure::Arg("dim must be positive".into()));
        }
        let tentative = vec![1.0; dim];
        let kernel = match opts.family {
            MiceFamily::SquaredExponential => KernelSpec::squared_exponential(tentative)?,
            MiceFamily::Matern52 => KernelSpec::matern52(tentative)?,
        };
        let hyper = if opts.lengthscales.is_null() {
            HyperSpec::Estimate(MleConfig::for_dim(dim, mice_core::seed::derive(opts.seed, &[3])))
        } else {
            HyperSpec::Fixed(slice::from_raw_parts(opts.lengthscales, dim).to_vec())
        };
        let config = SequentialConfig {
            criterion: opts.criterion.into(),
            budget: opts.budget,
            pool: PoolSpec::fresh(opts.n_cand),
            nugget: opts.nugget,
            tau_s: opts.tau_s,
            kernel,
            hyper,
            input_bounds: vec![(0.0, 1.0); dim],
            checkpoints: Vec::new(),
            validation: None,
            seed: mice_core::seed::derive(opts.seed, &[2]),
        };
        let initial = maximin_lhd(opts.initial, dim, 100, mice_core::seed::derive(opts.seed, &[0]))?;
        let failed = AtomicI32::new(0);
        let objective = |x: &[f64]| -> mice_core::Result<f64> {
            let mut y = f64::NAN;
            match cb.call(x, &mut y) {
                0 => Ok(y),
                code => {
                    failed.store(code, Ordering::Relaxed);
                    Err(Error::Config(format!("objective callback returned {code}")))
                }
            }
        };
        let record =
            run_sequential(&objective, &config, &initial).map_err(|a| match failed.load(Ordering::Relaxed) {
                0 => Failure::Core(a.source),
                code => Failure::Callback(code),
            })?;
        let design = &record.final_design;
        slice::from_raw_parts_mut(points, design.len() * dim).copy_from_slice(design.inputs().as_flat());
        slice::from_raw_parts_mut(values, design.len()).copy_from_slice(design.outputs());
        Ok(())
    })
}

/// Root-mean-square error between `n` predictions and truths.
///
/// # Safety
/// Both arrays must hold `n` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mice_rmspe(
    predictions: *const f64,
    truths: *const f64,
    n: usize,
    out: *mut f64,
) -> MiceStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = bench::rmspe(slice_in(predictions, n, "predictions")?, slice_in(truths, n, "truths")?)?;
        Ok(())
    })
}

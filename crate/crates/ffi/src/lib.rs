//! C ABI for `sdsbm`.
//!
//! Networks and fits are exposed as opaque handles that the caller releases
//! with the matching `*_free` function. Fallible calls return an
//! [`SdsbmStatus`]; on failure, [`sdsbm_last_error_message`] describes the
//! error for the calling thread. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use sdsbm::em::{em_fit, FitConfig, FitResult, InitBelief};
use sdsbm::netfile::{read_network, write_network};
use sdsbm::netgen::{generate, BlockSizing, BlockTemplate, CountModel, DynamicNetwork, NetworkConfig};
use sdsbm::seasonal::{sine_offsets, NoiseParams, OffsetPreset};
use sdsbm::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SdsbmStatus {
    Ok = 0,
    Validation = 1,
    Numerical = 2,
    Parse = 3,
    Io = 4,
    NullPointer = 5,
    OutOfRange = 6,
    Panic = 7,
}

/// Opaque generated or loaded dynamic network.
pub struct SdsbmNetwork(DynamicNetwork);

/// Opaque EM fit of one block.
pub struct SdsbmFit(FitResult);

/// Generator settings. Fill with `sdsbm_generate_options_default` first.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct SdsbmGenerateOptions {
    pub types: u32,
    /// Possible edges per block.
    pub block_n: u64,
    pub period: u32,
    pub bias: f64,
    /// One zero-sum period of `period` offsets, or NULL for the default
    /// (the rounded 8-step sine when `period == 8`, otherwise an amplitude-0.3 sine).
    pub period_offsets: *const f64,
    pub q_m: f64,
    pub q_s: f64,
    pub r: f64,
    pub steps: u64,
    pub seed: u64,
    /// Non-zero: counts are `round(n * E_t)` instead of binomial draws.
    pub expected_counts: u8,
}

/// EM settings. Fill with `sdsbm_fit_options_default` first.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct SdsbmFitOptions {
    pub period: u32,
    pub init_q_m: f64,
    pub init_q_s: f64,
    pub init_r: f64,
    pub init_cov_scale: f64,
    /// Non-zero: all-ones initial mean instead of the first-period density.
    pub literal_init: u8,
    pub max_iters: u32,
    pub loglik_rel_tol: f64,
    pub r_lo: f64,
    pub r_hi: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> SdsbmStatus {
    match e {
        Error::Validation(_) => SdsbmStatus::Validation,
        Error::Numerical(_) => SdsbmStatus::Numerical,
        Error::Parse { .. } | Error::Version { .. } => SdsbmStatus::Parse,
        Error::Io { .. } => SdsbmStatus::Io,
    }
}

fn fail(status: SdsbmStatus, msg: impl Into<String>) -> SdsbmStatus {
    set_last_error(msg.into());
    status
}

/// Runs `f`, converting errors and panics to status codes.
fn guard(f: impl FnOnce() -> Result<(), SdsbmStatus>) -> SdsbmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SdsbmStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => fail(SdsbmStatus::Panic, "internal panic"),
    }
}

fn lib_err(e: Error) -> SdsbmStatus {
    let s = status_of(&e);
    fail(s, e.to_string())
}

unsafe fn path_arg<'a>(p: *const c_char) -> Result<&'a Path, SdsbmStatus> {
    if p.is_null() {
        return Err(fail(SdsbmStatus::NullPointer, "path is NULL"));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(SdsbmStatus::Validation, "path is not valid UTF-8"))?;
    Ok(Path::new(s))
}

/// Message for the last failed call on this thread, or NULL if none.
/// The pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn sdsbm_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn sdsbm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Measurement variance `n E (1 - E) + n^2 r`.
#[no_mangle]
pub extern "C" fn sdsbm_obs_variance(n: u64, e: f64, r: f64) -> f64 {
    sdsbm::ssm::obs_variance(n, e, r)
}

/// Fills `out` with the synthetic-experiment defaults: 3 types, 1000 possible
/// edges per block, period 8, bias 0.5, `q_m = q_s = 1e-8`, `r = 5.5e-3`, 80 steps.
///
/// # Safety
/// `out` must be NULL or point to writable memory for one `SdsbmGenerateOptions`.
#[no_mangle]
pub unsafe extern "C" fn sdsbm_generate_options_default(out: *mut SdsbmGenerateOptions) -> SdsbmStatus {
    if out.is_null() {
        return fail(SdsbmStatus::NullPointer, "options pointer is NULL");
    }
    let d = NetworkConfig::default_experiment(0);
    let n = match d.sizing {
        BlockSizing::PossibleEdges(n) => n,
        BlockSizing::NodesPerType(_) => 1000,
    };
    out.write(SdsbmGenerateOptions {
        types: d.k,
        block_n: n,
        period: d.period as u32,
        bias: d.template.init_bias,
        period_offsets: ptr::null(),
        q_m: d.template.noise.q_m,
        q_s: d.template.noise.q_s,
        r: d.template.noise.r,
        steps: d.steps as u64,
        seed: 0,
        expected_counts: 0,
    });
    SdsbmStatus::Ok
}

/// Generates a network. On success `*out` receives a handle to free with
/// `sdsbm_network_free`.
///
/// # Safety
/// `opts` must point to a valid options struct whose `period_offsets` is NULL
/// or points to `period` readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sdsbm_network_generate(
    opts: *const SdsbmGenerateOptions,
    out: *mut *mut SdsbmNetwork,
) -> SdsbmStatus {
    guard(|| {
        if opts.is_null() || out.is_null() {
            return Err(fail(SdsbmStatus::NullPointer, "NULL argument"));
        }
        let o = &*opts;
        let period = o.period as usize;
        let offsets = if o.period_offsets.is_null() {
            if period == 8 {
                OffsetPreset::PaperD8.offsets()
            } else {
                sine_offsets(period, 0.3).map_err(lib_err)?
            }
        } else {
            std::slice::from_raw_parts(o.period_offsets, period).to_vec()
        };
        let config = NetworkConfig {
            k: o.types,
            sizing: BlockSizing::PossibleEdges(o.block_n),
            period,
            steps: o.steps as usize,
            seed: o.seed,
            template: BlockTemplate {
                init_bias: o.bias,
                period_offsets: offsets,
                noise: NoiseParams::new(o.q_m, o.q_s, o.r).map_err(lib_err)?,
            },
            overrides: Vec::new(),
            pairs: None,
            adjacency: false,
            count_model: if o.expected_counts != 0 { CountModel::Expected } else { CountModel::Binomial },
        };
        let net = generate(&config).map_err(lib_err)?;
        out.write(Box::into_raw(Box::new(SdsbmNetwork(net))));
        Ok(())
    })
}

/// Reads a network JSON file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sdsbm_network_read(path: *const c_char, out: *mut *mut SdsbmNetwork) -> SdsbmStatus {
    guard(|| {
        if out.is_null() {
            return Err(fail(SdsbmStatus::NullPointer, "out is NULL"));
        }
        let net = read_network(path_arg(path)?).map_err(lib_err)?;
        out.write(Box::into_raw(Box::new(SdsbmNetwork(net))));
        Ok(())
    })
}

/// Writes a network JSON file.
///
/// # Safety
/// `net` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn sdsbm_network_write(net: *const SdsbmNetwork, path: *const c_char) -> SdsbmStatus {
    guard(|| {
        let net = net.as_ref().ok_or_else(|| fail(SdsbmStatus::NullPointer, "network is NULL"))?;
        write_network(&net.0, path_arg(path)?).map_err(lib_err)
    })
}

/// Releases a network handle. NULL is ignored.
///
/// # Safety
/// `net` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sdsbm_network_free(net: *mut SdsbmNetwork) {
    if !net.is_null() {
        drop(Box::from_raw(net));
    }
}

/// Number of blocks, or 0 for NULL.
///
/// # Safety
/// `net` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sdsbm_network_block_count(net: *const SdsbmNetwork) -> usize {
    net.as_ref().map_or(0, |n| n.0.blocks.len())
}

/// Number of time steps T, or 0 for NULL.
///
/// # Safety
/// `net` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sdsbm_network_steps(net: *const SdsbmNetwork) -> usize {
    net.as_ref().map_or(0, |n| n.0.meta.steps)
}

/// Period d, or 0 for NULL.
///
/// # Safety
/// `net` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sdsbm_network_period(net: *const SdsbmNetwork) -> usize {
    net.as_ref().map_or(0, |n| n.0.meta.period)
}

/// Type pair and possible-edge count of block `index`.
///
/// # Safety
/// `net` must be a live handle; output pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn sdsbm_network_block_info(
    net: *const SdsbmNetwork,
    index: usize,
    type_a: *mut u32,
    type_b: *mut u32,
    n: *mut u64,
) -> SdsbmStatus {
    guard(|| {
        let net = net.as_ref().ok_or_else(|| fail(SdsbmStatus::NullPointer, "network is NULL"))?;
        if type_a.is_null() || type_b.is_null() || n.is_null() {
            return Err(fail(SdsbmStatus::NullPointer, "NULL output pointer"));
        }
        let b = net
            .0
            .blocks
            .get(index)
            .ok_or_else(|| fail(SdsbmStatus::OutOfRange, format!("block index {index} out of range")))?;
        type_a.write(b.pair.a);
        type_b.write(b.pair.b);
        n.write(b.n);
        Ok(())
    })
}

unsafe fn copy_out<T: Copy>(src: &[T], buf: *mut T, len: usize) -> Result<(), SdsbmStatus> {
    if buf.is_null() {
        return Err(fail(SdsbmStatus::NullPointer, "buffer is NULL"));
    }
    if len < src.len() {
        return Err(fail(
            SdsbmStatus::OutOfRange,
            format!("buffer holds {len} values, {} needed", src.len()),
        ));
    }
    ptr::copy_nonoverlapping(src.as_ptr(), buf, src.len());
    Ok(())
}

/// Copies the T counts of block `index` into `buf` (capacity `len`).
///
/// # Safety
/// `net` must be a live handle; `buf` must hold `len` writable values.
#[no_mangle]
pub unsafe extern "C" fn sdsbm_network_counts(
    net: *const SdsbmNetwork,
    index: usize,
    buf: *mut u64,
    len: usize,
) -> SdsbmStatus {
    guard(|| {
        let net = net.as_ref().ok_or_else(|| fail(SdsbmStatus::NullPointer, "network is NULL"))?;
        let b = net
            .0
            .blocks
            .get(index)
            .ok_or_else(|| fail(SdsbmStatus::OutOfRange, format!("block index {index} out of range")))?;
        copy_out(&b.counts, buf, len)
    })
}

/// Fills `out` with the EM defaults for period `period`.
///
/// # Safety
/// `out` must be NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn sdsbm_fit_options_default(period: u32, out: *mut SdsbmFitOptions) -> SdsbmStatus {
    if out.is_null() {
        return fail(SdsbmStatus::NullPointer, "options pointer is NULL");
    }
    let c = FitConfig::new(period as usize);
    out.write(SdsbmFitOptions {
        period,
        init_q_m: c.init_noise.q_m,
        init_q_s: c.init_noise.q_s,
        init_r: c.init_noise.r,
        init_cov_scale: 1.0,
        literal_init: 0,
        max_iters: c.max_iters as u32,
        loglik_rel_tol: c.loglik_rel_tol,
        r_lo: c.r_bracket.0,
        r_hi: c.r_bracket.1,
    });
    SdsbmStatus::Ok
}

fn fit_config(o: &SdsbmFitOptions) -> Result<FitConfig, SdsbmStatus> {
    let config = FitConfig {
        period: o.period as usize,
        init: if o.literal_init != 0 {
            InitBelief::Ones
        } else {
            InitBelief::DataDriven { cov_scale: o.init_cov_scale }
        },
        init_noise: NoiseParams { q_m: o.init_q_m, q_s: o.init_q_s, r: o.init_r },
        max_iters: o.max_iters as usize,
        loglik_rel_tol: o.loglik_rel_tol,
        r_bracket: (o.r_lo, o.r_hi),
    };
    config.validate().map_err(lib_err)?;
    Ok(config)
}

/// Fits one count series of `len` values with `n` possible edges.
///
/// # Safety
/// `counts` must point to `len` readable values; `opts` to a valid struct;
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sdsbm_fit_counts(
    counts: *const u64,
    len: usize,
    n: u64,
    opts: *const SdsbmFitOptions,
    out: *mut *mut SdsbmFit,
) -> SdsbmStatus {
    guard(|| {
        if counts.is_null() || opts.is_null() || out.is_null() {
            return Err(fail(SdsbmStatus::NullPointer, "NULL argument"));
        }
        let series = std::slice::from_raw_parts(counts, len);
        let fit = em_fit(series, n, &fit_config(&*opts)?).map_err(lib_err)?;
        out.write(Box::into_raw(Box::new(SdsbmFit(fit))));
        Ok(())
    })
}

/// Fits block `index` of a network.
///
/// # Safety
/// `net` must be a live handle; `opts` valid; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sdsbm_fit_network_block(
    net: *const SdsbmNetwork,
    index: usize,
    opts: *const SdsbmFitOptions,
    out: *mut *mut SdsbmFit,
) -> SdsbmStatus {
    guard(|| {
        let net = net.as_ref().ok_or_else(|| fail(SdsbmStatus::NullPointer, "network is NULL"))?;
        if opts.is_null() || out.is_null() {
            return Err(fail(SdsbmStatus::NullPointer, "NULL argument"));
        }
        let b = net
            .0
            .blocks
            .get(index)
            .ok_or_else(|| fail(SdsbmStatus::OutOfRange, format!("block index {index} out of range")))?;
        let fit = em_fit(&b.counts, b.n, &fit_config(&*opts)?).map_err(lib_err)?;
        out.write(Box::into_raw(Box::new(SdsbmFit(fit))));
        Ok(())
    })
}

/// Releases a fit handle. NULL is ignored.
///
/// # Safety
/// `fit` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sdsbm_fit_free(fit: *mut SdsbmFit) {
    if !fit.is_null() {
        drop(Box::from_raw(fit));
    }
}

/// Learned variances of the final EM iteration.
///
/// # Safety
/// `fit` must be a live handle; output pointers writable.
#[no_mangle]
pub unsafe extern "C" fn sdsbm_fit_params(
    fit: *const SdsbmFit,
    q_m: *mut f64,
    q_s: *mut f64,
    r: *mut f64,
) -> SdsbmStatus {
    guard(|| {
        let fit = fit.as_ref().ok_or_else(|| fail(SdsbmStatus::NullPointer, "fit is NULL"))?;
        if q_m.is_null() || q_s.is_null() || r.is_null() {
            return Err(fail(SdsbmStatus::NullPointer, "NULL output pointer"));
        }
        q_m.write(fit.0.noise.q_m);
        q_s.write(fit.0.noise.q_s);
        r.write(fit.0.noise.r);
        Ok(())
    })
}

/// Number of EM iterations (E-steps) run, or 0 for NULL.
///
/// # Safety
/// `fit` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sdsbm_fit_iterations(fit: *const SdsbmFit) -> usize {
    fit.as_ref().map_or(0, |f| f.0.iterations)
}

/// 1 when EM met its tolerance, 0 otherwise (or for NULL).
///
/// # Safety
/// `fit` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sdsbm_fit_converged(fit: *const SdsbmFit) -> u8 {
    fit.as_ref().map_or(0, |f| u8::from(f.0.converged))
}

/// Number of time steps in the fit, or 0 for NULL.
///
/// # Safety
/// `fit` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sdsbm_fit_steps(fit: *const SdsbmFit) -> usize {
    fit.as_ref().map_or(0, |f| f.0.smoothed.len())
}

/// Copies the observed-data log-likelihood of each iteration into `buf`.
///
/// # Safety
/// `fit` must be a live handle; `buf` must hold `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn sdsbm_fit_loglik_trace(fit: *const SdsbmFit, buf: *mut f64, len: usize) -> SdsbmStatus {
    guard(|| {
        let fit = fit.as_ref().ok_or_else(|| fail(SdsbmStatus::NullPointer, "fit is NULL"))?;
        let trace: Vec<f64> = fit.0.trace.iter().map(|r| r.loglik).collect();
        copy_out(&trace, buf, len)
    })
}

/// Copies the smoothed state means, row-major `T x d`, into `buf`.
///
/// # Safety
/// `fit` must be a live handle; `buf` must hold `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn sdsbm_fit_smoothed_means(fit: *const SdsbmFit, buf: *mut f64, len: usize) -> SdsbmStatus {
    guard(|| {
        let fit = fit.as_ref().ok_or_else(|| fail(SdsbmStatus::NullPointer, "fit is NULL"))?;
        let flat: Vec<f64> = fit.0.smoothed.iter().flat_map(|s| s.mean.iter().copied()).collect();
        copy_out(&flat, buf, len)
    })
}

/// Copies the predicted densities `Ê_t` of the final filter pass into `buf`.
///
/// # Safety
/// `fit` must be a live handle; `buf` must hold `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn sdsbm_fit_density_estimates(fit: *const SdsbmFit, buf: *mut f64, len: usize) -> SdsbmStatus {
    guard(|| {
        let fit = fit.as_ref().ok_or_else(|| fail(SdsbmStatus::NullPointer, "fit is NULL"))?;
        copy_out(&fit.0.density_estimates(), buf, len)
    })
}

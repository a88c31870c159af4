//! C ABI over `ggmbd`.
//!
//! Every function returns a [`GgmStatus`] and writes results through out
//! pointers. On failure the message is kept per thread and can be read with
//! [`ggm_last_error`]. Panics are caught at the boundary and reported as
//! `GGM_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use ggmbd::bdmcmc::{self, ChainConfig, ProviderMode, RatioProvider};
use ggmbd::graph::{self, Graph, GraphKind, PathCaps};
use ggmbd::{gwishart, Error};
use nalgebra::DMatrix;

/// Result code of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GgmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    GraphError = 3,
    NumericError = 4,
    ParseError = 5,
    BufferTooSmall = 6,
    Panic = 7,
}

/// Source of the prior ratio in the birth-death sampler.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GgmProvider {
    Approximation = 0,
    McRatio = 1,
    ExactDecomposable = 2,
}

/// Opaque graph handle.
pub struct GgmGraph(Graph);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior nuls removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> GgmStatus {
    use Error::*;
    match e {
        IndexOutOfRange { .. } | SelfLoop(_) | UnsupportedKind(_) | TooFewVertices { .. } | EdgePresent(..)
        | EdgeAbsent(..) | Disconnected | NotDecomposable | PatternViolation(..) | InvalidOrder(_) => {
            GgmStatus::GraphError
        }
        NonPositiveDelta(_) | NonPositiveShape | NegativeK | NonPositiveX(_) | DeltaTooSmall(_) | ZeroSamples
        | InvalidConfig(_) | DimensionMismatch { .. } | DegenerateLabels(_) | TruncatedProfile => {
            GgmStatus::InvalidArgument
        }
        Parse(_) => GgmStatus::ParseError,
        _ => GgmStatus::NumericError,
    }
}

struct Fail(GgmStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(GgmStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, mapping errors and panics to a status and recording the message.
fn guard<F: FnOnce() -> Result<(), Fail>>(f: F) -> GgmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            GgmStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            GgmStatus::Panic
        }
    }
}

unsafe fn out_ref<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn graph_ref<'a>(g: *const GgmGraph) -> Result<&'a Graph, Fail> {
    g.as_ref().map(|g| &g.0).ok_or_else(|| null("graph"))
}

unsafe fn str_arg<'a>(s: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if s.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|e| Fail(GgmStatus::InvalidArgument, format!("{what} is not UTF-8: {e}")))
}

fn boxed(g: Graph) -> *mut GgmGraph {
    Box::into_raw(Box::new(GgmGraph(g)))
}

/// Message of the last failed call on this thread, or null after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn ggm_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Graph on `p` vertices from `n_edges` pairs stored flat in `edges`.
///
/// # Safety
/// `edges` must point to `2 * n_edges` values (may be null when `n_edges`
/// is 0) and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ggm_graph_new(p: usize, edges: *const usize, n_edges: usize, out: *mut *mut GgmGraph) -> GgmStatus {
    guard(|| {
        let out = out_ptr(out)?;
        let flat: &[usize] = if n_edges == 0 {
            &[]
        } else if edges.is_null() {
            return Err(null("edges"));
        } else {
            std::slice::from_raw_parts(edges, 2 * n_edges)
        };
        let g = Graph::new(p, flat.chunks_exact(2).map(|c| (c[0], c[1])))?;
        *out = boxed(g);
        Ok(())
    })
}

unsafe fn out_ptr<'a>(out: *mut *mut GgmGraph) -> Result<&'a mut *mut GgmGraph, Fail> {
    let o = out.as_mut().ok_or_else(|| null("out"))?;
    *o = ptr::null_mut();
    Ok(o)
}

/// Random graph of the named kind: `scale_free`, `random_p`, `random_2p`
/// or `cluster`.
///
/// # Safety
/// `kind` must be a nul-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ggm_graph_generate(kind: *const c_char, p: usize, seed: u64, out: *mut *mut GgmGraph) -> GgmStatus {
    guard(|| {
        let out = out_ptr(out)?;
        let kind: GraphKind = str_arg(kind, "kind")?.parse()?;
        *out = boxed(graph::generate(kind, p, seed)?);
        Ok(())
    })
}

/// # Safety
/// `json` must be a nul-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ggm_graph_from_json(json: *const c_char, out: *mut *mut GgmGraph) -> GgmStatus {
    guard(|| {
        let out = out_ptr(out)?;
        *out = boxed(Graph::from_json_str(str_arg(json, "json")?)?);
        Ok(())
    })
}

/// JSON text of the graph; release it with [`ggm_string_free`].
///
/// # Safety
/// `g` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ggm_graph_to_json(g: *const GgmGraph, out: *mut *mut c_char) -> GgmStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let s = CString::new(graph_ref(g)?.to_json_string()).expect("json has no nul bytes");
        *out = s.into_raw();
        Ok(())
    })
}

/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn ggm_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// # Safety
/// `g` must be null or a live handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn ggm_graph_free(g: *mut GgmGraph) {
    if !g.is_null() {
        drop(Box::from_raw(g));
    }
}

/// # Safety
/// `g` must be a live handle; out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn ggm_graph_counts(g: *const GgmGraph, n_vertices: *mut usize, n_edges: *mut usize) -> GgmStatus {
    guard(|| {
        let g = graph_ref(g)?;
        *out_ref(n_vertices, "n_vertices")? = g.p();
        *out_ref(n_edges, "n_edges")? = g.n_edges();
        Ok(())
    })
}

/// Copies the sorted edge list into `buf` as flat pairs. `capacity` counts
/// pairs; when too small, nothing is copied, `written` holds the needed
/// count and the status is `GGM_STATUS_BUFFER_TOO_SMALL`.
///
/// # Safety
/// `buf` must hold `2 * capacity` values; `written` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ggm_graph_edges(g: *const GgmGraph, buf: *mut usize, capacity: usize, written: *mut usize) -> GgmStatus {
    guard(|| {
        let g = graph_ref(g)?;
        let written = out_ref(written, "written")?;
        *written = g.n_edges();
        if capacity < g.n_edges() {
            return Err(Fail(
                GgmStatus::BufferTooSmall,
                format!("need room for {} edges, got {capacity}", g.n_edges()),
            ));
        }
        if g.n_edges() > 0 {
            if buf.is_null() {
                return Err(null("buf"));
            }
            let dst = std::slice::from_raw_parts_mut(buf, 2 * g.n_edges());
            for (k, &(i, j)) in g.edges().iter().enumerate() {
                dst[2 * k] = i;
                dst[2 * k + 1] = j;
            }
        }
        Ok(())
    })
}

/// Closed-form approximation to I_{G−e}/I_G for an edge whose endpoints
/// have `d` common neighbors.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ggm_ratio_approx(delta: f64, d: usize, value: *mut f64) -> GgmStatus {
    guard(|| {
        *out_ref(value, "value")? = gwishart::ratio_approx(delta, d)?;
        Ok(())
    })
}

/// Approximate I_{G−e}/I_G for the edge (i, j) of `g`, with its error bound.
///
/// # Safety
/// `g` must be a live handle; out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn ggm_edge_ratio_approx(
    g: *const GgmGraph,
    i: usize,
    j: usize,
    delta: f64,
    value: *mut f64,
    bound: *mut f64,
) -> GgmStatus {
    guard(|| {
        let g = graph_ref(g)?;
        let (value, bound) = (out_ref(value, "value")?, out_ref(bound, "bound")?);
        if i >= g.p() || j >= g.p() || !g.has_edge(i, j) {
            return Err(Error::EdgeAbsent(i, j).into());
        }
        let profile = graph::path_profile(&g.without_edge(i, j), i, j, PathCaps::default())?;
        *value = gwishart::ratio_approx(delta, profile.d)?;
        *bound = gwishart::error_bound(delta, &profile)?.value;
        Ok(())
    })
}

/// Monte Carlo log I_{G−e}/I_G with its standard error.
///
/// # Safety
/// `g` must be a live handle; out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn ggm_edge_ratio_mc(
    g: *const GgmGraph,
    i: usize,
    j: usize,
    delta: f64,
    n_samples: usize,
    seed: u64,
    log_value: *mut f64,
    std_error: *mut f64,
) -> GgmStatus {
    guard(|| {
        let g = graph_ref(g)?;
        let (lv, se) = (out_ref(log_value, "log_value")?, out_ref(std_error, "std_error")?);
        let est = gwishart::mc_ratio(g, (i, j), delta, n_samples, seed)?;
        *lv = est.log_value;
        *se = est.std_error;
        Ok(())
    })
}

/// Monte Carlo log I_G(δ, I) with its standard error.
///
/// # Safety
/// `g` must be a live handle; out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn ggm_log_norm_mc(
    g: *const GgmGraph,
    delta: f64,
    n_samples: usize,
    seed: u64,
    log_value: *mut f64,
    std_error: *mut f64,
) -> GgmStatus {
    guard(|| {
        let g = graph_ref(g)?;
        let (lv, se) = (out_ref(log_value, "log_value")?, out_ref(std_error, "std_error")?);
        let est = gwishart::mc_log_norm(g, delta, n_samples, seed)?;
        *lv = est.log_value;
        *se = est.std_error;
        Ok(())
    })
}

/// Exact log I_G(δ, I) of a decomposable graph.
///
/// # Safety
/// `g` must be a live handle; `log_value` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ggm_log_norm_exact(g: *const GgmGraph, delta: f64, log_value: *mut f64) -> GgmStatus {
    guard(|| {
        let g = graph_ref(g)?;
        *out_ref(log_value, "log_value")? = gwishart::exact_log_norm_decomposable(g, delta)?;
        Ok(())
    })
}

/// Monte Carlo relative gap of the approximation for `d` common neighbors
/// and long paths with the given interior sizes.
///
/// # Safety
/// `lengths` must point to `n_lengths` values (may be null when 0); out
/// pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn ggm_theorem_gap(
    delta: f64,
    d: usize,
    lengths: *const usize,
    n_lengths: usize,
    n_samples: usize,
    seed: u64,
    gap: *mut f64,
    std_error: *mut f64,
) -> GgmStatus {
    guard(|| {
        let (gap, se) = (out_ref(gap, "gap")?, out_ref(std_error, "std_error")?);
        let lens: &[usize] = if n_lengths == 0 {
            &[]
        } else if lengths.is_null() {
            return Err(null("lengths"));
        } else {
            std::slice::from_raw_parts(lengths, n_lengths)
        };
        let est = gwishart::theorem_gap_mc(delta, d, lens, n_samples, seed)?;
        *gap = est.gap;
        *se = est.std_error;
        Ok(())
    })
}

/// Runs the birth-death sampler on row-major `n × p` data and writes the
/// `p × p` row-major matrix of posterior edge probabilities to `probs`.
/// `provider` takes a [`GgmProvider`] value.
///
/// # Safety
/// `data` must hold `n * p` values and `probs` room for `p * p`.
#[no_mangle]
pub unsafe extern "C" fn ggm_bdmcmc_edge_posteriors(
    data: *const f64,
    n: usize,
    p: usize,
    delta: f64,
    iterations: usize,
    burn_in: usize,
    provider: u32,
    mc_samples: usize,
    seed: u64,
    probs: *mut f64,
) -> GgmStatus {
    guard(|| {
        if data.is_null() {
            return Err(null("data"));
        }
        if probs.is_null() {
            return Err(null("probs"));
        }
        if n == 0 || p == 0 {
            return Err(Fail(GgmStatus::InvalidArgument, "data must be non-empty".into()));
        }
        let x = DMatrix::from_row_slice(n, p, std::slice::from_raw_parts(data, n * p));
        let mode = match provider {
            p if p == GgmProvider::Approximation as u32 => ProviderMode::Approximation,
            p if p == GgmProvider::McRatio as u32 => ProviderMode::McRatio,
            p if p == GgmProvider::ExactDecomposable as u32 => ProviderMode::ExactDecomposable,
            other => return Err(Fail(GgmStatus::InvalidArgument, format!("unknown provider {other}"))),
        };
        let cfg = ChainConfig::new(delta, iterations, burn_in, RatioProvider { mode, mc_samples }, seed);
        let summary = bdmcmc::edge_posteriors(&bdmcmc::run(&x, cfg)?)?;
        let dst = std::slice::from_raw_parts_mut(probs, p * p);
        for a in 0..p {
            for b in 0..p {
                dst[a * p + b] = summary.edge_prob[(a, b)];
            }
        }
        Ok(())
    })
}

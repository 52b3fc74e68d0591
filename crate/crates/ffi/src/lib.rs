//! C ABI over the abstain library.
//!
//! Objects are opaque heap handles released with their `_free` function.
//! Every call returns an [`AbstainStatus`]; on failure the message is
//! available from [`abstain_last_error`] on the same thread. Labelings are
//! `uint8_t` arrays of 0/1 of length `d`, features are `double` arrays and
//! matrices are row-major.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use abstain::decode::{decode, decode_scores, BnbReport};
use abstain::experiments::opinion_tree;
use abstain::hexgraph::{ConsecutiveRule, HexGraph, HierarchyRule, PredictionSpace};
use abstain::io::{write_atomic, ModelFile};
use abstain::losses::{self, LossSpec};
use abstain::surrogate::{fit_ridge, KernelConfig, TrainedSurrogate};

#[repr(i32)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AbstainStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Graph = 3,
    Loss = 4,
    Surrogate = 5,
    Decode = 6,
    Io = 7,
    Panic = 8,
}

#[repr(i32)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AbstainKernel {
    Linear = 0,
    Gaussian = 1,
}

/// A label graph.
pub struct AbstainGraph(HexGraph);

/// A loss in inner-product form.
pub struct AbstainLoss(LossSpec);

/// A fitted surrogate together with the loss shape it was trained for.
pub struct AbstainModel {
    file: ModelFile,
    model: TrainedSurrogate,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

struct Failure(AbstainStatus, String);

impl Failure {
    fn null(what: &str) -> Self {
        Failure(AbstainStatus::NullPointer, format!("{what} is null"))
    }

    fn invalid(msg: impl Into<String>) -> Self {
        Failure(AbstainStatus::InvalidArgument, msg.into())
    }
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior nul removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

/// Runs `f`, converting errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> AbstainStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            AbstainStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(&format!("internal panic: {msg}"));
            AbstainStatus::Panic
        }
    }
}

unsafe fn reference<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| Failure::null(what))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a, T>(p: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(Failure::null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn string<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Failure::invalid(format!("{what} is not UTF-8")))
}

unsafe fn labels<'a>(p: *const u8, d: usize, what: &str) -> Result<&'a [u8], Failure> {
    let s = slice(p, d, what)?;
    if s.iter().any(|&v| v > 1) {
        return Err(Failure::invalid(format!("{what} must hold 0/1 values")));
    }
    Ok(s)
}

unsafe fn store<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::null("out"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

fn graph_err(e: impl std::fmt::Display) -> Failure {
    Failure(AbstainStatus::Graph, e.to_string())
}

fn loss_err(e: impl std::fmt::Display) -> Failure {
    Failure(AbstainStatus::Loss, e.to_string())
}

fn surrogate_err(e: impl std::fmt::Display) -> Failure {
    Failure(AbstainStatus::Surrogate, e.to_string())
}

fn decode_err(e: impl std::fmt::Display) -> Failure {
    Failure(AbstainStatus::Decode, e.to_string())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn abstain_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or an empty string. The
/// pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn abstain_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Parses a graph in the text format (`d=<n>`, then `h <parent> <child>` and `e <i> <j>` lines).
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn abstain_graph_parse(text: *const c_char, out: *mut *mut AbstainGraph) -> AbstainStatus {
    guard(|| {
        let g = HexGraph::from_text(string(text, "text")?).map_err(graph_err)?;
        store(out, AbstainGraph(g))
    })
}

/// Root → aspects → polarities tree.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn abstain_graph_opinion_tree(
    aspects: usize,
    polarities: usize,
    exclusive_polarities: bool,
    out: *mut *mut AbstainGraph,
) -> AbstainStatus {
    guard(|| {
        let g = opinion_tree(aspects, polarities, exclusive_polarities).map_err(graph_err)?;
        store(out, AbstainGraph(g))
    })
}

/// Number of nodes, or 0 for a null handle.
///
/// # Safety
/// `graph` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn abstain_graph_node_count(graph: *const AbstainGraph) -> usize {
    graph.as_ref().map_or(0, |g| g.0.d())
}

/// # Safety
/// `graph` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn abstain_graph_free(graph: *mut AbstainGraph) {
    if !graph.is_null() {
        drop(Box::from_raw(graph));
    }
}

/// Node weights: an explicit array of length `d`, or sibling weights when null.
unsafe fn weights(g: &HexGraph, c: *const f64) -> Result<Vec<f64>, Failure> {
    if c.is_null() {
        losses::sibling_weights(g).map_err(loss_err)
    } else {
        Ok(slice(c, g.d(), "weights")?.to_vec())
    }
}

fn rule(literal: bool) -> ConsecutiveRule {
    if literal {
        ConsecutiveRule::Literal
    } else {
        ConsecutiveRule::NoConsecutiveAbstention
    }
}

/// Hamming loss on `d` nodes.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn abstain_loss_hamming(d: usize, out: *mut *mut AbstainLoss) -> AbstainStatus {
    guard(|| store(out, AbstainLoss(losses::hamming_spec(d).map_err(loss_err)?)))
}

/// Binary loss with a reject option costing `reject_cost`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn abstain_loss_binary(reject_cost: f64, out: *mut *mut AbstainLoss) -> AbstainStatus {
    guard(|| store(out, AbstainLoss(losses::binary_abstention_spec(reject_cost).map_err(loss_err)?)))
}

/// Hierarchical H-loss; `weights` may be null for sibling weights.
///
/// # Safety
/// `graph` must be a live handle, `weights` null or `d` doubles, `out` valid.
#[no_mangle]
pub unsafe extern "C" fn abstain_loss_h(
    graph: *const AbstainGraph,
    weights_ptr: *const f64,
    literal_consecutive: bool,
    out: *mut *mut AbstainLoss,
) -> AbstainStatus {
    guard(|| {
        let g = &reference(graph, "graph")?.0;
        let c = weights(g, weights_ptr)?;
        store(out, AbstainLoss(losses::hloss_spec_with_rule(g, &c, rule(literal_consecutive)).map_err(loss_err)?))
    })
}

/// Abstention-aware Ha-loss; `weights` may be null for sibling weights.
///
/// # Safety
/// `graph` must be a live handle, `weights` null or `d` doubles, `out` valid.
#[no_mangle]
pub unsafe extern "C" fn abstain_loss_ha(
    graph: *const AbstainGraph,
    weights_ptr: *const f64,
    k_a: f64,
    k_ac: f64,
    literal_consecutive: bool,
    out: *mut *mut AbstainLoss,
) -> AbstainStatus {
    guard(|| {
        let g = &reference(graph, "graph")?.0;
        let c = weights(g, weights_ptr)?;
        let spec = losses::haloss_spec_with_rule(g, &c, k_a, k_ac, rule(literal_consecutive)).map_err(loss_err)?;
        store(out, AbstainLoss(spec))
    })
}

/// Size `q` of the output feature map, or 0 for a null handle.
///
/// # Safety
/// `loss` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn abstain_loss_feature_dim(loss: *const AbstainLoss) -> usize {
    loss.as_ref().map_or(0, |l| l.0.q())
}

/// Loss of predicting `(y_h, y_r)` when the truth is `y`; all arrays have length `d`.
///
/// # Safety
/// Array pointers must hold `d` bytes; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn abstain_loss_evaluate(
    loss: *const AbstainLoss,
    y_h: *const u8,
    y_r: *const u8,
    y: *const u8,
    d: usize,
    out: *mut f64,
) -> AbstainStatus {
    guard(|| {
        let spec = &reference(loss, "loss")?.0;
        if d != spec.d() {
            return Err(Failure::invalid(format!("d = {d}, loss has {} nodes", spec.d())));
        }
        let value = spec
            .loss_direct(labels(y_h, d, "y_h")?, labels(y_r, d, "y_r")?, labels(y, d, "y")?)
            .map_err(loss_err)?;
        *slice_mut(out, 1, "out")?.first_mut().expect("one slot") = value;
        Ok(())
    })
}

/// # Safety
/// `loss` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn abstain_loss_free(loss: *mut AbstainLoss) {
    if !loss.is_null() {
        drop(Box::from_raw(loss));
    }
}

/// Fits kernel ridge regression from `n` inputs of dimension `m` (`xs`, row-major
/// `n × m`) onto the loss features of the labelings `ys` (row-major `n × d`).
/// `kernel` is an [`AbstainKernel`] value; `gamma` is only read for the gaussian kernel.
///
/// # Safety
/// `xs` must hold `n·m` doubles, `ys` `n·d` bytes, `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn abstain_model_fit(
    loss: *const AbstainLoss,
    xs: *const f64,
    ys: *const u8,
    n: usize,
    m: usize,
    kernel: i32,
    gamma: f64,
    lambda: f64,
    out: *mut *mut AbstainModel,
) -> AbstainStatus {
    guard(|| {
        let spec = &reference(loss, "loss")?.0;
        let d = spec.d();
        if n == 0 || m == 0 {
            return Err(Failure::invalid("need n > 0 and m > 0"));
        }
        let xs = slice(xs, n * m, "xs")?;
        let ys = labels(ys, n * d, "ys")?;
        let rows: Vec<Vec<f64>> = xs.chunks(m).map(<[f64]>::to_vec).collect();
        let psi = ys.chunks(d).map(|y| spec.psi_wa(y)).collect::<Result<Vec<_>, _>>().map_err(loss_err)?;
        let kernel = match kernel {
            k if k == AbstainKernel::Linear as i32 => KernelConfig::linear(),
            k if k == AbstainKernel::Gaussian as i32 => KernelConfig::gaussian(gamma),
            other => return Err(Failure::invalid(format!("unknown kernel {other}"))),
        };
        let model = fit_ridge(kernel, &rows, &psi, lambda).map_err(surrogate_err)?;
        let file = ModelFile { loss: spec.kind(), d, q: spec.q(), model: model.to_dump() };
        store(out, AbstainModel { file, model })
    })
}

/// Loads a model file written by [`abstain_model_save`] or the command line.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn abstain_model_load(path: *const c_char, out: *mut *mut AbstainModel) -> AbstainStatus {
    guard(|| {
        let path = string(path, "path")?;
        let file = ModelFile::read(Path::new(path)).map_err(|e| Failure(AbstainStatus::Io, e.to_string()))?;
        let model = TrainedSurrogate::from_dump(&file.model).map_err(surrogate_err)?;
        if model.q() != file.q {
            return Err(surrogate_err(format!("model output size {} does not match q = {}", model.q(), file.q)));
        }
        store(out, AbstainModel { file, model })
    })
}

/// # Safety
/// `model` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn abstain_model_save(model: *const AbstainModel, path: *const c_char) -> AbstainStatus {
    guard(|| {
        let model = reference(model, "model")?;
        let path = string(path, "path")?;
        write_atomic(Path::new(path), &model.file.to_json()).map_err(|e| Failure(AbstainStatus::Io, e.to_string()))
    })
}

/// Input dimension `m` of a model, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn abstain_model_input_dim(model: *const AbstainModel) -> usize {
    model.as_ref().map_or(0, |m| m.model.m())
}

/// Writes the `q` surrogate scores `ĝ(x)` into `scores`.
///
/// # Safety
/// `x` must hold `m` doubles and `scores` room for `q`.
#[no_mangle]
pub unsafe extern "C" fn abstain_model_predict(
    model: *const AbstainModel,
    x: *const f64,
    m: usize,
    scores: *mut f64,
    q: usize,
) -> AbstainStatus {
    guard(|| {
        let model = reference(model, "model")?;
        if q != model.model.q() {
            return Err(Failure::invalid(format!("q = {q}, model has {}", model.model.q())));
        }
        let g = model.model.g_hat(slice(x, m, "x")?).map_err(surrogate_err)?;
        slice_mut(scores, q, "scores")?.copy_from_slice(&g);
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn abstain_model_free(model: *mut AbstainModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

fn space(spec: &LossSpec, d: usize, allow_abstention: bool, strict: bool) -> PredictionSpace {
    let space = PredictionSpace {
        hierarchy: if strict { HierarchyRule::Strict } else { HierarchyRule::Relaxed },
        consecutive: spec.consecutive_rule(),
        abstainable: None,
    };
    if allow_abstention {
        space
    } else {
        space.no_abstention(d)
    }
}

unsafe fn write_report(report: &BnbReport, y_h: *mut u8, y_r: *mut u8, d: usize, objective: *mut f64) -> Result<(), Failure> {
    slice_mut(y_h, d, "y_h")?.copy_from_slice(&report.optimum.y_h);
    slice_mut(y_r, d, "y_r")?.copy_from_slice(&report.optimum.y_r);
    if !objective.is_null() {
        *objective = report.objective_value;
    }
    Ok(())
}

/// Decodes the input `x` with `model`. Writes the prediction `y_h` and the
/// reject vector `y_r` (1 = predict, 0 = abstain); `objective` may be null.
///
/// # Safety
/// `x` must hold `m` doubles, `y_h`/`y_r` room for `d` bytes.
#[no_mangle]
pub unsafe extern "C" fn abstain_decode(
    model: *const AbstainModel,
    loss: *const AbstainLoss,
    graph: *const AbstainGraph,
    x: *const f64,
    m: usize,
    allow_abstention: bool,
    strict: bool,
    y_h: *mut u8,
    y_r: *mut u8,
    d: usize,
    objective: *mut f64,
) -> AbstainStatus {
    guard(|| {
        let model = reference(model, "model")?;
        let spec = &reference(loss, "loss")?.0;
        let g = &reference(graph, "graph")?.0;
        if d != g.d() || d != spec.d() {
            return Err(Failure::invalid(format!("d = {d}, graph has {} nodes, loss {}", g.d(), spec.d())));
        }
        if model.file.loss != spec.kind() || model.file.d != d {
            return Err(Failure::invalid(format!(
                "model was trained for {} on {} nodes",
                model.file.loss.name(),
                model.file.d
            )));
        }
        let space = space(spec, d, allow_abstention, strict);
        let report = decode(&model.model, spec, g, slice(x, m, "x")?, &space).map_err(decode_err)?;
        write_report(&report, y_h, y_r, d, objective)
    })
}

/// Decodes a score vector of length `q` directly, without a model.
///
/// # Safety
/// `scores` must hold `q` doubles, `y_h`/`y_r` room for `d` bytes.
#[no_mangle]
pub unsafe extern "C" fn abstain_decode_scores(
    loss: *const AbstainLoss,
    graph: *const AbstainGraph,
    scores: *const f64,
    q: usize,
    allow_abstention: bool,
    strict: bool,
    y_h: *mut u8,
    y_r: *mut u8,
    d: usize,
    objective: *mut f64,
) -> AbstainStatus {
    guard(|| {
        let spec = &reference(loss, "loss")?.0;
        let g = &reference(graph, "graph")?.0;
        if d != g.d() || d != spec.d() {
            return Err(Failure::invalid(format!("d = {d}, graph has {} nodes, loss {}", g.d(), spec.d())));
        }
        let space = space(spec, d, allow_abstention, strict);
        let report = decode_scores(spec, g, slice(scores, q, "scores")?, &space).map_err(decode_err)?;
        write_report(&report, y_h, y_r, d, objective)
    })
}

//! C ABI over the annotation engine.
//!
//! Documents live behind opaque handles created by `af_*_new`/`af_*_parse`
//! style constructors and released with the matching `af_*_free`. Every
//! fallible call returns an [`AfStatus`]; on failure a message is available
//! from [`af_last_error_message`] on the same thread. Strings handed out by
//! the library are freed with [`af_string_free`].

use annoforge::cluster_graph::{ClusterGraph, NodeId};
use annoforge::formats::{
    parse_bracketed, parse_clusters, serialize_clusters, serialize_tree, ClusterDocument,
};
use annoforge::metrics::{partition_from_documents, GoldDocument};
use annoforge::tree_editor::{TreeDoc, TreeNodeId};
use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    /// Input text failed to parse or validate.
    Format = 3,
    /// An edit's preconditions do not hold; the document is unchanged.
    Precondition = 4,
    /// A metric is undefined for the input.
    Metrics = 5,
    Panic = 6,
}

/// A constituency tree under construction.
pub struct AfTreeDoc(TreeDoc);

/// A mention graph with colored groups.
pub struct AfClusterGraph(ClusterGraph);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: impl ToString) {
    let text = message.to_string().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn guard(f: impl FnOnce() -> Result<(), (AfStatus, String)>) -> AfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => AfStatus::Ok,
        Ok(Err((status, message))) => {
            set_error(message);
            status
        }
        Err(_) => {
            set_error("internal panic");
            AfStatus::Panic
        }
    }
}

fn fail<E: ToString>(status: AfStatus) -> impl FnOnce(E) -> (AfStatus, String) {
    move |e| (status, e.to_string())
}

/// # Safety
/// `p` must be null or a NUL-terminated string valid for reads.
unsafe fn read_str<'a>(p: *const c_char) -> Result<&'a str, (AfStatus, String)> {
    if p.is_null() {
        return Err((AfStatus::NullPointer, "null string argument".into()));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (AfStatus::InvalidUtf8, "string argument is not UTF-8".into()))
}

fn non_null<T>(p: *const T) -> Result<(), (AfStatus, String)> {
    if p.is_null() {
        Err((AfStatus::NullPointer, "null pointer argument".into()))
    } else {
        Ok(())
    }
}

fn into_c_string(s: String) -> *mut c_char {
    CString::new(s)
        .map(CString::into_raw)
        .unwrap_or(ptr::null_mut())
}

/// Copy of the last error message raised on this thread, or null. Free it
/// with `af_string_free`.
#[no_mangle]
pub extern "C" fn af_last_error_message() -> *mut c_char {
    LAST_ERROR.with(|e| {
        e.borrow()
            .as_ref()
            .map_or(ptr::null_mut(), |s| s.clone().into_raw())
    })
}

/// # Safety
/// `s` must be null or a string returned by this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn af_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

// -- trees ------------------------------------------------------------------

/// Flat forest over the whitespace-separated tokens of `sentence`.
///
/// # Safety
/// `sentence` must be a valid C string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn af_tree_new(
    sentence: *const c_char,
    out: *mut *mut AfTreeDoc,
) -> AfStatus {
    guard(|| {
        non_null(out)?;
        let tokens: Vec<&str> = read_str(sentence)?.split_whitespace().collect();
        let doc = TreeDoc::init_forest(&tokens).map_err(fail(AfStatus::Format))?;
        *out = Box::into_raw(Box::new(AfTreeDoc(doc)));
        Ok(())
    })
}

/// Parses bracket notation such as `(My dog) likes`.
///
/// # Safety
/// `text` must be a valid C string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn af_tree_parse(text: *const c_char, out: *mut *mut AfTreeDoc) -> AfStatus {
    guard(|| {
        non_null(out)?;
        let doc = parse_bracketed::<&str>(read_str(text)?, None).map_err(fail(AfStatus::Format))?;
        *out = Box::into_raw(Box::new(AfTreeDoc(doc)));
        Ok(())
    })
}

/// Groups contiguous siblings under a new node whose id is written to
/// `new_id`.
///
/// # Safety
/// `doc` must be a live handle, `children` must point at `len` ids, and
/// `new_id` must be writable.
#[no_mangle]
pub unsafe extern "C" fn af_tree_group(
    doc: *mut AfTreeDoc,
    children: *const u32,
    len: usize,
    new_id: *mut u32,
) -> AfStatus {
    guard(|| {
        non_null(doc)?;
        non_null(new_id)?;
        let ids: Vec<TreeNodeId> = if len == 0 {
            Vec::new()
        } else {
            non_null(children)?;
            std::slice::from_raw_parts(children, len)
                .iter()
                .map(|&i| TreeNodeId(i))
                .collect()
        };
        let id = (*doc)
            .0
            .group_nodes(&ids)
            .map_err(fail(AfStatus::Precondition))?;
        *new_id = id.0;
        Ok(())
    })
}

/// # Safety
/// `doc` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn af_tree_delete(doc: *mut AfTreeDoc, id: u32) -> AfStatus {
    guard(|| {
        non_null(doc)?;
        (*doc)
            .0
            .delete_node(TreeNodeId(id))
            .map_err(fail(AfStatus::Precondition))
    })
}

/// # Safety
/// `doc` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn af_tree_toggle_fold(doc: *mut AfTreeDoc, id: u32) -> AfStatus {
    guard(|| {
        non_null(doc)?;
        (*doc)
            .0
            .toggle_fold(TreeNodeId(id))
            .map_err(fail(AfStatus::Precondition))
    })
}

/// Writes the bracketed form to `out`; free it with `af_string_free`.
///
/// # Safety
/// `doc` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn af_tree_serialize(
    doc: *const AfTreeDoc,
    out: *mut *mut c_char,
) -> AfStatus {
    guard(|| {
        non_null(doc)?;
        non_null(out)?;
        *out = into_c_string(serialize_tree(&(*doc).0).0);
        Ok(())
    })
}

/// # Safety
/// `doc` must be null or a handle from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn af_tree_free(doc: *mut AfTreeDoc) {
    if !doc.is_null() {
        drop(Box::from_raw(doc));
    }
}

// -- clusters ---------------------------------------------------------------

/// # Safety
/// `json` must be a valid C string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn af_clusters_from_json(
    json: *const c_char,
    out: *mut *mut AfClusterGraph,
) -> AfStatus {
    guard(|| {
        non_null(out)?;
        let doc = ClusterDocument::from_json(read_str(json)?).map_err(fail(AfStatus::Format))?;
        let graph = parse_clusters(&doc).map_err(fail(AfStatus::Format))?;
        *out = Box::into_raw(Box::new(AfClusterGraph(graph)));
        Ok(())
    })
}

/// Links `dragged` to `target`, merging their groups.
///
/// # Safety
/// `graph` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn af_clusters_add_link(
    graph: *mut AfClusterGraph,
    dragged: u32,
    target: u32,
) -> AfStatus {
    guard(|| {
        non_null(graph)?;
        (*graph)
            .0
            .add_link(NodeId(dragged), NodeId(target))
            .map(drop)
            .map_err(fail(AfStatus::Precondition))
    })
}

/// # Safety
/// `graph` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn af_clusters_remove_link(
    graph: *mut AfClusterGraph,
    a: u32,
    b: u32,
) -> AfStatus {
    guard(|| {
        non_null(graph)?;
        (*graph)
            .0
            .remove_link(NodeId(a), NodeId(b))
            .map(drop)
            .map_err(fail(AfStatus::Precondition))
    })
}

/// Writes the cluster document as JSON to `out`; free it with
/// `af_string_free`.
///
/// # Safety
/// `graph` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn af_clusters_to_json(
    graph: *const AfClusterGraph,
    out: *mut *mut c_char,
) -> AfStatus {
    guard(|| {
        non_null(graph)?;
        non_null(out)?;
        *out = into_c_string(serialize_clusters(&(*graph).0).to_json());
        Ok(())
    })
}

/// # Safety
/// `graph` must be null or a handle from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn af_clusters_free(graph: *mut AfClusterGraph) {
    if !graph.is_null() {
        drop(Box::from_raw(graph));
    }
}

// -- metrics ----------------------------------------------------------------

unsafe fn score(
    system: *const c_char,
    gold: *const c_char,
    out: *mut f64,
    metric: fn(
        &annoforge::metrics::LabeledPartition<NodeId>,
    ) -> Result<f64, annoforge::metrics::MetricsError>,
) -> AfStatus {
    guard(|| {
        non_null(out)?;
        let system =
            ClusterDocument::from_json(read_str(system)?).map_err(fail(AfStatus::Format))?;
        let gold = GoldDocument::from_json(read_str(gold)?).map_err(fail(AfStatus::Format))?;
        let partition =
            partition_from_documents(&system, &gold).map_err(fail(AfStatus::Metrics))?;
        *out = metric(&partition).map_err(fail(AfStatus::Metrics))?;
        Ok(())
    })
}

/// Purity of a system cluster document against a gold cluster document or
/// `{"labels": {...}}` map.
///
/// # Safety
/// Both strings must be valid C strings and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn af_purity_json(
    system: *const c_char,
    gold: *const c_char,
    out: *mut f64,
) -> AfStatus {
    score(system, gold, out, annoforge::metrics::purity)
}

/// Rand index, same inputs as `af_purity_json`.
///
/// # Safety
/// Both strings must be valid C strings and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn af_rand_index_json(
    system: *const c_char,
    gold: *const c_char,
    out: *mut f64,
) -> AfStatus {
    score(system, gold, out, annoforge::metrics::rand_index)
}

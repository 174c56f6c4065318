//! C ABI over the rxnbench core: opaque handles, status codes and a
//! thread-local last-error message. Strings returned to the caller are
//! owned by the caller and released with `rxn_string_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use rxnbench::balance::element_delta;
use rxnbench::equiv::{equivalence_match, exact_match, EquivalenceRuleSet};
use rxnbench::reaction::{parse_reaction, ReactionRecord};
use rxnbench::rules::{complete_by_rules, default_rules, load_rules, CompletionRule};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RxnStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    ParseError = 3,
    InvalidArgument = 4,
    IoError = 5,
    Panic = 6,
}

/// Parsed reaction.
pub struct RxnReaction(ReactionRecord);

/// Equivalence rule set.
pub struct RxnEquivRules(EquivalenceRuleSet);

/// Completion rule library.
pub struct RxnCompletionRules(Vec<CompletionRule>);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

struct Failure(RxnStatus, String);

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> RxnStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => RxnStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            RxnStatus::Panic
        }
    }
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure(RxnStatus::NullArgument, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| Failure(RxnStatus::InvalidUtf8, format!("{what}: {e}")))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref()
        .ok_or_else(|| Failure(RxnStatus::NullArgument, format!("{what} is null")))
}

unsafe fn write<T>(out: *mut T, value: T, what: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure(RxnStatus::NullArgument, format!("{what} is null")));
    }
    out.write(value);
    Ok(())
}

fn owned(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).map_or(ptr::null_mut(), CString::into_raw)
}

/// Library version, static storage.
#[no_mangle]
pub extern "C" fn rxn_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or null. Valid until
/// the next call on the same thread.
#[no_mangle]
pub extern "C" fn rxn_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// # Safety
/// `s` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn rxn_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// # Safety
/// `text` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rxn_reaction_parse(
    text_ptr: *const c_char,
    out: *mut *mut RxnReaction,
) -> RxnStatus {
    guard(|| {
        let s = text(text_ptr, "text")?;
        let r = parse_reaction(s).map_err(|e| Failure(RxnStatus::ParseError, e.to_string()))?;
        write(out, Box::into_raw(Box::new(RxnReaction(r))), "out")
    })
}

/// # Safety
/// `r` must come from `rxn_reaction_parse` or `rxn_complete_by_rules`, or be null.
#[no_mangle]
pub unsafe extern "C" fn rxn_reaction_free(r: *mut RxnReaction) {
    if !r.is_null() {
        drop(Box::from_raw(r));
    }
}

/// Canonical text with molecules sorted within each side.
///
/// # Safety
/// `r` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rxn_reaction_canonical(
    r: *const RxnReaction,
    out: *mut *mut c_char,
) -> RxnStatus {
    guard(|| {
        let r = handle(r, "reaction")?;
        write(out, owned(r.0.canonical_text()), "out")
    })
}

/// # Safety
/// `r` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rxn_reaction_is_balanced(
    r: *const RxnReaction,
    out: *mut bool,
) -> RxnStatus {
    guard(|| {
        let r = handle(r, "reaction")?;
        write(out, element_delta(&r.0).is_zero(), "out")
    })
}

/// Element delta (reactants minus products) in signature form.
///
/// # Safety
/// `r` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rxn_reaction_delta(
    r: *const RxnReaction,
    out: *mut *mut c_char,
) -> RxnStatus {
    guard(|| {
        let r = handle(r, "reaction")?;
        write(out, owned(element_delta(&r.0).to_string()), "out")
    })
}

/// # Safety
/// `r` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rxn_reaction_missing_carbons(
    r: *const RxnReaction,
    out: *mut u64,
) -> RxnStatus {
    guard(|| {
        let r = handle(r, "reaction")?;
        write(out, element_delta(&r.0).missing_carbons(), "out")
    })
}

/// Bundled equivalence rules. Never null.
#[no_mangle]
pub extern "C" fn rxn_equiv_rules_default() -> *mut RxnEquivRules {
    Box::into_raw(Box::new(RxnEquivRules(EquivalenceRuleSet::default_rules())))
}

/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rxn_equiv_rules_load(
    path: *const c_char,
    out: *mut *mut RxnEquivRules,
) -> RxnStatus {
    guard(|| {
        let p = text(path, "path")?;
        let rules = EquivalenceRuleSet::load(Path::new(p))
            .map_err(|e| Failure(RxnStatus::IoError, e.to_string()))?;
        write(out, Box::into_raw(Box::new(RxnEquivRules(rules))), "out")
    })
}

/// # Safety
/// `rules` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn rxn_equiv_rules_free(rules: *mut RxnEquivRules) {
    if !rules.is_null() {
        drop(Box::from_raw(rules));
    }
}

/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rxn_exact_match(
    pred: *const RxnReaction,
    target: *const RxnReaction,
    out: *mut bool,
) -> RxnStatus {
    guard(|| {
        let (p, t) = (handle(pred, "pred")?, handle(target, "target")?);
        write(out, exact_match(&p.0, &t.0), "out")
    })
}

/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rxn_equivalence_match(
    pred: *const RxnReaction,
    target: *const RxnReaction,
    rules: *const RxnEquivRules,
    out: *mut bool,
) -> RxnStatus {
    guard(|| {
        let (p, t, rules) = (
            handle(pred, "pred")?,
            handle(target, "target")?,
            handle(rules, "rules")?,
        );
        let m = exact_match(&p.0, &t.0)
            || equivalence_match(&p.0, &t.0, &rules.0)
                .map_err(|e| Failure(RxnStatus::InvalidArgument, e.to_string()))?
                .matched;
        write(out, m, "out")
    })
}

/// Bundled completion rules. Never null.
#[no_mangle]
pub extern "C" fn rxn_completion_rules_default() -> *mut RxnCompletionRules {
    Box::into_raw(Box::new(RxnCompletionRules(default_rules())))
}

/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rxn_completion_rules_load(
    path: *const c_char,
    out: *mut *mut RxnCompletionRules,
) -> RxnStatus {
    guard(|| {
        let p = text(path, "path")?;
        let rules = load_rules(Path::new(p))
            .map_err(|e| Failure(RxnStatus::InvalidArgument, e.to_string()))?;
        write(
            out,
            Box::into_raw(Box::new(RxnCompletionRules(rules))),
            "out",
        )
    })
}

/// # Safety
/// `rules` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn rxn_completion_rules_free(rules: *mut RxnCompletionRules) {
    if !rules.is_null() {
        drop(Box::from_raw(rules));
    }
}

/// Rule-based completion. `out_completed` receives a new reaction handle
/// (also when unsolved); `out_confidence` and `out_solved` may be null.
///
/// # Safety
/// Handles must be live; `out_completed` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rxn_complete_by_rules(
    r: *const RxnReaction,
    rules: *const RxnCompletionRules,
    max_applications: u32,
    out_completed: *mut *mut RxnReaction,
    out_confidence: *mut f64,
    out_solved: *mut bool,
) -> RxnStatus {
    guard(|| {
        let (r, rules) = (handle(r, "reaction")?, handle(rules, "rules")?);
        if out_completed.is_null() {
            return Err(Failure(
                RxnStatus::NullArgument,
                "out_completed is null".into(),
            ));
        }
        let res = complete_by_rules(&r.0, &rules.0, max_applications as usize);
        if !out_confidence.is_null() {
            out_confidence.write(res.confidence);
        }
        if !out_solved.is_null() {
            out_solved.write(res.solved);
        }
        out_completed.write(Box::into_raw(Box::new(RxnReaction(res.completed))));
        Ok(())
    })
}

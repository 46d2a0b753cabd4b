//! C ABI over the trajdrift library.
//!
//! Every entry point returns a [`TdStatus`]; results travel through out
//! pointers. On failure a description is available from
//! [`td_last_error_message`] on the same thread. Panics never cross the
//! boundary.
//!
//! Handles (`TdMaze`, `TdEpisodeSet`, `TdSamples`) are opaque, owned by the
//! caller once returned, and released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use trajdrift::episodes::{
    generate_episodes, perturb_transitions, suffix_samples, EpisodeError, EpisodeLimits, EpisodeSet,
    NoiseSpec,
};
use trajdrift::gridmdp::{GridError, Policy};
use trajdrift::harness::{maze_setup, HarnessError, MazeSetup, PolicyKind};
use trajdrift::rng::{derive_seed, tag};
use trajdrift::seqmeasure::{compute_measure, MeasureError, MeasureKind, Token};
use trajdrift::stats::{welch_t_test, StatsError};

pub const TD_LEVENSHTEIN: i32 = 0;
pub const TD_LEVENSHTEIN_RATIO: i32 = 1;
pub const TD_JARO: i32 = 2;
pub const TD_JARO_WINKLER: i32 = 3;
pub const TD_LCS_SIMILARITY: i32 = 4;
pub const TD_LC_SUBSTRING_SIMILARITY: i32 = 5;
pub const TD_DAMERAU: i32 = 6;
pub const TD_DAMERAU_SIMILARITY: i32 = 7;
pub const TD_DTW: i32 = 8;
pub const TD_DTW_SIMILARITY: i32 = 9;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TdStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    /// Input outside a function's domain, e.g. two empty sequences.
    DomainError = 3,
    NumericalFailure = 4,
    Panic = 5,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct TdWelchResult {
    pub t: f64,
    pub df: f64,
    pub p: f64,
    pub drift: bool,
}

/// Solved 5x5 maze with its fixed policy and optimal path.
pub struct TdMaze {
    setup: MazeSetup,
}

pub struct TdEpisodeSet {
    set: EpisodeSet,
}

pub struct TdSamples {
    values: Vec<f64>,
    skipped: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn clear_error() {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
}

/// Message for the last failed call on this thread, or NULL after a
/// success. Valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn td_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

struct Failure(TdStatus, String);

impl From<MeasureError> for Failure {
    fn from(e: MeasureError) -> Self {
        let status = match e {
            MeasureError::UnknownKind(_) => TdStatus::InvalidArgument,
            _ => TdStatus::DomainError,
        };
        Failure(status, e.to_string())
    }
}

impl From<StatsError> for Failure {
    fn from(e: StatsError) -> Self {
        let status = match e {
            StatsError::NoConvergence { .. } => TdStatus::NumericalFailure,
            _ => TdStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

impl From<GridError> for Failure {
    fn from(e: GridError) -> Self {
        let status = match e {
            GridError::NotConverged { .. } => TdStatus::NumericalFailure,
            _ => TdStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

impl From<EpisodeError> for Failure {
    fn from(e: EpisodeError) -> Self {
        let status = match e {
            EpisodeError::RetryBudget { .. } | EpisodeError::DeadRow { .. } => TdStatus::NumericalFailure,
            EpisodeError::Measure(_) => TdStatus::DomainError,
            _ => TdStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        let status = if e.exit_code() == 3 {
            TdStatus::NumericalFailure
        } else {
            TdStatus::InvalidArgument
        };
        Failure(status, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(TdStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(TdStatus::InvalidArgument, msg.into())
}

/// Runs `f`, records its error or panic, and returns the status.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> TdStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            clear_error();
            TdStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            TdStatus::Panic
        }
    }
}

/// Borrows `len` elements; a null pointer is accepted only when `len == 0`.
unsafe fn slice<'a, T>(data: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if data.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(data, len))
}

fn kind_from_code(code: i32) -> Result<MeasureKind, Failure> {
    usize::try_from(code)
        .ok()
        .and_then(|i| MeasureKind::ALL.get(i).copied())
        .ok_or_else(|| invalid(format!("unknown measure code {code}")))
}

fn code_of(kind: MeasureKind) -> i32 {
    MeasureKind::ALL.iter().position(|k| *k == kind).unwrap_or(0) as i32
}

/// Resolves a measure name such as `"jaro_winkler"` to its `TD_*` code.
///
/// # Safety
/// `name` must be a NUL-terminated string; `out_kind` must be writable.
#[no_mangle]
pub unsafe extern "C" fn td_measure_kind_from_name(name: *const c_char, out_kind: *mut i32) -> TdStatus {
    guard(|| {
        if name.is_null() {
            return Err(null("name"));
        }
        if out_kind.is_null() {
            return Err(null("out_kind"));
        }
        let text = CStr::from_ptr(name)
            .to_str()
            .map_err(|_| invalid("name is not UTF-8"))?;
        let kind: MeasureKind = text.parse()?;
        *out_kind = code_of(kind);
        Ok(())
    })
}

/// Computes one measure between two token sequences.
///
/// # Safety
/// `a`/`b` must point to `a_len`/`b_len` readable tokens (or be null with
/// length 0); `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn td_measure(
    kind: i32,
    a: *const u32,
    a_len: usize,
    b: *const u32,
    b_len: usize,
    out: *mut f64,
) -> TdStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let kind = kind_from_code(kind)?;
        let (a, b): (&[Token], &[Token]) = (slice(a, a_len, "a")?, slice(b, b_len, "b")?);
        *out = compute_measure(kind, a, b)?.value;
        Ok(())
    })
}

/// Two-sided Welch's t-test; drift is `p < alpha`.
///
/// # Safety
/// `a`/`b` must point to `a_len`/`b_len` readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn td_welch_t_test(
    a: *const f64,
    a_len: usize,
    b: *const f64,
    b_len: usize,
    alpha: f64,
    out: *mut TdWelchResult,
) -> TdStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let r = welch_t_test(slice(a, a_len, "a")?, slice(b, b_len, "b")?, alpha)?;
        *out = TdWelchResult {
            t: r.t,
            df: r.df,
            p: r.p,
            drift: r.drift,
        };
        Ok(())
    })
}

/// Builds and solves the maze. `stochastic != 0` selects the softmax policy
/// at temperature `tau`; otherwise the greedy policy is used.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn td_maze_new(stochastic: i32, tau: f64, out: *mut *mut TdMaze) -> TdStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let kind = if stochastic != 0 {
            PolicyKind::Stochastic
        } else {
            PolicyKind::Deterministic
        };
        let setup = maze_setup(kind, tau)?;
        *out = Box::into_raw(Box::new(TdMaze { setup }));
        Ok(())
    })
}

/// # Safety
/// `maze` must come from [`td_maze_new`] and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn td_maze_free(maze: *mut TdMaze) {
    if !maze.is_null() {
        drop(Box::from_raw(maze));
    }
}

/// Number of states (grid cells).
///
/// # Safety
/// `maze` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn td_maze_state_count(maze: *const TdMaze, out: *mut usize) -> TdStatus {
    guard(|| {
        let maze = maze.as_ref().ok_or_else(|| null("maze"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = maze.setup.grid.n_states();
        Ok(())
    })
}

/// Optimal state value as tabulated (the goal reads 1).
///
/// # Safety
/// `maze` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn td_maze_value(maze: *const TdMaze, state: usize, out: *mut f64) -> TdStatus {
    guard(|| {
        let maze = maze.as_ref().ok_or_else(|| null("maze"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        if state >= maze.setup.grid.n_states() {
            return Err(invalid(format!("state {state} out of range")));
        }
        *out = maze.setup.value.reported(state);
        Ok(())
    })
}

/// Copies the optimal path into `buf`. `out_len` always receives the full
/// length; if it exceeds `cap` nothing is copied and InvalidArgument is returned.
///
/// # Safety
/// `buf` must have room for `cap` tokens (may be null when `cap == 0`);
/// `out_len` must be writable.
#[no_mangle]
pub unsafe extern "C" fn td_maze_optimal_path(
    maze: *const TdMaze,
    buf: *mut u32,
    cap: usize,
    out_len: *mut usize,
) -> TdStatus {
    guard(|| {
        let maze = maze.as_ref().ok_or_else(|| null("maze"))?;
        if out_len.is_null() {
            return Err(null("out_len"));
        }
        let path = &maze.setup.reference;
        *out_len = path.len();
        if path.len() > cap {
            return Err(invalid(format!("buffer holds {cap} tokens, path needs {}", path.len())));
        }
        if buf.is_null() {
            return Err(null("buf"));
        }
        ptr::copy_nonoverlapping(path.as_ptr(), buf, path.len());
        Ok(())
    })
}

/// Generates `n` completed episodes after perturbing the maze transitions
/// with Gaussian noise of standard deviation `noise` (0 leaves them intact).
///
/// # Safety
/// `maze` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn td_maze_generate_episodes(
    maze: *const TdMaze,
    noise: f64,
    n: usize,
    seed: u64,
    out: *mut *mut TdEpisodeSet,
) -> TdStatus {
    guard(|| {
        let maze = maze.as_ref().ok_or_else(|| null("maze"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let s = &maze.setup;
        let spec = NoiseSpec::new(noise, derive_seed(seed, tag::NOISE_ROW, 0))?;
        let model = perturb_transitions(&s.model, &spec)?;
        let policy: &Policy = &s.policy;
        let set = generate_episodes(
            &model,
            policy,
            &s.grid,
            n,
            derive_seed(seed, tag::EPISODE, 0),
            EpisodeLimits::default(),
            format!("noise={noise}"),
        )?;
        *out = Box::into_raw(Box::new(TdEpisodeSet { set }));
        Ok(())
    })
}

/// # Safety
/// `set` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn td_episode_set_len(set: *const TdEpisodeSet, out: *mut usize) -> TdStatus {
    guard(|| {
        let set = set.as_ref().ok_or_else(|| null("set"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = set.set.episodes.len();
        Ok(())
    })
}

/// Borrows episode `index`. The token pointer stays valid until the set is freed.
///
/// # Safety
/// `set` must be a live handle; `tokens` and `len` must be writable.
#[no_mangle]
pub unsafe extern "C" fn td_episode_set_episode(
    set: *const TdEpisodeSet,
    index: usize,
    tokens: *mut *const u32,
    len: *mut usize,
) -> TdStatus {
    guard(|| {
        let set = set.as_ref().ok_or_else(|| null("set"))?;
        if tokens.is_null() || len.is_null() {
            return Err(null("tokens/len"));
        }
        let ep = set
            .set
            .episodes
            .get(index)
            .ok_or_else(|| invalid(format!("episode {index} out of range")))?;
        *tokens = ep.states.as_ptr();
        *len = ep.states.len();
        Ok(())
    })
}

/// # Safety
/// `set` must come from this library and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn td_episode_set_free(set: *mut TdEpisodeSet) {
    if !set.is_null() {
        drop(Box::from_raw(set));
    }
}

/// Suffix-pair samples of measure `kind` between the maze's optimal path
/// and every episode of `set`. `window == 0` compares full suffixes.
///
/// # Safety
/// `maze` and `set` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn td_samples_generate(
    maze: *const TdMaze,
    set: *const TdEpisodeSet,
    kind: i32,
    window: usize,
    out: *mut *mut TdSamples,
) -> TdStatus {
    guard(|| {
        let maze = maze.as_ref().ok_or_else(|| null("maze"))?;
        let set = set.as_ref().ok_or_else(|| null("set"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let kind = kind_from_code(kind)?;
        let window = (window > 0).then_some(window);
        let (values, skipped) = suffix_samples(&maze.setup.reference, &set.set.token_slices(), kind, window)?;
        *out = Box::into_raw(Box::new(TdSamples { values, skipped }));
        Ok(())
    })
}

/// Borrows the sample values; valid until the samples are freed.
///
/// # Safety
/// `samples` must be a live handle; `data` and `len` must be writable.
#[no_mangle]
pub unsafe extern "C" fn td_samples_data(
    samples: *const TdSamples,
    data: *mut *const f64,
    len: *mut usize,
) -> TdStatus {
    guard(|| {
        let samples = samples.as_ref().ok_or_else(|| null("samples"))?;
        if data.is_null() || len.is_null() {
            return Err(null("data/len"));
        }
        *data = samples.values.as_ptr();
        *len = samples.values.len();
        Ok(())
    })
}

/// Pairs left out because a suffix was missing or outside the measure's domain.
///
/// # Safety
/// `samples` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn td_samples_skipped(samples: *const TdSamples, out: *mut usize) -> TdStatus {
    guard(|| {
        let samples = samples.as_ref().ok_or_else(|| null("samples"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = samples.skipped;
        Ok(())
    })
}

/// # Safety
/// `samples` must come from this library and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn td_samples_free(samples: *mut TdSamples) {
    if !samples.is_null() {
        drop(Box::from_raw(samples));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn codes_follow_kind_order() {
        let named = [
            TD_LEVENSHTEIN,
            TD_LEVENSHTEIN_RATIO,
            TD_JARO,
            TD_JARO_WINKLER,
            TD_LCS_SIMILARITY,
            TD_LC_SUBSTRING_SIMILARITY,
            TD_DAMERAU,
            TD_DAMERAU_SIMILARITY,
            TD_DTW,
            TD_DTW_SIMILARITY,
        ];
        for (code, kind) in named.iter().zip(MeasureKind::ALL) {
            assert_eq!(kind_from_code(*code).ok(), Some(kind));
            assert_eq!(code_of(kind), *code);
        }
        assert!(kind_from_code(10).is_err());
        assert!(kind_from_code(-1).is_err());
    }

    #[test]
    fn panic_becomes_status() {
        let status = guard(|| panic!("boom"));
        assert_eq!(status, TdStatus::Panic);
        let msg = unsafe { CStr::from_ptr(td_last_error_message()) };
        assert!(msg.to_str().unwrap().contains("boom"));
        assert_eq!(guard(|| Ok(())), TdStatus::Ok);
        assert!(td_last_error_message().is_null());
    }
}

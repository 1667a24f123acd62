//! C ABI over `prism-core`.
//!
//! Every fallible function returns a [`PrismStatus`] and writes its result
//! through an out-pointer. On failure, [`prism_last_error_message`] returns a
//! description that stays valid until the next failing call on the same
//! thread. Handles are opaque and must be released with their `_free`
//! function. Panics are caught at the boundary and reported as
//! `PRISM_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use num_rational::Rational64;
use prism_core::game::{parse_rational, parse_text_with, FiniteGame, Profile, UpdateOrder};
use prism_core::montecarlo::estimate_identity;
use prism_core::pipeline::{RunConfig, SimulatedWorld};
use prism_core::simworld::WorldSeed;
use prism_core::theory::{self, BoundInputs, ChannelSpec};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrismStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Parse = 3,
    Runtime = 4,
    Panic = 5,
}

/// Parsed potential game with exact rational payoffs.
pub struct PrismGame {
    game: FiniteGame<Rational64>,
}

/// Simulated pipeline configuration.
pub struct PrismSimulation {
    world: SimulatedWorld,
    config: RunConfig,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PrismChannelAnalysis {
    pub entropy_q: f64,
    pub mutual_information: f64,
    pub posterior_correct: f64,
    pub posterior_incorrect: f64,
    pub conditional_entropy: f64,
    pub bayes_error: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PrismSimulationResult {
    pub trials: u64,
    pub correct: u64,
    pub covered: u64,
    pub mean_quality: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub coverage: f64,
    pub mean_tokens: f64,
    /// True when every correct output came from a covered task.
    pub identity_holds: bool,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: impl Into<String>) {
    let text = message.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn fail(status: PrismStatus, message: impl ToString) -> PrismStatus {
    set_error(message.to_string());
    status
}

fn guard(f: impl FnOnce() -> PrismStatus) -> PrismStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            fail(PrismStatus::Panic, msg)
        }
    }
}

/// Writes `value` through `out`, or reports a null pointer.
unsafe fn write_out<T>(out: *mut T, value: T) -> PrismStatus {
    if out.is_null() {
        return fail(PrismStatus::NullPointer, "output pointer is null");
    }
    out.write(value);
    PrismStatus::Ok
}

/// Last error message on this thread, or NULL when none was recorded.
#[no_mangle]
pub extern "C" fn prism_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn prism_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Probability that at least one of `k` independent agents succeeds.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn prism_iid_coverage(p: f64, k: u32, out: *mut f64) -> PrismStatus {
    guard(|| match theory::iid_coverage(p, k) {
        Ok(v) => write_out(out, v),
        Err(e) => fail(PrismStatus::InvalidArgument, e),
    })
}

/// Coverage times selection floor; `tightened` adds the synthesis factor.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn prism_performance_bound(
    p: f64,
    k: u32,
    reviewer_error: f64,
    synth_iters: u32,
    tightened: bool,
    out: *mut f64,
) -> PrismStatus {
    guard(
        || match theory::performance_bound(&BoundInputs::new(p, k, reviewer_error, synth_iters), tightened) {
            Ok(v) => write_out(out, v),
            Err(e) => fail(PrismStatus::InvalidArgument, e),
        },
    )
}

/// Majority-vote accuracy of `k` (odd) independent voters.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn prism_vote_accuracy(p: f64, k: u32, out: *mut f64) -> PrismStatus {
    guard(|| match theory::vote_accuracy(p, k) {
        Ok(v) => write_out(out, v),
        Err(e) => fail(PrismStatus::InvalidArgument, e),
    })
}

/// Information carried by a binary verification signal.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn prism_channel_analysis(
    prior_p: f64,
    fp_rate: f64,
    fn_rate: f64,
    out: *mut PrismChannelAnalysis,
) -> PrismStatus {
    guard(|| {
        let analysis = ChannelSpec::new(prior_p, fp_rate, fn_rate).and_then(|s| theory::channel_analysis(&s));
        match analysis {
            Ok(a) => write_out(
                out,
                PrismChannelAnalysis {
                    entropy_q: a.entropy_q,
                    mutual_information: a.mi,
                    posterior_correct: a.posterior_correct,
                    posterior_incorrect: a.posterior_incorrect,
                    conditional_entropy: a.cond_entropy,
                    bayes_error: a.bayes_error,
                },
            ),
            Err(e) => fail(PrismStatus::InvalidArgument, e),
        }
    })
}

/// Parses a game in the text format (`k <n> lambda <x>` then one
/// `player strategy quality score` line per strategy).
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn prism_game_parse(text: *const c_char, out: *mut *mut PrismGame) -> PrismStatus {
    guard(|| {
        if text.is_null() || out.is_null() {
            return fail(PrismStatus::NullPointer, "text and out must be non-null");
        }
        let Ok(text) = CStr::from_ptr(text).to_str() else {
            return fail(PrismStatus::Parse, "game text is not valid UTF-8");
        };
        match parse_text_with(text, parse_rational) {
            Ok(game) => write_out(out, Box::into_raw(Box::new(PrismGame { game }))),
            Err(e) => fail(PrismStatus::Parse, e),
        }
    })
}

/// # Safety
/// `game` must come from [`prism_game_parse`]; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn prism_game_player_count(game: *const PrismGame, out: *mut usize) -> PrismStatus {
    guard(|| match game.as_ref() {
        Some(g) => write_out(out, g.game.k_players()),
        None => fail(PrismStatus::NullPointer, "game is null"),
    })
}

/// Checks the exact potential identity on every unilateral deviation, up to
/// `cap` deviations.
///
/// # Safety
/// `game` must come from [`prism_game_parse`]; the out-pointers must be
/// valid for writes.
#[no_mangle]
pub unsafe extern "C" fn prism_game_verify(
    game: *const PrismGame,
    cap: u64,
    out_passed: *mut bool,
    out_checked: *mut u64,
) -> PrismStatus {
    guard(|| {
        let Some(g) = game.as_ref() else {
            return fail(PrismStatus::NullPointer, "game is null");
        };
        if out_passed.is_null() || out_checked.is_null() {
            return fail(PrismStatus::NullPointer, "output pointer is null");
        }
        match g.game.verify_exact_potential(cap) {
            Ok(report) => {
                out_passed.write(report.passed_exact());
                out_checked.write(report.deviations_checked);
                PrismStatus::Ok
            }
            Err(e) => fail(PrismStatus::InvalidArgument, e),
        }
    })
}

/// Round-robin best-response dynamics from `initial`; the terminal profile
/// is written to `out_terminal`. Both arrays hold one strategy per player.
///
/// # Safety
/// `game` must come from [`prism_game_parse`]; `initial` must be readable and
/// `out_terminal` writable for `len` elements.
#[no_mangle]
pub unsafe extern "C" fn prism_game_best_response(
    game: *const PrismGame,
    initial: *const usize,
    out_terminal: *mut usize,
    len: usize,
) -> PrismStatus {
    guard(|| {
        let Some(g) = game.as_ref() else {
            return fail(PrismStatus::NullPointer, "game is null");
        };
        if initial.is_null() || out_terminal.is_null() {
            return fail(PrismStatus::NullPointer, "profile pointer is null");
        }
        if len != g.game.k_players() {
            return fail(
                PrismStatus::InvalidArgument,
                format!("profile length {len} does not match {} players", g.game.k_players()),
            );
        }
        let start = Profile::new(std::slice::from_raw_parts(initial, len).to_vec());
        match g.game.best_response_dynamics(start, UpdateOrder::RoundRobin) {
            Ok(trace) => {
                std::slice::from_raw_parts_mut(out_terminal, len).copy_from_slice(&trace.terminal.choice);
                PrismStatus::Ok
            }
            Err(e) => fail(PrismStatus::InvalidArgument, e),
        }
    })
}

/// # Safety
/// `game` must come from [`prism_game_parse`] and not be used afterwards.
/// NULL is accepted.
#[no_mangle]
pub unsafe extern "C" fn prism_game_free(game: *mut PrismGame) {
    if !game.is_null() {
        drop(Box::from_raw(game));
    }
}

/// Simulated pipeline with `k` exchangeable proposers of success rate `p`
/// and pairwise correlation `rho`, `r` reviewers per candidate with error
/// `reviewer_error`, and `s` synthesis iterations.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn prism_simulation_new(
    k: u32,
    r: u32,
    s: u32,
    p: f64,
    reviewer_error: f64,
    rho: f64,
    seed: u64,
    out: *mut *mut PrismSimulation,
) -> PrismStatus {
    guard(|| {
        let world = match SimulatedWorld::standard(k, p, rho, reviewer_error) {
            Ok(w) => w,
            Err(e) => return fail(PrismStatus::InvalidArgument, e),
        };
        let config = RunConfig {
            k_proposers: k,
            r_reviewers: r,
            s_synth_iters: s,
            seed: WorldSeed::new(seed),
            ..RunConfig::default()
        };
        if let Err(e) = config.validate() {
            return fail(PrismStatus::InvalidArgument, e);
        }
        write_out(out, Box::into_raw(Box::new(PrismSimulation { world, config })))
    })
}

/// Runs `trials` simulated tasks. Results depend only on the seed and the
/// configuration.
///
/// # Safety
/// `sim` must come from [`prism_simulation_new`]; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn prism_simulation_run(
    sim: *const PrismSimulation,
    trials: u64,
    out: *mut PrismSimulationResult,
) -> PrismStatus {
    guard(|| {
        let Some(sim) = sim.as_ref() else {
            return fail(PrismStatus::NullPointer, "simulation is null");
        };
        if trials < 2 {
            return fail(PrismStatus::InvalidArgument, "need at least 2 trials");
        }
        match estimate_identity(&sim.world, &sim.config, trials) {
            Ok(est) => write_out(
                out,
                PrismSimulationResult {
                    trials: est.counts.n,
                    correct: est.counts.correct,
                    covered: est.counts.covered,
                    mean_quality: est.mean_quality.point,
                    ci_low: est.mean_quality.ci_low,
                    ci_high: est.mean_quality.ci_high,
                    coverage: est.coverage.point,
                    mean_tokens: est.counts.mean_tokens(),
                    identity_holds: est.identity_holds,
                },
            ),
            Err(e) => fail(PrismStatus::Runtime, e),
        }
    })
}

/// # Safety
/// `sim` must come from [`prism_simulation_new`] and not be used afterwards.
/// NULL is accepted.
#[no_mangle]
pub unsafe extern "C" fn prism_simulation_free(sim: *mut PrismSimulation) {
    if !sim.is_null() {
        drop(Box::from_raw(sim));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn last_error() -> String {
        let p = prism_last_error_message();
        assert!(!p.is_null());
        unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
    }

    #[test]
    fn null_out_pointer_is_reported() {
        let status = unsafe { prism_iid_coverage(0.4, 3, ptr::null_mut()) };
        assert_eq!(status, PrismStatus::NullPointer);
        assert!(last_error().contains("null"));
    }

    #[test]
    fn domain_errors_carry_a_message() {
        let mut v = 0.0;
        assert_eq!(
            unsafe { prism_vote_accuracy(0.3, 4, &mut v) },
            PrismStatus::InvalidArgument
        );
        assert!(!last_error().is_empty());
    }

    #[test]
    fn version_is_a_c_string() {
        let v = unsafe { CStr::from_ptr(prism_version()) };
        assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
    }
}

use std::ffi::{CStr, CString};
use std::ptr;

use prism_ffi::*;

fn error() -> String {
    unsafe { CStr::from_ptr(prism_last_error_message()) }
        .to_string_lossy()
        .into_owned()
}

#[test]
fn analytic_functions_match_the_core() {
    let mut v = 0.0;
    unsafe {
        assert_eq!(prism_iid_coverage(0.4, 5, &mut v), PrismStatus::Ok);
        assert_eq!(v, prism_core::theory::iid_coverage(0.4, 5).unwrap());
        assert_eq!(prism_performance_bound(0.4, 3, 0.2, 3, false, &mut v), PrismStatus::Ok);
        assert!((v - 0.75264).abs() < 1e-12);
        assert_eq!(prism_vote_accuracy(0.3, 5, &mut v), PrismStatus::Ok);
        assert!((v - 0.16308).abs() < 1e-12);
        assert_eq!(prism_iid_coverage(1.5, 3, &mut v), PrismStatus::InvalidArgument);
    }
    assert!(error().contains('p'));
}

#[test]
fn channel_struct_is_filled() {
    let mut a = PrismChannelAnalysis::default();
    assert_eq!(
        unsafe { prism_channel_analysis(0.4, 0.1, 0.15, &mut a) },
        PrismStatus::Ok
    );
    assert!((a.mutual_information - 0.446).abs() < 1e-3);
    assert!((a.posterior_correct - 0.85).abs() < 1e-12);
    assert!(a.bayes_error <= a.conditional_entropy);
}

#[test]
fn game_handle_lifecycle() {
    let text = CString::new("k 2 lambda 1/2\n0 0 0 1\n0 1 1 0\n1 0 0 1/3\n1 1 0 2/3\n").unwrap();
    let mut game = ptr::null_mut();
    unsafe {
        assert_eq!(prism_game_parse(text.as_ptr(), &mut game), PrismStatus::Ok);
        let (mut passed, mut checked) = (false, 0u64);
        assert_eq!(prism_game_verify(game, 100, &mut passed, &mut checked), PrismStatus::Ok);
        assert!(passed);
        assert_eq!(checked, 8);
        let start = [0usize, 0];
        let mut end = [0usize; 2];
        assert_eq!(
            prism_game_best_response(game, start.as_ptr(), end.as_mut_ptr(), 1),
            PrismStatus::InvalidArgument
        );
        assert_eq!(
            prism_game_best_response(game, start.as_ptr(), end.as_mut_ptr(), 2),
            PrismStatus::Ok
        );
        assert_eq!(end, [1, 1]);
        assert_eq!(
            prism_game_verify(game, 2, &mut passed, &mut checked),
            PrismStatus::InvalidArgument
        );
        prism_game_free(game);
        prism_game_free(ptr::null_mut());
    }
}

#[test]
fn parse_errors_leave_the_handle_null() {
    let text = CString::new("k 1 lambda 1\n0 0 7 1\n").unwrap();
    let mut game = ptr::null_mut();
    assert_eq!(
        unsafe { prism_game_parse(text.as_ptr(), &mut game) },
        PrismStatus::Parse
    );
    assert!(game.is_null());
    assert!(error().contains("line 2"), "{}", error());
    assert_eq!(
        unsafe { prism_game_parse(ptr::null(), &mut game) },
        PrismStatus::NullPointer
    );
}

#[test]
fn simulation_is_deterministic_per_seed() {
    let run = |seed| unsafe {
        let mut sim = ptr::null_mut();
        assert_eq!(
            prism_simulation_new(3, 1, 3, 0.4, 0.2, 0.0, seed, &mut sim),
            PrismStatus::Ok
        );
        let mut r = PrismSimulationResult::default();
        assert_eq!(prism_simulation_run(sim, 5_000, &mut r), PrismStatus::Ok);
        prism_simulation_free(sim);
        r
    };
    assert_eq!(run(1), run(1));
    assert_ne!(run(1).correct, run(2).correct);
    assert!(run(1).identity_holds);
}

#[test]
fn invalid_simulations_are_rejected() {
    let mut sim = ptr::null_mut();
    unsafe {
        assert_eq!(
            prism_simulation_new(3, 1, 3, 0.4, 0.7, 0.0, 1, &mut sim),
            PrismStatus::InvalidArgument
        );
        assert_eq!(
            prism_simulation_new(0, 0, 3, 0.4, 0.2, 0.0, 1, &mut sim),
            PrismStatus::InvalidArgument
        );
        assert!(sim.is_null());
        let mut r = PrismSimulationResult::default();
        assert_eq!(prism_simulation_run(ptr::null(), 10, &mut r), PrismStatus::NullPointer);
    }
}

mod common;

use proptest::prelude::*;

use common::{
    arb_minimality_case, arb_monotone_case, arb_small_program, check_inflationary,
    check_minimality, check_termination, check_trace_complete, clamp_tafs, monotone_shape,
};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(250))]

    #[test]
    fn fixpoint_is_monotone_in_program_and_interpretation(case in arb_monotone_case()) {
        case.check().map_err(TestCaseError::fail)?;
    }

    #[test]
    fn single_sweep_is_inflationary(case in arb_monotone_case()) {
        check_inflationary(&case.program, &case.strong, case.horizon).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn sweeps_respect_termination_bound(p in arb_small_program(monotone_shape()), h in 1u32..=6) {
        check_termination(&clamp_tafs(p, h), h).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn every_derived_entry_is_explained(p in arb_small_program(monotone_shape()), h in 1u32..=6) {
        check_trace_complete(&clamp_tafs(p, h), h).map_err(TestCaseError::fail)?;
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn fixpoint_is_least_satisfying_interpretation((p, h) in arb_minimality_case()) {
        check_minimality(&p, h).map_err(TestCaseError::fail)?;
    }
}

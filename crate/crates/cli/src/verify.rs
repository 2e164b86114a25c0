//! The `verify` fixture suite.

use randalign_core::checks::{align_algebra_check, smoothing_gap_check, gradient_suite, walk_proportionality_suite, AlignFn, CheckOutcome};

use crate::error::{CliError, CliResult};

/// Runs every check, with `align` as the row alignment under test.
pub fn run_checks(align: AlignFn) -> Vec<CheckOutcome> {
    vec![smoothing_gap_check(), walk_proportionality_suite(), align_algebra_check(align), gradient_suite()]
}

/// Prints one line per check; fails with the names of failing checks.
pub fn verify_with(align: AlignFn, out: &mut impl std::io::Write) -> CliResult<Vec<CheckOutcome>> {
    let outcomes = run_checks(align);
    for c in &outcomes {
        writeln!(out, "{}", c.line())?;
    }
    let failed: Vec<String> = outcomes.iter().filter(|c| !c.passed).map(|c| c.name.clone()).collect();
    if failed.is_empty() {
        Ok(outcomes)
    } else {
        Err(CliError::VerifyFailed(failed))
    }
}

pub fn verify_fixtures(out: &mut impl std::io::Write) -> CliResult<Vec<CheckOutcome>> {
    verify_with(randalign_core::randalign::align_row, out)
}

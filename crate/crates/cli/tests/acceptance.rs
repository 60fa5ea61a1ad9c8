//! One line per acceptance criterion; fails if any criterion fails.
//! Lines go straight to stderr so they show without --nocapture.

use std::io::Write;

use rislab_cli::tolerances::Tolerances;
use rislab_cli::verify::{run_criterion, CRITERION_COUNT};

#[test]
fn acceptance_suite() {
    let tol = Tolerances::defaults();
    let mut failed = Vec::new();
    let mut err = std::io::stderr();
    writeln!(err).unwrap();
    for id in 1..=CRITERION_COUNT {
        let r = run_criterion(id, &tol);
        writeln!(err, "{}", r.line()).unwrap();
        if !r.passed {
            failed.push(id);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}

mod common;

#[test]
fn every_objective_matches_central_differences() {
    for (name, outcome) in common::loss_gradchecks(7, 1e-5, 1e-4) {
        let report = outcome.unwrap_or_else(|e| panic!("{name}: {e}"));
        assert!(report.checked > 0, "{name}: nothing checked");
    }
}

#[test]
fn gradients_hold_on_a_second_draw() {
    for (name, outcome) in common::loss_gradchecks(1234, 1e-5, 1e-4) {
        outcome.unwrap_or_else(|e| panic!("{name}: {e}"));
    }
}

//! Scaling z ↦ λz shifts r by b = log|λ|², and ψ only sees ratios of
//! derivatives of φ. Hence if φ solves the flow for parameter c, then
//! e^{−b/2}φ(r + b, e^{b/2}t) solves it for c e^{−b}. The discrete scheme
//! inherits this when the grid is shifted by b and time steps are rescaled.

use kahler_flow::curvature::FormulaVersion;
use kahler_flow::flow::{evolve, FlowState, SolverControls};
use kahler_flow::radial::{GridSpec, MetricFamily};
use proptest::prelude::*;

fn compare(b: f64, t: f64) -> f64 {
    let scale = (b / 2.0).exp();
    let grid = GridSpec::new(-12.0, 12.0, 2401).unwrap();
    let shifted = GridSpec::new(-12.0 - b, 12.0 - b, 2401).unwrap();
    let base = MetricFamily::paper(1.0, 1.0).unwrap();
    let scaled = MetricFamily::paper(1.0, (-b).exp()).unwrap();
    let controls = SolverControls::default();
    let slow = SolverControls {
        dt_init: controls.dt_init / scale,
        dt_max: controls.dt_max / scale,
        ..controls
    };
    let s = FlowState::initial(&base, grid, FormulaVersion::Corrected).unwrap();
    let s = evolve(&s, t * scale, &controls, &[]).unwrap().state;
    let u = FlowState::initial(&scaled, shifted, FormulaVersion::Corrected).unwrap();
    let u = evolve(&u, t, &slow, &[]).unwrap().state;
    let window = s.trusted_indices();
    let (js, ju) = (s.jets(), u.jets());
    window
        .map(|i| (ju[i].phi / (js[i].phi / scale) - 1.0).abs())
        .fold(0.0, f64::max)
}

#[test]
fn rescaled_solutions_agree() {
    let err = compare(4.0f64.ln(), 5e-4);
    assert!(err <= 1e-9, "relative mismatch {err:e}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn rescaling_holds_for_any_shift(steps in 1u32..300) {
        // Shifts that are whole multiples of the grid spacing.
        let b = f64::from(steps) * 0.01;
        let err = compare(b, 2e-4);
        prop_assert!(err <= 1e-9, "b = {b}: relative mismatch {err:e}");
    }
}

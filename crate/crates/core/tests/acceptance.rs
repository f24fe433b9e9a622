//! End-to-end acceptance run: every check on every built-in system, plus
//! curved variants, with pinned tolerances and per-check time budgets.
//!
//! Prints one `PASS`/`FAIL` line per check and system. Run with
//! `cargo test --test acceptance -- --nocapture` to see them.

use std::time::{Duration, Instant};

use lpr_core::dynamics::AmbientState;
use lpr_core::system::MechanicalSystem;
use lpr_core::systems::{builtin_with, BuiltinKind, BuiltinParameters, SystemConfig};
use lpr_core::verify::{run_checks, Bound, CheckResult, Criterion, Measurement, Tolerances, VerifyOptions};

fn pinned_tolerances() -> Tolerances {
    Tolerances {
        projector: 1e-10,
        connection: 1e-10,
        pseudoinverse: 1e-10,
        commutator: 1e-5,
        killing: 1e-8,
        variational: 1e-4,
        deviation_abelian: 1e-6,
        deviation_nonabelian: 1e-5,
        energy_drift: 1e-6,
        momentum_drift: 1e-8,
        slice_residual: 1e-8,
        lagrangian: 1e-10,
        min_order: 1.8,
    }
}

/// Wall-clock budget per check; reduction equivalence and conservation share
/// one trajectory pair and are timed together.
fn budget(c: Criterion) -> Duration {
    let secs = match c {
        Criterion::ProjectorAlgebra
        | Criterion::ConnectionAxioms
        | Criterion::PseudoinverseIdentities
        | Criterion::LagrangianIdentity => 1.0,
        Criterion::FrameCommutators => 10.0,
        Criterion::KillingIdentities => 2.0,
        Criterion::VariationalRelations => 30.0,
        Criterion::ReductionEquivalence | Criterion::Conservation => 10.0,
    };
    Duration::from_secs_f64(secs)
}

/// Measurement closest to (or furthest past) its bound.
fn worst(r: &CheckResult) -> Option<&Measurement> {
    let ratio = |m: &Measurement| match m.bound {
        Bound::AtMost(b) => m.value / b,
        Bound::AtLeast(b) => b / m.value,
        Bound::Info => f64::NEG_INFINITY,
    };
    r.measurements
        .iter()
        .filter(|m| !matches!(m.bound, Bound::Info))
        .max_by(|a, b| ratio(a).total_cmp(&ratio(b)))
}

struct Case {
    label: String,
    sys: MechanicalSystem,
    initial: AmbientState,
    timed: bool,
}

fn case(kind: BuiltinKind, params: BuiltinParameters, label: &str, timed: bool) -> Case {
    let mut config = SystemConfig::builtin(kind);
    config.parameters = params.clone();
    Case {
        label: label.to_string(),
        sys: builtin_with(kind, &params).expect("builtin loads"),
        initial: config.initial_state().expect("default initial state"),
        timed,
    }
}

#[test]
fn acceptance() {
    assert_eq!(pinned_tolerances(), Tolerances::default(), "default tolerances drifted");
    let opts = VerifyOptions {
        tolerances: pinned_tolerances(),
        ..VerifyOptions::default()
    };

    let curved = BuiltinParameters {
        metric_conformal: 0.15,
        gauge_curvature: 0.3,
        ..BuiltinParameters::default()
    };
    let mut cases = Vec::new();
    for kind in BuiltinKind::ALL {
        cases.push(case(kind, BuiltinParameters::default(), kind.name(), true));
        cases.push(case(kind, curved.clone(), &format!("{kind}+curved"), false));
    }

    let groups: Vec<Vec<Criterion>> = vec![
        vec![Criterion::ProjectorAlgebra],
        vec![Criterion::ConnectionAxioms],
        vec![Criterion::PseudoinverseIdentities],
        vec![Criterion::FrameCommutators],
        vec![Criterion::KillingIdentities],
        vec![Criterion::VariationalRelations],
        vec![Criterion::ReductionEquivalence, Criterion::Conservation],
        vec![Criterion::LagrangianIdentity],
    ];

    let mut failures = Vec::new();
    for c in &cases {
        for group in &groups {
            let t0 = Instant::now();
            let report = run_checks(&c.sys, &c.initial, group, &opts);
            let elapsed = t0.elapsed();
            let over_budget = c.timed && elapsed > budget(group[0]);
            for r in &report.results {
                let ok = r.passed && !over_budget;
                let detail = match (&r.failure, worst(r)) {
                    (Some(f), _) => format!("error: {}", f.message),
                    (None, Some(m)) => format!("{} = {:.3e} ({:?})", m.name, m.value, m.bound),
                    (None, None) => "no gated measurements".to_string(),
                };
                let budget_note = if c.timed {
                    format!("{:.2}s / {:.0}s", elapsed.as_secs_f64(), budget(group[0]).as_secs_f64())
                } else {
                    format!("{:.2}s", elapsed.as_secs_f64())
                };
                println!(
                    "{} {} {:<24} {:<22} {detail} [{budget_note}]",
                    if ok { "PASS" } else { "FAIL" },
                    r.number,
                    r.criterion.name(),
                    c.label,
                );
                if !ok {
                    failures.push(format!("{} on {}", r.criterion, c.label));
                }
            }
        }
    }
    assert!(failures.is_empty(), "failed: {failures:?}");
}

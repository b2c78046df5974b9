//! The canonical nested Mach-Zehnder circuit and its named variants, plus a
//! packaged per-scenario report.
//!
//! Layout of every scenario circuit (all splitting ratios 50/50 by default,
//! configurable through the `T1`/`T2`/`T3` parameters):
//!
//! ```text
//! probe:   P1 ──BS3a──(phase PHI_P)──············──BS3b──▶ DP1/DP2
//! system:  A  ──BS1a──┬───────────────────────┬──BS1b──▶ D/DBAR
//!                     └─BS2a── B,C ··Kerr·· ──BS2b─┘   (inner MZI)
//! ```
//!
//! The inner interferometer is tuned so that the leg returning to the final
//! outer splitter (`rail B between BS2b and BS1b`) is a dark port. Blocks,
//! couplings, and coupling detunings are inserted between the cut `inner`
//! and the inner recombiner according to the scenario kind.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::engine::{
    dark_port_magnitude, detector_probability, evolve, post_select, ConditionalProbeStats,
    DarkPortSpec,
};
use crate::error::{Error, Result};
use crate::fmt_f64;
use crate::model::{
    validate_circuit, Bindings, Circuit, Detector, ParamRef, RailId, Stage, Subsystem,
};
use crate::tsvf::{
    first_order_response_check, weak_value_report, FirstOrderResponse, WeakValueReport,
};

/// The named experiment variants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum ScenarioKind {
    /// Equal weak couplings on both inner arms.
    Nominal,
    /// Arm B absorbed before the couplings.
    BlockedB,
    /// Arm C absorbed before the couplings.
    BlockedC,
    /// Arm C's coupling detuned to `eps + delta`.
    Detuned { delta: f64 },
    /// Coupling on arm B only.
    SingleArmB,
    /// Coupling on arm C only.
    SingleArmC,
    /// Couplings on all outer-interferometer arms (A plus the inner arms).
    OuterArms,
}

impl ScenarioKind {
    pub fn name(&self) -> &'static str {
        match self {
            ScenarioKind::Nominal => "nominal",
            ScenarioKind::BlockedB => "blocked_b",
            ScenarioKind::BlockedC => "blocked_c",
            ScenarioKind::Detuned { .. } => "detuned",
            ScenarioKind::SingleArmB => "single_arm_b",
            ScenarioKind::SingleArmC => "single_arm_c",
            ScenarioKind::OuterArms => "outer_arms",
        }
    }

    /// Kind with the given name; `delta` is used by `detuned` only.
    pub fn from_name(name: &str, delta: f64) -> Option<ScenarioKind> {
        Some(match name {
            "nominal" => ScenarioKind::Nominal,
            "blocked_b" => ScenarioKind::BlockedB,
            "blocked_c" => ScenarioKind::BlockedC,
            "detuned" => ScenarioKind::Detuned { delta },
            "single_arm_b" => ScenarioKind::SingleArmB,
            "single_arm_c" => ScenarioKind::SingleArmC,
            "outer_arms" => ScenarioKind::OuterArms,
            _ => return None,
        })
    }

    /// All kinds at representative option values, for exhaustive checks.
    pub fn all(delta: f64) -> [ScenarioKind; 7] {
        [
            ScenarioKind::Nominal,
            ScenarioKind::BlockedB,
            ScenarioKind::BlockedC,
            ScenarioKind::Detuned { delta },
            ScenarioKind::SingleArmB,
            ScenarioKind::SingleArmC,
            ScenarioKind::OuterArms,
        ]
    }
}

impl std::fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Optional builder knobs beyond the coupling strength.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ScenarioOptions {
    /// Coupling strength on arm A; `outer_arms` only (default 0).
    pub eps_a: Option<f64>,
    /// Extra coupling on the inner-interferometer entrance leg (between the
    /// outer and inner splitters); `outer_arms` only.
    pub entrance_eps: Option<f64>,
    /// Extra coupling on the inner-interferometer exit leg (between the inner
    /// recombiner and the final outer splitter); `outer_arms` only.
    pub exit_eps: Option<f64>,
    /// Also place cuts `entrance` and `exit` on those legs (any kind).
    pub boundary_cuts: bool,
}

const SYS: Subsystem = Subsystem::System;
const PROBE: Subsystem = Subsystem::Probe;

/// Builds the validated circuit for one scenario.
///
/// System rails `{A, B, C}`, probe rails `{P1, P2}`; detectors `D`/`DBAR` on
/// the system output rails and `DP1`/`DP2` on the probe output rails. The
/// per-kind blocks sit after the cut `inner` and before the couplings; the
/// probe phase offset `PHI_P` defaults to 0.
pub fn build_scenario(kind: ScenarioKind, eps: f64, options: &ScenarioOptions) -> Result<Circuit> {
    if !eps.is_finite() {
        return Err(Error::InvalidOptions(format!("coupling strength {eps} is not finite")));
    }
    if let ScenarioKind::Detuned { delta } = kind {
        if !delta.is_finite() {
            return Err(Error::InvalidOptions(format!("detuning {delta} is not finite")));
        }
    }
    if !matches!(kind, ScenarioKind::OuterArms) {
        for (name, value) in [
            ("eps_a", options.eps_a),
            ("entrance_eps", options.entrance_eps),
            ("exit_eps", options.exit_eps),
        ] {
            if value.is_some() {
                return Err(Error::InvalidOptions(format!(
                    "`{name}` applies only to outer_arms, not {kind}"
                )));
            }
        }
    }

    let mut params = BTreeMap::from([
        ("EPS".to_string(), eps),
        ("PHI_P".to_string(), 0.0),
        ("T1".to_string(), 0.5),
        ("T2".to_string(), 0.5),
        ("T3".to_string(), 0.5),
    ]);
    let named = |n: &str| ParamRef::Named(n.into());

    let mut stages = vec![
        Stage::bs(PROBE, "P1", "P2", named("T3")),
        Stage::phase(PROBE, "P1", named("PHI_P")),
        Stage::bs(SYS, "A", "B", named("T1")),
    ];
    if options.boundary_cuts {
        stages.push(Stage::cut("entrance"));
    }
    if let (ScenarioKind::OuterArms, Some(eps_in)) = (kind, options.entrance_eps) {
        params.insert("EPS_IN".into(), eps_in);
        stages.push(Stage::kerr("B", "P1", named("EPS_IN")));
    }
    stages.push(Stage::bs(SYS, "B", "C", named("T2")));
    stages.push(Stage::cut("inner"));

    match kind {
        ScenarioKind::BlockedB => stages.push(Stage::block(SYS, "B")),
        ScenarioKind::BlockedC => stages.push(Stage::block(SYS, "C")),
        _ => {}
    }

    match kind {
        ScenarioKind::Nominal | ScenarioKind::BlockedB | ScenarioKind::BlockedC => {
            stages.push(Stage::kerr("B", "P1", named("EPS")));
            stages.push(Stage::kerr("C", "P1", named("EPS")));
        }
        ScenarioKind::Detuned { delta } => {
            params.insert("EPS_C".into(), eps + delta);
            stages.push(Stage::kerr("B", "P1", named("EPS")));
            stages.push(Stage::kerr("C", "P1", named("EPS_C")));
        }
        ScenarioKind::SingleArmB => stages.push(Stage::kerr("B", "P1", named("EPS"))),
        ScenarioKind::SingleArmC => stages.push(Stage::kerr("C", "P1", named("EPS"))),
        ScenarioKind::OuterArms => {
            params.insert("EPS_A".into(), options.eps_a.unwrap_or(0.0));
            stages.push(Stage::kerr("A", "P1", named("EPS_A")));
            stages.push(Stage::kerr("B", "P1", named("EPS")));
            stages.push(Stage::kerr("C", "P1", named("EPS")));
        }
    }

    stages.push(Stage::bs(SYS, "B", "C", named("T2")));
    if options.boundary_cuts {
        stages.push(Stage::cut("exit"));
    }
    if let (ScenarioKind::OuterArms, Some(eps_out)) = (kind, options.exit_eps) {
        params.insert("EPS_OUT".into(), eps_out);
        stages.push(Stage::kerr("B", "P1", named("EPS_OUT")));
    }
    stages.push(Stage::bs(SYS, "A", "B", named("T1")));
    stages.push(Stage::bs(PROBE, "P1", "P2", named("T3")));

    let circuit = Circuit {
        system_rails: vec!["A".into(), "B".into(), "C".into()],
        probe_rails: vec!["P1".into(), "P2".into()],
        init_system: "A".into(),
        init_probe: "P1".into(),
        stages,
        detectors: vec![
            Detector { name: "D".into(), rail: RailId::system("A") },
            Detector { name: "DBAR".into(), rail: RailId::system("B") },
            Detector { name: "DP1".into(), rail: RailId::probe("P1") },
            Detector { name: "DP2".into(), rail: RailId::probe("P2") },
        ],
        params,
    };

    let report = validate_circuit(&circuit);
    debug_assert!(report.ok(), "scenario builder produced an invalid circuit: {report:?}");
    Ok(circuit)
}

/// Dark-port designation for a scenario circuit: rail `B` at the boundary
/// just before the final outer beam splitter. The position is located by the
/// builder's own layout (the last system beam splitter), never inferred from
/// the physics.
pub fn dark_port(circuit: &Circuit) -> Option<DarkPortSpec> {
    let before_stage = circuit.stages.iter().rposition(
        |s| matches!(s, Stage::BeamSplitter { rail_a, .. } if rail_a.subsystem == SYS),
    )?;
    Some(DarkPortSpec { rail: "B".into(), before_stage })
}

/// Everything the debate argues about, for one scenario at one parameter set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioReport {
    pub kind: ScenarioKind,
    pub bindings: Bindings,
    /// Probability of the post-selection detector `D`.
    pub p_select: f64,
    /// Magnitude on the dark-port leg just before the final outer splitter.
    pub dark_mag: f64,
    pub probe_stats: ConditionalProbeStats,
    /// Weak values at the cut `inner`, post-selected on `D`.
    pub weak_values: WeakValueReport,
    /// First-order pointer response record (nominal and single-arm kinds).
    pub response: Option<FirstOrderResponse>,
}

impl ScenarioReport {
    /// Flat `key=value` block, one entry per line, deterministic order.
    pub fn to_kv(&self) -> String {
        let mut out = String::new();
        let mut push = |k: &str, v: String| {
            out.push_str(k);
            out.push('=');
            out.push_str(&v);
            out.push('\n');
        };
        push("scenario", self.kind.name().into());
        for (name, value) in &self.bindings {
            push(&format!("binding.{name}"), fmt_f64(*value));
        }
        push("p_select", fmt_f64(self.p_select));
        push("dark_mag", fmt_f64(self.dark_mag));
        for (name, p) in &self.probe_stats.conditionals {
            push(&format!("cond.{name}"), fmt_f64(*p));
        }
        push("cond.sink", fmt_f64(self.probe_stats.sink_prob));
        push("s_imbalance", fmt_f64(self.probe_stats.imbalance));
        push("overlap.re", fmt_f64(self.weak_values.overlap.re));
        push("overlap.im", fmt_f64(self.weak_values.overlap.im));
        for (rail, w) in &self.weak_values.weak_values {
            push(&format!("wv.{rail}.re"), fmt_f64(w.re));
            push(&format!("wv.{rail}.im"), fmt_f64(w.im));
        }
        if let Some(r) = &self.response {
            push("response.weak_value_sum.re", fmt_f64(r.weak_value_sum.re));
            push("response.weak_value_sum.im", fmt_f64(r.weak_value_sum.im));
            push("response.full_dS_deps", fmt_f64(r.full_derivative));
            push("response.effective_dS_deps", fmt_f64(r.effective_derivative));
            push("response.difference", fmt_f64(r.difference));
            push("response.step", fmt_f64(r.step));
        }
        out
    }
}

/// Builds, evolves, post-selects on `D`, and packages the full report.
pub fn run_scenario(
    kind: ScenarioKind,
    eps: f64,
    options: &ScenarioOptions,
) -> Result<ScenarioReport> {
    let circuit = build_scenario(kind, eps, options)?;
    let bindings = circuit.params.clone();
    let trace = evolve(&circuit, &bindings)?;
    let p_select = detector_probability(&trace, "D")?;
    let spec = dark_port(&circuit).expect("scenario circuits designate a dark port");
    let dark_mag = dark_port_magnitude(&trace, &spec)?;
    let probe_stats = post_select(&trace, Subsystem::System, "D")?;
    let weak_values = weak_value_report(&circuit, "inner", "D")?;

    let response = match kind {
        ScenarioKind::Nominal => {
            Some(first_order_response_check(&circuit, &["B", "C"], "D", 1e-4)?)
        }
        ScenarioKind::SingleArmB => Some(first_order_response_check(&circuit, &["B"], "D", 1e-4)?),
        ScenarioKind::SingleArmC => Some(first_order_response_check(&circuit, &["C"], "D", 1e-4)?),
        _ => None,
    };

    Ok(ScenarioReport { kind, bindings, p_select, dark_mag, probe_stats, weak_values, response })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn nominal_builds_valid_dark_circuit() {
        let circuit =
            build_scenario(ScenarioKind::Nominal, 0.1, &ScenarioOptions::default()).unwrap();
        assert!(validate_circuit(&circuit).ok());
        let report = run_scenario(ScenarioKind::Nominal, 0.1, &ScenarioOptions::default()).unwrap();
        assert!(report.dark_mag <= 1e-12);
        assert_abs_diff_eq!(report.p_select, 0.25, epsilon = 1e-12);
    }

    #[test]
    fn blocked_b_has_one_block_before_the_couplings() {
        let circuit =
            build_scenario(ScenarioKind::BlockedB, 0.3, &ScenarioOptions::default()).unwrap();
        let blocks: Vec<usize> = circuit
            .stages
            .iter()
            .enumerate()
            .filter_map(|(i, s)| {
                matches!(s, Stage::Block { rail } if rail.name == "B").then_some(i)
            })
            .collect();
        assert_eq!(blocks.len(), 1);
        let first_kerr =
            circuit.stages.iter().position(|s| matches!(s, Stage::Kerr { .. })).unwrap();
        assert!(blocks[0] < first_kerr);
        assert_eq!(circuit.stages.iter().filter(|s| matches!(s, Stage::Block { .. })).count(), 1);
    }

    #[test]
    fn detuned_zero_matches_nominal_report() {
        let nominal =
            run_scenario(ScenarioKind::Nominal, 0.2, &ScenarioOptions::default()).unwrap();
        let detuned =
            run_scenario(ScenarioKind::Detuned { delta: 0.0 }, 0.2, &ScenarioOptions::default())
                .unwrap();
        assert_abs_diff_eq!(nominal.p_select, detuned.p_select, epsilon = 1e-15);
        assert_abs_diff_eq!(nominal.dark_mag, detuned.dark_mag, epsilon = 1e-15);
        for ((_, a), (_, b)) in
            nominal.probe_stats.conditionals.iter().zip(&detuned.probe_stats.conditionals)
        {
            assert_abs_diff_eq!(a, b, epsilon = 1e-15);
        }
        assert_eq!(nominal.weak_values.to_csv(), detuned.weak_values.to_csv());
    }

    #[test]
    fn nominal_probe_conditionals_are_coupling_independent() {
        let at0 = run_scenario(ScenarioKind::Nominal, 0.0, &ScenarioOptions::default()).unwrap();
        let at02 = run_scenario(ScenarioKind::Nominal, 0.2, &ScenarioOptions::default()).unwrap();
        assert_abs_diff_eq!(at0.probe_stats.conditional("DP1").unwrap(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(at0.probe_stats.conditional("DP2").unwrap(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(
            at02.probe_stats.conditional("DP1").unwrap(),
            at0.probe_stats.conditional("DP1").unwrap(),
            epsilon = 1e-12
        );
        let weak = &at02.weak_values;
        assert!((weak.weak_value("A").unwrap().re - 1.0).abs() <= 1e-12);
        assert!((weak.weak_value("B").unwrap().re + 0.5).abs() <= 1e-12);
        assert!((weak.weak_value("C").unwrap().re - 0.5).abs() <= 1e-12);
    }

    #[test]
    fn blocked_scenarios_keep_probe_sensitivity() {
        for kind in [ScenarioKind::BlockedB, ScenarioKind::BlockedC] {
            let at0 = run_scenario(kind, 0.0, &ScenarioOptions::default()).unwrap();
            let at02 = run_scenario(kind, 0.2, &ScenarioOptions::default()).unwrap();
            let delta = (at02.probe_stats.conditional("DP1").unwrap()
                - at0.probe_stats.conditional("DP1").unwrap())
            .abs();
            assert!(delta > 1e-3, "{kind}: ΔP(DP1|D) = {delta}");
        }
    }

    #[test]
    fn detuned_opens_the_dark_port() {
        let report =
            run_scenario(ScenarioKind::Detuned { delta: 0.1 }, 0.1, &ScenarioOptions::default())
                .unwrap();
        assert!(report.dark_mag > 0.0);
        assert!((report.p_select - 0.25).abs() > 1e-6);

        // First-order scaling: one decade in δ is one decade in dark_mag.
        let mags: Vec<f64> = [0.1, 0.01, 0.001]
            .iter()
            .map(|&delta| {
                run_scenario(ScenarioKind::Detuned { delta }, 0.1, &ScenarioOptions::default())
                    .unwrap()
                    .dark_mag
            })
            .collect();
        assert!(mags[0] > mags[1] && mags[1] > mags[2]);
        for pair in mags.windows(2) {
            let ratio = pair[0] / pair[1];
            assert!((8.0..=12.0).contains(&ratio), "ratio {ratio}");
        }
    }

    #[test]
    fn detuned_deviation_grows_with_detuning() {
        let mut last_dev = 0.0;
        let mut last_mag = 0.0;
        for i in 1..=10 {
            let delta = 0.05 * i as f64;
            let report =
                run_scenario(ScenarioKind::Detuned { delta }, 0.1, &ScenarioOptions::default())
                    .unwrap();
            let dev = (report.p_select - 0.25).abs();
            assert!(dev > last_dev, "deviation not monotone at δ = {delta}");
            assert!(report.dark_mag > last_mag, "dark_mag not monotone at δ = {delta}");
            last_dev = dev;
            last_mag = report.dark_mag;
        }
    }

    #[test]
    fn outer_arm_coupling_leaves_a_trace() {
        let opts = ScenarioOptions { eps_a: Some(0.3), ..Default::default() };
        let with_a = run_scenario(ScenarioKind::OuterArms, 0.0, &opts).unwrap();
        let without =
            run_scenario(ScenarioKind::OuterArms, 0.0, &ScenarioOptions::default()).unwrap();
        let shift = (with_a.probe_stats.conditional("DP1").unwrap()
            - without.probe_stats.conditional("DP1").unwrap())
        .abs();
        assert!(shift > 1e-3, "coupling on A must move the probe: {shift}");

        // With eps_a = 0, equal inner couplings leave no trace.
        let inner =
            run_scenario(ScenarioKind::OuterArms, 0.25, &ScenarioOptions::default()).unwrap();
        assert_abs_diff_eq!(
            inner.probe_stats.conditional("DP1").unwrap(),
            without.probe_stats.conditional("DP1").unwrap(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn report_key_value_block_is_deterministic() {
        let a = run_scenario(ScenarioKind::SingleArmB, 0.2, &ScenarioOptions::default()).unwrap();
        let b = run_scenario(ScenarioKind::SingleArmB, 0.2, &ScenarioOptions::default()).unwrap();
        assert_eq!(a.to_kv(), b.to_kv());
        let kv = a.to_kv();
        for key in [
            "scenario=single_arm_b",
            "p_select=",
            "dark_mag=",
            "cond.DP1=",
            "cond.DP2=",
            "s_imbalance=",
            "wv.A.re=",
            "response.full_dS_deps=",
        ] {
            assert!(kv.lines().any(|l| l.starts_with(key)), "missing {key} in:\n{kv}");
        }
    }

    #[test]
    fn options_are_rejected_on_the_wrong_kind() {
        let opts = ScenarioOptions { eps_a: Some(0.1), ..Default::default() };
        assert!(matches!(
            build_scenario(ScenarioKind::Nominal, 0.1, &opts),
            Err(Error::InvalidOptions(_))
        ));
        assert!(
            build_scenario(ScenarioKind::Nominal, f64::NAN, &ScenarioOptions::default()).is_err()
        );
    }

    #[test]
    fn dark_port_points_before_the_final_outer_splitter() {
        let circuit =
            build_scenario(ScenarioKind::Nominal, 0.1, &ScenarioOptions::default()).unwrap();
        let spec = dark_port(&circuit).unwrap();
        assert_eq!(spec.rail, "B");
        // The designated stage is the last system beam splitter, followed
        // only by the probe recombiner.
        assert!(matches!(
            &circuit.stages[spec.before_stage],
            Stage::BeamSplitter { rail_a, .. } if rail_a.subsystem == Subsystem::System
        ));
        assert_eq!(spec.before_stage, circuit.stages.len() - 2);
    }
}

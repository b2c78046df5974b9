//! Two-state-vector quantities: forward states, backward functionals, and
//! weak values of rail projectors at named cuts.
//!
//! Weak values are defined on the coupling-stripped, system-only circuit:
//! every Kerr stage and every probe-side stage is removed first. This makes
//! strength independence literally true — the report cannot depend on any
//! coupling parameter — and leaves the nontrivial physical claim (the probe's
//! first-order pointer response is proportional to the weak value) to
//! [`first_order_response_check`], which compares the full engine against an
//! effective single-phase model.
//!
//! The backward object is a linear functional (a row of the post-cut stage
//! product), not a conjugated ket: the coefficients `c_m` satisfy
//! `final detector amplitude = Σ_m c_m ψ_m(cut)`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;

use crate::engine::{evolve, post_select};
use crate::error::{Error, Result};
use crate::model::{
    bind_params, stage_matrix, Bindings, Circuit, ParamRef, RailId, Stage, Subsystem,
};
use crate::{fmt_f64, POST_SELECT_EPS};

/// True for stages that survive [`strip_couplings`].
fn retained(stage: &Stage) -> bool {
    match stage {
        Stage::Kerr { .. } => false,
        _ => stage.subsystem() != Some(Subsystem::Probe),
    }
}

/// Removes every Kerr stage and every probe-subsystem stage, preserving
/// system stages, cuts and detectors in order. Idempotent.
pub fn strip_couplings(circuit: &Circuit) -> Circuit {
    let mut stripped = circuit.clone();
    stripped.stages.retain(retained);
    stripped
}

/// System-factor matrix of a system-side (or cut) stage, extracted from the
/// joint matrix with the probe index held fixed. Valid because such stages
/// act as `U_sys ⊗ I_probe`.
fn system_factor(
    stage: &Stage,
    circuit: &Circuit,
    bindings: &Bindings,
) -> Result<DMatrix<Complex64>> {
    let joint = stage_matrix(stage, circuit, bindings)?;
    let ds = circuit.system_dim();
    let dp = circuit.probe_dim();
    Ok(DMatrix::from_fn(ds, ds, |i, j| joint[(i * dp, j * dp)]))
}

/// Forward state after the first `upto` stages of the (stripped) circuit,
/// on the system basis. Uses the circuit's default parameter values.
fn forward_state_at(
    stripped: &Circuit,
    upto: usize,
    bindings: &Bindings,
) -> Result<Vec<Complex64>> {
    let ds = stripped.system_dim();
    let mut psi = DMatrix::<Complex64>::zeros(ds, 1);
    let init = stripped.rail_index(&RailId::system(stripped.init_system.clone()))?;
    psi[(init, 0)] = Complex64::new(1.0, 0.0);
    for stage in &stripped.stages[..upto] {
        psi = system_factor(stage, stripped, bindings)? * psi;
    }
    Ok(psi.column(0).iter().copied().collect())
}

/// Coefficients `c_m` of the linear functional mapping the state at stage
/// boundary `from` to the final amplitude on the detector rail.
fn backward_row_at(
    stripped: &Circuit,
    from: usize,
    detector: &str,
    bindings: &Bindings,
) -> Result<Vec<Complex64>> {
    let det = stripped.detector(detector)?;
    if det.rail.subsystem != Subsystem::System {
        return Err(Error::UnknownDetector(format!("{detector} (not on system)")));
    }
    let ds = stripped.system_dim();
    let mut post = DMatrix::<Complex64>::identity(ds, ds);
    for stage in &stripped.stages[from..] {
        post = system_factor(stage, stripped, bindings)? * post;
    }
    let row = stripped.rail_index(&det.rail)?;
    Ok(post.row(row).iter().copied().collect())
}

/// Stage index within the stripped circuit corresponding to position `idx`
/// in the original stage list.
fn stripped_position(circuit: &Circuit, idx: usize) -> usize {
    circuit.stages[..idx].iter().filter(|s| retained(s)).count()
}

/// Forward-evolved system state at the named cut of the coupling-stripped
/// circuit: the product of stage matrices up to (not including) the cut,
/// applied to the system initial state.
pub fn forward_state(circuit: &Circuit, cut: &str) -> Result<Vec<Complex64>> {
    let stripped = strip_couplings(circuit);
    let pos = stripped.cut_index(cut)?;
    forward_state_at(&stripped, pos, &stripped.params)
}

/// Backward functional at the named cut for the given system detector.
pub fn backward_functional(circuit: &Circuit, cut: &str, detector: &str) -> Result<Vec<Complex64>> {
    let stripped = strip_couplings(circuit);
    let pos = stripped.cut_index(cut)?;
    backward_row_at(&stripped, pos, detector, &stripped.params)
}

fn overlap_of(forward: &[Complex64], backward: &[Complex64]) -> Complex64 {
    forward.iter().zip(backward).map(|(psi, c)| c * psi).sum()
}

/// Per-cut table of projector weak values, together with the post-selection
/// amplitude (`overlap`) and probability (`|overlap|²`).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeakValueReport {
    pub cut_label: String,
    pub postselect_detector: String,
    pub overlap: Complex64,
    /// One entry per system basis label in declaration order, sink last.
    pub weak_values: Vec<(String, Complex64)>,
    /// Whether Kerr couplings were removed from the input circuit.
    pub eps_stripped: bool,
}

impl WeakValueReport {
    pub fn weak_value(&self, rail: &str) -> Option<Complex64> {
        self.weak_values.iter().find(|(n, _)| n == rail).map(|(_, w)| *w)
    }

    pub fn sum(&self) -> Complex64 {
        self.weak_values.iter().map(|(_, w)| w).sum()
    }

    pub fn post_select_prob(&self) -> f64 {
        self.overlap.norm_sqr()
    }

    /// CSV rows `cut,detector,rail,wv_re,wv_im,overlap_re,overlap_im,p_select`,
    /// one per rail in basis order plus a final `sum` row.
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("cut,detector,rail,wv_re,wv_im,overlap_re,overlap_im,p_select\n");
        let p = self.post_select_prob();
        let mut row = |rail: &str, w: Complex64| {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                self.cut_label,
                self.postselect_detector,
                rail,
                fmt_f64(w.re),
                fmt_f64(w.im),
                fmt_f64(self.overlap.re),
                fmt_f64(self.overlap.im),
                fmt_f64(p),
            ));
        };
        for (rail, w) in &self.weak_values {
            row(rail, *w);
        }
        row("sum", self.sum());
        out
    }
}

struct CutData {
    forward: Vec<Complex64>,
    backward: Vec<Complex64>,
    overlap: Complex64,
    labels: Vec<String>,
    stripped: Circuit,
}

fn cut_data(circuit: &Circuit, cut: &str, detector: &str) -> Result<CutData> {
    let stripped = strip_couplings(circuit);
    let pos = stripped.cut_index(cut)?;
    let forward = forward_state_at(&stripped, pos, &stripped.params)?;
    let backward = backward_row_at(&stripped, pos, detector, &stripped.params)?;
    let overlap = overlap_of(&forward, &backward);
    if overlap.norm() <= POST_SELECT_EPS {
        return Err(Error::ZeroOverlap { cut: cut.into() });
    }
    let labels = stripped.basis_labels(Subsystem::System);
    Ok(CutData { forward, backward, overlap, labels, stripped })
}

/// Weak value of the projector onto one system rail (or `sink`) at the named
/// cut: `c_rail·ψ_rail / Σ_m c_m ψ_m` on the coupling-stripped circuit.
pub fn weak_value(circuit: &Circuit, cut: &str, detector: &str, rail: &str) -> Result<Complex64> {
    let data = cut_data(circuit, cut, detector)?;
    let idx = data.stripped.basis_index(Subsystem::System, rail)?;
    Ok(data.backward[idx] * data.forward[idx] / data.overlap)
}

/// Weak value of the union projector over a set of distinct rails, computed
/// directly as `Σ_{m∈set} c_m ψ_m / overlap`.
pub fn weak_value_union(
    circuit: &Circuit,
    cut: &str,
    detector: &str,
    rails: &[&str],
) -> Result<Complex64> {
    let data = cut_data(circuit, cut, detector)?;
    let mut sum = Complex64::new(0.0, 0.0);
    for rail in rails {
        let idx = data.stripped.basis_index(Subsystem::System, rail)?;
        sum += data.backward[idx] * data.forward[idx];
    }
    Ok(sum / data.overlap)
}

/// Weak values of every system rail (sink included) at the named cut.
pub fn weak_value_report(circuit: &Circuit, cut: &str, detector: &str) -> Result<WeakValueReport> {
    let data = cut_data(circuit, cut, detector)?;
    let weak_values = data
        .labels
        .iter()
        .enumerate()
        .map(|(i, label)| (label.clone(), data.backward[i] * data.forward[i] / data.overlap))
        .collect();
    Ok(WeakValueReport {
        cut_label: cut.into(),
        postselect_detector: detector.into(),
        overlap: data.overlap,
        weak_values,
        eps_stripped: circuit.stages.iter().any(|s| matches!(s, Stage::Kerr { .. })),
    })
}

/// Comparison of the probe's first-order pointer response computed two ways.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FirstOrderResponse {
    pub coupled_rails: Vec<String>,
    /// Sum of the coupled rails' weak values at the coupling position.
    pub weak_value_sum: Complex64,
    /// dS/dε at ε = 0 from the full joint evolution (central difference).
    pub full_derivative: f64,
    /// dS/dε at ε = 0 from the effective model: couplings replaced by one
    /// probe amplitude factor `e^{iεW}` on the coupled branch.
    pub effective_derivative: f64,
    pub difference: f64,
    /// Set when `|Im W| > 1e−10`; the effective factor is then genuinely
    /// non-unitary and conditionals are renormalized.
    pub non_real_warning: bool,
    pub step: f64,
}

/// Probe-only evolution for the effective model: probe stages apply as usual;
/// at `insert_at` the coupled rail is multiplied by `i` (the quadrature bias,
/// matching the bias stage inserted on the full side) and then by `factor`.
/// Conditionals are renormalized, which absorbs a non-unitary factor.
fn effective_imbalance(
    circuit: &Circuit,
    insert_at: usize,
    coupled_probe: usize,
    factor: Complex64,
) -> Result<f64> {
    let dp = circuit.probe_dim();
    let mut amps = vec![Complex64::new(0.0, 0.0); dp];
    let init = circuit.rail_index(&RailId::probe(circuit.init_probe.clone()))?;
    amps[init] = Complex64::new(1.0, 0.0);

    let bindings = &circuit.params;
    for (idx, stage) in circuit.stages.iter().enumerate() {
        if idx == insert_at {
            amps[coupled_probe] *= Complex64::new(0.0, 1.0) * factor;
        }
        match stage {
            Stage::BeamSplitter { rail_a, rail_b, transmittance }
                if rail_a.subsystem == Subsystem::Probe =>
            {
                let t = transmittance.resolve(bindings)?;
                let c = t.sqrt();
                let s = Complex64::new(0.0, (1.0 - t).sqrt());
                let ia = circuit.rail_index(rail_a)?;
                let ib = circuit.rail_index(rail_b)?;
                let (a, b) = (amps[ia], amps[ib]);
                amps[ia] = c * a + s * b;
                amps[ib] = s * a + c * b;
            }
            Stage::PhaseShift { rail, phi } if rail.subsystem == Subsystem::Probe => {
                let idx = circuit.rail_index(rail)?;
                amps[idx] *= Complex64::from_polar(1.0, phi.resolve(bindings)?);
            }
            Stage::Block { rail } if rail.subsystem == Subsystem::Probe => {
                let idx = circuit.rail_index(rail)?;
                let sink = circuit.sink_index(Subsystem::Probe).expect("block implies sinks");
                let moved = amps[idx];
                amps[idx] = Complex64::new(0.0, 0.0);
                amps[sink] += moved;
            }
            _ => {}
        }
    }

    let total: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
    let probs: Vec<f64> = circuit
        .detectors_on(Subsystem::Probe)
        .iter()
        .map(|d| circuit.rail_index(&d.rail).map(|i| amps[i].norm_sqr() / total))
        .collect::<Result<_>>()?;
    Ok(match probs.as_slice() {
        [a, b, ..] => a - b,
        [a] => *a,
        [] => 0.0,
    })
}

/// Checks the first-order pointer-response claim on one circuit.
///
/// The probe interferometer is biased to quadrature (an extra π/2 on the
/// coupled probe rail, inserted just before the first coupling) on both sides
/// of the comparison: at the default operating point the probe sits on a
/// fringe extremum and the deflection would be second order in ε, so the
/// derivative comparison would be vacuous.
///
/// `dS/dε` is taken at ε = 0 by central difference with step `eps_small`,
/// where ε scales every Kerr coupling on `coupled_rails` (their strength
/// parameters are bound to ±`eps_small`; they must be named parameters).
pub fn first_order_response_check(
    circuit: &Circuit,
    coupled_rails: &[&str],
    detector: &str,
    eps_small: f64,
) -> Result<FirstOrderResponse> {
    if eps_small == 0.0 {
        return Err(Error::DegenerateStep);
    }
    let det = circuit.detector(detector)?;
    if det.rail.subsystem != Subsystem::System {
        return Err(Error::InvalidOptions(
            "response check post-selects on a system detector".into(),
        ));
    }

    let kerrs: Vec<(usize, &RailId, &ParamRef)> = circuit
        .stages
        .iter()
        .enumerate()
        .filter_map(|(i, s)| match s {
            Stage::Kerr { system_rail, probe_rail, eps }
                if coupled_rails.contains(&system_rail.name.as_str()) =>
            {
                Some((i, probe_rail, eps))
            }
            _ => None,
        })
        .collect();
    if kerrs.is_empty() {
        return Err(Error::InvalidOptions("no Kerr couplings on the named rails".into()));
    }
    let coupled_probe_name = &kerrs[0].1.name;
    if kerrs.iter().any(|(_, p, _)| &p.name != coupled_probe_name) {
        return Err(Error::InvalidOptions(
            "couplings on the named rails target more than one probe rail".into(),
        ));
    }
    let mut param_names: Vec<String> = Vec::new();
    for (_, _, eps) in &kerrs {
        match eps {
            ParamRef::Named(name) => {
                if !param_names.contains(name) {
                    param_names.push(name.clone());
                }
            }
            ParamRef::Literal(_) => {
                return Err(Error::NonVariableCoupling(coupled_probe_name.clone()))
            }
        }
    }
    let first_kerr = kerrs[0].0;

    // Weak values of the coupled rails at the coupling position.
    let stripped = strip_couplings(circuit);
    let pos = stripped_position(circuit, first_kerr);
    let forward = forward_state_at(&stripped, pos, &stripped.params)?;
    let backward = backward_row_at(&stripped, pos, detector, &stripped.params)?;
    let overlap = overlap_of(&forward, &backward);
    if overlap.norm() <= POST_SELECT_EPS {
        return Err(Error::ZeroOverlap { cut: format!("coupling position (stage {first_kerr})") });
    }
    let mut weak_value_sum = Complex64::new(0.0, 0.0);
    for rail in coupled_rails {
        let idx = stripped.basis_index(Subsystem::System, rail)?;
        weak_value_sum += backward[idx] * forward[idx];
    }
    weak_value_sum /= overlap;
    let non_real_warning = weak_value_sum.im.abs() > 1e-10;

    // Full engine: quadrature bias stage inserted before the first coupling,
    // every coupled strength parameter bound to ±eps_small.
    let coupled_probe = RailId::probe(coupled_probe_name.clone());
    let mut biased = circuit.clone();
    biased.stages.insert(
        first_kerr,
        Stage::PhaseShift {
            rail: coupled_probe.clone(),
            phi: ParamRef::Literal(std::f64::consts::FRAC_PI_2),
        },
    );
    let full_imbalance = |eta: f64| -> Result<f64> {
        let overrides = param_names.iter().map(|n| (n.clone(), eta)).collect();
        let bindings = bind_params(&biased, &overrides)?;
        let trace = evolve(&biased, &bindings)?;
        Ok(post_select(&trace, Subsystem::System, detector)?.imbalance)
    };
    let h = eps_small;
    let full_derivative = (full_imbalance(h)? - full_imbalance(-h)?) / (2.0 * h);

    // Effective model: same bias, couplings replaced by e^{iεW} on the
    // coupled probe branch at the same position.
    let probe_idx = circuit.rail_index(&coupled_probe)?;
    let eff_imbalance = |eta: f64| -> Result<f64> {
        let factor = (Complex64::new(0.0, 1.0) * eta * weak_value_sum).exp();
        effective_imbalance(circuit, first_kerr, probe_idx, factor)
    };
    let effective_derivative = (eff_imbalance(h)? - eff_imbalance(-h)?) / (2.0 * h);

    Ok(FirstOrderResponse {
        coupled_rails: coupled_rails.iter().map(|s| s.to_string()).collect(),
        weak_value_sum,
        full_derivative,
        effective_derivative,
        difference: (full_derivative - effective_derivative).abs(),
        non_real_warning,
        step: eps_small,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios::{build_scenario, ScenarioKind, ScenarioOptions};
    use approx::assert_abs_diff_eq;

    fn nominal() -> Circuit {
        build_scenario(ScenarioKind::Nominal, 0.2, &ScenarioOptions::default()).unwrap()
    }

    fn assert_complex_eq(z: Complex64, re: f64, im: f64, tol: f64) {
        assert_abs_diff_eq!(z.re, re, epsilon = tol);
        assert_abs_diff_eq!(z.im, im, epsilon = tol);
    }

    #[test]
    fn strip_leaves_four_system_beam_splitters_and_the_cut() {
        let stripped = strip_couplings(&nominal());
        let kinds: Vec<&str> = stripped
            .stages
            .iter()
            .map(|s| match s {
                Stage::BeamSplitter { .. } => "bs",
                Stage::Cut { .. } => "cut",
                _ => "other",
            })
            .collect();
        assert_eq!(kinds, vec!["bs", "bs", "cut", "bs", "bs"]);
        assert!(stripped.stages.iter().all(|s| s.subsystem() != Some(Subsystem::Probe)));
    }

    #[test]
    fn strip_is_idempotent() {
        let circuit = nominal();
        let once = strip_couplings(&circuit);
        assert_eq!(strip_couplings(&once), once);
    }

    #[test]
    fn forward_state_at_inner_cut() {
        let psi = forward_state(&nominal(), "inner").unwrap();
        let r = 1.0 / 2f64.sqrt();
        assert_complex_eq(psi[0], r, 0.0, 1e-15); // A
        assert_complex_eq(psi[1], 0.0, 0.5, 1e-15); // B
        assert_complex_eq(psi[2], -0.5, 0.0, 1e-15); // C
        let norm: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
        assert_abs_diff_eq!(norm, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn forward_state_before_any_stage_is_initial() {
        let mut circuit = nominal();
        circuit.stages.insert(0, Stage::cut("start"));
        let psi = forward_state(&circuit, "start").unwrap();
        assert_complex_eq(psi[0], 1.0, 0.0, 0.0);
        assert_complex_eq(psi[1], 0.0, 0.0, 0.0);
    }

    #[test]
    fn backward_functional_at_inner_cut() {
        let c = backward_functional(&nominal(), "inner", "D").unwrap();
        let r = 1.0 / 2f64.sqrt();
        assert_complex_eq(c[0], r, 0.0, 1e-15); // A → D
        assert_complex_eq(c[1], 0.0, 0.5, 1e-15); // B → D
        assert_complex_eq(c[2], -0.5, 0.0, 1e-15); // C → D
    }

    #[test]
    fn backward_functional_after_last_stage_is_indicator() {
        let mut circuit = nominal();
        circuit.stages.push(Stage::cut("end"));
        let c = backward_functional(&circuit, "end", "D").unwrap();
        assert_complex_eq(c[0], 1.0, 0.0, 0.0);
        assert_complex_eq(c[1], 0.0, 0.0, 0.0);
        assert_complex_eq(c[2], 0.0, 0.0, 0.0);
    }

    #[test]
    fn functional_applied_to_forward_state_gives_detector_amplitude() {
        // Associativity of the stage product: c·ψ(cut) must equal the
        // full-circuit amplitude on the detector rail.
        let circuit = nominal();
        let psi = forward_state(&circuit, "inner").unwrap();
        let c = backward_functional(&circuit, "inner", "D").unwrap();
        let via_cut = overlap_of(&psi, &c);
        let full = forward_state_at(
            &strip_couplings(&circuit),
            strip_couplings(&circuit).stages.len(),
            &circuit.params,
        )
        .unwrap()[0];
        assert!((via_cut - full).norm() <= 1e-12);
    }

    #[test]
    fn weak_values_at_inner_cut() {
        let circuit = nominal();
        assert_complex_eq(weak_value(&circuit, "inner", "D", "A").unwrap(), 1.0, 0.0, 1e-12);
        assert_complex_eq(weak_value(&circuit, "inner", "D", "B").unwrap(), -0.5, 0.0, 1e-12);
        assert_complex_eq(weak_value(&circuit, "inner", "D", "C").unwrap(), 0.5, 0.0, 1e-12);
        let b = weak_value(&circuit, "inner", "D", "B").unwrap();
        let c = weak_value(&circuit, "inner", "D", "C").unwrap();
        assert!((b + c).norm() <= 1e-12);
    }

    #[test]
    fn dark_exit_leg_weak_value_is_zero() {
        let circuit = build_scenario(
            ScenarioKind::Nominal,
            0.2,
            &ScenarioOptions { boundary_cuts: true, ..Default::default() },
        )
        .unwrap();
        let w = weak_value(&circuit, "exit", "D", "B").unwrap();
        assert!(w.norm() <= 1e-12, "dark exit leg: {w}");
        let w = weak_value(&circuit, "entrance", "D", "B").unwrap();
        assert!(w.norm() <= 1e-12, "entrance leg: {w}");
    }

    #[test]
    fn report_sums_to_one_and_ignores_couplings() {
        let weak = weak_value_report(&nominal(), "inner", "D").unwrap();
        let sum = weak.sum();
        assert!((sum - Complex64::new(1.0, 0.0)).norm() <= 1e-10);
        assert!(weak.eps_stripped);

        let other =
            build_scenario(ScenarioKind::Nominal, 0.0, &ScenarioOptions::default()).unwrap();
        let weak0 = weak_value_report(&other, "inner", "D").unwrap();
        assert_eq!(weak.to_csv(), weak0.to_csv());
    }

    #[test]
    fn overlap_probability_matches_stripped_detector_probability() {
        let circuit = nominal();
        let weak = weak_value_report(&circuit, "inner", "D").unwrap();
        let stripped = strip_couplings(&circuit);
        let trace = evolve(&stripped, &stripped.params).unwrap();
        let p = crate::engine::detector_probability(&trace, "D").unwrap();
        assert_abs_diff_eq!(weak.post_select_prob(), p, epsilon = 1e-12);
    }

    #[test]
    fn zero_overlap_is_an_error() {
        let mut circuit = nominal();
        // Post-select on the probe-side? No: make the system detector dark by
        // blocking every inner path and arm A after the cut.
        circuit.stages.insert(5, Stage::block(Subsystem::System, "A"));
        circuit.stages.insert(6, Stage::block(Subsystem::System, "B"));
        circuit.stages.insert(7, Stage::block(Subsystem::System, "C"));
        let err = weak_value_report(&circuit, "inner", "D").unwrap_err();
        assert!(matches!(err, Error::ZeroOverlap { .. }));
    }

    #[test]
    fn response_check_rejects_zero_step() {
        let circuit = nominal();
        assert!(matches!(
            first_order_response_check(&circuit, &["B", "C"], "D", 0.0),
            Err(Error::DegenerateStep)
        ));
    }

    #[test]
    fn equal_couplings_cancel_to_first_order() {
        let record = first_order_response_check(&nominal(), &["B", "C"], "D", 1e-4).unwrap();
        assert!(record.weak_value_sum.norm() <= 1e-12);
        assert!(record.full_derivative.abs() <= 1e-10, "{}", record.full_derivative);
        assert!(record.effective_derivative.abs() <= 1e-10);
        assert!(!record.non_real_warning);
    }

    #[test]
    fn single_arm_response_matches_weak_value_model() {
        let circuit =
            build_scenario(ScenarioKind::SingleArmB, 0.0, &ScenarioOptions::default()).unwrap();
        let record = first_order_response_check(&circuit, &["B"], "D", 1e-4).unwrap();
        assert!(record.difference <= 1e-6, "difference {}", record.difference);
        assert!(record.full_derivative.abs() > 1e-3, "derivative {}", record.full_derivative);
        assert_complex_eq(record.weak_value_sum, -0.5, 0.0, 1e-12);
    }
}

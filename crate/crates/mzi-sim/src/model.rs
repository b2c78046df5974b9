//! Circuit data model: rails, stages, detectors, cuts and parameters, plus
//! the explicit matrix of every stage on the joint (system ⊗ probe) basis.
//!
//! The model is purely structural. Nothing here evolves a state; the engine
//! applies stages by direct amplitude updates and the dense matrices built by
//! [`stage_matrix`] serve as the independent reference route in tests.
//!
//! Conventions fixed by this crate:
//! - a beam splitter with transmittance `T` acts on its two rails as
//!   `out_a = √T·in_a + i√(1−T)·in_b`, `out_b = i√(1−T)·in_a + √T·in_b`
//!   (symmetric i-reflection form, unitary for all `T ∈ [0,1]`);
//! - all angles are radians, transmittance is a probability;
//! - a block moves amplitude to the subsystem sink rail, so the total norm
//!   is conserved and post-selection probabilities stay well defined.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};

/// Reserved name of the implicit absorber rail appended to each subsystem
/// when the circuit contains a block.
pub const SINK_NAME: &str = "sink";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum Subsystem {
    System,
    Probe,
}

impl Subsystem {
    pub fn label(self) -> &'static str {
        match self {
            Subsystem::System => "system",
            Subsystem::Probe => "probe",
        }
    }

    pub fn other(self) -> Subsystem {
        match self {
            Subsystem::System => Subsystem::Probe,
            Subsystem::Probe => Subsystem::System,
        }
    }
}

impl std::fmt::Display for Subsystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// A named path of one subsystem. Rails are static wire labels: a physical
/// path that passes through several elements keeps one rail name throughout.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RailId {
    pub subsystem: Subsystem,
    pub name: String,
}

impl RailId {
    pub fn system(name: impl Into<String>) -> Self {
        RailId { subsystem: Subsystem::System, name: name.into() }
    }

    pub fn probe(name: impl Into<String>) -> Self {
        RailId { subsystem: Subsystem::Probe, name: name.into() }
    }
}

/// A stage angle or ratio: either a literal value or a reference into the
/// circuit's parameter table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum ParamRef {
    Literal(f64),
    Named(String),
}

impl ParamRef {
    /// Looks the value up in `bindings` (literals resolve to themselves).
    pub fn resolve(&self, bindings: &Bindings) -> Result<f64> {
        match self {
            ParamRef::Literal(x) => Ok(*x),
            ParamRef::Named(name) => {
                bindings.get(name).copied().ok_or_else(|| Error::UnboundParameter(name.clone()))
            }
        }
    }
}

/// One element of the circuit's ordered stage list.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Stage {
    /// Two-rail coupler on one subsystem, `transmittance` in `[0, 1]`.
    BeamSplitter { rail_a: RailId, rail_b: RailId, transmittance: ParamRef },
    /// Multiplies one rail by `e^{i·phi}`.
    PhaseShift { rail: RailId, phi: ParamRef },
    /// Cross-phase coupler: multiplies exactly the joint basis state
    /// (`system_rail`, `probe_rail`) by `e^{i·eps}`.
    Kerr { system_rail: RailId, probe_rail: RailId, eps: ParamRef },
    /// Absorber: transfers all amplitude from the rail to the subsystem sink.
    Block { rail: RailId },
    /// Named marker for forward/backward state evaluation; acts as identity.
    Cut { label: String },
}

impl Stage {
    pub fn bs(subsystem: Subsystem, a: &str, b: &str, t: ParamRef) -> Stage {
        Stage::BeamSplitter {
            rail_a: RailId { subsystem, name: a.into() },
            rail_b: RailId { subsystem, name: b.into() },
            transmittance: t,
        }
    }

    pub fn phase(subsystem: Subsystem, rail: &str, phi: ParamRef) -> Stage {
        Stage::PhaseShift { rail: RailId { subsystem, name: rail.into() }, phi }
    }

    pub fn kerr(system_rail: &str, probe_rail: &str, eps: ParamRef) -> Stage {
        Stage::Kerr {
            system_rail: RailId::system(system_rail),
            probe_rail: RailId::probe(probe_rail),
            eps,
        }
    }

    pub fn block(subsystem: Subsystem, rail: &str) -> Stage {
        Stage::Block { rail: RailId { subsystem, name: rail.into() } }
    }

    pub fn cut(label: &str) -> Stage {
        Stage::Cut { label: label.into() }
    }

    /// Subsystem a single-subsystem stage acts on; `None` for kerr and cut.
    pub fn subsystem(&self) -> Option<Subsystem> {
        match self {
            Stage::BeamSplitter { rail_a, .. } => Some(rail_a.subsystem),
            Stage::PhaseShift { rail, .. } | Stage::Block { rail } => Some(rail.subsystem),
            Stage::Kerr { .. } | Stage::Cut { .. } => None,
        }
    }
}

/// A named detector watching one rail.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Detector {
    pub name: String,
    pub rail: RailId,
}

/// Resolved parameter values used for one evolution.
pub type Bindings = BTreeMap<String, f64>;

/// A complete two-subsystem circuit.
///
/// When any [`Stage::Block`] is present, an implicit sink rail is appended to
/// *both* subsystems; the sink is addressable in reports under the reserved
/// name `sink` but cannot be declared or referenced by stages.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Circuit {
    pub system_rails: Vec<String>,
    pub probe_rails: Vec<String>,
    pub init_system: String,
    pub init_probe: String,
    pub stages: Vec<Stage>,
    pub detectors: Vec<Detector>,
    pub params: BTreeMap<String, f64>,
}

impl Circuit {
    pub fn has_sinks(&self) -> bool {
        self.stages.iter().any(|s| matches!(s, Stage::Block { .. }))
    }

    pub fn rails(&self, subsystem: Subsystem) -> &[String] {
        match subsystem {
            Subsystem::System => &self.system_rails,
            Subsystem::Probe => &self.probe_rails,
        }
    }

    /// Basis size of one subsystem, sink included.
    pub fn dim(&self, subsystem: Subsystem) -> usize {
        self.rails(subsystem).len() + usize::from(self.has_sinks())
    }

    pub fn system_dim(&self) -> usize {
        self.dim(Subsystem::System)
    }

    pub fn probe_dim(&self) -> usize {
        self.dim(Subsystem::Probe)
    }

    pub fn joint_dim(&self) -> usize {
        self.system_dim() * self.probe_dim()
    }

    /// Flat joint index of (system basis index, probe basis index).
    pub fn joint_index(&self, s: usize, p: usize) -> usize {
        s * self.probe_dim() + p
    }

    /// Basis index of a declared rail within its subsystem.
    pub fn rail_index(&self, rail: &RailId) -> Result<usize> {
        self.rails(rail.subsystem)
            .iter()
            .position(|r| *r == rail.name)
            .ok_or_else(|| Error::UnknownRail(rail.name.clone()))
    }

    /// Sink basis index of the subsystem, if the circuit has sinks.
    pub fn sink_index(&self, subsystem: Subsystem) -> Option<usize> {
        self.has_sinks().then(|| self.rails(subsystem).len())
    }

    /// Basis index of a rail *or* the reserved name `sink`.
    pub fn basis_index(&self, subsystem: Subsystem, name: &str) -> Result<usize> {
        if name == SINK_NAME {
            return self.sink_index(subsystem).ok_or_else(|| Error::UnknownRail(name.into()));
        }
        self.rail_index(&RailId { subsystem, name: name.into() })
    }

    /// Basis labels of one subsystem in index order, sink last when present.
    pub fn basis_labels(&self, subsystem: Subsystem) -> Vec<String> {
        let mut labels = self.rails(subsystem).to_vec();
        if self.has_sinks() {
            labels.push(SINK_NAME.into());
        }
        labels
    }

    pub fn detector(&self, name: &str) -> Result<&Detector> {
        self.detectors
            .iter()
            .find(|d| d.name == name)
            .ok_or_else(|| Error::UnknownDetector(name.into()))
    }

    pub fn detectors_on(&self, subsystem: Subsystem) -> Vec<&Detector> {
        self.detectors.iter().filter(|d| d.rail.subsystem == subsystem).collect()
    }

    /// Stage index of the cut with the given label.
    pub fn cut_index(&self, label: &str) -> Result<usize> {
        self.stages
            .iter()
            .position(|s| matches!(s, Stage::Cut { label: l } if l == label))
            .ok_or_else(|| Error::UnknownCut(label.into()))
    }
}

/// Overlays `overrides` on the circuit's parameter defaults.
///
/// Every override must name a declared parameter; the error lists the valid
/// names so callers can surface a usable message.
pub fn bind_params(circuit: &Circuit, overrides: &BTreeMap<String, f64>) -> Result<Bindings> {
    let mut bound = circuit.params.clone();
    for (name, value) in overrides {
        if !bound.contains_key(name) {
            return Err(Error::UnknownParameter {
                name: name.clone(),
                valid: circuit.params.keys().cloned().collect(),
            });
        }
        bound.insert(name.clone(), *value);
    }
    Ok(bound)
}

/// One validation finding. `stage` is the offending stage index where the
/// rule concerns a stage; circuit-level findings leave it empty.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationIssue {
    pub stage: Option<usize>,
    pub rule: &'static str,
    pub message: String,
}

/// All findings for one circuit. Diagnostics are data, not failures.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub issues: Vec<ValidationIssue>,
}

impl ValidationReport {
    pub fn ok(&self) -> bool {
        self.issues.is_empty()
    }

    fn push(&mut self, stage: Option<usize>, rule: &'static str, message: String) {
        self.issues.push(ValidationIssue { stage, rule, message });
    }
}

fn valid_identifier(name: &str) -> bool {
    let mut chars = name.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic())
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Structural validation of a circuit. Returns `ok` or a list of diagnostics,
/// each naming the offending stage index and the violated rule.
pub fn validate_circuit(circuit: &Circuit) -> ValidationReport {
    let mut report = ValidationReport::default();
    let defaults = &circuit.params;

    for subsystem in [Subsystem::System, Subsystem::Probe] {
        let rails = circuit.rails(subsystem);
        if rails.is_empty() {
            report.push(None, "missing rails", format!("subsystem {subsystem} declares no rails"));
        }
        for (i, rail) in rails.iter().enumerate() {
            if !valid_identifier(rail) {
                report.push(None, "invalid rail name", format!("rail `{rail}` on {subsystem}"));
            }
            if rail == SINK_NAME {
                report.push(
                    None,
                    "reserved rail name",
                    format!("`{SINK_NAME}` is reserved for the implicit absorber on {subsystem}"),
                );
            }
            if rails[..i].contains(rail) {
                report.push(None, "duplicate rail", format!("rail `{rail}` on {subsystem}"));
            }
        }
    }

    for (init, subsystem) in
        [(&circuit.init_system, Subsystem::System), (&circuit.init_probe, Subsystem::Probe)]
    {
        if !circuit.rails(subsystem).contains(init) {
            report.push(None, "unknown rail", format!("init rail `{init}` on {subsystem}"));
        }
    }

    let check_rail = |report: &mut ValidationReport, idx: usize, rail: &RailId| {
        if !circuit.rails(rail.subsystem).contains(&rail.name) {
            report.push(
                Some(idx),
                "unknown rail",
                format!("rail `{}` on {}", rail.name, rail.subsystem),
            );
        }
    };
    let check_param = |report: &mut ValidationReport, idx: usize, p: &ParamRef| {
        if let ParamRef::Named(name) = p {
            if !defaults.contains_key(name) {
                report.push(Some(idx), "unresolved parameter", format!("parameter `{name}`"));
            }
        }
    };

    let mut cut_labels: Vec<&str> = Vec::new();
    for (idx, stage) in circuit.stages.iter().enumerate() {
        match stage {
            Stage::BeamSplitter { rail_a, rail_b, transmittance } => {
                check_rail(&mut report, idx, rail_a);
                check_rail(&mut report, idx, rail_b);
                if rail_a.subsystem != rail_b.subsystem {
                    report.push(
                        Some(idx),
                        "mixed subsystems",
                        "beam splitter rails must share a subsystem".into(),
                    );
                } else if rail_a.name == rail_b.name {
                    report.push(
                        Some(idx),
                        "identical rails",
                        "beam splitter rails must differ".into(),
                    );
                }
                check_param(&mut report, idx, transmittance);
                if let Ok(t) = transmittance.resolve(defaults) {
                    if !(0.0..=1.0).contains(&t) {
                        report.push(
                            Some(idx),
                            "transmittance out of range",
                            format!("T = {t} is outside [0, 1]"),
                        );
                    }
                }
            }
            Stage::PhaseShift { rail, phi } => {
                check_rail(&mut report, idx, rail);
                check_param(&mut report, idx, phi);
            }
            Stage::Kerr { system_rail, probe_rail, eps } => {
                if system_rail.subsystem != Subsystem::System {
                    report.push(Some(idx), "mixed subsystems", "kerr system rail".into());
                }
                if probe_rail.subsystem != Subsystem::Probe {
                    report.push(Some(idx), "mixed subsystems", "kerr probe rail".into());
                }
                check_rail(&mut report, idx, system_rail);
                check_rail(&mut report, idx, probe_rail);
                check_param(&mut report, idx, eps);
            }
            Stage::Block { rail } => check_rail(&mut report, idx, rail),
            Stage::Cut { label } => {
                if cut_labels.contains(&label.as_str()) {
                    report.push(Some(idx), "duplicate cut label", format!("cut `{label}`"));
                } else {
                    cut_labels.push(label);
                }
            }
        }
    }

    for (i, det) in circuit.detectors.iter().enumerate() {
        if !circuit.rails(det.rail.subsystem).contains(&det.rail.name) {
            report.push(
                None,
                "detector on unknown rail",
                format!("detector `{}` on rail `{}`", det.name, det.rail.name),
            );
        }
        if circuit.detectors[..i].iter().any(|d| d.name == det.name) {
            report.push(None, "duplicate detector", format!("detector `{}`", det.name));
        }
    }
    for subsystem in [Subsystem::System, Subsystem::Probe] {
        if circuit.detectors_on(subsystem).is_empty() {
            report.push(None, "missing detector", format!("no detector on {subsystem}"));
        }
    }

    for (name, value) in defaults {
        if !value.is_finite() {
            report.push(None, "non-finite parameter", format!("parameter `{name}` = {value}"));
        }
    }

    report
}

/// Dense matrix of one stage on the joint (system ⊗ probe) basis, sinks
/// included. Non-block stages are unitary; a block is an isometry sending
/// the blocked rail to the subsystem sink.
pub fn stage_matrix(
    stage: &Stage,
    circuit: &Circuit,
    bindings: &Bindings,
) -> Result<DMatrix<Complex64>> {
    let dim = circuit.joint_dim();
    let mut m = DMatrix::<Complex64>::identity(dim, dim);

    // Enumerates the joint indices spanned by one basis state of `subsystem`
    // crossed with every basis state of the other.
    let joint_pairs = |subsystem: Subsystem, own: usize| -> Vec<(usize, usize)> {
        let other_dim = circuit.dim(subsystem.other());
        (0..other_dim)
            .map(|o| match subsystem {
                Subsystem::System => (circuit.joint_index(own, o), o),
                Subsystem::Probe => (circuit.joint_index(o, own), o),
            })
            .collect()
    };

    match stage {
        Stage::BeamSplitter { rail_a, rail_b, transmittance } => {
            let t = transmittance.resolve(bindings)?;
            let ia = circuit.rail_index(rail_a)?;
            let ib = circuit.rail_index(rail_b)?;
            let c = Complex64::new(t.sqrt(), 0.0);
            let s = Complex64::new(0.0, (1.0 - t).sqrt());
            let subsystem = rail_a.subsystem;
            for ((ja, _), (jb, _)) in
                joint_pairs(subsystem, ia).into_iter().zip(joint_pairs(subsystem, ib))
            {
                m[(ja, ja)] = c;
                m[(ja, jb)] = s;
                m[(jb, ja)] = s;
                m[(jb, jb)] = c;
            }
        }
        Stage::PhaseShift { rail, phi } => {
            let phi = phi.resolve(bindings)?;
            let factor = Complex64::from_polar(1.0, phi);
            let idx = circuit.rail_index(rail)?;
            for (j, _) in joint_pairs(rail.subsystem, idx) {
                m[(j, j)] = factor;
            }
        }
        Stage::Kerr { system_rail, probe_rail, eps } => {
            let eps = eps.resolve(bindings)?;
            let s = circuit.rail_index(system_rail)?;
            let p = circuit.rail_index(probe_rail)?;
            let j = circuit.joint_index(s, p);
            m[(j, j)] = Complex64::from_polar(1.0, eps);
        }
        Stage::Block { rail } => {
            let idx = circuit.rail_index(rail)?;
            let sink =
                circuit.sink_index(rail.subsystem).expect("circuit with a block always has sinks");
            for (j, o) in joint_pairs(rail.subsystem, idx) {
                let js = match rail.subsystem {
                    Subsystem::System => circuit.joint_index(sink, o),
                    Subsystem::Probe => circuit.joint_index(o, sink),
                };
                m[(j, j)] = Complex64::new(0.0, 0.0);
                m[(js, j)] = Complex64::new(1.0, 0.0);
            }
        }
        Stage::Cut { .. } => {}
    }

    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::abs_diff_eq;
    use proptest::prelude::*;

    fn two_rail_circuit() -> Circuit {
        Circuit {
            system_rails: vec!["A".into(), "B".into()],
            probe_rails: vec!["P1".into()],
            init_system: "A".into(),
            init_probe: "P1".into(),
            stages: vec![],
            detectors: vec![
                Detector { name: "D".into(), rail: RailId::system("A") },
                Detector { name: "DP".into(), rail: RailId::probe("P1") },
            ],
            params: BTreeMap::new(),
        }
    }

    fn mat_approx_eq(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>, tol: f64) -> bool {
        a.iter().zip(b.iter()).all(|(x, y)| {
            abs_diff_eq!(x.re, y.re, epsilon = tol) && abs_diff_eq!(x.im, y.im, epsilon = tol)
        })
    }

    #[test]
    fn balanced_beam_splitter_matrix() {
        let circuit = two_rail_circuit();
        let stage = Stage::bs(Subsystem::System, "A", "B", ParamRef::Literal(0.5));
        let m = stage_matrix(&stage, &circuit, &Bindings::new()).unwrap();
        let r = 1.0 / 2f64.sqrt();
        let expected = DMatrix::from_row_slice(
            2,
            2,
            &[
                Complex64::new(r, 0.0),
                Complex64::new(0.0, r),
                Complex64::new(0.0, r),
                Complex64::new(r, 0.0),
            ],
        );
        assert!(mat_approx_eq(&m, &expected, 1e-15));
    }

    #[test]
    fn beam_splitter_extremes() {
        let circuit = two_rail_circuit();
        let id = stage_matrix(
            &Stage::bs(Subsystem::System, "A", "B", ParamRef::Literal(1.0)),
            &circuit,
            &Bindings::new(),
        )
        .unwrap();
        assert!(mat_approx_eq(&id, &DMatrix::identity(2, 2), 1e-15));

        let swap = stage_matrix(
            &Stage::bs(Subsystem::System, "A", "B", ParamRef::Literal(0.0)),
            &circuit,
            &Bindings::new(),
        )
        .unwrap();
        let i = Complex64::new(0.0, 1.0);
        let zero = Complex64::new(0.0, 0.0);
        let expected = DMatrix::from_row_slice(2, 2, &[zero, i, i, zero]);
        assert!(mat_approx_eq(&swap, &expected, 1e-15));
    }

    #[test]
    fn kerr_matrix_entries() {
        let mut circuit = two_rail_circuit();
        circuit.probe_rails = vec!["P1".into(), "P2".into()];
        let identity = stage_matrix(
            &Stage::kerr("B", "P1", ParamRef::Literal(0.0)),
            &circuit,
            &Bindings::new(),
        )
        .unwrap();
        assert!(mat_approx_eq(&identity, &DMatrix::identity(4, 4), 1e-15));

        let m = stage_matrix(
            &Stage::kerr("B", "P1", ParamRef::Literal(std::f64::consts::FRAC_PI_2)),
            &circuit,
            &Bindings::new(),
        )
        .unwrap();
        let j = circuit.joint_index(1, 0);
        for row in 0..4 {
            for col in 0..4 {
                let entry = m[(row, col)];
                if row == col {
                    if row == j {
                        assert!(abs_diff_eq!(entry.re, 0.0, epsilon = 1e-15));
                        assert!(abs_diff_eq!(entry.im, 1.0, epsilon = 1e-15));
                    } else {
                        assert_eq!(entry, Complex64::new(1.0, 0.0));
                    }
                } else {
                    assert_eq!(entry, Complex64::new(0.0, 0.0));
                }
            }
        }
    }

    #[test]
    fn block_matrix_is_isometry_from_declared_rails() {
        let mut circuit = two_rail_circuit();
        circuit.stages = vec![Stage::block(Subsystem::System, "B")];
        let m = stage_matrix(&circuit.stages[0], &circuit, &Bindings::new()).unwrap();
        // dims: (2 rails + sink) x (1 rail + sink) = 6
        assert_eq!(m.nrows(), 6);
        // Columns indexed by declared (non-sink) rails must be orthonormal.
        let declared: Vec<usize> = (0..circuit.system_rails.len())
            .flat_map(|s| (0..circuit.probe_rails.len()).map(move |p| (s, p)))
            .map(|(s, p)| circuit.joint_index(s, p))
            .collect();
        for &a in &declared {
            let ca = m.column(a);
            assert!(abs_diff_eq!(ca.norm(), 1.0, epsilon = 1e-12));
            for &b in &declared {
                if a != b {
                    let dot: Complex64 =
                        ca.iter().zip(m.column(b).iter()).map(|(x, y)| x.conj() * y).sum();
                    assert!(dot.norm() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn bind_params_overlays_and_rejects_unknown() {
        let mut circuit = two_rail_circuit();
        circuit.params.insert("EPS".into(), 0.0);

        let bound = bind_params(&circuit, &BTreeMap::from([("EPS".into(), 0.001)])).unwrap();
        assert_eq!(bound["EPS"], 0.001);

        let bound = bind_params(&circuit, &BTreeMap::new()).unwrap();
        assert_eq!(bound["EPS"], 0.0);

        let err = bind_params(&circuit, &BTreeMap::from([("XYZ".into(), 1.0)])).unwrap_err();
        match err {
            Error::UnknownParameter { name, valid } => {
                assert_eq!(name, "XYZ");
                assert_eq!(valid, vec!["EPS".to_string()]);
            }
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn validator_flags_out_of_range_transmittance() {
        let mut circuit = two_rail_circuit();
        circuit.stages = vec![Stage::bs(Subsystem::System, "A", "B", ParamRef::Literal(1.5))];
        let report = validate_circuit(&circuit);
        assert!(report
            .issues
            .iter()
            .any(|i| i.rule == "transmittance out of range" && i.stage == Some(0)));
    }

    #[test]
    fn validator_flags_unknown_rail() {
        let mut circuit = two_rail_circuit();
        circuit.stages = vec![Stage::phase(Subsystem::System, "X", ParamRef::Literal(0.1))];
        let report = validate_circuit(&circuit);
        assert!(report.issues.iter().any(|i| i.rule == "unknown rail" && i.stage == Some(0)));
    }

    #[test]
    fn validator_flags_unresolved_parameter_and_duplicate_cut() {
        let mut circuit = two_rail_circuit();
        circuit.stages = vec![
            Stage::phase(Subsystem::System, "A", ParamRef::Named("MISSING".into())),
            Stage::cut("c"),
            Stage::cut("c"),
        ];
        let report = validate_circuit(&circuit);
        assert!(report.issues.iter().any(|i| i.rule == "unresolved parameter"));
        assert!(report
            .issues
            .iter()
            .any(|i| i.rule == "duplicate cut label" && i.stage == Some(2)));
    }

    #[test]
    fn stage_matrix_is_deterministic() {
        let circuit = two_rail_circuit();
        let stage = Stage::bs(Subsystem::System, "A", "B", ParamRef::Literal(0.37));
        let a = stage_matrix(&stage, &circuit, &Bindings::new()).unwrap();
        let b = stage_matrix(&stage, &circuit, &Bindings::new()).unwrap();
        assert_eq!(a, b);
    }

    proptest! {
        // Every non-block stage matrix must satisfy ‖U†U − I‖_max ≤ 1e−12.
        #[test]
        fn non_block_stages_are_unitary(t in 0.0f64..=1.0, phi in -7.0f64..7.0, eps in -7.0f64..7.0) {
            let mut circuit = two_rail_circuit();
            circuit.probe_rails = vec!["P1".into(), "P2".into()];
            let stages = [
                Stage::bs(Subsystem::System, "A", "B", ParamRef::Literal(t)),
                Stage::bs(Subsystem::Probe, "P1", "P2", ParamRef::Literal(t)),
                Stage::phase(Subsystem::System, "B", ParamRef::Literal(phi)),
                Stage::kerr("A", "P2", ParamRef::Literal(eps)),
                Stage::cut("c"),
            ];
            for stage in &stages {
                let m = stage_matrix(stage, &circuit, &Bindings::new()).unwrap();
                let gram = m.adjoint() * &m;
                let id = DMatrix::<Complex64>::identity(gram.nrows(), gram.ncols());
                let max_dev = (&gram - &id).iter().map(|z| z.norm()).fold(0.0, f64::max);
                prop_assert!(max_dev <= 1e-12, "stage {stage:?}: deviation {max_dev}");
            }
        }
    }
}

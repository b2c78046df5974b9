//! State-vector evolution through a circuit, detector statistics and
//! post-selected conditional statistics, and parameter sweeps.
//!
//! The engine applies each stage as a direct amplitude update on the joint
//! vector; it never materializes stage matrices. The dense matrices from
//! [`crate::model::stage_matrix`] are the independent reference route used
//! by the test suite to check this module.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{bind_params, Bindings, Circuit, Stage, Subsystem};
use crate::{fmt_f64, POST_SELECT_EPS};

/// Complex amplitude vector over the joint (system rail × probe rail) basis,
/// sinks included. Norm 1 at every stage boundary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JointState {
    amps: Vec<Complex64>,
    system_dim: usize,
    probe_dim: usize,
}

impl JointState {
    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn amplitude(&self, system: usize, probe: usize) -> Complex64 {
        self.amps[system * self.probe_dim + probe]
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    /// Probability of finding the system photon on the given basis index,
    /// summed over the probe.
    pub fn system_prob(&self, system: usize) -> f64 {
        (0..self.probe_dim).map(|p| self.amplitude(system, p).norm_sqr()).sum()
    }

    /// Probability of finding the probe photon on the given basis index,
    /// summed over the system.
    pub fn probe_prob(&self, probe: usize) -> f64 {
        (0..self.system_dim).map(|s| self.amplitude(s, probe).norm_sqr()).sum()
    }

    /// Magnitude √(Σ over the other subsystem of |amplitude|²) carried by one
    /// basis index of `subsystem`.
    pub fn rail_magnitude(&self, subsystem: Subsystem, index: usize) -> f64 {
        match subsystem {
            Subsystem::System => self.system_prob(index).sqrt(),
            Subsystem::Probe => self.probe_prob(index).sqrt(),
        }
    }
}

/// One recorded stage boundary: the state after `stage_index` stages.
/// A cut stage at index `k` labels the boundary just before it, i.e. the
/// snapshot with `stage_index == k`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Snapshot {
    pub stage_index: usize,
    pub cut: Option<String>,
    pub state: JointState,
}

/// Full evolution record: one snapshot per stage boundary, snapshot 0 being
/// the initial state.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvolutionTrace {
    pub circuit: Circuit,
    pub bindings: Bindings,
    pub snapshots: Vec<Snapshot>,
}

impl EvolutionTrace {
    pub fn final_state(&self) -> &JointState {
        &self.snapshots.last().expect("trace has at least the initial snapshot").state
    }

    /// State at the boundary just before stage `index` (after `index` stages).
    pub fn before_stage(&self, index: usize) -> &JointState {
        &self.snapshots[index].state
    }

    pub fn at_cut(&self, label: &str) -> Result<&JointState> {
        self.snapshots
            .iter()
            .find(|s| s.cut.as_deref() == Some(label))
            .map(|s| &s.state)
            .ok_or_else(|| Error::UnknownCut(label.into()))
    }
}

/// Unit amplitude on (init_system, init_probe), zero elsewhere.
pub fn initial_state(circuit: &Circuit) -> JointState {
    let system_dim = circuit.system_dim();
    let probe_dim = circuit.probe_dim();
    let mut amps = vec![Complex64::new(0.0, 0.0); system_dim * probe_dim];
    let s = circuit
        .system_rails
        .iter()
        .position(|r| *r == circuit.init_system)
        .expect("validated circuit has a declared init rail");
    let p = circuit
        .probe_rails
        .iter()
        .position(|r| *r == circuit.init_probe)
        .expect("validated circuit has a declared init rail");
    amps[s * probe_dim + p] = Complex64::new(1.0, 0.0);
    JointState { amps, system_dim, probe_dim }
}

/// Indices of the joint vector sharing one basis state of `subsystem`,
/// ordered by the other subsystem's index.
fn lane(circuit: &Circuit, subsystem: Subsystem, own: usize) -> Vec<usize> {
    match subsystem {
        Subsystem::System => {
            (0..circuit.probe_dim()).map(|p| circuit.joint_index(own, p)).collect()
        }
        Subsystem::Probe => {
            (0..circuit.system_dim()).map(|s| circuit.joint_index(s, own)).collect()
        }
    }
}

fn apply_stage(
    state: &mut JointState,
    stage: &Stage,
    circuit: &Circuit,
    bindings: &Bindings,
) -> Result<()> {
    match stage {
        Stage::BeamSplitter { rail_a, rail_b, transmittance } => {
            let t = transmittance.resolve(bindings)?;
            let c = t.sqrt();
            let s = Complex64::new(0.0, (1.0 - t).sqrt());
            let subsystem = rail_a.subsystem;
            let ia = circuit.rail_index(rail_a)?;
            let ib = circuit.rail_index(rail_b)?;
            for (ja, jb) in
                lane(circuit, subsystem, ia).into_iter().zip(lane(circuit, subsystem, ib))
            {
                let a = state.amps[ja];
                let b = state.amps[jb];
                state.amps[ja] = c * a + s * b;
                state.amps[jb] = s * a + c * b;
            }
        }
        Stage::PhaseShift { rail, phi } => {
            let factor = Complex64::from_polar(1.0, phi.resolve(bindings)?);
            let idx = circuit.rail_index(rail)?;
            for j in lane(circuit, rail.subsystem, idx) {
                state.amps[j] *= factor;
            }
        }
        Stage::Kerr { system_rail, probe_rail, eps } => {
            let factor = Complex64::from_polar(1.0, eps.resolve(bindings)?);
            let s = circuit.rail_index(system_rail)?;
            let p = circuit.rail_index(probe_rail)?;
            let j = circuit.joint_index(s, p);
            state.amps[j] *= factor;
        }
        Stage::Block { rail } => {
            let idx = circuit.rail_index(rail)?;
            let sink = circuit.sink_index(rail.subsystem).expect("block implies sinks");
            for (j, js) in lane(circuit, rail.subsystem, idx).into_iter().zip(lane(
                circuit,
                rail.subsystem,
                sink,
            )) {
                let moved = state.amps[j];
                state.amps[j] = Complex64::new(0.0, 0.0);
                state.amps[js] += moved;
            }
        }
        Stage::Cut { .. } => {}
    }
    Ok(())
}

/// Applies every stage in order, recording a snapshot at each boundary.
pub fn evolve(circuit: &Circuit, bindings: &Bindings) -> Result<EvolutionTrace> {
    let mut state = initial_state(circuit);
    let mut snapshots = Vec::with_capacity(circuit.stages.len() + 1);

    let cut_at = |boundary: usize| -> Option<String> {
        match circuit.stages.get(boundary) {
            Some(Stage::Cut { label }) => Some(label.clone()),
            _ => None,
        }
    };

    snapshots.push(Snapshot { stage_index: 0, cut: cut_at(0), state: state.clone() });
    for (idx, stage) in circuit.stages.iter().enumerate() {
        apply_stage(&mut state, stage, circuit, bindings)?;
        snapshots.push(Snapshot {
            stage_index: idx + 1,
            cut: cut_at(idx + 1),
            state: state.clone(),
        });
    }

    Ok(EvolutionTrace { circuit: circuit.clone(), bindings: bindings.clone(), snapshots })
}

/// Probability that the named detector fires: Σ over the other subsystem of
/// |final amplitude|² on the detector's rail.
pub fn detector_probability(trace: &EvolutionTrace, detector: &str) -> Result<f64> {
    let det = trace.circuit.detector(detector)?;
    let idx = trace.circuit.rail_index(&det.rail)?;
    let state = trace.final_state();
    Ok(match det.rail.subsystem {
        Subsystem::System => state.system_prob(idx),
        Subsystem::Probe => state.probe_prob(idx),
    })
}

/// Conditional statistics of the non-selected subsystem given that the named
/// detector fired.
///
/// `conditionals` lists the other subsystem's detectors in declaration order;
/// `sink_prob` is the conditional probability of that subsystem's absorber
/// (zero when the circuit has no sinks), so that the per-rail conditional
/// distribution always sums to 1. `imbalance` is the difference between the
/// first two conditional entries (for the canonical circuits,
/// `P(DP1|sel) − P(DP2|sel)`).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionalProbeStats {
    pub post_select_prob: f64,
    pub conditionals: Vec<(String, f64)>,
    pub sink_prob: f64,
    pub imbalance: f64,
}

impl ConditionalProbeStats {
    pub fn conditional(&self, detector: &str) -> Option<f64> {
        self.conditionals.iter().find(|(n, _)| n == detector).map(|(_, p)| *p)
    }
}

/// Projects the final state onto the selected detector's rail, renormalizes,
/// and reports the other subsystem's conditional statistics.
///
/// Fails with [`Error::PostSelectionImpossible`] when the selection
/// probability is at or below [`POST_SELECT_EPS`]: conditionals and weak
/// values are undefined on a structurally dark detector.
pub fn post_select(
    trace: &EvolutionTrace,
    subsystem: Subsystem,
    detector: &str,
) -> Result<ConditionalProbeStats> {
    let circuit = &trace.circuit;
    let det = circuit.detector(detector)?;
    if det.rail.subsystem != subsystem {
        return Err(Error::UnknownDetector(format!("{detector} (not on {subsystem})")));
    }
    let det_idx = circuit.rail_index(&det.rail)?;
    let p_select = detector_probability(trace, detector)?;
    if p_select <= POST_SELECT_EPS {
        return Err(Error::PostSelectionImpossible { detector: detector.into(), prob: p_select });
    }

    let state = trace.final_state();
    let other = subsystem.other();
    let other_dim = circuit.dim(other);
    let per_rail: Vec<f64> = (0..other_dim)
        .map(|o| {
            let amp = match subsystem {
                Subsystem::System => state.amplitude(det_idx, o),
                Subsystem::Probe => state.amplitude(o, det_idx),
            };
            amp.norm_sqr() / p_select
        })
        .collect();

    let conditionals: Vec<(String, f64)> = circuit
        .detectors_on(other)
        .iter()
        .map(|d| {
            let idx = circuit.rail_index(&d.rail).expect("validated detector rail");
            (d.name.clone(), per_rail[idx])
        })
        .collect();
    let sink_prob = circuit.sink_index(other).map_or(0.0, |i| per_rail[i]);
    let imbalance = match conditionals.as_slice() {
        [(_, a), (_, b), ..] => a - b,
        [(_, a)] => *a,
        [] => 0.0,
    };

    Ok(ConditionalProbeStats { post_select_prob: p_select, conditionals, sink_prob, imbalance })
}

/// Where to read the dark-port magnitude: the named system rail at the state
/// boundary just before stage `before_stage`. Identified by the scenario
/// builder, never inferred.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DarkPortSpec {
    pub rail: String,
    pub before_stage: usize,
}

/// Magnitude carried by the dark-port rail at the specified boundary.
pub fn dark_port_magnitude(trace: &EvolutionTrace, spec: &DarkPortSpec) -> Result<f64> {
    let idx = trace.circuit.basis_index(Subsystem::System, &spec.rail)?;
    if spec.before_stage >= trace.snapshots.len() {
        return Err(Error::UnknownCut(format!("stage boundary {}", spec.before_stage)));
    }
    Ok(trace.before_stage(spec.before_stage).rail_magnitude(Subsystem::System, idx))
}

/// One sweep row: either the computed statistics or the error that stopped
/// this row (the sweep itself continues).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub value: f64,
    pub outcome: std::result::Result<SweepPoint, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub p_select: f64,
    /// `NaN` when the circuit carries no dark-port designation.
    pub dark_mag: f64,
    /// Conditional probability per reported detector, aligned with
    /// [`SweepResult::conditional_names`].
    pub conditionals: Vec<f64>,
    pub imbalance: f64,
}

/// Rows of a parameter sweep, in input order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub param: String,
    pub select: String,
    pub conditional_names: Vec<String>,
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    /// CSV per the fixed schema:
    /// `param,p_select,dark_mag,<one column per reported detector>,s_imbalance`,
    /// floats at 17 significant digits, rows in input order. Failed rows
    /// render `NaN` in every numeric column; the error stays on the row data.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("param,p_select,dark_mag");
        for name in &self.conditional_names {
            out.push(',');
            out.push_str(name);
        }
        out.push_str(",s_imbalance\n");
        for row in &self.rows {
            out.push_str(&fmt_f64(row.value));
            match &row.outcome {
                Ok(point) => {
                    out.push(',');
                    out.push_str(&fmt_f64(point.p_select));
                    out.push(',');
                    out.push_str(&fmt_f64(point.dark_mag));
                    for c in &point.conditionals {
                        out.push(',');
                        out.push_str(&fmt_f64(*c));
                    }
                    out.push(',');
                    out.push_str(&fmt_f64(point.imbalance));
                }
                Err(_) => {
                    for _ in 0..self.conditional_names.len() + 3 {
                        out.push_str(",NaN");
                    }
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Evaluates the circuit once per value of `param`, post-selecting on
/// `select`. Per-row failures are recorded on the row and the sweep
/// continues; rows come back in input order.
pub fn sweep(
    circuit: &Circuit,
    param: &str,
    values: &[f64],
    select: &str,
    dark_port: Option<&DarkPortSpec>,
) -> Result<SweepResult> {
    if !circuit.params.contains_key(param) {
        return Err(Error::UnknownParameter {
            name: param.into(),
            valid: circuit.params.keys().cloned().collect(),
        });
    }
    let select_subsystem = circuit.detector(select)?.rail.subsystem;
    let conditional_names: Vec<String> =
        circuit.detectors_on(select_subsystem.other()).iter().map(|d| d.name.clone()).collect();

    let rows = values
        .iter()
        .map(|&value| {
            let outcome = (|| -> Result<SweepPoint> {
                let overrides = std::collections::BTreeMap::from([(param.to_string(), value)]);
                let bindings = bind_params(circuit, &overrides)?;
                let trace = evolve(circuit, &bindings)?;
                let stats = post_select(&trace, select_subsystem, select)?;
                let dark_mag = match dark_port {
                    Some(spec) => dark_port_magnitude(&trace, spec)?,
                    None => f64::NAN,
                };
                Ok(SweepPoint {
                    p_select: stats.post_select_prob,
                    dark_mag,
                    conditionals: stats.conditionals.iter().map(|(_, p)| *p).collect(),
                    imbalance: stats.imbalance,
                })
            })()
            .map_err(|e| e.to_string());
            SweepRow { value, outcome }
        })
        .collect();

    Ok(SweepResult { param: param.into(), select: select.into(), conditional_names, rows })
}

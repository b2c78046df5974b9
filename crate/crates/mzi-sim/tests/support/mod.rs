//! Shared test support: the dense-matrix reference oracle and a random
//! circuit generator.
//!
//! The oracle is deliberately a different computation route from the engine:
//! it materializes every stage as an explicit dense matrix (via
//! `model::stage_matrix`), multiplies them into one full circuit matrix, and
//! applies that once to the initial vector. The engine never builds matrices.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use mzi_sim::model::{
    stage_matrix, Bindings, Circuit, Detector, ParamRef, RailId, Stage, Subsystem,
};

fn initial_vector(circuit: &Circuit) -> DVector<Complex64> {
    let mut v = DVector::zeros(circuit.joint_dim());
    let s = circuit
        .system_rails
        .iter()
        .position(|r| *r == circuit.init_system)
        .expect("init rail declared");
    let p = circuit
        .probe_rails
        .iter()
        .position(|r| *r == circuit.init_probe)
        .expect("init rail declared");
    v[circuit.joint_index(s, p)] = Complex64::new(1.0, 0.0);
    v
}

/// Product of the first `upto` stage matrices, as one dense matrix.
pub fn partial_circuit_matrix(
    circuit: &Circuit,
    bindings: &Bindings,
    upto: usize,
) -> DMatrix<Complex64> {
    let dim = circuit.joint_dim();
    let mut u = DMatrix::identity(dim, dim);
    for stage in &circuit.stages[..upto] {
        u = stage_matrix(stage, circuit, bindings).expect("stage matrix") * u;
    }
    u
}

/// State after the first `upto` stages, computed by the single application of
/// the materialized product matrix.
pub fn oracle_state_after(circuit: &Circuit, bindings: &Bindings, upto: usize) -> Vec<Complex64> {
    let u = partial_circuit_matrix(circuit, bindings, upto);
    (u * initial_vector(circuit)).iter().copied().collect()
}

pub fn oracle_final_state(circuit: &Circuit, bindings: &Bindings) -> Vec<Complex64> {
    oracle_state_after(circuit, bindings, circuit.stages.len())
}

/// Oracle probability of a detector: Σ over the other subsystem's basis of
/// |final amplitude|² on the detector's rail.
pub fn oracle_detector_probability(circuit: &Circuit, bindings: &Bindings, detector: &str) -> f64 {
    let state = oracle_final_state(circuit, bindings);
    let det = circuit.detector(detector).expect("detector declared");
    let idx = circuit.rail_index(&det.rail).expect("detector rail declared");
    match det.rail.subsystem {
        Subsystem::System => {
            (0..circuit.probe_dim()).map(|p| state[circuit.joint_index(idx, p)].norm_sqr()).sum()
        }
        Subsystem::Probe => {
            (0..circuit.system_dim()).map(|s| state[circuit.joint_index(s, idx)].norm_sqr()).sum()
        }
    }
}

/// Largest per-amplitude deviation between two joint states.
pub fn max_amplitude_deviation(a: &[Complex64], b: &[Complex64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

/// A random two-subsystem circuit: 3–6 system rails, 2–3 probe rails, random
/// beam splitters (T ∈ [0.1, 0.9]), phases, Kerr couplings, at most one block
/// per subsystem, one cut labelled `mid`, detectors on a system rail and two
/// probe rails. All stage values are literals.
pub fn random_circuit(rng: &mut ChaCha8Rng, allow_blocks: bool) -> Circuit {
    let n_sys: usize = rng.gen_range(3..=6);
    let n_probe: usize = rng.gen_range(2..=3);
    let system_rails: Vec<String> = (0..n_sys).map(|i| format!("S{i}")).collect();
    let probe_rails: Vec<String> = (0..n_probe).map(|i| format!("Q{i}")).collect();

    let mut stages: Vec<Stage> = Vec::new();
    let n_stages = rng.gen_range(4..=10);
    let mut blocks_left = [usize::from(allow_blocks); 2];
    for _ in 0..n_stages {
        let pick_sys = |rng: &mut ChaCha8Rng| format!("S{}", rng.gen_range(0..n_sys));
        let pick_probe = |rng: &mut ChaCha8Rng| format!("Q{}", rng.gen_range(0..n_probe));
        let roll: f64 = rng.gen();
        let stage = if roll < 0.35 {
            let a = rng.gen_range(0..n_sys);
            let b = (a + rng.gen_range(1..n_sys)) % n_sys;
            Stage::bs(
                Subsystem::System,
                &format!("S{a}"),
                &format!("S{b}"),
                ParamRef::Literal(rng.gen_range(0.1..=0.9)),
            )
        } else if roll < 0.55 {
            let a = rng.gen_range(0..n_probe);
            let b = (a + rng.gen_range(1..n_probe)) % n_probe;
            Stage::bs(
                Subsystem::Probe,
                &format!("Q{a}"),
                &format!("Q{b}"),
                ParamRef::Literal(rng.gen_range(0.1..=0.9)),
            )
        } else if roll < 0.75 {
            let subsystem = if rng.gen() { Subsystem::System } else { Subsystem::Probe };
            let rail = match subsystem {
                Subsystem::System => pick_sys(rng),
                Subsystem::Probe => pick_probe(rng),
            };
            Stage::phase(
                subsystem,
                &rail,
                ParamRef::Literal(rng.gen_range(0.0..std::f64::consts::TAU)),
            )
        } else if roll < 0.92 || blocks_left == [0, 0] {
            Stage::kerr(
                &pick_sys(rng),
                &pick_probe(rng),
                ParamRef::Literal(rng.gen_range(0.0..0.5)),
            )
        } else {
            let side = usize::from(blocks_left[0] == 0 || (blocks_left[1] > 0 && rng.gen()));
            blocks_left[side] -= 1;
            match side {
                0 => Stage::block(Subsystem::System, &pick_sys(rng)),
                _ => Stage::block(Subsystem::Probe, &pick_probe(rng)),
            }
        };
        stages.push(stage);
    }
    let cut_pos = rng.gen_range(0..=stages.len());
    stages.insert(cut_pos, Stage::cut("mid"));

    let det_sys = rng.gen_range(0..n_sys);
    let det_probe = rng.gen_range(0..n_probe);
    Circuit {
        init_system: format!("S{}", rng.gen_range(0..n_sys)),
        init_probe: format!("Q{}", rng.gen_range(0..n_probe)),
        system_rails,
        probe_rails,
        stages,
        detectors: vec![
            Detector { name: "DS".into(), rail: RailId::system(format!("S{det_sys}")) },
            Detector { name: "DPA".into(), rail: RailId::probe(format!("Q{det_probe}")) },
            Detector {
                name: "DPB".into(),
                rail: RailId::probe(format!("Q{}", (det_probe + 1) % n_probe)),
            },
        ],
        params: Default::default(),
    }
}

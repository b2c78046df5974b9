//! Browser bindings for the nested-MZI simulator.
//!
//! Thin wasm-bindgen wrappers around the core crate, exchanging JSON strings
//! with the static page in `www/`. Three interactive operations: scenario
//! reports, parameter sweeps, and running user-edited circuit files.
//!
//! All logic lives in [`app`] with plain `String` errors so it can be unit
//! tested on the host; `JsValue` exists only at the export boundary.

use wasm_bindgen::prelude::*;

pub mod app {
    use serde::Serialize;

    use mzi_sim::circuitfile::{parse_detailed, serialize};
    use mzi_sim::engine::{
        dark_port_magnitude, detector_probability, evolve, post_select, sweep, DarkPortSpec,
    };
    use mzi_sim::model::{validate_circuit, Circuit, Subsystem};
    use mzi_sim::scenarios::{build_scenario, dark_port, ScenarioKind, ScenarioOptions};
    use mzi_sim::tsvf::{first_order_response_check, weak_value_report};
    use num_complex::Complex64;

    type Result<T> = std::result::Result<T, String>;

    #[derive(Serialize)]
    struct ComplexDto {
        re: f64,
        im: f64,
    }

    impl From<Complex64> for ComplexDto {
        fn from(z: Complex64) -> Self {
            ComplexDto { re: z.re, im: z.im }
        }
    }

    #[derive(Serialize)]
    struct WeakValueDto {
        rail: String,
        value: ComplexDto,
    }

    #[derive(Serialize)]
    struct ResponseDto {
        weak_value_sum: ComplexDto,
        full_derivative: f64,
        effective_derivative: f64,
        difference: f64,
    }

    #[derive(Serialize)]
    struct ReportDto {
        scenario: Option<String>,
        select: String,
        bindings: Vec<(String, f64)>,
        p_select: f64,
        dark_mag: Option<f64>,
        conditionals: Vec<(String, f64)>,
        sink_prob: f64,
        imbalance: f64,
        overlap: Option<ComplexDto>,
        weak_values: Vec<WeakValueDto>,
        response: Option<ResponseDto>,
    }

    #[derive(Serialize)]
    struct DiagnosticDto {
        line: usize,
        col: usize,
        message: String,
    }

    #[derive(Serialize)]
    #[serde(tag = "status", rename_all = "snake_case")]
    enum CircuitRunDto {
        Ok { report: Box<ReportDto> },
        Invalid { diagnostics: Vec<DiagnosticDto> },
    }

    #[derive(Serialize)]
    struct SweepRowDto {
        value: f64,
        p_select: Option<f64>,
        dark_mag: Option<f64>,
        conditionals: Vec<f64>,
        imbalance: Option<f64>,
        error: Option<String>,
    }

    #[derive(Serialize)]
    struct SweepDto {
        param: String,
        select: String,
        conditional_names: Vec<String>,
        rows: Vec<SweepRowDto>,
    }

    fn err<T>(e: impl std::fmt::Display) -> Result<T> {
        Err(e.to_string())
    }

    fn kind_of(name: &str, delta: f64) -> Result<ScenarioKind> {
        ScenarioKind::from_name(name, delta).ok_or_else(|| format!("unknown scenario `{name}`"))
    }

    fn scenario_circuit(name: &str, eps: f64, delta: f64, eps_a: f64) -> Result<Circuit> {
        let kind = kind_of(name, delta)?;
        let options = ScenarioOptions {
            eps_a: matches!(kind, ScenarioKind::OuterArms).then_some(eps_a),
            ..Default::default()
        };
        build_scenario(kind, eps, &options).or_else(err)
    }

    fn report_of(
        circuit: &Circuit,
        scenario: Option<ScenarioKind>,
        select: &str,
        dark: Option<&DarkPortSpec>,
    ) -> Result<ReportDto> {
        let select_subsystem = circuit.detector(select).or_else(err)?.rail.subsystem;
        let trace = evolve(circuit, &circuit.params).or_else(err)?;
        let p_select = detector_probability(&trace, select).or_else(err)?;
        let stats = post_select(&trace, select_subsystem, select).or_else(err)?;
        let dark_mag = match dark {
            Some(spec) => Some(dark_port_magnitude(&trace, spec).or_else(err)?),
            None => None,
        };

        let weak = if circuit.cut_index("inner").is_ok() && select_subsystem == Subsystem::System {
            Some(weak_value_report(circuit, "inner", select).or_else(err)?)
        } else {
            None
        };

        let coupled: Option<&[&str]> = match scenario {
            Some(ScenarioKind::Nominal) => Some(&["B", "C"]),
            Some(ScenarioKind::SingleArmB) => Some(&["B"]),
            Some(ScenarioKind::SingleArmC) => Some(&["C"]),
            _ => None,
        };
        let response = match (coupled, select_subsystem) {
            (Some(rails), Subsystem::System) => {
                let r = first_order_response_check(circuit, rails, select, 1e-4).or_else(err)?;
                Some(ResponseDto {
                    weak_value_sum: r.weak_value_sum.into(),
                    full_derivative: r.full_derivative,
                    effective_derivative: r.effective_derivative,
                    difference: r.difference,
                })
            }
            _ => None,
        };

        Ok(ReportDto {
            scenario: scenario.map(|k| k.name().to_string()),
            select: select.to_string(),
            bindings: circuit.params.iter().map(|(k, v)| (k.clone(), *v)).collect(),
            p_select,
            dark_mag,
            conditionals: stats.conditionals,
            sink_prob: stats.sink_prob,
            imbalance: stats.imbalance,
            overlap: weak.as_ref().map(|w| w.overlap.into()),
            weak_values: weak
                .map(|w| {
                    w.weak_values
                        .into_iter()
                        .map(|(rail, value)| WeakValueDto { rail, value: value.into() })
                        .collect()
                })
                .unwrap_or_default(),
            response,
        })
    }

    pub fn scenario_report_json(
        scenario: &str,
        eps: f64,
        delta: f64,
        eps_a: f64,
        select: &str,
    ) -> Result<String> {
        let kind = kind_of(scenario, delta)?;
        let circuit = scenario_circuit(scenario, eps, delta, eps_a)?;
        let dark = dark_port(&circuit);
        let report = report_of(&circuit, Some(kind), select, dark.as_ref())?;
        serde_json::to_string(&report).or_else(err)
    }

    #[allow(clippy::too_many_arguments)]
    pub fn sweep_json(
        scenario: &str,
        eps: f64,
        delta: f64,
        eps_a: f64,
        param: &str,
        from: f64,
        to: f64,
        steps: usize,
        select: &str,
    ) -> Result<String> {
        if steps < 1 {
            return Err("steps must be at least 1".into());
        }
        let circuit = scenario_circuit(scenario, eps, delta, eps_a)?;
        let dark = dark_port(&circuit);
        let values: Vec<f64> = if steps == 1 {
            vec![from]
        } else {
            (0..steps).map(|i| from + (to - from) * i as f64 / (steps - 1) as f64).collect()
        };
        let result = sweep(&circuit, param, &values, select, dark.as_ref()).or_else(err)?;
        let dto = SweepDto {
            param: result.param,
            select: result.select,
            conditional_names: result.conditional_names,
            rows: result
                .rows
                .into_iter()
                .map(|row| match row.outcome {
                    Ok(p) => SweepRowDto {
                        value: row.value,
                        p_select: Some(p.p_select),
                        dark_mag: p.dark_mag.is_finite().then_some(p.dark_mag),
                        conditionals: p.conditionals,
                        imbalance: Some(p.imbalance),
                        error: None,
                    },
                    Err(e) => SweepRowDto {
                        value: row.value,
                        p_select: None,
                        dark_mag: None,
                        conditionals: vec![],
                        imbalance: None,
                        error: Some(e),
                    },
                })
                .collect(),
        };
        serde_json::to_string(&dto).or_else(err)
    }

    pub fn run_circuit_json(text: &str, select: &str) -> Result<String> {
        let dto = match parse_detailed(text) {
            Err(errors) => CircuitRunDto::Invalid {
                diagnostics: errors
                    .iter()
                    .map(|e| DiagnosticDto {
                        line: e.span.line,
                        col: e.span.col_start,
                        message: e.message.clone(),
                    })
                    .collect(),
            },
            Ok(parsed) => {
                let report = validate_circuit(&parsed.circuit);
                if report.ok() {
                    CircuitRunDto::Ok {
                        report: Box::new(report_of(&parsed.circuit, None, select, None)?),
                    }
                } else {
                    CircuitRunDto::Invalid {
                        diagnostics: report
                            .issues
                            .iter()
                            .map(|issue| {
                                let span =
                                    issue.stage.and_then(|i| parsed.stage_spans.get(i)).copied();
                                DiagnosticDto {
                                    line: span.map_or(1, |s| s.line),
                                    col: span.map_or(1, |s| s.col_start),
                                    message: format!("{} ({})", issue.message, issue.rule),
                                }
                            })
                            .collect(),
                    }
                }
            }
        };
        serde_json::to_string(&dto).or_else(err)
    }

    pub fn scenario_source(scenario: &str, eps: f64, delta: f64, eps_a: f64) -> Result<String> {
        Ok(serialize(&scenario_circuit(scenario, eps, delta, eps_a)?))
    }
}

/// Full post-selected report for one scenario, as JSON.
#[wasm_bindgen]
pub fn scenario_report_json(
    scenario: &str,
    eps: f64,
    delta: f64,
    eps_a: f64,
    select: &str,
) -> Result<String, JsValue> {
    app::scenario_report_json(scenario, eps, delta, eps_a, select).map_err(into_js)
}

/// Sweep one scenario parameter over an inclusive linear grid, as JSON rows.
#[allow(clippy::too_many_arguments)]
#[wasm_bindgen]
pub fn sweep_json(
    scenario: &str,
    eps: f64,
    delta: f64,
    eps_a: f64,
    param: &str,
    from: f64,
    to: f64,
    steps: usize,
    select: &str,
) -> Result<String, JsValue> {
    app::sweep_json(scenario, eps, delta, eps_a, param, from, to, steps, select).map_err(into_js)
}

/// Parses, validates and runs a user-edited circuit file. Malformed input
/// comes back as positioned diagnostics in the JSON, not an exception.
#[wasm_bindgen]
pub fn run_circuit_json(text: &str, select: &str) -> Result<String, JsValue> {
    app::run_circuit_json(text, select).map_err(into_js)
}

/// Canonical `.mzc` source of a scenario, for preloading the editor.
#[wasm_bindgen]
pub fn scenario_source(
    scenario: &str,
    eps: f64,
    delta: f64,
    eps_a: f64,
) -> Result<String, JsValue> {
    app::scenario_source(scenario, eps, delta, eps_a).map_err(into_js)
}

fn into_js(e: String) -> JsValue {
    JsValue::from_str(&e)
}

//! JSON file formats for target states, correlation tables and reports.

use std::io::Write;
use std::path::Path;

use indexmap::IndexMap;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::experiment::{decode, encode, Behavior, Row, Scenario, Variant};
use crate::tensor::{PureState, SiteLayout};
use crate::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;
const NORM_SLACK: f64 = 1e-6;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StateFile {
    pub schema_version: u32,
    pub local_dims: Vec<usize>,
    pub amplitudes: Vec<[f64; 2]>,
}

#[derive(Clone, Debug)]
pub struct LoadedState {
    pub state: PureState,
    /// Set when the amplitudes were renormalized.
    pub warning: Option<String>,
}

fn check_version(v: u32) -> Result<()> {
    if v != SCHEMA_VERSION {
        return Err(Error::Schema(format!("unsupported schema_version {v} (expected {SCHEMA_VERSION})")));
    }
    Ok(())
}

pub fn state_from_file(file: &StateFile) -> Result<LoadedState> {
    check_version(file.schema_version)?;
    let layout = SiteLayout::new(file.local_dims.clone()).map_err(|e| Error::Schema(e.to_string()))?;
    if file.amplitudes.len() != layout.total_dim() {
        return Err(Error::Schema(format!(
            "{} amplitudes for local dimensions {:?}",
            file.amplitudes.len(),
            file.local_dims
        )));
    }
    let amps: Vec<C64> = file.amplitudes.iter().map(|[re, im]| C64::new(*re, *im)).collect();
    let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > NORM_SLACK {
        return Err(Error::Schema(format!("state norm {norm} is not within {NORM_SLACK:e} of 1")));
    }
    if (norm - 1.0).abs() <= 1e-12 {
        return Ok(LoadedState { state: PureState::new(layout, amps)?, warning: None });
    }
    Ok(LoadedState {
        state: PureState::normalize(layout, amps)?,
        warning: Some(format!("renormalized state with norm {norm}")),
    })
}

pub fn state_to_file(psi: &PureState) -> StateFile {
    StateFile {
        schema_version: SCHEMA_VERSION,
        local_dims: psi.layout().dims().to_vec(),
        amplitudes: psi.amplitudes().iter().map(|a| [a.re, a.im]).collect(),
    }
}

pub fn parse_state(text: &str) -> Result<LoadedState> {
    let file: StateFile = serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
    state_from_file(&file)
}

pub fn load_state(path: &Path) -> Result<LoadedState> {
    parse_state(&std::fs::read_to_string(path)?)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub variant: Variant,
    #[serde(rename = "N")]
    pub n: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RowSpec {
    pub inputs: Vec<String>,
    /// Outcome labels joined by ',' mapped to probabilities; absent outcomes have probability 0.
    pub outcomes: IndexMap<String, f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BehaviorFile {
    pub schema_version: u32,
    pub scenario: ScenarioSpec,
    pub rows: Vec<RowSpec>,
}

pub fn behavior_to_file(b: &Behavior) -> BehaviorFile {
    let s = b.scenario();
    let rows = b
        .rows()
        .iter()
        .map(|row| {
            let radices = s.outcome_radices(&row.inputs);
            let labels: Vec<Vec<String>> = row
                .inputs
                .iter()
                .enumerate()
                .map(|(p, &x)| (0..s.outcome_count(p, x)).map(|o| s.outcome_label(p, x, o)).collect())
                .collect();
            let outcomes = row
                .probs
                .iter()
                .enumerate()
                .map(|(idx, &p)| {
                    let digits = decode(&radices, idx);
                    let key: Vec<&str> = digits.iter().enumerate().map(|(q, &o)| labels[q][o].as_str()).collect();
                    (key.join(","), p)
                })
                .collect();
            RowSpec { inputs: row.inputs.iter().enumerate().map(|(p, &x)| s.input_label(p, x)).collect(), outcomes }
        })
        .collect();
    BehaviorFile { schema_version: SCHEMA_VERSION, scenario: ScenarioSpec { variant: s.variant, n: s.n }, rows }
}

pub fn behavior_from_file(file: &BehaviorFile) -> Result<Behavior> {
    check_version(file.schema_version)?;
    let s = Scenario::new(file.scenario.variant, file.scenario.n)?;
    let mut rows = Vec::with_capacity(file.rows.len());
    for spec in &file.rows {
        if spec.inputs.len() != s.num_parties() {
            return Err(Error::Alphabet(format!(
                "row with {} inputs for {} parties",
                spec.inputs.len(),
                s.num_parties()
            )));
        }
        let inputs: Vec<usize> =
            spec.inputs.iter().enumerate().map(|(p, l)| s.parse_input(p, l)).collect::<Result<_>>()?;
        let radices = s.outcome_radices(&inputs);
        let mut probs = vec![0.0; radices.iter().product()];
        for (key, &p) in &spec.outcomes {
            let parts: Vec<&str> = key.split(',').collect();
            if parts.len() != radices.len() {
                return Err(Error::Alphabet(format!("outcome key '{key}'")));
            }
            let digits: Vec<usize> =
                parts.iter().enumerate().map(|(q, l)| s.parse_outcome(q, inputs[q], l)).collect::<Result<_>>()?;
            probs[encode(&radices, &digits)] = p;
        }
        rows.push(Row { inputs, probs });
    }
    Behavior::new(s, rows)
}

pub fn write_behavior<W: Write>(writer: W, b: &Behavior) -> Result<()> {
    serde_json::to_writer(writer, &behavior_to_file(b))?;
    Ok(())
}

pub fn parse_behavior(text: &str) -> Result<Behavior> {
    let file: BehaviorFile = serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
    behavior_from_file(&file)
}

pub fn load_behavior(path: &Path) -> Result<Behavior> {
    parse_behavior(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::reference_behavior;
    use crate::states::phase_bell;

    #[test]
    fn state_roundtrip_and_renormalization() {
        let psi = phase_bell();
        let text = serde_json::to_string(&state_to_file(&psi)).unwrap();
        let back = parse_state(&text).unwrap();
        assert!(back.warning.is_none());
        assert_eq!(back.state.amplitudes(), psi.amplitudes());
        let off = r#"{"schema_version":1,"local_dims":[2],"amplitudes":[[1.0000001,0],[0,0]]}"#;
        assert!(parse_state(off).unwrap().warning.is_some());
        let bad = r#"{"schema_version":1,"local_dims":[2],"amplitudes":[[1.1,0],[0,0]]}"#;
        assert!(matches!(parse_state(bad), Err(Error::Schema(_))));
        let version = r#"{"schema_version":2,"local_dims":[2],"amplitudes":[[1,0],[0,0]]}"#;
        assert!(matches!(parse_state(version), Err(Error::Schema(_))));
    }

    #[test]
    fn behavior_roundtrip_is_lossless() {
        let b = reference_behavior(&phase_bell(), Scenario::fully(2)).unwrap();
        let mut buf = Vec::new();
        write_behavior(&mut buf, &b).unwrap();
        let back = parse_behavior(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(back.max_deviation(&b).unwrap(), 0.0);
    }

    #[test]
    fn unknown_labels_are_rejected() {
        let text = r#"{"schema_version":1,"scenario":{"variant":"network","N":1},
            "rows":[{"inputs":["7","0"],"outcomes":{"0,0":1.0}}]}"#;
        assert!(matches!(parse_behavior(text), Err(Error::Alphabet(_))));
    }
}

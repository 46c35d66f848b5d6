//! On-disk formats: matching/outcome/disagreement CSVs, the components,
//! assignment, and report JSON files, and scenario configs.
//!
//! JSON floats use serde_json's shortest round-trip encoding, so re-reading
//! a written file recovers bit-identical values.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decompose::AlternatingComponent;
use crate::design::{AssignmentRealization, DesignKind, DesignParams};
use crate::error::MatchingError;
use crate::estimate::EstimateReport;
use crate::many_to_one::DecompositionReport;
use crate::matching::{AgentId, DisagreementSet, MatchEdge, Mode, OutcomeTable};
use crate::sim::{ScenarioSpec, SimReport};

#[derive(Debug, Error)]
pub enum FileError {
    #[error("{0}: {1}")]
    Io(PathBuf, #[source] std::io::Error),
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

impl FileError {
    fn parse(path: &Path, line: usize, message: impl Into<String>) -> Self {
        FileError::Parse {
            path: path.to_path_buf(),
            line,
            message: message.into(),
        }
    }
}

fn read_to_string(path: &Path) -> Result<String, FileError> {
    fs::read_to_string(path).map_err(|e| FileError::Io(path.to_path_buf(), e))
}

/// Raw edges of a matching CSV plus the mode its header implies
/// (`a,b` for one-to-one, `supplier,demand` for many-to-one). Rows
/// containing a 0 mark unmatched agents and are skipped.
pub fn read_matching_csv(path: &Path) -> Result<(Vec<(u32, u32)>, Mode), FileError> {
    let text = read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| FileError::parse(path, 1, "empty file"))?;
    let mode = match header.trim() {
        "a,b" => Mode::OneToOne,
        "supplier,demand" => Mode::ManyToOne,
        other => {
            return Err(FileError::parse(
                path,
                1,
                format!("expected header \"a,b\" or \"supplier,demand\", got \"{other}\""),
            ))
        }
    };
    let mut edges = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let (a, b) = match (parts.next(), parts.next(), parts.next()) {
            (Some(a), Some(b), None) => (a, b),
            _ => return Err(FileError::parse(path, line_no, "expected two fields")),
        };
        let a: u32 = a
            .trim()
            .parse()
            .map_err(|_| FileError::parse(path, line_no, format!("bad id \"{a}\"")))?;
        let b: u32 = b
            .trim()
            .parse()
            .map_err(|_| FileError::parse(path, line_no, format!("bad id \"{b}\"")))?;
        if a == 0 || b == 0 {
            continue; // unmatched marker
        }
        edges.push((a, b));
    }
    Ok((edges, mode))
}

/// Optional JSON sidecar next to a matching CSV (`<file>.json`) carrying
/// mode, capacity, and explicit population lists.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Sidecar {
    #[serde(default)]
    pub mode: Option<Mode>,
    #[serde(default)]
    pub capacity: Option<u32>,
    #[serde(default)]
    pub population: Option<PopulationSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PopulationSpec {
    TwoSided {
        suppliers: Vec<u32>,
        demands: Vec<u32>,
    },
    OneSided(Vec<u32>),
}

pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    let mut s = csv_path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn read_sidecar(csv_path: &Path) -> Result<Option<Sidecar>, FileError> {
    let path = sidecar_path(csv_path);
    if !path.exists() {
        return Ok(None);
    }
    let text = read_to_string(&path)?;
    let sidecar: Sidecar = serde_json::from_str(&text)
        .map_err(|e| FileError::parse(&path, e.line(), e.to_string()))?;
    Ok(Some(sidecar))
}

/// Outcome CSV with header `a,b,y`.
pub fn read_outcomes(path: &Path) -> Result<OutcomeTable, FileError> {
    let text = read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == "a,b,y" => {}
        Some((_, h)) => {
            return Err(FileError::parse(
                path,
                1,
                format!("expected header \"a,b,y\", got \"{h}\""),
            ))
        }
        None => return Err(FileError::parse(path, 1, "empty file")),
    }
    let mut entries = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(FileError::parse(path, line_no, "expected three fields"));
        }
        let a: u32 = fields[0]
            .trim()
            .parse()
            .map_err(|_| FileError::parse(path, line_no, "bad id"))?;
        let b: u32 = fields[1]
            .trim()
            .parse()
            .map_err(|_| FileError::parse(path, line_no, "bad id"))?;
        let y: f64 = fields[2]
            .trim()
            .parse()
            .map_err(|_| FileError::parse(path, line_no, "bad outcome value"))?;
        let edge = agent_pair(path, line_no, a, b)?;
        entries.push((edge, y));
    }
    OutcomeTable::new(entries, None)
        .map_err(|e: MatchingError| FileError::parse(path, 0, e.to_string()))
}

/// Disagreement CSV with header `a,b,label` (label t or c).
pub fn read_disagreement_csv(path: &Path) -> Result<DisagreementSet, FileError> {
    let text = read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == "a,b,label" => {}
        Some((_, h)) => {
            return Err(FileError::parse(
                path,
                1,
                format!("expected header \"a,b,label\", got \"{h}\""),
            ))
        }
        None => return Err(FileError::parse(path, 1, "empty file")),
    }
    let mut t_edges = BTreeSet::new();
    let mut c_edges = BTreeSet::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(FileError::parse(path, line_no, "expected three fields"));
        }
        let a: u32 = fields[0]
            .trim()
            .parse()
            .map_err(|_| FileError::parse(path, line_no, "bad id"))?;
        let b: u32 = fields[1]
            .trim()
            .parse()
            .map_err(|_| FileError::parse(path, line_no, "bad id"))?;
        let edge = agent_pair(path, line_no, a, b)?;
        match fields[2].trim() {
            "t" => t_edges.insert(edge),
            "c" => c_edges.insert(edge),
            other => {
                return Err(FileError::parse(
                    path,
                    line_no,
                    format!("label must be t or c, got \"{other}\""),
                ))
            }
        };
    }
    DisagreementSet::new(t_edges, c_edges).map_err(|e| FileError::parse(path, 0, e.to_string()))
}

fn agent_pair(path: &Path, line_no: usize, a: u32, b: u32) -> Result<MatchEdge, FileError> {
    let a = AgentId::new(a).map_err(|e| FileError::parse(path, line_no, e.to_string()))?;
    let b = AgentId::new(b).map_err(|e| FileError::parse(path, line_no, e.to_string()))?;
    if a == b {
        return Err(FileError::parse(
            path,
            line_no,
            "edge endpoints must differ",
        ));
    }
    Ok(MatchEdge { a, b })
}

/// The interchange file between the decompose, randomize, and estimate
/// stages: the component list, plus the capacity for many-to-one runs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComponentsFile {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub capacity: Option<u32>,
    pub components: Vec<AlternatingComponent>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ComponentsFileRaw {
    Object {
        #[serde(default)]
        capacity: Option<u32>,
        components: Vec<AlternatingComponent>,
    },
    Bare(Vec<AlternatingComponent>),
}

pub fn read_components(path: &Path) -> Result<ComponentsFile, FileError> {
    let text = read_to_string(path)?;
    let raw: ComponentsFileRaw =
        serde_json::from_str(&text).map_err(|e| FileError::parse(path, e.line(), e.to_string()))?;
    let file = match raw {
        ComponentsFileRaw::Object {
            capacity,
            components,
        } => ComponentsFile {
            capacity,
            components,
        },
        ComponentsFileRaw::Bare(components) => ComponentsFile {
            capacity: None,
            components,
        },
    };
    for (i, c) in file.components.iter().enumerate() {
        AlternatingComponent::new(c.kind, c.vertices.clone(), c.labels.clone())
            .map_err(|e| FileError::parse(path, 0, format!("component {i}: {e}")))?;
    }
    Ok(file)
}

/// Flat assignment wire format: design, seed, shared p, optional
/// per-component overrides, and the selection vectors.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct AssignmentFile {
    design: DesignKind,
    seed: u64,
    p: f64,
    #[serde(
        default,
        skip_serializing_if = "BTreeMap::is_empty",
        deserialize_with = "crate::design::deserialize_index_map"
    )]
    p_map: BTreeMap<usize, f64>,
    w: Vec<Vec<u8>>,
}

pub fn read_assignment(path: &Path) -> Result<AssignmentRealization, FileError> {
    let text = read_to_string(path)?;
    let raw: AssignmentFile =
        serde_json::from_str(&text).map_err(|e| FileError::parse(path, e.line(), e.to_string()))?;
    let params = DesignParams::with_overrides(raw.p, raw.seed, raw.p_map)
        .map_err(|e| FileError::parse(path, 0, e.to_string()))?;
    Ok(AssignmentRealization {
        design: raw.design,
        params,
        w: raw.w,
    })
}

pub fn write_assignment(out: &mut dyn Write, a: &AssignmentRealization) -> std::io::Result<()> {
    let file = AssignmentFile {
        design: a.design,
        seed: a.params.seed,
        p: a.params.p,
        p_map: a.params.overrides.clone(),
        w: a.w.clone(),
    };
    write_json(out, &file)
}

pub fn read_estimate_report(path: &Path) -> Result<EstimateReport, FileError> {
    let text = read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| FileError::parse(path, e.line(), e.to_string()))
}

/// Scenario config, TOML or JSON by file extension.
pub fn read_scenario(path: &Path) -> Result<ScenarioSpec, FileError> {
    let text = read_to_string(path)?;
    if path.extension().is_some_and(|e| e == "toml") {
        toml::from_str(&text).map_err(|e| FileError::parse(path, 0, e.to_string()))
    } else {
        serde_json::from_str(&text).map_err(|e| FileError::parse(path, e.line(), e.to_string()))
    }
}

pub fn write_qq_csv(out: &mut dyn Write, pairs: &[(f64, f64)]) -> std::io::Result<()> {
    writeln!(out, "empirical_q,normal_q")?;
    for (e, n) in pairs {
        writeln!(out, "{e},{n}")?;
    }
    Ok(())
}

/// Pretty JSON plus a trailing newline; byte-deterministic for a given value.
pub fn write_json<T: Serialize>(out: &mut dyn Write, value: &T) -> std::io::Result<()> {
    serde_json::to_writer_pretty(&mut *out, value)?;
    writeln!(out)
}

pub fn write_components(out: &mut dyn Write, f: &ComponentsFile) -> std::io::Result<()> {
    write_json(out, f)
}

pub fn write_estimate_report(out: &mut dyn Write, r: &EstimateReport) -> std::io::Result<()> {
    write_json(out, r)
}

pub fn write_sim_report(out: &mut dyn Write, r: &SimReport) -> std::io::Result<()> {
    write_json(out, r)
}

pub fn write_validation_report(
    out: &mut dyn Write,
    r: &DecompositionReport,
) -> std::io::Result<()> {
    write_json(out, r)
}

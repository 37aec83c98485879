//! Run configuration: a sectioned `key = value` text format.
//!
//! ```text
//! # comment
//! [model]
//! kind = bidomain            # or emi
//!
//! [geometry]
//! extents = 4.0 0.625 0.025 mm
//! h = 0.025 mm
//! ```
//!
//! Sections are `model`, `geometry`, `tissue`, `cell`, `stepping`,
//! `protocol`, `calibration` and `output`. Values may carry a trailing unit,
//! which must match the key's unit. Vectors are whitespace separated;
//! intervals also accept an inclusive integer range `142..157`. Missing keys
//! take their defaults and unknown keys are rejected. [`RunConfig::to_text`]
//! prints every key, and parsing that text gives back the same config.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::cell::{CellModel, CellParams};
use crate::fem::{BidomainParams, EmiParams, FemError, GapForm};
use crate::geometry::{build_bidomain_mesh, build_emi_mesh, BoxSpec, EmiCellLayout, GeometryError, Point3, TaggedMesh};
use crate::protocol::{Experiment, ProtocolError, S1S2Protocol, SearchSettings};
use crate::stepping::{Model, ProbeSet, SteppingConfig};

#[derive(Debug, Error, Clone, PartialEq)]
#[error("line {line}: {message}")]
pub struct ConfigError {
    pub line: usize,
    pub message: String,
}

fn err<T>(line: usize, message: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError { line, message: message.into() })
}

#[derive(Debug, Error)]
pub enum BuildError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Fem(#[from] FemError),
}

#[derive(Debug, Clone, PartialEq)]
pub enum TissueConfig {
    Bidomain { bounds: BoxSpec, h: f64, params: BidomainParams },
    Emi { layout: EmiCellLayout, h: f64, params: EmiParams },
}

impl TissueConfig {
    pub fn kind(&self) -> &'static str {
        match self {
            TissueConfig::Bidomain { .. } => "bidomain",
            TissueConfig::Emi { .. } => "emi",
        }
    }

    pub fn bounds(&self) -> BoxSpec {
        match self {
            TissueConfig::Bidomain { bounds, .. } => *bounds,
            TissueConfig::Emi { layout, .. } => layout.bounds(),
        }
    }

    pub fn capacitance(&self) -> f64 {
        match self {
            TissueConfig::Bidomain { params, .. } => params.capacitance,
            TissueConfig::Emi { params, .. } => params.capacitance,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolConfig {
    /// Known resting threshold (µA/µF); searched for when absent.
    pub s1_amplitude: Option<f64>,
    pub intervals: Vec<f64>,
    pub resolution: f64,
    pub electrode: BoxSpec,
    pub duration: f64,
    /// Probe points; quadrant centres when absent.
    pub probes: Option<[Point3; 4]>,
    pub search: SearchSettings,
}

impl ProtocolConfig {
    pub fn s1s2(&self, s1_amplitude: f64) -> S1S2Protocol {
        S1S2Protocol {
            s1_amplitude,
            intervals: self.intervals.clone(),
            resolution: self.resolution,
            electrode: self.electrode,
            duration: self.duration,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationConfig {
    /// cm/s, longitudinal then transverse.
    pub targets: [f64; 2],
    pub lower: [f64; 4],
    pub upper: [f64; 4],
    pub budget: usize,
    pub seed: u64,
    /// µA/µF
    pub cv_amplitude: f64,
    /// ms
    pub cv_horizon: f64,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            targets: crate::calibration::EMI_TARGET_CV,
            lower: [0.05, 0.005, 0.2, 0.05],
            upper: [1.0, 0.1, 3.0, 0.8],
            budget: 50,
            seed: 1,
            cv_amplitude: crate::calibration::CV_STIMULUS,
            cv_horizon: 40.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputConfig {
    pub dir: String,
    /// ms; no frames when absent.
    pub snapshot_every: Option<f64>,
    pub vtk: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: "out".into(), snapshot_every: Some(1.0), vtk: true }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub tissue: TissueConfig,
    pub cell: CellParams,
    pub stepping: SteppingConfig,
    pub protocol: ProtocolConfig,
    pub calibration: CalibrationConfig,
    pub output: OutputConfig,
}

/// Full-scale bidomain slab.
pub fn default_bidomain() -> RunConfig {
    RunConfig {
        tissue: TissueConfig::Bidomain {
            bounds: BoxSpec { origin: [0.0; 3], extents: [4.0, 0.625, 0.025] },
            h: 0.025,
            params: BidomainParams::default(),
        },
        cell: CellParams::default(),
        stepping: SteppingConfig { t_end: 50.0, ..Default::default() },
        protocol: default_protocol(),
        calibration: CalibrationConfig::default(),
        output: OutputConfig::default(),
    }
}

/// Full-scale cell-resolved tissue.
pub fn default_emi() -> RunConfig {
    RunConfig {
        tissue: TissueConfig::Emi { layout: EmiCellLayout::default(), h: 0.005, params: EmiParams::default() },
        ..default_bidomain()
    }
}

fn default_protocol() -> ProtocolConfig {
    ProtocolConfig {
        s1_amplitude: None,
        intervals: S1S2Protocol::default_intervals(),
        resolution: 1.0,
        electrode: BoxSpec { origin: [1.75, 0.1, 0.0], extents: [0.5, 0.1, 0.025] },
        duration: 2.0,
        probes: None,
        search: SearchSettings::default(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Scope {
    Any,
    Bidomain,
    Emi,
}

/// `(section, key, unit, scope)` for every accepted key.
const KEYS: &[(&str, &str, &str, Scope)] = &[
    ("model", "kind", "", Scope::Any),
    ("geometry", "h", "mm", Scope::Any),
    ("geometry", "extents", "mm", Scope::Bidomain),
    ("geometry", "origin", "mm", Scope::Bidomain),
    ("geometry", "cells", "", Scope::Emi),
    ("geometry", "body", "mm", Scope::Emi),
    ("geometry", "junction", "mm", Scope::Emi),
    ("geometry", "pericell", "mm", Scope::Emi),
    ("tissue", "sigma_i", "mS/mm", Scope::Any),
    ("tissue", "sigma_e", "mS/mm", Scope::Any),
    ("tissue", "capacitance", "uF/mm2", Scope::Any),
    ("tissue", "chi", "1/mm", Scope::Bidomain),
    ("tissue", "gap_capacitance", "uF/mm2", Scope::Emi),
    ("tissue", "gap_resistance", "kOhm*mm2", Scope::Emi),
    ("tissue", "gap_form", "", Scope::Emi),
    ("cell", "resting_potential", "mV", Scope::Any),
    ("cell", "sodium_conductance", "mS/mm2", Scope::Any),
    ("cell", "sodium_reversal", "mV", Scope::Any),
    ("cell", "potassium_reversal", "mV", Scope::Any),
    ("cell", "inactivation_midpoint", "mV", Scope::Any),
    ("cell", "activation_midpoint", "mV", Scope::Any),
    ("cell", "activation_slope", "mV", Scope::Any),
    ("cell", "rectification_slope", "mV", Scope::Any),
    ("cell", "inactivation_slope", "mV", Scope::Any),
    ("cell", "activation_time_constant", "ms", Scope::Any),
    ("cell", "inactivation_time_scale", "ms", Scope::Any),
    ("cell", "inactivation_asymmetry", "", Scope::Any),
    ("cell", "potassium_conductance", "mS/mm2", Scope::Any),
    ("stepping", "dt", "ms", Scope::Any),
    ("stepping", "substeps", "", Scope::Any),
    ("stepping", "t_end", "ms", Scope::Any),
    ("stepping", "force_rl", "", Scope::Any),
    ("protocol", "s1_amplitude", "uA/uF", Scope::Any),
    ("protocol", "intervals", "ms", Scope::Any),
    ("protocol", "resolution", "uA/uF", Scope::Any),
    ("protocol", "electrode_origin", "mm", Scope::Any),
    ("protocol", "electrode_extents", "mm", Scope::Any),
    ("protocol", "duration", "ms", Scope::Any),
    ("protocol", "probes", "mm", Scope::Any),
    ("protocol", "resting_horizon", "ms", Scope::Any),
    ("protocol", "s2_horizon", "ms", Scope::Any),
    ("protocol", "depolarized_cutoff", "", Scope::Any),
    ("protocol", "early_exit", "", Scope::Any),
    ("protocol", "confirm", "", Scope::Any),
    ("calibration", "targets", "cm/s", Scope::Any),
    ("calibration", "lower", "mS/mm", Scope::Any),
    ("calibration", "upper", "mS/mm", Scope::Any),
    ("calibration", "budget", "", Scope::Any),
    ("calibration", "seed", "", Scope::Any),
    ("calibration", "cv_amplitude", "uA/uF", Scope::Any),
    ("calibration", "cv_horizon", "ms", Scope::Any),
    ("output", "dir", "", Scope::Any),
    ("output", "snapshot_every", "ms", Scope::Any),
    ("output", "vtk", "", Scope::Any),
];

#[derive(Debug, Clone)]
struct Entry {
    line: usize,
    tokens: Vec<String>,
}

struct Entries {
    map: BTreeMap<(String, String), Entry>,
}

impl Entries {
    fn take(&mut self, section: &str, key: &str) -> Option<Entry> {
        self.map.remove(&(section.to_string(), key.to_string()))
    }

    fn f64(&mut self, section: &str, key: &str, default: f64) -> Result<f64, ConfigError> {
        match self.take(section, key) {
            None => Ok(default),
            Some(e) => {
                let v = numbers(&e, key)?;
                if v.len() != 1 {
                    return err(e.line, format!("{key} expects one number, got {}", v.len()));
                }
                Ok(v[0])
            }
        }
    }

    fn opt_f64(&mut self, section: &str, key: &str) -> Result<Option<f64>, ConfigError> {
        match self.take(section, key) {
            None => Ok(None),
            Some(e) if e.tokens == ["none"] => Ok(None),
            Some(e) => {
                let v = numbers(&e, key)?;
                if v.len() != 1 {
                    return err(e.line, format!("{key} expects one number, got {}", v.len()));
                }
                Ok(Some(v[0]))
            }
        }
    }

    fn vec3(&mut self, section: &str, key: &str, default: Point3) -> Result<Point3, ConfigError> {
        self.array::<3>(section, key, default)
    }

    fn array<const N: usize>(&mut self, section: &str, key: &str, default: [f64; N]) -> Result<[f64; N], ConfigError> {
        match self.take(section, key) {
            None => Ok(default),
            Some(e) => {
                let v = numbers(&e, key)?;
                v.as_slice().try_into().or_else(|_| err(e.line, format!("{key} expects {N} numbers, got {}", v.len())))
            }
        }
    }

    fn integer(&mut self, section: &str, key: &str, default: u64) -> Result<u64, ConfigError> {
        match self.take(section, key) {
            None => Ok(default),
            Some(e) => match e.tokens.as_slice() {
                [t] => t.parse().or_else(|_| err(e.line, format!("{key} expects a non-negative integer, got '{t}'"))),
                _ => err(e.line, format!("{key} expects one integer")),
            },
        }
    }

    fn boolean(&mut self, section: &str, key: &str, default: bool) -> Result<bool, ConfigError> {
        match self.take(section, key) {
            None => Ok(default),
            Some(e) => match e.tokens.as_slice() {
                [t] if t == "true" => Ok(true),
                [t] if t == "false" => Ok(false),
                _ => err(e.line, format!("{key} expects true or false")),
            },
        }
    }

    fn word(&mut self, section: &str, key: &str) -> Option<(usize, String)> {
        self.take(section, key).map(|e| (e.line, e.tokens.join(" ")))
    }
}

fn unit_of(section: &str, key: &str) -> &'static str {
    KEYS.iter().find(|k| k.0 == section && k.1 == key).map_or("", |k| k.2)
}

/// Numeric tokens of an entry, with the optional unit already stripped.
fn numbers(e: &Entry, key: &str) -> Result<Vec<f64>, ConfigError> {
    e.tokens
        .iter()
        .map(|t| t.parse::<f64>().or_else(|_| err(e.line, format!("{key}: '{t}' is not a number"))))
        .collect()
}

fn looks_numeric(t: &str) -> bool {
    t.parse::<f64>().is_ok() || t.contains("..")
}

/// Parses and validates a configuration.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let mut section: Option<String> = None;
    let mut map = BTreeMap::new();
    let mut kind_line = 0;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(rest) = content.strip_prefix('[') {
            let name = rest.strip_suffix(']').map(str::trim);
            match name {
                Some(n) if KEYS.iter().any(|k| k.0 == n) => section = Some(n.to_string()),
                Some(n) => return err(line, format!("unknown section [{n}]")),
                None => return err(line, "malformed section header"),
            }
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return err(line, format!("expected 'key = value', got '{content}'"));
        };
        let key = key.trim();
        let Some(sec) = section.as_deref() else {
            return err(line, format!("key '{key}' appears before any section"));
        };
        if !KEYS.iter().any(|k| k.0 == sec && k.1 == key) {
            return err(line, format!("unknown key '{key}' in [{sec}]"));
        }
        let mut tokens: Vec<String> = value.split_whitespace().map(str::to_string).collect();
        if tokens.is_empty() {
            return err(line, format!("key '{key}' has no value"));
        }
        let unit = unit_of(sec, key);
        if !unit.is_empty() && tokens.len() > 1 && !looks_numeric(tokens.last().expect("non-empty")) {
            let given = tokens.pop().expect("non-empty");
            if given != unit {
                return err(line, format!("unit mismatch for {key}: expected {unit}, got {given}"));
            }
        }
        if sec == "model" && key == "kind" {
            kind_line = line;
        }
        if map.insert((sec.to_string(), key.to_string()), Entry { line, tokens }).is_some() {
            return err(line, format!("duplicate key '{key}' in [{sec}]"));
        }
    }
    let mut entries = Entries { map };
    let kind = match entries.word("model", "kind") {
        None => return err(0, "missing [model] kind"),
        Some((_, k)) if k == "bidomain" => Scope::Bidomain,
        Some((_, k)) if k == "emi" => Scope::Emi,
        Some((l, k)) => return err(l, format!("unknown model kind '{k}' (expected bidomain or emi)")),
    };
    for ((sec, key), e) in &entries.map {
        let scope = KEYS.iter().find(|k| k.0 == sec && k.1 == key).map_or(Scope::Any, |k| k.3);
        if scope != Scope::Any && scope != kind {
            let other = if kind == Scope::Emi { "emi" } else { "bidomain" };
            return err(e.line, format!("key '{key}' in [{sec}] does not apply to model kind {other}"));
        }
    }
    let base = if kind == Scope::Bidomain { default_bidomain() } else { default_emi() };
    let line_of = |entries: &Entries, sec: &str, key: &str| entries.map.get(&(sec.to_string(), key.to_string())).map_or(kind_line, |e| e.line);

    let tissue = match (kind, &base.tissue) {
        (Scope::Bidomain, TissueConfig::Bidomain { bounds, h, params }) => {
            let l = line_of(&entries, "geometry", "extents");
            let origin = entries.vec3("geometry", "origin", bounds.origin)?;
            let extents = entries.vec3("geometry", "extents", bounds.extents)?;
            let bounds = BoxSpec::new(origin, extents).or_else(|e| err(l, e.to_string()))?;
            let h = entries.f64("geometry", "h", *h)?;
            let l = line_of(&entries, "tissue", "sigma_i");
            let params = BidomainParams {
                sigma_i: entries.vec3("tissue", "sigma_i", params.sigma_i)?,
                sigma_e: entries.vec3("tissue", "sigma_e", params.sigma_e)?,
                capacitance: entries.f64("tissue", "capacitance", params.capacitance)?,
                chi: entries.f64("tissue", "chi", params.chi)?,
            };
            params.validate().or_else(|e| err(l, e.to_string()))?;
            TissueConfig::Bidomain { bounds, h, params }
        }
        (Scope::Emi, TissueConfig::Emi { layout, h, params }) => {
            let l = line_of(&entries, "geometry", "cells");
            let cells = match entries.take("geometry", "cells") {
                None => [layout.nx as f64, layout.ny as f64],
                Some(e) => {
                    let v = numbers(&e, "cells")?;
                    if v.len() != 2 || v.iter().any(|c| c.fract() != 0.0 || *c < 1.0) {
                        return err(e.line, "cells expects two positive integers");
                    }
                    [v[0], v[1]]
                }
            };
            let layout = EmiCellLayout {
                nx: cells[0] as usize,
                ny: cells[1] as usize,
                body_extents: entries.vec3("geometry", "body", layout.body_extents)?,
                junction_extents: entries.vec3("geometry", "junction", layout.junction_extents)?,
                pericell_box: entries.vec3("geometry", "pericell", layout.pericell_box)?,
            };
            layout.validate().or_else(|e| err(l, e.to_string()))?;
            let h = entries.f64("geometry", "h", *h)?;
            let l = line_of(&entries, "tissue", "gap_form");
            let gap_form = match entries.word("tissue", "gap_form") {
                None => params.gap_form,
                Some((_, w)) if w == "literal" => GapForm::Literal,
                Some((_, w)) if w == "dimensional" => GapForm::Dimensional,
                Some((_, w)) => return err(l, format!("unknown gap_form '{w}' (expected literal or dimensional)")),
            };
            let scalar = |entries: &mut Entries, key: &str, default: f64| -> Result<f64, ConfigError> {
                let line = entries.map.get(&("tissue".to_string(), key.to_string())).map(|e| e.line);
                match entries.take("tissue", key) {
                    None => Ok(default),
                    Some(e) => {
                        let v = numbers(&e, key)?;
                        match v.as_slice() {
                            [x] => Ok(*x),
                            [x, y, z] if x == y && y == z => Ok(*x),
                            _ => err(line.unwrap_or(0), format!("{key} is a scalar for model kind emi")),
                        }
                    }
                }
            };
            let params = EmiParams {
                sigma_i: scalar(&mut entries, "sigma_i", params.sigma_i)?,
                sigma_e: scalar(&mut entries, "sigma_e", params.sigma_e)?,
                capacitance: entries.f64("tissue", "capacitance", params.capacitance)?,
                gap_capacitance: entries.f64("tissue", "gap_capacitance", params.gap_capacitance)?,
                gap_resistance: entries.f64("tissue", "gap_resistance", params.gap_resistance)?,
                gap_form,
            };
            params.validate().or_else(|e| err(l, e.to_string()))?;
            TissueConfig::Emi { layout, h, params }
        }
        _ => unreachable!("defaults match the model kind"),
    };
    if !(tissue_h(&tissue) > 0.0) {
        return err(line_of(&entries, "geometry", "h"), "h must be positive");
    }

    let d = base.cell;
    let l = line_of(&entries, "cell", "resting_potential");
    let mut c = |k: &str, v: f64| entries.f64("cell", k, v);
    let cell = CellParams {
        resting_potential: c("resting_potential", d.resting_potential)?,
        sodium_conductance: c("sodium_conductance", d.sodium_conductance)?,
        sodium_reversal: c("sodium_reversal", d.sodium_reversal)?,
        potassium_reversal: c("potassium_reversal", d.potassium_reversal)?,
        inactivation_midpoint: c("inactivation_midpoint", d.inactivation_midpoint)?,
        activation_midpoint: c("activation_midpoint", d.activation_midpoint)?,
        activation_slope: c("activation_slope", d.activation_slope)?,
        rectification_slope: c("rectification_slope", d.rectification_slope)?,
        inactivation_slope: c("inactivation_slope", d.inactivation_slope)?,
        activation_time_constant: c("activation_time_constant", d.activation_time_constant)?,
        inactivation_time_scale: c("inactivation_time_scale", d.inactivation_time_scale)?,
        inactivation_asymmetry: c("inactivation_asymmetry", d.inactivation_asymmetry)?,
        potassium_conductance: c("potassium_conductance", d.potassium_conductance)?,
    };
    cell.validate().or_else(|e| err(l, e.to_string()))?;

    let lines = ["dt", "substeps", "t_end"].map(|k| line_of(&entries, "stepping", k));
    let s = base.stepping;
    let stepping = SteppingConfig {
        dt: entries.f64("stepping", "dt", s.dt)?,
        substeps: entries.integer("stepping", "substeps", s.substeps as u64)? as usize,
        t0: 0.0,
        t_end: entries.f64("stepping", "t_end", s.t_end)?,
        force_rl: entries.boolean("stepping", "force_rl", s.force_rl)?,
    };
    if let Err(e) = stepping.validate() {
        let l = if !(stepping.dt > 0.0) {
            lines[0]
        } else if stepping.substeps == 0 {
            lines[1]
        } else {
            lines[2]
        };
        return err(l, e.to_string());
    }

    let p = base.protocol;
    let l = line_of(&entries, "protocol", "intervals");
    let intervals = match entries.take("protocol", "intervals") {
        None => p.intervals,
        Some(e) => parse_intervals(&e)?,
    };
    let l_probe = line_of(&entries, "protocol", "probes");
    let probes = match entries.take("protocol", "probes") {
        None => None,
        Some(e) if e.tokens == ["quadrants"] => None,
        Some(e) => {
            let v = numbers(&e, "probes")?;
            if v.len() != 12 {
                return err(e.line, format!("probes expects 12 numbers (4 points), got {}", v.len()));
            }
            Some(std::array::from_fn(|k| [v[3 * k], v[3 * k + 1], v[3 * k + 2]]))
        }
    };
    let l_el = line_of(&entries, "protocol", "electrode_extents");
    let electrode = BoxSpec::new(
        entries.vec3("protocol", "electrode_origin", p.electrode.origin)?,
        entries.vec3("protocol", "electrode_extents", p.electrode.extents)?,
    )
    .or_else(|e| err(l_el, e.to_string()))?;
    let ps = p.search;
    let protocol = ProtocolConfig {
        s1_amplitude: entries.opt_f64("protocol", "s1_amplitude")?,
        intervals,
        resolution: entries.f64("protocol", "resolution", p.resolution)?,
        electrode,
        duration: entries.f64("protocol", "duration", p.duration)?,
        probes,
        search: SearchSettings {
            resting_horizon: entries.f64("protocol", "resting_horizon", ps.resting_horizon)?,
            s2_horizon: entries.f64("protocol", "s2_horizon", ps.s2_horizon)?,
            depolarized_cutoff: entries.f64("protocol", "depolarized_cutoff", ps.depolarized_cutoff)?,
            early_exit: entries.boolean("protocol", "early_exit", ps.early_exit)?,
            confirm: entries.boolean("protocol", "confirm", ps.confirm)?,
        },
    };
    protocol.s1s2(protocol.s1_amplitude.unwrap_or(0.0)).validate().or_else(|e| err(l, e.to_string()))?;
    let bounds = tissue.bounds();
    if !bounds.intersects(&protocol.electrode) {
        return err(l_el, "electrode lies outside the tissue");
    }
    if let Some(pts) = &protocol.probes {
        if let Some(p) = pts.iter().find(|p| !bounds.contains(p)) {
            return err(l_probe, format!("probe {p:?} lies outside the tissue"));
        }
    }
    if !(0.0..=1.0).contains(&protocol.search.depolarized_cutoff) {
        return err(line_of(&entries, "protocol", "depolarized_cutoff"), "depolarized_cutoff must lie in [0, 1]");
    }

    let cd = base.calibration;
    let l = line_of(&entries, "calibration", "budget");
    let calibration = CalibrationConfig {
        targets: entries.array("calibration", "targets", cd.targets)?,
        lower: entries.array("calibration", "lower", cd.lower)?,
        upper: entries.array("calibration", "upper", cd.upper)?,
        budget: entries.integer("calibration", "budget", cd.budget as u64)? as usize,
        seed: entries.integer("calibration", "seed", cd.seed)?,
        cv_amplitude: entries.f64("calibration", "cv_amplitude", cd.cv_amplitude)?,
        cv_horizon: entries.f64("calibration", "cv_horizon", cd.cv_horizon)?,
    };
    if calibration.lower.iter().zip(&calibration.upper).any(|(a, b)| !(*a > 0.0 && a < b)) {
        return err(l, "calibration bounds must satisfy 0 < lower < upper");
    }
    if calibration.budget < 10 {
        return err(l, "calibration budget must be at least 10");
    }

    let od = base.output;
    let output = OutputConfig {
        dir: entries.word("output", "dir").map_or(od.dir, |w| w.1),
        snapshot_every: match entries.take("output", "snapshot_every") {
            None => od.snapshot_every,
            Some(e) if e.tokens == ["none"] => None,
            Some(e) => match numbers(&e, "snapshot_every")?.as_slice() {
                [x] if *x > 0.0 => Some(*x),
                _ => return err(e.line, "snapshot_every expects one positive number or none"),
            },
        },
        vtk: entries.boolean("output", "vtk", od.vtk)?,
    };
    debug_assert!(entries.map.is_empty(), "unconsumed keys {:?}", entries.map.keys());
    Ok(RunConfig { tissue, cell, stepping, protocol, calibration, output })
}

fn tissue_h(t: &TissueConfig) -> f64 {
    match t {
        TissueConfig::Bidomain { h, .. } | TissueConfig::Emi { h, .. } => *h,
    }
}

fn parse_intervals(e: &Entry) -> Result<Vec<f64>, ConfigError> {
    if let [t] = e.tokens.as_slice() {
        if let Some((a, b)) = t.split_once("..") {
            let (a, b): (i64, i64) = match (a.parse(), b.parse()) {
                (Ok(a), Ok(b)) if a <= b => (a, b),
                _ => return err(e.line, format!("bad interval range '{t}'")),
            };
            return Ok((a..=b).map(|x| x as f64).collect());
        }
    }
    numbers(e, "intervals")
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(" ")
}

impl RunConfig {
    pub fn h(&self) -> f64 {
        tissue_h(&self.tissue)
    }

    /// Canonical text with every key spelled out.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let kv = |s: &mut String, section: &str, key: &str, value: String| {
            let unit = unit_of(section, key);
            if unit.is_empty() || value == "none" || value == "quadrants" {
                let _ = writeln!(s, "{key} = {value}");
            } else {
                let _ = writeln!(s, "{key} = {value} {unit}");
            }
        };
        let _ = writeln!(s, "[model]\nkind = {}\n\n[geometry]", self.tissue.kind());
        match &self.tissue {
            TissueConfig::Bidomain { bounds, h, params } => {
                kv(&mut s, "geometry", "origin", join(&bounds.origin));
                kv(&mut s, "geometry", "extents", join(&bounds.extents));
                kv(&mut s, "geometry", "h", format!("{h:?}"));
                s.push_str("\n[tissue]\n");
                kv(&mut s, "tissue", "sigma_i", join(&params.sigma_i));
                kv(&mut s, "tissue", "sigma_e", join(&params.sigma_e));
                kv(&mut s, "tissue", "capacitance", format!("{:?}", params.capacitance));
                kv(&mut s, "tissue", "chi", format!("{:?}", params.chi));
            }
            TissueConfig::Emi { layout, h, params } => {
                kv(&mut s, "geometry", "cells", format!("{} {}", layout.nx, layout.ny));
                kv(&mut s, "geometry", "body", join(&layout.body_extents));
                kv(&mut s, "geometry", "junction", join(&layout.junction_extents));
                kv(&mut s, "geometry", "pericell", join(&layout.pericell_box));
                kv(&mut s, "geometry", "h", format!("{h:?}"));
                s.push_str("\n[tissue]\n");
                kv(&mut s, "tissue", "sigma_i", format!("{:?}", params.sigma_i));
                kv(&mut s, "tissue", "sigma_e", format!("{:?}", params.sigma_e));
                kv(&mut s, "tissue", "capacitance", format!("{:?}", params.capacitance));
                kv(&mut s, "tissue", "gap_capacitance", format!("{:?}", params.gap_capacitance));
                kv(&mut s, "tissue", "gap_resistance", format!("{:?}", params.gap_resistance));
                let form = match params.gap_form {
                    GapForm::Literal => "literal",
                    GapForm::Dimensional => "dimensional",
                };
                kv(&mut s, "tissue", "gap_form", form.to_string());
            }
        }
        s.push_str("\n[cell]\n");
        let c = &self.cell;
        for (k, v) in [
            ("resting_potential", c.resting_potential),
            ("sodium_conductance", c.sodium_conductance),
            ("sodium_reversal", c.sodium_reversal),
            ("potassium_reversal", c.potassium_reversal),
            ("inactivation_midpoint", c.inactivation_midpoint),
            ("activation_midpoint", c.activation_midpoint),
            ("activation_slope", c.activation_slope),
            ("rectification_slope", c.rectification_slope),
            ("inactivation_slope", c.inactivation_slope),
            ("activation_time_constant", c.activation_time_constant),
            ("inactivation_time_scale", c.inactivation_time_scale),
            ("inactivation_asymmetry", c.inactivation_asymmetry),
            ("potassium_conductance", c.potassium_conductance),
        ] {
            kv(&mut s, "cell", k, format!("{v:?}"));
        }
        s.push_str("\n[stepping]\n");
        kv(&mut s, "stepping", "dt", format!("{:?}", self.stepping.dt));
        kv(&mut s, "stepping", "substeps", self.stepping.substeps.to_string());
        kv(&mut s, "stepping", "t_end", format!("{:?}", self.stepping.t_end));
        kv(&mut s, "stepping", "force_rl", self.stepping.force_rl.to_string());
        s.push_str("\n[protocol]\n");
        let p = &self.protocol;
        kv(&mut s, "protocol", "s1_amplitude", p.s1_amplitude.map_or("none".into(), |a| format!("{a:?}")));
        kv(&mut s, "protocol", "intervals", join(&p.intervals));
        kv(&mut s, "protocol", "resolution", format!("{:?}", p.resolution));
        kv(&mut s, "protocol", "electrode_origin", join(&p.electrode.origin));
        kv(&mut s, "protocol", "electrode_extents", join(&p.electrode.extents));
        kv(&mut s, "protocol", "duration", format!("{:?}", p.duration));
        match &p.probes {
            None => kv(&mut s, "protocol", "probes", "quadrants".into()),
            Some(pts) => kv(&mut s, "protocol", "probes", join(&pts.concat())),
        }
        kv(&mut s, "protocol", "resting_horizon", format!("{:?}", p.search.resting_horizon));
        kv(&mut s, "protocol", "s2_horizon", format!("{:?}", p.search.s2_horizon));
        kv(&mut s, "protocol", "depolarized_cutoff", format!("{:?}", p.search.depolarized_cutoff));
        kv(&mut s, "protocol", "early_exit", p.search.early_exit.to_string());
        kv(&mut s, "protocol", "confirm", p.search.confirm.to_string());
        s.push_str("\n[calibration]\n");
        let cal = &self.calibration;
        kv(&mut s, "calibration", "targets", join(&cal.targets));
        kv(&mut s, "calibration", "lower", join(&cal.lower));
        kv(&mut s, "calibration", "upper", join(&cal.upper));
        kv(&mut s, "calibration", "budget", cal.budget.to_string());
        kv(&mut s, "calibration", "seed", cal.seed.to_string());
        kv(&mut s, "calibration", "cv_amplitude", format!("{:?}", cal.cv_amplitude));
        kv(&mut s, "calibration", "cv_horizon", format!("{:?}", cal.cv_horizon));
        s.push_str("\n[output]\n");
        kv(&mut s, "output", "dir", self.output.dir.clone());
        kv(&mut s, "output", "snapshot_every", self.output.snapshot_every.map_or("none".into(), |x| format!("{x:?}")));
        kv(&mut s, "output", "vtk", self.output.vtk.to_string());
        s
    }

    pub fn cell_model(&self) -> CellModel {
        CellModel::new(self.cell, self.tissue.capacitance())
    }

    pub fn build_mesh(&self) -> Result<TaggedMesh, BuildError> {
        Ok(match &self.tissue {
            TissueConfig::Bidomain { bounds, h, .. } => build_bidomain_mesh(*bounds, *h)?,
            TissueConfig::Emi { layout, h, .. } => build_emi_mesh(*layout, *h)?,
        })
    }

    /// Meshes, assembles and factorizes the configured tissue.
    pub fn build_model(&self) -> Result<Model, BuildError> {
        let mesh = self.build_mesh()?;
        let cell = self.cell_model();
        Ok(match &self.tissue {
            TissueConfig::Bidomain { params, .. } => Model::bidomain(mesh, params, cell, self.stepping.dt)?,
            TissueConfig::Emi { params, .. } => Model::emi(mesh, params, cell, self.stepping.dt)?,
        })
    }

    pub fn probes(&self) -> ProbeSet {
        self.protocol.probes.map_or_else(|| ProbeSet::quadrants(&self.tissue.bounds()), |points| ProbeSet { points })
    }

    pub fn experiment<'a>(&self, model: &'a Model) -> Result<Experiment<'a>, ProtocolError> {
        let mut e = Experiment::new(model, self.protocol.electrode, self.probes(), self.stepping, self.protocol.search.clone())?;
        e.duration = self.protocol.duration;
        Ok(e)
    }

    /// SHA-256 of the canonical text, hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_text().as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn minimal_file_takes_defaults() {
        let c = parse_config("[model]\nkind = bidomain\n[protocol]\n").unwrap();
        assert_eq!(c.protocol.intervals, S1S2Protocol::default_intervals());
        assert_eq!(c.protocol.resolution, 1.0);
        assert_eq!(c, default_bidomain());
    }

    #[test]
    fn bidomain_key_under_emi_is_named() {
        let e = parse_config("[model]\nkind = emi\n\n[tissue]\nchi = 150\n").unwrap_err();
        assert_eq!(e.line, 5);
        assert!(e.message.contains("chi"), "{e}");
    }

    #[test]
    fn step_override() {
        let c = parse_config("[model]\nkind = bidomain\n[stepping]\ndt = 0.05 ms\n").unwrap();
        assert_eq!(c.stepping.dt, 0.05);
    }

    #[test]
    fn unit_mismatch_and_unknown_key() {
        let e = parse_config("[model]\nkind = bidomain\n[stepping]\ndt = 0.1 s\n").unwrap_err();
        assert_eq!(e.line, 4);
        assert!(e.message.contains("unit"));
        let e = parse_config("[model]\nkind = bidomain\n[stepping]\n\ndtt = 0.1\n").unwrap_err();
        assert_eq!(e.line, 5);
        assert!(e.message.contains("dtt"));
    }

    #[test]
    fn invariant_violation_has_line() {
        let e = parse_config("[model]\nkind = bidomain\n[stepping]\nsubsteps = 0\n").unwrap_err();
        assert_eq!(e.line, 4);
        let e = parse_config("[model]\nkind = bidomain\n[protocol]\nintervals = 150 149\n").unwrap_err();
        assert_eq!(e.line, 4);
    }

    #[test]
    fn interval_range() {
        let c = parse_config("[model]\nkind = emi\n[protocol]\nintervals = 145..150\n").unwrap();
        assert_eq!(c.protocol.intervals, vec![145.0, 146.0, 147.0, 148.0, 149.0, 150.0]);
    }

    #[test]
    fn defaults_round_trip() {
        for c in [default_bidomain(), default_emi()] {
            assert_eq!(parse_config(&c.to_text()).unwrap(), c);
        }
    }

    #[test]
    fn hash_changes_with_content() {
        let a = default_bidomain();
        let mut b = a.clone();
        b.stepping.t_end = 51.0;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash(), a.clone().hash());
        assert_eq!(a.hash().len(), 64);
    }

    proptest! {
        #[test]
        fn round_trip(
            dt in 0.01f64..0.5,
            substeps in 1usize..200,
            res in 0.5f64..8.0,
            s1 in proptest::option::of(1.0f64..500.0),
            sig in proptest::array::uniform3(0.001f64..3.0),
            emi in any::<bool>(),
            cells in (1usize..30, 1usize..30),
            snap in proptest::option::of(0.1f64..10.0),
            seed in any::<u64>(),
        ) {
            let mut c = if emi { default_emi() } else { default_bidomain() };
            c.stepping.dt = dt;
            c.stepping.substeps = substeps;
            c.stepping.t_end = 10.0 + dt;
            c.protocol.resolution = res;
            c.protocol.s1_amplitude = s1;
            c.output.snapshot_every = snap;
            c.calibration.seed = seed;
            match &mut c.tissue {
                TissueConfig::Bidomain { params, .. } => params.sigma_i = sig,
                TissueConfig::Emi { layout, params, .. } => {
                    layout.nx = cells.0;
                    layout.ny = cells.1;
                    params.sigma_e = sig[0];
                }
            }
            if let TissueConfig::Emi { layout, .. } = &c.tissue {
                c.protocol.electrode = BoxSpec { origin: [0.0; 3], extents: [0.05, layout.bounds().extents[1].min(0.1), 0.025] };
            }
            let parsed = parse_config(&c.to_text()).unwrap();
            prop_assert_eq!(parsed, c);
        }
    }
}

//! Virtual patients: parameter sampling, rhythm mode switching, and the paired
//! arm instances that evaluate both devices on the same patient.

use std::fmt;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::heart::{
    build_heart, HeartConfig, HeartError, HeartHandles, MorphologyChannel, NodeParameters,
    PathParameters,
};
use crate::sta::{Automaton, ComponentId, Edge, Expr, Location, Network, NetworkBuilder};

/// Version tag of the built-in population table.
pub const DEFAULT_POPULATION_VERSION: &str = "population_v1";
const DEFAULT_POPULATION: &str = include_str!("../data/population_v1.txt");

const MAX_REJECTIONS: usize = 100_000;

#[derive(Debug, Error)]
pub enum PatientError {
    #[error("population spec line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("parameter `{name}`: {message}")]
    Parameter { name: &'static str, message: String },
    #[error("reading population spec {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Heart(#[from] HeartError),
    #[error("building patient network: {0}")]
    Model(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AtrialMode {
    #[serde(rename = "NSR_A")]
    NsrA,
    #[serde(rename = "AT")]
    At,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VentricularMode {
    #[serde(rename = "NSR_V")]
    NsrV,
    #[serde(rename = "VT")]
    Vt,
}

impl AtrialMode {
    pub fn index(self) -> usize {
        match self {
            AtrialMode::NsrA => 0,
            AtrialMode::At => 1,
        }
    }

    pub fn from_code(code: f64) -> Self {
        if code == 1.0 {
            AtrialMode::At
        } else {
            AtrialMode::NsrA
        }
    }
}

impl VentricularMode {
    pub fn index(self) -> usize {
        match self {
            VentricularMode::NsrV => 0,
            VentricularMode::Vt => 1,
        }
    }

    pub fn from_code(code: f64) -> Self {
        if code == 1.0 {
            VentricularMode::Vt
        } else {
            VentricularMode::NsrV
        }
    }
}

/// Joint rhythm condition; the two chambers switch independently.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RhythmMode {
    pub atrial: AtrialMode,
    pub ventricular: VentricularMode,
}

impl RhythmMode {
    pub const SINUS: RhythmMode = RhythmMode {
        atrial: AtrialMode::NsrA,
        ventricular: VentricularMode::NsrV,
    };
}

impl fmt::Display for RhythmMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let a = match self.atrial {
            AtrialMode::NsrA => "NSR_A",
            AtrialMode::At => "AT",
        };
        let v = match self.ventricular {
            VentricularMode::NsrV => "NSR_V",
            VentricularMode::Vt => "VT",
        };
        write!(f, "{a}+{v}")
    }
}

/// Dwell rates and successor weights of a two-mode switch, indexed
/// `[sinus, tachycardia]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeSwitchSpec {
    /// Exponential exit rate of each mode, per ms.
    pub dwell_rate: [f64; 2],
    /// `weights[from][to]`; a positive self weight re-enters the mode.
    pub weights: [[f64; 2]; 2],
}

impl ModeSwitchSpec {
    /// Alternating switch with the given mean dwell times.
    pub fn alternating(sinus_dwell_ms: f64, tachy_dwell_ms: f64) -> Self {
        ModeSwitchSpec {
            dwell_rate: [1.0 / sinus_dwell_ms, 1.0 / tachy_dwell_ms],
            weights: [[0.0, 1.0], [1.0, 0.0]],
        }
    }

    pub fn validate(&self) -> Result<(), HeartError> {
        for r in self.dwell_rate {
            if !(r.is_finite() && r > 0.0) {
                return Err(HeartError(format!(
                    "mode dwell rate must be positive, got {r}"
                )));
            }
        }
        for row in self.weights {
            if row.iter().any(|w| !(w.is_finite() && *w >= 0.0)) || row.iter().all(|w| *w == 0.0) {
                return Err(HeartError(format!(
                    "mode transition weights must be non-negative with a positive successor, got {row:?}"
                )));
            }
        }
        Ok(())
    }
}

macro_rules! params {
    ($($variant:ident => $name:literal),* $(,)?) => {
        /// Named entries of the patient parameter vector.
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
        pub enum Param {
            $($variant),*
        }

        impl Param {
            pub const ALL: &'static [Param] = &[$(Param::$variant),*];

            pub fn name(self) -> &'static str {
                match self {
                    $(Param::$variant => $name),*
                }
            }

            pub fn from_name(name: &str) -> Option<Param> {
                match name {
                    $($name => Some(Param::$variant),)*
                    _ => None,
                }
            }
        }
    };
}

params! {
    ANsrCycleMin => "a_nsr_cycle_min",
    ANsrCycleMax => "a_nsr_cycle_max",
    ANsrErp => "a_nsr_erp",
    AtCycleMin => "at_cycle_min",
    AtCycleMax => "at_cycle_max",
    AtErp => "at_erp",
    VNsrCycleMin => "v_nsr_cycle_min",
    VNsrCycleMax => "v_nsr_cycle_max",
    VNsrErp => "v_nsr_erp",
    VtCycleMin => "vt_cycle_min",
    VtCycleMax => "vt_cycle_max",
    VtErp => "vt_erp",
    AvDelayMin => "av_delay_min",
    AvDelayMax => "av_delay_max",
    AvErp => "av_erp",
    Sensitivity => "sensitivity",
    OneMinusSpecificity => "one_minus_specificity",
    NsrADwell => "nsr_a_dwell_ms",
    AtDwell => "at_dwell_ms",
    NsrVDwell => "nsr_v_dwell_ms",
    VtDwell => "vt_dwell_ms",
    VentricularEscape => "ventricular_escape",
}

/// (min, max) pairs that are swapped back into order after sampling.
const ORDERED_PAIRS: [(Param, Param); 5] = [
    (Param::ANsrCycleMin, Param::ANsrCycleMax),
    (Param::AtCycleMin, Param::AtCycleMax),
    (Param::VNsrCycleMin, Param::VNsrCycleMax),
    (Param::VtCycleMin, Param::VtCycleMax),
    (Param::AvDelayMin, Param::AvDelayMax),
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamDist {
    pub mean: f64,
    pub std: f64,
    pub lo: f64,
    pub hi: f64,
}

impl ParamDist {
    fn check(&self, name: &'static str) -> Result<(), PatientError> {
        let err = |message: String| PatientError::Parameter { name, message };
        if ![self.mean, self.std, self.lo, self.hi]
            .iter()
            .all(|v| v.is_finite())
        {
            return Err(err("values must be finite".into()));
        }
        if self.std < 0.0 {
            return Err(err(format!("negative std {}", self.std)));
        }
        if self.lo > self.hi {
            return Err(err(format!(
                "empty truncation interval [{}, {}]",
                self.lo, self.hi
            )));
        }
        Ok(())
    }

    /// Draws from Normal(mean, std) truncated to [lo, hi] by rejection.
    pub fn sample<R: Rng + ?Sized>(
        &self,
        name: &'static str,
        rng: &mut R,
    ) -> Result<f64, PatientError> {
        self.check(name)?;
        if self.std == 0.0 {
            if self.mean < self.lo || self.mean > self.hi {
                return Err(PatientError::Parameter {
                    name,
                    message: format!(
                        "degenerate mean {} outside [{}, {}]",
                        self.mean, self.lo, self.hi
                    ),
                });
            }
            return Ok(self.mean);
        }
        let normal = Normal::new(self.mean, self.std).expect("std checked");
        for _ in 0..MAX_REJECTIONS {
            let x = normal.sample(rng);
            if x >= self.lo && x <= self.hi {
                return Ok(x);
            }
        }
        Err(PatientError::Parameter {
            name,
            message: format!(
                "truncation interval [{}, {}] has negligible mass",
                self.lo, self.hi
            ),
        })
    }
}

/// Distribution of every patient parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationSpec {
    dists: Vec<ParamDist>,
}

impl Default for PopulationSpec {
    fn default() -> Self {
        Self::parse_complete(DEFAULT_POPULATION).expect("built-in population table is valid")
    }
}

impl PopulationSpec {
    pub fn get(&self, p: Param) -> ParamDist {
        self.dists[p as usize]
    }

    pub fn set(&mut self, p: Param, d: ParamDist) {
        self.dists[p as usize] = d;
    }

    /// Parses a table that must list every parameter exactly once.
    pub fn parse_complete(text: &str) -> Result<Self, PatientError> {
        let entries = parse_entries(text)?;
        let mut dists = vec![None; Param::ALL.len()];
        for (p, d) in entries {
            dists[p as usize] = Some(d);
        }
        let dists = Param::ALL
            .iter()
            .map(|p| {
                dists[*p as usize].ok_or(PatientError::Parameter {
                    name: p.name(),
                    message: "missing from population table".into(),
                })
            })
            .collect::<Result<_, _>>()?;
        Ok(PopulationSpec { dists })
    }

    /// Parses a table whose entries override the built-in defaults.
    pub fn parse_overrides(text: &str) -> Result<Self, PatientError> {
        let mut spec = Self::default();
        for (p, d) in parse_entries(text)? {
            spec.set(p, d);
        }
        Ok(spec)
    }

    pub fn from_file(path: &Path) -> Result<Self, PatientError> {
        let text = std::fs::read_to_string(path).map_err(|source| PatientError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse_overrides(&text)
    }

    /// Population with every parameter fixed at its mean.
    pub fn at_means(&self) -> Self {
        PopulationSpec {
            dists: self
                .dists
                .iter()
                .map(|d| ParamDist { std: 0.0, ..*d })
                .collect(),
        }
    }

    /// Table text in the same format the parser reads.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        for p in Param::ALL {
            let d = self.get(*p);
            out.push_str(&format!(
                "{} {} {} {} {}\n",
                p.name(),
                d.mean,
                d.std,
                d.lo,
                d.hi
            ));
        }
        out
    }
}

fn parse_entries(text: &str) -> Result<Vec<(Param, ParamDist)>, PatientError> {
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let fields: Vec<&str> = content.split_whitespace().collect();
        if fields.len() != 5 {
            return Err(PatientError::Parse {
                line,
                message: format!(
                    "expected `name mean std lo hi`, found {} fields",
                    fields.len()
                ),
            });
        }
        let param = Param::from_name(fields[0]).ok_or_else(|| PatientError::Parse {
            line,
            message: format!("unknown parameter `{}`", fields[0]),
        })?;
        if !seen.insert(param) {
            return Err(PatientError::Parse {
                line,
                message: format!("duplicate parameter `{}`", fields[0]),
            });
        }
        let mut nums = [0.0; 4];
        for (slot, f) in nums.iter_mut().zip(&fields[1..]) {
            *slot = f.parse().map_err(|_| PatientError::Parse {
                line,
                message: format!("`{f}` is not a number"),
            })?;
        }
        let d = ParamDist {
            mean: nums[0],
            std: nums[1],
            lo: nums[2],
            hi: nums[3],
        };
        d.check(param.name()).map_err(|e| PatientError::Parse {
            line,
            message: e.to_string(),
        })?;
        out.push((param, d));
    }
    Ok(out)
}

/// One sampled virtual patient.
#[derive(Debug, Clone, PartialEq)]
pub struct PatientParameters {
    values: Vec<f64>,
}

impl PatientParameters {
    pub fn get(&self, p: Param) -> f64 {
        self.values[p as usize]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Hex SHA-256 over the exact bit patterns of the vector.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for (p, v) in Param::ALL.iter().zip(&self.values) {
            h.update(p.name().as_bytes());
            h.update(v.to_bits().to_le_bytes());
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn atrial_node(&self, mode: AtrialMode) -> Result<NodeParameters, HeartError> {
        use Param::*;
        let (lo, hi, erp) = match mode {
            AtrialMode::NsrA => (ANsrCycleMin, ANsrCycleMax, ANsrErp),
            AtrialMode::At => (AtCycleMin, AtCycleMax, AtErp),
        };
        NodeParameters::new(self.get(lo), self.get(hi), self.get(erp))
    }

    pub fn ventricular_node(&self, mode: VentricularMode) -> Result<NodeParameters, HeartError> {
        use Param::*;
        let (lo, hi, erp) = match mode {
            VentricularMode::NsrV => (VNsrCycleMin, VNsrCycleMax, VNsrErp),
            VentricularMode::Vt => (VtCycleMin, VtCycleMax, VtErp),
        };
        NodeParameters::new(self.get(lo), self.get(hi), self.get(erp))
    }

    pub fn path(&self) -> Result<PathParameters, HeartError> {
        PathParameters::new(
            self.get(Param::AvDelayMin),
            self.get(Param::AvDelayMax),
            self.get(Param::AvErp),
        )
    }

    pub fn morphology(&self) -> Result<MorphologyChannel, HeartError> {
        MorphologyChannel::new(
            self.get(Param::Sensitivity),
            self.get(Param::OneMinusSpecificity),
        )
    }

    pub fn ventricular_escape(&self) -> bool {
        self.get(Param::VentricularEscape) > 0.5
    }

    pub fn atrial_switch(&self) -> ModeSwitchSpec {
        ModeSwitchSpec::alternating(self.get(Param::NsrADwell), self.get(Param::AtDwell))
    }

    pub fn ventricular_switch(&self) -> ModeSwitchSpec {
        ModeSwitchSpec::alternating(self.get(Param::NsrVDwell), self.get(Param::VtDwell))
    }

    /// Heart configuration in sinus rhythm.
    pub fn heart_config(&self) -> Result<HeartConfig, HeartError> {
        Ok(HeartConfig {
            atrial: self.atrial_node(AtrialMode::NsrA)?,
            ventricular: self.ventricular_node(VentricularMode::NsrV)?,
            path: self.path()?,
            morphology: self.morphology()?,
            ventricular_escape: self.ventricular_escape(),
        })
    }

    pub fn mode_parameters(&self) -> Result<ModeParameters, HeartError> {
        Ok(ModeParameters {
            atrial: [
                self.atrial_node(AtrialMode::NsrA)?,
                self.atrial_node(AtrialMode::At)?,
            ],
            ventricular: [
                self.ventricular_node(VentricularMode::NsrV)?,
                self.ventricular_node(VentricularMode::Vt)?,
            ],
            atrial_switch: self.atrial_switch(),
            ventricular_switch: self.ventricular_switch(),
            ventricular_escape: self.ventricular_escape(),
        })
    }
}

/// Draws a patient: every parameter independently from its truncated normal,
/// then (min, max) pairs re-sorted.
pub fn sample_patient<R: Rng + ?Sized>(
    population: &PopulationSpec,
    rng: &mut R,
) -> Result<PatientParameters, PatientError> {
    let mut values = Vec::with_capacity(Param::ALL.len());
    for p in Param::ALL {
        values.push(population.get(*p).sample(p.name(), rng)?);
    }
    for (lo, hi) in ORDERED_PAIRS {
        let (a, b) = (values[lo as usize], values[hi as usize]);
        if a > b {
            values[lo as usize] = b;
            values[hi as usize] = a;
        }
    }
    Ok(PatientParameters { values })
}

/// Per-mode node parameters and switch dynamics, indexed `[sinus, tachycardia]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeParameters {
    pub atrial: [NodeParameters; 2],
    pub ventricular: [NodeParameters; 2],
    pub atrial_switch: ModeSwitchSpec,
    pub ventricular_switch: ModeSwitchSpec,
    pub ventricular_escape: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SwitchHandles {
    pub ha_switch: ComponentId,
    pub hv_switch: ComponentId,
}

/// Adds `HA_Switch` and `HV_Switch`. Entering a mode rewrites the heart's
/// node variables; `Therapy` sends both switches back to sinus rhythm.
pub fn build_mode_switches(
    nb: &mut NetworkBuilder,
    heart: &HeartHandles,
    modes: &ModeParameters,
) -> Result<SwitchHandles, HeartError> {
    modes.atrial_switch.validate()?;
    modes.ventricular_switch.validate()?;

    let atrial_entry = |edge: Edge, m: usize| {
        let n = modes.atrial[m];
        edge.set(heart.a_cycle_min, Expr::Const(n.cycle_min))
            .set(heart.a_cycle_max, Expr::Const(n.cycle_max))
            .set(heart.a_erp, Expr::Const(n.erp))
            .set(heart.atrial_mode, Expr::Const(m as f64))
    };
    let escape = if modes.ventricular_escape { 1.0 } else { 0.0 };
    let ventricular_entry = |edge: Edge, m: usize| {
        let n = modes.ventricular[m];
        edge.set(heart.v_cycle_min, Expr::Const(n.cycle_min))
            .set(heart.v_cycle_max, Expr::Const(n.cycle_max))
            .set(heart.v_erp, Expr::Const(n.erp))
            .set(
                heart.v_intrinsic,
                Expr::Const(if m == 1 { 1.0 } else { escape }),
            )
            .set(heart.ventricular_mode, Expr::Const(m as f64))
    };

    let mut ha = Automaton::new("HA_Switch");
    let a_locs = [
        ha.location(Location::new("NSR_A").rate(modes.atrial_switch.dwell_rate[0])),
        ha.location(Location::new("AT").rate(modes.atrial_switch.dwell_rate[1])),
    ];
    let a_channels = [heart.at_offset, heart.at_onset];
    for from in 0..2 {
        for to in 0..2 {
            let w = modes.atrial_switch.weights[from][to];
            if w <= 0.0 {
                continue;
            }
            let mut edge = Edge::new(a_locs[from], a_locs[to]).weight(Expr::Const(w));
            if from != to {
                edge = atrial_entry(edge.emit(a_channels[to]), to);
            }
            ha.edge(edge);
        }
    }
    ha.edge(atrial_entry(
        Edge::new(a_locs[1], a_locs[0]).receive(heart.therapy),
        0,
    ));
    let ha_switch = nb.add(ha);

    let mut hv = Automaton::new("HV_Switch");
    let v_locs = [
        hv.location(Location::new("NSR_V").rate(modes.ventricular_switch.dwell_rate[0])),
        hv.location(Location::new("VT").rate(modes.ventricular_switch.dwell_rate[1])),
    ];
    let v_channels = [heart.vt_offset, heart.vt_onset];
    for from in 0..2 {
        for to in 0..2 {
            let w = modes.ventricular_switch.weights[from][to];
            if w <= 0.0 {
                continue;
            }
            let mut edge = Edge::new(v_locs[from], v_locs[to]).weight(Expr::Const(w));
            if from != to {
                edge = ventricular_entry(edge.emit(v_channels[to]), to);
            }
            hv.edge(edge);
        }
    }
    hv.edge(ventricular_entry(
        Edge::new(v_locs[1], v_locs[0]).receive(heart.therapy),
        0,
    ));
    let hv_switch = nb.add(hv);

    Ok(SwitchHandles {
        ha_switch,
        hv_switch,
    })
}

/// Complete heart + mode-switch network of one patient.
#[derive(Debug, Clone)]
pub struct PatientModel {
    pub network: Network,
    pub heart: HeartHandles,
    pub switches: SwitchHandles,
}

impl PatientModel {
    pub fn build(params: &PatientParameters) -> Result<Self, PatientError> {
        let mut nb = NetworkBuilder::new();
        let heart = build_heart(&mut nb, &params.heart_config()?)?;
        let switches = build_mode_switches(&mut nb, &heart, &params.mode_parameters()?)?;
        let network = nb.build().map_err(|e| PatientError::Model(e.to_string()))?;
        Ok(PatientModel {
            network,
            heart,
            switches,
        })
    }
}

/// One trial arm: a patient model instance and its own random stream.
#[derive(Debug, Clone)]
pub struct ArmInstance {
    pub params: PatientParameters,
    pub model: PatientModel,
    pub seed: u64,
}

/// Builds the GDT and MDT instances of one patient from the same parameter
/// vector; each arm simulates with its own seed.
pub fn duplicate_for_arms(
    params: &PatientParameters,
    gdt_seed: u64,
    mdt_seed: u64,
) -> Result<(ArmInstance, ArmInstance), PatientError> {
    let arm = |seed| -> Result<ArmInstance, PatientError> {
        Ok(ArmInstance {
            params: params.clone(),
            model: PatientModel::build(params)?,
            seed,
        })
    };
    Ok((arm(gdt_seed)?, arm(mdt_seed)?))
}

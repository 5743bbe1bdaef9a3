//! Experiment configuration: a single JSON document with defaults for every block.

use std::path::PathBuf;

use hjb_ergodic::geometry::{make_domain, DomainKind, ScalingSchedule};
use hjb_ergodic::{Domain, RunningCost};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Invalid configuration, with the dotted path of the offending field.
#[derive(Debug, Error, Clone, PartialEq)]
#[error("{path}: {message}")]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl ConfigError {
    fn new(path: &str, message: impl Into<String>) -> Self {
        Self { path: path.to_string(), message: message.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DomainConfig {
    Interval { half_width: f64 },
    Disk { radius: f64 },
    RadialStar { profile: Vec<f64> },
}

impl Default for DomainConfig {
    fn default() -> Self {
        DomainConfig::Interval { half_width: 1.0 }
    }
}

impl DomainConfig {
    pub fn build(&self) -> Result<Domain, ConfigError> {
        let kind = match self {
            DomainConfig::Interval { half_width } => DomainKind::Interval { half_width: *half_width },
            DomainConfig::Disk { radius } => DomainKind::Disk { radius: *radius },
            DomainConfig::RadialStar { profile } => DomainKind::RadialStar { profile: profile.clone() },
        };
        make_domain(kind).map_err(|e| ConfigError::new("domain", e.to_string()))
    }
}

/// Running cost from the catalog.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum CostConfig {
    Constant {
        #[serde(default)]
        value: f64,
    },
    Affine {
        #[serde(default)]
        offset: f64,
        slope: [f64; 2],
    },
    Bump {
        #[serde(default = "one")]
        amplitude: f64,
        #[serde(default = "half")]
        width: f64,
    },
    Cosine {
        #[serde(default = "one")]
        amplitude: f64,
        #[serde(default = "pi")]
        wavenumber: f64,
    },
    Quadratic {
        coefficient: f64,
    },
}

fn one() -> f64 {
    1.0
}

fn half() -> f64 {
    0.5
}

fn pi() -> f64 {
    std::f64::consts::PI
}

impl Default for CostConfig {
    fn default() -> Self {
        CostConfig::Constant { value: 0.0 }
    }
}

impl CostConfig {
    pub fn build(&self) -> RunningCost {
        match self {
            CostConfig::Constant { value } => RunningCost::constant(*value),
            CostConfig::Affine { offset, slope } => RunningCost::affine(*offset, *slope),
            CostConfig::Bump { amplitude, width } => RunningCost::bump(*amplitude, *width),
            CostConfig::Cosine { amplitude, wavenumber } => RunningCost::cosine(*amplitude, *wavenumber),
            CostConfig::Quadratic { coefficient } => RunningCost::quadratic(*coefficient),
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, CostConfig::Constant { .. })
    }

    /// Parses the short command-line form `name[:a,b,...]`, e.g. `bump`, `constant:2`, `cosine:1,3.14`,
    /// `affine:0,0.5`.
    pub fn parse_short(s: &str) -> Result<Self, ConfigError> {
        let (name, args) = s.split_once(':').unwrap_or((s, ""));
        let nums: Vec<f64> = if args.is_empty() {
            Vec::new()
        } else {
            args.split(',')
                .map(|a| a.trim().parse::<f64>().map_err(|e| ConfigError::new("lagrangian.f", format!("{a:?}: {e}"))))
                .collect::<Result<_, _>>()?
        };
        let arg = |i: usize, default: f64| nums.get(i).copied().unwrap_or(default);
        let cost = match name {
            "zero" => CostConfig::Constant { value: 0.0 },
            "constant" => CostConfig::Constant { value: arg(0, 0.0) },
            "affine" => CostConfig::Affine { offset: arg(0, 0.0), slope: [arg(1, 0.5), arg(2, 0.0)] },
            "bump" => CostConfig::Bump { amplitude: arg(0, 1.0), width: arg(1, 0.5) },
            "cosine" => CostConfig::Cosine { amplitude: arg(0, 1.0), wavenumber: arg(1, pi()) },
            "quadratic" => CostConfig::Quadratic { coefficient: arg(0, 1.0) },
            other => return Err(ConfigError::new("lagrangian.f", format!("unknown cost {other:?}"))),
        };
        Ok(cost)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LagrangianConfig {
    pub p: f64,
    pub epsilon: f64,
    pub f: CostConfig,
}

impl Default for LagrangianConfig {
    fn default() -> Self {
        Self { p: 3.0, epsilon: 0.1, f: CostConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub h: f64,
    /// Extra halvings of h for the refinement table of the solve pipeline.
    pub refinements: usize,
    pub dv: f64,
    pub v_max: Option<f64>,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { h: 0.005, refinements: 0, dv: 0.01, v_max: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleConfig {
    pub gamma: f64,
    pub lambdas: Vec<f64>,
    /// Discount factors, decreasing.
    pub deltas: Vec<f64>,
    /// Slopes gamma at which the discount limit is taken; must contain 0.
    pub slopes: Vec<f64>,
    /// Dilation samples of the quadratic-case curve; must contain 0 and a symmetric pair.
    pub linear_lambdas: Vec<f64>,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            gamma: 1.0,
            lambdas: ScalingSchedule::<f64>::default_grid(1.0).lambdas,
            deltas: vec![0.16, 0.08, 0.04, 0.02, 0.01, 0.005],
            slopes: vec![-0.5, -0.25, 0.0, 0.25, 0.5],
            linear_lambdas: vec![-0.01, 0.0, 0.01],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Pipeline {
    Discounted,
    Eigencurve,
    Derivatives,
    DiscountLimit,
    HopfCole,
    #[default]
    FullSuite,
}

impl Pipeline {
    pub fn name(self) -> &'static str {
        match self {
            Pipeline::Discounted => "discounted",
            Pipeline::Eigencurve => "eigencurve",
            Pipeline::Derivatives => "derivatives",
            Pipeline::DiscountLimit => "discount-limit",
            Pipeline::HopfCole => "hopf-cole",
            Pipeline::FullSuite => "full-suite",
        }
    }

    /// Pipelines executed for this selector, in order.
    pub fn stages(self) -> Vec<Pipeline> {
        match self {
            Pipeline::FullSuite => vec![
                Pipeline::Discounted,
                Pipeline::Eigencurve,
                Pipeline::Derivatives,
                Pipeline::DiscountLimit,
                Pipeline::HopfCole,
            ],
            p => vec![p],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Csv,
    Json,
    PlotData,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub domain: DomainConfig,
    pub lagrangian: LagrangianConfig,
    pub grid: GridConfig,
    pub schedule: ScheduleConfig,
    pub pipeline: Pipeline,
    pub output_dir: PathBuf,
    pub formats: Vec<Format>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            domain: DomainConfig::default(),
            lagrangian: LagrangianConfig::default(),
            grid: GridConfig::default(),
            schedule: ScheduleConfig::default(),
            pipeline: Pipeline::default(),
            output_dir: PathBuf::from("out"),
            formats: vec![Format::Csv, Format::Json],
        }
    }
}

impl ExperimentConfig {
    /// Parses JSON; type errors carry the path of the field.
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            ConfigError { path: if path == "." { "<root>".into() } else { path }, message: e.into_inner().to_string() }
        })
    }

    /// Checks ranges, catalog consistency and the exponent regime of the selected pipeline.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let d = self.domain.build()?;
        let l = &self.lagrangian;
        if !(l.epsilon > 0.0) || !l.epsilon.is_finite() {
            return Err(ConfigError::new("lagrangian.epsilon", "must be positive"));
        }
        if !l.p.is_finite() {
            return Err(ConfigError::new("lagrangian.p", "must be finite"));
        }
        let mdp_stage = self.pipeline.stages().iter().any(|s| *s != Pipeline::HopfCole);
        if mdp_stage && !(l.p > 2.0) {
            return Err(ConfigError::new(
                "lagrangian.p",
                format!("pipeline {} needs p > 2 (got {})", self.pipeline.name(), l.p),
            ));
        }
        if self.pipeline == Pipeline::HopfCole && l.p != 2.0 {
            return Err(ConfigError::new("lagrangian.p", format!("pipeline hopf-cole needs p = 2 (got {})", l.p)));
        }
        match (&l.f, &self.domain) {
            (CostConfig::Bump { width, .. }, _) if !(*width > 0.0) => {
                return Err(ConfigError::new("lagrangian.f.width", "must be positive"));
            }
            (_, DomainConfig::RadialStar { .. }) if self.pipeline != Pipeline::Eigencurve => {
                return Err(ConfigError::new("domain.kind", "radial_star domains support the eigencurve pipeline only"));
            }
            _ => {}
        }
        let g = &self.grid;
        if !(g.h > 0.0) || !(g.h < d.outer_radius() * 0.5) {
            return Err(ConfigError::new("grid.h", format!("must lie in (0, {})", d.outer_radius() * 0.5)));
        }
        if !(g.dv > 0.0) {
            return Err(ConfigError::new("grid.dv", "must be positive"));
        }
        if let Some(v) = g.v_max {
            if !(v > g.dv) {
                return Err(ConfigError::new("grid.v_max", "must exceed grid.dv"));
            }
        }
        if g.refinements > 4 {
            return Err(ConfigError::new("grid.refinements", "at most 4"));
        }
        let s = &self.schedule;
        if !s.gamma.is_finite() {
            return Err(ConfigError::new("schedule.gamma", "must be finite"));
        }
        for (i, lam) in s.lambdas.iter().enumerate() {
            if !(1.0 + s.gamma * lam > 0.0) {
                return Err(ConfigError::new(&format!("schedule.lambdas[{i}]"), "1 + gamma lambda must be positive"));
            }
        }
        if s.lambdas.is_empty() {
            return Err(ConfigError::new("schedule.lambdas", "must not be empty"));
        }
        if s.deltas.len() < 3 || s.deltas.windows(2).any(|w| !(w[1] < w[0])) || s.deltas.iter().any(|d| !(*d > 0.0 && *d < 1.0)) {
            return Err(ConfigError::new("schedule.deltas", "need at least 3 strictly decreasing values in (0, 1)"));
        }
        if !s.slopes.contains(&0.0) {
            return Err(ConfigError::new("schedule.slopes", "must contain 0"));
        }
        if !s.linear_lambdas.contains(&0.0) || !s.linear_lambdas.iter().any(|l| *l > 0.0 && s.linear_lambdas.contains(&-l)) {
            return Err(ConfigError::new("schedule.linear_lambdas", "must contain 0 and a pair +-s"));
        }
        if self.formats.is_empty() {
            return Err(ConfigError::new("formats", "must not be empty"));
        }
        Ok(())
    }

    pub fn mdp_options(&self) -> hjb_ergodic::MdpOptions {
        hjb_ergodic::MdpOptions { dv: self.grid.dv, v_max: self.grid.v_max, ..Default::default() }
    }

    /// Canonical JSON used for the provenance hash. The output directory is left out so that a run
    /// reproduces byte for byte wherever it is written.
    pub fn canonical_json(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        serde_json::to_string(&c).expect("config serializes")
    }
}

//! Run configuration. A config is a TOML document with a `schema = 1` header
//! and the sections `space`, `measures`, `grid`, `quad`, `ot`, `checks` and
//! `output`; see the README for the keys.

use std::path::{Path, PathBuf};

use entrolab::evi::grid_per_decade;
use entrolab::functionals::DensityFamily;
use entrolab::model_spaces::{make_space, ModelSpace, SpaceDescriptor};
use entrolab::quadrature::QuadOptions;
use entrolab::transport::DEFAULT_LEVELS;
use serde::Deserialize;

use crate::family::parse_family;

pub const SCHEMA_VERSION: u32 = 1;

/// Environment variable that overrides `output.dir`.
pub const OUT_ENV: &str = "ENTROLAB_OUT";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Parse { path: PathBuf, source: toml::de::Error },
    #[error("{key}: {msg}")]
    Invalid { key: String, msg: String },
}

fn invalid(key: impl Into<String>, msg: impl ToString) -> ConfigError {
    ConfigError::Invalid {
        key: key.into(),
        msg: msg.to_string(),
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub schema: u32,
    pub run_id: Option<String>,
    pub space: SpaceDescriptor,
    #[serde(default)]
    pub measures: MeasuresSection,
    pub grid: Option<GridSection>,
    #[serde(default)]
    pub quad: QuadSection,
    #[serde(default)]
    pub ot: OtSection,
    #[serde(default)]
    pub checks: ChecksSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasuresSection {
    #[serde(default)]
    pub families: Vec<String>,
    pub beta: Option<f64>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub t_min: Option<f64>,
    pub t_max: Option<f64>,
    pub points_per_decade: Option<usize>,
    /// External trace with header `t,ent,theta_sq`, relative to the config.
    pub trace_csv: Option<PathBuf>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadSection {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_evals: usize,
}

impl Default for QuadSection {
    fn default() -> Self {
        let q = QuadOptions::<f64>::default();
        Self {
            abs_tol: q.abs_tol,
            rel_tol: q.rel_tol,
            max_evals: q.max_evals,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OtSection {
    pub levels: usize,
}

impl Default for OtSection {
    fn default() -> Self {
        Self { levels: DEFAULT_LEVELS }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckName {
    Shannon,
    LogSobolev,
    Uncertainty,
    NLogSobolev,
    PositiveCurvUncertainty,
    SecondMomentBound,
    Monotonicity,
    C0,
    Rigidity,
    Evi,
    Chain,
}

impl CheckName {
    pub fn as_str(self) -> &'static str {
        match self {
            CheckName::Shannon => "shannon",
            CheckName::LogSobolev => "log_sobolev",
            CheckName::Uncertainty => "uncertainty",
            CheckName::NLogSobolev => "n_log_sobolev",
            CheckName::PositiveCurvUncertainty => "positive_curv_uncertainty",
            CheckName::SecondMomentBound => "second_moment_bound",
            CheckName::Monotonicity => "monotonicity",
            CheckName::C0 => "c0",
            CheckName::Rigidity => "rigidity",
            CheckName::Evi => "evi",
            CheckName::Chain => "chain",
        }
    }

    /// Whether the check reads a heat trace.
    pub fn needs_trace(self) -> bool {
        matches!(
            self,
            CheckName::SecondMomentBound | CheckName::Monotonicity | CheckName::C0 | CheckName::Rigidity | CheckName::Chain
        )
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnchorChoice {
    #[default]
    Barycenter,
    Base,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChecksSection {
    #[serde(default)]
    pub run: Vec<CheckName>,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default)]
    pub anchor: AnchorChoice,
    #[serde(default = "default_evi_tolerance")]
    pub evi_tolerance: f64,
    #[serde(default = "default_rigidity_tol")]
    pub rigidity_tol: f64,
    pub rigidity_window: Option<[f64; 2]>,
    /// Relative tolerance of the C₀ comparison.
    #[serde(default = "default_rigidity_tol")]
    pub c0_tol: f64,
}

fn default_tolerance() -> f64 {
    entrolab::inequalities::MARGIN_TOL
}

fn default_evi_tolerance() -> f64 {
    1e-4
}

fn default_rigidity_tol() -> f64 {
    1e-5
}

impl Default for ChecksSection {
    fn default() -> Self {
        Self {
            run: Vec::new(),
            tolerance: default_tolerance(),
            anchor: AnchorChoice::default(),
            evi_tolerance: default_evi_tolerance(),
            rigidity_tol: default_rigidity_tol(),
            rigidity_window: None,
            c0_tol: default_rigidity_tol(),
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
}

fn default_dir() -> PathBuf {
    PathBuf::from("entrolab-out")
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: default_dir() }
    }
}

/// Where the trace comes from.
#[derive(Clone, Debug, PartialEq)]
pub enum TraceSource {
    Grid(Vec<f64>),
    Csv(PathBuf),
}

/// Parses a config file without validating it; returns the run id (the
/// file stem unless set) and the directory relative paths resolve against.
pub fn read_raw(path: &Path) -> Result<(RawConfig, String, PathBuf), ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    let raw: RawConfig = toml::from_str(&text).map_err(|source| ConfigError::Parse {
        path: path.to_path_buf(),
        source,
    })?;
    let run_id = raw.run_id.clone().unwrap_or_else(|| {
        path.file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "run".into())
    });
    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."));
    Ok((raw, run_id, base_dir))
}

/// A validated configuration.
#[derive(Clone, Debug)]
pub struct Config {
    pub run_id: String,
    pub descriptor: SpaceDescriptor,
    pub space: ModelSpace<f64>,
    pub families: Vec<(String, DensityFamily<f64>)>,
    pub beta: f64,
    pub trace: Option<TraceSource>,
    pub quad: QuadOptions<f64>,
    pub levels: usize,
    pub checks: ChecksSection,
    pub out_dir: PathBuf,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let (raw, run_id, base_dir) = read_raw(path)?;
        Self::from_raw(raw, run_id, &base_dir)
    }

    pub fn from_raw(raw: RawConfig, run_id: String, base_dir: &Path) -> Result<Self, ConfigError> {
        if raw.schema != SCHEMA_VERSION {
            return Err(invalid("schema", format!("unsupported version {}, expected {SCHEMA_VERSION}", raw.schema)));
        }
        let space = make_space(&raw.space).map_err(|e| invalid("space", e))?;
        let families = raw
            .measures
            .families
            .iter()
            .enumerate()
            .map(|(i, s)| {
                parse_family(s)
                    .map(|f| (s.clone(), f))
                    .map_err(|e| invalid(format!("measures.families[{i}]"), e))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let beta = raw.measures.beta.unwrap_or(1.0);
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(invalid("measures.beta", "must be positive"));
        }
        let trace = match &raw.grid {
            None => None,
            Some(g) => match (&g.trace_csv, g.t_min, g.t_max, g.points_per_decade) {
                (Some(p), None, None, None) => Some(TraceSource::Csv(base_dir.join(p))),
                (Some(_), ..) => return Err(invalid("grid", "trace_csv excludes t_min, t_max and points_per_decade")),
                (None, Some(lo), Some(hi), Some(ppd)) => {
                    Some(TraceSource::Grid(grid_per_decade(lo, hi, ppd).map_err(|e| invalid("grid", e))?))
                }
                (None, ..) => return Err(invalid("grid", "needs t_min, t_max and points_per_decade, or trace_csv")),
            },
        };
        let q = &raw.quad;
        if !(q.abs_tol > 0.0 && q.rel_tol > 0.0) || q.max_evals == 0 {
            return Err(invalid("quad", "tolerances and max_evals must be positive"));
        }
        if raw.ot.levels < 17 {
            return Err(invalid("ot.levels", "needs at least 17 levels"));
        }
        let checks = raw.checks;
        for (key, v) in [
            ("checks.tolerance", checks.tolerance),
            ("checks.evi_tolerance", checks.evi_tolerance),
            ("checks.rigidity_tol", checks.rigidity_tol),
            ("checks.c0_tol", checks.c0_tol),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(invalid(key, "must be a nonnegative number"));
            }
        }
        if trace.is_none() {
            if let Some(c) = checks.run.iter().find(|c| c.needs_trace() || **c == CheckName::Evi) {
                return Err(invalid("checks.run", format!("`{}` needs a [grid] section", c.as_str())));
            }
        }
        if matches!(trace, Some(TraceSource::Csv(_))) {
            if let Some(c) = checks.run.iter().find(|c| matches!(c, CheckName::Evi | CheckName::Chain)) {
                return Err(invalid("checks.run", format!("`{}` needs a computed grid, not an external trace", c.as_str())));
            }
        }
        Ok(Self {
            run_id,
            descriptor: raw.space,
            space,
            families,
            beta,
            trace,
            quad: QuadOptions {
                abs_tol: q.abs_tol,
                rel_tol: q.rel_tol,
                max_evals: q.max_evals,
            },
            levels: raw.ot.levels,
            checks,
            out_dir: raw.output.dir,
        })
    }

    /// Output directory after the environment override.
    pub fn output_dir(&self) -> PathBuf {
        match std::env::var_os(OUT_ENV) {
            Some(dir) if !dir.is_empty() => PathBuf::from(dir),
            _ => self.out_dir.clone(),
        }
    }
}

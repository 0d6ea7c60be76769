use anyhow::{anyhow, bail, Context, Result};
use nlsgraph::evolution::Scheme;
use nlsgraph::{NlsParams, StarGrid, VertexCondition};
use serde::Deserialize;
use serde_json::Value;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub graph: GraphConfig,
    pub model: ModelConfig,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub stationary: Option<StationaryConfig>,
    #[serde(default)]
    pub stability: Option<StabilityConfig>,
    #[serde(default)]
    pub evolve: Option<EvolveConfig>,
    #[serde(default)]
    pub scatter: Option<ScatterConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphConfig {
    pub n_edges: usize,
    #[serde(default)]
    pub edge_length: Option<f64>,
    #[serde(default)]
    pub n_points: Option<usize>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VertexKind {
    #[default]
    Delta,
    Kirchhoff,
    DeltaPrimeS,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub mu: f64,
    #[serde(default)]
    pub alpha: f64,
    #[serde(default)]
    pub vertex: VertexKind,
    /// Strength of a delta'_s vertex.
    #[serde(default)]
    pub beta: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StationaryConfig {
    #[serde(default)]
    pub omega: Option<f64>,
    #[serde(default)]
    pub mass: Option<f64>,
    #[serde(default)]
    pub j: Option<usize>,
    /// Shift of the even-N Kirchhoff family.
    #[serde(default)]
    pub a: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilityConfig {
    pub omega_sweep: Vec<f64>,
    #[serde(default)]
    pub j: usize,
    #[serde(default)]
    pub jl_spectrum: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeKind {
    #[default]
    CrankNicolson,
    Strang,
}

impl From<SchemeKind> for Scheme {
    fn from(s: SchemeKind) -> Self {
        match s {
            SchemeKind::CrankNicolson => Scheme::CrankNicolsonFixedPoint,
            SchemeKind::Strang => Scheme::StrangSplit,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialData {
    StandingWave {
        omega: f64,
        #[serde(default)]
        j: usize,
        #[serde(default)]
        a: Option<f64>,
    },
    PerturbedStandingWave {
        omega: f64,
        #[serde(default)]
        j: usize,
        /// Energy norm of the perturbation.
        size: f64,
    },
    TravellingWave {
        omega: f64,
        a: f64,
        v: f64,
        #[serde(default)]
        theta: f64,
    },
    Gaussian {
        #[serde(default)]
        edge: usize,
        center: f64,
        width: f64,
        amplitude: f64,
        #[serde(default)]
        velocity: f64,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolveConfig {
    pub dt: f64,
    pub t_end: f64,
    #[serde(default)]
    pub scheme: SchemeKind,
    pub initial: InitialData,
    #[serde(default)]
    pub record_every: Option<usize>,
    #[serde(default)]
    pub snapshot_every: Option<usize>,
    #[serde(default)]
    pub blowup_threshold: Option<f64>,
    #[serde(default)]
    pub fixedpoint_tol: Option<f64>,
    #[serde(default)]
    pub fixedpoint_max_iter: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScatterConfig {
    pub v: f64,
    pub x0: f64,
    pub delta_exp: f64,
    #[serde(rename = "T_log", default = "one")]
    pub t_log: f64,
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default)]
    pub record_interval: Option<f64>,
}

fn one() -> f64 {
    1.0
}

/// A `--sweep key=v1,v2,...` request: a dotted path into the config and the
/// values substituted there.
#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub key: String,
    pub values: Vec<Value>,
    pub labels: Vec<String>,
}

impl Sweep {
    pub fn parse(spec: &str) -> Result<Self> {
        let (key, list) = spec.split_once('=').ok_or_else(|| anyhow!("sweep must look like key=v1,v2,..., got {spec:?}"))?;
        if key.is_empty() || list.is_empty() {
            bail!("sweep must look like key=v1,v2,..., got {spec:?}");
        }
        let labels: Vec<String> = list.split(',').map(|s| s.trim().to_string()).collect();
        let values = labels
            .iter()
            .map(|s| serde_json::from_str(s).unwrap_or_else(|_| Value::String(s.clone())))
            .collect();
        Ok(Self { key: key.to_string(), values, labels })
    }
}

/// Replaces the value at a dotted path, creating intermediate objects.
pub fn set_path(doc: &mut Value, path: &str, value: Value) -> Result<()> {
    let mut cur = doc;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = cur.as_object_mut().ok_or_else(|| anyhow!("sweep key {path:?} does not address an object field"))?;
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        cur = obj.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    unreachable!()
}

pub fn parse_config(doc: Value) -> Result<ExperimentConfig> {
    let cfg: ExperimentConfig = serde_json::from_value(doc).context("invalid configuration")?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn read_document(text: &str) -> Result<Value> {
    serde_json::from_str(text).context("malformed JSON")
}

impl ExperimentConfig {
    fn validate(&self) -> Result<()> {
        if self.graph.n_edges < 2 {
            bail!("graph.n_edges must be at least 2");
        }
        if !(self.model.mu > 0.0) {
            bail!("model.mu must be positive");
        }
        match self.model.vertex {
            VertexKind::Kirchhoff if self.model.alpha != 0.0 => bail!("a kirchhoff vertex has alpha = 0"),
            VertexKind::DeltaPrimeS if self.model.beta.is_none_or(|b| b == 0.0 || !b.is_finite()) => {
                bail!("a delta_prime_s vertex needs a finite non-zero model.beta")
            }
            _ => {}
        }
        if let Some(s) = &self.stationary {
            if s.omega.is_some() == s.mass.is_some() {
                bail!("stationary needs exactly one of omega and mass");
            }
        }
        Ok(())
    }

    pub fn params(&self) -> Result<NlsParams> {
        let alpha = if self.model.vertex == VertexKind::Delta { self.model.alpha } else { 0.0 };
        Ok(NlsParams::new(self.graph.n_edges, self.model.mu, alpha)?)
    }

    pub fn vertex(&self) -> VertexCondition {
        match self.model.vertex {
            VertexKind::Delta => VertexCondition::delta(self.model.alpha),
            VertexKind::Kirchhoff => VertexCondition::Kirchhoff,
            VertexKind::DeltaPrimeS => VertexCondition::DeltaPrimeS { beta: self.model.beta.unwrap_or(1.0) },
        }
    }

    /// The grid, when `edge_length` and `n_points` are both given.
    pub fn explicit_grid(&self) -> Result<Option<StarGrid>> {
        match (self.graph.edge_length, self.graph.n_points) {
            (Some(l), Some(m)) => Ok(Some(StarGrid::new(self.graph.n_edges, l, m)?)),
            (None, None) => Ok(None),
            _ => bail!("graph needs both edge_length and n_points, or neither"),
        }
    }

    pub fn grid(&self) -> Result<StarGrid> {
        self.explicit_grid()?.ok_or_else(|| anyhow!("graph.edge_length and graph.n_points are required for this command"))
    }
}

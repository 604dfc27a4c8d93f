//! Run configuration: a JSON file describing the data schema, the requested
//! effects, and estimation settings. Command-line flags override fields.

use serde::Deserialize;

use netrdd::estimators::{EffectKind, EffectRequest, VarianceMode};
use netrdd::exposure::{ExposureMapping, ExposureValue};
use netrdd::graph::GraphMode;
use netrdd::kernel_fit::Kernel;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemaMap {
    pub id: String,
    pub score: String,
    pub outcome: String,
    #[serde(default)]
    pub cluster: Option<String>,
    #[serde(default)]
    pub strata: Vec<String>,
    #[serde(default)]
    pub treatment: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EffectSpec {
    pub kind: String,
    #[serde(default)]
    pub from: Option<(u8, String)>,
    #[serde(default)]
    pub to: Option<(u8, String)>,
    #[serde(default)]
    pub g: Option<String>,
    #[serde(default)]
    pub h: Option<f64>,
    #[serde(default)]
    pub b: Option<f64>,
    #[serde(default)]
    pub p: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub cutoff: f64,
    pub exposure: String,
    pub schema: SchemaMap,
    pub effects: Vec<EffectSpec>,
    #[serde(default = "default_kernel")]
    pub kernel: String,
    #[serde(default = "default_graph_mode")]
    pub graph_mode: String,
    #[serde(default = "default_variance")]
    pub variance: Vec<String>,
    #[serde(default)]
    pub bias_correct: bool,
    #[serde(default)]
    pub max_neighbors: Option<usize>,
    #[serde(default)]
    pub include_isolated: bool,
    #[serde(default)]
    pub seed: Option<u64>,
}

fn default_kernel() -> String {
    "triangular".into()
}

fn default_graph_mode() -> String {
    "overlap".into()
}

fn default_variance() -> Vec<String> {
    vec!["network".into(), "iid".into()]
}

impl RunConfig {
    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// All enumerated names must parse before any computation starts.
    pub fn validate(&self) -> Result<()> {
        self.kernel()?;
        self.exposure()?;
        self.graph_mode()?;
        self.variance_modes()?;
        if self.effects.is_empty() {
            return Err(CliError::Config("no effects requested".into()));
        }
        for spec in &self.effects {
            effect_kind(spec)?;
        }
        if self.schema.cluster.is_none() && !self.schema.strata.is_empty() {
            return Err(CliError::Config(
                "stratum columns require a cluster column".into(),
            ));
        }
        Ok(())
    }

    pub fn kernel(&self) -> Result<Kernel> {
        Kernel::from_name(&self.kernel).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn exposure(&self) -> Result<ExposureMapping> {
        ExposureMapping::from_name(&self.exposure).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn graph_mode(&self) -> Result<GraphMode> {
        parse_graph_mode(&self.graph_mode)
    }

    pub fn variance_modes(&self) -> Result<Vec<VarianceMode>> {
        self.variance
            .iter()
            .map(|name| {
                VarianceMode::from_name(name).map_err(|e| CliError::Config(e.to_string()))
            })
            .collect()
    }

    pub fn requests(&self) -> Result<Vec<EffectRequest>> {
        let kernel = self.kernel()?;
        let modes = self.variance_modes()?;
        self.effects
            .iter()
            .map(|spec| {
                let mut req = EffectRequest::new(effect_kind(spec)?);
                req.kernel = kernel;
                req.variance_modes = modes.clone();
                req.bias_correct = self.bias_correct;
                req.include_isolated = self.include_isolated;
                req.h = spec.h;
                req.b = spec.b;
                if let Some(p) = spec.p {
                    req.p = p;
                }
                Ok(req)
            })
            .collect()
    }
}

pub fn parse_graph_mode(name: &str) -> Result<GraphMode> {
    if let Some(k) = name.strip_prefix("k_hop:") {
        let k: usize = k
            .parse()
            .map_err(|_| CliError::Config(format!("bad k_hop mode `{name}`")))?;
        return Ok(GraphMode::KHop(k));
    }
    match name {
        "overlap" => Ok(GraphMode::Overlap),
        "cluster_block" => Ok(GraphMode::ClusterBlock),
        "identity" => Ok(GraphMode::Identity),
        other => Err(CliError::Config(format!(
            "unknown graph mode `{other}` (expected overlap | cluster_block | identity | k_hop:<k>)"
        ))),
    }
}

fn effect_kind(spec: &EffectSpec) -> Result<EffectKind> {
    let parse_g = |s: &String| {
        ExposureValue::parse(s).map_err(|e| CliError::Config(e.to_string()))
    };
    match spec.kind.as_str() {
        "overall_direct" => Ok(EffectKind::OverallDirect),
        "overall_indirect" => Ok(EffectKind::OverallIndirect),
        "boundary" => {
            let from = spec
                .from
                .as_ref()
                .ok_or_else(|| CliError::Config("boundary effect needs `from`".into()))?;
            let to = spec
                .to
                .as_ref()
                .ok_or_else(|| CliError::Config("boundary effect needs `to`".into()))?;
            Ok(EffectKind::Boundary {
                from: (from.0 != 0, parse_g(&from.1)?),
                to: (to.0 != 0, parse_g(&to.1)?),
            })
        }
        "boundary_direct_subset" => {
            let g = spec
                .g
                .as_ref()
                .ok_or_else(|| CliError::Config("subset effect needs `g`".into()))?;
            Ok(EffectKind::BoundaryDirectSubset { g: parse_g(g)? })
        }
        other => Err(CliError::Config(format!(
            "unknown effect kind `{other}` (expected overall_direct | overall_indirect | boundary | boundary_direct_subset)"
        ))),
    }
}

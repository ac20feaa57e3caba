//! Versioned experiment configuration. TOML or JSON; unknown keys are rejected.

use std::path::Path;

use anyhow::{anyhow, bail, Context};
use glab_core::model::{heisenberg_chain, ising_chain, tfim_chain, toric2d, Term};
use glab_core::qcore::linalg::C64;
use glab_core::{InteractionFamily, Lattice, Mat, Quadrature};
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Gibbs,
    Cluster,
    Cmi,
    Connect,
    LindbladFlow,
    Toric,
    Memory,
    VerifyAll,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Gibbs => "gibbs",
            Task::Cluster => "cluster",
            Task::Cmi => "cmi",
            Task::Connect => "connect",
            Task::LindbladFlow => "lindblad-flow",
            Task::Toric => "toric",
            Task::Memory => "memory",
            Task::VerifyAll => "verify-all",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema: u32,
    pub task: Task,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelSpec>,
    #[serde(default)]
    pub params: Params,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    IsingChain {
        n: usize,
        #[serde(default)]
        periodic: bool,
        beta: f64,
        #[serde(default)]
        field: f64,
    },
    TfimChain {
        n: usize,
        #[serde(default)]
        periodic: bool,
        beta: f64,
        g: f64,
    },
    HeisenbergChain {
        n: usize,
        #[serde(default)]
        periodic: bool,
        beta: f64,
    },
    Toric2d {
        l: usize,
        beta_plaquette: f64,
        beta_star: f64,
    },
    Custom {
        lattice: LatticeSpec,
        terms: Vec<TermSpec>,
        beta: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeSpec {
    pub dimension: usize,
    pub extents: Vec<usize>,
    pub periodic: Vec<bool>,
}

/// `matrix` is row-major `[re, im]` pairs on `support` in the listed order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermSpec {
    pub support: Vec<usize>,
    pub matrix: Vec<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    /// Coupling at the end of a path, for builtin families.
    pub beta_end: Option<f64>,
    /// Multiplies every coupling at the end of a path; used when `beta_end` is unset.
    pub end_scale: f64,
    pub r_a: i64,
    pub r_1: i64,
    pub r_2: i64,
    /// Largest `|Δβ|_∞` per path step.
    pub delta: f64,
    pub quadrature: Quadrature,
    /// Region centre; defaults to the middle site.
    pub center: Option<usize>,
    /// Time grid for memory runs.
    pub times: Vec<f64>,
    /// Generator truncation radii for the flow.
    pub flow_radii: Vec<i64>,
    pub flow_steps: usize,
    pub s_points: usize,
    pub heatbath_radius: i64,
    /// Memory code: `repetition` or `ground_space`.
    pub code: String,
    pub region_a: Vec<[usize; 2]>,
    pub region_b: Vec<[usize; 2]>,
    pub beta0: f64,
    pub dense: bool,
    /// Random perturbations for the stable-clustering probe; 0 disables it.
    pub probe_samples: usize,
    pub probe_delta: f64,
    pub slack: f64,
    pub quick: bool,
}

impl Default for Params {
    fn default() -> Self {
        Self {
            beta_end: None,
            end_scale: 2.0,
            r_a: 1,
            r_1: 1,
            r_2: 1,
            delta: 0.1,
            quadrature: Quadrature::Exact,
            center: None,
            times: vec![0.0, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0],
            flow_radii: vec![0, 1, 2],
            flow_steps: 8,
            s_points: 10,
            heatbath_radius: 0,
            code: "repetition".into(),
            region_a: vec![[0, 0]],
            region_b: vec![[0, 0], [0, 1], [1, 0]],
            beta0: 3.0,
            dense: true,
            probe_samples: 0,
            probe_delta: 0.05,
            slack: 1e-8,
            quick: false,
        }
    }
}

fn nonneg(name: &str, v: i64) -> anyhow::Result<usize> {
    usize::try_from(v).map_err(|_| anyhow!("params.{name} must be non-negative, got {v}"))
}

impl ExperimentConfig {
    pub fn parse(text: &str, json: bool) -> anyhow::Result<Self> {
        let cfg: Self = if json {
            serde_json::from_str(text).context("invalid JSON config")?
        } else {
            toml::from_str(text).context("invalid TOML config")?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> anyhow::Result<(Self, String)> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
        let json = path.extension().is_some_and(|e| e == "json");
        Ok((Self::parse(&text, json)?, text))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.schema != SCHEMA_VERSION {
            bail!("unsupported schema version {} (expected {SCHEMA_VERSION})", self.schema);
        }
        let p = &self.params;
        nonneg("r_a", p.r_a)?;
        nonneg("r_1", p.r_1)?;
        nonneg("r_2", p.r_2)?;
        nonneg("heatbath_radius", p.heatbath_radius)?;
        for &r in &p.flow_radii {
            nonneg("flow_radii", r)?;
        }
        if !(p.delta > 0.0 && p.delta.is_finite()) {
            bail!("params.delta must be positive, got {}", p.delta);
        }
        if !(p.slack >= 0.0) {
            bail!("params.slack must be non-negative");
        }
        if p.times.iter().any(|t| !(*t >= 0.0)) {
            bail!("params.times must be non-negative");
        }
        if p.flow_steps == 0 || p.s_points == 0 {
            bail!("params.flow_steps and params.s_points must be positive");
        }
        if !["repetition", "ground_space"].contains(&p.code.as_str()) {
            bail!("params.code must be repetition or ground_space, got {}", p.code);
        }
        match (&self.model, self.task) {
            (None, Task::VerifyAll) => {}
            (None, t) => bail!("task {} needs a [model] table", t.name()),
            (Some(m), t) => {
                let fam = m.build()?;
                if let Some(c) = p.center {
                    if c >= fam.n_sites() {
                        bail!("params.center {c} outside the lattice");
                    }
                }
                if t == Task::Toric && !matches!(m, ModelSpec::Toric2d { .. }) {
                    bail!("task toric needs family = \"toric2d\"");
                }
                if p.beta_end.is_some() && matches!(m, ModelSpec::Custom { .. }) {
                    bail!("params.beta_end needs a builtin family; use params.end_scale");
                }
            }
        }
        Ok(())
    }

    pub fn family(&self) -> anyhow::Result<InteractionFamily> {
        self.model.as_ref().ok_or_else(|| anyhow!("config has no model"))?.build()
    }

    /// Family at the end of the path.
    pub fn end_family(&self) -> anyhow::Result<InteractionFamily> {
        let m = self.model.as_ref().ok_or_else(|| anyhow!("config has no model"))?;
        match self.params.beta_end {
            Some(b) => m.with_beta(b).build(),
            None => {
                let fam = m.build()?;
                Ok(fam.scaled(self.params.end_scale))
            }
        }
    }

    pub fn radii(&self) -> glab_core::circuits::Radii {
        let p = &self.params;
        glab_core::circuits::Radii::new(p.r_a as usize, p.r_1 as usize, p.r_2 as usize)
    }

    pub fn center(&self, n_sites: usize) -> usize {
        self.params.center.unwrap_or((n_sites - 1) / 2)
    }
}

impl ModelSpec {
    pub fn build(&self) -> anyhow::Result<InteractionFamily> {
        let fam = match self {
            ModelSpec::IsingChain { n, periodic, beta, field } => ising_chain(*n, *periodic, *beta, *field)?,
            ModelSpec::TfimChain { n, periodic, beta, g } => tfim_chain(*n, *periodic, *beta, *g)?,
            ModelSpec::HeisenbergChain { n, periodic, beta } => heisenberg_chain(*n, *periodic, *beta)?,
            ModelSpec::Toric2d { l, beta_plaquette, beta_star } => toric2d(*l, *beta_plaquette, *beta_star, false)?,
            ModelSpec::Custom { lattice, terms, beta } => {
                let lat = Lattice::new(lattice.dimension, &lattice.extents, &lattice.periodic)?;
                let terms = terms.iter().enumerate().map(|(k, t)| t.build(k)).collect::<anyhow::Result<Vec<_>>>()?;
                InteractionFamily::new(lat, terms, beta.clone(), "custom")?
            }
        };
        Ok(fam)
    }

    fn with_beta(&self, b: f64) -> ModelSpec {
        let mut m = self.clone();
        match &mut m {
            ModelSpec::IsingChain { beta, .. } | ModelSpec::TfimChain { beta, .. } | ModelSpec::HeisenbergChain { beta, .. } => *beta = b,
            ModelSpec::Toric2d { beta_plaquette, beta_star, .. } => {
                let r = if *beta_plaquette != 0.0 { b / *beta_plaquette } else { 1.0 };
                *beta_plaquette = b;
                *beta_star *= r;
            }
            ModelSpec::Custom { .. } => {}
        }
        m
    }
}

impl TermSpec {
    fn build(&self, k: usize) -> anyhow::Result<Term> {
        let d = 1usize << self.support.len();
        if self.matrix.len() != d * d {
            bail!("term {k}: matrix has {} entries, support needs {}", self.matrix.len(), d * d);
        }
        let h = Mat::from_fn(d, d, |i, j| {
            let [re, im] = self.matrix[i * d + j];
            C64::new(re, im)
        });
        Ok(Term { support: self.support.clone(), h, name: self.name.clone().unwrap_or_else(|| format!("T{k}")) })
    }
}

/// Set a dotted field (`params.r_1`, `model.beta`, `seed`) in a parsed
/// config. Integers stay integers unless the value has a decimal point.
pub fn patch_field(doc: &mut toml::Table, axis: &str, value: &str) -> anyhow::Result<()> {
    let parts: Vec<&str> = axis.split('.').collect();
    let (last, parents) = parts.split_last().ok_or_else(|| anyhow!("empty axis"))?;
    let mut table = doc;
    for p in parents {
        table = table
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| anyhow!("axis {axis}: {p} is not a table"))?;
    }
    let v = if let Ok(i) = value.parse::<i64>() {
        toml::Value::Integer(i)
    } else if let Ok(f) = value.parse::<f64>() {
        toml::Value::Float(f)
    } else {
        bail!("axis {axis}: value {value} is not numeric");
    };
    let as_float = match table.get(*last) {
        Some(toml::Value::Float(_)) => true,
        Some(toml::Value::Integer(_)) => false,
        None => is_float_field(last),
        Some(_) => bail!("axis {axis} is not a numeric field"),
    };
    let v = match v {
        toml::Value::Integer(i) if as_float => toml::Value::Float(i as f64),
        v => v,
    };
    table.insert(last.to_string(), v);
    Ok(())
}

/// Fields whose absent default is a float, so `--values 1 2` still parses.
fn is_float_field(name: &str) -> bool {
    matches!(
        name,
        "beta" | "field" | "g" | "beta_plaquette" | "beta_star" | "beta_end" | "end_scale" | "delta" | "beta0" | "probe_delta" | "slack"
    )
}

pub fn parse_table(text: &str, json: bool) -> anyhow::Result<toml::Table> {
    if json {
        let v: serde_json::Value = serde_json::from_str(text).context("invalid JSON config")?;
        let s = toml::to_string(&v).context("JSON config is not representable as TOML")?;
        Ok(toml::from_str(&s)?)
    } else {
        Ok(toml::from_str(text).context("invalid TOML config")?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
schema = 1
task = "connect"
seed = 3

[model]
family = "tfim_chain"
n = 6
beta = 0.2
g = 1.0

[params]
beta_end = 0.4
r_1 = 2
"#;

    #[test]
    fn round_trip_is_stable() {
        let a = ExperimentConfig::parse(BASE, false).unwrap();
        let b = ExperimentConfig::parse(&a.to_toml(), false).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_toml(), b.to_toml());
        let j = serde_json::to_string(&a).unwrap();
        assert_eq!(ExperimentConfig::parse(&j, true).unwrap(), a);
    }

    #[test]
    fn unknown_keys_and_bad_values_rejected() {
        assert!(ExperimentConfig::parse(&BASE.replace("seed = 3", "seed = 3\ncolour = 1"), false).is_err());
        assert!(ExperimentConfig::parse(&BASE.replace("g = 1.0", "g = 1.0\nh = 2"), false).is_err());
        assert!(ExperimentConfig::parse(&BASE.replace("r_1 = 2", "r_1 = -1"), false).is_err());
        assert!(ExperimentConfig::parse(&BASE.replace("schema = 1", "schema = 2"), false).is_err());
    }

    #[test]
    fn custom_terms_build() {
        let text = r#"
schema = 1
task = "gibbs"
[model]
family = "custom"
beta = [1.0]
lattice = { dimension = 1, extents = [2], periodic = [false] }
terms = [{ support = [0, 1], matrix = [[-1,0],[0,0],[0,0],[0,0], [0,0],[1,0],[0,0],[0,0], [0,0],[0,0],[1,0],[0,0], [0,0],[0,0],[0,0],[-1,0]] }]
"#;
        let cfg = ExperimentConfig::parse(text, false).unwrap();
        let fam = cfg.family().unwrap();
        assert_eq!(fam.terms.len(), 1);
        assert!(cfg.end_family().is_ok());
    }

    #[test]
    fn patching_fields() {
        let mut t = parse_table(BASE, false).unwrap();
        patch_field(&mut t, "params.r_1", "3").unwrap();
        patch_field(&mut t, "model.beta", "1").unwrap();
        patch_field(&mut t, "params.delta", "0.2").unwrap();
        let cfg: ExperimentConfig = t.clone().try_into().unwrap();
        assert_eq!(cfg.params.r_1, 3);
        assert_eq!(cfg.params.delta, 0.2);
        assert!(matches!(cfg.model, Some(ModelSpec::TfimChain { beta, .. }) if beta == 1.0));
        assert!(patch_field(&mut t, "task", "1").is_err());
        assert!(patch_field(&mut t, "params.r_1", "x").is_err());
    }
}

//! Run configurations, one per subcommand.
//!
//! Every optional field has a default that is written back by `resolve`, so
//! the echoed configuration alone reproduces a run.

use serde::{Deserialize, Serialize};
use weyl_semigroup::bounds::PotentialFamily;
use weyl_semigroup::brownian::DEFAULT_CHUNK;
use weyl_semigroup::oracle::{Grid, DEFAULT_DECAY_LIMIT};
use weyl_semigroup::{EstimatorParams, MultiIndex, PotentialConfig, VariancePreset};

use crate::error::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorConfig {
    /// Antithetic pairs per estimate.
    #[serde(default = "default_n_paths")]
    pub n_paths: usize,
    #[serde(default = "default_n_steps")]
    pub n_steps: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub preset: VariancePreset,
    #[serde(default = "default_chunk")]
    pub chunk_size: usize,
}

fn default_n_paths() -> usize {
    1 << 14
}

fn default_n_steps() -> usize {
    64
}

fn default_chunk() -> usize {
    DEFAULT_CHUNK
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            n_paths: default_n_paths(),
            n_steps: default_n_steps(),
            seed: 0,
            preset: VariancePreset::default(),
            chunk_size: default_chunk(),
        }
    }
}

impl EstimatorConfig {
    pub fn params(&self) -> EstimatorParams {
        EstimatorParams { chunk_size: self.chunk_size, ..EstimatorParams::new(self.n_paths, self.n_steps, self.seed, self.preset) }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default = "default_half_width")]
    pub half_width: f64,
    #[serde(default = "default_n_grid")]
    pub n_grid: usize,
    /// Half width of the region where symbols are reported; `half_width / 2` if absent.
    #[serde(default)]
    pub roi: Option<f64>,
    #[serde(default = "default_decay_limit")]
    pub decay_limit: f64,
}

fn default_half_width() -> f64 {
    16.0
}

fn default_n_grid() -> usize {
    1024
}

fn default_decay_limit() -> f64 {
    DEFAULT_DECAY_LIMIT
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { half_width: default_half_width(), n_grid: default_n_grid(), roi: None, decay_limit: default_decay_limit() }
    }
}

impl GridConfig {
    fn resolve(&mut self) {
        self.roi.get_or_insert(self.half_width / 2.0);
    }

    pub fn build(&self, dim: usize) -> Result<Grid, CliError> {
        let mut g = Grid::new(self.half_width, self.n_grid, dim)?.with_decay_limit(self.decay_limit);
        if let Some(r) = self.roi {
            g = g.with_roi(r)?;
        }
        Ok(g)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    #[default]
    F64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointConfig {
    pub x: Vec<f64>,
    pub xi: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateConfig {
    pub potential: PotentialConfig,
    pub points: Vec<PointConfig>,
    pub t: Vec<f64>,
    #[serde(default)]
    pub alpha: MultiIndex,
    #[serde(default)]
    pub beta: MultiIndex,
    /// Finite-difference step for `x`-derivatives; `10⁻²√(σ²t)` per `t` if absent.
    #[serde(default)]
    pub h: Option<f64>,
    #[serde(default)]
    pub estimator: EstimatorConfig,
    #[serde(default)]
    pub precision: Precision,
}

/// Normalized Gaussian state on the oracle grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateConfig {
    pub center: Vec<f64>,
    #[serde(default)]
    pub momentum: Vec<f64>,
    pub width: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableWindow {
    #[serde(default = "default_x_max")]
    pub x_max: f64,
    #[serde(default = "default_xi_max")]
    pub xi_max: f64,
}

fn default_x_max() -> f64 {
    2.0
}

fn default_xi_max() -> f64 {
    4.0
}

impl Default for TableWindow {
    fn default() -> Self {
        Self { x_max: default_x_max(), xi_max: default_xi_max() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleConfig {
    pub potential: PotentialConfig,
    pub t: f64,
    #[serde(default)]
    pub grid: GridConfig,
    /// States for the pairing residual; two offset Gaussians if absent.
    #[serde(default)]
    pub pairing: Option<[StateConfig; 2]>,
    /// Part of the symbol table written to CSV.
    #[serde(default)]
    pub table: TableWindow,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    Linf,
    XiDeriv,
    L1,
    Thm31,
    Class,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    #[serde(default)]
    pub suite: Option<Suite>,
    /// Potential for `linf`, `xi-deriv`, `l1` and `class`.
    #[serde(default)]
    pub potential: Option<PotentialConfig>,
    /// Family for `thm31`.
    #[serde(default)]
    pub family: Option<PotentialFamily>,
    #[serde(default = "default_t_list")]
    pub t: Vec<f64>,
    #[serde(default = "default_m")]
    pub m: u32,
    #[serde(default)]
    pub alpha: MultiIndex,
    #[serde(default)]
    pub beta: MultiIndex,
    #[serde(default = "default_sizes")]
    pub sizes: Vec<usize>,
    #[serde(default = "default_probes")]
    pub n_probes: usize,
    #[serde(default = "default_radius")]
    pub radius: f64,
    /// Frequencies for `l1`.
    #[serde(default)]
    pub xi: Vec<Vec<f64>>,
    /// Oracle grid for `l1`, and for `linf` when `|Λ| ≤ 2`.
    #[serde(default)]
    pub grid: Option<GridConfig>,
    #[serde(default)]
    pub estimator: EstimatorConfig,
}

fn default_t_list() -> Vec<f64> {
    vec![0.5]
}

fn default_m() -> u32 {
    1
}

fn default_sizes() -> Vec<usize> {
    vec![2, 4, 8]
}

fn default_probes() -> usize {
    10
}

fn default_radius() -> f64 {
    1.5
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservableConfig {
    pub x0: Vec<f64>,
    pub xi0: Vec<f64>,
    pub width_x: f64,
    pub width_xi: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommutatorConfig {
    pub potential: PotentialConfig,
    #[serde(default)]
    pub site: usize,
    /// `A(x) = Σ a_k x^k`.
    #[serde(default = "default_a")]
    pub a: Vec<f64>,
    pub p: ObservableConfig,
    #[serde(default = "default_commutator_times")]
    pub t: Vec<f64>,
    #[serde(default)]
    pub grid: GridConfig,
}

fn default_a() -> Vec<f64> {
    vec![0.0, 1.0]
}

fn default_commutator_times() -> Vec<f64> {
    vec![0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundConfig {
    pub alpha: MultiIndex,
    pub beta: MultiIndex,
    pub m: u32,
    pub t: f64,
    /// Explicit `C_m`; certified from `potential` if absent.
    #[serde(default)]
    pub c_m: Option<f64>,
    #[serde(default)]
    pub potential: Option<PotentialConfig>,
    #[serde(default)]
    pub preset: VariancePreset,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MomentsConfig {
    #[serde(default = "default_moment_t")]
    pub t: f64,
    #[serde(default = "default_moment_preset")]
    pub preset: VariancePreset,
    /// Highest `k` in the `A_k`, `B_k` table.
    #[serde(default = "default_max_k")]
    pub max_k: u32,
    /// Multi-indices to sample.
    #[serde(default)]
    pub beta: Vec<MultiIndex>,
    #[serde(default = "default_moment_paths")]
    pub n_paths: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_moment_t() -> f64 {
    1.0
}

fn default_moment_preset() -> VariancePreset {
    VariancePreset::Paper
}

fn default_max_k() -> u32 {
    8
}

fn default_moment_paths() -> usize {
    100_000
}

/// Parsed configuration for one subcommand.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "command", rename_all = "snake_case")]
pub enum RunConfig {
    Estimate(EstimateConfig),
    Oracle(OracleConfig),
    Verify(VerifyConfig),
    Commutator(CommutatorConfig),
    Bound(BoundConfig),
    Moments(MomentsConfig),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CommandKind {
    Estimate,
    Oracle,
    Verify,
    Commutator,
    Bound,
    Moments,
}

fn parse<T: serde::de::DeserializeOwned>(text: &str) -> Result<T, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        CliError::Config(format!("at '{path}': {}", e.into_inner()))
    })
}

impl RunConfig {
    /// Parses the JSON document for `kind`. A `command` key, if present, must match.
    pub fn parse(kind: CommandKind, text: &str) -> Result<Self, CliError> {
        let mut value: serde_json::Value = parse(text)?;
        let name = kind.name();
        if let Some(obj) = value.as_object_mut() {
            if let Some(cmd) = obj.remove("command") {
                if cmd.as_str() != Some(name) {
                    return Err(CliError::Config(format!("at 'command': config is for {cmd}, not '{name}'")));
                }
            }
        }
        let text = value.to_string();
        let mut cfg = match kind {
            CommandKind::Estimate => RunConfig::Estimate(parse(&text)?),
            CommandKind::Oracle => RunConfig::Oracle(parse(&text)?),
            CommandKind::Verify => RunConfig::Verify(parse(&text)?),
            CommandKind::Commutator => RunConfig::Commutator(parse(&text)?),
            CommandKind::Bound => RunConfig::Bound(parse(&text)?),
            CommandKind::Moments => RunConfig::Moments(parse(&text)?),
        };
        cfg.resolve();
        Ok(cfg)
    }

    /// Materializes defaults that depend on other fields.
    fn resolve(&mut self) {
        match self {
            RunConfig::Oracle(c) => c.grid.resolve(),
            RunConfig::Commutator(c) => c.grid.resolve(),
            RunConfig::Verify(c) => {
                if let Some(g) = c.grid.as_mut() {
                    g.resolve();
                }
            }
            _ => {}
        }
    }

    pub fn kind(&self) -> CommandKind {
        match self {
            RunConfig::Estimate(_) => CommandKind::Estimate,
            RunConfig::Oracle(_) => CommandKind::Oracle,
            RunConfig::Verify(_) => CommandKind::Verify,
            RunConfig::Commutator(_) => CommandKind::Commutator,
            RunConfig::Bound(_) => CommandKind::Bound,
            RunConfig::Moments(_) => CommandKind::Moments,
        }
    }
}

impl CommandKind {
    pub fn name(self) -> &'static str {
        match self {
            CommandKind::Estimate => "estimate",
            CommandKind::Oracle => "oracle",
            CommandKind::Verify => "verify",
            CommandKind::Commutator => "commutator",
            CommandKind::Bound => "bound",
            CommandKind::Moments => "moments",
        }
    }
}

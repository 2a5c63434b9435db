//! JSON run configurations for the subcommands. Every numeric hypothesis is
//! re-checked by the library; the file format only transports parameters.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use kdvist_core::soliton::SolitonSpec;

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub dx: f64,
}

impl GridSpec {
    pub fn count(&self) -> usize {
        ((self.x_max - self.x_min) / self.dx).round() as usize + 1
    }
}

/// Soliton parameters with exactly one of alphas/gammas present.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolitonParams {
    pub betas: Vec<f64>,
    #[serde(default)]
    pub alphas: Option<Vec<f64>>,
    #[serde(default)]
    pub gammas: Option<Vec<f64>>,
}

impl SolitonParams {
    pub fn to_spec(&self) -> Result<SolitonSpec<f64>> {
        let spec = match (&self.alphas, &self.gammas) {
            (Some(a), None) => SolitonSpec::new(self.betas.clone(), a.clone())?,
            (None, Some(g)) => SolitonSpec::from_gammas(self.betas.clone(), g.clone())?,
            _ => bail!("exactly one of alphas/gammas must be present"),
        };
        Ok(spec)
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolitonConfig {
    #[serde(flatten)]
    pub soliton: SolitonParams,
    pub grid: GridSpec,
    #[serde(default)]
    pub t: f64,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScatterConfig {
    /// Potential source: a CSV file or an analytic soliton sample.
    #[serde(default)]
    pub potential_csv: Option<PathBuf>,
    #[serde(default)]
    pub soliton: Option<SolitonParams>,
    #[serde(default)]
    pub grid: Option<GridSpec>,
    #[serde(default = "default_k_max")]
    pub k_max: f64,
    #[serde(default = "default_dk")]
    pub dk: f64,
    #[serde(default)]
    pub kappa_max: Option<f64>,
    #[serde(default)]
    pub decay_rate: Option<f64>,
}

fn default_k_max() -> f64 {
    8.0
}
fn default_dk() -> f64 {
    0.05
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InvertConfig {
    pub scattering_json: PathBuf,
    pub grid: GridSpec,
    #[serde(default)]
    pub t: f64,
    #[serde(default)]
    pub y_max: Option<f64>,
    #[serde(default)]
    pub ny: Option<usize>,
    /// When set, also dump the GLM solution B(x, y) at this x as `y,B` CSV.
    #[serde(default)]
    pub dump_b_at: Option<f64>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum InitialData {
    Csv { potential_csv: PathBuf },
    Soliton { soliton: SolitonParams, t0: Option<f64> },
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolveConfig {
    pub initial: InitialData,
    pub period: f64,
    pub modes: usize,
    pub dt: f64,
    pub times: Vec<f64>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PerturbationSpec {
    /// v(x) = e^{-|x|} sech^2 x.
    ExpSech,
    /// Seeded sum of Gaussian bumps under a sech envelope at the declared
    /// decay rate.
    RandomBumps {
        count: usize,
        width: f64,
        spread: f64,
    },
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilityGrids {
    #[serde(default = "default_period")]
    pub pde_period: f64,
    #[serde(default = "default_modes")]
    pub pde_modes: usize,
    #[serde(default = "default_pde_dt")]
    pub pde_dt: f64,
    #[serde(default = "default_half_width")]
    pub scatter_half_width: f64,
    #[serde(default = "default_scatter_dx")]
    pub scatter_dx: f64,
    #[serde(default = "default_stab_k_max")]
    pub k_max: f64,
    #[serde(default = "default_stab_dk")]
    pub dk: f64,
}

fn default_period() -> f64 {
    240.0
}
fn default_modes() -> usize {
    4096
}
fn default_pde_dt() -> f64 {
    5e-4
}
fn default_half_width() -> f64 {
    30.0
}
fn default_scatter_dx() -> f64 {
    0.01
}
fn default_stab_k_max() -> f64 {
    2.0
}
fn default_stab_dk() -> f64 {
    0.25
}

impl Default for StabilityGrids {
    fn default() -> Self {
        StabilityGrids {
            pde_period: default_period(),
            pde_modes: default_modes(),
            pde_dt: default_pde_dt(),
            scatter_half_width: default_half_width(),
            scatter_dx: default_scatter_dx(),
            k_max: default_stab_k_max(),
            dk: default_stab_dk(),
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilityConfigFile {
    #[serde(flatten)]
    pub reference: SolitonParams,
    pub a_decay: f64,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    #[serde(default = "default_tau")]
    pub tau_cone: f64,
    /// Strip shift; default is half the largest admissible value.
    #[serde(default)]
    pub eps: Option<f64>,
    #[serde(default = "default_c_check")]
    pub c_check: f64,
    pub perturbation: PerturbationSpec,
    pub amplitudes: Vec<f64>,
    pub times: Vec<f64>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub grids: Option<StabilityGrids>,
}

fn default_sigma() -> f64 {
    3.0
}
fn default_tau() -> f64 {
    0.15
}
fn default_c_check() -> f64 {
    1.0
}

pub fn load<T: serde::de::DeserializeOwned>(path: &std::path::Path) -> Result<(T, Vec<u8>)> {
    let bytes =
        std::fs::read(path).with_context(|| format!("reading config {}", path.display()))?;
    let cfg: T = serde_json::from_slice(&bytes)
        .with_context(|| format!("parsing config {}", path.display()))?;
    Ok((cfg, bytes))
}

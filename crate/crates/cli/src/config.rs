//! Command-line arguments and the JSON config file that mirrors them.
//!
//! The config file holds the global flags at top level and one object per
//! subcommand (`simulate`, `stats`, `fit_intensity`, `fit_global`,
//! `fit_local`, `diagnose`, `replicate`) keyed by the flag names in snake
//! case. Flags given on the command line win over the file.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

#[derive(Debug, Parser)]
#[command(name = "stlgcp", version, about = "Spatio-temporal log-Gaussian Cox processes: fit, simulate, diagnose")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    /// JSON config mirroring the flags; flags win.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct GlobalArgs {
    /// Observation window `X0,X1,Y0,Y1,T0,T1`, or `from-data` for the bounding box.
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub window: Option<String>,
    /// Master seed of every random stream.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(long, global = true, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate an LGCP pattern (and optionally its driving field).
    Simulate(SimulateArgs),
    /// Pair correlation, local pair correlation and K-function tables.
    Stats(StatsArgs),
    /// Poisson log-linear intensity fit, global or local.
    FitIntensity(FitIntensityArgs),
    /// Joint minimum-contrast fit.
    FitGlobal(FitArgs),
    /// Locally weighted minimum-contrast fit, one parameter vector per point.
    FitLocal(FitArgs),
    /// Monte Carlo K-function test of a fitted model.
    Diagnose(DiagnoseArgs),
    /// Simulate-and-fit replication of a catalog scenario.
    Replicate(ReplicateArgs),
}

impl Command {
    pub fn section(&self) -> &'static str {
        match self {
            Command::Simulate(_) => "simulate",
            Command::Stats(_) => "stats",
            Command::FitIntensity(_) => "fit_intensity",
            Command::FitGlobal(_) => "fit_global",
            Command::FitLocal(_) => "fit_local",
            Command::Diagnose(_) => "diagnose",
            Command::Replicate(_) => "replicate",
        }
    }
}

fn is_false(b: &bool) -> bool {
    !*b
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct BandwidthArgs {
    /// Spatial bandwidth of the pair correlation kernel.
    #[arg(long)]
    pub eps_space: Option<f64>,
    /// Temporal bandwidth of the pair correlation kernel.
    #[arg(long)]
    pub eps_time: Option<f64>,
    #[arg(long)]
    pub sigma_x: Option<f64>,
    #[arg(long)]
    pub sigma_y: Option<f64>,
    #[arg(long)]
    pub sigma_t: Option<f64>,
    /// Local weighting kernel: epanechnikov, gaussian or box.
    #[arg(long)]
    pub kernel: Option<String>,
    /// Spatial weighting bandwidth from the median distance to the np-th nearest event.
    #[arg(long)]
    pub np: Option<usize>,
    /// Floor of the np-th neighbour distance.
    #[arg(long)]
    pub eps_floor: Option<f64>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct IntensityArgs {
    /// Constant first-order intensity (default: n / |W x T|).
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Log-linear trend in coordinates, e.g. `x,t`.
    #[arg(long)]
    pub trend: Option<String>,
    /// Covariate lattice CSV `x,y,t,z1[,z2...]` for a log-linear intensity.
    #[arg(long, value_name = "FILE")]
    pub covariates: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct LagArgs {
    /// Lag grid size `NR,NH`.
    #[arg(long)]
    pub lags: Option<String>,
    #[arg(long)]
    pub r_max: Option<f64>,
    #[arg(long)]
    pub h_max: Option<f64>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelArgs {
    /// Model JSON: a bare model or the output of fit-global / fit-local.
    #[arg(long, value_name = "FILE")]
    pub model: Option<PathBuf>,
    /// Catalog scenario id, e.g. t1-05.
    #[arg(long)]
    pub scenario: Option<String>,
    /// sep_exp or gneiting, with the parameters below.
    #[arg(long)]
    pub family: Option<String>,
    #[arg(long)]
    pub sigma2: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub gamma_s: Option<f64>,
    #[arg(long)]
    pub gamma_t: Option<f64>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulateArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
    /// Per-point parameters (fit-local CSV) for a patchwork field.
    #[arg(long, value_name = "FILE")]
    pub local_params: Option<PathBuf>,
    #[arg(long)]
    pub n_expected: Option<f64>,
    /// Simulation grid `NX,NY,NT`.
    #[arg(long)]
    pub grid: Option<String>,
    /// Field lookup off the grid: nearest or bilinear.
    #[arg(long)]
    pub lookup: Option<String>,
    /// Patchwork block size in cells `BX,BY,BT`.
    #[arg(long)]
    pub block: Option<String>,
    /// Pattern CSV (default: pattern.csv in the output directory).
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    /// Also write the driving field as CSV.
    #[arg(long, value_name = "FILE")]
    pub field: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct StatsArgs {
    #[arg(long, value_name = "FILE")]
    pub pattern: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub intensity: IntensityArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub bandwidths: BandwidthArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub lags: LagArgs,
    /// Also write the per-point local pair correlation stack.
    #[arg(long)]
    #[serde(skip_serializing_if = "is_false")]
    pub local: bool,
    /// Also write the inhomogeneous K-function.
    #[arg(long)]
    #[serde(skip_serializing_if = "is_false")]
    pub k: bool,
    /// Edge correction: translation or none.
    #[arg(long)]
    pub correction: Option<String>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct FitIntensityArgs {
    #[arg(long, value_name = "FILE")]
    pub pattern: Option<PathBuf>,
    #[arg(long)]
    pub trend: Option<String>,
    #[arg(long, value_name = "FILE")]
    pub covariates: Option<PathBuf>,
    /// Local kernel-weighted fits on the evaluation grid.
    #[arg(long)]
    #[serde(skip_serializing_if = "is_false")]
    pub local: bool,
    /// Evaluation grid `NX,NY,NT` of the local fits.
    #[arg(long)]
    pub grid: Option<String>,
    /// Minimum number of dummy points (default 4n).
    #[arg(long)]
    pub dummies: Option<usize>,
    #[command(flatten)]
    #[serde(flatten)]
    pub bandwidths: BandwidthArgs,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct FitArgs {
    #[arg(long, value_name = "FILE")]
    pub pattern: Option<PathBuf>,
    /// sep_exp (default) or gneiting.
    #[arg(long)]
    pub family: Option<String>,
    #[command(flatten)]
    #[serde(flatten)]
    pub intensity: IntensityArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub bandwidths: BandwidthArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub lags: LagArgs,
    /// Contrast transform: identity or log.
    #[arg(long)]
    pub transform: Option<String>,
    /// Estimate the Gneiting smoothness parameters too.
    #[arg(long)]
    #[serde(skip_serializing_if = "is_false")]
    pub free_gammas: bool,
    /// Objective evaluations per simplex run.
    #[arg(long)]
    pub max_evals: Option<usize>,
    /// JSON list of starting models (default: data-driven starts).
    #[arg(long, value_name = "FILE")]
    pub starts: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct DiagnoseArgs {
    #[arg(long, value_name = "FILE")]
    pub pattern: Option<PathBuf>,
    /// Fit JSON from fit-global or fit-local, or a bare model.
    #[arg(long, value_name = "FILE")]
    pub fit: Option<PathBuf>,
    /// Test the Poisson (no clustering) model instead of a fit.
    #[arg(long)]
    #[serde(skip_serializing_if = "is_false")]
    pub poisson: bool,
    /// Number of simulated replicates.
    #[arg(long)]
    pub q: Option<usize>,
    /// Simulation grid `NX,NY,NT`.
    #[arg(long)]
    pub sim_grid: Option<String>,
    #[arg(long)]
    pub lookup: Option<String>,
    #[arg(long)]
    pub block: Option<String>,
    #[command(flatten)]
    #[serde(flatten)]
    pub intensity: IntensityArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub lags: LagArgs,
    /// Result JSON (default: diagnose.json in the output directory).
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    /// Envelope CSV (default: envelopes.csv in the output directory).
    #[arg(long, value_name = "FILE")]
    pub envelopes: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct ReplicateArgs {
    #[arg(long)]
    pub scenario: Option<String>,
    #[arg(long)]
    pub replicates: Option<usize>,
    #[arg(long)]
    pub n_expected: Option<f64>,
    #[arg(long)]
    pub sim_grid: Option<String>,
    /// Lags per axis of the contrast grid.
    #[arg(long)]
    pub lags: Option<usize>,
    #[command(flatten)]
    #[serde(flatten)]
    pub bandwidths: BandwidthArgs,
    #[arg(long)]
    pub max_evals: Option<usize>,
}

fn keys_of<T: Serialize + Default>() -> BTreeSet<String> {
    match serde_json::to_value(T::default()) {
        Ok(Value::Object(m)) => m.keys().cloned().collect(),
        _ => BTreeSet::new(),
    }
}

/// Every key a section may hold: the `Option` fields serialize as `null`
/// and the switches are listed by hand because `false` is skipped.
fn known_keys<T: Serialize + Default>(switches: &[&str]) -> BTreeSet<String> {
    let mut k = keys_of::<T>();
    k.extend(switches.iter().map(|s| s.to_string()));
    k
}

fn section_keys(section: &str) -> Option<BTreeSet<String>> {
    Some(match section {
        "simulate" => known_keys::<SimulateArgs>(&[]),
        "stats" => known_keys::<StatsArgs>(&["local", "k"]),
        "fit_intensity" => known_keys::<FitIntensityArgs>(&["local"]),
        "fit_global" | "fit_local" => known_keys::<FitArgs>(&["free_gammas"]),
        "diagnose" => known_keys::<DiagnoseArgs>(&["poisson"]),
        "replicate" => known_keys::<ReplicateArgs>(&[]),
        _ => return None,
    })
}

fn check_keys(obj: &Map<String, Value>, allowed: &BTreeSet<String>, place: &str) -> Result<()> {
    let unknown: Vec<&String> = obj.keys().filter(|k| !allowed.contains(*k)).collect();
    if !unknown.is_empty() {
        let list: Vec<&str> = unknown.iter().map(|s| s.as_str()).collect();
        bail!("unknown key(s) in {place}: {}", list.join(", "));
    }
    Ok(())
}

/// The parsed config file with every key checked.
#[derive(Debug, Default)]
pub struct FileConfig {
    globals: Map<String, Value>,
    sections: Map<String, Value>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("config {}", path.display()))
    }

    pub fn parse(text: &str) -> Result<Self> {
        let Value::Object(root) = serde_json::from_str::<Value>(text)? else {
            bail!("config must be a JSON object");
        };
        let global_keys = keys_of::<GlobalArgs>();
        let mut out = FileConfig::default();
        for (k, v) in root {
            if global_keys.contains(&k) {
                out.globals.insert(k, v);
            } else if let Some(allowed) = section_keys(&k) {
                let Value::Object(obj) = &v else {
                    bail!("section `{k}` must be an object");
                };
                check_keys(obj, &allowed, &format!("section `{k}`"))?;
                out.sections.insert(k, v);
            } else {
                bail!("unknown top-level key `{k}`");
            }
        }
        Ok(out)
    }

    pub fn globals(&self, cli: &GlobalArgs) -> Result<GlobalArgs> {
        overlay(&self.globals, cli)
    }

    pub fn section<T: Serialize + DeserializeOwned>(&self, name: &str, cli: &T) -> Result<T> {
        let empty = Map::new();
        let base = match self.sections.get(name) {
            Some(Value::Object(m)) => m,
            _ => &empty,
        };
        overlay(base, cli).with_context(|| format!("section `{name}`"))
    }
}

/// File values with every flag that was actually given laid over them.
fn overlay<T: Serialize + DeserializeOwned>(file: &Map<String, Value>, cli: &T) -> Result<T> {
    let mut merged = file.clone();
    if let Value::Object(given) = serde_json::to_value(cli)? {
        for (k, v) in given {
            if !v.is_null() {
                merged.insert(k, v);
            }
        }
    }
    Ok(serde_json::from_value(Value::Object(merged))?)
}

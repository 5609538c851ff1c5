//! Built-in simulation scenarios and the simulate-then-fit replication loop
//! that produces mean/quartile tables of the local estimates.

use serde::{Deserialize, Serialize};

use crate::contrast::{fit_local, summarize_local, ContrastSpec, FitOptions, Summary};
use crate::covariance::{CovarianceModel, ModelFamily};
use crate::error::{Error, Result};
use crate::geometry::SpaceTimeWindow;
use crate::kernels::BandwidthSet;
use crate::simulate::{derive_seed, LgcpSimulator, SimulationConfig};
use crate::stats::LagGrid;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub id: String,
    pub model: CovarianceModel,
}

/// `t1-01 .. t1-18`: separable exponential with `sigma2` in {5, 8}, then
/// `beta` in {2, 5, 10}, then `alpha` in {0.05, 0.10, 0.25}.
/// `t2-01 .. t2-08`: Gneiting with `sigma2` in {5, 8}, `delta` in {1.8, 0.3}
/// and `(alpha, beta)` in {(0.05, 2), (0.10, 5)}.
pub fn catalog() -> Vec<Scenario> {
    let mut out = Vec::new();
    for sigma2 in [5.0, 8.0] {
        for beta in [2.0, 5.0, 10.0] {
            for alpha in [0.05, 0.10, 0.25] {
                let model = CovarianceModel::separable(sigma2, alpha, beta).expect("catalog values are valid");
                out.push(Scenario { id: format!("t1-{:02}", out.len() + 1), model });
            }
        }
    }
    let mut k = 0;
    for sigma2 in [5.0, 8.0] {
        for delta in [1.8, 0.3] {
            for (alpha, beta) in [(0.05, 2.0), (0.10, 5.0)] {
                k += 1;
                let model = CovarianceModel::gneiting(sigma2, alpha, beta, delta).expect("catalog values are valid");
                out.push(Scenario { id: format!("t2-{k:02}"), model });
            }
        }
    }
    out
}

pub fn scenario(id: &str) -> Result<Scenario> {
    let all = catalog();
    all.iter().find(|s| s.id == id).cloned().ok_or_else(|| Error::UnknownScenario {
        id: id.to_string(),
        valid: all.iter().map(|s| s.id.as_str()).collect::<Vec<_>>().join(", "),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateOptions {
    pub replicates: usize,
    pub n_expected: f64,
    pub window: SpaceTimeWindow,
    /// Simulation grid; `None` picks 32x32x50 for the separable family and
    /// 16x16x16 for the dense Gneiting path.
    pub sim_grid: Option<(usize, usize, usize)>,
    /// Lags per axis of the contrast grid.
    pub lags: usize,
    /// `None` selects bandwidths per pattern with [`BandwidthSet::auto`].
    pub bandwidths: Option<BandwidthSet>,
    pub fit: FitOptions,
    pub seed: u64,
}

impl Default for ReplicateOptions {
    fn default() -> Self {
        Self {
            replicates: 10,
            n_expected: 1000.0,
            window: SpaceTimeWindow::unit_square(50.0).expect("valid window"),
            sim_grid: None,
            lags: crate::stats::DEFAULT_LAGS,
            bandwidths: None,
            fit: FitOptions::default(),
            seed: 1,
        }
    }
}

impl ReplicateOptions {
    pub fn grid_for(&self, family: ModelFamily) -> (usize, usize, usize) {
        self.sim_grid.unwrap_or(match family {
            ModelFamily::SeparableExponential => (32, 32, 50),
            ModelFamily::Gneiting => (16, 16, 16),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateOutcome {
    pub index: usize,
    pub seed: u64,
    pub n: usize,
    pub global: CovarianceModel,
    pub summaries: Vec<(String, Summary)>,
}

/// One parameter's row block: cross-replicate means of the per-pattern
/// quartiles and mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableEntry {
    pub parameter: String,
    pub truth: f64,
    pub q1: f64,
    pub median: f64,
    pub mean: f64,
    pub q3: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateReport {
    pub scenario: Scenario,
    pub outcomes: Vec<ReplicateOutcome>,
    pub table: Vec<TableEntry>,
}

fn truth(m: &CovarianceModel, name: &str) -> f64 {
    match name {
        "sigma2" => m.sigma2(),
        "alpha" => m.alpha(),
        "beta" => m.beta(),
        "delta" => m.delta().unwrap_or(f64::NAN),
        _ => f64::NAN,
    }
}

impl ReplicateReport {
    pub fn entry(&self, parameter: &str) -> Option<&TableEntry> {
        self.table.iter().find(|e| e.parameter == parameter)
    }

    /// Header and values of one table row: the true parameters, then
    /// `25%, 50%, m, 75%` per parameter.
    pub fn row(&self) -> (Vec<String>, Vec<String>) {
        let mut header = vec!["scenario".to_string()];
        let mut row = vec![self.scenario.id.clone()];
        for e in &self.table {
            header.push(format!("{}_true", e.parameter));
            row.push(format!("{}", e.truth));
        }
        for e in &self.table {
            for (tag, v) in [("q1", e.q1), ("median", e.median), ("mean", e.mean), ("q3", e.q3)] {
                header.push(format!("{}_{tag}", e.parameter));
                row.push(format!("{v:.4}"));
            }
        }
        (header, row)
    }
}

/// Simulates `replicates` patterns from the scenario (constant baseline
/// `n_expected / |W x T|`), fits each one locally with the constant intensity
/// estimate `n / |W x T|`, and averages the per-pattern summaries.
pub fn run_replicates(s: &Scenario, opts: &ReplicateOptions) -> Result<ReplicateReport> {
    if opts.replicates == 0 {
        return Err(Error::InvalidParameter("at least one replicate is required".into()));
    }
    let family = s.model.family();
    let cfg = SimulationConfig::with_expected(s.model, opts.window, opts.grid_for(family), opts.n_expected, opts.seed)?;
    let sim = LgcpSimulator::new(cfg)?;
    let grid = LagGrid::default_for(&opts.window);
    let grid = LagGrid::evenly_spaced(grid.r_max(), grid.h_max(), opts.lags, opts.lags)?;
    let spec = ContrastSpec::new(grid, family);

    let mut outcomes = Vec::with_capacity(opts.replicates);
    for index in 0..opts.replicates {
        let seed = derive_seed(opts.seed, index as u64);
        let p = sim.simulate(seed)?.pattern;
        let bw = match opts.bandwidths {
            Some(b) => b,
            None => BandwidthSet::auto(&p)?,
        };
        let lambda = vec![p.constant_intensity(); p.len()];
        let (global, local) = fit_local(&p, &lambda, &spec, &bw, None, &opts.fit)?;
        log::info!("{} replicate {index}: n = {}, global {:?}", s.id, p.len(), global.params);
        outcomes.push(ReplicateOutcome {
            index,
            seed,
            n: p.len(),
            global: global.params,
            summaries: summarize_local(&local).into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
        });
    }

    let names: Vec<String> = outcomes[0].summaries.iter().map(|(k, _)| k.clone()).collect();
    let r = outcomes.len() as f64;
    let table = names
        .iter()
        .enumerate()
        .map(|(k, name)| {
            let avg = |f: fn(&Summary) -> f64| outcomes.iter().map(|o| f(&o.summaries[k].1)).sum::<f64>() / r;
            TableEntry {
                parameter: name.clone(),
                truth: truth(&s.model, name),
                q1: avg(|s| s.q1),
                median: avg(|s| s.median),
                mean: avg(|s| s.mean),
                q3: avg(|s| s.q3),
            }
        })
        .collect();
    Ok(ReplicateReport { scenario: s.clone(), outcomes, table })
}

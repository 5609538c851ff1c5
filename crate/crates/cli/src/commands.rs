use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use log::info;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use stlgcp::contrast::{summarize_local, GlobalFitResult, LocalFitResult};
use stlgcp::grf::{FieldLookup, DEFAULT_BLOCK};
use stlgcp::intensity::{fit_local_intensity, CoordinateCovariate, Covariates};
use stlgcp::io;
use stlgcp::kernels::{bandwidth_variable, quantile_sorted};
use stlgcp::replicate::{run_replicates, scenario, ReplicateOptions};
use stlgcp::simulate::FieldSpec;
use stlgcp::*;

use crate::config::*;

/// Resolved global settings.
pub struct Env {
    pub window: Option<WindowSpec>,
    pub seed: u64,
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Copy)]
pub enum WindowSpec {
    Fixed(SpaceTimeWindow),
    FromData,
}

impl Env {
    pub fn new(g: &GlobalArgs) -> Result<Self> {
        let window = match g.window.as_deref() {
            None => None,
            Some("from-data") => Some(WindowSpec::FromData),
            Some(s) => {
                let v = numbers(s, 6, "--window X0,X1,Y0,Y1,T0,T1")?;
                Some(WindowSpec::Fixed(SpaceTimeWindow::new((v[0], v[1]), (v[2], v[3]), (v[4], v[5]))?))
            }
        };
        Ok(Self { window, seed: g.seed.unwrap_or(1), out_dir: g.out_dir.clone().unwrap_or_else(|| PathBuf::from(".")) })
    }

    fn out(&self, explicit: &Option<PathBuf>, default: &str) -> PathBuf {
        explicit.clone().unwrap_or_else(|| self.out_dir.join(default))
    }

    fn fixed_window(&self) -> Result<SpaceTimeWindow> {
        match self.window {
            Some(WindowSpec::Fixed(w)) => Ok(w),
            _ => bail!("this command needs an explicit --window X0,X1,Y0,Y1,T0,T1"),
        }
    }

    fn read_pattern(&self, path: &Option<PathBuf>) -> Result<PointPattern> {
        let path = path.as_ref().ok_or_else(|| anyhow!("--pattern FILE is required"))?;
        let window = match self.window {
            Some(WindowSpec::Fixed(w)) => Some(w),
            Some(WindowSpec::FromData) => None,
            None => {
                bail!("the window is never inferred silently: pass --window X0,X1,Y0,Y1,T0,T1 or --window from-data")
            }
        };
        Ok(io::read_pattern_csv(path, window)?)
    }
}

fn numbers(s: &str, n: usize, what: &str) -> Result<Vec<f64>> {
    let v: Vec<f64> = s
        .split(',')
        .map(|x| x.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| anyhow!("expected {what}, got `{s}`"))?;
    if v.len() != n {
        bail!("expected {n} comma-separated values for {what}, got `{s}`");
    }
    Ok(v)
}

fn triple(s: &Option<String>, default: (usize, usize, usize), what: &str) -> Result<(usize, usize, usize)> {
    match s {
        None => Ok(default),
        Some(s) => {
            let v = numbers(s, 3, what)?;
            if v.iter().any(|x| *x < 1.0 || x.fract() != 0.0) {
                bail!("{what} needs positive integers, got `{s}`");
            }
            Ok((v[0] as usize, v[1] as usize, v[2] as usize))
        }
    }
}

fn lag_grid(a: &LagArgs, window: &SpaceTimeWindow) -> Result<LagGrid> {
    let d = LagGrid::default_for(window);
    let (nr, nh) = match &a.lags {
        None => (d.nr(), d.nh()),
        Some(s) => {
            let v = numbers(s, 2, "--lags NR,NH")?;
            if v.iter().any(|x| *x < 1.0 || x.fract() != 0.0) {
                bail!("--lags needs positive integers, got `{s}`");
            }
            (v[0] as usize, v[1] as usize)
        }
    };
    Ok(LagGrid::evenly_spaced(a.r_max.unwrap_or(d.r_max()), a.h_max.unwrap_or(d.h_max()), nr, nh)?)
}

fn bandwidths(a: &BandwidthArgs, p: &PointPattern) -> Result<BandwidthSet> {
    let given = [a.eps_space, a.eps_time, a.sigma_x, a.sigma_y, a.sigma_t];
    let mut bw = match given {
        [Some(e), Some(d), Some(x), Some(y), Some(t)] => BandwidthSet::new(e, d, x, y, t)?,
        _ => {
            let auto = BandwidthSet::auto(p).context("automatic bandwidth selection")?;
            BandwidthSet {
                eps_space: a.eps_space.unwrap_or(auto.eps_space),
                eps_time: a.eps_time.unwrap_or(auto.eps_time),
                sigma_x: a.sigma_x.unwrap_or(auto.sigma_x),
                sigma_y: a.sigma_y.unwrap_or(auto.sigma_y),
                sigma_t: a.sigma_t.unwrap_or(auto.sigma_t),
                ..auto
            }
        }
    };
    if let Some(np) = a.np {
        let mut v = bandwidth_variable(p, np, a.eps_floor.unwrap_or(1e-6))?;
        v.sort_by(f64::total_cmp);
        let s = quantile_sorted(&v, 0.5);
        bw.sigma_x = a.sigma_x.unwrap_or(s);
        bw.sigma_y = a.sigma_y.unwrap_or(s);
    }
    if let Some(k) = &a.kernel {
        bw = bw.with_weight_kernel(k.parse()?);
    }
    bw.validate()?;
    Ok(bw)
}

fn coordinate_trend(s: &str) -> Result<Vec<CoordinateCovariate>> {
    s.split(',')
        .map(|c| match c.trim() {
            "x" => Ok(CoordinateCovariate::X),
            "y" => Ok(CoordinateCovariate::Y),
            "t" => Ok(CoordinateCovariate::T),
            o => Err(anyhow!("unknown trend term `{o}` (x, y, t)")),
        })
        .collect()
}

fn covariates(trend: &Option<String>, table: &Option<PathBuf>) -> Result<Option<Covariates>> {
    match (trend, table) {
        (Some(_), Some(_)) => bail!("use either --trend or --covariates, not both"),
        (Some(t), None) => Ok(Some(Covariates::Coordinates(coordinate_trend(t)?))),
        (None, Some(path)) => Ok(Some(Covariates::Table(io::read_covariates_csv(path)?))),
        (None, None) => Ok(None),
    }
}

/// First-order intensity used by the second-order steps.
struct FirstOrder {
    at_points: Vec<f64>,
    description: Value,
    fitted: Option<(QuadratureScheme, IntensityFit)>,
}

impl FirstOrder {
    fn resolve(a: &IntensityArgs, p: &PointPattern) -> Result<Self> {
        if let Some(v) = a.lambda {
            if a.trend.is_some() || a.covariates.is_some() {
                bail!("--lambda fixes a constant intensity and cannot be combined with --trend or --covariates");
            }
            if !(v > 0.0 && v.is_finite()) {
                bail!("--lambda must be positive, got {v}");
            }
            return Ok(Self {
                at_points: vec![v; p.len()],
                description: serde_json::json!({ "constant": v }),
                fitted: None,
            });
        }
        match covariates(&a.trend, &a.covariates)? {
            None => {
                let v = p.constant_intensity();
                info!("constant intensity n/|W x T| = {v}");
                Ok(Self {
                    at_points: vec![v; p.len()],
                    description: serde_json::json!({ "constant": v }),
                    fitted: None,
                })
            }
            Some(c) => {
                let q = QuadratureScheme::auto(p, None)?.with_covariates(c);
                let fit = fit_poisson(&q, None)?;
                let at_points = p.points().iter().map(|u| q.predict(u, &fit.theta)).collect();
                let description = serde_json::json!({ "log_linear": { "names": fit.names, "theta": fit.theta } });
                Ok(Self { at_points, description, fitted: Some((q, fit)) })
            }
        }
    }

    fn surface(&self, p: &PointPattern, grid: &SpaceTimeGrid) -> Result<Intensity> {
        match &self.fitted {
            None => Ok(Intensity::Constant(self.at_points.first().copied().unwrap_or(p.constant_intensity()))),
            Some((q, fit)) => {
                Ok(Intensity::gridded(*grid, grid.centers().map(|c| q.predict(&c, &fit.theta)).collect())?)
            }
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
#[allow(clippy::large_enum_variant)]
enum ModelFile {
    Local { global: GlobalFitResult, local: LocalFitResult },
    Global { fit: GlobalFitResult },
    Bare(CovarianceModel),
}

fn load_model_file(path: &Path) -> Result<ModelFile> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| {
        format!("{}: expected a covariance model or the JSON written by fit-global / fit-local", path.display())
    })
}

fn model_from_args(a: &ModelArgs) -> Result<CovarianceModel> {
    let explicit = a.family.is_some() || a.sigma2.is_some();
    let sources = usize::from(a.model.is_some()) + usize::from(a.scenario.is_some()) + usize::from(explicit);
    if sources != 1 {
        bail!("give exactly one of --model FILE, --scenario ID, or --family with --sigma2 --alpha --beta");
    }
    if let Some(path) = &a.model {
        return Ok(match load_model_file(path)? {
            ModelFile::Local { global, .. } => global.params,
            ModelFile::Global { fit } => fit.params,
            ModelFile::Bare(m) => m,
        });
    }
    if let Some(id) = &a.scenario {
        return Ok(scenario(id)?.model);
    }
    let need = |v: Option<f64>, name: &str| v.ok_or_else(|| anyhow!("--{name} is required with --family"));
    let family: ModelFamily = a.family.as_deref().unwrap_or("sep_exp").parse()?;
    let (sigma2, alpha, beta) = (need(a.sigma2, "sigma2")?, need(a.alpha, "alpha")?, need(a.beta, "beta")?);
    Ok(match family {
        ModelFamily::SeparableExponential => CovarianceModel::separable(sigma2, alpha, beta)?,
        ModelFamily::Gneiting => CovarianceModel::gneiting_full(
            sigma2,
            alpha,
            beta,
            a.gamma_s.unwrap_or(1.0),
            a.gamma_t.unwrap_or(1.0),
            need(a.delta, "delta")?,
        )?,
    })
}

fn describe(m: &CovarianceModel) -> String {
    let mut s = format!("sigma2={:.4} alpha={:.4} beta={:.4}", m.sigma2(), m.alpha(), m.beta());
    if let Some(d) = m.delta() {
        s.push_str(&format!(" delta={d:.4}"));
    }
    s
}

fn lookup(s: &Option<String>) -> Result<FieldLookup> {
    Ok(s.as_deref().map(str::parse).transpose()?.unwrap_or_default())
}

pub fn simulate(ctx: &Env, a: &SimulateArgs) -> Result<()> {
    let window = ctx.fixed_window()?;
    let model = model_from_args(&a.model)?;
    let n_expected = a.n_expected.unwrap_or(1000.0);
    let dims = triple(&a.grid, (32, 32, 50), "--grid NX,NY,NT")?;
    let mut cfg = SimulationConfig::with_expected(model, window, dims, n_expected, ctx.seed)?;
    cfg.lookup = lookup(&a.lookup)?;
    if let Some(path) = &a.local_params {
        let rows = io::read_local_params_csv(path, model.family())?;
        let pattern = PointPattern::new(rows.iter().map(|r| r.0).collect(), window)?;
        let mut fit = LocalFitResult::uniform(model, rows.len(), BandwidthSet::new(1.0, 1.0, 1.0, 1.0, 1.0)?);
        fit.params = rows.into_iter().map(|r| r.1).collect();
        let block = triple(&a.block, DEFAULT_BLOCK, "--block BX,BY,BT")?;
        cfg.field = FieldSpec::Local { global: model, fit, pattern, block };
    }
    let sim = lgcp_simulate(&cfg)?;
    let out = ctx.out(&a.out, "pattern.csv");
    io::write_pattern_csv(&out, &sim.pattern)?;
    if let (Some(path), Some(field)) = (&a.field, &sim.field) {
        io::write_field_csv(path, field)?;
    }
    println!("simulated {} points (dominating {}) -> {}", sim.pattern.len(), sim.n_dominating, out.display());
    Ok(())
}

fn correction(s: &Option<String>) -> Result<EdgeCorrection> {
    match s.as_deref() {
        None | Some("translation") => Ok(EdgeCorrection::Translation),
        Some("none") => Ok(EdgeCorrection::None),
        Some(o) => bail!("unknown edge correction `{o}` (translation, none)"),
    }
}

#[derive(Serialize)]
struct StatsReport<'a> {
    n: usize,
    window: SpaceTimeWindow,
    intensity: &'a Value,
    bandwidths: BandwidthSet,
    r_values: &'a [f64],
    h_values: &'a [f64],
}

pub fn stats(ctx: &Env, a: &StatsArgs) -> Result<()> {
    let p = ctx.read_pattern(&a.pattern)?;
    let lam = FirstOrder::resolve(&a.intensity, &p)?;
    let bw = bandwidths(&a.bandwidths, &p)?;
    let grid = lag_grid(&a.lags, p.window())?;
    let stack = pcf_local_all(&p, &lam.at_points, &bw, &grid, correction(&a.correction)?)?;
    io::write_statistic_csv(&ctx.out_dir.join("pcf.csv"), &stats::pcf_mean(&stack))?;
    if a.local {
        io::write_statistic_csv(&ctx.out_dir.join("pcf_local.csv"), &stack)?;
    }
    if a.k {
        io::write_statistic_csv(&ctx.out_dir.join("k.csv"), &k_inhom(&p, &lam.at_points, &grid)?)?;
    }
    let report = StatsReport {
        n: p.len(),
        window: *p.window(),
        intensity: &lam.description,
        bandwidths: bw,
        r_values: grid.r_values(),
        h_values: grid.h_values(),
    };
    io::write_json(&ctx.out_dir.join("stats.json"), &report)?;
    println!("{} points, {}x{} lags -> {}", p.len(), grid.nr(), grid.nh(), ctx.out_dir.display());
    Ok(())
}

pub fn fit_intensity(ctx: &Env, a: &FitIntensityArgs) -> Result<()> {
    let p = ctx.read_pattern(&a.pattern)?;
    let mut q = QuadratureScheme::auto(&p, a.dummies)?;
    if let Some(c) = covariates(&a.trend, &a.covariates)? {
        q = q.with_covariates(c);
    }
    let fit = fit_poisson(&q, None)?;
    io::write_json(&ctx.out_dir.join("intensity.json"), &fit)?;
    println!("theta = {:?} ({} iterations, converged {})", fit.theta, fit.iterations, fit.converged);
    if a.local {
        let bw = bandwidths(&a.bandwidths, &p)?;
        let (nx, ny, nt) = triple(&a.grid, (10, 10, 5), "--grid NX,NY,NT")?;
        let grid = SpaceTimeGrid::new(*p.window(), nx, ny, nt)?;
        let field = fit_local_intensity(&q, &bw, &grid);
        let failed = field.fits.iter().filter(|f| f.is_err()).count();
        io::write_local_intensity_csv(&ctx.out_dir.join("intensity_local.csv"), &field)?;
        println!("local fits at {} locations ({failed} failed)", field.fits.len());
    }
    Ok(())
}

/// Everything a contrast fit needs, resolved from the flags.
struct FitSetup {
    pattern: PointPattern,
    lambda: FirstOrder,
    bw: BandwidthSet,
    spec: ContrastSpec,
    opts: FitOptions,
    starts: Option<Vec<CovarianceModel>>,
}

impl FitSetup {
    fn new(ctx: &Env, a: &FitArgs) -> Result<Self> {
        let pattern = ctx.read_pattern(&a.pattern)?;
        let lambda = FirstOrder::resolve(&a.intensity, &pattern)?;
        let bw = bandwidths(&a.bandwidths, &pattern)?;
        let family: ModelFamily = a.family.as_deref().unwrap_or("sep_exp").parse()?;
        let mut spec = ContrastSpec::new(lag_grid(&a.lags, pattern.window())?, family);
        if let Some(t) = &a.transform {
            spec = spec.with_transform(t.parse()?);
        }
        spec.free_gammas = a.free_gammas;
        let mut opts = FitOptions::default();
        if let Some(m) = a.max_evals {
            opts.simplex.max_evals = m;
        }
        let starts = match &a.starts {
            None => None,
            Some(path) => {
                let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                Some(
                    serde_json::from_str::<Vec<CovarianceModel>>(&text)
                        .with_context(|| format!("{}", path.display()))?,
                )
            }
        };
        Ok(Self { pattern, lambda, bw, spec, opts, starts })
    }

    /// Inputs recorded next to the estimates.
    fn header(&self) -> Result<Value> {
        Ok(serde_json::json!({
            "n": self.pattern.len(),
            "window": self.pattern.window(),
            "intensity": self.lambda.description,
            "bandwidths": self.bw,
            "r_values": self.spec.grid.r_values(),
            "h_values": self.spec.grid.h_values(),
        }))
    }
}

pub fn fit_global_cmd(ctx: &Env, a: &FitArgs) -> Result<()> {
    let f = FitSetup::new(ctx, a)?;
    let fit = fit_global(&f.pattern, &f.lambda.at_points, &f.spec, &f.bw, f.starts.as_deref(), &f.opts)?;
    let mut out = f.header()?;
    out["fit"] = serde_json::to_value(&fit)?;
    io::write_json(&ctx.out_dir.join("fit_global.json"), &out)?;
    println!("global fit {}, contrast {:.6e}", describe(&fit.params), fit.contrast);
    Ok(())
}

pub fn fit_local_cmd(ctx: &Env, a: &FitArgs) -> Result<()> {
    let f = FitSetup::new(ctx, a)?;
    let (global, local) = fit_local(&f.pattern, &f.lambda.at_points, &f.spec, &f.bw, f.starts.as_deref(), &f.opts)?;
    let mut out = f.header()?;
    out["global"] = serde_json::to_value(&global)?;
    out["local"] = serde_json::to_value(&local)?;
    io::write_json(&ctx.out_dir.join("fit_local.json"), &out)?;
    io::write_local_fit_csv(&ctx.out_dir.join("fit_local.csv"), &f.pattern, &local)?;
    let summary = summarize_local(&local);
    io::write_summary_csv(&ctx.out_dir.join("fit_local_summary.csv"), &summary)?;
    let failed = local.failures.iter().filter(|f| f.is_some()).count();
    println!("global fit {}; {} local fits ({failed} fell back to global)", describe(&global.params), local.len());
    for (name, s) in &summary {
        println!(
            "  {name:>7}: min {:.4} q1 {:.4} median {:.4} mean {:.4} q3 {:.4} max {:.4}",
            s.min, s.q1, s.median, s.mean, s.q3, s.max
        );
    }
    Ok(())
}

pub fn diagnose(ctx: &Env, a: &DiagnoseArgs) -> Result<()> {
    let p = ctx.read_pattern(&a.pattern)?;
    let fitted = match (&a.fit, a.poisson) {
        (Some(_), true) => bail!("use either --fit FILE or --poisson"),
        (None, false) => bail!("--fit FILE (or --poisson) is required"),
        (None, true) => FittedModel::Poisson,
        (Some(path), false) => match load_model_file(path)? {
            ModelFile::Local { local, .. } => {
                if local.len() != p.len() {
                    bail!("{} holds {} local fits but the pattern has {} points", path.display(), local.len(), p.len());
                }
                FittedModel::Local { fit: local, pattern: p.clone() }
            }
            ModelFile::Global { fit } => FittedModel::Global(fit.params),
            ModelFile::Bare(m) => FittedModel::Global(m),
        },
    };
    let mut opts = DiagnosticOptions::default().with_q(a.q.unwrap_or(stlgcp::diagnostics::DEFAULT_Q));
    opts.sim_grid = triple(&a.sim_grid, opts.sim_grid, "--sim-grid NX,NY,NT")?;
    opts.lookup = lookup(&a.lookup)?;
    opts.block = triple(&a.block, opts.block, "--block BX,BY,BT")?;
    let lam = FirstOrder::resolve(&a.intensity, &p)?;
    let (nx, ny, nt) = opts.sim_grid;
    let intensity = lam.surface(&p, &SpaceTimeGrid::new(*p.window(), nx, ny, nt)?)?;
    let grid = lag_grid(&a.lags, p.window())?;
    let d = run_mc_test(&p, &intensity, &fitted, &grid, &opts, ctx.seed)?;
    io::write_json(&ctx.out(&a.out, "diagnose.json"), &d)?;
    io::write_envelopes_csv(&ctx.out(&a.envelopes, "envelopes.csv"), &d)?;
    println!("T* = {:.4}, p = {:.4} (Q = {}, {} cells excluded)", d.t_star, d.p_value, d.q, d.cells_excluded);
    Ok(())
}

pub fn replicate(ctx: &Env, a: &ReplicateArgs) -> Result<()> {
    let id = a.scenario.as_deref().ok_or_else(|| anyhow!("--scenario ID is required"))?;
    let s = scenario(id)?;
    let mut opts = ReplicateOptions { seed: ctx.seed, ..ReplicateOptions::default() };
    if let Some(WindowSpec::Fixed(w)) = ctx.window {
        opts.window = w;
    }
    if let Some(r) = a.replicates {
        opts.replicates = r;
    }
    if let Some(n) = a.n_expected {
        opts.n_expected = n;
    }
    if let Some(l) = a.lags {
        opts.lags = l;
    }
    if a.sim_grid.is_some() {
        opts.sim_grid = Some(triple(&a.sim_grid, (32, 32, 50), "--sim-grid NX,NY,NT")?);
    }
    if let Some(m) = a.max_evals {
        opts.fit.simplex.max_evals = m;
    }
    let b = &a.bandwidths;
    match [b.eps_space, b.eps_time, b.sigma_x, b.sigma_y, b.sigma_t] {
        [Some(e), Some(d), Some(x), Some(y), Some(t)] => opts.bandwidths = Some(BandwidthSet::new(e, d, x, y, t)?),
        [None, None, None, None, None] => {}
        _ => bail!("replicate takes either all five bandwidths or none (per-pattern selection)"),
    }
    let report = run_replicates(&s, &opts)?;
    io::write_json(&ctx.out_dir.join("replicate.json"), &report)?;
    let (header, row) = report.row();
    let path = ctx.out_dir.join("replicate_table.csv");
    std::fs::create_dir_all(&ctx.out_dir)?;
    std::fs::write(&path, format!("{}\n{}\n", header.join(","), row.join(",")))?;
    println!("{}", header.join(","));
    println!("{}", row.join(","));
    Ok(())
}

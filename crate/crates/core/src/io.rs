//! CSV and JSON input and output.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::Serialize;

use crate::contrast::{LocalFitResult, Summary};
use crate::covariance::{CovarianceModel, GneitingParams, ModelFamily, SeparableExponentialParams};
use crate::diagnostics::DiagnosticResult;
use crate::error::{Error, Result};
use crate::geometry::{Point, PointPattern, SpaceTimeWindow};
use crate::grf::GrfRealization;
use crate::intensity::{CovariateTable, LocalIntensityField};
use crate::stats::{StatisticKind, SummaryStatistic};

/// Rows of a CSV with an optional header, as `(line, fields)`. Fields are
/// parsed on access so non-numeric columns that are never read are allowed.
struct Table {
    header: Option<Vec<String>>,
    rows: Vec<(usize, csv::StringRecord)>,
    source: String,
}

fn read_table<R: Read>(reader: R, source: &str) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).trim(csv::Trim::All).from_reader(reader);
    let mut header = None;
    let mut rows = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = rec.position().map_or(k + 1, |p| p.line() as usize);
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        if k == 0 && rec.get(0).is_some_and(|f| f.parse::<f64>().is_err()) {
            header = Some(rec.iter().map(|f| f.to_ascii_lowercase()).collect());
            continue;
        }
        rows.push((line, rec));
    }
    Ok(Table { header, rows, source: source.to_string() })
}

impl Table {
    fn error(&self, line: usize, message: String) -> Error {
        Error::Parse { path: self.source.clone(), line, message }
    }

    /// Column positions of `names`; positional when there is no header.
    fn columns(&self, names: &[&str]) -> Result<Vec<usize>> {
        match &self.header {
            None => Ok((0..names.len()).collect()),
            Some(h) => names
                .iter()
                .map(|n| h.iter().position(|c| c == n).ok_or_else(|| self.error(1, format!("missing column `{n}`"))))
                .collect(),
        }
    }

    fn get(&self, line: usize, row: &csv::StringRecord, col: usize) -> Result<f64> {
        let f = row
            .get(col)
            .ok_or_else(|| self.error(line, format!("expected at least {} fields, found {}", col + 1, row.len())))?;
        match f.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            Ok(_) => Err(self.error(line, format!("non-finite value `{f}`"))),
            Err(_) => Err(self.error(line, format!("column {} `{f}` is not a number", col + 1))),
        }
    }
}

/// Parses `x,y,t` rows (header optional). Without a window the bounding box
/// of the points is used.
pub fn read_pattern<R: Read>(reader: R, source: &str, window: Option<SpaceTimeWindow>) -> Result<PointPattern> {
    let table = read_table(reader, source)?;
    let cols = table.columns(&["x", "y", "t"])?;
    let mut pts = Vec::with_capacity(table.rows.len());
    let mut lines = Vec::with_capacity(table.rows.len());
    for (line, row) in &table.rows {
        let v = |c: usize| table.get(*line, row, cols[c]);
        pts.push(Point::new(v(0)?, v(1)?, v(2)?));
        lines.push(*line);
    }
    let window = match window {
        Some(w) => w,
        None if pts.is_empty() => {
            return Err(Error::TooFewPoints { needed: 2, n: 0 });
        }
        None => SpaceTimeWindow::bounding_box(&pts)?,
    };
    let outside: Vec<(usize, f64, f64, f64)> =
        pts.iter().zip(&lines).filter(|(p, _)| !window.contains(p)).map(|(p, &l)| (l, p.x, p.y, p.t)).collect();
    if !outside.is_empty() {
        return Err(Error::PointsOutsideWindow(outside));
    }
    PointPattern::new(pts, window).map_err(|e| match e {
        Error::DuplicatePoint { first, second } => Error::Parse {
            path: source.to_string(),
            line: lines[second],
            message: format!("duplicates the point on line {}", lines[first]),
        },
        e => e,
    })
}

pub fn read_pattern_csv(path: &Path, window: Option<SpaceTimeWindow>) -> Result<PointPattern> {
    read_pattern(File::open(path)?, &path.display().to_string(), window)
}

/// Per-point parameters written by [`write_local_fit_csv`]:
/// `x,y,t,sigma2,alpha,beta[,delta]` by header name. Gneiting smoothness
/// parameters come from `gamma_s, gamma_t` columns when present, else 1.
pub fn read_local_params<R: Read>(
    reader: R,
    source: &str,
    family: ModelFamily,
) -> Result<Vec<(Point, CovarianceModel)>> {
    let table = read_table(reader, source)?;
    if table.header.is_none() {
        return Err(Error::Parse { path: source.to_string(), line: 1, message: "a header row is required".into() });
    }
    let names: &[&str] = match family {
        ModelFamily::SeparableExponential => &["x", "y", "t", "sigma2", "alpha", "beta"],
        ModelFamily::Gneiting => &["x", "y", "t", "sigma2", "alpha", "beta", "delta"],
    };
    let cols = table.columns(names)?;
    let gammas = table.columns(&["gamma_s", "gamma_t"]).ok();
    let gammas = gammas.as_deref();
    let mut out = Vec::with_capacity(table.rows.len());
    for (line, row) in &table.rows {
        let v = |c: usize| table.get(*line, row, cols[c]);
        let m = match family {
            ModelFamily::SeparableExponential => CovarianceModel::SeparableExponential(SeparableExponentialParams {
                sigma2: v(3)?,
                alpha: v(4)?,
                beta: v(5)?,
            }),
            ModelFamily::Gneiting => CovarianceModel::Gneiting(GneitingParams {
                sigma2: v(3)?,
                alpha: v(4)?,
                beta: v(5)?,
                gamma_s: gammas.map_or(Ok(1.0), |g| table.get(*line, row, g[0]))?,
                gamma_t: gammas.map_or(Ok(1.0), |g| table.get(*line, row, g[1]))?,
                delta: v(6)?,
            }),
        };
        m.validate().map_err(|e| Error::Parse { path: source.to_string(), line: *line, message: e.to_string() })?;
        out.push((Point::new(v(0)?, v(1)?, v(2)?), m));
    }
    Ok(out)
}

pub fn read_local_params_csv(path: &Path, family: ModelFamily) -> Result<Vec<(Point, CovarianceModel)>> {
    read_local_params(File::open(path)?, &path.display().to_string(), family)
}

/// Covariates on a lattice: header `x,y,t,z1[,z2...]`, every lattice node
/// exactly once. A column named `offset` becomes the offset.
pub fn read_covariates<R: Read>(reader: R, source: &str) -> Result<CovariateTable> {
    let table = read_table(reader, source)?;
    let header = table.header.clone().ok_or_else(|| Error::Parse {
        path: source.to_string(),
        line: 1,
        message: "a header row is required".into(),
    })?;
    let cols = table.columns(&["x", "y", "t"])?;
    let extra: Vec<usize> = (0..header.len()).filter(|c| !cols.contains(c)).collect();
    if extra.is_empty() {
        return Err(table.error(1, "no covariate columns besides x, y, t".into()));
    }
    let mut rows = Vec::with_capacity(table.rows.len());
    for (line, row) in &table.rows {
        let at = Point::new(
            table.get(*line, row, cols[0])?,
            table.get(*line, row, cols[1])?,
            table.get(*line, row, cols[2])?,
        );
        let values = extra.iter().map(|&c| table.get(*line, row, c)).collect::<Result<Vec<_>>>()?;
        rows.push((at, values));
    }
    CovariateTable::from_rows(extra.iter().map(|&c| header[c].clone()).collect(), rows)
}

pub fn read_covariates_csv(path: &Path) -> Result<CovariateTable> {
    read_covariates(File::open(path)?, &path.display().to_string())
}

fn writer(path: &Path) -> Result<csv::Writer<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(csv::Writer::from_path(path)?)
}

fn fmt(v: f64) -> String {
    format!("{v}")
}

pub fn write_pattern_csv(path: &Path, p: &PointPattern) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["x", "y", "t"])?;
    for q in p.points() {
        w.write_record([fmt(q.x), fmt(q.y), fmt(q.t)])?;
    }
    w.flush()?;
    Ok(())
}

/// `r,h,value` for one surface, `point_id,r,h,value` for a local stack.
pub fn write_statistic_csv(path: &Path, s: &SummaryStatistic) -> Result<()> {
    let mut w = writer(path)?;
    let stacked = s.kind == StatisticKind::LocalPcfStack;
    if stacked {
        w.write_record(["point_id", "r", "h", "value"])?;
    } else {
        w.write_record(["r", "h", "value"])?;
    }
    for layer in 0..s.layers {
        for (ir, &r) in s.grid.r_values().iter().enumerate() {
            for (ih, &h) in s.grid.h_values().iter().enumerate() {
                let v = fmt(s.value(layer, ir, ih));
                if stacked {
                    w.write_record([layer.to_string(), fmt(r), fmt(h), v])?;
                } else {
                    w.write_record([fmt(r), fmt(h), v])?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_field_csv(path: &Path, f: &GrfRealization) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["ix", "iy", "it", "x", "y", "t", "value"])?;
    for (c, v) in f.values.iter().enumerate() {
        let (ix, iy, it) = f.grid.coords(c);
        w.write_record([
            ix.to_string(),
            iy.to_string(),
            it.to_string(),
            fmt(f.grid.x_center(ix)),
            fmt(f.grid.y_center(iy)),
            fmt(f.grid.t_center(it)),
            fmt(*v),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `point_id,x,y,t,sigma2,alpha,beta[,delta[,gamma_s,gamma_t]],contrast,converged`;
/// the smoothness columns appear only when some point has them away from 1.
pub fn write_local_fit_csv(path: &Path, p: &PointPattern, fit: &LocalFitResult) -> Result<()> {
    if fit.len() != p.len() {
        return Err(Error::ShapeMismatch(format!("{} local fits for {} points", fit.len(), p.len())));
    }
    let gneiting = fit.global.family() == ModelFamily::Gneiting;
    let gamma = |m: &CovarianceModel| match m {
        CovarianceModel::Gneiting(g) => (g.gamma_s, g.gamma_t),
        _ => (1.0, 1.0),
    };
    let smooth = fit.params.iter().any(|m| gamma(m) != (1.0, 1.0));
    let mut w = writer(path)?;
    let mut header = vec!["point_id", "x", "y", "t", "sigma2", "alpha", "beta"];
    if gneiting {
        header.push("delta");
    }
    if smooth {
        header.extend(["gamma_s", "gamma_t"]);
    }
    header.extend(["contrast", "converged"]);
    w.write_record(&header)?;
    for (i, (q, m)) in p.points().iter().zip(&fit.params).enumerate() {
        let mut rec = vec![i.to_string(), fmt(q.x), fmt(q.y), fmt(q.t), fmt(m.sigma2()), fmt(m.alpha()), fmt(m.beta())];
        if gneiting {
            rec.push(fmt(m.delta().unwrap_or(f64::NAN)));
        }
        if smooth {
            let (gs, gt) = gamma(m);
            rec.extend([fmt(gs), fmt(gt)]);
        }
        rec.push(fmt(fit.contrast[i]));
        rec.push(fit.converged[i].to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// `vx,vy,vs,theta0[,theta1...],lambda`; failed locations are written as `nan`.
pub fn write_local_intensity_csv(path: &Path, field: &LocalIntensityField) -> Result<()> {
    let mut w = writer(path)?;
    let mut header = vec!["vx".to_string(), "vy".to_string(), "vs".to_string()];
    header.extend((0..field.names.len()).map(|k| format!("theta{k}")));
    header.push("lambda".into());
    w.write_record(&header)?;
    for (c, fit) in field.fits.iter().enumerate() {
        let at = field.grid.center(c);
        let mut rec = vec![fmt(at.x), fmt(at.y), fmt(at.t)];
        match fit {
            Ok(f) => {
                rec.extend(f.theta.iter().map(|v| fmt(*v)));
                rec.push(fmt(f.lambda));
            }
            Err(_) => rec.extend(std::iter::repeat_n("nan".to_string(), field.names.len() + 1)),
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// `parameter,min,q1,median,mean,q3,max`.
pub fn write_summary_csv(path: &Path, rows: &[(&str, Summary)]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["parameter", "min", "q1", "median", "mean", "q3", "max"])?;
    for (name, s) in rows {
        w.write_record([name.to_string(), fmt(s.min), fmt(s.q1), fmt(s.median), fmt(s.mean), fmt(s.q3), fmt(s.max)])?;
    }
    w.flush()?;
    Ok(())
}

/// `r,h,lower,mean,upper,observed`.
pub fn write_envelopes_csv(path: &Path, d: &DiagnosticResult) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["r", "h", "lower", "mean", "upper", "observed"])?;
    let nh = d.h_values.len();
    for (ir, &r) in d.r_values.iter().enumerate() {
        for (ih, &h) in d.h_values.iter().enumerate() {
            let c = ir * nh + ih;
            w.write_record([fmt(r), fmt(h), fmt(d.lower[c]), fmt(d.e_k[c]), fmt(d.upper[c]), fmt(d.observed[c])])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let mut f = File::create(path)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    Ok(())
}

//! Space-time covariance families for the driving Gaussian random field and
//! the pair correlation they induce on the Cox process.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest exponent accepted by [`pcf_theoretical`].
pub const MAX_PCF_EXPONENT: f64 = 700.0;

/// Upper clamp applied to the `(0, 2]` parameters before the logit transform.
pub const SMOOTHNESS_CLAMP: f64 = 2.0 - 1e-9;

/// `sigma2 * exp(-r / alpha) * exp(-h / beta)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeparableExponentialParams {
    pub sigma2: f64,
    pub alpha: f64,
    pub beta: f64,
}

/// Gneiting non-separable family with spatial dimension 2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GneitingParams {
    pub sigma2: f64,
    pub alpha: f64,
    pub beta: f64,
    #[serde(default = "one")]
    pub gamma_s: f64,
    #[serde(default = "one")]
    pub gamma_t: f64,
    pub delta: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum CovarianceModel {
    #[serde(rename = "sep_exp")]
    SeparableExponential(SeparableExponentialParams),
    #[serde(rename = "gneiting")]
    Gneiting(GneitingParams),
}

/// Family tag without parameter values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelFamily {
    #[serde(rename = "sep_exp")]
    SeparableExponential,
    Gneiting,
}

impl std::str::FromStr for ModelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sep_exp" | "separable" => Ok(ModelFamily::SeparableExponential),
            "gneiting" => Ok(ModelFamily::Gneiting),
            other => {
                Err(Error::InvalidParameter(format!("unknown model family `{other}` (expected sep_exp or gneiting)")))
            }
        }
    }
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} = {v} must be finite and > 0")))
    }
}

fn check_unit_range(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 && v <= 2.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} = {v} must lie in (0, 2]")))
    }
}

impl CovarianceModel {
    pub fn separable(sigma2: f64, alpha: f64, beta: f64) -> Result<Self> {
        let m = CovarianceModel::SeparableExponential(SeparableExponentialParams { sigma2, alpha, beta });
        m.validate()?;
        Ok(m)
    }

    /// Gneiting model with `gamma_s = gamma_t = 1`.
    pub fn gneiting(sigma2: f64, alpha: f64, beta: f64, delta: f64) -> Result<Self> {
        Self::gneiting_full(sigma2, alpha, beta, 1.0, 1.0, delta)
    }

    pub fn gneiting_full(sigma2: f64, alpha: f64, beta: f64, gamma_s: f64, gamma_t: f64, delta: f64) -> Result<Self> {
        let m = CovarianceModel::Gneiting(GneitingParams { sigma2, alpha, beta, gamma_s, gamma_t, delta });
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            CovarianceModel::SeparableExponential(p) => {
                check_positive("sigma2", p.sigma2)?;
                check_positive("alpha", p.alpha)?;
                check_positive("beta", p.beta)
            }
            CovarianceModel::Gneiting(p) => {
                check_positive("sigma2", p.sigma2)?;
                check_positive("alpha", p.alpha)?;
                check_positive("beta", p.beta)?;
                check_unit_range("gamma_s", p.gamma_s)?;
                check_unit_range("gamma_t", p.gamma_t)?;
                check_unit_range("delta", p.delta)
            }
        }
    }

    pub fn family(&self) -> ModelFamily {
        match self {
            CovarianceModel::SeparableExponential(_) => ModelFamily::SeparableExponential,
            CovarianceModel::Gneiting(_) => ModelFamily::Gneiting,
        }
    }

    pub fn sigma2(&self) -> f64 {
        match self {
            CovarianceModel::SeparableExponential(p) => p.sigma2,
            CovarianceModel::Gneiting(p) => p.sigma2,
        }
    }

    pub fn alpha(&self) -> f64 {
        match self {
            CovarianceModel::SeparableExponential(p) => p.alpha,
            CovarianceModel::Gneiting(p) => p.alpha,
        }
    }

    pub fn beta(&self) -> f64 {
        match self {
            CovarianceModel::SeparableExponential(p) => p.beta,
            CovarianceModel::Gneiting(p) => p.beta,
        }
    }

    pub fn delta(&self) -> Option<f64> {
        match self {
            CovarianceModel::SeparableExponential(_) => None,
            CovarianceModel::Gneiting(p) => Some(p.delta),
        }
    }

    /// Mean of the driving field, `-sigma2 / 2`, so that `E[exp(S)] = 1`.
    pub fn field_mean(&self) -> f64 {
        -0.5 * self.sigma2()
    }

    /// Same family and shape parameters with a different variance.
    pub fn with_sigma2(&self, sigma2: f64) -> Self {
        let mut m = *self;
        match &mut m {
            CovarianceModel::SeparableExponential(p) => p.sigma2 = sigma2,
            CovarianceModel::Gneiting(p) => p.sigma2 = sigma2,
        }
        m
    }

    /// Covariance at spatial distance `r` and time lag `h`, without argument
    /// checks. Callers must pass `r, h >= 0`.
    #[inline]
    pub fn cov_unchecked(&self, r: f64, h: f64) -> f64 {
        match self {
            CovarianceModel::SeparableExponential(p) => p.sigma2 * (-r / p.alpha - h / p.beta).exp(),
            CovarianceModel::Gneiting(p) => {
                let base = (h / p.beta).powf(p.gamma_t) + 1.0;
                let temporal = base.powf(p.delta / p.gamma_t);
                let spatial = (r / p.alpha).powf(p.gamma_s) / base.powf(p.delta / (2.0 * p.gamma_t));
                p.sigma2 / temporal * (-spatial).exp()
            }
        }
    }
}

pub fn cov_eval(m: &CovarianceModel, r: f64, h: f64) -> Result<f64> {
    if !(r >= 0.0 && h >= 0.0) {
        return Err(Error::InvalidParameter(format!("lags must be non-negative, got r = {r}, h = {h}")));
    }
    Ok(m.cov_unchecked(r, h))
}

/// Pair correlation of the log-Gaussian Cox process, `exp(C(r, h))`.
pub fn pcf_theoretical(m: &CovarianceModel, r: f64, h: f64) -> Result<f64> {
    let c = cov_eval(m, r, h)?;
    if c > MAX_PCF_EXPONENT {
        return Err(Error::NonFinite(format!("pcf exponent {c} exceeds {MAX_PCF_EXPONENT}")));
    }
    Ok(c.exp())
}

fn scaled_logit(v: f64) -> f64 {
    let v = v.min(SMOOTHNESS_CLAMP);
    (v / (2.0 - v)).ln()
}

fn scaled_logistic(u: f64) -> f64 {
    (2.0 / (1.0 + (-u).exp())).max(f64::MIN_POSITIVE)
}

/// Maps a model to an unconstrained vector: logs of `sigma2, alpha, beta`,
/// then scaled logits of `gamma_s, gamma_t, delta` for the Gneiting family.
pub fn pack_params(m: &CovarianceModel) -> Vec<f64> {
    match m {
        CovarianceModel::SeparableExponential(p) => vec![p.sigma2.ln(), p.alpha.ln(), p.beta.ln()],
        CovarianceModel::Gneiting(p) => vec![
            p.sigma2.ln(),
            p.alpha.ln(),
            p.beta.ln(),
            scaled_logit(p.gamma_s),
            scaled_logit(p.gamma_t),
            scaled_logit(p.delta),
        ],
    }
}

/// Inverse of [`pack_params`].
pub fn unpack_params(family: ModelFamily, v: &[f64]) -> Result<CovarianceModel> {
    if let Some(bad) = v.iter().find(|x| !x.is_finite()) {
        return Err(Error::NonFinite(format!("packed parameter {bad}")));
    }
    let expected = packed_len(family);
    if v.len() != expected {
        return Err(Error::ShapeMismatch(format!("expected {expected} packed parameters, got {}", v.len())));
    }
    let m = match family {
        ModelFamily::SeparableExponential => CovarianceModel::SeparableExponential(SeparableExponentialParams {
            sigma2: v[0].exp(),
            alpha: v[1].exp(),
            beta: v[2].exp(),
        }),
        ModelFamily::Gneiting => CovarianceModel::Gneiting(GneitingParams {
            sigma2: v[0].exp(),
            alpha: v[1].exp(),
            beta: v[2].exp(),
            gamma_s: scaled_logistic(v[3]),
            gamma_t: scaled_logistic(v[4]),
            delta: scaled_logistic(v[5]),
        }),
    };
    m.validate()?;
    Ok(m)
}

pub fn packed_len(family: ModelFamily) -> usize {
    match family {
        ModelFamily::SeparableExponential => 3,
        ModelFamily::Gneiting => 6,
    }
}

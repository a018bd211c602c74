//! Exponential-family response distributions and their link functions.
//!
//! Dispersion conventions: for the gaussian family `phi` is the variance
//! σ²; the gamma family is simulated with shape `1/phi` and scale `mu*phi`
//! so that `Var(y) = phi * mu²`; poisson and binomial fix `phi = 1`. The
//! binomial family takes 0/1 responses only.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Bernoulli, Distribution, Gamma, Normal, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FamilyError {
    #[error("{link} link undefined at mu = {value}")]
    LinkDomain { link: Link, value: f64 },
    #[error("{family} mean outside its domain: {value}")]
    MeanDomain { family: FamilyName, value: f64 },
    #[error("invalid {family} response at row {row}: {value}")]
    InvalidResponse { family: FamilyName, row: usize, value: f64 },
    #[error("{family} fixes the dispersion at 1, got {phi}")]
    FixedDispersion { family: FamilyName, phi: f64 },
    #[error("dispersion must be positive, got {0}")]
    Dispersion(f64),
    #[error("length mismatch: {0} vs {1}")]
    Length(usize, usize),
    #[error("unknown family `{0}` (expected gaussian, poisson, binomial or gamma)")]
    UnknownFamily(String),
    #[error("unknown link `{0}` (expected identity, log or logit)")]
    UnknownLink(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FamilyName {
    Gaussian,
    Poisson,
    Binomial,
    Gamma,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Link {
    Identity,
    Log,
    Logit,
}

impl fmt::Display for FamilyName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FamilyName::Gaussian => "gaussian",
            FamilyName::Poisson => "poisson",
            FamilyName::Binomial => "binomial",
            FamilyName::Gamma => "gamma",
        })
    }
}

impl fmt::Display for Link {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Link::Identity => "identity",
            Link::Log => "log",
            Link::Logit => "logit",
        })
    }
}

impl FromStr for Link {
    type Err = FamilyError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "identity" => Ok(Link::Identity),
            "log" => Ok(Link::Log),
            "logit" => Ok(Link::Logit),
            _ => Err(FamilyError::UnknownLink(s.to_string())),
        }
    }
}

// keeps exp() finite and logit means away from 0/1
const MAX_ETA: f64 = 700.0;
const MU_EPS: f64 = 1e-10;

impl Link {
    pub fn eval(self, mu: f64) -> Result<f64, FamilyError> {
        match self {
            Link::Identity => Ok(mu),
            Link::Log => {
                if mu > 0.0 {
                    Ok(mu.ln())
                } else {
                    Err(FamilyError::LinkDomain { link: self, value: mu })
                }
            }
            Link::Logit => {
                if mu > 0.0 && mu < 1.0 {
                    Ok((mu / (1.0 - mu)).ln())
                } else {
                    Err(FamilyError::LinkDomain { link: self, value: mu })
                }
            }
        }
    }

    pub fn inverse(self, eta: f64) -> f64 {
        match self {
            Link::Identity => eta,
            Link::Log => eta.min(MAX_ETA).exp(),
            Link::Logit => {
                if eta >= 0.0 {
                    1.0 / (1.0 + (-eta).exp())
                } else {
                    let e = eta.exp();
                    e / (1.0 + e)
                }
            }
        }
    }

    pub fn dmu_deta(self, eta: f64) -> f64 {
        match self {
            Link::Identity => 1.0,
            Link::Log => eta.min(MAX_ETA).exp(),
            Link::Logit => {
                let mu = self.inverse(eta);
                mu * (1.0 - mu)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Family {
    pub name: FamilyName,
    pub link: Link,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({})", self.name, self.link)
    }
}

impl FromStr for Family {
    type Err = FamilyError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let name = match s {
            "gaussian" => FamilyName::Gaussian,
            "poisson" => FamilyName::Poisson,
            "binomial" => FamilyName::Binomial,
            "gamma" => FamilyName::Gamma,
            _ => return Err(FamilyError::UnknownFamily(s.to_string())),
        };
        Ok(Family::canonical(name))
    }
}

impl Family {
    /// Default pairing: gaussian–identity, poisson–log, binomial–logit, gamma–log.
    pub fn canonical(name: FamilyName) -> Family {
        let link = match name {
            FamilyName::Gaussian => Link::Identity,
            FamilyName::Poisson => Link::Log,
            FamilyName::Binomial => Link::Logit,
            FamilyName::Gamma => Link::Log,
        };
        Family { name, link }
    }

    pub fn gaussian() -> Family {
        Family::canonical(FamilyName::Gaussian)
    }
    pub fn poisson() -> Family {
        Family::canonical(FamilyName::Poisson)
    }
    pub fn binomial() -> Family {
        Family::canonical(FamilyName::Binomial)
    }
    pub fn gamma() -> Family {
        Family::canonical(FamilyName::Gamma)
    }

    /// True when the dispersion is fixed at 1 rather than estimated.
    pub fn fixed_scale(&self) -> bool {
        matches!(self.name, FamilyName::Poisson | FamilyName::Binomial)
    }

    pub fn link_eval(&self, mu: f64) -> Result<f64, FamilyError> {
        self.link.eval(mu)
    }

    pub fn inv_link(&self, eta: f64) -> f64 {
        self.link.inverse(eta)
    }

    pub fn dmu_deta(&self, eta: f64) -> f64 {
        self.link.dmu_deta(eta)
    }

    fn check_mean(&self, mu: f64) -> Result<(), FamilyError> {
        let ok = match self.name {
            FamilyName::Gaussian => mu.is_finite(),
            FamilyName::Poisson | FamilyName::Gamma => mu > 0.0 && mu.is_finite(),
            FamilyName::Binomial => mu > 0.0 && mu < 1.0,
        };
        if ok {
            Ok(())
        } else {
            Err(FamilyError::MeanDomain {
                family: self.name,
                value: mu,
            })
        }
    }

    /// Variance function V(mu).
    pub fn variance(&self, mu: f64) -> Result<f64, FamilyError> {
        self.check_mean(mu)?;
        Ok(self.variance_unchecked(mu))
    }

    pub(crate) fn variance_unchecked(&self, mu: f64) -> f64 {
        match self.name {
            FamilyName::Gaussian => 1.0,
            FamilyName::Poisson => mu,
            FamilyName::Binomial => mu * (1.0 - mu),
            FamilyName::Gamma => mu * mu,
        }
    }

    /// Keep a mean inside the open domain of the variance function.
    pub(crate) fn clamp_mean(&self, mu: f64) -> f64 {
        match self.name {
            FamilyName::Gaussian => mu,
            FamilyName::Poisson | FamilyName::Gamma => mu.max(MU_EPS),
            FamilyName::Binomial => mu.clamp(MU_EPS, 1.0 - MU_EPS),
        }
    }

    pub fn validate_response(&self, y: &[f64]) -> Result<(), FamilyError> {
        for (i, &v) in y.iter().enumerate() {
            let ok = v.is_finite()
                && match self.name {
                    FamilyName::Gaussian => true,
                    FamilyName::Poisson => v >= 0.0 && v.fract() == 0.0,
                    FamilyName::Binomial => v == 0.0 || v == 1.0,
                    FamilyName::Gamma => v > 0.0,
                };
            if !ok {
                return Err(FamilyError::InvalidResponse {
                    family: self.name,
                    row: i + 1,
                    value: v,
                });
            }
        }
        Ok(())
    }

    /// Starting means for IRLS, nudged into the interior of the domain.
    pub fn initial_mean(&self, y: f64) -> f64 {
        match self.name {
            FamilyName::Gaussian => y,
            FamilyName::Poisson => y + 0.1,
            FamilyName::Binomial => (y + 0.5) / 2.0,
            FamilyName::Gamma => y,
        }
    }

    /// Unit deviance d(y, mu); the model deviance is the weighted sum.
    pub fn unit_deviance(&self, y: f64, mu: f64) -> f64 {
        let xlogy = |a: f64, b: f64| if a == 0.0 { 0.0 } else { a * (a / b).ln() };
        match self.name {
            FamilyName::Gaussian => (y - mu) * (y - mu),
            FamilyName::Poisson => 2.0 * (xlogy(y, mu) - (y - mu)),
            FamilyName::Binomial => 2.0 * (xlogy(y, mu) + xlogy(1.0 - y, 1.0 - mu)),
            FamilyName::Gamma => 2.0 * (-(y / mu).ln() + (y - mu) / mu),
        }
        .max(0.0)
    }

    pub fn deviance(&self, y: &[f64], mu: &[f64], weights: Option<&[f64]>) -> f64 {
        y.iter()
            .zip(mu)
            .enumerate()
            .map(|(i, (&yi, &mi))| weights.map_or(1.0, |w| w[i]) * self.unit_deviance(yi, mi))
            .sum()
    }

    /// Signed square roots of the weighted unit deviances.
    pub fn deviance_residuals(&self, y: &[f64], mu: &[f64], weights: Option<&[f64]>) -> Result<Vec<f64>, FamilyError> {
        if y.len() != mu.len() {
            return Err(FamilyError::Length(y.len(), mu.len()));
        }
        if let Some(w) = weights {
            if w.len() != y.len() {
                return Err(FamilyError::Length(y.len(), w.len()));
            }
        }
        self.validate_response(y)?;
        for &m in mu {
            self.check_mean(m)?;
        }
        Ok(y.iter()
            .zip(mu)
            .enumerate()
            .map(|(i, (&yi, &mi))| {
                let d = weights.map_or(1.0, |w| w[i]) * self.unit_deviance(yi, mi);
                let s = if yi > mi {
                    1.0
                } else if yi < mi {
                    -1.0
                } else {
                    0.0
                };
                s * d.sqrt()
            })
            .collect())
    }

    pub fn check_dispersion(&self, phi: f64) -> Result<(), FamilyError> {
        if self.fixed_scale() {
            if (phi - 1.0).abs() > 1e-12 {
                return Err(FamilyError::FixedDispersion { family: self.name, phi });
            }
        } else if !(phi > 0.0 && phi.is_finite()) {
            return Err(FamilyError::Dispersion(phi));
        }
        Ok(())
    }

    /// One draw from the response distribution with mean `mu`.
    pub fn sample_one<R: Rng + ?Sized>(&self, mu: f64, phi: f64, rng: &mut R) -> f64 {
        match self.name {
            FamilyName::Gaussian => {
                let sd = phi.sqrt();
                Normal::new(mu, sd).map(|d| d.sample(rng)).unwrap_or(mu)
            }
            FamilyName::Poisson => {
                if mu <= 0.0 {
                    0.0
                } else {
                    Poisson::new(mu).map(|d| d.sample(rng)).unwrap_or(0.0)
                }
            }
            FamilyName::Binomial => {
                let p = mu.clamp(0.0, 1.0);
                if Bernoulli::new(p).map(|d| d.sample(rng)).unwrap_or(false) {
                    1.0
                } else {
                    0.0
                }
            }
            FamilyName::Gamma => Gamma::new(1.0 / phi, mu * phi).map(|d| d.sample(rng)).unwrap_or(mu),
        }
    }

    /// Draw a response vector elementwise from D(mu, phi).
    pub fn simulate_response<R: Rng + ?Sized>(
        &self,
        mu: &[f64],
        phi: f64,
        rng: &mut R,
    ) -> Result<Vec<f64>, FamilyError> {
        self.check_dispersion(phi)?;
        for &m in mu {
            if !(m.is_finite() && (self.name == FamilyName::Gaussian || m >= 0.0)) {
                return Err(FamilyError::MeanDomain {
                    family: self.name,
                    value: m,
                });
            }
        }
        Ok(mu.iter().map(|&m| self.sample_one(m, phi, rng)).collect())
    }
}

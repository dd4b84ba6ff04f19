//! Pseudo-derivatives of the spike nonlinearity.
//!
//! All functions are evaluated in the threshold-centred variable
//! `x = u - theta`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SurrogateKind {
    /// Central Gaussian minus two wider side Gaussians.
    MultiGaussian { h: f64, s: f64, sigma: f64 },
    Gaussian { sigma: f64 },
    Linear { alpha: f64 },
    Slayer { alpha: f64 },
}

impl Default for SurrogateKind {
    fn default() -> Self {
        SurrogateKind::multi_gaussian()
    }
}

impl SurrogateKind {
    pub fn multi_gaussian() -> Self {
        SurrogateKind::MultiGaussian {
            h: 0.15,
            s: 6.0,
            sigma: 0.5,
        }
    }

    pub fn gaussian() -> Self {
        SurrogateKind::Gaussian { sigma: 0.5 }
    }

    pub fn linear() -> Self {
        SurrogateKind::Linear { alpha: 1.0 }
    }

    pub fn slayer() -> Self {
        SurrogateKind::Slayer { alpha: 5.0 }
    }

    /// The four kinds at their default hyperparameters.
    pub fn defaults() -> [SurrogateKind; 4] {
        [
            Self::multi_gaussian(),
            Self::gaussian(),
            Self::linear(),
            Self::slayer(),
        ]
    }

    pub fn name(&self) -> &'static str {
        match self {
            SurrogateKind::MultiGaussian { .. } => "multi_gaussian",
            SurrogateKind::Gaussian { .. } => "gaussian",
            SurrogateKind::Linear { .. } => "linear",
            SurrogateKind::Slayer { .. } => "slayer",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            SurrogateKind::MultiGaussian { h, s, sigma } => h > 0.0 && s > 1.0 && sigma > 0.0,
            SurrogateKind::Gaussian { sigma } => sigma > 0.0,
            SurrogateKind::Linear { alpha } | SurrogateKind::Slayer { alpha } => alpha > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid surrogate parameters: {self:?}")))
        }
    }

    #[inline]
    pub fn grad(&self, u: f64, theta: f64) -> f64 {
        surrogate_grad(*self, u, theta)
    }
}

#[inline]
fn normal_pdf(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    (-0.5 * z * z).exp() / (sd * (2.0 * PI).sqrt())
}

pub fn mg_grad(u: f64, theta: f64, h: f64, s: f64, sigma: f64) -> f64 {
    let x = u - theta;
    (1.0 + h) * normal_pdf(x, 0.0, sigma)
        - h * normal_pdf(x, sigma, s * sigma)
        - h * normal_pdf(x, -sigma, s * sigma)
}

pub fn linear_grad(u: f64, theta: f64, alpha: f64) -> f64 {
    (1.0 - alpha * (u - theta).abs()).max(0.0)
}

pub fn slayer_grad(u: f64, theta: f64, alpha: f64) -> f64 {
    (-alpha * (u - theta).abs()).exp()
}

pub fn gaussian_grad(u: f64, theta: f64, sigma: f64) -> f64 {
    normal_pdf(u, theta, sigma)
}

#[inline]
pub fn surrogate_grad(kind: SurrogateKind, u: f64, theta: f64) -> f64 {
    match kind {
        SurrogateKind::MultiGaussian { h, s, sigma } => mg_grad(u, theta, h, s, sigma),
        SurrogateKind::Gaussian { sigma } => gaussian_grad(u, theta, sigma),
        SurrogateKind::Linear { alpha } => linear_grad(u, theta, alpha),
        SurrogateKind::Slayer { alpha } => slayer_grad(u, theta, alpha),
    }
}

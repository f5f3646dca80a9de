//! Ambient spaces: Euclidean space and flat tori.
//!
//! Tori are coordinatewise periodic; integration happens in the universal
//! cover and coordinates are reduced modulo the periods only for output and
//! comparison.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpaceKind {
    Euclidean,
    FlatTorus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmbientSpace {
    pub kind: SpaceKind,
    pub dimension: usize,
    /// Coordinate periods; present iff `kind == FlatTorus`.
    pub torus_periods: Option<Vec<f64>>,
}

impl AmbientSpace {
    pub fn euclidean(dimension: usize) -> Self {
        AmbientSpace {
            kind: SpaceKind::Euclidean,
            dimension,
            torus_periods: None,
        }
    }

    pub fn flat_torus(periods: Vec<f64>) -> Self {
        AmbientSpace {
            kind: SpaceKind::FlatTorus,
            dimension: periods.len(),
            torus_periods: Some(periods),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dimension == 0 {
            return Err(Error::config("ambient dimension must be at least 1"));
        }
        match (self.kind, &self.torus_periods) {
            (SpaceKind::Euclidean, None) => Ok(()),
            (SpaceKind::Euclidean, Some(_)) => {
                Err(Error::config("euclidean space must not declare periods"))
            }
            (SpaceKind::FlatTorus, Some(p)) => {
                if p.len() != self.dimension {
                    return Err(Error::config(format!(
                        "torus periods length {} != dimension {}",
                        p.len(),
                        self.dimension
                    )));
                }
                if p.iter().any(|&v| v.is_nan() || v <= 0.0) {
                    return Err(Error::config("torus periods must all be positive"));
                }
                Ok(())
            }
            (SpaceKind::FlatTorus, None) => {
                Err(Error::config("flat torus requires coordinate periods"))
            }
        }
    }

    pub fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dimension {
            return Err(Error::DimensionMismatch {
                expected: self.dimension,
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Reduce a point to the fundamental domain `[0, L_i)`. No-op on Euclidean space.
    pub fn reduce(&self, x: &[f64]) -> Vec<f64> {
        match &self.torus_periods {
            None => x.to_vec(),
            Some(periods) => x
                .iter()
                .zip(periods)
                .map(|(&v, &l)| v.rem_euclid(l))
                .collect(),
        }
    }

    /// Per-coordinate shortest displacement from `b` to `a` (torus-aware).
    pub fn displacement(&self, a: &[f64], b: &[f64]) -> Vec<f64> {
        match &self.torus_periods {
            None => a.iter().zip(b).map(|(&u, &v)| u - v).collect(),
            Some(periods) => a
                .iter()
                .zip(b)
                .zip(periods)
                .map(|((&u, &v), &l)| {
                    let mut d = (u - v).rem_euclid(l);
                    if d > l / 2.0 {
                        d -= l;
                    }
                    d
                })
                .collect(),
        }
    }

    /// Distance between points: Euclidean norm of the shortest displacement.
    pub fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        self.displacement(a, b)
            .iter()
            .map(|d| d * d)
            .sum::<f64>()
            .sqrt()
    }
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

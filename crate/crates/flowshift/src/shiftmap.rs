//! Shift maps along orbits: `alpha -> (x -> F(x, alpha(x)))`.
//!
//! A time function is admissible at `x` when `alpha(x)` lies inside the
//! integrable horizon there; a `DomainEscape` from the flow is exactly the
//! failure of that membership. Self-maps are represented by their
//! restrictions to sample grids and compared pointwise.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fields::{SampleGrid, ScalarFieldSpec, VectorFieldSpec};
use crate::flow::{integrate, IntegratorConfig};
use crate::par_map;

/// A time function bound to a field, i.e. a candidate shift map.
#[derive(Debug, Clone)]
pub struct ShiftFunction {
    pub alpha: ScalarFieldSpec,
    pub field: VectorFieldSpec,
    /// Grid on which pointwise admissibility was last verified.
    pub validated_on: Option<SampleGrid>,
}

impl ShiftFunction {
    pub fn new(field: VectorFieldSpec, alpha: ScalarFieldSpec) -> Result<Self> {
        if field.space != alpha.space {
            return Err(Error::config(format!(
                "shift function '{}' and field '{}' live on different spaces",
                alpha.name, field.name
            )));
        }
        Ok(ShiftFunction {
            alpha,
            field,
            validated_on: None,
        })
    }
}

/// A self-map of the ambient space restricted to a grid.
#[derive(Debug, Clone)]
pub struct MapOnGrid {
    pub grid: SampleGrid,
    pub images: Vec<Vec<f64>>,
    pub tag: String,
}

impl MapOnGrid {
    /// The identity map on a grid.
    pub fn identity(grid: &SampleGrid) -> Self {
        MapOnGrid {
            grid: grid.clone(),
            images: grid.points.clone(),
            tag: "identity".to_string(),
        }
    }
}

/// A scalar function sampled on a grid, aligned with its point list.
#[derive(Debug, Clone, Serialize)]
pub struct SampledScalar {
    pub values: Vec<f64>,
    pub tag: String,
}

/// Pointwise comparison verdict for two grid maps.
#[derive(Debug, Clone, Serialize)]
pub struct VerificationVerdict {
    pub pass: bool,
    pub max_distance: f64,
    pub mean_distance: f64,
    pub worst_index: Option<usize>,
}

/// Evaluate the shift map at one point: `F(x, alpha(x))`.
pub fn shift_apply(sf: &ShiftFunction, x: &[f64], cfg: &IntegratorConfig) -> Result<Vec<f64>> {
    let t = sf.alpha.evaluate(x);
    integrate(&sf.field, x, t, cfg)
}

/// Evaluate the shift map over a whole grid, recording the validation.
///
/// Per-point domain escapes are aggregated into one error naming how many
/// grid points were inadmissible.
pub fn shift_on_grid(
    sf: &mut ShiftFunction,
    grid: &SampleGrid,
    cfg: &IntegratorConfig,
) -> Result<MapOnGrid> {
    if grid.space != sf.field.space {
        return Err(Error::GridMismatch(format!(
            "grid '{}' does not live on the space of field '{}'",
            grid.description, sf.field.name
        )));
    }
    let results = par_map(&grid.points, |x| shift_apply(sf, x, cfg));
    let mut images = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(y) => images.push(y),
            Err(e) => failures.push((i, e)),
        }
    }
    if !failures.is_empty() {
        let (i, first) = &failures[0];
        return Err(Error::ShiftEscapes {
            alpha: sf.alpha.name.clone(),
            failures: failures.len(),
            total: grid.len(),
            first: format!("point #{i} {:?}: {first}", grid.points[*i]),
        });
    }
    sf.validated_on = Some(grid.clone());
    Ok(MapOnGrid {
        grid: grid.clone(),
        images,
        tag: format!("shift[{}]({})", sf.field.name, sf.alpha.name),
    })
}

/// Compare two grid maps pointwise with the space's metric.
pub fn maps_equal(a: &MapOnGrid, b: &MapOnGrid, tol: f64) -> Result<VerificationVerdict> {
    if !a.grid.same_points(&b.grid) {
        return Err(Error::GridMismatch(format!(
            "'{}' and '{}' are sampled on different grids",
            a.tag, b.tag
        )));
    }
    if a.images.len() != b.images.len() {
        return Err(Error::GridMismatch("image lists differ in length".into()));
    }
    let space = &a.grid.space;
    let mut max_distance = 0.0_f64;
    let mut sum = 0.0_f64;
    let mut worst_index = None;
    for (i, (p, q)) in a.images.iter().zip(&b.images).enumerate() {
        let d = space.distance(p, q);
        sum += d;
        if d > max_distance {
            max_distance = d;
            worst_index = Some(i);
        }
    }
    let n = a.images.len();
    Ok(VerificationVerdict {
        pass: max_distance <= tol,
        max_distance,
        mean_distance: if n == 0 { 0.0 } else { sum / n as f64 },
        worst_index,
    })
}

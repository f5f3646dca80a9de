//! Pushforward of a field through its own shift maps.
//!
//! For `h(x) = F(x, alpha(x))` a local diffeomorphism, transporting `F`
//! through `h` yields `(1 + F(alpha)) F`, where `F(alpha)` is the derivative
//! of `alpha` along `F` — so shift maps reparametrize the field they come
//! from. The identity is verified at `y = h(x)` as
//! `Dh(x) F(x) = (1 + F(alpha)(x)) F(h(x))`, which avoids constructing
//! `h^{-1}`. `Dh` comes from central differences of the flow map with one
//! Richardson refinement; the diffeomorphism hypothesis is replaced by the
//! checkable proxy `1 + F(alpha) != 0` on the grid.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fields::{default_fd_step, scale_field, SampleGrid, ScalarFieldSpec, VectorFieldSpec};
use crate::flow::{integrate, IntegratorConfig};
use crate::par_map;
use crate::report::{ResidualRecord, VerificationReport};

/// Factor magnitudes at or below this fail the diffeomorphism proxy.
pub const FACTOR_DEGENERATE_TOL: f64 = 1e-9;

/// A field, a time function, and the grid on which to verify the identity.
#[derive(Debug, Clone)]
pub struct PushforwardCase {
    pub field: VectorFieldSpec,
    pub alpha: ScalarFieldSpec,
    pub grid: SampleGrid,
}

impl PushforwardCase {
    pub fn new(field: VectorFieldSpec, alpha: ScalarFieldSpec, grid: SampleGrid) -> Result<Self> {
        if field.space != alpha.space {
            return Err(Error::config(format!(
                "pushforward case: field '{}' and alpha '{}' live on different spaces",
                field.name, alpha.name
            )));
        }
        if grid.space != field.space {
            return Err(Error::GridMismatch(format!(
                "grid '{}' does not live on the space of field '{}'",
                grid.description, field.name
            )));
        }
        Ok(PushforwardCase { field, alpha, grid })
    }

    /// Check the local-diffeomorphism proxy `1 + F(alpha) != 0` on the grid.
    pub fn check_factor(&self) -> Result<Vec<f64>> {
        let mut factors = Vec::with_capacity(self.grid.len());
        for (i, x) in self.grid.points.iter().enumerate() {
            let factor = 1.0 + directional_derivative(&self.field, &self.alpha, x);
            if factor.abs() <= FACTOR_DEGENERATE_TOL {
                return Err(Error::DegenerateFactor {
                    at: format!("grid point #{i} {x:?}"),
                    value: factor,
                });
            }
            factors.push(factor);
        }
        Ok(factors)
    }
}

/// Derivative of `alpha` along `F`: `grad(alpha)(x) . F(x)`.
pub fn directional_derivative(f: &VectorFieldSpec, alpha: &ScalarFieldSpec, x: &[f64]) -> f64 {
    let grad = alpha.gradient_at(x);
    let v = f.evaluate(x);
    grad.iter().zip(&v).map(|(g, w)| g * w).sum()
}

/// Central-difference Jacobian of the shift map `x -> F(x, alpha(x))`.
pub fn shift_jacobian(
    f: &VectorFieldSpec,
    alpha: &ScalarFieldSpec,
    x: &[f64],
    step: f64,
    cfg: &IntegratorConfig,
) -> Result<DMatrix<f64>> {
    let d = f.dimension();
    let mut jac = DMatrix::zeros(d, d);
    let mut xp = x.to_vec();
    let mut xm = x.to_vec();
    for j in 0..d {
        xp[j] = x[j] + step;
        xm[j] = x[j] - step;
        let hp = integrate(f, &xp, alpha.evaluate(&xp), cfg)?;
        let hm = integrate(f, &xm, alpha.evaluate(&xm), cfg)?;
        for i in 0..d {
            jac[(i, j)] = (hp[i] - hm[i]) / (2.0 * step);
        }
        xp[j] = x[j];
        xm[j] = x[j];
    }
    Ok(jac)
}

/// Residual of `Dh(x) F(x) = (1 + F(alpha)(x)) F(h(x))` at one point.
///
/// Returns `(raw, refined)`: the residual with a single central difference
/// at `fd_step`, and with one Richardson refinement from steps `fd_step`
/// and `fd_step / 2`.
pub fn pushforward_residual(
    f: &VectorFieldSpec,
    alpha: &ScalarFieldSpec,
    x: &[f64],
    fd_step: f64,
    cfg: &IntegratorConfig,
) -> Result<(f64, f64)> {
    let h_of_x = integrate(f, x, alpha.evaluate(x), cfg)?;
    let factor = 1.0 + directional_derivative(f, alpha, x);
    let rhs = DVector::from_vec(f.evaluate(&h_of_x)) * factor;
    let fx = DVector::from_vec(f.evaluate(x));

    let coarse = shift_jacobian(f, alpha, x, fd_step, cfg)?;
    let fine = shift_jacobian(f, alpha, x, fd_step / 2.0, cfg)?;
    let refined = (&fine * 4.0 - &coarse) / 3.0;

    let raw = (&coarse * &fx - &rhs).norm();
    let rich = (refined * fx - rhs).norm();
    Ok((raw, rich))
}

/// Norms of the two sides of the identity at one point (they must both
/// vanish at singular points of `F`).
pub fn side_norms(
    f: &VectorFieldSpec,
    alpha: &ScalarFieldSpec,
    x: &[f64],
    cfg: &IntegratorConfig,
) -> Result<(f64, f64)> {
    let h_of_x = integrate(f, x, alpha.evaluate(x), cfg)?;
    let factor = 1.0 + directional_derivative(f, alpha, x);
    let step = default_fd_step(x);
    let jac = shift_jacobian(f, alpha, x, step, cfg)?;
    let lhs = jac * DVector::from_vec(f.evaluate(x));
    let rhs = DVector::from_vec(f.evaluate(&h_of_x)) * factor;
    Ok((lhs.norm(), rhs.norm()))
}

/// Verify the pushforward identity over the case's grid.
pub fn verify_pushforward(
    case: &PushforwardCase,
    tolerance: f64,
    cfg: &IntegratorConfig,
) -> Result<VerificationReport> {
    let start = std::time::Instant::now();
    let factors = case.check_factor()?;
    let results = par_map(&case.grid.points, |x| {
        pushforward_residual(&case.field, &case.alpha, x, default_fd_step(x), cfg)
    });
    let mut rows = Vec::with_capacity(results.len());
    let mut raw_max = 0.0_f64;
    for (i, r) in results.into_iter().enumerate() {
        let x = &case.grid.points[i];
        match r {
            Ok((raw, refined)) => {
                raw_max = raw_max.max(raw);
                rows.push(ResidualRecord {
                    label: format!("x{i}={x:?}"),
                    residual: refined,
                });
            }
            Err(e) => rows.push(ResidualRecord {
                label: format!("x{i}={x:?} [{e}]"),
                residual: f64::INFINITY,
            }),
        }
    }
    let factor_samples: Vec<serde_json::Value> = case
        .grid
        .points
        .iter()
        .zip(&factors)
        .map(|(x, f)| serde_json::json!({ "point": x, "factor": f }))
        .collect();
    let mut report = VerificationReport::from_rows(
        format!("pushforward[{};{}]", case.field.name, case.alpha.name),
        "Dh(x) F(x) = (1 + F(alpha)(x)) F(h(x)) for h(x) = F(x, alpha(x))",
        tolerance,
        rows,
        start.elapsed().as_secs_f64(),
    )
    .with_note(format!(
        "raw central-difference max residual {raw_max:.3e}; rows use one Richardson refinement"
    ));
    report.extra = serde_json::json!({ "factor_samples": factor_samples });
    Ok(report)
}

/// The reparametrized field `(1 + F(alpha)) F` induced by the shift map.
///
/// Requires `1 + F(alpha) > 0` on the grid (orientation-preserving case);
/// its shift-map image then matches `F`'s, which
/// `crate::reparam::verify_image_equality` checks with `mu = 1 + F(alpha)`.
pub fn induced_field(case: &PushforwardCase) -> Result<(VectorFieldSpec, ScalarFieldSpec)> {
    for (i, x) in case.grid.points.iter().enumerate() {
        let factor = 1.0 + directional_derivative(&case.field, &case.alpha, x);
        if factor <= FACTOR_DEGENERATE_TOL {
            return Err(Error::NonPositiveFactor {
                at: format!("grid point #{i} {x:?}"),
                value: factor,
            });
        }
    }
    let f = case.field.clone();
    let alpha = case.alpha.clone();
    let mu = ScalarFieldSpec::new(
        case.field.space.clone(),
        format!("1+{}({})", case.field.name, case.alpha.name),
        move |x| 1.0 + directional_derivative(&f, &alpha, x),
    )
    .positive();
    let scaled = scale_field(&case.field, &mu)?;
    Ok((scaled, mu))
}

/// Serializable summary of the factor field for CLI output.
#[derive(Debug, Clone, Serialize)]
pub struct FactorSample {
    pub point: Vec<f64>,
    pub factor: f64,
}

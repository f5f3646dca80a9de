//! Reparametrization: the bridge between the flows of `F` and `G = mu F`,
//! and the induced correspondence between their admissible time functions.
//!
//! Writing `alpha(x, s)` for the integral of `mu` along the `G`-orbit of `x`
//! up to time `s`, the flows satisfy `G(x, s) = F(x, alpha(x, s))`. For
//! strictly positive `mu` the map `xi(gamma)(x) = alpha(x, gamma(x))` is a
//! bijection between time functions, with inverse
//! `xi_inverse(delta)(x) = beta(x, delta(x))` built from the reciprocal
//! integral, and the shift-map images of `F` and `G` coincide. Without
//! positivity only the inclusion of images (bridge residuals) is checked.
//!
//! Positivity cannot be certified globally from samples; it is asserted on
//! the grid and guarded along every integrated trajectory.

use crate::error::{Error, Result};
use crate::fields::{scale_field, SampleGrid, ScalarFieldSpec, VectorFieldSpec};
use crate::flow::{flow_with_integral, integrate, IntegratorConfig, Weight};
use crate::par_map;
use crate::report::{ResidualRecord, VerificationReport};
use crate::shiftmap::SampledScalar;

/// Trajectory-level lower bound for `mu` in the equality direction.
pub const POSITIVITY_FLOOR: f64 = 1e-9;

/// A field together with a scalar factor and the scaled field `G = mu F`.
#[derive(Debug, Clone)]
pub struct ReparamPair {
    pub field: VectorFieldSpec,
    pub mu: ScalarFieldSpec,
    pub scaled: VectorFieldSpec,
}

impl ReparamPair {
    pub fn new(field: VectorFieldSpec, mu: ScalarFieldSpec) -> Result<Self> {
        let scaled = scale_field(&field, &mu)?;
        Ok(ReparamPair { field, mu, scaled })
    }

    /// Assert `mu > floor` at every grid point.
    pub fn check_positivity(&self, grid: &SampleGrid) -> Result<()> {
        for (i, x) in grid.points.iter().enumerate() {
            let v = self.mu.evaluate(x);
            if v <= POSITIVITY_FLOOR {
                return Err(Error::PositivityViolated {
                    at: format!("grid point #{i} {x:?}"),
                    value: v,
                    floor: POSITIVITY_FLOOR,
                });
            }
        }
        Ok(())
    }
}

/// `alpha(x, s)`: integral of `mu` along the `G`-orbit of `x` up to time `s`.
pub fn alpha_of(pair: &ReparamPair, x: &[f64], s: f64, cfg: &IntegratorConfig) -> Result<f64> {
    let weight = Weight::direct(&pair.mu);
    flow_with_integral(&pair.scaled, &weight, x, s, cfg).map(|(_, a)| a)
}

/// `beta(x, s)`: integral of `1/mu` along the `F`-orbit of `x` up to `s`.
///
/// Guards positivity of `mu` along the trajectory; this is the inverse
/// reparametrization and only exists for positive factors.
pub fn beta_of(pair: &ReparamPair, x: &[f64], s: f64, cfg: &IntegratorConfig) -> Result<f64> {
    let weight = Weight::reciprocal(&pair.mu).with_positivity_floor(POSITIVITY_FLOOR);
    flow_with_integral(&pair.field, &weight, x, s, cfg).map(|(_, a)| a)
}

fn aggregate_sampled(
    results: Vec<Result<f64>>,
    grid: &SampleGrid,
    name: &str,
    tag: String,
) -> Result<SampledScalar> {
    let mut values = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(v) => values.push(v),
            Err(e) => failures.push((i, e)),
        }
    }
    if !failures.is_empty() {
        let (i, first) = &failures[0];
        return Err(Error::ShiftEscapes {
            alpha: name.to_string(),
            failures: failures.len(),
            total: grid.len(),
            first: format!("point #{i} {:?}: {first}", grid.points[*i]),
        });
    }
    Ok(SampledScalar { values, tag })
}

/// `xi(gamma)(x) = alpha(x, gamma(x))`, sampled on a grid.
///
/// Maps admissible time functions of `G` to time functions of `F` producing
/// the same shift map.
pub fn xi(
    pair: &ReparamPair,
    gamma: &ScalarFieldSpec,
    grid: &SampleGrid,
    cfg: &IntegratorConfig,
) -> Result<SampledScalar> {
    let results = par_map(&grid.points, |x| alpha_of(pair, x, gamma.evaluate(x), cfg));
    aggregate_sampled(results, grid, &gamma.name, format!("xi({})", gamma.name))
}

/// `xi_inverse(delta)(x) = beta(x, delta(x))`, sampled on a grid.
pub fn xi_inverse(
    pair: &ReparamPair,
    delta: &ScalarFieldSpec,
    grid: &SampleGrid,
    cfg: &IntegratorConfig,
) -> Result<SampledScalar> {
    pair.check_positivity(grid)?;
    let results = par_map(&grid.points, |x| beta_of(pair, x, delta.evaluate(x), cfg));
    aggregate_sampled(
        results,
        grid,
        &delta.name,
        format!("xi_inv({})", delta.name),
    )
}

/// Residuals of the bridge `G(x, s) = F(x, alpha(x, s))` over a grid and a
/// list of times. This is the computational content of the inclusion of the
/// scaled field's shift-map image into the original one; `mu` need not be
/// positive.
pub fn verify_bridge(
    pair: &ReparamPair,
    grid: &SampleGrid,
    s_values: &[f64],
    tolerance: f64,
    cfg: &IntegratorConfig,
) -> Result<VerificationReport> {
    let start = std::time::Instant::now();
    let space = &pair.field.space;
    let work: Vec<(usize, f64)> = grid
        .points
        .iter()
        .enumerate()
        .flat_map(|(i, _)| s_values.iter().map(move |&s| (i, s)))
        .collect();
    let rows = par_map(&work, |&(i, s)| {
        let x = &grid.points[i];
        let label = format!("x{i}={x:?};s={s}");
        let residual = (|| -> Result<f64> {
            let weight = Weight::direct(&pair.mu);
            let (y_scaled, a) = flow_with_integral(&pair.scaled, &weight, x, s, cfg)?;
            let y_base = integrate(&pair.field, x, a, cfg)?;
            Ok(space.distance(&y_scaled, &y_base))
        })();
        match residual {
            Ok(r) => ResidualRecord { label, residual: r },
            Err(e) => ResidualRecord {
                label: format!("{label} [{e}]"),
                residual: f64::INFINITY,
            },
        }
    });
    Ok(VerificationReport::from_rows(
        format!("bridge[{}]", pair.scaled.name),
        "G(x,s) = F(x, alpha(x,s)) for G = mu*F",
        tolerance,
        rows,
        start.elapsed().as_secs_f64(),
    ))
}

/// Both directions of the image-equality diagram plus the `xi`/`xi_inverse`
/// roundtrips, for each supplied time function.
///
/// For every `gamma`: the `G`-shift by `gamma` must equal the `F`-shift by
/// `xi(gamma)`, the `F`-shift by `gamma` must equal the `G`-shift by
/// `xi_inverse(gamma)`, and the two compositions must return `gamma`.
/// Requires `mu > 0` on the grid.
pub fn verify_image_equality(
    pair: &ReparamPair,
    gammas: &[ScalarFieldSpec],
    grid: &SampleGrid,
    tolerance: f64,
    cfg: &IntegratorConfig,
) -> Result<VerificationReport> {
    let start = std::time::Instant::now();
    pair.check_positivity(grid)?;
    let space = &pair.field.space;
    let mut rows = Vec::new();
    for gamma in gammas {
        let per_point = par_map(&grid.points, |x| -> Result<[f64; 4]> {
            let g_of_x = gamma.evaluate(x);
            let mu_fwd = Weight::direct(&pair.mu).with_positivity_floor(POSITIVITY_FLOOR);
            let mu_rev = Weight::reciprocal(&pair.mu).with_positivity_floor(POSITIVITY_FLOOR);

            // Forward leg: shift along G by gamma vs shift along F by xi(gamma).
            let (y_scaled, xi_val) = flow_with_integral(&pair.scaled, &mu_fwd, x, g_of_x, cfg)?;
            let y_base = integrate(&pair.field, x, xi_val, cfg)?;
            let fwd = space.distance(&y_scaled, &y_base);

            // Roundtrip xi_inverse(xi(gamma)) = gamma.
            let (_, back) = flow_with_integral(&pair.field, &mu_rev, x, xi_val, cfg)?;
            let rt_fwd = (back - g_of_x).abs();

            // Reverse leg: treat gamma as a time function of F.
            let (y_base2, xi_inv_val) = flow_with_integral(&pair.field, &mu_rev, x, g_of_x, cfg)?;
            let y_scaled2 = integrate(&pair.scaled, x, xi_inv_val, cfg)?;
            let rev = space.distance(&y_base2, &y_scaled2);

            // Roundtrip xi(xi_inverse(gamma)) = gamma.
            let (_, forth) = flow_with_integral(&pair.scaled, &mu_fwd, x, xi_inv_val, cfg)?;
            let rt_rev = (forth - g_of_x).abs();

            Ok([fwd, rt_fwd, rev, rt_rev])
        });
        for (i, r) in per_point.into_iter().enumerate() {
            let x = &grid.points[i];
            match r {
                Ok([fwd, rt_fwd, rev, rt_rev]) => {
                    rows.push(ResidualRecord {
                        label: format!("fwd:{}:x{i}={x:?}", gamma.name),
                        residual: fwd,
                    });
                    rows.push(ResidualRecord {
                        label: format!("rt-fwd:{}:x{i}={x:?}", gamma.name),
                        residual: rt_fwd,
                    });
                    rows.push(ResidualRecord {
                        label: format!("rev:{}:x{i}={x:?}", gamma.name),
                        residual: rev,
                    });
                    rows.push(ResidualRecord {
                        label: format!("rt-rev:{}:x{i}={x:?}", gamma.name),
                        residual: rt_rev,
                    });
                }
                Err(e) => rows.push(ResidualRecord {
                    label: format!("{}:x{i}={x:?} [{e}]", gamma.name),
                    residual: f64::INFINITY,
                }),
            }
        }
    }
    Ok(VerificationReport::from_rows(
        format!("image-equality[{}]", pair.scaled.name),
        "shift images of F and mu*F coincide via xi/xi_inverse",
        tolerance,
        rows,
        start.elapsed().as_secs_f64(),
    ))
}

//! Periodic shift maps: minimal periods, the period function, its
//! transformation under reparametrization, circle-action normalization, and
//! the linear part at singular points.
//!
//! A non-singular point of a periodic flow returns to itself after its
//! minimal period `Per(x)`. When the whole shift map is periodic there is a
//! strictly positive function `theta`, constant along orbits, with
//! `F(x, theta(x)) = x` and `theta(x) = n_x Per(x)` for integers `n_x`
//! (resonant orbits can close early). Scaling the field by `theta` yields a
//! flow whose time-1 map is the identity, i.e. a circle action, and at a
//! singular point of such a flow the linearization splits into plane
//! rotation blocks plus a zero block.
//!
//! Smoothness of `theta` is not decidable from samples and is not tested;
//! positivity, orbit constancy, and the kernel property are.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fields::{
    finite_difference_jacobian, scale_field, SampleGrid, ScalarFieldSpec, VectorFieldSpec,
    SINGULAR_NORM_TOL,
};
use crate::flow::{integrate, trajectory, IntegratorConfig, Trajectory};
use crate::par_map;
use crate::reparam::{beta_of, ReparamPair};
use crate::report::{ResidualRecord, VerificationReport};
use crate::shiftmap::SampledScalar;
use crate::space::norm;

/// A refined section return is accepted as a period when the trajectory
/// comes back within this distance of the start.
pub const RETURN_DIST_TOL: f64 = 1e-7;

/// Bisection target for the signed section coordinate.
const SECTION_COORD_TOL: f64 = 1e-12;

/// Interior samples per accepted step when scanning for section crossings.
const SCAN_SAMPLES: usize = 6;

/// Eigenvalue classification tolerance for linear parts.
pub const SPECTRUM_TOL: f64 = 1e-6;

/// Per-point outcome of period detection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum PointPeriod {
    Periodic(f64),
    NonPeriodic { escaped: bool },
    Singular,
}

impl PointPeriod {
    pub fn period(&self) -> Option<f64> {
        match self {
            PointPeriod::Periodic(p) => Some(*p),
            _ => None,
        }
    }
}

/// Minimal positive return time of the orbit through `x`, if any occurs
/// before `t_max`.
///
/// Returns are detected on the section through `x` with normal
/// `F(x)/|F(x)|`: upward crossings of the signed section coordinate within
/// half the injectivity guess of `x` are refined by bisection, and the
/// first one that lands within [`RETURN_DIST_TOL`] of `x` is the period.
pub fn detect_period(
    f: &VectorFieldSpec,
    x: &[f64],
    t_max: f64,
    cfg: &IntegratorConfig,
) -> Result<PointPeriod> {
    f.space.check_point(x)?;
    if t_max.is_nan() || t_max <= 0.0 {
        return Err(Error::config("t_max must be positive"));
    }
    let fx = f.evaluate(x);
    let speed = norm(&fx);
    if speed <= SINGULAR_NORM_TOL {
        return Ok(PointPeriod::Singular);
    }
    let normal: Vec<f64> = fx.iter().map(|v| v / speed).collect();
    let injectivity_guess = 0.5 * norm(x).max(1.0);
    let filter_radius = 0.5 * injectivity_guess;

    // Cap the step so the section scan resolves returns. Error control
    // alone lets steps balloon on near-linear fields, and on tori the
    // wrapped section coordinate has structure at the period scale.
    let section_scale = match &f.space.torus_periods {
        Some(periods) => periods.iter().cloned().fold(f64::INFINITY, f64::min),
        None => norm(x).max(1.0),
    };
    let mut scan_cfg = *cfg;
    scan_cfg.max_step = scan_cfg.max_step.min(0.25 * section_scale / speed);

    let traj = trajectory_forward(f, x, t_max, &scan_cfg)?;
    let space = &f.space;
    let g = |t: f64| -> Option<f64> {
        let y = traj.dense_eval(t)?;
        let d = space.displacement(&y, x);
        Some(d.iter().zip(&normal).map(|(a, b)| a * b).sum())
    };

    let mut prev_t = 0.0_f64;
    let mut prev_g = 0.0_f64;
    for seg in traj.forward_segments() {
        for i in 1..=SCAN_SAMPLES {
            let t = seg.t0 + seg.h * i as f64 / SCAN_SAMPLES as f64;
            let gt = match g(t) {
                Some(v) => v,
                None => break,
            };
            if prev_g < 0.0 && gt >= 0.0 {
                // Upward crossing of the section in [prev_t, t].
                let near = space.distance(&traj.dense_eval(prev_t).unwrap(), x) <= filter_radius
                    || space.distance(&traj.dense_eval(t).unwrap(), x) <= filter_radius;
                if near {
                    let t_star = bisect_crossing(&g, prev_t, t);
                    let y_star = traj.dense_eval(t_star).unwrap();
                    if space.distance(&y_star, x) <= RETURN_DIST_TOL {
                        return Ok(PointPeriod::Periodic(t_star));
                    }
                }
            }
            prev_t = t;
            prev_g = gt;
        }
    }
    let escaped = traj.t_hi_reached < t_max;
    Ok(PointPeriod::NonPeriodic { escaped })
}

fn trajectory_forward(
    f: &VectorFieldSpec,
    x: &[f64],
    t_max: f64,
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    // The backward leg is irrelevant for return detection; keep it trivial.
    trajectory(f, x, (-(cfg.min_step * 10.0).max(1e-12), t_max), cfg)
}

fn bisect_crossing<G: Fn(f64) -> Option<f64>>(g: &G, mut lo: f64, mut hi: f64) -> f64 {
    // Invariant: g(lo) < 0 <= g(hi).
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        let gm = match g(mid) {
            Some(v) => v,
            None => break,
        };
        if gm.abs() <= SECTION_COORD_TOL {
            return mid;
        }
        if gm < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * hi.abs().max(1.0) {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Period data over a grid.
#[derive(Debug, Clone, Serialize)]
pub struct PeriodReport {
    #[serde(skip)]
    pub grid: SampleGrid,
    pub per_point_period: Vec<PointPeriod>,
    /// Candidate period-function samples `n_x * Per(x)`; extrapolated at
    /// singular points, absent at non-periodic ones.
    pub theta_candidate: Vec<Option<f64>>,
    pub multiplicity_hints: Vec<u32>,
    /// True where `theta` was extrapolated from nearby non-singular points.
    pub extrapolated: Vec<bool>,
    pub orbit_constancy_residual: f64,
    /// No grid point was non-periodic, and at least one was periodic.
    pub globally_periodic: bool,
}

impl PeriodReport {
    pub fn theta_positive(&self) -> bool {
        self.theta_candidate
            .iter()
            .all(|t| t.map(|v| v > 0.0).unwrap_or(false))
    }
}

/// Detect periods over a grid and assemble the candidate period function.
///
/// Multiplicity hints are raised where grid-adjacent minimal periods differ
/// by a near-integer ratio (resonant orbits close early); grids should list
/// related points consecutively. Orbit constancy is spot-checked by flowing
/// sample points along their orbits and re-detecting.
pub fn period_function(
    f: &VectorFieldSpec,
    grid: &SampleGrid,
    t_max: f64,
    cfg: &IntegratorConfig,
) -> Result<PeriodReport> {
    if grid.space != f.space {
        return Err(Error::GridMismatch(format!(
            "grid '{}' does not live on the space of field '{}'",
            grid.description, f.name
        )));
    }
    let detected = par_map(&grid.points, |x| detect_period(f, x, t_max, cfg));
    let mut per_point = Vec::with_capacity(detected.len());
    for d in detected {
        per_point.push(d?);
    }

    let n = per_point.len();
    let mut multiplicity = vec![1u32; n];
    // Resonance pass: compare consecutive finite periods.
    for i in 1..n {
        if let (Some(a), Some(b)) = (per_point[i - 1].period(), per_point[i].period()) {
            let (small_idx, small, large) = if a <= b { (i - 1, a, b) } else { (i, b, a) };
            let ratio = large / small;
            let m = ratio.round();
            if m >= 2.0 && (ratio - m).abs() <= 1e-3 {
                multiplicity[small_idx] = multiplicity[small_idx].max(m as u32);
            }
        }
    }

    let mut theta: Vec<Option<f64>> = per_point
        .iter()
        .zip(&multiplicity)
        .map(|(p, &m)| p.period().map(|v| v * m as f64))
        .collect();

    // Extrapolate theta at singular points from the 3 nearest samples.
    let mut extrapolated = vec![false; n];
    for i in 0..n {
        if per_point[i] == PointPeriod::Singular {
            let mut neighbours: Vec<(f64, f64)> = (0..n)
                .filter_map(|j| {
                    theta[j].and_then(|v| {
                        (!matches!(per_point[j], PointPeriod::Singular))
                            .then(|| (grid.space.distance(&grid.points[i], &grid.points[j]), v))
                    })
                })
                .collect();
            neighbours.sort_by(|a, b| a.0.total_cmp(&b.0));
            neighbours.truncate(3);
            if !neighbours.is_empty() {
                let avg = neighbours.iter().map(|(_, v)| v).sum::<f64>() / neighbours.len() as f64;
                theta[i] = Some(avg);
                extrapolated[i] = true;
            }
        }
    }

    let globally_periodic = per_point
        .iter()
        .all(|p| !matches!(p, PointPeriod::NonPeriodic { .. }))
        && per_point
            .iter()
            .any(|p| matches!(p, PointPeriod::Periodic(_)));

    // Orbit constancy: flow a deterministic subset of periodic points along
    // their orbits and compare re-detected periods.
    let mut orbit_constancy_residual = 0.0_f64;
    let periodic_idx: Vec<usize> = (0..n)
        .filter(|&i| matches!(per_point[i], PointPeriod::Periodic(_)))
        .collect();
    let stride = (periodic_idx.len() / 8).max(1);
    for &i in periodic_idx.iter().step_by(stride) {
        let theta_i = theta[i].unwrap();
        let per_i = per_point[i].period().unwrap();
        for frac in [0.31, 0.73] {
            let s = frac * per_i;
            let res = (|| -> Result<f64> {
                let y = integrate(f, &grid.points[i], s, cfg)?;
                match detect_period(f, &y, t_max, cfg)? {
                    PointPeriod::Periodic(p) => Ok((multiplicity[i] as f64 * p - theta_i).abs()),
                    _ => Ok(f64::INFINITY),
                }
            })();
            orbit_constancy_residual = orbit_constancy_residual.max(res.unwrap_or(f64::INFINITY));
        }
    }

    Ok(PeriodReport {
        grid: grid.clone(),
        per_point_period: per_point,
        theta_candidate: theta,
        multiplicity_hints: multiplicity,
        extrapolated,
        orbit_constancy_residual,
        globally_periodic,
    })
}

/// Period function of the scaled field `G = mu F`:
/// `theta_bar(x) = beta(x, theta(x))`, the reciprocal integral of `mu` over
/// one period.
///
/// Verifies the certificate `G(x, theta_bar(x)) = x` at `cert_tol`. When
/// `mu_orbit_constant` is set, additionally asserts the shortcut
/// `theta_bar = theta / mu` within `shortcut_tol`.
#[allow(clippy::too_many_arguments)]
pub fn transformed_period(
    f: &VectorFieldSpec,
    mu: &ScalarFieldSpec,
    theta_report: &PeriodReport,
    grid: &SampleGrid,
    cfg: &IntegratorConfig,
    mu_orbit_constant: bool,
    cert_tol: f64,
    shortcut_tol: f64,
) -> Result<(SampledScalar, VerificationReport)> {
    let start = std::time::Instant::now();
    if !theta_report.grid.same_points(grid) {
        return Err(Error::GridMismatch(
            "period report was computed on a different grid".into(),
        ));
    }
    if !theta_report.globally_periodic {
        return Err(Error::NotGloballyPeriodic(format!(
            "field '{}' has non-periodic points on grid '{}'",
            f.name, grid.description
        )));
    }
    let pair = ReparamPair::new(f.clone(), mu.clone())?;
    pair.check_positivity(grid)?;

    let work: Vec<(Vec<f64>, f64)> = grid
        .points
        .iter()
        .zip(&theta_report.theta_candidate)
        .map(|(x, t)| {
            (
                x.clone(),
                t.expect("globally periodic grids have theta everywhere"),
            )
        })
        .collect();
    let values = par_map(&work, |(x, theta)| beta_of(&pair, x, *theta, cfg));
    let mut theta_bar = Vec::with_capacity(values.len());
    for v in values {
        theta_bar.push(v?);
    }

    let mut rows = Vec::new();
    let mut shortcut_max = 0.0_f64;
    let cert = par_map(
        &grid
            .points
            .iter()
            .zip(&theta_bar)
            .map(|(x, &tb)| (x.clone(), tb))
            .collect::<Vec<_>>(),
        |(x, tb)| -> Result<f64> {
            let y = integrate(&pair.scaled, x, *tb, cfg)?;
            Ok(pair.field.space.distance(&y, x))
        },
    );
    for (i, r) in cert.into_iter().enumerate() {
        let x = &grid.points[i];
        match r {
            Ok(d) => rows.push(ResidualRecord {
                label: format!("cert:x{i}={x:?}"),
                residual: d,
            }),
            Err(e) => rows.push(ResidualRecord {
                label: format!("cert:x{i}={x:?} [{e}]"),
                residual: f64::INFINITY,
            }),
        }
    }
    if mu_orbit_constant {
        for (i, (x, &tb)) in grid.points.iter().zip(&theta_bar).enumerate() {
            let theta = theta_report.theta_candidate[i].unwrap();
            let shortcut = theta / mu.evaluate(x);
            let d = (tb - shortcut).abs();
            shortcut_max = shortcut_max.max(d);
            rows.push(ResidualRecord {
                label: format!("shortcut:x{i}={x:?}"),
                residual: d,
            });
        }
    }

    let mut report = VerificationReport::from_rows(
        format!("period-transform[{}*{}]", mu.name, f.name),
        "G(x, theta_bar(x)) = x with theta_bar(x) = beta(x, theta(x)), G = mu*F",
        cert_tol,
        rows,
        start.elapsed().as_secs_f64(),
    );
    if mu_orbit_constant {
        report = report.with_note(format!(
            "orbit-constant shortcut max |theta_bar - theta/mu| = {shortcut_max:.3e} (tol {shortcut_tol:.1e})"
        ));
        if shortcut_max > shortcut_tol {
            report = report.failed("orbit-constant shortcut exceeded its tolerance");
        }
    }
    let sampled = SampledScalar {
        values: theta_bar,
        tag: format!("theta_bar[{}*{}]", mu.name, f.name),
    };
    Ok((sampled, report))
}

/// Build the period function as a scalar field from report samples:
/// constant when the samples agree, radial piecewise-linear otherwise.
fn theta_field_from_samples(
    space: &crate::space::AmbientSpace,
    grid: &SampleGrid,
    theta: &[Option<f64>],
) -> Result<ScalarFieldSpec> {
    let samples: Vec<(f64, f64)> = grid
        .points
        .iter()
        .zip(theta)
        .filter_map(|(x, t)| t.map(|v| (norm(x), v)))
        .collect();
    if samples.is_empty() {
        return Err(Error::NotGloballyPeriodic(
            "no period samples on the grid".into(),
        ));
    }
    let mean = samples.iter().map(|(_, v)| v).sum::<f64>() / samples.len() as f64;
    let spread = samples
        .iter()
        .map(|(_, v)| (v - mean).abs())
        .fold(0.0_f64, f64::max);
    if spread <= 1e-6 * mean.abs().max(1.0) {
        return Ok(ScalarFieldSpec::constant(space.clone(), mean));
    }

    // Radial profile: average samples sharing a radius, then interpolate
    // linearly in r with clamped ends.
    let mut knots: Vec<(f64, f64, usize)> = Vec::new();
    let mut sorted = samples;
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    for (r, v) in sorted {
        match knots.last_mut() {
            Some((kr, kv, kn)) if (r - *kr).abs() <= 1e-9 => {
                *kv += v;
                *kn += 1;
            }
            _ => knots.push((r, v, 1)),
        }
    }
    let knots: Vec<(f64, f64)> = knots
        .into_iter()
        .map(|(r, v, c)| (r, v / c as f64))
        .collect();
    Ok(
        ScalarFieldSpec::new(space.clone(), "theta-radial", move |x: &[f64]| {
            let r = norm(x);
            match knots.iter().position(|(kr, _)| *kr >= r) {
                Some(0) => knots[0].1,
                None => knots[knots.len() - 1].1,
                Some(i) => {
                    let (r0, v0) = knots[i - 1];
                    let (r1, v1) = knots[i];
                    v0 + (v1 - v0) * (r - r0) / (r1 - r0)
                }
            }
        })
        .positive(),
    )
}

/// Scale `F` by its period function so the time-1 map is the identity, and
/// certify it on the grid.
///
/// Uses the field's closed-form period function when it carries one,
/// otherwise interpolates the report samples. Returns the normalized field,
/// the period function used, and the certificate. Fails with
/// [`Error::CertificateFailed`] when the time-1 residual exceeds
/// `tolerance`.
pub fn normalize_to_circle_action(
    f: &VectorFieldSpec,
    theta_report: &PeriodReport,
    grid: &SampleGrid,
    tolerance: f64,
    cfg: &IntegratorConfig,
) -> Result<(VectorFieldSpec, ScalarFieldSpec, VerificationReport)> {
    let start = std::time::Instant::now();
    if !theta_report.globally_periodic {
        return Err(Error::NotGloballyPeriodic(format!(
            "field '{}' is not periodic on grid '{}'",
            f.name, grid.description
        )));
    }
    if !theta_report.theta_positive() {
        return Err(Error::NotGloballyPeriodic(
            "period samples are not strictly positive".into(),
        ));
    }
    let theta = match &f.period_function {
        Some(t) => t.clone(),
        None => theta_field_from_samples(&f.space, grid, &theta_report.theta_candidate)?,
    };
    let scaled = scale_field(f, &theta)?;

    let rows = par_map(&grid.points, |x| -> ResidualRecord {
        match integrate(&scaled, x, 1.0, cfg) {
            Ok(y) => ResidualRecord {
                label: format!("x={x:?}"),
                residual: f.space.distance(&y, x),
            },
            Err(e) => ResidualRecord {
                label: format!("x={x:?} [{e}]"),
                residual: f64::INFINITY,
            },
        }
    });
    let report = VerificationReport::from_rows(
        format!("circle-action[{}]", f.name),
        "G(x, 1) = x for G = theta*F",
        tolerance,
        rows,
        start.elapsed().as_secs_f64(),
    )
    .with_note(format!("period function: {}", theta.name));
    if !report.pass {
        return Err(Error::CertificateFailed {
            max_residual: report.max_residual,
            report: Box::new(report),
        });
    }
    Ok((scaled, theta, report))
}

/// Linearization structure at a singular point of a periodic flow.
#[derive(Debug, Clone, Serialize)]
pub struct LinearPartReport {
    pub point: Vec<f64>,
    pub jacobian: Vec<Vec<f64>>,
    /// Eigenvalues as (re, im) pairs.
    pub eigenvalues: Vec<(f64, f64)>,
    /// Rotation rates `A_j > 0`, ascending.
    pub rotation_rates: Vec<f64>,
    pub zero_block_dim: usize,
    /// Spectrum is `{±i A_j} ∪ {0}` within tolerance and `2k + l = dim`.
    pub spectrum_ok: bool,
    pub max_abs_real_part: f64,
    /// `|j1(theta F) - theta(z) j1(F)|` when a period function was supplied.
    pub scaling_residual: Option<f64>,
    pub periodic_certified: bool,
}

/// Analyze the linear part of `F` at a singular point `z`.
///
/// `periodic_certified` must come from a prior circle-action certificate;
/// `theta` (the period function, with its value near `z`) enables the
/// first-jet scaling check `j1(theta F) = theta(z) j1(F)`.
pub fn linear_part_analysis(
    f: &VectorFieldSpec,
    z: &[f64],
    periodic_certified: bool,
    theta: Option<&ScalarFieldSpec>,
) -> Result<LinearPartReport> {
    f.space.check_point(z)?;
    if !periodic_certified {
        return Err(Error::config(
            "linear-part analysis requires a prior circle-action certificate",
        ));
    }
    let speed = norm(&f.evaluate(z));
    if speed > SINGULAR_NORM_TOL {
        return Err(Error::NotSingular {
            norm: speed,
            tol: SINGULAR_NORM_TOL,
        });
    }
    let dim = f.dimension();
    let jac = f.jacobian_at(z)?;
    let eigen = jac.clone().complex_eigenvalues();

    let mut rates: Vec<f64> = Vec::new();
    let mut zero_block_dim = 0usize;
    let mut max_abs_real = 0.0_f64;
    let mut negatives = 0usize;
    for e in eigen.iter() {
        max_abs_real = max_abs_real.max(e.re.abs());
        if e.norm() <= SPECTRUM_TOL {
            zero_block_dim += 1;
        } else if e.im > 0.0 {
            rates.push(e.im);
        } else {
            negatives += 1;
        }
    }
    rates.sort_by(f64::total_cmp);
    let spectrum_ok = max_abs_real <= SPECTRUM_TOL
        && negatives == rates.len()
        && 2 * rates.len() + zero_block_dim == dim;

    let scaling_residual = match theta {
        Some(theta) => {
            let scaled = scale_field(f, theta)?;
            let j_scaled =
                finite_difference_jacobian(&scaled, z, crate::fields::default_fd_step(z))?;
            let expected = &jac * theta.evaluate(z);
            Some((j_scaled - expected).amax())
        }
        None => None,
    };

    Ok(LinearPartReport {
        point: z.to_vec(),
        jacobian: matrix_rows(&jac),
        eigenvalues: eigen.iter().map(|e| (e.re, e.im)).collect(),
        rotation_rates: rates,
        zero_block_dim,
        spectrum_ok,
        max_abs_real_part: max_abs_real,
        scaling_residual,
        periodic_certified,
    })
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{
        nonlinear_rotation, one_plus_r_squared, rotation, rotation_blocks, translation,
    };
    use crate::space::AmbientSpace;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn cfg() -> IntegratorConfig {
        IntegratorConfig::default()
    }

    #[test]
    fn rotation_period_is_full_turn() {
        let f = rotation();
        match detect_period(&f, &[1.0, 0.0], 10.0, &cfg()).unwrap() {
            PointPeriod::Periodic(p) => assert_abs_diff_eq!(p, 2.0 * PI, epsilon = 1e-7),
            other => panic!("expected a period, got {other:?}"),
        }
    }

    #[test]
    fn nonlinear_rotation_period_at_unit_radius() {
        // Angular speed is 2 on the unit circle, so the period is pi -- and
        // in particular nothing earlier is accepted (minimality).
        let f = nonlinear_rotation();
        match detect_period(&f, &[1.0, 0.0], 10.0, &cfg()).unwrap() {
            PointPeriod::Periodic(p) => assert_abs_diff_eq!(p, PI, epsilon = 1e-7),
            other => panic!("expected a period, got {other:?}"),
        }
    }

    #[test]
    fn translation_never_returns() {
        let f = translation();
        assert_eq!(
            detect_period(&f, &[0.0, 0.0], 50.0, &cfg()).unwrap(),
            PointPeriod::NonPeriodic { escaped: false }
        );
    }

    #[test]
    fn singular_point_is_flagged() {
        let f = rotation();
        assert_eq!(
            detect_period(&f, &[0.0, 0.0], 10.0, &cfg()).unwrap(),
            PointPeriod::Singular
        );
    }

    #[test]
    fn blowup_escape_reports_nonperiodic() {
        let f = crate::fields::blowup();
        assert_eq!(
            detect_period(&f, &[1.0], 10.0, &cfg()).unwrap(),
            PointPeriod::NonPeriodic { escaped: true }
        );
    }

    #[test]
    fn rational_torus_winding_closes() {
        // Slope 1/2 on the unit torus: the line closes after t = 2; the
        // section test must use wrapped displacements to see it.
        let f = crate::fields::torus_constant(0.5, [1.0, 1.0]);
        match detect_period(&f, &[0.2, 0.7], 10.0, &cfg()).unwrap() {
            PointPeriod::Periodic(p) => assert_abs_diff_eq!(p, 2.0, epsilon = 1e-7),
            other => panic!("expected the winding line to close, got {other:?}"),
        }
    }

    #[test]
    fn irrational_torus_winding_never_closes() {
        let f = crate::fields::torus_constant(std::f64::consts::SQRT_2, [1.0, 1.0]);
        assert_eq!(
            detect_period(&f, &[0.2, 0.7], 30.0, &cfg()).unwrap(),
            PointPeriod::NonPeriodic { escaped: false }
        );
    }

    #[test]
    fn rotation_period_function_is_constant() {
        let f = rotation();
        let grid = SampleGrid::circles(&[0.5, 1.0, 2.0], 4, 0.0, 0).unwrap();
        let report = period_function(&f, &grid, 10.0, &cfg()).unwrap();
        assert!(report.globally_periodic);
        for t in &report.theta_candidate {
            assert_abs_diff_eq!(t.unwrap(), 2.0 * PI, epsilon = 1e-6);
        }
        assert!(report.orbit_constancy_residual <= 1e-6);
        assert!(report.multiplicity_hints.iter().all(|&m| m == 1));
    }

    #[test]
    fn nonlinear_rotation_period_profile() {
        let f = nonlinear_rotation();
        let grid = SampleGrid::circles(&[0.5, 1.0, 2.0], 3, 0.0, 0).unwrap();
        let report = period_function(&f, &grid, 10.0, &cfg()).unwrap();
        assert!(report.globally_periodic);
        for (x, t) in grid.points.iter().zip(&report.theta_candidate) {
            let r2 = x[0] * x[0] + x[1] * x[1];
            assert_abs_diff_eq!(t.unwrap(), 2.0 * PI / (1.0 + r2), epsilon = 1e-6);
        }
        assert!(report.orbit_constancy_residual <= 1e-6);
    }

    #[test]
    fn translation_grid_is_not_globally_periodic() {
        let f = translation();
        let grid = SampleGrid::lattice(
            AmbientSpace::euclidean(2),
            &[0.0, 0.0],
            &[1.0, 1.0],
            &[2, 2],
            0.0,
            0,
        )
        .unwrap();
        let report = period_function(&f, &grid, 20.0, &cfg()).unwrap();
        assert!(!report.globally_periodic);
    }

    #[test]
    fn resonant_block_orbit_raises_multiplicity() {
        // Rates (1, 3): a generic point closes after 2 pi, but a point with
        // only the fast block excited closes after 2 pi / 3.
        let f = rotation_blocks(&[1.0, 3.0], 1).unwrap();
        let grid = SampleGrid::from_points(
            AmbientSpace::euclidean(5),
            vec![
                vec![1.0, 0.0, 0.5, 0.0, 0.2],
                vec![0.0, 0.0, 1.0, 0.0, 0.0],
                vec![0.0, 0.0, 0.0, 0.0, 0.5],
            ],
            "block probes",
        )
        .unwrap();
        let report = period_function(&f, &grid, 10.0, &cfg()).unwrap();
        match report.per_point_period[0] {
            PointPeriod::Periodic(p) => assert_abs_diff_eq!(p, 2.0 * PI, epsilon = 1e-6),
            ref other => panic!("expected generic period, got {other:?}"),
        }
        match report.per_point_period[1] {
            PointPeriod::Periodic(p) => assert_abs_diff_eq!(p, 2.0 * PI / 3.0, epsilon = 1e-6),
            ref other => panic!("expected fast period, got {other:?}"),
        }
        assert_eq!(report.multiplicity_hints[1], 3);
        assert_abs_diff_eq!(report.theta_candidate[1].unwrap(), 2.0 * PI, epsilon = 1e-5);
        // The singular point gets theta by extrapolation.
        assert_eq!(report.per_point_period[2], PointPeriod::Singular);
        assert!(report.extrapolated[2]);
        assert_abs_diff_eq!(report.theta_candidate[2].unwrap(), 2.0 * PI, epsilon = 1e-5);
        assert!(report.globally_periodic);
    }

    #[test]
    fn kernel_multiples_certify() {
        let f = rotation();
        let grid = SampleGrid::circles(&[0.5, 1.5], 3, 0.0, 0).unwrap();
        let report = period_function(&f, &grid, 10.0, &cfg()).unwrap();
        for (x, t) in grid.points.iter().zip(&report.theta_candidate) {
            let theta = t.unwrap();
            for n in 1..=3 {
                let y = integrate(&f, x, n as f64 * theta, &cfg()).unwrap();
                assert!(
                    f.space.distance(&y, x) <= n as f64 * 1e-6,
                    "n = {n}, x = {x:?}"
                );
            }
        }
    }

    #[test]
    fn unit_factor_leaves_the_period_unchanged() {
        let f = rotation();
        let mu = ScalarFieldSpec::constant(f.space.clone(), 1.0);
        let grid = SampleGrid::circles(&[0.8, 1.4], 3, 0.0, 0).unwrap();
        let report = period_function(&f, &grid, 10.0, &cfg()).unwrap();
        let (theta_bar, vr) =
            transformed_period(&f, &mu, &report, &grid, &cfg(), true, 1e-5, 1e-6).unwrap();
        assert!(vr.pass);
        for (tb, theta) in theta_bar.values.iter().zip(&report.theta_candidate) {
            assert_abs_diff_eq!(*tb, theta.unwrap(), epsilon = 1e-6);
        }
    }

    #[test]
    fn transformed_period_orbit_constant_shortcut() {
        let f = rotation();
        let mu = one_plus_r_squared(f.space.clone());
        let grid = SampleGrid::circles(&[0.5, 1.0, 2.0], 3, 0.0, 0).unwrap();
        let report = period_function(&f, &grid, 10.0, &cfg()).unwrap();
        let (theta_bar, vr) =
            transformed_period(&f, &mu, &report, &grid, &cfg(), true, 1e-5, 1e-6).unwrap();
        assert!(vr.pass, "max residual {}", vr.max_residual);
        for (x, &tb) in grid.points.iter().zip(&theta_bar.values) {
            let r2 = x[0] * x[0] + x[1] * x[1];
            assert_abs_diff_eq!(tb, 2.0 * PI / (1.0 + r2), epsilon = 1e-6);
        }
    }

    #[test]
    fn scaling_by_theta_gives_unit_period() {
        // mu = theta (constant 2 pi for the rotation) makes theta_bar = 1.
        let f = rotation();
        let mu = ScalarFieldSpec::constant(f.space.clone(), 2.0 * PI);
        let grid = SampleGrid::circles(&[0.7, 1.3], 3, 0.0, 0).unwrap();
        let report = period_function(&f, &grid, 10.0, &cfg()).unwrap();
        let (theta_bar, vr) =
            transformed_period(&f, &mu, &report, &grid, &cfg(), true, 1e-5, 1e-6).unwrap();
        assert!(vr.pass);
        for &tb in &theta_bar.values {
            assert_abs_diff_eq!(tb, 1.0, epsilon = 1e-6);
        }
    }

    #[test]
    fn circle_normalization_of_rotation() {
        let f = rotation();
        let grid = SampleGrid::circles(&[0.5, 1.0, 2.0], 4, 0.0, 0).unwrap();
        let report = period_function(&f, &grid, 10.0, &cfg()).unwrap();
        let (scaled, _, vr) = normalize_to_circle_action(&f, &report, &grid, 1e-5, &cfg()).unwrap();
        assert!(vr.pass, "max residual {}", vr.max_residual);
        // G = 2 pi (-y, x).
        let v = scaled.evaluate(&[1.0, 0.0]);
        assert_abs_diff_eq!(v[1], 2.0 * PI, epsilon = 1e-12);
    }

    #[test]
    fn circle_normalization_of_nonlinear_rotation() {
        let f = nonlinear_rotation();
        let grid = SampleGrid::circles(&[0.5, 1.0, 2.0], 3, 0.0, 0).unwrap();
        let report = period_function(&f, &grid, 10.0, &cfg()).unwrap();
        let (scaled, _, vr) = normalize_to_circle_action(&f, &report, &grid, 1e-5, &cfg()).unwrap();
        assert!(vr.pass, "max residual {}", vr.max_residual);
        // The cubic factors cancel: G = 2 pi (-y, x) exactly.
        let v = scaled.evaluate(&[0.3, -0.8]);
        assert_abs_diff_eq!(v[0], 2.0 * PI * 0.8, epsilon = 1e-12);
        assert_abs_diff_eq!(v[1], 2.0 * PI * 0.3, epsilon = 1e-12);
    }

    #[test]
    fn circle_normalization_without_closed_form_uses_radial_fit() {
        let mut f = nonlinear_rotation();
        f.period_function = None;
        let grid = SampleGrid::circles(&[0.5, 1.0, 2.0], 3, 0.0, 0).unwrap();
        let report = period_function(&f, &grid, 10.0, &cfg()).unwrap();
        let (_, _, vr) = normalize_to_circle_action(&f, &report, &grid, 1e-5, &cfg()).unwrap();
        assert!(vr.pass, "max residual {}", vr.max_residual);
    }

    #[test]
    fn circle_normalization_refuses_translation() {
        let f = translation();
        let grid = SampleGrid::lattice(
            AmbientSpace::euclidean(2),
            &[0.0, 0.0],
            &[1.0, 1.0],
            &[2, 2],
            0.0,
            0,
        )
        .unwrap();
        let report = period_function(&f, &grid, 20.0, &cfg()).unwrap();
        assert!(matches!(
            normalize_to_circle_action(&f, &report, &grid, 1e-5, &cfg()),
            Err(Error::NotGloballyPeriodic(_))
        ));
    }

    #[test]
    fn linear_part_of_rotation_at_origin() {
        let f = rotation();
        let report =
            linear_part_analysis(&f, &[0.0, 0.0], true, f.period_function.as_ref()).unwrap();
        assert!(report.spectrum_ok);
        assert_eq!(report.zero_block_dim, 0);
        assert_eq!(report.rotation_rates.len(), 1);
        assert_abs_diff_eq!(report.rotation_rates[0], 1.0, epsilon = 1e-6);
        assert!(report.scaling_residual.unwrap() <= 1e-6);
    }

    #[test]
    fn linear_part_of_nonlinear_rotation_at_origin() {
        // The cubic terms do not contribute to the Jacobian at 0.
        let mut f = nonlinear_rotation();
        f.period_function = None; // force the finite-difference path
        let jac_probe = f.jacobian_at(&[0.0, 0.0]).unwrap();
        assert_abs_diff_eq!(jac_probe[(0, 1)], -1.0, epsilon = 1e-8);
        let report = linear_part_analysis(&f, &[0.0, 0.0], true, None).unwrap();
        assert!(report.spectrum_ok);
        assert_abs_diff_eq!(report.rotation_rates[0], 1.0, epsilon = 1e-6);
        assert!(report.scaling_residual.is_none());
    }

    #[test]
    fn linear_part_of_rotation_blocks() {
        let f = rotation_blocks(&[1.0, 3.0], 1).unwrap();
        let z = vec![0.0; 5];
        let theta = ScalarFieldSpec::constant(f.space.clone(), 2.0 * PI);
        let report = linear_part_analysis(&f, &z, true, Some(&theta)).unwrap();
        assert!(report.spectrum_ok);
        assert_eq!(report.zero_block_dim, 1);
        assert_eq!(report.rotation_rates.len(), 2);
        assert_abs_diff_eq!(report.rotation_rates[0], 1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(report.rotation_rates[1], 3.0, epsilon = 1e-6);
        assert!(report.scaling_residual.unwrap() <= 1e-6);
    }

    #[test]
    fn linear_part_rejects_regular_points() {
        let f = rotation();
        assert!(matches!(
            linear_part_analysis(&f, &[1.0, 0.0], true, None),
            Err(Error::NotSingular { .. })
        ));
        assert!(linear_part_analysis(&f, &[0.0, 0.0], false, None).is_err());
    }
}

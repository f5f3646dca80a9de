//! Adaptive numerical integration of local flows.
//!
//! The stepper is an explicit Dormand-Prince 5(4) pair with the classical
//! fourth-order dense-output interpolant. Trajectories carry dense output so
//! section crossings and intermediate states can be queried without
//! re-integration. Maximal intervals are estimated, not computed exactly:
//! integration stops with `BlowUp` once the state norm passes
//! `blowup_norm`, and with `StepCollapse` once the accepted step falls below
//! `min_step`.
//!
//! Torus fields are integrated in the universal cover; coordinates are
//! reduced modulo the periods only when results are returned.

use serde::{Deserialize, Serialize};

use crate::error::{Error, EscapeReason, Result};
use crate::fields::{ScalarFieldSpec, VectorFieldSpec};

/// Tolerances and guards for the adaptive stepper.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorConfig {
    pub rtol: f64,
    pub atol: f64,
    pub max_step: f64,
    pub max_steps: usize,
    pub blowup_norm: f64,
    pub min_step: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            rtol: 1e-9,
            atol: 1e-12,
            max_step: f64::INFINITY,
            max_steps: 1_000_000,
            blowup_norm: 1e8,
            min_step: 1e-14,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
}

impl StepStats {
    fn absorb(&mut self, other: StepStats) {
        self.accepted += other.accepted;
        self.rejected += other.rejected;
        self.rhs_evals += other.rhs_evals;
    }
}

// Dormand-Prince 5(4) tableau. Stage times are omitted: all fields here are
// autonomous.
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

// Fifth-order minus fourth-order weights (error estimator).
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

// Dense-output weights.
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;

/// Dense-output polynomial for one accepted step, valid on `[t0, t0 + h]`.
#[derive(Debug, Clone)]
pub struct DenseSegment {
    pub t0: f64,
    pub h: f64,
    cont: [Vec<f64>; 5],
}

impl DenseSegment {
    pub fn t_end(&self) -> f64 {
        self.t0 + self.h
    }

    /// Interpolated state at `t` (clamped to the segment).
    pub fn eval(&self, t: f64) -> Vec<f64> {
        let theta = ((t - self.t0) / self.h).clamp(0.0, 1.0);
        let theta1 = 1.0 - theta;
        let [c1, c2, c3, c4, c5] = &self.cont;
        let mut y = vec![0.0; c1.len()];
        for i in 0..y.len() {
            y[i] = c1[i] + theta * (c2[i] + theta1 * (c3[i] + theta * (c4[i] + theta1 * c5[i])));
        }
        y
    }
}

enum Observe {
    Continue,
    Abort(Error),
}

enum End {
    Reached,
    Escaped(EscapeReason),
    Aborted(Error),
}

struct PropOutcome {
    t_reached: f64,
    y: Vec<f64>,
    stats: StepStats,
    end: End,
}

/// Integrate `dy/dt = rhs(y)` from `t = 0` up to `duration > 0`.
///
/// `blow_dims` limits the blow-up norm check to the leading components (the
/// ambient point of an augmented state). The observer sees every accepted
/// step as a dense segment and may stop or abort the run.
fn propagate<R, O>(
    rhs: &R,
    y0: &[f64],
    duration: f64,
    blow_dims: usize,
    cfg: &IntegratorConfig,
    mut observer: O,
) -> PropOutcome
where
    R: Fn(&[f64], &mut [f64]) + ?Sized,
    O: FnMut(&DenseSegment, &[f64]) -> Observe,
{
    let n = y0.len();
    let mut stats = StepStats::default();
    let mut t = 0.0_f64;
    let mut y = y0.to_vec();

    let mut k: Vec<Vec<f64>> = (0..7).map(|_| vec![0.0; n]).collect();
    let mut y_stage = vec![0.0; n];

    rhs(&y, &mut k[0]);
    stats.rhs_evals += 1;

    let mut h = initial_step(rhs, &y, &k[0].clone(), cfg, &mut stats).min(duration);
    let mut fac_max = FAC_MAX;

    loop {
        if duration - t <= 4.0 * f64::EPSILON * duration.max(1.0) {
            return PropOutcome {
                t_reached: duration,
                y,
                stats,
                end: End::Reached,
            };
        }
        if stats.accepted + stats.rejected >= cfg.max_steps {
            return PropOutcome {
                t_reached: t,
                y,
                stats,
                end: End::Escaped(EscapeReason::StepCollapse),
            };
        }
        if h < cfg.min_step {
            return PropOutcome {
                t_reached: t,
                y,
                stats,
                end: End::Escaped(EscapeReason::StepCollapse),
            };
        }
        let h_step = h.min(duration - t);

        // Stages 2..6 and the fifth-order candidate (stage 7, FSAL).
        for i in 0..n {
            y_stage[i] = y[i] + h_step * A21 * k[0][i];
        }
        rhs(&y_stage, &mut k[1]);
        for i in 0..n {
            y_stage[i] = y[i] + h_step * (A31 * k[0][i] + A32 * k[1][i]);
        }
        rhs(&y_stage, &mut k[2]);
        for i in 0..n {
            y_stage[i] = y[i] + h_step * (A41 * k[0][i] + A42 * k[1][i] + A43 * k[2][i]);
        }
        rhs(&y_stage, &mut k[3]);
        for i in 0..n {
            y_stage[i] =
                y[i] + h_step * (A51 * k[0][i] + A52 * k[1][i] + A53 * k[2][i] + A54 * k[3][i]);
        }
        rhs(&y_stage, &mut k[4]);
        for i in 0..n {
            y_stage[i] = y[i]
                + h_step
                    * (A61 * k[0][i]
                        + A62 * k[1][i]
                        + A63 * k[2][i]
                        + A64 * k[3][i]
                        + A65 * k[4][i]);
        }
        rhs(&y_stage, &mut k[5]);
        let mut y_new = vec![0.0; n];
        for i in 0..n {
            y_new[i] = y[i]
                + h_step
                    * (A71 * k[0][i]
                        + A73 * k[2][i]
                        + A74 * k[3][i]
                        + A75 * k[4][i]
                        + A76 * k[5][i]);
        }
        rhs(&y_new, &mut k[6]);
        stats.rhs_evals += 6;

        // Weighted RMS error of the embedded pair.
        let mut err_sq = 0.0;
        for i in 0..n {
            let e = h_step
                * (E1 * k[0][i]
                    + E3 * k[2][i]
                    + E4 * k[3][i]
                    + E5 * k[4][i]
                    + E6 * k[5][i]
                    + E7 * k[6][i]);
            let sc = cfg.atol + cfg.rtol * y[i].abs().max(y_new[i].abs());
            err_sq += (e / sc) * (e / sc);
        }
        let err = (err_sq / n as f64).sqrt();

        if !err.is_finite() {
            // A stage ran through a pole or overflowed; retry shorter.
            stats.rejected += 1;
            h = 0.5 * h_step;
            fac_max = 1.0;
            continue;
        }

        if err <= 1.0 {
            // Accept: assemble the dense interpolant before moving on.
            let mut c1 = vec![0.0; n];
            let mut c2 = vec![0.0; n];
            let mut c3 = vec![0.0; n];
            let mut c4 = vec![0.0; n];
            let mut c5 = vec![0.0; n];
            for i in 0..n {
                let ydiff = y_new[i] - y[i];
                let bspl = h_step * k[0][i] - ydiff;
                c1[i] = y[i];
                c2[i] = ydiff;
                c3[i] = bspl;
                c4[i] = ydiff - h_step * k[6][i] - bspl;
                c5[i] = h_step
                    * (D1 * k[0][i]
                        + D3 * k[2][i]
                        + D4 * k[3][i]
                        + D5 * k[4][i]
                        + D6 * k[5][i]
                        + D7 * k[6][i]);
            }
            let segment = DenseSegment {
                t0: t,
                h: h_step,
                cont: [c1, c2, c3, c4, c5],
            };

            t += h_step;
            y.copy_from_slice(&y_new);
            k.swap(0, 6); // FSAL
            stats.accepted += 1;

            let base_norm_sq: f64 = y[..blow_dims].iter().map(|v| v * v).sum();
            if base_norm_sq.sqrt() > cfg.blowup_norm {
                return PropOutcome {
                    t_reached: t,
                    y,
                    stats,
                    end: End::Escaped(EscapeReason::BlowUp),
                };
            }

            match observer(&segment, &y) {
                Observe::Continue => {}
                Observe::Abort(e) => {
                    return PropOutcome {
                        t_reached: t,
                        y,
                        stats,
                        end: End::Aborted(e),
                    };
                }
            }

            let scale = if err == 0.0 {
                fac_max
            } else {
                (SAFETY * err.powf(-0.2)).clamp(FAC_MIN, fac_max)
            };
            h = (h_step * scale).min(cfg.max_step);
            fac_max = FAC_MAX;
        } else {
            stats.rejected += 1;
            h = h_step * (SAFETY * err.powf(-0.2)).clamp(FAC_MIN, 1.0);
            fac_max = 1.0;
        }
    }
}

/// Hairer-style starting step-size guess.
fn initial_step<R>(
    rhs: &R,
    y: &[f64],
    f0: &[f64],
    cfg: &IntegratorConfig,
    stats: &mut StepStats,
) -> f64
where
    R: Fn(&[f64], &mut [f64]) + ?Sized,
{
    let n = y.len();
    let sc: Vec<f64> = y.iter().map(|v| cfg.atol + cfg.rtol * v.abs()).collect();
    let d0 = (y
        .iter()
        .zip(&sc)
        .map(|(v, s)| (v / s) * (v / s))
        .sum::<f64>()
        / n as f64)
        .sqrt();
    let d1 = (f0
        .iter()
        .zip(&sc)
        .map(|(v, s)| (v / s) * (v / s))
        .sum::<f64>()
        / n as f64)
        .sqrt();
    let h0 = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    };

    let y1: Vec<f64> = y.iter().zip(f0).map(|(v, f)| v + h0 * f).collect();
    let mut f1 = vec![0.0; n];
    rhs(&y1, &mut f1);
    stats.rhs_evals += 1;
    let d2 = (f1
        .iter()
        .zip(f0)
        .zip(&sc)
        .map(|((a, b), s)| ((a - b) / s) * ((a - b) / s))
        .sum::<f64>()
        / n as f64)
        .sqrt()
        / h0;

    let dm = d1.max(d2);
    let h1 = if dm <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / dm).powf(0.2)
    };
    (100.0 * h0).min(h1).min(cfg.max_step)
}

fn reversed_rhs(f: &VectorFieldSpec) -> impl Fn(&[f64], &mut [f64]) + '_ {
    move |y, out| {
        f.eval_into(y, out);
        for v in out.iter_mut() {
            *v = -*v;
        }
    }
}

/// The local flow `F(x, t)`, computed numerically.
///
/// Fails with [`Error::DomainEscape`] when `|t|` exceeds the integrable
/// horizon at `x`. The analytic flows on catalog fields are never consulted.
pub fn integrate(
    f: &VectorFieldSpec,
    x: &[f64],
    t: f64,
    cfg: &IntegratorConfig,
) -> Result<Vec<f64>> {
    integrate_with_stats(f, x, t, cfg).map(|(y, _)| y)
}

/// Like [`integrate`], also returning step statistics.
pub fn integrate_with_stats(
    f: &VectorFieldSpec,
    x: &[f64],
    t: f64,
    cfg: &IntegratorConfig,
) -> Result<(Vec<f64>, StepStats)> {
    f.space.check_point(x)?;
    if t == 0.0 {
        return Ok((x.to_vec(), StepStats::default()));
    }
    let observer = |_: &DenseSegment, _: &[f64]| Observe::Continue;
    let out = if t > 0.0 {
        propagate(
            &|y: &[f64], o: &mut [f64]| f.eval_into(y, o),
            x,
            t,
            x.len(),
            cfg,
            observer,
        )
    } else {
        propagate(&reversed_rhs(f), x, -t, x.len(), cfg, observer)
    };
    match out.end {
        End::Reached => Ok((f.space.reduce(&out.y), out.stats)),
        End::Escaped(reason) => Err(Error::DomainEscape {
            reason,
            t_reached: out.t_reached.copysign(t),
        }),
        End::Aborted(_) => unreachable!("plain integration has no aborting observer"),
    }
}

/// A dense-output integral curve over the largest reachable part of a horizon.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub origin: Vec<f64>,
    state_dim: usize,
    fwd: Vec<DenseSegment>,
    bwd: Vec<DenseSegment>,
    pub t_lo_reached: f64,
    pub t_hi_reached: f64,
    pub escape_lo: EscapeReason,
    pub escape_hi: EscapeReason,
    pub stats: StepStats,
}

impl Trajectory {
    /// Interpolated state at `t`, or `None` outside the integrated range.
    pub fn dense_eval(&self, t: f64) -> Option<Vec<f64>> {
        if t == 0.0 {
            return Some(self.origin.clone());
        }
        if t > 0.0 {
            if t > self.t_hi_reached {
                return None;
            }
            Some(locate(&self.fwd, t)?.eval(t))
        } else {
            if t < self.t_lo_reached {
                return None;
            }
            Some(locate(&self.bwd, -t)?.eval(-t))
        }
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    /// Forward dense segments, ordered by time.
    pub fn forward_segments(&self) -> &[DenseSegment] {
        &self.fwd
    }
}

fn locate(segments: &[DenseSegment], t: f64) -> Option<&DenseSegment> {
    if segments.is_empty() {
        return None;
    }
    let idx = segments.partition_point(|s| s.t_end() < t);
    let seg = segments.get(idx.min(segments.len() - 1))?;
    let slack = 1e-12 * seg.t_end().abs().max(1.0);
    (t >= seg.t0 - slack && t <= seg.t_end() + slack).then_some(seg)
}

/// Dense-output trajectory over the reachable part of `horizon`.
///
/// Escape reasons are recorded per direction; running out of domain is not
/// an error here.
pub fn trajectory(
    f: &VectorFieldSpec,
    x: &[f64],
    horizon: (f64, f64),
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    f.space.check_point(x)?;
    let (lo, hi) = horizon;
    if !(lo < 0.0 && 0.0 < hi) {
        return Err(Error::config("trajectory horizon must straddle 0"));
    }
    let mut stats = StepStats::default();

    let mut fwd = Vec::new();
    let out_f = propagate(
        &|y: &[f64], o: &mut [f64]| f.eval_into(y, o),
        x,
        hi,
        x.len(),
        cfg,
        |seg, _| {
            fwd.push(seg.clone());
            Observe::Continue
        },
    );
    stats.absorb(out_f.stats);
    let (t_hi_reached, escape_hi) = match out_f.end {
        End::Reached => (hi, EscapeReason::ReachedHorizon),
        End::Escaped(r) => (out_f.t_reached, r),
        _ => unreachable!(),
    };

    let mut bwd = Vec::new();
    let out_b = propagate(&reversed_rhs(f), x, -lo, x.len(), cfg, |seg, _| {
        bwd.push(seg.clone());
        Observe::Continue
    });
    stats.absorb(out_b.stats);
    let (t_lo_reached, escape_lo) = match out_b.end {
        End::Reached => (lo, EscapeReason::ReachedHorizon),
        End::Escaped(r) => (-out_b.t_reached, r),
        _ => unreachable!(),
    };

    Ok(Trajectory {
        origin: x.to_vec(),
        state_dim: x.len(),
        fwd,
        bwd,
        t_lo_reached,
        t_hi_reached,
        escape_lo,
        escape_hi,
        stats,
    })
}

/// How the scalar weight enters an augmented integral.
#[derive(Clone, Copy)]
pub struct Weight<'a> {
    pub scalar: &'a ScalarFieldSpec,
    /// Integrate `1 / scalar` instead of `scalar`.
    pub reciprocal: bool,
    /// Abort with `PositivityViolated` if the scalar dips below this floor
    /// at an accepted step.
    pub positivity_floor: Option<f64>,
}

/// Magnitude below which a reciprocal weight counts as singular.
pub const WEIGHT_SINGULAR_TOL: f64 = 1e-12;

impl<'a> Weight<'a> {
    pub fn direct(scalar: &'a ScalarFieldSpec) -> Self {
        Weight {
            scalar,
            reciprocal: false,
            positivity_floor: None,
        }
    }

    pub fn reciprocal(scalar: &'a ScalarFieldSpec) -> Self {
        Weight {
            scalar,
            reciprocal: true,
            positivity_floor: None,
        }
    }

    pub fn with_positivity_floor(mut self, floor: f64) -> Self {
        self.positivity_floor = Some(floor);
        self
    }

    fn apply(&self, value: f64) -> f64 {
        if self.reciprocal {
            1.0 / value
        } else {
            value
        }
    }
}

/// Flow and path integral in one augmented run:
/// `dy/dt = F(y)`, `da/dt = w(y)`, returning `(F(x, s), a(s))`.
///
/// With `w = mu` along the flow of `G` this produces the time
/// reparametrization `alpha(x, s)`; with `w = 1/mu` along the flow of `F` it
/// produces its inverse `beta(x, s)`.
pub fn flow_with_integral(
    f: &VectorFieldSpec,
    weight: &Weight,
    x: &[f64],
    s: f64,
    cfg: &IntegratorConfig,
) -> Result<(Vec<f64>, f64)> {
    f.space.check_point(x)?;
    if f.space != weight.scalar.space {
        return Err(Error::config(format!(
            "weight '{}' lives on a different space than field '{}'",
            weight.scalar.name, f.name
        )));
    }
    if s == 0.0 {
        return Ok((x.to_vec(), 0.0));
    }
    let dim = f.dimension();
    let sign = s.signum();
    let rhs = |y: &[f64], out: &mut [f64]| {
        f.eval_into(&y[..dim], &mut out[..dim]);
        out[dim] = weight.apply(weight.scalar.evaluate(&y[..dim]));
        if sign < 0.0 {
            for v in out.iter_mut() {
                *v = -*v;
            }
        }
    };
    let mut y0 = x.to_vec();
    y0.push(0.0);
    let guard = |state: &[f64], t: f64| -> Option<Error> {
        let value = weight.scalar.evaluate(&state[..dim]);
        if weight.reciprocal && value.abs() < WEIGHT_SINGULAR_TOL {
            return Some(Error::WeightSingular {
                t: t.copysign(s),
                value,
            });
        }
        if let Some(floor) = weight.positivity_floor {
            if value < floor {
                return Some(Error::PositivityViolated {
                    at: format!("flow point at t = {}", t.copysign(s)),
                    value,
                    floor,
                });
            }
        }
        None
    };
    let out = propagate(&rhs, &y0, s.abs(), dim, cfg, |seg, state| {
        match guard(state, seg.t_end()) {
            Some(e) => Observe::Abort(e),
            None => Observe::Continue,
        }
    });
    match out.end {
        End::Reached => {
            let point = f.space.reduce(&out.y[..dim]);
            // The reversed run negates the weight channel too, so the stored
            // value is already the signed integral from 0 to s.
            Ok((point, out.y[dim]))
        }
        End::Escaped(reason) => Err(Error::DomainEscape {
            reason,
            t_reached: out.t_reached.copysign(s),
        }),
        End::Aborted(e) => Err(e),
    }
}

/// A path integral along a trajectory, queryable at any reached time.
#[derive(Debug, Clone)]
pub struct AugmentedIntegral {
    trajectory: Trajectory,
    base_dim: usize,
}

impl AugmentedIntegral {
    /// `a(t)`; zero at `t = 0` by construction. Backward segments negate the
    /// weight channel along with the field, so the stored value is already
    /// the signed integral.
    pub fn value_at(&self, t: f64) -> Option<f64> {
        let state = self.trajectory.dense_eval(t)?;
        Some(state[self.base_dim])
    }

    /// Flow point at `t`.
    pub fn point_at(&self, t: f64) -> Option<Vec<f64>> {
        let state = self.trajectory.dense_eval(t)?;
        Some(state[..self.base_dim].to_vec())
    }

    pub fn trajectory(&self) -> &Trajectory {
        &self.trajectory
    }
}

/// Dense variant of [`flow_with_integral`] over a whole horizon.
pub fn trajectory_with_integral(
    f: &VectorFieldSpec,
    weight: &Weight,
    x: &[f64],
    horizon: (f64, f64),
    cfg: &IntegratorConfig,
) -> Result<AugmentedIntegral> {
    f.space.check_point(x)?;
    let dim = f.dimension();
    let augmented = VectorFieldSpec::new(
        crate::space::AmbientSpace::euclidean(dim + 1),
        format!("{}+integral", f.name),
        {
            let f = f.clone();
            let scalar = weight.scalar.clone();
            let reciprocal = weight.reciprocal;
            move |y: &[f64], out: &mut [f64]| {
                f.eval_into(&y[..dim], &mut out[..dim]);
                let v = scalar.evaluate(&y[..dim]);
                out[dim] = if reciprocal { 1.0 / v } else { v };
            }
        },
    );
    let mut y0 = x.to_vec();
    y0.push(0.0);
    let traj = trajectory(&augmented, &y0, horizon, cfg)?;
    Ok(AugmentedIntegral {
        trajectory: traj,
        base_dim: dim,
    })
}

//! Browser demo bindings: orbit reparametrization, shift-map images, and
//! period profiles, exported as JSON-returning functions for a static page.
//!
//! Everything here is a thin view over the `flowshift` crate; the exports
//! are plain functions on native targets, so the same code is unit-tested
//! without a browser.

use wasm_bindgen::prelude::wasm_bindgen;

use flowshift::fields::{
    nonlinear_rotation, one_plus_r_squared, rotation, translation, ScalarFieldSpec, VectorFieldSpec,
};
use flowshift::flow::{integrate, trajectory, IntegratorConfig};
use flowshift::periodic::{detect_period, PointPeriod};
use flowshift::reparam::ReparamPair;
use flowshift::shiftmap::{shift_apply, ShiftFunction};

fn demo_field(name: &str) -> Result<VectorFieldSpec, String> {
    match name {
        "rotation" => Ok(rotation()),
        "nonlinear-rotation" => Ok(nonlinear_rotation()),
        "translation" => Ok(translation()),
        other => Err(format!("unknown demo field '{other}'")),
    }
}

fn demo_mu(name: &str, field: &VectorFieldSpec) -> Result<ScalarFieldSpec, String> {
    match name {
        "one" => Ok(ScalarFieldSpec::constant(field.space.clone(), 1.0)),
        "two" => Ok(ScalarFieldSpec::constant(field.space.clone(), 2.0)),
        "one-plus-r2" => Ok(one_plus_r_squared(field.space.clone())),
        other => Err(format!("unknown demo factor '{other}'")),
    }
}

fn cfg() -> IntegratorConfig {
    // The demo trades a little accuracy for responsiveness.
    IntegratorConfig {
        rtol: 1e-7,
        atol: 1e-10,
        ..IntegratorConfig::default()
    }
}

fn err_json(msg: &str) -> String {
    serde_json::json!({ "error": msg }).to_string()
}

/// Orbit through `(x, y)` under `F`, with marker positions at equal time
/// steps for both `F` and the reparametrized field `mu F`.
///
/// The two marker sets run along the same curve at different speeds: the
/// orbit is a reparametrization invariant, the clock is not.
#[wasm_bindgen]
pub fn orbit_with_reparam(
    field: &str,
    mu: &str,
    x: f64,
    y: f64,
    duration: f64,
    markers: usize,
) -> String {
    let inner = || -> Result<String, String> {
        let f = demo_field(field)?;
        let mu = demo_mu(mu, &f)?;
        let scaled = flowshift::scale_field(&f, &mu).map_err(|e| e.to_string())?;
        let c = cfg();
        let start = [x, y];
        let horizon = (-1e-6, duration.clamp(0.05, 60.0));
        let traj = trajectory(&f, &start, horizon, &c).map_err(|e| e.to_string())?;
        let t_hi = traj.t_hi_reached;

        let n_curve = 400;
        let curve: Vec<Vec<f64>> = (0..=n_curve)
            .filter_map(|i| traj.dense_eval(t_hi * i as f64 / n_curve as f64))
            .collect();

        let markers = markers.clamp(2, 200);
        let mark = |g: &VectorFieldSpec| -> Vec<Vec<f64>> {
            (0..=markers)
                .map_while(|i| {
                    let t = t_hi * i as f64 / markers as f64;
                    integrate(g, &start, t, &c).ok()
                })
                .collect()
        };
        Ok(serde_json::json!({
            "curve": curve,
            "t_reached": t_hi,
            "base_markers": mark(&f),
            "scaled_markers": mark(&scaled),
        })
        .to_string())
    };
    inner().unwrap_or_else(|e| err_json(&e))
}

/// Image of a square grid under the shift map `x -> F(x, alpha(x))` with
/// `alpha(x) = c + slope * x_1`, plus its distance from the identity.
///
/// For the rotation field, constant `alpha` near a multiple of the full
/// turn collapses the image back onto the grid: those are the kernel
/// elements of the shift map.
#[wasm_bindgen]
pub fn shift_image(field: &str, alpha_const: f64, alpha_slope: f64, per_side: usize) -> String {
    let inner = || -> Result<String, String> {
        let f = demo_field(field)?;
        let space = f.space.clone();
        let alpha = ScalarFieldSpec::new(space.clone(), "demo-alpha", move |p: &[f64]| {
            alpha_const + alpha_slope * p[0]
        });
        let sf = ShiftFunction::new(f, alpha).map_err(|e| e.to_string())?;
        let c = cfg();
        let per_side = per_side.clamp(2, 30);
        let mut points = Vec::new();
        let mut images = Vec::new();
        let mut escapes = 0usize;
        let mut max_displacement = 0.0_f64;
        for i in 0..per_side {
            for j in 0..per_side {
                let p = vec![
                    -1.5 + 3.0 * i as f64 / (per_side - 1) as f64,
                    -1.5 + 3.0 * j as f64 / (per_side - 1) as f64,
                ];
                match shift_apply(&sf, &p, &c) {
                    Ok(q) => {
                        max_displacement = max_displacement.max(space.distance(&p, &q));
                        points.push(p);
                        images.push(q);
                    }
                    Err(_) => escapes += 1,
                }
            }
        }
        Ok(serde_json::json!({
            "points": points,
            "images": images,
            "escaped": escapes,
            "max_displacement": max_displacement,
        })
        .to_string())
    };
    inner().unwrap_or_else(|e| err_json(&e))
}

/// Period profile of a planar field along the positive `x` axis, and the
/// time-1 residual of the normalized field `theta F`.
///
/// For the cubic rotation the detected profile follows `2 pi / (1 + r^2)`
/// and the normalized residuals sit at integrator noise: scaling by the
/// period function turns the flow into a circle action.
#[wasm_bindgen]
pub fn period_profile(field: &str, r_min: f64, r_max: f64, samples: usize) -> String {
    let inner = || -> Result<String, String> {
        let f = demo_field(field)?;
        let c = cfg();
        let samples = samples.clamp(2, 64);
        let r_min = r_min.max(0.05);
        let r_max = r_max.max(r_min + 0.05);
        let mut radii = Vec::new();
        let mut theta = Vec::new();
        let mut reference = Vec::new();
        let mut residuals = Vec::new();
        for i in 0..samples {
            let r = r_min + (r_max - r_min) * i as f64 / (samples - 1) as f64;
            let p = [r, 0.0];
            match detect_period(&f, &p, 60.0, &c).map_err(|e| e.to_string())? {
                PointPeriod::Periodic(per) => {
                    radii.push(r);
                    theta.push(per);
                    reference.push(2.0 * std::f64::consts::PI / (1.0 + r * r));
                    // Certify theta at this sample: the theta-scaled field
                    // must return in unit time.
                    let scaled = flowshift::scale_field(
                        &f,
                        &ScalarFieldSpec::constant(f.space.clone(), per),
                    )
                    .map_err(|e| e.to_string())?;
                    let back = integrate(&scaled, &p, 1.0, &c).map_err(|e| e.to_string())?;
                    residuals.push(f.space.distance(&back, &p));
                }
                _ => {
                    radii.push(r);
                    theta.push(f64::NAN);
                    reference.push(f64::NAN);
                    residuals.push(f64::NAN);
                }
            }
        }
        Ok(serde_json::json!({
            "radii": radii,
            "theta": theta,
            "cubic_reference": reference,
            "unit_time_residuals": residuals,
        })
        .to_string())
    };
    inner().unwrap_or_else(|e| err_json(&e))
}

/// A reparametrization sanity number for the page footer: max residual of
/// `G(x, s) = F(x, alpha(x, s))` over a small probe set.
#[wasm_bindgen]
pub fn bridge_probe(field: &str, mu: &str, s: f64) -> String {
    let inner = || -> Result<String, String> {
        let f = demo_field(field)?;
        let mu = demo_mu(mu, &f)?;
        let pair = ReparamPair::new(f, mu).map_err(|e| e.to_string())?;
        let c = cfg();
        let mut max = 0.0_f64;
        for angle in [0.3_f64, 1.4, 2.6, 4.4] {
            let x = [angle.cos(), angle.sin()];
            let (y_scaled, a) = flowshift::flow_with_integral(
                &pair.scaled,
                &flowshift::Weight::direct(&pair.mu),
                &x,
                s,
                &c,
            )
            .map_err(|e| e.to_string())?;
            let y_base = integrate(&pair.field, &x, a, &c).map_err(|e| e.to_string())?;
            max = max.max(pair.field.space.distance(&y_scaled, &y_base));
        }
        Ok(serde_json::json!({ "max_residual": max }).to_string())
    };
    inner().unwrap_or_else(|e| err_json(&e))
}

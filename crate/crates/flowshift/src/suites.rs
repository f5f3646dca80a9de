//! Suite dispatch: run named verification suites from a resolved scenario
//! and write their JSON/CSV reports.

use std::path::Path;

use crate::config::{Resolved, SuiteDef};
use crate::error::{Error, Result};
use crate::fields::{SampleGrid, ScalarFieldSpec, VectorFieldSpec};
use crate::flow::integrate;
use crate::periodic::{
    linear_part_analysis, normalize_to_circle_action, period_function, transformed_period,
    PointPeriod,
};
use crate::pushforward::{induced_field, verify_pushforward, PushforwardCase};
use crate::reparam::{verify_bridge, verify_image_equality, ReparamPair};
use crate::report::{ResidualRecord, VerificationReport};

fn need<'a, T>(opt: &'a Option<T>, suite: &str, key: &str) -> Result<&'a T> {
    opt.as_ref()
        .ok_or_else(|| Error::config(format!("suite '{suite}': missing '{key}'")))
}

fn tolerance(def: &SuiteDef, default: f64) -> f64 {
    def.tolerance.unwrap_or(default)
}

fn pair_of(res: &Resolved, def: &SuiteDef) -> Result<ReparamPair> {
    let name = need(&def.pair, &def.name, "pair")?;
    let pd = res
        .pairs
        .get(name)
        .ok_or_else(|| Error::config(format!("suite '{}': unknown pair '{name}'", def.name)))?;
    let field = res.field(&pd.field)?.clone();
    let mu = res.scalar(&pd.mu, &field.space)?;
    ReparamPair::new(field, mu)
}

fn grid_of<'a>(res: &'a Resolved, def: &SuiteDef) -> Result<&'a SampleGrid> {
    res.grid(need(&def.grid, &def.name, "grid")?)
}

/// Run one suite by definition. Configuration problems surface as
/// `Error::Config`; numerical failures come back as a report with
/// `pass = false`.
pub fn run_suite(res: &Resolved, def: &SuiteDef) -> Result<VerificationReport> {
    let cfg = &res.integrator;
    let mut report = match def.kind.as_str() {
        "flow-oracle" => {
            let field = res.field(need(&def.field, &def.name, "field")?)?;
            let grid = grid_of(res, def)?;
            if !field.has_analytic_flow() {
                return Err(Error::config(format!(
                    "suite '{}': field '{}' has no analytic flow oracle",
                    def.name, field.name
                )));
            }
            flow_oracle(field, grid, &def.t_values, tolerance(def, 1e-6), cfg)?
        }
        "bridge" => {
            let pair = pair_of(res, def)?;
            let grid = grid_of(res, def)?;
            verify_bridge(&pair, grid, &def.s_values, tolerance(def, 1e-6), cfg)?
        }
        "image-equality" => {
            let pair = pair_of(res, def)?;
            let grid = grid_of(res, def)?;
            let mut gammas = Vec::new();
            for name in &def.gammas {
                gammas.push(res.scalar(name, &pair.field.space)?);
            }
            if gammas.is_empty() {
                return Err(Error::config(format!("suite '{}': no gammas", def.name)));
            }
            verify_image_equality(&pair, &gammas, grid, tolerance(def, 1e-6), cfg)?
        }
        "pushforward" => {
            let case_name = need(&def.case, &def.name, "case")?;
            let cd = res.cases.get(case_name).ok_or_else(|| {
                Error::config(format!("suite '{}': unknown case '{case_name}'", def.name))
            })?;
            let field = res.field(&cd.field)?.clone();
            let alpha = res.scalar(&cd.alpha, &field.space)?;
            let grid = res.grid(&cd.grid)?.clone();
            let case = PushforwardCase::new(field, alpha, grid)?;
            let tol = tolerance(def, 5e-5);
            let mut report = verify_pushforward(&case, tol, cfg)?;
            if let Some(expected) = def.expect_factor_const {
                let worst = case
                    .check_factor()?
                    .iter()
                    .map(|f| (f - expected).abs())
                    .fold(0.0_f64, f64::max);
                report = report.with_note(format!(
                    "constant-factor check: max |(1+F(alpha)) - {expected}| = {worst:.3e}"
                ));
                if worst > 1e-6 {
                    report = report.failed("factor field deviates from the expected constant");
                }
            }
            if def.chain_image_equality {
                let (_, mu) = induced_field(&case)?;
                let chain_pair = ReparamPair::new(case.field.clone(), mu)?;
                let gammas = [
                    ScalarFieldSpec::constant(case.field.space.clone(), 0.2),
                    ScalarFieldSpec::constant(case.field.space.clone(), 1.0),
                ];
                let chained = verify_image_equality(&chain_pair, &gammas, &case.grid, 1e-6, cfg)?;
                report = report.with_note(format!(
                    "induced-field image equality: max residual {:.3e} (tol 1e-6)",
                    chained.max_residual
                ));
                if !chained.pass {
                    report = report.failed("induced field failed image equality at 1e-6");
                }
            }
            report
        }
        "period" => {
            let field = res.field(need(&def.field, &def.name, "field")?)?;
            let grid = grid_of(res, def)?;
            let t_max = def.t_max.unwrap_or(50.0);
            period_suite(res, def, field, grid, t_max)?
        }
        "period-transform" => {
            let pair = pair_of(res, def)?;
            let grid = grid_of(res, def)?;
            let t_max = def.t_max.unwrap_or(50.0);
            let theta_report = period_function(&pair.field, grid, t_max, cfg)?;
            let cert_tol = tolerance(def, 1e-5);
            let shortcut_tol = def.shortcut_tolerance.unwrap_or(1e-6);
            let (theta_bar, mut report) = transformed_period(
                &pair.field,
                &pair.mu,
                &theta_report,
                grid,
                cfg,
                def.mu_orbit_constant,
                cert_tol,
                shortcut_tol,
            )?;
            if let Some(c) = def.expect_constant {
                let worst = theta_bar
                    .values
                    .iter()
                    .map(|v| (v - c).abs())
                    .fold(0.0_f64, f64::max);
                report = report.with_note(format!(
                    "expected constant transformed period {c}: max deviation {worst:.3e}"
                ));
                if worst > shortcut_tol {
                    report = report.failed("transformed period deviates from expected constant");
                }
            }
            report
        }
        "circle" => {
            let field = res.field(need(&def.field, &def.name, "field")?)?;
            let grid = grid_of(res, def)?;
            let t_max = def.t_max.unwrap_or(50.0);
            let tol = tolerance(def, 1e-5);
            let theta_report = period_function(field, grid, t_max, cfg)?;
            let expect = def.expect.as_deref().unwrap_or("periodic");
            match (
                expect,
                normalize_to_circle_action(field, &theta_report, grid, tol, cfg),
            ) {
                ("periodic", Ok((scaled, theta, mut report))) => {
                    report.extra = serde_json::json!({
                        "normalized_field": scaled.name,
                        "period_function": theta.name,
                        "theta_samples": theta_report.theta_candidate,
                    });
                    report
                }
                ("periodic", Err(Error::CertificateFailed { report, .. })) => *report,
                ("periodic", Err(e)) => return Err(e),
                ("refused", Err(Error::NotGloballyPeriodic(msg))) => VerificationReport::from_rows(
                    def.name.clone(),
                    "G(x, 1) = x for G = theta*F",
                    tol,
                    vec![],
                    0.0,
                )
                .with_note(format!("correctly refused: {msg}")),
                ("refused", Ok(_)) => VerificationReport::from_rows(
                    def.name.clone(),
                    "G(x, 1) = x for G = theta*F",
                    tol,
                    vec![],
                    0.0,
                )
                .failed("expected the certificate to be refused, but it passed"),
                ("refused", Err(e)) => return Err(e),
                (other, _) => {
                    return Err(Error::config(format!(
                        "suite '{}': unknown expectation '{other}'",
                        def.name
                    )))
                }
            }
        }
        "linear-part" => {
            let field = res.field(need(&def.field, &def.name, "field")?)?;
            let grid = grid_of(res, def)?;
            let point = need(&def.point, &def.name, "point")?;
            let t_max = def.t_max.unwrap_or(50.0);
            let tol = tolerance(def, 1e-6);
            let theta_report = period_function(field, grid, t_max, cfg)?;
            let (_, theta, _) = normalize_to_circle_action(field, &theta_report, grid, 1e-5, cfg)?;
            let lp = linear_part_analysis(field, point, true, Some(&theta))?;
            let mut rows = vec![ResidualRecord {
                label: "max |Re(lambda)|".into(),
                residual: lp.max_abs_real_part,
            }];
            if let Some(s) = lp.scaling_residual {
                rows.push(ResidualRecord {
                    label: "j1-scaling".into(),
                    residual: s,
                });
            }
            if !def.expected_rates.is_empty() {
                if lp.rotation_rates.len() == def.expected_rates.len() {
                    let mut expected = def.expected_rates.clone();
                    expected.sort_by(f64::total_cmp);
                    for (i, (got, want)) in lp.rotation_rates.iter().zip(&expected).enumerate() {
                        rows.push(ResidualRecord {
                            label: format!("rate[{i}] vs {want}"),
                            residual: (got - want).abs(),
                        });
                    }
                } else {
                    rows.push(ResidualRecord {
                        label: format!(
                            "rate count {} != expected {}",
                            lp.rotation_rates.len(),
                            def.expected_rates.len()
                        ),
                        residual: f64::INFINITY,
                    });
                }
            }
            if let Some(l) = def.expected_zero_dim {
                rows.push(ResidualRecord {
                    label: format!("zero block dim {} vs {l}", lp.zero_block_dim),
                    residual: if lp.zero_block_dim == l {
                        0.0
                    } else {
                        f64::INFINITY
                    },
                });
            }
            if !lp.spectrum_ok {
                rows.push(ResidualRecord {
                    label: "spectrum is not rotation blocks plus zero".into(),
                    residual: f64::INFINITY,
                });
            }
            let mut report = VerificationReport::from_rows(
                def.name.clone(),
                "spectrum of j1(F) at a singular point is {±i A_j} ∪ {0}, j1(theta F) = theta(z) j1(F)",
                tol,
                rows,
                0.0,
            );
            report.extra = serde_json::to_value(&lp)
                .map_err(|e| Error::config(format!("serializing linear part: {e}")))?;
            report
        }
        other => {
            return Err(Error::config(format!(
                "suite '{}': unknown kind '{other}'",
                def.name
            )))
        }
    };
    report.suite_name = def.name.clone();
    Ok(report)
}

/// Compare the numerical flow against the analytic oracle over a grid and
/// a list of times; samples that leave the oracle's validity (blow-up) are
/// skipped symmetrically for both routes.
fn flow_oracle(
    field: &VectorFieldSpec,
    grid: &SampleGrid,
    t_values: &[f64],
    tol: f64,
    cfg: &crate::flow::IntegratorConfig,
) -> Result<VerificationReport> {
    let start = std::time::Instant::now();
    if t_values.is_empty() {
        return Err(Error::config("flow-oracle suite needs t_values"));
    }
    let work: Vec<(usize, f64)> = grid
        .points
        .iter()
        .enumerate()
        .flat_map(|(i, _)| t_values.iter().map(move |&t| (i, t)))
        .collect();
    let rows = crate::par_map(&work, |&(i, t)| {
        let x = &grid.points[i];
        let exact = field.analytic_flow(x, t).expect("checked above");
        if exact.iter().any(|v| !v.is_finite()) {
            // Outside the oracle's validity; not a sample.
            return None;
        }
        let exact = field.space.reduce(&exact);
        let label = format!("x{i}={x:?};t={t}");
        Some(match integrate(field, x, t, cfg) {
            Ok(y) => ResidualRecord {
                label,
                residual: field.space.distance(&y, &exact),
            },
            Err(e) => ResidualRecord {
                label: format!("{label} [{e}]"),
                residual: f64::INFINITY,
            },
        })
    })
    .into_iter()
    .flatten()
    .collect();
    Ok(VerificationReport::from_rows(
        format!("flow-oracle[{}]", field.name),
        "numerical flow matches the closed-form flow",
        tol,
        rows,
        start.elapsed().as_secs_f64(),
    ))
}

fn period_suite(
    res: &Resolved,
    def: &SuiteDef,
    field: &VectorFieldSpec,
    grid: &SampleGrid,
    t_max: f64,
) -> Result<VerificationReport> {
    let start = std::time::Instant::now();
    let cfg = &res.integrator;
    let tol = tolerance(def, 1e-6);
    let report = period_function(field, grid, t_max, cfg)?;
    let expect = def.expect.as_deref().unwrap_or("periodic");
    let mut rows = Vec::new();
    match expect {
        "non-periodic" => {
            for (i, p) in report.per_point_period.iter().enumerate() {
                rows.push(ResidualRecord {
                    label: format!("x{i}={:?} {p:?}", grid.points[i]),
                    residual: match p {
                        PointPeriod::NonPeriodic { .. } => 0.0,
                        _ => f64::INFINITY,
                    },
                });
            }
        }
        "periodic" => {
            if !report.globally_periodic {
                rows.push(ResidualRecord {
                    label: "grid is not globally periodic".into(),
                    residual: f64::INFINITY,
                });
            }
            rows.push(ResidualRecord {
                label: "orbit constancy".into(),
                residual: report.orbit_constancy_residual,
            });
            let oracle = def
                .period_scalar
                .as_ref()
                .map(|name| res.scalar(name, &field.space))
                .transpose()?;
            for (i, theta) in report.theta_candidate.iter().enumerate() {
                let x = &grid.points[i];
                let theta = match theta {
                    Some(t) => *t,
                    None => continue,
                };
                if let Some(oracle) = &oracle {
                    rows.push(ResidualRecord {
                        label: format!("theta-oracle:x{i}={x:?}"),
                        residual: (theta - oracle.evaluate(x)).abs(),
                    });
                }
                // Kernel property: integer multiples of theta return to x.
                for n in 1..=3u32 {
                    match integrate(field, x, n as f64 * theta, cfg) {
                        Ok(y) => rows.push(ResidualRecord {
                            label: format!("ker:n={n}:x{i}={x:?}"),
                            residual: field.space.distance(&y, x) / n as f64,
                        }),
                        Err(e) => rows.push(ResidualRecord {
                            label: format!("ker:n={n}:x{i}={x:?} [{e}]"),
                            residual: f64::INFINITY,
                        }),
                    }
                }
            }
        }
        other => {
            return Err(Error::config(format!(
                "suite '{}': unknown expectation '{other}'",
                def.name
            )))
        }
    }
    let mut out = VerificationReport::from_rows(
        def.name.clone(),
        "F(x, n theta(x)) = x, theta constant along orbits, theta = n_x Per(x)",
        tol,
        rows,
        start.elapsed().as_secs_f64(),
    );
    out.extra = serde_json::json!({
        "per_point_period": report.per_point_period,
        "theta_candidate": report.theta_candidate,
        "multiplicity_hints": report.multiplicity_hints,
        "extrapolated": report.extrapolated,
        "globally_periodic": report.globally_periodic,
    });
    Ok(out)
}

/// Run one named suite and write its JSON and CSV files under `out_dir`.
pub fn run_named_suite(res: &Resolved, name: &str, out_dir: &Path) -> Result<VerificationReport> {
    let def = res.suite(name)?.clone();
    let report = run_suite(res, &def)?;
    write_report(&report, out_dir)?;
    Ok(report)
}

pub fn write_report(report: &VerificationReport, out_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    report.write_json(&out_dir.join(format!("{}.json", report.suite_name)))?;
    report.write_csv(&out_dir.join(format!("{}.csv", report.suite_name)))?;
    Ok(())
}

/// Run every suite in order, writing reports; returns the reports and
/// whether all passed. With the `parallel` feature and `parallel = true`,
/// suites run concurrently but reports are still written in config order.
pub fn run_all(res: &Resolved, out_dir: &Path, parallel: bool) -> Result<Vec<VerificationReport>> {
    let reports: Vec<Result<VerificationReport>> = if parallel {
        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            res.suites
                .par_iter()
                .map(|def| run_suite(res, def))
                .collect()
        }
        #[cfg(not(feature = "parallel"))]
        {
            res.suites.iter().map(|def| run_suite(res, def)).collect()
        }
    } else {
        res.suites.iter().map(|def| run_suite(res, def)).collect()
    };
    let mut out = Vec::with_capacity(reports.len());
    for r in reports {
        let report = r?;
        write_report(&report, out_dir)?;
        out.push(report);
    }
    Ok(out)
}

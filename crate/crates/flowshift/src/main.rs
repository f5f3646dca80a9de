//! `flowshift`: config-driven verification suites for flows, shift maps,
//! reparametrizations, and periodic normalization.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use flowshift::config::{Resolved, ScenarioConfig};
use flowshift::error::Error;
use flowshift::fields::ScalarFieldSpec;
use flowshift::flow::integrate_with_stats;
use flowshift::periodic::{linear_part_analysis, normalize_to_circle_action, period_function};
use flowshift::pushforward::{verify_pushforward, PushforwardCase};
use flowshift::reparam::{verify_bridge, verify_image_equality, ReparamPair};
use flowshift::report::VerificationReport;
use flowshift::shiftmap::{shift_on_grid, ShiftFunction};
use flowshift::suites::{run_all, run_named_suite, write_report};

#[derive(Parser)]
#[command(name = "flowshift", version)]
#[command(
    about = "Verify flow, shift-map, reparametrization, and period identities of vector fields"
)]
struct Cli {
    /// Scenario config file (TOML)
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Where reports are written (overrides the config)
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,

    /// Relative integration tolerance (overrides the config)
    #[arg(long, global = true)]
    rtol: Option<f64>,

    /// Absolute integration tolerance (overrides the config)
    #[arg(long, global = true)]
    atol: Option<f64>,

    /// Seed for randomized grid jitter
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Run suites concurrently (reports keep config order)
    #[arg(long, global = true)]
    parallel: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the flow of a field from a point and print the endpoint
    Flow {
        #[arg(long)]
        field: String,
        /// Starting point as comma-separated coordinates
        #[arg(long)]
        point: String,
        #[arg(long)]
        t: f64,
    },
    /// Evaluate a shift map over a grid; writes a CSV of (point, image) rows
    Shift {
        #[arg(long)]
        field: String,
        /// Named scalar used as the time function
        #[arg(long)]
        alpha: String,
        #[arg(long)]
        grid: String,
    },
    /// Check the reparametrization bridge and, for positive factors, the
    /// image-equality diagram of a (field, mu) pair
    ReparamCheck {
        #[arg(long)]
        pair: String,
        #[arg(long)]
        grid: String,
        /// JSON report path (CSV residuals written alongside)
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_values_t = [0.25, 0.5, 1.0])]
        s_values: Vec<f64>,
    },
    /// Verify the pushforward identity for a named case
    PushforwardCheck {
        #[arg(long)]
        case: String,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Detect periods over a grid and print the period report
    Period {
        #[arg(long)]
        field: String,
        #[arg(long)]
        grid: String,
        #[arg(long, default_value_t = 50.0)]
        t_max: f64,
    },
    /// Scale a field by its period function and certify the time-1 identity
    CircleNormalize {
        #[arg(long)]
        field: String,
        #[arg(long)]
        grid: String,
        #[arg(long, default_value_t = 50.0)]
        t_max: f64,
    },
    /// Analyze the linear part at a singular point of a periodic field
    Linearize {
        #[arg(long)]
        field: String,
        /// Singular point as comma-separated coordinates
        #[arg(long)]
        point: String,
        /// Grid anchoring the circle-action certificate
        #[arg(long)]
        grid: String,
        #[arg(long, default_value_t = 50.0)]
        t_max: f64,
    },
    /// Run one named suite from the config
    Suite {
        #[arg(long)]
        name: String,
    },
    /// Run every suite in the config
    All,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn load(cli: &Cli) -> flowshift::Result<Resolved> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::config("--config is required"))?;
    let mut resolved = ScenarioConfig::from_path(path)?.resolve(cli.seed)?;
    if let Some(rtol) = cli.rtol {
        resolved.integrator.rtol = rtol;
    }
    if let Some(atol) = cli.atol {
        resolved.integrator.atol = atol;
    }
    if let Some(dir) = &cli.output_dir {
        resolved.output_dir = dir.clone();
    }
    Ok(resolved)
}

fn parse_point(text: &str) -> flowshift::Result<Vec<f64>> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| Error::config(format!("bad coordinate '{s}': {e}")))
        })
        .collect()
}

fn print_json<T: serde::Serialize>(value: &T) -> flowshift::Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::config(format!("serializing output: {e}")))?;
    println!("{text}");
    Ok(())
}

fn report_exit(report: &VerificationReport) -> ExitCode {
    if report.pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn run(cli: &Cli) -> flowshift::Result<ExitCode> {
    let res = load(cli)?;
    let out_dir = res.output_dir.clone();
    match &cli.command {
        Command::Flow { field, point, t } => {
            let f = res.field(field)?;
            let x = parse_point(point)?;
            match integrate_with_stats(f, &x, *t, &res.integrator) {
                Ok((y, stats)) => {
                    print_json(&serde_json::json!({
                        "field": f.name,
                        "point": x,
                        "t": t,
                        "endpoint": y,
                        "steps": stats,
                    }))?;
                    Ok(ExitCode::SUCCESS)
                }
                Err(Error::DomainEscape { reason, t_reached }) => {
                    print_json(&serde_json::json!({
                        "field": f.name,
                        "point": x,
                        "t": t,
                        "escape": reason.to_string(),
                        "t_reached": t_reached,
                    }))?;
                    Ok(ExitCode::from(1))
                }
                Err(e) => Err(e),
            }
        }
        Command::Shift { field, alpha, grid } => {
            let f = res.field(field)?.clone();
            let a = res.scalar(alpha, &f.space)?;
            let g = res.grid(grid)?;
            let mut sf = ShiftFunction::new(f, a)?;
            let image = shift_on_grid(&mut sf, g, &res.integrator)?;
            std::fs::create_dir_all(&out_dir)?;
            let csv_path = out_dir.join(format!("shift-{field}-{alpha}.csv"));
            let mut text = String::from("point,image\n");
            for (p, y) in g.points.iter().zip(&image.images) {
                text.push_str(&format!("{p:?},{y:?}\n"));
            }
            std::fs::write(&csv_path, text)?;
            print_json(&serde_json::json!({
                "map": image.tag,
                "n_points": g.len(),
                "csv": csv_path,
            }))?;
            Ok(ExitCode::SUCCESS)
        }
        Command::ReparamCheck {
            pair,
            grid,
            report,
            s_values,
        } => {
            let pd = res
                .pairs
                .get(pair)
                .ok_or_else(|| Error::config(format!("unknown pair '{pair}'")))?;
            let f = res.field(&pd.field)?.clone();
            let mu = res.scalar(&pd.mu, &f.space)?;
            let rp = ReparamPair::new(f, mu)?;
            let g = res.grid(grid)?;
            let mut combined = verify_bridge(&rp, g, s_values, 1e-6, &res.integrator)?;
            match rp.check_positivity(g) {
                Ok(()) => {
                    let gammas = [
                        ScalarFieldSpec::constant(rp.field.space.clone(), 0.0),
                        ScalarFieldSpec::constant(rp.field.space.clone(), 0.3),
                    ];
                    let eq = verify_image_equality(&rp, &gammas, g, 1e-6, &res.integrator)?;
                    let eq_pass = eq.pass;
                    let eq_max = eq.max_residual;
                    combined.rows.extend(eq.rows);
                    let rows = std::mem::take(&mut combined.rows);
                    let mut merged = VerificationReport::from_rows(
                        format!("reparam-check[{pair}]"),
                        "G(x,s) = F(x, alpha(x,s)); shift images coincide via xi/xi_inverse",
                        1e-6,
                        rows,
                        combined.wall_time,
                    );
                    merged.pass = merged.pass && eq_pass;
                    merged = merged.with_note(format!("image-equality max residual {eq_max:.3e}"));
                    combined = merged;
                }
                Err(e) => {
                    combined = combined.with_note(format!(
                        "factor is not positive on the grid ({e}); only the inclusion direction was checked"
                    ));
                }
            }
            combined.suite_name = format!("reparam-check-{pair}");
            let json_path = report
                .clone()
                .unwrap_or_else(|| out_dir.join(format!("{}.json", combined.suite_name)));
            if let Some(dir) = json_path.parent() {
                std::fs::create_dir_all(dir)?;
            }
            combined.write_json(&json_path)?;
            combined.write_csv(&json_path.with_extension("csv"))?;
            println!("{}", combined.one_line());
            Ok(report_exit(&combined))
        }
        Command::PushforwardCheck { case, report } => {
            let cd = res
                .cases
                .get(case)
                .ok_or_else(|| Error::config(format!("unknown case '{case}'")))?;
            let f = res.field(&cd.field)?.clone();
            let alpha = res.scalar(&cd.alpha, &f.space)?;
            let g = res.grid(&cd.grid)?.clone();
            let pc = PushforwardCase::new(f, alpha, g)?;
            let mut rep = verify_pushforward(&pc, 5e-5, &res.integrator)?;
            rep.suite_name = format!("pushforward-check-{case}");
            let json_path = report
                .clone()
                .unwrap_or_else(|| out_dir.join(format!("{}.json", rep.suite_name)));
            if let Some(dir) = json_path.parent() {
                std::fs::create_dir_all(dir)?;
            }
            rep.write_json(&json_path)?;
            rep.write_csv(&json_path.with_extension("csv"))?;
            println!("{}", rep.one_line());
            Ok(report_exit(&rep))
        }
        Command::Period { field, grid, t_max } => {
            let f = res.field(field)?;
            let g = res.grid(grid)?;
            let report = period_function(f, g, *t_max, &res.integrator)?;
            print_json(&report)?;
            std::fs::create_dir_all(&out_dir)?;
            let path = out_dir.join(format!("period-{field}.json"));
            std::fs::write(
                &path,
                serde_json::to_string_pretty(&report)
                    .map_err(|e| Error::config(format!("serializing period report: {e}")))?,
            )?;
            Ok(if report.globally_periodic {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            })
        }
        Command::CircleNormalize { field, grid, t_max } => {
            let f = res.field(field)?;
            let g = res.grid(grid)?;
            let period_report = period_function(f, g, *t_max, &res.integrator)?;
            match normalize_to_circle_action(f, &period_report, g, 1e-5, &res.integrator) {
                Ok((scaled, theta, mut cert)) => {
                    cert.suite_name = format!("circle-normalize-{field}");
                    cert.extra = serde_json::json!({
                        "normalized_field": scaled.name,
                        "period_function": theta.name,
                        "params": scaled.params,
                        "theta_samples": period_report.theta_candidate,
                    });
                    write_report(&cert, &out_dir)?;
                    print_json(&cert)?;
                    Ok(report_exit(&cert))
                }
                Err(Error::CertificateFailed { report, .. }) => {
                    let mut cert = *report;
                    cert.suite_name = format!("circle-normalize-{field}");
                    write_report(&cert, &out_dir)?;
                    print_json(&cert)?;
                    Ok(ExitCode::from(1))
                }
                Err(e) => Err(e),
            }
        }
        Command::Linearize {
            field,
            point,
            grid,
            t_max,
        } => {
            let f = res.field(field)?;
            let g = res.grid(grid)?;
            let z = parse_point(point)?;
            let period_report = period_function(f, g, *t_max, &res.integrator)?;
            let (_, theta, _) =
                normalize_to_circle_action(f, &period_report, g, 1e-5, &res.integrator)?;
            let lp = linear_part_analysis(f, &z, true, Some(&theta))?;
            print_json(&lp)?;
            std::fs::create_dir_all(&out_dir)?;
            std::fs::write(
                out_dir.join(format!("linear-part-{field}.json")),
                serde_json::to_string_pretty(&lp)
                    .map_err(|e| Error::config(format!("serializing linear part: {e}")))?,
            )?;
            Ok(if lp.spectrum_ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            })
        }
        Command::Suite { name } => {
            let report = run_named_suite(&res, name, &out_dir)?;
            println!("{}", report.one_line());
            Ok(report_exit(&report))
        }
        Command::All => {
            let reports = run_all(&res, &out_dir, cli.parallel)?;
            for r in &reports {
                println!("{}", r.one_line());
            }
            let failed = reports.iter().filter(|r| !r.pass).count();
            println!(
                "{} of {} suites passed",
                reports.len() - failed,
                reports.len()
            );
            Ok(if failed == 0 {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            })
        }
    }
}

//! Acceptance suite: every top-level guarantee of the crate, one test per
//! criterion, each printing a single pass/fail line.
//!
//! Run with `cargo test --test acceptance -- --nocapture` to see the lines.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::time::Instant;

use flowshift::error::Error;
use flowshift::fields::{
    blowup, builtin_catalog, coordinate_scale, nonlinear_rotation, one_plus_r_squared, rotation,
    rotation_blocks, torus_constant, translation, ScalarFieldSpec,
};
use flowshift::flow::{integrate, IntegratorConfig};
use flowshift::periodic::{
    detect_period, linear_part_analysis, normalize_to_circle_action, period_function, PointPeriod,
};
use flowshift::pushforward::{verify_pushforward, PushforwardCase};
use flowshift::reparam::{verify_bridge, verify_image_equality, ReparamPair};
use flowshift::space::AmbientSpace;
use flowshift::SampleGrid;

fn cfg() -> IntegratorConfig {
    IntegratorConfig::default()
}

fn verdict(name: &str, pass: bool, detail: &str) {
    println!(
        "acceptance: {name}: {} ({detail})",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "{name}: {detail}");
}

fn tau() -> f64 {
    2.0 * PI
}

#[test]
fn flow_correctness_against_oracles() {
    let started = Instant::now();
    let c = cfg();
    let mut samples = 0usize;
    let mut max_err = 0.0_f64;
    for field in builtin_catalog() {
        if !field.has_analytic_flow() {
            continue;
        }
        let (grid, t_values): (Vec<Vec<f64>>, Vec<f64>) = match field.name.as_str() {
            "rotation" | "nonlinear-rotation" => (
                SampleGrid::circles(&[0.4, 0.8, 1.3, 2.1], 5, 0.0, 0)
                    .unwrap()
                    .points,
                vec![-2.0, -0.5, 0.5, PI, 1.9],
            ),
            "translation" => (
                SampleGrid::lattice(
                    AmbientSpace::euclidean(2),
                    &[-1.0, -1.0],
                    &[1.0, 1.0],
                    &[3, 3],
                    0.0,
                    0,
                )
                .unwrap()
                .points,
                vec![-2.0, 0.5, 5.0],
            ),
            "blowup" => (
                vec![vec![0.25], vec![0.5], vec![1.0]],
                vec![-2.0, -0.5, 0.3, 0.9],
            ),
            _ => (
                vec![(0..field.dimension())
                    .map(|i| 0.3 + 0.1 * i as f64)
                    .collect()],
                vec![-1.0, 0.7, 2.0],
            ),
        };
        for x in &grid {
            for &t in &t_values {
                let exact = field.analytic_flow(x, t).unwrap();
                if exact.iter().any(|v| !v.is_finite()) {
                    continue;
                }
                let exact = field.space.reduce(&exact);
                let y = integrate(&field, x, t, &c).unwrap();
                max_err = max_err.max(field.space.distance(&y, &exact));
                samples += 1;
            }
        }
    }
    let elapsed = started.elapsed().as_secs_f64();
    verdict(
        "flow correctness",
        samples >= 200 && max_err <= 1e-6 && elapsed < 5.0,
        &format!("{samples} samples, max err {max_err:.3e}, {elapsed:.2}s"),
    );
}

fn bridge_pairs() -> Vec<(ReparamPair, SampleGrid, Vec<f64>)> {
    let rot = rotation();
    let rot_pair = ReparamPair::new(rot.clone(), one_plus_r_squared(rot.space.clone())).unwrap();
    let rot_grid = SampleGrid::circles(&[0.5, 1.0, 2.0], 5, 0.0, 0).unwrap();

    let blw = blowup();
    let blw_pair = ReparamPair::new(
        blw.clone(),
        ScalarFieldSpec::constant(blw.space.clone(), 2.0),
    )
    .unwrap();
    let blw_grid = SampleGrid::from_points(
        AmbientSpace::euclidean(1),
        vec![vec![0.25], vec![0.5], vec![1.0]],
        "blowup line",
    )
    .unwrap();

    let torus = torus_constant(std::f64::consts::SQRT_2, [tau(), tau()]);
    let mu = flowshift::fields::offset_sin_first(torus.space.clone(), 2.0, 1.0);
    let torus_pair = ReparamPair::new(torus.clone(), mu).unwrap();
    let torus_grid = SampleGrid::lattice(
        torus.space.clone(),
        &[0.5, 0.5],
        &[5.78, 5.78],
        &[3, 3],
        0.0,
        0,
    )
    .unwrap();

    vec![
        (rot_pair, rot_grid, vec![0.1, 1.0, PI]),
        (blw_pair, blw_grid, vec![0.1, 0.4]),
        (torus_pair, torus_grid, vec![0.3, 1.0, 2.0]),
    ]
}

#[test]
fn reparametrization_bridge() {
    let started = Instant::now();
    let c = cfg();
    let mut max_res = 0.0_f64;
    for (pair, grid, s_values) in bridge_pairs() {
        let report = verify_bridge(&pair, &grid, &s_values, 1e-6, &c).unwrap();
        assert!(
            report.pass,
            "{}: {}",
            report.suite_name, report.max_residual
        );
        max_res = max_res.max(report.max_residual);
    }
    let elapsed = started.elapsed().as_secs_f64();
    verdict(
        "reparametrization bridge",
        max_res <= 1e-6 && elapsed < 10.0,
        &format!("max residual {max_res:.3e}, {elapsed:.2}s"),
    );
}

#[test]
fn time_function_correspondence_diagram() {
    let c = cfg();
    let mut max_res = 0.0_f64;
    for (pair, grid, _) in bridge_pairs() {
        let space = pair.field.space.clone();
        let gammas = [
            ScalarFieldSpec::constant(space.clone(), 0.0),
            ScalarFieldSpec::constant(space.clone(), 0.05),
            coordinate_scale(space, 0.1, 0).unwrap(),
        ];
        let report = verify_image_equality(&pair, &gammas, &grid, 1e-6, &c).unwrap();
        assert!(
            report.pass,
            "{}: {}",
            report.suite_name, report.max_residual
        );
        max_res = max_res.max(report.max_residual);
    }
    verdict(
        "time-function correspondence",
        max_res <= 1e-6,
        &format!("3 pairs x 3 gammas, forward/reverse/roundtrips, max {max_res:.3e}"),
    );
}

#[test]
fn pushforward_identity() {
    let c = cfg();
    let lattice = |n: usize| {
        SampleGrid::lattice(
            AmbientSpace::euclidean(2),
            &[-1.0, -1.0],
            &[1.0, 1.0],
            &[n, n],
            0.0,
            0,
        )
        .unwrap()
    };

    // (i) local-coordinate case: the factor is exactly 2.
    let trans = translation();
    let case = PushforwardCase::new(
        trans.clone(),
        coordinate_scale(trans.space.clone(), 1.0, 0).unwrap(),
        lattice(3),
    )
    .unwrap();
    let factors = case.check_factor().unwrap();
    let factor_err = factors
        .iter()
        .map(|f| (f - 2.0).abs())
        .fold(0.0_f64, f64::max);
    let local = verify_pushforward(&case, 5e-5, &c).unwrap();

    // (ii) rotation with a linear time function.
    let rot = rotation();
    let case = PushforwardCase::new(
        rot.clone(),
        coordinate_scale(rot.space.clone(), 0.1, 0).unwrap(),
        lattice(5),
    )
    .unwrap();
    let rotational = verify_pushforward(&case, 5e-5, &c).unwrap();

    // (iii) constant time function: shift maps of the flow preserve F.
    let nl = nonlinear_rotation();
    let case = PushforwardCase::new(
        nl.clone(),
        ScalarFieldSpec::constant(nl.space.clone(), 0.4),
        SampleGrid::circles(&[0.5, 1.0], 4, 0.0, 0).unwrap(),
    )
    .unwrap();
    let constant = verify_pushforward(&case, 5e-5, &c).unwrap();

    let max = local
        .max_residual
        .max(rotational.max_residual)
        .max(constant.max_residual);
    verdict(
        "pushforward identity",
        local.pass && rotational.pass && constant.pass && factor_err <= 1e-9,
        &format!("max residual {max:.3e}, factor error {factor_err:.3e}"),
    );
}

#[test]
fn period_detection() {
    let c = cfg();
    let rot_period = match detect_period(&rotation(), &[1.0, 0.0], 10.0, &c).unwrap() {
        PointPeriod::Periodic(p) => p,
        other => panic!("rotation should be periodic, got {other:?}"),
    };
    let rot_err = (rot_period - tau()).abs();

    let nl = nonlinear_rotation();
    let mut nl_err = 0.0_f64;
    for r in [0.5, 1.0, 2.0] {
        match detect_period(&nl, &[r, 0.0], 10.0, &c).unwrap() {
            PointPeriod::Periodic(p) => {
                nl_err = nl_err.max((p - tau() / (1.0 + r * r)).abs());
            }
            other => panic!("cubic rotation should be periodic at r = {r}, got {other:?}"),
        }
    }

    let trans = detect_period(&translation(), &[0.0, 0.0], 100.0, &c).unwrap();
    let trans_ok = matches!(trans, PointPeriod::NonPeriodic { .. });

    verdict(
        "period detection",
        rot_err <= 1e-7 && nl_err <= 1e-6 && trans_ok,
        &format!(
            "rotation err {rot_err:.3e}, radial profile err {nl_err:.3e}, translation {trans:?}"
        ),
    );
}

#[test]
fn period_transform_law() {
    let c = cfg();
    let rot = rotation();
    let grid = SampleGrid::circles(&[0.5, 1.0, 2.0], 3, 0.0, 0).unwrap();
    let report = period_function(&rot, &grid, 10.0, &c).unwrap();

    let mu = one_plus_r_squared(rot.space.clone());
    let (theta_bar, cert) =
        flowshift::periodic::transformed_period(&rot, &mu, &report, &grid, &c, true, 1e-5, 1e-6)
            .unwrap();
    let mut shortcut_err = 0.0_f64;
    for (x, &tb) in grid.points.iter().zip(&theta_bar.values) {
        let theta = tau();
        shortcut_err = shortcut_err.max((tb - theta / mu.evaluate(x)).abs());
    }

    // mu = theta scales the field to unit period.
    let mu_theta = ScalarFieldSpec::constant(rot.space.clone(), tau());
    let (unit, unit_cert) = flowshift::periodic::transformed_period(
        &rot, &mu_theta, &report, &grid, &c, true, 1e-5, 1e-6,
    )
    .unwrap();
    let unit_err = unit
        .values
        .iter()
        .map(|v| (v - 1.0).abs())
        .fold(0.0_f64, f64::max);

    verdict(
        "period transform law",
        cert.pass && unit_cert.pass && shortcut_err <= 1e-6 && unit_err <= 1e-6,
        &format!(
            "certificate max {:.3e}, shortcut err {shortcut_err:.3e}, unit-period err {unit_err:.3e}",
            cert.max_residual
        ),
    );
}

#[test]
fn circle_action_criterion() {
    let c = cfg();
    let mut max_res = 0.0_f64;
    for field in [rotation(), nonlinear_rotation()] {
        let grid = SampleGrid::circles(&[0.5, 1.0, 2.0], 3, 0.0, 0).unwrap();
        let report = period_function(&field, &grid, 10.0, &c).unwrap();
        let (_, _, cert) = normalize_to_circle_action(&field, &report, &grid, 1e-5, &c).unwrap();
        assert!(cert.pass);
        max_res = max_res.max(cert.max_residual);
    }

    let trans = translation();
    let grid = SampleGrid::lattice(
        AmbientSpace::euclidean(2),
        &[0.0, 0.0],
        &[1.0, 1.0],
        &[2, 2],
        0.0,
        0,
    )
    .unwrap();
    let report = period_function(&trans, &grid, 20.0, &c).unwrap();
    let refused = matches!(
        normalize_to_circle_action(&trans, &report, &grid, 1e-5, &c),
        Err(Error::NotGloballyPeriodic(_))
    );

    verdict(
        "circle-action criterion",
        max_res <= 1e-5 && refused,
        &format!("time-1 max residual {max_res:.3e}, translation refused: {refused}"),
    );
}

#[test]
fn linear_part_structure() {
    let c = cfg();

    // Every certified periodic field: certificate first, then the origin.
    let mut spectra_ok = true;
    let mut max_real = 0.0_f64;
    for field in [rotation(), nonlinear_rotation()] {
        let grid = SampleGrid::circles(&[0.5, 1.0, 2.0], 3, 0.0, 0).unwrap();
        let report = period_function(&field, &grid, 10.0, &c).unwrap();
        let (_, theta, _) = normalize_to_circle_action(&field, &report, &grid, 1e-5, &c).unwrap();
        let lp = linear_part_analysis(&field, &[0.0, 0.0], true, Some(&theta)).unwrap();
        spectra_ok &= lp.spectrum_ok && lp.scaling_residual.unwrap() <= 1e-6;
        max_real = max_real.max(lp.max_abs_real_part);
    }

    // Block construction parameters are recovered from the spectrum.
    let blocks = rotation_blocks(&[1.0, 3.0], 1).unwrap();
    let grid = SampleGrid::from_points(
        AmbientSpace::euclidean(5),
        vec![
            vec![1.0, 0.0, 0.5, 0.0, 0.2],
            vec![0.8, 0.2, 0.6, -0.1, 0.0],
            vec![0.0, 0.0, 1.0, 0.0, 0.0],
        ],
        "block probes",
    )
    .unwrap();
    let report = period_function(&blocks, &grid, 10.0, &c).unwrap();
    let (_, theta, _) = normalize_to_circle_action(&blocks, &report, &grid, 1e-5, &c).unwrap();
    let lp = linear_part_analysis(&blocks, &[0.0; 5], true, Some(&theta)).unwrap();
    let rates_err = lp
        .rotation_rates
        .iter()
        .zip(&[1.0, 3.0])
        .map(|(a, b)| (a - b).abs())
        .fold(0.0_f64, f64::max);
    let blocks_ok = lp.spectrum_ok
        && lp.rotation_rates.len() == 2
        && rates_err <= 1e-6
        && lp.zero_block_dim == 1;
    max_real = max_real.max(lp.max_abs_real_part);

    verdict(
        "linear-part structure",
        spectra_ok && blocks_ok && max_real <= 1e-6,
        &format!("max |Re lambda| {max_real:.3e}, block rate err {rates_err:.3e}"),
    );
}

fn collect_csvs(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().and_then(|e| e.to_str()) == Some("csv") {
            out.push((
                path.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read(&path).unwrap(),
            ));
        }
    }
    out.sort_by(|a, b| a.0.cmp(&b.0));
    out
}

#[test]
fn full_default_suite_is_green_and_deterministic() {
    let bin = env!("CARGO_BIN_EXE_flowshift");
    let config = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs/default.toml")
        .canonicalize()
        .expect("default config is shipped");
    let tmp = std::env::temp_dir().join(format!("flowshift-acceptance-{}", std::process::id()));
    let dirs = [tmp.join("run1"), tmp.join("run2")];

    // The second run adds --parallel: concurrency must not change any table.
    let started = Instant::now();
    for (i, dir) in dirs.iter().enumerate() {
        std::fs::create_dir_all(dir).unwrap();
        let mut cmd = std::process::Command::new(bin);
        cmd.args(["all", "--config"])
            .arg(&config)
            .arg("--output-dir")
            .arg(dir);
        if i == 1 {
            cmd.arg("--parallel");
        }
        let status = cmd.status().unwrap();
        assert!(status.success(), "flowshift all exited with {status:?}");
    }
    let elapsed = started.elapsed().as_secs_f64();

    let a = collect_csvs(&dirs[0]);
    let b = collect_csvs(&dirs[1]);
    let identical = a == b && !a.is_empty();
    std::fs::remove_dir_all(&tmp).ok();

    verdict(
        "full default suite",
        elapsed < 60.0 && identical,
        &format!(
            "two runs exit 0 in {elapsed:.1}s total, {} CSV tables byte-identical",
            a.len()
        ),
    );
}

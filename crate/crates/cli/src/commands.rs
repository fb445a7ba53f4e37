//! Subcommand implementations.

use std::path::Path;
use std::time::Instant;

use nalgebra::DVector;
use serde_json::{json, Value};

use fgam_core::design::{build_flm_design, build_psanova_design, quadrature_weights};
use fgam_core::fgam::{fit_fgam_gcv, fit_fgamm, fit_flm, FgamFit, FitParams};
use fgam_core::hypothesis::{
    test_linear_in_t, test_linearity_bonferroni, test_linearity_bootstrap,
    test_linearity_equalvc, test_no_effect, TestOptions,
};
use fgam_core::rlrt::SpectralDesign;
use fgam_core::sim;
use fgam_core::FunctionalDataset;

use crate::errors::{CliError, CliResult};
use crate::io;
use crate::report::ReportEnvelope;
use crate::{
    ComponentArg, DataArgs, FitArgs, GenArgs, MethodArg, ModelArg, NulldistArgs, SimulateArgs,
    TestArgs,
};

impl DataArgs {
    pub fn load(&self) -> CliResult<FunctionalDataset> {
        let y = io::read_vector(&self.y, self.header)?;
        let x = io::read_matrix(&self.x, self.header)?;
        let t = io::read_vector(&self.t, self.header)?;
        if x.nrows() != y.len() {
            return Err(CliError::Data(format!(
                "{} has {} rows but {} has {} curves",
                self.y.display(),
                y.len(),
                self.x.display(),
                x.nrows()
            )));
        }
        if x.ncols() != t.len() {
            return Err(CliError::Data(format!(
                "{} has {} grid points but {} has {} columns per curve",
                self.t.display(),
                t.len(),
                self.x.display(),
                x.ncols()
            )));
        }
        FunctionalDataset::new(y, x, t.iter().copied().collect()).map_err(CliError::from)
    }
}

fn vec_json(v: &DVector<f64>) -> Value {
    Value::Array(v.iter().map(|&x| json!(x)).collect())
}

fn write_envelope(path: &Path, envelope: &ReportEnvelope) -> CliResult<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    std::fs::write(path, envelope.to_pretty_json())?;
    Ok(())
}

fn fit_payload(fit: &FgamFit) -> Value {
    match &fit.params {
        FitParams::Flm {
            beta,
            b1,
            sigma2_error,
            sigma2_1,
            criterion,
            ..
        } => json!({
            "model": "flm",
            "variance_components": {
                "sigma2_error": sigma2_error,
                "sigma2_1": sigma2_1,
            },
            "criterion": criterion,
            "coefficients": { "beta": vec_json(beta), "b1": vec_json(b1) },
            "fitted": vec_json(&fit.fitted),
            "x_range": [fit.x_range.0, fit.x_range.1],
        }),
        FitParams::PsAnova {
            beta,
            b,
            sigma2_error,
            sigma2,
            criterion,
            ..
        } => json!({
            "model": "fgamm",
            "variance_components": {
                "sigma2_error": sigma2_error,
                "sigma2_1": sigma2[0],
                "sigma2_2": sigma2[1],
                "sigma2_3": sigma2[2],
            },
            "criterion": criterion,
            "coefficients": {
                "beta": vec_json(beta),
                "b1": vec_json(&b[0]),
                "b2": vec_json(&b[1]),
                "b3": vec_json(&b[2]),
            },
            "fitted": vec_json(&fit.fitted),
            "x_range": [fit.x_range.0, fit.x_range.1],
        }),
        FitParams::Tensor {
            theta,
            lambda,
            gcv,
            edf,
            ..
        } => json!({
            "model": "fgam-gcv",
            "smoothing": { "lambda_x": lambda.0, "lambda_t": lambda.1, "gcv": gcv, "edf": edf },
            "coefficients": { "theta": vec_json(theta) },
            "fitted": vec_json(&fit.fitted),
            "x_range": [fit.x_range.0, fit.x_range.1],
        }),
    }
}

pub fn cmd_fit(args: &FitArgs, command_line: &[String]) -> CliResult<()> {
    let start = Instant::now();
    let data = args.data.load()?;
    let quad = quadrature_weights(data.n(), data.grid(), args.quad.into())?;
    let fit = match args.model {
        ModelArg::Flm => fit_flm(&data, args.kt, &quad)?,
        ModelArg::Fgamm => fit_fgamm(&data, args.kx, args.kt, &quad)?,
        ModelArg::FgamGcv => fit_fgam_gcv(&data, args.kx, args.kt, &quad)?,
    };

    let config = json!({
        "model": match args.model { ModelArg::Flm => "flm", ModelArg::Fgamm => "fgamm", ModelArg::FgamGcv => "fgam-gcv" },
        "kx": args.kx,
        "kt": args.kt,
        "quadrature": args.quad.name(),
        "seed": args.seed,
        "n": data.n(),
        "j": data.j(),
    });
    let mut envelope = ReportEnvelope::new(command_line.join(" "), config);
    envelope.payload = fit_payload(&fit);
    envelope.warnings = fit.warnings.clone();

    if let Some(surface_path) = &args.surface {
        let (lo, hi) = fit.x_range;
        let g = args.surface_grid.max(2);
        let xs: Vec<f64> = (0..g)
            .map(|i| lo + (hi - lo) * i as f64 / (g - 1) as f64)
            .collect();
        let grid = data.grid();
        let (t0, t1) = (grid[0], grid[grid.len() - 1]);
        let ts: Vec<f64> = (0..g)
            .map(|i| t0 + (t1 - t0) * i as f64 / (g - 1) as f64)
            .collect();
        let dec = fit.evaluate_surface(&xs, &ts)?;
        let mut out = String::from(
            "x,t,parametric,linear_x_smooth_t,smooth_x_parametric_t,smooth_both,total\n",
        );
        for (i, &x) in xs.iter().enumerate() {
            for (j, &t) in ts.iter().enumerate() {
                out.push_str(&format!(
                    "{},{},{},{},{},{},{}\n",
                    io::fmt_f64(x),
                    io::fmt_f64(t),
                    io::fmt_f64(dec.parametric[(i, j)]),
                    io::fmt_f64(dec.linear_x_smooth_t[(i, j)]),
                    io::fmt_f64(dec.smooth_x_parametric_t[(i, j)]),
                    io::fmt_f64(dec.smooth_both[(i, j)]),
                    io::fmt_f64(dec.total[(i, j)]),
                ));
            }
        }
        std::fs::write(surface_path, out)?;
    }

    envelope.wall_clock_seconds = start.elapsed().as_secs_f64();
    write_envelope(&args.out, &envelope)?;

    if args.verify {
        verify_fit(args, &data)?;
        println!("verification passed: fitted values reproduce within 1e-10");
    }
    Ok(())
}

/// Reads the written report back and recomputes the fitted values from the
/// stored coefficient blocks against a freshly built design.
fn verify_fit(args: &FitArgs, data: &FunctionalDataset) -> CliResult<()> {
    let raw = std::fs::read_to_string(&args.out)?;
    let doc: Value = serde_json::from_str(&raw)
        .map_err(|e| CliError::Data(format!("{}: {e}", args.out.display())))?;
    let payload = &doc["payload"];
    let stored: Vec<f64> = payload["fitted"]
        .as_array()
        .ok_or_else(|| CliError::Data("report has no fitted values".into()))?
        .iter()
        .filter_map(Value::as_f64)
        .collect();
    let coefs = &payload["coefficients"];
    let get = |name: &str| -> CliResult<DVector<f64>> {
        let arr = coefs[name]
            .as_array()
            .ok_or_else(|| CliError::Data(format!("report has no coefficient block '{name}'")))?;
        Ok(DVector::from_iterator(
            arr.len(),
            arr.iter().filter_map(Value::as_f64),
        ))
    };
    let quad = quadrature_weights(data.n(), data.grid(), args.quad.into())?;
    let recomputed: DVector<f64> = match payload["model"].as_str() {
        Some("flm") => {
            let d = build_flm_design(data, args.kt, &quad)?;
            &d.x * get("beta")? + &d.z1 * get("b1")?
        }
        Some("fgamm") => {
            let d = build_psanova_design(data, args.kx, args.kt, &quad)?;
            &d.x * get("beta")?
                + &d.z1 * get("b1")?
                + &d.z2 * get("b2")?
                + &d.z3 * get("b3")?
        }
        Some("fgam-gcv") => {
            let d = fgam_core::design::build_tensor_design(data, args.kx, args.kt, &quad)?;
            &d.model_matrix * get("theta")?
        }
        other => {
            return Err(CliError::Data(format!(
                "report has unknown model tag {other:?}"
            )))
        }
    };
    let mut worst = 0.0f64;
    for (i, &s) in stored.iter().enumerate() {
        worst = worst.max((recomputed[i] - s).abs());
    }
    if worst > 1e-10 {
        return Err(CliError::Numerical(format!(
            "verification failed: fitted values differ by up to {worst:.3e}"
        )));
    }
    Ok(())
}

pub fn cmd_test(args: &TestArgs, command_line: &[String]) -> CliResult<()> {
    let start = Instant::now();
    crate::validate_alpha(args.alpha)?;
    let data = args.data.load()?;
    let opts = TestOptions {
        kx: args.kx,
        kt: args.kt,
        rule: args.quad.into(),
        nsim: args.nsim,
        seed: args.seed,
        alpha: args.alpha,
        shared_nuisance_fit: true,
    };
    let result = match args.method {
        MethodArg::Equalvc => test_linearity_equalvc(&data, &opts)?,
        MethodArg::Bonferroni => test_linearity_bonferroni(&data, &opts)?,
        MethodArg::Bootstrap => test_linearity_bootstrap(&data, &opts, args.nboot)?,
        MethodArg::NoEffect => test_no_effect(&data, &opts)?,
        MethodArg::LinearInT => test_linear_in_t(&data, &opts)?,
    };
    let config = json!({
        "method": result.method.as_str(),
        "kx": args.kx,
        "kt": args.kt,
        "quadrature": args.quad.name(),
        "nsim": args.nsim,
        "nboot": args.nboot,
        "seed": args.seed,
        "alpha": args.alpha,
        "n": data.n(),
        "j": data.j(),
    });
    let mut envelope = ReportEnvelope::new(command_line.join(" "), config);
    let unreliable = result.unreliable;
    envelope.payload = serde_json::to_value(&result).expect("test result serializes");
    if unreliable {
        envelope
            .warnings
            .push("more than 5% of bootstrap refits failed; result unreliable".into());
    }
    envelope.wall_clock_seconds = start.elapsed().as_secs_f64();
    write_envelope(&args.out, &envelope)?;
    if unreliable {
        return Err(CliError::Numerical(
            "bootstrap result unreliable (too many refit failures); report written".into(),
        ));
    }
    println!(
        "{}: statistic(s) {:?}, p-value {}, {} at alpha = {}",
        result.method.as_str(),
        result.statistics,
        result.p_value,
        if result.reject { "REJECT" } else { "no rejection" },
        args.alpha
    );
    Ok(())
}

pub fn cmd_simulate(args: &SimulateArgs, command_line: &[String]) -> CliResult<()> {
    let start = Instant::now();
    let raw = std::fs::read_to_string(&args.config)?;
    let config: sim::StudyConfig = if args
        .config
        .extension()
        .map(|e| e.eq_ignore_ascii_case("json"))
        .unwrap_or(false)
    {
        serde_json::from_str(&raw)
            .map_err(|e| CliError::Usage(format!("{}: {e}", args.config.display())))?
    } else {
        toml::from_str(&raw)
            .map_err(|e| CliError::Usage(format!("{}: {e}", args.config.display())))?
    };
    if let Err(errors) = config.validate() {
        return Err(CliError::Usage(format!(
            "invalid study config:\n  - {}",
            errors.join("\n  - ")
        )));
    }
    let table = sim::run_rejection_study(&config)?;
    std::fs::create_dir_all(&args.out_dir)?;
    let csv_path = args.out_dir.join("rejection_table.csv");
    std::fs::write(&csv_path, table.to_csv())?;

    let mut envelope = ReportEnvelope::new(
        command_line.join(" "),
        serde_json::to_value(&config).expect("config serializes"),
    );
    envelope.payload = serde_json::to_value(&table).expect("table serializes");
    if table.flagged {
        envelope.warnings.push(format!(
            "{} replicate failures exceed 2% of the study; interpret with care",
            table.total_failures
        ));
    }
    envelope.wall_clock_seconds = start.elapsed().as_secs_f64();
    write_envelope(&args.out_dir.join("report.json"), &envelope)?;
    println!(
        "study complete: {} rows -> {}",
        table.rows.len(),
        csv_path.display()
    );
    Ok(())
}

pub fn cmd_nulldist(args: &NulldistArgs, command_line: &[String]) -> CliResult<()> {
    let start = Instant::now();
    let data = args.data.load()?;
    let quad = quadrature_weights(data.n(), data.grid(), args.quad.into())?;
    let (x, z, label) = match args.component {
        ComponentArg::LinearInT => {
            let d = build_flm_design(&data, args.kt, &quad)?;
            (d.x, d.z1, "sigma2_1")
        }
        ComponentArg::Sigma2 => {
            let d = build_psanova_design(&data, args.kx, args.kt, &quad)?;
            (d.x, d.z2, "sigma2_2")
        }
        ComponentArg::Sigma3 => {
            let d = build_psanova_design(&data, args.kx, args.kt, &quad)?;
            (d.x, d.z3, "sigma2_3")
        }
        ComponentArg::Equalvc => {
            let d = build_psanova_design(&data, args.kx, args.kt, &quad)?;
            let mut z = nalgebra::DMatrix::zeros(data.n(), d.q2() + d.q3());
            z.view_mut((0, 0), (data.n(), d.q2())).copy_from(&d.z2);
            z.view_mut((0, d.q2()), (data.n(), d.q3())).copy_from(&d.z3);
            (d.x, z, "sigma2_23")
        }
    };
    let machine = SpectralDesign::new(&x, &z)?;
    let sample = machine.simulate_null(args.nsim, args.seed)?;
    io::write_vector_csv(&args.out, Some("statistic"), sample.stats())?;

    let payload = json!({
        "component": label,
        "n": machine.n(),
        "q0": machine.q0(),
        "q1": machine.q1(),
        "nsim": args.nsim,
        "seed": args.seed,
        "zero_mass_fraction": sample.zero_fraction(),
        "quantiles": { "q90": sample.quantile(0.90), "q95": sample.quantile(0.95), "q99": sample.quantile(0.99) },
    });
    println!(
        "null sample written: zero mass {:.3}, q95 {:.4}",
        sample.zero_fraction(),
        sample.quantile(0.95)
    );
    if let Some(json_path) = &args.json {
        let config = json!({
            "component": label,
            "kx": args.kx,
            "kt": args.kt,
            "quadrature": args.quad.name(),
            "nsim": args.nsim,
            "seed": args.seed,
        });
        let mut envelope = ReportEnvelope::new(command_line.join(" "), config);
        envelope.payload = payload;
        envelope.wall_clock_seconds = start.elapsed().as_secs_f64();
        write_envelope(json_path, &envelope)?;
    }
    Ok(())
}

pub fn cmd_gen(args: &GenArgs, _command_line: &[String]) -> CliResult<()> {
    use crate::ScenarioArg;
    std::fs::create_dir_all(&args.out_dir)?;
    let (x, grid) = sim::gen_predictors(args.n, args.j, args.seed);
    match args.scenario {
        ScenarioArg::Convex => {
            if !(0.0..=1.0).contains(&args.phi) {
                return Err(CliError::Usage(format!(
                    "--phi must lie in [0, 1], got {}",
                    args.phi
                )));
            }
            let y = sim::gen_response_convex(&x, &grid, args.phi, args.seed ^ 0x5EED);
            io::write_vector_csv(&args.out_dir.join("y.csv"), None, y.as_slice())?;
        }
        ScenarioArg::Mixed => {
            let truth = sim::gen_response_mixed(
                &x,
                &grid,
                args.sigma2,
                args.sigma3,
                args.kx,
                args.kt,
                args.seed ^ 0x5EED,
            )?;
            io::write_vector_csv(&args.out_dir.join("y.csv"), None, truth.y.as_slice())?;
            io::write_vector_csv(&args.out_dir.join("b1.csv"), None, truth.b1.as_slice())?;
        }
    }
    io::write_matrix_csv(&args.out_dir.join("X.csv"), &x)?;
    io::write_vector_csv(&args.out_dir.join("t.csv"), None, &grid)?;
    println!("wrote y.csv, X.csv, t.csv to {}", args.out_dir.display());
    Ok(())
}

//! Implementations of the CLI subcommands.

use std::path::Path;
use std::sync::Arc;

use funkrig::design::two_stage_design;
use funkrig::gp::{fit as gp_fit, FitConfig, KernelFamily};
use funkrig::testbed::{self, StudyConfig, TestFunction};
use funkrig::{BSplineBasis, GpModel, RunPoint};

use crate::error::CliError;
use crate::files::{
    input_hash, read_json, to_json_bytes, write_bytes, Csv, CsvField, DesignFile, ModelFile,
};
use crate::{
    resolve_out, DesignArgs, EvalArgs, FitArgs, LooArgs, OrderArgs, PredictArgs, Remark1Args,
    SensitivityArgs, WeightingArgs, WeightsArgs,
};

fn parse_weighting(flag: &str) -> Result<bool, CliError> {
    match flag {
        "on" => Ok(true),
        "off" => Ok(false),
        other => Err(CliError::Usage(format!(
            "--weighting must be 'on' or 'off', got '{other}'"
        ))),
    }
}

fn input_labels(d_s: usize, d_f: usize) -> Vec<String> {
    (1..=d_s)
        .map(|i| format!("x{i}"))
        .chain((1..=d_f).map(|i| format!("f{i}")))
        .collect()
}

pub fn design(args: DesignArgs) -> Result<(), CliError> {
    if args.n < 2 {
        return Err(CliError::Usage(format!(
            "a design needs at least two runs, got --n {}",
            args.n
        )));
    }
    if args.functionals == 0 {
        return Err(CliError::Usage(
            "the two-stage construction needs --functionals >= 1".into(),
        ));
    }
    let basis = Arc::new(BSplineBasis::new(args.num_basis, args.order)?);
    let sa = args.sa.to_config();
    let design = two_stage_design(
        args.n,
        args.scalars,
        args.functionals,
        &basis,
        args.q,
        &sa,
        args.seed,
    )?;
    let file = DesignFile::from_design(&design);
    let out = resolve_out(args.out, "design.json");
    write_bytes(&out, &to_json_bytes(&file)?)?;
    println!("criterion {}", design.criterion());
    Ok(())
}

pub fn eval(args: EvalArgs) -> Result<(), CliError> {
    let file: DesignFile = read_json(&args.design)?;
    let design = file.to_design()?;
    let function = TestFunction::parse(&args.function)?;
    let mut csv = Csv::new("run,inputs_hash,y");
    for (i, point) in design.run_points().iter().enumerate() {
        let y = function.eval(point)?;
        csv.row(&[
            CsvField::Uint(i as u64),
            CsvField::Str(&input_hash(point)),
            CsvField::Float(y),
        ]);
    }
    csv.write(&resolve_out(args.out, "data.csv"))
}

/// Parse the y column of an eval CSV, in run order.
fn read_outputs(path: &Path, expected: usize) -> Result<Vec<f64>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))?;
    let mut y = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if lineno == 0 {
            continue; // header
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let value = fields
            .last()
            .unwrap()
            .trim()
            .parse::<f64>()
            .map_err(|e| CliError::Io(format!("bad y value on line {}: {e}", lineno + 1)))?;
        y.push(value);
    }
    if y.len() != expected {
        return Err(CliError::Io(format!(
            "{} outputs in {} for a design with {} runs",
            y.len(),
            path.display(),
            expected
        )));
    }
    Ok(y)
}

pub fn fit(args: FitArgs) -> Result<(), CliError> {
    let file: DesignFile = read_json(&args.design)?;
    let design = file.to_design()?;
    let y = read_outputs(&args.data, design.num_runs())?;
    let kernel = KernelFamily::parse(&args.kernel)?;
    let weighting = parse_weighting(&args.weighting)?;
    let cfg = FitConfig {
        multistart: args.starts,
        ..FitConfig::new(weighting, args.seed)
    };
    let model = gp_fit(&design.run_points(), &y, kernel, &cfg)?;
    println!("log-likelihood {}", model.diagnostics().log_likelihood);
    let out = resolve_out(args.out, "model.json");
    write_bytes(&out, &to_json_bytes(&ModelFile::from_model(&model, file))?)
}

fn load_model(path: &Path) -> Result<(ModelFile, GpModel), CliError> {
    let file: ModelFile = read_json(path)?;
    let model = file.to_model()?;
    Ok((file, model))
}

pub fn predict(args: PredictArgs) -> Result<(), CliError> {
    let (file, model) = load_model(&args.model)?;
    let points: Vec<RunPoint> = match (&args.points, args.random) {
        (Some(path), None) => {
            let pf: DesignFile = read_json(path)?;
            pf.to_design()?.run_points()
        }
        (None, Some(count)) => {
            let bases: Vec<Arc<BSplineBasis>> = model
                .train_points()[0]
                .curves()
                .iter()
                .map(|c| c.basis().clone())
                .collect();
            testbed::random_points(count, file.design.d_s, &bases, args.seed)?
        }
        _ => {
            return Err(CliError::Usage(
                "predict needs exactly one of --points or --random".into(),
            ))
        }
    };
    let preds = model.predict(&points)?;
    let mut csv = Csv::new("index,mean,variance");
    for (i, p) in preds.iter().enumerate() {
        csv.row(&[
            CsvField::Uint(i as u64),
            CsvField::Float(p.mean),
            CsvField::Float(p.variance),
        ]);
    }
    csv.write(&resolve_out(args.out, "predictions.csv"))
}

pub fn loo(args: LooArgs) -> Result<(), CliError> {
    let (_, model) = load_model(&args.model)?;
    let loo = model.loo()?;
    let y = model.train_outputs();
    let mut csv = Csv::new("index,y,mean,variance");
    for (i, p) in loo.iter().enumerate() {
        csv.row(&[
            CsvField::Uint(i as u64),
            CsvField::Float(y[i]),
            CsvField::Float(p.mean),
            CsvField::Float(p.variance),
        ]);
    }
    csv.write(&resolve_out(args.out, "loo.csv"))
}

pub fn sensitivity(args: SensitivityArgs) -> Result<(), CliError> {
    let (file, model) = load_model(&args.model)?;
    let labels = input_labels(file.design.d_s, file.design.d_f);
    let mut csv = Csv::new("input,value");
    for (label, value) in labels.iter().zip(model.sensitivity()) {
        csv.row(&[CsvField::Str(label), CsvField::Float(value)]);
    }
    csv.write(&resolve_out(args.out, "sensitivity.csv"))
}

pub fn weights(args: WeightsArgs) -> Result<(), CliError> {
    let (file, model) = load_model(&args.model)?;
    if !file.weighting {
        return Err(CliError::Usage(
            "the stored model was fitted without weighting".into(),
        ));
    }
    let mut csv = Csv::new("input,t,value");
    let mut raw = Csv::new("input,basis_index,peak,weight,alpha,beta");
    for input in 0..file.design.d_f {
        let profile = model.weight_profile(input, args.grid)?;
        let label = format!("f{}", input + 1);
        for (t, v) in profile.ts.iter().zip(&profile.values) {
            csv.row(&[
                CsvField::Str(&label),
                CsvField::Float(*t),
                CsvField::Float(*v),
            ]);
        }
        let peaks = model.train_points()[0].curves()[input].basis().peaks().to_vec();
        for (i, (w, peak)) in profile.weights.iter().zip(peaks).enumerate() {
            raw.row(&[
                CsvField::Str(&label),
                CsvField::Uint(i as u64),
                CsvField::Float(peak),
                CsvField::Float(*w),
                CsvField::Float(profile.omega.0),
                CsvField::Float(profile.omega.1),
            ]);
        }
    }
    csv.write(&resolve_out(args.out, "weights.csv"))?;
    if let Some(raw_out) = args.raw_out {
        raw.write(&raw_out)?;
    }
    Ok(())
}

fn experiment_exit(failures: usize, reps: usize) -> Result<(), CliError> {
    // Partial failures are tolerated up to 20%.
    if failures * 5 > reps {
        return Err(CliError::Numeric(format!(
            "{failures} of {reps} replications failed"
        )));
    }
    Ok(())
}

pub fn experiment_weighting(args: WeightingArgs) -> Result<(), CliError> {
    let cfg = StudyConfig {
        n: args.n,
        num_basis: args.num_basis,
        order: args.order,
        test_size: args.test_size,
        starts: args.starts,
        ..StudyConfig::weighting(args.reps, args.seed)
    };
    let study = testbed::experiment_weighting(&cfg);
    let dir = resolve_out(args.out_dir, "");

    let mut reps = Csv::new(
        "rep,seed,status,rmse_weighted,rmse_unweighted,nrmse_weighted,nrmse_unweighted,error",
    );
    for row in &study.rows {
        match &row.outcome {
            Ok(m) => reps.row(&[
                CsvField::Uint(row.rep as u64),
                CsvField::Uint(row.seed),
                CsvField::Str("ok"),
                CsvField::Float(m.rmse_weighted),
                CsvField::Float(m.rmse_unweighted),
                CsvField::Float(m.nrmse_weighted),
                CsvField::Float(m.nrmse_unweighted),
                CsvField::Str(""),
            ]),
            Err(e) => {
                let msg = e.to_string().replace(',', ";");
                reps.row(&[
                    CsvField::Uint(row.rep as u64),
                    CsvField::Uint(row.seed),
                    CsvField::Str("failed"),
                    CsvField::Str(""),
                    CsvField::Str(""),
                    CsvField::Str(""),
                    CsvField::Str(""),
                    CsvField::Str(&msg),
                ]);
            }
        }
    }
    reps.write(&dir.join("weighting_reps.csv"))?;

    let mut summary = Csv::new(
        "reps,failures,mean_rmse_weighted,mean_rmse_unweighted,mean_nrmse_weighted,mean_nrmse_unweighted,weighted_wins,win_fraction",
    );
    summary.row(&[
        CsvField::Uint(study.rows.len() as u64),
        CsvField::Uint(study.failures() as u64),
        CsvField::Float(study.mean_rmse_weighted),
        CsvField::Float(study.mean_rmse_unweighted),
        CsvField::Float(study.mean_nrmse_weighted),
        CsvField::Float(study.mean_nrmse_unweighted),
        CsvField::Uint(study.weighted_wins as u64),
        CsvField::Float(study.weighted_wins as f64 / study.successes.max(1) as f64),
    ]);
    summary.write(&dir.join("weighting_summary.csv"))?;
    println!(
        "weighted mean nrmse {} vs unweighted {} ({} of {} wins)",
        study.mean_nrmse_weighted,
        study.mean_nrmse_unweighted,
        study.weighted_wins,
        study.successes
    );
    experiment_exit(study.failures(), study.rows.len())
}

pub fn experiment_order(args: OrderArgs) -> Result<(), CliError> {
    let cfg = StudyConfig {
        n: args.n,
        num_basis: args.num_basis,
        test_size: args.test_size,
        starts: args.starts,
        ..StudyConfig::order_comparison(args.reps, args.seed)
    };
    let study = testbed::experiment_order(&cfg, &args.orders)?;
    let dir = resolve_out(args.out_dir, "");

    let mut reps = Csv::new("order,rep,seed,status,rmse,error");
    let mut sens = Csv::new("order,rep,input,value");
    let labels = input_labels(3, 3);
    for row in &study.rows {
        match &row.outcome {
            Ok(m) => {
                reps.row(&[
                    CsvField::Uint(row.order as u64),
                    CsvField::Uint(row.rep as u64),
                    CsvField::Uint(row.seed),
                    CsvField::Str("ok"),
                    CsvField::Float(m.rmse),
                    CsvField::Str(""),
                ]);
                for (label, value) in labels.iter().zip(&m.sensitivity) {
                    sens.row(&[
                        CsvField::Uint(row.order as u64),
                        CsvField::Uint(row.rep as u64),
                        CsvField::Str(label),
                        CsvField::Float(*value),
                    ]);
                }
            }
            Err(e) => {
                let msg = e.to_string().replace(',', ";");
                reps.row(&[
                    CsvField::Uint(row.order as u64),
                    CsvField::Uint(row.rep as u64),
                    CsvField::Uint(row.seed),
                    CsvField::Str("failed"),
                    CsvField::Str(""),
                    CsvField::Str(&msg),
                ]);
            }
        }
    }
    reps.write(&dir.join("order_reps.csv"))?;
    sens.write(&dir.join("order_sensitivity.csv"))?;

    let mut summary = Csv::new("order,average_rmse,sd_rmse,failures");
    for s in &study.summaries {
        summary.row(&[
            CsvField::Uint(s.order as u64),
            CsvField::Float(s.average_rmse),
            CsvField::Float(s.sd_rmse),
            CsvField::Uint(s.failures as u64),
        ]);
    }
    summary.write(&dir.join("order_summary.csv"))?;

    // Single wide row shaped like the published comparison table.
    let header: Vec<String> = study.summaries.iter().map(|s| format!("m{}", s.order)).collect();
    let mut table = Csv::new(&header.join(","));
    table.row(
        &study
            .summaries
            .iter()
            .map(|s| CsvField::Float(s.average_rmse))
            .collect::<Vec<_>>(),
    );
    table.write(&dir.join("order_table.csv"))?;

    for s in &study.summaries {
        println!("order {} average rmse {}", s.order, s.average_rmse);
    }
    let failures: usize = study.summaries.iter().map(|s| s.failures).sum();
    experiment_exit(failures, study.rows.len())
}

pub fn experiment_remark1(args: Remark1Args) -> Result<(), CliError> {
    let sa = args.sa.to_config();
    let study = testbed::experiment_remark1(
        args.n,
        args.scalars,
        args.functionals,
        args.num_basis,
        args.order,
        args.q,
        &sa,
        args.seed,
    )?;
    let dir = resolve_out(args.out_dir, "");

    // Curve samples of the first functional input of the free design.
    let mut curves = Csv::new("run,t,value");
    for (run, curve) in study.free.functionals()[0].iter().enumerate() {
        for g in 0..=100 {
            let t = g as f64 / 100.0;
            curves.row(&[
                CsvField::Uint(run as u64),
                CsvField::Float(t),
                CsvField::Float(curve.eval(t)?),
            ]);
        }
    }
    curves.write(&dir.join("remark1_curves.csv"))?;

    let mut coeffs = Csv::new("source,input,run,basis_index,coeff");
    for (input, column) in study.free.functionals().iter().enumerate() {
        for (run, curve) in column.iter().enumerate() {
            for (idx, c) in curve.coeffs().iter().enumerate() {
                coeffs.row(&[
                    CsvField::Str("free"),
                    CsvField::Uint(input as u64),
                    CsvField::Uint(run as u64),
                    CsvField::Uint(idx as u64),
                    CsvField::Float(*c),
                ]);
            }
        }
    }
    for (run, curve) in study.constrained.iter().enumerate() {
        for (idx, c) in curve.coeffs().iter().enumerate() {
            coeffs.row(&[
                CsvField::Str("lhd"),
                CsvField::Uint(0),
                CsvField::Uint(run as u64),
                CsvField::Uint(idx as u64),
                CsvField::Float(*c),
            ]);
        }
    }
    coeffs.write(&dir.join("remark1_coeffs.csv"))?;

    let mut summary = Csv::new("free_extreme_fraction,lhd_extreme_fraction,tolerance");
    summary.row(&[
        CsvField::Float(study.free_extreme_fraction),
        CsvField::Float(study.constrained_extreme_fraction),
        CsvField::Float(study.tolerance),
    ]);
    summary.write(&dir.join("remark1_summary.csv"))?;
    println!(
        "free extreme fraction {} vs lhd {}",
        study.free_extreme_fraction, study.constrained_extreme_fraction
    );
    Ok(())
}

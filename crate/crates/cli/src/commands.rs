use std::path::Path;

use anyhow::anyhow;
use serde::Serialize;

use mmimo_core::channel::{
    select_subset, subset_gain, ChannelTensor, Polarization, SubsetMode, SubsetPolicy,
};
use mmimo_core::cht::{read_cht, write_cht};
use mmimo_core::hardening::{hardening_curve, iid_reference_curve, per_antenna_mean_stats};
use mmimo_core::qc::{
    detect_lost_samples, drop_lost, interpolate_lost, run_qc, CorrelationKind, QcOptions,
};
use mmimo_core::shadowing::{fit_shadowing, residual_cdf_table, ShadowingOptions};
use mmimo_core::synth::synthesize;
use mmimo_core::tail::{
    cdf_offset, dof_curve, fading_margin_table, gamma_reference_cdf, Ecdf, FitConstraint,
    FitMethod, OffsetUnit,
};
use mmimo_core::SynthConfig;

use crate::args::*;
use crate::failure::{Failure, Outcome};
use crate::output::OutDir;
use crate::scenario;

fn read_input(path: &Path) -> Outcome<ChannelTensor> {
    if !path.is_file() {
        return Err(Failure::config(anyhow!(
            "input file {} does not exist",
            path.display()
        )));
    }
    Ok(read_cht(path)?)
}

fn lost_mask(tensor: &ChannelTensor, detect: &DetectArgs) -> Outcome<Vec<bool>> {
    let mut mask = detect_lost_samples(tensor, detect.threshold_db, detect.window)?;
    if let Some(flagged) = tensor.lost_mask() {
        mask.iter_mut().zip(flagged).for_each(|(m, &f)| *m |= f);
    }
    Ok(mask)
}

fn repair(tensor: ChannelTensor, mode: Repair, detect: &DetectArgs) -> Outcome<ChannelTensor> {
    match mode {
        Repair::None => Ok(tensor),
        Repair::Drop => Ok(drop_lost(&tensor, &lost_mask(&tensor, detect)?)?),
        Repair::Interpolate => Ok(interpolate_lost(&tensor, &lost_mask(&tensor, detect)?)?),
    }
}

fn load(input: &InputArgs) -> Outcome<ChannelTensor> {
    repair(read_input(&input.input)?, input.repair, &input.detect)
}

fn policy(args: &SubsetArgs, tensor: &ChannelTensor) -> Outcome<SubsetPolicy> {
    let mode = match args.subset_mode {
        SubsetModeArg::FirstK => SubsetMode::FirstK,
        SubsetModeArg::RandomK => SubsetMode::RandomK {
            seed: args.subset_seed.ok_or_else(|| {
                Failure::config(anyhow!("--subset-mode random-k needs --subset-seed"))
            })?,
        },
        SubsetModeArg::Polarization => SubsetMode::PolarizationOnly {
            polarization: match args.polarization {
                Some(PolarizationArg::V) => Polarization::V,
                Some(PolarizationArg::H) => Polarization::H,
                None => {
                    return Err(Failure::config(anyhow!(
                        "--subset-mode polarization needs --polarization"
                    )))
                }
            },
        },
    };
    let policy = match &args.sizes {
        Some(sizes) => SubsetPolicy::new(mode, sizes.clone()),
        None => {
            let mut p = SubsetPolicy::default_for(tensor.n_ant());
            p.mode = mode;
            p
        }
    };
    policy.validate(tensor.layout())?;
    Ok(policy)
}

pub fn synth(out: &Path, args: &SynthArgs) -> Outcome<Vec<String>> {
    let cfg = scenario::resolve(&args.source)?;
    let result = synthesize(&cfg)?;
    let mut dir = OutDir::create(out)?;
    write_cht(&result.tensor, dir.path(&args.output))?;
    if let Some(mask) = &result.truth_mask {
        #[derive(Serialize)]
        struct Row {
            n: usize,
            lost: bool,
        }
        dir.write_csv(
            "truth_mask.csv",
            mask.iter().enumerate().map(|(n, &lost)| Row { n, lost }),
        )?;
    }
    println!(
        "synthesized {}x{}x{} tensor (seed {}) -> {}",
        cfg.dims.n_time,
        cfg.dims.n_freq,
        cfg.dims.n_ant,
        cfg.seed,
        out.join(&args.output).display()
    );
    dir.finish("synth", args, Some(&cfg), None)
}

fn qc_options(p: &QcParams) -> QcOptions {
    QcOptions {
        threshold_db: p.detect.threshold_db,
        window: p.detect.window,
        max_lag: p.max_lag,
        correlation: if p.envelope {
            CorrelationKind::Envelope
        } else {
            CorrelationKind::Complex
        },
        ue_speed_mps: p.ue_speed,
    }
}

/// Runs qc and writes its artifacts; returns the lost-sample mask.
fn qc_step(dir: &mut OutDir, tensor: &ChannelTensor, params: &QcParams) -> Outcome<Vec<bool>> {
    let (report, mut mask, acf) = run_qc(tensor, &qc_options(params))?;
    if let Some(flagged) = tensor.lost_mask() {
        mask.iter_mut().zip(flagged).for_each(|(m, &f)| *m |= f);
    }
    dir.write_json("qc_report.json", &report)?;
    #[derive(Serialize)]
    struct AcfRow {
        lag: usize,
        mean_magnitude: f64,
    }
    dir.write_csv(
        "autocorrelation.csv",
        acf.mean_by_lag()
            .into_iter()
            .enumerate()
            .map(|(lag, mean_magnitude)| AcfRow {
                lag,
                mean_magnitude,
            }),
    )?;
    #[derive(Serialize)]
    struct LostRow {
        n: usize,
    }
    dir.write_csv(
        "lost_samples.csv",
        mask.iter()
            .enumerate()
            .filter(|(_, &l)| l)
            .map(|(n, _)| LostRow { n }),
    )?;
    println!(
        "qc: {} lost samples, decorrelation lag {}, max UE speed {:.3} m/s",
        mask.iter().filter(|&&l| l).count(),
        report
            .autocorr_summary
            .map_or_else(|| format!("> {}", params.max_lag), |l| l.to_string()),
        report.max_ue_speed_mps
    );
    if !report.nyquist_ok {
        dir.warn(format!(
            "assumed UE speed {} m/s exceeds the {:.3} m/s the snapshot rate resolves",
            report.ue_speed_mps, report.max_ue_speed_mps
        ));
    }
    Ok(mask)
}

pub fn qc(out: &Path, args: &QcArgs) -> Outcome<Vec<String>> {
    let tensor = read_input(&args.input)?;
    let mut dir = OutDir::create(out)?;
    let mask = qc_step(&mut dir, &tensor, &args.params)?;
    if let Some(name) = &args.repaired {
        let fixed = match args.repair {
            Repair::None => tensor.clone().with_lost_mask(Some(mask))?,
            Repair::Drop => drop_lost(&tensor, &mask)?,
            Repair::Interpolate => interpolate_lost(&tensor, &mask)?,
        };
        write_cht(&fixed, dir.path(name))?;
    }
    dir.finish("qc", args, None, Some(&args.input))
}

fn hardening_step(dir: &mut OutDir, tensor: &ChannelTensor, policy: &SubsetPolicy) -> Outcome<()> {
    let curve = hardening_curve(tensor, policy)?;
    let reference = iid_reference_curve(&policy.sizes)?;
    #[derive(Serialize)]
    struct Row {
        subset_size: usize,
        std_linear: f64,
        std_db: f64,
        reference_std_db: f64,
    }
    dir.write_csv(
        "hardening.csv",
        curve
            .points
            .iter()
            .zip(&reference.points)
            .map(|(p, r)| Row {
                subset_size: p.subset_size,
                std_linear: p.std_linear,
                std_db: p.std_db,
                reference_std_db: r.std_db,
            }),
    )?;
    let per_antenna = per_antenna_mean_stats(tensor)?;
    #[derive(Serialize)]
    struct AntennaRow {
        antenna: usize,
        mean_db: f64,
    }
    dir.write_csv(
        "per_antenna.csv",
        per_antenna
            .mean_db
            .iter()
            .enumerate()
            .map(|(antenna, &mean_db)| AntennaRow { antenna, mean_db }),
    )?;
    #[derive(Serialize)]
    struct Summary {
        hardening_amount_db: f64,
        reference_amount_db: f64,
        per_antenna_std_db: f64,
    }
    dir.write_toml(
        "hardening_summary.toml",
        &Summary {
            hardening_amount_db: curve.hardening_amount_db,
            reference_amount_db: reference.hardening_amount_db,
            per_antenna_std_db: per_antenna.std_db,
        },
    )?;
    println!(
        "hardening: {:.3} dB over {} antennas (i.i.d. reference {:.3} dB), per-antenna spread {:.3} dB",
        curve.hardening_amount_db,
        policy.sizes.last().copied().unwrap_or(0),
        reference.hardening_amount_db,
        per_antenna.std_db
    );
    Ok(())
}

pub fn hardening(out: &Path, args: &HardeningArgs) -> Outcome<Vec<String>> {
    let tensor = load(&args.input)?;
    let policy = policy(&args.subsets, &tensor)?;
    let mut dir = OutDir::create(out)?;
    hardening_step(&mut dir, &tensor, &policy)?;
    dir.finish("hardening", args, None, Some(&args.input.input))
}

fn tails_step(
    dir: &mut OutDir,
    tensor: &ChannelTensor,
    policy: &SubsetPolicy,
    p: &TailParams,
) -> Outcome<()> {
    let method = match p.method {
        MethodArg::Mle => FitMethod::Mle,
        MethodArg::Mom => FitMethod::MoM,
    };
    let constraint = if p.unit_mean {
        FitConstraint::UnitMean
    } else {
        FitConstraint::Joint
    };
    let unit = match p.offset_unit {
        UnitArg::Db => OffsetUnit::Db,
        UnitArg::Linear => OffsetUnit::Linear,
    };
    let dof = dof_curve(tensor, policy, method, constraint)?;
    #[derive(Serialize)]
    struct DofRow {
        subset_size: usize,
        shape: f64,
        scale: f64,
        mom_shape: f64,
        mom_scale: f64,
        method: &'static str,
        constraint: &'static str,
    }
    dir.write_csv(
        "dof.csv",
        dof.points.iter().map(|d| DofRow {
            subset_size: d.subset_size,
            shape: d.fit.shape,
            scale: d.fit.scale,
            mom_shape: d.mom.shape,
            mom_scale: d.mom.scale,
            method: match method {
                FitMethod::Mle => "mle",
                FitMethod::MoM => "mom",
            },
            constraint: match constraint {
                FitConstraint::Joint => "joint",
                FitConstraint::UnitMean => "unit_mean",
            },
        }),
    )?;

    #[derive(Serialize)]
    struct EcdfRow {
        subset_size: usize,
        value: f64,
        probability: f64,
        reference_probability: f64,
    }
    #[derive(Serialize)]
    struct OffsetRow {
        subset_size: usize,
        p: f64,
        offset: f64,
        unit: &'static str,
        reliable: bool,
    }
    let mut ecdf_rows = Vec::new();
    let mut offset_rows = Vec::new();
    for &k in &policy.sizes {
        let subset = select_subset(tensor.layout(), policy.mode, k)?;
        let ecdf = Ecdf::new(subset_gain(tensor, &subset)?)?;
        for (value, probability) in ecdf.log_spaced_points(p.points) {
            ecdf_rows.push(EcdfRow {
                subset_size: k,
                value,
                probability,
                reference_probability: gamma_reference_cdf(k as f64, value)?,
            });
        }
        for &prob in &p.offset_p {
            let off = cdf_offset(&ecdf, k as f64, prob, unit)?;
            if !off.reliable {
                dir.warn(format!(
                    "CDF offset at M={k}, p={prob} rests on fewer than 10 tail samples"
                ));
            }
            offset_rows.push(OffsetRow {
                subset_size: k,
                p: prob,
                offset: off.value,
                unit: match unit {
                    OffsetUnit::Db => "db",
                    OffsetUnit::Linear => "linear",
                },
                reliable: off.reliable,
            });
        }
    }
    dir.write_csv("ecdf.csv", ecdf_rows)?;
    dir.write_csv("cdf_offsets.csv", offset_rows)?;
    if let Some(last) = dof.points.last() {
        println!(
            "tails: fitted shape {:.2} at M={} (slope {:.3} per antenna)",
            last.fit.shape,
            last.subset_size,
            dof.shape_slope()
        );
    }
    Ok(())
}

pub fn tails(out: &Path, args: &TailsArgs) -> Outcome<Vec<String>> {
    let tensor = load(&args.input)?;
    let policy = policy(&args.subsets, &tensor)?;
    let mut dir = OutDir::create(out)?;
    tails_step(&mut dir, &tensor, &policy, &args.params)?;
    dir.finish("tails", args, None, Some(&args.input.input))
}

fn margin_step(
    dir: &mut OutDir,
    tensor: &ChannelTensor,
    policy: &SubsetPolicy,
    p: &MarginParams,
) -> Outcome<()> {
    let table = fading_margin_table(tensor, policy, &p.probabilities)?;
    for row in table.rows.iter().filter(|r| !r.reliable) {
        dir.warn(format!(
            "margin at M={}, p={} rests on fewer than 10 tail samples",
            row.subset_size, row.outage_probability
        ));
    }
    #[derive(Serialize)]
    struct Row {
        subset_size: usize,
        p: f64,
        margin_db: f64,
        reliable: bool,
        iid_margin_db: f64,
    }
    dir.write_csv(
        "margin.csv",
        table.rows.iter().map(|r| Row {
            subset_size: r.subset_size,
            p: r.outage_probability,
            margin_db: r.margin_db,
            reliable: r.reliable,
            iid_margin_db: r.iid_margin_db,
        }),
    )?;
    println!(
        "margin: {} rows, {} unreliable",
        table.rows.len(),
        table.unreliable_count()
    );
    Ok(())
}

pub fn margin(out: &Path, args: &MarginArgs) -> Outcome<Vec<String>> {
    let tensor = load(&args.input)?;
    let policy = policy(&args.subsets, &tensor)?;
    let mut dir = OutDir::create(out)?;
    margin_step(&mut dir, &tensor, &policy, &args.params)?;
    dir.finish("margin", args, None, Some(&args.input.input))
}

fn shadowing_step(dir: &mut OutDir, tensor: &ChannelTensor, p: &ShadowingParams) -> Outcome<()> {
    let fit = fit_shadowing(
        tensor,
        &ShadowingOptions {
            from_sample: p.from_sample,
        },
    )?;
    #[derive(Serialize)]
    struct Row {
        n: usize,
        g_db: f64,
        trend_db: f64,
        residual_db: f64,
    }
    dir.write_csv(
        "shadowing.csv",
        fit.sample_index
            .iter()
            .zip(&fit.g_db)
            .zip(&fit.residuals)
            .map(|((&n, &g_db), &residual_db)| Row {
                n,
                g_db,
                trend_db: fit.trend_db(n),
                residual_db,
            }),
    )?;
    let normal = mmimo_core::shadowing::NormalFit {
        mu_hat: fit.mu_hat,
        sigma_hat: fit.sigma_hat,
        sample_count: fit.residuals.len(),
    };
    dir.write_csv(
        "shadowing_cdf.csv",
        residual_cdf_table(&fit.residuals, &normal, p.cdf_points),
    )?;
    #[derive(Serialize)]
    struct Summary {
        slope_k: f64,
        intercept_m: f64,
        slope_se: f64,
        intercept_se: f64,
        mu_hat: f64,
        sigma_hat: f64,
        span_min_db: f64,
        span_max_db: f64,
        samples: usize,
    }
    dir.write_toml(
        "shadowing_fit.toml",
        &Summary {
            slope_k: fit.slope_k,
            intercept_m: fit.intercept_m,
            slope_se: fit.slope_se,
            intercept_se: fit.intercept_se,
            mu_hat: fit.mu_hat,
            sigma_hat: fit.sigma_hat,
            span_min_db: fit.span.0,
            span_max_db: fit.span.1,
            samples: fit.residuals.len(),
        },
    )?;
    println!(
        "shadowing: k = {:.5} dB/sample, m = {:.2} dB, sigma = {:.2} dB, span [{:.2}, {:.2}] dB",
        fit.slope_k, fit.intercept_m, fit.sigma_hat, fit.span.0, fit.span.1
    );
    Ok(())
}

pub fn shadowing(out: &Path, args: &ShadowingArgs) -> Outcome<Vec<String>> {
    let tensor = read_input(&args.input.input)?;
    // flagged samples are excluded from the regression rather than repaired
    let tensor = match args.input.repair {
        Repair::None => tensor,
        _ => {
            let mask = lost_mask(&tensor, &args.input.detect)?;
            tensor.with_lost_mask(Some(mask))?
        }
    };
    let mut dir = OutDir::create(out)?;
    shadowing_step(&mut dir, &tensor, &args.params)?;
    dir.finish("shadowing", args, None, Some(&args.input.input))
}

pub fn report(out: &Path, args: &ReportArgs) -> Outcome<Vec<String>> {
    let (tensor, cfg): (ChannelTensor, Option<SynthConfig>) = match &args.input {
        Some(path) => (read_input(path)?, None),
        None => {
            let cfg = scenario::resolve(&args.source)?;
            (synthesize(&cfg)?.tensor, Some(cfg))
        }
    };
    let mut dir = OutDir::create(out)?;
    let mask = qc_step(&mut dir, &tensor, &args.qc)?;
    let clean = drop_lost(&tensor, &mask)?;
    let policy = policy(&args.subsets, &clean)?;
    hardening_step(&mut dir, &clean, &policy)?;
    tails_step(&mut dir, &clean, &policy, &args.tails)?;
    margin_step(&mut dir, &clean, &policy, &args.margin)?;
    drop(clean);
    let flagged = tensor.with_lost_mask(Some(mask))?;
    shadowing_step(&mut dir, &flagged, &args.shadowing)?;
    dir.finish("report", args, cfg.as_ref(), args.input.as_deref())
}

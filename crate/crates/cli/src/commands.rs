use std::io::Write;

use hdgof_core::dataio::LoadedTable;
use hdgof_core::sim::ReplicationOptions;
use hdgof_core::{
    compare_accuracy, load_csv, post_lasso, replication_rng, run_battery, run_replications_with, BatteryResult,
    Dataset, PathConfig, PostLassoFit, Preprocess, RefitStatus, ScenarioSpec, TestName,
};
use serde::Serialize;

use crate::{Format, RunConfig};

pub type CmdResult = Result<(), Box<dyn std::error::Error>>;

pub fn run(cfg: &RunConfig, threads: usize, out: &mut impl Write) -> CmdResult {
    match cfg.command {
        crate::Command::Fit => fit(cfg, out),
        crate::Command::Test => test(cfg, out),
        crate::Command::Simulate => simulate(cfg, threads, out),
        crate::Command::Sonar => sonar(cfg, out),
    }
}

fn load(cfg: &RunConfig) -> Result<LoadedTable, Box<dyn std::error::Error>> {
    let path = cfg.input.as_ref().ok_or("--input is required for this command")?;
    let table = load_csv(path, &cfg.response, cfg.family.into())?;
    log::info!("loaded {} rows, {} covariates from {}", table.data.n(), table.data.p(), path.display());
    Ok(table)
}

fn prepared(cfg: &RunConfig) -> Result<(Dataset, Vec<String>), Box<dyn std::error::Error>> {
    let table = load(cfg)?;
    let pre = Preprocess { standardize: cfg.standardize, quadratic: cfg.quadratic, intercept: cfg.intercept };
    let data = pre.apply_dataset(&table.data)?;
    let mut names = Vec::new();
    if cfg.intercept {
        names.push("(intercept)".to_string());
    }
    names.extend(table.feature_names.iter().cloned());
    if cfg.quadratic {
        names.extend(table.feature_names.iter().map(|n| format!("{n}^2")));
    }
    Ok((data, names))
}

#[derive(Serialize)]
struct FitReport {
    n: usize,
    p: usize,
    lambda: f64,
    q_hat: usize,
    status: RefitStatus,
    coefficients: Vec<(String, f64)>,
}

fn fit_report(data: &Dataset, names: &[String], fit: &PostLassoFit) -> FitReport {
    FitReport {
        n: data.n(),
        p: data.p(),
        lambda: fit.fit.lambda,
        q_hat: fit.fit.q_hat(),
        status: fit.status,
        coefficients: fit.fit.support.iter().map(|&j| (names[j].clone(), fit.fit.beta[j])).collect(),
    }
}

fn fit(cfg: &RunConfig, out: &mut impl Write) -> CmdResult {
    let (data, names) = prepared(cfg)?;
    let fitted = post_lasso(&data, &PathConfig::with_seed(cfg.seed))?;
    let report = fit_report(&data, &names, &fitted);
    match cfg.format {
        Format::JsonLines => writeln!(out, "{}", serde_json::to_string(&report)?)?,
        Format::Text => {
            writeln!(out, "n = {}, p = {}", report.n, report.p)?;
            writeln!(out, "lambda = {:.6}, selected = {}, refit = {:?}", report.lambda, report.q_hat, report.status)?;
            for (name, b) in &report.coefficients {
                writeln!(out, "  {name:<16} {b:>12.6}")?;
            }
        }
    }
    Ok(())
}

fn verdict(p: f64, level: f64) -> &'static str {
    if p <= level {
        "reject"
    } else {
        "fail to reject"
    }
}

fn test(cfg: &RunConfig, out: &mut impl Write) -> CmdResult {
    let (data, _) = prepared(cfg)?;
    let fitted = post_lasso(&data, &PathConfig::with_seed(cfg.seed))?;
    if fitted.status != RefitStatus::Refit {
        log::warn!("refit status {:?}", fitted.status);
    }
    // Projection draws use stream 1 so they never overlap the CV shuffle.
    let mut rng = replication_rng(cfg.seed, 1);
    let result: BatteryResult = run_battery(&data, &fitted.fit, cfg.d_random, &mut rng)?;
    match cfg.format {
        Format::JsonLines => writeln!(out, "{}", serde_json::to_string(&result)?)?,
        Format::Text => {
            let first = &result.t_betahat;
            writeln!(out, "n = {}, p = {}, selected = {}, h = {:.4}", data.n(), data.p(), first.q_hat, first.h)?;
            writeln!(out, "{:<6} {:<14} {:>10} {:>10}", "proj", "origin", "T", "p")?;
            let rows = std::iter::once(("alpha".to_string(), &result.t_alpha))
                .chain(result.battery.iter().enumerate().map(|(i, r)| (i.to_string(), r)));
            for (label, r) in rows {
                let origin = format!("{:?}", r.projection.origin);
                writeln!(out, "{label:<6} {origin:<14} {:>10.4} {:>10.4}", r.t_stat, r.p_value)?;
            }
            let c = &result.combined;
            let headline = [
                (TestName::TAlpha, result.t_alpha.p_value),
                (TestName::TBetahat, result.t_betahat.p_value),
                (TestName::TCauchy, c.cauchy_p),
                (TestName::THmp, c.hmp_p),
            ];
            writeln!(out)?;
            for (name, p) in headline {
                writeln!(out, "{:<10} p = {p:.4}  {}", name.label(), verdict(p, cfg.level))?;
            }
        }
    }
    Ok(())
}

fn simulate(cfg: &RunConfig, threads: usize, out: &mut impl Write) -> CmdResult {
    if cfg.a.is_empty() {
        return Err("--a needs at least one value".into());
    }
    let opts = ReplicationOptions { level: cfg.level, threads, ..ReplicationOptions::new(cfg.n_reps, cfg.d_random) };
    if cfg.format == Format::Text {
        write!(out, "{:>6}", "a")?;
        for t in TestName::ALL {
            write!(out, " {:>10}", t.label())?;
        }
        writeln!(out)?;
    }
    for &a in &cfg.a {
        let spec = ScenarioSpec { model: cfg.model, n: cfg.n, p: cfg.p, a, cov: cfg.cov.into(), seed: cfg.seed };
        let summary = run_replications_with(&spec, &opts)?;
        if summary.n_failed > 0 {
            log::warn!("a = {a}: {} of {} replications failed", summary.n_failed, cfg.n_reps);
        }
        match cfg.format {
            Format::JsonLines => {
                for cell in &summary.cells {
                    writeln!(out, "{}", serde_json::to_string(cell)?)?;
                }
            }
            Format::Text => {
                write!(out, "{a:>6.2}")?;
                for t in TestName::ALL {
                    write!(out, " {:>10.3}", summary.rate(t))?;
                }
                writeln!(out)?;
            }
        }
    }
    Ok(())
}

fn sonar(cfg: &RunConfig, out: &mut impl Write) -> CmdResult {
    let table = load(cfg)?;
    let report = compare_accuracy(&table.data, cfg.standardize, cfg.splits, cfg.seed)?;
    match cfg.format {
        Format::JsonLines => writeln!(out, "{}", serde_json::to_string(&report)?)?,
        Format::Text => {
            writeln!(out, "{} splits, {} test rows each", report.runs, report.test_size)?;
            writeln!(out, "linear    mean accuracy {:.4}", report.linear_accuracy)?;
            writeln!(out, "quadratic mean accuracy {:.4}", report.quadratic_accuracy)?;
        }
    }
    Ok(())
}

use std::collections::BTreeSet;
use std::io::IsTerminal;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{Context, Result};

use satc_core::calibration::CalibrationGrid;
use satc_core::dataset::DatasetBundle;
use satc_core::evaluation::monte_carlo_random_ener;
use satc_core::formats::{format_curve, format_fraction_curve, format_ranking, write_text};
use satc_core::ranking::{rank_static, RankingConfig, Strategy};
use satc_core::report::{AveragingResult, RunConfig, RunReport};
use satc_core::simulation::{simulate, split_simulate, MethodSetup};
use satc_core::synthetic::{generate, SyntheticSpec};
use satc_core::{Averaging, EffectivenessSpec};
use satc_service::{ServiceConfig, StoreConfig};

use crate::{Cli, Command, GlobalOpts, ServeOpts, SynthOpts, UsageError};

const BOTH: [Averaging; 2] = [Averaging::Macro, Averaging::Micro];

pub fn run(cli: Cli) -> Result<()> {
    let opts = cli.opts;
    match cli.command {
        Command::Calibrate => calibrate(&opts),
        Command::Rank => rank(&opts),
        Command::Simulate => simulate_cmd(&opts),
        Command::RandomBaseline => random_baseline(&opts),
        Command::SplitSimulate => split_simulate_cmd(&opts),
        Command::Serve(serve) => serve_cmd(serve),
        Command::Synth(synth) => synth_cmd(&opts, synth),
    }
}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn parse_grid(text: &str) -> Result<CalibrationGrid> {
    let bad = || {
        usage(format!(
            "--grid {text:?}: expected low:high:count or a comma-separated list"
        ))
    };
    let grid = if text.contains(':') {
        let parts: Vec<&str> = text.split(':').collect();
        let [low, high, count] = parts[..] else {
            return Err(bad());
        };
        let low: f64 = low.trim().parse().map_err(|_| bad())?;
        let high: f64 = high.trim().parse().map_err(|_| bad())?;
        let count: usize = count.trim().parse().map_err(|_| bad())?;
        CalibrationGrid::log_spaced(low, high, count)
    } else {
        let values = text
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| bad())?;
        CalibrationGrid::new(values)
    };
    grid.map_err(|e| usage(format!("--grid {text:?}: {e}")))
}

fn grid(opts: &GlobalOpts) -> Result<CalibrationGrid> {
    opts.grid
        .as_deref()
        .map(parse_grid)
        .unwrap_or_else(|| Ok(CalibrationGrid::default()))
}

fn load_bundle(opts: &GlobalOpts) -> Result<DatasetBundle> {
    let path = opts.bundle.as_ref().ok_or_else(|| usage("--bundle is required"))?;
    DatasetBundle::load(path).context("loading bundle")
}

fn spec(opts: &GlobalOpts) -> Result<EffectivenessSpec> {
    Ok(EffectivenessSpec::new(opts.beta)?)
}

fn setup(opts: &GlobalOpts, bundle: &DatasetBundle) -> Result<MethodSetup> {
    Ok(MethodSetup {
        method: opts.method,
        strategy: opts.strategy,
        averaging: opts.averaging,
        spec: spec(opts)?,
        calibration: bundle.calibration(opts.averaging, &grid(opts)?, opts.sigma)?,
        estimates: bundle.estimates.clone(),
    })
}

fn base_config(command: &str, opts: &GlobalOpts, bundle: &DatasetBundle) -> RunConfig {
    RunConfig {
        command: command.into(),
        dataset: bundle.name.clone(),
        n_docs: bundle.test.n_docs(),
        n_classes: bundle.test.n_classes(),
        method: None,
        strategy: None,
        gain_rule: None,
        averaging: opts.averaging,
        beta: opts.beta,
        sigma: None,
        xi: opts.xi.clone(),
        seed: opts.seed,
        trials: None,
        parts: None,
    }
}

fn write(path: PathBuf, contents: &str) -> Result<()> {
    write_text(&path, contents)?;
    Ok(())
}

fn write_report(out: &Path, report: &RunReport) -> Result<()> {
    let text = report.to_toml()?;
    write(out.join("report.toml"), &text)?;
    print!("{text}");
    Ok(())
}

fn curve_path(out: &Path, stem: &str, averaging: Averaging, kind: &str) -> PathBuf {
    out.join("curves").join(format!("{stem}_{averaging}_{kind}.csv"))
}

fn calibrate(opts: &GlobalOpts) -> Result<()> {
    if opts.sigma.is_some() {
        return Err(usage("calibrate fits sigma; --sigma does not apply"));
    }
    let bundle = load_bundle(opts)?;
    let grid = grid(opts)?;
    let fit = bundle.fit_calibration(opts.averaging, &grid)?;
    println!("dataset = {:?}", bundle.name);
    println!("averaging = \"{}\"", opts.averaging);
    println!("candidates = {}", grid.candidates().len());
    println!("sigma = {}", fit.model.sigma);
    println!("objective = {}", fit.objective);
    Ok(())
}

fn rank(opts: &GlobalOpts) -> Result<()> {
    let bundle = load_bundle(opts)?;
    let s = setup(opts, &bundle)?;
    let config = RankingConfig::for_method(
        s.method,
        s.strategy,
        s.averaging,
        s.spec,
        s.calibration,
        s.estimates,
        bundle.gold.as_ref(),
    )?;
    if config.effective_strategy() == Strategy::Dynamic {
        return Err(usage(
            "rank writes static rankings; a dynamic order depends on the corrections, use simulate",
        ));
    }
    let ranking = rank_static(&bundle.test, &config)?;
    let path = opts.out.join("ranking.tsv");
    write(path.clone(), &format_ranking(&ranking))?;
    println!("{}", path.display());
    Ok(())
}

fn simulate_cmd(opts: &GlobalOpts) -> Result<()> {
    let bundle = load_bundle(opts)?;
    let gold = bundle.require_gold()?;
    let s = setup(opts, &bundle)?;
    let run = simulate(&bundle.test, gold, &s, &opts.xi)?;

    let stem = format!("{}_{}", s.method, run.strategy);
    for report in &run.reports {
        write(
            curve_path(&opts.out, &stem, report.averaging, "er"),
            &format_curve(&report.er),
        )?;
        write(
            curve_path(&opts.out, &stem, report.averaging, "ner"),
            &format_curve(&report.ner),
        )?;
    }
    let config = RunConfig {
        method: Some(s.method),
        strategy: Some(run.strategy),
        gain_rule: Some(run.gain_rule),
        sigma: Some(s.calibration.sigma),
        ..base_config("simulate", opts, &bundle)
    };
    let report = RunReport {
        config,
        results: run.reports.iter().map(AveragingResult::from).collect(),
    };
    write_report(&opts.out, &report)
}

fn random_baseline(opts: &GlobalOpts) -> Result<()> {
    let bundle = load_bundle(opts)?;
    let gold = bundle.require_gold()?;
    let spec = spec(opts)?;
    let mut results = Vec::new();
    for averaging in BOTH {
        let mc = monte_carlo_random_ener(
            &bundle.test,
            gold,
            averaging,
            spec,
            opts.trials as usize,
            opts.seed,
            &opts.xi,
        )?;
        write(
            curve_path(&opts.out, "random", averaging, "er"),
            &format_curve(&mc.mean_er),
        )?;
        write(
            curve_path(&opts.out, "random", averaging, "ner"),
            &format_curve(&mc.mean_ner),
        )?;
        results.push(AveragingResult {
            averaging,
            excluded_classes: mc.excluded_classes,
            ener: mc.ener,
        });
    }
    let config = RunConfig {
        trials: Some(opts.trials as usize),
        ..base_config("random-baseline", opts, &bundle)
    };
    write_report(&opts.out, &RunReport { config, results })
}

fn split_simulate_cmd(opts: &GlobalOpts) -> Result<()> {
    let bundle = load_bundle(opts)?;
    let gold = bundle.require_gold()?;
    let s = setup(opts, &bundle)?;
    let split = split_simulate(&bundle.test, gold, &s, opts.parts as usize, opts.seed, &opts.xi)?;
    let first = split
        .runs
        .first()
        .ok_or_else(|| anyhow::anyhow!("split produced no parts"))?;
    let stem = format!("{}_{}_split", s.method, first.strategy);
    let mut results = Vec::new();
    for avg in &split.averaged {
        write(
            curve_path(&opts.out, &stem, avg.averaging, "er"),
            &format_fraction_curve(&avg.fractions, &avg.er),
        )?;
        write(
            curve_path(&opts.out, &stem, avg.averaging, "ner"),
            &format_fraction_curve(&avg.fractions, &avg.ner),
        )?;
        // A class excluded from any part is reported.
        let excluded: BTreeSet<_> = split
            .runs
            .iter()
            .flat_map(|r| r.report(avg.averaging).excluded_classes.iter().cloned())
            .collect();
        results.push(AveragingResult {
            averaging: avg.averaging,
            excluded_classes: excluded.into_iter().collect(),
            ener: avg.ener.clone(),
        });
    }
    let config = RunConfig {
        method: Some(s.method),
        strategy: Some(first.strategy),
        gain_rule: Some(first.gain_rule),
        sigma: Some(s.calibration.sigma),
        parts: Some(opts.parts as usize),
        ..base_config("split-simulate", opts, &bundle)
    };
    write_report(&opts.out, &RunReport { config, results })
}

fn serve_cmd(serve: ServeOpts) -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info")),
        )
        .with_writer(std::io::stderr)
        .with_ansi(std::io::stderr().is_terminal())
        .init();
    let config = ServiceConfig {
        listen: serve.listen,
        store: StoreConfig {
            bundle_root: serve.bundle_root,
            data_dir: serve.data_dir,
            ttl: Duration::from_secs(serve.ttl_secs),
        },
    };
    let runtime = tokio::runtime::Runtime::new().context("starting the async runtime")?;
    runtime.block_on(satc_service::serve(config))?;
    Ok(())
}

fn synth_cmd(opts: &GlobalOpts, synth: SynthOpts) -> Result<()> {
    let bundle = generate(&SyntheticSpec {
        n_test: synth.n_test,
        n_train: synth.n_train,
        n_classes: synth.classes as usize,
        prevalence: synth.prevalence,
        error_rate: synth.error_rate,
        seed: opts.seed,
    })?;
    bundle.save(&opts.out)?;
    println!("{}", opts.out.display());
    Ok(())
}

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use qmem_core::config::SimConfig;
use qmem_core::data::{self, Dataset, DatasetKind, ParamSpace};
use qmem_core::dynamics::simulate;
use qmem_core::entanglement::concurrence_series;
use qmem_core::loops::per_period_series;
use qmem_ml::benchmark::benchmark;
use qmem_ml::metrics::evaluate;
use qmem_ml::search::{self, Objective, SearchResult, SearchSpec};
use qmem_ml::split::{split_indices, take, SplitSpec};
use qmem_ml::{ModelKind, Regressor};
use serde::Serialize;

use crate::args::*;
use crate::manifest::{strip_config, Manifest, OutLayout};
use crate::svg;

struct Ctx {
    global: GlobalArgs,
    sim: SimConfig,
    args: Vec<String>,
}

impl Ctx {
    fn layout(&self, default_file: &str) -> Result<OutLayout> {
        let layout = OutLayout::resolve(self.global.out.as_deref(), default_file);
        layout.create()?;
        Ok(layout)
    }

    fn finish(&self, command: &Command, layout: &OutLayout) -> Result<()> {
        Manifest {
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.name().to_string(),
            args: self.args.clone(),
            sim: self.sim.clone(),
        }
        .save(&layout.manifest)
    }
}

/// Config file (if any) with the command-line overrides applied.
pub fn resolve_sim(global: &GlobalArgs, base: Option<SimConfig>) -> Result<SimConfig> {
    let mut sim = match (base, &global.config) {
        (Some(s), _) => s,
        (None, Some(p)) => SimConfig::load(p)?,
        (None, None) => SimConfig::default(),
    };
    if let Some(t) = global.trunc {
        sim.trunc = t;
    }
    if let Some(p) = global.periods {
        sim.periods = p;
    }
    if let Some(s) = global.steps_per_period {
        sim.steps_per_period = s;
    }
    sim.validate()?;
    Ok(sim)
}

/// Runs a parsed command line. `args` are the raw arguments after the
/// program name, recorded in the manifest.
pub fn run(cli: Cli, args: Vec<String>) -> Result<()> {
    run_with(cli, args, None)
}

fn run_with(cli: Cli, args: Vec<String>, base: Option<SimConfig>) -> Result<()> {
    if let Command::Rerun(r) = &cli.command {
        let m = Manifest::load(&r.manifest)?;
        let mut argv = vec!["qmemlab".to_string()];
        argv.extend(m.args.iter().cloned());
        let inner = <Cli as clap::Parser>::try_parse_from(&argv).context("manifest arguments")?;
        if matches!(inner.command, Command::Rerun(_)) {
            bail!("a manifest cannot record another rerun");
        }
        log::info!("re-running {} {}", inner.command.name(), m.args.join(" "));
        return run_with(inner, m.args, Some(m.sim));
    }
    let sim = resolve_sim(&cli.global, base)?;
    let ctx = Ctx {
        global: cli.global.clone(),
        sim,
        args: strip_config(&args),
    };
    let pool = data::thread_pool(ctx.global.workers)?;
    pool.install(|| dispatch(&ctx, &cli.command))
}

fn dispatch(ctx: &Ctx, command: &Command) -> Result<()> {
    let layout = match command {
        Command::Simulate(a) => cmd_simulate(ctx, a)?,
        Command::Dataset(a) => cmd_dataset(ctx, a)?,
        Command::Stats(a) => cmd_stats(ctx, a)?,
        Command::Train(a) => cmd_train(ctx, a)?,
        Command::Benchmark(a) => cmd_benchmark(ctx, a)?,
        Command::Optimize(a) => cmd_optimize(ctx, a)?,
        Command::Compare(a) => cmd_compare(ctx, a)?,
        Command::PlotData(a) => cmd_plot(ctx, a)?,
        Command::Rerun(_) => unreachable!("handled by run_with"),
    };
    ctx.finish(command, &layout)
}

fn sibling(layout: &OutLayout, suffix: &str) -> PathBuf {
    let stem = layout.file.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    layout.dir.join(format!("{stem}.{suffix}"))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

fn cmd_simulate(ctx: &Ctx, a: &SimulateArgs) -> Result<OutLayout> {
    let coupled = a.coupled || a.c12.is_some() || a.l12.is_some();
    let sim = &ctx.sim;
    let (system, init) = if coupled {
        let system = sim.pair_system(a.lambda, a.c12.unwrap_or(0.0), a.l12.unwrap_or(0.0))?;
        (system, vec![sim.initial(a.phi); 2])
    } else {
        (sim.single_system(a.lambda)?, vec![sim.initial(a.phi)])
    };
    let traj = simulate(&init, &system, &sim.integrator(coupled))?;
    let layout = ctx.layout("trajectory.csv")?;
    traj.save_csv(&layout.file)?;
    for l in 0..traj.n_memristors() {
        let series = per_period_series(&traj, l)?;
        series.save_csv(&layout.path(&format!("loops_{}.csv", l + 1)))?;
        println!("memristor {}: mean form factor {:.6}", l + 1, series.mean_form_factor);
    }
    if coupled {
        let c = concurrence_series(&traj)?;
        c.save_csv(&layout.path("concurrence.csv"))?;
        println!("peak concurrence {:.6}", c.peak());
    }
    Ok(layout)
}

fn cmd_dataset(ctx: &Ctx, a: &DatasetArgs) -> Result<OutLayout> {
    let seed = ctx.global.seed;
    let space = match (a.coupled, a.grid) {
        (false, None) => ParamSpace::single_random(seed),
        (true, None) => ParamSpace::coupled_random(seed),
        (false, Some(levels)) => ParamSpace::single_grid(levels, seed),
        (true, Some(levels)) => ParamSpace::coupled_grid(levels, seed),
    };
    let report = data::generate(&space, a.n, &ctx.sim, ctx.global.workers)?;
    for f in &report.failures {
        log::warn!("row {} {:?} excluded: {}", f.index, f.features, f.message);
    }
    let layout = ctx.layout("dataset.csv")?;
    report.dataset.save(&layout.file)?;
    println!(
        "wrote {} rows to {} ({} excluded)",
        report.dataset.len(),
        layout.file.display(),
        report.failures.len()
    );
    Ok(layout)
}

fn cmd_stats(ctx: &Ctx, a: &DataArg) -> Result<OutLayout> {
    let ds = Dataset::load(&a.data)?;
    let summary = data::stats(&ds)?;
    print!("{}", summary.to_table());
    let layout = ctx.layout("stats.csv")?;
    let f = std::fs::File::create(&layout.file).with_context(|| format!("writing {}", layout.file.display()))?;
    summary.write_csv(std::io::BufWriter::new(f))?;
    Ok(layout)
}

#[derive(Serialize)]
struct TrainReport {
    model: ModelKind,
    rows_train: usize,
    rows_test: usize,
    metrics: Option<qmem_ml::EvalMetrics>,
}

fn cmd_train(ctx: &Ctx, a: &TrainArgs) -> Result<OutLayout> {
    let ds = Dataset::load(&a.data)?;
    let (x, y) = (ds.features(), ds.targets());
    let mut model = Regressor::new(a.model, ctx.global.seed);
    let report = if a.full {
        model.fit(&x, &y)?;
        TrainReport {
            model: a.model,
            rows_train: x.len(),
            rows_test: 0,
            metrics: None,
        }
    } else {
        let split = split_indices(ds.len(), &SplitSpec { seed: ctx.global.seed, ..Default::default() })?;
        let (xt, yt) = take(&x, &y, &split.train);
        let (xv, yv) = take(&x, &y, &split.test);
        let start = std::time::Instant::now();
        model.fit(&xt, &yt)?;
        let secs = start.elapsed().as_secs_f64();
        let m = evaluate(&yv, &model.predict(&xv)?, ds.kind.n_features(), secs)?;
        println!("{}: test R² {:.4}, adjusted {:.4}, RMSE {:.5}", a.model, m.r2, m.adjusted_r2, m.rmse);
        TrainReport {
            model: a.model,
            rows_train: xt.len(),
            rows_test: xv.len(),
            metrics: Some(m),
        }
    };
    let layout = ctx.layout("model.qml")?;
    model.save(&layout.file)?;
    write_json(&sibling(&layout, "metrics.json"), &report)?;
    Ok(layout)
}

fn cmd_benchmark(ctx: &Ctx, a: &BenchmarkArgs) -> Result<OutLayout> {
    let ds = Dataset::load(&a.data)?;
    let kinds = if a.models.is_empty() { ModelKind::ALL.to_vec() } else { a.models.clone() };
    let board = benchmark(&ds, &SplitSpec { seed: ctx.global.seed, ..Default::default() }, &kinds)?;
    let table = board.to_table();
    print!("{table}");
    let layout = ctx.layout("leaderboard.csv")?;
    board.save_csv(&layout.file)?;
    write_text(&sibling(&layout, "txt"), &table)?;
    Ok(layout)
}

fn fit_surrogate(ds: &Dataset, kind: ModelKind, seed: u64) -> Result<Regressor> {
    let mut model = Regressor::new(kind, seed);
    model.fit(&ds.features(), &ds.targets())?;
    Ok(model)
}

#[derive(Serialize)]
struct OptimumReport {
    objective: Objective,
    surrogate: ModelKind,
    features: serde_json::Map<String, serde_json::Value>,
    surrogate_value: f64,
    simulated_value: Option<f64>,
    evaluations: usize,
}

fn optimum_report(kind: DatasetKind, model: ModelKind, r: &SearchResult) -> OptimumReport {
    OptimumReport {
        objective: r.objective,
        surrogate: model,
        features: kind
            .feature_names()
            .iter()
            .zip(&r.best_features)
            .map(|(n, v)| (n.to_string(), (*v).into()))
            .collect(),
        surrogate_value: r.surrogate_value,
        simulated_value: r.simulated_value,
        evaluations: r.trace.len(),
    }
}

fn run_search(
    ctx: &Ctx,
    ds: &Dataset,
    model: &Regressor,
    objective: Objective,
    starts: usize,
    refine: usize,
    verify: bool,
) -> Result<SearchResult> {
    let spec = SearchSpec {
        n_random_starts: starts,
        refine_iters: refine,
        verify,
        ..SearchSpec::for_kind(ds.kind, objective, ctx.global.seed)
    };
    let r = search::optimize(model, &spec, search::simulator(ds.kind, &ctx.sim))?;
    println!(
        "{objective:?}: {:?} surrogate {:.6} simulated {}",
        r.best_features,
        r.surrogate_value,
        r.simulated_value.map_or("-".into(), |v| format!("{v:.6}"))
    );
    Ok(r)
}

fn cmd_optimize(ctx: &Ctx, a: &OptimizeArgs) -> Result<OutLayout> {
    let ds = Dataset::load(&a.data)?;
    let model = fit_surrogate(&ds, a.model, ctx.global.seed)?;
    let objective = if a.minimize { Objective::Minimize } else { Objective::Maximize };
    let r = run_search(ctx, &ds, &model, objective, a.starts, a.refine, !a.no_verify)?;
    let layout = ctx.layout("optimum.json")?;
    write_json(&layout.file, &optimum_report(ds.kind, a.model, &r))?;
    let path = sibling(&layout, "trace.csv");
    let f = std::fs::File::create(&path).with_context(|| format!("writing {}", path.display()))?;
    r.write_trace_csv(std::io::BufWriter::new(f), ds.kind.feature_names())?;
    Ok(layout)
}

fn cmd_compare(ctx: &Ctx, a: &CompareArgs) -> Result<OutLayout> {
    let mut reports = Vec::new();
    let (opt, sub) = match (&a.optimal, &a.suboptimal) {
        (Some(o), Some(s)) => (o.clone(), s.clone()),
        _ => {
            let path = a.data.as_ref().context("--data is required unless both configurations are given")?;
            let ds = Dataset::load(path)?;
            if ds.kind != DatasetKind::Coupled {
                bail!("compare needs a coupled dataset");
            }
            let model = fit_surrogate(&ds, a.model, ctx.global.seed)?;
            let mut pick = |given: &Option<Vec<f64>>, objective| -> Result<Vec<f64>> {
                match given {
                    Some(v) => Ok(v.clone()),
                    None => {
                        let r = run_search(ctx, &ds, &model, objective, 512, 100, true)?;
                        reports.push(optimum_report(ds.kind, a.model, &r));
                        Ok(r.best_features)
                    }
                }
            };
            (pick(&a.optimal, Objective::Maximize)?, pick(&a.suboptimal, Objective::Minimize)?)
        }
    };
    for v in [&opt, &sub] {
        if v.len() != DatasetKind::Coupled.n_features() {
            bail!("expected c12,l12,phi,lambda, got {} values", v.len());
        }
    }
    let report = search::compare(&opt, &sub, &ctx.sim)?;
    let layout = ctx.layout("summary.txt")?;
    report.write_bundle(&layout.dir)?;
    if !reports.is_empty() {
        write_json(&layout.path("search.json"), &reports)?;
    }
    print!("{}", report.summary());
    Ok(layout)
}

fn cmd_plot(ctx: &Ctx, a: &PlotArgs) -> Result<OutLayout> {
    let mut reader = csv::Reader::from_path(&a.csv).with_context(|| format!("reading {}", a.csv.display()))?;
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); headers.len()];
    for (k, rec) in reader.records().enumerate() {
        let rec = rec.with_context(|| format!("{} line {}", a.csv.display(), k + 2))?;
        for (col, field) in columns.iter_mut().zip(rec.iter()) {
            col.push(field.trim().parse().unwrap_or(f64::NAN));
        }
    }
    let index = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .with_context(|| format!("no column {name:?} in {}", a.csv.display()))
    };
    let xi = match &a.x {
        Some(name) => index(name)?,
        None => 0,
    };
    let yi: Vec<usize> = if a.y.is_empty() {
        (0..headers.len()).filter(|&k| k != xi).collect()
    } else {
        a.y.iter().map(|n| index(n)).collect::<Result<_>>()?
    };
    if yi.is_empty() {
        bail!("nothing to plot in {}", a.csv.display());
    }
    let series: Vec<svg::Series> = yi
        .iter()
        .map(|&k| svg::Series {
            name: &headers[k],
            y: &columns[k],
        })
        .collect();
    let title = a.csv.file_name().and_then(|s| s.to_str()).unwrap_or("plot");
    let text = svg::line_plot(title, &headers[xi], &columns[xi], &series);

    let default_out = a.csv.with_extension("svg");
    let layout = match &ctx.global.out {
        Some(_) => ctx.layout(&format!("{}.svg", a.csv.file_stem().and_then(|s| s.to_str()).unwrap_or("plot")))?,
        None => OutLayout::resolve(Some(&default_out), ""),
    };
    write_text(&layout.file, &text)?;
    println!("wrote {}", layout.file.display());
    Ok(layout)
}

//! Command-line front end: model generation, region-graph construction,
//! the complexity analyzer, both engines, exact enumeration, and the
//! Potts-grid convergence study.

mod svg;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use sgbp_core::edges::{analysis_report, analyze_graph, EdgeMetadata};
use sgbp_core::gbp::{
    compute_belief, messages_from_dtos, messages_to_dtos, run_to_fixed_point, BeliefReference,
    GbpOptions, MessageDto, MessageSet, UpdateOrder,
};
use sgbp_core::model::{build_model, make_potts, Model, ModelSpec, PottsParams};
use sgbp_core::oracle::exact_marginals;
use sgbp_core::regions::{build_region_graph, grid_cluster_regions, RegionGraph, RegionGraphSpec};
use sgbp_core::rng;
use sgbp_core::sgbp::{mean_trace, sgbp_run, RunTrace, SgbpOptions, StepSchedule};
use sgbp_core::{Error, Result};

#[derive(Parser)]
#[command(
    name = "sgbp",
    about = "Generalized belief propagation and its stochastic variant on region graphs",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a Potts grid model.
    Potts(PottsArgs),
    /// Generate the overlapping 2x2-cluster region graph for a grid model.
    RegionsGrid(RegionsGridArgs),
    /// Classify every edge and report per-edge complexity.
    Analyze(AnalyzeArgs),
    /// Run deterministic message passing to a fixed point.
    Gbp(GbpArgs),
    /// Run the stochastic engine.
    Sgbp(SgbpArgs),
    /// Exact marginals by exhaustive enumeration.
    Exact(ExactArgs),
    /// Reproduce the Potts-grid convergence study end to end.
    Reproduce(ReproduceArgs),
}

#[derive(Args)]
struct PottsArgs {
    #[arg(long, default_value_t = 3)]
    rows: usize,
    #[arg(long, default_value_t = 3)]
    cols: usize,
    #[arg(long, default_value_t = 0.1)]
    gamma: f64,
    #[arg(long, default_value_t = 0.1)]
    mu: f64,
    #[arg(long, default_value_t = 0.1)]
    sigma: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 4)]
    alphabet: usize,
    /// Output model JSON path.
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct RegionsGridArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    rows: usize,
    #[arg(long)]
    cols: usize,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    regions: PathBuf,
    /// Emit the report as JSON instead of a table.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct GbpArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    regions: PathBuf,
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    #[arg(long, default_value_t = 10_000)]
    max_iters: usize,
    #[arg(long, default_value_t = 0.0)]
    damping: f64,
    /// Update edges in place, parents before children, instead of the
    /// default synchronous sweep.
    #[arg(long)]
    sequential: bool,
    /// Output JSON (messages and beliefs).
    #[arg(long, short)]
    out: PathBuf,
    /// Optional per-iteration residual CSV.
    #[arg(long)]
    residuals: Option<PathBuf>,
}

#[derive(Args)]
struct SgbpArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    regions: PathBuf,
    /// Step schedule: paper, msbound, hp, or `custom:a=<num>,b=<offset>`.
    #[arg(long, default_value = "paper")]
    schedule: String,
    /// Mean-square schedule numerator (1 < alpha < 2).
    #[arg(long, default_value_t = 1.5)]
    alpha: f64,
    /// Contraction margin for the msbound/hp schedules.
    #[arg(long, default_value_t = 1.0)]
    nu: f64,
    #[arg(long, default_value_t = 10_000)]
    iters: usize,
    /// Number of runs to average (seeds are derived from --seed).
    #[arg(long, default_value_t = 1)]
    seeds: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Converged fixed-point JSON (a `gbp --out` file) for error tracking.
    #[arg(long)]
    reference: Option<PathBuf>,
    /// Record the gauge-invariant belief error every N iterations
    /// (0 disables).
    #[arg(long, default_value_t = 1)]
    belief_every: usize,
    /// Output trace CSV.
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct ExactArgs {
    #[arg(long)]
    model: PathBuf,
    /// Variable subsets, e.g. "0;1;0,1". Defaults to all singletons.
    #[arg(long)]
    subsets: Option<String>,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct ReproduceArgs {
    #[arg(long, short)]
    out_dir: PathBuf,
    #[arg(long, default_value = "4,8,16,32", value_delimiter = ',')]
    alphabets: Vec<usize>,
    #[arg(long, default_value_t = 10_000)]
    iters: usize,
    #[arg(long, default_value_t = 20)]
    seeds: usize,
    #[arg(long, default_value_t = 3)]
    rows: usize,
    #[arg(long, default_value_t = 3)]
    cols: usize,
    #[arg(long, default_value_t = 0.1)]
    gamma: f64,
    #[arg(long, default_value_t = 0.1)]
    mu: f64,
    #[arg(long, default_value_t = 0.1)]
    sigma: f64,
    #[arg(long, default_value_t = 7)]
    model_seed: u64,
    #[arg(long, default_value_t = 123)]
    run_seed: u64,
}

#[derive(Serialize, Deserialize)]
struct BeliefDto {
    region: String,
    variables: Vec<usize>,
    values: Vec<f64>,
}

/// On-disk result of a fixed-point run; also the reference format the
/// stochastic engine consumes.
#[derive(Serialize, Deserialize)]
struct GbpOutputFile {
    converged: bool,
    iterations: usize,
    residual: Option<f64>,
    messages: Vec<MessageDto>,
    beliefs: Vec<BeliefDto>,
}

#[derive(Serialize)]
struct MarginalsFile {
    partition_function: f64,
    marginals: Vec<SubsetMarginal>,
}

#[derive(Serialize)]
struct SubsetMarginal {
    variables: Vec<usize>,
    values: Vec<f64>,
}

fn load_model(path: &Path) -> Result<Model> {
    let text = std::fs::read_to_string(path)?;
    build_model(ModelSpec::from_json(&text)?)
}

fn load_graph(path: &Path, model: &Model) -> Result<RegionGraph> {
    let text = std::fs::read_to_string(path)?;
    build_region_graph(&RegionGraphSpec::from_json(&text)?, model)
}

fn write_text(path: &Path, content: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    std::fs::write(path, content)?;
    Ok(())
}

fn parse_schedule(spec: &str, alpha: f64, nu: f64) -> Result<StepSchedule> {
    let schedule = match spec {
        "paper" => StepSchedule::Paper,
        "msbound" => StepSchedule::MeanSquareBound { alpha, nu },
        "hp" => StepSchedule::HighProbability { nu },
        custom if custom.starts_with("custom:") => {
            let body = &custom["custom:".len()..];
            let mut numerator = None;
            let mut offset = None;
            for part in body.split(',') {
                match part.split_once('=') {
                    Some(("a", v)) => {
                        numerator =
                            Some(v.parse::<f64>().map_err(|e| Error::Config(e.to_string()))?)
                    }
                    Some(("b", v)) => {
                        offset =
                            Some(v.parse::<f64>().map_err(|e| Error::Config(e.to_string()))?)
                    }
                    _ => {
                        return Err(Error::Config(format!(
                            "unrecognized custom schedule part {part:?}; expected custom:a=<num>,b=<offset>"
                        )))
                    }
                }
            }
            StepSchedule::Custom {
                numerator: numerator
                    .ok_or_else(|| Error::Config("custom schedule needs a=<num>".into()))?,
                offset: offset
                    .ok_or_else(|| Error::Config("custom schedule needs b=<offset>".into()))?,
            }
        }
        other => {
            return Err(Error::Config(format!(
                "unknown schedule {other:?}; expected paper, msbound, hp or custom:a=..,b=.."
            )))
        }
    };
    schedule.validate()?;
    Ok(schedule)
}

fn gbp_output(
    graph: &RegionGraph,
    model: &Model,
    run: &sgbp_core::gbp::GbpRun,
) -> Result<GbpOutputFile> {
    let beliefs = (0..graph.regions().len())
        .map(|r| {
            let belief = compute_belief(graph, model, &run.messages, r)?;
            Ok(BeliefDto {
                region: graph.region(r).id.clone(),
                variables: belief.table.scope().to_vec(),
                values: belief.table.values().to_vec(),
            })
        })
        .collect::<Result<_>>()?;
    Ok(GbpOutputFile {
        converged: run.converged,
        iterations: run.iterations,
        residual: run.residuals.last().copied(),
        messages: messages_to_dtos(graph, &run.messages),
        beliefs,
    })
}

fn load_reference(path: &Path, graph: &RegionGraph, arity: usize) -> Result<MessageSet> {
    let text = std::fs::read_to_string(path)?;
    let file: GbpOutputFile = serde_json::from_str(&text)?;
    messages_from_dtos(graph, arity, &file.messages)
}

fn cmd_potts(args: &PottsArgs) -> Result<()> {
    let params = PottsParams {
        grid_rows: args.rows,
        grid_cols: args.cols,
        gamma: args.gamma,
        mu: args.mu,
        sigma: args.sigma,
        seed: args.seed,
    };
    let spec = make_potts(params, args.alphabet)?;
    build_model(spec.clone())?;
    write_text(&args.out, &spec.to_json()?)?;
    eprintln!(
        "wrote {} ({} variables, {} factors)",
        args.out.display(),
        spec.num_variables,
        spec.factors.len()
    );
    Ok(())
}

fn cmd_regions_grid(args: &RegionsGridArgs) -> Result<()> {
    let model = load_model(&args.model)?;
    let spec = grid_cluster_regions(&model, args.rows, args.cols)?;
    build_region_graph(&spec, &model)?;
    write_text(&args.out, &spec.to_json()?)?;
    eprintln!(
        "wrote {} ({} regions, {} edges)",
        args.out.display(),
        spec.regions.len(),
        spec.edges.len()
    );
    Ok(())
}

fn cmd_analyze(args: &AnalyzeArgs) -> Result<()> {
    let model = load_model(&args.model)?;
    let graph = load_graph(&args.regions, &model)?;
    let metas = analyze_graph(&graph, &model)?;
    let report = analysis_report(&graph, &metas);
    if args.json {
        println!("{}", report.to_json()?);
    } else {
        print!("{}", report.render());
    }
    Ok(())
}

fn cmd_gbp(args: &GbpArgs) -> Result<()> {
    let model = load_model(&args.model)?;
    let graph = load_graph(&args.regions, &model)?;
    let metas = analyze_graph(&graph, &model)?;
    let arity = model.alphabet_size();
    let options = GbpOptions {
        tol: args.tol,
        max_iters: args.max_iters,
        damping: args.damping,
        order: if args.sequential {
            UpdateOrder::TopDownSequential
        } else {
            UpdateOrder::Synchronous
        },
    };
    let init = MessageSet::uniform(&graph, arity)?;
    let run = run_to_fixed_point(&graph, &metas, init, arity, &options)?;
    let output = gbp_output(&graph, &model, &run)?;
    write_text(&args.out, &serde_json::to_string_pretty(&output)?)?;
    if let Some(path) = &args.residuals {
        let mut csv = String::from("iter,residual_l2\n");
        for (i, r) in run.residuals.iter().enumerate() {
            csv.push_str(&format!("{},{}\n", i + 1, r));
        }
        write_text(path, &csv)?;
    }
    eprintln!(
        "converged={} after {} iterations (residual {:?})",
        run.converged,
        run.iterations,
        run.residuals.last()
    );
    Ok(())
}

fn cmd_sgbp(args: &SgbpArgs) -> Result<()> {
    let model = load_model(&args.model)?;
    let graph = load_graph(&args.regions, &model)?;
    let metas = analyze_graph(&graph, &model)?;
    let arity = model.alphabet_size();
    let schedule = parse_schedule(&args.schedule, args.alpha, args.nu)?;
    let reference = args
        .reference
        .as_ref()
        .map(|p| load_reference(p, &graph, arity))
        .transpose()?;
    let belief_reference = reference
        .as_ref()
        .map(|m| BeliefReference::new(&graph, &model, m))
        .transpose()?;
    if args.seeds == 0 {
        return Err(Error::Config("--seeds must be at least 1".into()));
    }
    let traces = run_ensemble(
        &graph,
        &metas,
        arity,
        schedule,
        args.iters,
        args.belief_every,
        args.seed,
        args.seeds,
        reference.as_ref(),
        belief_reference.as_ref(),
    )?;
    let csv = if traces.len() == 1 {
        traces[0].to_csv(true)
    } else {
        mean_trace(&traces)?.to_csv(true)
    };
    write_text(&args.out, &csv)?;
    eprintln!("wrote {} ({} run(s), {} iterations)", args.out.display(), traces.len(), args.iters);
    Ok(())
}

/// Runs the seed ensemble, fanning runs out over worker threads. Each
/// run is a pure function of its derived seed, so the fan-out cannot
/// change results.
#[allow(clippy::too_many_arguments)]
fn run_ensemble(
    graph: &RegionGraph,
    metas: &[EdgeMetadata],
    arity: usize,
    schedule: StepSchedule,
    iterations: usize,
    belief_every: usize,
    base_seed: u64,
    seeds: usize,
    reference: Option<&MessageSet>,
    belief_reference: Option<&BeliefReference>,
) -> Result<Vec<RunTrace>> {
    let one = |i: u64| {
        let options = SgbpOptions {
            schedule,
            iterations,
            seed: if seeds == 1 { base_seed } else { rng::mix(&[base_seed, i]) },
            belief_every,
        };
        sgbp_run(graph, metas, arity, &options, reference, belief_reference)
    };
    let workers = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1).min(seeds);
    if workers <= 1 {
        return (0..seeds as u64).map(one).collect();
    }
    let mut slots: Vec<Option<Result<RunTrace>>> = (0..seeds).map(|_| None).collect();
    std::thread::scope(|scope| {
        let mut chunks: Vec<&mut [Option<Result<RunTrace>>]> = Vec::new();
        let mut rest = slots.as_mut_slice();
        let per = seeds.div_ceil(workers);
        while !rest.is_empty() {
            let take = per.min(rest.len());
            let (head, tail) = rest.split_at_mut(take);
            chunks.push(head);
            rest = tail;
        }
        let mut start = 0usize;
        for chunk in chunks {
            let offset = start;
            start += chunk.len();
            scope.spawn(move || {
                for (j, slot) in chunk.iter_mut().enumerate() {
                    *slot = Some(one((offset + j) as u64));
                }
            });
        }
    });
    slots.into_iter().map(|s| s.expect("worker filled every slot")).collect()
}

fn parse_subsets(spec: &str) -> Result<Vec<Vec<usize>>> {
    spec.split(';')
        .filter(|s| !s.trim().is_empty())
        .map(|group| {
            group
                .split(',')
                .map(|v| {
                    v.trim()
                        .parse::<usize>()
                        .map_err(|e| Error::Config(format!("bad subset index {v:?}: {e}")))
                })
                .collect()
        })
        .collect()
}

fn cmd_exact(args: &ExactArgs) -> Result<()> {
    let model = load_model(&args.model)?;
    let subsets = match &args.subsets {
        Some(spec) => parse_subsets(spec)?,
        None => (0..model.num_variables()).map(|v| vec![v]).collect(),
    };
    let result = exact_marginals(&model, &subsets)?;
    let file = MarginalsFile {
        partition_function: result.partition_function,
        marginals: subsets
            .iter()
            .zip(&result.marginals)
            .map(|(vars, table)| SubsetMarginal {
                variables: vars.clone(),
                values: table.values().to_vec(),
            })
            .collect(),
    };
    write_text(&args.out, &serde_json::to_string_pretty(&file)?)?;
    eprintln!("wrote {} (Z = {})", args.out.display(), result.partition_function);
    Ok(())
}

/// Log-spaced subsample of the finite points of a per-iteration series.
fn thin_curve(values: &[f64]) -> Vec<(f64, f64)> {
    let mut points = Vec::new();
    let mut next = 1.0f64;
    for (i, v) in values.iter().enumerate() {
        let t = (i + 1) as f64;
        if v.is_finite() && *v > 0.0 && t >= next {
            points.push((t, *v));
            next = (t * 1.1).max(t + 1.0);
        }
    }
    points
}

fn cmd_reproduce(args: &ReproduceArgs) -> Result<()> {
    std::fs::create_dir_all(&args.out_dir)?;
    let mut curves = Vec::new();

    for &d in &args.alphabets {
        eprintln!("alphabet d = {d}");
        let params = PottsParams {
            grid_rows: args.rows,
            grid_cols: args.cols,
            gamma: args.gamma,
            mu: args.mu,
            sigma: args.sigma,
            seed: args.model_seed,
        };
        let spec = make_potts(params, d)?;
        write_text(&args.out_dir.join(format!("model_d{d}.json")), &spec.to_json()?)?;
        let model = build_model(spec)?;
        let region_spec = grid_cluster_regions(&model, args.rows, args.cols)?;
        write_text(&args.out_dir.join(format!("regions_d{d}.json")), &region_spec.to_json()?)?;
        let graph = build_region_graph(&region_spec, &model)?;
        let metas = analyze_graph(&graph, &model)?;
        write_text(
            &args.out_dir.join(format!("analyze_d{d}.txt")),
            &analysis_report(&graph, &metas).render(),
        )?;

        // Reference fixed point. The undamped synchronous update
        // oscillates on this family, so the reference run is damped;
        // damping leaves the fixed-point set unchanged.
        let run = run_to_fixed_point(
            &graph,
            &metas,
            MessageSet::uniform(&graph, d)?,
            d,
            &GbpOptions {
                tol: 1e-12,
                max_iters: 50_000,
                damping: 0.7,
                order: UpdateOrder::Synchronous,
            },
        )?;
        if !run.converged {
            return Err(Error::Numeric(format!(
                "reference fixed point did not converge at d = {d}"
            )));
        }
        eprintln!("  fixed point after {} damped iterations", run.iterations);
        // Reference file: keep every message but drop belief tables too
        // large to be useful on disk (recomputable from the messages).
        let mut reference_file = gbp_output(&graph, &model, &run)?;
        reference_file.beliefs.retain(|b| b.values.len() <= 4096);
        write_text(
            &args.out_dir.join(format!("reference_d{d}.json")),
            &serde_json::to_string_pretty(&reference_file)?,
        )?;
        let beliefs = BeliefReference::new(&graph, &model, &run.messages)?;

        let belief_every = (d / 4).max(1).pow(2);
        let t0 = std::time::Instant::now();
        let traces = run_ensemble(
            &graph,
            &metas,
            d,
            StepSchedule::Paper,
            args.iters,
            belief_every,
            args.run_seed,
            args.seeds,
            Some(&run.messages),
            Some(&beliefs),
        )?;
        eprintln!("  {} stochastic runs in {:?}", args.seeds, t0.elapsed());
        let mean = mean_trace(&traces)?;
        write_text(&args.out_dir.join(format!("delta_d{d}.csv")), &mean.to_csv(true))?;
        curves.push(svg::Curve { label: format!("d={d}"), points: thin_curve(&mean.delta_beliefs) });
    }

    write_text(
        &args.out_dir.join("convergence.svg"),
        &svg::loglog_plot(
            "Stochastic engine: belief error vs iterations",
            "iteration",
            "normalized squared belief error",
            &curves,
        ),
    )?;

    // Wall-clock comparison at the first alphabet: time for each engine
    // to push the belief error under a series of targets.
    let d = args.alphabets[0];
    let params = PottsParams {
        grid_rows: args.rows,
        grid_cols: args.cols,
        gamma: args.gamma,
        mu: args.mu,
        sigma: args.sigma,
        seed: args.model_seed,
    };
    let model = build_model(make_potts(params, d)?)?;
    let region_spec = grid_cluster_regions(&model, args.rows, args.cols)?;
    let graph = build_region_graph(&region_spec, &model)?;
    let metas = analyze_graph(&graph, &model)?;
    let reference = run_to_fixed_point(
        &graph,
        &metas,
        MessageSet::uniform(&graph, d)?,
        d,
        &GbpOptions { tol: 1e-12, max_iters: 50_000, damping: 0.7, order: UpdateOrder::Synchronous },
    )?;
    let beliefs = BeliefReference::new(&graph, &model, &reference.messages)?;

    // Deterministic engine timing.
    let mut gbp_curve = Vec::new();
    {
        let start = std::time::Instant::now();
        let mut messages = MessageSet::uniform(&graph, d)?;
        for iter in 1..=2000usize {
            let (next, _) = sgbp_core::gbp::gbp_iterate(
                &graph,
                &metas,
                &messages,
                d,
                UpdateOrder::Synchronous,
                0.7,
            )?;
            messages = next;
            gbp_curve.push((iter, start.elapsed().as_nanos(), beliefs.error(&graph, &messages)?));
            if gbp_curve.last().unwrap().2 < 1e-13 {
                break;
            }
        }
    }
    // Stochastic engine timing (single run).
    let options = SgbpOptions {
        schedule: StepSchedule::Paper,
        iterations: args.iters,
        seed: args.run_seed,
        belief_every: 1,
    };
    let trace = sgbp_run(&graph, &metas, d, &options, None, Some(&beliefs))?;

    let mut csv = String::from(
        "target,gbp_iters,gbp_wallclock_ns,sgbp_iters,sgbp_wallclock_ns\n",
    );
    for exp in 1..=10 {
        let target = 10f64.powi(-exp);
        let gbp_hit = gbp_curve.iter().find(|(_, _, e)| *e <= target);
        let sgbp_hit = trace
            .records
            .iter()
            .find(|r| r.delta_beliefs.map(|e| e <= target).unwrap_or(false));
        csv.push_str(&format!(
            "{target},{},{},{},{}\n",
            gbp_hit.map(|(i, _, _)| i.to_string()).unwrap_or_default(),
            gbp_hit.map(|(_, w, _)| w.to_string()).unwrap_or_default(),
            sgbp_hit.map(|r| r.iteration.to_string()).unwrap_or_default(),
            sgbp_hit.map(|r| r.wall_ns.to_string()).unwrap_or_default(),
        ));
    }
    write_text(&args.out_dir.join("runtime.csv"), &csv)?;
    eprintln!("study written to {}", args.out_dir.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Potts(args) => cmd_potts(&args),
        Command::RegionsGrid(args) => cmd_regions_grid(&args),
        Command::Analyze(args) => cmd_analyze(&args),
        Command::Gbp(args) => cmd_gbp(&args),
        Command::Sgbp(args) => cmd_sgbp(&args),
        Command::Exact(args) => cmd_exact(&args),
        Command::Reproduce(args) => cmd_reproduce(&args),
    }
}

fn error_kind(err: &Error) -> &'static str {
    match err {
        Error::InvalidModel(_) => "invalid_model",
        Error::InvalidRegionGraph(_) => "invalid_region_graph",
        Error::Numeric(_) => "numeric",
        Error::SizeGuard(_) => "size_guard",
        Error::Config(_) => "config",
        Error::Io(_) => "io",
        Error::Json(_) => "json",
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let payload = serde_json::json!({
                "error": err.to_string(),
                "kind": error_kind(&err),
            });
            eprintln!("{payload}");
            ExitCode::FAILURE
        }
    }
}

mod config;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use evacsim_core::digest::{digest_json, sha256_hex};
use evacsim_core::dynamics::Recording;
use evacsim_core::metrics::{
    decision_heatmap, degree_contribution, final_rate, switch_counts_by_degree, write_contribution,
    write_heatmap, write_rate_series, write_switch_counts, RateSeries,
};
use evacsim_core::network::{
    generate_from_histogram, generate_small_world, load_edge_list, save_edge_list, DegreeHistogram, DegreeRank,
    Graph, RankOrder,
};
use evacsim_core::scenario::ScenarioVariant;
use evacsim_core::store::save_trajectory;
use evacsim_core::sweep::{
    cell_seed, graph_digest, run_scenario, run_sweep, write_aggregates, write_summary, Preset, SweepConfig,
    SweepGrid, SweepOptions, SweepResult,
};
use evacsim_core::{Error, Result};
use serde::Serialize;

use crate::config::FileConfig;

#[derive(Parser)]
#[command(name = "evacsim", version, about = "Evacuation decision dynamics on social networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate or inspect networks.
    #[command(subcommand)]
    Net(NetCommand),
    /// Simulate one scenario.
    Run(RunArgs),
    /// Parameter sweeps and the reference tables and figures.
    #[command(subcommand)]
    Sweep(SweepCommand),
}

#[derive(Subcommand)]
enum NetCommand {
    /// Ring lattice with random rewiring.
    GenWs {
        #[arg(long, default_value_t = 5000)]
        n: usize,
        #[arg(long, default_value_t = 4)]
        k: usize,
        #[arg(long, default_value_t = 0.3)]
        p: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Configuration model over a degree histogram.
    GenHist {
        /// Use the reference 5000-node histogram.
        #[arg(long, conflicts_with = "hist")]
        paper: bool,
        /// Histogram as `degree:count,...`, e.g. `3:10,2:20`.
        #[arg(long)]
        hist: Option<DegreeHistogram>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Print the degree histogram and class boundaries as CSV.
    Stats { path: PathBuf },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Emit {
    Heatmap,
    Switches,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Priority fraction: `0.57`, `57` or `57%`.
    #[arg(long, value_parser = parse_gamma)]
    gamma: Option<f64>,
    #[arg(long)]
    variant: Option<ScenarioVariant>,
    #[arg(long, allow_negative_numbers = true)]
    theta: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    timesteps: Option<usize>,
    /// Extra outputs; repeatable.
    #[arg(long, value_enum)]
    emit: Vec<Emit>,
    /// Keep every n-th timestep in the heatmap.
    #[arg(long, default_value_t = 1)]
    heatmap_stride: usize,
    #[arg(short, long, default_value = "run-out")]
    output: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    timesteps: Option<usize>,
    /// Worker threads; 0 uses every CPU.
    #[arg(long, env = "EVACSIM_WORKERS", default_value_t = 0)]
    workers: usize,
    /// Continue from an existing results file in the output directory.
    #[arg(long)]
    resume: bool,
    #[arg(short, long, default_value = "sweep-out")]
    output: PathBuf,
}

#[derive(Subcommand)]
enum SweepCommand {
    /// Grid from the `[sweep]` section of the config.
    Run(SweepArgs),
    /// Contribution table, randomised highest-degree-first.
    Table5(SweepArgs),
    /// Contribution table, randomised lowest-degree-first.
    Table6(SweepArgs),
    /// Rate curves, highest-degree-first variants.
    Fig2(SweepArgs),
    /// Rate curves, lowest-degree-first variants.
    Fig3(SweepArgs),
}

fn parse_gamma(s: &str) -> std::result::Result<f64, String> {
    let (number, percent) = match s.strip_suffix('%') {
        Some(n) => (n, true),
        None => (s, false),
    };
    let v: f64 = number.trim().parse().map_err(|e| format!("`{s}`: {e}"))?;
    let v = if percent || v > 1.0 { v / 100.0 } else { v };
    if !(0.0..=1.0).contains(&v) {
        return Err(format!("`{s}` is not a fraction in [0, 1] or a percentage in [0, 100]"));
    }
    Ok(v)
}

#[derive(Serialize)]
struct OutputFile {
    path: String,
    sha256: String,
}

#[derive(Serialize)]
struct GraphInfo {
    source: String,
    seed: u64,
    nodes: usize,
    edges: usize,
    digest: String,
}

#[derive(Serialize)]
struct Manifest<T: Serialize> {
    tool: &'static str,
    version: &'static str,
    command: String,
    config_digest: String,
    graph: GraphInfo,
    inputs: T,
    outputs: Vec<OutputFile>,
}

fn write_manifest<T: Serialize>(dir: &Path, name: &str, command: String, graph: GraphInfo, inputs: T, outputs: &[PathBuf]) -> Result<()> {
    #[derive(Serialize)]
    struct DigestInput<'a, T: Serialize> {
        graph: &'a str,
        inputs: &'a T,
    }
    let config_digest = digest_json(&DigestInput {
        graph: &graph.digest,
        inputs: &inputs,
    });
    let mut files = Vec::with_capacity(outputs.len());
    for p in outputs {
        let bytes = fs::read(p).map_err(|e| Error::Io {
            path: p.clone(),
            source: e,
        })?;
        files.push(OutputFile {
            path: p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default(),
            sha256: sha256_hex(&bytes),
        });
    }
    let manifest = Manifest {
        tool: "evacsim",
        version: env!("CARGO_PKG_VERSION"),
        command,
        config_digest,
        graph,
        inputs,
        outputs: files,
    };
    let path = dir.join(name);
    let mut json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    json.push('\n');
    fs::write(&path, json).map_err(|e| Error::Io { path, source: e })
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })
}

fn load_config(path: Option<&Path>) -> Result<FileConfig> {
    match path {
        Some(p) => FileConfig::load(p),
        None => Ok(FileConfig::default()),
    }
}

fn graph_info(config: &FileConfig, graph: &Graph) -> GraphInfo {
    let source = match config.network.source {
        config::NetworkSource::File => format!(
            "file:{}",
            config.network.path.as_deref().map(|p| p.display().to_string()).unwrap_or_default()
        ),
        config::NetworkSource::SmallWorld => format!(
            "small-world n={} k={} p={}",
            config.network.nodes, config.network.k, config.network.rewire_prob
        ),
        config::NetworkSource::Histogram => match &config.network.histogram {
            Some(h) => format!("histogram {h}"),
            None => format!("histogram {}", DegreeHistogram::reference()),
        },
    };
    GraphInfo {
        source,
        seed: config.seed,
        nodes: graph.node_count(),
        edges: graph.edge_count(),
        digest: graph_digest(graph),
    }
}

fn cmd_net(cmd: NetCommand) -> Result<()> {
    match cmd {
        NetCommand::GenWs { n, k, p, seed, output } => {
            let g = generate_small_world(n, k, p, seed)?;
            save_edge_list(&g, &output)?;
            eprintln!("wrote {} ({} nodes, {} edges)", output.display(), n, g.edge_count());
            Ok(())
        }
        NetCommand::GenHist {
            paper,
            hist,
            seed,
            output,
        } => {
            let hist = match (paper, hist) {
                (_, Some(h)) => h,
                (true, None) => DegreeHistogram::reference(),
                (false, None) => return Err(Error::Config("give --paper or --hist".into())),
            };
            let g = generate_from_histogram(&hist, seed)?;
            save_edge_list(&g, &output)?;
            eprintln!(
                "wrote {} ({} nodes, {} edges)",
                output.display(),
                g.node_count(),
                g.edge_count()
            );
            Ok(())
        }
        NetCommand::Stats { path } => {
            let g = load_edge_list(&path)?;
            let n = g.node_count() as f64;
            let lowest = DegreeRank::new(&g, RankOrder::LowestFirst, 0);
            let highest = DegreeRank::new(&g, RankOrder::HighestFirst, 0);
            let stdout = std::io::stdout();
            let mut out = stdout.lock();
            let mut emit = || -> std::io::Result<()> {
                writeln!(out, "degree,count,population_pct,cumulative_highest_pct,cumulative_lowest_pct")?;
                for class in highest.classes() {
                    let low = lowest
                        .classes()
                        .iter()
                        .find(|c| c.degree == class.degree)
                        .expect("same degree classes");
                    let pct = |x: usize| (x as f64 / n * 1e6).round() / 1e4;
                    writeln!(
                        out,
                        "{},{},{},{},{}",
                        class.degree,
                        class.count,
                        pct(class.count),
                        pct(class.cumulative),
                        pct(low.cumulative)
                    )?;
                }
                out.flush()
            };
            emit().map_err(|e| Error::Io {
                path: PathBuf::from("<stdout>"),
                source: e,
            })
        }
    }
}

#[derive(Serialize)]
struct RunInputs {
    master_seed: u64,
    run_seed: u64,
    variant: ScenarioVariant,
    theta: f64,
    gamma: f64,
    config: SweepConfig,
}

fn cmd_run(args: RunArgs) -> Result<()> {
    let mut config = load_config(args.config.as_deref())?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(g) = args.gamma {
        config.scenario.gamma = g;
    }
    if let Some(v) = args.variant {
        config.scenario.variant = v;
    }
    if let Some(t) = args.theta {
        config.payoff.theta = t;
    }
    if let Some(t) = args.timesteps {
        config.dynamics.timesteps = t;
        config.dynamics.window = config.dynamics.window.min(t);
    }
    let graph = config.network.build(config.seed)?;
    let sweep_config = config.sweep_config();
    let variant = config.scenario.variant;
    let theta = config.payoff.theta;
    let gamma = config.scenario.gamma;
    let run_seed = cell_seed(config.seed, variant, theta, gamma, 0);
    let traj = run_scenario(&graph, variant, theta, gamma, run_seed, &sweep_config, Recording::Decisions)?;

    create_dir(&args.output)?;
    let mut outputs = Vec::new();
    let traj_path = args.output.join("trajectory.bin");
    save_trajectory(&traj_path, &traj)?;
    outputs.push(traj_path);
    let rates = RateSeries::from_trajectory(&traj);
    let rates_path = args.output.join("rates.csv");
    write_rate_series(&rates_path, &rates)?;
    outputs.push(rates_path);
    if args.emit.contains(&Emit::Heatmap) {
        let rank = DegreeRank::new(&graph, RankOrder::HighestFirst, run_seed);
        let heatmap = decision_heatmap(&traj, &graph, &rank, args.heatmap_stride)?;
        let path = args.output.join("heatmap.csv");
        write_heatmap(&path, &heatmap)?;
        outputs.push(path);
    }
    if args.emit.contains(&Emit::Switches) {
        let counts = switch_counts_by_degree(&traj, &graph)?;
        let path = args.output.join("switches.csv");
        write_switch_counts(&path, &counts)?;
        outputs.push(path);
    }
    let window = sweep_config.window;
    let final_value = final_rate(rates.as_slice(), window)?;
    let inputs = RunInputs {
        master_seed: config.seed,
        run_seed,
        variant,
        theta,
        gamma,
        config: sweep_config,
    };
    write_manifest(&args.output, "manifest.json", "run".into(), graph_info(&config, &graph), inputs, &outputs)?;
    println!("final_rate,{final_value}");
    Ok(())
}

#[derive(Serialize)]
struct SweepInputs<'a> {
    grid: &'a SweepGrid,
    config: &'a SweepConfig,
}

fn execute_sweep(args: &SweepArgs, preset: Option<Preset>) -> Result<(FileConfig, Graph, SweepGrid, SweepResult, Vec<PathBuf>)> {
    let mut config = load_config(args.config.as_deref())?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(t) = args.timesteps {
        config.dynamics.timesteps = t;
        config.dynamics.window = config.dynamics.window.min(t);
    }
    let graph = config.network.build(config.seed)?;
    let mut grid = match preset {
        Some(p) => p.grid(&graph, config.seed),
        None => config.sweep_grid(&graph)?,
    };
    if let Some(runs) = args.runs {
        grid.runs = runs;
    }
    let sweep_config = config.sweep_config();
    create_dir(&args.output)?;
    let results = args.output.join("results.csv");
    let options = SweepOptions {
        workers: args.workers,
        results: Some(results.clone()),
        resume: args.resume,
    };
    let result = run_sweep(&graph, &grid, &sweep_config, &options)?;
    let summary = args.output.join("summary.json");
    write_summary(&summary, &grid, &sweep_config, &result)?;
    Ok((config, graph, grid, result, vec![results, summary]))
}

fn cmd_sweep(cmd: SweepCommand) -> Result<()> {
    let (args, preset, name) = match cmd {
        SweepCommand::Run(a) => (a, None, "sweep run"),
        SweepCommand::Table5(a) => (a, Some(Preset::Table5), "sweep table5"),
        SweepCommand::Table6(a) => (a, Some(Preset::Table6), "sweep table6"),
        SweepCommand::Fig2(a) => (a, Some(Preset::Fig2), "sweep fig2"),
        SweepCommand::Fig3(a) => (a, Some(Preset::Fig3), "sweep fig3"),
    };
    let (config, graph, grid, result, mut outputs) = execute_sweep(&args, preset)?;
    let aggregates = match preset {
        Some(Preset::Fig2) => "fig2.csv",
        Some(Preset::Fig3) => "fig3.csv",
        _ => "aggregates.csv",
    };
    let aggregates = args.output.join(aggregates);
    write_aggregates(&aggregates, &result)?;
    outputs.push(aggregates);
    if let Some(p @ (Preset::Table5 | Preset::Table6)) = preset {
        let rank = DegreeRank::new(&graph, p.rank_order(), 0);
        let table = degree_contribution(&result.lookup(p.variants()[0]), &grid.thetas, &rank)?;
        let path = args.output.join(if p == Preset::Table5 { "table5.csv" } else { "table6.csv" });
        write_contribution(&path, &table)?;
        outputs.push(path);
    }
    let sweep_config = config.sweep_config();
    let inputs = SweepInputs {
        grid: &grid,
        config: &sweep_config,
    };
    write_manifest(&args.output, "manifest.json", name.into(), graph_info(&config, &graph), inputs, &outputs)?;
    eprintln!(
        "{} cells, {} runs; outputs in {}",
        result.aggregates.len(),
        result.records.len(),
        args.output.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Net(c) => cmd_net(c),
        Command::Run(a) => cmd_run(a),
        Command::Sweep(c) => cmd_sweep(c),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_usage() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

//! Parameter sweeps over scenario × θ × γ × repeat.
//!
//! Every cell draws its randomness from a seed derived from the master seed and
//! the cell's own coordinates, so a cell's result never depends on which other
//! cells exist or on the order they run in.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::digest::{digest_json, sha256_hex};
use crate::dynamics::{run_with_pins, FocalSide, NeighborSampling, Recording, SimulationConfig, Trajectory};
use crate::error::{Error, Result};
use crate::metrics::{aggregate_runs, final_rate, GridKey, RateLookup, DEFAULT_WINDOW};
use crate::network::{DegreeRank, Graph, RankOrder};
use crate::payoff::{PayoffMatrix, PayoffMode, PayoffParams};
use crate::rng::derive_seed;
use crate::scenario::{initialize_decisions, priority_mask, ScenarioSpec, ScenarioVariant};

/// Incentive levels swept by default.
pub const DEFAULT_THETAS: [f64; 4] = [-0.1, 0.0, 0.1, 0.2];

/// Cells computed in parallel before their records are appended. Fixed so the
/// results file does not depend on the worker count.
const CHUNK: usize = 64;

const RESULTS_HEADER: [&str; 7] = ["variant", "theta", "gamma", "run", "seed", "final_rate", "digest"];

/// Everything about a run except the cell coordinates and seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub timesteps: usize,
    pub window: usize,
    pub mode: PayoffMode,
    /// θ is taken from the cell, not from here.
    pub payoff: PayoffParams,
    pub neighbor_sampling: NeighborSampling,
    pub focal_side: FocalSide,
    pub pin_priority: bool,
    pub random_stay_prob: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            timesteps: 3000,
            window: DEFAULT_WINDOW,
            mode: PayoffMode::default(),
            payoff: PayoffParams::default(),
            neighbor_sampling: NeighborSampling::default(),
            focal_side: FocalSide::default(),
            pin_priority: false,
            random_stay_prob: 0.5,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.timesteps == 0 {
            return Err(Error::config("timesteps must be at least 1"));
        }
        if self.window == 0 || self.window > self.timesteps {
            return Err(Error::config(format!(
                "window {} must be between 1 and timesteps ({})",
                self.window, self.timesteps
            )));
        }
        if !(0.0..=1.0).contains(&self.random_stay_prob) {
            return Err(Error::config("random_stay_prob outside [0, 1]"));
        }
        self.payoff.validate()
    }

    pub fn matrix(&self, theta: f64) -> Result<PayoffMatrix> {
        self.mode.matrix(&self.payoff.with_theta(theta))
    }

    /// Digest of this config, the graph and the master seed. Stored with every
    /// persisted record.
    pub fn digest(&self, graph: &Graph, master_seed: u64) -> String {
        #[derive(Serialize)]
        struct Material<'a> {
            config: &'a SweepConfig,
            graph: String,
            master_seed: u64,
        }
        digest_json(&Material {
            config: self,
            graph: graph_digest(graph),
            master_seed,
        })
    }
}

/// SHA-256 of the graph's edge-list text.
pub fn graph_digest(graph: &Graph) -> String {
    let mut text = format!("# nodes {}\n", graph.node_count());
    for (a, b) in graph.edges() {
        text.push_str(&format!("{a} {b}\n"));
    }
    sha256_hex(text.as_bytes())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepGrid {
    pub variants: Vec<ScenarioVariant>,
    pub thetas: Vec<f64>,
    pub gammas: Vec<f64>,
    pub runs: usize,
    pub seed: u64,
}

impl SweepGrid {
    /// `0, step, 2·step, …, 1`.
    pub fn gamma_range(step: f64) -> Result<Vec<f64>> {
        if !(step > 0.0 && step <= 1.0) {
            return Err(Error::config(format!("gamma step {step} must be in (0, 1]")));
        }
        let n = (1.0 / step).round() as usize;
        if (n as f64 * step - 1.0).abs() > 1e-9 {
            return Err(Error::config(format!("gamma step {step} does not divide 1")));
        }
        Ok((0..=n).map(|i| GridKey::of(i as f64 * step).value()).collect())
    }

    /// The default grid: all incentive levels, γ every 0.002, five repeats.
    pub fn standard(variants: Vec<ScenarioVariant>, seed: u64) -> Self {
        Self {
            variants,
            thetas: DEFAULT_THETAS.to_vec(),
            gammas: Self::gamma_range(0.002).expect("valid step"),
            runs: 5,
            seed,
        }
    }

    /// Adds the cumulative degree-class fractions of every ranking the
    /// variants use, so each class boundary is a grid point.
    pub fn with_thresholds(mut self, graph: &Graph) -> Self {
        let mut orders: Vec<RankOrder> = self.variants.iter().map(|v| v.rank_order()).collect();
        orders.dedup();
        for order in orders {
            self.gammas.extend(threshold_gammas(graph, order));
        }
        self.normalize();
        self
    }

    /// Snap coordinates to grid keys, then sort and deduplicate the γ axis.
    pub fn normalize(&mut self) {
        for t in &mut self.thetas {
            *t = GridKey::of(*t).value();
        }
        let mut keys: Vec<GridKey> = self.gammas.iter().map(|&g| GridKey::of(g)).collect();
        keys.sort();
        keys.dedup();
        self.gammas = keys.into_iter().map(GridKey::value).collect();
    }

    pub fn validate(&self) -> Result<()> {
        if self.variants.is_empty() || self.thetas.is_empty() || self.gammas.is_empty() {
            return Err(Error::config("sweep grid axes must be non-empty"));
        }
        if self.runs == 0 {
            return Err(Error::config("runs per cell must be at least 1"));
        }
        if let Some(g) = self.gammas.iter().find(|g| !(0.0..=1.0).contains(*g)) {
            return Err(Error::config(format!("gamma {g} outside [0, 1]")));
        }
        let mut seen = std::collections::HashSet::new();
        for t in &self.thetas {
            if !seen.insert(GridKey::of(*t)) {
                return Err(Error::config(format!("theta {t} listed twice")));
            }
        }
        Ok(())
    }

    /// Cells in grid order: variant, then θ, then γ, then repeat.
    pub fn cells(&self) -> Vec<Cell> {
        let mut cells = Vec::with_capacity(self.cell_count());
        for &variant in &self.variants {
            for &theta in &self.thetas {
                for &gamma in &self.gammas {
                    for run in 0..self.runs {
                        cells.push(Cell {
                            variant,
                            theta,
                            gamma,
                            run,
                        });
                    }
                }
            }
        }
        cells
    }

    pub fn cell_count(&self) -> usize {
        self.variants.len() * self.thetas.len() * self.gammas.len() * self.runs
    }
}

/// `γ = 0` followed by each class boundary of the ranking, ending at 1.
pub fn threshold_gammas(graph: &Graph, order: RankOrder) -> Vec<f64> {
    let rank = DegreeRank::new(graph, order, 0);
    std::iter::once(0.0)
        .chain(
            rank.classes()
                .iter()
                .map(|c| GridKey::of(c.cumulative as f64 / graph.node_count() as f64).value()),
        )
        .collect()
}

/// Coordinates of one simulation in a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub variant: ScenarioVariant,
    pub theta: f64,
    pub gamma: f64,
    pub run: usize,
}

type CellKey = (ScenarioVariant, GridKey, GridKey, usize);

impl Cell {
    fn key(&self) -> CellKey {
        (self.variant, GridKey::of(self.theta), GridKey::of(self.gamma), self.run)
    }

    pub fn seed(&self, master: u64) -> u64 {
        cell_seed(master, self.variant, self.theta, self.gamma, self.run)
    }
}

impl std::fmt::Display for Cell {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "(variant {}, theta {}, gamma {}, run {})",
            self.variant, self.theta, self.gamma, self.run
        )
    }
}

/// Seed of one cell. Tie shuffles, initial decisions and imitation draws all
/// use it on their own streams.
pub fn cell_seed(master: u64, variant: ScenarioVariant, theta: f64, gamma: f64, run: usize) -> u64 {
    derive_seed(
        master,
        &[
            variant.id(),
            GridKey::of(theta).0 as u64,
            GridKey::of(gamma).0 as u64,
            run as u64,
        ],
    )
}

/// One scenario realisation: ranking, initial decisions and dynamics, all
/// seeded by `seed`.
pub fn run_scenario(
    graph: &Graph,
    variant: ScenarioVariant,
    theta: f64,
    gamma: f64,
    seed: u64,
    config: &SweepConfig,
    recording: Recording,
) -> Result<Trajectory> {
    config.validate()?;
    let rank = DegreeRank::new(graph, variant.rank_order(), seed);
    let spec = ScenarioSpec {
        variant,
        gamma,
        random_stay_prob: config.random_stay_prob,
        seed,
    };
    let initial = initialize_decisions(graph, &rank, &spec)?;
    let sim = SimulationConfig {
        timesteps: config.timesteps,
        seed,
        matrix: config.matrix(theta)?,
        neighbor_sampling: config.neighbor_sampling,
        focal_side: config.focal_side,
        pin_priority: config.pin_priority,
        recording,
    };
    let pins = config.pin_priority.then(|| priority_mask(&rank, gamma));
    run_with_pins(graph, &initial, &sim, pins.as_deref())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub variant: ScenarioVariant,
    pub theta: f64,
    pub gamma: f64,
    pub run: usize,
    pub seed: u64,
    pub final_rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellAggregate {
    pub variant: ScenarioVariant,
    pub theta: f64,
    pub gamma: f64,
    pub mean_rate: f64,
    pub sd: f64,
    pub n_runs: usize,
}

pub fn run_cell(graph: &Graph, cell: &Cell, master: u64, config: &SweepConfig) -> Result<CellRecord> {
    let seed = cell.seed(master);
    let traj = run_scenario(graph, cell.variant, cell.theta, cell.gamma, seed, config, Recording::Counts)
        .map_err(|e| Error::Cell {
            cell: cell.to_string(),
            source: Box::new(e),
        })?;
    Ok(CellRecord {
        variant: cell.variant,
        theta: cell.theta,
        gamma: cell.gamma,
        run: cell.run,
        seed,
        final_rate: final_rate(&traj.rates(), config.window)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub config_digest: String,
    pub master_seed: u64,
    /// Grid order.
    pub records: Vec<CellRecord>,
    /// Grid order, one per (variant, θ, γ).
    pub aggregates: Vec<CellAggregate>,
}

impl SweepResult {
    fn from_records(config_digest: String, master_seed: u64, records: Vec<CellRecord>) -> Result<Self> {
        let mut aggregates = Vec::new();
        let mut i = 0;
        while i < records.len() {
            let head = records[i];
            let key = (head.variant, GridKey::of(head.theta), GridKey::of(head.gamma));
            let mut j = i;
            while j < records.len()
                && (records[j].variant, GridKey::of(records[j].theta), GridKey::of(records[j].gamma)) == key
            {
                j += 1;
            }
            let rates: Vec<f64> = records[i..j].iter().map(|r| r.final_rate).collect();
            let agg = aggregate_runs(&rates)?;
            aggregates.push(CellAggregate {
                variant: head.variant,
                theta: head.theta,
                gamma: head.gamma,
                mean_rate: agg.mean,
                sd: agg.sd,
                n_runs: agg.n_runs,
            });
            i = j;
        }
        Ok(Self {
            config_digest,
            master_seed,
            records,
            aggregates,
        })
    }

    /// Mean final rates of one variant keyed by (θ, γ).
    pub fn lookup(&self, variant: ScenarioVariant) -> RateLookup {
        let mut table = RateLookup::new();
        for a in self.aggregates.iter().filter(|a| a.variant == variant) {
            table.insert(a.theta, a.gamma, a.mean_rate);
        }
        table
    }
}

#[derive(Debug, Clone, Default)]
pub struct SweepOptions {
    /// Worker threads; 0 picks one per CPU.
    pub workers: usize,
    /// Append-only per-run results file.
    pub results: Option<PathBuf>,
    /// Keep records already in `results` and only run the missing cells.
    pub resume: bool,
}

/// Run every cell of `grid`. Records come back in grid order whatever the
/// worker count, and the results file, if any, is byte-identical too.
pub fn run_sweep(graph: &Graph, grid: &SweepGrid, config: &SweepConfig, options: &SweepOptions) -> Result<SweepResult> {
    grid.validate()?;
    config.validate()?;
    let digest = config.digest(graph, grid.seed);
    let cells = grid.cells();

    let mut done: HashMap<CellKey, CellRecord> = HashMap::new();
    let mut sink = None;
    if let Some(path) = &options.results {
        if options.resume && path.exists() {
            for record in read_results(path, &digest)? {
                let cell = Cell {
                    variant: record.variant,
                    theta: record.theta,
                    gamma: record.gamma,
                    run: record.run,
                };
                if record.seed != cell.seed(grid.seed) {
                    return Err(Error::DigestMismatch {
                        path: path.clone(),
                        expected: cell.seed(grid.seed).to_string(),
                        found: record.seed.to_string(),
                    });
                }
                done.insert(cell.key(), record);
            }
        } else {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(RESULTS_HEADER).expect("in-memory write");
            let header = w.into_inner().expect("in-memory write");
            fs::write(path, header).map_err(|e| Error::io(path, e))?;
        }
        let file = OpenOptions::new()
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        sink = Some((path.clone(), file));
    }

    let pending: Vec<Cell> = cells.iter().filter(|c| !done.contains_key(&c.key())).copied().collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.workers)
        .build()
        .map_err(|e| Error::config(format!("cannot start worker pool: {e}")))?;
    for chunk in pending.chunks(CHUNK) {
        let records: Vec<CellRecord> = pool.install(|| {
            chunk
                .par_iter()
                .map(|cell| run_cell(graph, cell, grid.seed, config))
                .collect::<Result<_>>()
        })?;
        if let Some((path, file)) = sink.as_mut() {
            let mut w = csv::Writer::from_writer(Vec::new());
            for r in &records {
                w.write_record(result_row(r, &digest)).expect("in-memory write");
            }
            let bytes = w.into_inner().expect("in-memory write");
            file.write_all(&bytes)
                .and_then(|_| file.flush())
                .map_err(|e| Error::io(path.as_path(), e))?;
        }
        for (cell, record) in chunk.iter().zip(records) {
            done.insert(cell.key(), record);
        }
    }

    let ordered = cells
        .iter()
        .map(|c| done.remove(&c.key()).expect("every cell has run"))
        .collect();
    SweepResult::from_records(digest, grid.seed, ordered)
}

fn result_row(r: &CellRecord, digest: &str) -> [String; 7] {
    [
        r.variant.to_string(),
        r.theta.to_string(),
        r.gamma.to_string(),
        r.run.to_string(),
        r.seed.to_string(),
        r.final_rate.to_string(),
        digest.to_string(),
    ]
}

/// Parse a results file, refusing rows written under another digest or rows
/// that do not parse.
pub fn read_results(path: &Path, expected_digest: &str) -> Result<Vec<CellRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    if !text.is_empty() && !text.ends_with('\n') {
        let line = text.lines().count();
        return Err(parse_err(line, "truncated final row".into()));
    }
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| parse_err(1, e.to_string()))?;
    if headers.iter().ne(RESULTS_HEADER) {
        return Err(parse_err(1, format!("expected header {}", RESULTS_HEADER.join(","))));
    }
    let mut records = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| parse_err(line, e.to_string()))?;
        if row.len() != RESULTS_HEADER.len() {
            return Err(parse_err(line, format!("expected {} fields", RESULTS_HEADER.len())));
        }
        if &row[6] != expected_digest {
            return Err(Error::DigestMismatch {
                path: path.to_path_buf(),
                expected: expected_digest.to_string(),
                found: row[6].to_string(),
            });
        }
        let field = |k: usize| -> Result<f64> {
            row[k]
                .parse::<f64>()
                .map_err(|e| parse_err(line, format!("{}: {e}", RESULTS_HEADER[k])))
        };
        let final_rate = field(5)?;
        if !(0.0..=1.0).contains(&final_rate) {
            return Err(parse_err(line, format!("final_rate {final_rate} outside [0, 1]")));
        }
        records.push(CellRecord {
            variant: row[0].parse().map_err(|e: Error| parse_err(line, e.to_string()))?,
            theta: field(1)?,
            gamma: field(2)?,
            run: row[3].parse().map_err(|e| parse_err(line, format!("run: {e}")))?,
            seed: row[4].parse().map_err(|e| parse_err(line, format!("seed: {e}")))?,
            final_rate,
        });
    }
    Ok(records)
}

/// `variant,theta,gamma,mean_rate,sd,n_runs`
pub fn write_aggregates(path: &Path, result: &SweepResult) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["variant", "theta", "gamma", "mean_rate", "sd", "n_runs"])
        .expect("in-memory write");
    for a in &result.aggregates {
        w.write_record([
            a.variant.to_string(),
            a.theta.to_string(),
            a.gamma.to_string(),
            a.mean_rate.to_string(),
            a.sd.to_string(),
            a.n_runs.to_string(),
        ])
        .expect("in-memory write");
    }
    let bytes = w.into_inner().expect("in-memory write");
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

#[derive(Serialize)]
struct Summary<'a> {
    config_digest: &'a str,
    master_seed: u64,
    grid: &'a SweepGrid,
    config: &'a SweepConfig,
    cells: &'a [CellAggregate],
}

pub fn write_summary(path: &Path, grid: &SweepGrid, config: &SweepConfig, result: &SweepResult) -> Result<()> {
    let summary = Summary {
        config_digest: &result.config_digest,
        master_seed: result.master_seed,
        grid,
        config,
        cells: &result.aggregates,
    };
    let mut json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    json.push('\n');
    fs::write(path, json).map_err(|e| Error::io(path, e))
}

/// Raw final rates of `repeats` independent runs at each γ.
pub fn threshold_experiment(
    graph: &Graph,
    theta: f64,
    variant: ScenarioVariant,
    gammas: &[f64],
    repeats: usize,
    master_seed: u64,
    config: &SweepConfig,
    workers: usize,
) -> Result<BTreeMap<GridKey, Vec<f64>>> {
    let grid = SweepGrid {
        variants: vec![variant],
        thetas: vec![theta],
        gammas: gammas.to_vec(),
        runs: repeats,
        seed: master_seed,
    };
    let result = run_sweep(
        graph,
        &grid,
        config,
        &SweepOptions {
            workers,
            ..SweepOptions::default()
        },
    )?;
    let mut out: BTreeMap<GridKey, Vec<f64>> = BTreeMap::new();
    for r in result.records {
        out.entry(GridKey::of(r.gamma)).or_default().push(r.final_rate);
    }
    Ok(out)
}

/// Grids behind the published figures and contribution tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// Highest-degree-first variants, γ every 0.01 plus class boundaries.
    Fig2,
    /// Lowest-degree-first variants, γ every 0.01 plus class boundaries.
    Fig3,
    /// Randomised highest-first, γ = 0 and each class boundary.
    Table5,
    /// Randomised lowest-first, γ = 0 and each class boundary.
    Table6,
}

impl Preset {
    pub fn variants(self) -> Vec<ScenarioVariant> {
        use ScenarioVariant::*;
        match self {
            Preset::Fig2 => vec![RandomisedHighest, FixedHighest],
            Preset::Fig3 => vec![RandomisedLowest, FixedLowest],
            Preset::Table5 => vec![RandomisedHighest],
            Preset::Table6 => vec![RandomisedLowest],
        }
    }

    pub fn grid(self, graph: &Graph, seed: u64) -> SweepGrid {
        let variants = self.variants();
        let gammas = match self {
            Preset::Fig2 | Preset::Fig3 => SweepGrid::gamma_range(0.01).expect("valid step"),
            Preset::Table5 | Preset::Table6 => vec![0.0],
        };
        SweepGrid {
            variants,
            thetas: DEFAULT_THETAS.to_vec(),
            gammas,
            runs: 5,
            seed,
        }
        .with_thresholds(graph)
    }

    pub fn rank_order(self) -> RankOrder {
        self.variants()[0].rank_order()
    }
}

//! Summary quantities computed from finished runs, and their CSV exports.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dynamics::Trajectory;
use crate::error::{Error, Result};
use crate::network::{DegreeRank, Graph};
use crate::payoff::Decision;

/// Timesteps averaged by [`final_rate`] unless told otherwise.
pub const DEFAULT_WINDOW: usize = 1000;

/// Grid coordinate rounded to millionths, so that `0.5698` computed as
/// `2849 / 5000` and parsed from text land on the same key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GridKey(pub i64);

impl GridKey {
    pub fn of(x: f64) -> Self {
        Self((x * 1e6).round() as i64)
    }

    pub fn value(self) -> f64 {
        self.0 as f64 / 1e6
    }
}

/// Fraction of agents evacuating at each timestep `0..=timesteps`.
#[derive(Debug, Clone, PartialEq)]
pub struct RateSeries(Vec<f64>);

impl RateSeries {
    pub fn from_trajectory(trajectory: &Trajectory) -> Self {
        Self(trajectory.rates())
    }

    pub fn new(rates: Vec<f64>) -> Result<Self> {
        if rates.is_empty() {
            return Err(Error::config("rate series is empty"));
        }
        if let Some(r) = rates.iter().find(|r| !(0.0..=1.0).contains(*r)) {
            return Err(Error::config(format!("rate {r} outside [0, 1]")));
        }
        Ok(Self(rates))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn timesteps(&self) -> usize {
        self.0.len() - 1
    }

    pub fn final_rate(&self, window: usize) -> Result<f64> {
        final_rate(&self.0, window)
    }
}

pub fn evacuation_rate(decisions: &[Decision]) -> f64 {
    if decisions.is_empty() {
        return 0.0;
    }
    decisions.iter().filter(|d| d.is_evacuate()).count() as f64 / decisions.len() as f64
}

/// Mean of the last `window` entries of a series covering `0..=timesteps`.
/// With 3000 timesteps and the default window that is `t = 2001..=3000`.
pub fn final_rate(rates: &[f64], window: usize) -> Result<f64> {
    let timesteps = rates.len().saturating_sub(1);
    if window == 0 || window > timesteps {
        return Err(Error::config(format!(
            "averaging window {window} must be between 1 and the {timesteps} timesteps run"
        )));
    }
    let tail = &rates[rates.len() - window..];
    Ok(tail.iter().sum::<f64>() / window as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean: f64,
    /// Sample standard deviation; 0 for a single run.
    pub sd: f64,
    pub n_runs: usize,
}

pub fn aggregate_runs(rates: &[f64]) -> Result<Aggregate> {
    if rates.is_empty() {
        return Err(Error::config("cannot aggregate zero runs"));
    }
    let n = rates.len();
    let mean = rates.iter().sum::<f64>() / n as f64;
    let sd = if n > 1 {
        let ss: f64 = rates.iter().map(|r| (r - mean) * (r - mean)).sum();
        (ss / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    Ok(Aggregate { mean, sd, n_runs: n })
}

/// Decision changes of one degree class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DegreeSwitches {
    pub nodes: usize,
    /// Entry `t` counts agents whose decision at `t` differs from `t - 1`;
    /// entry 0 is always 0.
    pub per_step: Vec<u64>,
    pub total: u64,
}

pub type SwitchCounts = BTreeMap<u32, DegreeSwitches>;

pub fn switch_counts_by_degree(trajectory: &Trajectory, graph: &Graph) -> Result<SwitchCounts> {
    let history = trajectory.history.as_ref().ok_or(Error::MissingHistory)?;
    if history.node_count() != graph.node_count() {
        return Err(Error::config("trajectory and graph disagree on node count"));
    }
    let steps = history.len();
    let mut counts = SwitchCounts::new();
    for d in graph.degrees() {
        counts
            .entry(d as u32)
            .or_insert_with(|| DegreeSwitches {
                nodes: 0,
                per_step: vec![0; steps],
                total: 0,
            })
            .nodes += 1;
    }
    let slot_of: BTreeMap<u32, usize> = counts.keys().enumerate().map(|(i, &d)| (d, i)).collect();
    let node_slot: Vec<usize> = graph.degrees().map(|d| slot_of[&(d as u32)]).collect();
    let mut dense = vec![vec![0u64; steps]; counts.len()];
    for t in 1..steps {
        let prev = history.step_words(t - 1);
        let cur = history.step_words(t);
        for (w, (a, b)) in prev.iter().zip(cur).enumerate() {
            let mut x = a ^ b;
            while x != 0 {
                let node = w * 64 + x.trailing_zeros() as usize;
                dense[node_slot[node]][t] += 1;
                x &= x - 1;
            }
        }
    }
    for (entry, series) in counts.values_mut().zip(dense) {
        entry.total = series.iter().sum();
        entry.per_step = series;
    }
    Ok(counts)
}

/// Decisions laid out as nodes (in rank order) by timesteps.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionHeatmap {
    pub nodes: Vec<u32>,
    pub degrees: Vec<u32>,
    pub timesteps: Vec<usize>,
    /// Row-major, `nodes.len() * timesteps.len()` cells.
    pub cells: Vec<Decision>,
}

impl DecisionHeatmap {
    pub fn row(&self, r: usize) -> &[Decision] {
        let w = self.timesteps.len();
        &self.cells[r * w..(r + 1) * w]
    }
}

/// Heatmap with rows in `rank` order and every `column_stride`-th timestep
/// (1 keeps them all).
pub fn decision_heatmap(
    trajectory: &Trajectory,
    graph: &Graph,
    rank: &DegreeRank,
    column_stride: usize,
) -> Result<DecisionHeatmap> {
    let history = trajectory.history.as_ref().ok_or(Error::MissingHistory)?;
    if column_stride == 0 {
        return Err(Error::config("heatmap column stride must be at least 1"));
    }
    if rank.node_count() != graph.node_count() || history.node_count() != graph.node_count() {
        return Err(Error::config("trajectory, graph and ranking disagree on node count"));
    }
    let timesteps: Vec<usize> = (0..history.len()).step_by(column_stride).collect();
    let nodes = rank.ranked_nodes().to_vec();
    let degrees = nodes.iter().map(|&i| graph.degree(i as usize) as u32).collect();
    let mut cells = Vec::with_capacity(nodes.len() * timesteps.len());
    for &i in &nodes {
        cells.extend(timesteps.iter().map(|&t| history.decision(t, i as usize)));
    }
    Ok(DecisionHeatmap {
        nodes,
        degrees,
        timesteps,
        cells,
    })
}

/// Mean final rates keyed by `(theta, gamma)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RateLookup(BTreeMap<(GridKey, GridKey), f64>);

impl RateLookup {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, theta: f64, gamma: f64, rate: f64) {
        self.0.insert((GridKey::of(theta), GridKey::of(gamma)), rate);
    }

    pub fn get(&self, theta: f64, gamma: f64) -> Option<f64> {
        self.0.get(&(GridKey::of(theta), GridKey::of(gamma))).copied()
    }
}

/// One degree class of a contribution table. Changes are in percentage points,
/// one entry per incentive level.
#[derive(Debug, Clone, PartialEq)]
pub struct ContributionRow {
    pub degree: u32,
    pub count: usize,
    pub population_pct: f64,
    pub rate_change: Vec<f64>,
    pub rate_change_per_agent: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContributionTable {
    pub thetas: Vec<f64>,
    /// Final rate with nobody prioritised, in percent.
    pub start: Vec<f64>,
    pub rows: Vec<ContributionRow>,
    /// Final rate with everybody prioritised, in percent.
    pub end: Vec<f64>,
}

impl ContributionTable {
    /// Largest `|start + Σ changes − end|` over the incentive levels.
    pub fn telescoping_residual(&self) -> f64 {
        (0..self.thetas.len())
            .map(|k| {
                let sum: f64 = self.start[k] + self.rows.iter().map(|r| r.rate_change[k]).sum::<f64>();
                (sum - self.end[k]).abs()
            })
            .fold(0.0, f64::max)
    }
}

/// Split the rise from `γ = 0` to `γ = 1` into the steps contributed by each
/// degree class as it becomes fully prioritised, in `rank` order.
pub fn degree_contribution(rates: &RateLookup, thetas: &[f64], rank: &DegreeRank) -> Result<ContributionTable> {
    let n = rank.node_count() as f64;
    let lookup = |theta: f64, gamma: f64| {
        rates.get(theta, gamma).ok_or_else(|| {
            Error::config(format!("no final rate for theta {theta} at gamma {gamma}"))
        })
    };
    let mut start = Vec::with_capacity(thetas.len());
    let mut rows: Vec<ContributionRow> = rank
        .classes()
        .iter()
        .map(|c| ContributionRow {
            degree: c.degree,
            count: c.count,
            population_pct: 100.0 * c.count as f64 / n,
            rate_change: Vec::with_capacity(thetas.len()),
            rate_change_per_agent: Vec::with_capacity(thetas.len()),
        })
        .collect();
    let mut end = Vec::with_capacity(thetas.len());
    for &theta in thetas {
        let mut previous = lookup(theta, 0.0)?;
        start.push(100.0 * previous);
        for (row, class) in rows.iter_mut().zip(rank.classes()) {
            let rate = lookup(theta, class.cumulative as f64 / n)?;
            let change = 100.0 * (rate - previous);
            row.rate_change.push(change);
            row.rate_change_per_agent.push(change / class.count as f64);
            previous = rate;
        }
        end.push(100.0 * previous);
    }
    Ok(ContributionTable {
        thetas: thetas.to_vec(),
        start,
        rows,
        end,
    })
}

/// Two-decimal rendering used for per-agent changes.
pub fn format_per_agent(x: f64) -> String {
    format!("{x:.2}")
}

fn create(path: &Path) -> Result<csv::Writer<fs::File>> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn finish<W: Write>(path: &Path, writer: csv::Writer<W>) -> Result<()> {
    writer
        .into_inner()
        .map_err(|e| Error::io(path, e.into_error()))?
        .flush()
        .map_err(|e| Error::io(path, e))
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| Error::io(path, e.into())
}

/// `t,rate`
pub fn write_rate_series(path: &Path, rates: &RateSeries) -> Result<()> {
    let mut w = create(path)?;
    let err = csv_err(path);
    w.write_record(["t", "rate"]).map_err(&err)?;
    for (t, r) in rates.as_slice().iter().enumerate() {
        w.write_record([t.to_string(), r.to_string()]).map_err(&err)?;
    }
    finish(path, w)
}

/// `degree,t,count`, one row per degree class and timestep from 1.
pub fn write_switch_counts(path: &Path, counts: &SwitchCounts) -> Result<()> {
    let mut w = create(path)?;
    let err = csv_err(path);
    w.write_record(["degree", "t", "count"]).map_err(&err)?;
    for (degree, s) in counts.iter().rev() {
        for (t, c) in s.per_step.iter().enumerate().skip(1) {
            w.write_record([degree.to_string(), t.to_string(), c.to_string()])
                .map_err(&err)?;
        }
    }
    finish(path, w)
}

/// `node,degree,t<k>...` with one `E`/`S` cell per sampled timestep.
pub fn write_heatmap(path: &Path, heatmap: &DecisionHeatmap) -> Result<()> {
    let mut w = create(path)?;
    let err = csv_err(path);
    let mut header = vec!["node".to_string(), "degree".to_string()];
    header.extend(heatmap.timesteps.iter().map(|t| format!("t{t}")));
    w.write_record(&header).map_err(&err)?;
    let mut record = Vec::with_capacity(header.len());
    for (r, (node, degree)) in heatmap.nodes.iter().zip(&heatmap.degrees).enumerate() {
        record.clear();
        record.push(node.to_string());
        record.push(degree.to_string());
        record.extend(heatmap.row(r).iter().map(|d| d.as_char().to_string()));
        w.write_record(&record).map_err(&err)?;
    }
    finish(path, w)
}

/// Column label for an incentive level, e.g. `-10%`.
pub fn theta_label(theta: f64) -> String {
    let pct = (theta * 100.0 * 1e6).round() / 1e6;
    format!("{pct}%")
}

/// Table with a `Start` row, one row per degree class, and an `End` row that
/// holds the fully prioritised rate, so each rate-change column satisfies
/// `Start + Σ degree rows = End`. Rate changes are written at full precision,
/// per-agent changes at two decimals.
pub fn write_contribution(path: &Path, table: &ContributionTable) -> Result<()> {
    let mut w = create(path)?;
    let err = csv_err(path);
    let mut header = vec!["degree".to_string(), "population_pct".to_string()];
    header.extend(table.thetas.iter().map(|&t| format!("rate_change_{}", theta_label(t))));
    header.extend(table.thetas.iter().map(|&t| format!("per_agent_{}", theta_label(t))));
    w.write_record(&header).map_err(&err)?;
    let blanks = || table.thetas.iter().map(|_| String::new());

    let mut start = vec!["Start".to_string(), String::new()];
    start.extend(table.start.iter().map(f64::to_string));
    start.extend(blanks());
    w.write_record(&start).map_err(&err)?;
    for row in &table.rows {
        let mut rec = vec![row.degree.to_string(), format!("{:.2}", row.population_pct)];
        rec.extend(row.rate_change.iter().map(f64::to_string));
        rec.extend(row.rate_change_per_agent.iter().map(|&x| format_per_agent(x)));
        w.write_record(&rec).map_err(&err)?;
    }
    let mut end = vec!["End".to_string(), String::new()];
    end.extend(table.end.iter().map(f64::to_string));
    end.extend(blanks());
    w.write_record(&end).map_err(&err)?;
    finish(path, w)
}

/// Largest telescoping residual of a file written by [`write_contribution`].
pub fn contribution_csv_residual(path: &Path) -> Result<f64> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let headers = reader.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
    let columns: Vec<usize> = headers
        .iter()
        .enumerate()
        .filter(|(_, h)| h.starts_with("rate_change_"))
        .map(|(i, _)| i)
        .collect();
    if columns.is_empty() {
        return Err(parse_err(1, "no rate_change columns".into()));
    }
    let mut sums = vec![0.0; columns.len()];
    let mut end = None;
    for (line, record) in reader.records().enumerate() {
        let line = line + 2;
        let record = record.map_err(|e| parse_err(line, e.to_string()))?;
        let values: Vec<f64> = columns
            .iter()
            .map(|&c| {
                record
                    .get(c)
                    .unwrap_or("")
                    .parse::<f64>()
                    .map_err(|e| parse_err(line, format!("column {c}: {e}")))
            })
            .collect::<Result<_>>()?;
        if record.get(0) == Some("End") {
            end = Some(values);
        } else {
            for (s, v) in sums.iter_mut().zip(values) {
                *s += v;
            }
        }
    }
    let end = end.ok_or_else(|| parse_err(0, "no End row".into()))?;
    Ok(sums
        .iter()
        .zip(&end)
        .map(|(s, e)| (s - e).abs())
        .fold(0.0, f64::max))
}

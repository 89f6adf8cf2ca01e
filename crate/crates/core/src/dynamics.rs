//! Synchronous imitation dynamics.
//!
//! Each timestep every agent totals its payoffs against all neighbours, then
//! looks at a neighbour and copies that neighbour's previous decision with
//! probability `max(0, (w_j - w_i) / (max_k w_k - min_k w_k))`, where the
//! normalisation runs over the whole population. All updates read the
//! previous snapshot.

use std::str::FromStr;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::digest::digest_json;
use crate::error::{Error, Result};
use crate::network::Graph;
use crate::payoff::{Decision, PayoffMatrix};
use crate::rng::{CounterRng, Stream, StreamKey};
use crate::scenario::DecisionVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NeighborSampling {
    /// One uniformly random neighbour per agent per timestep.
    #[default]
    OneRandomNeighbor,
    /// Neighbours in random order; stop at the first adoption.
    EachNeighborSequential,
}

impl FromStr for NeighborSampling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "one-random-neighbor" => Ok(Self::OneRandomNeighbor),
            "each-neighbor-sequential" => Ok(Self::EachNeighborSequential),
            other => Err(Error::config(format!("unknown neighbor_sampling `{other}`"))),
        }
    }
}

/// Which side of the matrix entry `(own, other)` an agent is credited with.
///
/// `A` credits `a_{own,other}`: an evacuee facing a stayer earns `a_es`.
/// `B` credits `b_{own,other}`: the same evacuee earns `b_es`. With the
/// published coefficients `B` swaps the two mixed-pair payoffs, and it is the
/// reading under which the published rate curves and the γ ≈ 57% tipping
/// point are recovered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FocalSide {
    #[default]
    A,
    B,
}

impl FromStr for FocalSide {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "a" | "A" => Ok(Self::A),
            "b" | "B" => Ok(Self::B),
            other => Err(Error::config(format!("focal_side must be a or b, got `{other}`"))),
        }
    }
}

/// What a run keeps besides the per-step evacuation counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Recording {
    /// Counts only; enough for rate series and final rates.
    #[default]
    Counts,
    /// Bit-packed decisions for every timestep.
    Decisions,
    /// Decisions plus every agent's total payoff at every timestep.
    DecisionsAndPayoffs,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub timesteps: usize,
    pub seed: u64,
    pub matrix: PayoffMatrix,
    pub neighbor_sampling: NeighborSampling,
    pub focal_side: FocalSide,
    /// Whether callers should hold priority agents fixed; see [`run_with_pins`].
    pub pin_priority: bool,
    #[serde(skip)]
    pub recording: Recording,
}

impl SimulationConfig {
    pub fn new(matrix: PayoffMatrix, timesteps: usize, seed: u64) -> Self {
        Self {
            timesteps,
            seed,
            matrix,
            neighbor_sampling: NeighborSampling::default(),
            focal_side: FocalSide::default(),
            pin_priority: false,
            recording: Recording::default(),
        }
    }

    pub fn with_focal_side(self, focal_side: FocalSide) -> Self {
        Self { focal_side, ..self }
    }

    pub fn with_recording(self, recording: Recording) -> Self {
        Self { recording, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if self.timesteps == 0 {
            return Err(Error::config("timesteps must be at least 1"));
        }
        Ok(())
    }

    pub fn digest(&self) -> String {
        digest_json(self)
    }
}

/// Decisions at timestep `t` and the payoffs they earn.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationState {
    pub t: usize,
    pub decisions: DecisionVector,
    pub total_payoffs: Vec<f64>,
}

impl SimulationState {
    pub fn new(graph: &Graph, decisions: DecisionVector, config: &SimulationConfig, t: usize) -> Self {
        let mut total_payoffs = vec![0.0; graph.node_count()];
        accumulate_payoffs_into(graph, &decisions, &config.matrix, config.focal_side, &mut total_payoffs);
        Self {
            t,
            decisions,
            total_payoffs,
        }
    }
}

/// Credited payoff indexed by `[own as u8][other as u8]`.
#[inline]
fn payoff_table(matrix: &PayoffMatrix, side: FocalSide) -> [[f64; 2]; 2] {
    use Decision::{Evacuate, Stay};
    let pick = |own, other| {
        let (a, b) = matrix.pair_payoff(own, other);
        match side {
            FocalSide::A => a,
            FocalSide::B => b,
        }
    };
    [
        [pick(Stay, Stay), pick(Stay, Evacuate)],
        [pick(Evacuate, Stay), pick(Evacuate, Evacuate)],
    ]
}

/// `w_i`: sum over neighbours `j` of the focal payoff of
/// `(decisions[i], decisions[j])`.
pub fn accumulate_payoffs(graph: &Graph, decisions: &[Decision], matrix: &PayoffMatrix) -> Vec<f64> {
    let mut out = vec![0.0; graph.node_count()];
    accumulate_payoffs_into(graph, decisions, matrix, FocalSide::A, &mut out);
    out
}

/// Like [`accumulate_payoffs`] with a choice of credited side, writing into
/// `out`. Returns the number of discordant half-edges (agent and neighbour
/// disagree).
pub fn accumulate_payoffs_into(
    graph: &Graph,
    decisions: &[Decision],
    matrix: &PayoffMatrix,
    side: FocalSide,
    out: &mut [f64],
) -> usize {
    let table = payoff_table(matrix, side);
    let mut discordant = 0;
    for (i, w) in out.iter_mut().enumerate() {
        let own = decisions[i];
        let row = &table[own as usize];
        let mut sum = 0.0;
        for &j in graph.neighbors(i) {
            let other = decisions[j as usize];
            discordant += (other != own) as usize;
            sum += row[other as usize];
        }
        *w = sum;
    }
    discordant
}

/// `max(0, (w_j - w_i) / (w_max - w_min))`, or 0 when all payoffs are equal.
#[inline]
pub fn imitation_probability(w_i: f64, w_j: f64, w_max: f64, w_min: f64) -> f64 {
    let range = w_max - w_min;
    if range <= 0.0 {
        return 0.0;
    }
    ((w_j - w_i) / range).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy)]
struct PayoffRange {
    max: f64,
    min: f64,
}

impl PayoffRange {
    fn of(payoffs: &[f64]) -> Self {
        payoffs.iter().fold(
            Self {
                max: f64::NEG_INFINITY,
                min: f64::INFINITY,
            },
            |r, &w| Self {
                max: r.max.max(w),
                min: r.min.min(w),
            },
        )
    }
}

/// New decision of agent `i` for timestep `t + 1`. Reads only the snapshot at
/// `t` and the draws addressed by `(seed, i, t + 1)`.
///
/// Agents whose neighbours all share their decision, or who already hold the
/// top payoff, cannot change, so their draws are skipped.
#[inline]
fn agent_update(
    graph: &Graph,
    decisions: &[Decision],
    payoffs: &[f64],
    range: PayoffRange,
    config: &SimulationConfig,
    key: StreamKey,
    next_t: usize,
    i: usize,
) -> Decision {
    let own = decisions[i];
    let neighbors = graph.neighbors(i);
    if payoffs[i] >= range.max || neighbors.iter().all(|&j| decisions[j as usize] == own) {
        return own;
    }
    let mut rng = CounterRng::at(key, i as u64, next_t as u64);
    match config.neighbor_sampling {
        NeighborSampling::OneRandomNeighbor => {
            let j = neighbors[rng.next_index(neighbors.len())] as usize;
            if decisions[j] == own {
                return own;
            }
            let u = rng.next_f64();
            if u < imitation_probability(payoffs[i], payoffs[j], range.max, range.min) {
                decisions[j]
            } else {
                own
            }
        }
        NeighborSampling::EachNeighborSequential => {
            let mut order: Vec<u32> = neighbors.to_vec();
            order.shuffle(&mut rng);
            for j in order {
                let j = j as usize;
                let u = rng.next_f64();
                if u < imitation_probability(payoffs[i], payoffs[j], range.max, range.min) {
                    return decisions[j];
                }
            }
            own
        }
    }
}

fn check_lengths(graph: &Graph, state: &SimulationState, pinned: Option<&[bool]>) {
    let n = graph.node_count();
    assert_eq!(state.decisions.len(), n, "decision vector length");
    assert_eq!(state.total_payoffs.len(), n, "payoff vector length");
    if let Some(p) = pinned {
        assert_eq!(p.len(), n, "pin mask length");
    }
}

/// One synchronous update from `state` (timestep `t`) to timestep `t + 1`.
/// Agents flagged in `pinned` keep their decision.
pub fn step(
    graph: &Graph,
    state: &SimulationState,
    config: &SimulationConfig,
    pinned: Option<&[bool]>,
) -> DecisionVector {
    check_lengths(graph, state, pinned);
    let range = PayoffRange::of(&state.total_payoffs);
    let key = StreamKey::new(config.seed, Stream::Imitation);
    let decisions: &[Decision] = &state.decisions;
    (0..graph.node_count())
        .map(|i| {
            if pinned.is_some_and(|p| p[i]) {
                decisions[i]
            } else {
                agent_update(graph, decisions, &state.total_payoffs, range, config, key, state.t + 1, i)
            }
        })
        .collect::<Vec<_>>()
        .into()
}

/// [`step`] with the per-agent updates spread over the rayon pool. Output is
/// identical to the sequential version.
pub fn step_par(
    graph: &Graph,
    state: &SimulationState,
    config: &SimulationConfig,
    pinned: Option<&[bool]>,
) -> DecisionVector {
    check_lengths(graph, state, pinned);
    let range = PayoffRange::of(&state.total_payoffs);
    let key = StreamKey::new(config.seed, Stream::Imitation);
    let decisions: &[Decision] = &state.decisions;
    (0..graph.node_count())
        .into_par_iter()
        .map(|i| {
            if pinned.is_some_and(|p| p[i]) {
                decisions[i]
            } else {
                agent_update(graph, decisions, &state.total_payoffs, range, config, key, state.t + 1, i)
            }
        })
        .collect::<Vec<_>>()
        .into()
}

/// Decisions of every timestep, one bit per agent (1 = Evacuate), packed into
/// little-endian `u64` words, `ceil(n / 64)` words per timestep.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitHistory {
    node_count: usize,
    words_per_step: usize,
    words: Vec<u64>,
}

impl BitHistory {
    pub fn new(node_count: usize) -> Self {
        Self {
            node_count,
            words_per_step: node_count.div_ceil(64),
            words: Vec::new(),
        }
    }

    pub(crate) fn from_words(node_count: usize, words: Vec<u64>) -> Self {
        let words_per_step = node_count.div_ceil(64);
        debug_assert_eq!(words.len() % words_per_step.max(1), 0);
        Self {
            node_count,
            words_per_step,
            words,
        }
    }

    pub fn push(&mut self, decisions: &[Decision]) {
        debug_assert_eq!(decisions.len(), self.node_count);
        let start = self.words.len();
        self.words.resize(start + self.words_per_step, 0);
        for (i, d) in decisions.iter().enumerate() {
            if d.is_evacuate() {
                self.words[start + i / 64] |= 1 << (i % 64);
            }
        }
    }

    fn repeat_last(&mut self) {
        let start = self.words.len() - self.words_per_step;
        self.words.extend_from_within(start..);
    }

    pub fn len(&self) -> usize {
        self.words.len() / self.words_per_step.max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    #[inline]
    pub fn decision(&self, t: usize, node: usize) -> Decision {
        let w = self.words[t * self.words_per_step + node / 64];
        if (w >> (node % 64)) & 1 == 1 {
            Decision::Evacuate
        } else {
            Decision::Stay
        }
    }

    pub fn step_words(&self, t: usize) -> &[u64] {
        &self.words[t * self.words_per_step..(t + 1) * self.words_per_step]
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn decisions_at(&self, t: usize) -> DecisionVector {
        (0..self.node_count)
            .map(|i| self.decision(t, i))
            .collect::<Vec<_>>()
            .into()
    }
}

/// Provenance of one run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub seed: u64,
    pub config_digest: String,
}

/// Everything recorded over timesteps `0..=timesteps`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub node_count: usize,
    pub timesteps: usize,
    /// Evacuating agents per timestep.
    pub evacuating: Vec<u32>,
    pub history: Option<BitHistory>,
    pub payoffs: Option<Vec<Vec<f64>>>,
    pub metadata: RunMetadata,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.evacuating.len()
    }

    pub fn is_empty(&self) -> bool {
        self.evacuating.is_empty()
    }

    pub fn rates(&self) -> Vec<f64> {
        let n = self.node_count as f64;
        self.evacuating.iter().map(|&c| c as f64 / n).collect()
    }
}

/// Run without pinned agents.
pub fn run(graph: &Graph, initial: &DecisionVector, config: &SimulationConfig) -> Result<Trajectory> {
    run_with_pins(graph, initial, config, None)
}

/// Iterate [`step`] `config.timesteps` times from `initial`.
///
/// Once no edge joins agents with different decisions nothing can change, so
/// the remaining timesteps are filled by copying; the result is the same as
/// stepping through them.
pub fn run_with_pins(
    graph: &Graph,
    initial: &DecisionVector,
    config: &SimulationConfig,
    pinned: Option<&[bool]>,
) -> Result<Trajectory> {
    config.validate()?;
    let n = graph.node_count();
    if initial.len() != n {
        return Err(Error::config(format!(
            "initial decisions cover {} agents but graph has {n}",
            initial.len()
        )));
    }
    if let Some(p) = pinned {
        if p.len() != n {
            return Err(Error::config(format!("pin mask covers {} agents but graph has {n}", p.len())));
        }
    }
    let keep_history = config.recording != Recording::Counts;
    let keep_payoffs = config.recording == Recording::DecisionsAndPayoffs;

    let mut evacuating = Vec::with_capacity(config.timesteps + 1);
    let mut history = keep_history.then(|| BitHistory::new(n));
    let mut payoff_log = keep_payoffs.then(|| Vec::with_capacity(config.timesteps + 1));

    let mut current: Vec<Decision> = initial.to_vec();
    let mut next: Vec<Decision> = vec![Decision::Stay; n];
    let mut payoffs = vec![0.0; n];

    let key = StreamKey::new(config.seed, Stream::Imitation);
    let mut t = 0;
    loop {
        let discordant =
            accumulate_payoffs_into(graph, &current, &config.matrix, config.focal_side, &mut payoffs);
        let count = current.iter().filter(|d| d.is_evacuate()).count() as u32;
        evacuating.push(count);
        if let Some(h) = history.as_mut() {
            h.push(&current);
        }
        if let Some(log) = payoff_log.as_mut() {
            log.push(payoffs.clone());
        }
        if t == config.timesteps {
            break;
        }
        if discordant == 0 {
            // frozen: fill the tail
            let remaining = config.timesteps - t;
            evacuating.extend(std::iter::repeat(count).take(remaining));
            if let Some(h) = history.as_mut() {
                for _ in 0..remaining {
                    h.repeat_last();
                }
            }
            if let Some(log) = payoff_log.as_mut() {
                for _ in 0..remaining {
                    log.push(payoffs.clone());
                }
            }
            break;
        }
        let range = PayoffRange::of(&payoffs);
        for (i, slot) in next.iter_mut().enumerate() {
            *slot = if pinned.is_some_and(|p| p[i]) {
                current[i]
            } else {
                agent_update(graph, &current, &payoffs, range, config, key, t + 1, i)
            };
        }
        std::mem::swap(&mut current, &mut next);
        t += 1;
    }

    Ok(Trajectory {
        node_count: n,
        timesteps: config.timesteps,
        evacuating,
        history,
        payoffs: payoff_log,
        metadata: RunMetadata {
            seed: config.seed,
            config_digest: config.digest(),
        },
    })
}

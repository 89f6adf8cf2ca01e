//! Social network construction, edge-list IO and degree ranking.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, CounterRng, Stream};

/// Immutable undirected simple graph in compressed adjacency form.
///
/// Neighbour lists are sorted, symmetric, free of self-loops and duplicates,
/// and every node has at least one neighbour.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    offsets: Vec<usize>,
    targets: Vec<u32>,
}

impl Graph {
    /// Build from an undirected edge list over nodes `0..node_count`.
    pub fn from_edges<I>(node_count: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (u32, u32)>,
    {
        if node_count == 0 {
            return Err(Error::config("graph must have at least one node"));
        }
        if node_count > u32::MAX as usize {
            return Err(Error::config("node count exceeds u32 range"));
        }
        let mut adjacency: Vec<Vec<u32>> = vec![Vec::new(); node_count];
        for (a, b) in edges {
            if a as usize >= node_count || b as usize >= node_count {
                return Err(Error::config(format!(
                    "edge ({a}, {b}) references a node outside 0..{node_count}"
                )));
            }
            if a == b {
                return Err(Error::config(format!("self-loop on node {a}")));
            }
            adjacency[a as usize].push(b);
            adjacency[b as usize].push(a);
        }
        Self::from_adjacency(adjacency)
    }

    fn from_adjacency(mut adjacency: Vec<Vec<u32>>) -> Result<Self> {
        let mut offsets = Vec::with_capacity(adjacency.len() + 1);
        let mut targets = Vec::new();
        offsets.push(0);
        for (i, list) in adjacency.iter_mut().enumerate() {
            if list.is_empty() {
                return Err(Error::config(format!("node {i} has no neighbours")));
            }
            list.sort_unstable();
            if let Some(w) = list.windows(2).find(|w| w[0] == w[1]) {
                return Err(Error::config(format!("duplicate edge ({i}, {})", w[0])));
            }
            targets.extend_from_slice(list);
            offsets.push(targets.len());
        }
        Ok(Self { offsets, targets })
    }

    pub fn node_count(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn edge_count(&self) -> usize {
        self.targets.len() / 2
    }

    #[inline]
    pub fn neighbors(&self, node: usize) -> &[u32] {
        &self.targets[self.offsets[node]..self.offsets[node + 1]]
    }

    #[inline]
    pub fn degree(&self, node: usize) -> usize {
        self.offsets[node + 1] - self.offsets[node]
    }

    pub fn degrees(&self) -> impl Iterator<Item = usize> + '_ {
        self.offsets.windows(2).map(|w| w[1] - w[0])
    }

    /// Each undirected edge once, as `(low, high)`, in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        (0..self.node_count()).flat_map(move |i| {
            self.neighbors(i)
                .iter()
                .filter(move |&&j| j as usize > i)
                .map(move |&j| (i as u32, j))
        })
    }

    pub fn degree_histogram(&self) -> DegreeHistogram {
        let mut counts = BTreeMap::new();
        for d in self.degrees() {
            *counts.entry(d as u32).or_insert(0) += 1;
        }
        DegreeHistogram { counts }
    }

    pub fn is_connected(&self) -> bool {
        let n = self.node_count();
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        let mut reached = 1;
        while let Some(u) = queue.pop_front() {
            for &v in self.neighbors(u) {
                let v = v as usize;
                if !seen[v] {
                    seen[v] = true;
                    reached += 1;
                    queue.push_back(v);
                }
            }
        }
        reached == n
    }
}

/// Degree → node count. Zero counts are dropped.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "BTreeMap<String, usize>", into = "BTreeMap<String, usize>")]
pub struct DegreeHistogram {
    counts: BTreeMap<u32, usize>,
}

impl DegreeHistogram {
    pub fn new(counts: impl IntoIterator<Item = (u32, usize)>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (degree, count) in counts {
            if degree == 0 {
                return Err(Error::config("histogram degrees must be positive"));
            }
            if count > 0 {
                *map.entry(degree).or_insert(0) += count;
            }
        }
        if map.is_empty() {
            return Err(Error::config("histogram is empty"));
        }
        Ok(Self { counts: map })
    }

    /// Degree counts of the 5000-household reference network. They are the
    /// differences between consecutive cumulative degree-class fractions
    /// (0.04%, 0.42%, 3.78%, 19.26%, 56.98%, 98.2%, 98.8%, 100%) of 5000 nodes.
    pub fn reference() -> Self {
        Self::new([
            (9, 2),
            (8, 19),
            (7, 168),
            (6, 774),
            (5, 1886),
            (4, 2061),
            (3, 30),
            (2, 60),
        ])
        .expect("reference histogram is valid")
    }

    pub fn node_count(&self) -> usize {
        self.counts.values().sum()
    }

    pub fn degree_sum(&self) -> usize {
        self.counts.iter().map(|(&d, &c)| d as usize * c).sum()
    }

    pub fn max_degree(&self) -> u32 {
        *self.counts.keys().next_back().unwrap_or(&0)
    }

    pub fn count(&self, degree: u32) -> usize {
        self.counts.get(&degree).copied().unwrap_or(0)
    }

    /// `(degree, count)` in ascending degree order.
    pub fn iter(&self) -> impl DoubleEndedIterator<Item = (u32, usize)> + '_ {
        self.counts.iter().map(|(&d, &c)| (d, c))
    }

    /// Erdős–Gallai test: can some simple graph realise this sequence?
    pub fn is_graphical(&self) -> bool {
        if self.degree_sum() % 2 != 0 {
            return false;
        }
        let n = self.node_count();
        if self.max_degree() as usize >= n {
            return false;
        }
        // Descending degree sequence, walked one node at a time while the
        // tail term is evaluated per degree class.
        let desc: Vec<(u32, usize)> = self.iter().rev().collect();
        let mut head_sum = 0usize;
        let mut k = 0usize;
        for (class_idx, &(degree, count)) in desc.iter().enumerate() {
            for taken in 1..=count {
                head_sum += degree as usize;
                k += 1;
                let mut tail = (count - taken) * (degree as usize).min(k);
                for &(d, c) in &desc[class_idx + 1..] {
                    tail += c * (d as usize).min(k);
                }
                if head_sum > k * (k - 1) + tail {
                    return false;
                }
            }
        }
        true
    }
}

impl TryFrom<BTreeMap<String, usize>> for DegreeHistogram {
    type Error = Error;

    fn try_from(map: BTreeMap<String, usize>) -> Result<Self> {
        let mut counts = Vec::with_capacity(map.len());
        for (k, v) in map {
            let degree = k
                .trim()
                .parse::<u32>()
                .map_err(|_| Error::config(format!("histogram key `{k}` is not a degree")))?;
            counts.push((degree, v));
        }
        Self::new(counts)
    }
}

impl From<DegreeHistogram> for BTreeMap<String, usize> {
    fn from(h: DegreeHistogram) -> Self {
        h.counts.into_iter().map(|(d, c)| (d.to_string(), c)).collect()
    }
}

/// Parses `"9:2, 8:19, 2:60"`.
impl FromStr for DegreeHistogram {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut counts = Vec::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (d, c) = part
                .split_once(':')
                .ok_or_else(|| Error::config(format!("histogram entry `{part}` is not degree:count")))?;
            let degree = d
                .trim()
                .parse()
                .map_err(|_| Error::config(format!("bad degree in `{part}`")))?;
            let count = c
                .trim()
                .parse()
                .map_err(|_| Error::config(format!("bad count in `{part}`")))?;
            counts.push((degree, count));
        }
        Self::new(counts)
    }
}

impl fmt::Display for DegreeHistogram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.iter().rev().map(|(d, c)| format!("{d}:{c}")).collect();
        f.write_str(&parts.join(","))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RankOrder {
    HighestFirst,
    LowestFirst,
}

/// One degree class in rank order with its running population.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DegreeClass {
    pub degree: u32,
    pub count: usize,
    /// Nodes in this class and every class ranked before it.
    pub cumulative: usize,
}

/// Nodes ordered by degree, with the cumulative population boundaries of each
/// degree class.
///
/// Nodes of equal degree appear in a seeded random order, so a priority cut
/// that falls inside a class picks a random subset of it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DegreeRank {
    order: RankOrder,
    node_count: usize,
    ranked_nodes: Vec<u32>,
    classes: Vec<DegreeClass>,
    tie_seed: u64,
}

impl DegreeRank {
    pub fn new(graph: &Graph, order: RankOrder, tie_seed: u64) -> Self {
        let mut by_degree: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
        for i in 0..graph.node_count() {
            by_degree.entry(graph.degree(i) as u32).or_default().push(i as u32);
        }
        let degrees: Vec<u32> = match order {
            RankOrder::HighestFirst => by_degree.keys().rev().copied().collect(),
            RankOrder::LowestFirst => by_degree.keys().copied().collect(),
        };
        let mut ranked_nodes = Vec::with_capacity(graph.node_count());
        let mut classes = Vec::with_capacity(degrees.len());
        for degree in degrees {
            let mut members = by_degree.remove(&degree).unwrap_or_default();
            let mut rng = CounterRng::new(tie_seed, Stream::TieShuffle, degree as u64, 0);
            members.shuffle(&mut rng);
            ranked_nodes.extend_from_slice(&members);
            classes.push(DegreeClass {
                degree,
                count: members.len(),
                cumulative: ranked_nodes.len(),
            });
        }
        Self {
            order,
            node_count: graph.node_count(),
            ranked_nodes,
            classes,
            tie_seed,
        }
    }

    pub fn order(&self) -> RankOrder {
        self.order
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn tie_seed(&self) -> u64 {
        self.tie_seed
    }

    pub fn ranked_nodes(&self) -> &[u32] {
        &self.ranked_nodes
    }

    pub fn classes(&self) -> &[DegreeClass] {
        &self.classes
    }

    /// `(degree, cumulative fraction)` at each class boundary; the last is 1.
    pub fn cumulative_thresholds(&self) -> Vec<(u32, f64)> {
        self.classes
            .iter()
            .map(|c| (c.degree, c.cumulative as f64 / self.node_count as f64))
            .collect()
    }
}

/// Ring lattice with `k/2` neighbours on each side, each lattice edge rewired
/// with probability `rewire_prob`.
///
/// Every node keeps the `k/2` edges it owns in the lattice (only their far
/// end moves), so the minimum degree is `k/2`. Disconnected realisations are
/// discarded and redrawn from a derived seed.
pub fn generate_small_world(n: usize, k: usize, rewire_prob: f64, seed: u64) -> Result<Graph> {
    if k < 2 || k % 2 != 0 {
        return Err(Error::config(format!("k must be even and at least 2, got {k}")));
    }
    if n <= k {
        return Err(Error::config(format!("need n > k, got n={n}, k={k}")));
    }
    if n > u32::MAX as usize {
        return Err(Error::config("node count exceeds u32 range"));
    }
    if !(0.0..=1.0).contains(&rewire_prob) {
        return Err(Error::config(format!("rewire_prob {rewire_prob} outside [0, 1]")));
    }
    const MAX_TRIES: u64 = 100;
    for attempt in 0..MAX_TRIES {
        let mut rng = CounterRng::for_stream(derive_seed(seed, &[attempt]), Stream::Network);
        let graph = small_world_once(n, k, rewire_prob, &mut rng)?;
        if graph.is_connected() {
            return Ok(graph);
        }
    }
    Err(Error::config(format!(
        "no connected small-world graph in {MAX_TRIES} attempts (n={n}, k={k}, p={rewire_prob})"
    )))
}

fn small_world_once(n: usize, k: usize, p: f64, rng: &mut CounterRng) -> Result<Graph> {
    let mut adjacency: Vec<Vec<u32>> = vec![Vec::with_capacity(k + 2); n];
    for u in 0..n {
        for j in 1..=k / 2 {
            let v = (u + j) % n;
            adjacency[u].push(v as u32);
            adjacency[v].push(u as u32);
        }
    }
    for j in 1..=k / 2 {
        for u in 0..n {
            let v = ((u + j) % n) as u32;
            if rng.gen::<f64>() >= p || adjacency[u].len() >= n - 1 {
                continue;
            }
            let w = loop {
                let w = rng.gen_range(0..n as u32);
                if w as usize != u && !adjacency[u].contains(&w) {
                    break w;
                }
            };
            remove_neighbor(&mut adjacency[u], v);
            remove_neighbor(&mut adjacency[v as usize], u as u32);
            adjacency[u].push(w);
            adjacency[w as usize].push(u as u32);
        }
    }
    Graph::from_adjacency(adjacency)
}

fn remove_neighbor(list: &mut Vec<u32>, node: u32) {
    if let Some(pos) = list.iter().position(|&x| x == node) {
        list.swap_remove(pos);
    }
}

/// Configuration-model graph whose degree multiset equals `hist` exactly.
///
/// Stubs are paired uniformly at random, then self-loops and multi-edges are
/// removed by degree-preserving double-edge swaps. The swap budget is
/// `100 × edge_count` attempts.
pub fn generate_from_histogram(hist: &DegreeHistogram, seed: u64) -> Result<Graph> {
    let n = hist.node_count();
    if hist.degree_sum() % 2 != 0 {
        return Err(Error::config(format!(
            "degree sum {} is odd; no graph realises it",
            hist.degree_sum()
        )));
    }
    if hist.max_degree() as usize >= n {
        return Err(Error::config(format!(
            "max degree {} must be below node count {n}",
            hist.max_degree()
        )));
    }
    if !hist.is_graphical() {
        return Err(Error::config(format!("degree sequence {hist} is not graphical")));
    }
    if n > u32::MAX as usize {
        return Err(Error::config("node count exceeds u32 range"));
    }
    let mut rng = CounterRng::for_stream(seed, Stream::Network);

    // Random assignment of degrees to node ids, then one stub per half-edge.
    let mut degrees: Vec<u32> = hist
        .iter()
        .flat_map(|(d, c)| std::iter::repeat(d).take(c))
        .collect();
    degrees.shuffle(&mut rng);
    let mut stubs: Vec<u32> = degrees
        .iter()
        .enumerate()
        .flat_map(|(node, &d)| std::iter::repeat(node as u32).take(d as usize))
        .collect();
    stubs.shuffle(&mut rng);
    let mut edges: Vec<(u32, u32)> = stubs
        .chunks_exact(2)
        .map(|pair| ordered(pair[0], pair[1]))
        .collect();

    repair_multigraph(&mut edges, &mut rng)?;
    Graph::from_edges(n, edges)
}

#[inline]
fn ordered(a: u32, b: u32) -> (u32, u32) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

fn repair_multigraph(edges: &mut [(u32, u32)], rng: &mut CounterRng) -> Result<()> {
    let m = edges.len();
    let mut multiplicity: HashMap<(u32, u32), u32> = HashMap::with_capacity(m);
    for &e in edges.iter() {
        *multiplicity.entry(e).or_insert(0) += 1;
    }
    let is_bad = |e: (u32, u32), mult: &HashMap<(u32, u32), u32>| e.0 == e.1 || mult[&e] > 1;

    let budget = 100 * m;
    let mut attempts = 0usize;
    let mut cursor = 0usize;
    loop {
        // First bad edge at or after the cursor, wrapping once.
        let next_bad = (0..m)
            .map(|off| (cursor + off) % m)
            .find(|&i| is_bad(edges[i], &multiplicity));
        let Some(e) = next_bad else { return Ok(()) };
        cursor = e;
        if m < 2 {
            return Err(Error::RepairExhausted {
                attempts,
                remaining: 1,
            });
        }
        loop {
            if attempts >= budget {
                let remaining = edges.iter().filter(|&&x| is_bad(x, &multiplicity)).count();
                return Err(Error::RepairExhausted {
                    attempts,
                    remaining,
                });
            }
            attempts += 1;
            let f = rng.gen_range(0..m - 1);
            let f = if f >= e { f + 1 } else { f };
            let (a, b) = edges[e];
            let (c, d) = if rng.gen::<bool>() {
                edges[f]
            } else {
                (edges[f].1, edges[f].0)
            };
            if a == d || c == b {
                continue;
            }
            let first = ordered(a, d);
            let second = ordered(c, b);
            // Accept only swaps that lower the defect count (loops plus
            // surplus parallel copies), so two loops may merge into a double
            // edge on the way to a simple graph.
            let mut delta = 0i64;
            for old in [edges[e], edges[f]] {
                let slot = multiplicity.get_mut(&old).expect("edge is tracked");
                if old.0 == old.1 || *slot > 1 {
                    delta -= 1;
                }
                *slot -= 1;
            }
            for new in [first, second] {
                let slot = multiplicity.entry(new).or_insert(0);
                if *slot > 0 {
                    delta += 1;
                }
                *slot += 1;
            }
            if delta >= 0 {
                for new in [first, second] {
                    *multiplicity.get_mut(&new).expect("just inserted") -= 1;
                }
                for old in [edges[e], edges[f]] {
                    *multiplicity.get_mut(&old).expect("edge is tracked") += 1;
                }
                for key in [first, second] {
                    if multiplicity.get(&key) == Some(&0) {
                        multiplicity.remove(&key);
                    }
                }
                continue;
            }
            for key in [edges[e], edges[f]] {
                if multiplicity.get(&key) == Some(&0) {
                    multiplicity.remove(&key);
                }
            }
            edges[e] = first;
            edges[f] = second;
            break;
        }
    }
}

/// Writes `# nodes N` followed by one `i j` line per edge (`i < j`).
pub fn save_edge_list(graph: &Graph, path: &Path) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let write = |out: &mut BufWriter<fs::File>| -> std::io::Result<()> {
        writeln!(out, "# nodes {}", graph.node_count())?;
        for (a, b) in graph.edges() {
            writeln!(out, "{a} {b}")?;
        }
        out.flush()
    };
    write(&mut out).map_err(|e| Error::io(path, e))
}

pub fn load_edge_list(path: &Path) -> Result<Graph> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_edge_list(&text, path)
}

/// Whitespace-separated `i j` pairs with 0-based ids. `#` starts a comment;
/// a `# nodes N` line fixes the node count, otherwise it is `max id + 1`.
pub fn parse_edge_list(text: &str, path: &Path) -> Result<Graph> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut declared: Option<usize> = None;
    let mut edges: Vec<(u32, u32, usize)> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if let Some(comment) = line.strip_prefix('#') {
            let mut words = comment.split_whitespace();
            if words.next() == Some("nodes") {
                let n = words
                    .next()
                    .and_then(|w| w.parse::<usize>().ok())
                    .ok_or_else(|| parse_err(line_no, "bad `# nodes` header".into()))?;
                declared = Some(n);
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 2 {
            return Err(parse_err(
                line_no,
                format!("expected two node ids, found {} fields", fields.len()),
            ));
        }
        let mut ids = [0u32; 2];
        for (slot, field) in ids.iter_mut().zip(&fields) {
            *slot = field
                .parse::<u32>()
                .map_err(|_| parse_err(line_no, format!("`{field}` is not a node id")))?;
        }
        if ids[0] == ids[1] {
            return Err(parse_err(line_no, format!("self-loop on node {}", ids[0])));
        }
        if let Some(n) = declared {
            if let Some(&bad) = ids.iter().find(|&&id| id as usize >= n) {
                return Err(parse_err(
                    line_no,
                    format!("node id {bad} out of range for {n} nodes"),
                ));
            }
        }
        edges.push((ids[0], ids[1], line_no));
    }
    let node_count = match declared {
        Some(n) => n,
        None => edges
            .iter()
            .map(|&(a, b, _)| a.max(b) as usize + 1)
            .max()
            .ok_or_else(|| parse_err(0, "no edges".into()))?,
    };
    let mut seen: HashMap<(u32, u32), usize> = HashMap::with_capacity(edges.len());
    for &(a, b, line) in &edges {
        if let Some(first) = seen.insert(ordered(a, b), line) {
            return Err(parse_err(
                line,
                format!("duplicate edge {a} {b} (first on line {first})"),
            ));
        }
    }
    Graph::from_edges(node_count, edges.into_iter().map(|(a, b, _)| (a, b))).map_err(|e| match e {
        Error::Config(message) => Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            message,
        },
        other => other,
    })
}

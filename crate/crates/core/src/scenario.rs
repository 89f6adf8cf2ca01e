//! Degree-based prioritisation scenarios and initial decisions.

use std::fmt;
use std::ops::{Deref, Index};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{DegreeRank, Graph, RankOrder};
use crate::payoff::Decision;
use crate::rng::{CounterRng, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioVariant {
    RandomisedHighest,
    FixedHighest,
    RandomisedLowest,
    FixedLowest,
}

impl ScenarioVariant {
    pub const ALL: [ScenarioVariant; 4] = [
        ScenarioVariant::RandomisedHighest,
        ScenarioVariant::FixedHighest,
        ScenarioVariant::RandomisedLowest,
        ScenarioVariant::FixedLowest,
    ];

    pub fn rank_order(self) -> RankOrder {
        match self {
            ScenarioVariant::RandomisedHighest | ScenarioVariant::FixedHighest => {
                RankOrder::HighestFirst
            }
            ScenarioVariant::RandomisedLowest | ScenarioVariant::FixedLowest => {
                RankOrder::LowestFirst
            }
        }
    }

    pub fn is_randomised(self) -> bool {
        matches!(
            self,
            ScenarioVariant::RandomisedHighest | ScenarioVariant::RandomisedLowest
        )
    }

    /// Stable numeric id, used in seed derivation.
    pub fn id(self) -> u64 {
        match self {
            ScenarioVariant::RandomisedHighest => 1,
            ScenarioVariant::FixedHighest => 2,
            ScenarioVariant::RandomisedLowest => 3,
            ScenarioVariant::FixedLowest => 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ScenarioVariant::RandomisedHighest => "randomised-highest",
            ScenarioVariant::FixedHighest => "fixed-highest",
            ScenarioVariant::RandomisedLowest => "randomised-lowest",
            ScenarioVariant::FixedLowest => "fixed-lowest",
        }
    }
}

impl fmt::Display for ScenarioVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScenarioVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::config(format!("unknown scenario variant `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub variant: ScenarioVariant,
    /// Fraction of agents in the priority set.
    pub gamma: f64,
    /// Probability that a non-priority agent starts as Stay in the
    /// randomised variants.
    pub random_stay_prob: f64,
    pub seed: u64,
}

impl ScenarioSpec {
    pub fn new(variant: ScenarioVariant, gamma: f64, seed: u64) -> Self {
        Self {
            variant,
            gamma,
            random_stay_prob: 0.5,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_fraction("gamma", self.gamma)?;
        check_fraction("random_stay_prob", self.random_stay_prob)
    }
}

fn check_fraction(name: &str, v: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::config(format!("{name} = {v} outside [0, 1]")));
    }
    Ok(())
}

/// Per-agent decisions at one timestep.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DecisionVector(Vec<Decision>);

impl DecisionVector {
    pub fn new(decisions: Vec<Decision>) -> Self {
        Self(decisions)
    }

    pub fn uniform(node_count: usize, decision: Decision) -> Self {
        Self(vec![decision; node_count])
    }

    pub fn evacuating(&self) -> usize {
        self.0.iter().filter(|d| d.is_evacuate()).count()
    }

    pub fn as_slice(&self) -> &[Decision] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<Decision> {
        self.0
    }
}

impl Deref for DecisionVector {
    type Target = [Decision];

    fn deref(&self) -> &[Decision] {
        &self.0
    }
}

impl Index<usize> for DecisionVector {
    type Output = Decision;

    fn index(&self, i: usize) -> &Decision {
        &self.0[i]
    }
}

impl From<Vec<Decision>> for DecisionVector {
    fn from(v: Vec<Decision>) -> Self {
        Self(v)
    }
}

/// `round(gamma × node_count)` with halves rounded up.
pub fn priority_count(gamma: f64, node_count: usize) -> usize {
    // The epsilon keeps products like 0.5698 × 5000 = 2848.9999999999995
    // on the intended integer.
    let scaled = gamma * node_count as f64;
    ((scaled + 0.5 + 1e-9).floor() as usize).min(node_count)
}

/// The first `round(gamma × n)` nodes of the ranking. Whole degree classes
/// enter before any member of the next; the boundary class contributes its
/// seeded-shuffle prefix.
pub fn priority_set(rank: &DegreeRank, gamma: f64) -> &[u32] {
    let m = priority_count(gamma, rank.node_count());
    &rank.ranked_nodes()[..m]
}

/// Priority agents start as Evacuate. The rest start as Stay in fixed
/// variants and as independent coin flips in randomised ones.
pub fn initialize_decisions(
    graph: &Graph,
    rank: &DegreeRank,
    spec: &ScenarioSpec,
) -> Result<DecisionVector> {
    spec.validate()?;
    let n = graph.node_count();
    if rank.node_count() != n {
        return Err(Error::config(format!(
            "rank covers {} nodes but graph has {n}",
            rank.node_count()
        )));
    }
    if rank.order() != spec.variant.rank_order() {
        return Err(Error::config(format!(
            "variant {} needs a {:?} ranking, got {:?}",
            spec.variant,
            spec.variant.rank_order(),
            rank.order()
        )));
    }
    let mut decisions: Vec<Decision> = if spec.variant.is_randomised() {
        (0..n)
            .map(|i| {
                let u = CounterRng::new(spec.seed, Stream::Initialization, i as u64, 0).next_f64();
                if u < 1.0 - spec.random_stay_prob {
                    Decision::Evacuate
                } else {
                    Decision::Stay
                }
            })
            .collect()
    } else {
        vec![Decision::Stay; n]
    };
    for &node in priority_set(rank, spec.gamma) {
        decisions[node as usize] = Decision::Evacuate;
    }
    Ok(DecisionVector(decisions))
}

/// Membership mask of the priority set, for pinned runs.
pub fn priority_mask(rank: &DegreeRank, gamma: f64) -> Vec<bool> {
    let mut mask = vec![false; rank.node_count()];
    for &node in priority_set(rank, gamma) {
        mask[node as usize] = true;
    }
    mask
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{generate_from_histogram, DegreeHistogram};

    fn reference_graph() -> Graph {
        generate_from_histogram(&DegreeHistogram::reference(), 11).unwrap()
    }

    #[test]
    fn rounding_is_half_up() {
        assert_eq!(priority_count(0.0, 5000), 0);
        assert_eq!(priority_count(1.0, 5000), 5000);
        assert_eq!(priority_count(0.0004, 5000), 2);
        assert_eq!(priority_count(0.5698, 5000), 2849);
        assert_eq!(priority_count(0.57, 5000), 2850);
        assert_eq!(priority_count(0.5, 3), 2);
        assert_eq!(priority_count(0.1, 5), 1);
        assert_eq!(priority_count(0.3, 5), 2);
    }

    #[test]
    fn top_two_are_the_degree_nine_nodes() {
        let g = reference_graph();
        let rank = DegreeRank::new(&g, RankOrder::HighestFirst, 4);
        let set = priority_set(&rank, 0.0004);
        assert_eq!(set.len(), 2);
        assert!(set.iter().all(|&n| g.degree(n as usize) == 9));
        assert!(priority_set(&rank, 0.0).is_empty());
        assert_eq!(priority_set(&rank, 1.0).len(), 5000);
    }

    #[test]
    fn fixed_variants_at_extremes() {
        let g = reference_graph();
        let hi = DegreeRank::new(&g, RankOrder::HighestFirst, 1);
        let lo = DegreeRank::new(&g, RankOrder::LowestFirst, 1);
        let v = initialize_decisions(&g, &hi, &ScenarioSpec::new(ScenarioVariant::FixedHighest, 0.0, 3)).unwrap();
        assert_eq!(v.evacuating(), 0);
        let v = initialize_decisions(&g, &lo, &ScenarioSpec::new(ScenarioVariant::FixedLowest, 1.0, 3)).unwrap();
        assert_eq!(v.evacuating(), 5000);
    }

    #[test]
    fn randomised_start_is_a_fair_coin() {
        // mean over 100 seeds of the evacuate fraction; sd of a single
        // fraction is 0.5/sqrt(5000), so the standard error of the mean is
        // 0.5/sqrt(500_000)
        let g = reference_graph();
        let rank = DegreeRank::new(&g, RankOrder::HighestFirst, 1);
        let fractions: Vec<f64> = (0..100)
            .map(|seed| {
                let spec = ScenarioSpec::new(ScenarioVariant::RandomisedHighest, 0.0, seed);
                initialize_decisions(&g, &rank, &spec).unwrap().evacuating() as f64 / 5000.0
            })
            .collect();
        let mean = fractions.iter().sum::<f64>() / 100.0;
        let se = 0.5 / (500_000f64).sqrt();
        assert!((mean - 0.5).abs() < 3.0 * se, "mean {mean}");
    }

    #[test]
    fn random_stay_prob_extremes() {
        let g = reference_graph();
        let rank = DegreeRank::new(&g, RankOrder::LowestFirst, 1);
        let mut spec = ScenarioSpec::new(ScenarioVariant::RandomisedLowest, 0.1, 2);
        spec.random_stay_prob = 1.0;
        assert_eq!(initialize_decisions(&g, &rank, &spec).unwrap().evacuating(), 500);
        spec.random_stay_prob = 0.0;
        assert_eq!(initialize_decisions(&g, &rank, &spec).unwrap().evacuating(), 5000);
    }

    #[test]
    fn mismatched_inputs_are_config_errors() {
        let g = reference_graph();
        let hi = DegreeRank::new(&g, RankOrder::HighestFirst, 1);
        let spec = ScenarioSpec::new(ScenarioVariant::FixedLowest, 0.2, 0);
        assert!(matches!(initialize_decisions(&g, &hi, &spec), Err(Error::Config(_))));

        let small = crate::network::generate_small_world(10, 2, 0.0, 0).unwrap();
        let small_rank = DegreeRank::new(&small, RankOrder::HighestFirst, 0);
        let spec = ScenarioSpec::new(ScenarioVariant::FixedHighest, 0.2, 0);
        assert!(matches!(initialize_decisions(&g, &small_rank, &spec), Err(Error::Config(_))));

        let spec = ScenarioSpec::new(ScenarioVariant::FixedHighest, 1.2, 0);
        assert!(initialize_decisions(&g, &hi, &spec).is_err());
    }

    #[test]
    fn variant_names_round_trip() {
        for v in ScenarioVariant::ALL {
            assert_eq!(v.name().parse::<ScenarioVariant>().unwrap(), v);
        }
        assert!("random".parse::<ScenarioVariant>().is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(48))]

            #[test]
            fn priority_sets_nest(g1 in 0.0..=1.0f64, g2 in 0.0..=1.0f64, seed in any::<u64>(), high in any::<bool>()) {
                let g = crate::network::generate_small_world(300, 4, 0.4, 5).unwrap();
                let order = if high { RankOrder::HighestFirst } else { RankOrder::LowestFirst };
                let rank = DegreeRank::new(&g, order, seed);
                let (lo, hi) = if g1 <= g2 { (g1, g2) } else { (g2, g1) };
                let a = priority_set(&rank, lo);
                let b = priority_set(&rank, hi);
                prop_assert!(a.len() <= b.len());
                prop_assert_eq!(a, &b[..a.len()]);
                // whole classes before the boundary class
                let degs: Vec<usize> = b.iter().map(|&n| g.degree(n as usize)).collect();
                if high {
                    prop_assert!(degs.windows(2).all(|w| w[0] >= w[1]));
                } else {
                    prop_assert!(degs.windows(2).all(|w| w[0] <= w[1]));
                }
            }

            #[test]
            fn priority_agents_always_evacuate(gamma in 0.0..=1.0f64, seed in any::<u64>(), variant in 0..4usize) {
                let g = crate::network::generate_small_world(200, 4, 0.3, 9).unwrap();
                let variant = ScenarioVariant::ALL[variant];
                let rank = DegreeRank::new(&g, variant.rank_order(), seed);
                let spec = ScenarioSpec::new(variant, gamma, seed);
                let v = initialize_decisions(&g, &rank, &spec).unwrap();
                prop_assert_eq!(v.len(), 200);
                for &n in priority_set(&rank, gamma) {
                    prop_assert_eq!(v[n as usize], Decision::Evacuate);
                }
                if !variant.is_randomised() {
                    prop_assert_eq!(v.evacuating(), priority_count(gamma, 200));
                }
                prop_assert_eq!(initialize_decisions(&g, &rank, &spec).unwrap(), v);
            }
        }
    }
}

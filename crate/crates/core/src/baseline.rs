//! Flat Q-learning comparator: a lone speaker picks any subset of the belief
//! set for the observed event and the listener adds nothing.

use std::cmp::Ordering;
use std::collections::{BTreeSet, HashMap};

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::agents::{speaker_reward, LearnConfig};
use crate::analysis::{self, binomial, MetricsReport};
use crate::belief::BeliefMask;
use crate::environment::{Description, EnvConfig, Environment, EpisodeLog, Phase, RunTag, Validation};
use crate::error::{Error, Result};
use crate::rng::{self, Rng, Stream};
use crate::scenario::{EventKind, Scenario};

/// Largest belief count accepted without a cardinality cap.
pub const UNCAPPED_MAX_BELIEFS: usize = 24;

/// Rough resident size of one materialized key: hash slot, ordered-set node
/// and bookkeeping.
const BYTES_PER_KEY: u128 = 96;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlatConfig {
    pub learn: LearnConfig,
    pub env: EnvConfig,
    /// Only subsets with at most this many beliefs are actions.
    pub max_cardinality: Option<usize>,
    pub memory_bound_bytes: u128,
    pub keep_slots: bool,
    pub tie_break: TieBreak,
}

/// How the greedy choice settles between equally valued actions. Unvisited
/// keys all read as 0, so this decides which untried subset comes next.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TieBreak {
    /// Uniform over the tied unvisited actions.
    #[default]
    Random,
    /// Lowest action index, which sweeps subsets in bitmask order.
    Lowest,
}

impl Default for FlatConfig {
    fn default() -> Self {
        Self {
            learn: LearnConfig { episodes_per_step: 30_000, ..LearnConfig::default() },
            env: EnvConfig::default(),
            max_cardinality: None,
            memory_bound_bytes: 2 << 30,
            keep_slots: false,
            tie_break: TieBreak::Random,
        }
    }
}

/// Events as states; subsets of the belief set, in increasing bitmask order,
/// as actions.
#[derive(Debug, Clone, PartialEq)]
pub struct FlatSpaces {
    pub n_states: usize,
    pub n_beliefs: usize,
    pub cap: Option<usize>,
    n_actions: u64,
}

impl FlatSpaces {
    pub fn new(s: &Scenario, cap: Option<usize>) -> Result<Self> {
        let b = s.belief_set.total_count();
        if cap.is_none() && b > UNCAPPED_MAX_BELIEFS {
            return Err(Error::Config(format!(
                "{b} beliefs need a max_cardinality for the flat baseline (limit {UNCAPPED_MAX_BELIEFS} uncapped)"
            )));
        }
        let n = count_upto(b, cap.unwrap_or(b));
        let n_actions = u64::try_from(n).map_err(|_| Error::Config("flat action space exceeds u64".into()))?;
        Ok(Self { n_states: s.num_events(), n_beliefs: b, cap, n_actions })
    }

    pub fn action_count(&self) -> u64 {
        self.n_actions
    }

    /// Dense size of the flat table, `|E| * |A|`.
    pub fn key_count(&self) -> u128 {
        self.n_states as u128 * u128::from(self.n_actions)
    }

    fn cap(&self) -> usize {
        self.cap.unwrap_or(self.n_beliefs)
    }

    /// Subset at position `rank`.
    pub fn mask(&self, rank: u64) -> BeliefMask {
        if self.cap.is_none() {
            return BeliefMask(rank);
        }
        let mut k = u128::from(rank);
        let mut left = self.cap();
        let mut mask = 0u64;
        for i in (0..self.n_beliefs).rev() {
            let below = count_upto(i, left);
            if k >= below {
                mask |= 1 << i;
                k -= below;
                left -= 1;
            }
        }
        BeliefMask(mask)
    }

    /// Position of `mask`, or `None` when it is not an action.
    pub fn rank(&self, mask: BeliefMask) -> Option<u64> {
        if mask.0 >> self.n_beliefs != 0 || mask.len() as usize > self.cap() {
            return None;
        }
        if self.cap.is_none() {
            return Some(mask.0);
        }
        let mut left = self.cap();
        let mut k = 0u128;
        for i in (0..self.n_beliefs).rev() {
            if mask.contains(i) {
                k += count_upto(i, left);
                left -= 1;
            }
        }
        u64::try_from(k).ok()
    }
}

/// Subsets of `n` items with at most `r` members.
fn count_upto(n: usize, r: usize) -> u128 {
    (0..=r.min(n)).map(|j| binomial(n as u64, j as u64)).sum()
}

#[derive(Debug, Clone, Copy)]
struct Ranked {
    q: f64,
    action: u64,
}

impl PartialEq for Ranked {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Ranked {}

impl PartialOrd for Ranked {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Ranked {
    // Ascending in Q, then descending in action, so the last element is the
    // best value with the lowest index.
    fn cmp(&self, other: &Self) -> Ordering {
        self.q.total_cmp(&other.q).then(other.action.cmp(&self.action))
    }
}

#[derive(Debug, Clone, Default)]
struct Row {
    entries: HashMap<u64, (f64, u32)>,
    order: BTreeSet<Ranked>,
    /// Lowest action index without an entry.
    first_unvisited: u64,
}

/// Q-table that only stores visited keys; every other key reads as 0.
#[derive(Debug, Clone)]
pub struct SparseQTable {
    rows: Vec<Row>,
    n_actions: u64,
}

impl SparseQTable {
    pub fn new(n_states: usize, n_actions: u64) -> Self {
        Self { rows: vec![Row::default(); n_states], n_actions }
    }

    pub fn n_actions(&self) -> u64 {
        self.n_actions
    }

    /// Materialized keys.
    pub fn stored_keys(&self) -> usize {
        self.rows.iter().map(|r| r.entries.len()).sum()
    }

    fn row(&self, s: usize) -> Result<&Row> {
        self.rows.get(s).ok_or(Error::UnknownState(s))
    }

    pub fn get(&self, s: usize, a: u64) -> f64 {
        self.rows[s].entries.get(&a).map_or(0.0, |e| e.0)
    }

    pub fn visits(&self, s: usize, a: u64) -> u32 {
        self.rows[s].entries.get(&a).map_or(0, |e| e.1)
    }

    /// Best action, lowest index on ties; unvisited keys count as 0.
    pub fn greedy(&self, s: usize) -> Result<u64> {
        let row = self.row(s)?;
        let free = (row.first_unvisited < self.n_actions).then_some(row.first_unvisited);
        let best = row.order.last();
        Ok(match (best, free) {
            (None, Some(u)) => u,
            (Some(b), None) => b.action,
            (Some(b), Some(u)) => match b.q.total_cmp(&0.0) {
                Ordering::Greater => b.action,
                Ordering::Less => u,
                Ordering::Equal => b.action.min(u),
            },
            (None, None) => return Err(Error::UnknownState(s)),
        })
    }

    /// Best stored action when its value is positive, otherwise a uniformly
    /// drawn unvisited action. Stored actions at exactly 0 are not counted
    /// as tied.
    pub fn greedy_random(&self, s: usize, rng: &mut Rng) -> Result<u64> {
        let row = self.row(s)?;
        let stored = row.entries.len() as u64;
        match row.order.last() {
            Some(b) if b.q > 0.0 || stored == self.n_actions => return Ok(b.action),
            None if self.n_actions == 0 => return Err(Error::UnknownState(s)),
            _ => {}
        }
        if stored < self.n_actions / 2 {
            loop {
                let a = rng.random_range(0..self.n_actions);
                if !row.entries.contains_key(&a) {
                    return Ok(a);
                }
            }
        }
        let free: Vec<u64> = (0..self.n_actions).filter(|a| !row.entries.contains_key(a)).collect();
        Ok(free[rng.random_range(0..free.len())])
    }

    pub fn greedy_with(&self, s: usize, tie: TieBreak, rng: &mut Rng) -> Result<u64> {
        match tie {
            TieBreak::Lowest => self.greedy(s),
            TieBreak::Random => self.greedy_random(s, rng),
        }
    }

    pub fn max_q(&self, s: usize) -> Result<f64> {
        let a = self.greedy(s)?;
        Ok(self.get(s, a))
    }

    pub fn select_action(&self, s: usize, epsilon: f64, tie: TieBreak, rng: &mut Rng) -> Result<u64> {
        self.row(s)?;
        if rng.random::<f64>() < epsilon {
            Ok(rng.random_range(0..self.n_actions))
        } else {
            self.greedy_with(s, tie, rng)
        }
    }

    pub fn apply_target(&mut self, s: usize, a: u64, target: f64, cfg: &LearnConfig) {
        let row = &mut self.rows[s];
        let (q, visits) = match row.entries.get(&a) {
            Some(&(q, v)) => {
                row.order.remove(&Ranked { q, action: a });
                (q, v)
            }
            None => (0.0, 0),
        };
        let q = q + cfg.step_size(visits) * (target - q);
        row.entries.insert(a, (q, visits + 1));
        row.order.insert(Ranked { q, action: a });
        while row.first_unvisited < self.n_actions && row.entries.contains_key(&row.first_unvisited) {
            row.first_unvisited += 1;
        }
    }
}

/// Upper estimate of the table's resident size after `episodes` episodes.
pub fn memory_estimate(spaces: &FlatSpaces, s: &Scenario, episodes: usize, slot_cap_factor: usize) -> u128 {
    let slots = episodes as u128 * (slot_cap_factor * s.max_task_len()) as u128;
    spaces.key_count().min(slots) * BYTES_PER_KEY
}

#[derive(Debug, Clone)]
pub struct FlatOutcome {
    pub spaces: FlatSpaces,
    pub table: SparseQTable,
    pub log: EpisodeLog,
    pub training: MetricsReport,
    pub tie_break: TieBreak,
}

impl FlatOutcome {
    /// Greedy subset for `e`; listener part always empty.
    pub fn policy(&self, e: usize, rng: &mut Rng) -> Description {
        let a = self.table.greedy_with(e, self.tie_break, rng).unwrap_or(0);
        Description::new(self.spaces.mask(a), BeliefMask::EMPTY)
    }
}

pub fn run_flat_rl(s: &Scenario, cfg: &FlatConfig, base_seed: u64, replica: u64) -> Result<FlatOutcome> {
    cfg.learn.validate()?;
    cfg.env.validate()?;
    let spaces = FlatSpaces::new(s, cfg.max_cardinality)?;
    let episodes = cfg.learn.episodes_per_step;
    let required = memory_estimate(&spaces, s, episodes, cfg.env.slot_cap_factor);
    if required > cfg.memory_bound_bytes {
        return Err(Error::MemoryBound { required, bound: cfg.memory_bound_bytes });
    }

    let mut agent_rng = rng::stream(base_seed, replica, Stream::Baseline);
    let mut env_rng = rng::stream(base_seed, replica, Stream::Environment);
    let env = Environment::new(s, &cfg.env, Validation::Permissive);
    let mut table = SparseQTable::new(spaces.n_states, spaces.action_count());
    let mut log = EpisodeLog::new(RunTag::Flat, cfg.keep_slots);
    let learn = &cfg.learn;
    for m in 0..episodes {
        let eps = learn.epsilon(m);
        let task = env.scheduled_task(m);
        let spec = &s.tasks[task];
        let mut st = env.start_episode(m, task)?;
        while !st.is_terminal() {
            let e = st.current;
            let a = table.select_action(e, eps, cfg.tie_break, &mut agent_rng)?;
            let d = Description::new(spaces.mask(a), BeliefMask::EMPTY);
            let (out, next) = env.run_slot(&st, d, &mut env_rng)?;
            log.record_slot(&st, &out, 0, Phase::Train);
            let r = speaker_reward(&out, out.next_kind, spec);
            let boot = if out.next_kind == EventKind::Final { 0.0 } else { table.max_q(out.next_event)? };
            table.apply_target(e, a, r + learn.gamma * boot, learn);
            st = next;
        }
        log.close_episode(&st, 0, Phase::Train);
    }
    let training = analysis::summarize(&log.episodes, learn.gamma, &analysis::default_window_caps(s))?;
    Ok(FlatOutcome { spaces, table, log, training, tie_break: cfg.tie_break })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{generate_scenario, ScenarioConfig};

    fn toy() -> Scenario {
        let cfg = ScenarioConfig { levels: vec![2, 2], events: 3, tasks: 1, min_len: 3, max_len: 3, ..Default::default() };
        generate_scenario(&cfg, 2).unwrap()
    }

    #[test]
    fn uncapped_rank_is_the_bitmask() {
        let sp = FlatSpaces::new(&toy(), None).unwrap();
        assert_eq!(sp.action_count(), 16);
        for r in 0..16 {
            assert_eq!(sp.rank(sp.mask(r)), Some(r));
        }
        assert_eq!(sp.key_count(), 3 * 16);
    }

    #[test]
    fn capped_order_is_increasing_bitmask() {
        let sp = FlatSpaces::new(&toy(), Some(2)).unwrap();
        let expected: Vec<u64> = (0..16u64).filter(|m| m.count_ones() <= 2).collect();
        assert_eq!(sp.action_count(), expected.len() as u64);
        for (r, &m) in expected.iter().enumerate() {
            assert_eq!(sp.mask(r as u64).0, m);
            assert_eq!(sp.rank(BeliefMask(m)), Some(r as u64));
        }
        assert_eq!(sp.rank(BeliefMask(0b0111)), None);
    }

    #[test]
    fn sparse_greedy_treats_missing_keys_as_zero() {
        let cfg = LearnConfig { beta: 1.0, beta_visit_scale: None, ..Default::default() };
        let mut t = SparseQTable::new(1, 4);
        assert_eq!(t.greedy(0).unwrap(), 0);
        t.apply_target(0, 0, -1.0, &cfg);
        assert_eq!(t.greedy(0).unwrap(), 1);
        t.apply_target(0, 2, 3.0, &cfg);
        assert_eq!(t.greedy(0).unwrap(), 2);
        t.apply_target(0, 1, 3.0, &cfg);
        assert_eq!(t.greedy(0).unwrap(), 1);
        assert_eq!(t.max_q(0).unwrap(), 3.0);
        t.apply_target(0, 1, -5.0, &cfg);
        t.apply_target(0, 2, -5.0, &cfg);
        assert_eq!(t.greedy(0).unwrap(), 3);
        t.apply_target(0, 3, -6.0, &cfg);
        assert_eq!(t.greedy(0).unwrap(), 0);
        assert_eq!(t.stored_keys(), 4);
    }

    #[test]
    fn random_ties_pick_unvisited_keys() {
        let cfg = LearnConfig { beta: 1.0, beta_visit_scale: None, ..Default::default() };
        let mut rng = rng::stream(0, 0, Stream::Baseline);
        let mut t = SparseQTable::new(1, 4);
        t.apply_target(0, 0, -1.0, &cfg);
        t.apply_target(0, 2, -1.0, &cfg);
        let mut seen = BTreeSet::new();
        for _ in 0..100 {
            seen.insert(t.greedy_random(0, &mut rng).unwrap());
        }
        assert_eq!(seen, BTreeSet::from([1, 3]));
        t.apply_target(0, 2, 2.0, &cfg);
        assert_eq!(t.greedy_random(0, &mut rng).unwrap(), 2);
        let mut big = SparseQTable::new(1, 1 << 40);
        big.apply_target(0, 0, -1.0, &cfg);
        assert_ne!(big.greedy_random(0, &mut rng).unwrap(), 0);
    }

    #[test]
    fn wide_belief_sets_need_a_cap() {
        let cfg = ScenarioConfig::default();
        let s = generate_scenario(&cfg, 1).unwrap();
        assert!(s.belief_set.total_count() <= UNCAPPED_MAX_BELIEFS);
        let sp = FlatSpaces::new(&s, None).unwrap();
        assert_eq!(sp.key_count(), 120 * (1u128 << 22));
    }

    #[test]
    fn memory_bound_refuses() {
        let s = toy();
        let cfg = FlatConfig { memory_bound_bytes: 10, ..Default::default() };
        assert!(matches!(run_flat_rl(&s, &cfg, 0, 0), Err(Error::MemoryBound { bound: 10, .. })));
    }

    #[test]
    fn flat_training_logs_episodes_and_is_deterministic() {
        let s = toy();
        let mut cfg = FlatConfig::default();
        cfg.learn.episodes_per_step = 300;
        let a = run_flat_rl(&s, &cfg, 5, 0).unwrap();
        let b = run_flat_rl(&s, &cfg, 5, 0).unwrap();
        assert_eq!(a.log.episodes.len(), 300);
        assert_eq!(a.log.episodes, b.log.episodes);
        assert!(a.log.episodes.iter().all(|e| e.step == 0));
    }
}

//! Tabular speaker and listener agents: state/action spaces per curriculum
//! step, epsilon-greedy selection, rewards and the Q-learning update.

use std::io::Write;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::belief::{validate_mask, BeliefMask};
use crate::environment::SlotOutcome;
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::scenario::{EventKind, Scenario, TaskSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearnConfig {
    pub beta: f64,
    /// When set, the step size for a key visited `n` times is
    /// `beta * (s / (s + n))^beta_visit_exponent`; otherwise it stays at `beta`.
    pub beta_visit_scale: Option<f64>,
    pub beta_visit_exponent: f64,
    /// Floor for the decaying step size.
    pub beta_min: f64,
    pub gamma: f64,
    pub epsilon_start: f64,
    pub epsilon_min: f64,
    /// Per-episode multiplicative decay, restarted at every curriculum step.
    pub epsilon_decay: f64,
    pub episodes_per_step: usize,
}

impl Default for LearnConfig {
    fn default() -> Self {
        Self {
            beta: 0.1,
            beta_visit_scale: Some(100.0),
            beta_visit_exponent: 0.8,
            beta_min: 0.0,
            gamma: 0.95,
            epsilon_start: 1.0,
            epsilon_min: 0.05,
            epsilon_decay: 0.9995,
            episodes_per_step: 10_000,
        }
    }
}

impl LearnConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return bad("beta must lie in (0, 1]");
        }
        if let Some(s) = self.beta_visit_scale {
            if !(s > 0.0) {
                return bad("beta_visit_scale must be positive");
            }
        }
        if !(self.beta_visit_exponent > 0.0 && self.beta_visit_exponent <= 1.0) {
            return bad("beta_visit_exponent must lie in (0, 1]");
        }
        if !(0.0..=self.beta).contains(&self.beta_min) {
            return bad("beta_min must lie in [0, beta]");
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad("gamma must lie in (0, 1)");
        }
        if !(0.0..=1.0).contains(&self.epsilon_start)
            || !(0.0..=1.0).contains(&self.epsilon_min)
            || self.epsilon_min > self.epsilon_start
        {
            return bad("epsilon bounds must satisfy 0 <= epsilon_min <= epsilon_start <= 1");
        }
        if !(self.epsilon_decay > 0.0 && self.epsilon_decay <= 1.0) {
            return bad("epsilon_decay must lie in (0, 1]");
        }
        if self.episodes_per_step == 0 {
            return bad("episodes_per_step must be positive");
        }
        Ok(())
    }

    /// Exploration rate for the `n`-th episode (0-based) of a step.
    pub fn epsilon(&self, n: usize) -> f64 {
        let decayed = self.epsilon_start * self.epsilon_decay.powi(n.min(i32::MAX as usize) as i32);
        decayed.max(self.epsilon_min)
    }

    pub fn step_size(&self, visits: u32) -> f64 {
        match self.beta_visit_scale {
            None => self.beta,
            Some(s) => (self.beta * (s / (s + f64::from(visits))).powf(self.beta_visit_exponent)).max(self.beta_min),
        }
    }
}

/// Dense Q-table with a per-state action list and an optional feasible subset.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    q: Vec<Vec<f64>>,
    visits: Vec<Vec<u32>>,
    feasible: Vec<Vec<usize>>,
}

impl QTable {
    /// Every action of every state is selectable.
    pub fn new(actions_per_state: &[usize]) -> Self {
        let feasible = actions_per_state.iter().map(|&n| (0..n).collect()).collect();
        Self::with_feasible(actions_per_state, feasible)
    }

    /// Selection and maximization run over `feasible[s]` (ascending action
    /// indices); an empty list falls back to all actions.
    pub fn with_feasible(actions_per_state: &[usize], feasible: Vec<Vec<usize>>) -> Self {
        assert_eq!(actions_per_state.len(), feasible.len());
        Self {
            q: actions_per_state.iter().map(|&n| vec![0.0; n]).collect(),
            visits: actions_per_state.iter().map(|&n| vec![0; n]).collect(),
            feasible,
        }
    }

    pub fn n_states(&self) -> usize {
        self.q.len()
    }

    pub fn n_actions(&self, s: usize) -> usize {
        self.q[s].len()
    }

    /// Number of (state, action) keys.
    pub fn key_count(&self) -> usize {
        self.q.iter().map(Vec::len).sum()
    }

    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.q[s][a]
    }

    pub fn visits(&self, s: usize, a: usize) -> u32 {
        self.visits[s][a]
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.q[s]
    }

    fn check(&self, s: usize) -> Result<()> {
        if s < self.q.len() {
            Ok(())
        } else {
            Err(Error::UnknownState(s))
        }
    }

    fn candidates(&self, s: usize) -> Candidates<'_> {
        if self.feasible[s].is_empty() {
            Candidates::All(0..self.q[s].len())
        } else {
            Candidates::Some(self.feasible[s].iter())
        }
    }

    pub fn feasible(&self, s: usize) -> Vec<usize> {
        self.candidates(s).collect()
    }

    /// Highest-valued selectable action, lowest index on ties.
    pub fn greedy(&self, s: usize) -> Result<usize> {
        self.check(s)?;
        let row = &self.q[s];
        let mut best: Option<usize> = None;
        for a in self.candidates(s) {
            if best.is_none_or(|b| row[a] > row[b]) {
                best = Some(a);
            }
        }
        best.ok_or(Error::UnknownState(s))
    }

    /// `max_a Q(s, a)` over selectable actions; 0 for a state without actions.
    pub fn max_q(&self, s: usize) -> Result<f64> {
        self.check(s)?;
        if self.q[s].is_empty() {
            return Ok(0.0);
        }
        Ok(self.q[s][self.greedy(s)?])
    }

    pub fn select_action(&self, s: usize, epsilon: f64, rng: &mut Rng) -> Result<usize> {
        self.check(s)?;
        let u: f64 = rng.random();
        if u < epsilon {
            let n = match self.candidates(s) {
                Candidates::All(r) => r.len(),
                Candidates::Some(it) => it.len(),
            };
            if n == 0 {
                return Err(Error::UnknownState(s));
            }
            let k = rng.random_range(0..n);
            Ok(self.candidates(s).nth(k).expect("k < n"))
        } else {
            self.greedy(s)
        }
    }

    /// `Q(s,a) += step * (target - Q(s,a))` with the configured step size.
    pub fn apply_target(&mut self, s: usize, a: usize, target: f64, cfg: &LearnConfig) {
        let beta = cfg.step_size(self.visits[s][a]);
        let q = &mut self.q[s][a];
        *q += beta * (target - *q);
        self.visits[s][a] += 1;
    }

    /// Dumps `(step, side, state, action, q, visits)` rows.
    pub fn write_csv<W: Write>(&self, step: usize, side: &str, w: &mut W) -> Result<()> {
        for (s, row) in self.q.iter().enumerate() {
            for (a, q) in row.iter().enumerate() {
                writeln!(w, "{step},{side},{s},{a},{q},{}", self.visits[s][a])?;
            }
        }
        Ok(())
    }
}

enum Candidates<'a> {
    All(std::ops::Range<usize>),
    Some(std::slice::Iter<'a, usize>),
}

impl Iterator for Candidates<'_> {
    type Item = usize;
    fn next(&mut self) -> Option<usize> {
        match self {
            Candidates::All(r) => r.next(),
            Candidates::Some(it) => it.next().copied(),
        }
    }
}

/// One Q-learning update. `next = None` marks a terminal transition.
pub fn update_q(
    q: &mut QTable,
    state: usize,
    action: usize,
    reward: f64,
    next: Option<usize>,
    cfg: &LearnConfig,
) -> Result<()> {
    q.check(state)?;
    if action >= q.n_actions(state) {
        return Err(Error::UnknownState(state));
    }
    let bootstrap = match next {
        Some(s) => q.max_q(s)?,
        None => 0.0,
    };
    q.apply_target(state, action, reward + cfg.gamma * bootstrap, cfg);
    Ok(())
}

pub fn speaker_reward(out: &SlotOutcome, next_kind: EventKind, task: &TaskSpec) -> f64 {
    let base = -out.speaker_cost - f64::from(out.tx_count);
    match next_kind {
        EventKind::Final => base + task.reward,
        EventKind::Initial => base - task.delay_cost,
        EventKind::Intermediary => base,
    }
}

pub fn listener_reward(out: &SlotOutcome, next_kind: EventKind, task: &TaskSpec) -> f64 {
    let base = -out.listener_cost;
    match next_kind {
        EventKind::Final => base + task.reward,
        EventKind::Initial => base - task.delay_cost,
        EventKind::Intermediary => base,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpeakerSpaces {
    pub step: usize,
    /// States are event ids `0..n_states`.
    pub n_states: usize,
    /// Transmitted description per action index.
    pub actions: Vec<BeliefMask>,
    /// Actions that some listener response can complete into a valid description.
    pub feasible: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ListenerSpaces {
    pub step: usize,
    /// State `i` is speaker action `i`.
    pub states: Vec<BeliefMask>,
    /// Inferred belief (flat index) per action, per state.
    pub actions: Vec<Vec<usize>>,
    pub feasible: Vec<Vec<usize>>,
}

impl SpeakerSpaces {
    pub fn table(&self) -> QTable {
        let counts = vec![self.actions.len(); self.n_states];
        QTable::with_feasible(&counts, vec![self.feasible.clone(); self.n_states])
    }
}

impl ListenerSpaces {
    pub fn table(&self) -> QTable {
        let counts: Vec<usize> = self.actions.iter().map(Vec::len).collect();
        QTable::with_feasible(&counts, self.feasible.clone())
    }
}

/// Spaces for curriculum step `l`. Step 1 uses single beliefs; later steps
/// transmit the `l`-tuples found at step `l - 1`.
pub fn build_spaces(l: usize, s: &Scenario, prior: &[BeliefMask]) -> Result<(SpeakerSpaces, ListenerSpaces)> {
    let bs = &s.belief_set;
    let b = bs.total_count();
    if l == 0 {
        return Err(Error::Config("curriculum steps start at 1".into()));
    }
    let tx: Vec<BeliefMask> = if l == 1 {
        if !prior.is_empty() {
            return Err(Error::Config("step 1 takes no prior hierarchy".into()));
        }
        (0..b).map(BeliefMask::single).collect()
    } else {
        if prior.is_empty() {
            return Err(Error::EmptyPriorHierarchy { step: l });
        }
        let mut v = prior.to_vec();
        v.sort_unstable();
        v.dedup();
        if v.iter().any(|m| m.len() as usize != l || !validate_mask(*m, bs)) {
            return Err(Error::Config(format!("step {l} prior hierarchy holds malformed tuples")));
        }
        v
    };

    let identified: BeliefMask = if l == 1 {
        BeliefMask::EMPTY
    } else {
        (1..=l.min(bs.levels())).fold(BeliefMask::EMPTY, |m, k| m.union(bs.level_mask(k)))
    };
    let mut actions = Vec::with_capacity(tx.len());
    let mut feasible = Vec::with_capacity(tx.len());
    for &t in &tx {
        let acts: Vec<usize> = (0..b).filter(|&c| !t.contains(c) && !identified.contains(c)).collect();
        let ok: Vec<usize> = acts
            .iter()
            .enumerate()
            .filter(|(_, &c)| validate_mask(t.with(c), bs))
            .map(|(i, _)| i)
            .collect();
        actions.push(acts);
        feasible.push(ok);
    }
    let speaker_feasible: Vec<usize> = (0..tx.len()).filter(|&i| !feasible[i].is_empty()).collect();
    Ok((
        SpeakerSpaces { step: l, n_states: s.num_events(), actions: tx.clone(), feasible: speaker_feasible },
        ListenerSpaces { step: l, states: tx, actions, feasible },
    ))
}

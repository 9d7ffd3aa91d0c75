//! World definition: belief hierarchy, events, tasks, perfect descriptors and
//! the two transition matrices, plus a seeded generator and a TOML file format.

use std::collections::BTreeSet;
use std::path::Path;

use rand::seq::{index, SliceRandom};
use rand::Rng as _;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::belief::{validate_mask, BeliefId, BeliefMask, BeliefSet};
use crate::error::{Error, Result};
use crate::rng::{self, Rng, Stream};

pub const FORMAT_VERSION: u32 = 1;

/// Shortest task event chain: initial, one intermediary, final.
pub const MIN_TASK_LEN: usize = 3;

const ROW_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Initial,
    Intermediary,
    Final,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Initial => "initial",
            EventKind::Intermediary => "intermediary",
            EventKind::Final => "final",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub id: usize,
    pub kind: EventKind,
    /// Task whose chain contains this event.
    pub task: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PerfectDescriptor {
    pub beliefs: Vec<BeliefId>,
}

impl PerfectDescriptor {
    pub fn depth(&self) -> usize {
        self.beliefs.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub id: usize,
    pub max_len: usize,
    /// Probability of each episode length, starting at [`MIN_TASK_LEN`].
    pub length_pmf: Vec<f64>,
    pub reward: f64,
    pub delay_cost: f64,
    pub tec: Vec<usize>,
}

impl TaskSpec {
    pub fn initial(&self) -> usize {
        self.tec[0]
    }

    pub fn final_event(&self) -> usize {
        *self.tec.last().expect("tec is never empty")
    }

    /// `P(L = len)`.
    pub fn pmf(&self, len: usize) -> f64 {
        if len < MIN_TASK_LEN {
            0.0
        } else {
            self.length_pmf.get(len - MIN_TASK_LEN).copied().unwrap_or(0.0)
        }
    }

    pub fn expected_len(&self) -> f64 {
        self.length_pmf
            .iter()
            .enumerate()
            .map(|(i, p)| (i + MIN_TASK_LEN) as f64 * p)
            .sum()
    }

    /// Probability of jumping to the final event from chain position `j`
    /// (1-based), i.e. the discrete hazard of the length distribution.
    pub fn hazard(&self, j: usize) -> f64 {
        let survival: f64 = (j + 1..=self.max_len).map(|l| self.pmf(l)).sum();
        if survival <= 0.0 {
            1.0
        } else {
            (self.pmf(j + 1) / survival).min(1.0)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionModel {
    /// Row-stochastic transitions after a correct reconstruction.
    pub p_good: Vec<Vec<f64>>,
    /// Row-stochastic transitions after a failed reconstruction.
    pub p_bad: Vec<Vec<f64>>,
}

/// Generator parameters. Defaults reproduce the 22-belief, 120-event setup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub levels: Vec<usize>,
    pub events: usize,
    pub tasks: usize,
    pub min_len: usize,
    pub max_len: usize,
    /// Lower end of each level's uniform cost range; level `k` defaults to `k`.
    pub cost_low: Option<Vec<f64>>,
    pub cost_width: f64,
    pub infer_ratio: f64,
    /// Success probability of the truncated geometric length distribution.
    pub length_p: f64,
    /// Failure-transition mass placed on the ongoing task's initial event.
    pub restart_mass: f64,
    /// Minimum fraction of all events reachable by one failure transition.
    pub failure_support: f64,
    pub dirichlet_alpha: f64,
    /// Inclusive range of perfect descriptors per event.
    pub descriptors_per_event: [usize; 2],
    /// Fixed task reward and delay cost; `None` derives them from the reward bound.
    pub reward: Option<f64>,
    pub reward_margin: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            levels: vec![4, 5, 6, 7],
            events: 120,
            tasks: 30,
            min_len: 3,
            max_len: 6,
            cost_low: None,
            cost_width: 1.0,
            infer_ratio: 0.5,
            length_p: 0.2,
            restart_mass: 0.2,
            failure_support: 0.5,
            dirichlet_alpha: 1.0,
            descriptors_per_event: [1, 2],
            reward: None,
            reward_margin: 1.1,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.levels.len() < 2 {
            return bad("at least two belief levels are required");
        }
        if self.levels.iter().any(|&b| b == 0) {
            return bad("every level needs at least one belief");
        }
        if self.levels[0] + self.levels[1] < 3 {
            return bad("levels 1 and 2 need at least three beliefs between them");
        }
        if self.tasks == 0 {
            return bad("at least one task is required");
        }
        if self.min_len < MIN_TASK_LEN || self.max_len < self.min_len {
            return bad("task length bounds must satisfy 3 <= min_len <= max_len");
        }
        if self.events < self.tasks * self.min_len || self.events > self.tasks * self.max_len {
            return Err(Error::Config(format!(
                "{} events cannot be split into {} tasks of length {}..={}",
                self.events, self.tasks, self.min_len, self.max_len
            )));
        }
        if let Some(low) = &self.cost_low {
            if low.len() != self.levels.len() || low.iter().any(|&c| !(c > 0.0)) {
                return bad("cost_low needs one positive entry per level");
            }
        }
        if !(self.cost_width >= 0.0) || !(self.infer_ratio > 0.0) {
            return bad("cost_width must be >= 0 and infer_ratio > 0");
        }
        if !(self.length_p >= 0.0 && self.length_p < 1.0) {
            return bad("length_p must lie in [0, 1)");
        }
        if !(self.restart_mass > 0.0 && self.restart_mass < 1.0) {
            return bad("restart_mass must lie in (0, 1)");
        }
        if !(self.failure_support > 0.0 && self.failure_support <= 1.0) {
            return bad("failure_support must lie in (0, 1]");
        }
        if !(self.dirichlet_alpha > 0.0) {
            return bad("dirichlet_alpha must be positive");
        }
        let [lo, hi] = self.descriptors_per_event;
        if lo == 0 || hi < lo {
            return bad("descriptors_per_event must be a range starting at 1 or more");
        }
        if let Some(r) = self.reward {
            if !(r >= 0.0) {
                return bad("reward must be nonnegative");
            }
        }
        if !(self.reward_margin > 0.0) {
            return bad("reward_margin must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub version: u32,
    #[serde(with = "crate::rng::seed_serde")]
    pub rng_seed: u64,
    pub belief_set: BeliefSet,
    pub events: Vec<Event>,
    pub tasks: Vec<TaskSpec>,
    /// Perfect descriptors indexed by event id.
    pub perfect_map: Vec<Vec<PerfectDescriptor>>,
    pub transitions: TransitionModel,
    #[serde(skip)]
    perfect_masks: Vec<Vec<BeliefMask>>,
}

impl Scenario {
    /// Assembles a scenario from parts and checks every structural invariant.
    pub fn new(
        rng_seed: u64,
        belief_set: BeliefSet,
        events: Vec<Event>,
        tasks: Vec<TaskSpec>,
        perfect_map: Vec<Vec<PerfectDescriptor>>,
        transitions: TransitionModel,
    ) -> Result<Self> {
        let mut s = Scenario {
            version: FORMAT_VERSION,
            rng_seed,
            belief_set,
            events,
            tasks,
            perfect_map,
            transitions,
            perfect_masks: Vec::new(),
        };
        s.finish()?;
        Ok(s)
    }

    fn finish(&mut self) -> Result<()> {
        self.belief_set.rebuild_offsets();
        self.check()?;
        self.perfect_masks = self
            .perfect_map
            .iter()
            .map(|ds| {
                let mut v: Vec<BeliefMask> = ds.iter().map(|d| self.belief_set.mask_of(&d.beliefs)).collect();
                v.sort_unstable();
                v.dedup();
                v
            })
            .collect();
        Ok(())
    }

    fn check(&self) -> Result<()> {
        let cfg = |m: String| Err(Error::Config(m));
        let bs = &self.belief_set;
        if bs.levels() < 2 {
            return cfg("a scenario needs at least two belief levels".into());
        }
        let n = self.events.len();
        for (i, e) in self.events.iter().enumerate() {
            if e.id != i {
                return cfg(format!("event at position {i} carries id {}", e.id));
            }
            if e.task >= self.tasks.len() {
                return Err(Error::UnknownTask(e.task));
            }
        }
        for kind in [EventKind::Initial, EventKind::Intermediary, EventKind::Final] {
            if !self.events.iter().any(|e| e.kind == kind) {
                return cfg(format!("no {} events", kind.as_str()));
            }
        }
        let mut initials = BTreeSet::new();
        for (t, task) in self.tasks.iter().enumerate() {
            if task.id != t {
                return cfg(format!("task at position {t} carries id {}", task.id));
            }
            if task.tec.len() != task.max_len || task.max_len < MIN_TASK_LEN {
                return cfg(format!("task {t} chain length disagrees with max_len"));
            }
            for (j, &e) in task.tec.iter().enumerate() {
                let ev = self.events.get(e).ok_or(Error::UnknownEvent(e))?;
                let want = if j == 0 {
                    EventKind::Initial
                } else if j + 1 == task.tec.len() {
                    EventKind::Final
                } else {
                    EventKind::Intermediary
                };
                if ev.kind != want || ev.task != t {
                    return cfg(format!("task {t} chain position {} holds a mismatched event {e}", j + 1));
                }
            }
            if !initials.insert(task.initial()) {
                return cfg(format!("task {t} shares its initial event"));
            }
            if task.length_pmf.len() != task.max_len - MIN_TASK_LEN + 1
                || task.length_pmf.iter().any(|p| !(*p >= 0.0))
                || (task.length_pmf.iter().sum::<f64>() - 1.0).abs() > ROW_TOL
            {
                return cfg(format!("task {t} length distribution is not a pmf over 3..={}", task.max_len));
            }
            if !(task.reward >= 0.0 && task.delay_cost >= 0.0) {
                return cfg(format!("task {t} has a negative reward or delay cost"));
            }
        }
        if self.perfect_map.len() != n {
            return cfg("perfect map does not cover every event".into());
        }
        for (e, ds) in self.perfect_map.iter().enumerate() {
            if ds.is_empty() {
                return cfg(format!("event {e} has no perfect descriptor"));
            }
            for d in ds {
                let ok = d.beliefs.iter().all(|&b| bs.contains(b))
                    && d.depth() >= 2
                    && validate_mask(bs.mask_of(&d.beliefs), bs)
                    && bs.mask_of(&d.beliefs).len() as usize == d.depth();
                if !ok {
                    return cfg(format!("event {e} has a malformed perfect descriptor"));
                }
            }
        }
        for (name, m) in [("p_good", &self.transitions.p_good), ("p_bad", &self.transitions.p_bad)] {
            if m.len() != n || m.iter().any(|r| r.len() != n) {
                return cfg(format!("{name} must be {n}x{n}"));
            }
            for (i, row) in m.iter().enumerate() {
                if row.iter().any(|p| !(*p >= 0.0)) || (row.iter().sum::<f64>() - 1.0).abs() > ROW_TOL {
                    return cfg(format!("{name} row {i} is not a probability vector"));
                }
            }
        }
        Ok(())
    }

    pub fn event(&self, e: usize) -> Result<&Event> {
        self.events.get(e).ok_or(Error::UnknownEvent(e))
    }

    pub fn task(&self, t: usize) -> Result<&TaskSpec> {
        self.tasks.get(t).ok_or(Error::UnknownTask(t))
    }

    pub fn kind(&self, e: usize) -> EventKind {
        self.events[e].kind
    }

    pub fn num_events(&self) -> usize {
        self.events.len()
    }

    /// Perfect descriptors of `e` as masks, sorted.
    pub fn perfect_masks(&self, e: usize) -> &[BeliefMask] {
        &self.perfect_masks[e]
    }

    pub fn is_perfect(&self, e: usize, d: BeliefMask) -> bool {
        self.perfect_masks[e].binary_search(&d).is_ok()
    }

    /// Depth shared by the descriptors of `e` (the generator keeps one depth per event).
    pub fn event_depth(&self, e: usize) -> usize {
        self.perfect_masks[e].iter().map(|m| m.len() as usize).min().unwrap_or(0)
    }

    /// Curriculum step at which every event of task `t` becomes describable.
    pub fn task_step(&self, t: usize) -> usize {
        let tec = &self.tasks[t].tec;
        tec[..tec.len() - 1].iter().map(|&e| self.event_depth(e)).max().unwrap_or(2) - 1
    }

    pub fn max_task_len(&self) -> usize {
        self.tasks.iter().map(|t| t.max_len).max().unwrap_or(0)
    }

    /// Position (1-based) of `e` in its owning task's chain.
    pub fn position(&self, e: usize) -> usize {
        let t = &self.tasks[self.events[e].task];
        t.tec.iter().position(|&x| x == e).expect("event belongs to its task") + 1
    }

    /// Replaces every task's reward and delay cost.
    pub fn set_rewards(&mut self, reward: f64) {
        for t in &mut self.tasks {
            t.reward = reward;
            t.delay_cost = reward;
        }
    }

    /// Same scenario with every belief cost multiplied by `factor`.
    pub fn with_scaled_costs(&self, factor: f64) -> Scenario {
        let mut s = self.clone();
        s.belief_set = self.belief_set.scaled(factor);
        s
    }

    pub fn to_toml(&self) -> Result<String> {
        let body = toml::to_string(self).map_err(|e| Error::Config(format!("serialize scenario: {e}")))?;
        Ok(format!("# semcl scenario\n{body}"))
    }

    pub fn from_toml(text: &str) -> Result<Scenario> {
        let parse_err = |e: toml::de::Error| Error::Parse {
            offset: e.span().map(|s| s.start).unwrap_or(text.len()),
            message: e.message().to_string(),
        };
        let table: toml::Table = toml::from_str(text).map_err(parse_err)?;
        match table.get("version").and_then(toml::Value::as_integer) {
            Some(v) if v == FORMAT_VERSION as i64 => {}
            Some(v) => {
                return Err(Error::Version { found: u32::try_from(v).unwrap_or(u32::MAX), expected: FORMAT_VERSION })
            }
            None => {
                return Err(Error::Parse { offset: 0, message: "missing version header".into() });
            }
        }
        let mut s: Scenario = toml::from_str(text).map_err(parse_err)?;
        s.finish()?;
        Ok(s)
    }
}

pub fn lookup_perfect(e: usize, s: &Scenario) -> Result<&[PerfectDescriptor]> {
    s.perfect_map.get(e).map(Vec::as_slice).ok_or(Error::UnknownEvent(e))
}

pub fn save_scenario(s: &Scenario, path: &Path) -> Result<()> {
    std::fs::write(path, s.to_toml()?)?;
    Ok(())
}

pub fn load_scenario(path: &Path) -> Result<Scenario> {
    Scenario::from_toml(&std::fs::read_to_string(path)?)
}

/// Truncated geometric pmf over `3..=max_len`.
pub fn truncated_geometric(p: f64, max_len: usize) -> Vec<f64> {
    let w: Vec<f64> = (MIN_TASK_LEN..=max_len)
        .scan(1.0, |acc, _| {
            let v = *acc;
            *acc *= 1.0 - p;
            Some(v)
        })
        .collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|x| x / total).collect()
}

pub fn generate_scenario(cfg: &ScenarioConfig, seed: u64) -> Result<Scenario> {
    cfg.validate()?;
    let mut rng = rng::stream(seed, 0, Stream::Scenario);
    let belief_set = draw_costs(cfg, &mut rng)?;

    let lens = draw_task_lengths(cfg, &mut rng);
    let mut events = Vec::with_capacity(cfg.events);
    let mut tasks = Vec::with_capacity(cfg.tasks);
    for (t, &len) in lens.iter().enumerate() {
        let start = events.len();
        for j in 0..len {
            let kind = if j == 0 {
                EventKind::Initial
            } else if j + 1 == len {
                EventKind::Final
            } else {
                EventKind::Intermediary
            };
            events.push(Event { id: start + j, kind, task: t });
        }
        tasks.push(TaskSpec {
            id: t,
            max_len: len,
            length_pmf: truncated_geometric(cfg.length_p, len),
            reward: 0.0,
            delay_cost: 0.0,
            tec: (start..start + len).collect(),
        });
    }

    let pools = descriptor_pools(&belief_set, &mut rng);
    let perfect_map = assign_descriptors(cfg, &belief_set, &events, &tasks, &pools, &mut rng)?;
    let transitions = build_transitions(cfg, &events, &tasks, &mut rng)?;

    let mut s = Scenario::new(seed, belief_set, events, tasks, perfect_map, transitions)?;
    let reward = match cfg.reward {
        Some(r) => r,
        None => {
            let bound = crate::analysis::theorem1_bound(&s);
            if !bound.satisfiable {
                return Err(Error::Config("failure-to-final hazard is not increasing; no reward bound exists".into()));
            }
            cfg.reward_margin * bound.r_min
        }
    };
    s.set_rewards(reward);
    Ok(s)
}

fn draw_costs(cfg: &ScenarioConfig, rng: &mut Rng) -> Result<BeliefSet> {
    let mut tx = Vec::with_capacity(cfg.levels.len());
    for (k, &n) in cfg.levels.iter().enumerate() {
        let low = cfg.cost_low.as_ref().map_or((k + 1) as f64, |v| v[k]);
        tx.push((0..n).map(|_| low + cfg.cost_width * rng.random::<f64>()).collect::<Vec<_>>());
    }
    let inf = tx.iter().map(|l| l.iter().map(|c| c * cfg.infer_ratio).collect()).collect();
    BeliefSet::new(tx, inf)
}

fn draw_task_lengths(cfg: &ScenarioConfig, rng: &mut Rng) -> Vec<usize> {
    let mut lens = vec![cfg.min_len; cfg.tasks];
    for _ in 0..cfg.events - cfg.tasks * cfg.min_len {
        let open: Vec<usize> = (0..cfg.tasks).filter(|&t| lens[t] < cfg.max_len).collect();
        lens[open[rng.random_range(0..open.len())]] += 1;
    }
    lens
}

/// Compatible descriptor pools by depth: `pools[d - 2]` holds every
/// depth-`d` descriptor the hierarchy admits.
///
/// Level-1/level-2 compatibility is a pair of stars around one center belief
/// on each level, so every pair has a sender belief that appears in no other
/// pair. Each deeper tuple extends to exactly one belief of the next level.
fn descriptor_pools(bs: &BeliefSet, rng: &mut Rng) -> Vec<Vec<BeliefMask>> {
    let flat = |k: usize, u: usize| bs.flat(BeliefId::new(k, u));
    let (a, x) = (bs.level_size(1), bs.level_size(2));
    let c1 = rng.random_range(1..=a);
    let c2 = rng.random_range(1..=x);
    let mut pairs: Vec<BeliefMask> = (1..=x)
        .filter(|&y| y != c2)
        .map(|y| BeliefMask::from_flat([flat(1, c1), flat(2, y)]))
        .chain((1..=a).filter(|&z| z != c1).map(|z| BeliefMask::from_flat([flat(1, z), flat(2, c2)])))
        .collect();
    pairs.sort_unstable();

    let mut pools = vec![pairs];
    for k in 3..=bs.levels() {
        let prev = pools.last().expect("pool for depth k-1");
        let m = bs.level_size(k);
        let mut order: Vec<usize> = (0..prev.len()).collect();
        order.shuffle(rng);
        let mut target = vec![0usize; prev.len()];
        if prev.len() >= m {
            let mut beliefs: Vec<usize> = (1..=m).collect();
            beliefs.shuffle(rng);
            for (i, &t) in order.iter().enumerate() {
                target[t] = if i < m { beliefs[i] } else { rng.random_range(1..=m) };
            }
        } else {
            let picked = index::sample(rng, m, prev.len());
            for (i, &t) in order.iter().enumerate() {
                target[t] = picked.index(i) + 1;
            }
        }
        let mut next: Vec<BeliefMask> =
            prev.iter().zip(&target).map(|(t, &u)| t.with(flat(k, u))).collect();
        next.sort_unstable();
        pools.push(next);
    }
    pools
}

fn assign_descriptors(
    cfg: &ScenarioConfig,
    bs: &BeliefSet,
    events: &[Event],
    tasks: &[TaskSpec],
    pools: &[Vec<BeliefMask>],
    rng: &mut Rng,
) -> Result<Vec<Vec<PerfectDescriptor>>> {
    let steps = bs.levels() - 1;
    let mut order: Vec<usize> = (0..tasks.len()).collect();
    order.shuffle(rng);
    let mut task_step = vec![0usize; tasks.len()];
    for (i, &t) in order.iter().enumerate() {
        task_step[t] = i % steps + 1;
    }

    // Every non-final event of a step-s task needs s+1 beliefs, so a task
    // becomes describable all at once.
    let mut depth = vec![2usize; events.len()];
    for (t, task) in tasks.iter().enumerate() {
        for &e in &task.tec[..task.tec.len() - 1] {
            depth[e] = task_step[t] + 1;
        }
    }

    let [lo, hi] = cfg.descriptors_per_event;
    let mut chosen: Vec<Vec<BeliefMask>> = vec![Vec::new(); events.len()];
    for d in 2..=bs.levels() {
        let mut holders: Vec<usize> =
            events.iter().filter(|e| e.kind != EventKind::Final && depth[e.id] == d).map(|e| e.id).collect();
        if holders.is_empty() {
            continue;
        }
        holders.shuffle(rng);
        let mut pool = pools[d - 2].clone();
        pool.shuffle(rng);
        if pool.len() > holders.len() * hi {
            return Err(Error::Config(format!(
                "{} depth-{d} events cannot cover {} distinct depth-{d} descriptors",
                holders.len(),
                pool.len()
            )));
        }
        for (i, &p) in pool.iter().enumerate() {
            chosen[holders[i % holders.len()]].push(p);
        }
        for (i, &e) in holders.iter().enumerate() {
            if i >= pool.len() {
                chosen[e].push(pool[rng.random_range(0..pool.len())]);
            }
            let want = rng.random_range(lo..=hi).min(pool.len());
            while chosen[e].len() < want {
                let p = pool[rng.random_range(0..pool.len())];
                if !chosen[e].contains(&p) {
                    chosen[e].push(p);
                }
            }
        }
    }
    for e in events.iter().filter(|e| e.kind == EventKind::Final) {
        chosen[e.id].push(pools[0][rng.random_range(0..pools[0].len())]);
    }
    Ok(chosen
        .into_iter()
        .map(|ms| {
            let mut ms = ms;
            ms.sort_unstable();
            ms.into_iter().map(|m| PerfectDescriptor { beliefs: bs.ids_of(m) }).collect()
        })
        .collect())
}

fn build_transitions(
    cfg: &ScenarioConfig,
    events: &[Event],
    tasks: &[TaskSpec],
    rng: &mut Rng,
) -> Result<TransitionModel> {
    let n = events.len();
    let mut p_good = vec![vec![0.0; n]; n];
    for task in tasks {
        for (j0, &e) in task.tec.iter().enumerate() {
            let j = j0 + 1;
            if j == task.max_len {
                p_good[e][e] = 1.0;
                continue;
            }
            let q = task.hazard(j);
            p_good[e][task.final_event()] += q;
            p_good[e][task.tec[j]] += 1.0 - q;
        }
    }

    let non_final: Vec<usize> = events.iter().filter(|e| e.kind != EventKind::Final).map(|e| e.id).collect();
    let gamma = Gamma::new(cfg.dirichlet_alpha, 1.0).map_err(|e| Error::Config(e.to_string()))?;
    let mut p_bad = vec![vec![0.0; n]; n];
    for e in 0..n {
        let init = tasks[events[e].task].initial();
        let nnz = p_good[e].iter().filter(|&&p| p > 0.0).count();
        let want = ((cfg.failure_support * n as f64).ceil() as usize).max(2 * nnz).min(non_final.len());
        if want < 2 * nnz {
            return Err(Error::Config(format!(
                "only {} non-final events; failure rows need at least {}",
                non_final.len(),
                2 * nnz
            )));
        }
        let others: Vec<usize> = non_final.iter().copied().filter(|&x| x != init).collect();
        let mut support = vec![init];
        support.extend(index::sample(rng, others.len(), want - 1).iter().map(|i| others[i]));
        let w: Vec<f64> = support.iter().map(|_| gamma.sample(rng).max(f64::MIN_POSITIVE)).collect();
        let total: f64 = w.iter().sum();
        for (&dst, wi) in support.iter().zip(&w) {
            p_bad[e][dst] = (1.0 - cfg.restart_mass) * wi / total;
        }
        p_bad[e][init] += cfg.restart_mass;
    }
    Ok(TransitionModel { p_good, p_bad })
}

//! Bottom-up curriculum: step `l` trains speaker and listener on
//! `(l+1)`-belief descriptions, extracts verified descriptors, freezes the
//! events they solve and hands the found tuples to step `l + 1`.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::agents::{build_spaces, listener_reward, speaker_reward, LearnConfig, ListenerSpaces, QTable, SpeakerSpaces};
use crate::analysis::{self, MetricsReport};
use crate::belief::BeliefMask;
use crate::environment::{reconstruct_event, Description, EnvConfig, Environment, EpisodeLog, Phase, RunTag, Status, Validation};
use crate::error::{Error, Result};
use crate::rng::{self, Rng, Stream};
use crate::scenario::{EventKind, Scenario};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlateauConfig {
    /// Episodes between the two points compared.
    pub window: usize,
    /// Allowed change, relative to `max(1, |Q|)`.
    pub tol: f64,
    /// Episodes between recorded Q samples.
    pub sample_every: usize,
    /// Stop a step once every learnable class has held the plateau for a window.
    pub early_stop: bool,
}

impl Default for PlateauConfig {
    fn default() -> Self {
        Self { window: 500, tol: 1e-3, sample_every: 50, early_stop: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurriculumConfig {
    pub learn: LearnConfig,
    pub env: EnvConfig,
    /// Reconstruction probes per extracted candidate.
    pub verify_trials: usize,
    /// Candidates need `Q >= extract_ratio * max Q` (and `max Q > 0`).
    pub extract_ratio: f64,
    pub plateau: PlateauConfig,
    /// Training rounds per step; rounds after the first search solved events
    /// for further descriptors.
    pub max_rounds: usize,
    /// Episodes per round after the first.
    pub probe_episodes: usize,
    /// Keep per-slot records (needed for slot CSVs and constraint audits).
    pub keep_slots: bool,
}

impl Default for CurriculumConfig {
    fn default() -> Self {
        Self {
            learn: LearnConfig::default(),
            env: EnvConfig::default(),
            verify_trials: 3,
            extract_ratio: 0.9,
            plateau: PlateauConfig::default(),
            max_rounds: 10,
            probe_episodes: 10_000,
            keep_slots: false,
        }
    }
}

impl CurriculumConfig {
    pub fn validate(&self) -> Result<()> {
        self.learn.validate()?;
        self.env.validate()?;
        if self.max_rounds == 0 || self.probe_episodes == 0 {
            return Err(Error::Config("max_rounds and probe_episodes must be positive".into()));
        }
        if self.verify_trials == 0 {
            return Err(Error::Config("verify_trials must be positive".into()));
        }
        if !(self.extract_ratio > 0.0 && self.extract_ratio <= 1.0) {
            return Err(Error::Config("extract_ratio must lie in (0, 1]".into()));
        }
        let p = &self.plateau;
        if p.sample_every == 0 || p.window == 0 || p.window % p.sample_every != 0 {
            return Err(Error::Config("plateau window must be a positive multiple of sample_every".into()));
        }
        Ok(())
    }
}

/// Stored behaviour for an event solved at an earlier step, with running
/// value estimates used to bootstrap from it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frozen {
    pub description: Description,
    pub step: usize,
    pub speaker_value: f64,
    pub listener_value: f64,
}

/// Q-tables and spaces of one trained step.
#[derive(Debug, Clone)]
pub struct StepTables {
    pub speaker_spaces: SpeakerSpaces,
    pub listener_spaces: ListenerSpaces,
    pub speaker: QTable,
    pub listener: QTable,
}

impl StepTables {
    pub fn greedy(&self, e: usize) -> Result<Description> {
        let a = self.speaker.greedy(e)?;
        let b = self.listener.greedy(a)?;
        Ok(Description::new(
            self.speaker_spaces.actions[a],
            BeliefMask::single(self.listener_spaces.actions[a][b]),
        ))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QSample {
    /// Episode index within the step.
    pub episode: usize,
    pub initial: Option<f64>,
    pub intermediary: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepReport {
    pub step: usize,
    /// Training episodes over all rounds.
    pub episodes: usize,
    pub rounds: usize,
    /// Set when the first round stopped on the plateau rule.
    pub early_stopped: bool,
    pub speaker_keys: usize,
    pub listener_keys: usize,
    pub learnable_events: usize,
    pub new_descriptors: usize,
    pub hierarchy_size: usize,
    /// Mean greedy speaker Q over the step's learnable events, by kind,
    /// during the first round.
    pub q_series: Vec<QSample>,
    pub plateau_initial: Option<usize>,
    pub plateau_intermediary: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct CurriculumState {
    /// Last completed step (0 before the first).
    pub step: usize,
    pub remaining: BeliefMask,
    /// `hierarchy_out[l - 1]` holds the `(l+1)`-tuples found at step `l`.
    pub hierarchy_out: Vec<Vec<BeliefMask>>,
    /// Verified perfect descriptors found so far, by event.
    pub event_out: Vec<BTreeSet<BeliefMask>>,
    pub frozen: Vec<Option<Frozen>>,
    pub step_logs: Vec<StepReport>,
    pub tables: Vec<StepTables>,
}

impl CurriculumState {
    pub fn new(s: &Scenario) -> Self {
        Self {
            step: 0,
            remaining: s.belief_set.all(),
            hierarchy_out: Vec::new(),
            event_out: vec![BTreeSet::new(); s.num_events()],
            frozen: vec![None; s.num_events()],
            step_logs: Vec::new(),
            tables: Vec::new(),
        }
    }

    /// Greedy behaviour after training: frozen descriptors where known,
    /// otherwise the last trained step's greedy pair.
    pub fn policy(&self, e: usize) -> Description {
        if let Some(f) = &self.frozen[e] {
            return f.description;
        }
        match self.tables.last() {
            Some(t) => t.greedy(e).unwrap_or_default(),
            None => Description::default(),
        }
    }

    /// Beliefs never placed in any extracted tuple.
    pub fn leftover(&self) -> BeliefMask {
        self.remaining
    }
}

/// Random streams used by one curriculum run.
pub struct Streams {
    pub env: Rng,
    pub speaker: Rng,
    pub listener: Rng,
    pub verify: Rng,
}

impl Streams {
    pub fn new(base_seed: u64, replica: u64) -> Self {
        Self {
            env: rng::stream(base_seed, replica, Stream::Environment),
            speaker: rng::stream(base_seed, replica, Stream::Speaker),
            listener: rng::stream(base_seed, replica, Stream::Listener),
            verify: rng::stream(base_seed, replica, Stream::Verify),
        }
    }
}

/// Drives curriculum steps and records every training slot.
pub struct Trainer<'a> {
    pub scenario: &'a Scenario,
    pub cfg: CurriculumConfig,
    pub log: EpisodeLog,
    pub streams: Streams,
    next_episode: usize,
}

#[derive(Clone, Copy)]
enum ListenerKey {
    Table(usize, usize),
    Frozen(BeliefMask),
}

impl<'a> Trainer<'a> {
    pub fn new(scenario: &'a Scenario, cfg: CurriculumConfig, streams: Streams) -> Result<Self> {
        cfg.validate()?;
        let log = EpisodeLog::new(RunTag::Cl, cfg.keep_slots);
        Ok(Self { scenario, cfg, log, streams, next_episode: 0 })
    }

    /// Episodes played so far, across steps.
    pub fn episodes_played(&self) -> usize {
        self.next_episode
    }

    pub fn run_cl_step(&mut self, l: usize, mut cs: CurriculumState) -> Result<CurriculumState> {
        let s = self.scenario;
        if l >= 2 && cs.hierarchy_out.get(l - 2).is_none_or(Vec::is_empty) {
            return Err(Error::EmptyPriorHierarchy { step: l });
        }
        let mut report = StepReport {
            step: l,
            episodes: 0,
            rounds: 0,
            early_stopped: false,
            speaker_keys: 0,
            listener_keys: 0,
            learnable_events: 0,
            new_descriptors: 0,
            hierarchy_size: 0,
            q_series: Vec::new(),
            plateau_initial: None,
            plateau_intermediary: None,
        };
        if l >= s.belief_set.levels() {
            cs.step = l;
            cs.hierarchy_out.push(Vec::new());
            cs.step_logs.push(report);
            return Ok(cs);
        }
        let prior: Vec<BeliefMask> = if l == 1 { Vec::new() } else { cs.hierarchy_out[l - 2].clone() };
        let (sp, lp) = build_spaces(l, s, &prior)?;
        let n_events = s.num_events();
        let open = |e: usize| s.kind(e) != EventKind::Final && cs.frozen[e].is_none() && s.event_depth(e) == l + 1;
        report.learnable_events = (0..n_events).filter(|&e| open(e)).count();

        // Round 0 trains every open event. Each later round probes at most one
        // solved event per task: its known descriptors are masked from the
        // speaker while the task's other solved events replay their best one.
        let mut found: Vec<Vec<Candidate>> = vec![Vec::new(); n_events];
        let mut exhausted = vec![false; n_events];
        let mut first_tables = None;
        for round in 0..self.cfg.max_rounds {
            let mut frozen = cs.frozen.clone();
            let mut feasible = vec![sp.feasible.clone(); n_events];
            let mut probes = Vec::new();
            if round > 0 {
                for t in &s.tasks {
                    let pick = t.tec.iter().copied().find(|&e| open(e) && !found[e].is_empty() && !exhausted[e]);
                    probes.extend(pick);
                }
                if probes.is_empty() {
                    break;
                }
                for e in (0..n_events).filter(|&e| open(e) && !found[e].is_empty()) {
                    if probes.contains(&e) {
                        feasible[e].retain(|&a| found[e].iter().all(|c| !sp.actions[a].is_subset(c.description.completed())));
                    }
                    if feasible[e].is_empty() || !probes.contains(&e) {
                        frozen[e] = Some(found[e][0].freeze(l));
                    }
                }
            }
            let learnable: Vec<usize> = (0..n_events).filter(|&e| open(e) && frozen[e].is_none()).collect();
            let episodes = if round == 0 { self.cfg.learn.episodes_per_step } else { self.cfg.probe_episodes };
            let before = self.next_episode;
            let (tables, series, early) = self.train_round(l, &sp, &lp, &frozen, feasible, &learnable, episodes)?;
            report.rounds += 1;
            report.episodes += self.next_episode - before;
            let cands = extract_outputs(l, &tables, s, &frozen, &self.cfg, &mut self.streams.verify);
            for (e, cs_e) in cands.into_iter().enumerate() {
                let mut new = false;
                for c in cs_e {
                    if found[e].iter().all(|f| f.description.completed() != c.description.completed()) {
                        found[e].push(c);
                        new = true;
                    }
                }
                if probes.contains(&e) && !new {
                    exhausted[e] = true;
                }
            }
            for &e in &probes {
                // A probe with every action masked has nothing left to find.
                if frozen[e].is_some() {
                    exhausted[e] = true;
                }
            }
            if round == 0 {
                report.early_stopped = early;
                report.speaker_keys = tables.speaker.key_count();
                report.listener_keys = tables.listener.key_count();
                report.plateau_initial = plateau_episode(&series, &self.cfg.plateau, |q| q.initial);
                report.plateau_intermediary = plateau_episode(&series, &self.cfg.plateau, |q| q.intermediary);
                report.q_series = series;
                first_tables = Some(tables);
            }
        }

        let mut hierarchy: BTreeSet<BeliefMask> = BTreeSet::new();
        for (e, cands) in found.iter().enumerate() {
            for c in cands {
                if cs.event_out[e].insert(c.description.completed()) {
                    report.new_descriptors += 1;
                }
                hierarchy.insert(c.description.completed());
            }
            if let Some(best) = cands.first() {
                cs.frozen[e] = Some(best.freeze(l));
            }
        }
        for h in &hierarchy {
            cs.remaining = cs.remaining.difference(*h);
        }
        report.hierarchy_size = hierarchy.len();
        cs.hierarchy_out.push(hierarchy.into_iter().collect());
        cs.step = l;
        cs.step_logs.push(report);
        if let Some(t) = first_tables {
            cs.tables.push(t);
        }
        Ok(cs)
    }

    /// One round of joint training with fresh tables. Returns the tables, the
    /// sampled Q series and whether the plateau rule stopped it early.
    fn train_round(
        &mut self,
        l: usize,
        sp: &SpeakerSpaces,
        lp: &ListenerSpaces,
        frozen: &[Option<Frozen>],
        speaker_feasible: Vec<Vec<usize>>,
        learnable: &[usize],
        episodes: usize,
    ) -> Result<(StepTables, Vec<QSample>, bool)> {
        let s = self.scenario;
        let mut qs = QTable::with_feasible(&vec![sp.actions.len(); sp.n_states], speaker_feasible);
        let mut ql = lp.table();
        let mut v_s: Vec<f64> = frozen.iter().map(|f| f.map_or(0.0, |f| f.speaker_value)).collect();
        let mut v_l: HashMap<BeliefMask, f64> = HashMap::new();
        for f in frozen.iter().flatten() {
            v_l.insert(f.description.speaker, f.listener_value);
        }

        let env = Environment::new(s, &self.cfg.env, Validation::Strict);
        let learn = self.cfg.learn.clone();
        let gamma = learn.gamma;
        let pc = self.cfg.plateau.clone();
        let mut series = Vec::new();
        let mut early = false;
        for ep in 0..episodes {
            let eps = learn.epsilon(ep);
            let m = self.next_episode;
            let task = env.scheduled_task(m);
            let spec = &s.tasks[task];
            let mut st = env.start_episode(m, task)?;
            let mut pending: Option<(ListenerKey, f64)> = None;
            loop {
                let e = st.current;
                let (desc, sa, key) = match &frozen[e] {
                    Some(f) => (f.description, None, ListenerKey::Frozen(f.description.speaker)),
                    None => {
                        let a = qs.select_action(e, eps, &mut self.streams.speaker)?;
                        let b = ql.select_action(a, eps, &mut self.streams.listener)?;
                        let d = Description::new(sp.actions[a], BeliefMask::single(lp.actions[a][b]));
                        (d, Some(a), ListenerKey::Table(a, b))
                    }
                };
                if let Some((prev, r)) = pending.take() {
                    let boot = listener_value(&ql, &v_l, key)?;
                    apply_listener(&mut ql, &mut v_l, prev, r + gamma * boot, &learn);
                }

                let (out, next) = env.run_slot(&st, desc, &mut self.streams.env)?;
                self.log.record_slot(&st, &out, l, Phase::Train);
                let rs = speaker_reward(&out, out.next_kind, spec);
                let rl = listener_reward(&out, out.next_kind, spec);
                let terminal = out.next_kind == EventKind::Final;
                let boot_s = if terminal {
                    0.0
                } else if frozen[out.next_event].is_some() {
                    v_s[out.next_event]
                } else {
                    qs.max_q(out.next_event)?
                };
                match sa {
                    Some(a) => qs.apply_target(e, a, rs + gamma * boot_s, &learn),
                    None => v_s[e] += learn.beta * (rs + gamma * boot_s - v_s[e]),
                }
                st = next;
                if terminal {
                    apply_listener(&mut ql, &mut v_l, key, rl, &learn);
                    break;
                }
                if st.status == Status::Capped {
                    let nk = match &frozen[st.current] {
                        Some(f) => ListenerKey::Frozen(f.description.speaker),
                        None => {
                            let a = qs.greedy(st.current)?;
                            ListenerKey::Table(a, ql.greedy(a)?)
                        }
                    };
                    let boot = listener_value(&ql, &v_l, nk)?;
                    apply_listener(&mut ql, &mut v_l, key, rl + gamma * boot, &learn);
                    break;
                }
                pending = Some((key, rl));
            }
            self.log.close_episode(&st, l, Phase::Train);
            self.next_episode += 1;

            if (ep + 1) % pc.sample_every == 0 {
                series.push(QSample {
                    episode: ep + 1,
                    initial: class_mean(s, &qs, learnable, EventKind::Initial),
                    intermediary: class_mean(s, &qs, learnable, EventKind::Intermediary),
                });
                if pc.early_stop && holds_plateau(&series, &pc) {
                    early = true;
                    break;
                }
            }
        }
        let tables = StepTables { speaker_spaces: sp.clone(), listener_spaces: lp.clone(), speaker: qs, listener: ql };
        Ok((tables, series, early))
    }

    /// Runs steps until every belief is placed, a step finds nothing new, or
    /// `l` reaches `B - 1`.
    pub fn run(&mut self) -> Result<CurriculumState> {
        let s = self.scenario;
        let mut cs = CurriculumState::new(s);
        let last = s.belief_set.total_count().saturating_sub(1).max(1);
        let mut l = 1;
        loop {
            cs = self.run_cl_step(l, cs)?;
            if l == 1 && cs.hierarchy_out[0].is_empty() {
                return Err(Error::Unsolvable);
            }
            if cs.remaining.is_empty() || cs.hierarchy_out[l - 1].is_empty() || l >= last {
                return Ok(cs);
            }
            l += 1;
        }
    }
}

fn listener_value(ql: &QTable, v_l: &HashMap<BeliefMask, f64>, key: ListenerKey) -> Result<f64> {
    match key {
        ListenerKey::Table(a, _) => ql.max_q(a),
        ListenerKey::Frozen(m) => Ok(v_l.get(&m).copied().unwrap_or(0.0)),
    }
}

fn apply_listener(ql: &mut QTable, v_l: &mut HashMap<BeliefMask, f64>, key: ListenerKey, target: f64, cfg: &LearnConfig) {
    match key {
        ListenerKey::Table(a, b) => ql.apply_target(a, b, target, cfg),
        ListenerKey::Frozen(m) => {
            let v = v_l.entry(m).or_insert(0.0);
            *v += cfg.beta * (target - *v);
        }
    }
}

fn class_mean(s: &Scenario, qs: &QTable, events: &[usize], kind: EventKind) -> Option<f64> {
    let vals: Vec<f64> = events.iter().filter(|&&e| s.kind(e) == kind).filter_map(|&e| qs.max_q(e).ok()).collect();
    if vals.is_empty() {
        None
    } else {
        Some(vals.iter().sum::<f64>() / vals.len() as f64)
    }
}

fn within(y: f64, prev: f64, tol: f64) -> bool {
    (y - prev).abs() < tol * y.abs().max(1.0)
}

/// First sampled episode from which every later sample stays within the
/// tolerance of the sample one window earlier.
pub fn plateau_episode<F>(series: &[QSample], pc: &PlateauConfig, pick: F) -> Option<usize>
where
    F: Fn(&QSample) -> Option<f64>,
{
    let lag = pc.window / pc.sample_every;
    let vals: Vec<Option<f64>> = series.iter().map(&pick).collect();
    if vals.iter().any(Option::is_none) || vals.len() <= lag {
        return None;
    }
    let vals: Vec<f64> = vals.into_iter().flatten().collect();
    let mut start = None;
    for i in lag..vals.len() {
        if within(vals[i], vals[i - lag], pc.tol) {
            start.get_or_insert(series[i].episode);
        } else {
            start = None;
        }
    }
    start
}

fn holds_plateau(series: &[QSample], pc: &PlateauConfig) -> bool {
    let Some(last) = series.last().map(|q| q.episode) else { return false };
    let picks: [fn(&QSample) -> Option<f64>; 2] = [|q| q.initial, |q| q.intermediary];
    picks.iter().all(|pick| {
        series.iter().all(|q| pick(q).is_none())
            || plateau_episode(series, pc, pick).is_some_and(|start| last - start >= pc.window)
    })
}

/// Verified candidate for one event.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub description: Description,
    pub speaker_q: f64,
    pub listener_q: f64,
}

impl Candidate {
    fn freeze(&self, step: usize) -> Frozen {
        Frozen { description: self.description, step, speaker_value: self.speaker_q, listener_value: self.listener_q }
    }
}

/// Per event, verified candidates sorted by descending speaker Q. Frozen and
/// final events are skipped.
pub fn extract_outputs(
    l: usize,
    t: &StepTables,
    s: &Scenario,
    frozen: &[Option<Frozen>],
    cfg: &CurriculumConfig,
    rng: &mut Rng,
) -> Vec<Vec<Candidate>> {
    debug_assert_eq!(t.speaker_spaces.step, l);
    let mut out = vec![Vec::new(); s.num_events()];
    for e in 0..s.num_events() {
        if s.kind(e) == EventKind::Final || frozen[e].is_some() {
            continue;
        }
        let Ok(max) = t.speaker.max_q(e) else { continue };
        if !(max > 0.0) {
            continue;
        }
        let mut cands = Vec::new();
        for a in t.speaker.feasible(e) {
            let q = t.speaker.get(e, a);
            if q < cfg.extract_ratio * max {
                continue;
            }
            let Ok(b) = t.listener.greedy(a) else { continue };
            let d = Description::new(
                t.speaker_spaces.actions[a],
                BeliefMask::single(t.listener_spaces.actions[a][b]),
            );
            if (0..cfg.verify_trials).all(|_| reconstruct_event(e, &d, s, rng) == e) {
                cands.push(Candidate { description: d, speaker_q: q, listener_q: t.listener.get(a, b) });
            }
        }
        cands.sort_by(|x, y| y.speaker_q.total_cmp(&x.speaker_q));
        out[e] = cands;
    }
    out
}

/// Result of a full curriculum run on one replica.
#[derive(Debug, Clone)]
pub struct CurriculumOutcome {
    pub state: CurriculumState,
    pub log: EpisodeLog,
    pub training: MetricsReport,
}

pub fn run_curriculum(s: &Scenario, cfg: &CurriculumConfig, base_seed: u64, replica: u64) -> Result<CurriculumOutcome> {
    let mut trainer = Trainer::new(s, cfg.clone(), Streams::new(base_seed, replica))?;
    let state = trainer.run()?;
    let training = analysis::summarize(&trainer.log.episodes, cfg.learn.gamma, &analysis::default_window_caps(s))?;
    Ok(CurriculumOutcome { state, log: trainer.log, training })
}

/// Plays `episodes` greedy episodes without learning and appends them to `log`.
pub fn evaluate<F>(
    s: &Scenario,
    env_cfg: &EnvConfig,
    validation: Validation,
    episodes: usize,
    first_episode: usize,
    policy: F,
    rng: &mut Rng,
    log: &mut EpisodeLog,
) -> Result<()>
where
    F: Fn(usize) -> Description,
{
    let env = Environment::new(s, env_cfg, validation);
    for i in 0..episodes {
        let m = first_episode + i;
        let mut st = env.start_episode(m, env.scheduled_task(m))?;
        while !st.is_terminal() {
            let (out, next) = env.run_slot(&st, policy(st.current), rng)?;
            log.record_slot(&st, &out, 0, Phase::Eval);
            st = next;
        }
        log.close_episode(&st, 0, Phase::Eval);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{generate_scenario, ScenarioConfig};

    fn small_cfg(episodes: usize) -> CurriculumConfig {
        CurriculumConfig {
            learn: LearnConfig { episodes_per_step: episodes, ..Default::default() },
            probe_episodes: episodes,
            keep_slots: true,
            ..Default::default()
        }
    }

    #[test]
    fn two_level_toy_recovers_ground_truth() {
        let cfg = ScenarioConfig {
            levels: vec![2, 2],
            events: 3,
            tasks: 1,
            min_len: 3,
            max_len: 3,
            reward_margin: 10.0,
            ..Default::default()
        };
        let s = generate_scenario(&cfg, 2).unwrap();
        let out = run_curriculum(&s, &small_cfg(5000), 1, 0).unwrap();
        let oracle = analysis::brute_force_perfect_descriptors(&s).unwrap();
        for e in 0..s.num_events() {
            if s.kind(e) != EventKind::Final {
                assert_eq!(out.state.event_out[e], oracle[e], "event {e}");
            }
        }
    }

    #[test]
    fn later_step_without_prior_output_is_an_error() {
        let cfg = ScenarioConfig { levels: vec![2, 2, 2], events: 6, tasks: 2, min_len: 3, max_len: 3, ..Default::default() };
        let s = generate_scenario(&cfg, 2).unwrap();
        let mut t = Trainer::new(&s, small_cfg(10), Streams::new(0, 0)).unwrap();
        let cs = CurriculumState::new(&s);
        assert!(matches!(t.run_cl_step(2, cs), Err(Error::EmptyPriorHierarchy { step: 2 })));
    }

    #[test]
    fn plateau_detection() {
        let pc = PlateauConfig { window: 100, tol: 1e-3, sample_every: 50, early_stop: false };
        let ys = [0.0, 5.0, 9.0, 10.0, 10.0, 10.0, 10.0];
        let series: Vec<QSample> = ys
            .iter()
            .enumerate()
            .map(|(i, &y)| QSample { episode: (i + 1) * 50, initial: Some(y), intermediary: None })
            .collect();
        assert_eq!(plateau_episode(&series, &pc, |q| q.initial), Some(300));
        assert_eq!(plateau_episode(&series, &pc, |q| q.intermediary), None);
    }
}

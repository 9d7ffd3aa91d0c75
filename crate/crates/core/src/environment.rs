//! Episode engine: reconstruction, transitions, slot costs and the episode log.

use std::io::Write;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::belief::{validate_mask, BeliefMask, BeliefSet};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::scenario::{EventKind, Scenario};

/// Whether `run_slot` rejects completed descriptions that break the hierarchy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Validation {
    Strict,
    /// Invalid structures are scored and simply fail reconstruction.
    Permissive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash)]
pub struct Description {
    pub speaker: BeliefMask,
    pub listener: BeliefMask,
}

impl Description {
    pub fn new(speaker: BeliefMask, listener: BeliefMask) -> Self {
        Self { speaker, listener }
    }

    pub fn completed(&self) -> BeliefMask {
        self.speaker.union(self.listener)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    /// Weight of the speaker cost in the slot cost.
    pub alpha: f64,
    /// Episodes stop after `slot_cap_factor * max_len` slots without a final event.
    pub slot_cap_factor: usize,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self { alpha: 0.5, slot_cap_factor: 10 }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config("alpha must lie in [0, 1]".into()));
        }
        if self.slot_cap_factor == 0 {
            return Err(Error::Config("slot_cap_factor must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Status {
    Running,
    Completed,
    Capped,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeState {
    pub episode: usize,
    /// 1-based index of the next slot to play.
    pub slot: usize,
    pub task: usize,
    pub current: usize,
    /// Slots elapsed so far; equals the task execution time once completed.
    pub elapsed: usize,
    pub alpha: f64,
    pub slot_cap: usize,
    pub status: Status,
}

impl EpisodeState {
    pub fn is_terminal(&self) -> bool {
        self.status != Status::Running
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlotOutcome {
    pub observed: usize,
    pub reconstructed: usize,
    pub description: Description,
    pub speaker_cost: f64,
    pub listener_cost: f64,
    pub total_cost: f64,
    pub tx_count: u32,
    pub next_event: usize,
    pub next_kind: EventKind,
}

impl SlotOutcome {
    pub fn success(&self) -> bool {
        self.observed == self.reconstructed
    }
}

/// Returns `observed` iff the completed description is perfect for it,
/// otherwise a uniformly drawn different event.
pub fn reconstruct_event(observed: usize, d: &Description, s: &Scenario, rng: &mut Rng) -> usize {
    if s.is_perfect(observed, d.completed()) {
        return observed;
    }
    let n = s.num_events();
    let r = rng.random_range(0..n - 1);
    if r >= observed {
        r + 1
    } else {
        r
    }
}

/// Samples the next event from the good row on success, the bad row otherwise.
pub fn step_transition(current: usize, reconstructed: usize, s: &Scenario, rng: &mut Rng) -> usize {
    let row = if reconstructed == current { &s.transitions.p_good[current] } else { &s.transitions.p_bad[current] };
    sample_row(row, rng)
}

fn sample_row(row: &[f64], rng: &mut Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in row.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    last
}

pub fn speaker_cost(bs: &BeliefSet, d: &Description) -> f64 {
    bs.tx_cost_of(d.speaker)
}

pub fn listener_cost(bs: &BeliefSet, d: &Description) -> f64 {
    bs.infer_cost_of(d.listener)
}

pub fn total_cost(alpha: f64, c_s: f64, c_l: f64) -> f64 {
    alpha * c_s + (1.0 - alpha) * c_l
}

#[derive(Debug, Clone)]
pub struct Environment<'a> {
    pub scenario: &'a Scenario,
    pub alpha: f64,
    pub slot_cap_factor: usize,
    pub validation: Validation,
}

impl<'a> Environment<'a> {
    pub fn new(scenario: &'a Scenario, cfg: &EnvConfig, validation: Validation) -> Self {
        Self { scenario, alpha: cfg.alpha, slot_cap_factor: cfg.slot_cap_factor, validation }
    }

    /// Round-robin task schedule.
    pub fn scheduled_task(&self, m: usize) -> usize {
        m % self.scenario.tasks.len()
    }

    pub fn start_episode(&self, m: usize, task: usize) -> Result<EpisodeState> {
        let t = self.scenario.task(task)?;
        Ok(EpisodeState {
            episode: m,
            slot: 1,
            task,
            current: t.initial(),
            elapsed: 0,
            alpha: self.alpha,
            slot_cap: self.slot_cap_factor * t.max_len,
            status: Status::Running,
        })
    }

    pub fn run_slot(
        &self,
        st: &EpisodeState,
        d: Description,
        rng: &mut Rng,
    ) -> Result<(SlotOutcome, EpisodeState)> {
        if st.is_terminal() {
            return Err(Error::EpisodeTerminated);
        }
        let overlap = d.speaker.intersection(d.listener);
        if !overlap.is_empty() {
            return Err(Error::OverlappingParts(overlap.len()));
        }
        let s = self.scenario;
        if self.validation == Validation::Strict && !validate_mask(d.completed(), &s.belief_set) {
            return Err(Error::InvalidStructure);
        }
        let c_s = speaker_cost(&s.belief_set, &d);
        let c_l = listener_cost(&s.belief_set, &d);
        let reconstructed = reconstruct_event(st.current, &d, s, rng);
        let next = step_transition(st.current, reconstructed, s, rng);
        let next_kind = s.kind(next);

        let mut after = st.clone();
        after.slot += 1;
        after.elapsed += 1;
        after.current = next;
        if next_kind == EventKind::Final {
            // The final event is observed in one more slot and never described.
            after.elapsed += 1;
            after.status = Status::Completed;
        } else if after.elapsed >= st.slot_cap {
            after.status = Status::Capped;
        }
        let outcome = SlotOutcome {
            observed: st.current,
            reconstructed,
            description: d,
            speaker_cost: c_s,
            listener_cost: c_l,
            total_cost: total_cost(st.alpha, c_s, c_l),
            tx_count: d.speaker.len(),
            next_event: next,
            next_kind,
        };
        Ok((outcome, after))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunTag {
    Cl,
    Flat,
}

impl RunTag {
    pub fn as_str(self) -> &'static str {
        match self {
            RunTag::Cl => "cl",
            RunTag::Flat => "flat",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Train,
    Eval,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlotRecord {
    pub m: u32,
    pub n: u16,
    pub task: u16,
    pub step: u8,
    pub phase: Phase,
    pub observed: u16,
    pub reconstructed: u16,
    pub next: u16,
    pub next_kind: EventKind,
    pub tx: BeliefMask,
    pub inf: BeliefMask,
    pub c_s: f64,
    pub c_l: f64,
    pub c_t: f64,
}

/// Per-episode totals accumulated while the episode runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeSummary {
    pub m: usize,
    pub task: usize,
    pub step: usize,
    pub phase: Phase,
    pub x: usize,
    pub cost: f64,
    pub sum_w: u64,
    pub completed: bool,
}

impl EpisodeSummary {
    pub fn efficiency(&self) -> f64 {
        if self.sum_w == 0 {
            0.0
        } else {
            1.0 / self.sum_w as f64
        }
    }
}

#[derive(Debug, Clone)]
pub struct EpisodeLog {
    pub run: RunTag,
    pub keep_slots: bool,
    pub slots: Vec<SlotRecord>,
    pub episodes: Vec<EpisodeSummary>,
    open: Option<(f64, u64)>,
}

pub const SLOT_HEADER: &str = "run,phase,step,m,n,task,observed,reconstructed,n_tx,n_inf,c_s,c_l,c_t,success,tx,inf";
pub const EPISODE_HEADER: &str = "run,phase,step,m,task,x,cost,sum_w,efficiency,completed";

impl EpisodeLog {
    pub fn new(run: RunTag, keep_slots: bool) -> Self {
        Self { run, keep_slots, slots: Vec::new(), episodes: Vec::new(), open: None }
    }

    pub fn record_slot(&mut self, st: &EpisodeState, out: &SlotOutcome, step: usize, phase: Phase) {
        let acc = self.open.get_or_insert((0.0, 0));
        acc.0 += out.total_cost;
        acc.1 += u64::from(out.tx_count);
        if self.keep_slots {
            self.slots.push(SlotRecord {
                m: st.episode as u32,
                n: st.slot as u16,
                task: st.task as u16,
                step: step as u8,
                phase,
                observed: out.observed as u16,
                reconstructed: out.reconstructed as u16,
                next: out.next_event as u16,
                next_kind: out.next_kind,
                tx: out.description.speaker,
                inf: out.description.listener,
                c_s: out.speaker_cost,
                c_l: out.listener_cost,
                c_t: out.total_cost,
            });
        }
    }

    pub fn close_episode(&mut self, st: &EpisodeState, step: usize, phase: Phase) -> EpisodeSummary {
        let (cost, sum_w) = self.open.take().unwrap_or((0.0, 0));
        let summary = EpisodeSummary {
            m: st.episode,
            task: st.task,
            step,
            phase,
            x: st.elapsed,
            cost,
            sum_w,
            completed: st.status == Status::Completed,
        };
        self.episodes.push(summary);
        summary
    }

    pub fn write_slots_csv<W: Write>(&self, bs: &BeliefSet, mut w: W) -> Result<()> {
        writeln!(w, "{SLOT_HEADER}")?;
        let fmt = |m: BeliefMask| bs.ids_of(m).iter().map(ToString::to_string).collect::<Vec<_>>().join(";");
        for r in &self.slots {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                self.run.as_str(),
                phase_str(r.phase),
                r.step,
                r.m,
                r.n,
                r.task,
                r.observed,
                r.reconstructed,
                r.tx.len(),
                r.inf.len(),
                r.c_s,
                r.c_l,
                r.c_t,
                u8::from(r.observed == r.reconstructed),
                fmt(r.tx),
                fmt(r.inf)
            )?;
        }
        Ok(())
    }

    pub fn write_episodes_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{EPISODE_HEADER}")?;
        for e in &self.episodes {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{}",
                self.run.as_str(),
                phase_str(e.phase),
                e.step,
                e.m,
                e.task,
                e.x,
                e.cost,
                e.sum_w,
                e.efficiency(),
                u8::from(e.completed)
            )?;
        }
        Ok(())
    }
}

fn phase_str(p: Phase) -> &'static str {
    match p {
        Phase::Train => "train",
        Phase::Eval => "eval",
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::belief::BeliefId;
    use crate::rng::{stream, Stream};
    use crate::scenario::{generate_scenario, ScenarioConfig};

    fn toy() -> Scenario {
        let cfg = ScenarioConfig { levels: vec![2, 3, 4], events: 12, tasks: 4, min_len: 3, max_len: 3, ..Default::default() };
        generate_scenario(&cfg, 11).unwrap()
    }

    #[test]
    fn perfect_description_reconstructs() {
        let s = toy();
        let mut rng = stream(1, 0, Stream::Environment);
        for e in 0..s.num_events() {
            let d = Description::new(s.perfect_masks(e)[0], BeliefMask::EMPTY);
            assert_eq!(reconstruct_event(e, &d, &s, &mut rng), e);
        }
    }

    #[test]
    fn superset_of_perfect_fails() {
        let s = toy();
        let mut rng = stream(1, 0, Stream::Environment);
        let bs = &s.belief_set;
        let e = (0..s.num_events()).find(|&e| s.event_depth(e) == 2).unwrap();
        let extra = bs.flat(BeliefId::new(3, 1));
        let d = Description::new(s.perfect_masks(e)[0].with(extra), BeliefMask::EMPTY);
        assert!(validate_mask(d.completed(), bs));
        for _ in 0..50 {
            assert_ne!(reconstruct_event(e, &d, &s, &mut rng), e);
        }
    }

    #[test]
    fn slot_costs_mix_by_alpha() {
        let s = toy();
        let env = Environment::new(&s, &EnvConfig::default(), Validation::Strict);
        let bs = &s.belief_set;
        let st = env.start_episode(0, 0).unwrap();
        let b1 = bs.flat(BeliefId::new(1, 1));
        let b2 = bs.flat(BeliefId::new(2, 1));
        let d = Description::new(BeliefMask::single(b1), BeliefMask::single(b2));
        let mut rng = stream(1, 0, Stream::Environment);
        let (out, next) = env.run_slot(&st, d, &mut rng).unwrap();
        let cs = bs.tx_cost_flat(b1);
        let cl = bs.infer_cost_flat(b2);
        assert_eq!(out.speaker_cost, cs);
        assert_eq!(out.listener_cost, cl);
        assert_eq!(out.total_cost, 0.5 * cs + 0.5 * cl);
        assert_eq!(out.tx_count, 1);
        assert_eq!(next.slot, 2);
    }

    #[test]
    fn empty_listener_part_costs_nothing() {
        let s = toy();
        let env = Environment::new(&s, &EnvConfig::default(), Validation::Permissive);
        let st = env.start_episode(0, 1).unwrap();
        let d = Description::new(BeliefMask::single(0), BeliefMask::EMPTY);
        let (out, _) = env.run_slot(&st, d, &mut stream(2, 0, Stream::Environment)).unwrap();
        assert_eq!(out.listener_cost, 0.0);
    }

    #[test]
    fn overlap_and_structure_errors() {
        let s = toy();
        let env = Environment::new(&s, &EnvConfig::default(), Validation::Strict);
        let st = env.start_episode(0, 0).unwrap();
        let mut rng = stream(1, 0, Stream::Environment);
        let both = Description::new(BeliefMask::single(0), BeliefMask::single(0));
        assert!(matches!(env.run_slot(&st, both, &mut rng), Err(Error::OverlappingParts(1))));
        let same_level = Description::new(BeliefMask::single(0), BeliefMask::single(1));
        assert!(matches!(env.run_slot(&st, same_level, &mut rng), Err(Error::InvalidStructure)));
        let loose = Environment::new(&s, &EnvConfig::default(), Validation::Permissive);
        assert!(loose.run_slot(&st, same_level, &mut rng).is_ok());
    }

    #[test]
    fn cap_marks_episode_failed() {
        let s = toy();
        let env = Environment::new(&s, &EnvConfig { alpha: 0.5, slot_cap_factor: 1 }, Validation::Permissive);
        let mut st = env.start_episode(0, 0).unwrap();
        let mut rng = stream(3, 0, Stream::Environment);
        // The empty description always fails, and failures never reach a final event.
        while !st.is_terminal() {
            st = env.run_slot(&st, Description::default(), &mut rng).unwrap().1;
        }
        assert_eq!(st.status, Status::Capped);
        assert_eq!(st.elapsed, st.slot_cap);
        assert!(matches!(
            env.run_slot(&st, Description::default(), &mut rng),
            Err(Error::EpisodeTerminated)
        ));
    }

    #[test]
    fn start_and_round_robin() {
        let s = toy();
        let env = Environment::new(&s, &EnvConfig::default(), Validation::Strict);
        let st = env.start_episode(5, 2).unwrap();
        assert_eq!(st.current, s.tasks[2].initial());
        assert_eq!(st.slot, 1);
        let order: Vec<usize> = (0..8).map(|m| env.scheduled_task(m)).collect();
        assert_eq!(order, vec![0, 1, 2, 3, 0, 1, 2, 3]);
        assert!(matches!(env.start_episode(0, 9), Err(Error::UnknownTask(9))));
    }
}

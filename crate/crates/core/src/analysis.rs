//! Episode metrics, the sufficient-reward bound, a brute-force descriptor
//! oracle and Q-table size accounting.

use std::collections::BTreeSet;

use serde::Serialize;

use crate::belief::{BeliefMask, BeliefSet};
use crate::environment::{total_cost, EpisodeLog, EpisodeSummary, Phase};
use crate::error::{Error, Result};
use crate::scenario::{EventKind, Scenario};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpisodeMetrics {
    pub m: usize,
    pub task: usize,
    pub step: usize,
    pub x: usize,
    pub cost: f64,
    /// Reciprocal of the number of transmitted beliefs; 0 when none were sent.
    pub efficiency: f64,
    pub completed: bool,
    /// Completed within the task's reliability window.
    pub success: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TaskMetrics {
    pub task: usize,
    pub episodes: usize,
    pub mean_time: f64,
    pub mean_cost: f64,
    pub efficiency: f64,
    pub reliability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Aggregate {
    pub episodes: usize,
    pub mean_time: f64,
    pub mean_cost: f64,
    /// Mean over tasks of the per-task efficiency.
    pub efficiency: f64,
    pub reliability: f64,
    /// `sum_m gamma^m C_m` with `m` counted from 0 within the report.
    pub discounted_cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub per_episode: Vec<EpisodeMetrics>,
    /// Tasks that appear in the report, by task id.
    pub per_task: Vec<TaskMetrics>,
    pub aggregate: Aggregate,
}

impl MetricsReport {
    pub fn meets_efficiency(&self, u_min: f64) -> bool {
        self.aggregate.efficiency >= u_min
    }

    pub fn task(&self, t: usize) -> Option<&TaskMetrics> {
        self.per_task.iter().find(|m| m.task == t)
    }
}

/// Metrics recomputed from the slot records of `log`. Slot costs are
/// recombined with `alpha` rather than read back, so this doubles as a check
/// on the logged totals.
pub fn compute_metrics(log: &EpisodeLog, alpha: f64, gamma: f64, window_cap: &[usize]) -> Result<MetricsReport> {
    if log.slots.is_empty() {
        return Err(Error::EmptyLog);
    }
    let mut episodes: Vec<EpisodeSummary> = Vec::new();
    let mut i = 0;
    while i < log.slots.len() {
        let first = log.slots[i];
        let mut cost = 0.0;
        let mut sum_w = 0u64;
        let mut j = i;
        while j < log.slots.len() && log.slots[j].m == first.m && log.slots[j].phase == first.phase {
            let r = &log.slots[j];
            cost += total_cost(alpha, r.c_s, r.c_l);
            sum_w += u64::from(r.tx.len());
            j += 1;
        }
        let last = log.slots[j - 1];
        let completed = last.next_kind == EventKind::Final;
        episodes.push(EpisodeSummary {
            m: first.m as usize,
            task: first.task as usize,
            step: first.step as usize,
            phase: first.phase,
            x: (j - i) + usize::from(completed),
            cost,
            sum_w,
            completed,
        });
        i = j;
    }
    summarize(&episodes, gamma, window_cap)
}

/// Metrics from per-episode totals.
pub fn summarize(episodes: &[EpisodeSummary], gamma: f64, window_cap: &[usize]) -> Result<MetricsReport> {
    if episodes.is_empty() {
        return Err(Error::EmptyLog);
    }
    let per_episode: Vec<EpisodeMetrics> = episodes
        .iter()
        .map(|e| EpisodeMetrics {
            m: e.m,
            task: e.task,
            step: e.step,
            x: e.x,
            cost: e.cost,
            efficiency: e.efficiency(),
            completed: e.completed,
            success: e.completed && window_cap.get(e.task).is_none_or(|&c| e.x <= c),
        })
        .collect();

    let tasks: BTreeSet<usize> = per_episode.iter().map(|e| e.task).collect();
    let per_task: Vec<TaskMetrics> = tasks
        .into_iter()
        .map(|t| {
            let rows: Vec<&EpisodeMetrics> = per_episode.iter().filter(|e| e.task == t).collect();
            let n = rows.len() as f64;
            TaskMetrics {
                task: t,
                episodes: rows.len(),
                mean_time: rows.iter().map(|e| e.x as f64).sum::<f64>() / n,
                mean_cost: rows.iter().map(|e| e.cost).sum::<f64>() / n,
                efficiency: rows.iter().map(|e| e.efficiency).sum::<f64>() / n,
                reliability: rows.iter().filter(|e| e.success).count() as f64 / n,
            }
        })
        .collect();

    let n = per_episode.len() as f64;
    let mut discounted = 0.0;
    let mut g = 1.0;
    for e in &per_episode {
        discounted += g * e.cost;
        g *= gamma;
    }
    let aggregate = Aggregate {
        episodes: per_episode.len(),
        mean_time: per_episode.iter().map(|e| e.x as f64).sum::<f64>() / n,
        mean_cost: per_episode.iter().map(|e| e.cost).sum::<f64>() / n,
        efficiency: per_task.iter().map(|t| t.efficiency).sum::<f64>() / per_task.len() as f64,
        reliability: per_episode.iter().filter(|e| e.success).count() as f64 / n,
        discounted_cost: discounted,
    };
    Ok(MetricsReport { per_episode, per_task, aggregate })
}

/// Episodes of one phase, in log order.
pub fn phase_episodes(log: &EpisodeLog, phase: Phase) -> Vec<EpisodeSummary> {
    log.episodes.iter().filter(|e| e.phase == phase).copied().collect()
}

/// Default reliability window: three times each task's chain length.
pub fn default_window_caps(s: &Scenario) -> Vec<usize> {
    s.tasks.iter().map(|t| 3 * t.max_len).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Theorem1Bound {
    /// Largest speaker-cost gap between equal-size belief subsets.
    pub delta_s: f64,
    pub delta_l: f64,
    /// Largest speaker-cost gap between two single beliefs.
    pub delta_s_single: f64,
    pub delta_l_single: f64,
    pub d1: f64,
    pub d2: f64,
    pub r_min: f64,
    /// Bound computed from the single-belief gaps.
    pub r_min_single: f64,
    /// False when some task's jump-to-final probability fails to increase.
    pub satisfiable: bool,
}

/// Chain profile of one task: for positions `j = 1..max_len-1`, the
/// probability of jumping to the final event after a success and of
/// restarting at the initial event after a failure.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainProfile {
    pub to_final: Vec<f64>,
    pub to_initial: Vec<f64>,
}

pub fn chain_profiles(s: &Scenario) -> Vec<ChainProfile> {
    s.tasks
        .iter()
        .map(|t| {
            let body = &t.tec[..t.tec.len() - 1];
            ChainProfile {
                to_final: body.iter().map(|&e| s.transitions.p_good[e][t.final_event()]).collect(),
                to_initial: body.iter().map(|&e| s.transitions.p_bad[e][t.initial()]).collect(),
            }
        })
        .collect()
}

/// `(D1, D2, satisfiable)` for a cost gap `delta`. A task without two
/// positions contributes no `D2` term.
pub fn reward_bound(delta: f64, profiles: &[ChainProfile]) -> (f64, f64, bool) {
    let mut d1 = 0.0f64;
    let mut d2 = 0.0f64;
    let mut ok = true;
    for p in profiles {
        let den1 = p.to_final.iter().zip(&p.to_initial).map(|(a, b)| a + b).fold(f64::INFINITY, f64::min);
        if den1 > 0.0 && den1.is_finite() {
            d1 = d1.max(delta / den1);
        } else if den1 <= 0.0 {
            ok = false;
        }
        let den2 = p.to_final.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
        if den2.is_finite() {
            if den2 > 0.0 {
                d2 = d2.max(delta / den2);
            } else {
                ok = false;
            }
        }
    }
    if !ok {
        return (d1, f64::INFINITY, false);
    }
    (d1, d2, true)
}

/// Largest gap `sum(top n) - sum(bottom n)` over subset sizes `n`.
pub fn equal_size_spread(costs: &[f64]) -> f64 {
    let mut c = costs.to_vec();
    c.sort_by(f64::total_cmp);
    let mut best = 0.0f64;
    let mut gap = 0.0;
    for i in 0..c.len() / 2 {
        gap += c[c.len() - 1 - i] - c[i];
        best = best.max(gap);
    }
    best
}

fn single_spread(costs: &[f64]) -> f64 {
    let max = costs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = costs.iter().copied().fold(f64::INFINITY, f64::min);
    if costs.is_empty() {
        0.0
    } else {
        max - min
    }
}

pub fn theorem1_bound(s: &Scenario) -> Theorem1Bound {
    let bs = &s.belief_set;
    let tx: Vec<f64> = bs.tx_costs().iter().flatten().copied().collect();
    let inf: Vec<f64> = bs.infer_costs().iter().flatten().copied().collect();
    let delta_s = equal_size_spread(&tx);
    let delta_l = equal_size_spread(&inf);
    let delta_s_single = single_spread(&tx);
    let delta_l_single = single_spread(&inf);
    let profiles = chain_profiles(s);
    let (d1, d2, satisfiable) = reward_bound(delta_s.max(delta_l), &profiles);
    let (s1, s2, _) = reward_bound(delta_s_single.max(delta_l_single), &profiles);
    Theorem1Bound {
        delta_s,
        delta_l,
        delta_s_single,
        delta_l_single,
        d1,
        d2,
        r_min: d1.max(d2),
        r_min_single: s1.max(s2),
        satisfiable,
    }
}

/// Upper limit on prefix products walked by the brute-force oracle.
pub const BRUTE_FORCE_GUARD: u128 = 1_000_000;

/// Every structurally valid description (at least two levels deep).
pub fn valid_descriptions(bs: &BeliefSet) -> Result<Vec<BeliefMask>> {
    let mut product: u128 = 1;
    for k in 1..=bs.levels() {
        product *= bs.level_size(k) as u128;
        if product > BRUTE_FORCE_GUARD {
            return Err(Error::SizeGuard(format!(
                "levels 1..={k} admit {product} descriptions, above {BRUTE_FORCE_GUARD}"
            )));
        }
    }
    let mut out = Vec::new();
    let mut frontier = vec![BeliefMask::EMPTY];
    for k in 1..=bs.levels() {
        let level: Vec<usize> = bs.level_mask(k).iter().collect();
        frontier = frontier.iter().flat_map(|m| level.iter().map(move |&b| m.with(b))).collect();
        if k >= 2 {
            out.extend(frontier.iter().copied());
        }
    }
    out.sort_unstable();
    Ok(out)
}

/// Exact perfect-descriptor sets by exhaustive enumeration.
pub fn brute_force_perfect_descriptors(s: &Scenario) -> Result<Vec<BTreeSet<BeliefMask>>> {
    let all = valid_descriptions(&s.belief_set)?;
    Ok((0..s.num_events())
        .map(|e| all.iter().copied().filter(|&d| s.is_perfect(e, d)).collect())
        .collect())
}

pub fn binomial(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut r: u128 = 1;
    for i in 0..k {
        r = r * u128::from(n - i) / u128::from(i + 1);
    }
    r
}

/// Joint key count of the speaker and listener tables at step `l`: exact
/// for `l = 1`, an upper bound for later steps.
pub fn qtable_accounting(l: usize, b: usize, events: usize) -> Result<u128> {
    let (bb, e) = (b as u128, events as u128);
    match l {
        0 => Err(Error::Config("curriculum steps start at 1".into())),
        1 => Ok(e * bb * bb * bb.saturating_sub(1)),
        _ => {
            let c = binomial(b as u64, l as u64);
            Ok(e * c * c * bb)
        }
    }
}

/// Key count of the flat table over every subset of the belief set.
pub fn flat_accounting(b: usize, events: usize) -> u128 {
    (events as u128) << b
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::{RunTag, SlotRecord};

    fn slot(m: u32, n: u16, tx: u32, next_kind: EventKind) -> SlotRecord {
        SlotRecord {
            m,
            n,
            task: 0,
            step: 1,
            phase: Phase::Train,
            observed: 0,
            reconstructed: 0,
            next: 0,
            next_kind,
            tx: BeliefMask((1u64 << tx) - 1),
            inf: BeliefMask::EMPTY,
            c_s: 1.0,
            c_l: 0.0,
            c_t: 0.5,
        }
    }

    #[test]
    fn efficiency_of_one_episode() {
        let mut log = EpisodeLog::new(RunTag::Cl, true);
        log.slots = vec![
            slot(0, 1, 1, EventKind::Intermediary),
            slot(0, 2, 1, EventKind::Intermediary),
            slot(0, 3, 2, EventKind::Final),
        ];
        let r = compute_metrics(&log, 0.5, 0.9, &[100]).unwrap();
        assert_eq!(r.per_episode[0].efficiency, 0.25);
        assert_eq!(r.per_episode[0].x, 4);
        assert!(r.per_episode[0].success);
    }

    #[test]
    fn all_capped_means_zero_reliability() {
        let mut log = EpisodeLog::new(RunTag::Cl, true);
        log.slots = (0..4).map(|m| slot(m, 1, 1, EventKind::Intermediary)).collect();
        let r = compute_metrics(&log, 0.5, 0.9, &[100]).unwrap();
        assert_eq!(r.aggregate.reliability, 0.0);
    }

    #[test]
    fn empty_log_is_an_error() {
        let log = EpisodeLog::new(RunTag::Flat, true);
        assert!(matches!(compute_metrics(&log, 0.5, 0.9, &[]), Err(Error::EmptyLog)));
    }

    #[test]
    fn hand_worked_reward_bound() {
        let p = ChainProfile { to_final: vec![0.2, 0.5], to_initial: vec![0.2, 0.2] };
        let (d1, d2, ok) = reward_bound(3.0, &[p]);
        assert!(ok);
        assert!((d1 - 7.5).abs() < 1e-12);
        assert!((d2 - 10.0).abs() < 1e-12);
        assert!((d1.max(d2) - 10.0).abs() < 1e-12);
    }

    #[test]
    fn flat_hazard_is_unsatisfiable() {
        let p = ChainProfile { to_final: vec![0.3, 0.3, 1.0], to_initial: vec![0.2; 3] };
        assert!(!reward_bound(1.0, &[p]).2);
    }

    #[test]
    fn equal_costs_have_no_spread() {
        assert_eq!(equal_size_spread(&[2.0; 7]), 0.0);
        assert_eq!(equal_size_spread(&[1.0, 2.0, 4.0, 8.0]), 9.0);
    }

    #[test]
    fn accounting_formulas() {
        assert_eq!(flat_accounting(22, 120), 120 * 4_194_304);
        assert_eq!(qtable_accounting(1, 22, 120).unwrap(), 120 * 22 * 22 * 21);
        assert_eq!(qtable_accounting(2, 22, 120).unwrap(), 120 * 231 * 231 * 22);
        assert!(qtable_accounting(0, 22, 120).is_err());
        assert_eq!(binomial(22, 3), 1540);
    }
}

//! Experiment runner: config, seeded multi-replica execution, artifacts and
//! figure data.

use std::cell::RefCell;
use std::fmt::{self, Write as _};
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::agents::LearnConfig;
use crate::analysis::{self, theorem1_bound, MetricsReport};
use crate::belief::{BeliefMask, BeliefSet};
use crate::baseline::{run_flat_rl, FlatConfig, TieBreak};
use crate::curriculum::{evaluate, run_curriculum, CurriculumConfig, CurriculumState, PlateauConfig};
use crate::environment::{EnvConfig, EpisodeLog, EpisodeSummary, Phase, Validation};
use crate::error::{Error, Result};
use crate::rng::{self, Stream};
use crate::scenario::{generate_scenario, load_scenario, Scenario, ScenarioConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Cl,
    Flat,
    Both,
}

impl Method {
    pub fn runs_cl(self) -> bool {
        matches!(self, Method::Cl | Method::Both)
    }

    pub fn runs_flat(self) -> bool {
        matches!(self, Method::Flat | Method::Both)
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cl" => Ok(Method::Cl),
            "flat" => Ok(Method::Flat),
            "both" => Ok(Method::Both),
            _ => Err(Error::Config(format!("unknown method `{s}` (expected cl, flat or both)"))),
        }
    }
}

/// Task reward policy: derived from the reward bound, deliberately below it,
/// or a fixed value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Theorem1Mode {
    Auto,
    Violate,
    Pinned(f64),
}

impl fmt::Display for Theorem1Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Theorem1Mode::Auto => f.write_str("auto"),
            Theorem1Mode::Violate => f.write_str("violate"),
            Theorem1Mode::Pinned(r) => write!(f, "pinned:{r}"),
        }
    }
}

impl FromStr for Theorem1Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(Theorem1Mode::Auto),
            "violate" => Ok(Theorem1Mode::Violate),
            _ => s
                .strip_prefix("pinned:")
                .and_then(|v| v.parse::<f64>().ok())
                .filter(|r| r.is_finite() && *r >= 0.0)
                .map(Theorem1Mode::Pinned)
                .ok_or_else(|| Error::Config(format!("bad theorem1 mode `{s}` (auto, violate or pinned:<reward>)"))),
        }
    }
}

impl Serialize for Theorem1Mode {
    fn serialize<S: Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        ser.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Theorem1Mode {
    fn deserialize<D: Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(de)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSource {
    /// Scenario file; takes precedence over generation.
    pub path: Option<PathBuf>,
    #[serde(with = "crate::rng::seed_serde")]
    pub seed: u64,
    pub generate: ScenarioConfig,
}

impl Default for ScenarioSource {
    fn default() -> Self {
        Self { path: None, seed: 1, generate: ScenarioConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurriculumOptions {
    pub verify_trials: usize,
    pub extract_ratio: f64,
    pub plateau: PlateauConfig,
    pub max_rounds: usize,
    pub probe_episodes: usize,
}

impl Default for CurriculumOptions {
    fn default() -> Self {
        let c = CurriculumConfig::default();
        Self {
            verify_trials: c.verify_trials,
            extract_ratio: c.extract_ratio,
            plateau: c.plateau,
            max_rounds: c.max_rounds,
            probe_episodes: c.probe_episodes,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlatOptions {
    pub episodes: usize,
    pub max_cardinality: Option<usize>,
    pub memory_bound_bytes: u64,
    pub tie_break: TieBreak,
}

impl Default for FlatOptions {
    fn default() -> Self {
        let f = FlatConfig::default();
        Self {
            episodes: f.learn.episodes_per_step,
            max_cardinality: f.max_cardinality,
            memory_bound_bytes: f.memory_bound_bytes as u64,
            tie_break: f.tie_break,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: ScenarioSource,
    pub method: Method,
    pub theorem1: Theorem1Mode,
    pub reward_margin: f64,
    pub violate_factor: f64,
    pub replicas: usize,
    #[serde(with = "crate::rng::seed_serde")]
    pub base_seed: u64,
    /// Greedy episodes played after training.
    pub eval_episodes: usize,
    /// Reliability window for every task; defaults to three chain lengths.
    pub window_cap: Option<usize>,
    pub keep_slots: bool,
    /// Episodes per window in the figure series.
    pub figure_window: usize,
    pub learn: LearnConfig,
    pub env: EnvConfig,
    pub curriculum: CurriculumOptions,
    pub flat: FlatOptions,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scenario: ScenarioSource::default(),
            method: Method::Both,
            theorem1: Theorem1Mode::Auto,
            reward_margin: 1.1,
            violate_factor: 0.1,
            replicas: 1,
            base_seed: 1,
            eval_episodes: 1000,
            window_cap: None,
            keep_slots: false,
            figure_window: 500,
            learn: LearnConfig::default(),
            env: EnvConfig::default(),
            curriculum: CurriculumOptions::default(),
            flat: FlatOptions::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Parse {
            offset: e.span().map_or(0, |s| s.start),
            message: e.message().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicas == 0 {
            return Err(Error::Config("replicas must be at least 1".into()));
        }
        if !(self.reward_margin > 0.0) || !(self.violate_factor > 0.0) {
            return Err(Error::Config("reward_margin and violate_factor must be positive".into()));
        }
        if self.figure_window == 0 {
            return Err(Error::Config("figure_window must be positive".into()));
        }
        if self.window_cap == Some(0) {
            return Err(Error::Config("window_cap must be positive".into()));
        }
        self.curriculum_config().validate()?;
        let f = self.flat_config();
        f.learn.validate()?;
        if self.scenario.path.is_none() {
            self.scenario.generate.validate()?;
        }
        Ok(())
    }

    pub fn curriculum_config(&self) -> CurriculumConfig {
        let o = &self.curriculum;
        CurriculumConfig {
            learn: self.learn.clone(),
            env: self.env.clone(),
            verify_trials: o.verify_trials,
            extract_ratio: o.extract_ratio,
            plateau: o.plateau.clone(),
            max_rounds: o.max_rounds,
            probe_episodes: o.probe_episodes,
            keep_slots: self.keep_slots,
        }
    }

    pub fn flat_config(&self) -> FlatConfig {
        FlatConfig {
            learn: LearnConfig { episodes_per_step: self.flat.episodes, ..self.learn.clone() },
            env: self.env.clone(),
            max_cardinality: self.flat.max_cardinality,
            memory_bound_bytes: u128::from(self.flat.memory_bound_bytes),
            keep_slots: self.keep_slots,
            tie_break: self.flat.tie_break,
        }
    }

    pub fn window_caps(&self, s: &Scenario) -> Vec<usize> {
        match self.window_cap {
            Some(c) => vec![c; s.tasks.len()],
            None => analysis::default_window_caps(s),
        }
    }
}

/// Loads or generates the scenario and sets task rewards per the theorem-1 mode.
pub fn prepare_scenario(cfg: &ExperimentConfig) -> Result<Scenario> {
    let mut s = match &cfg.scenario.path {
        Some(p) => load_scenario(p)?,
        None => generate_scenario(&cfg.scenario.generate, cfg.scenario.seed)?,
    };
    let reward = match cfg.theorem1 {
        Theorem1Mode::Auto => cfg.reward_margin * theorem1_bound(&s).r_min,
        Theorem1Mode::Violate => cfg.violate_factor * theorem1_bound(&s).r_min,
        Theorem1Mode::Pinned(r) => r,
    };
    s.set_rewards(reward);
    Ok(s)
}

/// Training and greedy evaluation of one method on one replica.
#[derive(Debug, Clone)]
pub struct MethodRun {
    /// Training episodes followed by evaluation episodes.
    pub log: EpisodeLog,
    pub training: MetricsReport,
    pub eval: Option<MetricsReport>,
}

#[derive(Debug, Clone)]
pub struct ReplicaResult {
    pub replica: usize,
    pub cl: Option<MethodRun>,
    pub curriculum: Option<CurriculumState>,
    pub flat: Option<MethodRun>,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub scenario: Scenario,
    pub replicas: Vec<ReplicaResult>,
}

pub fn run_replica(s: &Scenario, cfg: &ExperimentConfig, replica: usize) -> Result<ReplicaResult> {
    let r = replica as u64;
    let caps = cfg.window_caps(s);
    let gamma = cfg.learn.gamma;
    let mut out = ReplicaResult { replica, cl: None, curriculum: None, flat: None };

    if cfg.method.runs_cl() {
        let cc = cfg.curriculum_config();
        let o = run_curriculum(s, &cc, cfg.base_seed, r)?;
        let mut log = o.log;
        let eval = if cfg.eval_episodes > 0 {
            let mut env_rng = rng::stream(cfg.base_seed, r, Stream::Evaluation);
            let first = log.episodes.len();
            let state = &o.state;
            evaluate(s, &cc.env, Validation::Strict, cfg.eval_episodes, first, |e| state.policy(e), &mut env_rng, &mut log)?;
            Some(analysis::summarize(&analysis::phase_episodes(&log, Phase::Eval), gamma, &caps)?)
        } else {
            None
        };
        let training = analysis::summarize(&analysis::phase_episodes(&log, Phase::Train), gamma, &caps)?;
        out.cl = Some(MethodRun { log, training, eval });
        out.curriculum = Some(o.state);
    }

    if cfg.method.runs_flat() {
        let fc = cfg.flat_config();
        let f = run_flat_rl(s, &fc, cfg.base_seed, r)?;
        let mut log = f.log.clone();
        let eval = if cfg.eval_episodes > 0 {
            let mut env_rng = rng::stream(cfg.base_seed, r, Stream::Evaluation);
            let tie_rng = RefCell::new(rng::stream(cfg.base_seed, r, Stream::Policy));
            let first = log.episodes.len();
            let policy = |e| f.policy(e, &mut tie_rng.borrow_mut());
            evaluate(s, &fc.env, Validation::Permissive, cfg.eval_episodes, first, policy, &mut env_rng, &mut log)?;
            Some(analysis::summarize(&analysis::phase_episodes(&log, Phase::Eval), gamma, &caps)?)
        } else {
            None
        };
        let training = analysis::summarize(&analysis::phase_episodes(&log, Phase::Train), gamma, &caps)?;
        out.flat = Some(MethodRun { log, training, eval });
    }
    Ok(out)
}

/// Runs every replica on the rayon pool; results are in replica order.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let scenario = prepare_scenario(cfg)?;
    let replicas = (0..cfg.replicas)
        .into_par_iter()
        .map(|r| run_replica(&scenario, cfg, r))
        .collect::<Result<Vec<_>>>()?;
    Ok(ExperimentResult { config: cfg.clone(), scenario, replicas })
}

/// Sample mean and standard deviation (0 for a single value).
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn summary_block(out: &mut String, name: &str, reports: &[&MetricsReport]) {
    if reports.is_empty() {
        return;
    }
    let _ = writeln!(out, "[{name}]");
    let fields: [(&str, fn(&MetricsReport) -> f64); 5] = [
        ("reliability", |r| r.aggregate.reliability),
        ("mean_time", |r| r.aggregate.mean_time),
        ("mean_cost", |r| r.aggregate.mean_cost),
        ("efficiency", |r| r.aggregate.efficiency),
        ("episodes", |r| r.aggregate.episodes as f64),
    ];
    for (label, f) in fields {
        let xs: Vec<f64> = reports.iter().map(|r| f(r)).collect();
        let (m, sd) = mean_std(&xs);
        let _ = writeln!(out, "{label} = {m:.6} +- {sd:.6}");
    }
}

/// Merged structured-text summary across replicas.
pub fn summary_text(res: &ExperimentResult) -> String {
    let mut out = String::new();
    let b = theorem1_bound(&res.scenario);
    let _ = writeln!(out, "replicas = {}", res.replicas.len());
    let _ = writeln!(out, "base_seed = {}", res.config.base_seed);
    let _ = writeln!(out, "theorem1 = \"{}\"", res.config.theorem1);
    let _ = writeln!(out, "task_reward = {:.6}", res.scenario.tasks.first().map_or(0.0, |t| t.reward));
    let _ = writeln!(out, "r_min = {:.6}", b.r_min);
    let _ = writeln!(out, "r_min_single = {:.6}", b.r_min_single);
    let _ = writeln!(out, "bound_satisfiable = {}", b.satisfiable);
    for (name, pick) in [("cl", 0), ("flat", 1)] {
        let runs: Vec<&MethodRun> =
            res.replicas.iter().filter_map(|r| if pick == 0 { r.cl.as_ref() } else { r.flat.as_ref() }).collect();
        let train: Vec<&MetricsReport> = runs.iter().map(|m| &m.training).collect();
        let eval: Vec<&MetricsReport> = runs.iter().filter_map(|m| m.eval.as_ref()).collect();
        summary_block(&mut out, &format!("{name}.train"), &train);
        summary_block(&mut out, &format!("{name}.eval"), &eval);
    }
    out
}

fn names(bs: &BeliefSet, m: BeliefMask) -> String {
    bs.ids_of(m).iter().map(ToString::to_string).collect::<Vec<_>>().join(" ")
}

fn curriculum_text(s: &Scenario, cs: &CurriculumState) -> String {
    let mut out = String::new();
    for r in &cs.step_logs {
        let _ = writeln!(
            out,
            "step {} episodes {} rounds {} learnable {} new {} hierarchy {} speaker_keys {} listener_keys {} plateau_initial {} plateau_intermediary {}",
            r.step,
            r.episodes,
            r.rounds,
            r.learnable_events,
            r.new_descriptors,
            r.hierarchy_size,
            r.speaker_keys,
            r.listener_keys,
            r.plateau_initial.map_or("none".into(), |e| e.to_string()),
            r.plateau_intermediary.map_or("none".into(), |e| e.to_string()),
        );
    }
    for (e, d) in cs.event_out.iter().enumerate() {
        let names: Vec<String> = d.iter().map(|m| names(&s.belief_set, *m)).collect();
        let _ = writeln!(out, "event {e} {} [{}]", s.kind(e).as_str(), names.join("; "));
    }
    let _ = writeln!(out, "leftover [{}]", names(&s.belief_set, cs.leftover()));
    out
}

/// Writes logs, Q snapshots, the scenario, the effective config and the
/// merged summary under `dir`.
pub fn write_artifacts(res: &ExperimentResult, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("config.toml"), res.config.to_toml()?)?;
    fs::write(dir.join("scenario.toml"), res.scenario.to_toml()?)?;
    let bs = &res.scenario.belief_set;
    for rep in &res.replicas {
        let r = rep.replica;
        for (tag, run) in [("cl", &rep.cl), ("flat", &rep.flat)] {
            let Some(run) = run else { continue };
            let w = BufWriter::new(fs::File::create(dir.join(format!("{tag}_r{r}_episodes.csv")))?);
            run.log.write_episodes_csv(w)?;
            if run.log.keep_slots {
                let w = BufWriter::new(fs::File::create(dir.join(format!("{tag}_r{r}_slots.csv")))?);
                run.log.write_slots_csv(bs, w)?;
            }
        }
        if let Some(cs) = &rep.curriculum {
            let mut w = BufWriter::new(fs::File::create(dir.join(format!("cl_r{r}_qtables.csv")))?);
            std::io::Write::write_all(&mut w, b"step,side,state,action,q,visits\n")?;
            for (i, t) in cs.tables.iter().enumerate() {
                let step = cs.step_logs.iter().filter(|l| l.rounds > 0).nth(i).map_or(i + 1, |l| l.step);
                t.speaker.write_csv(step, "speaker", &mut w)?;
                t.listener.write_csv(step, "listener", &mut w)?;
            }
            fs::write(dir.join(format!("cl_r{r}_curriculum.txt")), curriculum_text(&res.scenario, cs))?;
        }
    }
    fs::write(dir.join("summary.txt"), summary_text(res))?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Figure {
    /// Greedy speaker Q by event class during each step.
    Fig4,
    /// Execution time against training episode, labelled by reward mode.
    Fig5,
    /// Execution time and cost against episode, CL and flat.
    Fig6,
    /// Reliability against episode, CL and flat, with greedy terminal values.
    Fig7,
    /// Greedy metrics against events per task.
    Fig8,
}

impl FromStr for Figure {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim_start_matches("fig") {
            "4" => Ok(Figure::Fig4),
            "5" => Ok(Figure::Fig5),
            "6" => Ok(Figure::Fig6),
            "7" => Ok(Figure::Fig7),
            "8" => Ok(Figure::Fig8),
            _ => Err(Error::Config(format!("unknown figure `{s}` (4 to 8)"))),
        }
    }
}

/// One data file: `x y series` rows.
#[derive(Debug, Clone, PartialEq)]
pub struct FigureFile {
    pub name: String,
    pub rows: Vec<(f64, f64, String)>,
}

impl FigureFile {
    fn new(name: &str) -> Self {
        Self { name: name.to_string(), rows: Vec::new() }
    }

    pub fn render(&self) -> String {
        let mut out = String::from("# x y series\n");
        for (x, y, s) in &self.rows {
            let _ = writeln!(out, "{x} {y} {s}");
        }
        out
    }
}

/// Mean of `f` over consecutive windows of `w` training episodes, averaged
/// across replicas window by window. `x` is the window's last episode index
/// plus one.
fn windowed<F>(logs: &[&[EpisodeSummary]], w: usize, f: F) -> Vec<(f64, f64)>
where
    F: Fn(&EpisodeSummary) -> f64,
{
    let n = logs.iter().map(|l| l.len()).min().unwrap_or(0);
    (0..n / w)
        .map(|k| {
            let per: Vec<f64> =
                logs.iter().map(|l| l[k * w..(k + 1) * w].iter().map(&f).sum::<f64>() / w as f64).collect();
            (((k + 1) * w) as f64, per.iter().sum::<f64>() / per.len() as f64)
        })
        .collect()
}

fn train_episodes(run: &MethodRun) -> Vec<EpisodeSummary> {
    analysis::phase_episodes(&run.log, Phase::Train)
}

fn runs<'a>(res: &'a ExperimentResult, cl: bool) -> Vec<&'a MethodRun> {
    res.replicas.iter().filter_map(|r| if cl { r.cl.as_ref() } else { r.flat.as_ref() }).collect()
}

/// Figure data for figures 4 to 7 from one experiment. Every required series
/// is checked before anything is returned.
pub fn figure_data(res: &ExperimentResult, fig: Figure) -> Result<Vec<FigureFile>> {
    let w = res.config.figure_window;
    let caps = res.config.window_caps(&res.scenario);
    let success = |e: &EpisodeSummary| f64::from(u8::from(e.completed && caps.get(e.task).is_none_or(|&c| e.x <= c)));
    let need = |v: &[&MethodRun], what: &str| {
        if v.is_empty() {
            Err(Error::MissingSeries(format!("{what} run")))
        } else {
            Ok(())
        }
    };
    let cl = runs(res, true);
    let flat = runs(res, false);
    let mut files = Vec::new();
    match fig {
        Figure::Fig4 => {
            let mut f = FigureFile::new("fig4");
            for rep in &res.replicas {
                let Some(cs) = &rep.curriculum else { continue };
                for r in &cs.step_logs {
                    for q in &r.q_series {
                        for (kind, v) in [("initial", q.initial), ("intermediary", q.intermediary)] {
                            if let Some(v) = v {
                                f.rows.push((q.episode as f64, v, format!("r{}_step{}_{kind}", rep.replica, r.step)));
                            }
                        }
                    }
                }
            }
            if f.rows.is_empty() {
                return Err(Error::MissingSeries("curriculum Q series".into()));
            }
            files.push(f);
        }
        Figure::Fig5 => {
            need(&cl, "cl")?;
            let eps: Vec<Vec<EpisodeSummary>> = cl.iter().map(|m| train_episodes(m)).collect();
            let refs: Vec<&[EpisodeSummary]> = eps.iter().map(Vec::as_slice).collect();
            let mut f = FigureFile::new("fig5");
            let label = res.config.theorem1.to_string();
            for (x, y) in windowed(&refs, w, |e| e.x as f64) {
                f.rows.push((x, y, label.clone()));
            }
            if f.rows.is_empty() {
                return Err(Error::MissingSeries(format!("fewer than {w} training episodes")));
            }
            files.push(f);
        }
        Figure::Fig6 | Figure::Fig7 => {
            need(&cl, "cl")?;
            need(&flat, "flat")?;
            let mut series = Vec::new();
            for (tag, group) in [("cl", &cl), ("flat", &flat)] {
                let eps: Vec<Vec<EpisodeSummary>> = group.iter().map(|m| train_episodes(m)).collect();
                series.push((tag, eps));
            }
            let names: &[&str] = if fig == Figure::Fig6 { &["fig6_time", "fig6_cost"] } else { &["fig7"] };
            for (i, name) in names.iter().enumerate() {
                let mut f = FigureFile::new(name);
                for (tag, eps) in &series {
                    let refs: Vec<&[EpisodeSummary]> = eps.iter().map(Vec::as_slice).collect();
                    let pts = match (fig, i) {
                        (Figure::Fig6, 0) => windowed(&refs, w, |e| e.x as f64),
                        (Figure::Fig6, _) => windowed(&refs, w, |e| e.cost),
                        _ => windowed(&refs, w, success),
                    };
                    if pts.is_empty() {
                        return Err(Error::MissingSeries(format!("{tag}: fewer than {w} training episodes")));
                    }
                    let last_x = pts.last().map_or(0.0, |p| p.0);
                    f.rows.extend(pts.into_iter().map(|(x, y)| (x, y, tag.to_string())));
                    if fig == Figure::Fig7 {
                        let group = if *tag == "cl" { &cl } else { &flat };
                        let ev: Vec<f64> = group.iter().filter_map(|m| m.eval.as_ref()).map(|r| r.aggregate.reliability).collect();
                        if !ev.is_empty() {
                            f.rows.push((last_x, mean_std(&ev).0, format!("{tag}_greedy")));
                        }
                    }
                }
                files.push(f);
            }
        }
        Figure::Fig8 => return Err(Error::MissingSeries("figure 8 needs a sweep; use sweep_events_per_task".into())),
    }
    Ok(files)
}

/// Greedy metrics for scenarios whose tasks all have `k` events, for each
/// `k` in `lengths`. Each point is a separate experiment built from `cfg`.
pub fn sweep_events_per_task(cfg: &ExperimentConfig, lengths: &[usize]) -> Result<Vec<FigureFile>> {
    if lengths.is_empty() {
        return Err(Error::MissingSeries("no chain lengths given".into()));
    }
    if cfg.eval_episodes == 0 {
        return Err(Error::MissingSeries("figure 8 needs eval_episodes > 0".into()));
    }
    let mut rows = Vec::new();
    for &k in lengths {
        let mut c = cfg.clone();
        c.scenario.path = None;
        c.scenario.generate.min_len = k;
        c.scenario.generate.max_len = k;
        let res = run_experiment(&c)?;
        for (tag, cl) in [("cl", true), ("flat", false)] {
            let ev: Vec<&MetricsReport> = runs(&res, cl).iter().filter_map(|m| m.eval.as_ref()).collect();
            if ev.is_empty() {
                continue;
            }
            let fields: [(&str, fn(&MetricsReport) -> f64); 4] = [
                ("time", |r| r.aggregate.mean_time),
                ("cost", |r| r.aggregate.mean_cost),
                ("reliability", |r| r.aggregate.reliability),
                ("efficiency", |r| r.aggregate.efficiency),
            ];
            for (label, f) in fields {
                let xs: Vec<f64> = ev.iter().map(|r| f(r)).collect();
                rows.push((k as f64, mean_std(&xs).0, format!("{tag}_{label}")));
            }
        }
    }
    if rows.is_empty() {
        return Err(Error::MissingSeries("sweep produced no evaluation metrics".into()));
    }
    Ok(vec![FigureFile { name: "fig8".into(), rows }])
}

/// Writes `<name>.dat` files. Nothing is written unless every file is non-empty.
pub fn write_figures(files: &[FigureFile], dir: &Path) -> Result<()> {
    if files.is_empty() || files.iter().any(|f| f.rows.is_empty()) {
        return Err(Error::MissingSeries("empty figure data".into()));
    }
    fs::create_dir_all(dir)?;
    for f in files {
        fs::write(dir.join(format!("{}.dat", f.name)), f.render())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_cfg() -> ExperimentConfig {
        let mut c = ExperimentConfig::default();
        c.scenario.generate = ScenarioConfig { levels: vec![2, 2], events: 3, tasks: 1, min_len: 3, max_len: 3, ..Default::default() };
        c.scenario.seed = 2;
        c.reward_margin = 10.0;
        c.learn.episodes_per_step = 3000;
        c.curriculum.probe_episodes = 1000;
        c.flat.episodes = 600;
        c.eval_episodes = 100;
        c.figure_window = 100;
        c.replicas = 2;
        c
    }

    #[test]
    fn theorem1_mode_parses() {
        assert_eq!("auto".parse::<Theorem1Mode>().unwrap(), Theorem1Mode::Auto);
        assert_eq!("pinned:12.5".parse::<Theorem1Mode>().unwrap(), Theorem1Mode::Pinned(12.5));
        assert!("pinned:x".parse::<Theorem1Mode>().is_err());
        assert!("sometimes".parse::<Theorem1Mode>().is_err());
    }

    #[test]
    fn config_round_trips_and_rejects_zero_replicas() {
        let c = toy_cfg();
        let back = ExperimentConfig::from_toml(&c.to_toml().unwrap()).unwrap();
        assert_eq!(back, c);
        assert!(matches!(ExperimentConfig::from_toml("replicas = 0"), Err(Error::Config(_))));
        assert!(matches!(ExperimentConfig::from_toml("method = \"neither\""), Err(Error::Parse { .. })));
    }

    #[test]
    fn reward_modes_scale_the_bound() {
        let mut c = toy_cfg();
        let auto = prepare_scenario(&c).unwrap();
        c.theorem1 = Theorem1Mode::Violate;
        let low = prepare_scenario(&c).unwrap();
        let ratio = low.tasks[0].reward / auto.tasks[0].reward;
        assert!((ratio - 0.1 / 10.0).abs() < 1e-12);
        c.theorem1 = Theorem1Mode::Pinned(7.0);
        assert_eq!(prepare_scenario(&c).unwrap().tasks[0].delay_cost, 7.0);
    }

    #[test]
    fn experiment_is_deterministic_and_emits_figures() {
        let c = toy_cfg();
        let a = run_experiment(&c).unwrap();
        let b = run_experiment(&c).unwrap();
        assert_eq!(a.replicas.len(), 2);
        for (x, y) in a.replicas.iter().zip(&b.replicas) {
            assert_eq!(x.cl.as_ref().unwrap().log.episodes, y.cl.as_ref().unwrap().log.episodes);
            assert_eq!(x.flat.as_ref().unwrap().log.episodes, y.flat.as_ref().unwrap().log.episodes);
        }
        assert_eq!(summary_text(&a), summary_text(&b));
        for fig in [Figure::Fig4, Figure::Fig5, Figure::Fig6, Figure::Fig7] {
            let files = figure_data(&a, fig).unwrap();
            assert!(files.iter().all(|f| !f.rows.is_empty()));
        }
    }

    #[test]
    fn missing_series_is_an_error() {
        let mut c = toy_cfg();
        c.method = Method::Cl;
        c.replicas = 1;
        let res = run_experiment(&c).unwrap();
        assert!(matches!(figure_data(&res, Figure::Fig6), Err(Error::MissingSeries(_))));
        let dir = std::env::temp_dir().join(format!("semcl-empty-{}", std::process::id()));
        assert!(write_figures(&[FigureFile::new("fig6_time")], &dir).is_err());
        assert!(!dir.exists());
    }
}

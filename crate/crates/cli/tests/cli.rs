use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const TOY: &str = r#"
replicas = 2
reward_margin = 10.0
eval_episodes = 100
figure_window = 100

[scenario]
seed = 2

[scenario.generate]
levels = [2, 2]
events = 3
tasks = 1
min_len = 3
max_len = 3

[learn]
episodes_per_step = 3000

[curriculum]
probe_episodes = 1000

[flat]
episodes = 600
"#;

fn semcl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_semcl")).args(args).env_remove("SEMCL_OUT").output().unwrap()
}

fn toy(dir: &Path) -> String {
    let p = dir.join("toy.toml");
    fs::write(&p, TOY).unwrap();
    p.to_str().unwrap().to_string()
}

fn tmp(name: &str) -> std::path::PathBuf {
    let d = std::env::temp_dir().join(format!("semcl-cli-{}-{name}", std::process::id()));
    let _ = fs::remove_dir_all(&d);
    fs::create_dir_all(&d).unwrap();
    d
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn scenario_gen_writes_loadable_file() {
    let d = tmp("gen");
    let cfg = toy(&d);
    let out = d.join("s.toml");
    let o = semcl(&["scenario", "gen", "--config", &cfg, "--seed", "4", "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let sc = semcl::scenario::load_scenario(&out).unwrap();
    assert_eq!(sc.num_events(), 3);
    assert_eq!(sc.tasks.len(), 1);
}

#[test]
fn unknown_config_key_exits_1() {
    let d = tmp("badkey");
    let p = d.join("bad.toml");
    fs::write(&p, "replicas = 1\nbogus = 3\n").unwrap();
    let o = semcl(&["run", "--config", s(&p)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bogus"));
}

#[test]
fn zero_replicas_and_bad_flags_exit_1() {
    let d = tmp("zero");
    let cfg = toy(&d);
    assert_eq!(semcl(&["run", "--config", &cfg, "--replicas", "0"]).status.code(), Some(1));
    assert_eq!(semcl(&["run", "--method", "deep"]).status.code(), Some(1));
    assert_eq!(semcl(&["acceptance", "--only", "42"]).status.code(), Some(1));
}

#[test]
fn missing_scenario_file_exits_2() {
    let d = tmp("missing");
    let o = semcl(&["run", "--scenario", s(&d.join("nope.toml")), "--out", s(&d.join("out"))]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn run_is_byte_identical_across_reruns() {
    let d = tmp("det");
    let cfg = toy(&d);
    let (a, b) = (d.join("a"), d.join("b"));
    for dir in [&a, &b] {
        let o = semcl(&["run", "--config", &cfg, "--seed", "3", "--out", s(dir)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let mut names: Vec<_> = fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    for f in ["cl_r0_episodes.csv", "flat_r1_episodes.csv", "cl_r0_qtables.csv", "summary.txt"] {
        assert!(names.iter().any(|n| n == f), "missing {f} in {names:?}");
    }
    for n in &names {
        assert_eq!(fs::read(a.join(n)).unwrap(), fs::read(b.join(n)).unwrap(), "{n:?} differs");
    }
}

#[test]
fn out_dir_env_override() {
    let d = tmp("env");
    let cfg = toy(&d);
    let target = d.join("from-env");
    let o = Command::new(env!("CARGO_BIN_EXE_semcl"))
        .args(["run", "--config", &cfg, "--method", "flat"])
        .env("SEMCL_OUT", &target)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(target.join("flat_r0_episodes.csv").exists());
    assert!(!target.join("cl_r0_episodes.csv").exists());
}

#[test]
fn figure_files_are_three_column() {
    let d = tmp("fig");
    let cfg = toy(&d);
    let out = d.join("figs");
    for fig in ["4", "6", "7"] {
        let o = semcl(&["figures", "--config", &cfg, "--fig", fig, "--out", s(&out), "--jobs", "1"]);
        assert!(o.status.success(), "fig{fig}: {}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["fig4", "fig6_time", "fig6_cost", "fig7"] {
        let text = fs::read_to_string(out.join(format!("{f}.dat"))).unwrap();
        let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
        assert!(!rows.is_empty(), "{f}");
        for r in rows {
            let cols: Vec<&str> = r.split_whitespace().collect();
            assert_eq!(cols.len(), 3, "{f}: {r}");
            cols[0].parse::<f64>().unwrap();
            cols[1].parse::<f64>().unwrap();
        }
    }
    let fig7 = fs::read_to_string(out.join("fig7.dat")).unwrap();
    let cl_greedy: f64 = fig7.lines().find(|l| l.ends_with(" cl_greedy")).unwrap().split_whitespace().nth(1).unwrap().parse().unwrap();
    assert_eq!(cl_greedy, 1.0);
}

#[test]
fn fig5_has_both_reward_settings() {
    let d = tmp("fig5");
    // The toy needs a reward well above r_min to be solvable at all.
    let cfg = d.join("toy5.toml");
    fs::write(&cfg, TOY.replace("reward_margin = 10.0", "reward_margin = 10.0\nviolate_factor = 3.0")).unwrap();
    let cfg = s(&cfg).to_string();
    let out = d.join("figs");
    let o = semcl(&["figures", "--config", &cfg, "--fig", "fig5", "--out", s(&out), "--replicas", "1"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(out.join("fig5.dat")).unwrap();
    assert!(text.lines().any(|l| l.ends_with(" auto")));
    assert!(text.lines().any(|l| l.ends_with(" violate")));
}

#[test]
fn too_short_run_for_figure_writes_nothing() {
    let d = tmp("short");
    let cfg = toy(&d);
    let out = d.join("figs");
    let o = semcl(&["figures", "--config", &cfg, "--fig", "6", "--episodes", "50", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.join("fig6_time.dat").exists());
}

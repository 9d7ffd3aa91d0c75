use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use semcl::acceptance;
use semcl::experiment::{self, ExperimentConfig, Figure, FigureFile, Method, Theorem1Mode};
use semcl::scenario::{generate_scenario, save_scenario};
use semcl::Error;

const EXIT_CONFIG: u8 = 1;
const EXIT_RUNTIME: u8 = 2;
const EXIT_ACCEPTANCE: u8 = 3;

#[derive(Parser)]
#[command(name = "semcl", version, about = "Curriculum Q-learning for speaker/listener semantic communication")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Scenario files.
    Scenario {
        #[command(subcommand)]
        cmd: ScenarioCmd,
    },
    /// Train and evaluate, writing logs, Q snapshots and a summary.
    Run(RunArgs),
    /// Write two-column figure data.
    Figures(FigureArgs),
    /// Run the acceptance criteria.
    Acceptance {
        /// Run a single criterion (1-8).
        #[arg(long)]
        only: Option<usize>,
    },
}

#[derive(Subcommand)]
enum ScenarioCmd {
    /// Generate a scenario from the `[scenario.generate]` section of a config.
    Gen {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Scenario file, overriding the config.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Base seed; also the generator seed when no scenario file is given.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replicas: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for replicas.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    method: Option<Method>,
    /// Training episodes for the flat baseline and per curriculum step.
    #[arg(long)]
    episodes: Option<usize>,
    /// auto, violate or pinned:<reward>
    #[arg(long)]
    theorem1: Option<Theorem1Mode>,
}

#[derive(Args)]
struct FigureArgs {
    #[command(flatten)]
    common: Common,
    /// 4, 5, 6, 7 or 8.
    #[arg(long)]
    fig: Figure,
    #[arg(long)]
    episodes: Option<usize>,
    /// Chain lengths for figure 8.
    #[arg(long, value_delimiter = ',', default_values_t = [3, 4, 5, 6])]
    lengths: Vec<usize>,
}

enum Failure {
    Config(Error),
    Runtime(Error),
    Acceptance,
}

impl Failure {
    fn runtime(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::Parse { .. } | Error::Version { .. } => Failure::Config(e),
            e => Failure::Runtime(e),
        }
    }
}

fn out_dir(flag: Option<PathBuf>, default: &str) -> PathBuf {
    flag.or_else(|| std::env::var_os("SEMCL_OUT").map(PathBuf::from)).unwrap_or_else(|| PathBuf::from(default))
}

fn load_config(c: &Common) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match &c.config {
        Some(p) => ExperimentConfig::load(p).map_err(Failure::Config)?,
        None => ExperimentConfig::default(),
    };
    if let Some(p) = &c.scenario {
        cfg.scenario.path = Some(p.clone());
    }
    if let Some(s) = c.seed {
        cfg.base_seed = s;
        cfg.scenario.seed = s;
    }
    if let Some(r) = c.replicas {
        cfg.replicas = r;
    }
    Ok(cfg)
}

fn init_pool(jobs: Option<usize>) -> Result<(), Failure> {
    if let Some(n) = jobs {
        if n == 0 {
            return Err(Failure::Config(Error::Config("--jobs must be at least 1".into())));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Runtime(Error::Config(e.to_string())))?;
    }
    Ok(())
}

fn scenario_gen(config: Option<PathBuf>, seed: u64, out: Option<PathBuf>) -> Result<(), Failure> {
    let gen = match config {
        Some(p) => ExperimentConfig::load(&p).map_err(Failure::Config)?.scenario.generate,
        None => Default::default(),
    };
    gen.validate().map_err(Failure::Config)?;
    let s = generate_scenario(&gen, seed).map_err(Failure::runtime)?;
    let path = out.unwrap_or_else(|| out_dir(None, ".").join(format!("scenario_{seed}.toml")));
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Failure::Runtime(e.into()))?;
    }
    save_scenario(&s, &path).map_err(Failure::runtime)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn run(a: RunArgs) -> Result<(), Failure> {
    let mut cfg = load_config(&a.common)?;
    if let Some(m) = a.method {
        cfg.method = m;
    }
    if let Some(n) = a.episodes {
        cfg.learn.episodes_per_step = n;
        cfg.flat.episodes = n;
    }
    if let Some(t) = a.theorem1 {
        cfg.theorem1 = t;
    }
    cfg.validate().map_err(Failure::Config)?;
    init_pool(a.common.jobs)?;
    let dir = out_dir(a.common.out, "out");
    let res = experiment::run_experiment(&cfg).map_err(Failure::runtime)?;
    experiment::write_artifacts(&res, &dir).map_err(Failure::runtime)?;
    print!("{}", experiment::summary_text(&res));
    println!("artifacts in {}", dir.display());
    Ok(())
}

fn figures(a: FigureArgs) -> Result<(), Failure> {
    let mut cfg = load_config(&a.common)?;
    if let Some(n) = a.episodes {
        cfg.learn.episodes_per_step = n;
        cfg.flat.episodes = n;
    }
    cfg.validate().map_err(Failure::Config)?;
    init_pool(a.common.jobs)?;
    let dir = out_dir(a.common.out, "figures");
    let files = figure_files(cfg, a.fig, &a.lengths).map_err(Failure::runtime)?;
    experiment::write_figures(&files, &dir).map_err(Failure::runtime)?;
    for f in &files {
        println!("wrote {}", dir.join(format!("{}.dat", f.name)).display());
    }
    Ok(())
}

fn figure_files(mut cfg: ExperimentConfig, fig: Figure, lengths: &[usize]) -> semcl::Result<Vec<FigureFile>> {
    match fig {
        Figure::Fig8 => experiment::sweep_events_per_task(&cfg, lengths),
        Figure::Fig5 => {
            // One curriculum run per reward setting, merged into a single file.
            cfg.method = Method::Cl;
            let mut merged = FigureFile { name: "fig5".into(), rows: Vec::new() };
            for mode in [Theorem1Mode::Auto, Theorem1Mode::Violate] {
                cfg.theorem1 = mode;
                let res = experiment::run_experiment(&cfg)?;
                for f in experiment::figure_data(&res, Figure::Fig5)? {
                    merged.rows.extend(f.rows);
                }
            }
            Ok(vec![merged])
        }
        Figure::Fig4 => {
            cfg.method = Method::Cl;
            experiment::figure_data(&experiment::run_experiment(&cfg)?, fig)
        }
        _ => {
            cfg.method = Method::Both;
            experiment::figure_data(&experiment::run_experiment(&cfg)?, fig)
        }
    }
}

fn run_acceptance(only: Option<usize>) -> Result<(), Failure> {
    let results = match only {
        Some(id) => vec![acceptance::run_one(id)
            .ok_or_else(|| Failure::Config(Error::Config(format!("no acceptance criterion {id}"))))?],
        None => acceptance::run_all(),
    };
    for r in &results {
        println!("{r}");
    }
    if results.iter().all(|r| r.passed) {
        Ok(())
    } else {
        Err(Failure::Acceptance)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_CONFIG) } else { ExitCode::SUCCESS };
        }
    };
    let res = match cli.cmd {
        Cmd::Scenario { cmd: ScenarioCmd::Gen { config, seed, out } } => scenario_gen(config, seed, out),
        Cmd::Run(a) => run(a),
        Cmd::Figures(a) => figures(a),
        Cmd::Acceptance { only } => run_acceptance(only),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("semcl: config error: {e}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("semcl: {e}");
            ExitCode::from(EXIT_RUNTIME)
        }
        Err(Failure::Acceptance) => ExitCode::from(EXIT_ACCEPTANCE),
    }
}

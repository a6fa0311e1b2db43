use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use perfloc::cbc::{localize_cbc, train_cbc, CbcConfig, CbcMode, CbcModelBank};
use perfloc::dataset::{load_dataset_from, Dataset};
use perfloc::ensemble::combine;
use perfloc::eval::{
    bugfree_audit, evaluate, workload_sensitivity, Ensemble, EvalConfig, Localizer, RandomScorer,
    SensitivityConfig,
};
use perfloc::ml::{ConvArch, GbdtConfig};
use perfloc::p2bc::{train_p2bc, P2bcConfig, P2bcModels};
use perfloc::score::{ScoreVector, Verdict};
use perfloc::select::{select_all, SelectionConfig, SelectionResult};
use perfloc::simgen::{generate_corpus, write_corpus, GeneratorConfig};
use perfloc::trace::{load_trace, CounterTrace};
use perfloc::{Error, Result};

#[derive(Parser)]
#[command(name = "perfloc", version, about = "Localize performance bugs from counter traces")]
struct Cli {
    /// Seed for every randomized step.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output file or directory, depending on the command.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Cbc,
    P2bc,
    Ensemble,
    Random,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    PerTimeStep,
    PerTrace,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic labeled corpus.
    Simgen {
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Per-workload counter selection.
    Select {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value_t = 0.7)]
        alpha: f64,
        #[arg(long, default_value_t = 0.95)]
        beta: f64,
    },
    /// Train the counter-based classifier bank.
    TrainCbc {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        selection: PathBuf,
        #[arg(long, default_value_t = 100)]
        trees: usize,
        #[arg(long, value_enum, default_value = "per-time-step")]
        mode: Mode,
        #[arg(long)]
        include_bugfree: bool,
    },
    /// Train IPC models and the error-trace classifiers.
    TrainP2bc {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        selection: PathBuf,
        #[arg(long, default_value_t = 250)]
        trees: usize,
        #[arg(long)]
        epochs: Option<usize>,
        /// Use the compact convnet layout.
        #[arg(long)]
        small_net: bool,
        #[arg(long)]
        include_bugfree: bool,
    },
    /// Rank units for one design from a directory of per-workload traces.
    Localize {
        #[arg(long, value_enum)]
        method: Method,
        #[arg(long, alias = "cbc-bank")]
        bank: Option<PathBuf>,
        #[arg(long)]
        p2bc_models: Option<PathBuf>,
        #[arg(long)]
        traces: PathBuf,
        #[arg(long, default_value_t = 5)]
        topk: usize,
    },
    /// Top-k accuracy over the test split of a corpus.
    Evaluate {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_enum)]
        method: Method,
        #[arg(long, alias = "cbc-bank")]
        bank: Option<PathBuf>,
        #[arg(long)]
        p2bc_models: Option<PathBuf>,
        #[arg(long, default_value_t = 5)]
        max_k: usize,
    },
    /// Top-1 accuracy as workloads are dropped.
    Sensitivity {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        bank: PathBuf,
        /// Explicit workload counts, e.g. 12,8,4.
        #[arg(long, value_delimiter = ',')]
        grid: Vec<usize>,
        #[arg(long, default_value_t = 5)]
        batch: usize,
        #[arg(long, default_value_t = 100)]
        repetitions: usize,
    },
    /// Where the BugFree class ranks on bug-free and buggy test designs.
    AuditBugfree {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        bank: PathBuf,
        #[arg(long, default_value_t = 0.01)]
        min_impact: f64,
    },
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Writes to `--out` when given, stdout otherwise.
fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => write_text(p, text),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn out_dir(out: Option<&Path>) -> Result<&Path> {
    out.ok_or_else(|| Error::Config("this command needs --out DIR".into()))
}

fn need<'a>(p: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    p.as_deref()
        .ok_or_else(|| Error::Config(format!("this method needs {flag}")))
}

fn load_selection(path: &Path) -> Result<SelectionResult> {
    SelectionResult::from_json_str(&read_text(path)?)
}

fn load_design(dir: &Path) -> Result<Vec<CounterTrace>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::EmptyInput(format!("no .csv traces in {}", dir.display())));
    }
    paths.iter().map(|p| load_trace(p)).collect()
}

struct Models {
    cbc: Option<CbcModelBank>,
    p2bc: Option<P2bcModels>,
}

fn load_models(method: Method, bank: &Option<PathBuf>, p2bc: &Option<PathBuf>) -> Result<Models> {
    let cbc = match method {
        Method::Cbc | Method::Ensemble => Some(CbcModelBank::load(need(bank, "--bank")?)?),
        _ => None,
    };
    let p2bc = match method {
        Method::P2bc | Method::Ensemble => Some(P2bcModels::load(need(p2bc, "--p2bc-models")?)?),
        _ => None,
    };
    Ok(Models { cbc, p2bc })
}

fn localize(
    method: Method,
    models: &Models,
    traces: &[&CounterTrace],
    seed: u64,
) -> Result<Verdict> {
    match (method, &models.cbc, &models.p2bc) {
        (Method::Cbc, Some(bank), _) => {
            let loc = localize_cbc(bank, traces)?;
            Ok(Verdict::from_scores(&loc.scores, loc.zero_filled))
        }
        (Method::P2bc, _, Some(m)) => {
            let loc = m.localize(traces)?;
            let mut v = Verdict::from_scores(&loc.scores, Vec::new());
            v.missing_workloads = Some(loc.missing_workloads);
            Ok(v)
        }
        (Method::Ensemble, Some(bank), Some(m)) => {
            let a = localize_cbc(bank, traces)?;
            let b = m.localize(traces)?;
            let units = |s: &ScoreVector| {
                ScoreVector::new(s.scores.iter().filter(|(u, _)| u.is_unit()).map(|(u, v)| (*u, *v)).collect())
            };
            let e = combine(&units(&a.scores)?, &units(&b.scores)?)?;
            let mut v = Verdict::from_scores(&e.combined, a.zero_filled);
            v.missing_workloads = Some(b.missing_workloads);
            v.cbc_normalized = Some(e.cbc_normalized.scores);
            v.p2bc_normalized = Some(e.p2bc_normalized.scores);
            Ok(v)
        }
        (Method::Random, _, _) => {
            let s = RandomScorer { seed }.localize(traces)?;
            Ok(Verdict::from_scores(&s, Vec::new()))
        }
        _ => Err(Error::Config("models missing for the chosen method".into())),
    }
}

fn localizer<'a>(method: Method, models: &'a Models, random: &'a RandomScorer) -> Result<Box<dyn Localizer + 'a>> {
    Ok(match (method, &models.cbc, &models.p2bc) {
        (Method::Cbc, Some(bank), _) => Box::new(bank.clone()),
        (Method::P2bc, _, Some(m)) => Box::new(m.clone()),
        (Method::Ensemble, Some(cbc), Some(p2bc)) => Box::new(Ensemble { cbc, p2bc }),
        (Method::Random, _, _) => Box::new(*random),
        _ => return Err(Error::Config("models missing for the chosen method".into())),
    })
}

fn dataset(manifest: &Path) -> Result<Dataset> {
    load_dataset_from(manifest)
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    let out = cli.out.as_deref();
    let seed = cli.seed.unwrap_or(0);
    match cli.command {
        Command::Simgen { config } => {
            let mut cfg = match config {
                Some(p) => GeneratorConfig::from_json_str(&read_text(&p)?)?,
                None => GeneratorConfig::default(),
            };
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            let corpus = generate_corpus(&cfg)?;
            let dir = out_dir(out)?;
            write_corpus(&corpus, dir)?;
            log::info!("wrote {} traces to {}", corpus.traces.len(), dir.display());
        }
        Command::Select {
            manifest,
            alpha,
            beta,
        } => {
            let ds = dataset(&manifest)?;
            let sel = select_all(&ds, &SelectionConfig { alpha, beta })?;
            emit(out, &sel.to_json_string()?)?;
        }
        Command::TrainCbc {
            manifest,
            selection,
            trees,
            mode,
            include_bugfree,
        } => {
            let ds = dataset(&manifest)?;
            let sel = load_selection(&selection)?;
            let mut cfg = CbcConfig {
                mode: match mode {
                    Mode::PerTimeStep => CbcMode::PerTimeStep,
                    Mode::PerTrace => CbcMode::PerTrace,
                },
                gbdt: GbdtConfig::with_trees(trees),
                include_bugfree_class: include_bugfree,
                ..CbcConfig::default()
            };
            cfg.conv_train.seed = seed;
            let bank = train_cbc(&ds, &sel.superset, &cfg)?;
            bank.save(out_dir(out)?)?;
            log::info!("trained {} models", bank.model_count());
        }
        Command::TrainP2bc {
            manifest,
            selection,
            trees,
            epochs,
            small_net,
            include_bugfree,
        } => {
            let ds = dataset(&manifest)?;
            let sel = load_selection(&selection)?;
            let mut cfg = P2bcConfig::default();
            cfg.ipc.gbdt = GbdtConfig::with_trees(trees);
            cfg.stage2.include_bugfree_class = include_bugfree;
            cfg.stage2.train.seed = seed;
            if let Some(e) = epochs {
                cfg.stage2.train.epochs = e;
            }
            if small_net {
                cfg.stage2.arch = ConvArch::small();
            }
            let models = train_p2bc(&ds, &sel, &cfg)?;
            models.save(out_dir(out)?)?;
            log::info!("trained {} models", models.model_count());
        }
        Command::Localize {
            method,
            bank,
            p2bc_models,
            traces,
            topk,
        } => {
            let models = load_models(method, &bank, &p2bc_models)?;
            let design = load_design(&traces)?;
            let refs: Vec<&CounterTrace> = design.iter().collect();
            let verdict = localize(method, &models, &refs, seed)?;
            log::info!("top-{topk}: {:?}", verdict.top(topk));
            emit(out, &verdict.to_json_string()?)?;
        }
        Command::Evaluate {
            manifest,
            method,
            bank,
            p2bc_models,
            max_k,
        } => {
            let ds = dataset(&manifest)?;
            let models = load_models(method, &bank, &p2bc_models)?;
            let random = RandomScorer { seed };
            let loc = localizer(method, &models, &random)?;
            let cfg = EvalConfig {
                max_k,
                ..EvalConfig::default()
            };
            let report = evaluate(loc.as_ref(), &ds, &cfg)?;
            let dir = out_dir(out)?;
            write_text(&dir.join("report.json"), &report.to_json_string()?)?;
            write_text(&dir.join("report.csv"), &report.to_csv())?;
        }
        Command::Sensitivity {
            manifest,
            bank,
            grid,
            batch,
            repetitions,
        } => {
            let ds = dataset(&manifest)?;
            let bank = CbcModelBank::load(&bank)?;
            let mut cfg = SensitivityConfig::batched(bank.workloads().len(), batch, repetitions, seed);
            if !grid.is_empty() {
                cfg.grid = grid;
            }
            let r = workload_sensitivity(&bank, &ds, &cfg)?;
            let dir = out_dir(out)?;
            write_text(&dir.join("sensitivity.json"), &serde_json::to_string_pretty(&r)?)?;
            write_text(&dir.join("sensitivity.csv"), &r.to_csv())?;
        }
        Command::AuditBugfree {
            manifest,
            bank,
            min_impact,
        } => {
            let ds = dataset(&manifest)?;
            let bank = CbcModelBank::load(&bank)?;
            let audit = bugfree_audit(&bank, &ds, min_impact)?;
            emit(out, &serde_json::to_string_pretty(&audit)?)?;
        }
    }
    Ok(())
}

fn error_json(kind: &str, message: &str) -> String {
    serde_json::json!({ "error": kind, "message": message }).to_string()
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprintln!("{}", error_json("UsageError", e.to_string().trim()));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", error_json(e.kind(), &e.to_string()));
            ExitCode::FAILURE
        }
    }
}

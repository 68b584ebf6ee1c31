use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{error, info};

use subband_svm::corpus::{make_babble, write_corpus, write_wav};
use subband_svm::ensemble::{weight_report, weight_report_csv, ScenarioKind};
use subband_svm::harness::{
    emit_plot_data, load_config, load_splits, run_sweep, ExperimentConfig, FrontEnd, ResultTable, Session,
};
use subband_svm::mfcc_frontend::MfccScenarioKind;
use subband_svm::signal::{NoiseKind, Snr};
use subband_svm::{Error, Result};

#[derive(Parser)]
#[command(name = "subband-svm", version, about = "Subband SVM phoneme classification experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the synthetic corpus and a babble noise file, or check a
    /// directory corpus.
    Prepare(Common),
    /// Train (or load from the cache) the base-level subband ensemble.
    TrainBase(Common),
    /// Train (or load) the cepstral classifier of each scenario.
    TrainMfcc(Common),
    /// Train (or load) the meta level of each scenario and print weights.
    TrainMeta(Common),
    /// Sweep restricted to one front-end, noise and SNR.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        front_end: FrontEnd,
        #[arg(long)]
        noise_kind: NoiseKind,
        #[arg(long)]
        at: Snr,
    },
    /// Full sweep over the configured grid.
    Sweep(Common),
    /// Regenerate plot-data files from a results.csv.
    Report {
        results: PathBuf,
        /// Defaults to the directory of the results file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Config file plus overrides of its most common keys.
#[derive(Args)]
struct Common {
    /// TOML configuration, or a manifest.json of an earlier run.
    #[arg(long, short)]
    config: Option<PathBuf>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_delimiter = ',')]
    front_ends: Option<Vec<FrontEnd>>,
    #[arg(long, value_delimiter = ',')]
    noise: Option<Vec<NoiseKind>>,
    /// Comma-separated SNRs in dB or `quiet`.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    snr: Option<Vec<Snr>>,
    /// Keep only the named scenarios.
    #[arg(long, value_delimiter = ',')]
    scenario: Option<Vec<String>>,
    /// Number of subbands S.
    #[arg(long)]
    channels: Option<usize>,
    /// Frames T of the dynamic subband features.
    #[arg(long)]
    frames: Option<usize>,
    /// Kernel degree.
    #[arg(long)]
    theta: Option<u32>,
    /// SVM box constraint C.
    #[arg(long)]
    c: Option<f64>,
}

impl Common {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => load_config(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(v) = &self.output_dir {
            cfg.output_dir = v.clone();
        }
        if let Some(v) = &self.cache_dir {
            cfg.cache_dir = Some(v.clone());
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = &self.front_ends {
            cfg.front_ends = v.clone();
        }
        if let Some(v) = &self.noise {
            cfg.noise = v.clone();
        }
        if let Some(v) = &self.snr {
            cfg.snr_grid = v.clone();
        }
        if let Some(names) = &self.scenario {
            for n in names {
                if !cfg.scenarios.iter().any(|s| &s.name == n) {
                    return Err(Error::Config(format!("no scenario named '{n}'")));
                }
            }
            cfg.scenarios.retain(|s| names.contains(&s.name));
        }
        if let Some(v) = self.channels {
            cfg.subband.channels = v;
        }
        if let Some(v) = self.frames {
            cfg.subband.frames = v;
        }
        if let Some(v) = self.theta {
            cfg.theta = v;
        }
        if let Some(v) = self.c {
            cfg.svm.c = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn prepare(cfg: &ExperimentConfig) -> Result<()> {
    let splits = load_splits(cfg)?;
    if let Some(s) = &cfg.corpus.synthetic {
        let root = cfg.output_dir.join("corpus");
        write_corpus(&root.join("train"), &splits.train)?;
        write_corpus(&root.join("dev"), &splits.dev)?;
        write_corpus(&root.join("test"), &splits.test)?;
        let babble = make_babble(&s.spec, 6, 30.0, s.seed.wrapping_add(1000))?;
        let noise_dir = cfg.output_dir.join("noise");
        std::fs::create_dir_all(&noise_dir).map_err(|e| Error::io(&noise_dir, e))?;
        write_wav(&noise_dir.join("babble.wav"), &babble)?;
        println!("corpus written to {}", root.display());
        println!("babble noise written to {}", noise_dir.join("babble.wav").display());
    }
    for (name, us) in [("train", &splits.train), ("dev", &splits.dev), ("test", &splits.test)] {
        let phones: usize = us.iter().map(|u| u.phones.len()).sum();
        println!("{name}: {} utterances, {phones} phones", us.len());
    }
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn print_models(session: &Session) {
    for m in &session.models {
        println!("{}: {} ({:?})", m.role, m.key, m.cache);
    }
    for w in &session.warnings {
        println!("warning: {w}");
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Prepare(c) => prepare(&c.resolve()?),
        Command::TrainBase(c) => {
            let mut session = Session::open(&c.resolve()?)?;
            session.base()?;
            print_models(&session);
            Ok(())
        }
        Command::TrainMfcc(c) => {
            let cfg = c.resolve()?;
            let mut session = Session::open(&cfg)?;
            for sc in &cfg.scenarios {
                if sc.mfcc == MfccScenarioKind::Matched {
                    info!("scenario {}: matched models are trained per grid point by sweep", sc.name);
                    continue;
                }
                session.mfcc(sc.mfcc, None)?;
            }
            print_models(&session);
            Ok(())
        }
        Command::TrainMeta(c) => {
            let cfg = c.resolve()?;
            let mut session = Session::open(&cfg)?;
            for sc in &cfg.scenarios {
                if sc.subband == ScenarioKind::Matched {
                    info!("scenario {}: matched models are trained per grid point by sweep", sc.name);
                    continue;
                }
                let ens = session.stacked(sc.subband, None)?;
                let path = cfg.output_dir.join("weights").join(format!("weights_{}.csv", sc.name));
                write_text(&path, &weight_report_csv(&weight_report(&ens)?))?;
                println!("weights written to {}", path.display());
            }
            print_models(&session);
            Ok(())
        }
        Command::Evaluate {
            common,
            front_end,
            noise_kind,
            at,
        } => {
            let mut cfg = common.resolve()?;
            cfg.front_ends = vec![front_end];
            cfg.noise = vec![noise_kind];
            cfg.snr_grid = vec![at];
            cfg.validate()?;
            let out = run_sweep(&cfg)?;
            print!("{}", out.table.to_csv());
            Ok(())
        }
        Command::Sweep(c) => {
            let out = run_sweep(&c.resolve()?)?;
            print!("{}", out.table.to_csv());
            for w in &out.manifest.warnings {
                println!("warning: {w}");
            }
            Ok(())
        }
        Command::Report { results, out } => {
            let text = std::fs::read_to_string(&results).map_err(|e| Error::io(&results, e))?;
            let table = ResultTable::from_csv(&text)?;
            let dir = out.unwrap_or_else(|| results.parent().map(Path::to_path_buf).unwrap_or_default());
            for p in emit_plot_data(&table, &dir)? {
                println!("{}", p.display());
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            ExitCode::FAILURE
        }
    }
}

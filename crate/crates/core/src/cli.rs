//! The `vgan` command line.
//!
//! Every subcommand reads a [`RunConfig`] (defaults, then `--config`, then
//! `--set key=value` and dedicated flags) and works on the paths it names.
//! Failures print one diagnostic line and map to distinct exit codes.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{streams, ConfigError, RunConfig};
use crate::data::{Checkpoint, Corpus, DataError, OracleModel, Vocab};
use crate::eval::{avg_bleu2, nll_report, oracle_vocab, run_experiment, Evaluator, BLEU_COUNTS};
use crate::trainer::{adversarial_loop, pretrain_discriminator, pretrain_generator, MetricsLog, MetricsRow, Players};
use crate::{Error, Result};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_MISSING_FILE: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;
pub const EXIT_CHECKPOINT_VERSION: i32 = 4;
pub const EXIT_CORRUPT_CHECKPOINT: i32 = 5;
pub const EXIT_USAGE: i32 = 64;

#[derive(Parser, Debug)]
#[command(name = "vgan", version, about = "Latent-variable sequence GAN: training, sampling and evaluation")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// `key = value` config file
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Base profile the config file and overrides apply to
    #[arg(long, global = true, value_enum, default_value_t = Profile::Desk)]
    pub profile: Profile,
    /// Override one config key, e.g. `--set rounds=3`
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Run seed
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Profile {
    Desk,
    Full,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Build a vocabulary file from the corpus
    BuildVocab,
    /// Create the synthetic oracle with its vocabulary and corpus
    MakeOracle,
    /// Pretrain the generator on the variational bound
    PretrainGen {
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Pretrain the discriminator against generator samples
    PretrainDisc {
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Alternate policy-gradient and discriminator updates
    Adversarial {
        #[arg(long)]
        rounds: Option<usize>,
    },
    /// Print generated sentences
    Sample {
        #[arg(long, default_value_t = 10)]
        count: usize,
        #[arg(long, default_value_t = 1.0)]
        temperature: f64,
    },
    /// Report NLL and BLEU-2 on the test split
    Eval,
    /// Run the whole oracle experiment into the output directory
    Experiment,
}

/// Exit code for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Data(DataError::Io(e)) if e.kind() == std::io::ErrorKind::NotFound => EXIT_MISSING_FILE,
        Error::Config(ConfigError::Io { source, .. }) if source.kind() == std::io::ErrorKind::NotFound => {
            EXIT_MISSING_FILE
        }
        Error::Config(_) => EXIT_CONFIG,
        Error::Data(DataError::Version { .. }) => EXIT_CHECKPOINT_VERSION,
        Error::Data(DataError::BadMagic | DataError::Truncated { .. }) => EXIT_CORRUPT_CHECKPOINT,
        _ => EXIT_FAILURE,
    }
}

/// Parses `args` (program name first), runs the command writing results to
/// `out` and diagnostics to stderr, and returns the exit code.
pub fn run<I, A>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = A>,
    A: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli, out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("vgan: {e}");
            exit_code(&e)
        }
    }
}

fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let base = match cli.common.profile {
        Profile::Desk => RunConfig::desk(),
        Profile::Full => RunConfig::full_scale(),
    };
    let mut overrides = Vec::new();
    for kv in &cli.common.set {
        let (k, v) = kv.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line: 0,
            text: kv.clone(),
        })?;
        overrides.push((k.trim().to_string(), v.trim().to_string()));
    }
    if let Some(seed) = cli.common.seed {
        overrides.push(("seed".into(), seed.to_string()));
    }
    match &cli.command {
        Command::PretrainGen { epochs: Some(e) } => overrides.push(("pretrain_epochs".into(), e.to_string())),
        Command::PretrainDisc { epochs: Some(e) } => overrides.push(("disc_epochs".into(), e.to_string())),
        Command::Adversarial { rounds: Some(r) } => overrides.push(("rounds".into(), r.to_string())),
        _ => {}
    }
    Ok(RunConfig::load(base, cli.common.config.as_deref(), &overrides)?)
}

fn with_path(path: &Path, e: std::io::Error) -> Error {
    Error::Data(DataError::Io(std::io::Error::new(
        e.kind(),
        format!("{}: {e}", path.display()),
    )))
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| with_path(path, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| with_path(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| with_path(path, e))
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| with_path(path, e))?;
    Ok(Checkpoint::from_bytes(&bytes)?)
}

fn load_vocab(cfg: &RunConfig) -> Result<Vocab> {
    Ok(Vocab::from_file_string(&read_text(&cfg.vocab)?)?)
}

fn load_splits(cfg: &RunConfig, vocab: &Vocab) -> Result<(Corpus, Corpus)> {
    let text = read_text(&cfg.corpus)?;
    let corpus = Corpus::from_lines(text.lines(), vocab, cfg.max_len);
    if corpus.is_empty() {
        return Err(DataError::Empty("corpus").into());
    }
    Ok(corpus.split(cfg.split_ratio, cfg.stream(streams::SPLIT))?)
}

/// Players whose dimensions come from the checkpoint's config echo, with
/// generator weights and optimizer state restored. Learning rates come
/// from the checkpoints.
fn players_from(vocab: &Vocab, gen: &Checkpoint, disc: Option<&Checkpoint>) -> Result<Players<f32>> {
    let built = RunConfig::parse(&gen.config)?;
    let mut players = built.init_players(vocab.len())?;
    players.load_generator(gen)?;
    if let Some(d) = disc {
        let dcfg = RunConfig::parse(&d.config)?;
        let mut fresh = dcfg.init_players(vocab.len())?;
        fresh.load_discriminator(d)?;
        players.discriminator = fresh.discriminator;
        players.d_adam = fresh.d_adam;
    }
    Ok(players)
}

fn execute(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    let cfg = resolve_config(cli)?;
    let io = |e: std::io::Error| Error::Data(DataError::Io(e));
    match &cli.command {
        Command::BuildVocab => {
            let text = read_text(&cfg.corpus)?;
            let vocab = Vocab::build(text.lines(), cfg.vocab_cap)?;
            write_file(&cfg.vocab, vocab.to_file_string().as_bytes())?;
            writeln!(out, "wrote {} tokens to {}", vocab.len(), cfg.vocab.display()).map_err(io)?;
        }
        Command::MakeOracle => {
            let oracle = OracleModel::new(cfg.oracle_config())?;
            let vocab = oracle_vocab(cfg.vocab_cap);
            let corpus = oracle.generate(cfg.oracle_sentences, cfg.max_len, cfg.stream(streams::ORACLE_CORPUS))?;
            write_file(&cfg.oracle, &oracle.to_checkpoint().to_bytes())?;
            write_file(&cfg.vocab, vocab.to_file_string().as_bytes())?;
            write_file(&cfg.corpus, corpus.to_text(&vocab).as_bytes())?;
            writeln!(
                out,
                "oracle with {} tokens; {} sentences in {}",
                vocab.len(),
                corpus.len(),
                cfg.corpus.display()
            )
            .map_err(io)?;
        }
        Command::PretrainGen { .. } => {
            let vocab = load_vocab(&cfg)?;
            let (train, _) = load_splits(&cfg, &vocab)?;
            let mut players = cfg.init_players(vocab.len())?;
            let trace = pretrain_generator(
                &mut players.generator,
                &mut players.g_adam,
                &train,
                &cfg.gen_pretrain_options(),
                cfg.stream(streams::PRETRAIN_GEN),
            )?;
            for e in &trace {
                writeln!(out, "epoch {:>3}  bound {:.4}  per-token {:.4}", e.epoch, e.bound, e.per_token).map_err(io)?;
            }
            write_file(&cfg.generator, &players.generator_checkpoint(&cfg.render()).to_bytes())?;
        }
        Command::PretrainDisc { .. } => {
            let vocab = load_vocab(&cfg)?;
            let (train, _) = load_splits(&cfg, &vocab)?;
            let gen = load_checkpoint(&cfg.generator)?;
            let mut players = players_from(&vocab, &gen, None)?;
            let fresh = cfg.init_players(vocab.len())?;
            players.discriminator = fresh.discriminator;
            players.d_adam = fresh.d_adam;
            let trace = pretrain_discriminator(
                &mut players.discriminator,
                &mut players.d_adam,
                &train,
                &players.generator,
                &cfg.disc_pretrain_options(),
                cfg.stream(streams::PRETRAIN_DISC),
            )?;
            for e in &trace {
                writeln!(out, "epoch {:>3}  loss {:.4}  accuracy {:.4}", e.epoch, e.loss, e.accuracy).map_err(io)?;
            }
            write_file(&cfg.discriminator, &players.discriminator_checkpoint(&cfg.render()).to_bytes())?;
        }
        Command::Adversarial { .. } => {
            let vocab = load_vocab(&cfg)?;
            let (train, test) = load_splits(&cfg, &vocab)?;
            let gen = load_checkpoint(&cfg.generator)?;
            let disc = load_checkpoint(&cfg.discriminator)?;
            let mut players = players_from(&vocab, &gen, Some(&disc))?;
            let oracle = match load_checkpoint(&cfg.oracle) {
                Ok(ck) => Some(OracleModel::from_checkpoint(&ck)?),
                Err(_) => None,
            };
            let eval = Evaluator::new(oracle.as_ref(), &test, cfg.eval_samples, cfg.stream(streams::EVAL));
            std::fs::create_dir_all(&cfg.output_dir).map_err(|e| with_path(&cfg.output_dir, e))?;
            let mut log = MetricsLog::create(&cfg.output_dir.join("metrics.csv"))?;
            let adv = cfg.adversarial_config();
            adversarial_loop(&mut players, &train, &adv, cfg.stream(streams::ADVERSARIAL), |stats, p| {
                let snap = eval.snapshot(p)?;
                log.append(MetricsRow {
                    d_loss: Some(stats.d_loss),
                    mean_reward: Some(stats.mean_reward),
                    ..eval.row("adversarial", stats.round, stats.round * (adv.g_steps + adv.d_steps), &snap)
                })?;
                Ok(())
            })?;
            for row in &log.rows {
                writeln!(out, "{}", row.to_csv()).map_err(io)?;
            }
            write_file(&cfg.generator, &players.generator_checkpoint(&gen.config).to_bytes())?;
            write_file(&cfg.discriminator, &players.discriminator_checkpoint(&disc.config).to_bytes())?;
        }
        Command::Sample { count, temperature } => {
            let vocab = load_vocab(&cfg)?;
            let gen = load_checkpoint(&cfg.generator)?;
            let players = players_from(&vocab, &gen, None)?;
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.stream(streams::SAMPLE));
            for _ in 0..*count {
                let s = players
                    .generator
                    .sample_sequence(players.budget(), *temperature, &mut rng)?;
                writeln!(out, "{}", vocab.decode(&s.tokens)).map_err(io)?;
            }
        }
        Command::Eval => {
            let vocab = load_vocab(&cfg)?;
            let (_, test) = load_splits(&cfg, &vocab)?;
            let gen = load_checkpoint(&cfg.generator)?;
            let players = players_from(&vocab, &gen, None)?;
            let g = &players.generator;
            let report = nll_report(g, &test, cfg.n_z, cfg.stream(streams::EVAL))?;
            writeln!(
                out,
                "nll per sentence {:.4}  per token {:.4}  (n_z = {})",
                report.per_sequence, report.per_token, report.n_z
            )
            .map_err(io)?;
            if cfg.oracle.exists() {
                let oracle = OracleModel::from_checkpoint(&load_checkpoint(&cfg.oracle)?)?;
                let eval = Evaluator::new(Some(&oracle), &test, cfg.eval_samples, cfg.stream(streams::EVAL));
                let nll = oracle.nll(&eval.samples(g, players.budget())?)?;
                writeln!(out, "oracle nll {nll:.4}").map_err(io)?;
            }
            let refs: Vec<Vec<usize>> = test.sentences.clone();
            for r in avg_bleu2(g, &refs, &BLEU_COUNTS, players.budget(), cfg.stream(streams::EVAL))? {
                writeln!(out, "bleu2 n={:<5} {:.4}", r.n_generated, r.mean).map_err(io)?;
            }
        }
        Command::Experiment => {
            let report = run_experiment(&cfg, Some(&cfg.output_dir))?;
            let fmt = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{v:.4}"));
            writeln!(
                out,
                "oracle nll: pretrained {}  adversarial {}",
                fmt(report.pretrained.nll_oracle),
                fmt(report.final_snapshot.nll_oracle)
            )
            .map_err(io)?;
            writeln!(
                out,
                "bleu2: pretrained {:.4}  adversarial {:.4}",
                report.pretrained.bleu2, report.final_snapshot.bleu2
            )
            .map_err(io)?;
            writeln!(out, "wrote {}", cfg.output_dir.join("metrics.csv").display()).map_err(io)?;
        }
    }
    Ok(())
}

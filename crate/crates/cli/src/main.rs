//! `negotrack`: corpus validation, statistics, oracle tracking, prompt
//! emission, splitting and evaluation.
//!
//! Exit status is 0 on success, 1 on a data or validation error and 2 on a
//! usage error.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use negotrack::dialogue::dialogue_stats;
use negotrack::metrics::{self, gold_turns, PredictionMode, PredictionRecord, TurnKey};
use negotrack::prompt::{emit_dataset, PromptConfig, TaskSet, DEFAULT_WINDOW};
use negotrack::splits::{make_splits, Fraction, Role, SplitManifest};
use negotrack::tracker::{self, TrackerConfig};
use negotrack::{load_corpus, AliasTable, Corpus, Domain, LoadOptions, Ontology};

#[derive(Parser)]
#[command(
    name = "negotrack",
    version,
    about = "Agreement tracking for negotiation dialogues"
)]
struct Cli {
    /// Seed for every stochastic step.
    #[arg(long, global = true, default_value_t = 13)]
    seed: u64,
    /// Ontology JSON; defaults to the built-in gpt-negochat ontology.
    #[arg(long, global = true)]
    ontology: Option<PathBuf>,
    /// Surface-form alias table JSON; defaults to the built-in table for the built-in ontology.
    #[arg(long, global = true, conflicts_with = "no_aliases")]
    aliases: Option<PathBuf>,
    /// Keep annotation values exactly as written.
    #[arg(long, global = true)]
    no_aliases: bool,
    /// Reject out-of-ontology annotations instead of warning.
    #[arg(long, global = true)]
    strict: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load a corpus and report schema and ontology problems.
    Validate { corpus: PathBuf },
    /// Corpus size and per-slot agreement counts.
    Stats {
        corpus: PathBuf,
        /// Write the report as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the rule-based tracker over gold dialogue acts.
    Track {
        corpus: PathBuf,
        /// Predictions JSONL.
        #[arg(long)]
        out: PathBuf,
        /// Ignore offers on slots that are already agreed.
        #[arg(long)]
        freeze_agreed: bool,
    },
    /// Write Gen/Clf prompt examples as JSONL.
    Emit {
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Tasks::Gen)]
        tasks: Tasks,
        /// Number of trailing turns in the context.
        #[arg(long, default_value_t = DEFAULT_WINDOW)]
        window: usize,
        /// Split manifest restricting the dialogues.
        #[arg(long, requires_all = ["fold", "role"])]
        manifest: Option<PathBuf>,
        #[arg(long, requires = "manifest")]
        fold: Option<usize>,
        #[arg(long, requires = "manifest", value_parser = parse_role)]
        role: Option<Role>,
        /// Training fraction in percent.
        #[arg(long, requires = "manifest", value_parser = parse_fraction, default_value = "100")]
        fraction: Fraction,
    },
    /// Write a 3-fold split manifest.
    Split {
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score predictions against gold states.
    Eval {
        predictions: PathBuf,
        corpus: PathBuf,
        #[arg(long, value_enum, default_value_t = Mode::State)]
        mode: Mode,
        /// Write the report as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the active ontology as JSON.
    OntologyDump {
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Tasks {
    Gen,
    GenClf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    State,
    Lev,
}

fn parse_role(s: &str) -> Result<Role, String> {
    s.parse()
}

fn parse_fraction(s: &str) -> Result<Fraction, String> {
    s.parse().map_err(|e: negotrack::SplitError| e.to_string())
}

struct Env {
    ontology: Ontology,
    aliases: Option<AliasTable>,
    strict: bool,
    seed: u64,
}

impl Env {
    fn new(cli: &Cli) -> Result<Self> {
        let (ontology, builtin) = match &cli.ontology {
            Some(p) => (
                Ontology::from_json(&read(p)?).with_context(|| format!("{}", p.display()))?,
                false,
            ),
            None => (Ontology::gpt_negochat(), true),
        };
        let aliases = match (&cli.aliases, cli.no_aliases) {
            (_, true) => None,
            (Some(p), _) => {
                Some(AliasTable::from_json(&read(p)?).with_context(|| format!("{}", p.display()))?)
            }
            (None, _) => builtin.then(AliasTable::gpt_negochat),
        };
        Ok(Self {
            ontology,
            aliases,
            strict: cli.strict,
            seed: cli.seed,
        })
    }

    fn corpus(&self, path: &Path) -> Result<Corpus> {
        let options = LoadOptions {
            strict: self.strict,
            aliases: self.aliases.as_ref(),
        };
        let (mut corpus, report) = load_corpus(&read(path)?, &self.ontology, options)
            .with_context(|| format!("{}", path.display()))?;
        for w in &report.warnings {
            eprintln!("{w}");
        }
        if !report.is_clean() {
            eprintln!("{} warnings", report.warnings.len());
        }
        corpus.dialogues.sort_by(|a, b| a.id().cmp(b.id()));
        Ok(corpus)
    }

    fn domain(&self) -> Domain {
        Domain::new(self.ontology.name()).unwrap_or_else(Domain::gpt_negochat)
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

/// Writes to stdout; a closed pipe (e.g. `| head`) is not an error.
fn stdout(text: &str) -> Result<()> {
    let mut out = io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|()| out.flush()) {
        Err(e) if e.kind() != io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut w = create(path)?;
    w.write_all(text.as_bytes())?;
    w.write_all(b"\n")?;
    w.flush()
        .with_context(|| format!("cannot write {}", path.display()))
}

fn validate(env: &Env, path: &Path) -> Result<()> {
    let corpus = env.corpus(path)?;
    let turns: usize = corpus.iter().map(|d| d.len()).sum();
    println!("ok: {} dialogues, {} merged turns", corpus.len(), turns);
    Ok(())
}

fn stats(env: &Env, path: &Path, out: Option<&Path>) -> Result<()> {
    let corpus = env.corpus(path)?;
    let s = dialogue_stats(&corpus, &env.ontology)?;
    let mut text = String::new();
    let _ = writeln!(text, "dialogues               {}", s.dialogues);
    let _ = writeln!(text, "raw utterances          {}", s.raw_utterances);
    let _ = writeln!(text, "merged turns            {}", s.merged_turns);
    let _ = writeln!(
        text,
        "mean/median raw         {:.2} / {:.1}",
        s.mean_raw_utterances, s.median_raw_utterances
    );
    let _ = writeln!(
        text,
        "mean/median merged      {:.2} / {:.1}",
        s.mean_merged_turns, s.median_merged_turns
    );
    let _ = writeln!(text, "mean words per turn     {:.2}", s.mean_words_per_turn);
    let _ = writeln!(text, "final agreements per slot:");
    for (slot, n) in &s.final_agreements {
        let _ = writeln!(text, "  {slot:<24}{n}");
    }
    stdout(&text)?;
    if let Some(out) = out {
        write_text(out, &serde_json::to_string_pretty(&s)?)?;
    }
    Ok(())
}

fn track(env: &Env, path: &Path, out: &Path, freeze_agreed: bool) -> Result<()> {
    let corpus = env.corpus(path)?;
    let config = TrackerConfig { freeze_agreed };
    let mut rows = Vec::new();
    let mut diagnostics = 0;
    for d in corpus.iter() {
        let trace = tracker::trace(d, config)?;
        diagnostics += trace.last().map_or(0, |s| s.diagnostics.len());
        for (t, s) in trace.into_iter().enumerate() {
            rows.push((TurnKey::new(d.id(), t), s.agreements));
        }
    }
    let mut w = create(out)?;
    for (key, state) in &rows {
        serde_json::to_writer(&mut w, &PredictionRecord::from_state(key, state))?;
        w.write_all(b"\n")?;
    }
    w.flush()
        .with_context(|| format!("cannot write {}", out.display()))?;
    println!("{} turns tracked, {} diagnostics", rows.len(), diagnostics);
    match gold_turns(&corpus) {
        Ok(gold) => {
            let r = metrics::evaluate(&rows, &gold)?;
            println!(
                "joint slot accuracy {:.4}, joint f1 {:.4}",
                r.joint_slot_accuracy, r.joint_f1
            );
        }
        Err(e) => println!("no accuracy: {e}"),
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn emit(
    env: &Env,
    path: &Path,
    out: &Path,
    tasks: Tasks,
    window: usize,
    manifest: Option<&Path>,
    fold: Option<usize>,
    role: Option<Role>,
    fraction: Fraction,
) -> Result<()> {
    let mut corpus = env.corpus(path)?;
    if let (Some(m), Some(fold), Some(role)) = (manifest, fold, role) {
        let manifest =
            SplitManifest::from_json(&read(m)?).with_context(|| format!("{}", m.display()))?;
        let ids = manifest.ids(fold, role, fraction)?;
        if let Some(missing) = ids.iter().find(|id| corpus.get(id).is_none()) {
            bail!(
                "manifest dialogue \"{missing}\" is not in {}",
                path.display()
            );
        }
        corpus = corpus.select(ids);
    }
    let config = PromptConfig {
        window,
        domain: env.domain(),
    };
    let tasks = match tasks {
        Tasks::Gen => TaskSet::GEN,
        Tasks::GenClf => TaskSet::GEN_CLF,
    };
    let mut w = create(out)?;
    let lines = emit_dataset(&corpus, tasks, &config, &env.ontology, env.seed, &mut w)
        .with_context(|| format!("emitting to {}", out.display()))?;
    println!("{lines} examples from {} dialogues", corpus.len());
    Ok(())
}

fn split(env: &Env, path: &Path, out: &Path) -> Result<()> {
    let corpus = env.corpus(path)?;
    let plans = make_splits(corpus.iter().map(|d| d.id().to_string()), env.seed)?;
    let manifest = SplitManifest::from_plans(&plans);
    write_text(out, &manifest.to_json())?;
    for p in &plans {
        println!(
            "fold {}: train {}, val {}, test {}",
            p.fold,
            p.train.len(),
            p.val.len(),
            p.test.len()
        );
    }
    Ok(())
}

fn eval(env: &Env, preds: &Path, path: &Path, mode: Mode, out: Option<&Path>) -> Result<()> {
    let corpus = env.corpus(path)?;
    let gold = gold_turns(&corpus)?;
    let records = metrics::parse_predictions(&read(preds)?)
        .with_context(|| format!("{}", preds.display()))?;
    let mode = match mode {
        Mode::State => PredictionMode::State,
        Mode::Lev => PredictionMode::Lev,
    };
    let predicted = metrics::predicted_states(&records, mode, &env.ontology)?;
    let mut report = metrics::evaluate(&predicted.rows, &gold)?;
    report.unparseable = predicted.unparseable;
    stdout(&report.to_table())?;
    if let Some(out) = out {
        write_text(out, &serde_json::to_string_pretty(&report)?)?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let env = Env::new(&cli)?;
    match &cli.command {
        Command::Validate { corpus } => validate(&env, corpus),
        Command::Stats { corpus, out } => stats(&env, corpus, out.as_deref()),
        Command::Track {
            corpus,
            out,
            freeze_agreed,
        } => track(&env, corpus, out, *freeze_agreed),
        Command::Emit {
            corpus,
            out,
            tasks,
            window,
            manifest,
            fold,
            role,
            fraction,
        } => emit(
            &env,
            corpus,
            out,
            *tasks,
            *window,
            manifest.as_deref(),
            *fold,
            *role,
            *fraction,
        ),
        Command::Split { corpus, out } => split(&env, corpus, out),
        Command::Eval {
            predictions,
            corpus,
            mode,
            out,
        } => eval(&env, predictions, corpus, *mode, out.as_deref()),
        Command::OntologyDump { out } => match out {
            Some(p) => write_text(p, &env.ontology.to_json()),
            None => stdout(&(env.ontology.to_json() + "\n")),
        },
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

//! Command-line entry point. `run` returns the process exit code: 0 on
//! success, 1 on usage or fatal input errors, 2 when records were diverted
//! to a nonempty reject file.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use clap::{CommandFactory, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::balance::element_delta;
use crate::bench::{
    agreement, align, corpus_stats, evaluate, ingest_corpus, merge_mechanisms, missing_molecules,
    read_corpus, read_predictions, read_sources, read_steps, template_stats, write_bins_csv,
    write_corpus, write_rejects, write_results_csv, AlignedPair, CorpusRow, EvalOptions,
    IngestResult, PredictionRecord, Reject, RejectReason,
};
use crate::curation::{
    read_items, router, select_items, write_items, CurationItem, Store, DEFAULT_MIN_ANNOTATIONS,
};
use crate::decode::{
    decode_all, source_text, DecodeConfig, DecodeInput, NoisyScorer, OutputMode, Scorer,
    TokenVocabulary, ToyScorer,
};
use crate::equiv::EquivalenceRuleSet;
use crate::reaction::{parse_reaction, ReactionRecord};
use crate::rules::{
    complete_by_rules, default_rules, load_rules, CompletionRule, RuleResult,
    DEFAULT_MAX_APPLICATIONS,
};
use crate::split::{
    extreme_ood_split, fingerprint_corpus, group_split, ks_signed, leakage_groups, median,
    random_split, read_split_jsonl, shift_report, write_split_jsonl, Fold, SplitAssignment,
    SplitConfig, DEFAULT_BITS, DEFAULT_RADIUS,
};

#[derive(Debug, Parser)]
#[command(
    name = "rxnbench",
    version,
    about = "Reaction-completion benchmark pipeline"
)]
struct Cli {
    /// JSON file supplying flags: top-level keys, or a section per subcommand.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every stochastic step.
    #[arg(long, global = true, env = "RXN_SEED", default_value_t = 0)]
    seed: u64,
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Reagents {
    /// Agents join the reactant side before completion.
    Merged,
    /// Agents stay between the arrows and are left out of the balance.
    Separate,
}

/// Rule completion under a reagent placement. With `Separate` the agents
/// are set aside and reattached to the completed reaction.
fn complete_with(
    r: &ReactionRecord,
    placement: Reagents,
    rules: &[CompletionRule],
    max: usize,
) -> RuleResult {
    match placement {
        Reagents::Merged => complete_by_rules(r, rules, max),
        Reagents::Separate => {
            let bare = ReactionRecord {
                agents: Vec::new(),
                ..r.clone()
            };
            let mut res = complete_by_rules(&bare, rules, max);
            res.completed.agents = r.agents.clone();
            res
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    FullEquation,
    MissingMolecules,
}

impl From<Mode> for OutputMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::FullEquation => OutputMode::FullEquation,
            Mode::MissingMolecules => OutputMode::MissingMolecules,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SplitType {
    Random,
    Group,
    ExtremeOod,
}

#[derive(Debug, clap::Args)]
struct SplitArgs {
    #[arg(long, default_value_t = 100)]
    knn_k: usize,
    #[arg(long, default_value_t = 0.55)]
    tanimoto_threshold: f64,
    #[arg(long, default_value_t = 10)]
    n_clusters: usize,
    #[arg(long, default_value_t = 0.20)]
    ood_top_fraction: f64,
    #[arg(long, default_value_t = 0.80)]
    train_fraction: f64,
    /// Validation fraction of random splits.
    #[arg(long, default_value_t = 0.10)]
    valid_fraction: f64,
    #[arg(long, default_value_t = 256)]
    reduced_bits: usize,
    #[arg(long, default_value_t = DEFAULT_RADIUS)]
    radius: u32,
    #[arg(long, default_value_t = DEFAULT_BITS)]
    n_bits: usize,
}

impl SplitArgs {
    fn config(&self, seed: u64) -> SplitConfig {
        SplitConfig {
            knn_k: self.knn_k,
            tanimoto_threshold: self.tanimoto_threshold,
            n_clusters: self.n_clusters,
            ood_top_fraction: self.ood_top_fraction,
            train_fraction: self.train_fraction,
            reduced_bits: self.reduced_bits,
            seed,
            radius: self.radius,
            n_bits: self.n_bits,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Canonicalize reaction lines (`rxn`, `id<TAB>rxn` or corpus rows).
    Canon {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Reject file (default: <out>.rejects.tsv).
        #[arg(long)]
        rejects: Option<PathBuf>,
        /// Move agents to the reactant side.
        #[arg(long)]
        merge_agents: bool,
    },
    /// Element deltas of reaction lines as JSON lines.
    Balance {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        rejects: Option<PathBuf>,
        /// Leave hydrogen out of missing_atoms.
        #[arg(long)]
        exclude_hydrogen: bool,
    },
    /// Corpus and per-template statistics as JSON.
    Stats {
        #[arg(long)]
        corpus: PathBuf,
        /// Predictions whose outcomes feed the template error curve.
        #[arg(long)]
        pred: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        equiv_rules: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Mode::FullEquation)]
        mode: Mode,
    },
    /// Fingerprints of the incomplete reactions as JSON lines.
    Fingerprint {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        rejects: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_RADIUS)]
        radius: u32,
        #[arg(long, default_value_t = DEFAULT_BITS)]
        n_bits: usize,
    },
    /// Fold assignments, one JSON-lines file per realization.
    Split {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long = "type", value_enum)]
        split_type: SplitType,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        rejects: Option<PathBuf>,
        #[command(flatten)]
        cfg: SplitArgs,
    },
    /// Test-to-train similarity CDFs of a split.
    ShiftReport {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        split: PathBuf,
        /// CDF table (CSV).
        #[arg(long)]
        out: PathBuf,
        /// Summary JSON (default: stdout).
        #[arg(long)]
        summary: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_RADIUS)]
        radius: u32,
        #[arg(long, default_value_t = DEFAULT_BITS)]
        n_bits: usize,
    },
    /// Beam-search completion with the n-gram scorer trained on a corpus.
    Decode {
        #[arg(long)]
        train: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        rejects: Option<PathBuf>,
        #[arg(long, default_value_t = 5)]
        beam: usize,
        #[arg(long, default_value_t = 256)]
        max_tokens: usize,
        /// Disable the balance mask.
        #[arg(long)]
        unconstrained: bool,
        #[arg(long, value_enum, default_value_t = Mode::FullEquation)]
        mode: Mode,
        /// Standard deviation of Gaussian logit noise.
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
    },
    /// Rule-based completion.
    Rulecomplete {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        rejects: Option<PathBuf>,
        #[arg(long)]
        rules: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_MAX_APPLICATIONS)]
        max_applications: usize,
        #[arg(long, value_enum, default_value_t = Reagents::Merged)]
        reagents: Reagents,
    },
    /// Score predictions against a corpus.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        targets: PathBuf,
        /// Report JSON.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        rejects: Option<PathBuf>,
        /// Results table CSV: one row per split and model.
        #[arg(long)]
        table: Option<PathBuf>,
        /// Accuracy by missing carbons (CSV).
        #[arg(long)]
        bins: Option<PathBuf>,
        #[arg(long, default_value = "-")]
        split_name: String,
        #[arg(long, default_value = "-")]
        model: String,
        #[arg(long)]
        equiv_rules: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Mode::FullEquation)]
        mode: Mode,
    },
    /// Agreement between two prediction files.
    Agree {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long)]
        targets: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        rejects: Option<PathBuf>,
        #[arg(long)]
        equiv_rules: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Mode::FullEquation)]
        mode: Mode,
    },
    /// Validate a corpus, or align mechanism steps with source reactions.
    Ingest {
        #[arg(long, conflicts_with_all = ["steps", "sources"], required_unless_present = "steps")]
        corpus: Option<PathBuf>,
        #[arg(long, requires = "sources")]
        steps: Option<PathBuf>,
        #[arg(long, requires = "steps")]
        sources: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        rejects: Option<PathBuf>,
        /// Summary JSON (default: stdout).
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Curation HTTP service.
    Serve {
        /// Prepared items (JSON lines).
        #[arg(long, required_unless_present = "targets", conflicts_with = "targets")]
        items: Option<PathBuf>,
        /// Corpus to select items from, with --pred.
        #[arg(long, requires = "pred")]
        targets: Option<PathBuf>,
        /// `method=path` prediction files (repeatable).
        #[arg(long)]
        pred: Vec<String>,
        /// Split file whose test ids count as out of distribution.
        #[arg(long)]
        ood: Option<PathBuf>,
        #[arg(long)]
        log: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        #[arg(long, default_value_t = DEFAULT_MIN_ANNOTATIONS)]
        min_annotations: usize,
        #[arg(long)]
        cors_origin: Option<String>,
        #[arg(long)]
        equiv_rules: Option<PathBuf>,
        /// Write the items and exit without serving.
        #[arg(long)]
        dump_items: Option<PathBuf>,
    },
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Fatal(String),
}

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Fatal(e.to_string())
    }
}

type CmdResult = Result<usize, Failure>;

const GLOBAL_VALUE_FLAGS: [&str; 3] = ["--config", "--seed", "--workers"];

pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let argv = match inject_config(argv) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(cli.workers.unwrap_or(0))
        .build()
    {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };
    match pool.install(|| dispatch(cli.command, cli.seed)) {
        Ok(0) => 0,
        Ok(n) => {
            eprintln!("{n} record(s) rejected");
            2
        }
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            eprintln!("{}", Cli::command().render_usage());
            1
        }
        Err(Failure::Fatal(m)) => {
            eprintln!("error: {m}");
            1
        }
    }
}

/// Position of the subcommand token, skipping global flags and their values.
fn subcommand_index(argv: &[OsString]) -> Option<usize> {
    let mut i = 1;
    while i < argv.len() {
        let t = argv[i].to_string_lossy();
        if GLOBAL_VALUE_FLAGS.contains(&t.as_ref()) {
            i += 2;
        } else if t.starts_with('-') {
            i += 1;
        } else {
            return Some(i);
        }
    }
    None
}

fn config_path(argv: &[OsString]) -> Option<PathBuf> {
    argv.iter().enumerate().find_map(|(i, a)| {
        let s = a.to_string_lossy();
        if s == "--config" {
            argv.get(i + 1).map(PathBuf::from)
        } else {
            s.strip_prefix("--config=").map(PathBuf::from)
        }
    })
}

/// Splices config-file values in after the subcommand. Flags already on
/// the command line win.
fn inject_config(mut argv: Vec<OsString>) -> Result<Vec<OsString>, String> {
    let Some(path) = config_path(&argv) else {
        return Ok(argv);
    };
    let text = fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    let config: serde_json::Map<String, Value> =
        serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    let Some(at) = subcommand_index(&argv) else {
        return Ok(argv);
    };
    let name = argv[at].to_string_lossy().into_owned();
    let cmd = Cli::command();
    let Some(sub) = cmd.find_subcommand(&name) else {
        return Ok(argv);
    };
    let given: BTreeSet<String> = argv
        .iter()
        .filter_map(|a| {
            a.to_str()?
                .strip_prefix("--")
                .map(|f| f.split('=').next().unwrap_or(f).to_string())
        })
        .collect();
    // section entries first so they win over top-level keys
    let mut entries: Vec<(String, Value)> = match config.get(&name) {
        Some(Value::Object(section)) => section
            .iter()
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect(),
        _ => Vec::new(),
    };
    entries.extend(
        config
            .iter()
            .filter(|(_, v)| !v.is_object())
            .map(|(k, v)| (k.clone(), v.clone())),
    );
    let mut extra: Vec<OsString> = Vec::new();
    let mut seen = BTreeSet::new();
    for (key, value) in entries {
        let flag = key.replace('_', "-");
        if flag == "config" || given.contains(&flag) || !seen.insert(flag.clone()) {
            continue;
        }
        let takes_value = match (
            flag.as_str(),
            sub.get_arguments().find(|a| a.get_long() == Some(&flag)),
        ) {
            ("seed" | "workers", _) => true,
            (_, Some(arg)) => arg.get_action().takes_values(),
            (_, None) => continue,
        };
        let scalar = |v: &Value| match v {
            Value::String(s) => Ok(s.clone()),
            Value::Number(n) => Ok(n.to_string()),
            Value::Bool(b) => Ok(b.to_string()),
            other => Err(format!("config key {key:?}: unsupported value {other}")),
        };
        match (&value, takes_value) {
            (Value::Bool(true), false) => extra.push(format!("--{flag}").into()),
            (Value::Bool(false), false) => {}
            (_, false) => {
                return Err(format!(
                    "config key {key:?} is a switch and needs true or false"
                ))
            }
            (Value::Array(items), true) => {
                for item in items {
                    extra.push(format!("--{flag}").into());
                    extra.push(scalar(item)?.into());
                }
            }
            (v, true) => {
                extra.push(format!("--{flag}").into());
                extra.push(scalar(v)?.into());
            }
        }
    }
    argv.splice(at + 1..at + 1, extra);
    Ok(argv)
}

fn require_inputs(paths: &[&Path]) -> Result<(), Failure> {
    for p in paths {
        if !p.is_file() {
            return Err(Failure::Usage(format!(
                "input file not found: {}",
                p.display()
            )));
        }
    }
    Ok(())
}

fn require_output_dirs(paths: &[&Path]) -> Result<(), Failure> {
    for p in paths {
        match p.parent() {
            Some(d) if !d.as_os_str().is_empty() && !d.is_dir() => {
                return Err(Failure::Usage(format!(
                    "output directory not found: {}",
                    d.display()
                )));
            }
            _ => {}
        }
    }
    Ok(())
}

fn open(path: &Path) -> Result<BufReader<File>, Failure> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Failure::Fatal(format!("{}: {e}", path.display())))
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Failure::Fatal(format!("{}: {e}", path.display())))
}

fn default_rejects(out: &Path, rejects: Option<PathBuf>) -> PathBuf {
    rejects.unwrap_or_else(|| {
        let mut s = out.as_os_str().to_owned();
        s.push(".rejects.tsv");
        PathBuf::from(s)
    })
}

/// Writes the reject file when there is anything to report and returns the
/// reject count.
fn finish_rejects(path: &Path, rejects: &[Reject]) -> CmdResult {
    if !rejects.is_empty() {
        let mut w = create(path)?;
        write_rejects(&mut w, rejects)?;
        w.flush()?;
    }
    Ok(rejects.len())
}

fn write_json(path: Option<&Path>, value: &impl Serialize) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value)?;
    match path {
        Some(p) => {
            fs::write(p, text + "\n").map_err(|e| Failure::Fatal(format!("{}: {e}", p.display())))
        }
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn write_jsonl<T: Serialize>(
    path: &Path,
    rows: impl IntoIterator<Item = T>,
) -> Result<(), Failure> {
    let mut w = create(path)?;
    for r in rows {
        serde_json::to_writer(&mut w, &r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

fn equiv_rules(path: Option<&Path>) -> Result<EquivalenceRuleSet, Failure> {
    match path {
        Some(p) => Ok(EquivalenceRuleSet::load(p)?),
        None => Ok(EquivalenceRuleSet::default_rules()),
    }
}

fn source_name(path: &Path) -> String {
    path.display().to_string()
}

/// A reaction line from a text, JSON-lines or corpus file.
#[derive(Debug, Clone, PartialEq, Eq)]
struct InputLine {
    id: String,
    rxn: String,
}

#[derive(Deserialize)]
struct JsonInput {
    id: String,
    #[serde(alias = "rxn", alias = "reaction")]
    incomplete_rxn: String,
}

/// Reads `rxn`, `id<TAB>rxn`, corpus rows (incomplete column) or JSON
/// objects with `id` and `incomplete_rxn`. Ids default to line numbers.
fn read_input_lines(path: &Path) -> Result<(Vec<InputLine>, Vec<Reject>), Failure> {
    let source = source_name(path);
    let mut lines = Vec::new();
    let mut rejects = Vec::new();
    for (i, line) in open(path)?.lines().enumerate() {
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let malformed = |detail: String| Reject {
            source: source.clone(),
            location: (i + 1).to_string(),
            reason: RejectReason::MalformedLine,
            detail,
        };
        if line.trim_start().starts_with('{') {
            match serde_json::from_str::<JsonInput>(line) {
                Ok(j) => lines.push(InputLine {
                    id: j.id,
                    rxn: j.incomplete_rxn,
                }),
                Err(e) => rejects.push(malformed(e.to_string())),
            }
            continue;
        }
        let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
        if i == 0 && fields.len() > 1 && fields[0].eq_ignore_ascii_case("id") {
            continue;
        }
        let (id, rxn) = match fields.len() {
            1 => ((i + 1).to_string(), fields[0]),
            2..=4 => (fields[0].to_string(), fields[1]),
            n => {
                rejects.push(malformed(format!(
                    "expected 1 to 4 tab-separated fields, found {n}"
                )));
                continue;
            }
        };
        lines.push(InputLine {
            id,
            rxn: rxn.to_string(),
        });
    }
    Ok((lines, rejects))
}

fn parse_lines(lines: &[InputLine], source: &str) -> (Vec<(String, ReactionRecord)>, Vec<Reject>) {
    use rayon::prelude::*;
    let parsed: Vec<Result<(String, ReactionRecord), Reject>> = lines
        .par_iter()
        .map(|l| {
            parse_reaction(&l.rxn)
                .map(|r| (l.id.clone(), r.with_id(&l.id)))
                .map_err(|e| Reject {
                    source: source.to_string(),
                    location: l.id.clone(),
                    reason: RejectReason::Unparseable,
                    detail: e.to_string(),
                })
        })
        .collect();
    let mut ok = Vec::new();
    let mut bad = Vec::new();
    for p in parsed {
        match p {
            Ok(x) => ok.push(x),
            Err(r) => bad.push(r),
        }
    }
    (ok, bad)
}

fn read_rows(path: &Path) -> Result<(Vec<CorpusRow>, Vec<Reject>), Failure> {
    Ok(read_corpus(open(path)?, &source_name(path))?)
}

type Incomplete = (Vec<String>, Vec<ReactionRecord>, Vec<Reject>);

/// Corpus rows whose incomplete reaction parses, in file order.
fn read_incomplete(path: &Path) -> Result<Incomplete, Failure> {
    let (rows, mut rejects) = read_rows(path)?;
    let lines: Vec<InputLine> = rows
        .into_iter()
        .map(|r| InputLine {
            id: r.id,
            rxn: r.incomplete,
        })
        .collect();
    let (parsed, bad) = parse_lines(&lines, &source_name(path));
    rejects.extend(bad);
    let (ids, records) = parsed.into_iter().unzip();
    Ok((ids, records, rejects))
}

/// Strictly validated corpus pairs.
fn read_targets(path: &Path) -> Result<(Vec<AlignedPair>, Vec<Reject>), Failure> {
    let (rows, mut rejects) = read_rows(path)?;
    let res = ingest_corpus(&rows, &source_name(path));
    rejects.extend(res.rejects);
    Ok((res.pairs, rejects))
}

fn read_preds(path: &Path) -> Result<Vec<PredictionRecord>, Failure> {
    read_predictions(open(path)?).map_err(|e| Failure::Fatal(format!("{}: {e}", path.display())))
}

fn dispatch(command: Command, seed: u64) -> CmdResult {
    match command {
        Command::Canon {
            input,
            out,
            rejects,
            merge_agents,
        } => {
            require_inputs(&[&input])?;
            require_output_dirs(&[&out])?;
            let (lines, mut bad) = read_input_lines(&input)?;
            let (parsed, unparsed) = parse_lines(&lines, &source_name(&input));
            bad.extend(unparsed);
            let mut w = create(&out)?;
            for (id, r) in &parsed {
                let r = if merge_agents {
                    r.merge_agents()
                } else {
                    r.clone()
                };
                writeln!(w, "{id}\t{}", r.canonical_text())?;
            }
            w.flush()?;
            finish_rejects(&default_rejects(&out, rejects), &bad)
        }
        Command::Balance {
            input,
            out,
            rejects,
            exclude_hydrogen,
        } => {
            require_inputs(&[&input])?;
            require_output_dirs(&[&out])?;
            let (lines, mut bad) = read_input_lines(&input)?;
            let (parsed, unparsed) = parse_lines(&lines, &source_name(&input));
            bad.extend(unparsed);
            #[derive(Serialize)]
            struct Row<'a> {
                id: &'a str,
                balanced: bool,
                delta: String,
                missing_atoms: u64,
                missing_carbons: u64,
            }
            write_jsonl(
                &out,
                parsed.iter().map(|(id, r)| {
                    let d = element_delta(r);
                    Row {
                        id,
                        balanced: d.is_zero(),
                        delta: d.to_string(),
                        missing_atoms: d.missing_atoms_with(!exclude_hydrogen),
                        missing_carbons: d.missing_carbons(),
                    }
                }),
            )?;
            finish_rejects(&default_rejects(&out, rejects), &bad)
        }
        Command::Stats {
            corpus,
            pred,
            out,
            equiv_rules: rules_path,
            mode,
        } => {
            let mut inputs = vec![corpus.as_path()];
            inputs.extend(pred.as_deref());
            inputs.extend(rules_path.as_deref());
            require_inputs(&inputs)?;
            require_output_dirs(&[&out])?;
            let (rows, _) = read_rows(&corpus)?;
            let incomplete: Vec<&str> = rows.iter().map(|r| r.incomplete.as_str()).collect();
            let outcomes = match &pred {
                Some(p) => {
                    let (targets, _) = read_targets(&corpus)?;
                    let rules = equiv_rules(rules_path.as_deref())?;
                    let eval = evaluate(
                        &read_preds(p)?,
                        &targets,
                        &rules,
                        EvalOptions { mode: mode.into() },
                    )?;
                    Some(eval.outcomes)
                }
                None => None,
            };
            #[derive(Serialize)]
            struct Report {
                corpus: crate::bench::CorpusStats,
                templates: crate::bench::TemplateStats,
            }
            write_json(
                Some(&out),
                &Report {
                    corpus: corpus_stats(&incomplete),
                    templates: template_stats(&rows, outcomes.as_ref()),
                },
            )?;
            Ok(0)
        }
        Command::Fingerprint {
            corpus,
            out,
            rejects,
            radius,
            n_bits,
        } => {
            require_inputs(&[&corpus])?;
            require_output_dirs(&[&out])?;
            if n_bits == 0 {
                return Err(Failure::Usage("--n-bits must be positive".into()));
            }
            let (ids, records, bad) = read_incomplete(&corpus)?;
            let cfg = SplitConfig {
                radius,
                n_bits,
                ..SplitConfig::default()
            };
            let fps = fingerprint_corpus(&records, &cfg);
            #[derive(Serialize)]
            struct Row<'a> {
                id: &'a str,
                n_bits: usize,
                ones: Vec<usize>,
            }
            write_jsonl(
                &out,
                ids.iter().zip(&fps).map(|(id, fp)| Row {
                    id,
                    n_bits: fp.n_bits(),
                    ones: fp.ones().collect(),
                }),
            )?;
            finish_rejects(&default_rejects(&out, rejects), &bad)
        }
        Command::Split {
            corpus,
            split_type,
            out_dir,
            rejects,
            cfg,
        } => {
            require_inputs(&[&corpus])?;
            let config = cfg.config(seed);
            config
                .validate()
                .map_err(|e| Failure::Usage(e.to_string()))?;
            if !(0.0..=1.0).contains(&cfg.valid_fraction)
                || cfg.train_fraction + cfg.valid_fraction > 1.0
            {
                return Err(Failure::Usage(
                    "train and valid fractions must sum to at most 1".into(),
                ));
            }
            fs::create_dir_all(&out_dir)?;
            let (ids, records, bad) = read_incomplete(&corpus)?;
            let assignments: Vec<SplitAssignment> = match split_type {
                SplitType::Random => vec![random_split(
                    &ids,
                    cfg.train_fraction,
                    cfg.valid_fraction,
                    &config,
                )],
                SplitType::Group | SplitType::ExtremeOod => {
                    let fps = fingerprint_corpus(&records, &config);
                    let groups = leakage_groups(&fps, &config);
                    if split_type == SplitType::Group {
                        group_split(&ids, &fps, &groups, &config)?
                    } else {
                        let deltas: Vec<_> = records.iter().map(element_delta).collect();
                        vec![extreme_ood_split(&ids, &fps, &groups, &deltas, &config)?]
                    }
                }
            };
            for a in &assignments {
                let path = out_dir.join(format!(
                    "{}_{}.jsonl",
                    a.header.split_type, a.header.fold_index
                ));
                let mut w = create(&path)?;
                write_split_jsonl(a, &mut w)?;
                w.flush()?;
                eprintln!(
                    "{}: train {} valid {} test {}",
                    path.display(),
                    a.count(Fold::Train),
                    a.count(Fold::Valid),
                    a.count(Fold::Test)
                );
            }
            let reject_path = rejects.unwrap_or_else(|| out_dir.join("rejects.tsv"));
            finish_rejects(&reject_path, &bad)
        }
        Command::ShiftReport {
            corpus,
            split,
            out,
            summary,
            radius,
            n_bits,
        } => {
            require_inputs(&[&corpus, &split])?;
            require_output_dirs(&[&out])?;
            let assignment = read_split_jsonl(open(&split)?)?;
            let (ids, records, _) = read_incomplete(&corpus)?;
            let split_ids: Vec<&str> = assignment.entries.iter().map(|e| e.id.as_str()).collect();
            if split_ids != ids.iter().map(String::as_str).collect::<Vec<_>>() {
                return Err(Failure::Fatal(format!(
                    "{} does not list the parsed reactions of {} in corpus order",
                    split.display(),
                    corpus.display()
                )));
            }
            let cfg = SplitConfig {
                radius,
                n_bits,
                ..SplitConfig::default()
            };
            let report = shift_report(&assignment, &fingerprint_corpus(&records, &cfg), seed);
            let mut w = create(&out)?;
            report.write_cdf_csv(&mut w)?;
            w.flush()?;
            let (ks_plus, ks_minus) = ks_signed(&report.test_to_train, &report.train_to_train);
            write_json(
                summary.as_deref(),
                &serde_json::json!({
                    "n_test": report.test_to_train.len(),
                    "n_train": report.train_to_train.len(),
                    "median_test_to_train": median(&report.test_to_train),
                    "median_train_to_train": median(&report.train_to_train),
                    "ks_plus": ks_plus,
                    "ks_minus": ks_minus,
                }),
            )?;
            Ok(0)
        }
        Command::Decode {
            train,
            input,
            out,
            rejects,
            beam,
            max_tokens,
            unconstrained,
            mode,
            noise,
        } => {
            require_inputs(&[&train, &input])?;
            require_output_dirs(&[&out])?;
            if beam == 0 || max_tokens == 0 {
                return Err(Failure::Usage(
                    "--beam and --max-tokens must be positive".into(),
                ));
            }
            let mode: OutputMode = mode.into();
            let (pairs, _) = read_targets(&train)?;
            let texts: Vec<(String, String)> = pairs
                .iter()
                .map(|p| {
                    let inc = p.incomplete.merge_agents();
                    let target = match mode {
                        OutputMode::FullEquation => p.complete.merge_agents(),
                        OutputMode::MissingMolecules => missing_molecules(&inc, &p.complete),
                    };
                    (source_text(&inc), target.to_smiles())
                })
                .collect();
            let (lines, mut bad) = read_input_lines(&input)?;
            let (parsed, unparsed) = parse_lines(&lines, &source_name(&input));
            bad.extend(unparsed);
            let inputs: Vec<DecodeInput> = parsed
                .iter()
                .map(|(id, r)| DecodeInput {
                    id: id.clone(),
                    incomplete_rxn: source_text(r),
                })
                .collect();
            let vocab = TokenVocabulary::from_corpus(
                texts
                    .iter()
                    .flat_map(|(s, t)| [s.as_str(), t.as_str()])
                    .chain(inputs.iter().map(|i| i.incomplete_rxn.as_str())),
            );
            let toy = ToyScorer::train_texts(&texts, &vocab)?;
            let noisy;
            let scorer: &dyn Scorer = if noise > 0.0 {
                noisy = NoisyScorer {
                    inner: &toy,
                    sigma: noise,
                    seed,
                };
                &noisy
            } else {
                &toy
            };
            let cfg = DecodeConfig {
                beam,
                max_tokens,
                constrained: !unconstrained,
                mode,
            };
            write_jsonl(&out, decode_all(&inputs, &vocab, scorer, &cfg))?;
            finish_rejects(&default_rejects(&out, rejects), &bad)
        }
        Command::Rulecomplete {
            input,
            out,
            rejects,
            rules,
            max_applications,
            reagents,
        } => {
            let mut inputs = vec![input.as_path()];
            inputs.extend(rules.as_deref());
            require_inputs(&inputs)?;
            require_output_dirs(&[&out])?;
            let rules = match &rules {
                Some(p) => load_rules(p)?,
                None => default_rules(),
            };
            let (lines, mut bad) = read_input_lines(&input)?;
            let (parsed, unparsed) = parse_lines(&lines, &source_name(&input));
            bad.extend(unparsed);
            #[derive(Serialize)]
            struct Row<'a> {
                id: &'a str,
                rank: usize,
                prediction: String,
                confidence: f64,
                method: &'static str,
                solved: bool,
                applied_rules: Vec<String>,
            }
            use rayon::prelude::*;
            let rows: Vec<Row> = parsed
                .par_iter()
                .map(|(id, r)| {
                    let res = complete_with(r, reagents, &rules, max_applications);
                    Row {
                        id,
                        rank: 1,
                        prediction: res.completed.to_smiles(),
                        confidence: res.confidence,
                        method: "rules",
                        solved: res.solved,
                        applied_rules: res.applied_rules,
                    }
                })
                .collect();
            let solved = rows.iter().filter(|r| r.solved).count();
            eprintln!("solved {solved} of {}", rows.len());
            write_jsonl(&out, rows)?;
            finish_rejects(&default_rejects(&out, rejects), &bad)
        }
        Command::Eval {
            pred,
            targets,
            out,
            rejects,
            table,
            bins,
            split_name,
            model,
            equiv_rules: rules_path,
            mode,
        } => {
            let mut inputs = vec![pred.as_path(), targets.as_path()];
            inputs.extend(rules_path.as_deref());
            require_inputs(&inputs)?;
            let mut outputs = vec![out.as_path()];
            outputs.extend(table.as_deref());
            outputs.extend(bins.as_deref());
            require_output_dirs(&outputs)?;
            let rules = equiv_rules(rules_path.as_deref())?;
            let (pairs, bad) = read_targets(&targets)?;
            let eval = evaluate(
                &read_preds(&pred)?,
                &pairs,
                &rules,
                EvalOptions { mode: mode.into() },
            )?;
            write_json(Some(&out), &eval.report)?;
            if let Some(t) = &table {
                let mut w = create(t)?;
                write_results_csv(&mut w, &[(&split_name, &model, &eval.report)])?;
                w.flush()?;
            }
            if let Some(b) = &bins {
                let mut w = create(b)?;
                write_bins_csv(&mut w, &eval.report)?;
                w.flush()?;
            }
            finish_rejects(&default_rejects(&out, rejects), &bad)
        }
        Command::Agree {
            a,
            b,
            targets,
            out,
            rejects,
            equiv_rules: rules_path,
            mode,
        } => {
            let mut inputs = vec![a.as_path(), b.as_path(), targets.as_path()];
            inputs.extend(rules_path.as_deref());
            require_inputs(&inputs)?;
            require_output_dirs(&[&out])?;
            let rules = equiv_rules(rules_path.as_deref())?;
            let (pairs, bad) = read_targets(&targets)?;
            let report = agreement(
                &read_preds(&a)?,
                &read_preds(&b)?,
                &pairs,
                &rules,
                EvalOptions { mode: mode.into() },
            )?;
            write_json(Some(&out), &report)?;
            finish_rejects(&default_rejects(&out, rejects), &bad)
        }
        Command::Ingest {
            corpus,
            steps,
            sources,
            out,
            rejects,
            summary,
        } => {
            let inputs: Vec<&Path> = [&corpus, &steps, &sources]
                .into_iter()
                .flatten()
                .map(PathBuf::as_path)
                .collect();
            require_inputs(&inputs)?;
            let mut outputs = vec![out.as_path()];
            outputs.extend(summary.as_deref());
            require_output_dirs(&outputs)?;
            let result = match (&corpus, &steps, &sources) {
                (Some(c), _, _) => {
                    let (rows, bad) = read_rows(c)?;
                    let mut res = ingest_corpus(&rows, &source_name(c));
                    res.rejects.splice(0..0, bad);
                    res
                }
                (None, Some(st), Some(so)) => {
                    let (step_rows, mut bad) = read_steps(open(st)?, &source_name(st))?;
                    let (source_rows, bad_sources) = read_sources(open(so)?, &source_name(so))?;
                    bad.extend(bad_sources);
                    let (mechanisms, bad_mechanisms) =
                        merge_mechanisms(&step_rows, &source_name(st));
                    bad.extend(bad_mechanisms);
                    let mut res: IngestResult = align(&source_rows, &mechanisms, &source_name(so));
                    res.rejects.splice(0..0, bad);
                    res
                }
                _ => {
                    return Err(Failure::Usage(
                        "give --corpus, or --steps with --sources".into(),
                    ))
                }
            };
            let mut w = create(&out)?;
            write_corpus(&mut w, &result.rows())?;
            w.flush()?;
            finish_rejects(&default_rejects(&out, rejects), &result.rejects)?;
            write_json(summary.as_deref(), &result.summary())?;
            Ok(0)
        }
        Command::Serve {
            items,
            targets,
            pred,
            ood,
            log,
            addr,
            min_annotations,
            cors_origin,
            equiv_rules: rules_path,
            dump_items,
        } => {
            let mut method_paths = Vec::new();
            for p in &pred {
                let (name, path) = p.split_once('=').ok_or_else(|| {
                    Failure::Usage(format!("--pred expects method=path, got {p:?}"))
                })?;
                method_paths.push((name.to_string(), PathBuf::from(path)));
            }
            let mut inputs: Vec<&Path> = [&items, &targets, &ood, &rules_path]
                .into_iter()
                .flatten()
                .map(PathBuf::as_path)
                .collect();
            inputs.extend(method_paths.iter().map(|(_, p)| p.as_path()));
            require_inputs(&inputs)?;
            let mut outputs = vec![log.as_path()];
            outputs.extend(dump_items.as_deref());
            require_output_dirs(&outputs)?;
            let rules = equiv_rules(rules_path.as_deref())?;
            let items: Vec<CurationItem> = match (&items, &targets) {
                (Some(p), _) => read_items(p)?,
                (None, Some(t)) => {
                    let (pairs, _) = read_targets(t)?;
                    let mut methods = Vec::new();
                    for (name, path) in &method_paths {
                        methods.push((name.clone(), read_preds(path)?));
                    }
                    let ood_ids: BTreeSet<String> = match &ood {
                        Some(p) => read_split_jsonl(open(p)?)?
                            .entries
                            .into_iter()
                            .filter(|e| e.fold == Fold::Test)
                            .map(|e| e.id)
                            .collect(),
                        None => BTreeSet::new(),
                    };
                    select_items(&pairs, &methods, &ood_ids, &rules)
                }
                (None, None) => {
                    return Err(Failure::Usage(
                        "give --items, or --targets with --pred".into(),
                    ))
                }
            };
            if let Some(path) = &dump_items {
                let mut w = create(path)?;
                write_items(&mut w, &items)?;
                w.flush()?;
                eprintln!("wrote {} items to {}", items.len(), path.display());
                return Ok(0);
            }
            let store = Store::open(items, &log, min_annotations, rules)?;
            let app = router(Arc::new(Mutex::new(store)), cors_origin.as_deref());
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind(addr).await?;
                eprintln!("listening on {}", listener.local_addr()?);
                axum::serve(listener, app)
                    .with_graceful_shutdown(async {
                        let _ = tokio::signal::ctrl_c().await;
                    })
                    .await
            })?;
            Ok(0)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn os(args: &[&str]) -> Vec<OsString> {
        args.iter().map(OsString::from).collect()
    }

    #[test]
    fn subcommand_found_after_global_values() {
        assert_eq!(
            subcommand_index(&os(&["x", "--seed", "7", "split"])),
            Some(3)
        );
        assert_eq!(subcommand_index(&os(&["x", "--seed=7", "canon"])), Some(2));
        assert_eq!(subcommand_index(&os(&["x"])), None);
    }

    #[test]
    fn config_values_follow_subcommand_and_yield_to_flags() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("c.json");
        fs::write(
            &cfg,
            r#"{"seed": 9, "beam": 3, "split": {"n_clusters": 4, "type": "group"}, "decode": {"unconstrained": true}}"#,
        )
        .unwrap();
        let c = cfg.to_str().unwrap();
        let argv = inject_config(os(&["x", "--config", c, "split", "--type", "random"])).unwrap();
        let tail: Vec<String> = argv[4..]
            .iter()
            .map(|s| s.to_string_lossy().into_owned())
            .collect();
        assert_eq!(
            tail,
            ["--n-clusters", "4", "--seed", "9", "--type", "random"]
        );
        let argv = inject_config(os(&["x", "--config", c, "decode"])).unwrap();
        let tail: Vec<String> = argv[4..]
            .iter()
            .map(|s| s.to_string_lossy().into_owned())
            .collect();
        assert_eq!(tail, ["--unconstrained", "--beam", "3", "--seed", "9"]);
    }

    #[test]
    fn config_section_wins_over_top_level() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("c.json");
        fs::write(&cfg, r#"{"beam": 3, "decode": {"beam": 7}}"#).unwrap();
        let argv = inject_config(os(&["x", "--config", cfg.to_str().unwrap(), "decode"])).unwrap();
        let tail: Vec<String> = argv[4..]
            .iter()
            .map(|s| s.to_string_lossy().into_owned())
            .collect();
        assert_eq!(tail, ["--beam", "7"]);
    }

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(run(["rxnbench", "frobnicate"]), 1);
        assert_eq!(
            run([
                "rxnbench",
                "canon",
                "--in",
                "/nonexistent/x",
                "--out",
                "/tmp/y"
            ]),
            1
        );
        assert_eq!(run(["rxnbench", "--help"]), 0);
    }

    #[test]
    fn input_lines_accept_three_shapes() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("in.txt");
        fs::write(
            &p,
            "CCO>>CC=O\nr2\tO>>O\n{\"id\":\"r3\",\"incomplete_rxn\":\"C>>C\"}\nr4\tC>>C\tC>>C\tt\n",
        )
        .unwrap();
        let (lines, rejects) = read_input_lines(&p).unwrap();
        assert!(rejects.is_empty());
        let ids: Vec<&str> = lines.iter().map(|l| l.id.as_str()).collect();
        assert_eq!(ids, ["1", "r2", "r3", "r4"]);
    }

    #[test]
    fn reagent_placement() {
        let r = parse_reaction("CC(=O)Cl.CN>[Na+].[OH-]>CC(=O)NC").unwrap();
        let rules = default_rules();
        let merged = complete_with(&r, Reagents::Merged, &rules, DEFAULT_MAX_APPLICATIONS);
        let separate = complete_with(&r, Reagents::Separate, &rules, DEFAULT_MAX_APPLICATIONS);
        assert!(separate.solved);
        assert_eq!(
            separate.completed.to_smiles(),
            "CC(=O)Cl.CN>[Na+].[OH-]>CC(NC)=O.Cl"
        );
        assert_ne!(merged.completed.to_smiles(), separate.completed.to_smiles());
    }
}

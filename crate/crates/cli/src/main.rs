use std::fs;
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use pfsa::algebra::{add_general, add_same_structure, invert, synchronous_compose};
use pfsa::analysis::{auxiliary_pfsa, AnnihilationProfile};
use pfsa::annihilator::{AnnihilatorBank, ClassificationReport, ClassifyConfig, StreamClassifier};
use pfsa::bench::{run_bench, summarize, BenchConfig};
use pfsa::estimation::{estimate_dmarkov, DMarkovConfig, WhiteNoiseConfig};
use pfsa::format::{
    parse_stream_line, read_stream_file, write_model, write_stream_file, ModelFile,
};
use pfsa::stream::{generate_stream, SymbolStream};
use pfsa::{catalog, Alphabet, Error, Pfsa};

macro_rules! outln {
    ($($arg:tt)*) => {
        writeln!(io::stdout(), $($arg)*)?
    };
}

const EXIT_NO_MATCH: u8 = 1;
const EXIT_VALIDATION: u8 = 3;
const EXIT_RUNTIME: u8 = 4;

#[derive(Parser)]
#[command(name = "pfsa", version, about = "PFSA algebra and stream classification by annihilation")]
struct Cli {
    /// JSON file with default settings for `classify` and `bench`.
    #[arg(long, global = true, env = "PFSA_CONFIG")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a model file; exit 0 when valid, 3 otherwise.
    Validate { model: String },
    /// Generate a symbol stream from a model.
    Gen {
        model: String,
        #[arg(short = 'n', long)]
        length: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        output: PathBuf,
        /// Write all symbols on one line (single-character labels only).
        #[arg(long)]
        compact: bool,
    },
    /// Write a model (typically a catalog entry) to a file.
    Export {
        model: String,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Write the group inverse of a model.
    Invert {
        model: String,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Write the group sum of two models.
    Add {
        first: String,
        second: String,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Write the synchronous composition of two models.
    Compose {
        first: String,
        second: String,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Feed a stream to the annihilator bank of a pattern.
    Annihilate {
        pattern: String,
        #[arg(long)]
        stream: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Directory for the emitted streams (`component-<j>.txt`).
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Classify a stream against a library of patterns.
    Classify(ClassifyArgs),
    /// Estimate a D-Markov model from a stream.
    Estimate {
        #[arg(long)]
        stream: PathBuf,
        #[arg(short = 'd', long, default_value_t = 2)]
        depth: usize,
        /// Merge states whose rows differ by at most this much.
        #[arg(long)]
        merge: Option<f64>,
        /// Comma-separated symbol labels; inferred from the stream if absent.
        #[arg(long, value_delimiter = ',')]
        alphabet: Option<Vec<String>>,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Convergence benchmark of direct compression against annihilation.
    Bench(BenchArgs),
    /// Print the annihilation profile of a model.
    Profile {
        model: String,
        /// Also print the auxiliary model rows.
        #[arg(long)]
        auxiliary: bool,
    },
}

#[derive(Args)]
struct ClassifyArgs {
    /// Directory of model files (`*.json`).
    #[arg(long)]
    library: PathBuf,
    /// Stream file, or `-` for standard input.
    #[arg(long)]
    stream: String,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long)]
    min_emitted: Option<u64>,
    #[arg(long)]
    check_interval: Option<u64>,
    /// Use Monte Carlo thresholds instead of a fixed tau.
    #[arg(long)]
    calibrate: bool,
    #[arg(long)]
    seed: Option<u64>,
    /// Write the final report as JSON.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Catalog id or model file.
    #[arg(long)]
    model: String,
    #[arg(long)]
    ticks: Option<u64>,
    #[arg(long)]
    seeds: Option<u64>,
    /// Annihilator pattern when it differs from the model.
    #[arg(long)]
    pattern: Option<String>,
    #[arg(long)]
    check_interval: Option<u64>,
    #[arg(long)]
    direct_depth: Option<usize>,
    #[arg(long)]
    truth_depth: Option<usize>,
    #[arg(short, long)]
    output: PathBuf,
}

/// Defaults read from the config file; flags override them.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct Settings {
    classify: ClassifySettings,
    bench: BenchSettings,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ClassifySettings {
    tau: Option<f64>,
    depth: Option<usize>,
    theta_depth: Option<usize>,
    n_min: Option<u64>,
    min_emitted: Option<u64>,
    check_interval: Option<u64>,
    calibrate: Option<bool>,
    seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct BenchSettings {
    ticks: Option<u64>,
    seeds: Option<u64>,
    check_interval: Option<u64>,
    direct_depth: Option<usize>,
    truth_depth: Option<usize>,
    tau: Option<f64>,
}

fn load_settings(path: Option<&Path>) -> anyhow::Result<Settings> {
    match path {
        None => Ok(Settings::default()),
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing config {}", p.display()))
        }
    }
}

/// A model given as a file path or a catalog id, with a display name.
fn load_model(arg: &str) -> anyhow::Result<(String, Pfsa)> {
    let path = Path::new(arg);
    if path.is_file() {
        let file = ModelFile::read(path).with_context(|| format!("reading {arg}"))?;
        let g = file.to_pfsa().with_context(|| format!("validating {arg}"))?;
        let name = file.metadata.name.clone().unwrap_or_else(|| {
            path.file_stem()
                .map_or_else(|| arg.to_string(), |s| s.to_string_lossy().into_owned())
        });
        return Ok((name, g));
    }
    match catalog::by_id(arg) {
        Some(g) => Ok((arg.to_ascii_uppercase(), g)),
        None => bail!("no model file or catalog entry named {arg:?}"),
    }
}

fn write_derived(path: &Path, g: &Pfsa, name: &str, provenance: &str) -> anyhow::Result<()> {
    if !g.is_strongly_connected() {
        eprintln!(
            "warning: {name} has states that cannot return to the start; strict validation will reject it"
        );
    }
    write_model(path, g, Some(name), Some(provenance)).with_context(|| format!("writing {}", path.display()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(err) if is_broken_pipe(&err) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            let validation = err.chain().any(|e| {
                matches!(e.downcast_ref::<Error>(), Some(Error::Validation(_)) | Some(Error::Json(_)))
                    || e.downcast_ref::<pfsa::ValidationError>().is_some()
            });
            ExitCode::from(if validation { EXIT_VALIDATION } else { EXIT_RUNTIME })
        }
    }
}

fn is_broken_pipe(err: &anyhow::Error) -> bool {
    err.chain().any(|e| {
        e.downcast_ref::<io::Error>()
            .is_some_and(|e| e.kind() == io::ErrorKind::BrokenPipe)
    })
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    let settings = load_settings(cli.config.as_deref())?;
    match cli.command {
        Command::Validate { model } => validate(&model),
        Command::Gen {
            model,
            length,
            seed,
            output,
            compact,
        } => {
            let (name, g) = load_model(&model)?;
            let s = generate_stream(&g, length, seed);
            write_stream_file(&output, &s, compact)?;
            eprintln!("wrote {length} symbols from {name} (seed {seed}) to {}", output.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Export { model, output } => {
            let (name, g) = load_model(&model)?;
            write_model(&output, &g, Some(&name), Some("catalog"))?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Invert { model, output } => {
            let (name, g) = load_model(&model)?;
            write_derived(&output, &invert(&g), &format!("-{name}"), "invert")?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Add { first, second, output } => {
            let (a, g1) = load_model(&first)?;
            let (b, g2) = load_model(&second)?;
            let sum = if g1.structurally_equal(&g2) {
                add_same_structure(&g1, &g2)?
            } else {
                add_general(&g1, &g2)?
            };
            write_derived(&output, &sum, &format!("{a}+{b}"), "add")?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Compose { first, second, output } => {
            let (a, g1) = load_model(&first)?;
            let (b, g2) = load_model(&second)?;
            write_derived(&output, &synchronous_compose(&g1, &g2)?, &format!("{a}x{b}"), "compose")?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Annihilate {
            pattern,
            stream,
            seed,
            output,
        } => annihilate(&pattern, &stream, seed, output.as_deref()),
        Command::Classify(args) => classify(args, &settings.classify),
        Command::Estimate {
            stream,
            depth,
            merge,
            alphabet,
            output,
        } => estimate(&stream, depth, merge, alphabet, &output),
        Command::Bench(args) => bench(args, &settings.bench),
        Command::Profile { model, auxiliary } => profile(&model, auxiliary),
    }
}

fn validate(arg: &str) -> anyhow::Result<ExitCode> {
    let path = Path::new(arg);
    let file = if path.is_file() {
        ModelFile::read(path).with_context(|| format!("reading {arg}"))?
    } else if let Some(g) = catalog::by_id(arg) {
        ModelFile::new(&g, Some(arg), Some("catalog"))
    } else {
        bail!("no model file or catalog entry named {arg:?}");
    };
    match file.to_pfsa() {
        Ok(g) => {
            outln!(
                "valid: {} states, {} symbols",
                g.num_states(),
                g.num_symbols()
            );
            Ok(ExitCode::SUCCESS)
        }
        Err(Error::Validation(v)) => {
            outln!("invalid:");
            for violation in &v.violations {
                outln!("  - {violation}");
            }
            Ok(ExitCode::from(EXIT_VALIDATION))
        }
        Err(e) => Err(e.into()),
    }
}

#[derive(Serialize)]
struct ComponentSummary {
    component: usize,
    initial_state: String,
    final_state: String,
    sensed: u64,
    emitted: u64,
    bisection_steps: u64,
    max_bisection_steps: u32,
}

fn annihilate(pattern: &str, stream: &Path, seed: u64, output: Option<&Path>) -> anyhow::Result<ExitCode> {
    let (name, g) = load_model(pattern)?;
    let sensed = read_stream_file(stream, g.alphabet()).with_context(|| format!("reading {}", stream.display()))?;
    let mut bank = AnnihilatorBank::new(name, &g, seed, pfsa::annihilator::DEFAULT_SCORE_DEPTH)?;
    bank.feed(&sensed)?;
    if let Some(dir) = output {
        fs::create_dir_all(dir)?;
        for (j, out) in bank.outputs().iter().enumerate() {
            write_stream_file(dir.join(format!("component-{j}.txt")), out, false)?;
        }
    }
    let inverse = bank.inverse();
    let summary: Vec<ComponentSummary> = bank
        .components()
        .iter()
        .enumerate()
        .map(|(j, c)| ComponentSummary {
            component: j,
            initial_state: inverse.state_label(c.initial_state()).to_string(),
            final_state: inverse.state_label(c.state()).to_string(),
            sensed: c.sensed_len(),
            emitted: c.emitted_len(),
            bisection_steps: c.stats().steps,
            max_bisection_steps: c.stats().max_steps,
        })
        .collect();
    outln!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(ExitCode::SUCCESS)
}

fn load_library(dir: &Path) -> anyhow::Result<Vec<(String, Pfsa)>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("reading library {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| load_model(&p.to_string_lossy()))
        .collect()
}

#[derive(Serialize)]
struct IntervalRecord<'a> {
    sensed: u64,
    #[serde(rename = "final")]
    last: bool,
    reports: &'a [ClassificationReport],
}

fn classify(args: ClassifyArgs, defaults: &ClassifySettings) -> anyhow::Result<ExitCode> {
    let library = load_library(&args.library)?;
    let Some((_, first)) = library.first() else {
        return Err(Error::EmptyLibrary.into());
    };
    let alphabet = first.alphabet().clone();
    let base = ClassifyConfig::default();
    let detector = WhiteNoiseConfig {
        depth: args.depth.or(defaults.depth).unwrap_or(base.detector.depth),
        theta_depth: defaults.theta_depth.unwrap_or(base.detector.theta_depth),
        n_min: defaults.n_min.unwrap_or(base.detector.n_min),
        ..base.detector
    };
    let config = ClassifyConfig {
        tau: args.tau.or(defaults.tau).unwrap_or(base.tau),
        calibrate: args.calibrate || defaults.calibrate.unwrap_or(false),
        min_emitted: args.min_emitted.or(defaults.min_emitted).unwrap_or(base.min_emitted),
        check_interval: args
            .check_interval
            .or(defaults.check_interval)
            .unwrap_or(base.check_interval),
        seed: args.seed.or(defaults.seed).unwrap_or(base.seed),
        detector,
        ..base
    };
    let mut classifier = StreamClassifier::new(&library, &alphabet, config)?;
    let reader: Box<dyn BufRead> = if args.stream == "-" {
        Box::new(BufReader::new(io::stdin()))
    } else {
        Box::new(BufReader::new(
            fs::File::open(&args.stream).with_context(|| format!("opening {}", args.stream))?,
        ))
    };
    let stdout = io::stdout();
    let mut out = stdout.lock();
    let mut buffer = Vec::new();
    for line in reader.lines() {
        let line = line?;
        buffer.clear();
        parse_stream_line(&line, &alphabet, &mut buffer)?;
        for reports in &classifier.feed(&buffer)? {
            let record = IntervalRecord {
                sensed: reports.first().map_or(0, |r| r.sensed),
                last: false,
                reports,
            };
            writeln!(out, "{}", serde_json::to_string(&record)?)?;
        }
    }
    let reports = classifier.reports();
    let record = IntervalRecord {
        sensed: classifier.sensed_len(),
        last: true,
        reports: &reports,
    };
    writeln!(out, "{}", serde_json::to_string(&record)?)?;
    if let Some(path) = &args.report {
        fs::write(path, serde_json::to_string_pretty(&reports)?)?;
    }
    for r in &reports {
        eprintln!(
            "{}. {:<12} score {:>8} emitted {:>8} {} ({:?})",
            r.rank,
            r.pattern,
            r.best_score.map_or("-".into(), |s| format!("{s:.4}")),
            r.best.map_or(0, |j| r.emitted[j]),
            if r.verdict { "MATCH" } else { "no match" },
            r.reason,
        );
    }
    Ok(if reports.iter().any(|r| r.verdict) {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_NO_MATCH)
    })
}

/// Distinct labels in order of first appearance, sorted.
fn infer_alphabet(text: &str) -> anyhow::Result<Alphabet> {
    let lines: Vec<&str> = text.lines().map(|l| l.trim_end_matches('\r')).filter(|l| !l.is_empty()).collect();
    let mut labels: Vec<String> = if lines.len() == 1 && lines[0].chars().count() > 1 {
        lines[0].chars().map(String::from).collect()
    } else {
        lines.iter().map(|l| l.to_string()).collect()
    };
    labels.sort();
    labels.dedup();
    Ok(Alphabet::new(labels)?)
}

fn estimate(
    stream: &Path,
    depth: usize,
    merge: Option<f64>,
    alphabet: Option<Vec<String>>,
    output: &Path,
) -> anyhow::Result<ExitCode> {
    let text = fs::read_to_string(stream).with_context(|| format!("reading {}", stream.display()))?;
    let alphabet = match alphabet {
        Some(labels) => Alphabet::new(labels)?,
        None => infer_alphabet(&text)?,
    };
    let s: SymbolStream = pfsa::format::parse_stream(&text, &alphabet)?;
    let cfg = DMarkovConfig {
        merge_tolerance: merge,
        ..DMarkovConfig::with_depth(depth)
    };
    let est = estimate_dmarkov(&s, &cfg)?;
    if !est.undersampled.is_empty() {
        eprintln!(
            "warning: {} of {} states have fewer than {} observations",
            est.undersampled.len(),
            est.model.num_states(),
            cfg.n_min
        );
    }
    let provenance = format!(
        "estimated: depth {depth}, merge {}, {} symbols from {}",
        merge.map_or("off".to_string(), |m| m.to_string()),
        s.len(),
        stream.display()
    );
    write_model(output, &est.model, Some("estimate"), Some(&provenance))?;
    eprintln!("wrote {} states to {}", est.model.num_states(), output.display());
    Ok(ExitCode::SUCCESS)
}

fn bench(args: BenchArgs, defaults: &BenchSettings) -> anyhow::Result<ExitCode> {
    let (id, model) = load_model(&args.model)?;
    let base = BenchConfig::default();
    let seeds = args.seeds.or(defaults.seeds).unwrap_or(base.seeds.len() as u64);
    let pattern = args.pattern.as_deref().map(load_model).transpose()?;
    let cfg = BenchConfig {
        max_ticks: args.ticks.or(defaults.ticks).unwrap_or(base.max_ticks),
        seeds: (0..seeds).collect(),
        check_interval: args
            .check_interval
            .or(defaults.check_interval)
            .unwrap_or(base.check_interval),
        direct_depth: args.direct_depth.or(defaults.direct_depth).unwrap_or(base.direct_depth),
        truth_depth: args.truth_depth.or(defaults.truth_depth).unwrap_or(base.truth_depth),
        tau: defaults.tau.unwrap_or(base.tau),
        pattern,
        ..base
    };
    let records = run_bench(&id, &model, &cfg)?;
    let mut w = csv::Writer::from_path(&args.output).with_context(|| format!("writing {}", args.output.display()))?;
    for r in &records {
        w.serialize(r)?;
    }
    w.flush()?;
    for s in summarize(&records, &model, &cfg)? {
        let show = |t: Option<u64>| t.map_or("-".to_string(), |t| t.to_string());
        eprintln!(
            "seed {:>3}: direct {:>6} annihilator {:>6} beta {}",
            s.seed,
            show(s.direct_tick),
            show(s.annihilator_tick),
            s.beta.map_or("-".to_string(), |b| format!("{b:.3}")),
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn profile(arg: &str, auxiliary: bool) -> anyhow::Result<ExitCode> {
    let (name, g) = load_model(arg)?;
    let p = AnnihilationProfile::of(&g)?;
    outln!("model: {name}");
    for (q, (h, w)) in p.harmonic_means.iter().zip(&p.stationary).enumerate() {
        outln!("  {:<8} stationary={:.6} harmonic={:.6}", g.state_label(q), w, h);
    }
    outln!("λ={:.6}", p.lambda);
    outln!("℘⋆={:.6}", p.min_stationary);
    outln!("β₁={}", round6(p.beta1));
    outln!("|Σ|/|Q|={}", round6(p.ratio_bound));
    if p.white_noise {
        outln!("note: white noise; β₁ is not a strict bound here");
    }
    if auxiliary {
        let a = auxiliary_pfsa(&g);
        outln!("auxiliary [{}]:", a.labels().join(" "));
        for q in 0..a.num_states() {
            let row: Vec<String> = a.row(q).iter().map(|x| format!("{x:.6}")).collect();
            outln!("  {:<8} {}", g.state_label(q), row.join(" "));
        }
    }
    Ok(ExitCode::SUCCESS)
}

/// Six decimals without trailing zeros.
fn round6(x: f64) -> String {
    let s = format!("{x:.6}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s.is_empty() || s == "-" {
        "0".into()
    } else {
        s.to_string()
    }
}

//! The `polsum` command line: collect → summarize → highlights → score, plus
//! fixture generation and manifest replay.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 runtime error.
//! Every command writes `<out>.manifest.json` next to its output.

pub mod fixtures;
pub mod manifest;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Deserialize;

use polsum_core::evaluation::{render_table, score_corpus, suggest_matches, AnnotationFile};
use polsum_core::gridworld::EnvConfig;
use polsum_core::highlights::{render_highlights, run_highlights, value_iteration, HighlightParams};
use polsum_core::llm::{build_backend, BackendKind, LlmConfig};
use polsum_core::policies::{PolicyKind, PolicyRef};
use polsum_core::summarizer::{summarize, PromptTemplate, SummarizerConfig};
use polsum_core::teb::{collect_with_stats, TextualExperienceBuffer};

use manifest::{absolute, normalize_args, now, FileDigest, RunManifest};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "polsum", version, about = "Textual summaries of gridworld agent behavior")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run a scripted policy and write its captioned experience buffer (JSONL).
    Collect(CollectArgs),
    /// Summarize an experience buffer with an LLM backend.
    Summarize(SummarizeArgs),
    /// Select HIGHLIGHTS trajectories from greedy rollouts.
    Highlights(HighlightsArgs),
    /// Score key-point annotations (recall, precision, agreement).
    Score(ScoreArgs),
    /// Write the fixture corpus used by the tests.
    Fixtures(FixturesArgs),
    /// Re-run a manifest's command and check its outputs are byte-identical.
    Replay(ReplayArgs),
}

#[derive(Args, Debug)]
pub struct EnvArgs {
    /// Environment config (JSON); flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub height: Option<usize>,
    #[arg(long)]
    pub max_steps: Option<u32>,
    /// Base seed; episode/trace `i` (1-based) uses `seed + i - 1`.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug)]
pub struct CollectArgs {
    /// goal | short | random
    #[arg(long)]
    pub policy: PolicyKind,
    #[arg(long, default_value_t = 100)]
    pub episodes: usize,
    /// Seed of the random policy's action stream (defaults to the base seed).
    #[arg(long)]
    pub policy_seed: Option<u64>,
    #[command(flatten)]
    pub env: EnvArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct SummarizeArgs {
    #[arg(long)]
    pub teb: PathBuf,
    /// LLM config (JSON). May also set kappa, k, safety_margin, max_depth.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// mock | http
    #[arg(long)]
    pub backend: Option<BackendKind>,
    #[arg(long)]
    pub kappa: Option<usize>,
    #[arg(long)]
    pub k: Option<usize>,
    /// Directory holding replacement prompt template sections.
    #[arg(long)]
    pub template: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct HighlightsArgs {
    #[command(flatten)]
    pub env: EnvArgs,
    #[arg(long, default_value_t = 300)]
    pub traces: usize,
    #[arg(long, default_value_t = 5)]
    pub context: usize,
    #[arg(long, default_value_t = 20)]
    pub budget: usize,
    /// Use the diversity-aware replacement rule.
    #[arg(long)]
    pub div: bool,
    #[arg(long, default_value_t = 0.99)]
    pub gamma: f64,
    #[arg(long, default_value_t = 1e-6)]
    pub epsilon: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ScoreArgs {
    #[arg(long)]
    pub annotations: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Print advisory embedding-similarity match suggestions at this cosine
    /// threshold. Never affects the scores.
    #[arg(long)]
    pub suggest: Option<f64>,
    /// LLM config used for --suggest embeddings.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct FixturesArgs {
    /// Output directory (created if missing).
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub episodes: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct ReplayArgs {
    #[arg(long)]
    pub manifest: PathBuf,
}

/// A failed command, classified by exit code.
#[derive(Debug)]
pub enum Failure {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Config(_) => EXIT_CONFIG,
            Failure::Runtime(_) => EXIT_RUNTIME,
        }
    }

    pub fn error(&self) -> &anyhow::Error {
        match self {
            Failure::Config(e) | Failure::Runtime(e) => e,
        }
    }
}

trait Classify<T> {
    fn config(self) -> Result<T, Failure>;
    fn runtime(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn config(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Config(e.into()))
    }

    fn runtime(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Runtime(e.into()))
    }
}

/// Parses `argv` (including the program name) and runs the command.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let argv: Vec<std::ffi::OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let args: Vec<String> = argv
        .iter()
        .skip(1)
        .map(|a| a.to_string_lossy().into_owned())
        .collect();
    match execute(cli, &args) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("error: {:#}", f.error());
            f.exit_code()
        }
    }
}

/// Runs a parsed command. `args` (without the program name) are recorded in
/// the manifest for replay.
pub fn execute(cli: Cli, args: &[String]) -> Result<(), Failure> {
    let rec = |command| Recorder::new(command, args);
    match cli.command {
        Command::Collect(a) => cmd_collect(a, rec("collect")),
        Command::Summarize(a) => cmd_summarize(a, rec("summarize")),
        Command::Highlights(a) => cmd_highlights(a, rec("highlights")),
        Command::Score(a) => cmd_score(a, rec("score")),
        Command::Fixtures(a) => cmd_fixtures(a, rec("fixtures")),
        Command::Replay(a) => cmd_replay(a),
    }
}

fn read_json<T: DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn write_file(path: &Path, data: &[u8]) -> anyhow::Result<()> {
    fs::write(path, data).with_context(|| format!("writing {}", path.display()))
}

fn pretty_json<T: serde::Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialize");
    s.push('\n');
    s
}

/// Collects what a command touched and writes its manifest.
struct Recorder {
    command: &'static str,
    args: Vec<String>,
    started_at: String,
    config_paths: Vec<PathBuf>,
    seeds: BTreeMap<String, u64>,
    inputs: Vec<FileDigest>,
}

impl Recorder {
    fn new(command: &'static str, args: &[String]) -> Self {
        Recorder {
            command,
            args: normalize_args(args),
            started_at: now(),
            config_paths: Vec::new(),
            seeds: BTreeMap::new(),
            inputs: Vec::new(),
        }
    }

    fn input(&mut self, path: &Path) -> Result<(), Failure> {
        let mut d = FileDigest::of(path).runtime()?;
        d.path = absolute(path);
        self.inputs.push(d);
        Ok(())
    }

    fn config_file(&mut self, path: &Path) -> Result<(), Failure> {
        self.config_paths.push(absolute(path));
        self.input(path)
    }

    fn seed(&mut self, name: &str, value: u64) {
        self.seeds.insert(name.to_string(), value);
    }

    fn finish(self, out: &Path, outputs: &[PathBuf]) -> Result<(), Failure> {
        let outputs = outputs
            .iter()
            .map(|p| {
                let mut d = FileDigest::of(p)?;
                d.path = absolute(p);
                Ok(d)
            })
            .collect::<anyhow::Result<Vec<_>>>()
            .runtime()?;
        let manifest = RunManifest {
            tool: "polsum".to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: self.command.to_string(),
            args: self.args,
            config_paths: self.config_paths,
            seeds: self.seeds,
            inputs: self.inputs,
            out: absolute(out),
            outputs,
            started_at: self.started_at,
            finished_at: now(),
        };
        manifest.save().runtime()?;
        Ok(())
    }
}

fn env_config(args: &EnvArgs, rec: &mut Recorder) -> Result<EnvConfig, Failure> {
    let mut config = match &args.config {
        Some(p) => {
            let c = read_json::<EnvConfig>(p).config()?;
            rec.config_file(p)?;
            c
        }
        None => EnvConfig::default(),
    };
    if let Some(w) = args.width {
        config.width = w;
    }
    if let Some(h) = args.height {
        config.height = h;
    }
    if let Some(m) = args.max_steps {
        config.max_steps = m;
    }
    if let Some(s) = args.seed {
        config.seed = s;
    }
    config.validate().config()?;
    Ok(config)
}

fn cmd_collect(a: CollectArgs, mut rec: Recorder) -> Result<(), Failure> {
    let config = env_config(&a.env, &mut rec)?;
    if a.episodes == 0 {
        return Err(Failure::Config(anyhow!("--episodes must be at least 1")));
    }
    let policy = PolicyRef::new(a.policy, a.policy_seed.unwrap_or(config.seed));
    rec.seed("base_seed", config.seed);
    rec.seed("policy_seed", policy.rng_seed);
    let (buffer, stats) = collect_with_stats(&policy, &config, a.episodes, config.seed).runtime()?;
    write_file(&a.out, buffer.to_jsonl().as_bytes()).runtime()?;
    let n = stats.len() as f64;
    eprintln!(
        "{}: {} episodes, {} tuples, success {:.3}, mean length {:.2}, mean reward {:.3}",
        a.policy,
        stats.len(),
        buffer.len(),
        stats.iter().filter(|s| s.success).count() as f64 / n,
        stats.iter().map(|s| s.length as f64).sum::<f64>() / n,
        stats.iter().map(|s| s.total_reward).sum::<f64>() / n,
    );
    rec.finish(&a.out, std::slice::from_ref(&a.out))
}

/// `llm.json` contents: an [`LlmConfig`] plus optional summarizer settings.
#[derive(Debug, Default, Deserialize)]
struct SummarizeConfigFile {
    #[serde(flatten)]
    llm: LlmConfig,
    kappa: Option<usize>,
    k: Option<usize>,
    safety_margin: Option<f64>,
    max_depth: Option<usize>,
}

fn cmd_summarize(a: SummarizeArgs, mut rec: Recorder) -> Result<(), Failure> {
    let file = match &a.config {
        Some(p) => {
            let c = read_json::<SummarizeConfigFile>(p).config()?;
            rec.config_file(p)?;
            c
        }
        None => SummarizeConfigFile::default(),
    };
    let mut llm = file.llm;
    if let Some(b) = a.backend {
        llm.backend = b;
    }
    llm.validate().config()?;
    let defaults = SummarizerConfig::default();
    let config = SummarizerConfig {
        kappa: a.kappa.or(file.kappa).unwrap_or(defaults.kappa),
        k: a.k.or(file.k).unwrap_or(defaults.k),
        safety_margin: file.safety_margin.unwrap_or(defaults.safety_margin),
        max_depth: file.max_depth.unwrap_or(defaults.max_depth),
        chars_per_token: llm.chars_per_token,
    };
    if config.kappa == 0 || config.k == 0 {
        return Err(Failure::Config(anyhow!("kappa and k must be at least 1")));
    }
    if !(0.0..1.0).contains(&config.safety_margin) {
        return Err(Failure::Config(anyhow!("safety_margin must be in [0, 1)")));
    }
    let template = match &a.template {
        Some(dir) => {
            let t = PromptTemplate::from_dir(dir)
                .with_context(|| format!("loading template from {}", dir.display()))
                .config()?;
            for name in PromptTemplate::FILES {
                rec.input(&dir.join(name))?;
            }
            t
        }
        None => PromptTemplate::default(),
    };
    let buffer = TextualExperienceBuffer::load(&a.teb)
        .with_context(|| format!("loading {}", a.teb.display()))
        .runtime()?;
    rec.input(&a.teb)?;
    let backend = build_backend(&llm).config()?;
    let result = summarize(&buffer, backend.as_ref(), &template, &config).runtime()?;
    write_file(&a.out, pretty_json(&result).as_bytes()).runtime()?;
    eprintln!(
        "summarized {} episodes: depth {}, {} calls, selected candidate {}",
        buffer.n_episodes(),
        result.tree_depth,
        result.nodes.len(),
        result.selected_index
    );
    rec.finish(&a.out, std::slice::from_ref(&a.out))
}

fn cmd_highlights(a: HighlightsArgs, mut rec: Recorder) -> Result<(), Failure> {
    let config = env_config(&a.env, &mut rec)?;
    let params = HighlightParams {
        n_traces: a.traces,
        context: a.context,
        budget: a.budget,
        div: a.div,
        base_seed: config.seed,
    };
    if params.n_traces == 0 || params.budget == 0 {
        return Err(Failure::Config(anyhow!("--traces and --budget must be at least 1")));
    }
    rec.seed("base_seed", config.seed);
    let q = value_iteration(&config, a.gamma, a.epsilon).config()?;
    let summary = run_highlights(&q, &config, &params).runtime()?;
    let text = render_highlights(&summary, config.view_size);
    write_file(&a.out, text.as_bytes()).runtime()?;
    eprintln!(
        "kept {} trajectories after {} value-iteration sweeps",
        summary.trajectories.len(),
        q.sweeps()
    );
    rec.finish(&a.out, std::slice::from_ref(&a.out))
}

fn cmd_score(a: ScoreArgs, mut rec: Recorder) -> Result<(), Failure> {
    let sets = AnnotationFile::load(&a.annotations)
        .with_context(|| format!("loading {}", a.annotations.display()))
        .runtime()?;
    rec.input(&a.annotations)?;
    let report = score_corpus(&sets).runtime()?;
    write_file(&a.out, pretty_json(&report).as_bytes()).runtime()?;
    print!("{}", render_table(&report));
    if let Some(threshold) = a.suggest {
        let llm = match &a.config {
            Some(p) => {
                let c = read_json::<LlmConfig>(p).config()?;
                rec.config_file(p)?;
                c
            }
            None => LlmConfig::mock(),
        };
        let backend = build_backend(&llm).config()?;
        println!("advisory match suggestions (not used for scoring):");
        for set in &sets {
            for s in suggest_matches(set, backend.as_ref(), threshold).runtime()? {
                println!(
                    "  {} {} -> {} (cosine {:.3})",
                    s.expert, s.expert_point, s.llm_point, s.cosine
                );
            }
        }
    }
    rec.finish(&a.out, std::slice::from_ref(&a.out))
}

fn cmd_fixtures(a: FixturesArgs, mut rec: Recorder) -> Result<(), Failure> {
    if a.episodes == 0 {
        return Err(Failure::Config(anyhow!("--episodes must be at least 1")));
    }
    rec.seed("base_seed", a.seed);
    fs::create_dir_all(&a.out)
        .with_context(|| format!("creating {}", a.out.display()))
        .runtime()?;
    let mut outputs = Vec::new();
    let mut emit = |name: &str, data: String| -> Result<(), Failure> {
        let path = a.out.join(name);
        write_file(&path, data.as_bytes()).runtime()?;
        outputs.push(path);
        Ok(())
    };
    emit(
        "table3_annotations.json",
        pretty_json(&serde_json::json!({ "agents": fixtures::table3_corpus() })),
    )?;
    emit("table3_expected.json", pretty_json(&fixtures::table3_expected()))?;
    emit("pipeline_annotations.json", pretty_json(&fixtures::pipeline_annotations()))?;
    let env = EnvConfig::default();
    for kind in [PolicyKind::GoalDirected, PolicyKind::ShortSighted, PolicyKind::Random] {
        let (buffer, _) =
            collect_with_stats(&PolicyRef::new(kind, a.seed), &env, a.episodes, a.seed).runtime()?;
        emit(&format!("teb_{}.jsonl", kind.cli_name()), buffer.to_jsonl())?;
    }
    rec.finish(&a.out, &outputs)
}

fn cmd_replay(a: ReplayArgs) -> Result<(), Failure> {
    let m = RunManifest::load(&a.manifest).runtime()?;
    for input in &m.inputs {
        let now = FileDigest::of(&input.path).runtime()?;
        if now.sha256 != input.sha256 {
            return Err(Failure::Runtime(anyhow!(
                "input {} changed since the recorded run",
                input.path.display()
            )));
        }
    }
    let scratch = tempfile::tempdir().runtime()?;
    let name = m.out.file_name().ok_or_else(|| anyhow!("manifest has no output name")).runtime()?;
    let replay_out = scratch.path().join(name);
    if m.out.is_dir() || m.command == "fixtures" {
        fs::create_dir_all(&replay_out).runtime()?;
    }
    let mut argv = vec!["polsum".to_string()];
    argv.extend(m.args_with_out(&replay_out));
    let cli = Cli::try_parse_from(&argv)
        .map_err(|e| anyhow!("manifest arguments no longer parse: {e}"))
        .runtime()?;
    execute(cli, &argv[1..])?;
    let mut mismatches = Vec::new();
    for out in &m.outputs {
        let rel = out.path.strip_prefix(&m.out).unwrap_or(Path::new(""));
        let path = if rel.as_os_str().is_empty() {
            replay_out.clone()
        } else {
            replay_out.join(rel)
        };
        let digest = FileDigest::of(&path).runtime()?;
        if digest.sha256 != out.sha256 {
            mismatches.push(out.path.display().to_string());
        }
    }
    if !mismatches.is_empty() {
        return Err(Failure::Runtime(anyhow!(
            "replay differs for: {}",
            mismatches.join(", ")
        )));
    }
    println!("replay ok: {} output(s) byte-identical", m.outputs.len());
    Ok(())
}

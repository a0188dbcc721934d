//! Command-line front end: one subcommand per pipeline stage, each writing
//! its artifacts atomically plus a `<out>.run.json` with the parameters and
//! input digests.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::datamodel::{load_manifest, Entity, EntityKind};
use crate::embed::{embed_query, train, EmbeddingTable, GcnConfig, Reduction};
use crate::error::{Error, Result};
use crate::evalmetrics::{evaluate, RankedQuery, DEFAULT_F_CUTOFF};
use crate::fsutil::{digest_file, read_json, sibling, write_atomic, write_json};
use crate::kgraph::{build_graph, GraphOptions, ShapeGraph, DEFAULT_CATEGORY_CAP};
use crate::simsearch::{retrieve, ChannelWeights, RetrievalResult, ScorerRegistry, SearchIndex};
use crate::synthgen::{generate, read_truth, write_world, SynthConfig};
use crate::vocab::{build_vocabulary, VocabFile, VocabParams, DEFAULT_K, DEFAULT_MAX_ITERS, DEFAULT_TOL};

/// Per-stage offsets added to `--seed`.
pub const SEED_SYNTH: u64 = 0;
pub const SEED_VOCAB: u64 = 1;
pub const SEED_GRAPH: u64 = 2;
pub const SEED_TRAIN: u64 = 3;

#[derive(Debug, Parser)]
#[command(name = "shapekg", version, about = "Geometric-word knowledge graph shape retrieval")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus with ground truth.
    Synth(SynthArgs),
    /// Fit the PCA harmonization and the geometric-word vocabulary.
    Vocab(VocabArgs),
    /// Assemble the knowledge graph.
    Graph(GraphArgs),
    /// Train GCN embeddings.
    Train(TrainArgs),
    /// Rank candidate shapes for queries.
    Retrieve(RetrieveArgs),
    /// Score retrieval results against ground truth.
    Eval(EvalArgs),
}

fn positive(s: &str) -> std::result::Result<usize, String> {
    match s.parse::<usize>() {
        Ok(0) => Err("must be at least 1".into()),
        Ok(v) => Ok(v),
        Err(e) => Err(e.to_string()),
    }
}

fn positive_real(s: &str) -> std::result::Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
        Ok(_) => Err("must be a positive number".into()),
        Err(e) => Err(e.to_string()),
    }
}

fn nonnegative_real(s: &str) -> std::result::Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v >= 0.0 && v.is_finite() => Ok(v),
        Ok(_) => Err("must be a nonnegative number".into()),
        Err(e) => Err(e.to_string()),
    }
}

#[derive(Debug, Args, Serialize)]
pub struct SynthArgs {
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 10, value_parser = positive)]
    pub classes: usize,
    #[arg(long, default_value_t = 20, value_parser = positive)]
    pub shapes_per_class: usize,
    #[arg(long, default_value_t = 30, value_parser = positive)]
    pub true_words: usize,
    #[arg(long, default_value_t = 4, value_parser = positive)]
    pub words_per_class: usize,
    #[arg(long, default_value_t = 1)]
    pub word_overlap: usize,
    #[arg(long, default_value_t = 4, value_parser = positive)]
    pub views_per_shape: usize,
    #[arg(long, default_value_t = 3, value_parser = positive)]
    pub parts_per_view: usize,
    #[arg(long, default_value_t = 16, value_parser = positive)]
    pub dim: usize,
    #[arg(long, default_value_t = 0.1, value_parser = nonnegative_real)]
    pub noise: f64,
    #[arg(long, default_value_t = 4.0, value_parser = positive_real)]
    pub separation: f64,
    #[arg(long, default_value_t = 3)]
    pub query_shapes: usize,
    #[arg(long, default_value_t = 50)]
    pub image_queries: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct VocabArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub sidecar: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_K, value_parser = positive)]
    pub k: usize,
    /// Common feature dim after PCA (default: min(128, smallest descriptor dim)).
    #[arg(long, value_parser = positive)]
    pub dim: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_MAX_ITERS, value_parser = positive)]
    pub max_iters: usize,
    #[arg(long, default_value_t = DEFAULT_TOL, value_parser = nonnegative_real)]
    pub tol: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct GraphArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub sidecar: Option<PathBuf>,
    #[arg(long)]
    pub vocab: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Add same-label category edges (default).
    #[arg(long, overrides_with = "unsupervised")]
    #[serde(skip)]
    pub supervised: bool,
    /// Omit category edges.
    #[arg(long, overrides_with = "supervised")]
    pub unsupervised: bool,
    /// Same-label partners sampled per node; 0 keeps the full clique.
    #[arg(long, default_value_t = DEFAULT_CATEGORY_CAP)]
    pub category_cap: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ReductionArg {
    Sum,
    Mean,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    #[arg(long)]
    pub graph: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Hidden layer widths, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "128", value_parser = positive)]
    pub layers: Vec<usize>,
    #[arg(long, default_value_t = GcnConfig::DEFAULT_EMBED_DIM, value_parser = positive)]
    pub embed_dim: usize,
    #[arg(long, default_value_t = GcnConfig::DEFAULT_LR, value_parser = positive_real)]
    pub lr: f64,
    #[arg(long, default_value_t = GcnConfig::DEFAULT_EPOCHS)]
    pub epochs: usize,
    #[arg(long, default_value_t = GcnConfig::DEFAULT_NEG_RATIO, value_parser = positive)]
    pub neg_ratio: usize,
    /// Draw fresh negatives every epoch.
    #[arg(long)]
    pub resample_negatives: bool,
    #[arg(long, value_enum, default_value_t = ReductionArg::Mean)]
    pub reduction: ReductionArg,
    /// Stop early once the loss changes by less than this between epochs.
    #[arg(long, value_parser = positive_real)]
    pub tol: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Shape,
    Image,
    Parts,
}

impl Mode {
    fn name(self) -> &'static str {
        match self {
            Mode::Shape => "shape",
            Mode::Image => "image",
            Mode::Parts => "parts",
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct RetrieveArgs {
    #[arg(long)]
    pub graph: PathBuf,
    #[arg(long)]
    pub emb: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = Mode::Shape)]
    pub mode: Mode,
    /// Channel weights: four values for shape/parts, three for image.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub weights: Option<Vec<f64>>,
    #[arg(long, value_parser = positive)]
    pub top: Option<usize>,
    /// Query node id (repeatable).
    #[arg(long = "query")]
    pub queries: Vec<String>,
    /// Use every id in this truth file the mode accepts as a query.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// External query subtrees to attach and embed.
    #[arg(long)]
    pub query_manifest: Option<PathBuf>,
    #[arg(long)]
    pub query_sidecar: Option<PathBuf>,
    /// Vocabulary used for the graph; needed with --query-manifest.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub results: PathBuf,
    #[arg(long)]
    pub truth: PathBuf,
    #[arg(long)]
    pub graph: PathBuf,
    #[arg(long, default_value_t = DEFAULT_F_CUTOFF, value_parser = positive)]
    pub f_cutoff: usize,
    #[arg(long)]
    pub out: PathBuf,
}

/// Failure of a command: bad usage (exit 2) or a runtime error (exit 1).
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Run(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Run(e)
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Run(e) => write!(f, "error: {e}"),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Run(_) => 1,
        }
    }
}

type CliResult<T = ()> = std::result::Result<T, CliError>;

#[derive(Serialize)]
struct RunManifest<'a, P: Serialize> {
    command: &'a str,
    params: &'a P,
    inputs: BTreeMap<String, String>,
}

fn record_run<P: Serialize>(out: &Path, command: &str, params: &P, inputs: &[&Path]) -> Result<()> {
    let mut digests = BTreeMap::new();
    for p in inputs {
        digests.insert(p.display().to_string(), digest_file(p)?);
    }
    let manifest = RunManifest {
        command,
        params,
        inputs: digests,
    };
    write_json(&run_manifest_path(out), &manifest)
}

/// `<out>.run.json`, or `run.json` inside an output directory.
pub fn run_manifest_path(out: &Path) -> PathBuf {
    if out.extension().is_none() {
        out.join("run.json")
    } else {
        sibling(out, "run.json")
    }
}

fn require_file(path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "missing input file"),
        ))
    }
}

fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e)),
        _ => Ok(()),
    }
}

pub fn cmd_synth(args: &SynthArgs) -> CliResult {
    let config = SynthConfig {
        classes: args.classes,
        shapes_per_class: args.shapes_per_class,
        true_words: args.true_words,
        words_per_class: args.words_per_class,
        class_word_overlap: args.word_overlap,
        views_per_shape: args.views_per_shape,
        parts_per_view: args.parts_per_view,
        dim: args.dim,
        noise_sigma: args.noise,
        prototype_separation: args.separation,
        query_shapes_per_class: args.query_shapes,
        image_queries: args.image_queries,
        seed: args.seed.wrapping_add(SEED_SYNTH),
    };
    config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let world = generate(&config)?;
    write_world(&world, &args.out)?;
    record_run(&args.out, "synth", args, &[])?;
    Ok(())
}

fn inputs_with_sidecar<'a>(manifest: &'a Path, sidecar: &'a Option<PathBuf>) -> Vec<&'a Path> {
    let mut v = vec![manifest];
    v.extend(sidecar.as_deref());
    v
}

pub fn cmd_vocab(args: &VocabArgs) -> CliResult {
    require_file(&args.manifest)?;
    let corpus = load_manifest(&args.manifest, args.sidecar.as_deref())?;
    let params = VocabParams {
        k: args.k,
        target_dim: args.dim,
        seed: args.seed.wrapping_add(SEED_VOCAB),
        max_iters: args.max_iters,
        tol: args.tol,
    };
    let (proj, vocab) = build_vocabulary(&corpus, &params)?;
    ensure_parent(&args.out)?;
    VocabFile::new(&vocab, &proj).write(&args.out)?;
    record_run(&args.out, "vocab", args, &inputs_with_sidecar(&args.manifest, &args.sidecar))?;
    Ok(())
}

pub fn cmd_graph(args: &GraphArgs) -> CliResult {
    require_file(&args.manifest)?;
    require_file(&args.vocab)?;
    let corpus = load_manifest(&args.manifest, args.sidecar.as_deref())?;
    let vf = VocabFile::read(&args.vocab)?;
    let options = GraphOptions {
        supervised: !args.unsupervised,
        category_cap: (args.category_cap > 0).then_some(args.category_cap),
        seed: args.seed.wrapping_add(SEED_GRAPH),
    };
    let graph = build_graph(&corpus, &vf.vocabulary(), &vf.projections, &options)?;
    ensure_parent(&args.out)?;
    graph.save(&args.out, Some(digest_file(&args.vocab)?))?;
    let mut inputs = inputs_with_sidecar(&args.manifest, &args.sidecar);
    inputs.push(&args.vocab);
    record_run(&args.out, "graph", args, &inputs)?;
    Ok(())
}

pub fn cmd_train(args: &TrainArgs) -> CliResult {
    require_file(&args.graph)?;
    let (graph, _) = ShapeGraph::load(&args.graph)?;
    let mut layer_dims = vec![graph.dim()];
    layer_dims.extend(&args.layers);
    layer_dims.push(args.embed_dim);
    let config = GcnConfig {
        layer_dims,
        learning_rate: args.lr,
        epochs: args.epochs,
        neg_ratio: args.neg_ratio,
        seed: args.seed.wrapping_add(SEED_TRAIN),
        tol: args.tol,
        resample_negatives: args.resample_negatives,
        reduction: match args.reduction {
            ReductionArg::Sum => Reduction::Sum,
            ReductionArg::Mean => Reduction::Mean,
        },
    };
    let table = train(&graph, &config)?;
    ensure_parent(&args.out)?;
    table.save(&args.out, Some(digest_file(&args.graph)?))?;
    record_run(&args.out, "train", args, &[&args.graph])?;
    Ok(())
}

fn channel_weights(mode: Mode, values: &Option<Vec<f64>>) -> CliResult<ChannelWeights> {
    let base = ChannelWeights::default();
    let Some(v) = values else {
        return Ok(base);
    };
    let parsed = match (mode, v.len()) {
        (Mode::Shape | Mode::Parts, 4) => base.with_shape([v[0], v[1], v[2], v[3]]),
        (Mode::Image, 3) => base.with_image([v[0], v[1], v[2]]),
        (m, n) => {
            let want = if m == Mode::Image { 3 } else { 4 };
            return Err(CliError::Usage(format!(
                "--weights for {} mode takes {want} values, got {n}",
                m.name()
            )));
        }
    };
    parsed.map_err(|e| CliError::Usage(e.to_string()))
}

/// Splits a query manifest into one entity list per root, in manifest order.
fn query_subtrees(entities: &[Entity]) -> Vec<Vec<Entity>> {
    let mut root_of: BTreeMap<&str, usize> = BTreeMap::new();
    let mut groups: Vec<Vec<Entity>> = Vec::new();
    for e in entities.iter().filter(|e| e.parent.is_none()) {
        root_of.insert(&e.id, groups.len());
        groups.push(vec![e.clone()]);
    }
    let parent_of: BTreeMap<&str, &str> = entities
        .iter()
        .filter_map(|e| e.parent.as_deref().map(|p| (e.id.as_str(), p)))
        .collect();
    for e in entities.iter().filter(|e| e.parent.is_some()) {
        let mut cur = e.id.as_str();
        while let Some(p) = parent_of.get(cur) {
            cur = p;
        }
        if let Some(&g) = root_of.get(cur) {
            groups[g].push(e.clone());
        }
    }
    groups
}

pub fn cmd_retrieve(args: &RetrieveArgs) -> CliResult {
    let weights = channel_weights(args.mode, &args.weights)?;
    if args.queries.is_empty() && args.truth.is_none() && args.query_manifest.is_none() {
        return Err(CliError::Usage("give --query, --truth or --query-manifest".into()));
    }
    if args.query_manifest.is_some() && args.vocab.is_none() {
        return Err(CliError::Usage("--query-manifest needs --vocab".into()));
    }
    require_file(&args.graph)?;
    require_file(&args.emb)?;
    let (graph, _) = ShapeGraph::load(&args.graph)?;
    let (table, _) = EmbeddingTable::load(&args.emb)?;
    let registry = ScorerRegistry::with_defaults();
    let scorer = registry.get(args.mode.name())?;
    let mut inputs: Vec<&Path> = vec![&args.graph, &args.emb];

    let mut in_graph: Vec<String> = args.queries.clone();
    if let Some(truth) = &args.truth {
        require_file(truth)?;
        inputs.push(truth);
        for id in read_truth(truth)?.keys() {
            if let Some(i) = graph.index_of(id) {
                if scorer.accepts(graph.node(i).kind) {
                    in_graph.push(id.clone());
                }
            }
        }
    }

    let mut results: Vec<RetrievalResult> = Vec::new();
    if !in_graph.is_empty() {
        let index = SearchIndex::new(&graph, &table.embeddings)?;
        for q in &in_graph {
            results.push(retrieve(&index, scorer, q, &weights, args.top)?);
        }
    }
    if let Some(qm) = &args.query_manifest {
        require_file(qm)?;
        let vocab_path = args.vocab.as_ref().expect("checked above");
        require_file(vocab_path)?;
        inputs.push(qm);
        inputs.extend(args.query_sidecar.as_deref());
        inputs.push(vocab_path);
        let vf = VocabFile::read(vocab_path)?;
        let vocab = vf.vocabulary();
        let queries = load_manifest(qm, args.query_sidecar.as_deref())?;
        for subtree in query_subtrees(queries.entities()) {
            let root = subtree[0].id.clone();
            let (augmented, _) = graph.attach_query(&subtree, &vocab, &vf.projections)?;
            let emb = embed_query(&augmented, &table)?;
            let index = SearchIndex::new(&augmented, &emb)?;
            results.push(retrieve(&index, scorer, &root, &weights, args.top)?);
        }
    }
    if results.is_empty() {
        return Err(CliError::Run(Error::Query(format!(
            "no queries accepted by {} mode",
            args.mode.name()
        ))));
    }
    ensure_parent(&args.out)?;
    write_json(&args.out, &results)?;
    record_run(&args.out, "retrieve", args, &inputs)?;
    Ok(())
}

pub fn cmd_eval(args: &EvalArgs) -> CliResult {
    for p in [&args.results, &args.truth, &args.graph] {
        require_file(p)?;
    }
    let results: Vec<RetrievalResult> = read_json(&args.results)?;
    let truth = read_truth(&args.truth)?;
    let (graph, _) = ShapeGraph::load(&args.graph)?;
    let mut labels = BTreeMap::new();
    for i in graph.indices_of_kind(EntityKind::Model) {
        let n = graph.node(i);
        if let Some(l) = truth.get(&n.id).or(n.label.as_ref()) {
            labels.insert(n.id.clone(), l.clone());
        }
    }
    let ranked = results
        .iter()
        .map(|r| {
            let label = truth
                .get(&r.query)
                .or_else(|| graph.index_of(&r.query).and_then(|i| graph.node(i).label.as_ref()))
                .ok_or_else(|| Error::Eval(format!("no ground-truth label for query {}", r.query)))?;
            RankedQuery::from_retrieval(r, label, &labels)
        })
        .collect::<Result<Vec<_>>>()?;
    let report = evaluate(&ranked, args.f_cutoff)?;
    ensure_parent(&args.out)?;
    write_json(&args.out, &report)?;
    write_atomic(&sibling(&args.out, "pr.csv"), report.pr_csv().as_bytes())?;
    record_run(&args.out, "eval", args, &[&args.results, &args.truth, &args.graph])?;
    Ok(())
}

pub fn execute(cli: &Cli) -> CliResult {
    match &cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Vocab(a) => cmd_vocab(a),
        Command::Graph(a) => cmd_graph(a),
        Command::Train(a) => cmd_train(a),
        Command::Retrieve(a) => cmd_retrieve(a),
        Command::Eval(a) => cmd_eval(a),
    }
}

/// Parses `argv` and runs the command, printing diagnostics to stderr.
/// Returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("shapekg: {e}");
            e.exit_code()
        }
    }
}

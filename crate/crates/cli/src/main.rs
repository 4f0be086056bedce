use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use langdiar::backend::{score_trials_with, train_backend, BackendModel, ScorerKind, TrialSet, DEFAULT_TRIALS};
use langdiar::corpus::{read_utterance, synth_corpus, write_corpus, CorpusSpec, Manifest};
use langdiar::diarize::{diarize_changepoint_detailed, diarize_fixed, Diarization, Pipeline};
use langdiar::embedding::{builtin_extractor, labeled_windows, Extractor};
use langdiar::eval::{cpd_metrics, eer, pool_cpd, BatchReport, CpdReport};
use langdiar::features::{
    energy_vad, extract_features, frame_energy, frame_signal, read_wav, vad_mask, FeatureSequence, FrameSpec,
    MfccConfig, DEFAULT_VAD_FACTOR,
};
use langdiar::io::{load_config, read_model, read_rttm_file, write_model, write_rttm_file, Mode, PipelineConfig};
use langdiar::nalgebra::DVector;
use langdiar::parallel::try_map_range;
use langdiar::Parallelism;

/// Environment variable naming a directory searched for `--config` files.
const CONFIG_DIR_ENV: &str = "LANGDIAR_CONFIG_DIR";

#[derive(Parser)]
#[command(name = "langdiar", version, about = "Language and speaker diarization toolkit")]
struct Cli {
    /// Worker threads for data-parallel stages (1 runs sequentially).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic code-switched corpus.
    Synth(SynthArgs),
    /// Train projections and GPLDA from labeled features.
    TrainBackend(TrainArgs),
    /// Diarize every utterance in a directory.
    Diarize(DiarizeArgs),
    /// DER/JER of hypothesis RTTMs against references.
    Score(ScoreArgs),
    /// Change-point detection rates (IDR/MR/FAR/Dm).
    CpdScore(CpdArgs),
    /// Equal error rate on random same/different-class trials.
    TrialsEer(EerArgs),
    /// Energy voice activity detection on a WAV file.
    Vad(VadArgs),
    /// Describe a model, matrix, RTTM or configuration file.
    Info(InfoArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Corpus spec JSON; keys left out take the preset's values.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Built-in spec: ttsf or mscs.
    #[arg(long, default_value = "ttsf")]
    preset: String,
    #[arg(long)]
    out: PathBuf,
    #[arg(short = 'n', long, default_value_t = 20)]
    n: usize,
    /// Overrides the spec seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the class separation.
    #[arg(long)]
    separation: Option<f64>,
}

#[derive(Args)]
struct TrainArgs {
    /// Directory of `<id>.feat` files.
    #[arg(long)]
    features: PathBuf,
    /// A manifest.json (references are `<id>.rttm` beside it) or a
    /// directory of RTTM files.
    #[arg(long)]
    labels: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "lda,wccn,whiten,lnorm")]
    chain: String,
    #[arg(long)]
    lda_dim: Option<usize>,
    /// Analysis window N in voiced frames.
    #[arg(long, default_value_t = 200)]
    window: usize,
    /// Hop between training windows (defaults to N/2).
    #[arg(long)]
    hop: Option<usize>,
    #[arg(long, default_value = "stat-pool")]
    extractor: String,
    #[arg(long, default_value_t = DEFAULT_VAD_FACTOR)]
    vad_factor: f64,
}

#[derive(Args)]
struct DiarizeArgs {
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Named hyperparameter preset, e.g. ttsf-n200 or gue-n50.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    model: PathBuf,
    /// Directory of `.feat` (with optional `.energy`) or `.wav` files.
    #[arg(long = "in")]
    input: PathBuf,
    /// Output directory for `<id>.rttm`.
    #[arg(long)]
    out: PathBuf,
    /// Optional JSON report with the effective config and change points.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Fixed,
    Changepoint,
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long = "ref")]
    reference: PathBuf,
    #[arg(long)]
    hyp: PathBuf,
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long, default_value_t = 0.0)]
    collar: f64,
}

#[derive(Args)]
struct CpdArgs {
    #[arg(long = "ref")]
    reference: PathBuf,
    #[arg(long)]
    hyp: PathBuf,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct EerArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    features: PathBuf,
    /// As for train-backend.
    #[arg(long)]
    labels: PathBuf,
    /// Trials of each kind.
    #[arg(long, default_value_t = DEFAULT_TRIALS)]
    pairs: usize,
    #[arg(long, default_value = "gplda")]
    scorer: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_VAD_FACTOR)]
    vad_factor: f64,
}

#[derive(Args)]
struct VadArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value_t = DEFAULT_VAD_FACTOR)]
    factor: f64,
    #[arg(long, default_value_t = 0.02)]
    frame_len: f64,
    #[arg(long, default_value_t = 0.01)]
    frame_shift: f64,
    /// Write voiced regions as RTTM (label `speech`).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct InfoArgs {
    path: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn parallelism(jobs: Option<usize>) -> Result<Parallelism> {
    match jobs {
        Some(0) => bail!("--jobs must be at least 1"),
        Some(1) => Ok(Parallelism::Sequential),
        Some(n) => {
            #[cfg(feature = "parallel")]
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .context("configuring worker threads")?;
            #[cfg(not(feature = "parallel"))]
            log::warn!("built without parallel support; ignoring --jobs {n}");
            Ok(Parallelism::default())
        }
        None => Ok(Parallelism::default()),
    }
}

fn run(cli: Cli) -> Result<()> {
    let par = parallelism(cli.jobs)?;
    match cli.command {
        Command::Synth(a) => synth(a, par),
        Command::TrainBackend(a) => train(a, par),
        Command::Diarize(a) => diarize(a, par),
        Command::Score(a) => score(a, par),
        Command::CpdScore(a) => cpd_score(a),
        Command::TrialsEer(a) => trials_eer(a, par),
        Command::Vad(a) => vad(a),
        Command::Info(a) => info(a),
    }
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let text = serde_json::to_string_pretty(value)? + "\n";
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Sorted ids of files with extension `ext` in `dir`.
fn ids_with_ext(dir: &Path, ext: &str) -> Result<Vec<String>> {
    let mut ids = Vec::new();
    for entry in fs::read_dir(dir).with_context(|| format!("reading directory {}", dir.display()))? {
        let p = entry?.path();
        if p.extension().and_then(|e| e.to_str()) == Some(ext) {
            if let Some(stem) = p.file_stem().and_then(|s| s.to_str()) {
                ids.push(stem.to_string());
            }
        }
    }
    ids.sort();
    Ok(ids)
}

fn synth(a: SynthArgs, par: Parallelism) -> Result<()> {
    let mut spec = match &a.spec {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let de = &mut serde_json::Deserializer::from_str(&text);
            serde_path_to_error::deserialize::<_, CorpusSpec>(de)
                .map_err(|e| anyhow!("{}: at `{}`: {}", path.display(), e.path(), e.inner()))?
        }
        None => CorpusSpec::named(&a.preset).ok_or_else(|| anyhow!("unknown corpus preset `{}` (ttsf|mscs)", a.preset))?,
    };
    if let Some(s) = a.seed {
        spec.seed = s;
    }
    if let Some(s) = a.separation {
        spec = spec.with_separation(s);
    }
    spec.validate()?;
    let corpus = synth_corpus(&spec, a.n, par)?;
    let manifest = write_corpus(&a.out, &spec, &corpus)?;
    println!(
        "wrote {} utterances to {} ({})",
        manifest.utterances.len(),
        a.out.display(),
        manifest
            .class_time
            .iter()
            .map(|(k, v)| format!("{k}: {v:.1} s"))
            .collect::<Vec<_>>()
            .join(", ")
    );
    Ok(())
}

/// Reference diarizations keyed by utterance id.
fn load_references(labels: &Path) -> Result<BTreeMap<String, Diarization>> {
    let mut out = BTreeMap::new();
    if labels.is_dir() {
        for id in ids_with_ext(labels, "rttm")? {
            out.insert(id.clone(), read_rttm_file(labels.join(format!("{id}.rttm")))?);
        }
    } else {
        let text = fs::read_to_string(labels).with_context(|| format!("reading {}", labels.display()))?;
        let manifest: Manifest =
            serde_json::from_str(&text).with_context(|| format!("parsing manifest {}", labels.display()))?;
        let dir = labels.parent().unwrap_or(Path::new("."));
        for u in manifest.utterances {
            out.insert(u.id.clone(), read_rttm_file(dir.join(format!("{}.rttm", u.id)))?);
        }
    }
    if out.is_empty() {
        bail!("no references found in {}", labels.display());
    }
    Ok(out)
}

fn extractor_for(kind: &str, input_dim: usize, seed: u64) -> Result<Box<dyn Extractor>> {
    let kind = serde_json::from_value(json!(kind)).map_err(|_| anyhow!("unknown extractor `{kind}`"))?;
    Ok(builtin_extractor(kind, input_dim, None, seed)?)
}

fn voiced(seq: &FeatureSequence, factor: f64) -> Result<FeatureSequence> {
    Ok(energy_vad(seq, factor)?.voiced()?)
}

/// Windows, their class indices and the sorted class names.
type LabeledWindows = (Vec<DVector<f64>>, Vec<usize>, Vec<String>);

/// Labeled training windows from every referenced utterance.
fn collect_windows(
    features: &Path,
    refs: &BTreeMap<String, Diarization>,
    kind: &str,
    window: usize,
    hop: usize,
    vad_factor: f64,
    par: Parallelism,
) -> Result<LabeledWindows> {
    let mut classes: Vec<String> = refs.values().flat_map(|d| d.labels()).collect();
    classes.sort();
    classes.dedup();
    let ids: Vec<&String> = refs.keys().collect();
    let per = try_map_range(ids.len(), par, |i| -> Result<_> {
        let seq = voiced(&read_utterance(features, ids[i])?, vad_factor)?;
        let ex = extractor_for(kind, seq.dim(), 0)?;
        Ok(labeled_windows(ex.as_ref(), &seq, &refs[ids[i]], &classes, window, hop)?)
    })?;
    let (mut xs, mut ls) = (Vec::new(), Vec::new());
    for (x, l) in per {
        xs.extend(x);
        ls.extend(l);
    }
    if xs.is_empty() {
        bail!("no training windows of {window} frames found");
    }
    Ok((xs, ls, classes))
}

fn train(a: TrainArgs, par: Parallelism) -> Result<()> {
    let refs = load_references(&a.labels)?;
    let hop = a.hop.unwrap_or((a.window / 2).max(1));
    let (xs, labels, classes) = collect_windows(&a.features, &refs, &a.extractor, a.window, hop, a.vad_factor, par)?;
    let dim = xs[0].len();
    let lda_dim = a.lda_dim.unwrap_or(langdiar::backend::LDA_DIM_XVECTOR).min(dim);
    let chain = langdiar::backend::ProjectionChain::parse(&a.chain, Some(lda_dim))?;
    let kind = serde_json::from_value(json!(a.extractor)).map_err(|_| anyhow!("unknown extractor `{}`", a.extractor))?;
    let model = train_backend(&xs, &labels, &chain, a.window, kind)?;
    write_model(&a.out, &model)?;
    println!(
        "trained on {} windows ({}) of {} classes; chain {}; wrote {}",
        xs.len(),
        dim,
        classes.len(),
        chain.stages().join(","),
        a.out.display()
    );
    Ok(())
}

fn resolve_config(path: &Path) -> PathBuf {
    if path.exists() || path.is_absolute() {
        return path.to_path_buf();
    }
    match std::env::var_os(CONFIG_DIR_ENV) {
        Some(dir) => Path::new(&dir).join(path),
        None => path.to_path_buf(),
    }
}

/// Loads features from `.feat` files, or computes them from `.wav` files.
fn load_inputs(dir: &Path, cfg: &PipelineConfig) -> Result<Vec<(String, FeatureSequence)>> {
    let feats = ids_with_ext(dir, "feat")?;
    if !feats.is_empty() {
        return feats
            .into_iter()
            .map(|id| Ok((id.clone(), read_utterance(dir, &id)?)))
            .collect();
    }
    let wavs = ids_with_ext(dir, "wav")?;
    if wavs.is_empty() {
        bail!("no .feat or .wav files in {}", dir.display());
    }
    wavs.into_iter()
        .map(|id| {
            let signal = read_wav(dir.join(format!("{id}.wav")))?;
            let mfcc = MfccConfig {
                sample_rate: signal.sample_rate,
                ..MfccConfig::default()
            };
            Ok((id, extract_features(&signal, &cfg.frame_spec(), &mfcc, 2)?))
        })
        .collect()
}

fn diarize(a: DiarizeArgs, par: Parallelism) -> Result<()> {
    let mut cfg = match &a.config {
        Some(p) => load_config(resolve_config(p))?,
        None => PipelineConfig::default(),
    };
    if let Some(p) = &a.preset {
        cfg.apply_preset(p)?;
    }
    if let Some(m) = a.mode {
        cfg.mode = match m {
            ModeArg::Fixed => Mode::Fixed,
            ModeArg::Changepoint => Mode::Changepoint,
        };
    }
    cfg.validate()?;
    log::info!("effective configuration: {}", cfg.echo());
    let model: BackendModel = read_model(&a.model)?;
    if model.window_len != cfg.window {
        log::warn!("model trained with N = {}, diarizing with N = {}", model.window_len, cfg.window);
    }
    let scorer = model.scorer(cfg.scorer)?;
    let inputs = load_inputs(&a.input, &cfg)?;
    let input_dim = inputs[0].1.dim();
    let extractor = builtin_extractor(model.extractor, input_dim, None, cfg.seed)?;
    let pipeline = Pipeline {
        extractor: extractor.as_ref(),
        projection: &model.projection,
        scorer: &scorer,
        window: cfg.window,
        clusters: cfg.clusters,
        shift: cfg.shift,
        vad_factor: Some(cfg.vad_factor),
        parallelism: par,
    };
    let cp = cfg.change_points();
    // Utterances run in parallel; each runs its own stages sequentially.
    let inner = Pipeline {
        parallelism: Parallelism::Sequential,
        ..pipeline
    };
    let results = try_map_range(inputs.len(), par, |i| -> Result<(Diarization, Vec<f64>)> {
        let (id, seq) = &inputs[i];
        let r = match cfg.mode {
            Mode::Fixed => diarize_fixed(id, seq, &inner).map(|d| (d, Vec::new())),
            Mode::Changepoint => {
                diarize_changepoint_detailed(id, seq, &inner, &cp).map(|o| (o.diarization, o.change_times))
            }
        };
        r.with_context(|| format!("utterance {id}"))
    })?;
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    for (d, _) in &results {
        write_rttm_file(a.out.join(format!("{}.rttm", d.utterance_id)), d)?;
    }
    if let Some(report) = &a.report {
        let utts: Vec<_> = results
            .iter()
            .map(|(d, c)| json!({"id": d.utterance_id, "segments": d.segments().len(), "change_times": c}))
            .collect();
        write_json(report, &json!({"config": cfg, "utterances": utts}))?;
    }
    println!("diarized {} utterances into {}", results.len(), a.out.display());
    Ok(())
}

fn rttm_pairs(reference: &Path, hyp: &Path) -> Result<Vec<(Diarization, Diarization)>> {
    let ids = ids_with_ext(reference, "rttm")?;
    if ids.is_empty() {
        bail!("no reference RTTM files in {}", reference.display());
    }
    ids.iter()
        .map(|id| {
            let r = read_rttm_file(reference.join(format!("{id}.rttm")))?;
            let hp = hyp.join(format!("{id}.rttm"));
            let mut h = read_rttm_file(&hp)?;
            h.utterance_id = id.clone();
            let mut r = r;
            r.utterance_id = id.clone();
            Ok((r, h))
        })
        .collect()
}

fn score(a: ScoreArgs, par: Parallelism) -> Result<()> {
    let pairs = rttm_pairs(&a.reference, &a.hyp)?;
    let report: BatchReport = langdiar::eval::score_batch(&pairs, a.collar, par)?;
    print!("{}", report.table());
    if let Some(p) = &a.report {
        write_json(p, &json!({"collar": a.collar, "report": report}))?;
    }
    Ok(())
}

fn cpd_score(a: CpdArgs) -> Result<()> {
    let pairs = rttm_pairs(&a.reference, &a.hyp)?;
    let mut per: Vec<(String, CpdReport)> = Vec::new();
    for (r, h) in &pairs {
        let changes = r.change_points();
        if changes.is_empty() {
            log::warn!("{}: reference has no change points; skipped", r.utterance_id);
            continue;
        }
        let span = (0.0, r.end().max(h.end()));
        per.push((r.utterance_id.clone(), cpd_metrics(&changes, &h.change_points(), span)?));
    }
    let reports: Vec<CpdReport> = per.iter().map(|p| p.1.clone()).collect();
    let pooled = pool_cpd(&reports)?;
    println!("{:<20} {:>8} {:>8} {:>8} {:>8}", "utterance", "IDR", "MR", "FAR", "Dm");
    for (id, r) in &per {
        println!("{:<20} {:>8.2} {:>8.2} {:>8.2} {:>8.3}", id, r.idr, r.mr, r.far, r.dm);
    }
    println!("{:<20} {:>8.2} {:>8.2} {:>8.2} {:>8.3}", "pooled", pooled.idr, pooled.mr, pooled.far, pooled.dm);
    if let Some(p) = &a.report {
        write_json(p, &json!({"utterances": per, "pooled": pooled}))?;
    }
    Ok(())
}

fn trials_eer(a: EerArgs, par: Parallelism) -> Result<()> {
    let model = read_model(&a.model)?;
    let kind: ScorerKind = a.scorer.parse()?;
    let scorer = model.scorer(kind)?;
    let refs = load_references(&a.labels)?;
    let n = model.window_len;
    let (xs, labels, _) = collect_windows(&a.features, &refs, model.extractor.name(), n, n, a.vad_factor, par)?;
    let projected = model.projection.apply_all(&xs, par)?;
    let trials = TrialSet::sample(&projected, &labels, a.pairs, a.pairs, a.seed)?;
    let scores = score_trials_with(|x, y| scorer.similarity(x, y), &trials, par)?;
    let e = eer(&scores.target, &scores.nontarget)?;
    println!("EER {e:.2}% over {} target and {} nontarget trials (N = {n})", scores.target.len(), scores.nontarget.len());
    Ok(())
}

fn vad(a: VadArgs) -> Result<()> {
    let signal = read_wav(&a.input)?;
    let spec = FrameSpec::new(a.frame_len, a.frame_shift)?;
    let framed = frame_signal(&signal, &spec)?;
    let energies = frame_energy(&framed.frames);
    let mask = vad_mask(&energies, a.factor);
    let voiced = mask.iter().filter(|&&v| v).count();
    println!("{voiced} of {} frames voiced (factor {})", mask.len(), a.factor);
    if let Some(out) = &a.out {
        let id = a.input.file_stem().and_then(|s| s.to_str()).unwrap_or("utt");
        let labels: Vec<Option<&str>> = mask.iter().map(|&v| v.then_some("speech")).collect();
        let locs: Vec<f64> = framed.starts.clone();
        let (l, t): (Vec<&str>, Vec<f64>) = labels
            .iter()
            .zip(&locs)
            .filter_map(|(l, t)| l.map(|l| (l, *t)))
            .unzip();
        let d = langdiar::diarize::labels_to_segments(id, &l, &t, a.frame_shift)?;
        write_rttm_file(out, &d)?;
    }
    Ok(())
}

fn info(a: InfoArgs) -> Result<()> {
    let p = &a.path;
    let bytes = fs::read(p).with_context(|| format!("reading {}", p.display()))?;
    if bytes.starts_with(langdiar::io::MODEL_MAGIC) {
        let m = langdiar::io::decode_model(&bytes)?;
        println!(
            "model: extractor {}, N = {}, input dim {}, output dim {}, gplda {}",
            m.extractor.name(),
            m.window_len,
            m.projection.input_dim(),
            m.projection.output_dim(),
            m.gplda.is_some()
        );
    } else if bytes.starts_with(langdiar::io::MATRIX_MAGIC) {
        let m = langdiar::io::decode_matrix(&bytes)?;
        println!(
            "matrix: {} x {}, times {}",
            m.data.nrows(),
            m.data.ncols(),
            if m.times.is_some() { "present" } else { "absent" }
        );
    } else if p.extension().and_then(|e| e.to_str()) == Some("rttm") {
        let d = read_rttm_file(p)?;
        println!(
            "rttm: {}, {} segments, labels {:?}, speech {:.3} s",
            d.utterance_id,
            d.segments().len(),
            d.labels(),
            d.total_duration()
        );
    } else {
        let cfg = load_config(p)?;
        println!("{}", cfg.echo());
    }
    Ok(())
}

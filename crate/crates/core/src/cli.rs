//! Command-line pipeline: every stage reads its predecessors' artifacts and
//! writes its own directory together with a `stage.json` of content hashes.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use log::{info, warn};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{build_corpus, CodingScheme, Corpus};
use crate::dsae::{corpus_training_data, train_pbhl, train_stack, EncoderModel, SaeHyper, Schedule};
use crate::error::{Error, Result};
use crate::eval::{
    corpus_scatter, experiment1_report, experiment2_report, write_report_csv, ClusterMethod, FeatureVariant,
    FitRun, TrialLabels,
};
use crate::features::{fit_normalizer, normalize, MfccConfig};
use crate::hdphlm::HdpHlmHyper;
use crate::sampler::{fit, read_frame_labels, trial_dir_name, FitConfig, FitSummary};
use crate::synth::{self, SynthConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    /// Corpus manifest read by `extract`.
    pub manifest: Option<PathBuf>,
    /// Parent of the default stage directories.
    pub out_dir: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        PathsConfig {
            manifest: None,
            out_dir: PathBuf::from("run"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeaturesConfig {
    pub mfcc: MfccConfig,
    /// Min-max normalize every dimension to `[-1, 1]` over the corpus.
    pub normalize: bool,
}

impl Default for FeaturesConfig {
    fn default() -> Self {
        FeaturesConfig {
            mfcc: MfccConfig::default(),
            normalize: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DsaeConfig {
    /// Hidden sizes of the stack; the input size comes from the corpus.
    pub hidden_dims: Vec<usize>,
    pub hyper: SaeHyper,
    pub schedule: Schedule,
}

impl Default for DsaeConfig {
    fn default() -> Self {
        DsaeConfig {
            hidden_dims: vec![20, 10, 6],
            hyper: SaeHyper::default(),
            schedule: Schedule::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PbhlConfig {
    pub enabled: bool,
    pub z_dim: usize,
    pub s_dim: usize,
    pub coding: CodingScheme,
}

impl Default for PbhlConfig {
    fn default() -> Self {
        PbhlConfig {
            enabled: true,
            z_dim: 3,
            s_dim: 3,
            coding: CodingScheme::Sparse,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Cluster count of the frame clustering baselines.
    pub k: usize,
    pub trials: usize,
    pub seed: u64,
    pub methods: Vec<ClusterMethod>,
    pub plot_points: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            k: 5,
            trials: 20,
            seed: 1,
            methods: vec![ClusterMethod::KMeans, ClusterMethod::Gmm],
            plot_points: 3000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitSection {
    pub n_trials: usize,
    pub n_iters: usize,
    pub seed: u64,
}

impl Default for FitSection {
    fn default() -> Self {
        let d = FitConfig::default();
        FitSection {
            n_trials: d.n_trials,
            n_iters: d.n_iters,
            seed: d.seed,
        }
    }
}

/// Everything a pipeline run needs, read from one TOML file. Missing fields
/// take their defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub paths: PathsConfig,
    pub synth: SynthConfig,
    pub features: FeaturesConfig,
    pub dsae: DsaeConfig,
    pub pbhl: PbhlConfig,
    pub hdphlm: HdpHlmHyper,
    pub fit: FitSection,
    pub eval: EvalConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let cfg: RunConfig = toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.synth.validate()?;
        self.features.mfcc.validate()?;
        if self.dsae.hidden_dims.is_empty() || self.dsae.hidden_dims.contains(&0) {
            return Err(Error::Config("dsae.hidden_dims needs positive sizes".into()));
        }
        if self.pbhl.z_dim == 0 || self.pbhl.s_dim == 0 {
            return Err(Error::Config("pbhl.z_dim and pbhl.s_dim must be positive".into()));
        }
        if self.fit.n_trials == 0 {
            return Err(Error::Config("fit.n_trials must be positive".into()));
        }
        if self.eval.k == 0 || self.eval.trials == 0 {
            return Err(Error::Config("eval.k and eval.trials must be positive".into()));
        }
        if let Some(m) = &self.paths.manifest {
            if !m.exists() {
                return Err(Error::Config(format!("manifest {} does not exist", m.display())));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Parser)]
#[command(name = "npbdaa", version, about = "Unsupervised phoneme and word discovery from multi-speaker features")]
pub struct Cli {
    /// Run configuration (TOML); fields left out take their defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render the synthetic corpus described by the `[synth]` section.
    SynthGen {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Load a manifest (WAV or feature CSV entries) and normalize features.
    Extract {
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// MFCC layout for WAV entries: 39 (c0..c12 with deltas) or 12 (c1..c12).
        #[arg(long)]
        dims: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the autoencoder stack, plus the parametric-bias layer unless
    /// `--no-pbhl` is given.
    TrainDsae {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        no_pbhl: bool,
    },
    /// Encode a corpus with a trained model.
    Encode {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the Gibbs sampler chains.
    Fit {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        iters: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Threads for running trials concurrently (0 = all cores).
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Score frame clustering baselines and fitted chains against truth.
    Evaluate {
        /// Feature variant for the clustering table, as NAME=CORPUS_DIR.
        #[arg(long = "variant", value_name = "NAME=DIR")]
        variants: Vec<String>,
        /// Variant clustered separately per speaker, as NAME=CORPUS_DIR.
        #[arg(long = "per-speaker-variant", value_name = "NAME=DIR")]
        per_speaker: Vec<String>,
        /// Fitted chains for the discovery table, as NAME=FIT_DIR:CORPUS_DIR.
        #[arg(long = "fit", value_name = "NAME=FIT_DIR:CORPUS_DIR")]
        fits: Vec<String>,
        /// Corpus whose labels score the fits; defaults to the first fit's corpus.
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// PCA scatter of a corpus' frames colored by truth letter.
    Plot {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value = "")]
        title: String,
    },
}

pub const STAGE_FILE: &str = "stage.json";

/// Content hashes of a stage's inputs and outputs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageManifest {
    pub stage: String,
    pub config_sha256: String,
    /// Input label -> hash of the input's stage manifest or file.
    pub inputs: BTreeMap<String, String>,
    /// Output path relative to the stage directory -> hash.
    pub outputs: BTreeMap<String, String>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn collect_files(dir: &Path, base: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(dir, err)))
        .collect::<Result<_>>()?;
    entries.sort();
    for p in entries {
        if p.is_dir() {
            collect_files(&p, base, out)?;
        } else if p.file_name().is_some_and(|n| n != STAGE_FILE) {
            out.push(p.strip_prefix(base).expect("under base").to_path_buf());
        }
    }
    Ok(())
}

fn hash_outputs(dir: &Path) -> Result<BTreeMap<String, String>> {
    let mut files = Vec::new();
    collect_files(dir, dir, &mut files)?;
    files
        .into_iter()
        .map(|rel| {
            let key = rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/");
            Ok((key, sha256_file(&dir.join(&rel))?))
        })
        .collect()
}

fn write_stage(dir: &Path, stage: &str, config_sha: &str, inputs: BTreeMap<String, String>) -> Result<()> {
    let manifest = StageManifest {
        stage: stage.to_string(),
        config_sha256: config_sha.to_string(),
        inputs,
        outputs: hash_outputs(dir)?,
    };
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Format(e.to_string()))? + "\n";
    let path = dir.join(STAGE_FILE);
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

/// Confirms that a stage directory still matches its recorded hashes and
/// returns the hash of its manifest. Directories without a manifest are
/// accepted with a warning.
pub fn verify_stage(dir: &Path) -> Result<String> {
    let path = dir.join(STAGE_FILE);
    if !path.exists() {
        warn!("{} has no {STAGE_FILE}; staleness cannot be checked", dir.display());
        return Ok(String::new());
    }
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let recorded: StageManifest =
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let current = hash_outputs(dir)?;
    if current != recorded.outputs {
        return Err(Error::Format(format!(
            "{} is stale: its files no longer match {STAGE_FILE}",
            dir.display()
        )));
    }
    sha256_file(&path)
}

fn load_corpus_dir(dir: &Path) -> Result<Corpus> {
    let manifest = dir.join("manifest.toml");
    if !manifest.exists() {
        return Err(Error::invalid(format!("{} has no manifest.toml", dir.display())));
    }
    build_corpus(&manifest, &MfccConfig::default())
}

fn parse_pair(spec: &str) -> Result<(String, String)> {
    spec.split_once('=')
        .map(|(a, b)| (a.to_string(), b.to_string()))
        .filter(|(a, b)| !a.is_empty() && !b.is_empty())
        .ok_or_else(|| Error::Config(format!("expected NAME=VALUE, got '{spec}'")))
}

struct Ctx {
    cfg: RunConfig,
    config_sha: String,
}

impl Ctx {
    fn out(&self, given: Option<PathBuf>, stage: &str) -> Result<PathBuf> {
        let dir = given.unwrap_or_else(|| self.cfg.paths.out_dir.join(stage));
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(dir)
    }
}

fn clear_dir(dir: &Path) -> Result<()> {
    for sub in ["features", "labels"] {
        let p = dir.join(sub);
        if p.exists() {
            fs::remove_dir_all(&p).map_err(|e| Error::io(&p, e))?;
        }
    }
    Ok(())
}

fn run_command(ctx: &Ctx, command: Command) -> Result<()> {
    let cfg = &ctx.cfg;
    match command {
        Command::SynthGen { out } => {
            let dir = ctx.out(out, "synth")?;
            clear_dir(&dir)?;
            let corpus = synth::generate(&cfg.synth)?;
            corpus.write_to_dir(&dir)?;
            write_stage(&dir, "synth-gen", &ctx.config_sha, BTreeMap::new())?;
            info!("wrote {} utterances to {}", corpus.utterances.len(), dir.display());
        }
        Command::Extract { manifest, dims, out } => {
            let manifest = manifest
                .or_else(|| cfg.paths.manifest.clone())
                .ok_or_else(|| Error::Config("no manifest given (--manifest or paths.manifest)".into()))?;
            let base = manifest.parent().unwrap_or(Path::new("."));
            let mut inputs = BTreeMap::new();
            let upstream = verify_stage(base)?;
            if !upstream.is_empty() {
                inputs.insert("corpus".to_string(), upstream);
            }
            inputs.insert("manifest".to_string(), sha256_file(&manifest)?);
            let mfcc = match dims {
                Some(d) => {
                    inputs.insert("dims".to_string(), d.to_string());
                    MfccConfig::for_dims(d)?
                }
                None => cfg.features.mfcc.clone(),
            };
            let corpus = build_corpus(&manifest, &mfcc)?;
            let dir = ctx.out(out, "features")?;
            clear_dir(&dir)?;
            let corpus = if cfg.features.normalize {
                let stats = fit_normalizer(corpus.utterances.iter().map(|u| &u.features.frames))?;
                let feats = corpus
                    .utterances
                    .iter()
                    .map(|u| normalize(&u.features, &stats))
                    .collect::<Result<Vec<_>>>()?;
                let path = dir.join("normalizer.json");
                let text = serde_json::to_string_pretty(&stats).map_err(|e| Error::Format(e.to_string()))?;
                fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
                corpus.with_features(feats)?
            } else {
                corpus
            };
            corpus.write_to_dir(&dir)?;
            write_stage(&dir, "extract", &ctx.config_sha, inputs)?;
            info!("extracted {} frames into {}", corpus.total_frames(), dir.display());
        }
        Command::TrainDsae { corpus, out, no_pbhl } => {
            let upstream = verify_stage(&corpus)?;
            let c = load_corpus_dir(&corpus)?;
            let c = Corpus::new(c.utterances, c.speaker_names, cfg.pbhl.coding)?;
            let dim = c.dim().ok_or_else(|| Error::invalid("empty corpus"))?;
            let mut dims = vec![dim];
            dims.extend(&cfg.dsae.hidden_dims);
            let (frames, codes) = corpus_training_data(&c);
            info!("training stack {dims:?} on {} frames", frames.nrows());
            let stack = train_stack(&frames, &dims, cfg.dsae.hyper, &cfg.dsae.schedule)?;
            let model = if cfg.pbhl.enabled && !no_pbhl {
                info!("training parametric-bias layer ({} speakers, {} coding)", c.n_speakers, c.coding);
                EncoderModel::DsaePbhl(train_pbhl(
                    &stack,
                    &frames,
                    &codes,
                    cfg.pbhl.z_dim,
                    cfg.pbhl.s_dim,
                    cfg.dsae.hyper,
                    &cfg.dsae.schedule,
                )?)
            } else {
                EncoderModel::Dsae(stack)
            };
            let dir = ctx.out(out, "model")?;
            model.save(&dir.join("model.json"))?;
            let mut inputs = BTreeMap::from([("corpus".to_string(), upstream)]);
            if no_pbhl {
                inputs.insert("no-pbhl".to_string(), "true".to_string());
            }
            write_stage(&dir, "train-dsae", &ctx.config_sha, inputs)?;
        }
        Command::Encode { corpus, model, out } => {
            let up_corpus = verify_stage(&corpus)?;
            let model_file = if model.is_dir() { model.join("model.json") } else { model.clone() };
            let model_dir = model_file.parent().unwrap_or(Path::new("."));
            let up_model = verify_stage(model_dir)?;
            let c = load_corpus_dir(&corpus)?;
            let c = Corpus::new(c.utterances, c.speaker_names, cfg.pbhl.coding)?;
            let encoded = match EncoderModel::load(&model_file)? {
                EncoderModel::DsaePbhl(m) => m.encode_corpus(&c)?,
                EncoderModel::Dsae(m) => c
                    .utterances
                    .iter()
                    .map(|u| {
                        let f = m.encode_frames(&u.features.frames)?;
                        crate::corpus::FeatureSequence::new(f, u.features.frame_shift)
                    })
                    .collect::<Result<Vec<_>>>()?,
            };
            let dir = ctx.out(out, "encoded")?;
            clear_dir(&dir)?;
            c.with_features(encoded)?.write_to_dir(&dir)?;
            write_stage(
                &dir,
                "encode",
                &ctx.config_sha,
                BTreeMap::from([("corpus".to_string(), up_corpus), ("model".to_string(), up_model)]),
            )?;
        }
        Command::Fit {
            corpus,
            out,
            trials,
            iters,
            seed,
            jobs,
        } => {
            let upstream = verify_stage(&corpus)?;
            let c = load_corpus_dir(&corpus)?;
            let fc = FitConfig {
                n_trials: trials.unwrap_or(cfg.fit.n_trials),
                n_iters: iters.unwrap_or(cfg.fit.n_iters),
                seed: seed.unwrap_or(cfg.fit.seed),
                jobs,
            };
            if fc.n_trials == 0 {
                return Err(Error::Config("--trials must be positive".into()));
            }
            info!("fitting {} trials x {} sweeps on {} utterances", fc.n_trials, fc.n_iters, c.utterances.len());
            let features: Vec<_> = c.utterances.iter().map(|u| u.features.clone()).collect();
            let report = fit(&features, &cfg.hdphlm, &fc)?;
            let dir = ctx.out(out, "fit")?;
            for t in 0..fc.n_trials.max(report.trials.len()) {
                let p = dir.join(trial_dir_name(t));
                if p.exists() {
                    fs::remove_dir_all(&p).map_err(|e| Error::io(&p, e))?;
                }
            }
            let ids: Vec<String> = c.utterances.iter().map(|u| u.id.clone()).collect();
            report.write_to_dir(&dir, &ids)?;
            let mut inputs = BTreeMap::from([("corpus".to_string(), upstream)]);
            inputs.insert(
                "fit".to_string(),
                format!("trials={} iters={} seed={}", fc.n_trials, fc.n_iters, fc.seed),
            );
            write_stage(&dir, "fit", &ctx.config_sha, inputs)?;
            info!("MAP trial {}", report.map_trial);
        }
        Command::Evaluate {
            variants,
            per_speaker,
            fits,
            truth,
            out,
        } => {
            if variants.is_empty() && per_speaker.is_empty() && fits.is_empty() {
                return Err(Error::Config("nothing to evaluate: give --variant, --per-speaker-variant or --fit".into()));
            }
            let dir = ctx.out(out, "eval")?;
            let mut inputs = BTreeMap::new();
            let mut table1 = Vec::new();
            for (spec, split) in variants.iter().map(|v| (v, false)).chain(per_speaker.iter().map(|v| (v, true))) {
                let (name, path) = parse_pair(spec)?;
                let path = PathBuf::from(path);
                inputs.insert(format!("variant:{name}"), verify_stage(&path)?);
                let c = load_corpus_dir(&path)?;
                let features = c.utterances.iter().map(|u| u.features.clone()).collect();
                table1.push((c, FeatureVariant { name, features, per_speaker: split }));
            }
            let mut rows1 = Vec::new();
            for (c, v) in &table1 {
                rows1.extend(experiment1_report(c, std::slice::from_ref(v), &cfg.eval.methods, cfg.eval.k, cfg.eval.trials, cfg.eval.seed)?);
            }
            if !rows1.is_empty() {
                write_report_csv(&dir.join("table1.csv"), &rows1)?;
            }
            if !fits.is_empty() {
                let truth_dir = truth;
                let mut groups: Vec<(String, Vec<(PathBuf, PathBuf)>)> = Vec::new();
                for spec in &fits {
                    let (name, rest) = parse_pair(spec)?;
                    let (fit_dir, corpus_dir) = rest
                        .split_once(':')
                        .map(|(a, b)| (PathBuf::from(a), PathBuf::from(b)))
                        .ok_or_else(|| Error::Config(format!("expected NAME=FIT_DIR:CORPUS_DIR, got '{spec}'")))?;
                    match groups.iter_mut().find(|g| g.0 == name) {
                        Some(g) => g.1.push((fit_dir, corpus_dir)),
                        None => groups.push((name, vec![(fit_dir, corpus_dir)])),
                    }
                }
                let truth_dir = truth_dir.unwrap_or_else(|| groups[0].1[0].1.clone());
                inputs.insert("truth".to_string(), verify_stage(&truth_dir)?);
                let truth_corpus = load_corpus_dir(&truth_dir)?;
                let mut methods = Vec::new();
                for (name, parts) in groups {
                    let mut runs = Vec::new();
                    for (i, (fit_dir, corpus_dir)) in parts.iter().enumerate() {
                        inputs.insert(format!("fit:{name}:{i}"), verify_stage(fit_dir)?);
                        inputs.insert(format!("fit-corpus:{name}:{i}"), verify_stage(corpus_dir)?);
                        let c = load_corpus_dir(corpus_dir)?;
                        runs.push(load_fit_run(fit_dir, &c, &truth_corpus)?);
                    }
                    methods.push((name, runs));
                }
                let rows = experiment2_report(&truth_corpus, &methods)?;
                write_report_csv(&dir.join("table2.csv"), &rows)?;
            }
            write_stage(&dir, "evaluate", &ctx.config_sha, inputs)?;
        }
        Command::Plot { corpus, out, title } => {
            let upstream = verify_stage(&corpus)?;
            let c = load_corpus_dir(&corpus)?;
            let features: Vec<_> = c.utterances.iter().map(|u| u.features.clone()).collect();
            let svg = corpus_scatter(&c, &features, cfg.eval.plot_points, &title)?;
            let dir = ctx.out(out, "plot")?;
            let path = dir.join("scatter.svg");
            fs::write(&path, svg).map_err(|e| Error::io(&path, e))?;
            write_stage(&dir, "plot", &ctx.config_sha, BTreeMap::from([("corpus".to_string(), upstream)]))?;
        }
    }
    Ok(())
}

/// Reads the per-trial frame labels of a fit directory. Utterances are
/// matched to `truth` by id; failed trials are skipped.
fn load_fit_run(fit_dir: &Path, corpus: &Corpus, truth: &Corpus) -> Result<FitRun> {
    let summary = FitSummary::load(&fit_dir.join("fit.json"))?;
    let index: BTreeMap<&str, usize> = truth.utterances.iter().enumerate().map(|(i, u)| (u.id.as_str(), i)).collect();
    let utterances = corpus
        .utterances
        .iter()
        .map(|u| {
            index
                .get(u.id.as_str())
                .copied()
                .ok_or_else(|| Error::invalid(format!("utterance {} is missing from the truth corpus", u.id)))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut trials = Vec::new();
    let mut map_trial = None;
    for t in &summary.trials {
        let Some(ll) = t.final_log_likelihood else { continue };
        if t.trial == summary.map_trial {
            map_trial = Some(trials.len());
        }
        let labels = fit_dir.join(trial_dir_name(t.trial)).join("labels");
        let mut letters = Vec::new();
        let mut words = Vec::new();
        for u in &corpus.utterances {
            let (l, w) = read_frame_labels(&labels.join(format!("{}.csv", u.id)))?;
            if l.len() != u.len() {
                return Err(Error::Dimension { expected: u.len(), got: l.len() });
            }
            letters.push(l);
            words.push(w);
        }
        trials.push(TrialLabels { log_likelihood: ll, letters, words });
    }
    let map_trial =
        map_trial.ok_or_else(|| Error::invalid(format!("{}: the MAP trial has no labels", fit_dir.display())))?;
    Ok(FitRun { utterances, trials, map_trial })
}

/// Parses arguments, runs one subcommand and returns the process exit code:
/// 0 on success, 1 for usage or configuration errors, 2 for data errors.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .target(env_logger::Target::Stderr)
        .try_init();
    let cfg = match &cli.config {
        Some(p) => RunConfig::load(p),
        None => Err(Error::Config("--config is required".into())),
    };
    let result = cfg.and_then(|cfg| {
        let config_sha = hex::encode(Sha256::digest(cfg.to_toml().as_bytes()));
        run_command(&Ctx { cfg, config_sha }, cli.command)
    });
    match result {
        Ok(()) => 0,
        Err(e) => {
            log::error!("{e}");
            match e {
                Error::Config(_) => 1,
                _ => 2,
            }
        }
    }
}

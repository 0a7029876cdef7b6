//! The pipeline stages behind each subcommand. Every stage reads persisted
//! artifacts, writes its own outputs and appends one ledger entry in the
//! dataset directory.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ffm_core::crossing::{crossing_rate, CrossingReport};
use ffm_core::ffm::{
    ablation_domain, evaluate_checkpoint, sample_images, train as train_net, Checkpoint, DomainAblation, TrainLog,
};
use ffm_core::image::with_suffix;
use ffm_core::metrics::{csv_header, evaluate_split, AggregateReport};
use ffm_core::phantom::{build_dataset, image_base, DatasetManifest, SampleEntry, Split, IMAGE_EXTENSIONS, MANIFEST_FILE};
use ffm_core::purify::{
    default_psp_patch, make_training_pairs, psp_filter, purify_pair, Combination, PurifiedPair, PurifyConfig,
    TrainingPair,
};
use ffm_core::{BinaryMask, ImageGrid};
use serde::{Deserialize, Serialize};

use crate::config::{stage_seed, ExperimentConfig};
use crate::error::{io_error, CliError};
use crate::ledger::{Artifact, RunLedger, StageRecord, Started, Status};

pub const PURIFIED_MANIFEST: &str = "purified.json";
pub const PSP_REPORT: &str = "psp.json";
pub const DENOISED_MANIFEST: &str = "denoised.json";

type Named = Vec<(String, ImageGrid)>;

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    }
    fs::write(path, text).map_err(|e| io_error(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Runtime(e.to_string()))?;
    text.push('\n');
    write_text(path, &text)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

/// Runs `body` and records it in the ledger, failed or not.
fn staged<T>(
    ledger: &mut RunLedger,
    record: StageRecord,
    body: impl FnOnce(&RunLedger) -> Result<(T, Vec<Artifact>), CliError>,
) -> Result<T, CliError> {
    ledger.check_inputs(&record.inputs)?;
    let started = Started::now();
    match body(ledger) {
        Ok((value, outputs)) => {
            ledger.append(StageRecord { outputs, ..record }, Status::Ok, started)?;
            Ok(value)
        }
        Err(e) => {
            let failed = record.param("error", &e);
            ledger.append(failed, Status::Failed, started)?;
            Err(e)
        }
    }
}

/// A manifest on disk plus the directory its paths are relative to.
pub struct Dataset {
    pub root: PathBuf,
    pub manifest_path: PathBuf,
    pub manifest: DatasetManifest,
}

impl Dataset {
    pub fn open(manifest_path: &Path) -> Result<Self, CliError> {
        if !manifest_path.is_file() {
            return Err(CliError::Validation(format!("manifest {} not found", manifest_path.display())));
        }
        let manifest = DatasetManifest::load(manifest_path).map_err(|e| match e {
            ffm_core::Error::Json { .. } => CliError::Validation(e.to_string()),
            other => other.into(),
        })?;
        let root = manifest_path.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf);
        Ok(Self {
            root,
            manifest_path: manifest_path.to_path_buf(),
            manifest,
        })
    }

    pub fn image(&self, rel: &str) -> Result<ImageGrid, CliError> {
        Ok(ImageGrid::load(&image_base(&self.root, rel))?)
    }

    pub fn entries(&self, split: Option<Split>) -> Vec<&SampleEntry> {
        self.manifest.samples.iter().filter(|s| split.is_none_or(|sp| s.split == sp)).collect()
    }

    fn image_files(&self) -> Vec<PathBuf> {
        let mut files = Vec::new();
        for s in &self.manifest.samples {
            let rels = [Some(&s.ndct), Some(&s.uldct), s.ip_uldct.as_ref(), s.ip_ndct.as_ref(), s.cm.as_ref()];
            for rel in rels.into_iter().flatten() {
                for ext in IMAGE_EXTENSIONS {
                    files.push(with_suffix(&image_base(&self.root, rel), ext));
                }
            }
        }
        files
    }

    fn artifacts(&self, ledger: &RunLedger) -> Result<Vec<Artifact>, CliError> {
        let manifest = ledger.file_artifact(&self.manifest_path)?;
        let images = ledger.set_artifact(&format!("{}#images", manifest.path), &self.image_files())?;
        Ok(vec![manifest, images])
    }

    fn is_purified(&self) -> bool {
        self.manifest.purification.is_some()
            && self.manifest.samples.iter().all(|s| s.ip_uldct.is_some() && s.ip_ndct.is_some() && s.cm.is_some())
    }

    /// Purification settings: those recorded in the manifest, else the
    /// configured ones, with `t` overridden when given.
    pub fn purify_config(&self, cfg: &ExperimentConfig, t: Option<f64>) -> PurifyConfig {
        let mut p = self.manifest.purification.clone().unwrap_or_else(|| cfg.purify.clone());
        if let Some(t) = t {
            p.t = t;
        }
        p
    }

    /// Purified pairs of a split. Stored files are used when they were
    /// written with the same settings; otherwise the pairs are recomputed.
    pub fn purified(&self, split: Option<Split>, p: &PurifyConfig) -> Result<Vec<(String, PurifiedPair)>, CliError> {
        let stored = self.is_purified() && self.manifest.purification.as_ref() == Some(p);
        self.entries(split)
            .into_iter()
            .map(|s| {
                let ndct = self.image(&s.ndct)?;
                let uldct = self.image(&s.uldct)?;
                let pair = match (stored, &s.ip_uldct, &s.ip_ndct, &s.cm) {
                    (true, Some(iu), Some(inn), Some(cm)) => PurifiedPair {
                        ip_uldct: self.image(iu)?,
                        ip_ndct: self.image(inn)?,
                        cm: BinaryMask::from_image(&self.image(cm)?),
                        ndct,
                        uldct,
                        t_param: p.t,
                    },
                    _ => purify_pair(&ndct, &uldct, p).map_err(|e| CliError::from(e).context(&s.id))?,
                };
                Ok((s.id.clone(), pair))
            })
            .collect()
    }

    /// `(uLDCT inputs, IP(NDCT) labels)` of a split.
    pub fn evaluation_set(&self, split: Split, p: &PurifyConfig) -> Result<(Named, Named), CliError> {
        let pairs = self.purified(Some(split), p)?;
        if pairs.is_empty() {
            return Err(CliError::Validation(format!("split {} is empty", split.as_str())));
        }
        Ok(pairs
            .into_iter()
            .map(|(id, p)| ((id.clone(), p.uldct), (id, p.ip_ndct)))
            .unzip())
    }
}

// ---------------------------------------------------------------------------
// generate
// ---------------------------------------------------------------------------

/// Builds the synthetic dataset in `out`; returns the manifest path.
pub fn generate(cfg: &ExperimentConfig, out: &Path, force: bool) -> Result<PathBuf, CliError> {
    let manifest_path = out.join(MANIFEST_FILE);
    if manifest_path.exists() && !force {
        return Err(CliError::Validation(format!(
            "{} already exists; pass --force to overwrite",
            manifest_path.display()
        )));
    }
    if out.exists() && !out.is_dir() {
        return Err(CliError::Validation(format!("{} is not a directory", out.display())));
    }
    let dataset = cfg.dataset();
    dataset.validate()?;
    fs::create_dir_all(out).map_err(|e| io_error(out, e))?;
    let mut ledger = RunLedger::open(out)?;
    let record = StageRecord::new("generate")
        .param("count", dataset.count)
        .param("size", dataset.size)
        .param("seed", dataset.seed);
    staged(&mut ledger, record, |l| {
        build_dataset(&dataset, out)?;
        let ds = Dataset::open(&manifest_path)?;
        Ok((manifest_path.clone(), ds.artifacts(l)?))
    })
}

// ---------------------------------------------------------------------------
// purify
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Default)]
pub struct PurifyOptions {
    pub t: Option<f64>,
    pub combination: Option<Combination>,
    /// Presmoothing of the uLDCT before thresholding.
    pub presmooth_sigma: Option<f64>,
    /// Opening/closing of the uLDCT mask.
    pub morph: Option<bool>,
    pub psp_threshold: Option<f64>,
}

/// Mean PSP keep ratios of raw and purified pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PspSummary {
    pub threshold: f64,
    pub patch: usize,
    pub samples: usize,
    pub raw_keep_ratio: f64,
    pub ip_keep_ratio: f64,
}

pub struct PurifyOutcome {
    pub manifest: PathBuf,
    pub psp: PspSummary,
}

/// Writes `ip_uldct`, `ip_ndct` and `cm` images beside every sample, an
/// augmented manifest and the PSP keep-ratio summary.
pub fn purify(cfg: &ExperimentConfig, manifest: &Path, opts: &PurifyOptions) -> Result<PurifyOutcome, CliError> {
    let ds = Dataset::open(manifest)?;
    let mut p = cfg.purify.clone();
    if let Some(t) = opts.t {
        p.t = t;
    }
    if let Some(c) = opts.combination {
        p.combination = c;
    }
    if let Some(s) = opts.presmooth_sigma {
        p.uldct_mask.presmooth_sigma = s;
    }
    if let Some(m) = opts.morph {
        p.uldct_mask.morph = m;
    }
    if let Some(th) = opts.psp_threshold {
        p.psp_threshold = th;
    }
    p.validate()?;
    let patch = p.psp_patch.unwrap_or_else(|| default_psp_patch(ds.manifest.config.size));

    let mut ledger = RunLedger::open(&ds.root)?;
    let record = StageRecord {
        inputs: ds.artifacts(&ledger)?,
        ..StageRecord::new("purify")
            .param("t", p.t)
            .param("combination", p.combination.as_str())
            .param("psp_threshold", p.psp_threshold)
    };
    staged(&mut ledger, record, |l| {
        let mut out = ds.manifest.clone();
        let (mut raw_keep, mut ip_keep) = (0.0, 0.0);
        for s in &mut out.samples {
            let ndct = ds.image(&s.ndct)?;
            let uldct = ds.image(&s.uldct)?;
            let pair = purify_pair(&ndct, &uldct, &p).map_err(|e| CliError::from(e).context(&s.id))?;
            let rel = |role: &str| format!("samples/{}_{role}", s.id);
            let (iu, inn, cm) = (rel("ip_uldct"), rel("ip_ndct"), rel("cm"));
            pair.ip_uldct.save(&image_base(&ds.root, &iu), "ip_uldct")?;
            pair.ip_ndct.save(&image_base(&ds.root, &inn), "ip_ndct")?;
            pair.cm.to_image().save(&image_base(&ds.root, &cm), "cm")?;
            raw_keep += psp_filter(&ndct, &uldct, patch, p.psp_threshold)?.keep_ratio;
            ip_keep += psp_filter(&ndct, &pair.ip_uldct, patch, p.psp_threshold)?.keep_ratio;
            s.ip_uldct = Some(iu);
            s.ip_ndct = Some(inn);
            s.cm = Some(cm);
        }
        out.purification = Some(p.clone());
        let path = ds.root.join(PURIFIED_MANIFEST);
        out.save(&path)?;
        let n = out.samples.len();
        let psp = PspSummary {
            threshold: p.psp_threshold,
            patch,
            samples: n,
            raw_keep_ratio: raw_keep / n as f64,
            ip_keep_ratio: ip_keep / n as f64,
        };
        let psp_path = ds.root.join(PSP_REPORT);
        write_json(&psp_path, &psp)?;
        let purified = Dataset::open(&path)?;
        let mut outputs = purified.artifacts(l)?;
        outputs.push(l.file_artifact(&psp_path)?);
        Ok((PurifyOutcome { manifest: path, psp }, outputs))
    })
}

// ---------------------------------------------------------------------------
// analyze-crossing
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossingSummary {
    pub raw: CrossingReport,
    pub ip: CrossingReport,
}

impl CrossingSummary {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("set,p,crossings,examined,rate\n");
        for (name, r) in [("raw", &self.raw), ("ip", &self.ip)] {
            for b in &r.breakdown {
                s.push_str(&format!("{name},{:.2},{},{},{:.6}\n", b.p, b.crossings, r.examined, b.rate));
            }
        }
        s
    }
}

pub struct CrossingOutcome {
    pub summary: CrossingSummary,
    pub json: PathBuf,
    pub csv: PathBuf,
}

/// Crossing rates of the raw `(NDCT, uLDCT)` and purified
/// `(NDCT, IP(uLDCT))` pair sets over the whole manifest.
pub fn analyze_crossing(cfg: &ExperimentConfig, manifest: &Path, out_dir: &Path, p: Option<f64>) -> Result<CrossingOutcome, CliError> {
    let ds = Dataset::open(manifest)?;
    let mut ccfg = cfg.crossing();
    if let Some(p) = p {
        ccfg.p = p;
    }
    ccfg.validate()?;
    let pcfg = ds.purify_config(cfg, None);
    let mut ledger = RunLedger::open(&ds.root)?;
    let record = StageRecord {
        inputs: ds.artifacts(&ledger)?,
        ..StageRecord::new("analyze-crossing").param("p", ccfg.p)
    };
    staged(&mut ledger, record, |l| {
        let pairs = ds.purified(None, &pcfg)?;
        let raw: Vec<_> = pairs.iter().map(|(_, p)| (p.ndct.clone(), p.uldct.clone())).collect();
        let ip: Vec<_> = pairs.iter().map(|(_, p)| (p.ndct.clone(), p.ip_uldct.clone())).collect();
        let summary = CrossingSummary {
            raw: crossing_rate(&raw, &ccfg)?,
            ip: crossing_rate(&ip, &ccfg)?,
        };
        let (json, csv) = (out_dir.join("crossing.json"), out_dir.join("crossing.csv"));
        write_json(&json, &summary)?;
        write_text(&csv, &summary.to_csv())?;
        let outputs = vec![l.file_artifact(&json)?, l.file_artifact(&csv)?];
        Ok((CrossingOutcome { summary, json, csv }, outputs))
    })
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Default)]
pub struct TrainOptions {
    pub combination: Option<Combination>,
    pub t_param: Option<f64>,
    pub frequency: Option<bool>,
    pub epochs: Option<usize>,
    pub steps_per_epoch: Option<usize>,
    /// Replaces the global seed for this stage.
    pub seed: Option<u64>,
}

pub struct TrainOutcome {
    pub checkpoint: PathBuf,
    pub loss_csv: PathBuf,
    pub log: TrainLog,
    pub seconds: f64,
}

#[derive(Serialize)]
struct TrainSummary<'a> {
    combination: &'a str,
    t: f64,
    pairs: usize,
    steps: usize,
    final_loss: Option<f64>,
    tail_loss: Option<f64>,
    seconds: f64,
    model: &'a ffm_core::ffm::VelocityNetConfig,
    train: &'a ffm_core::ffm::TrainConfig,
}

fn training_pairs(
    ds: &Dataset,
    p: &PurifyConfig,
    combination: Combination,
) -> Result<Vec<TrainingPair>, CliError> {
    let purified: Vec<PurifiedPair> = ds.purified(Some(Split::Train), p)?.into_iter().map(|(_, p)| p).collect();
    if purified.is_empty() {
        return Err(CliError::Validation("train split is empty".into()));
    }
    Ok(make_training_pairs(&purified, combination))
}

fn check_t(t: f64) -> Result<(), CliError> {
    if (0.0..=1.0).contains(&t) {
        Ok(())
    } else {
        Err(CliError::Validation(format!("T = {t} outside [0, 1]")))
    }
}

/// Trains on the train split; writes `model.ckpt`, `loss.csv` and
/// `train.json` into `out_dir`.
pub fn train(cfg: &ExperimentConfig, manifest: &Path, out_dir: &Path, opts: &TrainOptions) -> Result<TrainOutcome, CliError> {
    let ds = Dataset::open(manifest)?;
    if let Some(t) = opts.t_param {
        check_t(t)?;
    }
    let p = ds.purify_config(cfg, opts.t_param);
    let combination = opts.combination.unwrap_or(p.combination);
    let seed = opts.seed.unwrap_or(cfg.seed);
    let mut net_cfg = cfg.model();
    net_cfg.seed = stage_seed(seed, "model");
    if let Some(f) = opts.frequency {
        net_cfg.frequency_module = f;
    }
    let mut tcfg = cfg.train();
    tcfg.seed = stage_seed(seed, "train");
    if let Some(e) = opts.epochs {
        tcfg.epochs = e;
    }
    if let Some(s) = opts.steps_per_epoch {
        tcfg.steps_per_epoch = s;
    }
    tcfg.validate()?;
    net_cfg.validate()?;

    let mut ledger = RunLedger::open(&ds.root)?;
    let record = StageRecord {
        inputs: ds.artifacts(&ledger)?,
        ..StageRecord::new("train")
            .param("t", p.t)
            .param("combination", combination.as_str())
            .param("frequency_module", net_cfg.frequency_module)
            .param("steps", tcfg.total_steps())
    };
    staged(&mut ledger, record, |l| {
        let pairs = training_pairs(&ds, &p, combination)?;
        let clock = Instant::now();
        let (ckpt, log) = train_net(&pairs, &tcfg, &net_cfg)?;
        let seconds = clock.elapsed().as_secs_f64();
        fs::create_dir_all(out_dir).map_err(|e| io_error(out_dir, e))?;
        let checkpoint = out_dir.join("model.ckpt");
        ckpt.save(&checkpoint)?;
        let loss_csv = out_dir.join("loss.csv");
        write_text(&loss_csv, &log.to_csv())?;
        write_json(
            &out_dir.join("train.json"),
            &TrainSummary {
                combination: combination.as_str(),
                t: p.t,
                pairs: pairs.len(),
                steps: log.records.len(),
                final_loss: log.final_loss(),
                tail_loss: log.tail_mean(50),
                seconds,
                model: &net_cfg,
                train: &tcfg,
            },
        )?;
        let outputs = vec![l.file_artifact(&checkpoint)?, l.file_artifact(&loss_csv)?];
        Ok((
            TrainOutcome {
                checkpoint,
                loss_csv,
                log,
                seconds,
            },
            outputs,
        ))
    })
}

// ---------------------------------------------------------------------------
// sample
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DenoisedEntry {
    pub id: String,
    pub path: String,
}

/// Index of a directory of denoised images.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DenoisedManifest {
    pub checkpoint_sha256: String,
    pub split: Split,
    pub num_steps: usize,
    pub samples: Vec<DenoisedEntry>,
}

/// Denoises the uLDCT images of a split; returns the path of the
/// `denoised.json` index.
pub fn sample(
    cfg: &ExperimentConfig,
    checkpoint: &Path,
    manifest: &Path,
    out_dir: &Path,
    split: Option<Split>,
    steps: Option<usize>,
) -> Result<PathBuf, CliError> {
    let ds = Dataset::open(manifest)?;
    let split = split.unwrap_or(cfg.evaluate.split);
    let mut scfg = cfg.sample.clone();
    if let Some(s) = steps {
        scfg.num_steps = s;
    }
    scfg.validate()?;
    if !checkpoint.is_file() {
        return Err(CliError::Validation(format!("checkpoint {} not found", checkpoint.display())));
    }
    let mut ledger = RunLedger::open(&ds.root)?;
    let mut inputs = ds.artifacts(&ledger)?;
    inputs.push(ledger.file_artifact(checkpoint)?);
    let record = StageRecord {
        inputs,
        ..StageRecord::new("sample")
            .param("split", split.as_str())
            .param("num_steps", scfg.num_steps)
    };
    staged(&mut ledger, record, |l| {
        let ckpt = Checkpoint::load(checkpoint)?;
        let entries = ds.entries(Some(split));
        if entries.is_empty() {
            return Err(CliError::Validation(format!("split {} is empty", split.as_str())));
        }
        let images = entries.iter().map(|s| ds.image(&s.uldct)).collect::<Result<Vec<_>, _>>()?;
        let denoised = sample_images(&ckpt.net, &images, &scfg)?;
        let mut listing = Vec::with_capacity(entries.len());
        let mut files = Vec::new();
        for (s, img) in entries.iter().zip(&denoised) {
            let rel = format!("samples/{}_denoised", s.id);
            let base = out_dir.join(&rel);
            img.save(&base, "denoised")?;
            files.extend(IMAGE_EXTENSIONS.iter().map(|ext| with_suffix(&base, ext)));
            listing.push(DenoisedEntry {
                id: s.id.clone(),
                path: rel,
            });
        }
        let index = out_dir.join(DENOISED_MANIFEST);
        write_json(
            &index,
            &DenoisedManifest {
                checkpoint_sha256: crate::ledger::hash_file(checkpoint)?,
                split,
                num_steps: scfg.num_steps,
                samples: listing,
            },
        )?;
        let outputs = vec![l.file_artifact(&index)?, l.set_artifact(&format!("{}#images", l.relative(&index)), &files)?];
        Ok((index, outputs))
    })
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub split: Split,
    pub baseline: AggregateReport,
    pub method_name: String,
    pub method: AggregateReport,
}

impl EvaluationReport {
    /// Method rows with `mean±std` cells: the uLDCT baseline, then the
    /// denoiser.
    pub fn to_csv(&self) -> String {
        format!(
            "{}\n{}\n{}\n",
            csv_header("Method"),
            self.baseline.csv_row("uLDCT"),
            self.method.csv_row(&self.method_name)
        )
    }
}

pub struct EvaluateOutcome {
    pub csv: PathBuf,
    pub report: EvaluationReport,
}

/// Scores denoised images, and the raw uLDCT as a baseline, against
/// IP(NDCT). Writes the CSV to `out` and per-image values beside it.
pub fn evaluate(
    cfg: &ExperimentConfig,
    manifest: &Path,
    denoised_dir: &Path,
    out: &Path,
    method: Option<&str>,
) -> Result<EvaluateOutcome, CliError> {
    let ds = Dataset::open(manifest)?;
    let method_name = method.unwrap_or(&cfg.evaluate.method).to_string();
    if method_name.is_empty() || method_name.contains([',', '\n']) {
        return Err(CliError::Validation(format!("method label {method_name:?} is not CSV-safe")));
    }
    let index_path = denoised_dir.join(DENOISED_MANIFEST);
    if !index_path.is_file() {
        return Err(CliError::Validation(format!("{} not found", index_path.display())));
    }
    let index: DenoisedManifest = read_json(&index_path)?;
    let p = ds.purify_config(cfg, None);
    let mut ledger = RunLedger::open(&ds.root)?;
    let mut inputs = ds.artifacts(&ledger)?;
    inputs.push(ledger.file_artifact(&index_path)?);
    let record = StageRecord {
        inputs,
        ..StageRecord::new("evaluate").param("split", index.split.as_str())
    };
    staged(&mut ledger, record, |l| {
        let (raw, labels) = ds.evaluation_set(index.split, &p)?;
        let listed: Vec<&str> = index.samples.iter().map(|e| e.id.as_str()).collect();
        let expected: Vec<&str> = labels.iter().map(|(id, _)| id.as_str()).collect();
        if listed != expected {
            return Err(CliError::Validation(format!(
                "{} lists {} images that do not match split {} of the manifest",
                index_path.display(),
                listed.len(),
                index.split.as_str()
            )));
        }
        let denoised = index
            .samples
            .iter()
            .map(|e| Ok((e.id.clone(), ImageGrid::load(&denoised_dir.join(&e.path))?)))
            .collect::<Result<Named, CliError>>()?;
        let report = EvaluationReport {
            split: index.split,
            baseline: evaluate_split(&raw, &labels)?,
            method_name: method_name.clone(),
            method: evaluate_split(&denoised, &labels)?,
        };
        write_text(out, &report.to_csv())?;
        write_json(&with_suffix(out, "json"), &report)?;
        let outputs = vec![l.file_artifact(out)?];
        Ok((EvaluateOutcome { csv: out.to_path_buf(), report }, outputs))
    })
}

// ---------------------------------------------------------------------------
// ablations
// ---------------------------------------------------------------------------

/// `0.0, 0.1, ..., 0.5`.
pub fn default_t_list() -> Vec<f64> {
    (0..=5).map(|k| f64::from(k) / 10.0).collect()
}

pub fn validate_t_list(ts: &[f64]) -> Result<(), CliError> {
    if ts.is_empty() {
        return Err(CliError::Validation("empty T list".into()));
    }
    let mut seen = HashSet::new();
    for &t in ts {
        check_t(t)?;
        if !seen.insert(t.to_bits()) {
            return Err(CliError::Validation(format!("duplicate T value {t:?}")));
        }
    }
    Ok(())
}

pub struct AblateTOutcome {
    pub csv: PathBuf,
    pub rows: Vec<(f64, AggregateReport)>,
}

pub fn t_ablation_csv(rows: &[(f64, AggregateReport)]) -> String {
    let mut s = csv_header("T");
    s.push('\n');
    for (t, r) in rows {
        s.push_str(&r.csv_row(&format!("{t:?}")));
        s.push('\n');
    }
    s
}

/// One full train + sample + evaluate per T. Each training run is a
/// ledger entry of its own.
pub fn ablate_t(cfg: &ExperimentConfig, manifest: &Path, out_dir: &Path, ts: &[f64]) -> Result<AblateTOutcome, CliError> {
    validate_t_list(ts)?;
    let ds = Dataset::open(manifest)?;
    let (tcfg, net_cfg) = (cfg.train(), cfg.model());
    let split = cfg.evaluate.split;
    let mut ledger = RunLedger::open(&ds.root)?;
    let inputs = ds.artifacts(&ledger)?;
    let base = ds.purify_config(cfg, None);
    let (test_inputs, test_labels) = ds.evaluation_set(split, &base)?;
    let mut rows = Vec::with_capacity(ts.len());
    let mut outputs = Vec::new();
    for &t in ts {
        let p = ds.purify_config(cfg, Some(t));
        let record = StageRecord {
            inputs: inputs.clone(),
            ..StageRecord::new("train")
                .param("t", t)
                .param("combination", p.combination.as_str())
                .param("ablation", "T")
        };
        let dir = out_dir.join(format!("t_{t:?}"));
        let (report, artifacts) = staged(&mut ledger, record, |l| {
            let run = || -> Result<_, CliError> {
                let pairs = training_pairs(&ds, &p, p.combination)?;
                let (ckpt, log) = train_net(&pairs, &tcfg, &net_cfg)?;
                fs::create_dir_all(&dir).map_err(|e| io_error(&dir, e))?;
                ckpt.save(&dir.join("model.ckpt"))?;
                write_text(&dir.join("loss.csv"), &log.to_csv())?;
                let report = evaluate_checkpoint(&ckpt, &test_inputs, &test_labels, &cfg.sample)?;
                Ok(report)
            };
            let report = run().map_err(|e| e.context(format!("T = {t:?}")))?;
            let arts = vec![l.file_artifact(&dir.join("model.ckpt"))?, l.file_artifact(&dir.join("loss.csv"))?];
            Ok(((report, arts.clone()), arts))
        })?;
        outputs.extend(artifacts);
        rows.push((t, report));
    }
    let csv = out_dir.join("ablate_t.csv");
    let record = StageRecord {
        inputs,
        outputs: Vec::new(),
        ..StageRecord::new("ablate-t").param("t_list", format!("{ts:?}"))
    };
    let text = t_ablation_csv(&rows);
    staged(&mut ledger, record, |l| {
        write_text(&csv, &text)?;
        outputs.push(l.file_artifact(&csv)?);
        Ok(((), outputs))
    })?;
    Ok(AblateTOutcome { csv, rows })
}

pub struct AblateDomainOutcome {
    pub csv: PathBuf,
    pub ablation: DomainAblation,
}

/// Trains the network with and without frequency modules under identical
/// seeds and data order; writes `domain.csv` plus both loss curves.
pub fn ablate_domain(cfg: &ExperimentConfig, manifest: &Path, out_dir: &Path) -> Result<AblateDomainOutcome, CliError> {
    let ds = Dataset::open(manifest)?;
    let p = ds.purify_config(cfg, None);
    let (tcfg, net_cfg) = (cfg.train(), cfg.model());
    let mut ledger = RunLedger::open(&ds.root)?;
    let record = StageRecord {
        inputs: ds.artifacts(&ledger)?,
        ..StageRecord::new("ablate-domain")
            .param("t", p.t)
            .param("combination", p.combination.as_str())
    };
    staged(&mut ledger, record, |l| {
        let pairs = training_pairs(&ds, &p, p.combination)?;
        let (test_inputs, test_labels) = ds.evaluation_set(cfg.evaluate.split, &p)?;
        let ablation = ablation_domain(&pairs, &test_inputs, &test_labels, &tcfg, &net_cfg, &cfg.sample)?;
        let csv = out_dir.join("domain.csv");
        write_text(&csv, &ablation.to_csv())?;
        write_text(&out_dir.join("loss_frequency.csv"), &ablation.frequency_log.to_csv())?;
        write_text(&out_dir.join("loss_image.csv"), &ablation.image_log.to_csv())?;
        let outputs = vec![l.file_artifact(&csv)?];
        Ok((AblateDomainOutcome { csv, ablation }, outputs))
    })
}

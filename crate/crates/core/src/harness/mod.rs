//! Experiment driver for the seven ablation networks.
//!
//! A run goes load -> split -> normalize -> (augment) -> (train MDAEs) ->
//! assemble features -> train MLP -> classify every pixel -> raw OA ->
//! hole filling -> morph OA. Accuracy is computed on labeled test pixels only.

mod config;
mod metrics;
mod pipeline;

pub use config::{ExperimentConfig, NetworkFlags, SplitConfig, SplitCounts, NETWORK7_P};
pub use metrics::{confusion_matrix, overall_accuracy, ConfusionMatrix};
pub use pipeline::{TrainedPipeline, MLP_FILE, PIPELINE_FILE};

use std::collections::BTreeMap;
use std::fs;
use std::io::BufWriter;
use std::path::Path;
use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::augment::{build_augmented_set, write_audit_csv, AugmentedSample};
use crate::classifier::{init_network, train, EpochStats, MlpTopology};
use crate::datacube::{
    apply_normalizer, fit_normalizer, load_dataset, stratified_split, HsiCube, LabelMap, NormStats,
    SplitAssignment,
};
use crate::error::{HsiError, Result};
use crate::features::SpectralFeatures;
use crate::mdae::{train_all, MdaeModel};
use crate::postproc::{clean_map, write_pgm, write_ppm, ClassMap};

/// Environment variable capping worker threads; 0 or unset means serial.
pub const THREADS_ENV: &str = "HSI_THREADS";

const INIT_SEED_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

pub fn configured_threads() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or(1)
}

/// Runs `f` on a rayon pool sized by [`THREADS_ENV`].
pub fn with_thread_pool<R: Send>(f: impl FnOnce() -> R + Send) -> R {
    match rayon::ThreadPoolBuilder::new()
        .num_threads(configured_threads())
        .build()
    {
        Ok(pool) => pool.install(f),
        Err(_) => f(),
    }
}

/// Normalized dataset with its split, shared by every network of an ablation.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub cube: HsiCube,
    pub labels: LabelMap,
    pub split: SplitAssignment,
    pub norm: NormStats,
    pub train_spectra: DMatrix<f64>,
    pub train_labels: Vec<u16>,
}

impl Prepared {
    /// Splits and normalizes an in-memory raw cube.
    pub fn new(raw: &HsiCube, labels: LabelMap, split: &SplitConfig) -> Result<Self> {
        if raw.rows() != labels.rows() || raw.cols() != labels.cols() {
            return Err(HsiError::DimensionMismatch(
                "cube and label map sizes differ".into(),
            )
            .at_stage("load"));
        }
        let labeled = labels.labeled_pixels().count();
        let split = split
            .resolve(labeled)
            .and_then(|fractions| stratified_split(&labels, fractions, split.seed))
            .map_err(|e| e.at_stage("split"))?;
        let norm = fit_normalizer(raw, &split.train).map_err(|e| e.at_stage("normalize"))?;
        let cube = apply_normalizer(raw, norm);
        let train_spectra = cube.spectra(&split.train)?;
        let train_labels = split.train.iter().map(|&p| labels.get(p)).collect();
        Ok(Self {
            cube,
            labels,
            split,
            norm,
            train_spectra,
            train_labels,
        })
    }

    pub fn load(config: &ExperimentConfig) -> Result<Self> {
        if config.dataset.as_os_str().is_empty() {
            return Err(HsiError::InvalidConfig("no dataset path given".into()));
        }
        let (_, raw, labels) = load_dataset(&config.dataset).map_err(|e| e.at_stage("load"))?;
        Self::new(&raw, labels, &config.split)
    }

    pub fn n_classes(&self) -> usize {
        self.labels.n_classes()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Seeds {
    pub split: u64,
    pub mdae: u64,
    pub mix: u64,
    pub sgd: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub network_id: u8,
    pub raw_oa: f64,
    pub morph_oa: f64,
    pub per_class_raw: Vec<Option<f64>>,
    pub per_class_morph: Vec<Option<f64>>,
    pub confusion_raw: ConfusionMatrix,
    pub confusion_morph: ConfusionMatrix,
    /// Pixels relabeled by hole filling, per class.
    pub reassigned: Vec<usize>,
    pub n_train: usize,
    pub n_augmented: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub feature_dim: usize,
    pub epochs: Vec<EpochStats>,
    pub seeds: Seeds,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time_s: Option<f64>,
}

/// Artifacts shared between networks of one ablation.
#[derive(Default)]
pub struct SharedState {
    augmented: Option<Vec<AugmentedSample>>,
    /// Trained MDAE sets keyed by the bit pattern of `p`.
    models: BTreeMap<u64, Vec<MdaeModel>>,
}

fn augmented<'a>(
    shared: &'a mut SharedState,
    prepared: &Prepared,
    config: &ExperimentConfig,
) -> Result<&'a [AugmentedSample]> {
    if shared.augmented.is_none() {
        let set = build_augmented_set(&prepared.train_spectra, &prepared.train_labels, &config.mix)
            .map_err(|e| e.at_stage("augment"))?;
        log::info!("augmented set: {} mixed spectra", set.len());
        shared.augmented = Some(set);
    }
    Ok(shared.augmented.as_deref().unwrap_or_default())
}

fn stack_spectra(base: &DMatrix<f64>, extra: &[AugmentedSample]) -> DMatrix<f64> {
    let (bands, n) = base.shape();
    let mut out = DMatrix::zeros(bands, n + extra.len());
    out.columns_mut(0, n).copy_from(base);
    for (j, s) in extra.iter().enumerate() {
        out.column_mut(n + j).copy_from_slice(&s.spectrum);
    }
    out
}

/// Trains one network on prepared data. Returns the pipeline, the result
/// record and the raw and cleaned class maps.
pub fn run_network(
    prepared: &Prepared,
    config: &ExperimentConfig,
    shared: &mut SharedState,
) -> Result<(TrainedPipeline, ResultRecord, ClassMap, ClassMap)> {
    let started = Instant::now();
    let flags = config.flags()?;
    let n_classes = prepared.n_classes();
    let features = config.feature_config(n_classes)?;
    let mdae_params = config.effective_mdae()?;

    let extra: Vec<AugmentedSample> = if flags.augment || (flags.needs_mdae() && config.mdae_use_augmented) {
        augmented(shared, prepared, config)?.to_vec()
    } else {
        Vec::new()
    };
    let classifier_extra: &[AugmentedSample] = if flags.augment { &extra } else { &[] };

    let models = if flags.needs_mdae() {
        let key = mdae_params.p.to_bits();
        if let std::collections::btree_map::Entry::Vacant(slot) = shared.models.entry(key) {
            let (spectra, labels) = if config.mdae_use_augmented {
                let s = stack_spectra(&prepared.train_spectra, &extra);
                let mut l = prepared.train_labels.clone();
                l.extend(extra.iter().map(|s| s.label));
                (s, l)
            } else {
                (prepared.train_spectra.clone(), prepared.train_labels.clone())
            };
            let trained = train_all(&spectra, &labels, n_classes, &mdae_params)
                .map_err(|e| e.at_stage("mdae"))?;
            slot.insert(trained);
        }
        shared.models[&key].clone()
    } else {
        Vec::new()
    };

    let mut train_labels = prepared.train_labels.clone();
    train_labels.extend(classifier_extra.iter().map(|s| s.label));
    let train_source = SpectralFeatures::new(
        stack_spectra(&prepared.train_spectra, classifier_extra),
        &models,
        features,
    )
    .map_err(|e| e.at_stage("features"))?;
    let val_labels: Vec<u16> = prepared.split.val.iter().map(|&p| prepared.labels.get(p)).collect();
    let val_source = SpectralFeatures::new(prepared.cube.spectra(&prepared.split.val)?, &models, features)
        .map_err(|e| e.at_stage("features"))?;

    let feature_dim = features.dim(prepared.cube.bands());
    let topology = MlpTopology::new(feature_dim, config.hidden.clone(), n_classes);
    let mut net = init_network(&topology, config.sgd.seed ^ INIT_SEED_SALT).map_err(|e| e.at_stage("train"))?;
    let trace = train(
        &mut net,
        &train_source,
        &train_labels,
        &config.sgd,
        Some((&val_source, &val_labels)),
    )
    .map_err(|e| e.at_stage("train"))?;

    let pipeline = TrainedPipeline {
        network_id: config.network_id,
        bands: prepared.cube.bands(),
        norm: prepared.norm,
        features,
        models,
        net,
    };
    let pred = pipeline
        .classify_normalized(&prepared.cube)
        .map_err(|e| e.at_stage("predict"))?;
    let (rows, cols) = (prepared.cube.rows(), prepared.cube.cols());
    let raw_map = ClassMap::new(rows, cols, pred, n_classes).map_err(|e| e.at_stage("predict"))?;
    let (morph_map, reassigned) = clean_map(&raw_map);

    let truth = prepared.labels.labels();
    let test = &prepared.split.test;
    let eval = |map: &ClassMap| -> Result<(ConfusionMatrix, f64)> {
        let cm = confusion_matrix(&map.labels, truth, test, n_classes)?;
        let oa = overall_accuracy(&cm)?;
        Ok((cm, oa))
    };
    let (confusion_raw, raw_oa) = eval(&raw_map).map_err(|e| e.at_stage("evaluate"))?;
    let (confusion_morph, morph_oa) = eval(&morph_map).map_err(|e| e.at_stage("evaluate"))?;

    let record = ResultRecord {
        network_id: config.network_id,
        raw_oa,
        morph_oa,
        per_class_raw: confusion_raw.per_class_accuracy(),
        per_class_morph: confusion_morph.per_class_accuracy(),
        confusion_raw,
        confusion_morph,
        reassigned,
        n_train: prepared.split.train.len(),
        n_augmented: classifier_extra.len(),
        n_val: prepared.split.val.len(),
        n_test: test.len(),
        feature_dim,
        epochs: trace,
        seeds: Seeds {
            split: prepared.split.seed,
            mdae: mdae_params.seed,
            mix: config.mix.seed,
            sgd: config.sgd.seed,
        },
        wall_time_s: Some(started.elapsed().as_secs_f64()),
    };
    log::info!(
        "network {}: raw OA {:.2}%, morph OA {:.2}%",
        record.network_id,
        record.raw_oa,
        record.morph_oa
    );
    Ok((pipeline, record, raw_map, morph_map))
}

fn write_map(dir: &Path, stem: &str, map: &ClassMap) -> Result<()> {
    write_pgm(
        BufWriter::new(fs::File::create(dir.join(format!("{stem}.pgm")))?),
        map.rows,
        map.cols,
        &map.labels,
    )?;
    write_ppm(
        BufWriter::new(fs::File::create(dir.join(format!("{stem}.ppm")))?),
        map.rows,
        map.cols,
        &map.labels,
    )
}

fn persist_run(
    dir: &Path,
    pipeline: &TrainedPipeline,
    record: &ResultRecord,
    raw: &ClassMap,
    morph: &ClassMap,
) -> Result<()> {
    pipeline.save(dir)?;
    write_map(dir, "map_raw", raw)?;
    write_map(dir, "map_morph", morph)?;
    fs::write(dir.join("result.json"), serde_json::to_vec_pretty(record)?)?;
    Ok(())
}

fn persist_shared(dir: &Path, prepared: &Prepared, shared: &SharedState) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("split.json"), serde_json::to_vec(&prepared.split)?)?;
    if let Some(aug) = &shared.augmented {
        write_audit_csv(
            BufWriter::new(fs::File::create(dir.join("augment.csv"))?),
            aug,
            Some(&prepared.split.train),
        )?;
    }
    Ok(())
}

/// Single-network run. When `out` is given, the trained pipeline, split,
/// class maps and `result.json` are written there.
pub fn run_experiment(config: &ExperimentConfig, out: Option<&Path>) -> Result<ResultRecord> {
    let prepared = Prepared::load(config)?;
    let mut shared = SharedState::default();
    let (pipeline, record, raw, morph) = run_network(&prepared, config, &mut shared)?;
    if let Some(dir) = out {
        persist_shared(dir, &prepared, &shared)?;
        persist_run(dir, &pipeline, &record, &raw, &morph)?;
    }
    Ok(record)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub records: Vec<ResultRecord>,
    pub table: String,
}

/// Runs networks 1..=7 over one shared split, normalizer and augmented set.
pub fn run_ablation_prepared(
    prepared: &Prepared,
    base: &ExperimentConfig,
    out: Option<&Path>,
) -> Result<AblationReport> {
    let mut shared = SharedState::default();
    let mut records = Vec::with_capacity(7);
    for id in 1..=7u8 {
        let config = base.with_network(id);
        let (pipeline, record, raw, morph) = run_network(prepared, &config, &mut shared)?;
        if let Some(dir) = out {
            persist_run(&dir.join(format!("net_{id}")), &pipeline, &record, &raw, &morph)?;
        }
        records.push(record);
    }
    if let Some(dir) = out {
        persist_shared(dir, prepared, &shared)?;
    }
    let table = format_table(&records);
    Ok(AblationReport { records, table })
}

pub fn run_ablation(base: &ExperimentConfig, out: Option<&Path>) -> Result<AblationReport> {
    let prepared = Prepared::load(base)?;
    let report = run_ablation_prepared(&prepared, base, out)?;
    if let Some(dir) = out {
        write_ablation(dir, &report)?;
    }
    Ok(report)
}

/// Writes `results.json` (timing-free, so reruns are byte-identical),
/// `timings.json` and `table.txt`.
pub fn write_ablation(dir: &Path, report: &AblationReport) -> Result<()> {
    fs::create_dir_all(dir)?;
    let timings: Vec<(u8, Option<f64>)> = report
        .records
        .iter()
        .map(|r| (r.network_id, r.wall_time_s))
        .collect();
    let stripped = AblationReport {
        records: report
            .records
            .iter()
            .map(|r| ResultRecord {
                wall_time_s: None,
                ..r.clone()
            })
            .collect(),
        table: report.table.clone(),
    };
    fs::write(dir.join("results.json"), serde_json::to_vec_pretty(&stripped)?)?;
    fs::write(dir.join("timings.json"), serde_json::to_vec_pretty(&timings)?)?;
    fs::write(dir.join("table.txt"), &report.table)?;
    Ok(())
}

/// Aligned `Exp. | Raw OA(%) | Morph OA(%)` table; column maxima are wrapped
/// in `**`.
pub fn format_table(records: &[ResultRecord]) -> String {
    let best = |f: fn(&ResultRecord) -> f64| {
        records.iter().map(f).fold(f64::NEG_INFINITY, f64::max)
    };
    let (best_raw, best_morph) = (best(|r| r.raw_oa), best(|r| r.morph_oa));
    let cell = |v: f64, best: f64| {
        let s = format!("{v:.2}");
        if v == best {
            format!("**{s}**")
        } else {
            s
        }
    };
    let mut out = format!("{:>4} | {:>11} | {:>11}\n", "Exp.", "Raw OA(%)", "Morph OA(%)");
    out.push_str(&format!("{:-<4}-+-{:-<11}-+-{:-<11}\n", "", "", ""));
    for r in records {
        out.push_str(&format!(
            "{:>4} | {:>11} | {:>11}\n",
            r.network_id,
            cell(r.raw_oa, best_raw),
            cell(r.morph_oa, best_morph)
        ));
    }
    out
}

//! `hsi`: command-line front end for the hyperspectral classification pipeline.

use std::fs;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hsi_core::datacube::{load_dataset, save_dataset, synth_scene};
use hsi_core::harness::{
    confusion_matrix, overall_accuracy, run_ablation, run_experiment, with_thread_pool,
};
use hsi_core::postproc::{clean_map, read_pgm, write_pgm, write_ppm, ClassMap};
use hsi_core::{
    ErrorKind, ExperimentConfig, HsiError, Result, SceneSpec, SplitAssignment, TrainedPipeline,
};

#[derive(Parser)]
#[command(name = "hsi", version, about = "Hyperspectral pixel classification with class-based MDAE features")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic linear-mixing scene as a dataset directory.
    Synth {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train and evaluate the network selected by the config.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Classify every pixel of a dataset with a trained model directory.
    Predict {
        #[arg(long)]
        model_dir: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Skip hole filling and write the raw classifier output.
        #[arg(long)]
        raw: bool,
    },
    /// Score a predicted class map on the test pixels of a split.
    Evaluate {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        split: PathBuf,
    },
    /// Run all seven ablation networks.
    Ablate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path)
        .map_err(|e| HsiError::InvalidConfig(format!("cannot read {}: {e}", path.display())))
}

fn synth(spec: &Path, out: &Path, seed: u64) -> Result<()> {
    let spec: SceneSpec = serde_json::from_str(&read_text(spec)?)?;
    let (cube, labels) = synth_scene(&spec, seed)?;
    save_dataset(out, &cube, &labels, None)?;
    println!(
        "wrote {}x{}x{} scene with {} classes to {}",
        cube.rows(),
        cube.cols(),
        cube.bands(),
        labels.n_classes(),
        out.display()
    );
    Ok(())
}

fn train(config: &Path, out: &Path) -> Result<()> {
    let config = ExperimentConfig::from_file(config)?;
    let record = run_experiment(&config, Some(out))?;
    println!(
        "network {}: raw OA {:.2}%, morph OA {:.2}%",
        record.network_id, record.raw_oa, record.morph_oa
    );
    Ok(())
}

fn predict(model_dir: &Path, dataset: &Path, out: &Path, raw: bool) -> Result<()> {
    let pipeline = TrainedPipeline::load(model_dir)?;
    let (_, cube, _) = load_dataset(dataset)?;
    let labels = pipeline.classify(&cube)?;
    let mut map = ClassMap::new(cube.rows(), cube.cols(), labels, pipeline.n_classes())?;
    if !raw {
        map = clean_map(&map).0;
    }
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    write_pgm(BufWriter::new(fs::File::create(out)?), map.rows, map.cols, &map.labels)?;
    let ppm = out.with_extension("ppm");
    write_ppm(BufWriter::new(fs::File::create(&ppm)?), map.rows, map.cols, &map.labels)?;
    println!("wrote {} and {}", out.display(), ppm.display());
    Ok(())
}

fn evaluate(pred: &Path, dataset: &Path, split: &Path) -> Result<()> {
    let (rows, cols, labels) = read_pgm(BufReader::new(
        fs::File::open(pred).map_err(|_| HsiError::MissingFile(pred.to_path_buf()))?,
    ))?;
    let (_, _, truth) = load_dataset(dataset)?;
    if (rows, cols) != (truth.rows(), truth.cols()) {
        return Err(HsiError::DimensionMismatch(format!(
            "prediction is {rows}x{cols}, ground truth {}x{}",
            truth.rows(),
            truth.cols()
        )));
    }
    let split: SplitAssignment = serde_json::from_str(&read_text(split)?)?;
    let cm = confusion_matrix(&labels, truth.labels(), &split.test, truth.n_classes())?;
    let report = serde_json::json!({
        "overall_accuracy": overall_accuracy(&cm)?,
        "per_class_accuracy": cm.per_class_accuracy(),
        "confusion": cm,
    });
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn ablate(config: &Path, out: &Path) -> Result<()> {
    let config = ExperimentConfig::from_file(config)?;
    let report = run_ablation(&config, Some(out))?;
    print!("{}", report.table);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { spec, out, seed } => synth(&spec, &out, seed),
        Command::Train { config, out } => train(&config, &out),
        Command::Predict {
            model_dir,
            dataset,
            out,
            raw,
        } => predict(&model_dir, &dataset, &out, raw),
        Command::Evaluate {
            pred,
            dataset,
            split,
        } => evaluate(&pred, &dataset, &split),
        Command::Ablate { config, out } => ablate(&config, &out),
    }
}

fn exit_code(kind: ErrorKind) -> u8 {
    match kind {
        ErrorKind::Config => 2,
        ErrorKind::Data => 3,
        ErrorKind::Numeric => 4,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match with_thread_pool(|| run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::debug!("{e:?}");
            eprintln!("error: {e}");
            ExitCode::from(exit_code(e.kind()))
        }
    }
}

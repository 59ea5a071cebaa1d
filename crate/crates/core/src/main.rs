//! Command-line front end: synthesize scenes, classify images, evaluate
//! results, render label maps, and run the reference optimizer demo.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use biogeo::accuracy::{self, ErrorMatrix};
use biogeo::bbo;
use biogeo::classifier::{
    classify, AssignmentPolicy, ClassifierConfig, DeltaAggregate, StddevConvention, TrainingSet,
};
use biogeo::raster::{self, LabelMap, Palette, SceneSpec};
use biogeo::report::render_report;

#[derive(Parser)]
#[command(
    name = "biogeo",
    version,
    about = "Land-cover classification of multiband rasters by habitat migration"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic multiband scene plus its ground-truth label map
    Synth(SynthArgs),
    /// Classify a multiband image from a training CSV
    Classify(ClassifyArgs),
    /// Compare a predicted label map against ground truth
    Evaluate(EvaluateArgs),
    /// Render a label map to a PPM image
    Render(RenderArgs),
    /// Minimize the sphere benchmark with the reference optimizer
    BboDemo(BboDemoArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Scene specification file (TOML)
    #[arg(long)]
    classes: PathBuf,
    /// Override the spec's width
    #[arg(long)]
    width: Option<u32>,
    /// Override the spec's height
    #[arg(long)]
    height: Option<u32>,
    /// Override the spec's seed
    #[arg(long)]
    seed: Option<u64>,
    /// Band manifest to write (per-band PGMs are written next to it)
    #[arg(long)]
    out_manifest: PathBuf,
    /// Ground-truth label map to write
    #[arg(long)]
    out_truth: PathBuf,
}

#[derive(Args)]
struct ClassifyArgs {
    /// Band manifest of the image to classify
    #[arg(long)]
    image: PathBuf,
    /// Training CSV: band columns in manifest order plus a DECISION column
    #[arg(long)]
    training: PathBuf,
    /// Classes that must be present in the training CSV (defaults to the
    /// classes the CSV declares)
    #[arg(long, value_delimiter = ',')]
    classes: Option<Vec<String>>,
    /// Per-band bound on the absolute HSI change a habitat may absorb
    #[arg(long, default_value_t = 1.0)]
    threshold: f64,
    /// Initial interval count per discretization band
    #[arg(long, default_value_t = 8)]
    cuts: usize,
    /// Bands used for discretization
    #[arg(long, value_delimiter = ',', default_value = "NIR,MIR")]
    disc_bands: Vec<String>,
    /// Bands entering the HSI comparison (default: all bands)
    #[arg(long, value_delimiter = ',')]
    hsi_bands: Option<Vec<String>>,
    /// Full passes over the universal habitat before giving up
    #[arg(long, default_value_t = 5)]
    max_iter: usize,
    /// Habitat choice among those passing the threshold
    #[arg(long, default_value_t = AssignmentPolicy::BestFit)]
    policy: AssignmentPolicy,
    /// Scalar ranking of |delta| vectors under best-fit
    #[arg(long, default_value_t = DeltaAggregate::MeanAbs)]
    aggregate: DeltaAggregate,
    /// Standard deviation divisor convention
    #[arg(long, default_value_t = StddevConvention::Sample)]
    stddev_convention: StddevConvention,
    /// Echoed into the report; the pipeline is deterministic
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Label map to write
    #[arg(long)]
    out: PathBuf,
    /// Run report to write
    #[arg(long)]
    report: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Predicted label map
    #[arg(
        long,
        required_unless_present = "matrix_in",
        conflicts_with = "matrix_in"
    )]
    pred: Option<PathBuf>,
    /// Ground-truth label map
    #[arg(
        long,
        required_unless_present = "matrix_in",
        conflicts_with = "matrix_in"
    )]
    truth: Option<PathBuf>,
    /// Evaluate a pre-built error-matrix CSV instead of label maps
    #[arg(long)]
    matrix_in: Option<PathBuf>,
    /// Write the error matrix as CSV
    #[arg(long)]
    matrix_out: Option<PathBuf>,
}

#[derive(Args)]
struct RenderArgs {
    /// Label map to render
    #[arg(long)]
    labels: PathBuf,
    /// PPM file to write
    #[arg(long)]
    out: PathBuf,
    /// Palette file overriding the default colors
    #[arg(long)]
    palette: Option<PathBuf>,
}

#[derive(Args)]
struct BboDemoArgs {
    /// Problem dimension; the search box is [-5.12, 5.12] per dimension
    #[arg(long, default_value_t = 10)]
    dim: usize,
    /// Population size
    #[arg(long, default_value_t = 50)]
    pop: usize,
    /// Generations to run
    #[arg(long, default_value_t = 100)]
    gens: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Habitats immune to migration and mutation
    #[arg(long, default_value_t = 2)]
    elite: usize,
    /// Per-SIV uniform resampling probability
    #[arg(long, default_value_t = 0.01)]
    mutation: f64,
    /// CSV trace to write: generation,best_cost,mean_cost
    #[arg(long)]
    trace: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(args) => cmd_synth(args),
        Command::Classify(args) => cmd_classify(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Render(args) => cmd_render(args),
        Command::BboDemo(args) => cmd_bbo_demo(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

fn cmd_synth(args: SynthArgs) -> Result<()> {
    let mut spec = SceneSpec::from_file(&args.classes)
        .with_context(|| format!("loading scene spec {}", args.classes.display()))?;
    if let Some(width) = args.width {
        spec.width = width;
    }
    if let Some(height) = args.height {
        spec.height = height;
    }
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    spec.validate()?;
    let (image, truth) = raster::synth_scene(&spec)?;
    raster::save_with_manifest(&image, &args.out_manifest)
        .with_context(|| format!("writing {}", args.out_manifest.display()))?;
    truth
        .save(&args.out_truth)
        .with_context(|| format!("writing {}", args.out_truth.display()))?;
    println!(
        "wrote {} bands of a {}x{} scene to {} (truth: {})",
        image.band_count(),
        image.width(),
        image.height(),
        args.out_manifest.display(),
        args.out_truth.display()
    );
    Ok(())
}

fn cmd_classify(args: ClassifyArgs) -> Result<()> {
    let image = raster::load_manifest(&args.image)
        .with_context(|| format!("loading image {}", args.image.display()))?;
    let training = TrainingSet::from_csv_file(&args.training, image.band_names())
        .with_context(|| format!("loading training {}", args.training.display()))?;
    if let Some(required) = &args.classes {
        for class in required {
            if !training.classes().contains(class) {
                bail!(
                    "training set has no pixels for class {:?} ({})",
                    class,
                    args.training.display()
                );
            }
        }
    }
    let config = ClassifierConfig {
        threshold: args.threshold,
        disc_bands: args.disc_bands,
        initial_intervals: args.cuts,
        hsi_bands: args.hsi_bands,
        max_iterations: args.max_iter,
        policy: args.policy,
        aggregate: args.aggregate,
        stddev: args.stddev_convention,
        seed: args.seed,
    };
    let result = classify(&image, &training, &config)?;
    result
        .label_map
        .save(&args.out)
        .with_context(|| format!("writing {}", args.out.display()))?;
    std::fs::write(&args.report, render_report(&image, &config, &result))
        .with_context(|| format!("writing {}", args.report.display()))?;
    println!(
        "classified {} of {} pixels in {} iterations ({} unclassified)",
        result.label_map.labels().len() - result.unclassified.len(),
        result.label_map.labels().len(),
        result.per_iteration.len(),
        result.unclassified.len()
    );
    Ok(())
}

fn format_matrix(matrix: &ErrorMatrix) -> String {
    let names: Vec<&str> = matrix.classes().iter().map(String::as_str).collect();
    let width = names
        .iter()
        .map(|n| n.len())
        .chain(
            matrix
                .counts()
                .iter()
                .flatten()
                .map(|c| c.to_string().len()),
        )
        .chain(["column_total".len()])
        .max()
        .unwrap_or(8)
        + 2;
    let mut out = String::from("error matrix (rows = predicted, columns = reference)\n");
    let _ = write!(out, "{:>width$}", "");
    for name in &names {
        let _ = write!(out, "{name:>width$}");
    }
    let _ = writeln!(out, "{:>width$}", "row_total");
    let row_totals = matrix.row_totals();
    for (i, name) in names.iter().enumerate() {
        let _ = write!(out, "{name:>width$}");
        for j in 0..names.len() {
            let _ = write!(out, "{:>width$}", matrix.count(i, j));
        }
        let _ = writeln!(out, "{:>width$}", row_totals[i]);
    }
    let _ = write!(out, "{:>width$}", "column_total");
    for total in matrix.col_totals() {
        let _ = write!(out, "{total:>width$}");
    }
    let _ = writeln!(out, "{:>width$}", matrix.total());
    out
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<()> {
    let matrix = match &args.matrix_in {
        Some(path) => ErrorMatrix::from_csv_file(path)
            .with_context(|| format!("loading matrix {}", path.display()))?,
        None => {
            let pred_path = args.pred.as_ref().expect("clap enforces --pred");
            let truth_path = args.truth.as_ref().expect("clap enforces --truth");
            let pred = LabelMap::load(pred_path)
                .with_context(|| format!("loading {}", pred_path.display()))?;
            let truth = LabelMap::load(truth_path)
                .with_context(|| format!("loading {}", truth_path.display()))?;
            accuracy::build_matrix(&pred, &truth, truth.classes())?
        }
    };
    if let Some(path) = &args.matrix_out {
        matrix
            .write_csv_file(path)
            .with_context(|| format!("writing {}", path.display()))?;
    }
    print!("{}", format_matrix(&matrix));
    if matrix.excluded_unclassified() > 0 {
        println!("excluded_unclassified = {}", matrix.excluded_unclassified());
    }
    let report = accuracy::accuracy_report(&matrix)?;
    println!("kappa = {:.4}", report.kappa);
    println!("overall_accuracy = {:.4}", report.overall_accuracy);
    let fmt_opt = |v: Option<f64>| match v {
        Some(v) => format!("{v:.4}"),
        None => "n/a".to_string(),
    };
    for class in &report.per_class {
        println!(
            "class {}: producer = {}, user = {}",
            class.class,
            fmt_opt(class.producer),
            fmt_opt(class.user)
        );
    }
    Ok(())
}

fn cmd_render(args: RenderArgs) -> Result<()> {
    let labels = LabelMap::load(&args.labels)
        .with_context(|| format!("loading {}", args.labels.display()))?;
    let palette = match &args.palette {
        Some(path) => Palette::from_file(path)
            .with_context(|| format!("loading palette {}", path.display()))?,
        None => Palette::default_landcover(),
    };
    raster::render_ppm(&labels, &palette, &args.out)
        .with_context(|| format!("writing {}", args.out.display()))?;
    println!(
        "rendered {} to {}",
        args.labels.display(),
        args.out.display()
    );
    Ok(())
}

fn cmd_bbo_demo(args: BboDemoArgs) -> Result<()> {
    if args.dim == 0 {
        bail!("--dim must be at least 1");
    }
    let params = bbo::BboParams {
        population: args.pop,
        generations: args.gens,
        mutation_prob: args.mutation,
        elite_count: args.elite,
        seed: args.seed,
        ..bbo::BboParams::new(vec![(-5.12, 5.12); args.dim])
    };
    let run = bbo::optimize(bbo::sphere, &params)?;
    let mut csv = String::from("generation,best_cost,mean_cost\n");
    for row in &run.trace {
        let _ = writeln!(
            csv,
            "{},{},{}",
            row.generation, row.best_cost, row.mean_cost
        );
    }
    std::fs::write(&args.trace, csv)
        .with_context(|| format!("writing {}", args.trace.display()))?;
    println!(
        "best_cost = {} after {} generations (initial {})",
        run.best.cost, args.gens, run.trace[0].best_cost
    );
    Ok(())
}

//! Command-line surface for the pipeline: bank building, inference,
//! evaluation, synthetic data generation and a registration stability
//! benchmark.
//!
//! Exit codes: 0 on success, 2 for usage errors, 3 for data or
//! configuration errors, 4 when registration fails.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use pointcore::bank::{
    bank_fingerprint, build_memory_bank, load_bank, save_bank, BankFeatureKind, MemoryBank,
};
use pointcore::config::{
    load_pipeline_config, load_synthetic_spec, FeatureSpec, PipelineConfig,
};
use pointcore::error::{exit_code, Error};
use pointcore::eval::synthetic::{generate_shape, jitter_cloud, random_pose, DefectLabeling, ShapeKind};
use pointcore::eval::{generate_category, score_test_set, MetricReport, TestObject, TimingReport};
use pointcore::features::FeatureMatrix;
use pointcore::io::{
    labels_path_for, parse_feature_file, parse_point_cloud, read_labels, write_cloud_ply,
    write_heatmap_ply, write_labels, write_scores, IoError,
};
use pointcore::registration::{registration_stability, RegistrationConfig};
use pointcore::scoring::run_inference;

#[derive(Parser)]
#[command(
    name = "pointcore",
    version,
    about = "Point-cloud anomaly detection with a registered coordinate-feature memory bank"
)]
struct Cli {
    /// Worker threads (default: all hardware threads).
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
    /// Master seed; overrides every stage seed in the configuration.
    #[arg(long, global = true, value_name = "SEED")]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a memory bank from prototype scans.
    BuildBank(BuildBankArgs),
    /// Score one test cloud against a bank.
    Infer(InferArgs),
    /// Score a labeled test directory and write a metric report.
    Evaluate(EvaluateArgs),
    /// Generate synthetic prototypes, test clouds and label files.
    GenSynthetic(GenSyntheticArgs),
    /// Measure registration stability across RANSAC seeds.
    BenchRegistration(BenchRegistrationArgs),
}

#[derive(Args)]
struct BuildBankArgs {
    /// Prototype cloud files, or directories expanded to their .ply and
    /// .xyz files in name order.
    #[arg(long, num_args = 1.., required = true, value_name = "PATH")]
    prototypes: Vec<PathBuf>,
    /// Pipeline configuration TOML; defaults apply when omitted.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Output bank file.
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    /// Directory holding one <cloud stem>.features file per prototype.
    #[arg(long, value_name = "DIR")]
    features_dir: Option<PathBuf>,
}

#[derive(Args)]
struct InferArgs {
    /// Bank file produced by build-bank.
    #[arg(long, value_name = "FILE")]
    bank: PathBuf,
    /// Test cloud (.ply or .xyz).
    #[arg(long, value_name = "FILE")]
    input: PathBuf,
    /// Pipeline configuration TOML; defaults apply when omitted.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Output CSV of per-point scores.
    #[arg(long, value_name = "FILE")]
    scores: PathBuf,
    /// Optional colored PLY of the registered cloud.
    #[arg(long, value_name = "FILE")]
    heatmap: Option<PathBuf>,
    /// Per-point feature file replacing the built-in FPFH features.
    #[arg(long, value_name = "FILE")]
    features: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Bank file produced by build-bank.
    #[arg(long, value_name = "FILE")]
    bank: PathBuf,
    /// Directory of test clouds with .labels sidecar files.
    #[arg(long, value_name = "DIR")]
    test_dir: PathBuf,
    /// Output JSON metric report.
    #[arg(long, value_name = "FILE")]
    report: PathBuf,
    /// Pipeline configuration TOML; defaults apply when omitted.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Optional JSON sidecar with wall-clock timings.
    #[arg(long, value_name = "FILE")]
    timing: Option<PathBuf>,
}

#[derive(Args)]
struct GenSyntheticArgs {
    /// Synthetic category spec TOML.
    #[arg(long, value_name = "FILE")]
    spec: PathBuf,
    /// Output directory; one subdirectory per category.
    #[arg(long, value_name = "DIR")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct BenchRegistrationArgs {
    /// Number of RANSAC seeds to test.
    #[arg(long, default_value_t = 20, value_name = "N")]
    seeds: usize,
    /// Points per synthetic cloud.
    #[arg(long, default_value_t = 1500, value_name = "N")]
    points: usize,
}

enum Failure {
    Usage(String),
    Run(Error),
}

impl<E: Into<Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Run(e.into())
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.threads {
        Some(threads) => match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
            Ok(pool) => pool.install(|| run(cli)),
            Err(e) => {
                eprintln!("usage error: could not build thread pool: {e}");
                ExitCode::from(2)
            }
        },
        None => run(cli),
    }
}

fn run(cli: Cli) -> ExitCode {
    let result = match cli.command {
        Command::BuildBank(args) => cmd_build_bank(args, cli.seed),
        Command::Infer(args) => cmd_infer(args, cli.seed),
        Command::Evaluate(args) => cmd_evaluate(args, cli.seed),
        Command::GenSynthetic(args) => cmd_gen_synthetic(args, cli.seed),
        Command::BenchRegistration(args) => cmd_bench_registration(args, cli.seed),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}

fn load_config(path: Option<&Path>, master_seed: Option<u64>) -> Result<PipelineConfig, Failure> {
    let mut config = match path {
        Some(p) => load_pipeline_config(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = master_seed {
        config.apply_master_seed(seed);
    }
    Ok(config)
}

fn echo_config(config: &PipelineConfig) {
    eprintln!("resolved configuration:");
    for line in config.resolved_toml().lines() {
        eprintln!("  {line}");
    }
}

fn print_warnings(context: &str, warnings: &[String]) {
    for warning in warnings {
        eprintln!("warning: {context}: {warning}");
    }
}

/// Expands each path: directories become their contained .ply and .xyz
/// files in name order, plain files pass through in argument order.
fn expand_cloud_paths(inputs: &[PathBuf]) -> Result<Vec<PathBuf>, Failure> {
    let mut files = Vec::new();
    for input in inputs {
        if input.is_dir() {
            let entries = fs::read_dir(input).map_err(|source| IoError::File {
                path: input.clone(),
                source,
            })?;
            let mut found: Vec<PathBuf> = entries
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| {
                    matches!(
                        p.extension().and_then(|e| e.to_str()),
                        Some("ply") | Some("xyz")
                    )
                })
                .collect();
            found.sort();
            files.extend(found);
        } else {
            files.push(input.clone());
        }
    }
    if files.is_empty() {
        return Err(Failure::Run(Error::Data(
            "no .ply or .xyz cloud files found".into(),
        )));
    }
    Ok(files)
}

fn feature_sidecar(dir: &Path, cloud: &Path) -> PathBuf {
    dir.join(cloud.file_stem().unwrap_or_default())
        .with_extension("features")
}

fn write_file(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|source| {
        Failure::from(IoError::File {
            path: path.to_path_buf(),
            source,
        })
    })
}

fn to_json(value: &impl serde::Serialize) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("reports serialize to JSON");
    text.push('\n');
    text
}

fn check_fingerprint(bank: &MemoryBank, config: &PipelineConfig, kind: BankFeatureKind) {
    let expected = bank_fingerprint(&config.bank, kind, bank.feature_dim());
    if &expected != bank.fingerprint() {
        eprintln!(
            "warning: the bank was built under a different configuration than the one in effect now"
        );
    }
}

fn cmd_build_bank(args: BuildBankArgs, master_seed: Option<u64>) -> Result<(), Failure> {
    let config = load_config(args.config.as_deref(), master_seed)?;
    echo_config(&config);

    let paths = expand_cloud_paths(&args.prototypes)?;
    let mut clouds = Vec::with_capacity(paths.len());
    for path in &paths {
        let loaded = parse_point_cloud(path)?;
        print_warnings(&path.display().to_string(), &loaded.warnings);
        clouds.push(loaded.cloud);
    }

    if args.features_dir.is_none() && config.features == FeatureSpec::ExternalFile {
        return Err(usage(
            "the configuration selects external features; pass --features-dir",
        ));
    }
    let features: Option<Vec<FeatureMatrix>> = match &args.features_dir {
        Some(dir) => Some(
            paths
                .iter()
                .map(|p| parse_feature_file(&feature_sidecar(dir, p)))
                .collect::<Result<_, _>>()?,
        ),
        None => None,
    };

    let build = build_memory_bank(&clouds, features.as_deref(), &config.bank)?;
    for report in &build.reports {
        eprintln!(
            "prototype {} ({}): {} centers, inlier fraction {:.3}",
            report.prototype,
            paths[report.prototype].display(),
            report.center_count,
            report.inlier_fraction,
        );
    }
    save_bank(&build.bank, &args.out)?;
    eprintln!(
        "bank written to {}: {} elements, feature dimension {}",
        args.out.display(),
        build.bank.len(),
        build.bank.feature_dim(),
    );
    Ok(())
}

fn cmd_infer(args: InferArgs, master_seed: Option<u64>) -> Result<(), Failure> {
    let config = load_config(args.config.as_deref(), master_seed)?;
    echo_config(&config);

    let bank = load_bank(&args.bank)?;
    let loaded = parse_point_cloud(&args.input)?;
    print_warnings(&args.input.display().to_string(), &loaded.warnings);

    if args.features.is_none() && config.features == FeatureSpec::ExternalFile {
        return Err(usage(
            "the configuration selects external features; pass --features",
        ));
    }
    let features = match &args.features {
        Some(path) => Some(parse_feature_file(path)?),
        None => None,
    };
    let kind = if features.is_some() {
        BankFeatureKind::External
    } else {
        BankFeatureKind::Fpfh
    };
    check_fingerprint(&bank, &config, kind);

    let outcome = run_inference(&bank, &loaded.cloud, features.as_ref(), &config.inference)?;
    print_warnings("inference", &outcome.warnings);

    write_scores(&outcome.scores, &args.scores)?;
    if let Some(path) = &args.heatmap {
        let registered = loaded.cloud.transformed(&outcome.transform);
        write_heatmap_ply(&registered, &outcome.scores.fused, path)?;
    }
    eprintln!(
        "scored {} points with {} bank queries; object score {:.6}",
        loaded.cloud.len(),
        outcome.bank_queries,
        outcome.scores.object_score,
    );
    eprintln!(
        "registration: rotation {:.3} deg, translation {:.4}, inlier fraction {:.3}",
        outcome.transform.rotation_angle_deg(),
        outcome.transform.translation.norm(),
        outcome.registration.global.inlier_fraction,
    );
    Ok(())
}

fn cmd_evaluate(args: EvaluateArgs, master_seed: Option<u64>) -> Result<(), Failure> {
    let config = load_config(args.config.as_deref(), master_seed)?;
    echo_config(&config);

    let bank = load_bank(&args.bank)?;
    let kind = match config.features {
        FeatureSpec::BuiltinFpfh => BankFeatureKind::Fpfh,
        FeatureSpec::ExternalFile => BankFeatureKind::External,
    };
    check_fingerprint(&bank, &config, kind);

    if !args.test_dir.is_dir() {
        return Err(usage(format!(
            "--test-dir {} is not a directory",
            args.test_dir.display()
        )));
    }
    let paths = expand_cloud_paths(std::slice::from_ref(&args.test_dir))?;
    let mut tests = Vec::with_capacity(paths.len());
    for path in &paths {
        let loaded = parse_point_cloud(path)?;
        print_warnings(&path.display().to_string(), &loaded.warnings);
        let labeling = read_labels(&labels_path_for(path))?;
        let features = match config.features {
            FeatureSpec::ExternalFile => Some(parse_feature_file(&feature_sidecar(
                path.parent().unwrap_or(Path::new("")),
                path,
            ))?),
            FeatureSpec::BuiltinFpfh => None,
        };
        tests.push(TestObject {
            name: path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| path.display().to_string()),
            cloud: loaded.cloud,
            labels: labeling.point_labels,
            defective: labeling.object_label,
            features,
        });
    }

    let dir_name = |p: &Path| p.file_name().map(|s| s.to_string_lossy().into_owned());
    let category = match dir_name(&args.test_dir) {
        Some(name) if name == "test" => args
            .test_dir
            .parent()
            .and_then(dir_name)
            .unwrap_or(name),
        Some(name) => name,
        None => "test-set".to_string(),
    };
    let (metrics, timing, _records) = score_test_set(
        &bank,
        &category,
        &tests,
        &config.inference,
        config.object_score_mode,
    )?;

    eprintln!(
        "{}: {} objects, {} points; O-AUROC {:.4}, O-AUPR {:.4}, P-AUROC {}, P-AUPR {}",
        metrics.name,
        metrics.objects,
        metrics.points_scored,
        metrics.o_auroc,
        metrics.o_aupr,
        metrics
            .p_auroc
            .map_or("n/a".to_string(), |v| format!("{v:.4}")),
        metrics
            .p_aupr
            .map_or("n/a".to_string(), |v| format!("{v:.4}")),
    );

    let report = MetricReport::from_categories(vec![metrics]);
    write_file(&args.report, &to_json(&report))?;
    if let Some(path) = &args.timing {
        let timing = TimingReport::from_categories(vec![timing]);
        write_file(path, &to_json(&timing))?;
    }
    Ok(())
}

fn cmd_gen_synthetic(args: GenSyntheticArgs, master_seed: Option<u64>) -> Result<(), Failure> {
    let mut spec = load_synthetic_spec(&args.spec)?;
    if let Some(seed) = master_seed {
        spec.apply_master_seed(seed);
    }
    {
        let mut names: Vec<&str> = spec.categories.iter().map(|c| c.name.as_str()).collect();
        names.sort_unstable();
        names.dedup();
        if names.len() != spec.categories.len() {
            return Err(usage("category names must be unique"));
        }
    }
    eprintln!("resolved spec:");
    for line in toml::to_string_pretty(&spec)
        .expect("spec serializes to TOML")
        .lines()
    {
        eprintln!("  {line}");
    }

    for category in &spec.categories {
        let dir = args.out_dir.join(&category.name);
        let train_dir = dir.join("train");
        let test_dir = dir.join("test");
        for d in [&train_dir, &test_dir] {
            fs::create_dir_all(d).map_err(|source| IoError::File {
                path: d.clone(),
                source,
            })?;
        }
        let generated = generate_category(category, 0)?;
        for (i, cloud) in generated.prototypes.iter().enumerate() {
            write_cloud_ply(cloud, &train_dir.join(format!("proto-{i:03}.ply")))?;
        }
        for test in &generated.tests {
            let cloud_path = test_dir.join(format!("{}.ply", test.name));
            write_cloud_ply(&test.cloud, &cloud_path)?;
            let labeling = DefectLabeling {
                point_labels: test.labels.clone(),
                object_label: test.defective,
            };
            write_labels(&labeling, &labels_path_for(&cloud_path))?;
        }
        eprintln!(
            "category {}: {} prototypes -> {}, {} test objects -> {}",
            category.name,
            generated.prototypes.len(),
            train_dir.display(),
            generated.tests.len(),
            test_dir.display(),
        );
    }
    Ok(())
}

fn cmd_bench_registration(
    args: BenchRegistrationArgs,
    master_seed: Option<u64>,
) -> Result<(), Failure> {
    if args.seeds < 2 {
        return Err(usage("--seeds must be at least 2"));
    }
    let master = master_seed.unwrap_or(7);
    let base = generate_shape(
        ShapeKind::BlendedBlob {
            surface_seed: master,
        },
        args.points,
        0.0,
        master.wrapping_add(10),
    );
    let sigma = 0.001 * base.diameter();
    let target = jitter_cloud(&base, sigma, master.wrapping_add(1));
    let pose = random_pose(30.0, 0.1 * base.diameter(), master.wrapping_add(3));
    let source = jitter_cloud(&base, sigma, master.wrapping_add(2)).transformed(&pose);

    let config = RegistrationConfig::for_sparse_clouds();
    let seeds: Vec<u64> = (1..=args.seeds as u64).collect();
    let report = registration_stability(&source, &target, &config, &seeds)?;

    println!(
        "registration stability: {} seeds, {} points per cloud, noise sigma {:.6}",
        args.seeds, args.points, sigma,
    );
    println!(
        "{:<12} {:>16} {:>16} {:>16}",
        "stage", "std yaw (deg)", "std pitch (deg)", "std roll (deg)"
    );
    let g = report.global_std_deg;
    let r = report.refined_std_deg;
    println!(
        "{:<12} {:>16.6e} {:>16.6e} {:>16.6e}",
        "ransac", g[0], g[1], g[2]
    );
    println!(
        "{:<12} {:>16.6e} {:>16.6e} {:>16.6e}",
        "ransac+icp", r[0], r[1], r[2]
    );
    Ok(())
}

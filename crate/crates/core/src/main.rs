use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use urban_attractors::clustering::{self, read_clusters_csv, VarianceScaling};
use urban_attractors::error::{Error, Result};
use urban_attractors::features::{read_features_csv, write_features_csv, SdFormula};
use urban_attractors::ingest::{load_pois, load_zones};
use urban_attractors::pipeline::{self, PipelineConfig};
use urban_attractors::poisig::{self, ClassAssignment};
use urban_attractors::synth::{self, SynthConfig};

#[derive(Parser)]
#[command(name = "urban-attractors", version, about = "Classify zones by trip attraction pattern and rank POI types per class")]
struct Cli {
    /// Log progress (-v) or details (-vv) to standard error.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every stage and write all artifacts.
    Run(RunArgs),
    /// Compute features.csv only.
    Features(RunArgs),
    /// Cluster a features.csv.
    Cluster(ClusterArgs),
    /// Rank POI types per class from a clusters.csv.
    PoiSig(PoiSigArgs),
    /// Generate a synthetic city.
    Synth(SynthArgs),
}

/// Config file plus per-key overrides.
#[derive(Args)]
struct RunArgs {
    /// TOML config; paths inside it are relative to its directory.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    zones: Option<PathBuf>,
    #[arg(long)]
    od: Option<PathBuf>,
    #[arg(long)]
    road_nodes: Option<PathBuf>,
    #[arg(long)]
    road_edges: Option<PathBuf>,
    #[arg(long)]
    pois: Option<PathBuf>,
    #[arg(long)]
    window: Option<String>,
    #[arg(long)]
    max_snap_m: Option<f64>,
    #[arg(long)]
    min_inflow: Option<f64>,
    #[command(flatten)]
    cluster: ClusterOptions,
    #[arg(long, value_parser = ["standard", "as_printed"])]
    sd_formula: Option<String>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    skip_poi: Option<bool>,
    #[arg(long)]
    distance_cache: Option<PathBuf>,
    #[arg(long, alias = "out")]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct ClusterOptions {
    #[arg(long, alias = "k")]
    k_override: Option<usize>,
    #[arg(long)]
    k_max: Option<usize>,
    #[arg(long)]
    elbow_tau: Option<f64>,
    #[arg(long, value_parser = ["standardized", "raw"])]
    variance_scaling: Option<String>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    standardize_features: Option<bool>,
}

#[derive(Args)]
struct ClusterArgs {
    /// features.csv to cluster.
    #[arg(long)]
    features: PathBuf,
    /// Zones, for clusters.geojson.
    #[arg(long)]
    zones: Option<PathBuf>,
    /// Take clustering parameters from this TOML config.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    options: ClusterOptions,
    #[arg(long, alias = "out", default_value = "out")]
    output_dir: PathBuf,
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct PoiSigArgs {
    #[arg(long)]
    clusters: PathBuf,
    #[arg(long)]
    pois: PathBuf,
    #[arg(long)]
    zones: PathBuf,
    #[arg(long, alias = "out", default_value = "out")]
    output_dir: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, alias = "output-dir")]
    out: PathBuf,
    /// TOML generator config; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    n_zones: Option<usize>,
    #[arg(long)]
    n_global: Option<usize>,
    #[arg(long)]
    grid_extent_m: Option<f64>,
    #[arg(long)]
    downtown_radius_m: Option<f64>,
    #[arg(long)]
    flow_scale: Option<f64>,
    #[arg(long)]
    road_spacing_m: Option<f64>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Run(args) => {
            let cfg = pipeline_config(&args)?;
            let summary = pipeline::run_pipeline(&cfg)?;
            println!("k = {}; wrote {} files to {}", summary.k, summary.files.len(), summary.output_dir.display());
            Ok(())
        }
        Command::Features(args) => {
            let mut cfg = pipeline_config(&args)?;
            cfg.skip_poi = true;
            cfg.validate()?;
            let stage = cfg.with_pool(|| pipeline::feature_stage(&cfg))??;
            let out = &cfg.output_dir;
            std::fs::create_dir_all(out).map_err(|e| Error::Config(format!("{}: {e}", out.display())))?;
            let path = out.join(pipeline::FEATURES_FILE);
            write_or_remove(&path, |p| write_features_csv(&stage.table.features, p))?;
            println!("wrote {} ({} zones)", path.display(), stage.table.features.len());
            Ok(())
        }
        Command::Cluster(args) => cluster(args),
        Command::PoiSig(args) => poi_sig(args),
        Command::Synth(args) => synth_city(args),
    }
}

/// Writes `path`, deleting it again if the writer fails.
fn write_or_remove(path: &Path, write: impl FnOnce(&Path) -> Result<()>) -> Result<()> {
    write(path).inspect_err(|_| {
        let _ = std::fs::remove_file(path);
    })
}

fn pipeline_config(args: &RunArgs) -> Result<PipelineConfig> {
    let mut cfg = match &args.config {
        Some(path) => PipelineConfig::load(path)?,
        None => {
            let need = |p: &Option<PathBuf>, flag: &str| {
                p.clone().ok_or_else(|| Error::Config(format!("--{flag} is required without --config")))
            };
            PipelineConfig::new(
                need(&args.zones, "zones")?,
                need(&args.od, "od")?,
                need(&args.road_nodes, "road-nodes")?,
                need(&args.road_edges, "road-edges")?,
                None,
            )
        }
    };
    macro_rules! set {
        ($field:ident) => {
            if let Some(v) = &args.$field {
                cfg.$field = v.clone();
            }
        };
        (opt $field:ident) => {
            if let Some(v) = &args.$field {
                cfg.$field = Some(v.clone());
            }
        };
    }
    set!(zones);
    set!(od);
    set!(road_nodes);
    set!(road_edges);
    set!(opt pois);
    set!(window);
    set!(max_snap_m);
    set!(min_inflow);
    set!(skip_poi);
    set!(opt distance_cache);
    set!(output_dir);
    set!(opt threads);
    if let Some(s) = &args.sd_formula {
        cfg.sd_formula = if s == "as_printed" { SdFormula::AsPrinted } else { SdFormula::Standard };
    }
    apply_cluster_options(&mut cfg, &args.cluster);
    Ok(cfg)
}

fn apply_cluster_options(cfg: &mut PipelineConfig, o: &ClusterOptions) {
    if let Some(k) = o.k_override {
        cfg.k_override = Some(k);
    }
    if let Some(k) = o.k_max {
        cfg.k_max = k;
    }
    if let Some(t) = o.elbow_tau {
        cfg.elbow_tau = t;
    }
    if let Some(s) = &o.variance_scaling {
        cfg.variance_scaling = if s == "raw" { VarianceScaling::Raw } else { VarianceScaling::Standardized };
    }
    if let Some(b) = o.standardize_features {
        cfg.standardize_features = b;
    }
}

fn cluster(args: ClusterArgs) -> Result<()> {
    let mut cfg = match &args.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::new("", "", "", "", None),
    };
    apply_cluster_options(&mut cfg, &args.options);
    cfg.threads = args.threads.or(cfg.threads);
    if !(cfg.elbow_tau > 0.0 && cfg.elbow_tau < 1.0) {
        return Err(Error::Config(format!("elbow_tau must lie in (0, 1), got {}", cfg.elbow_tau)));
    }
    let features = read_features_csv(&args.features)?;
    let zones = args.zones.as_ref().map(load_zones).transpose()?;
    let model = cfg.with_pool(|| clustering::fit(&features, &cfg.cluster_config()))??;

    let out = &args.output_dir;
    std::fs::create_dir_all(out).map_err(|e| Error::Config(format!("{}: {e}", out.display())))?;
    write_or_remove(&out.join(pipeline::CLUSTERS_FILE), |p| clustering::write_clusters_csv(&model, p))?;
    write_or_remove(&out.join(pipeline::VARIANCE_FILE), |p| clustering::write_variance_curve_csv(&model.variance_curve, p))?;
    write_or_remove(&out.join(pipeline::MERGES_FILE), |p| clustering::write_merges_csv(&model.tree, p))?;
    if let Some(z) = &zones {
        write_or_remove(&out.join(pipeline::CLUSTERS_GEOJSON_FILE), |p| clustering::write_clusters_geojson(&model, z, p))?;
    }
    println!("k = {} ({:?}); labels {:?}", model.k, model.k_source, model.labels);
    Ok(())
}

fn poi_sig(args: PoiSigArgs) -> Result<()> {
    let zones = load_zones(&args.zones)?;
    let rows = read_clusters_csv(&args.clusters)?;
    let classes = ClassAssignment::from_rows(&rows, &zones)?;
    let pois = load_pois(&args.pois, &zones)?;
    let rankings = poisig::rank_all(&pois, &classes)?;
    std::fs::create_dir_all(&args.output_dir).map_err(|e| Error::Config(format!("{}: {e}", args.output_dir.display())))?;
    let path = args.output_dir.join(pipeline::SIGNIFICANCE_FILE);
    write_or_remove(&path, |p| poisig::write_significance_csv(&rankings, p))?;
    println!("wrote {} ({} tests)", path.display(), poisig::test_count(&rankings));
    Ok(())
}

fn synth_city(args: SynthArgs) -> Result<()> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            toml::from_str::<SynthConfig>(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        }
        None => SynthConfig::default(),
    };
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = args.n_zones {
        cfg.n_zones = v;
    }
    if let Some(v) = args.n_global {
        cfg.n_global = v;
    }
    if let Some(v) = args.grid_extent_m {
        cfg.grid_extent_m = v;
    }
    if let Some(v) = args.downtown_radius_m {
        cfg.downtown_radius_m = v;
    }
    if let Some(v) = args.flow_scale {
        cfg.flow_scale = v;
    }
    if args.road_spacing_m.is_some() {
        cfg.road_spacing_m = args.road_spacing_m;
    }
    let city = synth::generate(&cfg)?;
    let config_path = city.write_to_dir(&args.out)?;
    println!(
        "wrote {} zones, {} OD entries, {} road nodes, {} POIs; run with --config {}",
        city.zones.len(),
        city.od.len(),
        city.roads.nodes.len(),
        city.pois.len(),
        config_path.display()
    );
    Ok(())
}

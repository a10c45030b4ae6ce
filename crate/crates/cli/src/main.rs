mod output;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use imc_forge::dse::report::ReportFile;
use imc_forge::dse::{self, validate, MemoryHierarchy, SearchOptions};
use imc_forge::imc_cost::{self, ArchConfig};
use imc_forge::tech_model::{DatapointCorpus, ModelConstants, TechConfig};
use imc_forge::workload::{self, Network};
use imc_forge::fixtures;
use serde::Serialize;

use output::{Format, PeakRow};

#[derive(Parser)]
#[command(name = "imc-forge", version, about = "Energy, throughput and mapping model for SRAM in-memory-computing macros")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Peak TOPS, TOPS/W and energy breakdown at full utilization.
    EvalPeak {
        #[arg(long, required = true, num_args = 1..)]
        arch: Vec<PathBuf>,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Fit C_inv(node) and k3 to a datapoint file and write tech.toml.
    FitTech {
        #[arg(long)]
        datapoints: PathBuf,
        /// Output path for the fitted technology file.
        #[arg(long, default_value = "tech.toml")]
        out: PathBuf,
    },
    /// Compare modeled and reported peak efficiency per datapoint.
    Validate {
        #[arg(long)]
        datapoints: PathBuf,
        /// Technology file; fitted from the datapoints when absent.
        #[arg(long)]
        tech: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
    },
    /// Search mappings for networks on architectures and write a report.
    Map(MapArgs),
    /// Re-render a saved report.json.
    Report {
        /// A report.json written by `map`.
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
    },
}

#[derive(Args)]
struct CommonArgs {
    /// Technology file; the bundled fit is used when absent.
    #[arg(long)]
    tech: Option<PathBuf>,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    format: Format,
}

#[derive(Args)]
struct MapArgs {
    #[arg(long, num_args = 1..)]
    arch: Vec<PathBuf>,
    #[arg(long, num_args = 1..)]
    workload: Vec<PathBuf>,
    /// Use the four bundled case-study designs and benchmark networks.
    #[arg(long)]
    case_study: bool,
    /// Rescale macro counts so every design holds the same number of SRAM cells.
    #[arg(long)]
    equal_cells: bool,
    #[arg(long)]
    tech: Option<PathBuf>,
    #[arg(long)]
    hierarchy: Option<PathBuf>,
    /// Output directory for report.json / report.csv.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = ReportFormat::Json)]
    format: ReportFormat,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    single_thread: bool,
    /// Also write every evaluated candidate to mappings.json.
    #[arg(long)]
    dump_mappings: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReportFormat {
    Json,
    Csv,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("IMC_FORGE_LOG", "warn"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", chain_message(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}

/// Joins the cause chain, skipping causes already spelled out by their parent.
fn chain_message(e: &anyhow::Error) -> String {
    let mut msg = String::new();
    for cause in e.chain() {
        let text = cause.to_string().replace('\n', " ");
        if !msg.contains(&text) {
            if !msg.is_empty() {
                msg.push_str(": ");
            }
            msg.push_str(&text);
        }
    }
    msg
}

/// 2 for I/O and parse failures, 1 for model errors.
fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if let Some(err) = cause.downcast_ref::<imc_forge::Error>() {
            return if err.is_input_error() { 2 } else { 1 };
        }
        if cause.is::<std::io::Error>() || cause.is::<csv::Error>() || cause.is::<serde_json::Error>() {
            return 2;
        }
    }
    1
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::EvalPeak { arch, common } => eval_peak(&arch, &common),
        Command::FitTech { datapoints, out } => fit_tech(&datapoints, &out),
        Command::Validate { datapoints, tech, out, format } => validate_cmd(&datapoints, tech.as_deref(), out.as_deref(), format),
        Command::Map(args) => map(&args),
        Command::Report { input, out, format } => report(&input, out.as_deref(), format),
    }
}

fn load_tech(path: Option<&Path>) -> Result<TechConfig> {
    Ok(match path {
        Some(p) => TechConfig::load(p)?,
        None => fixtures::tech().context("fitting the bundled datapoint corpus")?,
    })
}

fn eval_peak(archs: &[PathBuf], args: &CommonArgs) -> Result<()> {
    let tech = load_tech(args.tech.as_deref())?;
    let mut rows = Vec::new();
    for path in archs {
        let cfg = ArchConfig::load(path)?;
        let ra = dse::resolve_arch(&cfg, &tech)?;
        let peak = imc_cost::peak_performance(&cfg.spec, &ra.tech, &ra.constants)?;
        rows.push(PeakRow::new(&cfg, ra.tech.c_inv, &peak));
    }
    output::emit(&output::render_peak(&rows, args.format)?, args.out.as_deref())
}

fn fit_tech(datapoints: &Path, out: &Path) -> Result<()> {
    let corpus = DatapointCorpus::load(datapoints)?;
    let tech = TechConfig::fitted(&corpus.datapoints, &ModelConstants::default())?;
    fs::write(out, tech.to_toml_string()).with_context(|| format!("writing {}", out.display()))?;
    let fit = tech.fit.as_ref().expect("fitted line");
    let dac = tech.dac_fit.as_ref().expect("fitted k3");
    println!(
        "C_inv(node) = {:.6e} F/nm * node + {:.6e} F  (nodes {}..{} nm)",
        fit.slope, fit.intercept, fit.node_min, fit.node_max
    );
    println!("C_inv fit: {} DIMC points, mean |mismatch| {:.2}%", fit.residuals.len(), 100.0 * fit.mean_abs_mismatch);
    for p in &fit.points {
        println!("  {:24} {:6.1} nm  {:+.2}%", p.name, p.node, 100.0 * p.residual);
    }
    for name in &fit.excluded {
        println!("  {name}: excluded (no C_inv reproduces the reported energy)");
    }
    println!("k3 = {:.4} fJ, mean |mismatch| {:.2}% over {} AIMC points", dac.k3 * 1e15, 100.0 * dac.mean_abs_mismatch, dac.residuals.len());
    for (name, r) in &dac.residuals {
        println!("  {name:24} {:+.2}%", 100.0 * r);
    }
    println!("wrote {}", out.display());
    Ok(())
}

fn validate_cmd(datapoints: &Path, tech: Option<&Path>, out: Option<&Path>, format: Format) -> Result<()> {
    let corpus = DatapointCorpus::load(datapoints)?;
    let tech = match tech {
        Some(p) => TechConfig::load(p)?,
        None => TechConfig::fitted(&corpus.datapoints, &ModelConstants::default())?,
    };
    let report = validate::validate_against(&corpus.datapoints, &tech)?;
    output::emit(&output::render_validation(&report, format)?, out)
}

#[derive(Serialize)]
struct LayerDump {
    arch: String,
    network: String,
    layer: String,
    candidates: Vec<dse::CandidateRecord>,
}

fn map(args: &MapArgs) -> Result<()> {
    let mut archs: Vec<ArchConfig> = args.arch.iter().map(|p| ArchConfig::load(p)).collect::<imc_forge::Result<_>>()?;
    let mut networks: Vec<Network> =
        args.workload.iter().map(|p| workload::load_network(p)).collect::<imc_forge::Result<_>>()?;
    if args.case_study {
        archs.extend(fixtures::archs()?);
        networks.extend(fixtures::networks()?);
    }
    if archs.is_empty() {
        bail!("no architecture given (use --arch or --case-study)");
    }
    if networks.is_empty() {
        bail!("no workload given (use --workload or --case-study)");
    }
    if args.equal_cells || args.case_study {
        archs = dse::normalize_macro_counts(&archs)
            .into_iter()
            .map(|n| {
                log::info!("{}: {} -> {} macros", n.config.name, n.original_macros, n.config.spec.macros);
                n.config
            })
            .collect();
    }
    let tech = load_tech(args.tech.as_deref())?;
    let hierarchy = match &args.hierarchy {
        Some(p) => MemoryHierarchy::load(p)?,
        None => MemoryHierarchy::default(),
    };
    let opts = SearchOptions {
        threads: args.threads,
        single_thread: args.single_thread,
        ..SearchOptions::default()
    };
    if args.threads == Some(0) {
        bail!("--threads must be >= 1");
    }

    let mut report = ReportFile::new();
    let mut dumps = Vec::new();
    for cfg in &archs {
        let ra = dse::resolve_arch(cfg, &tech)?;
        for net in &networks {
            let result = opts.install(|| {
                dse::evaluate_network(net, &ra.config.spec, &ra.tech, &ra.constants, &hierarchy, &opts)
            })??;
            println!(
                "{:16} {:16} {:>12.4} nJ  macro {:>12.4} nJ  traffic {:>12.4} nJ  {:>10.3} us",
                cfg.name,
                net.name,
                result.totals.energy_total_with_memory * 1e9,
                result.totals.breakdown.e_total * 1e9,
                result.totals.traffic.e_total() * 1e9,
                result.totals.latency * 1e6,
            );
            report.push(&cfg.name, &result);
            if args.dump_mappings {
                for layer in net.layers.iter().filter(|l| l.op_kind.is_modeled()) {
                    let evaluated = opts.install(|| {
                        dse::evaluate_candidates(layer, &ra.config.spec, &ra.tech, &ra.constants, &hierarchy, &opts)
                    })??;
                    dumps.push(LayerDump {
                        arch: cfg.name.clone(),
                        network: net.name.clone(),
                        layer: layer.name.clone(),
                        candidates: dse::candidate_records(&evaluated),
                    });
                }
            }
        }
    }

    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let path = match args.format {
        ReportFormat::Json => {
            let p = args.out.join("report.json");
            output::write_file(&p, &output::report_json(&report)?)?;
            p
        }
        ReportFormat::Csv => {
            let p = args.out.join("report.csv");
            output::write_file(&p, &output::report_csv(&report.rows)?)?;
            p
        }
    };
    println!("wrote {}", path.display());
    if args.dump_mappings {
        let p = args.out.join("mappings.json");
        output::write_file(&p, &(serde_json::to_string_pretty(&dumps)? + "\n"))?;
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn report(input: &Path, out: Option<&Path>, format: Format) -> Result<()> {
    let src = fs::read_to_string(input).with_context(|| format!("reading {}", input.display()))?;
    let report: ReportFile =
        serde_json::from_str(&src).with_context(|| format!("parsing {}", input.display()))?;
    output::emit(&output::render_report(&report, format)?, out)
}

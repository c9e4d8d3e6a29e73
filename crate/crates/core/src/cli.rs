//! Command-line front end: `sim run`, `coverage {map,cdf,compare}` and
//! `validate`.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure.
//! Every artifact starts with a header naming the tool version, the seed and
//! a digest of the configuration that produced it. All outputs are computed
//! in memory first, so a failing run leaves no partial files behind.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use crate::agents::{BillingMode, Scenario, Simulation};
use crate::coverage::{
    self, compare_scenarios, generate_synthetic_deployment, ingest_sites, read_grid_csv,
    restricted_cdf, rss_map, Area, ChannelModel, Deployment, RestrictedCdf, RssGrid,
    ScenarioComparison, Tier, CHAIN_TAG,
};
use crate::ledger::Digest;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Parser)]
#[command(
    name = "neutral-host",
    version,
    about = "Neutral-host small-cell billing and coverage simulator"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Smart-contract billing simulation
    #[command(subcommand)]
    Sim(SimCommand),
    /// RSS coverage maps and statistics
    #[command(subcommand)]
    Coverage(CoverageCommand),
    /// Check scenario (.toml) or site (.csv) files without running them
    Validate {
        #[arg(required = true)]
        files: Vec<PathBuf>,
        /// Area side used to bounds-check site files
        #[arg(long, default_value_t = 1000.0)]
        area_m: f64,
    },
}

#[derive(Debug, Subcommand)]
pub enum SimCommand {
    /// Run a scenario and write its trace, chain and accounting summary
    Run(SimRunArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Jsonl,
}

#[derive(Debug, Args)]
pub struct SimRunArgs {
    pub scenario: PathBuf,
    /// Override the scenario seed
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override the scenario billing mode
    #[arg(long, value_enum)]
    pub billing_mode: Option<BillingMode>,
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
    /// Format of the accounting summary
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
}

#[derive(Debug, Args, Clone)]
pub struct DeploymentArgs {
    /// Site CSV (`site_id,x_m,y_m,tier,power_dbm,tag`)
    #[arg(long, conflicts_with_all = ["macro_count", "small_count", "chain_fraction"])]
    pub sites: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    pub macro_count: usize,
    #[arg(long, default_value_t = 40)]
    pub small_count: usize,
    #[arg(long, default_value_t = 0.3)]
    pub chain_fraction: f64,
    /// Side of the square study area
    #[arg(long, default_value_t = 1000.0)]
    pub area_m: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 5.0)]
    pub resolution_m: f64,
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
}

#[derive(Debug, Subcommand)]
pub enum CoverageCommand {
    /// Strongest-signal map of the full deployment
    Map {
        #[command(flatten)]
        deployment: DeploymentArgs,
    },
    /// Map plus the CDF restricted to points below the threshold
    Cdf {
        #[command(flatten)]
        deployment: DeploymentArgs,
        #[arg(long, default_value_t = -42.0, allow_hyphen_values = true)]
        threshold_dbm: f64,
    },
    /// Macro-only vs. macro + chain-tagged vs. macro + all small cells
    Compare {
        #[command(flatten)]
        deployment: DeploymentArgs,
        #[arg(long, default_value_t = -42.0, allow_hyphen_values = true)]
        threshold_dbm: f64,
        /// Compare two previously exported grid CSVs instead
        #[arg(long, num_args = 2, value_names = ["BASELINE", "AUGMENTED"])]
        grids: Option<Vec<PathBuf>>,
    },
}

#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

fn config_err(message: impl ToString) -> Failure {
    Failure {
        code: EXIT_CONFIG,
        message: message.to_string(),
    }
}

fn runtime_err(message: impl ToString) -> Failure {
    Failure {
        code: EXIT_RUNTIME,
        message: message.to_string(),
    }
}

/// Header stamped on every artifact.
#[derive(Debug, Clone, Serialize)]
pub struct ArtifactHeader {
    pub tool: &'static str,
    pub version: &'static str,
    pub seed: u64,
    pub config_digest: String,
}

impl ArtifactHeader {
    fn new(seed: u64, config: &[u8]) -> Self {
        ArtifactHeader {
            tool: "neutral-host",
            version: VERSION,
            seed,
            config_digest: Digest::of(config).to_hex()[..16].to_owned(),
        }
    }

    fn csv_line(&self) -> String {
        format!(
            "# {} {} seed={} config_digest={}\n",
            self.tool, self.version, self.seed, self.config_digest
        )
    }

    fn jsonl_line(&self) -> String {
        let mut s = serde_json::to_string(&json!({ "header": self })).expect("header serializes");
        s.push('\n');
        s
    }

    fn stamp(&self, format: Format, body: &[u8]) -> Vec<u8> {
        let mut out = match format {
            Format::Csv => self.csv_line(),
            Format::Jsonl => self.jsonl_line(),
        }
        .into_bytes();
        out.extend_from_slice(body);
        out
    }
}

type Artifacts = Vec<(String, Vec<u8>)>;

fn write_artifacts(dir: &Path, artifacts: &Artifacts) -> Result<(), Failure> {
    std::fs::create_dir_all(dir)
        .map_err(|e| runtime_err(format!("cannot create {}: {e}", dir.display())))?;
    for (name, bytes) in artifacts {
        let path = dir.join(name);
        std::fs::write(&path, bytes)
            .map_err(|e| runtime_err(format!("cannot write {}: {e}", path.display())))?;
    }
    Ok(())
}

fn jsonl_rows<T: Serialize>(rows: impl IntoIterator<Item = T>) -> Vec<u8> {
    let mut out = Vec::new();
    for row in rows {
        serde_json::to_writer(&mut out, &row).expect("row serializes");
        out.push(b'\n');
    }
    out
}

fn sim_run(args: &SimRunArgs) -> Result<Artifacts, Failure> {
    let text = std::fs::read_to_string(&args.scenario)
        .map_err(|e| config_err(format!("{}: {e}", args.scenario.display())))?;
    let mut scenario = Scenario::from_toml_str(&text)
        .map_err(|e| config_err(format!("{}: {e}", args.scenario.display())))?;
    if let Some(seed) = args.seed {
        scenario.seed = seed;
    }
    if let Some(mode) = args.billing_mode {
        scenario.billing_mode = mode;
    }
    scenario
        .validate()
        .map_err(|e| config_err(format!("{}: {e}", args.scenario.display())))?;

    let mut config = text.into_bytes();
    config.extend_from_slice(
        format!("\nseed={} mode={:?}", scenario.seed, scenario.billing_mode).as_bytes(),
    );
    let header = ArtifactHeader::new(scenario.seed, &config);

    let (trace, ledger) = Simulation::new(scenario)
        .and_then(Simulation::run)
        .map_err(runtime_err)?;

    let mut trace_body = Vec::new();
    trace.write_jsonl(&mut trace_body).map_err(runtime_err)?;
    let mut chain_body = Vec::new();
    ledger
        .write_chain_jsonl(&mut chain_body)
        .map_err(runtime_err)?;
    let (summary_name, summary_body) = match args.format {
        Format::Csv => {
            let mut body = Vec::new();
            trace.write_summary_csv(&mut body).map_err(runtime_err)?;
            ("summary.csv", body)
        }
        Format::Jsonl => ("summary.jsonl", jsonl_rows(&trace.summary)),
    };
    let reconciliation = jsonl_rows(&trace.reconciliation);
    let snapshot = serde_json::to_vec_pretty(&trace.snapshot).map_err(runtime_err)?;
    let mut snapshot_doc =
        serde_json::to_vec(&json!({ "header": &header })).map_err(runtime_err)?;
    snapshot_doc.push(b'\n');
    snapshot_doc.extend_from_slice(&snapshot);
    snapshot_doc.push(b'\n');

    Ok(vec![
        (
            "trace.jsonl".into(),
            header.stamp(Format::Jsonl, &trace_body),
        ),
        (
            "chain.jsonl".into(),
            header.stamp(Format::Jsonl, &chain_body),
        ),
        (
            summary_name.into(),
            header.stamp(args.format, &summary_body),
        ),
        (
            "reconciliation.jsonl".into(),
            header.stamp(Format::Jsonl, &reconciliation),
        ),
        ("snapshot.json".into(), snapshot_doc),
    ])
}

fn load_deployment(args: &DeploymentArgs) -> Result<(Deployment, Vec<u8>), Failure> {
    let area = Area {
        width_m: args.area_m,
        height_m: args.area_m,
    };
    let mut config = format!(
        "area_m={} resolution_m={} seed={}",
        args.area_m, args.resolution_m, args.seed
    )
    .into_bytes();
    let deployment = match &args.sites {
        Some(path) => {
            let bytes =
                std::fs::read(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
            let ingested = coverage::parse_sites(bytes.as_slice(), area)
                .map_err(|e| config_err(format!("{}:\n{e}", path.display())))?;
            for w in &ingested.warnings {
                eprintln!("warning: {}: {w}", path.display());
            }
            config.extend_from_slice(&bytes);
            ingested.deployment
        }
        None => {
            config.extend_from_slice(
                format!(
                    " synthetic macro={} small={} chain={}",
                    args.macro_count, args.small_count, args.chain_fraction
                )
                .as_bytes(),
            );
            generate_synthetic_deployment(
                args.macro_count,
                args.small_count,
                args.chain_fraction,
                area,
                args.seed,
            )
            .map_err(config_err)?
        }
    };
    Ok((deployment, config))
}

fn grid_artifact(grid: &RssGrid, format: Format) -> Vec<u8> {
    match format {
        Format::Csv => {
            let mut body = Vec::new();
            coverage::write_grid_csv(grid, &mut body).expect("in-memory write");
            body
        }
        Format::Jsonl => jsonl_rows((0..grid.len()).map(|i| {
            let (x, y) = grid.position(i);
            let v = grid.values[i];
            json!({
                "x": x,
                "y": y,
                "rss_dbm": v.is_finite().then_some(v),
                "serving_site": grid.serving_id(i),
            })
        })),
    }
}

fn cdf_artifact(cdf: &RestrictedCdf, format: Format) -> Vec<u8> {
    match format {
        Format::Csv => {
            let mut body = Vec::new();
            coverage::write_cdf_csv(cdf, &mut body).expect("in-memory write");
            body
        }
        Format::Jsonl => jsonl_rows(cdf.points.iter().map(|p| {
            json!({
                "rss_dbm": p.rss_dbm.is_finite().then_some(p.rss_dbm),
                "cum_fraction": p.cum_fraction,
            })
        })),
    }
}

#[derive(Serialize)]
struct ComparisonRow<'a> {
    scenario: &'a str,
    sites: usize,
    mean_gain_db: f64,
    improved_point_count: usize,
    total_points: usize,
    fraction_below_threshold: Option<f64>,
    min_db: f64,
    p50_db: f64,
    p90_db: f64,
    max_db: f64,
}

fn comparison_artifact(rows: &[ComparisonRow<'_>], format: Format) -> Vec<u8> {
    match format {
        Format::Csv => {
            let mut out = String::from(
                "scenario,sites,mean_gain_db,improved_point_count,total_points,fraction_below_threshold,min_db,p50_db,p90_db,max_db\n",
            );
            for r in rows {
                let frac = r
                    .fraction_below_threshold
                    .map(|f| format!("{f:.6}"))
                    .unwrap_or_default();
                writeln!(
                    out,
                    "{},{},{:.6},{},{},{},{:.6},{:.6},{:.6},{:.6}",
                    r.scenario,
                    r.sites,
                    r.mean_gain_db,
                    r.improved_point_count,
                    r.total_points,
                    frac,
                    r.min_db,
                    r.p50_db,
                    r.p90_db,
                    r.max_db
                )
                .expect("string write");
            }
            out.into_bytes()
        }
        Format::Jsonl => jsonl_rows(rows),
    }
}

fn row<'a>(
    scenario: &'a str,
    sites: usize,
    cmp: &ScenarioComparison,
    cdf: Option<&RestrictedCdf>,
) -> ComparisonRow<'a> {
    ComparisonRow {
        scenario,
        sites,
        mean_gain_db: cmp.mean_gain_db,
        improved_point_count: cmp.improved_point_count,
        total_points: cmp.total_points,
        fraction_below_threshold: cdf.map(|c| c.fraction_below),
        min_db: cmp.delta.min_db,
        p50_db: cmp.delta.p50_db,
        p90_db: cmp.delta.p90_db,
        max_db: cmp.delta.max_db,
    }
}

fn ext(format: Format) -> &'static str {
    match format {
        Format::Csv => "csv",
        Format::Jsonl => "jsonl",
    }
}

fn coverage_cmd(cmd: &CoverageCommand) -> Result<Artifacts, Failure> {
    let model = ChannelModel::default();
    match cmd {
        CoverageCommand::Map { deployment: args } => {
            let (d, config) = load_deployment(args)?;
            let header = ArtifactHeader::new(args.seed, &config);
            let grid = rss_map(&d, &model, args.resolution_m, args.seed).map_err(config_err)?;
            Ok(vec![(
                format!("grid.{}", ext(args.format)),
                header.stamp(args.format, &grid_artifact(&grid, args.format)),
            )])
        }
        CoverageCommand::Cdf {
            deployment: args,
            threshold_dbm,
        } => {
            let (d, mut config) = load_deployment(args)?;
            config.extend_from_slice(format!(" threshold={threshold_dbm}").as_bytes());
            let header = ArtifactHeader::new(args.seed, &config);
            let grid = rss_map(&d, &model, args.resolution_m, args.seed).map_err(config_err)?;
            let cdf = restricted_cdf(&grid, *threshold_dbm);
            Ok(vec![
                (
                    format!("grid.{}", ext(args.format)),
                    header.stamp(args.format, &grid_artifact(&grid, args.format)),
                ),
                (
                    format!("cdf.{}", ext(args.format)),
                    header.stamp(args.format, &cdf_artifact(&cdf, args.format)),
                ),
            ])
        }
        CoverageCommand::Compare {
            deployment: args,
            threshold_dbm,
            grids: Some(paths),
        } => {
            let mut config = Vec::new();
            let mut loaded = Vec::new();
            for p in paths {
                let bytes =
                    std::fs::read(p).map_err(|e| config_err(format!("{}: {e}", p.display())))?;
                let grid = read_grid_csv(bytes.as_slice())
                    .map_err(|e| config_err(format!("{}: {e}", p.display())))?;
                config.extend_from_slice(&bytes);
                loaded.push(grid);
            }
            config.extend_from_slice(format!(" threshold={threshold_dbm}").as_bytes());
            let header = ArtifactHeader::new(args.seed, &config);
            let cmp = compare_scenarios(&loaded[0], &loaded[1]).map_err(config_err)?;
            let cdf = restricted_cdf(&loaded[1], *threshold_dbm);
            let rows = [row("augmented", loaded[1].site_ids.len(), &cmp, Some(&cdf))];
            Ok(vec![(
                format!("comparison.{}", ext(args.format)),
                header.stamp(args.format, &comparison_artifact(&rows, args.format)),
            )])
        }
        CoverageCommand::Compare {
            deployment: args,
            threshold_dbm,
            grids: None,
        } => {
            let (d, mut config) = load_deployment(args)?;
            config.extend_from_slice(format!(" threshold={threshold_dbm}").as_bytes());
            let header = ArtifactHeader::new(args.seed, &config);
            let fmt = args.format;
            let stamp = |body: Vec<u8>| header.stamp(fmt, &body);

            let baseline_d = d.macro_only();
            let baseline =
                rss_map(&baseline_d, &model, args.resolution_m, args.seed).map_err(config_err)?;
            let baseline_cdf = restricted_cdf(&baseline, *threshold_dbm);
            let mut artifacts = vec![
                (
                    format!("grid_baseline.{}", ext(fmt)),
                    stamp(grid_artifact(&baseline, fmt)),
                ),
                (
                    format!("cdf_baseline.{}", ext(fmt)),
                    stamp(cdf_artifact(&baseline_cdf, fmt)),
                ),
            ];
            if d.count(Tier::Small) == 0 {
                return Ok(artifacts);
            }
            let self_cmp = compare_scenarios(&baseline, &baseline).map_err(runtime_err)?;
            let mut rows = vec![row(
                "baseline",
                baseline_d.sites.len(),
                &self_cmp,
                Some(&baseline_cdf),
            )];
            let variants = [
                ("chain", d.macro_plus_tagged(CHAIN_TAG)),
                ("all", d.clone()),
            ];
            for (name, variant) in &variants {
                let grid =
                    rss_map(variant, &model, args.resolution_m, args.seed).map_err(config_err)?;
                let cdf = restricted_cdf(&grid, *threshold_dbm);
                let cmp = compare_scenarios(&baseline, &grid).map_err(runtime_err)?;
                rows.push(row(name, variant.sites.len(), &cmp, Some(&cdf)));
                artifacts.push((
                    format!("grid_{name}.{}", ext(fmt)),
                    stamp(grid_artifact(&grid, fmt)),
                ));
                artifacts.push((
                    format!("cdf_{name}.{}", ext(fmt)),
                    stamp(cdf_artifact(&cdf, fmt)),
                ));
            }
            artifacts.push((
                format!("comparison.{}", ext(fmt)),
                stamp(comparison_artifact(&rows, fmt)),
            ));
            Ok(artifacts)
        }
    }
}

/// Checks every file and returns one line per problem.
pub fn validate_file(path: &Path, area_m: f64) -> Vec<String> {
    let shown = path.display();
    let is_csv = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if is_csv {
        let area = Area {
            width_m: area_m,
            height_m: area_m,
        };
        match ingest_sites(path, area) {
            Ok(ingested) => {
                for w in ingested.warnings {
                    eprintln!("warning: {shown}: {w}");
                }
                Vec::new()
            }
            Err(coverage::CoverageError::Malformed(rows)) => {
                rows.iter().map(|r| format!("{shown}: {r}")).collect()
            }
            Err(e) => vec![format!("{shown}: {e}")],
        }
    } else {
        let text = match std::fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) => return vec![format!("{shown}: {e}")],
        };
        match Scenario::from_toml_str(&text).and_then(|s| s.validate()) {
            Ok(()) => Vec::new(),
            Err(crate::agents::ScenarioError::Invalid(issues)) => {
                issues.iter().map(|i| format!("{shown}: {i}")).collect()
            }
            Err(e) => vec![format!("{shown}: {e}")],
        }
    }
}

fn dispatch(cli: &Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Sim(SimCommand::Run(args)) => {
            let artifacts = sim_run(args)?;
            write_artifacts(&args.out_dir, &artifacts)
        }
        Command::Coverage(cmd) => {
            let artifacts = coverage_cmd(cmd)?;
            let dir = match cmd {
                CoverageCommand::Map { deployment }
                | CoverageCommand::Cdf { deployment, .. }
                | CoverageCommand::Compare { deployment, .. } => &deployment.out_dir,
            };
            write_artifacts(dir, &artifacts)
        }
        Command::Validate { files, area_m } => {
            let problems: Vec<String> = files
                .iter()
                .flat_map(|f| validate_file(f, *area_m))
                .collect();
            if problems.is_empty() {
                Ok(())
            } else {
                Err(config_err(problems.join("\n")))
            }
        }
    }
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(&cli) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

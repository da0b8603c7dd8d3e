use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::OnceLock;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use nfirs_core::channel::{
    bs_irs, default_rho_t, irs_user_los, user_links, write_matrix_binary, write_matrix_csv, ChannelVariant,
};
use nfirs_core::config::{known_keys, load_config, load_str, LoadedConfig};
use nfirs_core::geometry::{
    bs_positions, fraunhofer_distance, irs_positions, solve_deployment, validate_criterion, write_positions_csv,
};
use nfirs_core::harness::checks::{figure_checks, Figure};
use nfirs_core::harness::montecarlo::{sample_rates, summarize};
use nfirs_core::harness::{run_experiment, version_string, RunResult, Scenario, ScenarioConfig};
use nfirs_core::metrics::{expected_edof, g_jk_for_geometry, g_jk_theorem1};
use nfirs_core::stats::Estimate;
use nfirs_core::Error;

const EXIT_CONFIG: u8 = 2;
const EXIT_INFEASIBLE: u8 = 3;
const EXIT_NOT_CONVERGED: u8 = 4;

fn override_help() -> &'static str {
    static TEXT: OnceLock<String> = OnceLock::new();
    TEXT.get_or_init(|| {
        let mut keys = known_keys();
        keys.sort();
        format!(
            "Exit codes: 0 success, 2 config error, 3 infeasible problem, 4 optimizer did not converge.\n\nOverride keys for --set:\n  {}",
            keys.join("\n  ")
        )
    })
}

#[derive(Debug, Parser)]
#[command(name = "nfirs", version, about = "Near-field IRS channel analysis and sum-rate optimization", after_long_help = override_help())]
struct Cli {
    /// Scenario file (TOML). Missing keys take reference values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override a config key, e.g. `--set geometry.zeta_irs=6`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,

    /// Directory receiving every output file.
    #[arg(long, default_value = "out", global = true)]
    out_dir: PathBuf,

    /// Replaces `run.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check the IRS placement against the kernel-null deployment rule.
    ValidateDeployment {
        #[arg(long, default_value_t = 2)]
        q: usize,
    },
    /// Place the IRS on the configured direction so that it sits on null `q`.
    SolveDeployment {
        #[arg(long, default_value_t = 2)]
        q: usize,
    },
    /// Write the BS-IRS channel, LoS IRS-user channels and element positions.
    ChannelDump {
        #[arg(long, value_enum, default_value_t = Variant::Exact)]
        variant: Variant,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
    /// Favorable-propagation metrics for the configured geometry.
    Metrics,
    /// Optimize power and phases, then evaluate by Monte Carlo.
    Optimize,
    /// Run the configured experiment.
    Run,
    /// Run the preset scenario behind a figure and print its checks.
    Reproduce {
        #[arg(value_parser = parse_figure)]
        figure: Figure,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Variant {
    Exact,
    FarField,
    Taylor2,
}

impl From<Variant> for ChannelVariant {
    fn from(v: Variant) -> Self {
        match v {
            Variant::Exact => ChannelVariant::Exact,
            Variant::FarField => ChannelVariant::FarField,
            Variant::Taylor2 => ChannelVariant::Taylor2,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Csv,
    Binary,
}

fn parse_figure(s: &str) -> Result<Figure, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Failure carrying the process exit code.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Infeasible(_) => EXIT_INFEASIBLE,
            Error::Io(_) | Error::Json(_) => 1,
            _ => EXIT_CONFIG,
        };
        Failure { code, message: e.to_string() }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Error::from(e).into()
    }
}

type CliResult = Result<u8, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn load(cli: &Cli) -> Result<LoadedConfig, Error> {
    let mut loaded = match &cli.config {
        Some(path) => load_config(path, &cli.overrides)?,
        None => load_str("", &cli.overrides)?,
    };
    if let Some(seed) = cli.seed {
        loaded.scenario.seed = seed;
        loaded.defaults.retain(|k| k != "run.seed");
    }
    loaded.scenario.validate()?;
    Ok(loaded)
}

fn dispatch(cli: &Cli) -> CliResult {
    match &cli.command {
        Command::Reproduce { figure } => reproduce(cli, *figure),
        command => {
            let loaded = load(cli)?;
            match command {
                Command::ValidateDeployment { q } => validate_deployment(&loaded.scenario, *q),
                Command::SolveDeployment { q } => solve(&loaded.scenario, *q),
                Command::ChannelDump { variant, format } => {
                    channel_dump(&loaded.scenario, (*variant).into(), *format, &cli.out_dir)
                }
                Command::Metrics => metrics(&loaded.scenario, &cli.out_dir),
                Command::Optimize => optimize(&loaded, &cli.out_dir),
                Command::Run => run(&loaded, &cli.out_dir),
                Command::Reproduce { .. } => unreachable!(),
            }
        }
    }
}

fn validate_deployment(cfg: &ScenarioConfig, q: usize) -> CliResult {
    let report = validate_criterion(&cfg.geometry, q)?;
    println!("{}", serde_json::to_string_pretty(&report).map_err(Error::from)?);
    if report.satisfied() {
        println!("deployment satisfies the null condition for q = {q}");
        Ok(0)
    } else {
        println!("deployment does not satisfy the null condition for q = {q}");
        Ok(EXIT_INFEASIBLE)
    }
}

fn solve(cfg: &ScenarioConfig, q: usize) -> CliResult {
    let g = &cfg.geometry;
    let center = solve_deployment(q, g.bs_antennas, g.zeta_bs, g.zeta_irs, g.irs_center, g.wavelength())?;
    let placed = g.with_irs_center(center);
    println!("irs_center_m = [{:.6}, {:.6}, {:.6}]", center[0], center[1], center[2]);
    println!("distance_m = {:.6}", placed.irs_distance());
    println!("fraunhofer_distance_m = {:.6}", fraunhofer_distance(&placed));
    Ok(0)
}

fn create(dir: &Path, name: &str) -> Result<fs::File, Failure> {
    fs::create_dir_all(dir)?;
    Ok(fs::File::create(dir.join(name))?)
}

fn channel_dump(cfg: &ScenarioConfig, variant: ChannelVariant, format: Format, dir: &Path) -> CliResult {
    let g = &cfg.geometry;
    let ch = bs_irs(g, default_rho_t(g), variant)?;
    let mut users = nfirs_core::linalg::CMat::zeros(g.irs_elements(), g.users.len());
    for k in 0..g.users.len() {
        users.set_column(k, &irs_user_los(g, k, None)?.los_channel());
    }
    let mut written = Vec::new();
    for (stem, m) in [("bs_irs", &ch.f), ("irs_users_los", &users)] {
        let name = match format {
            Format::Csv => format!("{stem}.csv"),
            Format::Binary => format!("{stem}_{}x{}.bin", m.nrows(), m.ncols()),
        };
        let file = create(dir, &name)?;
        match format {
            Format::Csv => write_matrix_csv(file, m)?,
            Format::Binary => write_matrix_binary(file, m)?,
        }
        written.push(name);
    }
    write_positions_csv(create(dir, "bs_positions.csv")?, &bs_positions(g)?)?;
    write_positions_csv(create(dir, "irs_positions.csv")?, &irs_positions(g)?)?;
    written.extend(["bs_positions.csv".to_string(), "irs_positions.csv".to_string()]);
    for name in written {
        println!("wrote {}", dir.join(name).display());
    }
    Ok(0)
}

#[derive(Serialize)]
struct PairMetric {
    j: usize,
    k: usize,
    g_exact: f64,
}

#[derive(Serialize)]
struct MetricsReport {
    g_closed_form: f64,
    pairs: Vec<PairMetric>,
    expected_edof: Estimate,
}

fn metrics(cfg: &ScenarioConfig, dir: &Path) -> CliResult {
    let g = &cfg.geometry;
    let closed = g_jk_theorem1(g)?.g_jk;
    let mut pairs = Vec::new();
    for j in 0..g.users.len() {
        for k in (j + 1)..g.users.len() {
            pairs.push(PairMetric { j, k, g_exact: g_jk_for_geometry(g, j, k, ChannelVariant::Exact)?.g_jk });
        }
    }
    let f = bs_irs(g, default_rho_t(g), ChannelVariant::Exact)?.f;
    let kappas: Vec<f64> = (0..g.users.len())
        .map(|i| {
            nfirs_core::channel::db_to_linear(
                *cfg.rician_kappa_db.get(i).unwrap_or(cfg.rician_kappa_db.last().unwrap()),
            )
        })
        .collect();
    let links = user_links(g, &kappas)?;
    let edof = expected_edof(&f, &links, cfg.phase_draws, cfg.seed)?;
    println!("g_jk closed form: {closed:.6}");
    for p in &pairs {
        println!("g_jk exact ({}, {}): {:.6}", p.j, p.k, p.g_exact);
    }
    println!("E[EDoF]: {:.4} +/- {:.4} over {} phase draws", edof.mean, edof.stderr, cfg.phase_draws);
    let report = MetricsReport { g_closed_form: closed, pairs, expected_edof: edof };
    serde_json::to_writer_pretty(create(dir, "metrics.json")?, &report).map_err(Error::from)?;
    Ok(0)
}

#[derive(Serialize)]
struct Manifest<'a> {
    config: &'a ScenarioConfig,
    defaults: &'a [String],
    version: String,
    started_unix_s: u64,
    wall_time_s: f64,
}

fn optimize(loaded: &LoadedConfig, dir: &Path) -> CliResult {
    let cfg = &loaded.scenario;
    let started = std::time::Instant::now();
    let started_unix_s = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let sc = Scenario::from_config(cfg)?;
    let state = sc.optimize(&cfg.optimizer_config())?;
    let rates =
        summarize(&sample_rates(&sc.rate_context(), &state.theta, &state.p, cfg.mc_samples, cfg.mc_seed(), false)?);

    state.write_trace_csv(create(dir, "optimize_trace.csv")?)?;
    serde_json::to_writer_pretty(create(dir, "optimize_state.json")?, &state.document()).map_err(Error::from)?;
    let manifest = Manifest {
        config: cfg,
        defaults: &loaded.defaults,
        version: version_string(),
        started_unix_s,
        wall_time_s: started.elapsed().as_secs_f64(),
    };
    serde_json::to_writer_pretty(create(dir, "optimize_manifest.json")?, &manifest).map_err(Error::from)?;

    let initial = state.objective_trace[0];
    println!("initial approximate sum rate: {initial:.4} bit/s/Hz");
    println!("approximate sum rate:         {:.4} bit/s/Hz (+{:.4})", state.sum_rate(), state.sum_rate() - initial);
    println!(
        "Monte Carlo sum rate:         {:.4} +/- {:.4} bit/s/Hz over {} samples",
        rates.mrt.mean, rates.mrt.stderr, cfg.mc_samples
    );
    println!("outer iterations: {}, wrote {}", state.outer_iterations, dir.display());
    if state.converged {
        Ok(0)
    } else {
        eprintln!("warning: optimizer stopped at the iteration cap without converging");
        Ok(EXIT_NOT_CONVERGED)
    }
}

fn persist(result: &RunResult, dir: &Path) -> Result<(), Failure> {
    let (csv, json) = result.persist(dir)?;
    println!("wrote {} and {}", csv.display(), json.display());
    Ok(())
}

fn run(loaded: &LoadedConfig, dir: &Path) -> CliResult {
    let mut result = run_experiment(&loaded.scenario)?;
    result.metadata.defaults = loaded.defaults.clone();
    persist(&result, dir)?;
    Ok(0)
}

fn reproduce(cli: &Cli, figure: Figure) -> CliResult {
    if cli.config.is_some() || !cli.overrides.is_empty() {
        return Err(Failure {
            code: EXIT_CONFIG,
            message: "reproduce uses a fixed preset; only --seed and --out-dir apply".into(),
        });
    }
    let mut cfg = figure.config();
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    println!("{figure}: {}", figure.description());
    let result = run_experiment(&cfg)?;
    persist(&result, &cli.out_dir)?;
    let checks = figure_checks(figure, &result)?;
    for c in &checks {
        println!("{c}");
    }
    Ok(if checks.iter().all(|c| c.passed) { 0 } else { 1 })
}

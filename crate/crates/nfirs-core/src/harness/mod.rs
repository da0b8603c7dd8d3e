//! Scripted experiments: sweeps of the favorable-propagation metrics, EDoF
//! and optimized ergodic rates, with CSV and JSON persistence.

pub mod checks;
pub mod montecarlo;

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::{bs_irs, db_to_linear, dbm_to_watts, default_rho_t, user_links, ChannelVariant, IrsUserLink};
use crate::error::{Error, Result};
use crate::geometry::SystemGeometry;
use crate::linalg::CMat;
use crate::metrics::{expected_edof, g_jk_for_geometry, g_jk_theorem1};
use crate::moments::{build_moment_set, MomentSet};
use crate::optimizer::{optimize, OptimizerConfig, OptimizerState};
use crate::stats::{substream, Estimate};

use montecarlo::{sample_rates, summarize, RateContext};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    GjkSweep,
    EdofSweep,
    RateVsPower,
    RateVsKappa,
    Convergence,
    EdofVsIrsSize,
    FloorSweep,
}

impl Experiment {
    pub const ALL: [Experiment; 7] = [
        Experiment::GjkSweep,
        Experiment::EdofSweep,
        Experiment::RateVsPower,
        Experiment::RateVsKappa,
        Experiment::Convergence,
        Experiment::EdofVsIrsSize,
        Experiment::FloorSweep,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::GjkSweep => "gjk_sweep",
            Experiment::EdofSweep => "edof_sweep",
            Experiment::RateVsPower => "rate_vs_power",
            Experiment::RateVsKappa => "rate_vs_kappa",
            Experiment::Convergence => "convergence",
            Experiment::EdofVsIrsSize => "edof_vs_irs_size",
            Experiment::FloorSweep => "floor_sweep",
        }
    }

    /// Column name of the sweep axis.
    pub fn axis(self) -> &'static str {
        match self {
            Experiment::GjkSweep => "irs_y_m",
            Experiment::EdofSweep => "irs_distance_m",
            Experiment::RateVsPower => "p_max_dbm",
            Experiment::RateVsKappa => "kappa_db",
            Experiment::Convergence => "outer_iter",
            Experiment::EdofVsIrsSize | Experiment::FloorSweep => "irs_side",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown experiment `{s}`")))
    }
}

/// A fully resolved scenario. Per-user lists shorter than the user count
/// are extended with their last entry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub geometry: SystemGeometry,
    pub rician_kappa_db: Vec<f64>,
    pub noise_dbm: Vec<f64>,
    pub p_max_dbm: f64,
    pub mc_samples: usize,
    /// Random-phase draws per E[EDoF] estimate.
    pub phase_draws: usize,
    pub seed: u64,
    pub experiment: Experiment,
    /// Sweep-axis values; unused by `Convergence`.
    pub sweep: Vec<f64>,
    /// `[zeta_bs, zeta_irs]` pairs, one series each.
    pub sparsities: Vec<[f64; 2]>,
    /// `[rows, cols]` IRS sizes, one series each.
    pub irs_sizes: Vec<[usize; 2]>,
    pub p_max_dbm_series: Vec<f64>,
    pub user_counts: Vec<usize>,
    pub optimizer: OptimizerConfig,
}

pub const MIN_MC_SAMPLES: usize = 100;

impl ScenarioConfig {
    /// The reference deployment evaluated at a desk-scale 20×20 IRS.
    pub fn reference(experiment: Experiment) -> Self {
        Self {
            geometry: SystemGeometry::reference().with_irs_size(20, 20),
            rician_kappa_db: vec![10.0],
            noise_dbm: vec![-115.0],
            p_max_dbm: 15.0,
            mc_samples: 10_000,
            phase_draws: 1_000,
            seed: 1,
            experiment,
            sweep: Vec::new(),
            sparsities: vec![[1.0, 1.0], [3.0, 6.0]],
            irs_sizes: vec![[20, 20]],
            p_max_dbm_series: vec![15.0],
            user_counts: vec![4],
            optimizer: OptimizerConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        if self.mc_samples < MIN_MC_SAMPLES {
            return Err(Error::Config(format!(
                "run.mc_samples must be at least {MIN_MC_SAMPLES} (got {})",
                self.mc_samples
            )));
        }
        if self.phase_draws == 0 {
            return Err(Error::Config("run.phase_draws must be positive".into()));
        }
        if self.rician_kappa_db.is_empty() || self.rician_kappa_db.iter().any(|k| k.is_nan() || *k == f64::NEG_INFINITY)
        {
            return Err(Error::Config("fading.rician_kappa_db needs at least one value, each finite or +inf".into()));
        }
        if self.noise_dbm.is_empty() || self.noise_dbm.iter().any(|x| !x.is_finite()) {
            return Err(Error::Config("users.noise_dbm needs at least one finite value".into()));
        }
        // -inf dBm (zero watts) is let through so the optimizer can report it as infeasible.
        if self.p_max_dbm.is_nan()
            || self.p_max_dbm == f64::INFINITY
            || self.p_max_dbm_series.iter().any(|x| !x.is_finite())
        {
            return Err(Error::Config("power levels in dBm must be finite or -inf".into()));
        }
        if self.experiment != Experiment::Convergence && self.sweep.is_empty() {
            return Err(Error::Config(format!("run.sweep must not be empty for {}", self.experiment)));
        }
        if self.sweep.iter().any(|x| !x.is_finite()) {
            return Err(Error::Config("run.sweep values must be finite".into()));
        }
        if matches!(self.experiment, Experiment::EdofVsIrsSize | Experiment::FloorSweep)
            && self.sweep.iter().any(|x| *x < 1.0 || x.fract() != 0.0)
        {
            return Err(Error::Config("run.sweep must hold positive integer IRS side lengths".into()));
        }
        if self.sparsities.is_empty() || self.sparsities.iter().flatten().any(|z| !(*z >= 1.0)) {
            return Err(Error::Config("run.sparsities needs pairs with both factors at least 1".into()));
        }
        if self.irs_sizes.is_empty() || self.irs_sizes.iter().flatten().any(|&n| n == 0) {
            return Err(Error::Config("run.irs_sizes needs positive sizes".into()));
        }
        if self.p_max_dbm_series.is_empty() || self.user_counts.is_empty() || self.user_counts.contains(&0) {
            return Err(Error::Config(
                "run.p_max_dbm_series and run.user_counts must be non-empty and positive".into(),
            ));
        }
        self.optimizer.validate()
    }

    pub fn p_max(&self) -> f64 {
        dbm_to_watts(self.p_max_dbm)
    }

    /// A hash of the seed and every field, used in output file names.
    pub fn seed_hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(text.as_bytes());
        digest[..4].iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// `list[i]`, or its last entry past the end.
fn per_user(list: &[f64], i: usize) -> f64 {
    list.get(i).copied().unwrap_or(*list.last().expect("validated non-empty"))
}

/// Extra user `i` (counting from zero) of `extra` placed on a 60 m arc in
/// the ground plane, spread over azimuths 35° to 80°.
pub fn arc_user(i: usize, extra: usize) -> [f64; 3] {
    let frac = if extra > 1 { i as f64 / (extra - 1) as f64 } else { 0.5 };
    let az = (35.0 + 45.0 * frac).to_radians();
    [60.0 * az.cos(), 60.0 * az.sin(), 0.0]
}

/// Geometry with the user list truncated or extended on the arc to `count`.
pub fn with_user_count(geom: &SystemGeometry, count: usize) -> SystemGeometry {
    let mut g = geom.clone();
    let base = g.users.len();
    if count <= base {
        g.users.truncate(count);
    } else {
        let extra = count - base;
        g.users.extend((0..extra).map(|i| arc_user(i, extra)));
    }
    g
}

/// Channels, links and moments for one geometry.
pub struct Scenario {
    pub geometry: SystemGeometry,
    pub f: CMat,
    pub links: Vec<IrsUserLink>,
    pub moments: MomentSet,
    pub sigmas: Vec<f64>,
    pub p_max: f64,
}

impl Scenario {
    pub fn build(geometry: &SystemGeometry, kappa_db: &[f64], noise_dbm: &[f64], p_max_dbm: f64) -> Result<Self> {
        geometry.validate()?;
        let k = geometry.users.len();
        let f = bs_irs(geometry, default_rho_t(geometry), ChannelVariant::Exact)?.f;
        let kappas: Vec<f64> = (0..k).map(|i| db_to_linear(per_user(kappa_db, i))).collect();
        let links = user_links(geometry, &kappas)?;
        let moments = build_moment_set(&f, &links)?;
        let sigmas = (0..k).map(|i| dbm_to_watts(per_user(noise_dbm, i))).collect();
        Ok(Self { geometry: geometry.clone(), f, links, moments, sigmas, p_max: dbm_to_watts(p_max_dbm) })
    }

    pub fn from_config(cfg: &ScenarioConfig) -> Result<Self> {
        Self::build(&cfg.geometry, &cfg.rician_kappa_db, &cfg.noise_dbm, cfg.p_max_dbm)
    }

    pub fn rate_context(&self) -> RateContext<'_> {
        RateContext { f: &self.f, links: &self.links, sigmas: &self.sigmas, p_max: self.p_max }
    }

    pub fn optimize(&self, cfg: &OptimizerConfig) -> Result<OptimizerState> {
        optimize(&self.moments, &self.sigmas, self.p_max, cfg)
    }
}

/// Independent seed for a named purpose.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    substream(seed, stream).next_u64()
}

const OPTIMIZER_STREAM: u64 = 1;
const MC_STREAM: u64 = 2;
const EDOF_STREAM: u64 = 3;

impl ScenarioConfig {
    pub fn optimizer_config(&self) -> OptimizerConfig {
        OptimizerConfig { seed: derive_seed(self.seed, OPTIMIZER_STREAM), ..self.optimizer.clone() }
    }

    pub fn mc_seed(&self) -> u64 {
        derive_seed(self.seed, MC_STREAM)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub name: String,
    pub values: Vec<f64>,
    /// Monte Carlo standard errors; absent for deterministic series.
    pub stderr: Option<Vec<f64>>,
}

impl Series {
    fn exact(name: String, values: Vec<f64>) -> Self {
        Self { name, values, stderr: None }
    }

    fn estimated(name: String, values: &[Estimate]) -> Self {
        Self {
            name,
            values: values.iter().map(|e| e.mean).collect(),
            stderr: Some(values.iter().map(|e| e.stderr).collect()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub config: ScenarioConfig,
    /// Config keys filled from defaults rather than read from a file.
    pub defaults: Vec<String>,
    pub seed: u64,
    pub seed_hash: String,
    pub version: String,
    pub started_unix_s: u64,
    pub wall_time_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub experiment: Experiment,
    pub axis: String,
    pub sweep_axis: Vec<f64>,
    pub series: Vec<Series>,
    pub metadata: RunMetadata,
}

impl RunResult {
    pub fn series(&self, name: &str) -> Option<&Series> {
        self.series.iter().find(|s| s.name == name)
    }

    /// One row per sweep point; each Monte Carlo series is followed by its
    /// `_stderr` column.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let mut header = vec![self.axis.clone()];
        for s in &self.series {
            header.push(s.name.clone());
            if s.stderr.is_some() {
                header.push(format!("{}_stderr", s.name));
            }
        }
        writeln!(out, "{}", header.join(","))?;
        for (i, x) in self.sweep_axis.iter().enumerate() {
            let mut row = vec![format_value(*x)];
            for s in &self.series {
                row.push(format_value(s.values[i]));
                if let Some(se) = &s.stderr {
                    row.push(format_value(se[i]));
                }
            }
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }

    pub fn csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("CSV is ASCII")
    }

    /// Writes `<experiment>_<timestamp>_<seedhash>.{csv,json}` into `dir`.
    pub fn persist(&self, dir: &Path) -> Result<(PathBuf, PathBuf)> {
        fs::create_dir_all(dir)?;
        let stem = format!("{}_{}_{}", self.experiment, self.metadata.started_unix_s, self.metadata.seed_hash);
        let csv = dir.join(format!("{stem}.csv"));
        let json = dir.join(format!("{stem}.json"));
        self.write_csv(fs::File::create(&csv)?)?;
        serde_json::to_writer_pretty(fs::File::create(&json)?, self)?;
        Ok((csv, json))
    }
}

fn format_value(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.fract() == 0.0 && x.abs() < 1e15 {
        format!("{x:.0}")
    } else {
        format!("{x:.10e}")
    }
}

pub fn version_string() -> String {
    format!("v{}", env!("CARGO_PKG_VERSION"))
}

fn sparsity_tag(z: &[f64; 2]) -> String {
    format!("zbs{}_zirs{}", z[0], z[1])
}

fn size_tag(s: &[usize; 2]) -> String {
    format!("n{}", s[0] * s[1])
}

fn power_tag(p: f64) -> String {
    format!("p{p}dbm")
}

/// Output of one sweep point: values in series order.
type Point = Vec<Estimate>;

fn exact(x: f64) -> Estimate {
    Estimate { mean: x, stderr: f64::NAN }
}

/// Runs `cfg.experiment`. Sweep points are evaluated in parallel and
/// collected in sweep order.
pub fn run_experiment(cfg: &ScenarioConfig) -> Result<RunResult> {
    cfg.validate()?;
    let started = Instant::now();
    let started_unix_s = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let (names, mc, axis, rows) = match cfg.experiment {
        Experiment::GjkSweep => gjk_sweep(cfg)?,
        Experiment::EdofSweep => edof_sweep(cfg)?,
        Experiment::EdofVsIrsSize => edof_vs_size(cfg)?,
        Experiment::FloorSweep => floor_sweep(cfg)?,
        Experiment::RateVsPower => rate_vs_power(cfg)?,
        Experiment::RateVsKappa => rate_vs_kappa(cfg)?,
        Experiment::Convergence => convergence(cfg)?,
    };
    let series = names
        .into_iter()
        .zip(mc)
        .enumerate()
        .map(|(i, (name, is_mc))| {
            let column: Vec<Estimate> = rows.iter().map(|r| r[i]).collect();
            if is_mc {
                Series::estimated(name, &column)
            } else {
                Series::exact(name, column.iter().map(|e| e.mean).collect())
            }
        })
        .collect();
    Ok(RunResult {
        experiment: cfg.experiment,
        axis: cfg.experiment.axis().to_string(),
        sweep_axis: axis,
        series,
        metadata: RunMetadata {
            config: cfg.clone(),
            defaults: Vec::new(),
            seed: cfg.seed,
            seed_hash: cfg.seed_hash(),
            version: version_string(),
            started_unix_s,
            wall_time_s: started.elapsed().as_secs_f64(),
        },
    })
}

type Table = (Vec<String>, Vec<bool>, Vec<f64>, Vec<Point>);

fn sweep_points<F>(cfg: &ScenarioConfig, f: F) -> Result<Vec<Point>>
where
    F: Fn(f64) -> Result<Point> + Sync,
{
    cfg.sweep.par_iter().map(|&x| f(x)).collect()
}

fn gjk_sweep(cfg: &ScenarioConfig) -> Result<Table> {
    let mut names = Vec::new();
    for z in &cfg.sparsities {
        names.push(format!("g_exact_{}", sparsity_tag(z)));
        names.push(format!("g_theorem1_{}", sparsity_tag(z)));
    }
    let [x0, _, z0] = cfg.geometry.irs_center;
    let rows = sweep_points(cfg, |y| {
        let mut out = Vec::new();
        for z in &cfg.sparsities {
            let g = cfg.geometry.with_sparsity(z[0], z[1]).with_irs_center([x0, y, z0]);
            out.push(exact(g_jk_for_geometry(&g, 0, 1, ChannelVariant::Exact)?.g_jk));
            out.push(exact(g_jk_theorem1(&g)?.g_jk));
        }
        Ok(out)
    })?;
    let mc = vec![false; names.len()];
    Ok((names, mc, cfg.sweep.clone(), rows))
}

fn edof_point(geom: &SystemGeometry, cfg: &ScenarioConfig) -> Result<Estimate> {
    let sc = Scenario::build(geom, &cfg.rician_kappa_db, &cfg.noise_dbm, cfg.p_max_dbm)?;
    expected_edof(&sc.f, &sc.links, cfg.phase_draws, derive_seed(cfg.seed, EDOF_STREAM))
}

fn edof_sweep(cfg: &ScenarioConfig) -> Result<Table> {
    let names: Vec<String> = cfg.sparsities.iter().map(|z| format!("edof_{}", sparsity_tag(z))).collect();
    let c = cfg.geometry.irs_center;
    let norm = (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt();
    if norm == 0.0 {
        return Err(Error::DegenerateCenter);
    }
    let rows = sweep_points(cfg, |d| {
        let center = c.map(|v| v / norm * d);
        cfg.sparsities
            .iter()
            .map(|z| edof_point(&cfg.geometry.with_sparsity(z[0], z[1]).with_irs_center(center), cfg))
            .collect()
    })?;
    let mc = vec![true; names.len()];
    Ok((names, mc, cfg.sweep.clone(), rows))
}

fn edof_vs_size(cfg: &ScenarioConfig) -> Result<Table> {
    let names: Vec<String> = cfg.sparsities.iter().map(|z| format!("edof_{}", sparsity_tag(z))).collect();
    let rows = sweep_points(cfg, |side| {
        let n = side as usize;
        cfg.sparsities
            .iter()
            .map(|z| edof_point(&cfg.geometry.with_sparsity(z[0], z[1]).with_irs_size(n, n), cfg))
            .collect()
    })?;
    let mc = vec![true; names.len()];
    Ok((names, mc, cfg.sweep.clone(), rows))
}

fn floor_sweep(cfg: &ScenarioConfig) -> Result<Table> {
    let names = vec!["g_theorem1".to_string(), "two_over_m".to_string()];
    let m = cfg.geometry.bs_antennas as f64;
    let rows = sweep_points(cfg, |side| {
        let n = side as usize;
        let g = g_jk_theorem1(&cfg.geometry.with_irs_size(n, n))?.g_jk;
        Ok(vec![exact(g), exact(2.0 / m)])
    })?;
    Ok((names, vec![false, false], cfg.sweep.clone(), rows))
}

/// Optimizes and evaluates one scenario; returns the optimizer state and
/// the MC rates on common draws.
pub fn optimize_and_evaluate(
    sc: &Scenario,
    cfg: &ScenarioConfig,
    with_random: bool,
) -> Result<(OptimizerState, montecarlo::SchemeRates)> {
    let state = sc.optimize(&cfg.optimizer_config())?;
    let rates = sample_rates(&sc.rate_context(), &state.theta, &state.p, cfg.mc_samples, cfg.mc_seed(), with_random)?;
    Ok((state, summarize(&rates)))
}

fn rate_vs_power(cfg: &ScenarioConfig) -> Result<Table> {
    let mut names = Vec::new();
    let mut mc = Vec::new();
    for k in &cfg.user_counts {
        names.extend([format!("approx_k{k}"), format!("mc_k{k}")]);
        mc.extend([false, true]);
    }
    let rows = sweep_points(cfg, |p_dbm| {
        let mut out = Vec::new();
        for &k in &cfg.user_counts {
            let geom = with_user_count(&cfg.geometry, k);
            let sc = Scenario::build(&geom, &cfg.rician_kappa_db, &cfg.noise_dbm, p_dbm)?;
            let (state, rates) = optimize_and_evaluate(&sc, cfg, false)?;
            out.push(exact(state.sum_rate()));
            out.push(rates.mrt);
        }
        Ok(out)
    })?;
    Ok((names, mc, cfg.sweep.clone(), rows))
}

fn rate_vs_kappa(cfg: &ScenarioConfig) -> Result<Table> {
    let mut names = Vec::new();
    let mut mc = Vec::new();
    let mut cases = Vec::new();
    for size in &cfg.irs_sizes {
        for &p in &cfg.p_max_dbm_series {
            let tag = format!("{}_{}", size_tag(size), power_tag(p));
            names.extend([
                format!("approx_{tag}"),
                format!("optimized_{tag}"),
                format!("interference_free_{tag}"),
                format!("random_{tag}"),
            ]);
            mc.extend([false, true, true, true]);
            cases.push((*size, p));
        }
    }
    let rows = sweep_points(cfg, |kappa_db| {
        let mut out = Vec::new();
        for &([rows, cols], p) in &cases {
            let geom = cfg.geometry.with_irs_size(rows, cols);
            let sc = Scenario::build(&geom, &[kappa_db], &cfg.noise_dbm, p)?;
            let (state, rates) = optimize_and_evaluate(&sc, cfg, true)?;
            out.push(exact(state.sum_rate()));
            out.push(rates.mrt);
            out.push(rates.interference_free);
            out.push(rates.random_phase.expect("random baseline requested"));
        }
        Ok(out)
    })?;
    Ok((names, mc, cfg.sweep.clone(), rows))
}

fn convergence(cfg: &ScenarioConfig) -> Result<Table> {
    let names: Vec<String> = cfg.irs_sizes.iter().map(|s| format!("objective_{}", size_tag(s))).collect();
    let traces: Vec<Vec<f64>> = cfg
        .irs_sizes
        .par_iter()
        .map(|&[rows, cols]| {
            let sc = Scenario::build(
                &cfg.geometry.with_irs_size(rows, cols),
                &cfg.rician_kappa_db,
                &cfg.noise_dbm,
                cfg.p_max_dbm,
            )?;
            Ok(sc.optimize(&cfg.optimizer_config())?.objective_trace)
        })
        .collect::<Result<_>>()?;
    let len = traces.iter().map(Vec::len).max().unwrap_or(0);
    // Shorter traces hold their converged value.
    let rows = (0..len)
        .map(|i| traces.iter().map(|t| exact(*t.get(i).unwrap_or_else(|| t.last().unwrap()))).collect())
        .collect();
    let axis = (0..len).map(|i| i as f64).collect();
    Ok((names.clone(), vec![false; names.len()], axis, rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(experiment: Experiment) -> ScenarioConfig {
        let mut cfg = ScenarioConfig::reference(experiment);
        cfg.geometry = SystemGeometry { bs_antennas: 15, ..cfg.geometry.with_irs_size(4, 4) };
        cfg.mc_samples = 200;
        cfg.phase_draws = 50;
        cfg.irs_sizes = vec![[3, 3], [4, 4]];
        cfg
    }

    #[test]
    fn experiment_names_round_trip() {
        for e in Experiment::ALL {
            assert_eq!(e.name().parse::<Experiment>().unwrap(), e);
        }
        assert!("fig9".parse::<Experiment>().is_err());
    }

    #[test]
    fn arc_users_extend_and_truncate() {
        let g = SystemGeometry::reference();
        assert_eq!(with_user_count(&g, 2).users.len(), 2);
        let g16 = with_user_count(&g, 16);
        assert_eq!(g16.users.len(), 16);
        assert_eq!(&g16.users[..4], &g.users[..]);
        for u in &g16.users[4..] {
            assert!(((u[0] * u[0] + u[1] * u[1]).sqrt() - 60.0).abs() < 1e-9);
        }
    }

    #[test]
    fn validation_rejects_small_sample_counts() {
        let mut cfg = tiny(Experiment::FloorSweep);
        cfg.sweep = vec![2.0];
        cfg.mc_samples = 10;
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        cfg.mc_samples = 100;
        cfg.sweep = vec![2.5];
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn floor_sweep_shapes_and_csv() {
        let mut cfg = tiny(Experiment::FloorSweep);
        cfg.sweep = vec![2.0, 3.0, 5.0];
        let r = run_experiment(&cfg).unwrap();
        assert_eq!(r.sweep_axis.len(), 3);
        assert!(r.series.iter().all(|s| s.values.len() == 3));
        let csv = r.csv_string();
        assert_eq!(csv.lines().next().unwrap(), "irs_side,g_theorem1,two_over_m");
        assert_eq!(csv.lines().count(), 4);
    }

    #[test]
    fn rate_vs_kappa_orders_schemes_on_common_draws() {
        let mut cfg = tiny(Experiment::RateVsKappa);
        cfg.sweep = vec![0.0, 10.0];
        cfg.irs_sizes = vec![[3, 3]];
        let r = run_experiment(&cfg).unwrap();
        let opt = r.series("optimized_n9_p15dbm").unwrap();
        let free = r.series("interference_free_n9_p15dbm").unwrap();
        assert!(opt.values.iter().zip(&free.values).all(|(a, b)| b >= a));
        assert!(opt.stderr.is_some());
        assert!(r.series("approx_n9_p15dbm").unwrap().stderr.is_none());
    }

    #[test]
    fn runs_are_deterministic() {
        for (e, sweep) in [(Experiment::EdofVsIrsSize, vec![2.0, 3.0]), (Experiment::Convergence, vec![])] {
            let mut cfg = tiny(e);
            cfg.sweep = sweep;
            let a = run_experiment(&cfg).unwrap();
            let b = run_experiment(&cfg).unwrap();
            assert_eq!(a.csv_string(), b.csv_string());
        }
    }

    #[test]
    fn persist_writes_named_pair() {
        let mut cfg = tiny(Experiment::FloorSweep);
        cfg.sweep = vec![2.0];
        let r = run_experiment(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let (csv, json) = r.persist(dir.path()).unwrap();
        let stem = csv.file_stem().unwrap().to_str().unwrap().to_string();
        assert!(stem.starts_with("floor_sweep_") && stem.ends_with(&r.metadata.seed_hash));
        let back: RunResult = serde_json::from_reader(fs::File::open(json).unwrap()).unwrap();
        assert_eq!(back.series, r.series);
    }
}

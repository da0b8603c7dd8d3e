//! TOML scenario files with `[geometry]`, `[users]`, `[fading]`, `[run]` and
//! `[optimizer]` sections, `section.key=value` overrides and a canonical
//! dump.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{GridMode, SystemGeometry};
use crate::harness::{Experiment, ScenarioConfig};
use crate::optimizer::{OptimizerConfig, PhaseBudget};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySection {
    pub carrier_frequency_hz: Option<f64>,
    pub bs_antennas: Option<usize>,
    pub zeta_bs: Option<f64>,
    pub irs_rows: Option<usize>,
    pub irs_cols: Option<usize>,
    pub zeta_irs: Option<f64>,
    pub irs_center_m: Option<[f64; 3]>,
    pub grid: Option<GridMode>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UsersSection {
    pub positions_m: Option<Vec<[f64; 3]>>,
    pub noise_dbm: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FadingSection {
    pub rician_kappa_db: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub experiment: Option<Experiment>,
    pub p_max_dbm: Option<f64>,
    pub mc_samples: Option<usize>,
    pub phase_draws: Option<usize>,
    pub seed: Option<u64>,
    pub sweep: Option<Vec<f64>>,
    pub sparsities: Option<Vec<[f64; 2]>>,
    pub irs_sizes: Option<Vec<[usize; 2]>>,
    pub p_max_dbm_series: Option<Vec<f64>>,
    pub user_counts: Option<Vec<usize>>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerSection {
    pub tolerance: Option<f64>,
    pub max_outer: Option<usize>,
    pub inner_iterations: Option<usize>,
    pub inner_tolerance: Option<f64>,
    pub polish_iterations: Option<usize>,
    pub polish_tolerance: Option<f64>,
    pub balance_every: Option<usize>,
    pub rho_scale: Option<f64>,
    pub budget: Option<PhaseBudget>,
}

/// The file layout; every key is optional.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default)]
    pub geometry: GeometrySection,
    #[serde(default)]
    pub users: UsersSection,
    #[serde(default)]
    pub fading: FadingSection,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub optimizer: OptimizerSection,
}

/// A resolved scenario plus the keys that were filled from defaults.
#[derive(Clone, Debug, PartialEq)]
pub struct LoadedConfig {
    pub scenario: ScenarioConfig,
    pub defaults: Vec<String>,
}

/// Default sweep for each experiment.
pub fn default_sweep(experiment: Experiment) -> Vec<f64> {
    match experiment {
        Experiment::GjkSweep => vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
        Experiment::EdofSweep => vec![1.0175, 2.0, 4.0, 6.0, 8.0, 10.0],
        Experiment::RateVsPower => vec![5.0, 10.0, 15.0, 20.0, 25.0],
        Experiment::RateVsKappa => vec![-10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0],
        Experiment::Convergence => Vec::new(),
        Experiment::EdofVsIrsSize => vec![5.0, 10.0, 20.0, 30.0, 40.0],
        Experiment::FloorSweep => vec![40.0, 80.0, 160.0, 320.0],
    }
}

struct Resolver {
    defaults: Vec<String>,
}

impl Resolver {
    fn take<T>(&mut self, key: &str, value: Option<T>, default: T) -> T {
        value.unwrap_or_else(|| {
            self.defaults.push(key.to_string());
            default
        })
    }
}

impl ConfigFile {
    /// Fills missing keys from the reference scenario for the chosen
    /// experiment.
    pub fn resolve(self) -> Result<LoadedConfig> {
        let mut r = Resolver { defaults: Vec::new() };
        let experiment = r.take("run.experiment", self.run.experiment, Experiment::RateVsKappa);
        let base = ScenarioConfig::reference(experiment);
        let (g, u, f, run, o) = (self.geometry, self.users, self.fading, self.run, self.optimizer);
        let bg = &base.geometry;
        let geometry = SystemGeometry {
            carrier_frequency: r.take("geometry.carrier_frequency_hz", g.carrier_frequency_hz, bg.carrier_frequency),
            bs_antennas: r.take("geometry.bs_antennas", g.bs_antennas, bg.bs_antennas),
            zeta_bs: r.take("geometry.zeta_bs", g.zeta_bs, bg.zeta_bs),
            irs_rows: r.take("geometry.irs_rows", g.irs_rows, bg.irs_rows),
            irs_cols: r.take("geometry.irs_cols", g.irs_cols, bg.irs_cols),
            zeta_irs: r.take("geometry.zeta_irs", g.zeta_irs, bg.zeta_irs),
            irs_center: r.take("geometry.irs_center_m", g.irs_center_m, bg.irs_center),
            users: r.take("users.positions_m", u.positions_m, bg.users.clone()),
            grid: r.take("geometry.grid", g.grid, bg.grid),
        };
        let bo = &base.optimizer;
        let optimizer = OptimizerConfig {
            tolerance: r.take("optimizer.tolerance", o.tolerance, bo.tolerance),
            max_outer: r.take("optimizer.max_outer", o.max_outer, bo.max_outer),
            inner_iterations: r.take("optimizer.inner_iterations", o.inner_iterations, bo.inner_iterations),
            inner_tolerance: r.take("optimizer.inner_tolerance", o.inner_tolerance, bo.inner_tolerance),
            polish_iterations: r.take("optimizer.polish_iterations", o.polish_iterations, bo.polish_iterations),
            polish_tolerance: r.take("optimizer.polish_tolerance", o.polish_tolerance, bo.polish_tolerance),
            balance_every: r.take("optimizer.balance_every", o.balance_every, bo.balance_every),
            rho_scale: r.take("optimizer.rho_scale", o.rho_scale, bo.rho_scale),
            budget: r.take("optimizer.budget", o.budget, bo.budget),
            seed: 0,
        };
        let scenario = ScenarioConfig {
            geometry,
            rician_kappa_db: r.take("fading.rician_kappa_db", f.rician_kappa_db, base.rician_kappa_db.clone()),
            noise_dbm: r.take("users.noise_dbm", u.noise_dbm, base.noise_dbm.clone()),
            p_max_dbm: r.take("run.p_max_dbm", run.p_max_dbm, base.p_max_dbm),
            mc_samples: r.take("run.mc_samples", run.mc_samples, base.mc_samples),
            phase_draws: r.take("run.phase_draws", run.phase_draws, base.phase_draws),
            seed: r.take("run.seed", run.seed, base.seed),
            experiment,
            sweep: r.take("run.sweep", run.sweep, default_sweep(experiment)),
            sparsities: r.take("run.sparsities", run.sparsities, base.sparsities.clone()),
            irs_sizes: r.take("run.irs_sizes", run.irs_sizes, base.irs_sizes.clone()),
            p_max_dbm_series: r.take("run.p_max_dbm_series", run.p_max_dbm_series, base.p_max_dbm_series.clone()),
            user_counts: r.take("run.user_counts", run.user_counts, base.user_counts.clone()),
            optimizer,
        };
        scenario.validate()?;
        Ok(LoadedConfig { scenario, defaults: r.defaults })
    }

    /// Every key set explicitly.
    pub fn from_scenario(s: &ScenarioConfig) -> Self {
        let g = &s.geometry;
        let o = &s.optimizer;
        Self {
            geometry: GeometrySection {
                carrier_frequency_hz: Some(g.carrier_frequency),
                bs_antennas: Some(g.bs_antennas),
                zeta_bs: Some(g.zeta_bs),
                irs_rows: Some(g.irs_rows),
                irs_cols: Some(g.irs_cols),
                zeta_irs: Some(g.zeta_irs),
                irs_center_m: Some(g.irs_center),
                grid: Some(g.grid),
            },
            users: UsersSection { positions_m: Some(g.users.clone()), noise_dbm: Some(s.noise_dbm.clone()) },
            fading: FadingSection { rician_kappa_db: Some(s.rician_kappa_db.clone()) },
            run: RunSection {
                experiment: Some(s.experiment),
                p_max_dbm: Some(s.p_max_dbm),
                mc_samples: Some(s.mc_samples),
                phase_draws: Some(s.phase_draws),
                seed: Some(s.seed),
                sweep: Some(s.sweep.clone()),
                sparsities: Some(s.sparsities.clone()),
                irs_sizes: Some(s.irs_sizes.clone()),
                p_max_dbm_series: Some(s.p_max_dbm_series.clone()),
                user_counts: Some(s.user_counts.clone()),
            },
            optimizer: OptimizerSection {
                tolerance: Some(o.tolerance),
                max_outer: Some(o.max_outer),
                inner_iterations: Some(o.inner_iterations),
                inner_tolerance: Some(o.inner_tolerance),
                polish_iterations: Some(o.polish_iterations),
                polish_tolerance: Some(o.polish_tolerance),
                balance_every: Some(o.balance_every),
                rho_scale: Some(o.rho_scale),
                budget: Some(o.budget),
            },
        }
    }
}

/// Every `section.key` the schema accepts.
pub fn known_keys() -> Vec<String> {
    let full = ConfigFile::from_scenario(&ScenarioConfig::reference(Experiment::Convergence));
    let table = toml::Table::try_from(&full).expect("schema serializes");
    let mut keys = Vec::new();
    for (section, body) in &table {
        if let toml::Value::Table(t) = body {
            keys.extend(t.keys().map(|k| format!("{section}.{k}")));
        }
    }
    keys
}

/// Parses `section.key=value`; the value is read as a TOML value and falls
/// back to a bare string.
pub fn parse_override(spec: &str) -> Result<(String, String, toml::Value)> {
    let (path, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{spec}` is not of the form section.key=value")))?;
    let path = path.trim();
    let (section, key) =
        path.split_once('.').ok_or_else(|| Error::Config(format!("override key `{path}` must be section.key")))?;
    if !known_keys().iter().any(|k| k == path) {
        return Err(Error::Config(format!("unknown override key `{path}`")));
    }
    let raw = raw.trim();
    let value = match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    Ok((section.to_string(), key.to_string(), value))
}

fn apply_overrides(table: &mut toml::Table, overrides: &[String]) -> Result<()> {
    for spec in overrides {
        let (section, key, value) = parse_override(spec)?;
        let entry = table.entry(section.clone()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        match entry {
            toml::Value::Table(t) => {
                t.insert(key, value);
            }
            _ => return Err(Error::Config(format!("`{section}` is not a section"))),
        }
    }
    Ok(())
}

/// Parses TOML text, applies overrides and resolves defaults.
pub fn load_str(text: &str, overrides: &[String]) -> Result<LoadedConfig> {
    let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
    apply_overrides(&mut table, overrides)?;
    let file: ConfigFile =
        toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
    file.resolve()
}

pub fn load_config(path: &Path, overrides: &[String]) -> Result<LoadedConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    load_str(&text, overrides).map_err(|e| match e {
        Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Canonical TOML with every key present.
pub fn dump(s: &ScenarioConfig) -> String {
    toml::to_string(&ConfigFile::from_scenario(s)).expect("config serializes")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_fills_everything_from_defaults() {
        let loaded = load_str("", &[]).unwrap();
        assert_eq!(loaded.scenario.geometry, ScenarioConfig::reference(Experiment::RateVsKappa).geometry);
        assert!(loaded.defaults.contains(&"geometry.zeta_irs".to_string()));
        assert_eq!(loaded.defaults.len(), known_keys().len());
    }

    #[test]
    fn override_replaces_file_value() {
        let loaded = load_str("[geometry]\nzeta_irs = 4.0\n", &["geometry.zeta_irs=6".into()]).unwrap();
        assert_eq!(loaded.scenario.geometry.zeta_irs, 6.0);
        assert!(!loaded.defaults.contains(&"geometry.zeta_irs".to_string()));
        let loaded = load_str(
            "",
            &[
                "run.experiment=floor_sweep".into(),
                "geometry.grid=odd".into(),
                "geometry.bs_antennas=127".into(),
                "geometry.irs_rows=21".into(),
                "geometry.irs_cols=21".into(),
            ],
        )
        .unwrap();
        assert_eq!(loaded.scenario.experiment, Experiment::FloorSweep);
        assert_eq!(loaded.scenario.geometry.grid, GridMode::Odd);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(
            matches!(load_str("", &["geometry.zeta=6".into()]), Err(Error::Config(m)) if m.contains("geometry.zeta"))
        );
        assert!(load_str("", &["nosection=1".into()]).is_err());
        assert!(load_str("[geometry]\nbogus = 1\n", &[]).is_err());
        assert!(load_str("[extra]\n", &[]).is_err());
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let err = load_str("[run]\nseed = 1\nmc_samples = \n", &[]).unwrap_err().to_string();
        assert!(err.contains("line 3"), "{err}");
    }

    #[test]
    fn even_bs_count_needs_centered_grid() {
        let err = load_str("[geometry]\ngrid = \"odd\"\nbs_antennas = 128\n", &[]).unwrap_err();
        assert!(matches!(err, Error::EvenCount { .. }));
    }

    #[test]
    fn dump_round_trips() {
        let loaded =
            load_str("[run]\nexperiment = \"gjk_sweep\"\nseed = 9\n[fading]\nrician_kappa_db = [inf]\n", &[]).unwrap();
        let text = dump(&loaded.scenario);
        let again = load_str(&text, &[]).unwrap();
        assert_eq!(again.scenario, loaded.scenario);
        assert!(again.defaults.is_empty());
        assert_eq!(dump(&again.scenario), text);
    }

    #[test]
    fn missing_file_names_path() {
        let err = load_config(Path::new("/nonexistent/scenario.toml"), &[]).unwrap_err().to_string();
        assert!(err.contains("/nonexistent/scenario.toml"));
    }
}

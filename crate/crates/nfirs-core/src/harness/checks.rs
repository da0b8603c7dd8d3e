//! Pre-baked figure scenarios and the pass/fail checks attached to them.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use super::{Experiment, RunResult, ScenarioConfig};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Figure {
    Fig2,
    Fig3,
    Fig4,
    Fig5,
    Fig6,
    Fig7,
    Fig8,
}

impl Figure {
    pub const ALL: [Figure; 7] =
        [Figure::Fig2, Figure::Fig3, Figure::Fig4, Figure::Fig5, Figure::Fig6, Figure::Fig7, Figure::Fig8];

    pub fn id(self) -> &'static str {
        match self {
            Figure::Fig2 => "fig2",
            Figure::Fig3 => "fig3",
            Figure::Fig4 => "fig4",
            Figure::Fig5 => "fig5",
            Figure::Fig6 => "fig6",
            Figure::Fig7 => "fig7",
            Figure::Fig8 => "fig8",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            Figure::Fig2 => "E[EDoF] versus IRS distance for dense and sparse arrays, N = 1600",
            Figure::Fig3 => "g_jk versus IRS y-coordinate at (-3, y, 3), N = 1600",
            Figure::Fig4 => "approximate and MC sum rate versus P_max for K = 4, 8, 16, N = 400",
            Figure::Fig5 => "sum rate versus Rician factor at P_max = 10 and 20 dBm, N = 600",
            Figure::Fig6 => "sum rate versus Rician factor for N = 200 and 600, P_max = 15 dBm",
            Figure::Fig7 => "optimizer convergence traces for N = 200 and 600",
            Figure::Fig8 => "E[EDoF] versus IRS side length",
        }
    }

    /// Scenario with the figure's stated parameters.
    pub fn config(self) -> ScenarioConfig {
        let mut cfg = match self {
            Figure::Fig2 => {
                let mut c = ScenarioConfig::reference(Experiment::EdofSweep);
                c.geometry = c.geometry.with_irs_size(40, 40);
                c.sweep = vec![1.0175, 2.0, 3.0, 4.0, 6.0, 8.0, 10.0];
                c.sparsities = vec![[1.0, 1.0], [2.0, 3.0], [3.0, 6.0]];
                c
            }
            Figure::Fig3 => {
                let mut c = ScenarioConfig::reference(Experiment::GjkSweep);
                c.geometry = c.geometry.with_irs_size(40, 40).with_irs_center([-3.0, 0.0, 3.0]);
                c.sweep = vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
                c.sparsities = vec![[1.0, 1.0], [2.0, 3.0], [3.0, 6.0]];
                c
            }
            Figure::Fig4 => {
                let mut c = ScenarioConfig::reference(Experiment::RateVsPower);
                c.sweep = vec![5.0, 10.0, 15.0, 20.0, 25.0];
                c.user_counts = vec![4, 8, 16];
                c
            }
            Figure::Fig5 => {
                let mut c = ScenarioConfig::reference(Experiment::RateVsKappa);
                c.sweep = vec![-10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0];
                c.irs_sizes = vec![[20, 30]];
                c.p_max_dbm_series = vec![10.0, 20.0];
                c
            }
            Figure::Fig6 => {
                let mut c = ScenarioConfig::reference(Experiment::RateVsKappa);
                c.sweep = vec![-10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0];
                c.irs_sizes = vec![[10, 20], [20, 30]];
                c.p_max_dbm_series = vec![15.0];
                c
            }
            Figure::Fig7 => {
                let mut c = ScenarioConfig::reference(Experiment::Convergence);
                c.irs_sizes = vec![[10, 20], [20, 30]];
                c
            }
            Figure::Fig8 => {
                let mut c = ScenarioConfig::reference(Experiment::EdofVsIrsSize);
                c.sweep = vec![5.0, 10.0, 20.0, 30.0, 40.0];
                c
            }
        };
        cfg.seed = 1;
        cfg
    }
}

impl fmt::Display for Figure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Figure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Figure::ALL
            .into_iter()
            .find(|f| f.id() == s)
            .ok_or_else(|| Error::Config(format!("unknown figure `{s}` (expected fig2..fig8)")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self { name: name.into(), passed, detail: detail.into() }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] {}: {}", if self.passed { "PASS" } else { "FAIL" }, self.name, self.detail)
    }
}

fn values<'a>(r: &'a RunResult, name: &str) -> Result<&'a [f64]> {
    r.series(name)
        .map(|s| s.values.as_slice())
        .ok_or_else(|| Error::Config(format!("series `{name}` missing from {} result", r.experiment)))
}

fn stderrs(r: &RunResult, name: &str) -> Vec<f64> {
    r.series(name).and_then(|s| s.stderr.clone()).unwrap_or_else(|| vec![0.0; r.sweep_axis.len()])
}

/// `a[i] - b[i] > 3 sqrt(se_a² + se_b²)` at every point.
fn separated(r: &RunResult, a: &str, b: &str) -> Result<(bool, f64)> {
    let (va, vb) = (values(r, a)?, values(r, b)?);
    let (sa, sb) = (stderrs(r, a), stderrs(r, b));
    let mut worst = f64::INFINITY;
    for i in 0..va.len() {
        let se = (sa[i] * sa[i] + sb[i] * sb[i]).sqrt();
        let z = if se > 0.0 {
            (va[i] - vb[i]) / se
        } else if va[i] > vb[i] {
            f64::INFINITY
        } else {
            f64::NEG_INFINITY
        };
        worst = worst.min(z);
    }
    Ok((worst > 3.0, worst))
}

/// Non-decreasing up to three standard errors of each step.
fn non_decreasing(r: &RunResult, name: &str) -> Result<bool> {
    let v = values(r, name)?;
    let s = stderrs(r, name);
    Ok((1..v.len()).all(|i| v[i] >= v[i - 1] - 3.0 * (s[i] * s[i] + s[i - 1] * s[i - 1]).sqrt() - 1e-12))
}

fn sparsity_names(r: &RunResult, prefix: &str) -> Vec<String> {
    r.metadata.config.sparsities.iter().map(|z| format!("{prefix}_{}", super::sparsity_tag(z))).collect()
}

/// Checks attached to `fig`, evaluated on its result.
pub fn figure_checks(fig: Figure, r: &RunResult) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    match fig {
        Figure::Fig2 | Figure::Fig8 => {
            let names = sparsity_names(r, "edof");
            let dense = values(r, &names[0])?;
            let sparse = values(r, names.last().unwrap())?;
            let ok = sparse.iter().zip(dense).all(|(s, d)| s > d);
            out.push(Check::new("sparse arrays raise E[EDoF]", ok, format!("dense {dense:.3?}, sparse {sparse:.3?}")));
            if fig == Figure::Fig2 {
                let ok = sparse.first() > sparse.last();
                out.push(Check::new("sparse E[EDoF] falls with distance", ok, format!("{sparse:.3?}")));
            } else {
                let last = *sparse.last().unwrap();
                out.push(Check::new("sparse E[EDoF] at the largest IRS at least 3", last >= 3.0, format!("{last:.4}")));
            }
        }
        Figure::Fig3 => {
            let dense = values(r, "g_exact_zbs1_zirs1")?;
            let min = dense.iter().cloned().fold(f64::INFINITY, f64::min);
            out.push(Check::new("dense g_jk stays above 0.75", min > 0.75, format!("min {min:.4}")));
            for (exact, theory) in sparsity_names(r, "g_exact").iter().zip(sparsity_names(r, "g_theorem1")) {
                let (e, t) = (values(r, exact)?, values(r, &theory)?);
                let worst = e.iter().zip(t).map(|(a, b)| (b - a).abs() / a).fold(0.0, f64::max);
                out.push(Check::new(
                    format!("{theory} within 5% of exact"),
                    worst <= 0.05,
                    format!("max rel. error {worst:.4}"),
                ));
            }
        }
        Figure::Fig4 => {
            for k in &r.metadata.config.user_counts {
                let (a, m) = (values(r, &format!("approx_k{k}"))?, values(r, &format!("mc_k{k}"))?);
                let worst = a.iter().zip(m).map(|(x, y)| (x - y).abs() / y).fold(0.0, f64::max);
                out.push(Check::new(
                    format!("K={k} approximation within 10% of MC"),
                    worst <= 0.10,
                    format!("max rel. gap {worst:.4}"),
                ));
                out.push(Check::new(
                    format!("K={k} MC rate increases with P_max"),
                    non_decreasing(r, &format!("mc_k{k}"))?,
                    "",
                ));
            }
        }
        Figure::Fig5 | Figure::Fig6 => {
            for name in r.series.iter().filter_map(|s| s.name.strip_prefix("optimized_")) {
                let (ok, z) = separated(r, &format!("optimized_{name}"), &format!("random_{name}"))?;
                out.push(Check::new(format!("{name}: optimized beats random"), ok, format!("min gap {z:.1} stderr")));
                let opt = values(r, &format!("optimized_{name}"))?;
                let free = values(r, &format!("interference_free_{name}"))?;
                let ok = free.iter().zip(opt).all(|(f, o)| f >= o);
                let gap = free.iter().zip(opt).map(|(f, o)| (f - o) / o).fold(0.0, f64::max);
                out.push(Check::new(format!("{name}: interference-free bound holds"), ok, ""));
                out.push(Check::new(
                    format!("{name}: optimized within 15% of interference-free"),
                    gap < 0.15,
                    format!("max rel. gap {gap:.4}"),
                ));
                for scheme in ["optimized", "interference_free", "random"] {
                    let series = format!("{scheme}_{name}");
                    out.push(Check::new(format!("{series} non-decreasing in kappa"), non_decreasing(r, &series)?, ""));
                }
            }
        }
        Figure::Fig7 => {
            let finals: Vec<f64> = r.series.iter().map(|s| *s.values.last().unwrap()).collect();
            for s in &r.series {
                let ok = s.values.windows(2).all(|w| w[1] >= w[0] - 1e-6);
                out.push(Check::new(
                    format!("{} monotone", s.name),
                    ok,
                    format!("final {:.4}", s.values.last().unwrap()),
                ));
            }
            let ok = finals.windows(2).all(|w| w[1] > w[0]);
            out.push(Check::new("larger IRS converges higher", ok, format!("{finals:.4?}")));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        for f in Figure::ALL {
            f.config().validate().unwrap();
            assert_eq!(f.id().parse::<Figure>().unwrap(), f);
        }
        assert!("fig9".parse::<Figure>().is_err());
    }
}

//! End-to-end acceptance checks. Runs every criterion, prints one line per
//! criterion and exits non-zero if any fails.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::Instant;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;

use nfirs_core::channel::{
    bs_irs, complex_normal, default_rho_t, exact_bs_irs, irs_user_los, user_links, ChannelVariant, IrsUserLink,
};
use nfirs_core::config::default_sweep;
use nfirs_core::geometry::{fraunhofer_distance, phase_increment, solve_deployment, GridMode, SystemGeometry};
use nfirs_core::harness::montecarlo::{sample_rates, summarize};
use nfirs_core::harness::{run_experiment, Experiment, Scenario, ScenarioConfig};
use nfirs_core::linalg::{CMat, CVec, SplitMat};
use nfirs_core::metrics::{
    correlation_coeff, expected_edof, g_jk_corollary_square, g_jk_for_geometry, g_jk_prop2, g_jk_theorem1,
    mc_inner_product, variance_lemma1,
};
use nfirs_core::moments::build_moment_set;
use nfirs_core::optimizer::random_phases;
use nfirs_core::stats::{batched, mean_stderr, substream, Estimate};

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome { passed, detail: detail.into() }
}

/// The reference deployment at the rate-experiment IRS size.
fn rate_reference() -> ScenarioConfig {
    ScenarioConfig::reference(Experiment::RateVsKappa)
}

fn far_field_collapse() -> Outcome {
    let base = SystemGeometry::reference();
    let c = base.irs_center;
    let l = (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt();
    let d = 10.0 * fraunhofer_distance(&base);
    let geom = base.with_irs_center(c.map(|v| v / l * d));
    let f = exact_bs_irs(&geom, Complex64::new(1.0, 0.0)).unwrap().f;
    let steer: Vec<CVec> = (0..4).map(|k| irs_user_los(&geom, k, None).unwrap().los_steering).collect();
    let mut rng = substream(11, 0);
    let mut worst = 1.0f64;
    for _ in 0..20 {
        let theta = random_phases(geom.irs_elements(), &mut rng);
        let h: Vec<CVec> = steer.iter().map(|g| &f * theta.component_mul(g)).collect();
        for j in 0..4 {
            for k in (j + 1)..4 {
                worst = worst.min(correlation_coeff(&h[j], &h[k]).unwrap());
            }
        }
    }
    outcome(worst >= 0.999, format!("IRS at {d:.1} m, worst correlation {worst:.6} over 20 draws and 6 pairs"))
}

fn lemma1_oracle() -> Outcome {
    let mut rng = substream(21, 0);
    let mut worst = 0.0f64;
    for trial in 0..10 {
        let geom = SystemGeometry {
            carrier_frequency: 60e9,
            bs_antennas: 5,
            zeta_bs: rng.random_range(1.0..4.0),
            irs_rows: 3,
            irs_cols: 3,
            zeta_irs: rng.random_range(1.0..6.0),
            irs_center: [rng.random_range(-1.0..-0.2), rng.random_range(0.1..1.0), rng.random_range(0.1..1.0)],
            users: (0..2)
                .map(|_| [rng.random_range(5.0..50.0), rng.random_range(20.0..80.0), rng.random_range(-5.0..5.0)])
                .collect(),
            grid: GridMode::Odd,
        };
        let f = exact_bs_irs(&geom, default_rho_t(&geom)).unwrap().f;
        let gj = irs_user_los(&geom, 0, None).unwrap().los_channel();
        let gk = irs_user_los(&geom, 1, None).unwrap().los_channel();
        let analytic = variance_lemma1(&f, &gj, &gk).unwrap();
        let mc = mc_inner_product(&f, &gj, &gk, 1_000_000, 100 + trial).unwrap();
        let z = (analytic - mc.variance.mean).abs() / mc.variance.stderr;
        worst = worst.max(z);
    }
    outcome(worst <= 3.0, format!("largest deviation {worst:.2} stderr over 10 instances of 10^6 draws"))
}

fn theorem1_fidelity() -> Outcome {
    let geom = SystemGeometry::reference();
    let exact = g_jk_for_geometry(&geom, 0, 1, ChannelVariant::Exact).unwrap().g_jk;
    let taylor = g_jk_for_geometry(&geom, 0, 1, ChannelVariant::Taylor2).unwrap().g_jk;
    let closed = g_jk_theorem1(&geom).unwrap().g_jk;
    let rel = (closed - exact).abs() / exact;
    outcome(
        rel <= 0.05,
        format!(
            "closed form {closed:.6}, exact {exact:.6}, rel. error {rel:.4}; second-order channel gives {taylor:.6} (closed form minus it: {:.6}, 1/N = {:.6})",
            closed - taylor,
            1.0 / geom.irs_elements() as f64
        ),
    )
}

fn deployed_reference(q: usize) -> SystemGeometry {
    let base = SystemGeometry::reference();
    let center =
        solve_deployment(q, base.bs_antennas, base.zeta_bs, base.zeta_irs, base.irs_center, base.wavelength()).unwrap();
    base.with_irs_center(center)
}

fn kernel_null_exactness() -> Outcome {
    let geom = deployed_reference(2);
    let closed = g_jk_theorem1(&geom).unwrap().g_jk;
    let nulls = g_jk_prop2(geom.irs_rows, geom.irs_cols);
    let rel = (closed - nulls).abs() / nulls;
    outcome(rel <= 1e-12, format!("kernel sum {closed:.15}, null value {nulls:.15}, rel. diff {rel:.2e}"))
}

fn corollary_identity() -> Outcome {
    let mut worst = 0.0f64;
    for n in [4usize, 16, 400, 1600] {
        let side = (n as f64).sqrt() as usize;
        let a = g_jk_prop2(side, side);
        let b = g_jk_corollary_square(n).unwrap();
        worst = worst.max((a - b).abs() / b);
    }
    let g = g_jk_corollary_square(1600).unwrap();
    let bound_101 = 2.0 / 101.0;
    let bound_128 = 2.0 / 128.0;
    outcome(
        worst <= 1e-12 && g < bound_101,
        format!(
            "max rel. diff {worst:.2e}; N=1600 value {g:.6} < 2/101 = {bound_101:.6}; reported only: 2/128 = {bound_128:.6} ({})",
            if g < bound_128 { "holds" } else { "violated" }
        ),
    )
}

fn deployment_round_trip() -> Outcome {
    let geom = deployed_reference(2);
    let delta = phase_increment(&geom).unwrap().delta.abs();
    let target = 2.0 * PI / 128.0;
    let l = geom.irs_distance();
    let c = SystemGeometry::reference().irs_center;
    let placed = (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt();
    let l_rel = (l - placed).abs() / placed;
    outcome(
        (delta - target).abs() <= 1e-12 && l_rel <= 0.01,
        format!("|delta| - 2pi/128 = {:.2e}, l = {l:.5} m vs {placed:.5} m ({:.3}%)", delta - target, 100.0 * l_rel),
    )
}

/// MC estimates of `E‖h_k‖²` and `E|h_k^H h_j|²` for all users.
fn mc_moments(
    f: &CMat,
    links: &[IrsUserLink],
    theta: &CVec,
    samples: usize,
    seed: u64,
) -> (Vec<Estimate>, DMatrix<Option<Estimate>>) {
    let k = links.len();
    let n = f.ncols();
    let split = SplitMat::new(f);
    let rows: Vec<Vec<f64>> = batched(samples, seed, |rng, _, count| {
        let mut x = CMat::zeros(n, count * k);
        for s in 0..count {
            for (u, l) in links.iter().enumerate() {
                let los = (l.alpha * l.beta).sqrt();
                let nlos = (l.alpha * (1.0 - l.beta)).sqrt();
                let g = CVec::from_fn(n, |i, _| l.los_steering[i] * los + complex_normal(rng) * nlos);
                x.set_column(s * k + u, &theta.component_mul(&g));
            }
        }
        let h = split.mul(&x);
        (0..count)
            .map(|s| {
                let block = h.columns(s * k, k);
                let gram = block.adjoint() * block;
                let mut row = Vec::with_capacity(k * k);
                for a in 0..k {
                    for b in 0..k {
                        row.push(if a == b { gram[(a, a)].re } else { gram[(a, b)].norm_sqr() });
                    }
                }
                row
            })
            .collect()
    });
    let col = |i: usize| mean_stderr(&rows.iter().map(|r| r[i]).collect::<Vec<_>>());
    let first = (0..k).map(|a| col(a * k + a)).collect();
    let second = DMatrix::from_fn(k, k, |a, b| (a != b).then(|| col(a * k + b)));
    (first, second)
}

fn moment_equivalence() -> Outcome {
    let cfg = rate_reference();
    let sc = Scenario::from_config(&cfg).unwrap();
    let theta = random_phases(sc.geometry.irs_elements(), &mut substream(31, 0));
    let (first_mc, second_mc) = mc_moments(&sc.f, &sc.links, &theta, 100_000, 32);
    let forms = sc.moments.forms(&theta).unwrap();
    let (first, second) = sc.moments.moments_from(&forms);
    let mut worst = 0.0f64;
    for a in 0..4 {
        worst = worst.max((first[a] - first_mc[a].mean).abs() / first_mc[a].stderr);
        for b in 0..4 {
            if let Some(e) = second_mc[(a, b)] {
                worst = worst.max((second[(a, b)] - e.mean).abs() / e.stderr);
            }
        }
    }

    // β = 1 leaves only the LoS term, β = 0 only the scattered one.
    let los_only: Vec<IrsUserLink> = sc.links.iter().map(|l| l.clone().with_kappa(f64::INFINITY)).collect();
    let nlos_only: Vec<IrsUserLink> = sc.links.iter().map(|l| l.clone().with_kappa(0.0)).collect();
    let ms1 = build_moment_set(&sc.f, &los_only).unwrap();
    let ms0 = build_moment_set(&sc.f, &nlos_only).unwrap();
    let ffh = &sc.f * sc.f.adjoint();
    let frob: f64 = sc.f.iter().map(|z| z.norm_sqr()).sum();
    let ffh_sq: f64 = ffh.iter().map(|z| z.norm_sqr()).sum();
    let mut iso = 0.0f64;
    for a in 0..4 {
        let la = &sc.links[a];
        let ha = &sc.f * theta.component_mul(&la.los_channel());
        iso = iso.max((ms1.first_moment(&theta, a).unwrap() - ha.norm_squared()).abs() / ha.norm_squared());
        iso = iso.max((ms0.first_moment(&theta, a).unwrap() - la.alpha * frob).abs() / (la.alpha * frob));
        for b in (0..4).filter(|&b| b != a) {
            let lb = &sc.links[b];
            let hb = &sc.f * theta.component_mul(&lb.los_channel());
            let los_val = ha.dotc(&hb).norm_sqr();
            iso = iso.max((ms1.second_moment(&theta, a, b).unwrap() - los_val).abs() / los_val);
            let nlos_val = la.alpha * lb.alpha * ffh_sq;
            iso = iso.max((ms0.second_moment(&theta, a, b).unwrap() - nlos_val).abs() / nlos_val);
        }
    }
    outcome(
        worst <= 3.0 && iso <= 1e-9,
        format!("largest deviation {worst:.2} stderr over 10^5 draws; term isolation rel. error {iso:.1e}"),
    )
}

fn edof_contrast() -> Outcome {
    let sparse = SystemGeometry::reference();
    let dense = sparse.with_sparsity(1.0, 1.0).with_irs_center([-3.0, 3.0, 3.0]);
    let dense_here = sparse.with_sparsity(1.0, 1.0);
    let estimate = |g: &SystemGeometry| -> Estimate {
        let f = bs_irs(g, default_rho_t(g), ChannelVariant::Exact).unwrap().f;
        let links = user_links(g, &[10.0; 4]).unwrap();
        expected_edof(&f, &links, 1000, 41).unwrap()
    };
    let (s, d, h) = (estimate(&sparse), estimate(&dense), estimate(&dense_here));
    outcome(
        d.mean <= 1.3 && s.mean >= 3.0,
        format!(
            "sparse {:.3} +/- {:.3}; dense at (-3, 3, 3) {:.3} +/- {:.3}; dense at the sparse placement {:.3} (info)",
            s.mean, s.stderr, d.mean, d.stderr, h.mean
        ),
    )
}

fn optimizer_properties(state: &nfirs_core::optimizer::OptimizerState, sc: &Scenario) -> Outcome {
    let drops = state.objective_trace.windows(2).map(|w| w[0] - w[1]).fold(f64::NEG_INFINITY, f64::max);
    let used = sc.moments.power_used(&state.theta, &state.p).unwrap();
    let budget_excess = (used - sc.p_max) / sc.p_max;
    let modulus = state.theta.iter().map(|z| (z.norm() - 1.0).abs()).fold(0.0, f64::max);
    let residual = *state.residual_trace.last().unwrap();
    outcome(
        drops <= 1e-6 && budget_excess <= 1e-9 && modulus <= 1e-12 && residual < 1e-4,
        format!(
            "{} outer iterations (converged: {}), largest drop {drops:.2e}, budget excess {budget_excess:.2e}, |theta|-1 {modulus:.1e}, final residual {residual:.2e}",
            state.outer_iterations, state.converged
        ),
    )
}

fn scheme_ordering(rates: &nfirs_core::harness::montecarlo::SchemeRates) -> Outcome {
    let random = rates.random_phase.unwrap();
    let gap = |a: Estimate, b: Estimate| (a.mean - b.mean) / (a.stderr.powi(2) + b.stderr.powi(2)).sqrt();
    let upper = gap(rates.interference_free, rates.mrt);
    let lower = gap(rates.mrt, random);
    outcome(
        upper > 3.0 && lower > 3.0,
        format!(
            "interference-free {:.4}, optimized {:.4}, random {:.4} (+/- {:.4}, {:.4}, {:.4}); gaps {upper:.1} and {lower:.1} stderr",
            rates.interference_free.mean, rates.mrt.mean, random.mean, rates.interference_free.stderr, rates.mrt.stderr, random.stderr
        ),
    )
}

fn approximation_agreement(approx: f64, mc: Estimate) -> Outcome {
    let rel = (approx - mc.mean).abs() / mc.mean;
    outcome(rel <= 0.10, format!("approximate {approx:.4}, MC {:.4} +/- {:.4}, rel. gap {rel:.4}", mc.mean, mc.stderr))
}

fn determinism() -> Outcome {
    let mut mismatched = Vec::new();
    for e in Experiment::ALL {
        let mut cfg = ScenarioConfig::reference(e);
        cfg.geometry = cfg.geometry.with_irs_size(4, 6);
        cfg.mc_samples = 300;
        cfg.phase_draws = 100;
        cfg.irs_sizes = vec![[3, 4], [4, 6]];
        cfg.user_counts = vec![2, 5];
        cfg.sweep = default_sweep(e).into_iter().take(2).collect();
        if matches!(e, Experiment::EdofVsIrsSize | Experiment::FloorSweep) {
            cfg.sweep = vec![3.0, 4.0];
        }
        let a = run_experiment(&cfg).unwrap().csv_string();
        let b = run_experiment(&cfg).unwrap().csv_string();
        if a != b {
            mismatched.push(e.name());
        }
    }
    outcome(mismatched.is_empty(), format!("{} experiments rerun; mismatched: {mismatched:?}", Experiment::ALL.len()))
}

fn main() -> ExitCode {
    let mut failed = 0;
    let mut report = |id: usize, name: &str, f: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let o = f();
        let status = if o.passed { "PASS" } else { "FAIL" };
        println!("criterion {id:>2} [{status}] {name} ({:.1} s): {}", start.elapsed().as_secs_f64(), o.detail);
        if !o.passed {
            failed += 1;
        }
    };
    report(1, "far-field collapse", &mut far_field_collapse);
    report(2, "variance formula vs Monte Carlo", &mut lemma1_oracle);
    report(3, "closed-form g_jk vs exact channel", &mut theorem1_fidelity);
    report(4, "kernel-null exactness", &mut kernel_null_exactness);
    report(5, "square-panel identity and bound", &mut corollary_identity);
    report(6, "deployment round trip", &mut deployment_round_trip);
    report(7, "moment formulas vs Monte Carlo", &mut moment_equivalence);
    report(8, "E[EDoF] dense vs sparse", &mut edof_contrast);

    let cfg = rate_reference();
    let sc = Scenario::from_config(&cfg).unwrap();
    let start = Instant::now();
    let state = sc.optimize(&cfg.optimizer_config()).unwrap();
    let rates = summarize(
        &sample_rates(&sc.rate_context(), &state.theta, &state.p, cfg.mc_samples, cfg.mc_seed(), true).unwrap(),
    );
    println!(
        "optimized the reference scenario and drew {} samples in {:.1} s",
        cfg.mc_samples,
        start.elapsed().as_secs_f64()
    );
    report(9, "optimizer monotonicity and feasibility", &mut || optimizer_properties(&state, &sc));
    report(10, "scheme ordering on common draws", &mut || scheme_ordering(&rates));
    report(11, "approximation vs Monte Carlo", &mut || approximation_agreement(state.sum_rate(), rates.mrt));
    report(12, "determinism", &mut determinism);

    println!("{} of 12 criteria failed", failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

//! One line per acceptance criterion, `PASS` or `FAIL`, then a single
//! assertion over all of them. Runs the default experiments at full size.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spde_core::analysis::RateReport;
use spde_core::*;
use spde_harness::experiment::{
    run_rate_experiment, run_regularity_scan, run_scheme_agreement, run_stability_suite, RateOutcome, RATES_SPACE,
    RATES_TIME,
};
use spde_harness::ExperimentConfig;

struct Verdicts(Vec<(usize, bool)>);

impl Verdicts {
    fn record(&mut self, id: usize, ok: bool, detail: String) {
        println!("criterion {id}: {} | {detail}", if ok { "PASS" } else { "FAIL" });
        self.0.push((id, ok));
    }
}

fn random_state(rng: &mut ChaCha8Rng, n: usize, support: std::ops::RangeInclusive<usize>) -> SpectralState {
    let mut u = SpectralState::zeros(n);
    for m in support {
        u[m - 1] = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
    }
    u
}

fn max_rel_diff(a: &SpectralState, b: &SpectralState) -> f64 {
    (a - b).max_abs() / a.max_abs().max(b.max_abs()).max(1.0)
}

fn kernel_suite() -> (f64, Duration) {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let n = 32;
    let shells = [NonlinearityKind::Sabra { k0: 1.0 }, NonlinearityKind::Goy { k0: 1.0 }];
    let mut worst: f64 = 0.0;
    for kind in shells {
        for _ in 0..500 {
            let u = random_state(&mut rng, n, 3..=n - 3);
            let v = random_state(&mut rng, n, 3..=n - 3);
            let b = bilinear_apply(&kind, &u, &v).unwrap();
            let scale = b.inner(&b).sqrt() * v.inner(&v).sqrt();
            worst = worst.max(energy_pairing(&kind, &u, &v).unwrap().abs() / scale);
        }
        for _ in 0..200 {
            let (u, w, v) = (
                random_state(&mut rng, n, 1..=n),
                random_state(&mut rng, n, 1..=n),
                random_state(&mut rng, n, 1..=n),
            );
            let (a, c) = (rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
            let combo = &(&u * a) + &(&w * c);
            let left = bilinear_apply(&kind, &combo, &v).unwrap();
            let right = &(&bilinear_apply(&kind, &u, &v).unwrap() * a) + &(&bilinear_apply(&kind, &w, &v).unwrap() * c);
            worst = worst.max(max_rel_diff(&left, &right));
            let left = bilinear_apply(&kind, &v, &combo).unwrap();
            let right = &(&bilinear_apply(&kind, &v, &u).unwrap() * a) + &(&bilinear_apply(&kind, &v, &w).unwrap() * c);
            worst = worst.max(max_rel_diff(&left, &right));

            let zero = SpectralState::zeros(n);
            worst = worst.max(bilinear_apply(&kind, &zero, &u).unwrap().max_abs());
            worst = worst.max(bilinear_apply(&kind, &u, &zero).unwrap().max_abs());

            let base = bilinear_apply(&kind, &u, &v).unwrap();
            let far = rng.random_range(1..=n);
            let mut u2 = u.clone();
            u2[far - 1] += Complex64::new(1.0, -1.0);
            let moved = bilinear_apply(&kind, &u2, &v).unwrap();
            for m in (1..=n).filter(|m| m.abs_diff(far) > 2) {
                worst = worst.max((moved[m - 1] - base[m - 1]).norm());
            }
        }
    }
    (worst, start.elapsed())
}

fn closed_forms() -> f64 {
    let n = 16;
    let spectrum = EigenSpectrum::shell(1.0, n).unwrap();
    let u0 = SpectralState::from_real(&(1..=n).map(|i| 0.5f64.powi(i as i32 - 1)).collect::<Vec<_>>());
    let noise = NoiseSpec::new(ModelFamily::Shell, 1.0, 1.0, n, 17).unwrap();
    let m = 512;
    let grid = TimeGrid::new(1.0, m).unwrap();
    let k = grid.k();
    let path = sample_path(&noise, 1.0, m, 0).unwrap();
    let mut worst: f64 = 0.0;
    for (sigma, cfg) in [(0.0, SchemeConfig::default()), (1.0, SchemeConfig::default()), (1.0, SchemeConfig::fully_implicit())] {
        let model = Model {
            spectrum: spectrum.clone(),
            nonlinearity: NonlinearityKind::Zero,
            diffusion: DiffusionMap::new(Gain::Additive, sigma),
        };
        let t = integrate(&u0, &path, &model, &grid, n, &cfg).unwrap();
        for i in 0..n {
            let mu = spectrum.mu()[i];
            let mut x = u0[i].re;
            for j in 1..=m {
                x = if sigma == 0.0 {
                    u0[i].re * (1.0 + k * mu).powi(-(j as i32))
                } else {
                    (x + path.row(j - 1)[i]) / (1.0 + k * mu)
                };
                let got = t.states[j][i];
                worst = worst.max((got.re - x).abs() / x.abs().max(1.0)).max(got.im.abs());
            }
        }
    }
    worst
}

fn report(reports: &[RateReport], beta: f64) -> &RateReport {
    reports.iter().find(|r| r.beta == beta).expect("beta 0 is configured")
}

#[test]
fn acceptance() {
    let mut v = Verdicts(Vec::new());
    let cfg = ExperimentConfig::default();
    let exec = Execution::Parallel;

    let (worst, elapsed) = kernel_suite();
    v.record(
        1,
        worst <= 1e-12 && elapsed < Duration::from_secs(10),
        format!("worst relative defect {worst:.2e} (tol 1e-12), {:.2} s (limit 10 s)", elapsed.as_secs_f64()),
    );

    let worst = closed_forms();
    v.record(2, worst <= 1e-12, format!("worst deviation from closed forms {worst:.2e} (tol 1e-12)"));

    let tmp = tempfile::tempdir().unwrap();
    let run = |name: &str| -> (RateOutcome, std::path::PathBuf) {
        let outcome = run_rate_experiment(&cfg, exec).unwrap();
        let dir = tmp.path().join(name);
        std::fs::create_dir_all(&dir).unwrap();
        outcome.write(&dir).unwrap();
        (outcome, dir)
    };
    let (rates, first) = run("first");

    let time = report(&rates.time, 0.0);
    let (order, r2) = time.fit.map(|f| (f.order, f.r_squared)).unwrap_or((f64::NAN, f64::NAN));
    v.record(
        3,
        order >= 0.20 && r2 >= 0.9,
        format!("order {order:.4} (min 0.20), r^2 {r2:.4} (min 0.9), {} paths, {} failed", rates.n_paths, rates.n_failed_paths),
    );

    let space = report(&rates.space, 0.0);
    let errors: Vec<f64> = space.points.iter().map(|p| p.error()).collect();
    let monotone = errors.windows(2).all(|w| w[1] < w[0]);
    let exponent = space.fit.map(|f| f.order).unwrap_or(f64::NAN);
    v.record(
        4,
        monotone && exponent <= -0.15,
        format!("errors {errors:?} decreasing in N: {monotone}, exponent vs mu_N {exponent:.4} (max -0.15)"),
    );

    // points are sorted by increasing k
    let fractions: Vec<f64> = time.points.iter().map(|p| p.omega_fraction).collect();
    let nondecreasing = fractions.windows(2).all(|w| w[0] >= w[1]);
    let finest = fractions.first().copied().unwrap_or(0.0);
    v.record(
        5,
        nondecreasing && finest >= 0.9,
        format!("omega fractions from finest k {fractions:?}, nondecreasing as k shrinks: {nondecreasing}, finest {finest} (min 0.9)"),
    );

    let stab = run_stability_suite(&cfg, exec).unwrap();
    let growth = stab.growth();
    let worst = growth.iter().map(|(a, b)| a.max(*b)).fold(0.0, f64::max);
    let failures: usize = stab.rows.iter().map(|r| r.n_failures).sum();
    v.record(
        6,
        stab.all_finite() && failures == 0 && worst <= 1.5,
        format!("growth factors {growth:.4?} (max 1.5), {} paths, finite {}, failures {failures}", cfg.stability.n_paths, stab.all_finite()),
    );

    let (scans, failures) = run_regularity_scan(&cfg, exec).unwrap();
    let scan = scans.iter().find(|s| s.beta == 0.0).unwrap();
    let exponent = scan.fit.map(|f| f.order).unwrap_or(f64::NAN);
    v.record(
        7,
        (0.4..=1.1).contains(&exponent),
        format!("increment exponent {exponent:.4} (range [0.4, 1.1]), {} paths, {failures} failed", cfg.regularity.n_paths),
    );

    let rows = run_scheme_agreement(&cfg, exec).unwrap();
    let diffs: Vec<f64> = rows.iter().map(|r| r.mean_sup_diff).collect();
    let decreasing = diffs.windows(2).all(|w| w[1] < w[0]);
    v.record(
        8,
        decreasing && rows.len() == 3,
        format!("mean sup differences {diffs:?} at M {:?}, {} paths", rows.iter().map(|r| r.m).collect::<Vec<_>>(), cfg.agreement.n_paths),
    );

    let (_, second) = run("second");
    let same = [RATES_TIME, RATES_SPACE]
        .iter()
        .all(|f| std::fs::read(first.join(f)).unwrap() == std::fs::read(second.join(f)).unwrap());
    v.record(9, same, format!("{RATES_TIME} and {RATES_SPACE} byte-identical across two runs: {same}"));

    let failed: Vec<usize> = v.0.iter().filter(|(_, ok)| !ok).map(|(id, _)| *id).collect();
    assert!(failed.is_empty(), "failing criteria: {failed:?}");
}

//! Acceptance checks, one PASS/FAIL line per criterion.
//!
//! Run with `cargo test -p incidence-cli --test acceptance`.
//! Tolerances and sizes below are pinned; criteria that fail are reported,
//! never skipped.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use incidence_core::analysis::{
    asymptotic_coefficients, enumerate_coefficients_oracle, exact_coefficients, gain_sequence, monte_carlo_power,
    power, CoefficientMode,
};
use incidence_core::kalman::{bic, diagnostics, fit_filter, run_filter, FilterFitConfig, FilterModel, MeasurementMode, Variant};
use incidence_core::markov::{
    build_intensity, default_wave_times, transition_probability, CovariateVector, IntensityMatrix, Knots,
    TransitionFunctionalSpec,
};
use incidence_core::msm::{default_start, fit_msm, forward_loglik, FitConfig};
use incidence_core::panel::{Individual, Panel};
use incidence_core::series::TrendSeries;
use incidence_core::sim::{reference_cohort_config, simulate_panel};
use incidence_core::trend::{
    run_trend_tests_with_draws, simulate_null_draws, CriticalValueTable, Functional, TrendTestConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

type Outcome = (bool, String);

// ---------- oracles ----------

fn matmul(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

/// Taylor series on `wQ / 2^8`, then repeated squaring.
fn expm_series(q: [[f64; 3]; 3], w: f64) -> [[f64; 3]; 3] {
    let mut a = q;
    a.iter_mut().flatten().for_each(|x| *x *= w / 256.0);
    let mut sum = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    let mut term = sum;
    for n in 1..40 {
        term = matmul(&term, &a);
        term.iter_mut().flatten().for_each(|x| *x /= n as f64);
        for i in 0..3 {
            for j in 0..3 {
                sum[i][j] += term[i][j];
            }
        }
    }
    for _ in 0..8 {
        sum = matmul(&sum, &sum);
    }
    sum
}

fn expit(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn spec(waves: usize) -> TransitionFunctionalSpec {
    TransitionFunctionalSpec::new(default_wave_times()[..waves].to_vec(), Knots::new(vec![60.0, 70.0, 85.0]).unwrap())
        .unwrap()
}

/// Brute-force sum over all latent paths.
fn enumerate_likelihood(spec: &TransitionFunctionalSpec, g: &[f64], ind: &Individual) -> f64 {
    let l = spec.layout();
    let p_init = expit(g[l.logit_initial]);
    let (e12, e21) = (expit(g[l.logit_e12]), expit(g[l.logit_e21]));
    let e = [[1.0 - e12, e12, 0.0], [e21, 1.0 - e21, 0.0], [0.0, 0.0, 1.0]];
    let pi = [1.0 - p_init, p_init, 0.0];
    let m = ind.len();
    let mats: Vec<[[f64; 3]; 3]> = (1..m)
        .map(|j| {
            let k = spec.wave_times().iter().position(|&t| t == ind.times[j - 1]).unwrap() + 1;
            let z = CovariateVector::new(ind.ages[j - 1], ind.female).unwrap();
            let q = build_intensity(spec, g, &z, k).unwrap().matrix();
            expm_series(q, ind.times[j] - ind.times[j - 1])
        })
        .collect();
    let obs: Vec<usize> = ind.states.iter().map(|&s| s as usize - 1).collect();
    let mut total = 0.0;
    for code in 0..3usize.pow(m as u32) {
        let path: Vec<usize> = (0..m).map(|j| (code / 3usize.pow(j as u32)) % 3).collect();
        let mut prod = pi[path[0]] * e[path[0]][obs[0]];
        for j in 1..m {
            prod *= mats[j - 1][path[j - 1]][path[j]] * e[path[j]][obs[j]];
        }
        total += prod;
    }
    total
}

fn random_gamma(spec: &TransitionFunctionalSpec, rng: &mut impl Rng) -> Vec<f64> {
    let l = spec.layout();
    let mut g: Vec<f64> = (0..l.len()).map(|_| rng.random_range(-0.4..0.4)).collect();
    for i in [l.f13_age, l.f23_age].into_iter().chain(l.f12_spline.clone()).chain(l.f12_spline_female.clone()) {
        g[i] *= 0.05;
    }
    for i in l.beta.clone() {
        g[i] = rng.random_range(-3.0..-0.3);
    }
    g[l.log_q13] = rng.random_range(-3.0..-1.0);
    g[l.log_q23] = rng.random_range(-2.5..-0.3);
    g[l.logit_e12] = rng.random_range(-5.0..-0.5);
    g[l.logit_e21] = rng.random_range(-3.0..0.0);
    g[l.logit_initial] = rng.random_range(-3.0..1.0);
    g
}

fn random_individual(id: u64, waves: usize, rng: &mut impl Rng) -> Individual {
    let m = rng.random_range(1..=waves);
    let age = rng.random_range(55.0..90.0);
    let mut states = Vec::new();
    for j in 0..m {
        let s = if j == 0 { rng.random_range(1..=2u8) } else { rng.random_range(1..=3u8) };
        states.push(s);
        if s == 3 {
            break;
        }
    }
    let times: Vec<f64> = (0..states.len()).map(|k| 2.0 * k as f64).collect();
    Individual { id, female: rng.random_bool(0.5), ages: times.iter().map(|t| age + t).collect(), times, states }
}

/// Local-level data: `mu_k = mu_{k-1} + eta_k`, `y_k = mu_k + eps_k`.
struct History {
    eta: Vec<f64>,
    eps: Vec<f64>,
    y: Vec<f64>,
}

fn local_level(rng: &mut impl Rng, sigma_eta: f64, sd: &[f64], nu: f64) -> History {
    let (mut mu, mut eta, mut eps, mut y) = (0.0, Vec::new(), Vec::new(), Vec::new());
    for &s in sd {
        let e: f64 = sigma_eta * Distribution::<f64>::sample(&StandardNormal, rng);
        let n: f64 = s * Distribution::<f64>::sample(&StandardNormal, rng);
        mu += nu + e;
        eta.push(e);
        eps.push(n);
        y.push(mu + n);
    }
    History { eta, eps, y }
}

// ---------- criteria ----------

fn c1_expm() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let start = Instant::now();
    let mut worst = 0.0f64;
    for n in 0..1000 {
        let mut rate = || 10f64.powf(rng.random_range(-4.0..0.3));
        let (q12, q13) = (rate(), rate());
        // every tenth generator sits on or near the equal-exit-rate branch
        let q23 = if n % 10 == 0 { q12 + q13 + [0.0, 1e-9, 1e-6][n / 10 % 3] } else { rate() };
        let w = rng.random_range(0.25..6.0);
        let q = IntensityMatrix::new(q12, q13, q23).unwrap();
        let p = transition_probability(&q, w).unwrap().p;
        let o = expm_series(q.matrix(), w);
        for i in 0..3 {
            for j in 0..3 {
                worst = worst.max((p[i][j] - o[i][j]).abs());
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    (worst < 1e-10 && secs < 1.0, format!("max|err| = {worst:.2e} (< 1e-10), {secs:.3}s (< 1s)"))
}

fn c2_forward() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let start = Instant::now();
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let waves = rng.random_range(2..=4);
        let s = spec(waves);
        let g = random_gamma(&s, &mut rng);
        let n = rng.random_range(1..=5);
        let mut individuals: Vec<Individual> = (0..n).map(|i| random_individual(i + 1, waves, &mut rng)).collect();
        if individuals.iter().all(|i| i.len() < 2) {
            individuals[0] =
                Individual { id: 1, female: false, times: vec![0.0, 2.0], ages: vec![70.0, 72.0], states: vec![1, 2] };
        }
        let panel = Panel { individuals };
        let ll = forward_loglik(&panel, &s, &g).unwrap();
        let oracle: f64 = panel.individuals.iter().map(|i| enumerate_likelihood(&s, &g, i).ln()).sum();
        worst = worst.max((ll - oracle).abs());
    }
    let secs = start.elapsed().as_secs_f64();
    (worst < 1e-12 && secs < 5.0, format!("max|dlog L| = {worst:.2e} (< 1e-12), {secs:.2}s (< 5s)"))
}

fn c3_recovery() -> Outcome {
    let start = Instant::now();
    let cfg = reference_cohort_config(20_000, 2025);
    let panel = simulate_panel(&cfg).unwrap();
    let waves = cfg.spec.wave_times().len();
    let fit = fit_msm(&panel, &cfg.spec, &default_start(&panel, &cfg.spec), &FitConfig::default()).unwrap();
    let se = fit.standard_errors();
    let l = cfg.spec.layout();
    let mut hits = 0;
    let mut detail = Vec::new();
    for i in l.beta.clone() {
        let z = se[i].map(|s| (fit.gamma[i] - cfg.gamma[i]) / s);
        if z.is_some_and(|z| z.abs() <= 3.0) {
            hits += 1;
        }
        detail.push(z.map_or("na".to_string(), |z| format!("{z:+.2}")));
    }
    let secs = start.elapsed().as_secs_f64();
    let nb = l.beta.len();
    (
        fit.converged && hits >= 7 && secs < 600.0,
        format!("{waves} waves, {hits}/{nb} betas within 3 SE (z: {}), converged={}, {secs:.1}s (< 600s)", detail.join(" "), fit.converged),
    )
}

fn c4_filter_algebra() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut k2_err, mut ident_err) = (0.0f64, 0.0f64);
    for _ in 0..1000 {
        let t = rng.random_range(3..25);
        let sigma_eta = rng.random_range(0.02..1.0);
        let sd: Vec<f64> = (0..t).map(|_| rng.random_range(0.02..1.0)).collect();
        let h = local_level(&mut rng, sigma_eta, &sd, 0.0);
        let series = TrendSeries::with_variances(h.y, sd.iter().map(|s| s * s).collect()).unwrap();
        let out = run_filter(&series, &FilterModel::zero_drift(sigma_eta)).unwrap();
        let s2 = sigma_eta * sigma_eta;
        k2_err = k2_err.max((out.steps[1].level_gain() - s2 / (s2 + sd[1] * sd[1])).abs());
        let gains = out.gains();
        for k in 0..t {
            // sigma_eta^2 * sum_{d<=k} prod_{s=d..k} (1 - K_s)
            let mut total = 0.0;
            for d in 0..=k {
                total += gains[d..=k].iter().map(|g| 1.0 - g).product::<f64>();
            }
            ident_err = ident_err.max((out.steps[k].level_post_var() - s2 * total).abs());
        }
    }
    (
        k2_err == 0.0 && ident_err < 1e-12,
        format!("max|K_2 err| = {k2_err:.1e} (exact), max|posterior identity err| = {ident_err:.2e} (< 1e-12), 1000 runs"),
    )
}

fn c5_bic() -> Outcome {
    // printed (loglik, model, BIC) for T = 8
    let table = [
        (3.606, FilterModel::zero_drift(0.1), -5.132),
        (3.732, FilterModel::constant_drift(0.1, 0.0), -3.305),
        (-2.150, FilterModel::stochastic_drift(0.1, 0.1), 8.458),
        (5.970, FilterModel::zero_drift(0.1).free(0.1), -7.781),
        (4.308, FilterModel::constant_drift(0.1, 0.0).free(0.1), -2.378),
        (-2.054, FilterModel::stochastic_drift(0.1, 0.1).free(0.1), 10.346),
    ];
    let mut worst = 0.0f64;
    let mut got = Vec::new();
    for (ll, model, printed) in table {
        let b = bic(ll, model.n_params(), 8);
        worst = worst.max((b - printed).abs());
        got.push(format!("{b:.3}"));
    }
    // printed inputs carry 3 decimals: |dBIC| <= 2(5e-4) + 5e-4
    (worst <= 1.5e-3, format!("[{}], max|diff| = {worst:.1e} (<= 1.5e-3 rounding)", got.join(", ")))
}

fn c6_filter_ml() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let sd = vec![0.133; 500];
    let h = local_level(&mut rng, 0.148, &sd, 0.0);
    let series = TrendSeries::with_variances(h.y, sd.iter().map(|s| s * s).collect()).unwrap();
    let fit = fit_filter(&series, Variant::ZeroDrift, MeasurementMode::Constrained, &FilterFitConfig::default()).unwrap();
    let est = fit.estimates[0].value;
    let rel = (est / 0.148 - 1.0).abs();

    // context only: spread of the estimator over fresh replications
    let reps: Vec<f64> = (0..100)
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(600 + r);
            let h = local_level(&mut rng, 0.148, &sd, 0.0);
            let s = TrendSeries::with_variances(h.y, sd.iter().map(|s| s * s).collect()).unwrap();
            fit_filter(&s, Variant::ZeroDrift, MeasurementMode::Constrained, &FilterFitConfig::default()).unwrap().estimates[0]
                .value
        })
        .collect();
    let rep_mean = reps.iter().sum::<f64>() / reps.len() as f64;
    let rep_within = reps.iter().filter(|v| (*v / 0.148 - 1.0).abs() < 0.05).count();

    let small: TrendSeries = serde_json::from_str(
        &std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/trend_8.json")).unwrap(),
    )
    .unwrap();
    let mut small_ok = true;
    let mut flags = Vec::new();
    for variant in [Variant::ZeroDrift, Variant::ConstantDrift, Variant::StochasticDrift] {
        for mode in [MeasurementMode::Constrained, MeasurementMode::Free] {
            match fit_filter(&small, variant, mode, &FilterFitConfig::default()) {
                Ok(f) => {
                    let nb = f.estimates.iter().filter(|e| e.boundary).count();
                    // a boundary estimate must carry no interval
                    small_ok &= f.estimates.iter().all(|e| !e.boundary || e.ci.is_none());
                    small_ok &= f.loglik.is_finite();
                    flags.push(format!("{nb}b{}", if f.no_ci { "/no-ci" } else { "" }));
                }
                Err(_) => small_ok = false,
            }
        }
    }
    (
        rel < 0.05 && small_ok,
        format!("T=500 sigma_eta = {est:.4} (rel err {:.2}% < 5%) [100 replications: mean {rep_mean:.4}, {rep_within}/100 within 5%]; T=8 six fits ok={small_ok} boundary flags [{}]", 100.0 * rel, flags.join(" ")),
    )
}

fn c7_gains() -> Outcome {
    let traj = gain_sequence(&[1.26; 12]).unwrap();
    let g = &traj.gains;
    let s = 1.26f64;
    let k_inf = (-s + (s * s + 4.0 * s).sqrt()) / 2.0;
    let r2 = |x: f64| (x * 100.0).round() / 100.0;
    let ok = r2(g[1]) == 0.56 && r2(g[2]) == 0.65 && r2(k_inf) == 0.66 && (g[3] - k_inf).abs() < 0.01;
    (ok, format!("K_2={:.4} K_3={:.4} K_4={:.4} K_inf={k_inf:.4} |K_4-K_inf|={:.4}", g[1], g[2], g[3], (g[3] - k_inf).abs()))
}

fn c8_power() -> Outcome {
    let start = Instant::now();
    let curve = power(&[-1.0, -2.0], 200, 1.26, CoefficientMode::Asymptotic).unwrap();
    let (t1, t2) = (curve.theta[0], curve.theta[1]);
    let bands = (0.72..=0.74).contains(&t1) && (0.975..=0.985).contains(&t2);
    let mut worst = 0.0f64;
    let mut mc_ok = true;
    let mut idx = 0u64;
    for k in [3usize, 5] {
        for s in [0.5, 1.26] {
            let analytic = power(&[-0.5, -1.0, -2.0], k, s, CoefficientMode::Exact).unwrap();
            for (j, &x) in analytic.x.iter().enumerate() {
                let mc = monte_carlo_power(k, s, x, 200_000, 8_000 + idx).unwrap();
                idx += 1;
                let z = (mc.estimate - analytic.theta[j]).abs() / mc.std_error;
                worst = worst.max(z);
                mc_ok &= z <= 3.0;
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    (
        bands && mc_ok && secs < 120.0,
        format!(
            "theta(-1)={t1:.4} in [0.72,0.74]: {}; theta(-2)={t2:.4} in [0.975,0.985]: {}; MC 12-point grid max |z|={worst:.2} (<= 3); {secs:.1}s (< 120s)",
            (0.72..=0.74).contains(&t1),
            (0.975..=0.985).contains(&t2)
        ),
    )
}

fn c9_coefficients() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut enum_err = 0.0f64;
    for _ in 0..100 {
        let g: Vec<f64> = (0..8).map(|_| rng.random_range(0.05..0.95)).collect();
        for k in 1..=8 {
            let e = exact_coefficients(k, &g).unwrap();
            let o = enumerate_coefficients_oracle(k, &g).unwrap();
            for i in 0..k {
                enum_err = enum_err.max((e.c[i] - o.c[i]).abs()).max((e.d[i] - o.d[i]).abs());
            }
        }
    }
    let g: Vec<f64> = (0..9).map(|_| rng.random_range(0.05..0.95)).collect();
    let counts: Vec<usize> =
        (2..=9).map(|k| enumerate_coefficients_oracle(k, &g).unwrap().c_terms[0].len()).collect();
    let doubling = counts.windows(2).all(|w| w[1] == 2 * w[0]);

    // order-2 and order-3 expressions evaluated at random gains
    let mut table_err = 0.0f64;
    for _ in 0..100 {
        let k: Vec<f64> = (0..3).map(|_| rng.random_range(0.05..1.0)).collect();
        let (k1, k2, k3) = (k[0], k[1], k[2]);
        let want2 = ([k2 - k2 * k1, k2], [-k2 * k1, k2]);
        let want3 = (
            [k3 - k3 * k1 - k3 * k2 + k3 * k2 * k1, k3 - k3 * k2, k3],
            [-k3 * k1 + k3 * k2 * k1, -k3 * k2, k3],
        );
        let t2 = exact_coefficients(2, &k).unwrap();
        let t3 = exact_coefficients(3, &k).unwrap();
        for i in 0..2 {
            table_err = table_err.max((t2.c[i] - want2.0[i]).abs()).max((t2.d[i] - want2.1[i]).abs());
        }
        for i in 0..3 {
            table_err = table_err.max((t3.c[i] - want3.0[i]).abs()).max((t3.d[i] - want3.1[i]).abs());
        }
        // steady-state order-3 column
        let kk = k3;
        let a3 = asymptotic_coefficients(3, kk).unwrap();
        let want = ([kk - 2.0 * kk * kk + kk.powi(3), kk - kk * kk, kk], [-kk * kk + kk.powi(3), -kk * kk, kk]);
        for i in 0..3 {
            table_err = table_err.max((a3.c[i] - want.0[i]).abs()).max((a3.d[i] - want.1[i]).abs());
        }
    }

    // end-to-end: filter update against the shock expansion
    let mut expansion_err = 0.0f64;
    for _ in 0..200 {
        let t = rng.random_range(2..16);
        let sigma_eta = rng.random_range(0.05..1.0);
        let sd: Vec<f64> = (0..t).map(|_| rng.random_range(0.05..1.0)).collect();
        let h = local_level(&mut rng, sigma_eta, &sd, 0.0);
        let series = TrendSeries::with_variances(h.y.clone(), sd.iter().map(|s| s * s).collect()).unwrap();
        let out = run_filter(&series, &FilterModel::zero_drift(sigma_eta)).unwrap();
        let gains = out.gains();
        for k in 2..=t {
            let tab = exact_coefficients(k, &gains).unwrap();
            let lhs = gains[k - 1] * out.steps[k - 1].innovation;
            let rhs: f64 = (0..k).map(|i| tab.c[i] * h.eta[i] + tab.d[i] * h.eps[i]).sum();
            expansion_err = expansion_err.max((lhs - rhs).abs());
        }
    }
    (
        enum_err < 1e-12 && doubling && table_err < 1e-14 && expansion_err < 1e-10,
        format!(
            "exact vs enumeration {enum_err:.1e} (< 1e-12); term counts {counts:?} doubling={doubling}; order-2/3 tables {table_err:.1e}; expansion identity {expansion_err:.1e} (< 1e-10)"
        ),
    )
}

fn c10_critical_values() -> Outcome {
    let start = Instant::now();
    let draws = simulate_null_draws(1000, 100_000, 10).unwrap();
    let q = |f| CriticalValueTable::from_draws(&draws, f, &[0.95]).unwrap().value_at(0.95).unwrap();
    let (qb, qw) = (q(Functional::BridgeSquared), q(Functional::WienerSquared));
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (mb, mw) = (mean(&draws.bridge), mean(&draws.wiener));
    let (eb, ew) = ((mb * 6.0 - 1.0).abs(), (mw * 2.0 - 1.0).abs());
    let secs = start.elapsed().as_secs_f64();
    (
        (0.44..=0.48).contains(&qb) && (1.55..=1.70).contains(&qw) && eb < 0.01 && ew < 0.01 && secs < 60.0,
        format!(
            "q95 bridge={qb:.4} in [0.44,0.48], wiener={qw:.4} in [1.55,1.70]; means {mb:.4} ({:.2}% off 1/6), {mw:.4} ({:.2}% off 1/2); {secs:.1}s (< 60s)",
            100.0 * eb,
            100.0 * ew
        ),
    )
}

fn c11_size() -> Outcome {
    let draws = simulate_null_draws(200, 2000, 11).unwrap();
    let cfg = TrendTestConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut rejects = 0;
    let reps = 2000;
    for _ in 0..reps {
        let sd = vec![0.133; 100];
        let h = local_level(&mut rng, 0.148, &sd, 0.0);
        let series = TrendSeries::with_variances(h.y, sd.iter().map(|s| s * s).collect()).unwrap();
        let r = run_trend_tests_with_draws(&series, &cfg, &draws).unwrap();
        if r.p_nu.is_some_and(|p| p < 0.05) {
            rejects += 1;
        }
    }
    let size = rejects as f64 / reps as f64;

    // context only: the same test on a noiseless random walk and on pure noise
    let mut context = Vec::new();
    for (sigma_eta, noise_sd) in [(0.148, 0.0), (0.0, 0.133)] {
        let mut hits = 0;
        for _ in 0..reps {
            let h = local_level(&mut rng, sigma_eta, &[noise_sd; 100], 0.0);
            let series = TrendSeries::with_variances(h.y, vec![noise_sd * noise_sd; 100]).unwrap();
            let r = run_trend_tests_with_draws(&series, &cfg, &draws).unwrap();
            hits += usize::from(r.p_nu.is_some_and(|p| p < 0.05));
        }
        context.push(100.0 * hits as f64 / reps as f64);
    }

    let mut lb_rejects = 0;
    let mut lb_total = 0;
    let noise = Normal::new(0.0, 0.133).unwrap();
    for _ in 0..reps {
        let sd = vec![0.133; 200];
        let mut mu = 0.0;
        let y: Vec<f64> = (0..200)
            .map(|_| {
                mu += 0.148 * Distribution::<f64>::sample(&StandardNormal, &mut rng);
                mu + noise.sample(&mut rng)
            })
            .collect();
        let series = TrendSeries::with_variances(y, sd.iter().map(|s| s * s).collect()).unwrap();
        let fit = fit_filter(&series, Variant::ZeroDrift, MeasurementMode::Constrained, &FilterFitConfig::default()).unwrap();
        if let Some(lb) = diagnostics(&fit.output, 4).ljung_box {
            lb_total += 1;
            if lb.statistic > 9.49 {
                lb_rejects += 1;
            }
        }
    }
    let lb_rate = lb_rejects as f64 / lb_total.max(1) as f64;
    (
        (0.03..=0.08).contains(&size) && (0.03..=0.07).contains(&lb_rate) && lb_total == reps,
        format!(
            "t_nu rejection {:.2}% in [3%,8%] (random walk plus noise, T=100, long-run variance, lag 3) [noiseless walk {:.2}%, pure noise {:.2}%]; Ljung-Box Q(4) > 9.49 rate {:.2}% in [3%,7%] (T=200)",
            100.0 * size,
            context[0],
            context[1],
            100.0 * lb_rate
        ),
    )
}

fn c12_determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let p = |n: &str| dir.path().join(n).to_str().unwrap().to_string();
    let trend = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/trend_8.json");
    let trend = trend.to_str().unwrap();
    let commands: Vec<(&str, Vec<String>)> = vec![
        ("simulate", vec!["simulate".into(), "--seed".into(), "77".into(), "--n".into(), "2000".into(), "--out".into()]),
        (
            "test-trend",
            ["test-trend", "--seed", "77", "--reps", "20000", "--grid", "500", "--trend", trend, "--out"]
                .map(String::from)
                .to_vec(),
        ),
        (
            "power-curve",
            ["power-curve", "--seed", "77", "--k", "4", "--points", "5", "--mc-reps", "20000", "--mc-out", "MC", "--out"]
                .map(String::from)
                .to_vec(),
        ),
    ];
    let mut ok = true;
    let mut notes = Vec::new();
    for (name, base) in commands {
        let mut outputs = Vec::new();
        for (run, threads) in [(0, "1"), (1, "1"), (2, "4"), (3, "2")] {
            let out = p(&format!("{name}_{run}.out"));
            let mc = p(&format!("{name}_{run}.mc"));
            let args: Vec<String> =
                base.iter().map(|a| if a == "MC" { mc.clone() } else { a.clone() }).chain([out.clone()]).collect();
            let status = Command::new(env!("CARGO_BIN_EXE_incidence"))
                .args(&args)
                .args(["--threads", threads])
                .status()
                .unwrap();
            ok &= status.success();
            let mut bytes = std::fs::read(&out).unwrap_or_default();
            bytes.extend(std::fs::read(&mc).unwrap_or_default());
            outputs.push(bytes);
        }
        let same = outputs.windows(2).all(|w| w[0] == w[1]) && !outputs[0].is_empty();
        ok &= same;
        notes.push(format!("{name}={}", if same { "identical" } else { "DIFFERENT" }));
    }
    (ok, format!("{} across 4 runs with threads 1,1,4,2", notes.join(" ")))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 12] = [
        ("matrix exponential vs series", c1_expm),
        ("forward algorithm vs path enumeration", c2_forward),
        ("estimator recovery", c3_recovery),
        ("constrained filter algebra", c4_filter_algebra),
        ("BIC arithmetic", c5_bic),
        ("filter ML consistency", c6_filter_ml),
        ("gain convergence", c7_gains),
        ("power reproduction", c8_power),
        ("coefficient machinery", c9_coefficients),
        ("MC critical values", c10_critical_values),
        ("test size under null", c11_size),
        ("determinism", c12_determinism),
    ];
    let only: Option<usize> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|v| v.parse().ok());
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        if only.is_some_and(|n| n != i + 1) {
            continue;
        }
        let (pass, detail) = match catch_unwind(AssertUnwindSafe(f)) {
            Ok(r) => r,
            Err(e) => {
                let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
                (false, format!("panicked: {}", msg.unwrap_or_default()))
            }
        };
        failed += usize::from(!pass);
        println!("criterion {:>2} {}: {name}: {detail}", i + 1, if pass { "PASS" } else { "FAIL" });
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}

//! Acceptance criteria, one line each. Run with
//! `cargo test -p carl-core --test acceptance`; numeric arguments after `--`
//! select criteria.
//!
//! Criteria listed in `KNOWN_DEFECTS` test a stated constant or example that
//! is wrong as written. They run unmodified and report FAIL; only failures
//! outside that list make the target fail.

use std::time::Instant;

use carl_core::behavior::ReferenceWorld;
use carl_core::bench::{
    cohens_d, holm_bonferroni, preset, run_protocol, summarize, tost_summary, welch_t, FamilyKind, Preset, Protocol,
    Scenario, WorldSpec,
};
use carl_core::dcm::{fit_mle, generate_dataset, hessian, log_likelihood, score, DcmParams, FitOptions};
use carl_core::environment::EnvConfig;
use carl_core::learners::{
    dqn_train_step, encode_state, train_agent, Adam, EpsilonSchedule, Method, Mlp, OracleEnv, Provenance, TrainConfig,
    TrainedPolicy, TransitionRecord, Variant,
};
use carl_core::rng::stream;
use carl_core::theory::{
    convergence_trace, dr_grid_check, maturation_curve, rate_mdp, simulation_lemma_sweep, softmax_lipschitz_suite,
    sup_distance, value_iteration, ErrorSchedule, SmallMdp,
};
use rand::Rng as _;
use statrs::distribution::{ContinuousCDF, StudentsT};

const KNOWN_DEFECTS: [(usize, &str); 3] = [
    (3, "constant 1/2 holds for the l1 norm of z - z', not the sup norm; sup-norm constant is 1"),
    (6, "stated variance uses m^2 where the model error eps^2 belongs; agrees only when eps = m"),
    (10, "stated Holm example skips the 0.02 * 3 step; a correct step-down rejects only 0.001"),
];

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn c1_oracle_convergence() -> Verdict {
    let mut rng = stream(11, 0);
    let mdp = SmallMdp::random(5, 3, 0.5, 1.0, &mut rng);
    let mut env = OracleEnv::new(mdp, 0.5, 0.5, (1..=14).collect(), 1000).unwrap();
    let model = env.exact_model();
    let q_star = value_iteration(&env.mdp, 1e-8).unwrap();
    let cfg = TrainConfig {
        episodes: 1000,
        gamma: env.mdp.gamma,
        epsilon: EpsilonSchedule::constant(0.3),
        r_max: env.label_bound(),
        curve_eval_episodes: 0,
        ..TrainConfig::default()
    };
    let out = train_agent(&mut env, Some(&model), Method::Ca, Variant::Tabular, &cfg, 1).unwrap();
    let TrainedPolicy::Tabular(q) = &out.policy else { panic!("tabular policy expected") };
    let err = sup_distance(&q.values, &q_star);
    let thr = 0.05 * env.mdp.v_max();
    verdict(err <= thr, format!("||Q - Q*|| = {err:.4} vs {thr:.4} after 1e6 updates"))
}

fn c2_simulation_lemma() -> Verdict {
    let r = simulation_lemma_sweep(100, 2).unwrap();
    let pass = r.iter().filter(|x| x.pass).count();
    let worst = r.iter().map(|x| x.bound - x.measured).fold(f64::INFINITY, f64::min);
    verdict(r.len() == 100 && pass == 100, format!("{pass}/{} within bound, worst margin {worst:.3e}", r.len()))
}

fn c3_softmax_lipschitz() -> Verdict {
    let r = softmax_lipschitz_suite(10_000, 3);
    verdict(
        r.violations == 0,
        format!(
            "{} violations of the 1/2 sup-norm bound, worst ratio {:.4}; constant 1: {}, 1/2 with l1: {}",
            r.violations, r.worst_ratio, r.violations_unit, r.violations_l1
        ),
    )
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

fn c4_mle() -> Verdict {
    let world = ReferenceWorld::load();
    let cfg = EnvConfig::default();
    let truth = DcmParams::from_segment(&world.segment(), 1.0, 1.0).booking;

    // Derivatives at a perturbed point on a small sample.
    let small = generate_dataset(&world.mnl(), &cfg, 300, 40).unwrap().booking;
    let mut rng = stream(41, 0);
    let th: Vec<f64> = truth.iter().map(|t| t + rng.gen_range(-0.2..0.2)).collect();
    let g = score(&th, &small).unwrap();
    let hm = hessian(&th, &small).unwrap();
    let h = 1e-6;
    let (mut score_bad, mut hess_bad) = (0, 0);
    for i in 0..th.len() {
        let (mut a, mut b) = (th.clone(), th.clone());
        a[i] += h;
        b[i] -= h;
        let fd = (log_likelihood(&a, &small).unwrap() - log_likelihood(&b, &small).unwrap()) / (2.0 * h);
        score_bad += usize::from(!rel_close(g[i], fd, 1e-5));
        let (ga, gb) = (score(&a, &small).unwrap(), score(&b, &small).unwrap());
        for r in 0..th.len() {
            hess_bad += usize::from(!rel_close(hm[(r, i)], (ga[r] - gb[r]) / (2.0 * h), 1e-4));
        }
    }

    // Recovery error at N and 4N.
    let n = 12_500;
    let err = |n: usize, seed: u64| {
        let d = generate_dataset(&world.mnl(), &cfg, n, seed).unwrap().booking;
        let (est, _) = fit_mle(&d, &FitOptions::default()).unwrap();
        est.iter().zip(&truth).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
    };
    let mut ratios: Vec<f64> = (0..20u64).map(|k| err(4 * n, 1000 + k) / err(n, 2000 + k)).collect();
    ratios.sort_by(f64::total_cmp);
    let median = 0.5 * (ratios[9] + ratios[10]);
    verdict(
        score_bad == 0 && hess_bad == 0 && (0.3..=0.8).contains(&median),
        format!("score mismatches {score_bad}, hessian mismatches {hess_bad}, median error(4N)/error(N) = {median:.3}"),
    )
}

fn c5_maturation() -> Verdict {
    let support: Vec<usize> = (1..=14).collect();
    let r = maturation_curve(&support, 1000, 100, 5).unwrap();
    verdict(
        r.violations == 0,
        format!(
            "{} violations of t - 14 <= N_t <= t; mean gap {:.3} (expected {:.3})",
            r.violations, r.mean_gap, r.expected_gap
        ),
    )
}

fn c6_dr_moments() -> Verdict {
    let reports = dr_grid_check(200_000, 6).unwrap();
    let pass = reports.iter().filter(|r| r.pass()).count();
    let bias_pass = reports.iter().filter(|r| r.bias_pass).count();
    let direct = reports.iter().filter(|r| r.bias_pass && r.variance_matches(r.cell.exact_variance())).count();
    let reference: Vec<_> = reports.iter().filter(|r| r.cell.p_mat == 0.85 && r.cell.eps == 0.12).collect();
    let ref_ok = reference.iter().all(|r| r.bias_pass && (r.cell.bias_bound() - 0.018).abs() < 1e-12);
    verdict(
        pass >= 26 && ref_ok,
        format!(
            "{pass}/27 cells pass (bias {bias_pass}/27); reference cells bias <= 0.018: {ref_ok}; with the eps^2 variance {direct}/27"
        ),
    )
}

fn c7_stationary() -> Verdict {
    let p = preset(Preset::Stationary);
    let records = run_protocol(&p, None).unwrap();
    let s = &summarize(&p, &records).unwrap()[0];
    verdict(
        s.p_raw > 0.05 && s.rel_diff.abs() <= 0.05,
        format!(
            "MB {:.1} CA {:.1} rel diff {:+.2}% Welch p {:.3}",
            s.mean_control,
            s.mean_treatment,
            100.0 * s.rel_diff,
            s.p_raw
        ),
    )
}

fn c8_nested() -> Verdict {
    let world = WorldSpec { family: FamilyKind::Nested, nest_lambda: 0.4, ..WorldSpec::default() };
    let p = Protocol {
        name: "nested".into(),
        scenarios: vec![Scenario { name: "nested_0.4".into(), train: world, eval: None }],
        ..Protocol::default()
    };
    let records = run_protocol(&p, None).unwrap();
    let vals = |m: Method| records.iter().filter(|r| r.method == m).map(|r| r.eval_mean).collect::<Vec<_>>();
    let (mb, ca) = (vals(Method::Mb), vals(Method::Ca));
    let w = welch_t(&ca, &mb).unwrap();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (m_mb, m_ca) = (mean(&mb), mean(&ca));
    verdict(
        m_ca <= m_mb + 0.5 * w.se,
        format!(
            "MB {m_mb:.1} CA {m_ca:.1} (n = {}); CA - MB = {:.1}, 0.5 se = {:.1}",
            ca.len(),
            m_ca - m_mb,
            0.5 * w.se
        ),
    )
}

fn record(s: usize, a: usize, target: f64) -> TransitionRecord {
    TransitionRecord {
        s,
        a,
        reward_target: target,
        s_next: s.saturating_sub(1),
        provenance: Provenance::Matured,
        epoch: 0,
        terminal: false,
        forced: false,
        available_at: 0,
    }
}

fn c9_dqn() -> Verdict {
    // Gradients against central differences on a miniature network.
    let mut rng = stream(9, 0);
    let mut m = Mlp::init(&[3, 4, 4, 2], &mut rng);
    for p in &mut m.params {
        *p += rng.gen_range(-0.3..0.3);
    }
    let batch: Vec<(Vec<f64>, usize, f64)> = (0..5)
        .map(|_| ((0..3).map(|_| rng.gen_range(-1.0..1.0)).collect(), rng.gen_range(0..2), rng.gen_range(-1.0..1.0)))
        .collect();
    let (_, g) = m.loss_and_grad(&batch);
    let h = 1e-6;
    let mut bad = 0;
    for i in 0..m.n_params() {
        let mut p = m.clone();
        p.params[i] += h;
        let up = p.loss_and_grad(&batch).0;
        p.params[i] -= 2.0 * h;
        let down = p.loss_and_grad(&batch).0;
        let fd = (up - down) / (2.0 * h);
        bad += usize::from((g[i] - fd).abs() > 1e-3 * g[i].abs().max(fd.abs()).max(1e-6));
    }

    // One transition repeated, no bootstrap.
    let mut net = Mlp::init(&[encode_state(0, 27).len(), 64, 64, 13], &mut rng);
    let target = net.clone();
    let mut adam = Adam::new(net.n_params(), 0.001);
    let batch = vec![record(20, 7, 0.5); 32];
    for _ in 0..5_000 {
        dqn_train_step(&mut net, &target, &batch, 0.0, &mut adam, 27, 1.0).unwrap();
    }
    let q = net.forward(&encode_state(20, 27)).unwrap()[7];

    // Zero learning rate leaves the network untouched.
    let before = net.clone();
    let mut still = Adam::new(net.n_params(), 0.0);
    dqn_train_step(&mut net, &target, &[record(3, 1, 2.0)], 0.9, &mut still, 27, 1.0).unwrap();
    let noop = net == before;

    verdict(
        bad == 0 && (q - 0.5).abs() <= 0.01 && noop,
        format!("gradient mismatches {bad}/{}; regression Q = {q:.4} (target 0.5); zero-lr no-op {noop}", m.n_params()),
    )
}

fn c10_statistics() -> Verdict {
    let mut rng = stream(10, 0);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let na = rng.gen_range(2..40);
        let nb = rng.gen_range(2..40);
        let a: Vec<f64> = (0..na).map(|_| rng.gen_range(-3.0..3.0) * 2.0).collect();
        let b: Vec<f64> = (0..nb).map(|_| rng.gen_range(-1.0..4.0)).collect();
        let w = welch_t(&a, &b).unwrap();
        let (ma, mb) = (a.iter().sum::<f64>() / na as f64, b.iter().sum::<f64>() / nb as f64);
        let va = a.iter().map(|x| (x - ma).powi(2)).sum::<f64>() / (na - 1) as f64;
        let vb = b.iter().map(|x| (x - mb).powi(2)).sum::<f64>() / (nb - 1) as f64;
        let (sa, sb) = (va / na as f64, vb / nb as f64);
        let t = (ma - mb) / (sa + sb).sqrt();
        let df = (sa + sb).powi(2) / (sa * sa / (na - 1) as f64 + sb * sb / (nb - 1) as f64);
        let p = 2.0 * StudentsT::new(0.0, 1.0, df).unwrap().sf(t.abs());
        let sp = (((na - 1) as f64 * va + (nb - 1) as f64 * vb) / (na + nb - 2) as f64).sqrt();
        let d = (ma - mb) / sp;
        for diff in [w.t - t, w.df - df, w.p - p, cohens_d(&a, &b).unwrap() - d] {
            worst = worst.max(diff.abs());
        }
    }
    let holm = holm_bonferroni(&[0.001, 0.02, 0.03, 0.04], 0.05).unwrap();
    let stated = [true, true, false, false];
    let tost = tost_summary(182.0, 796.0, 18.0, 404.0, 0.05).unwrap();
    let pass = worst <= 1e-10 && holm.reject == stated && (tost.p - 0.39).abs() <= 0.02;
    verdict(
        pass,
        format!(
            "max deviation from reference {worst:.1e}; Holm rejects {:?} (stated {:?}); TOST p {:.3}",
            holm.reject, stated, tost.p
        ),
    )
}

fn c11_error_floor() -> Verdict {
    let m = rate_mdp();
    let seeds: Vec<u64> = (1..=8).collect();
    let floor = convergence_trace(&m, ErrorSchedule { c_r: 0.1, c_p: 0.1, beta: 0.0 }, 1_000_000, &seeds).unwrap();
    let exact = convergence_trace(&m, ErrorSchedule::exact(), 1_000_000, &seeds).unwrap();
    let thr = 0.05 * m.v_max();
    verdict(
        floor.floor <= floor.floor_bound && exact.final_error() <= thr,
        format!(
            "floor {:.4} <= bound {:.4}; exact-model error {:.4} <= {thr:.3}",
            floor.floor,
            floor.floor_bound,
            exact.final_error()
        ),
    )
}

fn main() {
    let criteria: [(usize, &str, fn() -> Verdict); 11] = [
        (1, "oracle convergence", c1_oracle_convergence),
        (2, "simulation lemma", c2_simulation_lemma),
        (3, "softmax lipschitz", c3_softmax_lipschitz),
        (4, "mle derivatives and rate", c4_mle),
        (5, "maturation bounds", c5_maturation),
        (6, "dr moments", c6_dr_moments),
        (7, "stationary equivalence", c7_stationary),
        (8, "nested misspecification", c8_nested),
        (9, "dqn sanity", c9_dqn),
        (10, "statistics oracle", c10_statistics),
        (11, "fixed-model error floor", c11_error_floor),
    ];
    let wanted: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut unexpected = Vec::new();
    for (n, name, f) in criteria {
        if !wanted.is_empty() && !wanted.contains(&n) {
            continue;
        }
        let t = Instant::now();
        let v = f();
        let secs = t.elapsed().as_secs_f64();
        let known = KNOWN_DEFECTS.iter().find(|(k, _)| *k == n);
        let tag = if v.pass { "PASS" } else { "FAIL" };
        println!("criterion {n:>2} {tag} {name}: {} [{secs:.1}s]", v.detail);
        match (v.pass, known) {
            (false, Some((_, why))) => println!("             known defect: {why}"),
            (false, None) => unexpected.push(n),
            _ => {}
        }
    }
    if !unexpected.is_empty() {
        eprintln!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}

//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any criterion fails.

use std::process::ExitCode;
use std::time::Instant;

use num_complex::Complex64;
use pilotwave_core::detection::{marginal_ks_critical, DEFAULT_KS_ALPHA, DEFAULT_QUAD_TOL};
use pilotwave_core::ensemble::{histogram_comparison, monte_carlo_bound};
use pilotwave_core::ergodicity::{random_mode_system, resolving_samples};
use pilotwave_core::io::{write_arrivals, write_histogram};
use pilotwave_core::quadrature::{Rect, TensorGauss};
use pilotwave_core::rng::substream;
use pilotwave_core::stats::sample_std;
use pilotwave_core::*;
use rand::Rng;

const N_PAIRS: usize = 100_000;
const SEED: u64 = 20_240_917;
const TEST_DOMAIN: u64 = 0x4143_4350;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

struct Runs {
    params: PhysicalParams,
    state: TwoSlitState,
    settings: IntegratorSettings,
    eq_start: ArrivalSet,
    eq_half: ArrivalSet,
    eq_end: ArrivalSet,
    con_start: ArrivalSet,
    con_end: ArrivalSet,
}

fn evolve(
    points: &[PhasePoint],
    params: &PhysicalParams,
    settings: &IntegratorSettings,
    workers: usize,
) -> (ArrivalSet, ArrivalSet, ArrivalSet) {
    let start = ArrivalSet::initial(points).expect("initial set");
    let half = start
        .advance(params.t0 / 2.0, settings, params, workers)
        .expect("first leg");
    let end = half.advance(params.t0, settings, params, workers).expect("second leg");
    (start, half, end)
}

fn prepare() -> Runs {
    let params = PhysicalParams::default();
    let state = TwoSlitState::new(params).expect("state");
    let settings = IntegratorSettings::default();
    let eq_cfg = EnsembleConfig {
        n_pairs: N_PAIRS,
        master_seed: SEED,
        constraint: Constraint::Equilibrium,
    };
    let con_cfg = EnsembleConfig {
        constraint: Constraint::Antidiagonal,
        ..eq_cfg
    };
    let clock = Instant::now();
    let (eq_start, eq_half, eq_end) = evolve(
        &sample_equilibrium(&eq_cfg, &params).expect("sample"),
        &params,
        &settings,
        4,
    );
    let (con_start, _, con_end) = evolve(
        &sample_constrained(&con_cfg, &params).expect("sample"),
        &params,
        &settings,
        4,
    );
    eprintln!("ensembles evolved in {:.1}s", clock.elapsed().as_secs_f64());
    Runs {
        params,
        state,
        settings,
        eq_start,
        eq_half,
        eq_end,
        con_start,
        con_end,
    }
}

fn equivariance(r: &Runs) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for set in [&r.eq_start, &r.eq_half, &r.eq_end] {
        let h = histogram_comparison(set, &r.state);
        let bound = monte_carlo_bound(2.0, h.grid.bin_count(), h.n);
        pass &= h.distance < bound;
        parts.push(format!("t={} TV={:.4} bound={:.4}", set.t, h.distance, bound));
    }
    let con = histogram_comparison(&r.con_end, &r.state);
    parts.push(format!("constrained TV={:.4}", con.distance));
    parts.push(format!("aborted={}", r.eq_end.aborted_count));
    Outcome::new(pass, parts.join(", "))
}

fn com_oracle_match(r: &Runs) -> Outcome {
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for set in [&r.eq_half, &r.eq_end] {
        for a in set.arrivals.iter().take(1000) {
            if a.status != TrajectoryStatus::Completed {
                continue;
            }
            let y0 = a.start.com();
            let rel = (a.end.com() - com_oracle(y0, a.end.t, &r.params)).abs() / (y0.abs() + r.params.sigma0);
            worst = worst.max(rel);
            checked += 1;
        }
    }
    Outcome::new(
        worst < 1e-6 && checked >= 2000,
        format!("max relative error {worst:.2e} over {checked} trajectory endpoints"),
    )
}

fn spread_claim(r: &Runs) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (k, y) in [5.0, 10.0].into_iter().enumerate() {
        let params = PhysicalParams {
            half_separation: y,
            ..r.params
        };
        let cfg = EnsembleConfig {
            n_pairs: N_PAIRS,
            master_seed: SEED + 1 + k as u64,
            constraint: Constraint::Equilibrium,
        };
        let coms: Vec<f64> = sample_equilibrium(&cfg, &params)
            .expect("sample")
            .iter()
            .map(PhasePoint::com)
            .collect();
        let s = sample_std(&coms).expect("spread");
        // SE of a sample standard deviation for a normal variable.
        let se = s / (2.0 * (coms.len() as f64 - 1.0)).sqrt();
        let target = params.sigma0 / 2f64.sqrt();
        pass &= (s - target).abs() < 4.0 * se;
        parts.push(format!("Y={y}: {s:.5} vs {target:.5} (4 SE = {:.5})", 4.0 * se));
    }
    let con = com_spread(r.con_start.points()).expect("spread");
    pass &= con == 0.0;
    parts.push(format!("constrained {con}"));
    Outcome::new(pass, parts.join(", "))
}

fn windows(pairs: &[(f64, f64, f64, f64)]) -> Vec<(DetectorWindow, DetectorWindow)> {
    pairs
        .iter()
        .map(|&(a, b, c, d)| {
            (
                DetectorWindow::between(a, b).unwrap(),
                DetectorWindow::between(c, d).unwrap(),
            )
        })
        .collect()
}

fn agreement(r: &Runs) -> Outcome {
    let grid = windows(&[
        (0.0, 4.0, -8.0, -2.0),
        (2.0, 6.0, -3.0, 1.0),
        (5.0, 10.0, -12.0, -4.0),
        (-1.0, 3.0, 3.0, 9.0),
        (1.0, 5.0, 6.0, 14.0),
        (-15.0, -5.0, 8.0, 11.0),
    ]);
    let mut pass = true;
    let mut zs = Vec::new();
    for (w1, w2) in &grid {
        assert_ne!(*w2, w1.reflected());
        let sqm = sqm_window_probability(w1, w2, r.params.t0, &r.state, DEFAULT_QUAD_TOL).expect("quadrature");
        let v = compare(sqm, &bm_coincidence_fraction(&r.eq_end, w1, w2)).expect("compare");
        pass &= v.agrees;
        zs.push(format!("{:+.2}", v.z));
    }
    Outcome::new(pass, format!("{} window pairs, z = [{}]", grid.len(), zs.join(", ")))
}

fn constrained_reproduction(r: &Runs) -> Outcome {
    let sigma0 = r.params.sigma0;
    let max_sum = r.con_end.points().map(|p| (p.y1 + p.y2).abs()).fold(0.0, f64::max);
    let a = max_sum < 1e-8 * sigma0 && r.con_end.aborted_count == 0;

    let (w1, w2) = (
        DetectorWindow::between(0.5, 3.0).unwrap(),
        DetectorWindow::between(3.0, 8.0).unwrap(),
    );
    let sqm = sqm_window_probability(&w1, &w2, r.params.t0, &r.state, DEFAULT_QUAD_TOL).expect("quadrature");
    let v = compare(sqm, &bm_coincidence_fraction(&r.con_end, &w1, &w2)).expect("compare");
    let b = v.bm.hits == 0 && sqm > 0.01 && !v.agrees;

    let ks0 = marginal_ks_statistic(&r.con_start, &r.state).expect("ks");
    let ks = marginal_ks_statistic(&r.con_end, &r.state).expect("ks");
    let crit = marginal_ks_critical(DEFAULT_KS_ALPHA, r.con_end.completed_count());
    let c = ks > crit && ks0 > crit;
    let eq_ks = marginal_ks_statistic(&r.eq_end, &r.state).expect("ks");
    Outcome::new(
        a && b && c && eq_ks < crit,
        format!(
            "(a) max|y1+y2|={max_sum:.1e} (b) hits={} sqm_p={sqm:.4} (c) KS t0={ks:.4} t=0 {ks0:.4} crit={crit:.4}; equilibrium KS={eq_ks:.4}",
            v.bm.hits
        ),
    )
}

fn ghose(r: &Runs) -> Outcome {
    let g = ghose_p_star(&r.con_end, &r.state).expect("ghose");
    let margin = (1.0 - g.mean) / g.se;
    Outcome::new(
        margin > 10.0,
        format!("P*={:.5e} se={:.2e}, (1-P*)/se={margin:.3e}", g.mean, g.se),
    )
}

fn ergodic_identities(r: &Runs) -> Outcome {
    let mut worst_toy: f64 = 0.0;
    for i in 0..10 {
        let (x, f) = random_mode_system(SEED, i, 5);
        let horizon = 1e4 / x.min_gap();
        let avg = time_average(&x, &f, horizon, resolving_samples(&x, horizon, 32.0)).expect("time average");
        worst_toy = worst_toy.max((avg - diagonal_average(&x, &f).expect("diagonal")).abs());
    }
    let mut worst_space: f64 = 0.0;
    let mut worst_imag: f64 = 0.0;
    for t in [0.0, r.params.t0 / 2.0, r.params.t0] {
        for obs in [LocalObservable::PositionY1, LocalObservable::MomentumY1] {
            let bohm = bohm_space_average(obs, t, &r.state, 1e-10).expect("bohm average");
            let sqm = sqm_expectation(obs, t, &r.state, 1e-9).expect("sqm expectation");
            worst_space = worst_space.max((bohm.value - sqm.re).abs());
            worst_imag = worst_imag.max(sqm.im.abs());
        }
    }
    Outcome::new(
        worst_toy < 1e-2 && worst_space < 1e-8 && worst_imag < 1e-10,
        format!("toy max |dev|={worst_toy:.2e}, space max |diff|={worst_space:.2e}, max |Im|={worst_imag:.1e}"),
    )
}

fn arrival_bytes(set: &ArrivalSet) -> Vec<u8> {
    let mut buf = Vec::new();
    write_arrivals(&mut buf, set).expect("csv");
    buf
}

fn hygiene(r: &Runs) -> Outcome {
    let mut rng = substream(SEED, TEST_DOMAIN, 0);
    let mut worst_grad: f64 = 0.0;
    for _ in 0..100 {
        let t = rng.random::<f64>() * r.params.t0;
        let label = if rng.random::<bool>() {
            PacketLabel::A
        } else {
            PacketLabel::B
        };
        let centre = r.params.half_separation + r.params.uy() * t;
        let y =
            if label == PacketLabel::A { centre } else { -centre } + r.params.width_at(t) * rng.random_range(-4.0..4.0);
        let h = 1e-6 * r.params.sigma0;
        let fd: Complex64 =
            (packet_amplitude(label, y + h, t, &r.params) - packet_amplitude(label, y - h, t, &r.params)) / (2.0 * h);
        let g = packet_gradient_y(label, y, t, &r.params);
        let scale = g
            .norm()
            .max(packet_amplitude(label, y, t, &r.params).norm() / r.params.sigma0);
        worst_grad = worst_grad.max((fd - g).norm() / scale);
    }

    let rule = TensorGauss::new(10);
    let mut worst_norm: f64 = 0.0;
    for t in [0.0, r.params.t0 / 2.0, r.params.t0] {
        let slice = r.state.at(t);
        let half = r.params.support_half_width(t, 12.0);
        let mass = rule.integrate_composite(|a, b| slice.density(a, b), &Rect::square(half), 96, 96);
        worst_norm = worst_norm.max((mass - 1.0).abs());
    }

    let cfg = EnsembleConfig {
        n_pairs: N_PAIRS,
        master_seed: SEED,
        constraint: Constraint::Equilibrium,
    };
    let reference = arrival_bytes(&r.eq_end);
    let mut identical = true;
    for workers in [1, 8] {
        let (_, _, end) = evolve(
            &sample_equilibrium(&cfg, &r.params).expect("sample"),
            &r.params,
            &r.settings,
            workers,
        );
        identical &= arrival_bytes(&end) == reference;
    }
    let mut h1 = Vec::new();
    let mut h2 = Vec::new();
    write_histogram(&mut h1, &histogram_comparison(&r.eq_end, &r.state)).expect("csv");
    write_histogram(&mut h2, &histogram_comparison(&r.eq_end, &r.state)).expect("csv");
    identical &= h1 == h2;

    Outcome::new(
        worst_grad < 1e-6 && worst_norm < 1e-6 && identical,
        format!("gradient rel err {worst_grad:.1e}, normalization err {worst_norm:.1e}, workers 1/4/8 identical={identical}"),
    )
}

fn main() -> ExitCode {
    let runs = prepare();
    type Check = fn(&Runs) -> Outcome;
    let criteria: [(&str, Check); 8] = [
        ("1 equivariance", equivariance),
        ("2 centre-of-mass oracle", com_oracle_match),
        ("3 initial centre-of-mass spread", spread_claim),
        ("4 coincidence agreement under equilibrium", agreement),
        ("5 constrained ensemble", constrained_reproduction),
        ("6 time-ensemble coincidence value", ghose),
        ("7 ergodic identities", ergodic_identities),
        ("8 numerical hygiene", hygiene),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let clock = Instant::now();
        let o = check(&runs);
        if !o.pass {
            failed += 1;
        }
        println!(
            "{} criterion {name}: {} [{:.1}s]",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            clock.elapsed().as_secs_f64()
        );
    }
    if failed == 0 {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failed} criteria failed");
        ExitCode::FAILURE
    }
}

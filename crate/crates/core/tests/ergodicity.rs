use pilotwave_core::ergodicity::{
    bohm_space_average_over, random_mode_system, resolving_samples, sqm_expectation_over, LocalGrid,
};
use pilotwave_core::quadrature::Rect;
use pilotwave_core::{
    bohm_space_average, diagonal_average, local_expectation_grid, sqm_expectation, time_average, velocity_field,
    HistogramGrid, LocalObservable, PhasePoint, PhysicalParams, TwoSlitState,
};

const OBSERVABLES: [LocalObservable; 2] = [LocalObservable::PositionY1, LocalObservable::MomentumY1];

fn state(ky: f64) -> TwoSlitState {
    TwoSlitState::new(PhysicalParams {
        ky,
        ..PhysicalParams::default()
    })
    .unwrap()
}

#[test]
fn space_averages_agree_on_full_box() {
    for ky in [0.0, 0.4] {
        let s = state(ky);
        let t0 = s.params().t0;
        for t in [0.0, t0 / 2.0, t0] {
            for obs in OBSERVABLES {
                let bohm = bohm_space_average(obs, t, &s, 1e-10).unwrap();
                let sqm = sqm_expectation(obs, t, &s, 1e-9).unwrap();
                assert!(
                    (bohm.value - sqm.re).abs() < 1e-8,
                    "{obs:?} t={t} ky={ky}: {} vs {}",
                    bohm.value,
                    sqm.re
                );
                assert!(sqm.im.abs() < 1e-10, "{obs:?} t={t}: imaginary part {}", sqm.im);
                assert!(bohm.masked_weight < 1e-8);
            }
        }
    }
}

#[test]
fn symmetric_state_has_zero_averages_at_start() {
    let s = state(0.0);
    for obs in OBSERVABLES {
        let bohm = bohm_space_average(obs, 0.0, &s, 1e-10).unwrap();
        assert!(bohm.value.abs() < 1e-10, "{obs:?}: {}", bohm.value);
    }
}

#[test]
fn transverse_momentum_shows_up_in_momentum_average() {
    // psi_A carries +ky and psi_B carries -ky, so particle 1 still averages to zero.
    // Restricting to the upper half-plane of y1 picks the A branch.
    let s = state(0.6);
    let t = 5.0;
    let half = s.params().support_half_width(t, 12.0);
    let upper = Rect::new(0.0, half, -half, half);
    let bohm = bohm_space_average_over(LocalObservable::MomentumY1, t, &s, &upper, 1e-10).unwrap();
    let sqm = sqm_expectation_over(LocalObservable::MomentumY1, t, &s, &upper, 1e-10).unwrap();
    assert!(bohm.value > 0.1);
    assert!((bohm.value - sqm.re).abs() < 1e-8);
}

#[test]
fn half_plane_averages_agree() {
    let s = state(0.0);
    let t0 = s.params().t0;
    for t in [0.0, t0] {
        let half = s.params().support_half_width(t, 12.0);
        for rect in [Rect::new(0.0, half, -half, half), Rect::new(-half, half, 0.0, half)] {
            for obs in OBSERVABLES {
                let bohm = bohm_space_average_over(obs, t, &s, &rect, 1e-10).unwrap();
                let sqm = sqm_expectation_over(obs, t, &s, &rect, 1e-9).unwrap();
                assert!((bohm.value - sqm.re).abs() < 1e-8, "{obs:?} t={t} {rect:?}");
            }
        }
        let upper = Rect::new(0.0, half, -half, half);
        let y1 = bohm_space_average_over(LocalObservable::PositionY1, t, &s, &upper, 1e-10).unwrap();
        assert!(y1.value > 1.0);
    }
}

fn cell_centre(grid: &HistogramGrid, i: usize) -> f64 {
    0.5 * (grid.edge(i) + grid.edge(i + 1))
}

#[test]
fn local_values_on_grid() {
    let s = state(0.3);
    let t = 7.0;
    let grid = HistogramGrid::diagnostic(s.params(), t);
    let pos: LocalGrid = local_expectation_grid(LocalObservable::PositionY1, t, &s, &grid);
    let mom = local_expectation_grid(LocalObservable::MomentumY1, t, &s, &grid);
    assert!(pos.masked_weight < 1e-8);
    let mut compared = 0;
    for i in 0..grid.bins {
        for j in 0..grid.bins {
            let k = i * grid.bins + j;
            let (a, b) = (cell_centre(&grid, i), cell_centre(&grid, j));
            if let Some(v) = pos.values[k] {
                assert_eq!(v, a);
            }
            if let (Some(p), Ok((v1, _))) = (mom.values[k], velocity_field(&PhasePoint::new(a, b, t), s.params())) {
                assert!((p - s.params().mass * v1).abs() <= 1e-12 * (1.0 + p.abs()));
                compared += 1;
            }
        }
    }
    assert!(compared > grid.bin_count() / 2);
}

#[test]
fn momentum_local_value_is_odd_under_reflection() {
    let s = state(0.5);
    let slice = s.at(4.0);
    let hbar = s.params().hbar;
    for (a, b) in [(3.0, -4.0), (6.5, -2.0), (-1.0, 5.5), (8.0, -8.5)] {
        let v = LocalObservable::MomentumY1.local_value(&slice, hbar, a, b);
        let w = LocalObservable::MomentumY1.local_value(&slice, hbar, -a, -b);
        assert!((v + w).abs() <= 1e-12 * (1.0 + v.abs()));
    }
}

#[test]
fn five_mode_time_average_reaches_diagonal() {
    for i in 0..4 {
        let (x, f) = random_mode_system(2024, i, 5);
        let horizon = 1e4 / x.min_gap();
        let avg = time_average(&x, &f, horizon, resolving_samples(&x, horizon, 32.0)).unwrap();
        let diag = diagonal_average(&x, &f).unwrap();
        assert!((avg - diag).abs() < 1e-2, "system {i}: {avg} vs {diag}");
    }
}

#[test]
fn time_average_error_falls_like_inverse_horizon() {
    let (x, f) = random_mode_system(7, 0, 5);
    let diag = diagonal_average(&x, &f).unwrap();
    // The deviation oscillates; its running maximum over a window of
    // horizons times the horizon should stay bounded.
    let base = 10.0 / x.min_gap();
    let mut scaled = Vec::new();
    for k in 0..6 {
        let lo = base * 4f64.powi(k);
        let mut worst: f64 = 0.0;
        for j in 0..16 {
            let horizon = lo * (1.0 + j as f64 / 16.0);
            let avg = time_average(&x, &f, horizon, resolving_samples(&x, horizon, 32.0)).unwrap();
            worst = worst.max((avg - diag).abs());
        }
        scaled.push(worst * lo);
    }
    let (min, max) = scaled
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    assert!(max.is_finite() && max < 10.0 * min.max(1e-3), "{scaled:?}");
}

//! Time averages, diagonal averages and local expectation values.
//!
//! Two identities are checked here. For a discrete spectrum,
//! `(1/T) int_0^T <psi(t)|F|psi(t)> dt` tends to the diagonal average
//! `sum_n |c_n|^2 F_nn` when the energies are nondegenerate. For the two-slit
//! state, the `|psi|^2`-weighted average of the local expectation value
//! `Re(psi* F psi) / |psi|^2` equals the quantum expectation
//! `Re int psi* F psi`.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;
use thiserror::Error;

use crate::ensemble::HistogramGrid;
use crate::guidance::{coarse_peak, DEFAULT_NODE_EPS};
use crate::quadrature::{adaptive_simpson_2d, QuadratureError, Rect, SimpsonOptions, TensorGauss};
use crate::rng::{substream, DOMAIN_MODES};
use crate::wavepacket::{StateSlice, TwoSlitState};

const NORM_TOL: f64 = 1e-12;
const GRID_DEGREE: usize = 8;
const MAX_REFINEMENTS: usize = 3;
/// Half-width of the integration box in packet widths. The density beyond
/// twelve widths is below 1e-30, far under every tolerance used here.
pub const INTEGRATION_WIDTHS: f64 = 12.0;
/// Largest tolerated weight of node-masked grid points.
pub const MAX_MASKED_WEIGHT: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ErgodicityError {
    #[error("coefficients and energies differ in length ({coeffs} vs {energies})")]
    LengthMismatch { coeffs: usize, energies: usize },
    #[error("mode expansion is not normalized: sum |c_n|^2 = {norm}")]
    NotNormalized { norm: f64 },
    #[error("observable is {rows}x{cols} but the expansion has {modes} modes")]
    DimensionMismatch { rows: usize, cols: usize, modes: usize },
    #[error("observable matrix is not hermitian at ({row}, {col})")]
    NotHermitian { row: usize, col: usize },
    #[error("non-finite value in {what}")]
    NonFinite { what: &'static str },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("masked node weight {weight:e} exceeds {limit:e}")]
    MaskedWeight { weight: f64, limit: f64 },
    #[error("grid average did not settle after {refinements} refinements (last change {change:e})")]
    NotConverged { refinements: usize, change: f64 },
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
}

/// `psi(t) = sum_n c_n exp(-i E_n t / hbar) phi_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeExpansion {
    coeffs: Vec<Complex64>,
    energies: Vec<f64>,
    hbar: f64,
}

impl ModeExpansion {
    pub fn new(coeffs: Vec<Complex64>, energies: Vec<f64>, hbar: f64) -> Result<Self, ErgodicityError> {
        if coeffs.len() != energies.len() {
            return Err(ErgodicityError::LengthMismatch {
                coeffs: coeffs.len(),
                energies: energies.len(),
            });
        }
        if coeffs.iter().any(|c| !(c.re.is_finite() && c.im.is_finite())) {
            return Err(ErgodicityError::NonFinite { what: "coefficients" });
        }
        if energies.iter().any(|e| !e.is_finite()) {
            return Err(ErgodicityError::NonFinite { what: "energies" });
        }
        if !(hbar.is_finite() && hbar > 0.0) {
            return Err(ErgodicityError::InvalidArgument(format!(
                "hbar must be > 0, got {hbar}"
            )));
        }
        let norm: f64 = coeffs.iter().map(|c| c.norm_sqr()).sum();
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(ErgodicityError::NotNormalized { norm });
        }
        Ok(Self { coeffs, energies, hbar })
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    /// Smallest spacing between distinct energy levels (0 if degenerate).
    pub fn min_gap(&self) -> f64 {
        let mut e = self.energies.clone();
        e.sort_by(f64::total_cmp);
        e.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min)
    }

    /// Largest level spacing `max E - min E`.
    pub fn max_gap(&self) -> f64 {
        let lo = self.energies.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self.energies.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        hi - lo
    }
}

/// Matrix elements `F_mn = <phi_m|F|phi_n>`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservableMatrix {
    dim: usize,
    elements: Vec<Complex64>,
}

impl ObservableMatrix {
    pub fn new(dim: usize, elements: Vec<Complex64>) -> Result<Self, ErgodicityError> {
        if elements.len() != dim * dim {
            return Err(ErgodicityError::DimensionMismatch {
                rows: dim,
                cols: elements.len().checked_div(dim).unwrap_or(0),
                modes: dim,
            });
        }
        let scale = elements.iter().map(|z| z.norm()).fold(0.0, f64::max);
        for m in 0..dim {
            for n in 0..dim {
                let d = elements[m * dim + n] - elements[n * dim + m].conj();
                if d.norm() > 1e-12 * scale.max(1.0) {
                    return Err(ErgodicityError::NotHermitian { row: m, col: n });
                }
            }
        }
        Ok(Self { dim, elements })
    }

    pub fn from_real_rows(rows: &[&[f64]]) -> Result<Self, ErgodicityError> {
        let dim = rows.len();
        let elements = rows
            .iter()
            .flat_map(|r| r.iter().map(|&x| Complex64::new(x, 0.0)))
            .collect();
        Self::new(dim, elements)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, m: usize, n: usize) -> Complex64 {
        self.elements[m * self.dim + n]
    }
}

fn check_dims(x: &ModeExpansion, f: &ObservableMatrix) -> Result<(), ErgodicityError> {
    if f.dim != x.len() {
        return Err(ErgodicityError::DimensionMismatch {
            rows: f.dim,
            cols: f.dim,
            modes: x.len(),
        });
    }
    Ok(())
}

/// `Re sum_mn c_m* c_n F_mn exp(-i (E_n - E_m) t / hbar)`.
pub fn expectation_at_time(x: &ModeExpansion, f: &ObservableMatrix, t: f64) -> Result<f64, ErgodicityError> {
    check_dims(x, f)?;
    let mut acc = Complex64::new(0.0, 0.0);
    for m in 0..x.len() {
        for n in 0..x.len() {
            let phase = -(x.energies[n] - x.energies[m]) * t / x.hbar;
            acc += x.coeffs[m].conj() * x.coeffs[n] * f.get(m, n) * Complex64::from_polar(1.0, phase);
        }
    }
    Ok(acc.re)
}

/// `sum_n |c_n|^2 F_nn`.
pub fn diagonal_average(x: &ModeExpansion, f: &ObservableMatrix) -> Result<f64, ErgodicityError> {
    check_dims(x, f)?;
    Ok((0..x.len()).map(|n| x.coeffs[n].norm_sqr() * f.get(n, n).re).sum())
}

/// Trapezoidal average of [`expectation_at_time`] over `n_samples` equally
/// spaced times in `[0, T]`.
pub fn time_average(
    x: &ModeExpansion,
    f: &ObservableMatrix,
    horizon: f64,
    n_samples: usize,
) -> Result<f64, ErgodicityError> {
    check_dims(x, f)?;
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(ErgodicityError::InvalidArgument(format!(
            "T must be > 0, got {horizon}"
        )));
    }
    if n_samples < 100 {
        return Err(ErgodicityError::InvalidArgument(format!(
            "n_samples must be >= 100, got {n_samples}"
        )));
    }
    // Pair (m, n) and (n, m) together: 2 Re(c_m* c_n F_mn e^{-i w t}).
    let diag = diagonal_average(x, f)?;
    let mut terms = Vec::new();
    for m in 0..x.len() {
        for n in (m + 1)..x.len() {
            let w = x.coeffs[m].conj() * x.coeffs[n] * f.get(m, n) * 2.0;
            let omega = (x.energies[n] - x.energies[m]) / x.hbar;
            terms.push((w, omega));
        }
    }
    let dt = horizon / (n_samples - 1) as f64;
    let mut acc = 0.0;
    for j in 0..n_samples {
        let t = dt * j as f64;
        let weight = if j == 0 || j + 1 == n_samples { 0.5 } else { 1.0 };
        let osc: f64 = terms
            .iter()
            .map(|(w, omega)| (w * Complex64::from_polar(1.0, -omega * t)).re)
            .sum();
        acc += weight * osc;
    }
    Ok(diag + acc * dt / horizon)
}

/// Sample count that resolves the fastest oscillation of `x` over `[0, T]`
/// with at least `per_period` points per period.
pub fn resolving_samples(x: &ModeExpansion, horizon: f64, per_period: f64) -> usize {
    let omega = x.max_gap() / x.hbar;
    let periods = omega * horizon / (2.0 * std::f64::consts::PI);
    ((periods * per_period).ceil() as usize).max(1000)
}

/// Random nondegenerate `dim`-mode system: complex normalized coefficients,
/// energies with consecutive gaps in `[0.5, 1.5)`, and a random hermitian
/// observable with entries of order one. Drawn from substream `index`.
pub fn random_mode_system(seed: u64, index: u64, dim: usize) -> (ModeExpansion, ObservableMatrix) {
    let mut rng = substream(seed, DOMAIN_MODES, index);
    let mut coeffs: Vec<Complex64> = (0..dim)
        .map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
        .collect();
    let norm = coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    coeffs.iter_mut().for_each(|c| *c /= norm);
    let mut energies = Vec::with_capacity(dim);
    let mut e = rng.random::<f64>();
    for _ in 0..dim {
        energies.push(e);
        e += 0.5 + rng.random::<f64>();
    }
    let mut elements = vec![Complex64::new(0.0, 0.0); dim * dim];
    for m in 0..dim {
        elements[m * dim + m] = Complex64::new(rng.sample(StandardNormal), 0.0);
        for n in (m + 1)..dim {
            let z = Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
            elements[m * dim + n] = z;
            elements[n * dim + m] = z.conj();
        }
    }
    let x = ModeExpansion::new(coeffs, energies, 1.0).expect("normalized by construction");
    let f = ObservableMatrix::new(dim, elements).expect("hermitian by construction");
    (x, f)
}

/// Observables of particle 1 for the two-slit state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LocalObservable {
    PositionY1,
    MomentumY1,
}

impl LocalObservable {
    pub fn as_str(&self) -> &'static str {
        match self {
            LocalObservable::PositionY1 => "position_y1",
            LocalObservable::MomentumY1 => "momentum_y1",
        }
    }

    /// Local expectation value `Re(psi* F psi) / |psi|^2` at `(y1, y2)`.
    #[inline]
    pub fn local_value(&self, slice: &StateSlice, hbar: f64, y1: f64, y2: f64) -> f64 {
        match self {
            LocalObservable::PositionY1 => y1,
            LocalObservable::MomentumY1 => {
                let p = slice.amplitude_and_gradient(y1, y2);
                hbar * (p.d1 / p.psi).im
            }
        }
    }

    /// `psi* (F psi)` at `(y1, y2)`, with `F = y1` or `F = -i hbar d/dy1`.
    #[inline]
    pub fn sandwich(&self, slice: &StateSlice, hbar: f64, y1: f64, y2: f64) -> Complex64 {
        let p = slice.amplitude_and_gradient(y1, y2);
        let f_psi = match self {
            LocalObservable::PositionY1 => p.psi * y1,
            LocalObservable::MomentumY1 => p.d1 * Complex64::new(0.0, -hbar),
        };
        p.psi.conj() * f_psi
    }
}

/// Local values at the cell centres of a grid, `None` where masked.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalGrid {
    pub grid: HistogramGrid,
    /// Row-major (y1 outer) values.
    pub values: Vec<Option<f64>>,
    /// Fraction of grid density weight lost to masking.
    pub masked_weight: f64,
}

/// Node mask: density below `node_eps` times the coarse-grid peak.
fn node_floor(state: &TwoSlitState, t: f64) -> f64 {
    DEFAULT_NODE_EPS * coarse_peak(state.params(), t) * state.norm() * state.norm()
}

/// Local expectation values at the centres of `grid` at time `t`.
pub fn local_expectation_grid(
    observable: LocalObservable,
    t: f64,
    state: &TwoSlitState,
    grid: &HistogramGrid,
) -> LocalGrid {
    let slice = state.at(t);
    let hbar = state.params().hbar;
    let floor = node_floor(state, t);
    let centre = |i: usize| 0.5 * (grid.edge(i) + grid.edge(i + 1));
    let mut values = Vec::with_capacity(grid.bin_count());
    let (mut masked, mut total) = (0.0, 0.0);
    for i in 0..grid.bins {
        for j in 0..grid.bins {
            let (a, b) = (centre(i), centre(j));
            let rho = slice.density(a, b);
            total += rho;
            if rho > floor {
                values.push(Some(observable.local_value(&slice, hbar, a, b)));
            } else {
                masked += rho;
                values.push(None);
            }
        }
    }
    LocalGrid {
        grid: *grid,
        values,
        masked_weight: if total > 0.0 { masked / total } else { 0.0 },
    }
}

/// Bohmian space average with bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpaceAverage {
    pub value: f64,
    pub masked_weight: f64,
    pub cells_per_axis: usize,
}

/// Box that holds all but a negligible part of the density at time `t`.
pub fn integration_box(state: &TwoSlitState, t: f64) -> Rect {
    Rect::square(state.params().support_half_width(t, INTEGRATION_WIDTHS))
}

/// `int |psi|^2 F_local` over [`integration_box`] at time `t`.
pub fn bohm_space_average(
    observable: LocalObservable,
    t: f64,
    state: &TwoSlitState,
    quad_tol: f64,
) -> Result<SpaceAverage, ErgodicityError> {
    let rect = integration_box(state, t);
    bohm_space_average_over(observable, t, state, &rect, quad_tol)
}

/// [`bohm_space_average`] restricted to `rect`. The integral uses tensor
/// Gauss-Legendre cells, starting from a 64 x 64 grid and
/// doubling the cells per axis until two successive values agree to
/// `quad_tol`.
pub fn bohm_space_average_over(
    observable: LocalObservable,
    t: f64,
    state: &TwoSlitState,
    rect: &Rect,
    quad_tol: f64,
) -> Result<SpaceAverage, ErgodicityError> {
    let slice = state.at(t);
    let hbar = state.params().hbar;
    let floor = node_floor(state, t);
    let rule = TensorGauss::new(GRID_DEGREE);
    let evaluate = |cells: usize| {
        let mut masked = 0.0;
        let mut total = 0.0;
        let value: f64 = rule.integrate_composite(
            |a, b| {
                let rho = slice.density(a, b);
                total += rho;
                if rho > floor {
                    rho * observable.local_value(&slice, hbar, a, b)
                } else {
                    masked += rho;
                    0.0
                }
            },
            rect,
            cells,
            cells,
        );
        let masked_weight = if total > 0.0 { masked / total } else { 0.0 };
        SpaceAverage {
            value,
            masked_weight,
            cells_per_axis: cells,
        }
    };
    let mut cells = crate::ensemble::DIAGNOSTIC_BINS;
    let mut current = evaluate(cells);
    let mut change = f64::INFINITY;
    for _ in 0..MAX_REFINEMENTS {
        cells *= 2;
        let finer = evaluate(cells);
        change = (finer.value - current.value).abs();
        current = finer;
        if change <= quad_tol {
            if current.masked_weight >= MAX_MASKED_WEIGHT {
                return Err(ErgodicityError::MaskedWeight {
                    weight: current.masked_weight,
                    limit: MAX_MASKED_WEIGHT,
                });
            }
            return Ok(current);
        }
    }
    Err(ErgodicityError::NotConverged {
        refinements: MAX_REFINEMENTS,
        change,
    })
}

/// `int psi* F psi` over [`integration_box`] by nested adaptive Simpson. The
/// real part is the expectation value; the imaginary part vanishes for a
/// hermitian `F` up to boundary terms.
pub fn sqm_expectation(
    observable: LocalObservable,
    t: f64,
    state: &TwoSlitState,
    quad_tol: f64,
) -> Result<Complex64, ErgodicityError> {
    let rect = integration_box(state, t);
    sqm_expectation_over(observable, t, state, &rect, quad_tol)
}

pub fn sqm_expectation_over(
    observable: LocalObservable,
    t: f64,
    state: &TwoSlitState,
    rect: &Rect,
    quad_tol: f64,
) -> Result<Complex64, ErgodicityError> {
    let slice = state.at(t);
    let hbar = state.params().hbar;
    let opts = SimpsonOptions::new(quad_tol);
    Ok(adaptive_simpson_2d(
        |a, b| observable.sandwich(&slice, hbar, a, b),
        rect,
        &opts,
    )?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_1_SQRT_2, PI};

    fn two_level() -> (ModeExpansion, ObservableMatrix) {
        let c = Complex64::new(FRAC_1_SQRT_2, 0.0);
        let x = ModeExpansion::new(vec![c, c], vec![0.0, 1.0], 1.0).unwrap();
        let f = ObservableMatrix::from_real_rows(&[&[0.0, 1.0], &[1.0, 0.0]]).unwrap();
        (x, f)
    }

    #[test]
    fn two_level_cosine() {
        let (x, f) = two_level();
        assert!((expectation_at_time(&x, &f, 0.0).unwrap() - 1.0).abs() < 1e-15);
        assert!((expectation_at_time(&x, &f, PI).unwrap() + 1.0).abs() < 1e-15);
        for t in [0.3, 1.7, 12.0] {
            assert!((expectation_at_time(&x, &f, t).unwrap() - t.cos()).abs() < 1e-14);
        }
    }

    #[test]
    fn two_level_time_average_bound() {
        let (x, f) = two_level();
        for horizon in [10.0, 100.0, 1000.0] {
            let n = resolving_samples(&x, horizon, 1024.0);
            let avg = time_average(&x, &f, horizon, n).unwrap();
            // (1/T) int_0^T cos t dt = sin T / T
            assert!((avg - horizon.sin() / horizon).abs() < 1e-6);
            assert!(avg.abs() <= 2.0 / horizon);
        }
    }

    #[test]
    fn single_mode_is_stationary() {
        let x = ModeExpansion::new(vec![Complex64::new(0.0, 1.0)], vec![3.0], 1.0).unwrap();
        let f = ObservableMatrix::from_real_rows(&[&[2.5]]).unwrap();
        assert_eq!(expectation_at_time(&x, &f, 7.0).unwrap(), 2.5);
        assert!((time_average(&x, &f, 10.0, 100).unwrap() - 2.5).abs() < 1e-15);
        assert_eq!(diagonal_average(&x, &f).unwrap(), 2.5);
    }

    #[test]
    fn diagonal_average_examples() {
        let one = Complex64::new(1.0, 0.0);
        let zero = Complex64::new(0.0, 0.0);
        let f = ObservableMatrix::from_real_rows(&[&[0.7, 0.2], &[0.2, -1.0]]).unwrap();
        let x = ModeExpansion::new(vec![one, zero], vec![0.0, 1.0], 1.0).unwrap();
        assert_eq!(diagonal_average(&x, &f).unwrap(), 0.7);
        let (x, _) = two_level();
        let diag = ObservableMatrix::from_real_rows(&[&[0.0, 0.0], &[0.0, 1.0]]).unwrap();
        assert!((diagonal_average(&x, &diag).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn validation_errors() {
        let c = Complex64::new(0.5, 0.0);
        assert!(matches!(
            ModeExpansion::new(vec![c, c], vec![0.0, 1.0], 1.0),
            Err(ErgodicityError::NotNormalized { .. })
        ));
        assert!(matches!(
            ModeExpansion::new(vec![c], vec![0.0, 1.0], 1.0),
            Err(ErgodicityError::LengthMismatch { .. })
        ));
        assert!(matches!(
            ObservableMatrix::new(
                2,
                vec![
                    Complex64::new(0.0, 0.0),
                    Complex64::new(0.0, 1.0),
                    Complex64::new(0.0, 1.0),
                    Complex64::new(0.0, 0.0)
                ]
            ),
            Err(ErgodicityError::NotHermitian { .. })
        ));
        let (x, _) = two_level();
        let f3 = ObservableMatrix::from_real_rows(&[&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0], &[0.0, 0.0, 1.0]]).unwrap();
        assert!(matches!(
            expectation_at_time(&x, &f3, 0.0),
            Err(ErgodicityError::DimensionMismatch { .. })
        ));
        let (x, f) = two_level();
        assert!(time_average(&x, &f, 1.0, 99).is_err());
        assert!(time_average(&x, &f, 0.0, 100).is_err());
    }

    #[test]
    fn degenerate_levels_keep_coherence() {
        // E0 = E1: the off-diagonal term never dephases.
        let c = Complex64::new(FRAC_1_SQRT_2, 0.0);
        let x = ModeExpansion::new(vec![c, c], vec![1.0, 1.0], 1.0).unwrap();
        let f = ObservableMatrix::from_real_rows(&[&[0.0, 1.0], &[1.0, 0.0]]).unwrap();
        let avg = time_average(&x, &f, 1e4, 1000).unwrap();
        let diag = diagonal_average(&x, &f).unwrap();
        assert!((avg - 1.0).abs() < 1e-12);
        assert!((avg - diag).abs() > 0.5);
    }

    #[test]
    fn random_systems_are_valid_and_nondegenerate() {
        for i in 0..5 {
            let (x, f) = random_mode_system(9, i, 5);
            assert_eq!(x.len(), 5);
            assert_eq!(f.dim(), 5);
            assert!(x.min_gap() >= 0.5);
        }
        assert_eq!(random_mode_system(9, 1, 5), random_mode_system(9, 1, 5));
    }
}

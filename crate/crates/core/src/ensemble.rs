//! Initial-condition ensembles and their evolution.
//!
//! Equilibrium ensembles are drawn from `|psi(y1, y2, 0)|^2` by rejection
//! from the cross-term-free mixture
//! `q = (|psi_A(y1) psi_B(y2)|^2 + |psi_B(y1) psi_A(y2)|^2) / 2`, which
//! bounds the target through `|a + b|^2 <= 2 (|a|^2 + |b|^2)`. Antidiagonal
//! ensembles condition the same density on `y1 + y2 = 0`.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::guidance::{GuidanceError, IntegratorSettings, PairIntegrator, PhasePoint, TrajectoryStatus};
use crate::params::PhysicalParams;
use crate::quadrature::{Rect, TensorGauss};
use crate::rng::pair_stream;
use crate::stats::sample_std;
use crate::wavepacket::{PacketLabel, PacketSlice, TwoSlitState};

/// Largest tolerated fraction of node-aborted trajectories.
pub const MAX_ABORT_FRACTION: f64 = 1e-3;
/// Bins per axis of the diagnostic histogram.
pub const DIAGNOSTIC_BINS: usize = 64;
/// Half-width of the diagnostic box beyond the slit offset, in packet widths.
pub const DIAGNOSTIC_WIDTHS: f64 = 6.0;

const ENVELOPE_SLACK: f64 = 1e-12;
const BIN_QUADRATURE_DEGREE: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Constraint {
    /// Initial positions distributed as `|psi(0)|^2`.
    Equilibrium,
    /// Initial positions conditioned on `y1 + y2 = 0`.
    Antidiagonal,
}

impl Constraint {
    pub fn as_str(&self) -> &'static str {
        match self {
            Constraint::Equilibrium => "equilibrium",
            Constraint::Antidiagonal => "antidiagonal",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub n_pairs: usize,
    pub master_seed: u64,
    pub constraint: Constraint,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EnsembleError {
    #[error("ensemble must contain at least {min} pairs, got {got}")]
    TooFewPairs { min: usize, got: usize },
    #[error("sampler for {expected:?} called with constraint {got:?}")]
    WrongConstraint { expected: Constraint, got: Constraint },
    #[error("target density exceeds rejection envelope by factor {ratio} for pair {pair_id}")]
    EnvelopeViolation { pair_id: usize, ratio: f64 },
    #[error("{aborted} of {n} trajectories aborted near nodes (limit {limit})")]
    AbortFraction { aborted: usize, n: usize, limit: f64 },
    #[error("ensemble points do not share a common time")]
    MixedTimes,
    #[error("invalid parameters: {0}")]
    Params(#[from] crate::params::ParamsError),
    #[error(transparent)]
    Guidance(#[from] GuidanceError),
    #[error("failed to build worker pool: {0}")]
    Pool(String),
}

/// One evolved pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Arrival {
    pub pair_id: usize,
    pub start: PhasePoint,
    pub end: PhasePoint,
    pub status: TrajectoryStatus,
}

/// Pair positions at a common time, in pair order.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrivalSet {
    pub t: f64,
    pub arrivals: Vec<Arrival>,
    pub aborted_count: usize,
}

impl ArrivalSet {
    /// Pairs at `t` that have not been evolved yet.
    pub fn initial(points: &[PhasePoint]) -> Result<Self, EnsembleError> {
        let t = common_time(points)?;
        Ok(Self {
            t,
            arrivals: points
                .iter()
                .enumerate()
                .map(|(pair_id, &p)| Arrival {
                    pair_id,
                    start: p,
                    end: p,
                    status: TrajectoryStatus::Completed,
                })
                .collect(),
            aborted_count: 0,
        })
    }

    /// End points of the pairs that reached `t`.
    pub fn points(&self) -> impl Iterator<Item = &PhasePoint> + '_ {
        self.arrivals
            .iter()
            .filter(|a| a.status == TrajectoryStatus::Completed)
            .map(|a| &a.end)
    }

    pub fn completed_count(&self) -> usize {
        self.arrivals.len() - self.aborted_count
    }

    pub fn abort_fraction(&self) -> f64 {
        if self.arrivals.is_empty() {
            0.0
        } else {
            self.aborted_count as f64 / self.arrivals.len() as f64
        }
    }

    /// Continues the completed pairs from `self.t` to `t_final`; aborted
    /// pairs are carried along unchanged. Initial positions are kept.
    pub fn advance(
        &self,
        t_final: f64,
        settings: &IntegratorSettings,
        params: &PhysicalParams,
        workers: usize,
    ) -> Result<ArrivalSet, EnsembleError> {
        let integrator = PairIntegrator::new(*params, *settings, self.t, t_final)?;
        let pool = worker_pool(workers)?;
        let evolved: Result<Vec<Arrival>, GuidanceError> = pool.install(|| {
            self.arrivals
                .par_iter()
                .map(|a| {
                    if a.status != TrajectoryStatus::Completed {
                        return Ok(*a);
                    }
                    let end = integrator.endpoint(a.end, t_final)?;
                    Ok(Arrival {
                        end: end.point,
                        status: end.status,
                        ..*a
                    })
                })
                .collect()
        });
        let arrivals = evolved?;
        let aborted_count = arrivals
            .iter()
            .filter(|a| a.status != TrajectoryStatus::Completed)
            .count();
        let set = ArrivalSet {
            t: t_final,
            arrivals,
            aborted_count,
        };
        if set.abort_fraction() >= MAX_ABORT_FRACTION {
            return Err(EnsembleError::AbortFraction {
                aborted: set.aborted_count,
                n: set.arrivals.len(),
                limit: MAX_ABORT_FRACTION,
            });
        }
        Ok(set)
    }
}

fn common_time(points: &[PhasePoint]) -> Result<f64, EnsembleError> {
    let first = points.first().ok_or(EnsembleError::TooFewPairs { min: 1, got: 0 })?;
    if points.iter().any(|p| p.t != first.t) {
        return Err(EnsembleError::MixedTimes);
    }
    Ok(first.t)
}

fn worker_pool(workers: usize) -> Result<rayon::ThreadPool, EnsembleError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| EnsembleError::Pool(e.to_string()))
}

fn check_config(cfg: &EnsembleConfig, expected: Constraint) -> Result<(), EnsembleError> {
    if cfg.constraint != expected {
        return Err(EnsembleError::WrongConstraint {
            expected,
            got: cfg.constraint,
        });
    }
    if cfg.n_pairs < 1 {
        return Err(EnsembleError::TooFewPairs {
            min: 1,
            got: cfg.n_pairs,
        });
    }
    Ok(())
}

/// Draws `cfg.n_pairs` initial configurations from `|psi(y1, y2, 0)|^2`.
pub fn sample_equilibrium(cfg: &EnsembleConfig, params: &PhysicalParams) -> Result<Vec<PhasePoint>, EnsembleError> {
    check_config(cfg, Constraint::Equilibrium)?;
    params.validate()?;
    let slice = PacketSlice::new(params, 0.0);
    let (y, s) = (params.half_separation, params.sigma0);
    (0..cfg.n_pairs)
        .map(|pair_id| {
            let mut rng = pair_stream(cfg.master_seed, pair_id as u64);
            loop {
                let g1: f64 = rng.sample(StandardNormal);
                let g2: f64 = rng.sample(StandardNormal);
                // Component (A on particle 1, B on particle 2) or its swap.
                let (y1, y2) = if rng.random::<bool>() {
                    (y + s * g1, -y + s * g2)
                } else {
                    (-y + s * g1, y + s * g2)
                };
                let a1 = slice.amplitude(PacketLabel::A, y1);
                let b1 = slice.amplitude(PacketLabel::B, y1);
                let a2 = slice.amplitude(PacketLabel::A, y2);
                let b2 = slice.amplitude(PacketLabel::B, y2);
                let target = (a1 * b2 + b1 * a2).norm_sqr();
                let envelope = 2.0 * ((a1 * b2).norm_sqr() + (b1 * a2).norm_sqr());
                let ratio = target / envelope;
                if ratio > 1.0 + ENVELOPE_SLACK {
                    return Err(EnsembleError::EnvelopeViolation { pair_id, ratio });
                }
                if rng.random::<f64>() < ratio {
                    return Ok(PhasePoint::new(y1, y2, 0.0));
                }
            }
        })
        .collect()
}

/// Draws `cfg.n_pairs` configurations with `y2 = -y1` and `y1` distributed as
/// `|psi(y1, -y1, 0)|^2` (normalized along the antidiagonal).
pub fn sample_constrained(cfg: &EnsembleConfig, params: &PhysicalParams) -> Result<Vec<PhasePoint>, EnsembleError> {
    check_config(cfg, Constraint::Antidiagonal)?;
    params.validate()?;
    let slice = PacketSlice::new(params, 0.0);
    let (y, s) = (params.half_separation, params.sigma0 / std::f64::consts::SQRT_2);
    (0..cfg.n_pairs)
        .map(|pair_id| {
            let mut rng = pair_stream(cfg.master_seed, pair_id as u64);
            loop {
                // |psi_A(y)|^4 and |psi_B(y)|^4 are Gaussians of width sigma0 / sqrt(2).
                let g: f64 = rng.sample(StandardNormal);
                let y1 = if rng.random::<bool>() { y + s * g } else { -y + s * g };
                let a = slice.amplitude(PacketLabel::A, y1);
                let b = slice.amplitude(PacketLabel::B, y1);
                // psi(y, -y) is proportional to psi_A(y)^2 + psi_B(y)^2.
                let target = (a * a + b * b).norm_sqr();
                let envelope = 2.0 * (a.norm_sqr().powi(2) + b.norm_sqr().powi(2));
                let ratio = target / envelope;
                if ratio > 1.0 + ENVELOPE_SLACK {
                    return Err(EnsembleError::EnvelopeViolation { pair_id, ratio });
                }
                if rng.random::<f64>() < ratio {
                    return Ok(PhasePoint::new(y1, -y1, 0.0));
                }
            }
        })
        .collect()
}

/// Dispatches on `cfg.constraint`.
pub fn sample(cfg: &EnsembleConfig, params: &PhysicalParams) -> Result<Vec<PhasePoint>, EnsembleError> {
    match cfg.constraint {
        Constraint::Equilibrium => sample_equilibrium(cfg, params),
        Constraint::Antidiagonal => sample_constrained(cfg, params),
    }
}

/// Sample standard deviation of the centre of mass `(y1 + y2) / 2`.
pub fn com_spread<'a, I>(points: I) -> Result<f64, EnsembleError>
where
    I: IntoIterator<Item = &'a PhasePoint>,
{
    let coms: Vec<f64> = points.into_iter().map(PhasePoint::com).collect();
    sample_std(&coms).ok_or(EnsembleError::TooFewPairs {
        min: 2,
        got: coms.len(),
    })
}

/// Evolves `points` (all at one common time) to `t_final` on `workers`
/// threads. Output order and values do not depend on `workers`.
pub fn evolve_ensemble(
    points: &[PhasePoint],
    t_final: f64,
    settings: &IntegratorSettings,
    params: &PhysicalParams,
    workers: usize,
) -> Result<ArrivalSet, EnsembleError> {
    ArrivalSet::initial(points)?.advance(t_final, settings, params, workers)
}

/// Square histogram grid centred on the origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistogramGrid {
    pub half_width: f64,
    pub bins: usize,
}

impl HistogramGrid {
    /// The 64 x 64 diagnostic grid at time `t`: it covers the slit offset,
    /// the drift `|u_y| t`, and six packet widths `|sigma_t|` on each side.
    pub fn diagnostic(params: &PhysicalParams, t: f64) -> Self {
        Self {
            half_width: params.support_half_width(t, DIAGNOSTIC_WIDTHS),
            bins: DIAGNOSTIC_BINS,
        }
    }

    pub fn bin_width(&self) -> f64 {
        2.0 * self.half_width / self.bins as f64
    }

    pub fn edge(&self, i: usize) -> f64 {
        -self.half_width + self.bin_width() * i as f64
    }

    pub fn rect(&self) -> Rect {
        Rect::square(self.half_width)
    }

    pub fn cell(&self, i: usize, j: usize) -> Rect {
        Rect::new(self.edge(i), self.edge(i + 1), self.edge(j), self.edge(j + 1))
    }

    pub fn index(&self, y: f64) -> Option<usize> {
        let x = (y + self.half_width) / self.bin_width();
        if x >= 0.0 && x < self.bins as f64 {
            Some((x as usize).min(self.bins - 1))
        } else {
            None
        }
    }

    pub fn bin_count(&self) -> usize {
        self.bins * self.bins
    }

    /// Row-major (y1 outer) model probabilities of every cell at time `t`.
    pub fn model_probabilities(&self, state: &TwoSlitState, t: f64) -> Vec<f64> {
        let slice = state.at(t);
        let rule = TensorGauss::new(BIN_QUADRATURE_DEGREE);
        (0..self.bins)
            .into_par_iter()
            .flat_map_iter(|i| {
                let rule = &rule;
                (0..self.bins).map(move |j| rule.integrate(|a, b| slice.density(a, b), &self.cell(i, j)))
            })
            .collect()
    }

    /// Row-major counts and the number of points outside the grid.
    pub fn counts<'a, I>(&self, points: I) -> (Vec<u64>, u64)
    where
        I: IntoIterator<Item = &'a PhasePoint>,
    {
        let mut counts = vec![0u64; self.bin_count()];
        let mut outside = 0;
        for p in points {
            match (self.index(p.y1), self.index(p.y2)) {
                (Some(i), Some(j)) => counts[i * self.bins + j] += 1,
                _ => outside += 1,
            }
        }
        (counts, outside)
    }
}

/// Arrival histogram next to the binned model density.
#[derive(Debug, Clone, PartialEq)]
pub struct HistogramComparison {
    pub grid: HistogramGrid,
    pub t: f64,
    pub n: usize,
    pub counts: Vec<u64>,
    pub model: Vec<f64>,
    pub outside_count: u64,
    pub model_outside: f64,
    /// Total-variation distance, overflow cell included.
    pub distance: f64,
}

pub fn histogram_comparison(arrivals: &ArrivalSet, state: &TwoSlitState) -> HistogramComparison {
    let grid = HistogramGrid::diagnostic(state.params(), arrivals.t);
    let model = grid.model_probabilities(state, arrivals.t);
    let (counts, outside_count) = grid.counts(arrivals.points());
    let n = arrivals.completed_count();
    let model_outside = (1.0 - model.iter().sum::<f64>()).max(0.0);
    let nf = n.max(1) as f64;
    let inside: f64 = counts
        .iter()
        .zip(&model)
        .map(|(&c, &p)| (c as f64 / nf - p).abs())
        .sum();
    let distance = 0.5 * (inside + (outside_count as f64 / nf - model_outside).abs());
    HistogramComparison {
        grid,
        t: arrivals.t,
        n,
        counts,
        model,
        outside_count,
        model_outside,
        distance,
    }
}

/// Total-variation distance between the arrival histogram and the binned
/// `|psi(t)|^2` on the diagnostic grid.
pub fn equivariance_distance(arrivals: &ArrivalSet, state: &TwoSlitState) -> f64 {
    histogram_comparison(arrivals, state).distance
}

/// Monte Carlo scale `c sqrt(B / n)` of the total-variation distance
/// between a multinomial histogram and its cell probabilities.
pub fn monte_carlo_bound(c: f64, bins: usize, n: usize) -> f64 {
    c * (bins as f64 / n as f64).sqrt()
}

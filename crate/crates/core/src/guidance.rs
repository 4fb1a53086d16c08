//! The guidance flow `v_k = (hbar / m) Im(d_k psi / psi)` for the two
//! transverse coordinates, its adaptive integration, and the closed-form
//! centre-of-mass law used as an oracle.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::params::PhysicalParams;
use crate::wavepacket::PacketSlice;

/// Default node threshold on `|psi|^2 / peak`.
pub const DEFAULT_NODE_EPS: f64 = 1e-12;
/// Step halvings tolerated while a stage sits in a node region.
pub const MAX_NODE_HALVINGS: u32 = 10;
/// Minimum step as a fraction of the final time.
pub const MIN_STEP_FRACTION: f64 = 1e-14;

const PEAK_GRID: usize = 41;
const PEAK_SLICES: usize = 32;

/// A configuration-space point of the pair at time `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub y1: f64,
    pub y2: f64,
    pub t: f64,
}

impl PhasePoint {
    pub fn new(y1: f64, y2: f64, t: f64) -> Self {
        Self { y1, y2, t }
    }

    /// Centre of mass `(y1 + y2) / 2`.
    pub fn com(&self) -> f64 {
        0.5 * (self.y1 + self.y2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrajectoryStatus {
    Completed,
    NodeAdjacentAbort,
}

impl TrajectoryStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            TrajectoryStatus::Completed => "completed",
            TrajectoryStatus::NodeAdjacentAbort => "node_adjacent_abort",
        }
    }
}

/// One accepted integrator point with the velocity evaluated there.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub point: PhasePoint,
    pub v1: f64,
    pub v2: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    /// For each sample after the first, the largest speed seen among the
    /// stages of the step that produced it.
    pub step_speeds: Vec<f64>,
    pub status: TrajectoryStatus,
}

impl Trajectory {
    pub fn first(&self) -> &PhasePoint {
        &self.samples[0].point
    }

    pub fn last(&self) -> &PhasePoint {
        &self.samples[self.samples.len() - 1].point
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorSettings {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
    pub node_eps: f64,
}

impl Default for IntegratorSettings {
    fn default() -> Self {
        Self {
            rel_tol: 1e-8,
            abs_tol: 1e-10,
            max_step: 1.0,
            node_eps: DEFAULT_NODE_EPS,
        }
    }
}

impl IntegratorSettings {
    pub fn validate(&self) -> Result<(), GuidanceError> {
        for (name, v) in [
            ("rel_tol", self.rel_tol),
            ("abs_tol", self.abs_tol),
            ("max_step", self.max_step),
            ("node_eps", self.node_eps),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(GuidanceError::InvalidSettings { name, value: v });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GuidanceError {
    #[error("density ratio {ratio:e} below node threshold at (y1={y1}, y2={y2}, t={t})")]
    NodeProximity { y1: f64, y2: f64, t: f64, ratio: f64 },
    #[error("step fell below {min_step:e} at t={t}")]
    StepUnderflow {
        t: f64,
        min_step: f64,
        partial: Box<Trajectory>,
    },
    #[error("integrator setting {name} must be finite and > 0, got {value}")]
    InvalidSettings { name: &'static str, value: f64 },
    #[error("final time {t_final} must exceed start time {t_start}")]
    InvalidSpan { t_start: f64, t_final: f64 },
}

/// Peak of the unnormalized pair density on a coarse grid at a few time
/// slices, interpolated linearly in between.
#[derive(Debug, Clone)]
pub struct PeakTable {
    t_lo: f64,
    dt: f64,
    peaks: Vec<f64>,
}

impl PeakTable {
    pub fn new(params: &PhysicalParams, t_lo: f64, t_hi: f64) -> Self {
        let slices = if t_hi > t_lo { PEAK_SLICES } else { 0 };
        let dt = if slices > 0 { (t_hi - t_lo) / slices as f64 } else { 0.0 };
        let peaks = (0..=slices)
            .map(|i| coarse_peak(params, t_lo + dt * i as f64))
            .collect();
        Self { t_lo, dt, peaks }
    }

    pub fn peak_at(&self, t: f64) -> f64 {
        if self.peaks.len() == 1 || self.dt == 0.0 {
            return self.peaks[0];
        }
        let x = ((t - self.t_lo) / self.dt).clamp(0.0, (self.peaks.len() - 1) as f64);
        let i = (x.floor() as usize).min(self.peaks.len() - 2);
        let w = x - i as f64;
        self.peaks[i] * (1.0 - w) + self.peaks[i + 1] * w
    }
}

/// Largest unnormalized pair density on a coarse grid over the support box.
pub fn coarse_peak(params: &PhysicalParams, t: f64) -> f64 {
    let slice = PacketSlice::new(params, t);
    let half = params.support_half_width(t, 3.0);
    let step = 2.0 * half / (PEAK_GRID - 1) as f64;
    let mut peak = 0.0f64;
    for i in 0..PEAK_GRID {
        let y1 = -half + step * i as f64;
        for j in 0..PEAK_GRID {
            let y2 = -half + step * j as f64;
            peak = peak.max(slice.pair_amplitude(y1, y2).norm_sqr());
        }
    }
    peak
}

/// The guidance velocity field with a node guard.
#[derive(Debug, Clone)]
pub struct GuidanceField {
    params: PhysicalParams,
    node_eps: f64,
    peaks: PeakTable,
}

impl GuidanceField {
    /// Field valid for times in `[t_lo, t_hi]` (the node guard's peak table
    /// covers that span).
    pub fn new(params: PhysicalParams, node_eps: f64, t_lo: f64, t_hi: f64) -> Self {
        Self {
            peaks: PeakTable::new(&params, t_lo, t_hi),
            params,
            node_eps,
        }
    }

    pub fn params(&self) -> &PhysicalParams {
        &self.params
    }

    #[inline]
    pub fn velocity(&self, y1: f64, y2: f64, t: f64) -> Result<(f64, f64), GuidanceError> {
        let slice = PacketSlice::new(&self.params, t);
        let pair = slice.pair(y1, y2);
        let density = pair.psi.norm_sqr();
        let floor = self.node_eps * self.peaks.peak_at(t);
        if !(density > floor) {
            return Err(GuidanceError::NodeProximity {
                y1,
                y2,
                t,
                ratio: density / self.peaks.peak_at(t),
            });
        }
        let scale = self.params.hbar / self.params.mass;
        Ok(((pair.d1 / pair.psi).im * scale, (pair.d2 / pair.psi).im * scale))
    }
}

/// Guidance velocities `(v1, v2)` at `p`, with the default node threshold.
pub fn velocity_field(p: &PhasePoint, params: &PhysicalParams) -> Result<(f64, f64), GuidanceError> {
    GuidanceField::new(*params, DEFAULT_NODE_EPS, p.t, p.t).velocity(p.y1, p.y2, p.t)
}

/// Closed-form centre-of-mass velocity
/// `a^2 t y / (1 + a^2 t^2)`, `a = hbar / (2 m sigma0^2)`, `y = (y1 + y2) / 2`.
pub fn com_velocity(p: &PhasePoint, params: &PhysicalParams) -> f64 {
    let a = params.spreading_rate();
    a * a * p.t * p.com() / (1.0 + a * a * p.t * p.t)
}

/// Closed-form centre of mass `y0 sqrt(1 + a^2 t^2)`.
pub fn com_oracle(y0: f64, t: f64, params: &PhysicalParams) -> f64 {
    let a = params.spreading_rate();
    y0 * (1.0 + a * a * t * t).sqrt()
}

// Dormand-Prince 5(4) tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// 5th minus 4th order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

type State = [f64; 2];

#[inline]
fn comb(y: &State, h: f64, terms: &[(f64, &State)]) -> State {
    let mut out = *y;
    for (c, k) in terms {
        out[0] += h * c * k[0];
        out[1] += h * c * k[1];
    }
    out
}

/// Adaptive Dormand-Prince integrator for pair trajectories.
#[derive(Debug, Clone)]
pub struct PairIntegrator {
    field: GuidanceField,
    settings: IntegratorSettings,
}

/// End state of an unrecorded integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Endpoint {
    pub point: PhasePoint,
    pub status: TrajectoryStatus,
}

impl PairIntegrator {
    /// Integrator whose node guard covers `[t_lo, t_hi]`.
    pub fn new(
        params: PhysicalParams,
        settings: IntegratorSettings,
        t_lo: f64,
        t_hi: f64,
    ) -> Result<Self, GuidanceError> {
        settings.validate()?;
        Ok(Self {
            field: GuidanceField::new(params, settings.node_eps, t_lo, t_hi),
            settings,
        })
    }

    pub fn field(&self) -> &GuidanceField {
        &self.field
    }

    pub fn settings(&self) -> &IntegratorSettings {
        &self.settings
    }

    /// Integrates and records every accepted step.
    pub fn trajectory(&self, start: PhasePoint, t_final: f64) -> Result<Trajectory, GuidanceError> {
        let mut samples = Vec::new();
        let mut step_speeds = Vec::new();
        let outcome = self.drive(start, t_final, |sample, speed| {
            if let Some(s) = speed {
                step_speeds.push(s);
            }
            samples.push(sample);
        });
        let build = |status| Trajectory {
            samples,
            step_speeds,
            status,
        };
        match outcome {
            Outcome::Done(status) => Ok(build(status)),
            Outcome::Underflow { t, min_step } => Err(GuidanceError::StepUnderflow {
                t,
                min_step,
                partial: Box::new(build(TrajectoryStatus::NodeAdjacentAbort)),
            }),
            Outcome::Invalid(e) => Err(e),
        }
    }

    /// Integrates without recording intermediate samples. Step underflow is
    /// reported as an aborted endpoint at the last accepted point.
    pub fn endpoint(&self, start: PhasePoint, t_final: f64) -> Result<Endpoint, GuidanceError> {
        let mut last = start;
        let outcome = self.drive(start, t_final, |sample, _| last = sample.point);
        match outcome {
            Outcome::Done(status) => Ok(Endpoint { point: last, status }),
            Outcome::Underflow { .. } => Ok(Endpoint {
                point: last,
                status: TrajectoryStatus::NodeAdjacentAbort,
            }),
            Outcome::Invalid(e) => Err(e),
        }
    }

    fn drive<F>(&self, start: PhasePoint, t_final: f64, mut on_accept: F) -> Outcome
    where
        F: FnMut(Sample, Option<f64>),
    {
        if !(t_final > start.t) || !t_final.is_finite() {
            return Outcome::Invalid(GuidanceError::InvalidSpan {
                t_start: start.t,
                t_final,
            });
        }
        let s = &self.settings;
        let f = |t: f64, y: &State| -> Result<State, GuidanceError> {
            let (v1, v2) = self.field.velocity(y[0], y[1], t)?;
            Ok([v1, v2])
        };

        let mut t = start.t;
        let mut y: State = [start.y1, start.y2];
        let mut k1 = match f(t, &y) {
            Ok(k) => k,
            Err(_) => {
                on_accept(
                    Sample {
                        point: start,
                        v1: f64::NAN,
                        v2: f64::NAN,
                    },
                    None,
                );
                return Outcome::Done(TrajectoryStatus::NodeAdjacentAbort);
            }
        };
        on_accept(
            Sample {
                point: start,
                v1: k1[0],
                v2: k1[1],
            },
            None,
        );

        let span = t_final - start.t;
        let min_step = MIN_STEP_FRACTION * t_final;
        let mut h = (span / 100.0).min(s.max_step);
        let mut node_halvings = 0u32;

        loop {
            let remaining = t_final - t;
            let last = h >= remaining * (1.0 - 1e-12);
            if last {
                h = remaining;
            }

            let stages = (|| -> Result<(State, State, f64, f64), GuidanceError> {
                let k2 = f(t + C2 * h, &comb(&y, h, &[(A21, &k1)]))?;
                let k3 = f(t + C3 * h, &comb(&y, h, &[(A31, &k1), (A32, &k2)]))?;
                let k4 = f(t + C4 * h, &comb(&y, h, &[(A41, &k1), (A42, &k2), (A43, &k3)]))?;
                let k5 = f(
                    t + C5 * h,
                    &comb(&y, h, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]),
                )?;
                let k6 = f(
                    t + h,
                    &comb(&y, h, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]),
                )?;
                let y5 = comb(&y, h, &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)]);
                let t_next = if last { t_final } else { t + h };
                let k7 = f(t_next, &y5)?;
                let mut err = 0.0f64;
                for i in 0..2 {
                    let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
                    let scale = s.abs_tol + s.rel_tol * y[i].abs().max(y5[i].abs());
                    err = err.max(e.abs() / scale);
                }
                let speed = [&k1, &k2, &k3, &k4, &k5, &k6, &k7]
                    .iter()
                    .map(|k| k[0].abs().max(k[1].abs()))
                    .fold(0.0, f64::max);
                Ok((y5, k7, err, speed))
            })();

            match stages {
                Err(GuidanceError::NodeProximity { .. }) => {
                    node_halvings += 1;
                    if node_halvings > MAX_NODE_HALVINGS {
                        return Outcome::Done(TrajectoryStatus::NodeAdjacentAbort);
                    }
                    h *= 0.5;
                }
                Err(e) => return Outcome::Invalid(e),
                Ok((y5, k7, err, step_speed)) => {
                    if err <= 1.0 {
                        t = if last { t_final } else { t + h };
                        y = y5;
                        k1 = k7;
                        node_halvings = 0;
                        on_accept(
                            Sample {
                                point: PhasePoint::new(y[0], y[1], t),
                                v1: k1[0],
                                v2: k1[1],
                            },
                            Some(step_speed),
                        );
                        if last {
                            return Outcome::Done(TrajectoryStatus::Completed);
                        }
                        let factor = if err == 0.0 {
                            5.0
                        } else {
                            (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
                        };
                        h = (h * factor).min(s.max_step);
                    } else {
                        h *= (0.9 * err.powf(-0.2)).clamp(0.2, 1.0);
                    }
                }
            }
            if h < min_step {
                return Outcome::Underflow { t, min_step };
            }
        }
    }
}

enum Outcome {
    Done(TrajectoryStatus),
    Underflow { t: f64, min_step: f64 },
    Invalid(GuidanceError),
}

/// Integrates one pair from `start` to `t_final`.
pub fn integrate_pair(
    start: PhasePoint,
    t_final: f64,
    settings: &IntegratorSettings,
    params: &PhysicalParams,
) -> Result<Trajectory, GuidanceError> {
    PairIntegrator::new(*params, *settings, start.t, t_final)?.trajectory(start, t_final)
}

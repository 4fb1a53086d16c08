//! Joint-detection statistics at the detection time.
//!
//! Detectors do not tell the particles apart, so a coincidence for windows
//! `(w1, w2)` is the event `{y1 in w1, y2 in w2} or {y1 in w2, y2 in w1}`.
//! For disjoint windows its probability is twice the ordered
//! `int_w1 int_w2 |psi|^2`.

use serde::Serialize;
use thiserror::Error;

use crate::ensemble::ArrivalSet;
use crate::quadrature::{
    adaptive_simpson_2d, try_adaptive_simpson, QuadratureError, Rect, SimpsonOptions, TensorGauss,
};
use crate::stats::{ks_critical_value, ks_statistic, mean_and_se};
use crate::wavepacket::TwoSlitState;

/// Default absolute tolerance for window probabilities.
pub const DEFAULT_QUAD_TOL: f64 = 1e-8;
/// Agreement threshold on the z-score.
pub const DEFAULT_Z_MAX: f64 = 3.0;
/// Significance level of the marginal KS test.
pub const DEFAULT_KS_ALPHA: f64 = 1e-3;
/// Smallest ensemble accepted by [`compare`].
pub const MIN_COMPARE_PAIRS: usize = 100;

// Support box for quadrature over the whole line, in packet widths.
const SUPPORT_WIDTHS: f64 = 12.0;
const MARGINAL_CELLS: usize = 2048;
const INNER_DEGREE: usize = 16;
const INNER_CELLS: usize = 64;
const CELL_TOL: f64 = 1e-13;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DetectionError {
    #[error("detector window needs a finite lower edge and width > 0 (lo={lo}, width={width})")]
    InvalidWindow { lo: f64, width: f64 },
    #[error("comparison needs at least {min} pairs, got {got}")]
    TooFewPairs { min: usize, got: usize },
    #[error("arrival at pair {pair_id} is off the antidiagonal (y1 + y2 = {sum:e})")]
    NotAntidiagonal { pair_id: usize, sum: f64 },
    #[error("marginal CDF mass {mass} differs from one")]
    MarginalMass { mass: f64 },
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
}

/// Detector acceptance `[lo, lo + width)` on the detection line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DetectorWindow {
    pub lo: f64,
    pub width: f64,
}

impl DetectorWindow {
    pub fn new(lo: f64, width: f64) -> Result<Self, DetectionError> {
        if !(lo.is_finite() && width.is_finite() && width > 0.0) {
            return Err(DetectionError::InvalidWindow { lo, width });
        }
        Ok(Self { lo, width })
    }

    /// Window between two edges.
    pub fn between(lo: f64, hi: f64) -> Result<Self, DetectionError> {
        Self::new(lo, hi - lo)
    }

    /// The whole line.
    pub fn full_line() -> Self {
        Self {
            lo: f64::NEG_INFINITY,
            width: f64::INFINITY,
        }
    }

    pub fn hi(&self) -> f64 {
        if self.width.is_infinite() {
            f64::INFINITY
        } else {
            self.lo + self.width
        }
    }

    #[inline]
    pub fn contains(&self, y: f64) -> bool {
        y >= self.lo && y < self.hi()
    }

    /// Mirror image `y -> -y`.
    pub fn reflected(&self) -> Self {
        if self.width.is_infinite() {
            return *self;
        }
        Self {
            lo: -self.hi(),
            width: self.width,
        }
    }

    pub fn intersection(&self, other: &Self) -> Option<Self> {
        let lo = self.lo.max(other.lo);
        let hi = self.hi().min(other.hi());
        if hi > lo {
            Some(Self {
                lo,
                width: if hi.is_infinite() { f64::INFINITY } else { hi - lo },
            })
        } else {
            None
        }
    }
}

fn window_rect(w1: &DetectorWindow, w2: &DetectorWindow, support: &Rect) -> Rect {
    Rect::new(w1.lo, w1.hi(), w2.lo, w2.hi()).intersect(support)
}

/// SQM probability that one particle lands in `w1` and the other in `w2` at
/// `t0`, i.e. the `|psi(t0)|^2` mass of `(w1 x w2) u (w2 x w1)`.
pub fn sqm_window_probability(
    w1: &DetectorWindow,
    w2: &DetectorWindow,
    t0: f64,
    state: &TwoSlitState,
    quad_tol: f64,
) -> Result<f64, DetectionError> {
    let slice = state.at(t0);
    let support = Rect::square(state.params().support_half_width(t0, SUPPORT_WIDTHS));
    let opts = SimpsonOptions::new(quad_tol / 3.0);
    let mass =
        |r: Rect| -> Result<f64, DetectionError> { Ok(adaptive_simpson_2d(|a, b| slice.density(a, b), &r, &opts)?) };
    let ordered = mass(window_rect(w1, w2, &support))?;
    let swapped = mass(window_rect(w2, w1, &support))?;
    let both = match w1.intersection(w2) {
        Some(i) => mass(window_rect(&i, &i, &support))?,
        None => 0.0,
    };
    Ok(ordered + swapped - both)
}

/// Observed coincidence fraction with its binomial standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoincidenceResult {
    pub hits: u64,
    pub n: u64,
    pub p_hat: f64,
    pub se: f64,
}

impl CoincidenceResult {
    pub fn new(hits: u64, n: u64) -> Self {
        let p_hat = if n == 0 { 0.0 } else { hits as f64 / n as f64 };
        let se = if n == 0 {
            0.0
        } else {
            (p_hat * (1.0 - p_hat) / n as f64).sqrt()
        };
        Self { hits, n, p_hat, se }
    }
}

/// Fraction of completed pairs detected as a coincidence in `(w1, w2)`.
pub fn bm_coincidence_fraction(arrivals: &ArrivalSet, w1: &DetectorWindow, w2: &DetectorWindow) -> CoincidenceResult {
    let mut hits = 0u64;
    let mut n = 0u64;
    for p in arrivals.points() {
        n += 1;
        if (w1.contains(p.y1) && w2.contains(p.y2)) || (w2.contains(p.y1) && w1.contains(p.y2)) {
            hits += 1;
        }
    }
    CoincidenceResult::new(hits, n)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ComparisonVerdict {
    pub sqm_p: f64,
    pub bm: CoincidenceResult,
    /// `(p_hat - sqm_p) / se`; infinite when `se = 0` and the two differ.
    pub z: f64,
    pub agrees: bool,
}

/// z-test of the simulated coincidence fraction against the SQM value.
pub fn compare(sqm_p: f64, bm: &CoincidenceResult) -> Result<ComparisonVerdict, DetectionError> {
    compare_with(sqm_p, bm, DEFAULT_Z_MAX)
}

pub fn compare_with(sqm_p: f64, bm: &CoincidenceResult, z_max: f64) -> Result<ComparisonVerdict, DetectionError> {
    if (bm.n as usize) < MIN_COMPARE_PAIRS {
        return Err(DetectionError::TooFewPairs {
            min: MIN_COMPARE_PAIRS,
            got: bm.n as usize,
        });
    }
    let diff = bm.p_hat - sqm_p;
    let z = if bm.se > 0.0 {
        diff / bm.se
    } else if diff == 0.0 {
        0.0
    } else {
        f64::INFINITY.copysign(diff)
    };
    Ok(ComparisonVerdict {
        sqm_p,
        bm: *bm,
        z,
        agrees: z.abs() <= z_max,
    })
}

/// Mean of `|psi(y1, -y1, t0)|^2` over antidiagonal arrivals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GhoseEstimate {
    pub mean: f64,
    pub se: f64,
    pub n: usize,
}

/// The finite, operational content of the time-ensemble coincidence
/// quantity: the average of `P(y1(t0), -y1(t0), t0)` over the pairs.
pub fn ghose_p_star(arrivals: &ArrivalSet, state: &TwoSlitState) -> Result<GhoseEstimate, DetectionError> {
    let slice = state.at(arrivals.t);
    let tol = 1e-8 * state.params().sigma0;
    let mut values = Vec::with_capacity(arrivals.completed_count());
    for a in arrivals
        .arrivals
        .iter()
        .filter(|a| a.status == crate::guidance::TrajectoryStatus::Completed)
    {
        let sum = a.end.y1 + a.end.y2;
        if sum.abs() > tol {
            return Err(DetectionError::NotAntidiagonal {
                pair_id: a.pair_id,
                sum,
            });
        }
        values.push(slice.density(a.end.y1, -a.end.y1));
    }
    let n = values.len();
    let (mean, se) = match mean_and_se(&values) {
        Some(v) => v,
        None => (values.first().copied().unwrap_or(0.0), 0.0),
    };
    Ok(GhoseEstimate { mean, se, n })
}

/// Single-particle marginal CDF `F(y) = int_{-inf}^y int |psi(u, v, t)|^2 dv du`,
/// tabulated by nested quadrature and interpolated by cubic Hermite splines
/// whose slopes are the marginal density itself.
#[derive(Debug, Clone)]
pub struct MarginalCdf {
    lo: f64,
    step: f64,
    cdf: Vec<f64>,
    density: Vec<f64>,
}

impl MarginalCdf {
    pub fn new(state: &TwoSlitState, t: f64) -> Result<Self, DetectionError> {
        let slice = state.at(t);
        let half = state.params().support_half_width(t, SUPPORT_WIDTHS);
        // A fixed inner rule keeps the marginal a smooth function of `u`, so
        // the outer adaptive pass is not chasing quadrature noise.
        let inner = TensorGauss::new(INNER_DEGREE);
        let marginal = |u: f64| -> Result<f64, QuadratureError> {
            Ok(inner.integrate_line(|v| slice.density(u, v), -half, half, INNER_CELLS))
        };
        let step = 2.0 * half / MARGINAL_CELLS as f64;
        let nodes: Vec<f64> = (0..=MARGINAL_CELLS).map(|i| -half + step * i as f64).collect();
        let density = nodes.iter().map(|&u| marginal(u)).collect::<Result<Vec<f64>, _>>()?;
        let cell_opts = SimpsonOptions::new(CELL_TOL).with_panels(1);
        let mut cdf = Vec::with_capacity(nodes.len());
        let mut acc = 0.0;
        cdf.push(0.0);
        for w in nodes.windows(2) {
            acc += try_adaptive_simpson(&marginal, w[0], w[1], &cell_opts)?;
            cdf.push(acc);
        }
        if (acc - 1.0).abs() > 1e-6 {
            return Err(DetectionError::MarginalMass { mass: acc });
        }
        Ok(Self {
            lo: -half,
            step,
            cdf,
            density,
        })
    }

    pub fn cdf(&self, y: f64) -> f64 {
        let x = (y - self.lo) / self.step;
        if x <= 0.0 {
            return 0.0;
        }
        let last = self.cdf.len() - 1;
        if x >= last as f64 {
            return self.cdf[last];
        }
        let i = x.floor() as usize;
        let s = x - i as f64;
        let (f0, f1) = (self.cdf[i], self.cdf[i + 1]);
        let (d0, d1) = (self.density[i] * self.step, self.density[i + 1] * self.step);
        let s2 = s * s;
        let s3 = s2 * s;
        (2.0 * s3 - 3.0 * s2 + 1.0) * f0 + (s3 - 2.0 * s2 + s) * d0 + (-2.0 * s3 + 3.0 * s2) * f1 + (s3 - s2) * d1
    }

    /// Smallest tabulated `y` with `cdf(y) >= p`, refined by bisection.
    pub fn quantile(&self, p: f64) -> f64 {
        let (mut a, mut b) = (self.lo, self.lo + self.step * (self.cdf.len() - 1) as f64);
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if self.cdf(m) < p {
                a = m;
            } else {
                b = m;
            }
            if b - a <= 1e-14 * (1.0 + a.abs()) {
                break;
            }
        }
        0.5 * (a + b)
    }
}

/// KS statistic of the pooled single-particle arrivals (both members of
/// every completed pair) against the SQM marginal at the arrival time.
pub fn marginal_ks_statistic(arrivals: &ArrivalSet, state: &TwoSlitState) -> Result<f64, DetectionError> {
    let model = MarginalCdf::new(state, arrivals.t)?;
    Ok(pooled_ks(arrivals, &model))
}

/// KS statistic of pooled arrivals against a prepared marginal CDF.
pub fn pooled_ks(arrivals: &ArrivalSet, model: &MarginalCdf) -> f64 {
    let mut pooled: Vec<f64> = arrivals.points().flat_map(|p| [p.y1, p.y2]).collect();
    pooled.sort_by(f64::total_cmp);
    ks_statistic(&pooled, |y| model.cdf(y))
}

/// KS critical value for `n_pairs` pairs. The two members of a pair are not
/// independent draws, so the pair count (not the pooled count) sets the
/// effective sample size; the pooled ECDF variance never exceeds the
/// single-member one.
pub fn marginal_ks_critical(alpha: f64, n_pairs: usize) -> f64 {
    ks_critical_value(alpha, n_pairs)
}

/// Verdict report for one window pair.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerdictReport {
    pub schema_version: &'static str,
    pub windows: [DetectorWindow; 2],
    pub sqm_p: f64,
    pub hits: u64,
    pub n: u64,
    pub p_hat: f64,
    pub se: f64,
    pub z: f64,
    pub agrees: bool,
    pub ks_statistic: f64,
    pub ks_critical: f64,
}

impl VerdictReport {
    pub fn new(windows: [DetectorWindow; 2], verdict: &ComparisonVerdict, ks_statistic: f64, ks_critical: f64) -> Self {
        Self {
            schema_version: "1",
            windows,
            sqm_p: verdict.sqm_p,
            hits: verdict.bm.hits,
            n: verdict.bm.n,
            p_hat: verdict.bm.p_hat,
            se: verdict.bm.se,
            z: verdict.z,
            agrees: verdict.agrees,
            ks_statistic,
            ks_critical,
        }
    }
}

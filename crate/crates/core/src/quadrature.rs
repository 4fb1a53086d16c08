//! Deterministic quadrature: adaptive Simpson in one and two dimensions, and
//! fixed tensor Gauss-Legendre on rectangles.

use std::num::NonZeroUsize;
use std::ops::{Add, Mul, Sub};

use gauss_quad::legendre::GaussLegendre;
use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QuadratureError {
    #[error("adaptive Simpson did not converge on [{lo}, {hi}] (max depth {max_depth})")]
    NotConverged { lo: f64, hi: f64, max_depth: u32 },
    #[error("invalid integration interval [{lo}, {hi}]")]
    InvalidInterval { lo: f64, hi: f64 },
    #[error("integrand returned a non-finite value at x = {x}")]
    NonFinite { x: f64 },
}

/// Values that can be integrated: real or complex.
pub trait QuadValue: Copy + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self> {
    fn zero() -> Self;
    fn magnitude(self) -> f64;
}

impl QuadValue for f64 {
    fn zero() -> Self {
        0.0
    }
    fn magnitude(self) -> f64 {
        self.abs()
    }
}

impl QuadValue for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn magnitude(self) -> f64 {
        self.norm()
    }
}

/// Options for adaptive Simpson integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimpsonOptions {
    /// Absolute tolerance on the integral.
    pub tol: f64,
    /// Equal panels the interval is cut into before adapting. Guards against
    /// the coarse first pass stepping over a narrow feature.
    pub panels: usize,
    pub max_depth: u32,
}

impl SimpsonOptions {
    pub fn new(tol: f64) -> Self {
        Self {
            tol,
            panels: 16,
            max_depth: 48,
        }
    }

    pub fn with_panels(mut self, panels: usize) -> Self {
        self.panels = panels.max(1);
        self
    }
}

/// Integrates `f` over `[a, b]` by adaptive Simpson with Richardson correction.
pub fn adaptive_simpson<T, F>(mut f: F, a: f64, b: f64, opts: &SimpsonOptions) -> Result<T, QuadratureError>
where
    T: QuadValue,
    F: FnMut(f64) -> T,
{
    try_adaptive_simpson(|x| Ok(f(x)), a, b, opts)
}

/// Fallible variant of [`adaptive_simpson`]; the first integrand error aborts.
pub fn try_adaptive_simpson<T, F>(mut f: F, a: f64, b: f64, opts: &SimpsonOptions) -> Result<T, QuadratureError>
where
    T: QuadValue,
    F: FnMut(f64) -> Result<T, QuadratureError>,
{
    if !(a.is_finite() && b.is_finite()) || b < a {
        return Err(QuadratureError::InvalidInterval { lo: a, hi: b });
    }
    if a == b {
        return Ok(T::zero());
    }
    let panels = opts.panels.max(1);
    let width = (b - a) / panels as f64;
    let panel_tol = opts.tol / panels as f64;
    let mut total = T::zero();
    let mut lo = a;
    let mut f_lo = eval(&mut f, lo)?;
    for i in 0..panels {
        let hi = if i + 1 == panels { b } else { a + width * (i + 1) as f64 };
        let mid = 0.5 * (lo + hi);
        let f_mid = eval(&mut f, mid)?;
        let f_hi = eval(&mut f, hi)?;
        let whole = (f_lo + f_mid * 4.0 + f_hi) * ((hi - lo) / 6.0);
        let seg = Segment {
            a: lo,
            b: hi,
            fa: f_lo,
            fm: f_mid,
            fb: f_hi,
            whole,
        };
        total = total + refine(&mut f, seg, panel_tol, opts.max_depth, opts.max_depth)?;
        lo = hi;
        f_lo = f_hi;
    }
    Ok(total)
}

struct Segment<T> {
    a: f64,
    b: f64,
    fa: T,
    fm: T,
    fb: T,
    whole: T,
}

fn eval<T: QuadValue, F: FnMut(f64) -> Result<T, QuadratureError>>(f: &mut F, x: f64) -> Result<T, QuadratureError> {
    let v = f(x)?;
    if v.magnitude().is_finite() {
        Ok(v)
    } else {
        Err(QuadratureError::NonFinite { x })
    }
}

fn refine<T, F>(f: &mut F, s: Segment<T>, tol: f64, depth: u32, max_depth: u32) -> Result<T, QuadratureError>
where
    T: QuadValue,
    F: FnMut(f64) -> Result<T, QuadratureError>,
{
    let m = 0.5 * (s.a + s.b);
    let lm = 0.5 * (s.a + m);
    let rm = 0.5 * (m + s.b);
    let flm = eval(f, lm)?;
    let frm = eval(f, rm)?;
    let left = (s.fa + flm * 4.0 + s.fm) * ((m - s.a) / 6.0);
    let right = (s.fm + frm * 4.0 + s.fb) * ((s.b - m) / 6.0);
    let delta = left + right - s.whole;
    if delta.magnitude() <= 15.0 * tol {
        return Ok(left + right + delta * (1.0 / 15.0));
    }
    if depth == 0 || lm <= s.a || rm >= s.b {
        return Err(QuadratureError::NotConverged {
            lo: s.a,
            hi: s.b,
            max_depth,
        });
    }
    let l = refine(
        f,
        Segment {
            a: s.a,
            b: m,
            fa: s.fa,
            fm: flm,
            fb: s.fm,
            whole: left,
        },
        0.5 * tol,
        depth - 1,
        max_depth,
    )?;
    let r = refine(
        f,
        Segment {
            a: m,
            b: s.b,
            fa: s.fm,
            fm: frm,
            fb: s.fb,
            whole: right,
        },
        0.5 * tol,
        depth - 1,
        max_depth,
    )?;
    Ok(l + r)
}

/// Axis-aligned rectangle `[x_lo, x_hi] x [y_lo, y_hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x_lo: f64,
    pub x_hi: f64,
    pub y_lo: f64,
    pub y_hi: f64,
}

impl Rect {
    pub fn new(x_lo: f64, x_hi: f64, y_lo: f64, y_hi: f64) -> Self {
        Self { x_lo, x_hi, y_lo, y_hi }
    }

    pub fn square(half_width: f64) -> Self {
        Self::new(-half_width, half_width, -half_width, half_width)
    }

    pub fn is_empty(&self) -> bool {
        !(self.x_hi > self.x_lo && self.y_hi > self.y_lo)
    }

    pub fn intersect(&self, other: &Rect) -> Rect {
        Rect {
            x_lo: self.x_lo.max(other.x_lo),
            x_hi: self.x_hi.min(other.x_hi),
            y_lo: self.y_lo.max(other.y_lo),
            y_hi: self.y_hi.min(other.y_hi),
        }
    }
}

/// Nested (iterated) adaptive Simpson over a rectangle; the inner integral
/// over `y` is computed to a tolerance scaled so that its accumulated error
/// stays an order of magnitude below `opts.tol`.
pub fn adaptive_simpson_2d<T, F>(f: F, rect: &Rect, opts: &SimpsonOptions) -> Result<T, QuadratureError>
where
    T: QuadValue,
    F: Fn(f64, f64) -> T,
{
    if rect.is_empty() {
        return Ok(T::zero());
    }
    let inner_opts = SimpsonOptions {
        tol: 0.1 * opts.tol / (rect.x_hi - rect.x_lo),
        ..*opts
    };
    try_adaptive_simpson(
        |x| adaptive_simpson(|y| f(x, y), rect.y_lo, rect.y_hi, &inner_opts),
        rect.x_lo,
        rect.x_hi,
        opts,
    )
}

/// Tensor-product Gauss-Legendre rule of fixed degree.
#[derive(Debug, Clone)]
pub struct TensorGauss {
    nodes: Vec<(f64, f64)>,
}

impl TensorGauss {
    pub fn new(degree: usize) -> Self {
        let degree = NonZeroUsize::new(degree.max(1)).expect("degree clamped to >= 1");
        let rule = GaussLegendre::new(degree);
        Self {
            nodes: rule.as_node_weight_pairs().to_vec(),
        }
    }

    pub fn degree(&self) -> usize {
        self.nodes.len()
    }

    /// Integrates `f` over `rect` with the tensor rule.
    pub fn integrate<T, F>(&self, mut f: F, rect: &Rect) -> T
    where
        T: QuadValue,
        F: FnMut(f64, f64) -> T,
    {
        if rect.is_empty() {
            return T::zero();
        }
        let (cx, hx) = (0.5 * (rect.x_lo + rect.x_hi), 0.5 * (rect.x_hi - rect.x_lo));
        let (cy, hy) = (0.5 * (rect.y_lo + rect.y_hi), 0.5 * (rect.y_hi - rect.y_lo));
        let mut acc = T::zero();
        for &(xi, wi) in &self.nodes {
            let x = cx + hx * xi;
            for &(yj, wj) in &self.nodes {
                acc = acc + f(x, cy + hy * yj) * (wi * wj);
            }
        }
        acc * (hx * hy)
    }

    /// One-dimensional composite rule over `[a, b]` split into `cells` equal
    /// cells.
    pub fn integrate_line<T, F>(&self, mut f: F, a: f64, b: f64, cells: usize) -> T
    where
        T: QuadValue,
        F: FnMut(f64) -> T,
    {
        let cells = cells.max(1);
        let step = (b - a) / cells as f64;
        let mut acc = T::zero();
        for c in 0..cells {
            let centre = a + step * (c as f64 + 0.5);
            let mut cell = T::zero();
            for &(x, w) in &self.nodes {
                cell = cell + f(centre + 0.5 * step * x) * w;
            }
            acc = acc + cell * (0.5 * step);
        }
        acc
    }

    /// Integrates `f` over `rect` split into `nx x ny` equal cells.
    pub fn integrate_composite<T, F>(&self, mut f: F, rect: &Rect, nx: usize, ny: usize) -> T
    where
        T: QuadValue,
        F: FnMut(f64, f64) -> T,
    {
        let dx = (rect.x_hi - rect.x_lo) / nx as f64;
        let dy = (rect.y_hi - rect.y_lo) / ny as f64;
        let mut acc = T::zero();
        for i in 0..nx {
            for j in 0..ny {
                let cell = Rect::new(
                    rect.x_lo + dx * i as f64,
                    rect.x_lo + dx * (i + 1) as f64,
                    rect.y_lo + dy * j as f64,
                    rect.y_lo + dy * (j + 1) as f64,
                );
                acc = acc + self.integrate(&mut f, &cell);
            }
        }
        acc
    }
}

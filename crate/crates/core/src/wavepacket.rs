//! The symmetrized two-particle Gaussian state behind two slits.
//!
//! Each slit emits a freely spreading Gaussian packet in the transverse
//! coordinate,
//!
//! ```text
//! psi_A(y, t) = (2 pi sigma_t^2)^(-1/4)
//!               exp[-(y - Y - u t)^2 / (4 sigma0 sigma_t) + i k (y - Y - u t / 2)]
//! psi_B(y, t) = psi_A(-y, t)
//! sigma_t     = sigma0 (1 + i hbar t / (2 m sigma0^2)),   u = hbar k / m
//! ```
//!
//! and the pair state is the bosonic combination
//! `psi(y1, y2, t) = N [psi_A(y1) psi_B(y2) + psi_B(y1) psi_A(y2)]`.
//! The longitudinal plane-wave factor is dropped: it does not affect the
//! transverse density or the transverse guidance velocities.

use std::f64::consts::PI;

use num_complex::Complex64;
use thiserror::Error;

use crate::params::{ParamsError, PhysicalParams};
use crate::quadrature::{adaptive_simpson, QuadratureError, SimpsonOptions};

/// Complex amplitudes and widths.
pub type ComplexValue = Complex64;

/// Absolute tolerance for the overlap integral behind the normalization.
pub const OVERLAP_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WavepacketError {
    #[error("invalid parameters: {0}")]
    Params(#[from] ParamsError),
    #[error("overlap quadrature failed: {0}")]
    Quadrature(#[from] QuadratureError),
}

/// Which slit a packet leaves from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PacketLabel {
    A,
    B,
}

/// Complex width `sigma0 (1 + i hbar t / (2 m sigma0^2))`.
pub fn sigma_t(params: &PhysicalParams, t: f64) -> ComplexValue {
    Complex64::new(params.sigma0, params.sigma0 * params.spreading_rate() * t)
}

/// Time-dependent constants of the slit-A packet; slit B is its mirror image.
#[derive(Debug, Clone, Copy)]
pub struct PacketSlice {
    t: f64,
    prefactor: Complex64,
    /// `1 / (4 sigma0 sigma_t)`
    inv_width: Complex64,
    center: f64,
    phase_origin: f64,
    ky: f64,
}

impl PacketSlice {
    pub fn new(params: &PhysicalParams, t: f64) -> Self {
        let st = sigma_t(params, t);
        // (2 pi sigma_t^2)^(-1/4) on the principal branch; Re sigma_t > 0.
        let prefactor = (2.0 * PI).powf(-0.25) / st.sqrt();
        let inv_width = (st * (4.0 * params.sigma0)).inv();
        let u = params.uy();
        Self {
            t,
            prefactor,
            inv_width,
            center: params.half_separation + u * t,
            phase_origin: params.half_separation + 0.5 * u * t,
            ky: params.ky,
        }
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    /// Slit-A amplitude and its logarithmic derivative `psi_A' / psi_A`.
    #[inline]
    pub fn packet_a(&self, y: f64) -> (Complex64, Complex64) {
        let z = y - self.center;
        let exponent = -self.inv_width * (z * z) + Complex64::new(0.0, self.ky * (y - self.phase_origin));
        let amp = self.prefactor * exponent.exp();
        let log_deriv = -self.inv_width * (2.0 * z) + Complex64::new(0.0, self.ky);
        (amp, log_deriv)
    }

    /// Amplitude and logarithmic derivative of the packet with `label`.
    #[inline]
    pub fn packet(&self, label: PacketLabel, y: f64) -> (Complex64, Complex64) {
        match label {
            PacketLabel::A => self.packet_a(y),
            PacketLabel::B => {
                let (amp, log_deriv) = self.packet_a(-y);
                (amp, -log_deriv)
            }
        }
    }

    pub fn amplitude(&self, label: PacketLabel, y: f64) -> Complex64 {
        self.packet(label, y).0
    }

    pub fn gradient(&self, label: PacketLabel, y: f64) -> Complex64 {
        let (amp, log_deriv) = self.packet(label, y);
        amp * log_deriv
    }

    /// Unnormalized pair amplitude `psi_A(y1) psi_B(y2) + psi_B(y1) psi_A(y2)`
    /// together with its two partial derivatives.
    #[inline]
    pub fn pair(&self, y1: f64, y2: f64) -> PairValue {
        let (a1, la1) = self.packet_a(y1);
        let (b1, lb1) = self.packet(PacketLabel::B, y1);
        let (a2, la2) = self.packet_a(y2);
        let (b2, lb2) = self.packet(PacketLabel::B, y2);
        let ab = a1 * b2;
        let ba = b1 * a2;
        PairValue {
            psi: ab + ba,
            d1: ab * la1 + ba * lb1,
            d2: ab * lb2 + ba * la2,
        }
    }

    /// Unnormalized pair amplitude only.
    #[inline]
    pub fn pair_amplitude(&self, y1: f64, y2: f64) -> Complex64 {
        let a1 = self.packet_a(y1).0;
        let b1 = self.packet_a(-y1).0;
        let a2 = self.packet_a(y2).0;
        let b2 = self.packet_a(-y2).0;
        a1 * b2 + b1 * a2
    }
}

/// An unnormalized pair amplitude and its gradient.
#[derive(Debug, Clone, Copy)]
pub struct PairValue {
    pub psi: Complex64,
    pub d1: Complex64,
    pub d2: Complex64,
}

pub fn packet_amplitude(label: PacketLabel, y: f64, t: f64, params: &PhysicalParams) -> ComplexValue {
    PacketSlice::new(params, t).amplitude(label, y)
}

/// Exact `d/dy` of [`packet_amplitude`].
pub fn packet_gradient_y(label: PacketLabel, y: f64, t: f64, params: &PhysicalParams) -> ComplexValue {
    PacketSlice::new(params, t).gradient(label, y)
}

/// Overlap `s = <psi_A | psi_B>` at `t = 0`, conserved by free evolution.
pub fn packet_overlap(params: &PhysicalParams) -> Result<ComplexValue, WavepacketError> {
    params.validate()?;
    let slice = PacketSlice::new(params, 0.0);
    let reach = params.half_separation + 10.0 * params.sigma0;
    let opts = SimpsonOptions::new(OVERLAP_TOL);
    let s = adaptive_simpson(
        |y| slice.amplitude(PacketLabel::A, y).conj() * slice.amplitude(PacketLabel::B, y),
        -reach,
        reach,
        &opts,
    )?;
    Ok(s)
}

/// `N = 1 / sqrt(2 (1 + |s|^2))` with the overlap `s` obtained by quadrature.
pub fn normalization_constant(params: &PhysicalParams) -> Result<f64, WavepacketError> {
    let s = packet_overlap(params)?;
    Ok(1.0 / (2.0 * (1.0 + s.norm_sqr())).sqrt())
}

/// The normalized two-particle state.
#[derive(Debug, Clone, Copy)]
pub struct TwoSlitState {
    params: PhysicalParams,
    norm: f64,
}

impl TwoSlitState {
    pub fn new(params: PhysicalParams) -> Result<Self, WavepacketError> {
        let norm = normalization_constant(&params)?;
        Ok(Self { params, norm })
    }

    pub fn params(&self) -> &PhysicalParams {
        &self.params
    }

    pub fn norm(&self) -> f64 {
        self.norm
    }

    pub fn at(&self, t: f64) -> StateSlice {
        StateSlice {
            packets: PacketSlice::new(&self.params, t),
            norm: self.norm,
        }
    }

    pub fn joint_amplitude(&self, y1: f64, y2: f64, t: f64) -> ComplexValue {
        self.at(t).amplitude(y1, y2)
    }

    pub fn joint_density(&self, y1: f64, y2: f64, t: f64) -> f64 {
        self.at(t).density(y1, y2)
    }
}

/// The normalized state frozen at one time.
#[derive(Debug, Clone, Copy)]
pub struct StateSlice {
    packets: PacketSlice,
    norm: f64,
}

impl StateSlice {
    pub fn time(&self) -> f64 {
        self.packets.time()
    }

    pub fn packets(&self) -> &PacketSlice {
        &self.packets
    }

    #[inline]
    pub fn amplitude(&self, y1: f64, y2: f64) -> Complex64 {
        self.packets.pair_amplitude(y1, y2) * self.norm
    }

    #[inline]
    pub fn density(&self, y1: f64, y2: f64) -> f64 {
        self.packets.pair_amplitude(y1, y2).norm_sqr() * self.norm * self.norm
    }

    /// Normalized amplitude and partial derivatives.
    #[inline]
    pub fn amplitude_and_gradient(&self, y1: f64, y2: f64) -> PairValue {
        let p = self.packets.pair(y1, y2);
        PairValue {
            psi: p.psi * self.norm,
            d1: p.d1 * self.norm,
            d2: p.d2 * self.norm,
        }
    }
}

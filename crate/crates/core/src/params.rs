//! Physical constants and slit/packet geometry.

use serde::{Deserialize, Serialize};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamsError {
    #[error("{name} must be finite and > 0, got {value}")]
    NotPositive { name: &'static str, value: f64 },
    #[error("{name} must be finite and >= 0, got {value}")]
    Negative { name: &'static str, value: f64 },
    #[error("{name} must be finite, got {value}")]
    NotFinite { name: &'static str, value: f64 },
}

/// Physical parameters of the symmetrized two-slit Gaussian state.
///
/// Only the transverse (y) motion is modelled. Units are natural by default
/// (`hbar = mass = 1`) but every formula keeps `hbar` and `mass` explicit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalParams {
    pub hbar: f64,
    pub mass: f64,
    /// Initial packet width.
    pub sigma0: f64,
    /// Slit half-separation; slits sit at `±half_separation`.
    pub half_separation: f64,
    /// Transverse wavenumber of the packet leaving slit A (B carries `-ky`).
    pub ky: f64,
    /// Detection time.
    pub t0: f64,
}

impl Default for PhysicalParams {
    fn default() -> Self {
        Self {
            hbar: 1.0,
            mass: 1.0,
            sigma0: 1.0,
            half_separation: 5.0,
            ky: 0.0,
            t0: 10.0,
        }
    }
}

impl PhysicalParams {
    pub fn validate(&self) -> Result<(), ParamsError> {
        let positive = [("hbar", self.hbar), ("m", self.mass), ("sigma0", self.sigma0)];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(ParamsError::NotPositive { name, value });
            }
        }
        // Y = 0 is admitted: it collapses both packets onto one another and is
        // the degenerate limit used to check the normalization constant.
        if !(self.half_separation.is_finite() && self.half_separation >= 0.0) {
            return Err(ParamsError::Negative {
                name: "Y",
                value: self.half_separation,
            });
        }
        if !self.ky.is_finite() {
            return Err(ParamsError::NotFinite {
                name: "ky",
                value: self.ky,
            });
        }
        if !(self.t0.is_finite() && self.t0 >= 0.0) {
            return Err(ParamsError::Negative {
                name: "t0",
                value: self.t0,
            });
        }
        Ok(())
    }

    /// Transverse group velocity `u_y = hbar * ky / m`.
    pub fn uy(&self) -> f64 {
        self.hbar * self.ky / self.mass
    }

    /// Spreading rate `hbar / (2 m sigma0^2)`.
    pub fn spreading_rate(&self) -> f64 {
        self.hbar / (2.0 * self.mass * self.sigma0 * self.sigma0)
    }

    /// Modulus of the complex width at time `t`, i.e. the density standard
    /// deviation of a single packet.
    pub fn width_at(&self, t: f64) -> f64 {
        let a = self.spreading_rate() * t;
        self.sigma0 * (1.0 + a * a).sqrt()
    }

    /// Half-width of a square box centred on the origin holding all but a
    /// negligible fraction of `|psi(t)|^2` when `n_sigma` widths are used.
    pub fn support_half_width(&self, t: f64, n_sigma: f64) -> f64 {
        self.half_separation + self.uy().abs() * t + n_sigma * self.width_at(t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let p = PhysicalParams::default();
        p.validate().unwrap();
        assert_eq!(p.uy(), 0.0);
        assert_eq!(p.spreading_rate(), 0.5);
    }

    #[test]
    fn rejects_bad_values() {
        let d = PhysicalParams::default();
        let p = PhysicalParams { sigma0: -1.0, ..d };
        assert!(matches!(
            p.validate(),
            Err(ParamsError::NotPositive { name: "sigma0", .. })
        ));
        assert!(PhysicalParams { t0: -0.5, ..d }.validate().is_err());
        assert!(PhysicalParams { mass: 0.0, ..d }.validate().is_err());
    }

    #[test]
    fn group_velocity() {
        let p = PhysicalParams {
            hbar: 2.0,
            mass: 4.0,
            ky: 3.0,
            ..Default::default()
        };
        assert_eq!(p.uy(), 1.5);
    }
}

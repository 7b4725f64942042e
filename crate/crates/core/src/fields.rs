//! Background fields: a smooth Sauter-type well, the sin²/flat/cos² switching
//! envelope and a linearly polarized traveling-wave laser.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Parameters of the binding well, the laser and the switching envelope.
///
/// The laser amplitude `a0` is stored as the coupling `e·A₀` in units of mₑc,
/// so that the peak electric field in units of the critical field is `a0·omega`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldConfig {
    /// Well depth V₀ [mₑc²].
    pub v0: f64,
    /// Well width parameter D [λ_c].
    pub d: f64,
    /// Edge extent W [λ_c].
    pub w: f64,
    /// Laser amplitude e·A₀ [mₑc].
    pub a0: f64,
    /// Laser angular frequency ω [mₑc²/ħ].
    pub omega: f64,
    /// Plateau duration T [λ_c/c].
    pub plateau: f64,
    /// Ramp duration ΔT [λ_c/c].
    pub ramp: f64,
    pub laser_on: bool,
}

impl FieldConfig {
    /// Static well, laser off, default ramp.
    pub fn well(v0: f64, d: f64, w: f64, plateau: f64) -> Self {
        FieldConfig {
            v0,
            d,
            w,
            a0: 0.0,
            omega: 0.0,
            plateau,
            ramp: default_ramp(false, 0.0),
            laser_on: false,
        }
    }

    /// Switches the laser on with peak field `e0` (units of E_cr) at frequency
    /// `omega`, and resets the ramp to the laser default.
    pub fn with_laser(mut self, e0: f64, omega: f64) -> Self {
        self.laser_on = true;
        self.omega = omega;
        self.a0 = e0 / omega;
        self.ramp = default_ramp(true, omega);
        self
    }

    pub fn with_ramp(mut self, ramp: f64) -> Self {
        self.ramp = ramp;
        self
    }

    pub fn with_plateau(mut self, plateau: f64) -> Self {
        self.plateau = plateau;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::BadFields(m.to_string()));
        let finite = [self.v0, self.d, self.w, self.a0, self.omega, self.plateau, self.ramp]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return bad("non-finite parameter");
        }
        if self.v0 < 0.0 {
            return bad("V0 must be non-negative");
        }
        if self.d <= 0.0 || self.w <= 0.0 {
            return bad("D and W must be positive");
        }
        if self.plateau < 0.0 || self.ramp < 0.0 {
            return bad("T and dT must be non-negative");
        }
        if self.laser_on && self.omega <= 0.0 {
            return bad("laser frequency must be positive");
        }
        Ok(())
    }

    /// Peak electric field E₀ = A₀ω in units of the critical field.
    pub fn peak_field(&self) -> f64 {
        if self.laser_on {
            self.a0 * self.omega
        } else {
            0.0
        }
    }

    pub fn t_start(&self) -> f64 {
        -self.ramp
    }

    pub fn t_end(&self) -> f64 {
        self.plateau + self.ramp
    }

    pub fn envelope(&self, t: f64) -> f64 {
        envelope(t, self.plateau, self.ramp)
    }

    /// Plateau well profile `-V₀[S(x+D/2) - S(x-D/2)]`.
    pub fn well_profile(&self, x: f64) -> f64 {
        -self.v0 * (sauter_step(x + 0.5 * self.d, self.w) - sauter_step(x - 0.5 * self.d, self.w))
    }

    /// Electron potential energy qφ(x, t).
    pub fn well_potential(&self, x: f64, t: f64) -> f64 {
        let f = self.envelope(t);
        if f == 0.0 {
            0.0
        } else {
            self.well_profile(x) * f
        }
    }

    /// Laser coupling `e·A_y(x, t) = e·A₀ f(t) sin ω(t - x)`.
    pub fn laser_vector_potential(&self, x: f64, t: f64) -> Result<f64> {
        if !self.laser_on {
            return Err(Error::LaserOff);
        }
        Ok(self.laser_unchecked(x, t))
    }

    #[inline]
    pub(crate) fn laser_unchecked(&self, x: f64, t: f64) -> f64 {
        if !self.laser_on {
            return 0.0;
        }
        let f = self.envelope(t);
        if f == 0.0 {
            0.0
        } else {
            self.a0 * f * (self.omega * (t - x)).sin()
        }
    }

    /// Laser half period π/ω, or `None` with the laser off.
    pub fn half_period(&self) -> Option<f64> {
        self.laser_on.then(|| PI / self.omega)
    }
}

/// Default ramp: ten laser periods with the laser on, 5 λ_c/c otherwise.
pub fn default_ramp(laser_on: bool, omega: f64) -> f64 {
    if laser_on {
        10.0 * 2.0 * PI / omega
    } else {
        5.0
    }
}

/// Smooth unit step `½(1 + tanh(x/W))`.
#[inline]
pub fn sauter_step(x: f64, w: f64) -> f64 {
    0.5 * (1.0 + (x / w).tanh())
}

/// Switching envelope: sin² on `[-ΔT, 0]`, 1 on `[0, T]`, cos² on `[T, T+ΔT]`, 0 elsewhere.
pub fn envelope(t: f64, plateau: f64, ramp: f64) -> f64 {
    if t <= -ramp || t >= plateau + ramp {
        return if ramp == 0.0 && (0.0..=plateau).contains(&t) { 1.0 } else { 0.0 };
    }
    if t < 0.0 {
        if ramp == 0.0 {
            return 0.0;
        }
        let s = (PI * (t - ramp) / (2.0 * ramp)).sin();
        s * s
    } else if t <= plateau {
        1.0
    } else {
        if ramp == 0.0 {
            return 0.0;
        }
        let c = (PI * (t - plateau) / (2.0 * ramp)).cos();
        c * c
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn cfg() -> FieldConfig {
        FieldConfig::well(1.726, 3.2, 0.3, 100.0).with_laser(0.3, 0.45)
    }

    #[test]
    fn step_values() {
        assert_eq!(sauter_step(0.0, 0.3), 0.5);
        // ½(1 + tanh 1)
        assert_relative_eq!(sauter_step(0.3, 0.3), 0.8807970779778823, epsilon = 1e-15);
        assert_relative_eq!(sauter_step(1.7, 0.3) + sauter_step(-1.7, 0.3), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn envelope_endpoints() {
        let (t, dt) = (50.0, 10.0);
        assert!(envelope(-dt, t, dt).abs() < 1e-15);
        assert_eq!(envelope(0.0, t, dt), 1.0);
        assert_eq!(envelope(t, t, dt), 1.0);
        assert!(envelope(t + dt, t, dt).abs() < 1e-15);
        assert_relative_eq!(envelope(-dt / 2.0, t, dt), 0.5, epsilon = 1e-15);
        assert_relative_eq!(envelope(t + dt / 2.0, t, dt), 0.5, epsilon = 1e-15);
        assert_eq!(envelope(-dt - 1.0, t, dt), 0.0);
        assert_eq!(envelope(t + dt + 1.0, t, dt), 0.0);
    }

    #[test]
    fn envelope_without_ramp_is_a_box() {
        assert_eq!(envelope(-0.1, 5.0, 0.0), 0.0);
        assert_eq!(envelope(2.0, 5.0, 0.0), 1.0);
        assert_eq!(envelope(5.1, 5.0, 0.0), 0.0);
    }

    #[test]
    fn well_values() {
        let c = FieldConfig::well(2.0, 20.0, 0.3, 10.0);
        assert_relative_eq!(c.well_potential(0.0, 5.0), -2.0, epsilon = 1e-12);
        assert_relative_eq!(c.well_potential(10.0, 5.0), -1.0, epsilon = 1e-12);
        assert_eq!(c.well_potential(0.0, -c.ramp), 0.0);
        assert!(c.well_potential(200.0, 5.0).abs() < 1e-100);
    }

    #[test]
    fn laser_amplitude_from_peak_field() {
        let c = cfg();
        assert_relative_eq!(c.a0, 2.0 / 3.0, epsilon = 1e-15);
        assert_relative_eq!(c.peak_field(), 0.3, epsilon = 1e-15);
    }

    #[test]
    fn laser_zero_on_light_cone_and_outside_pulse() {
        let c = cfg();
        assert!(c.laser_vector_potential(3.0, 3.0).unwrap().abs() < 1e-15);
        assert_eq!(c.laser_vector_potential(1.0, c.t_end() + 1.0).unwrap(), 0.0);
        assert!(matches!(
            FieldConfig::well(1.0, 3.0, 0.3, 1.0).laser_vector_potential(0.0, 0.0),
            Err(Error::LaserOff)
        ));
    }

    #[test]
    fn laser_keeps_spatial_phase() {
        let c = cfg();
        let a = c.laser_vector_potential(1.0, 10.0).unwrap();
        let b = c.laser_vector_potential(-1.0, 10.0).unwrap();
        assert!((a - b).abs() > 1e-3);
    }

    #[test]
    fn validation() {
        assert!(cfg().validate().is_ok());
        let mut c = cfg();
        c.d = 0.0;
        assert!(c.validate().is_err());
        let mut c = cfg();
        c.omega = 0.0;
        assert!(c.validate().is_err());
        let mut c = cfg();
        c.v0 = -1.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn static_on_plateau_without_laser() {
        let c = FieldConfig::well(1.9, 2.443, 0.3, 50.0);
        for &x in &[-3.0, -0.5, 0.0, 1.2] {
            assert_eq!(c.well_potential(x, 1.0), c.well_potential(x, 40.0));
        }
    }

    proptest! {
        #[test]
        fn well_symmetric_and_attractive(x in -40.0f64..40.0, v0 in 0.0f64..3.0, d in 0.5f64..6.0) {
            let c = FieldConfig::well(v0, d, 0.3, 10.0);
            let a = c.well_potential(x, 5.0);
            prop_assert!((a - c.well_potential(-x, 5.0)).abs() < 1e-13);
            prop_assert!(a <= 0.0);
        }

        #[test]
        fn envelope_bounded_with_bounded_slope(t in -20.0f64..80.0, ramp in 0.5f64..15.0) {
            let plateau = 50.0;
            let f = envelope(t, plateau, ramp);
            prop_assert!((0.0..=1.0).contains(&f));
            let h = 1e-6;
            let slope = (envelope(t + h, plateau, ramp) - envelope(t - h, plateau, ramp)) / (2.0 * h);
            prop_assert!(slope.abs() <= PI / (2.0 * ramp) + 1e-8);
        }
    }
}

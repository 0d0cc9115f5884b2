use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriveProfile {
    /// `u0 a0 t^6 (t - Ts)^6` on `[0, Ts)`, zero afterwards.
    PolynomialPulse,
    /// `u0 a0 sin(2 pi t / Ts)` on `[0, Ts)`, zero afterwards.
    SinusoidalBurst,
}

/// Displacement component prescribed on the loaded edge. In 2D `X` is an
/// extension load and `Y` a shear load; 1D only admits `X`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriveComponent {
    X,
    Y,
}

impl DriveComponent {
    pub fn index(self) -> usize {
        match self {
            DriveComponent::X => 0,
            DriveComponent::Y => 1,
        }
    }
}

/// Time history of the displacement prescribed on the loaded edge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryDrive {
    pub profile: DriveProfile,
    pub component: DriveComponent,
    /// Amplitude `u0` in m.
    pub u0: f64,
    /// Scaling factor `a0`. `None` selects the natural normalisation: peak
    /// displacement `u0` for the pulse, `a0 = 1` for the burst.
    pub a0: Option<f64>,
    /// Duration `Ts` in s.
    pub duration: f64,
}

impl BoundaryDrive {
    pub fn polynomial_pulse(u0: f64, duration: f64) -> Self {
        BoundaryDrive {
            profile: DriveProfile::PolynomialPulse,
            component: DriveComponent::X,
            u0,
            a0: None,
            duration,
        }
    }

    pub fn sinusoidal_burst(u0: f64, duration: f64) -> Self {
        BoundaryDrive {
            profile: DriveProfile::SinusoidalBurst,
            component: DriveComponent::X,
            u0,
            a0: None,
            duration,
        }
    }

    pub fn with_component(mut self, component: DriveComponent) -> Self {
        self.component = component;
        self
    }

    /// The zero drive, used to check that an unloaded system stays at rest.
    pub fn zero() -> Self {
        BoundaryDrive {
            u0: 0.0,
            ..Self::polynomial_pulse(0.0, 1.0)
        }
    }

    /// Effective `a0`.
    pub fn scale(&self) -> f64 {
        match (self.profile, self.a0) {
            (_, Some(a0)) => a0,
            (DriveProfile::PolynomialPulse, None) => (self.duration / 2.0).powi(-12),
            (DriveProfile::SinusoidalBurst, None) => 1.0,
        }
    }

    /// Multiplier of `u0` in the normalised variables used internally.
    fn amplitude(&self) -> f64 {
        match (self.profile, self.a0) {
            (DriveProfile::PolynomialPulse, None) => self.u0,
            (DriveProfile::PolynomialPulse, Some(a0)) => self.u0 * a0 * (self.duration / 2.0).powi(12),
            (DriveProfile::SinusoidalBurst, _) => self.u0 * self.scale(),
        }
    }

    fn active(&self, t: f64) -> bool {
        t >= 0.0 && t < self.duration
    }

    /// Returns `(u, du/dt, d2u/dt2)` at time `t`.
    pub fn evaluate(&self, t: f64) -> (f64, f64, f64) {
        if !self.active(t) || self.u0 == 0.0 {
            return (0.0, 0.0, 0.0);
        }
        let amp = self.amplitude();
        let ts = self.duration;
        match self.profile {
            DriveProfile::PolynomialPulse => {
                // t^6 (t - Ts)^6 (Ts/2)^-12 = r^6 with r = 4 tau (tau - 1), tau = t / Ts
                let tau = t / ts;
                let r = 4.0 * tau * (tau - 1.0);
                let dr = (8.0 * tau - 4.0) / ts;
                let ddr = 8.0 / (ts * ts);
                let r4 = r.powi(4);
                (
                    amp * r4 * r * r,
                    amp * 6.0 * r4 * r * dr,
                    amp * (30.0 * r4 * dr * dr + 6.0 * r4 * r * ddr),
                )
            }
            DriveProfile::SinusoidalBurst => {
                let w = 2.0 * PI / ts;
                let (s, c) = (w * t).sin_cos();
                (amp * s, amp * w * c, -amp * w * w * s)
            }
        }
    }

    pub fn displacement(&self, t: f64) -> f64 {
        self.evaluate(t).0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pulse_shape() {
        let ts = 1.57e-4;
        let d = BoundaryDrive::polynomial_pulse(1e-2, ts);
        assert_eq!(d.displacement(0.0), 0.0);
        assert!((d.displacement(ts / 2.0) - 1e-2).abs() < 1e-16);
        assert_eq!(d.displacement(ts), 0.0);
        assert_eq!(d.displacement(2.0 * ts), 0.0);
        // agrees with the literal formula
        let t = 0.3 * ts;
        let literal = 1e-2 * d.scale() * t.powi(6) * (t - ts).powi(6);
        assert!((d.displacement(t) - literal).abs() < 1e-12 * literal);
        let explicit = BoundaryDrive {
            a0: Some(d.scale()),
            ..d
        };
        assert!((explicit.displacement(t) - literal).abs() < 1e-12 * literal);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        for d in [
            BoundaryDrive::polynomial_pulse(1e-2, 1.57e-4),
            BoundaryDrive::sinusoidal_burst(1e-2, 1.57e-4),
        ] {
            for frac in [0.1, 0.37, 0.5, 0.81] {
                let t = frac * d.duration;
                let h = 1e-4 * d.duration;
                let (u, v, a) = d.evaluate(t);
                let fd_v = (d.displacement(t + h) - d.displacement(t - h)) / (2.0 * h);
                let fd_a = (d.displacement(t + h) - 2.0 * u + d.displacement(t - h)) / (h * h);
                let vs = d.u0 / d.duration;
                assert!((v - fd_v).abs() < 1e-6 * vs * 100.0, "{v} {fd_v}");
                assert!((a - fd_a).abs() < 1e-4 * vs / d.duration * 1000.0, "{a} {fd_a}");
            }
        }
    }

    #[test]
    fn burst_is_zero_at_start_and_after() {
        let d = BoundaryDrive::sinusoidal_burst(1e-2, 1.57e-4);
        assert_eq!(d.displacement(0.0), 0.0);
        assert_eq!(d.evaluate(1.57e-4), (0.0, 0.0, 0.0));
        assert_eq!(d.scale(), 1.0);
        assert_eq!(BoundaryDrive::zero().evaluate(1e-5), (0.0, 0.0, 0.0));
    }
}

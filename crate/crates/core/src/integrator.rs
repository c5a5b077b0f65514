//! Symplectic splitting schemes shared by the ramp solver and the trap.
//!
//! A scheme is a sequence of `(drift, kick)` stages: positions (and time)
//! advance by `drift * dt * v`, then velocities by `kick * dt * a(x, t)`.
//! Time is treated as an extra position coordinate, so time-dependent forces
//! are evaluated at the stage time reached by the preceding drifts.

/// Omelyan-Mryglod-Folk position-extended Forest-Ruth-like coefficients.
const PEFRL_XI: f64 = 0.178_617_895_844_809_1;
const PEFRL_LAMBDA: f64 = -0.212_341_831_062_605_4;
const PEFRL_CHI: f64 = -0.066_264_582_669_818_49;

const LEAPFROG: [(f64, f64); 2] = [(0.5, 1.0), (0.5, 0.0)];
const VELOCITY_VERLET: [(f64, f64); 2] = [(0.0, 0.5), (1.0, 0.5)];
const PEFRL: [(f64, f64); 5] = [
    (PEFRL_XI, 0.5 * (1.0 - 2.0 * PEFRL_LAMBDA)),
    (PEFRL_CHI, PEFRL_LAMBDA),
    (1.0 - 2.0 * (PEFRL_CHI + PEFRL_XI), PEFRL_LAMBDA),
    (PEFRL_CHI, 0.5 * (1.0 - 2.0 * PEFRL_LAMBDA)),
    (PEFRL_XI, 0.0),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Scheme {
    /// Drift-kick-drift, force at the time midpoint. Order 2.
    Leapfrog,
    /// Kick-drift-kick. Order 2.
    VelocityVerlet,
    /// Fourth-order symplectic partitioned Runge-Kutta (PEFRL).
    #[default]
    Pefrl,
}

impl Scheme {
    pub fn stages(self) -> &'static [(f64, f64)] {
        match self {
            Scheme::Leapfrog => &LEAPFROG,
            Scheme::VelocityVerlet => &VELOCITY_VERLET,
            Scheme::Pefrl => &PEFRL,
        }
    }

    pub fn order(self) -> u32 {
        match self {
            Scheme::Leapfrog | Scheme::VelocityVerlet => 2,
            Scheme::Pefrl => 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Leapfrog => "leapfrog",
            Scheme::VelocityVerlet => "velocity_verlet",
            Scheme::Pefrl => "pefrl",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "leapfrog" => Some(Scheme::Leapfrog),
            "velocity_verlet" => Some(Scheme::VelocityVerlet),
            "pefrl" => Some(Scheme::Pefrl),
            _ => None,
        }
    }
}

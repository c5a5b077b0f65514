//! Semiclassical laser-ion scattering: engineered heat baths, their gating
//! schedules, the axial dissipation beam, and Doppler-limit thermometry.

use std::f64::consts::{PI, TAU};

use nalgebra::Vector3;
use rand::Rng;
use rand_distr::{Distribution, UnitSphere};

use crate::error::{invalid, positive, Error, Result};
use crate::trap::IonState;
use crate::units::{HBAR, KB};

/// Poisson thinning bound on rate·dt per substep.
pub const MAX_EVENT_PROBABILITY: f64 = 0.1;

/// ⁴⁰Ca⁺ S₁/₂–P₁/₂ linewidth, 2π × 21.6 MHz.
pub const CA_LINEWIDTH: f64 = TAU * 21.6e6;
/// ⁴⁰Ca⁺ cooling wavelength (m).
pub const CA_WAVELENGTH: f64 = 396.959e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BeamRole {
    Heat,
    Cool,
    Dissipation,
}

impl BeamRole {
    pub const ALL: [BeamRole; 3] = [BeamRole::Heat, BeamRole::Cool, BeamRole::Dissipation];

    pub fn name(self) -> &'static str {
        match self {
            BeamRole::Heat => "heat",
            BeamRole::Cool => "cool",
            BeamRole::Dissipation => "dissipation",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|r| r.name() == s)
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GateSpec {
    AlwaysOn,
    /// On for `window_fraction` of each axial period, centered on
    /// `phase_center` of the ensemble axial oscillation.
    PhaseWindow { window_fraction: f64, phase_center: f64 },
    /// Gaussian intensity profile along the trap axis.
    SpatialFocus { focus_z: f64, waist: f64 },
}

impl GateSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            GateSpec::AlwaysOn => Ok(()),
            GateSpec::PhaseWindow {
                window_fraction,
                phase_center,
            } => {
                if !(window_fraction > 0.0 && window_fraction <= 1.0) {
                    return Err(invalid("window_fraction", format!("must lie in (0, 1], got {window_fraction}")));
                }
                if !phase_center.is_finite() {
                    return Err(invalid("phase_center", "must be finite"));
                }
                Ok(())
            }
            GateSpec::SpatialFocus { focus_z, waist } => {
                if !focus_z.is_finite() {
                    return Err(invalid("focus_z", "must be finite"));
                }
                positive("waist", waist).map(|_| ())
            }
        }
    }
}

/// Attenuation in [0, 1] applied to a beam's saturation parameter.
pub fn gate_active(gate: &GateSpec, axial_phase: f64, position: &Vector3<f64>) -> f64 {
    match *gate {
        GateSpec::AlwaysOn => 1.0,
        GateSpec::PhaseWindow {
            window_fraction,
            phase_center,
        } => {
            if window_fraction >= 1.0 {
                return 1.0;
            }
            let d = (axial_phase - phase_center).rem_euclid(TAU);
            let d = d.min(TAU - d);
            if d <= PI * window_fraction {
                1.0
            } else {
                0.0
            }
        }
        GateSpec::SpatialFocus { focus_z, waist } => {
            let u = (position.z - focus_z) / waist;
            (-2.0 * u * u).exp()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaserBeam {
    /// Unit propagation direction.
    pub direction: Vector3<f64>,
    /// Wavenumber (1/m).
    pub k: f64,
    /// Laser minus atomic angular frequency (rad/s); negative is red.
    pub detuning: f64,
    /// Transition linewidth Γ (rad/s).
    pub gamma: f64,
    pub saturation: f64,
    pub role: BeamRole,
    pub gate: GateSpec,
}

impl LaserBeam {
    /// Normalizes `direction` (a vector already unit to 1e-12 is kept as
    /// given, so written-out beams read back bit-identical) and validates.
    pub fn new(
        direction: Vector3<f64>,
        k: f64,
        detuning: f64,
        gamma: f64,
        saturation: f64,
        role: BeamRole,
        gate: GateSpec,
    ) -> Result<Self> {
        let n = direction.norm();
        if !(n > 0.0 && n.is_finite()) {
            return Err(invalid("direction", "must be a nonzero finite vector"));
        }
        let b = Self {
            direction: if (n - 1.0).abs() <= 1e-12 { direction } else { direction / n },
            k,
            detuning,
            gamma,
            saturation,
            role,
            gate,
        };
        b.validate()?;
        Ok(b)
    }

    /// A ⁴⁰Ca⁺ cooling-transition beam.
    pub fn calcium(direction: Vector3<f64>, detuning: f64, saturation: f64, role: BeamRole, gate: GateSpec) -> Result<Self> {
        Self::new(direction, TAU / CA_WAVELENGTH, detuning, CA_LINEWIDTH, saturation, role, gate)
    }

    pub fn validate(&self) -> Result<()> {
        if ((self.direction.norm() - 1.0).abs()) > 1e-12 {
            return Err(invalid("direction", "must be a unit vector"));
        }
        positive("k", self.k)?;
        positive("gamma", self.gamma)?;
        if !(self.saturation >= 0.0 && self.saturation.is_finite()) {
            return Err(invalid("saturation", format!("must be finite and >= 0, got {}", self.saturation)));
        }
        if !self.detuning.is_finite() {
            return Err(invalid("detuning", "must be finite"));
        }
        match self.role {
            BeamRole::Heat if self.detuning <= 0.0 => {
                return Err(invalid("detuning", "heating beams must be blue detuned (> 0)"));
            }
            BeamRole::Cool | BeamRole::Dissipation if self.detuning >= 0.0 => {
                return Err(invalid("detuning", "cooling and dissipation beams must be red detuned (< 0)"));
            }
            _ => {}
        }
        self.gate.validate()
    }

    /// Photon momentum ħk (kg·m/s).
    pub fn photon_momentum(&self) -> f64 {
        HBAR * self.k
    }
}

/// Two-level scattering rate (1/s) with Doppler shift and gate attenuation.
pub fn scattering_rate(beam: &LaserBeam, velocity: &Vector3<f64>, position: &Vector3<f64>, axial_phase: f64) -> f64 {
    let s = beam.saturation * gate_active(&beam.gate, axial_phase, position);
    rate_with_saturation(beam, velocity, s)
}

fn rate_with_saturation(beam: &LaserBeam, velocity: &Vector3<f64>, s: f64) -> f64 {
    if s == 0.0 {
        return 0.0;
    }
    let d = beam.detuning - beam.k * beam.direction.dot(velocity);
    let x = 2.0 * d / beam.gamma;
    0.5 * beam.gamma * s / (1.0 + s + x * x)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScatterOutcome {
    pub occurred: bool,
    pub momentum_kick: Vector3<f64>,
}

impl ScatterOutcome {
    pub const NONE: ScatterOutcome = ScatterOutcome {
        occurred: false,
        momentum_kick: Vector3::new(0.0, 0.0, 0.0),
    };
}

/// Draws one absorption-emission event over `dt` and applies its kick.
pub fn sample_scatter<R: Rng + ?Sized>(
    beam: &LaserBeam,
    state: &mut IonState,
    mass: f64,
    axial_phase: f64,
    dt: f64,
    rng: &mut R,
) -> Result<ScatterOutcome> {
    let rate = scattering_rate(beam, &state.velocity, &state.position, axial_phase);
    let out = draw_event(beam, rate, dt, rng)?;
    if out.occurred {
        state.velocity += out.momentum_kick / mass;
    }
    Ok(out)
}

fn draw_event<R: Rng + ?Sized>(beam: &LaserBeam, rate: f64, dt: f64, rng: &mut R) -> Result<ScatterOutcome> {
    let mean = rate * dt;
    if mean > MAX_EVENT_PROBABILITY * (1.0 + 1e-12) {
        return Err(Error::ThinningViolated(mean));
    }
    if mean == 0.0 {
        return Ok(ScatterOutcome::NONE);
    }
    let p = -(-mean).exp_m1();
    let u: f64 = rng.random();
    if u >= p {
        return Ok(ScatterOutcome::NONE);
    }
    let e: [f64; 3] = UnitSphere.sample(rng);
    let pk = beam.photon_momentum();
    Ok(ScatterOutcome {
        occurred: true,
        momentum_kick: pk * (beam.direction + Vector3::from(e)),
    })
}

/// Kinetic energy delivered by lasers, split into radial (x, y) and axial
/// (z) parts, per beam role.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LaserTally {
    pub radial: [f64; 3],
    pub axial: [f64; 3],
    pub events: [u64; 3],
}

impl LaserTally {
    pub fn add(&mut self, other: &LaserTally) {
        for i in 0..3 {
            self.radial[i] += other.radial[i];
            self.axial[i] += other.axial[i];
            self.events[i] += other.events[i];
        }
    }

    pub fn axial_total(&self) -> f64 {
        self.axial.iter().sum()
    }

    pub fn radial_total(&self) -> f64 {
        self.radial.iter().sum()
    }
}

/// Applies every beam over `dt`, substepping each so the thinning bound
/// holds. Returns the number of scattering events.
pub fn apply_beams<R: Rng + ?Sized>(
    beams: &[LaserBeam],
    state: &mut IonState,
    mass: f64,
    axial_phase: f64,
    dt: f64,
    rng: &mut R,
    tally: &mut LaserTally,
) -> Result<u64> {
    let mut events = 0;
    for beam in beams {
        let s = beam.saturation * gate_active(&beam.gate, axial_phase, &state.position);
        if s == 0.0 {
            continue;
        }
        // rate is bounded by Γ/2 · s/(1+s), which fixes the substep count
        let bound = 0.5 * beam.gamma * s / (1.0 + s);
        let n = ((bound * dt / MAX_EVENT_PROBABILITY).ceil() as usize).max(1);
        let h = dt / n as f64;
        for _ in 0..n {
            let rate = rate_with_saturation(beam, &state.velocity, s);
            let out = draw_event(beam, rate, h, rng)?;
            if out.occurred {
                let v0 = state.velocity;
                state.velocity += out.momentum_kick / mass;
                let v1 = state.velocity;
                let i = beam.role.index();
                tally.radial[i] += 0.5 * mass * (v1.x * v1.x + v1.y * v1.y - v0.x * v0.x - v0.y * v0.y);
                tally.axial[i] += 0.5 * mass * (v1.z * v1.z - v0.z * v0.z);
                tally.events[i] += 1;
                events += 1;
            }
        }
    }
    Ok(events)
}

/// T_D = ħΓ/(2k_B).
pub fn doppler_limit(gamma: f64) -> Result<f64> {
    positive("gamma", gamma)?;
    Ok(HBAR * gamma / (2.0 * KB))
}

/// Three orthogonal counter-propagating pairs sharing one detuning.
pub fn three_axis_molasses(detuning: f64, saturation: f64) -> Result<Vec<LaserBeam>> {
    let mut out = Vec::with_capacity(6);
    for axis in 0..3 {
        for sign in [1.0, -1.0] {
            let mut d = Vector3::zeros();
            d[axis] = sign;
            out.push(LaserBeam::calcium(d, detuning, saturation, BeamRole::Cool, GateSpec::AlwaysOn)?);
        }
    }
    Ok(out)
}

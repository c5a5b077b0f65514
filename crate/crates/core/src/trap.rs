//! Tapered linear Paul trap: pseudopotential and full-rf force fields, the
//! radial-axial coupling they induce, and a symplectic trajectory stepper.

use std::f64::consts::{PI, SQRT_2, TAU};

use nalgebra::Vector3;

use crate::error::{invalid, positive, Error, Result};
use crate::integrator::Scheme;
use crate::units::{CA40_MASS, E_CHARGE, KB};

/// Minimum resolved steps per period of the fastest motion.
pub const MIN_STEPS_PER_PERIOD: f64 = 50.0;
/// Trajectories may not approach the taper apex beyond this fraction of r₀.
pub const VALIDITY_FRACTION: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrapGeometry {
    /// Electrode angle to the trap axis (rad).
    pub theta: f64,
    /// Ion-electrode distance at z = 0 (m).
    pub r0: f64,
    pub length: f64,
    pub omega0x: f64,
    pub omega0y: f64,
    pub omega0z: f64,
    pub omega_rf: f64,
    /// rf amplitude scale, set by [`calibrate_u0`].
    pub u0: Option<f64>,
    pub mass: f64,
    pub charge: f64,
}

impl TrapGeometry {
    /// θ = 20°, r₀ = 1 mm, 5 mm long, radial 6.0×10⁶ s⁻¹, drive 6.0×10⁷ s⁻¹,
    /// ⁴⁰Ca⁺. The axial 6.0×10⁵ s⁻¹ corresponds to a ~10 μs cycle.
    pub fn standard() -> Self {
        Self {
            theta: 20f64.to_radians(),
            r0: 1e-3,
            length: 5e-3,
            omega0x: 6.0e6,
            omega0y: 6.0e6,
            omega0z: 6.0e5,
            omega_rf: 6.0e7,
            u0: None,
            mass: CA40_MASS,
            charge: E_CHARGE,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.theta >= 0.0 && self.theta < PI / 2.0) {
            return Err(invalid("theta", format!("must lie in [0, pi/2), got {}", self.theta)));
        }
        positive("r0", self.r0)?;
        positive("length", self.length)?;
        positive("omega0x", self.omega0x)?;
        positive("omega0y", self.omega0y)?;
        positive("omega0z", self.omega0z)?;
        positive("omega_rf", self.omega_rf)?;
        positive("mass", self.mass)?;
        positive("charge", self.charge)?;
        if let Some(u) = self.u0 {
            positive("u0", u)?;
        }
        let ratio = self.omega_rf / self.omega0x.max(self.omega0y);
        if ratio < 5.0 {
            return Err(invalid("omega_rf", format!("drive must exceed 5x the radial frequency (ratio {ratio:.2})")));
        }
        if ratio < 10.0 {
            log::warn!("rf drive only {ratio:.2}x the radial secular frequency; pseudopotential picture is marginal");
        }
        Ok(())
    }

    pub fn tan_theta(&self) -> f64 {
        self.theta.tan()
    }

    /// r₀ + z·tanθ, or an error beyond the validity guard.
    pub fn taper_distance(&self, z: f64) -> Result<f64> {
        let d = self.r0 + z * self.tan_theta();
        if (z * self.tan_theta()).abs() >= VALIDITY_FRACTION * self.r0 || !(d > 0.0) {
            return Err(Error::OutsideValidity { z });
        }
        Ok(d)
    }

    /// Largest |z| the validity guard admits.
    pub fn z_limit(&self) -> f64 {
        let t = self.tan_theta();
        if t == 0.0 {
            f64::INFINITY
        } else {
            VALIDITY_FRACTION * self.r0 / t
        }
    }

    /// Mathieu q parameter of the calibrated drive at z = 0.
    pub fn q_parameter(&self) -> Result<f64> {
        let u0 = self.u0.ok_or(Error::Uncalibrated)?;
        Ok(2.0 * self.charge * u0 / (self.mass * self.r0 * self.r0 * self.omega_rf * self.omega_rf))
    }

    /// u0 for a given q.
    pub fn u0_for_q(&self, q: f64) -> f64 {
        q * self.mass * self.r0 * self.r0 * self.omega_rf * self.omega_rf / (2.0 * self.charge)
    }

    pub fn with_u0(mut self, u0: f64) -> Self {
        self.u0 = Some(u0);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IonState {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub time: f64,
}

impl IonState {
    pub fn new(position: Vector3<f64>, velocity: Vector3<f64>) -> Self {
        Self {
            position,
            velocity,
            time: 0.0,
        }
    }

    pub fn at_rest() -> Self {
        Self::new(Vector3::zeros(), Vector3::zeros())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ForceFieldMode {
    #[default]
    Pseudopotential,
    FullRf,
}

/// Radial part of the pseudopotential (J).
pub fn radial_pseudopotential(g: &TrapGeometry, pos: &Vector3<f64>) -> Result<f64> {
    let d = g.taper_distance(pos.z)?;
    let f = (g.r0 / d).powi(4);
    Ok(0.5 * g.mass * (g.omega0x.powi(2) * pos.x * pos.x + g.omega0y.powi(2) * pos.y * pos.y) * f)
}

pub fn pseudopotential(g: &TrapGeometry, pos: &Vector3<f64>) -> Result<f64> {
    Ok(radial_pseudopotential(g, pos)? + 0.5 * g.mass * g.omega0z.powi(2) * pos.z * pos.z)
}

pub fn pseudo_force(g: &TrapGeometry, pos: &Vector3<f64>) -> Result<Vector3<f64>> {
    let d = g.taper_distance(pos.z)?;
    let f = (g.r0 / d).powi(4);
    let m = g.mass;
    let wx2 = g.omega0x * g.omega0x;
    let wy2 = g.omega0y * g.omega0y;
    let v_rad = 0.5 * m * (wx2 * pos.x * pos.x + wy2 * pos.y * pos.y) * f;
    Ok(Vector3::new(
        -m * wx2 * f * pos.x,
        -m * wy2 * f * pos.y,
        4.0 * g.tan_theta() / d * v_rad - m * g.omega0z * g.omega0z * pos.z,
    ))
}

/// C = 2m·tanθ/r₀, the leading radial-axial coupling.
pub fn coupling_constant(g: &TrapGeometry) -> f64 {
    2.0 * g.mass * g.tan_theta() / g.r0
}

/// Oscillating saddle potential plus static axial confinement (J).
pub fn rf_potential(g: &TrapGeometry, pos: &Vector3<f64>, t: f64) -> Result<f64> {
    let u0 = g.u0.ok_or(Error::Uncalibrated)?;
    let d = g.taper_distance(pos.z)?;
    let k = 0.5 * g.charge * u0 * (g.omega_rf * t).sin();
    Ok(k * (pos.x * pos.x - pos.y * pos.y) / (d * d) + 0.5 * g.mass * g.omega0z.powi(2) * pos.z * pos.z)
}

pub fn rf_force(g: &TrapGeometry, pos: &Vector3<f64>, t: f64) -> Result<Vector3<f64>> {
    let u0 = g.u0.ok_or(Error::Uncalibrated)?;
    let d = g.taper_distance(pos.z)?;
    let k = g.charge * u0 * (g.omega_rf * t).sin() / (d * d);
    Ok(Vector3::new(
        -k * pos.x,
        k * pos.y,
        k * (pos.x * pos.x - pos.y * pos.y) * g.tan_theta() / d - g.mass * g.omega0z.powi(2) * pos.z,
    ))
}

pub fn force(g: &TrapGeometry, mode: ForceFieldMode, pos: &Vector3<f64>, t: f64) -> Result<Vector3<f64>> {
    match mode {
        ForceFieldMode::Pseudopotential => pseudo_force(g, pos),
        ForceFieldMode::FullRf => rf_force(g, pos, t),
    }
}

/// ω_{x,y}(z) = ω₀·r₀²/(r₀ + z·tanθ)².
pub fn local_radial_frequencies(g: &TrapGeometry, z: f64) -> Result<(f64, f64)> {
    let d = g.taper_distance(z)?;
    let f = (g.r0 / d).powi(2);
    Ok((g.omega0x * f, g.omega0y * f))
}

/// Kinetic plus pseudopotential energy.
pub fn total_energy(g: &TrapGeometry, s: &IonState) -> Result<f64> {
    Ok(0.5 * g.mass * s.velocity.norm_squared() + pseudopotential(g, &s.position)?)
}

/// Radial energy (kinetic plus radial pseudopotential).
pub fn radial_energy(g: &TrapGeometry, s: &IonState) -> Result<f64> {
    let v = &s.velocity;
    Ok(0.5 * g.mass * (v.x * v.x + v.y * v.y) + radial_pseudopotential(g, &s.position)?)
}

/// Axial equilibrium z₀(T) of a radially thermal ion.
pub fn equilibrium_shift(g: &TrapGeometry, temperature: f64) -> Result<f64> {
    if !(temperature >= 0.0) || !temperature.is_finite() {
        return Err(invalid("temperature", format!("must be finite and >= 0, got {temperature}")));
    }
    let t = g.tan_theta();
    if temperature == 0.0 || t == 0.0 {
        return Ok(0.0);
    }
    let k = g.mass * g.omega0z * g.omega0z;
    let drive = 4.0 * t * KB * temperature;
    let f = |z: f64| k * z - drive / (g.r0 + z * t);
    let mut lo = 0.0;
    let mut hi = g.z_limit() * (1.0 - 1e-12);
    if f(hi) < 0.0 {
        return Err(Error::NoRoot(format!(
            "no axial equilibrium inside the validity region at T = {temperature} K"
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Symplectic stepper bound to one geometry, force field and scheme.
#[derive(Debug, Clone, Copy)]
pub struct Stepper {
    pub geometry: TrapGeometry,
    pub mode: ForceFieldMode,
    pub scheme: Scheme,
    pub dt: f64,
}

impl Stepper {
    pub fn new(geometry: TrapGeometry, mode: ForceFieldMode, dt: f64) -> Result<Self> {
        Self::with_scheme(geometry, mode, dt, Scheme::default())
    }

    pub fn with_scheme(geometry: TrapGeometry, mode: ForceFieldMode, dt: f64, scheme: Scheme) -> Result<Self> {
        geometry.validate()?;
        positive("dt", dt)?;
        if mode == ForceFieldMode::FullRf && geometry.u0.is_none() {
            return Err(Error::Uncalibrated);
        }
        let s = Self {
            geometry,
            mode,
            scheme,
            dt,
        };
        let limit = s.dt_limit(0.0)?;
        if dt > limit * (1.0 + 1e-12) {
            return Err(Error::StepTooLarge { dt, limit });
        }
        Ok(s)
    }

    /// Largest admissible step for the frequencies at axial position z.
    pub fn dt_limit(&self, z: f64) -> Result<f64> {
        let g = &self.geometry;
        let fastest = match self.mode {
            ForceFieldMode::FullRf => g.omega_rf.max(g.omega0z),
            ForceFieldMode::Pseudopotential => {
                let (wx, wy) = local_radial_frequencies(g, z)?;
                wx.max(wy).max(g.omega0z)
            }
        };
        Ok(TAU / fastest / MIN_STEPS_PER_PERIOD)
    }

    /// One step under the trap field plus a constant external force.
    /// The step size is checked against the trap-center frequencies when the
    /// stepper is built; only the validity guard is checked here.
    pub fn advance(&self, s: &mut IonState, extra_force: &Vector3<f64>) -> Result<()> {
        let g = &self.geometry;
        let h = self.dt;
        let inv_m = 1.0 / g.mass;
        for &(drift, kick) in self.scheme.stages() {
            if drift != 0.0 {
                s.position += (drift * h) * s.velocity;
                s.time += drift * h;
            }
            if kick != 0.0 {
                let f = force(g, self.mode, &s.position, s.time)? + extra_force;
                s.velocity += (kick * h * inv_m) * f;
            }
        }
        g.taper_distance(s.position.z)?;
        Ok(())
    }

    pub fn run(&self, s: &mut IonState, steps: usize) -> Result<()> {
        let zero = Vector3::zeros();
        for _ in 0..steps {
            self.advance(s, &zero)?;
        }
        Ok(())
    }
}

/// Single step, validating everything on each call.
pub fn step(
    state: &IonState,
    g: &TrapGeometry,
    mode: ForceFieldMode,
    extra_force: &Vector3<f64>,
    dt: f64,
) -> Result<IonState> {
    let mut s = *state;
    Stepper::new(*g, mode, dt)?.advance(&mut s, extra_force)?;
    Ok(s)
}

/// Radial velocity that suppresses the secular excitation from starting a
/// full-rf trajectory at rest at rf phase 0.
pub fn micromotion_matched_velocity(g: &TrapGeometry, x0: f64) -> Result<f64> {
    Ok(0.5 * g.q_parameter()? * g.omega_rf * x0)
}

/// Minimum secular periods sampled by [`measure_secular_frequency`].
pub const SECULAR_PERIODS: usize = 100;

/// Secular x frequency of a full-rf trajectory from zero crossings.
pub fn measure_secular_frequency(g: &TrapGeometry, periods: usize) -> Result<f64> {
    let periods = periods.max(SECULAR_PERIODS);
    let q = g.q_parameter()?;
    if q >= 0.908 {
        return Err(Error::UnstableDrive);
    }
    let guess = q * g.omega_rf / (2.0 * SQRT_2);
    let dt = TAU / g.omega_rf / 100.0;
    let stepper = Stepper::new(*g, ForceFieldMode::FullRf, dt)?;
    // small enough that the taper-induced axial shift (∝ x0²) is negligible
    let x0 = 1e-8;
    let mut s = IonState::new(Vector3::new(x0, 0.0, 0.0), Vector3::new(micromotion_matched_velocity(g, x0)?, 0.0, 0.0));
    let max_steps = ((periods as f64 + 2.0) * TAU / guess / dt * 4.0).ceil() as usize;
    let zero = Vector3::zeros();
    let mut crossings: Vec<f64> = Vec::with_capacity(2 * periods + 2);
    let (mut t_prev, mut x_prev) = (s.time, s.position.x);
    for _ in 0..max_steps {
        stepper.advance(&mut s, &zero)?;
        let x = s.position.x;
        if x.abs() > 1e3 * x0 {
            return Err(Error::UnstableDrive);
        }
        if x_prev != 0.0 && (x_prev < 0.0) != (x < 0.0) {
            crossings.push(t_prev + (s.time - t_prev) * x_prev / (x_prev - x));
            if crossings.len() > 2 * periods {
                break;
            }
        }
        t_prev = s.time;
        x_prev = x;
    }
    if crossings.len() < 2 * periods + 1 {
        return Err(Error::UnstableDrive);
    }
    let n = crossings.len() - 1;
    Ok(PI * n as f64 / (crossings[n] - crossings[0]))
}

/// Relative secular-frequency tolerance reached by [`calibrate_u0`].
pub const CALIBRATION_TOL: f64 = 1e-3;

/// Chooses u0 so the measured full-rf secular frequency equals ω₀ₓ.
pub fn calibrate_u0(g: &TrapGeometry) -> Result<TrapGeometry> {
    g.validate()?;
    let q_guess = 2.0 * SQRT_2 * g.omega0x / g.omega_rf;
    let mut cal = g.with_u0(g.u0_for_q(q_guess));
    for _ in 0..30 {
        let measured = measure_secular_frequency(&cal, SECULAR_PERIODS)?;
        let ratio = g.omega0x / measured;
        if (ratio - 1.0).abs() <= CALIBRATION_TOL {
            return Ok(cal);
        }
        cal = cal.with_u0(cal.u0.unwrap_or_default() * ratio);
    }
    Err(Error::UnstableDrive)
}

//! Ensemble Monte-Carlo driver for the single-ion Otto engine.
//!
//! Every trajectory owns a private counter-based random stream keyed by
//! (run seed, trajectory index). Trajectories advance in parallel one axial
//! period at a time; per-cycle statistics are then reduced sequentially in
//! index order, so results do not depend on the worker count.

use std::f64::consts::TAU;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{invalid, positive, Error, Result};
use crate::reservoir::{apply_beams, BeamRole, GateSpec, LaserBeam, LaserTally};
use crate::thermo::quantities_from_energies;
use crate::thermo::CycleEnergies;
use crate::trap::{
    local_radial_frequencies, radial_energy, ForceFieldMode, IonState, Stepper, TrapGeometry,
};
use crate::units::{acoth, HBAR, KB};

/// Corner phases of the axial oscillation, in units of 2π: A ends the cold
/// window, B starts the hot one, C ends it, D starts the next cold window.
pub const CORNER_PHASES: [f64; 4] = [0.1, 0.4, 0.6, 0.9];
pub const CORNER_LABELS: [char; 4] = ['A', 'B', 'C', 'D'];
/// Steps per axial period must be a multiple of this so corners fall on steps.
pub const STEP_QUANTUM: usize = 20;
/// Minimum steady-state cycles for a performance measurement.
pub const MIN_MEASURED_CYCLES: usize = 5;

/// Random stream of trajectory `index` in run `seed`.
pub fn trajectory_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

#[derive(Debug, Clone)]
pub struct Ensemble {
    pub states: Vec<IonState>,
    rngs: Vec<ChaCha8Rng>,
}

impl Ensemble {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

fn gaussian<R: Rng>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// Gibbs ensemble of the harmonic pseudopotential at trap center.
pub fn init_ensemble(temperature: f64, g: &TrapGeometry, n: usize, seed: u64) -> Result<Ensemble> {
    init_ensemble_displaced(temperature, temperature, 0.0, g, n, seed)
}

/// Thermal ensemble with separate radial and axial temperatures whose axial
/// distribution is centered on `z_offset` (a coherent displacement).
pub fn init_ensemble_displaced(
    radial_temperature: f64,
    axial_temperature: f64,
    z_offset: f64,
    g: &TrapGeometry,
    n: usize,
    seed: u64,
) -> Result<Ensemble> {
    g.validate()?;
    for (name, t) in [("radial_temperature", radial_temperature), ("axial_temperature", axial_temperature)] {
        if !(t >= 0.0 && t.is_finite()) {
            return Err(invalid(name, format!("must be finite and >= 0, got {t}")));
        }
    }
    g.taper_distance(z_offset)?;
    let (wx, wy) = local_radial_frequencies(g, z_offset)?;
    let m = g.mass;
    let sv_r = (KB * radial_temperature / m).sqrt();
    let sv_z = (KB * axial_temperature / m).sqrt();
    let (sx, sy, sz) = (sv_r / wx, sv_r / wy, sv_z / g.omega0z);
    let mut states = Vec::with_capacity(n);
    let mut rngs = Vec::with_capacity(n);
    for i in 0..n {
        let mut rng = trajectory_rng(seed, i);
        let p = Vector3::new(sx * gaussian(&mut rng), sy * gaussian(&mut rng), z_offset + sz * gaussian(&mut rng));
        let v = Vector3::new(sv_r * gaussian(&mut rng), sv_r * gaussian(&mut rng), sv_z * gaussian(&mut rng));
        states.push(IonState::new(p, v));
        rngs.push(rng);
    }
    Ok(Ensemble { states, rngs })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThermometryReading {
    pub temperature: f64,
    pub phonon_number: f64,
    pub stderr: f64,
}

/// Radial temperature from the mean radial energy (k_B·T per mode, two
/// modes) and the phonon number at the local frequency of the mean axial
/// position.
pub fn radial_temperature(ens: &Ensemble, g: &TrapGeometry) -> Result<ThermometryReading> {
    if ens.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    let energies = ens
        .states
        .iter()
        .map(|s| radial_energy(g, s))
        .collect::<Result<Vec<_>>>()?;
    let (mean, se) = mean_stderr(&energies);
    let zbar = ens.states.iter().map(|s| s.position.z).sum::<f64>() / ens.len() as f64;
    let (wx, _) = local_radial_frequencies(g, zbar)?;
    thermometry(mean / (2.0 * KB), se / (2.0 * KB), wx)
}

/// Reading for a known temperature at radial frequency ω.
pub fn thermometry(temperature: f64, stderr: f64, omega: f64) -> Result<ThermometryReading> {
    positive("omega", omega)?;
    Ok(ThermometryReading {
        temperature,
        phonon_number: KB * temperature / (HBAR * omega) - 0.5,
        stderr,
    })
}

/// Least-squares slope of `v` against its index, with its standard error.
fn line_slope(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let tm = (n - 1.0) / 2.0;
    let ym = v.iter().sum::<f64>() / n;
    let sxx: f64 = (0..v.len()).map(|i| (i as f64 - tm).powi(2)).sum();
    let sxy: f64 = v.iter().enumerate().map(|(i, y)| (i as f64 - tm) * (y - ym)).sum();
    let slope = sxy / sxx;
    if v.len() < 3 {
        return (slope, 0.0);
    }
    let rss: f64 = v
        .iter()
        .enumerate()
        .map(|(i, y)| (y - ym - slope * (i as f64 - tm)).powi(2))
        .sum();
    (slope, (rss / (n - 2.0) / sxx).sqrt())
}

fn mean_stderr(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DriveMode {
    /// Baths switched by phase windows of the axial oscillation.
    #[default]
    ExternalSwitch,
    /// Baths gated by spatially separated foci; no switching.
    SelfDriven,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleConfig {
    pub n_trajectories: usize,
    pub seed: u64,
    /// Requested step; rounded down so a whole number of steps (a multiple
    /// of [`STEP_QUANTUM`]) fits in one axial period.
    pub dt: f64,
    pub geometry: TrapGeometry,
    pub beams: Vec<LaserBeam>,
    pub mode: DriveMode,
    /// Cycle budget.
    pub cycles: usize,
    pub force_mode: ForceFieldMode,
    /// Axial damping beams (role dissipation).
    pub dissipation: Vec<LaserBeam>,
    pub initial_temperature: f64,
    pub axial_temperature: f64,
    /// Coherent axial displacement the ensemble starts from (m).
    pub seed_amplitude: f64,
    /// Cycles always run before steady state is tested.
    pub warmup_cycles: usize,
    pub measure_cycles: usize,
    /// Relative amplitude change allowed across the steady-state window.
    pub steady_tolerance: f64,
    pub steady_window: usize,
    /// Axial-trace sampling stride in steps.
    pub trace_stride: usize,
    pub histogram_bins: usize,
}

impl EnsembleConfig {
    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        if self.n_trajectories == 0 {
            return Err(invalid("n_trajectories", "must be at least 1"));
        }
        positive("dt", self.dt)?;
        for b in self.beams.iter().chain(self.dissipation.iter()) {
            b.validate()?;
        }
        if self.dissipation.iter().any(|d| d.role != BeamRole::Dissipation) {
            return Err(invalid("dissipation", "beam role must be dissipation"));
        }
        if self.mode == DriveMode::ExternalSwitch && !self.beams.is_empty() {
            let has = |r: BeamRole| self.beams.iter().any(|b| b.role == r);
            if !has(BeamRole::Heat) || !has(BeamRole::Cool) {
                return Err(invalid("beams", "external switching needs at least one heat and one cool beam"));
            }
        }
        if self.mode == DriveMode::SelfDriven
            && self.beams.iter().any(|b| matches!(b.gate, GateSpec::PhaseWindow { .. }))
        {
            return Err(invalid("beams", "self-driven mode uses spatial gates, not phase windows"));
        }
        for (name, t) in [
            ("initial_temperature", self.initial_temperature),
            ("axial_temperature", self.axial_temperature),
        ] {
            if !(t >= 0.0 && t.is_finite()) {
                return Err(invalid(name, format!("must be finite and >= 0, got {t}")));
            }
        }
        if !self.seed_amplitude.is_finite() {
            return Err(invalid("seed_amplitude", "must be finite"));
        }
        if self.measure_cycles < MIN_MEASURED_CYCLES {
            return Err(invalid("measure_cycles", format!("need at least {MIN_MEASURED_CYCLES}")));
        }
        if self.steady_window < 2 {
            return Err(invalid("steady_window", "need at least 2 cycles"));
        }
        positive("steady_tolerance", self.steady_tolerance)?;
        if self.trace_stride == 0 || self.histogram_bins == 0 {
            return Err(invalid("trace_stride", "stride and histogram bins must be positive"));
        }
        if self.cycles < self.warmup_cycles + self.measure_cycles {
            return Err(invalid("cycles", "budget must cover warmup and measurement"));
        }
        self.stepper()?;
        Ok(())
    }

    pub fn axial_period(&self) -> f64 {
        TAU / self.geometry.omega0z
    }

    pub fn steps_per_cycle(&self) -> usize {
        let raw = (self.axial_period() / self.dt / STEP_QUANTUM as f64).ceil() as usize;
        raw.max(1) * STEP_QUANTUM
    }

    pub fn effective_dt(&self) -> f64 {
        self.axial_period() / self.steps_per_cycle() as f64
    }

    pub fn stepper(&self) -> Result<Stepper> {
        Stepper::new(self.geometry, self.force_mode, self.effective_dt())
    }

    /// Bath beams followed by the dissipation beams.
    pub fn all_beams(&self) -> Vec<LaserBeam> {
        self.beams.iter().chain(self.dissipation.iter()).copied().collect()
    }
}

/// Per-trajectory output of one axial period.
#[derive(Debug, Clone)]
struct CycleOutput {
    corner_energy: [f64; 4],
    corner_omega: [f64; 4],
    snapshot: [[f64; 4]; 4],
    fourier: (f64, f64),
    trace: Vec<(f64, f64)>,
    axial_start: f64,
    axial_end: f64,
    radial_start: f64,
    radial_end: f64,
    tally: LaserTally,
}

struct CycleContext<'a> {
    stepper: Stepper,
    beams: &'a [LaserBeam],
    steps: usize,
    corner_steps: [usize; 4],
    stride: usize,
}

fn axial_energy(g: &TrapGeometry, s: &IonState) -> f64 {
    0.5 * g.mass * (s.velocity.z * s.velocity.z + g.omega0z * g.omega0z * s.position.z * s.position.z)
}

fn run_cycle(state: &mut IonState, rng: &mut ChaCha8Rng, ctx: &CycleContext) -> Result<CycleOutput> {
    let g = &ctx.stepper.geometry;
    let m = g.mass;
    let zero = Vector3::zeros();
    let mut out = CycleOutput {
        corner_energy: [0.0; 4],
        corner_omega: [0.0; 4],
        snapshot: [[0.0; 4]; 4],
        fourier: (0.0, 0.0),
        trace: Vec::with_capacity(ctx.steps / ctx.stride),
        axial_start: axial_energy(g, state),
        axial_end: 0.0,
        radial_start: radial_energy(g, state)?,
        radial_end: 0.0,
        tally: LaserTally::default(),
    };
    let mut corner = 0;
    for j in 0..ctx.steps {
        ctx.stepper.advance(state, &zero)?;
        let phase = TAU * (j + 1) as f64 / ctx.steps as f64;
        if !ctx.beams.is_empty() {
            apply_beams(ctx.beams, state, m, phase, ctx.stepper.dt, rng, &mut out.tally)?;
        }
        let (s, c) = phase.sin_cos();
        out.fourier.0 += state.position.z * c;
        out.fourier.1 += state.position.z * s;
        if corner < 4 && j + 1 == ctx.corner_steps[corner] {
            out.corner_energy[corner] = radial_energy(g, state)?;
            out.corner_omega[corner] = local_radial_frequencies(g, state.position.z)?.0;
            out.snapshot[corner] = [state.position.x, m * state.velocity.x, state.position.z, m * state.velocity.z];
            corner += 1;
        }
        if (j + 1) % ctx.stride == 0 {
            out.trace.push((state.position.z, state.velocity.z));
        }
    }
    out.axial_end = axial_energy(g, state);
    out.radial_end = radial_energy(g, state)?;
    Ok(out)
}

/// Ensemble statistics of one axial period.
#[derive(Debug, Clone, PartialEq)]
pub struct CycleStats {
    pub cycle: usize,
    /// Fourier amplitude of the ensemble-mean axial position (m).
    pub amplitude: f64,
    /// Mean radial energy at corners A–D (J).
    pub energy: [f64; 4],
    pub energy_stderr: [f64; 4],
    /// Mean local radial frequency at corners A–D (rad/s).
    pub omega: [f64; 4],
    /// Change of the mean axial energy over the period (J).
    pub axial_energy_change: f64,
    /// Axial kinetic energy delivered by all beams (J).
    pub laser_axial: f64,
    /// Energy removed from axial motion by the dissipation beam (J, ≥ 0).
    pub dissipated: f64,
    /// Change of the mean radial energy over the period (J).
    pub radial_energy_change: f64,
    /// Radial kinetic energy delivered by all beams (J).
    pub laser_radial: f64,
    /// Radial energy delivered by heating and cooling beams (J).
    pub heat_radial: f64,
    pub cool_radial: f64,
}

impl CycleStats {
    /// Work the radial mode performed on the axial mode over the period.
    pub fn axial_work(&self) -> f64 {
        self.axial_energy_change - self.laser_axial
    }

    /// The same work seen from the radial side: laser input minus storage.
    pub fn radial_work(&self) -> f64 {
        self.laser_radial - self.radial_energy_change
    }

    /// Output work of the two strokes, −(W₁+W₃), from the corner energies.
    pub fn stroke_work(&self) -> f64 {
        quantities_from_energies(&self.energies()).output_work()
    }

    /// Signed area of the (ω, E) loop, positive for engine orientation.
    pub fn loop_area(&self) -> f64 {
        let mut a = 0.0;
        for i in 0..4 {
            let j = (i + 1) % 4;
            a += self.omega[i] * self.energy[j] - self.omega[j] * self.energy[i];
        }
        // A→B→C→D runs counterclockwise in the (ω, E) plane for an engine
        0.5 * a
    }

    pub fn energies(&self) -> CycleEnergies {
        CycleEnergies {
            e_a: self.energy[0],
            e_b: self.energy[1],
            e_c: self.energy[2],
            e_d: self.energy[3],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram2D {
    pub name: String,
    pub x_label: &'static str,
    pub y_label: &'static str,
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
    pub bins: usize,
    /// Row-major counts, x index fastest.
    pub counts: Vec<u64>,
}

impl Histogram2D {
    pub fn build(name: String, labels: (&'static str, &'static str), points: &[(f64, f64)], bins: usize) -> Self {
        let range = |f: &dyn Fn(&(f64, f64)) -> f64| {
            let lo = points.iter().map(f).fold(f64::INFINITY, f64::min);
            let hi = points.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
            if !(hi > lo) {
                (lo - 0.5, lo + 0.5)
            } else {
                (lo, hi)
            }
        };
        let xr = range(&|p| p.0);
        let yr = range(&|p| p.1);
        let mut counts = vec![0u64; bins * bins];
        let idx = |v: f64, r: (f64, f64)| (((v - r.0) / (r.1 - r.0) * bins as f64) as usize).min(bins - 1);
        for p in points {
            counts[idx(p.1, yr) * bins + idx(p.0, xr)] += 1;
        }
        Self {
            name,
            x_label: labels.0,
            y_label: labels.1,
            x_range: xr,
            y_range: yr,
            bins,
            counts,
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Performance {
    pub eta: f64,
    pub eta_stderr: f64,
    /// Output power per ion (W).
    pub power: f64,
    pub power_stderr: f64,
    pub cycles: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceSample {
    pub time: f64,
    pub z: f64,
    pub vz: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub mode: DriveMode,
    pub period: f64,
    pub dt: f64,
    pub n_trajectories: usize,
    pub cycles: Vec<CycleStats>,
    /// First steady-state cycle.
    pub steady_from: usize,
    pub axial_trace: Vec<TraceSample>,
    pub phase_histograms: Vec<Histogram2D>,
    pub measured: Option<Performance>,
    /// Steady axial amplitude in ground-state wave-packet units.
    pub alpha: f64,
    pub seed_amplitude: f64,
    pub axial_frequency: f64,
    pub mass: f64,
}

impl RunRecord {
    /// Record made only of per-cycle corner data, for analysis of external
    /// or synthetic data.
    pub fn from_cycles(cycles: Vec<CycleStats>, period: f64, steady_from: usize) -> Self {
        Self {
            mode: DriveMode::ExternalSwitch,
            period,
            dt: 0.0,
            n_trajectories: 0,
            cycles,
            steady_from,
            axial_trace: Vec::new(),
            phase_histograms: Vec::new(),
            measured: None,
            alpha: 0.0,
            seed_amplitude: 0.0,
            axial_frequency: TAU / period,
            mass: 0.0,
        }
    }

    pub fn steady_cycles(&self) -> &[CycleStats] {
        let i = self.cycles.iter().position(|c| c.cycle >= self.steady_from).unwrap_or(self.cycles.len());
        &self.cycles[i..]
    }

    /// Corner energies averaged over the steady-state cycles.
    pub fn mean_corners(&self) -> Result<CycleStats> {
        let s = self.steady_cycles();
        if s.is_empty() {
            return Err(Error::InsufficientCycles {
                needed: MIN_MEASURED_CYCLES,
                found: 0,
            });
        }
        let n = s.len() as f64;
        let mut out = s[s.len() - 1].clone();
        for i in 0..4 {
            out.energy[i] = s.iter().map(|c| c.energy[i]).sum::<f64>() / n;
            out.omega[i] = s.iter().map(|c| c.omega[i]).sum::<f64>() / n;
            let (_, se) = mean_stderr(&s.iter().map(|c| c.energy[i]).collect::<Vec<_>>());
            out.energy_stderr[i] = se.max(s.iter().map(|c| c.energy_stderr[i]).sum::<f64>() / n / n.sqrt());
        }
        out.amplitude = s.iter().map(|c| c.amplitude).sum::<f64>() / n;
        out.axial_energy_change = s.iter().map(|c| c.axial_energy_change).sum::<f64>() / n;
        out.laser_axial = s.iter().map(|c| c.laser_axial).sum::<f64>() / n;
        out.dissipated = s.iter().map(|c| c.dissipated).sum::<f64>() / n;
        out.radial_energy_change = s.iter().map(|c| c.radial_energy_change).sum::<f64>() / n;
        out.laser_radial = s.iter().map(|c| c.laser_radial).sum::<f64>() / n;
        out.heat_radial = s.iter().map(|c| c.heat_radial).sum::<f64>() / n;
        out.cool_radial = s.iter().map(|c| c.cool_radial).sum::<f64>() / n;
        Ok(out)
    }

    /// Mean loop area over steady-state cycles and its standard error. The
    /// error combines the cycle-to-cycle scatter with the ensemble error of
    /// the corner energies, since successive cycles of one ensemble are
    /// correlated.
    pub fn loop_area(&self) -> (f64, f64) {
        let (mean, se_cycles) = mean_stderr(&self.steady_cycles().iter().map(|c| c.loop_area()).collect::<Vec<_>>());
        let se_ensemble = match self.mean_corners() {
            Ok(c) => {
                let var: f64 = (0..4)
                    .map(|j| (0.5 * (c.omega[(j + 3) % 4] - c.omega[(j + 1) % 4]) * c.energy_stderr[j]).powi(2))
                    .sum();
                var.sqrt()
            }
            Err(_) => 0.0,
        };
        (mean, se_cycles.hypot(se_ensemble))
    }

    /// Corner ordering of an engine: compressed frequencies at B and C above
    /// those at A and D, heat taken in at high frequency (E_C > E_B) and
    /// released at low frequency (E_D > E_A).
    pub fn has_engine_ordering(&self) -> bool {
        match self.mean_corners() {
            Ok(c) => {
                let w = c.omega;
                let e = c.energy;
                w[1].min(w[2]) > w[0].max(w[3]) && e[2] > e[1] && e[3] > e[0]
            }
            Err(_) => false,
        }
    }

    /// Returns to the same state after each cycle: the drift of E_A across
    /// steady cycles is within three standard errors.
    pub fn is_closed(&self) -> bool {
        let s = self.steady_cycles();
        if s.len() < 3 {
            return false;
        }
        let steps: Vec<f64> = s.windows(2).map(|w| w[1].energy[0] - w[0].energy[0]).collect();
        let (mean, se) = mean_stderr(&steps);
        mean.abs() <= 3.0 * se + 1e-3 * s[0].energy[0].abs()
    }

    /// Effective bath temperatures from the corner energies: cold from E_A at
    /// ω_A, hot from E_C at ω_C.
    pub fn effective_temperatures(&self) -> Result<(f64, f64)> {
        let c = self.mean_corners()?;
        Ok((
            mode_temperature(0.5 * c.energy[0], c.omega[0]),
            mode_temperature(0.5 * c.energy[2], c.omega[2]),
        ))
    }

    /// Effective adiabaticity from data: Q*₁ = E_B ω_A/(E_A ω_B), Q*₂ = E_D ω_C/(E_C ω_D).
    pub fn effective_qstar(&self) -> Result<(f64, f64)> {
        let c = self.mean_corners()?;
        let (e, w) = (c.energy, c.omega);
        Ok((e[1] * w[0] / (e[0] * w[1]), e[3] * w[2] / (e[2] * w[3])))
    }

    /// First-law audit over steady cycles: relative mismatch between the work
    /// received by the axial mode (storage plus laser losses) and the work
    /// released by the radial mode (laser input minus storage).
    pub fn energy_audit(&self) -> Result<f64> {
        let c = self.mean_corners()?;
        let radial = c.radial_work();
        if radial == 0.0 {
            return Ok(if c.axial_work() == 0.0 { 0.0 } else { f64::INFINITY });
        }
        Ok((c.axial_work() - radial) / radial.abs())
    }

    /// Fraction of the axial work done during the strokes; the rest is done
    /// inside the bath windows, where the ion keeps moving.
    pub fn stroke_share(&self) -> Result<f64> {
        let c = self.mean_corners()?;
        Ok(c.stroke_work() / c.radial_work())
    }
}

/// Temperature of one harmonic mode with mean energy `e` at frequency ω.
pub fn mode_temperature(e: f64, omega: f64) -> f64 {
    let half = 0.5 * HBAR * omega;
    if e <= half {
        return 0.0;
    }
    // e = (ħω/2)·coth(βħω/2)
    half / (KB * acoth(e / half))
}

/// α = A/(2σ₀) with σ₀ = √(ħ/(2mω_z)).
pub fn coherent_alpha(amplitude: f64, mass: f64, omega_z: f64) -> f64 {
    let sigma0 = (HBAR / (2.0 * mass * omega_z)).sqrt();
    amplitude / (2.0 * sigma0)
}

/// η and output power from steady-state corner energies.
pub fn measure_performance(rec: &RunRecord) -> Result<Performance> {
    let s = rec.steady_cycles();
    if s.len() < MIN_MEASURED_CYCLES {
        return Err(Error::InsufficientCycles {
            needed: MIN_MEASURED_CYCLES,
            found: s.len(),
        });
    }
    positive("period", rec.period)?;
    let mut etas = Vec::with_capacity(s.len());
    let mut powers = Vec::with_capacity(s.len());
    for c in s {
        let r = quantities_from_energies(&c.energies());
        if r.q2hot > 0.0 {
            etas.push(r.output_work() / r.q2hot);
        }
        powers.push(r.output_work() / rec.period);
    }
    let (_, pse) = mean_stderr(&powers);
    let mean = rec.mean_corners()?;
    let r = quantities_from_energies(&mean.energies());
    if !(r.q2hot > 0.0) {
        return Err(Error::NotAnEngine);
    }
    let (_, ese) = mean_stderr(&etas);
    Ok(Performance {
        eta: r.output_work() / r.q2hot,
        eta_stderr: ese,
        power: r.output_work() / rec.period,
        power_stderr: pse,
        cycles: s.len(),
    })
}

fn reduce_cycle(
    outs: &[CycleOutput],
    cycle: usize,
    steps: usize,
) -> (CycleStats, Vec<(f64, f64)>) {
    let n = outs.len() as f64;
    let mut energy = [0.0; 4];
    let mut energy_sq = [0.0; 4];
    let mut omega = [0.0; 4];
    let (mut fc, mut fs) = (0.0, 0.0);
    let (mut a0, mut a1) = (0.0, 0.0);
    let (mut r0, mut r1) = (0.0, 0.0);
    let mut tally = LaserTally::default();
    let mut trace = vec![(0.0, 0.0); outs[0].trace.len()];
    for o in outs {
        for i in 0..4 {
            energy[i] += o.corner_energy[i];
            energy_sq[i] += o.corner_energy[i] * o.corner_energy[i];
            omega[i] += o.corner_omega[i];
        }
        fc += o.fourier.0;
        fs += o.fourier.1;
        a0 += o.axial_start;
        a1 += o.axial_end;
        r0 += o.radial_start;
        r1 += o.radial_end;
        tally.add(&o.tally);
        for (t, s) in trace.iter_mut().zip(&o.trace) {
            t.0 += s.0;
            t.1 += s.1;
        }
    }
    let mut energy_stderr = [0.0; 4];
    for i in 0..4 {
        energy[i] /= n;
        omega[i] /= n;
        let var = (energy_sq[i] / n - energy[i] * energy[i]).max(0.0) * n / (n - 1.0).max(1.0);
        energy_stderr[i] = (var / n).sqrt();
    }
    for t in &mut trace {
        t.0 /= n;
        t.1 /= n;
    }
    let amplitude = 2.0 / steps as f64 * (fc * fc + fs * fs).sqrt() / n;
    let stats = CycleStats {
        cycle,
        amplitude,
        energy,
        energy_stderr,
        omega,
        axial_energy_change: (a1 - a0) / n,
        laser_axial: tally.axial_total() / n,
        dissipated: -tally.axial[BeamRole::Dissipation.index()] / n,
        radial_energy_change: (r1 - r0) / n,
        laser_radial: tally.radial_total() / n,
        heat_radial: tally.radial[BeamRole::Heat.index()] / n,
        cool_radial: tally.radial[BeamRole::Cool.index()] / n,
    };
    (stats, trace)
}

/// Simulation state that can be advanced cycle by cycle.
pub struct Simulation {
    cfg: EnsembleConfig,
    ensemble: Ensemble,
    beams: Vec<LaserBeam>,
    stepper: Stepper,
    steps: usize,
    cycle: usize,
    pub history: Vec<CycleStats>,
    pub trace: Vec<TraceSample>,
    last_snapshots: Vec<[[f64; 4]; 4]>,
}

impl Simulation {
    pub fn new(cfg: &EnsembleConfig) -> Result<Self> {
        cfg.validate()?;
        let ensemble = init_ensemble_displaced(
            cfg.initial_temperature,
            cfg.axial_temperature,
            cfg.seed_amplitude,
            &cfg.geometry,
            cfg.n_trajectories,
            cfg.seed,
        )?;
        Ok(Self {
            beams: cfg.all_beams(),
            stepper: cfg.stepper()?,
            steps: cfg.steps_per_cycle(),
            cfg: cfg.clone(),
            ensemble,
            cycle: 0,
            history: Vec::new(),
            trace: Vec::new(),
            last_snapshots: Vec::new(),
        })
    }

    pub fn ensemble(&self) -> &Ensemble {
        &self.ensemble
    }

    /// Advances every trajectory by one axial period.
    pub fn step_cycle(&mut self) -> Result<&CycleStats> {
        let steps = self.steps;
        let corner_steps = CORNER_PHASES.map(|p| (p * steps as f64).round() as usize);
        let ctx = CycleContext {
            stepper: self.stepper,
            beams: &self.beams,
            steps,
            corner_steps,
            stride: self.cfg.trace_stride,
        };
        let Ensemble { states, rngs } = &mut self.ensemble;
        let outs = states
            .par_iter_mut()
            .zip(rngs.par_iter_mut())
            .map(|(s, r)| run_cycle(s, r, &ctx))
            .collect::<Result<Vec<_>>>()?;
        let (stats, trace) = reduce_cycle(&outs, self.cycle, steps);
        let dt = self.stepper.dt;
        let t0 = self.cycle as f64 * steps as f64 * dt;
        self.trace.extend(trace.into_iter().enumerate().map(|(k, (z, vz))| TraceSample {
            time: t0 + ((k + 1) * self.cfg.trace_stride) as f64 * dt,
            z,
            vz,
        }));
        self.last_snapshots = outs.iter().map(|o| o.snapshot).collect();
        self.history.push(stats);
        self.cycle += 1;
        Ok(self.history.last().expect("just pushed"))
    }

    /// Amplitude noise floor: thermal axial spread over √n.
    fn amplitude_floor(&self) -> f64 {
        let g = &self.cfg.geometry;
        let t = self.cfg.axial_temperature.max(self.cfg.initial_temperature);
        3.0 * (KB * t / (g.mass * g.omega0z * g.omega0z)).sqrt() / (self.cfg.n_trajectories as f64).sqrt()
    }

    /// First cycle of a window of `steady_window` cycles whose amplitudes
    /// agree within the tolerance and show no significant drift, if the
    /// latest cycles form one.
    ///
    /// The drift test fits a line through the window: the change it predicts
    /// across the window, less two standard errors, must stay inside the
    /// tolerance. Without it a slow approach hidden under the sampling floor
    /// of a small ensemble would pass as steady.
    pub fn steady_start(&self) -> Option<usize> {
        let w = self.cfg.steady_window;
        let h = &self.history;
        if h.len() < self.cfg.warmup_cycles + w {
            return None;
        }
        let tail = &h[h.len() - w..];
        let amps: Vec<f64> = tail.iter().map(|c| c.amplitude).collect();
        let lo = amps.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = amps.iter().copied().fold(0.0, f64::max);
        let mean = amps.iter().sum::<f64>() / w as f64;
        let tol = self.cfg.steady_tolerance * mean;
        if hi - lo > tol + self.amplitude_floor() {
            return None;
        }
        if w >= 3 {
            let (slope, se) = line_slope(&amps);
            let span = (w - 1) as f64;
            if (slope.abs() - 2.0 * se).max(0.0) * span > tol {
                return None;
            }
        }
        Some(tail[0].cycle)
    }

    /// Runs until `measure_cycles` steady cycles are collected.
    pub fn run_to_steady_state(&mut self) -> Result<usize> {
        let mut steady: Option<usize> = None;
        while self.cycle < self.cfg.cycles {
            self.step_cycle()?;
            if steady.is_none() {
                steady = self.steady_start();
            }
            if let Some(s) = steady {
                if self.cycle - s >= self.cfg.measure_cycles {
                    return Ok(s);
                }
            }
        }
        Err(Error::NoSteadyState(self.cfg.cycles))
    }

    pub fn into_record(self, steady_from: usize) -> Result<RunRecord> {
        let g = self.cfg.geometry;
        let labels_r = ("x", "px");
        let labels_a = ("z", "pz");
        let bins = self.cfg.histogram_bins;
        let mut hist = Vec::with_capacity(8);
        for (k, l) in CORNER_LABELS.iter().enumerate() {
            let radial: Vec<(f64, f64)> = self.last_snapshots.iter().map(|s| (s[k][0], s[k][1])).collect();
            let axial: Vec<(f64, f64)> = self.last_snapshots.iter().map(|s| (s[k][2], s[k][3])).collect();
            hist.push(Histogram2D::build(format!("radial_{l}"), labels_r, &radial, bins));
            hist.push(Histogram2D::build(format!("axial_{l}"), labels_a, &axial, bins));
        }
        let mut rec = RunRecord {
            mode: self.cfg.mode,
            period: self.cfg.axial_period(),
            dt: self.stepper.dt,
            n_trajectories: self.cfg.n_trajectories,
            cycles: self.history,
            steady_from,
            axial_trace: self.trace,
            phase_histograms: hist,
            measured: None,
            alpha: 0.0,
            seed_amplitude: self.cfg.seed_amplitude,
            axial_frequency: g.omega0z,
            mass: g.mass,
        };
        let amp = rec.steady_cycles().iter().map(|c| c.amplitude).sum::<f64>() / rec.steady_cycles().len().max(1) as f64;
        rec.alpha = coherent_alpha(amp, g.mass, g.omega0z);
        rec.measured = measure_performance(&rec).ok();
        Ok(rec)
    }
}

/// Externally switched engine run to steady state.
pub fn run_engine(cfg: &EnsembleConfig) -> Result<RunRecord> {
    if cfg.mode != DriveMode::ExternalSwitch {
        return Err(invalid("mode", "run_engine needs external switching"));
    }
    let mut sim = Simulation::new(cfg)?;
    let steady = sim.run_to_steady_state()?;
    sim.into_record(steady)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelfDrivenRecord {
    pub record: RunRecord,
    /// The amplitude ended above the seed.
    pub self_amplified: bool,
    /// The amplitude settled inside the cycle budget.
    pub steady: bool,
    pub final_amplitude: f64,
    /// Seed threshold from bisection, when requested.
    pub threshold: Option<f64>,
}

impl SelfDrivenRecord {
    /// Ratio of dissipated energy to the work done on the axial mode over
    /// the steady cycles; 1 in a dissipation-balanced steady state.
    pub fn dissipation_balance(&self) -> Result<f64> {
        let c = self.record.mean_corners()?;
        Ok(c.dissipated / c.axial_work())
    }
}

/// Self-driven run: spatially gated baths, no switching.
pub fn run_self_driven(cfg: &EnsembleConfig) -> Result<SelfDrivenRecord> {
    if cfg.mode != DriveMode::SelfDriven {
        return Err(invalid("mode", "run_self_driven needs self-driven mode"));
    }
    if !cfg.beams.iter().any(|b| matches!(b.gate, GateSpec::SpatialFocus { .. })) {
        return Err(invalid("beams", "self-driven mode needs spatially focused baths"));
    }
    if cfg.seed_amplitude == 0.0 {
        return Err(invalid("seed_amplitude", "self-driven mode needs a seeded amplitude"));
    }
    let mut sim = Simulation::new(cfg)?;
    let (steady, from) = match sim.run_to_steady_state() {
        Ok(s) => (true, s),
        // a decaying seed need not settle inside the budget; report it as is
        Err(Error::NoSteadyState(_)) => (false, sim.history.len().saturating_sub(MIN_MEASURED_CYCLES)),
        Err(e) => return Err(e),
    };
    let final_amplitude = sim.history.last().map_or(0.0, |c| c.amplitude);
    let rec = sim.into_record(from)?;
    Ok(SelfDrivenRecord {
        self_amplified: final_amplitude > cfg.seed_amplitude.abs(),
        steady,
        final_amplitude,
        threshold: None,
        record: rec,
    })
}

/// [`run_self_driven`] plus a threshold search over seeds in `[lo, hi]`.
pub fn run_self_driven_with_threshold(
    cfg: &EnsembleConfig,
    lo: f64,
    hi: f64,
    trial_cycles: usize,
    iterations: usize,
) -> Result<SelfDrivenRecord> {
    let mut out = run_self_driven(cfg)?;
    out.threshold = Some(find_threshold(cfg, lo, hi, trial_cycles, iterations)?);
    Ok(out)
}

/// Amplitude after `cycles` periods from a seed, without steady-state logic.
pub fn amplitude_after(cfg: &EnsembleConfig, seed_amplitude: f64, cycles: usize) -> Result<Vec<f64>> {
    let mut c = cfg.clone();
    c.seed_amplitude = seed_amplitude;
    c.cycles = c.cycles.max(cycles).max(c.warmup_cycles + c.measure_cycles);
    let mut sim = Simulation::new(&c)?;
    let mut amps = Vec::with_capacity(cycles);
    for _ in 0..cycles {
        amps.push(sim.step_cycle()?.amplitude);
    }
    Ok(amps)
}

/// Grows if the amplitude over the last quarter of the trial exceeds the
/// amplitude over its first quarter.
fn grows(amps: &[f64]) -> bool {
    let q = (amps.len() / 4).max(1);
    let head = amps[..q].iter().sum::<f64>() / q as f64;
    let tail = amps[amps.len() - q..].iter().sum::<f64>() / q as f64;
    tail > head
}

/// Threshold seed amplitude separating decay from self-amplification, by
/// bisection on `[lo, hi]`.
pub fn find_threshold(cfg: &EnsembleConfig, lo: f64, hi: f64, cycles: usize, iterations: usize) -> Result<f64> {
    if !(hi > lo && lo >= 0.0) {
        return Err(invalid("threshold bracket", "need 0 <= lo < hi"));
    }
    if cycles < 4 {
        return Err(invalid("cycles", "need at least 4 cycles per trial"));
    }
    let (mut a, mut b) = (lo, hi);
    let ga = lo > 0.0 && grows(&amplitude_after(cfg, a, cycles)?);
    let gb = grows(&amplitude_after(cfg, b, cycles)?);
    if ga || !gb {
        return Err(Error::NoRoot("seed bracket does not straddle the self-amplification threshold".into()));
    }
    for _ in 0..iterations {
        let mid = 0.5 * (a + b);
        if grows(&amplitude_after(cfg, mid, cycles)?) {
            b = mid;
        } else {
            a = mid;
        }
    }
    Ok(0.5 * (a + b))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FreeSpaceRun {
    /// (time, ⟨v⟩, ⟨|v|²⟩) samples.
    pub history: Vec<(f64, Vector3<f64>, f64)>,
    /// Temperature m⟨|v|²⟩/(3k_B) averaged over the second half of the run.
    pub temperature: f64,
    pub stderr: f64,
}

/// Trap-free laser interaction of an ensemble starting at `v0`.
pub fn free_space_run(
    beams: &[LaserBeam],
    mass: f64,
    v0: Vector3<f64>,
    n: usize,
    seed: u64,
    duration: f64,
    dt: f64,
    samples: usize,
) -> Result<FreeSpaceRun> {
    positive("duration", duration)?;
    positive("dt", dt)?;
    positive("mass", mass)?;
    if n == 0 || samples == 0 {
        return Err(Error::EmptyEnsemble);
    }
    for b in beams {
        b.validate()?;
    }
    let steps = (duration / dt).ceil() as usize;
    let every = (steps / samples).max(1);
    let half = steps / 2;
    let per: Vec<(Vec<Vector3<f64>>, f64)> = (0..n)
        .into_par_iter()
        .map(|i| -> Result<_> {
            let mut rng = trajectory_rng(seed, i);
            let mut s = IonState::new(Vector3::zeros(), v0);
            let mut tally = LaserTally::default();
            let mut rec = Vec::with_capacity(samples + 1);
            let mut late = 0.0;
            for j in 0..steps {
                s.position += dt * s.velocity;
                s.time += dt;
                apply_beams(beams, &mut s, mass, 0.0, dt, &mut rng, &mut tally)?;
                if (j + 1) % every == 0 {
                    rec.push(s.velocity);
                }
                if j >= half {
                    late += s.velocity.norm_squared();
                }
            }
            Ok((rec, late / (steps - half) as f64))
        })
        .collect::<Result<Vec<_>>>()?;
    let len = per[0].0.len();
    let mut history = Vec::with_capacity(len);
    for k in 0..len {
        let mut v = Vector3::zeros();
        let mut v2 = 0.0;
        for (r, _) in &per {
            v += r[k];
            v2 += r[k].norm_squared();
        }
        history.push(((k + 1) as f64 * every as f64 * dt, v / n as f64, v2 / n as f64));
    }
    let late: Vec<f64> = per.iter().map(|p| mass * p.1 / (3.0 * KB)).collect();
    let (temperature, stderr) = mean_stderr(&late);
    Ok(FreeSpaceRun {
        history,
        temperature,
        stderr,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HoldResult {
    /// Ensemble mean of each trajectory's time-averaged axial position.
    pub mean_z: f64,
    pub z_stderr: f64,
    /// Time-averaged radial temperature over the second half of the hold.
    pub temperature: f64,
    pub temperature_stderr: f64,
}

/// Holds a thermal ensemble in the trap for an integer number of axial
/// periods, with optional always-on or gated beams (phase from the
/// schedule). Time averages use the second half of the hold.
pub fn hold(
    g: &TrapGeometry,
    beams: &[LaserBeam],
    temperature: f64,
    n: usize,
    seed: u64,
    periods: usize,
    steps_per_period: usize,
) -> Result<HoldResult> {
    if n == 0 {
        return Err(Error::EmptyEnsemble);
    }
    if periods < 2 || steps_per_period == 0 {
        return Err(invalid("periods", "need at least two periods and one step per period"));
    }
    let ens = init_ensemble(temperature, g, n, seed)?;
    let dt = TAU / g.omega0z / steps_per_period as f64;
    let stepper = Stepper::new(*g, ForceFieldMode::Pseudopotential, dt)?;
    let total = periods * steps_per_period;
    let start = (periods / 2) * steps_per_period;
    let Ensemble { mut states, mut rngs } = ens;
    let per: Vec<(f64, f64)> = states
        .par_iter_mut()
        .zip(rngs.par_iter_mut())
        .map(|(s, rng)| -> Result<(f64, f64)> {
            let zero = Vector3::zeros();
            let mut tally = LaserTally::default();
            let (mut zsum, mut esum) = (0.0, 0.0);
            for j in 0..total {
                stepper.advance(s, &zero)?;
                if !beams.is_empty() {
                    let phase = TAU * ((j + 1) % steps_per_period) as f64 / steps_per_period as f64;
                    apply_beams(beams, s, g.mass, phase, dt, rng, &mut tally)?;
                }
                if j >= start {
                    zsum += s.position.z;
                    esum += radial_energy(g, s)?;
                }
            }
            let m = (total - start) as f64;
            Ok((zsum / m, esum / m))
        })
        .collect::<Result<Vec<_>>>()?;
    let (mean_z, z_stderr) = mean_stderr(&per.iter().map(|p| p.0).collect::<Vec<_>>());
    let (e, e_se) = mean_stderr(&per.iter().map(|p| p.1).collect::<Vec<_>>());
    Ok(HoldResult {
        mean_z,
        z_stderr,
        temperature: e / (2.0 * KB),
        temperature_stderr: e_se / (2.0 * KB),
    })
}

/// `count` beams in the radial plane at equal angles, sharing one setting.
pub fn radial_ring(
    count: usize,
    detuning: f64,
    saturation: f64,
    role: BeamRole,
    gate: GateSpec,
) -> Result<Vec<LaserBeam>> {
    if count == 0 {
        return Err(invalid("beam count", "need at least one beam"));
    }
    (0..count)
        .map(|i| {
            let a = TAU * i as f64 / count as f64;
            LaserBeam::calcium(Vector3::new(a.cos(), a.sin(), 0.0), detuning, saturation, role, gate)
        })
        .collect()
}

/// Axial amplitude of the engine preset (m), the adiabatic-optimal tuning
/// found by [`tune_adiabatic_optimum`].
pub const ENGINE_AMPLITUDE: f64 = 3.0e-4;
pub const RING_BEAMS: usize = 10;
/// Saturation of the velocity-locked damping beam of the engine preset.
pub const LOCK_SATURATION: f64 = 0.015;

impl EnsembleConfig {
    /// Externally switched engine on the default trap: cooling ring red of
    /// resonance in the window around the wide turning point, heating ring
    /// blue of resonance around the narrow one, and a weak beam along −z
    /// resonant with the ion at peak axial speed that holds the amplitude.
    pub fn engine_preset() -> Self {
        Self::engine_preset_for(ENGINE_AMPLITUDE).expect("engine preset is valid")
    }

    pub fn engine_preset_for(amplitude: f64) -> Result<Self> {
        positive("amplitude", amplitude)?;
        let g = TrapGeometry::standard();
        let gamma = crate::reservoir::CA_LINEWIDTH;
        let window = |center| GateSpec::PhaseWindow {
            window_fraction: 0.2,
            phase_center: center,
        };
        let mut beams = radial_ring(RING_BEAMS, -1.5 * gamma, 2.0, BeamRole::Cool, window(0.0))?;
        beams.extend(radial_ring(RING_BEAMS, 0.3 * gamma, 0.5, BeamRole::Heat, window(std::f64::consts::PI))?);
        let k = TAU / crate::reservoir::CA_WAVELENGTH;
        let lock = LaserBeam::calcium(
            -Vector3::z(),
            -k * g.omega0z * amplitude,
            LOCK_SATURATION,
            BeamRole::Dissipation,
            GateSpec::AlwaysOn,
        )?;
        let cfg = Self {
            n_trajectories: 2000,
            seed: 1,
            dt: TAU / g.omega0x / 60.0,
            geometry: g,
            beams,
            mode: DriveMode::ExternalSwitch,
            cycles: 200,
            force_mode: ForceFieldMode::Pseudopotential,
            dissipation: vec![lock],
            initial_temperature: 0.04,
            axial_temperature: 0.04,
            seed_amplitude: amplitude,
            warmup_cycles: 30,
            measure_cycles: 20,
            steady_tolerance: 0.01,
            steady_window: 5,
            trace_stride: 10,
            histogram_bins: 40,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Self-driven engine: a softer axial trap (ω_z = 2×10⁵ s⁻¹), heating
    /// focus on the narrow side and cooling focus on the wide side of the
    /// center, `separation` apart, and a weak counter-propagating molasses
    /// pair along z for damping.
    pub fn self_driven_preset(separation: f64) -> Result<Self> {
        if !(separation >= 0.0 && separation.is_finite()) {
            return Err(invalid("separation", format!("must be finite and >= 0, got {separation}")));
        }
        let mut g = TrapGeometry::standard();
        g.omega0z = 2.0e5;
        let gamma = crate::reservoir::CA_LINEWIDTH;
        let focus = |z| GateSpec::SpatialFocus {
            focus_z: z,
            waist: 50e-6,
        };
        let mut beams = radial_ring(RING_BEAMS, -1.5 * gamma, 2.0, BeamRole::Cool, focus(0.5 * separation))?;
        beams.extend(radial_ring(RING_BEAMS, 0.3 * gamma, 0.5, BeamRole::Heat, focus(-0.5 * separation))?);
        let damping = [1.0, -1.0]
            .iter()
            .map(|s| {
                LaserBeam::calcium(*s * Vector3::z(), -5.0 * gamma, 0.08, BeamRole::Dissipation, GateSpec::AlwaysOn)
            })
            .collect::<Result<Vec<_>>>()?;
        let cfg = Self {
            n_trajectories: 100,
            seed: 1,
            dt: TAU / g.omega0x / 60.0,
            geometry: g,
            beams,
            mode: DriveMode::SelfDriven,
            cycles: 400,
            force_mode: ForceFieldMode::Pseudopotential,
            dissipation: damping,
            initial_temperature: 0.04,
            axial_temperature: 0.04,
            seed_amplitude: 8e-5,
            warmup_cycles: 0,
            measure_cycles: 5,
            steady_tolerance: 0.005,
            steady_window: 20,
            trace_stride: 30,
            histogram_bins: 40,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reduced-fidelity copy: `n` trajectories, coarser output.
    pub fn smoke(mut self, n: usize) -> Self {
        self.n_trajectories = n;
        self.histogram_bins = self.histogram_bins.min(20);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TuningStep {
    pub amplitude: f64,
    /// Realized compression ratio ω_B/ω_A.
    pub compression: f64,
    /// √(T_hot/T_cold) of the realized corner temperatures.
    pub target: f64,
    pub cold_temperature: f64,
    pub hot_temperature: f64,
}

/// u(r) = (√r − 1)/(√r + 1), linear in the turning-point depth of the taper.
fn taper_depth(ratio: f64) -> f64 {
    let s = ratio.sqrt();
    (s - 1.0) / (s + 1.0)
}

/// Adiabatic-optimal amplitude: the compression ratio realized by the axial
/// swing equals √(T_hot/T_cold) of the temperatures the baths reach at that
/// swing. Fixed-point iteration of engine runs built by `make`, starting
/// from `a0`, until the amplitude moves by less than `rel_tol`.
pub fn tune_adiabatic_optimum<F>(make: F, a0: f64, rel_tol: f64, max_iter: usize) -> Result<(f64, Vec<TuningStep>)>
where
    F: Fn(f64) -> Result<EnsembleConfig>,
{
    positive("a0", a0)?;
    positive("rel_tol", rel_tol)?;
    let mut a = a0;
    let mut steps = Vec::new();
    for _ in 0..max_iter {
        let rec = run_engine(&make(a)?)?;
        let c = rec.mean_corners()?;
        let (tc, th) = rec.effective_temperatures()?;
        if !(th > tc && tc > 0.0) {
            return Err(Error::NotAnEngine);
        }
        let step = TuningStep {
            amplitude: a,
            compression: c.omega[1] / c.omega[0],
            target: (th / tc).sqrt(),
            cold_temperature: tc,
            hot_temperature: th,
        };
        log::debug!("tuning: {step:?}");
        steps.push(step);
        let mismatch = taper_depth(step.compression) - taper_depth(step.target);
        // rescale on the first run, then secant on the depth mismatch
        let next = match steps.len() {
            1 => a * taper_depth(step.target) / taper_depth(step.compression),
            k => {
                let p = steps[k - 2];
                let pm = taper_depth(p.compression) - taper_depth(p.target);
                if pm == mismatch {
                    a
                } else {
                    a - mismatch * (a - p.amplitude) / (mismatch - pm)
                }
            }
        };
        let next = next.clamp(0.5 * a, 2.0 * a);
        if ((next - a) / a).abs() < rel_tol {
            return Ok((a, steps));
        }
        a = next;
    }
    Err(Error::NoRoot(format!("amplitude tuning did not settle in {max_iter} runs")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::coth;

    #[test]
    fn steps_per_cycle_is_quantized() {
        let cfg = EnsembleConfig::engine_preset();
        let n = cfg.steps_per_cycle();
        assert_eq!(n % STEP_QUANTUM, 0);
        assert!(cfg.effective_dt() <= cfg.dt);
        assert!((cfg.effective_dt() * n as f64 - cfg.axial_period()).abs() < 1e-20);
        let corners = CORNER_PHASES.map(|p| p * n as f64);
        assert!(corners.iter().all(|c| (c - c.round()).abs() < 1e-9));
    }

    #[test]
    fn mode_temperature_inverts_mean_energy() {
        let w = 6.0e6;
        for t in [1e-4, 0.02, 0.2] {
            let e = 0.5 * HBAR * w * coth(HBAR * w / (2.0 * KB * t));
            assert!((mode_temperature(e, w) - t).abs() < 1e-9 * t);
        }
        assert_eq!(mode_temperature(0.5 * HBAR * w, w), 0.0);
    }

    #[test]
    fn alpha_counts_ground_state_widths() {
        let (m, w) = (crate::units::CA40_MASS, 6.0e5);
        let sigma0 = (HBAR / (2.0 * m * w)).sqrt();
        assert!((coherent_alpha(2.0 * sigma0, m, w) - 1.0).abs() < 1e-12);
        // 300 μm swing is a few thousand widths
        let a = coherent_alpha(3e-4, m, w);
        assert!(a > 1e3 && a < 1e4, "{a}");
    }

    #[test]
    fn taper_depth_inverts_compression() {
        let g = TrapGeometry::standard();
        let z = 1e-4;
        let d = |z: f64| g.r0 + z * g.tan_theta();
        let r = (d(z) / d(-z)).powi(2);
        assert!((taper_depth(r) - z * g.tan_theta() / g.r0).abs() < 1e-14);
    }

    #[test]
    fn histogram_counts_every_point() {
        let pts: Vec<(f64, f64)> = (0..100).map(|i| (i as f64, (i * i) as f64)).collect();
        let h = Histogram2D::build("t".into(), ("a", "b"), &pts, 7);
        assert_eq!(h.total(), 100);
        assert_eq!(h.counts.len(), 49);
        assert_eq!(h.x_range, (0.0, 99.0));
        let flat = Histogram2D::build("f".into(), ("a", "b"), &[(1.0, 1.0); 3], 4);
        assert_eq!(flat.total(), 3);
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: u64 = trajectory_rng(5, 0).random();
        let b: u64 = trajectory_rng(5, 0).random();
        let c: u64 = trajectory_rng(5, 1).random();
        let d: u64 = trajectory_rng(6, 0).random();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
    }

    #[test]
    fn ring_spacing() {
        let r = radial_ring(4, -CA_LW, 1.0, BeamRole::Cool, GateSpec::AlwaysOn).unwrap();
        let sum: Vector3<f64> = r.iter().map(|b| b.direction).sum();
        assert!(sum.norm() < 1e-12);
        assert!(r.iter().all(|b| b.direction.z == 0.0));
        assert!(radial_ring(0, -CA_LW, 1.0, BeamRole::Cool, GateSpec::AlwaysOn).is_err());
    }

    const CA_LW: f64 = crate::reservoir::CA_LINEWIDTH;
}

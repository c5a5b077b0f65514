//! Nonadiabaticity parameter Q* of a frequency ramp.
//!
//! Q* follows from the fundamental solutions X, Y of `ẍ + ω(t)² x = 0` with
//! X(0)=1, Ẋ(0)=0 and Y(0)=0, Ẏ(0)=1, evaluated at the end of the ramp:
//!
//! ```text
//! Q* = [ω_i² (ω_f² Y² + Ẏ²) + (ω_f² X² + Ẋ²)] / (2 ω_i ω_f)
//! ```
//!
//! It equals 1 for infinitely slow ramps and (ω_i² + ω_f²)/(2ω_iω_f) for an
//! instantaneous jump.

use std::f64::consts::TAU;
use std::path::Path;

use crate::error::{invalid, positive, Error, Result};
use crate::integrator::Scheme;

#[derive(Debug, Clone, PartialEq)]
pub enum RampKind {
    Sudden,
    Linear,
    /// `(time, omega)` samples, linearly interpolated.
    Tabulated(Vec<(f64, f64)>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyRamp {
    kind: RampKind,
    omega_i: f64,
    omega_f: f64,
    duration: f64,
}

impl FrequencyRamp {
    pub fn sudden(omega_i: f64, omega_f: f64) -> Result<Self> {
        make_ramp(RampKind::Sudden, omega_i, omega_f, 0.0)
    }

    pub fn linear(omega_i: f64, omega_f: f64, duration: f64) -> Result<Self> {
        make_ramp(RampKind::Linear, omega_i, omega_f, duration)
    }

    /// Ramp taking its endpoints and duration from the samples.
    pub fn tabulated(samples: Vec<(f64, f64)>) -> Result<Self> {
        let (Some(&(_, wi)), Some(&(tf, wf))) = (samples.first(), samples.last()) else {
            return Err(invalid("samples", "need at least two samples"));
        };
        make_ramp(RampKind::Tabulated(samples), wi, wf, tf)
    }

    pub fn kind(&self) -> &RampKind {
        &self.kind
    }

    pub fn omega_i(&self) -> f64 {
        self.omega_i
    }

    pub fn omega_f(&self) -> f64 {
        self.omega_f
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    /// ω(t). A sudden ramp takes ω_f for every t > 0.
    pub fn omega_at(&self, t: f64) -> f64 {
        match &self.kind {
            RampKind::Sudden => {
                if t > 0.0 {
                    self.omega_f
                } else {
                    self.omega_i
                }
            }
            RampKind::Linear => {
                if self.duration == 0.0 {
                    return self.omega_f;
                }
                let s = (t / self.duration).clamp(0.0, 1.0);
                self.omega_i + s * (self.omega_f - self.omega_i)
            }
            RampKind::Tabulated(samples) => interpolate(samples, t),
        }
    }

    /// Largest frequency reached during the ramp.
    pub fn omega_max(&self) -> f64 {
        match &self.kind {
            RampKind::Tabulated(samples) => samples.iter().map(|s| s.1).fold(0.0, f64::max),
            _ => self.omega_i.max(self.omega_f),
        }
    }
}

fn interpolate(samples: &[(f64, f64)], t: f64) -> f64 {
    let last = samples.len() - 1;
    if t <= samples[0].0 {
        return samples[0].1;
    }
    if t >= samples[last].0 {
        return samples[last].1;
    }
    let idx = samples.partition_point(|s| s.0 <= t);
    let (t0, w0) = samples[idx - 1];
    let (t1, w1) = samples[idx];
    w0 + (w1 - w0) * (t - t0) / (t1 - t0)
}

pub fn make_ramp(kind: RampKind, omega_i: f64, omega_f: f64, duration: f64) -> Result<FrequencyRamp> {
    positive("omega_i", omega_i)?;
    positive("omega_f", omega_f)?;
    if !duration.is_finite() || duration < 0.0 {
        return Err(invalid("duration", format!("must be >= 0, got {duration}")));
    }
    match &kind {
        RampKind::Sudden => {
            if duration != 0.0 {
                return Err(invalid("duration", "a sudden ramp has zero duration"));
            }
        }
        RampKind::Linear => {
            if duration == 0.0 {
                return Err(invalid("duration", "use the sudden kind for zero duration"));
            }
        }
        RampKind::Tabulated(samples) => {
            if samples.len() < 2 {
                return Err(invalid("samples", "need at least two samples"));
            }
            if samples.windows(2).any(|w| w[1].0 <= w[0].0) {
                return Err(invalid("samples", "times must be strictly increasing"));
            }
            if samples.iter().any(|s| !(s.1 > 0.0 && s.1.is_finite())) {
                return Err(invalid("samples", "frequencies must be positive"));
            }
            let (t0, w0) = samples[0];
            let (t1, w1) = samples[samples.len() - 1];
            let tol = 1e-12 * duration.max(1e-300);
            if t0.abs() > tol || (t1 - duration).abs() > tol {
                return Err(invalid("samples", format!("samples must span [0, {duration}]")));
            }
            if (w0 - omega_i).abs() > 1e-12 * omega_i || (w1 - omega_f).abs() > 1e-12 * omega_f {
                return Err(invalid("samples", "endpoint frequencies disagree with omega_i/omega_f"));
            }
        }
    }
    Ok(FrequencyRamp {
        kind,
        omega_i,
        omega_f,
        duration,
    })
}

/// Reads a two-column `time omega` table (SI units). Blank lines and `#`
/// comments are skipped; columns may be separated by whitespace or commas.
pub fn parse_tabulated(text: &str) -> Result<Vec<(f64, f64)>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .collect();
        if cols.len() != 2 {
            return Err(Error::Parse(format!("line {}: expected two columns", lineno + 1)));
        }
        let parse = |s: &str| {
            s.parse::<f64>()
                .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))
        };
        out.push((parse(cols[0])?, parse(cols[1])?));
    }
    Ok(out)
}

pub fn load_tabulated(path: impl AsRef<Path>) -> Result<FrequencyRamp> {
    let text = std::fs::read_to_string(path.as_ref())
        .map_err(|e| Error::Parse(format!("{}: {e}", path.as_ref().display())))?;
    FrequencyRamp::tabulated(parse_tabulated(&text)?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FundamentalSolution {
    pub x: f64,
    pub xdot: f64,
    pub y: f64,
    pub ydot: f64,
    omega_i: f64,
    omega_f: f64,
}

impl FundamentalSolution {
    pub fn wronskian(&self) -> f64 {
        self.x * self.ydot - self.xdot * self.y
    }
}

/// Wronskian tolerance enforced at the final time.
pub const WRONSKIAN_TOL: f64 = 1e-9;

/// Minimum number of steps per period of the fastest frequency.
pub const MIN_STEPS_PER_PERIOD: f64 = 50.0;

/// Step rule for the ramp ODE.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RampScheme {
    /// Exact harmonic rotation at the mid-step frequency. Second order,
    /// symplectic, and exact when ω is constant.
    #[default]
    MidpointRotation,
    /// Drift-kick splitting with the frequency sampled at the kick time.
    Splitting(Scheme),
}

pub fn solve_fundamental(ramp: &FrequencyRamp, dt: f64) -> Result<FundamentalSolution> {
    solve_fundamental_with(ramp, dt, RampScheme::default(), |_, _| {})
}

/// Integrates both fundamental solutions, calling `observe(step, W)` with
/// the running Wronskian after every step.
pub fn solve_fundamental_with(
    ramp: &FrequencyRamp,
    dt: f64,
    scheme: RampScheme,
    mut observe: impl FnMut(usize, f64),
) -> Result<FundamentalSolution> {
    positive("dt", dt)?;
    let limit = TAU / ramp.omega_max() / MIN_STEPS_PER_PERIOD;
    if dt > limit {
        return Err(Error::StepTooLarge { dt, limit });
    }
    let (mut x, mut xd, mut y, mut yd) = (1.0_f64, 0.0_f64, 0.0_f64, 1.0_f64);
    let steps = if ramp.duration == 0.0 {
        0
    } else {
        (ramp.duration / dt).ceil() as usize
    };
    let h = if steps == 0 { 0.0 } else { ramp.duration / steps as f64 };
    let omega = |t: f64| -> Result<f64> {
        let w = ramp.omega_at(t);
        if w > 0.0 {
            Ok(w)
        } else {
            Err(invalid("omega", format!("non-positive frequency {w} at t={t}")))
        }
    };
    for n in 0..steps {
        let t0 = n as f64 * h;
        match scheme {
            RampScheme::MidpointRotation => {
                let w = omega(t0 + 0.5 * h)?;
                let (s, c) = (w * h).sin_cos();
                (x, xd) = (c * x + s / w * xd, c * xd - w * s * x);
                (y, yd) = (c * y + s / w * yd, c * yd - w * s * y);
            }
            RampScheme::Splitting(split) => {
                let mut t = t0;
                for &(drift, kick) in split.stages() {
                    x += drift * h * xd;
                    y += drift * h * yd;
                    t += drift * h;
                    if kick != 0.0 {
                        let w2 = omega(t)?.powi(2);
                        xd -= kick * h * w2 * x;
                        yd -= kick * h * w2 * y;
                    }
                }
            }
        }
        observe(n, x * yd - xd * y);
    }
    let sol = FundamentalSolution {
        x,
        xdot: xd,
        y,
        ydot: yd,
        omega_i: ramp.omega_i,
        omega_f: ramp.omega_f,
    };
    let drift = (sol.wronskian() - 1.0).abs();
    if drift > WRONSKIAN_TOL {
        return Err(invalid("dt", format!("Wronskian drifted by {drift:e}")));
    }
    Ok(sol)
}

pub fn qstar(sol: &FundamentalSolution, omega_i: f64, omega_f: f64) -> Result<f64> {
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(b.abs());
    if !close(sol.omega_i, omega_i) || !close(sol.omega_f, omega_f) {
        return Err(Error::FrequencyMismatch);
    }
    let wf2 = omega_f * omega_f;
    let num = omega_i * omega_i * (wf2 * sol.y * sol.y + sol.ydot * sol.ydot)
        + (wf2 * sol.x * sol.x + sol.xdot * sol.xdot);
    Ok(num / (2.0 * omega_i * omega_f))
}

/// Solves the ramp and returns its Q*.
pub fn ramp_qstar(ramp: &FrequencyRamp, dt: f64) -> Result<f64> {
    let sol = solve_fundamental(ramp, dt)?;
    qstar(&sol, ramp.omega_i, ramp.omega_f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn sudden_ramp_leaves_identity() {
        let ramp = FrequencyRamp::sudden(1.0, 2.0).unwrap();
        let sol = solve_fundamental(&ramp, 1e-3).unwrap();
        assert_eq!((sol.x, sol.xdot, sol.y, sol.ydot), (1.0, 0.0, 0.0, 1.0));
        assert_eq!(qstar(&sol, 1.0, 2.0).unwrap(), 1.25);
    }

    #[test]
    fn constant_frequency_is_a_rotation() {
        let w = 1.7;
        let t = 10.0;
        let ramp = FrequencyRamp::linear(w, w, t).unwrap();
        let sol = solve_fundamental(&ramp, 1e-3).unwrap();
        assert!((sol.x - (w * t).cos()).abs() < 1e-6);
        assert!((sol.xdot + w * (w * t).sin()).abs() < 1e-6 * w);
        let q = qstar(&sol, w, w).unwrap();
        assert!((q - 1.0).abs() < 1e-9, "q = {q}");
    }

    #[test]
    fn slow_linear_ramp_is_adiabatic() {
        let ramp = FrequencyRamp::linear(1.0, 2.0, 500.0).unwrap();
        let q = ramp_qstar(&ramp, 2e-3).unwrap();
        assert!((q - 1.0).abs() < 1e-3, "q = {q}");
    }

    #[test]
    fn wronskian_conserved_along_trajectory() {
        let ramp = FrequencyRamp::linear(1.0, 2.0, 200.0).unwrap();
        let mut worst = 0.0_f64;
        let sol = solve_fundamental_with(&ramp, 1e-2, RampScheme::default(), |n, w| {
            if n % 100 == 0 {
                worst = worst.max((w - 1.0).abs());
            }
        })
        .unwrap();
        assert!(worst <= 1e-9);
        assert!((sol.wronskian() - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn halving_dt_converges() {
        let ramp = FrequencyRamp::linear(1.0, 2.0, 20.0).unwrap();
        let q1 = ramp_qstar(&ramp, 1e-3).unwrap();
        let q2 = ramp_qstar(&ramp, 5e-4).unwrap();
        assert!((q1 - q2).abs() / q2 <= 1e-6, "{q1} vs {q2}");
    }

    #[test]
    fn ramp_construction() {
        let ramp = make_ramp(RampKind::Linear, 1.0, 2.0, 10.0).unwrap();
        assert_eq!(ramp.omega_at(5.0), 1.5);
        let sudden = make_ramp(RampKind::Sudden, 1.0, 2.0, 0.0).unwrap();
        assert_eq!(sudden.omega_at(0.0), 1.0);
        assert_eq!(sudden.omega_at(1e-300), 2.0);
        assert!(make_ramp(RampKind::Sudden, 1.0, 2.0, 1.0).is_err());
        assert!(make_ramp(RampKind::Linear, -1.0, 2.0, 1.0).is_err());

        let samples: Vec<(f64, f64)> = (0..=100)
            .map(|i| {
                let t = i as f64 * 0.1;
                (t, 1.5 + 0.5 * ((t - 5.0) / 1.5).tanh() / (5.0f64 / 1.5).tanh())
            })
            .collect();
        let tab = FrequencyRamp::tabulated(samples.clone()).unwrap();
        assert!((tab.omega_at(0.0) - 1.0).abs() < 1e-12);
        assert!((tab.omega_at(10.0) - 2.0).abs() < 1e-12);
        assert!((tab.duration() - 10.0).abs() < 1e-12);
        let bad = make_ramp(RampKind::Tabulated(samples), 1.0, 2.0, 12.0);
        assert!(bad.is_err());
    }

    #[test]
    fn tabulated_text_round_trip() {
        let text = "# t omega\n0 1.0\n1.0, 1.5\n2.0\t2.0\n";
        let ramp = FrequencyRamp::tabulated(parse_tabulated(text).unwrap()).unwrap();
        assert_eq!(ramp.omega_at(0.5), 1.25);
        assert!(parse_tabulated("0 1 2\n").is_err());
    }

    #[test]
    fn mismatched_frequencies_rejected() {
        let ramp = FrequencyRamp::linear(1.0, 2.0, 1.0).unwrap();
        let sol = solve_fundamental(&ramp, 1e-3).unwrap();
        assert_eq!(qstar(&sol, 1.0, 3.0), Err(Error::FrequencyMismatch));
    }

    #[test]
    fn coarse_step_rejected() {
        let ramp = FrequencyRamp::linear(1.0, 2.0, 1.0).unwrap();
        assert!(matches!(solve_fundamental(&ramp, 0.1), Err(Error::StepTooLarge { .. })));
    }

    #[test]
    fn qstar_relaxes_from_sudden_toward_adiabatic() {
        let durations = [0.01, 0.1, 0.3, 1.0, 3.0, 10.0, 30.0, 100.0, 500.0];
        let qs: Vec<f64> = durations
            .iter()
            .map(|&d| ramp_qstar(&FrequencyRamp::linear(1.0, 2.0, d).unwrap(), 1e-3_f64.min(d / 20.0)).unwrap())
            .collect();
        assert!((qs[0] - 1.25).abs() < 1e-3, "{qs:?}");
        for w in qs.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "{qs:?}");
        }
        assert!((qs[qs.len() - 1] - 1.0).abs() < 1e-3);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn qstar_at_least_one(wi in 0.5f64..2.0, wf in 0.5f64..2.0, dur in 0.05f64..20.0, bump in -0.3f64..0.3) {
            let lin = FrequencyRamp::linear(wi, wf, dur).unwrap();
            prop_assert!(ramp_qstar(&lin, 2e-3).unwrap() >= 1.0 - 1e-9);
            let mid = 0.5 * (wi + wf) * (1.0 + bump);
            let tab = FrequencyRamp::tabulated(vec![(0.0, wi), (0.5 * dur, mid), (dur, wf)]).unwrap();
            prop_assert!(ramp_qstar(&tab, 2e-3).unwrap() >= 1.0 - 1e-9);
        }
    }
}

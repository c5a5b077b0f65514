//! Exact Otto-cycle quantities for a parametric harmonic oscillator coupled
//! alternately to two heat baths.
//!
//! Corners of the cycle: A (ω₁, cold bath), B (ω₂ after compression),
//! C (ω₂, hot bath), D (ω₁ after expansion). Work and heat are counted as
//! energy delivered *to* the oscillator, so an engine has `w1 + w3 < 0`.

use crate::error::{invalid, positive, positive_or_inf, Error, Result};
use crate::units::{coth, UnitSystem};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CycleParams {
    /// Angular frequency at A and D (rad/s).
    pub omega1: f64,
    /// Angular frequency at B and C (rad/s).
    pub omega2: f64,
    /// Inverse temperature of the cold bath (1/J).
    pub beta1: f64,
    /// Inverse temperature of the hot bath (1/J).
    pub beta2: f64,
    pub units: UnitSystem,
}

impl CycleParams {
    pub fn new(omega1: f64, omega2: f64, beta1: f64, beta2: f64, units: UnitSystem) -> Result<Self> {
        let p = Self {
            omega1,
            omega2,
            beta1,
            beta2,
            units,
        };
        p.validate()?;
        Ok(p)
    }

    /// Convenience constructor with ħ = k_B = 1.
    pub fn natural(omega1: f64, omega2: f64, beta1: f64, beta2: f64) -> Result<Self> {
        Self::new(omega1, omega2, beta1, beta2, UnitSystem::NATURAL)
    }

    pub fn validate(&self) -> Result<()> {
        positive("omega1", self.omega1)?;
        positive("omega2", self.omega2)?;
        positive_or_inf("beta1", self.beta1)?;
        positive_or_inf("beta2", self.beta2)?;
        self.units.validate()
    }

    pub fn with_omega2(&self, omega2: f64) -> Self {
        Self { omega2, ..*self }
    }

    /// coth(β₁ħω₁/2)
    pub fn coth_cold(&self) -> f64 {
        coth(0.5 * self.beta1 * self.units.hbar * self.omega1)
    }

    /// coth(β₂ħω₂/2)
    pub fn coth_hot(&self) -> f64 {
        coth(0.5 * self.beta2 * self.units.hbar * self.omega2)
    }
}

/// Husimi adiabaticity parameters of the compression (`q1`) and expansion
/// (`q2`) strokes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdiabaticityPair {
    pub q1: f64,
    pub q2: f64,
}

impl AdiabaticityPair {
    pub const ADIABATIC: AdiabaticityPair = AdiabaticityPair { q1: 1.0, q2: 1.0 };

    /// Round-off slack below 1 accepted for numerically computed values.
    const SLACK: f64 = 1e-9;

    pub fn new(q1: f64, q2: f64) -> Result<Self> {
        let p = Self { q1, q2 };
        p.validate()?;
        Ok(p)
    }

    /// Both strokes performed as instantaneous frequency jumps.
    pub fn sudden(omega1: f64, omega2: f64) -> Self {
        let q = (omega1 * omega1 + omega2 * omega2) / (2.0 * omega1 * omega2);
        Self { q1: q, q2: q }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, q) in [("q1", self.q1), ("q2", self.q2)] {
            if !q.is_finite() || q < 1.0 - Self::SLACK {
                return Err(invalid(name, format!("adiabaticity parameter must be >= 1, got {q}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StrokeDurations {
    pub tau1: f64,
    pub tau2: f64,
    pub tau3: f64,
    pub tau4: f64,
}

impl StrokeDurations {
    pub fn total(&self) -> f64 {
        self.tau1 + self.tau2 + self.tau3 + self.tau4
    }
}

/// Mean oscillator energy at the four corners.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CycleEnergies {
    pub e_a: f64,
    pub e_b: f64,
    pub e_c: f64,
    pub e_d: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CycleResult {
    pub w1: f64,
    pub w3: f64,
    pub q2hot: f64,
    pub q4cold: f64,
    /// `-(w1 + w3) / q2hot`, present when heat is absorbed from the hot bath.
    pub eta: Option<f64>,
    pub power: Option<f64>,
}

impl CycleResult {
    /// Work delivered by the engine per cycle.
    pub fn output_work(&self) -> f64 {
        -(self.w1 + self.w3)
    }

    /// Heat flows hot -> oscillator -> cold.
    pub fn is_engine(&self) -> bool {
        self.q2hot >= 0.0 && self.q4cold <= 0.0
    }

    pub fn produces_work(&self) -> bool {
        self.is_engine() && self.output_work() >= 0.0
    }

    /// Closure residual of the first law, `w1 + w3 + q2hot + q4cold`.
    pub fn closure(&self) -> f64 {
        self.w1 + self.w3 + self.q2hot + self.q4cold
    }
}

pub fn stage_energies(p: &CycleParams, q: &AdiabaticityPair) -> Result<CycleEnergies> {
    p.validate()?;
    q.validate()?;
    let hbar = p.units.hbar;
    let c1 = p.coth_cold();
    let c2 = p.coth_hot();
    Ok(CycleEnergies {
        e_a: 0.5 * hbar * p.omega1 * c1,
        e_b: 0.5 * hbar * p.omega2 * q.q1 * c1,
        e_c: 0.5 * hbar * p.omega2 * c2,
        e_d: 0.5 * hbar * p.omega1 * q.q2 * c2,
    })
}

/// Work and heat of each stroke from corner energies.
///
/// Shared by the analytic path and by the Monte Carlo measurement, which
/// feeds measured ensemble energies through the same differences.
pub fn quantities_from_energies(e: &CycleEnergies) -> CycleResult {
    let w1 = e.e_b - e.e_a;
    let q2hot = e.e_c - e.e_b;
    let w3 = e.e_d - e.e_c;
    let q4cold = e.e_a - e.e_d;
    let eta = (q2hot > 0.0).then(|| -(w1 + w3) / q2hot);
    CycleResult {
        w1,
        w3,
        q2hot,
        q4cold,
        eta,
        power: None,
    }
}

pub fn stroke_quantities(p: &CycleParams, q: &AdiabaticityPair) -> Result<CycleResult> {
    Ok(quantities_from_energies(&stage_energies(p, q)?))
}

/// Bounds on the adiabaticity parameters for heat engine operation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EngineWindow {
    pub q1_max: f64,
    pub q2_min: f64,
    /// Scaled coth gap: c₁ − c₂ = e^{−2m}·gap.
    gap: f64,
    m: f64,
    c1: f64,
    c2: f64,
}

impl EngineWindow {
    /// `Q₁c₁ ≤ c₂` and `Q₂c₂ ≥ c₁`, tested on the scaled gap so the answer
    /// stays right where both coth factors round to 1.
    pub fn is_engine(&self, q: &AdiabaticityPair) -> bool {
        let (num, denom) = self.scaled_terms(q);
        denom <= 0.0 && num <= 0.0
    }

    /// `(c₁ − Q₂c₂, Q₁c₁ − c₂)`, both divided by e^{−2m} where possible.
    fn scaled_terms(&self, q: &AdiabaticityPair) -> (f64, f64) {
        let (x1, x2) = ((q.q1 - 1.0) * self.c1, (q.q2 - 1.0) * self.c2);
        let up = (2.0 * self.m).exp();
        let lift = |x: f64| if x == 0.0 { 0.0 } else { x * up };
        if (x1 == 0.0 && x2 == 0.0) || up.is_finite() {
            (self.gap - lift(x2), self.gap + lift(x1))
        } else {
            let gap = self.gap * (-2.0 * self.m).exp();
            (gap - x2, gap + x1)
        }
    }
}

pub fn engine_window(p: &CycleParams) -> Result<EngineWindow> {
    p.validate()?;
    let c1 = p.coth_cold();
    let c2 = p.coth_hot();
    let a = 0.5 * p.beta1 * p.units.hbar * p.omega1;
    let b = 0.5 * p.beta2 * p.units.hbar * p.omega2;
    let (gap, m) = scaled_coth_gap(a, b);
    Ok(EngineWindow {
        q1_max: c2 / c1,
        q2_min: c1 / c2,
        gap,
        m,
        c1,
        c2,
    })
}

/// Efficiency `1 - (ω₁/ω₂)(c₁ - Q₂c₂)/(Q₁c₁ - c₂)` with `cᵢ` the bath coth
/// factors. Defined only inside the engine window with nonzero heat intake.
pub fn efficiency(p: &CycleParams, q: &AdiabaticityPair) -> Result<f64> {
    q.validate()?;
    let window = engine_window(p)?;
    if !window.is_engine(q) {
        return Err(Error::NotAnEngine);
    }
    let (num, denom) = window.scaled_terms(q);
    if !(denom < 0.0) {
        // zero heat intake on the window boundary
        return Err(Error::NotAnEngine);
    }
    Ok(1.0 - (p.omega1 / p.omega2) * num / denom)
}

/// `(g, m)` with coth a − coth b = e^{−2m}·g, m = min(a, b), computed
/// without cancellation.
fn scaled_coth_gap(a: f64, b: f64) -> (f64, f64) {
    let m = a.min(b);
    let diff = if a >= b {
        (-2.0 * (a - b)).exp_m1()
    } else {
        -(-2.0 * (b - a)).exp_m1()
    };
    (2.0 * diff / ((-2.0 * a).exp_m1() * (-2.0 * b).exp_m1()), m)
}

/// Mean output power `-(w1 + w3) / Στ`.
pub fn power(r: &CycleResult, d: &StrokeDurations) -> Result<f64> {
    for (name, tau) in [("tau1", d.tau1), ("tau2", d.tau2), ("tau3", d.tau3), ("tau4", d.tau4)] {
        if !tau.is_finite() || tau < 0.0 {
            return Err(invalid(name, format!("stroke duration must be >= 0, got {tau}")));
        }
    }
    let total = d.total();
    if total <= 0.0 {
        return Err(Error::ZeroDuration);
    }
    Ok(r.output_work() / total)
}

/// Attaches the power for the given stroke durations.
pub fn with_power(mut r: CycleResult, d: &StrokeDurations) -> Result<CycleResult> {
    r.power = Some(power(&r, d)?);
    Ok(r)
}

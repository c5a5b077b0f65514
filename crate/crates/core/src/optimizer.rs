//! Efficiency at maximum power: analytic optima in the four limiting regimes
//! and a numeric maximizer over the compressed frequency ω₂.

use rayon::prelude::*;

use crate::error::{invalid, positive, Error, Result};
use crate::thermo::{efficiency, engine_window, stroke_quantities, AdiabaticityPair, CycleParams};
use crate::units::UnitSystem;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Speed {
    Adiabatic,
    Sudden,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TemperatureRegime {
    /// β_i ħ ω_j ≪ 1.
    ClassicalHighT,
    /// β₁ ħ ω₁ ≫ 1.
    QuantumLowT,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Regime {
    pub speed: Speed,
    pub temperature: TemperatureRegime,
}

impl Regime {
    pub const fn new(speed: Speed, temperature: TemperatureRegime) -> Self {
        Self { speed, temperature }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimumResult {
    pub omega2_opt: f64,
    pub eta_at_max_power: f64,
    /// Output power at the optimum; only the numeric path reports it.
    pub power_at_opt: Option<f64>,
}

/// Largest β_i ħ ω_j; the high-temperature expressions need this ≪ 1.
pub fn high_temperature_parameter(p: &CycleParams) -> f64 {
    let hbar = p.units.hbar;
    let b = p.beta1.max(p.beta2);
    let w = p.omega1.max(p.omega2);
    b * hbar * w
}

/// Total work `<W1> + <W3>` done on the oscillator in the high-temperature
/// limit. The engine delivers the negative of this.
pub fn total_work_high_t(p: &CycleParams, speed: Speed) -> Result<f64> {
    p.validate()?;
    let x = high_temperature_parameter(p);
    if x > 0.1 {
        log::warn!("high-temperature work used outside its validity (beta*hbar*omega = {x:.3})");
    }
    let r = p.omega2 / p.omega1;
    Ok(match speed {
        Speed::Adiabatic => (r - 1.0) / p.beta1 + (1.0 / r - 1.0) / p.beta2,
        Speed::Sudden => (r * r - 1.0) / (2.0 * p.beta1) + (1.0 / (r * r) - 1.0) / (2.0 * p.beta2),
    })
}

/// Closed-form optimum ω₂ and efficiency at maximum power.
pub fn analytic_optimum(p: &CycleParams, regime: Regime) -> Result<OptimumResult> {
    p.validate()?;
    if p.beta1 <= p.beta2 {
        return Err(invalid("beta1", "cold bath must be colder than the hot bath (beta1 > beta2)"));
    }
    let w1 = p.omega1;
    let (omega2_opt, x) = match regime.temperature {
        TemperatureRegime::ClassicalHighT => {
            let ratio = p.beta1 / p.beta2;
            let w2 = match regime.speed {
                Speed::Adiabatic => w1 * ratio.sqrt(),
                Speed::Sudden => w1 * ratio.powf(0.25),
            };
            (w2, (p.beta2 / p.beta1).sqrt())
        }
        TemperatureRegime::QuantumLowT => {
            let hb2 = p.units.hbar * p.beta2;
            let w2 = match regime.speed {
                Speed::Adiabatic => (2.0 * w1 / hb2).sqrt(),
                Speed::Sudden => (2.0 * w1.powi(3) / hb2).powf(0.25),
            };
            (w2, (hb2 * w1 / 2.0).sqrt())
        }
    };
    let eta = match regime.speed {
        Speed::Adiabatic => 1.0 - x,
        Speed::Sudden => (1.0 - x) / (2.0 + x),
    };
    Ok(OptimumResult {
        omega2_opt,
        eta_at_max_power: eta,
        power_at_opt: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchInterval {
    pub lo: f64,
    pub hi: f64,
}

impl SearchInterval {
    /// `[ω₁, 20 ω₁]`.
    pub fn default_for(omega1: f64) -> Self {
        Self {
            lo: omega1,
            hi: 20.0 * omega1,
        }
    }
}

/// Fixed data of a power maximization over ω₂.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerProblem {
    pub omega1: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub units: UnitSystem,
    /// Στ, held fixed across candidate ω₂.
    pub cycle_time: f64,
}

/// Points of the coarse grid preceding golden-section refinement.
pub const GRID_POINTS: usize = 400;
/// Relative tolerance of the refined ω₂.
pub const OMEGA_REL_TOL: f64 = 1e-6;

impl PowerProblem {
    pub fn new(omega1: f64, beta1: f64, beta2: f64, units: UnitSystem) -> Self {
        Self {
            omega1,
            beta1,
            beta2,
            units,
            cycle_time: 1.0,
        }
    }

    fn params(&self, omega2: f64) -> Result<CycleParams> {
        CycleParams::new(self.omega1, omega2, self.beta1, self.beta2, self.units)
    }

    /// Output power at ω₂, or `None` outside the engine window.
    pub fn power_at<F>(&self, omega2: f64, q_of_omega2: &F) -> Result<Option<f64>>
    where
        F: Fn(f64) -> Result<AdiabaticityPair>,
    {
        let p = self.params(omega2)?;
        let q = q_of_omega2(omega2)?;
        if !engine_window(&p)?.is_engine(&q) {
            return Ok(None);
        }
        let r = stroke_quantities(&p, &q)?;
        Ok(Some(r.output_work() / self.cycle_time))
    }

    /// Coarse log-spaced grid, then golden-section refinement around the
    /// best grid point.
    pub fn maximize<F>(&self, q_of_omega2: F, interval: SearchInterval) -> Result<OptimumResult>
    where
        F: Fn(f64) -> Result<AdiabaticityPair>,
    {
        positive("omega1", self.omega1)?;
        positive("cycle_time", self.cycle_time)?;
        positive("search lo", interval.lo)?;
        if !(interval.hi > interval.lo) {
            return Err(invalid("search interval", "hi must exceed lo"));
        }
        let objective = |w: f64| -> Result<f64> {
            Ok(self.power_at(w, &q_of_omega2)?.unwrap_or(f64::NEG_INFINITY))
        };
        let ln_lo = interval.lo.ln();
        let step = (interval.hi.ln() - ln_lo) / (GRID_POINTS - 1) as f64;
        let grid: Vec<f64> = (0..GRID_POINTS).map(|i| (ln_lo + step * i as f64).exp()).collect();
        let mut best = None::<(usize, f64)>;
        for (i, &w) in grid.iter().enumerate() {
            let f = objective(w)?;
            if f.is_finite() && best.is_none_or(|(_, fb)| f > fb) {
                best = Some((i, f));
            }
        }
        let (ib, _) = best.ok_or(Error::NoEnginePoint)?;
        let a = grid[ib.saturating_sub(1)];
        let b = grid[(ib + 1).min(GRID_POINTS - 1)];
        let omega2_opt = golden_section_max(|w| objective(w), a, b, OMEGA_REL_TOL)?;
        let p = self.params(omega2_opt)?;
        let q = q_of_omega2(omega2_opt)?;
        let eta = efficiency(&p, &q)?;
        let r = stroke_quantities(&p, &q)?;
        Ok(OptimumResult {
            omega2_opt,
            eta_at_max_power: eta,
            power_at_opt: Some(r.output_work() / self.cycle_time),
        })
    }
}

/// Maximizes power over ω₂ with `q_of_omega2` supplying (Q*₁, Q*₂).
pub fn numeric_max_power<F>(
    problem: &PowerProblem,
    q_of_omega2: F,
    interval: SearchInterval,
) -> Result<OptimumResult>
where
    F: Fn(f64) -> Result<AdiabaticityPair>,
{
    problem.maximize(q_of_omega2, interval)
}

/// (Q*₁, Q*₂) for a stroke speed, independent of durations.
pub fn q_for_speed(omega1: f64, speed: Speed) -> impl Fn(f64) -> Result<AdiabaticityPair> {
    move |omega2| {
        Ok(match speed {
            Speed::Adiabatic => AdiabaticityPair::ADIABATIC,
            Speed::Sudden => AdiabaticityPair::sudden(omega1, omega2),
        })
    }
}

/// Golden-section search for the maximum of a unimodal `f` on `[a, b]`,
/// stopping when the bracket is below `rel_tol` relative to its midpoint.
pub fn golden_section_max<F>(mut f: F, mut a: f64, mut b: f64, rel_tol: f64) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    if !(b > a) {
        return Ok(a);
    }
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    for _ in 0..500 {
        if (b - a) <= rel_tol * 0.5 * (a + b).abs() {
            break;
        }
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d)?;
        }
    }
    Ok(0.5 * (a + b))
}

/// One row of the efficiency-versus-temperature-ratio table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveRow {
    /// β₂/β₁ = T_cold / T_hot.
    pub ratio: f64,
    pub carnot: f64,
    pub curzon_ahlborn: f64,
    pub sudden: f64,
    /// Numeric η at maximum power for the requested regime; `None` at ratio 1.
    pub numeric: Option<f64>,
    pub numeric_omega_ratio: Option<f64>,
}

pub const CURVE_COLUMNS: [&str; 6] = [
    "ratio",
    "carnot",
    "curzon_ahlborn",
    "sudden",
    "numeric_eta",
    "numeric_omega2_over_omega1",
];

/// β₁ħω₁ used for the numeric optima in the classical regime.
pub const CLASSICAL_BETA_HBAR_OMEGA: f64 = 1e-3;
/// β₁ħω₁ used for the numeric optima in the quantum regime.
pub const QUANTUM_BETA_HBAR_OMEGA: f64 = 50.0;

fn closed_form_rows(ratio: f64) -> (f64, f64, f64) {
    let s = ratio.sqrt();
    (1.0 - ratio, 1.0 - s, (1.0 - s) / (2.0 + s))
}

/// Carnot, Curzon-Ahlborn and sudden-switch curves plus numeric optima for
/// each temperature ratio. Rows are computed in parallel but returned in
/// input order.
pub fn efficiency_curve(beta_ratios: &[f64], regime: Regime) -> Result<Vec<CurveRow>> {
    if beta_ratios.is_empty() {
        return Err(invalid("ratios", "need at least one temperature ratio"));
    }
    for &r in beta_ratios {
        if !(r > 0.0 && r <= 1.0) {
            return Err(invalid("ratios", format!("ratio must lie in (0, 1], got {r}")));
        }
    }
    beta_ratios
        .par_iter()
        .map(|&ratio| {
            let (carnot, ca, ss) = closed_form_rows(ratio);
            if ratio >= 1.0 {
                return Ok(CurveRow {
                    ratio,
                    carnot,
                    curzon_ahlborn: ca,
                    sudden: ss,
                    numeric: None,
                    numeric_omega_ratio: None,
                });
            }
            let beta1 = match regime.temperature {
                TemperatureRegime::ClassicalHighT => CLASSICAL_BETA_HBAR_OMEGA,
                TemperatureRegime::QuantumLowT => QUANTUM_BETA_HBAR_OMEGA,
            };
            let problem = PowerProblem::new(1.0, beta1, beta1 * ratio, UnitSystem::NATURAL);
            let hi = (4.0 / ratio.sqrt()).max(20.0);
            let opt = problem.maximize(q_for_speed(1.0, regime.speed), SearchInterval { lo: 1.0, hi })?;
            Ok(CurveRow {
                ratio,
                carnot,
                curzon_ahlborn: ca,
                sudden: ss,
                numeric: Some(opt.eta_at_max_power),
                numeric_omega_ratio: Some(opt.omega2_opt),
            })
        })
        .collect()
}

/// `0.10, 0.15, ..., 1.00`.
pub fn default_ratios() -> Vec<f64> {
    (0..19).map(|i| 0.1 + 0.05 * i as f64).map(|r: f64| (r * 100.0).round() / 100.0).collect()
}

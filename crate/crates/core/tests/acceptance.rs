//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Each check returns a short measurement report.

use std::f64::consts::TAU;
use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use otto_core::engine::{
    free_space_run, hold, run_engine, run_self_driven, thermometry, tune_adiabatic_optimum, EnsembleConfig,
    ENGINE_AMPLITUDE,
};
use otto_core::husimi::{qstar, solve_fundamental, FrequencyRamp, WRONSKIAN_TOL};
use otto_core::optimizer::{analytic_optimum, q_for_speed, PowerProblem, Regime, SearchInterval, Speed, TemperatureRegime};
use otto_core::output::{run_summary, write_run_record};
use otto_core::reservoir::{doppler_limit, three_axis_molasses, CA_LINEWIDTH};
use otto_core::thermo::{efficiency, engine_window, AdiabaticityPair, CycleParams};
use otto_core::trap::{
    calibrate_u0, equilibrium_shift, measure_secular_frequency, micromotion_matched_velocity, pseudo_force,
    pseudopotential, total_energy, ForceFieldMode, IonState, Stepper, TrapGeometry,
};
use otto_core::units::CA40_MASS;
use otto_core::UnitSystem;

type Check = Result<String, String>;

fn ensure(ok: bool, msg: String) -> Check {
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn fail<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

/// 1. Sudden switch ω: 1 → 2.
fn sudden_qstar() -> Check {
    let ramp = FrequencyRamp::sudden(1.0, 2.0).map_err(fail)?;
    let sol = solve_fundamental(&ramp, 1e-3).map_err(fail)?;
    let q = qstar(&sol, 1.0, 2.0).map_err(fail)?;
    ensure((q - 1.25).abs() <= 1e-12, format!("Q* = {q:.15}"))
}

/// 2. Slow linear ramp.
fn adiabatic_qstar() -> Check {
    let ramp = FrequencyRamp::linear(1.0, 2.0, 500.0).map_err(fail)?;
    let sol = solve_fundamental(&ramp, TAU / 2.0 / 200.0).map_err(fail)?;
    let q = qstar(&sol, 1.0, 2.0).map_err(fail)?;
    let w = (sol.wronskian() - 1.0).abs();
    ensure(
        (q - 1.0).abs() <= 1e-3 && w <= 1e-9 && WRONSKIAN_TOL <= 1e-9,
        format!("|Q*-1| = {:.3e}, |W-1| = {w:.1e}", (q - 1.0).abs()),
    )
}

/// 3. η = 1 − ω₁/ω₂ for adiabatic strokes anywhere in the engine window.
fn adiabatic_identity() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0_f64;
    let mut n = 0;
    while n < 100 {
        let w1 = rng.random_range(0.1..10.0);
        let w2 = w1 * rng.random_range(1.01..5.0);
        let b2 = rng.random_range(0.01..2.0);
        let b1 = b2 * rng.random_range(1.0..20.0);
        let p = CycleParams::natural(w1, w2, b1, b2).map_err(fail)?;
        if !engine_window(&p).map_err(fail)?.is_engine(&AdiabaticityPair::ADIABATIC) {
            continue;
        }
        let eta = efficiency(&p, &AdiabaticityPair::ADIABATIC).map_err(fail)?;
        worst = worst.max((eta - (1.0 - w1 / w2)).abs());
        n += 1;
    }
    ensure(worst <= 1e-12, format!("max |Δη| = {worst:.1e} over {n} sets"))
}

fn numeric_vs_closed_form(
    beta1: f64,
    beta2: f64,
    regime: Regime,
) -> Result<(f64, f64, f64, f64), String> {
    let problem = PowerProblem::new(1.0, beta1, beta2, UnitSystem::NATURAL);
    let hi = (4.0 * (beta1 / beta2).sqrt()).max(20.0);
    let num = problem
        .maximize(q_for_speed(1.0, regime.speed), SearchInterval { lo: 1.0, hi })
        .map_err(fail)?;
    let p = CycleParams::natural(1.0, 1.0, beta1, beta2).map_err(fail)?;
    let ana = analytic_optimum(&p, regime).map_err(fail)?;
    Ok((num.omega2_opt, ana.omega2_opt, num.eta_at_max_power, ana.eta_at_max_power))
}

/// 4 and 5. Classical optima at β₁ħω₁ = 10⁻³.
fn classical_optimum(speed: Speed) -> Check {
    let regime = Regime::new(speed, TemperatureRegime::ClassicalHighT);
    let mut report = Vec::new();
    let mut ok = true;
    for r in [0.1, 0.25, 0.5, 0.8] {
        let (w_num, w_ana, e_num, e_ana) = numeric_vs_closed_form(1e-3, 1e-3 * r, regime)?;
        let dw = (w_num / w_ana - 1.0).abs();
        let de = (e_num - e_ana).abs();
        ok &= dw <= 1e-3 && de <= 1e-4;
        if speed == Speed::Sudden && r == 0.25 {
            ok &= (e_num - 0.2).abs() <= 1e-4;
        }
        report.push(format!("r={r}: eta={e_num:.5} dω={dw:.1e} dη={de:.1e}"));
    }
    ensure(ok, report.join("; "))
}

/// 6. Low-temperature optima at β₁ħω₁ = 50.
fn quantum_optimum() -> Check {
    let mut report = Vec::new();
    let mut ok = true;
    for speed in [Speed::Adiabatic, Speed::Sudden] {
        for b2 in [0.01, 0.02, 0.05] {
            let (_, _, e_num, e_ana) = numeric_vs_closed_form(50.0, b2, Regime::new(speed, TemperatureRegime::QuantumLowT))?;
            let rel = (e_num / e_ana - 1.0).abs();
            ok &= rel <= 0.02;
            report.push(format!("{speed:?} ħω₁β₂={b2}: {e_num:.4} vs {e_ana:.4}"));
        }
    }
    ensure(ok, report.join("; "))
}

/// 7. Energy conservation over 10⁶ steps and analytic versus numeric force.
fn integrator_conservation() -> Check {
    let g = TrapGeometry::standard();
    let dt = TAU / g.omega0x / 50.0;
    let stepper = Stepper::new(g, ForceFieldMode::Pseudopotential, dt).map_err(fail)?;
    let mut s = IonState::new(Vector3::new(3e-6, -2e-6, 5e-5), Vector3::new(1.0, 2.0, -10.0));
    let e0 = total_energy(&g, &s).map_err(fail)?;
    let zero = Vector3::zeros();
    let (mut first, mut last) = (0.0_f64, 0.0_f64);
    for i in 0..1_000_000 {
        stepper.advance(&mut s, &zero).map_err(fail)?;
        if i % 100 == 0 {
            let d = (total_energy(&g, &s).map_err(fail)? / e0 - 1.0).abs();
            if i < 500_000 {
                first = first.max(d);
            } else {
                last = last.max(d);
            }
        }
    }
    let worst = first.max(last);
    // secular drift would make the second half visibly worse than the first
    let drift_free = last <= 1.5 * first + 1e-9;

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst_force = 0.0_f64;
    for _ in 0..100 {
        let p = Vector3::new(
            rng.random_range(-2e-5..2e-5),
            rng.random_range(-2e-5..2e-5),
            rng.random_range(-1e-3..1e-3),
        );
        let f = pseudo_force(&g, &p).map_err(fail)?;
        let mut fd = Vector3::zeros();
        for k in 0..3 {
            let h = 1e-4 * p[k].abs().max(1e-7);
            let (mut a, mut b) = (p, p);
            a[k] += h;
            b[k] -= h;
            fd[k] = -(pseudopotential(&g, &a).map_err(fail)? - pseudopotential(&g, &b).map_err(fail)?) / (2.0 * h);
        }
        worst_force = worst_force.max((f - fd).norm() / f.norm());
    }
    ensure(
        worst <= 1e-5 && drift_free && worst_force <= 1e-6,
        format!("energy dev {worst:.1e} (halves {first:.1e}/{last:.1e}), force dev {worst_force:.1e}"),
    )
}

fn secular_amplitudes(g: &TrapGeometry, mode: ForceFieldMode, x0: f64, periods: usize) -> Result<Vec<f64>, String> {
    let dt = TAU / g.omega_rf / 100.0;
    let stepper = Stepper::new(*g, mode, dt).map_err(fail)?;
    let v0 = match mode {
        ForceFieldMode::FullRf => micromotion_matched_velocity(g, x0).map_err(fail)?,
        ForceFieldMode::Pseudopotential => 0.0,
    };
    let mut s = IonState::new(Vector3::new(x0, 0.0, 0.0), Vector3::new(v0, 0.0, 0.0));
    let window = 100;
    let mut ring = vec![0.0; window];
    let mut sum = 0.0;
    let per = (TAU / g.omega0x / dt).round() as usize;
    let (mut out, mut peak) = (Vec::new(), 0.0_f64);
    for i in 0..periods * per {
        stepper.run(&mut s, 1).map_err(fail)?;
        sum += s.position.x - ring[i % window];
        ring[i % window] = s.position.x;
        if i >= window {
            peak = peak.max((sum / window as f64).abs());
        }
        if (i + 1) % per == 0 {
            out.push(peak);
            peak = 0.0;
        }
    }
    Ok(out)
}

/// 8. Calibrated rf amplitude and pseudopotential versus full-rf envelopes.
fn full_rf_consistency() -> Check {
    let mut g = TrapGeometry::standard();
    g.omega0x = 4.0e6;
    g.omega0y = 4.0e6;
    let cal = calibrate_u0(&g).map_err(fail)?;
    let q = cal.q_parameter().map_err(fail)?;
    let w = measure_secular_frequency(&cal, 100).map_err(fail)?;
    let dw = (w / g.omega0x - 1.0).abs();
    let rf = secular_amplitudes(&cal, ForceFieldMode::FullRf, 2e-6, 30)?;
    let ps = secular_amplitudes(&cal, ForceFieldMode::Pseudopotential, 2e-6, 30)?;
    let worst = rf.iter().zip(&ps).skip(1).map(|(a, b)| (a / b - 1.0).abs()).fold(0.0, f64::max);
    ensure(
        dw <= 5e-3 && q <= 0.2 && worst <= 0.05,
        format!("q = {q:.3}, secular error {dw:.1e}, envelope mismatch {worst:.3}"),
    )
}

/// 9. Three-axis molasses at δ = −Γ/2 without a trap.
fn doppler_thermometry() -> Check {
    let beams = three_axis_molasses(-0.5 * CA_LINEWIDTH, 0.05).map_err(fail)?;
    let run = free_space_run(&beams, CA40_MASS, Vector3::zeros(), 200, 3, 400e-6, 20e-9, 40).map_err(fail)?;
    let td = doppler_limit(CA_LINEWIDTH).map_err(fail)?;
    let rel = run.temperature / td - 1.0;
    ensure(
        rel.abs() <= 0.3,
        format!("T = {:.3e} K, T_D = {td:.3e} K, T/T_D - 1 = {rel:+.3}", run.temperature),
    )
}

/// 10. Phonon numbers at 20 mK and 200 mK, ω = 6.0×10⁶ s⁻¹.
fn phonon_numbers() -> Check {
    let lo = thermometry(0.02, 0.0, 6.0e6).map_err(fail)?.phonon_number;
    let hi = thermometry(0.2, 0.0, 6.0e6).map_err(fail)?.phonon_number;
    ensure(
        (350.0..=500.0).contains(&lo) && (3500.0..=5000.0).contains(&hi),
        format!("n(20 mK) = {lo:.1}, n(200 mK) = {hi:.1}"),
    )
}

/// 11. Axial shift of a 100 mK ensemble held in the tapered trap.
fn equilibrium_hold() -> Check {
    let g = TrapGeometry::standard();
    let h = hold(&g, &[], 0.1, 2000, 5, 100, 600).map_err(fail)?;
    let z0 = equilibrium_shift(&g, 0.1).map_err(fail)?;
    let rel = h.mean_z / z0 - 1.0;
    ensure(
        rel.abs() <= 0.05,
        format!("<z> = {:.4e} ± {:.1e} m, predicted {z0:.4e} m ({rel:+.3})", h.mean_z, h.z_stderr),
    )
}

/// 12. Externally switched engine at the adiabatic-optimal tuning.
fn engine_reproduction() -> Check {
    let (a, steps) = tune_adiabatic_optimum(
        |a| EnsembleConfig::engine_preset_for(a).map(|c| c.smoke(300)),
        // start well away from the preset so the search has work to do
        0.7 * ENGINE_AMPLITUDE,
        0.01,
        8,
    )
    .map_err(fail)?;
    let cfg = EnsembleConfig::engine_preset_for(a).map_err(fail)?;
    let rec = run_engine(&cfg).map_err(fail)?;
    let p = rec.measured.ok_or("no performance measured")?;
    let (tc, th) = rec.effective_temperatures().map_err(fail)?;
    let baths = (0.02..=0.2).contains(&tc) && (0.02..=0.2).contains(&th);
    let ok = rec.is_closed()
        && rec.has_engine_ordering()
        && (0.2..=0.4).contains(&p.eta)
        && (1e-21..=1e-19).contains(&p.power)
        && baths
        && cfg.n_trajectories == 2000;
    ensure(
        ok,
        format!(
            "A = {a:.3e} m after {} pilots; closed {} ordering {}; eta = {:.3} ± {:.3}; P = {:.2e} W; T_c = {:.1} mK, T_h = {:.1} mK",
            steps.len(),
            rec.is_closed(),
            rec.has_engine_ordering(),
            p.eta,
            p.eta_stderr,
            p.power,
            tc * 1e3,
            th * 1e3
        ),
    )
}

/// 13. Self-driven operation at 200 μm focus separation, and its absence at zero.
fn self_driven() -> Check {
    let on = run_self_driven(&EnsembleConfig::self_driven_preset(200e-6).map_err(fail)?).map_err(fail)?;
    let balance = on.dissipation_balance().map_err(fail)?;
    // the same steady state approached from a seed above it
    let mut above_cfg = EnsembleConfig::self_driven_preset(200e-6).map_err(fail)?;
    above_cfg.seed_amplitude = 2e-4;
    let above = run_self_driven(&above_cfg).map_err(fail)?;
    let spread = (above.final_amplitude / on.final_amplitude - 1.0).abs();
    let mut off_cfg = EnsembleConfig::self_driven_preset(0.0).map_err(fail)?;
    off_cfg.cycles = 60;
    let off = run_self_driven(&off_cfg).map_err(fail)?;
    let ok = on.self_amplified
        && on.steady
        && (balance - 1.0).abs() <= 0.1
        && above.steady
        && !above.self_amplified
        && spread <= 0.1
        && !off.self_amplified;
    ensure(
        ok,
        format!(
            "200 μm: {:.2e} -> {:.3e} m, steady {}, balance {balance:.3}; from above {:.2e} -> {:.3e} m ({spread:.3}); 0 μm: {:.2e} -> {:.3e} m",
            on.record.seed_amplitude,
            on.final_amplitude,
            on.steady,
            above.record.seed_amplitude,
            above.final_amplitude,
            off.record.seed_amplitude,
            off.final_amplitude
        ),
    )
}

fn hash_dir(dir: &Path) -> Result<String, String> {
    fn walk(dir: &Path, root: &Path, files: &mut Vec<(String, Vec<u8>)>) -> std::io::Result<()> {
        for e in fs::read_dir(dir)? {
            let p = e?.path();
            if p.is_dir() {
                walk(&p, root, files)?;
            } else {
                let rel = p.strip_prefix(root).expect("inside root").to_string_lossy().into_owned();
                files.push((rel, fs::read(&p)?));
            }
        }
        Ok(())
    }
    let mut files = Vec::new();
    walk(dir, dir, &mut files).map_err(fail)?;
    files.sort();
    let mut h = Sha256::new();
    for (name, bytes) in &files {
        h.update(name.as_bytes());
        h.update([0]);
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(bytes);
    }
    Ok(format!("{:x}", h.finalize()))
}

/// 14. Same seed and config, 1/4/8 workers, two runs each.
fn determinism() -> Check {
    let engine = EnsembleConfig::engine_preset().smoke(96);
    let mut sd = EnsembleConfig::self_driven_preset(200e-6).map_err(fail)?.smoke(48);
    sd.cycles = 12;
    let tmp = tempfile::tempdir().map_err(fail)?;
    let mut sums = Vec::new();
    for threads in [1, 4, 8, 1, 4, 8] {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().map_err(fail)?;
        let dir = tmp.path().join(format!("run{}", sums.len()));
        pool.install(|| -> Result<(), String> {
            let rec = run_engine(&engine).map_err(fail)?;
            write_run_record(&rec, &dir.join("engine"), &run_summary(&rec)).map_err(fail)?;
            let s = run_self_driven(&sd).map_err(fail)?;
            write_run_record(&s.record, &dir.join("selfdriven"), &run_summary(&s.record)).map_err(fail)
        })?;
        sums.push(hash_dir(&dir)?);
    }
    let same = sums.iter().all(|s| *s == sums[0]);
    ensure(same, format!("sha256 {} over 6 runs, {} distinct", &sums[0][..16], {
        let mut u = sums.clone();
        u.sort();
        u.dedup();
        u.len()
    }))
}

fn main() -> ExitCode {
    let criteria: [(&str, Duration, fn() -> Check); 14] = [
        ("sudden-switch Q*", Duration::from_secs(1), sudden_qstar),
        ("adiabatic Q* and Wronskian", Duration::from_secs(5), adiabatic_qstar),
        ("adiabatic efficiency identity", Duration::from_secs(1), adiabatic_identity),
        ("Curzon-Ahlborn recovery", Duration::from_secs(10), || classical_optimum(Speed::Adiabatic)),
        ("sudden-switch optimum", Duration::from_secs(10), || classical_optimum(Speed::Sudden)),
        ("quantum-regime optima", Duration::from_secs(10), quantum_optimum),
        ("integrator conservation", Duration::from_secs(30), integrator_conservation),
        ("full-rf consistency", Duration::from_secs(60), full_rf_consistency),
        ("Doppler thermometry", Duration::from_secs(120), doppler_thermometry),
        ("phonon numbers", Duration::from_secs(1), phonon_numbers),
        ("equilibrium shift", Duration::from_secs(120), equilibrium_hold),
        ("engine reproduction", Duration::from_secs(900), engine_reproduction),
        ("self-driven mode", Duration::from_secs(900), self_driven),
        ("determinism across workers", Duration::from_secs(600), determinism),
    ];
    let mut failed = 0;
    for (i, (name, budget, check)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let result = check();
        let elapsed = t.elapsed();
        let (ok, detail) = match result {
            Ok(d) if elapsed <= *budget => (true, d),
            Ok(d) => (false, format!("{d}; over budget {:.1?} > {budget:?}", elapsed)),
            Err(d) => (false, d),
        };
        if !ok {
            failed += 1;
        }
        println!(
            "{} {:>2} {name}: {detail} [{:.1?}]",
            if ok { "PASS" } else { "FAIL" },
            i + 1,
            elapsed
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

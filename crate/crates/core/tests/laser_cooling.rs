use nalgebra::Vector3;
use otto_core::engine::free_space_run;
use otto_core::reservoir::{doppler_limit, three_axis_molasses, BeamRole, GateSpec, LaserBeam, CA_LINEWIDTH};
use otto_core::units::{CA40_MASS, KB};

fn pair(detuning: f64, saturation: f64, gate: GateSpec) -> Vec<LaserBeam> {
    let role = if detuning > 0.0 { BeamRole::Heat } else { BeamRole::Cool };
    [1.0, -1.0]
        .iter()
        .map(|s| LaserBeam::calcium(*s * Vector3::x(), detuning, saturation, role, gate).unwrap())
        .collect()
}

#[test]
fn three_axis_molasses_reaches_doppler_limit() {
    let beams = three_axis_molasses(-0.5 * CA_LINEWIDTH, 0.05).unwrap();
    let run = free_space_run(&beams, CA40_MASS, Vector3::zeros(), 200, 3, 400e-6, 20e-9, 40).unwrap();
    let td = doppler_limit(CA_LINEWIDTH).unwrap();
    assert!((td - 0.518e-3).abs() < 1e-6, "T_D = {td}");
    let rel = (run.temperature - td) / td;
    assert!(rel.abs() < 0.3, "T = {} vs T_D = {td}", run.temperature);
    assert!(run.stderr < 0.1 * td);
}

#[test]
fn red_pair_damps_mean_velocity_exponentially() {
    let beams = pair(-0.5 * CA_LINEWIDTH, 0.1, GateSpec::AlwaysOn);
    let v0 = Vector3::new(1.0, 0.0, 0.0);
    let run = free_space_run(&beams, CA40_MASS, v0, 2000, 11, 60e-6, 10e-9, 30).unwrap();
    let pts: Vec<(f64, f64)> = run.history.iter().map(|h| (h.0, h.1.x.ln())).collect();
    let n = pts.len() as f64;
    let (mt, my) = (pts.iter().map(|p| p.0).sum::<f64>() / n, pts.iter().map(|p| p.1).sum::<f64>() / n);
    let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = sxy * sxy / (sxx * syy);
    assert!(slope < 0.0, "slope {slope}");
    assert!(r2 >= 0.99, "R² = {r2}");
    for w in run.history.windows(2) {
        assert!(w[1].1.x < w[0].1.x, "mean velocity must decay monotonically");
    }
}

#[test]
fn blue_pair_heats_monotonically() {
    let beams = pair(0.5 * CA_LINEWIDTH, 0.1, GateSpec::AlwaysOn);
    let run = free_space_run(&beams, CA40_MASS, Vector3::zeros(), 500, 5, 100e-6, 10e-9, 50).unwrap();
    let ke: Vec<f64> = run.history.iter().map(|h| 0.5 * CA40_MASS * h.2).collect();
    let blocks: Vec<f64> = ke.chunks(10).map(|c| c.iter().sum::<f64>() / c.len() as f64).collect();
    for w in blocks.windows(2) {
        assert!(w[1] > w[0], "kinetic energy fell: {blocks:?}");
    }
    assert!(blocks[blocks.len() - 1] > 10.0 * KB * doppler_limit(CA_LINEWIDTH).unwrap());
}

#[test]
fn full_phase_window_matches_always_on() {
    let on = three_axis_molasses(-0.5 * CA_LINEWIDTH, 0.05).unwrap();
    let gated: Vec<LaserBeam> = on
        .iter()
        .map(|b| LaserBeam {
            gate: GateSpec::PhaseWindow {
                window_fraction: 1.0,
                phase_center: 0.0,
            },
            ..*b
        })
        .collect();
    let a = free_space_run(&on, CA40_MASS, Vector3::zeros(), 200, 21, 200e-6, 20e-9, 10).unwrap();
    let b = free_space_run(&gated, CA40_MASS, Vector3::zeros(), 200, 22, 200e-6, 20e-9, 10).unwrap();
    let z = (a.temperature - b.temperature) / (a.stderr.powi(2) + b.stderr.powi(2)).sqrt();
    assert!(z.abs() < 1.96, "two-sample z = {z}");
    let same = free_space_run(&gated, CA40_MASS, Vector3::zeros(), 200, 21, 200e-6, 20e-9, 10).unwrap();
    assert_eq!(same.temperature, a.temperature);
}

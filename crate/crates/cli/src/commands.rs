//! The four subcommands: each builds its inputs from a [`RawConfig`],
//! runs, and writes plain-text outputs plus an effective-config echo.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::Vector3;
use otto_core::engine::{
    radial_ring, run_engine, run_self_driven, run_self_driven_with_threshold, tune_adiabatic_optimum,
    EnsembleConfig, ENGINE_AMPLITUDE,
};
use otto_core::husimi::{load_tabulated, ramp_qstar, FrequencyRamp};
use otto_core::optimizer::{default_ratios, efficiency_curve, Regime, Speed, TemperatureRegime, CURVE_COLUMNS};
use otto_core::output::{num, run_summary, self_driven_summary, write_run_record, write_table, Summary};
use otto_core::reservoir::{BeamRole, GateSpec, LaserBeam, CA_LINEWIDTH, CA_WAVELENGTH};
use otto_core::thermo::{
    efficiency, engine_window, power, stroke_quantities, AdiabaticityPair, CycleParams, StrokeDurations,
};
use otto_core::trap::{calibrate_u0, ForceFieldMode};
use otto_core::units::KB;
use otto_core::{Error, UnitSystem};

use crate::config::{
    choice, count, detuning, echo, field_error, flag, list, quantity, ratio, ConfigError, Dim, Expectation,
    RawConfig, Section,
};

#[derive(Debug)]
pub enum CliError {
    /// Bad input: exit status 2.
    Validation(String),
    /// Failure while running or writing: exit status 3.
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "validation error: {m}"),
            CliError::Runtime(m) => write!(f, "runtime error: {m}"),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidParameter { .. }
            | Error::Parse(_)
            | Error::StepTooLarge { .. }
            | Error::ZeroDuration
            | Error::FrequencyMismatch => CliError::Validation(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(format!("i/o: {e}"))
    }
}

type Result<T> = std::result::Result<T, CliError>;

const GEOMETRY_KEYS: [&str; 11] = [
    "theta",
    "r0",
    "trap_length",
    "radial_freq",
    "radial_freq_x",
    "radial_freq_y",
    "axial_freq",
    "rf_freq",
    "u0",
    "mass",
    "charge",
];
const ENSEMBLE_KEYS: [&str; 14] = [
    "force_mode",
    "n_trajectories",
    "seed",
    "dt",
    "cycles",
    "warmup_cycles",
    "measure_cycles",
    "steady_tolerance",
    "steady_window",
    "trace_stride",
    "histogram_bins",
    "initial_temperature",
    "axial_temperature",
    "seed_amplitude",
];
const BEAM_KEYS: [&str; 13] = [
    "role",
    "direction",
    "count",
    "detuning",
    "saturation",
    "wavenumber",
    "wavelength",
    "linewidth",
    "gate",
    "window_fraction",
    "phase_center",
    "focus_z",
    "waist",
];
const ANALYZE_KEYS: [&str; 11] = [
    "omega1",
    "omega2",
    "bath_cold",
    "bath_hot",
    "ramp",
    "ramp_duration",
    "ramp_file",
    "tau_compression",
    "tau_hot",
    "tau_expansion",
    "tau_cold",
];
const OPTIMIZE_KEYS: [&str; 3] = ["ratios", "regime", "speed"];
const TUNE_KEYS: [&str; 3] = ["tune", "tune_pilot_trajectories", "tune_tolerance"];
const SELF_DRIVEN_KEYS: [&str; 6] = [
    "focus_separation",
    "threshold_search",
    "threshold_lo",
    "threshold_hi",
    "threshold_cycles",
    "threshold_iterations",
];

fn required<'a>(raw: &'a RawConfig, key: &str) -> Result<&'a str> {
    raw.get(key)
        .ok_or_else(|| field_error(key, "required field is missing").into())
}

fn opt_quantity(raw: &RawConfig, key: &str, dim: Dim) -> Result<Option<f64>> {
    raw.get(key).map(|v| quantity(key, v, dim)).transpose().map_err(Into::into)
}

fn opt_count(raw: &RawConfig, key: &str) -> Result<Option<u64>> {
    raw.get(key).map(|v| count(key, v)).transpose().map_err(Into::into)
}

fn write_echo(out: &Path, text: &str) -> Result<()> {
    fs::write(out.join("effective_config.conf"), text)?;
    Ok(())
}

/// Checks the `[expect]` section against the summary.
pub fn check_expectations(raw: &RawConfig, summary: &Summary) -> Result<Vec<String>> {
    let Some(section) = raw.expectations() else {
        return Ok(Vec::new());
    };
    let mut report = Vec::new();
    let mut failed = Vec::new();
    for e in &section.entries {
        let want = Expectation::parse(&section.path(&e.key), &e.value)?;
        let got = summary.get(&e.key);
        let ok = got.is_some_and(|g| want.holds(g));
        let line = format!(
            "expect {} = {want}: got {} [{}]",
            e.key,
            got.unwrap_or("missing"),
            if ok { "ok" } else { "FAILED" }
        );
        if !ok {
            failed.push(e.key.clone());
        }
        report.push(line);
    }
    if !failed.is_empty() {
        return Err(CliError::Runtime(format!(
            "expectations not met: {}\n{}",
            failed.join(", "),
            report.join("\n")
        )));
    }
    Ok(report)
}

/// `analyze`: stage energies, stroke quantities, engine window and η.
pub fn analyze(raw: &RawConfig, out: &Path) -> Result<Summary> {
    raw.check_keys(&ANALYZE_KEYS, &[])?;
    if raw.beams().next().is_some() {
        return Err(field_error("beam", "beam sections are not used by analyze").into());
    }
    let w1 = quantity("omega1", required(raw, "omega1")?, Dim::Frequency)?;
    let w2 = quantity("omega2", required(raw, "omega2")?, Dim::Frequency)?;
    let tc = quantity("bath_cold", required(raw, "bath_cold")?, Dim::Temperature)?;
    let th = quantity("bath_hot", required(raw, "bath_hot")?, Dim::Temperature)?;
    for (k, t) in [("bath_cold", tc), ("bath_hot", th)] {
        if !(t > 0.0) {
            return Err(field_error(k, "temperature must be positive").into());
        }
    }
    let p = CycleParams::new(w1, w2, 1.0 / (KB * tc), 1.0 / (KB * th), UnitSystem::SI)?;
    let ramp = choice("ramp", raw.get("ramp").unwrap_or("adiabatic"), &["adiabatic", "sudden", "linear", "tabulated"])?;
    let dt = std::f64::consts::TAU / w1.max(w2) / 200.0;
    let q = match ramp {
        "adiabatic" => AdiabaticityPair::ADIABATIC,
        "sudden" => AdiabaticityPair::sudden(w1, w2),
        "linear" => {
            let tau = quantity("ramp_duration", required(raw, "ramp_duration")?, Dim::Time)?;
            let up = ramp_qstar(&FrequencyRamp::linear(w1, w2, tau)?, dt)?;
            let down = ramp_qstar(&FrequencyRamp::linear(w2, w1, tau)?, dt)?;
            AdiabaticityPair::new(up, down)?
        }
        _ => {
            let path = required(raw, "ramp_file")?;
            let up = load_tabulated(path)?;
            if (up.omega_i() - w1).abs() > 1e-9 * w1 || (up.omega_f() - w2).abs() > 1e-9 * w2 {
                return Err(field_error("ramp_file", "table must run from omega1 to omega2").into());
            }
            let t = up.duration();
            let mut rev: Vec<(f64, f64)> = match up.kind() {
                otto_core::husimi::RampKind::Tabulated(s) => s.iter().map(|&(ti, w)| (t - ti, w)).collect(),
                _ => unreachable!("loaded ramps are tabulated"),
            };
            rev.reverse();
            let down = FrequencyRamp::tabulated(rev)?;
            AdiabaticityPair::new(ramp_qstar(&up, dt)?, ramp_qstar(&down, dt)?)?
        }
    };
    let e = otto_core::thermo::stage_energies(&p, &q)?;
    let r = stroke_quantities(&p, &q)?;
    let window = engine_window(&p)?;
    let eta = efficiency(&p, &q);
    fs::create_dir_all(out)?;
    write_table(
        &out.join("stages.tsv"),
        &["mean oscillator energy at the cycle corners".into()],
        &["corner", "omega_rad_s", "energy_j"],
        &[
            vec!["A".into(), num(w1), num(e.e_a)],
            vec!["B".into(), num(w2), num(e.e_b)],
            vec!["C".into(), num(w2), num(e.e_c)],
            vec!["D".into(), num(w1), num(e.e_d)],
        ],
    )?;
    write_table(
        &out.join("strokes.tsv"),
        &["work and heat per stroke (J)".into()],
        &["stroke", "quantity", "value_j"],
        &[
            vec!["1".into(), "w1".into(), num(r.w1)],
            vec!["2".into(), "q2hot".into(), num(r.q2hot)],
            vec!["3".into(), "w3".into(), num(r.w3)],
            vec!["4".into(), "q4cold".into(), num(r.q4cold)],
        ],
    )?;
    let mut s = Summary::new();
    s.num("omega1_rad_s", w1).num("omega2_rad_s", w2);
    s.num("t_cold_k", tc).num("t_hot_k", th);
    s.push("ramp", ramp);
    s.num("qstar_compression", q.q1).num("qstar_expansion", q.q2);
    s.num("window_q1_max", window.q1_max).num("window_q2_min", window.q2_min);
    s.push("is_engine", window.is_engine(&q));
    s.num("output_work_j", r.output_work());
    s.num("closure_j", r.closure());
    match eta {
        Ok(v) => s.num("eta", v),
        Err(Error::NotAnEngine) => s.push("eta", "nan"),
        Err(e) => return Err(e.into()),
    };
    s.num("carnot", 1.0 - tc / th);
    let taus = ["tau_compression", "tau_hot", "tau_expansion", "tau_cold"];
    if taus.iter().any(|k| raw.get(k).is_some()) {
        let mut d = [0.0; 4];
        for (i, k) in taus.iter().enumerate() {
            d[i] = opt_quantity(raw, k, Dim::Time)?.unwrap_or(0.0);
        }
        let durations = StrokeDurations {
            tau1: d[0],
            tau2: d[1],
            tau3: d[2],
            tau4: d[3],
        };
        s.num("power_w", power(&r, &durations)?);
    }
    fs::write(out.join("summary.txt"), s.render())?;
    let mut echo_text = String::from("# effective configuration (SI base units)\n");
    let _ = writeln!(echo_text, "omega1 = {}", echo(w1, Dim::Frequency));
    let _ = writeln!(echo_text, "omega2 = {}", echo(w2, Dim::Frequency));
    let _ = writeln!(echo_text, "bath_cold = {}", echo(tc, Dim::Temperature));
    let _ = writeln!(echo_text, "bath_hot = {}", echo(th, Dim::Temperature));
    let _ = writeln!(echo_text, "ramp = {ramp}");
    for k in ["ramp_duration", "tau_compression", "tau_hot", "tau_expansion", "tau_cold"] {
        if let Some(v) = opt_quantity(raw, k, Dim::Time)? {
            let _ = writeln!(echo_text, "{k} = {}", echo(v, Dim::Time));
        }
    }
    if let Some(f) = raw.get("ramp_file") {
        let _ = writeln!(echo_text, "ramp_file = {f}");
    }
    write_echo(out, &echo_text)?;
    Ok(s)
}

/// `optimize`: Carnot, Curzon-Ahlborn and sudden curves plus numeric optima.
pub fn optimize(raw: &RawConfig, out: &Path) -> Result<Summary> {
    raw.check_keys(&OPTIMIZE_KEYS, &[])?;
    let ratios = match raw.get("ratios") {
        None | Some("default") => default_ratios(),
        Some(v) => list("ratios", v)?,
    };
    let temperature = match choice("regime", raw.get("regime").unwrap_or("classical"), &["classical", "quantum"])? {
        "classical" => TemperatureRegime::ClassicalHighT,
        _ => TemperatureRegime::QuantumLowT,
    };
    let speed = match choice("speed", raw.get("speed").unwrap_or("adiabatic"), &["adiabatic", "sudden"])? {
        "adiabatic" => Speed::Adiabatic,
        _ => Speed::Sudden,
    };
    let rows = efficiency_curve(&ratios, Regime::new(speed, temperature))?;
    fs::create_dir_all(out)?;
    let opt = |v: Option<f64>| v.map_or_else(|| "nan".to_string(), num);
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                num(r.ratio),
                num(r.carnot),
                num(r.curzon_ahlborn),
                num(r.sudden),
                opt(r.numeric),
                opt(r.numeric_omega_ratio),
            ]
        })
        .collect();
    write_table(
        &out.join("curves.tsv"),
        &[
            "efficiency versus temperature ratio beta_hot/beta_cold".into(),
            format!("numeric column: {speed:?} ramps, {temperature:?}"),
        ],
        &CURVE_COLUMNS,
        &table,
    )?;
    let ordered = rows
        .iter()
        .filter(|r| r.ratio < 1.0)
        .all(|r| r.carnot > r.curzon_ahlborn && r.curzon_ahlborn > r.sudden);
    let mut sorted = rows.clone();
    sorted.sort_by(|a, b| a.ratio.total_cmp(&b.ratio));
    let monotone = sorted.windows(2).all(|w| {
        w[1].carnot <= w[0].carnot && w[1].curzon_ahlborn <= w[0].curzon_ahlborn && w[1].sudden <= w[0].sudden
    });
    let mut s = Summary::new();
    s.push("rows", rows.len());
    s.push("regime", format!("{temperature:?}"));
    s.push("speed", format!("{speed:?}"));
    s.push("ordered", ordered);
    s.push("monotone", monotone);
    if let [r] = rows.as_slice() {
        s.num("carnot", r.carnot).num("curzon_ahlborn", r.curzon_ahlborn).num("sudden", r.sudden);
        s.push("numeric_eta", opt(r.numeric));
    }
    fs::write(out.join("summary.txt"), s.render())?;
    let ratio_text: Vec<String> = ratios.iter().map(|r| format!("{r:e}")).collect();
    let regime = if temperature == TemperatureRegime::ClassicalHighT { "classical" } else { "quantum" };
    let speed_name = if speed == Speed::Adiabatic { "adiabatic" } else { "sudden" };
    write_echo(
        out,
        &format!(
            "# effective configuration\nratios = {}\nregime = {regime}\nspeed = {speed_name}\n",
            ratio_text.join(", ")
        ),
    )?;
    Ok(s)
}

fn parse_role(field: &str, v: &str) -> Result<BeamRole> {
    BeamRole::from_name(v).ok_or_else(|| field_error(field, format!("`{v}` is not heat, cool or dissipation")).into())
}

fn build_beams(section: &Section) -> Result<Vec<LaserBeam>> {
    let get = |k: &str| section.get(k);
    let path = |k: &str| section.path(k);
    let need = |k: &str| get(k).ok_or_else(|| CliError::from(field_error(&path(k), "required beam field is missing")));
    let role = parse_role(&path("role"), need("role")?)?;
    let linewidth = match get("linewidth") {
        Some(v) => quantity(&path("linewidth"), v, Dim::Frequency)?,
        None => CA_LINEWIDTH,
    };
    let k = match (get("wavenumber"), get("wavelength")) {
        (Some(_), Some(_)) => return Err(field_error(&path("wavenumber"), "give wavenumber or wavelength, not both").into()),
        (Some(v), None) => quantity(&path("wavenumber"), v, Dim::Wavenumber)?,
        (None, Some(v)) => std::f64::consts::TAU / quantity(&path("wavelength"), v, Dim::Length)?,
        (None, None) => std::f64::consts::TAU / CA_WAVELENGTH,
    };
    let det = detuning(&path("detuning"), need("detuning")?, linewidth)?;
    let sat = ratio(&path("saturation"), need("saturation")?)?;
    let gate = match choice(&path("gate"), get("gate").unwrap_or("always_on"), &["always_on", "phase_window", "spatial_focus"])? {
        "always_on" => GateSpec::AlwaysOn,
        "phase_window" => GateSpec::PhaseWindow {
            window_fraction: ratio(&path("window_fraction"), need("window_fraction")?)?,
            phase_center: quantity(&path("phase_center"), need("phase_center")?, Dim::Angle)?,
        },
        _ => GateSpec::SpatialFocus {
            focus_z: quantity(&path("focus_z"), need("focus_z")?, Dim::Length)?,
            waist: quantity(&path("waist"), need("waist")?, Dim::Length)?,
        },
    };
    let n = match get("count") {
        Some(v) => count(&path("count"), v)? as usize,
        None => 1,
    };
    let wrap = |r: otto_core::Result<Vec<LaserBeam>>| {
        r.map_err(|e| CliError::Validation(format!("beam `{}`: {e}", section.name)))
    };
    if n > 1 || get("direction").is_none() {
        if get("direction").is_some() {
            return Err(field_error(&path("direction"), "a ring (count > 1) sets its own directions").into());
        }
        if n == 1 {
            return Err(field_error(&path("direction"), "required unless count > 1").into());
        }
        let ring = wrap(radial_ring(n, det, sat, role, gate))?;
        return Ok(ring.into_iter().map(|b| LaserBeam { k, gamma: linewidth, ..b }).collect());
    }
    let d = list(&path("direction"), need("direction")?)?;
    if d.len() != 3 {
        return Err(field_error(&path("direction"), "needs three components").into());
    }
    wrap(LaserBeam::new(Vector3::new(d[0], d[1], d[2]), k, det, linewidth, sat, role, gate).map(|b| vec![b]))
}

/// Applies geometry, ensemble and beam fields of `raw` on top of `base`.
fn apply_ensemble(raw: &RawConfig, mut cfg: EnsembleConfig) -> Result<EnsembleConfig> {
    let g = &mut cfg.geometry;
    if let Some(v) = opt_quantity(raw, "theta", Dim::Angle)? {
        g.theta = v;
    }
    if let Some(v) = opt_quantity(raw, "r0", Dim::Length)? {
        g.r0 = v;
    }
    if let Some(v) = opt_quantity(raw, "trap_length", Dim::Length)? {
        g.length = v;
    }
    if let Some(v) = opt_quantity(raw, "radial_freq", Dim::Frequency)? {
        g.omega0x = v;
        g.omega0y = v;
    }
    if let Some(v) = opt_quantity(raw, "radial_freq_x", Dim::Frequency)? {
        g.omega0x = v;
    }
    if let Some(v) = opt_quantity(raw, "radial_freq_y", Dim::Frequency)? {
        g.omega0y = v;
    }
    if let Some(v) = opt_quantity(raw, "axial_freq", Dim::Frequency)? {
        g.omega0z = v;
    }
    if let Some(v) = opt_quantity(raw, "rf_freq", Dim::Frequency)? {
        g.omega_rf = v;
    }
    if let Some(v) = opt_quantity(raw, "u0", Dim::Voltage)? {
        g.u0 = Some(v);
    }
    if let Some(v) = opt_quantity(raw, "mass", Dim::Mass)? {
        g.mass = v;
    }
    if let Some(v) = opt_quantity(raw, "charge", Dim::Charge)? {
        g.charge = v;
    }
    if let Some(v) = raw.get("force_mode") {
        cfg.force_mode = match choice("force_mode", v, &["pseudopotential", "full_rf"])? {
            "pseudopotential" => ForceFieldMode::Pseudopotential,
            _ => ForceFieldMode::FullRf,
        };
    }
    let counts: [(&str, &mut usize); 7] = [
        ("n_trajectories", &mut cfg.n_trajectories),
        ("cycles", &mut cfg.cycles),
        ("warmup_cycles", &mut cfg.warmup_cycles),
        ("measure_cycles", &mut cfg.measure_cycles),
        ("steady_window", &mut cfg.steady_window),
        ("trace_stride", &mut cfg.trace_stride),
        ("histogram_bins", &mut cfg.histogram_bins),
    ];
    for (k, slot) in counts {
        if let Some(v) = opt_count(raw, k)? {
            *slot = v as usize;
        }
    }
    if let Some(v) = opt_count(raw, "seed")? {
        cfg.seed = v;
    }
    if let Some(v) = opt_quantity(raw, "dt", Dim::Time)? {
        cfg.dt = v;
    }
    if let Some(v) = raw.get("steady_tolerance") {
        cfg.steady_tolerance = ratio("steady_tolerance", v)?;
    }
    if let Some(v) = opt_quantity(raw, "initial_temperature", Dim::Temperature)? {
        cfg.initial_temperature = v;
    }
    if let Some(v) = opt_quantity(raw, "axial_temperature", Dim::Temperature)? {
        cfg.axial_temperature = v;
    }
    if let Some(v) = opt_quantity(raw, "seed_amplitude", Dim::Length)? {
        cfg.seed_amplitude = v;
    }
    if raw.beams().next().is_some() {
        let mut baths = Vec::new();
        let mut damping = Vec::new();
        for s in raw.beams() {
            for b in build_beams(s)? {
                if b.role == BeamRole::Dissipation {
                    damping.push(b);
                } else {
                    baths.push(b);
                }
            }
        }
        cfg.beams = baths;
        cfg.dissipation = damping;
    }
    if cfg.force_mode == ForceFieldMode::FullRf && cfg.geometry.u0.is_none() {
        log::info!("calibrating u0 for the full rf field");
        cfg.geometry = calibrate_u0(&cfg.geometry)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn gate_echo(s: &mut String, gate: &GateSpec) {
    match *gate {
        GateSpec::AlwaysOn => {
            let _ = writeln!(s, "gate = always_on");
        }
        GateSpec::PhaseWindow {
            window_fraction,
            phase_center,
        } => {
            let _ = writeln!(s, "gate = phase_window\nwindow_fraction = {window_fraction:e}");
            let _ = writeln!(s, "phase_center = {}", echo(phase_center, Dim::Angle));
        }
        GateSpec::SpatialFocus { focus_z, waist } => {
            let _ = writeln!(s, "gate = spatial_focus");
            let _ = writeln!(s, "focus_z = {}", echo(focus_z, Dim::Length));
            let _ = writeln!(s, "waist = {}", echo(waist, Dim::Length));
        }
    }
}

/// Complete configuration in SI base units; reading it back gives `cfg`.
pub fn echo_ensemble(cfg: &EnsembleConfig, extra: &[(String, String)]) -> String {
    let g = &cfg.geometry;
    let mut s = String::from("# effective configuration (SI base units)\n");
    let mut line = |k: &str, v: String| {
        let _ = writeln!(s, "{k} = {v}");
    };
    line("theta", echo(g.theta, Dim::Angle));
    line("r0", echo(g.r0, Dim::Length));
    line("trap_length", echo(g.length, Dim::Length));
    line("radial_freq_x", echo(g.omega0x, Dim::Frequency));
    line("radial_freq_y", echo(g.omega0y, Dim::Frequency));
    line("axial_freq", echo(g.omega0z, Dim::Frequency));
    line("rf_freq", echo(g.omega_rf, Dim::Frequency));
    if let Some(u) = g.u0 {
        line("u0", echo(u, Dim::Voltage));
    }
    line("mass", echo(g.mass, Dim::Mass));
    line("charge", echo(g.charge, Dim::Charge));
    let mode = match cfg.force_mode {
        ForceFieldMode::Pseudopotential => "pseudopotential",
        ForceFieldMode::FullRf => "full_rf",
    };
    line("force_mode", mode.into());
    line("n_trajectories", cfg.n_trajectories.to_string());
    line("seed", cfg.seed.to_string());
    line("dt", echo(cfg.dt, Dim::Time));
    line("cycles", cfg.cycles.to_string());
    line("warmup_cycles", cfg.warmup_cycles.to_string());
    line("measure_cycles", cfg.measure_cycles.to_string());
    line("steady_tolerance", format!("{:e}", cfg.steady_tolerance));
    line("steady_window", cfg.steady_window.to_string());
    line("trace_stride", cfg.trace_stride.to_string());
    line("histogram_bins", cfg.histogram_bins.to_string());
    line("initial_temperature", echo(cfg.initial_temperature, Dim::Temperature));
    line("axial_temperature", echo(cfg.axial_temperature, Dim::Temperature));
    line("seed_amplitude", echo(cfg.seed_amplitude, Dim::Length));
    for (k, v) in extra {
        line(k, v.clone());
    }
    for (i, b) in cfg.all_beams().iter().enumerate() {
        let _ = writeln!(s, "\n[beam.b{i:02}]\nrole = {}", b.role.name());
        let d = b.direction;
        let _ = writeln!(s, "direction = {:e}, {:e}, {:e}", d.x, d.y, d.z);
        let _ = writeln!(s, "wavenumber = {}", echo(b.k, Dim::Wavenumber));
        let _ = writeln!(s, "linewidth = {}", echo(b.gamma, Dim::Frequency));
        let _ = writeln!(s, "detuning = {}", echo(b.detuning, Dim::Frequency));
        let _ = writeln!(s, "saturation = {:e}", b.saturation);
        gate_echo(&mut s, &b.gate);
    }
    s
}

fn engine_keys() -> Vec<&'static str> {
    GEOMETRY_KEYS.iter().chain(ENSEMBLE_KEYS.iter()).copied().collect()
}

/// `simulate`: externally switched engine to steady state.
pub fn simulate(raw: &RawConfig, out: &Path) -> Result<Summary> {
    let mut keys = engine_keys();
    keys.extend(TUNE_KEYS);
    raw.check_keys(&keys, &BEAM_KEYS)?;
    let tune = flag("tune", raw.get("tune").unwrap_or("off"))?;
    let start = opt_quantity(raw, "seed_amplitude", Dim::Length)?.unwrap_or(ENGINE_AMPLITUDE);
    let build = |a: f64| -> Result<EnsembleConfig> {
        let mut cfg = apply_ensemble(raw, EnsembleConfig::engine_preset_for(a)?)?;
        cfg.seed_amplitude = a;
        Ok(cfg)
    };
    let mut tuning = Summary::new();
    let cfg = if tune {
        let pilot = opt_count(raw, "tune_pilot_trajectories")?.unwrap_or(300) as usize;
        let tol = raw.get("tune_tolerance").map(|v| ratio("tune_tolerance", v)).transpose()?.unwrap_or(0.02);
        let (a, steps) = tune_adiabatic_optimum(
            |a| {
                let mut c = build(a).map_err(|e| otto_core::Error::Parse(e.to_string()))?;
                c.n_trajectories = pilot;
                Ok(c)
            },
            start,
            tol,
            8,
        )?;
        tuning.num("tuned_amplitude_m", a);
        tuning.push("tuning_runs", steps.len());
        build(a)?
    } else {
        build(start)?
    };
    let rec = run_engine(&cfg)?;
    let mut summary = run_summary(&rec);
    summary.extend(&tuning);
    write_run_record(&rec, out, &summary)?;
    write_echo(out, &echo_ensemble(&cfg, &[("tune".into(), "off".into())]))?;
    Ok(summary)
}

/// `selfdriven`: spatially gated baths, optional threshold search.
pub fn selfdriven(raw: &RawConfig, out: &Path) -> Result<Summary> {
    let mut keys = engine_keys();
    keys.extend(SELF_DRIVEN_KEYS);
    raw.check_keys(&keys, &BEAM_KEYS)?;
    let sep = opt_quantity(raw, "focus_separation", Dim::Length)?.unwrap_or(200e-6);
    let cfg = apply_ensemble(raw, EnsembleConfig::self_driven_preset(sep)?)?;
    let search = flag("threshold_search", raw.get("threshold_search").unwrap_or("off"))?;
    let mut extra = vec![("threshold_search".to_string(), if search { "on" } else { "off" }.to_string())];
    let rec = if search {
        let lo = opt_quantity(raw, "threshold_lo", Dim::Length)?.unwrap_or(5e-6);
        let hi = opt_quantity(raw, "threshold_hi", Dim::Length)?.unwrap_or(cfg.seed_amplitude);
        let cycles = opt_count(raw, "threshold_cycles")?.unwrap_or(30) as usize;
        let iters = opt_count(raw, "threshold_iterations")?.unwrap_or(4) as usize;
        extra.push(("threshold_lo".into(), echo(lo, Dim::Length)));
        extra.push(("threshold_hi".into(), echo(hi, Dim::Length)));
        extra.push(("threshold_cycles".into(), cycles.to_string()));
        extra.push(("threshold_iterations".into(), iters.to_string()));
        run_self_driven_with_threshold(&cfg, lo, hi, cycles, iters)?
    } else {
        run_self_driven(&cfg)?
    };
    let summary = self_driven_summary(&rec);
    write_run_record(&rec.record, out, &summary)?;
    write_echo(out, &echo_ensemble(&cfg, &extra))?;
    Ok(summary)
}

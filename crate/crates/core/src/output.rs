//! Plain-text output: tab-separated tables with `#` metadata lines and a
//! `key = value` summary document.
//!
//! Numbers are written in Rust's shortest round-trip `e` notation, so a file
//! read back yields the exact values that were written.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use crate::engine::{RunRecord, SelfDrivenRecord, CORNER_LABELS};

/// Ordered `key = value` document.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Summary {
    entries: Vec<(String, String)>,
}

impl Summary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, key: impl Into<String>, value: impl ToString) -> &mut Self {
        self.entries.push((key.into(), value.to_string()));
        self
    }

    pub fn num(&mut self, key: impl Into<String>, value: f64) -> &mut Self {
        self.push(key, num(value))
    }

    pub fn extend(&mut self, other: &Summary) -> &mut Self {
        self.entries.extend(other.entries.iter().cloned());
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.entries {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    /// Single-line form, `key=value` pairs separated by spaces.
    pub fn line(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(" ")
    }
}

pub fn num(v: f64) -> String {
    format!("{v:e}")
}

/// Tab-separated table with leading `# ` metadata lines and a header row.
pub fn write_table(path: &Path, meta: &[String], header: &[&str], rows: &[Vec<String>]) -> io::Result<()> {
    let mut s = String::new();
    for m in meta {
        let _ = writeln!(s, "# {m}");
    }
    let _ = writeln!(s, "{}", header.join("\t"));
    for r in rows {
        let _ = writeln!(s, "{}", r.join("\t"));
    }
    fs::write(path, s)
}

fn unit_of(label: &str) -> &'static str {
    match label {
        "x" | "z" => "m",
        "px" | "pz" => "kg m/s",
        _ => "",
    }
}

/// Performance and diagnostics of a run, in a fixed key order.
pub fn run_summary(rec: &RunRecord) -> Summary {
    let mut s = Summary::new();
    s.push("mode", format!("{:?}", rec.mode));
    s.push("n_trajectories", rec.n_trajectories);
    s.push("cycles_run", rec.cycles.len());
    s.push("steady_from", rec.steady_from);
    s.num("period_s", rec.period);
    s.num("dt_s", rec.dt);
    match rec.measured {
        Some(p) => {
            s.num("eta", p.eta).num("eta_stderr", p.eta_stderr);
            s.num("power_w", p.power).num("power_stderr_w", p.power_stderr);
        }
        None => {
            s.push("eta", "nan").push("power_w", "nan");
        }
    }
    s.num("alpha", rec.alpha);
    if let Ok((tc, th)) = rec.effective_temperatures() {
        s.num("t_cold_k", tc).num("t_hot_k", th);
    }
    if let Ok((q1, q2)) = rec.effective_qstar() {
        s.num("qstar_compression", q1).num("qstar_expansion", q2);
    }
    if let Ok(c) = rec.mean_corners() {
        s.num("compression_ratio", c.omega[1] / c.omega[0]);
        s.num("amplitude_m", c.amplitude);
        s.num("axial_work_j", c.axial_work());
        s.num("stroke_work_j", c.stroke_work());
        s.num("dissipated_j", c.dissipated);
    }
    if let Ok(a) = rec.energy_audit() {
        s.num("energy_audit", a);
    }
    if let Ok(sh) = rec.stroke_share() {
        s.num("stroke_share", sh);
    }
    let (area, se) = rec.loop_area();
    s.num("loop_area", area).num("loop_area_stderr", se);
    s.push("closed", rec.is_closed());
    s.push("engine_ordering", rec.has_engine_ordering());
    s
}

pub fn self_driven_summary(rec: &SelfDrivenRecord) -> Summary {
    let mut s = run_summary(&rec.record);
    s.push("self_amplified", rec.self_amplified);
    s.push("steady", rec.steady);
    s.num("seed_amplitude_m", rec.record.seed_amplitude);
    s.num("final_amplitude_m", rec.final_amplitude);
    if let Ok(b) = rec.dissipation_balance() {
        s.num("dissipation_balance", b);
    }
    if let Some(t) = rec.threshold {
        s.num("threshold_m", t);
    }
    s
}

/// Writes `corners.tsv`, `axial_trace.tsv`, `histograms/*.tsv` and
/// `summary.txt` (the run summary followed by `extra`) into `dir`.
pub fn write_run_record(rec: &RunRecord, dir: &Path, summary: &Summary) -> io::Result<()> {
    fs::create_dir_all(dir.join("histograms"))?;
    let mut header = vec!["cycle".to_string(), "amplitude_m".to_string()];
    for l in CORNER_LABELS {
        header.push(format!("E_{l}_j"));
    }
    for l in CORNER_LABELS {
        header.push(format!("E_{l}_stderr_j"));
    }
    for l in CORNER_LABELS {
        header.push(format!("omega_{l}_rad_s"));
    }
    for h in ["axial_work_j", "stroke_work_j", "dissipated_j", "heat_radial_j", "cool_radial_j", "loop_area"] {
        header.push(h.to_string());
    }
    let rows: Vec<Vec<String>> = rec
        .cycles
        .iter()
        .map(|c| {
            let mut r = vec![c.cycle.to_string(), num(c.amplitude)];
            r.extend(c.energy.iter().map(|v| num(*v)));
            r.extend(c.energy_stderr.iter().map(|v| num(*v)));
            r.extend(c.omega.iter().map(|v| num(*v)));
            for v in [c.axial_work(), c.stroke_work(), c.dissipated, c.heat_radial, c.cool_radial, c.loop_area()] {
                r.push(num(v));
            }
            r
        })
        .collect();
    let h: Vec<&str> = header.iter().map(String::as_str).collect();
    write_table(
        &dir.join("corners.tsv"),
        &[
            "ensemble-mean radial energy (two modes) and local radial frequency at cycle corners".into(),
            format!("steady_from = {}", rec.steady_from),
        ],
        &h,
        &rows,
    )?;
    let trace: Vec<Vec<String>> =
        rec.axial_trace.iter().map(|t| vec![num(t.time), num(t.z), num(t.vz)]).collect();
    write_table(
        &dir.join("axial_trace.tsv"),
        &["ensemble-mean axial position and velocity".into()],
        &["time_s", "z_m", "vz_m_s"],
        &trace,
    )?;
    for hist in &rec.phase_histograms {
        let w = |r: (f64, f64)| (r.1 - r.0) / hist.bins as f64;
        let (wx, wy) = (w(hist.x_range), w(hist.y_range));
        let mut rows = Vec::with_capacity(hist.counts.len());
        for iy in 0..hist.bins {
            for ix in 0..hist.bins {
                rows.push(vec![
                    ix.to_string(),
                    iy.to_string(),
                    num(hist.x_range.0 + (ix as f64 + 0.5) * wx),
                    num(hist.y_range.0 + (iy as f64 + 0.5) * wy),
                    hist.counts[iy * hist.bins + ix].to_string(),
                ]);
            }
        }
        write_table(
            &dir.join("histograms").join(format!("{}.tsv", hist.name)),
            &[
                format!("name = {}", hist.name),
                format!(
                    "x = {} [{}] range {} {}",
                    hist.x_label,
                    unit_of(hist.x_label),
                    num(hist.x_range.0),
                    num(hist.x_range.1)
                ),
                format!(
                    "y = {} [{}] range {} {}",
                    hist.y_label,
                    unit_of(hist.y_label),
                    num(hist.y_range.0),
                    num(hist.y_range.1)
                ),
                format!("bins = {}", hist.bins),
                format!("total = {}", hist.total()),
            ],
            &["ix", "iy", "x_center", "y_center", "count"],
            &rows,
        )?;
    }
    fs::write(dir.join("summary.txt"), summary.render())
}

//! Run configuration files.
//!
//! Line-oriented `key = value` text. `#` starts a comment, `[beam.<name>]`
//! opens a beam section and `[expect]` a section of expected summary
//! values. Every dimensional value carries an explicit unit suffix
//! (`radial_freq = 6.0 Mrad_s`, `bath_cold = 20 mK`); a bare number where a
//! unit is required is rejected. Counts and dimensionless ratios are bare.

use std::f64::consts::TAU;
use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("line {line}: {reason}")]
    Syntax { line: usize, reason: String },
    #[error("field `{field}`: {reason}")]
    Field { field: String, reason: String },
}

pub fn field_error(field: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Field {
        field: field.to_string(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub key: String,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Section {
    pub kind: String,
    pub name: String,
    pub entries: Vec<Entry>,
}

impl Section {
    pub fn get(&self, key: &str) -> Option<&str> {
        lookup(&self.entries, key)
    }

    /// Field path used in diagnostics, e.g. `beam.hot.detuning`.
    pub fn path(&self, key: &str) -> String {
        if self.name.is_empty() {
            format!("{}.{key}", self.kind)
        } else {
            format!("{}.{}.{key}", self.kind, self.name)
        }
    }
}

fn lookup<'a>(entries: &'a [Entry], key: &str) -> Option<&'a str> {
    entries.iter().rev().find(|e| e.key == key).map(|e| e.value.as_str())
}

fn set(entries: &mut Vec<Entry>, key: &str, value: &str) {
    match entries.iter_mut().find(|e| e.key == key) {
        Some(e) => e.value = value.to_string(),
        None => entries.push(Entry {
            key: key.to_string(),
            value: value.to_string(),
        }),
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawConfig {
    pub top: Vec<Entry>,
    pub sections: Vec<Section>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = RawConfig::default();
        let mut current: Option<usize> = None;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            if let Some(head) = body.strip_prefix('[') {
                let head = head
                    .strip_suffix(']')
                    .ok_or_else(|| ConfigError::Syntax {
                        line,
                        reason: format!("unterminated section header `{body}`"),
                    })?
                    .trim();
                let (kind, name) = match head.split_once('.') {
                    Some((k, n)) => (k.trim(), n.trim()),
                    None => (head, ""),
                };
                match (kind, name.is_empty()) {
                    ("beam", false) | ("expect", true) => {}
                    _ => {
                        return Err(ConfigError::Syntax {
                            line,
                            reason: format!("unknown section `[{head}]`; expected `[beam.<name>]` or `[expect]`"),
                        })
                    }
                }
                current = Some(cfg.section_index(kind, name));
                continue;
            }
            let (k, v) = body.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line,
                reason: format!("expected `key = value`, got `{body}`"),
            })?;
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() || v.is_empty() {
                return Err(ConfigError::Syntax {
                    line,
                    reason: "empty key or value".into(),
                });
            }
            match current {
                Some(s) => set(&mut cfg.sections[s].entries, k, v),
                None => set(&mut cfg.top, k, v),
            }
        }
        Ok(cfg)
    }

    fn section_index(&mut self, kind: &str, name: &str) -> usize {
        match self.sections.iter().position(|s| s.kind == kind && s.name == name) {
            Some(i) => i,
            None => {
                self.sections.push(Section {
                    kind: kind.to_string(),
                    name: name.to_string(),
                    entries: Vec::new(),
                });
                self.sections.len() - 1
            }
        }
    }

    /// Applies one `key=value` override. `beam.<name>.<key>` and
    /// `expect.<key>` address sections.
    pub fn apply_override(&mut self, item: &str) -> Result<(), ConfigError> {
        let (k, v) = item
            .split_once('=')
            .ok_or_else(|| field_error(item, "override must look like key=value"))?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() || v.is_empty() {
            return Err(field_error(k, "override needs a key and a value"));
        }
        let parts: Vec<&str> = k.split('.').collect();
        match parts.as_slice() {
            [key] => set(&mut self.top, key, v),
            ["expect", key] => {
                let i = self.section_index("expect", "");
                set(&mut self.sections[i].entries, key, v);
            }
            ["beam", name, key] => {
                let i = self.section_index("beam", name);
                set(&mut self.sections[i].entries, key, v);
            }
            _ => return Err(field_error(k, "unknown override path")),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        lookup(&self.top, key)
    }

    pub fn beams(&self) -> impl Iterator<Item = &Section> {
        self.sections.iter().filter(|s| s.kind == "beam")
    }

    pub fn expectations(&self) -> Option<&Section> {
        self.sections.iter().find(|s| s.kind == "expect")
    }

    /// Rejects keys outside `allowed`, top level and in beam sections.
    pub fn check_keys(&self, allowed: &[&str], beam_allowed: &[&str]) -> Result<(), ConfigError> {
        for e in &self.top {
            if !allowed.contains(&e.key.as_str()) {
                return Err(field_error(&e.key, "unknown key for this command"));
            }
        }
        for s in self.beams() {
            for e in &s.entries {
                if !beam_allowed.contains(&e.key.as_str()) {
                    return Err(field_error(&s.path(&e.key), "unknown beam key"));
                }
            }
        }
        Ok(())
    }
}

/// Physical dimension of a field.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dim {
    Frequency,
    Temperature,
    Length,
    Time,
    Angle,
    Voltage,
    Mass,
    Charge,
    Wavenumber,
}

impl Dim {
    fn units(self) -> &'static [(&'static str, f64)] {
        const E: f64 = 1.602_176_634e-19;
        match self {
            Dim::Frequency => &[
                ("rad_s", 1.0),
                ("krad_s", 1e3),
                ("Mrad_s", 1e6),
                ("Grad_s", 1e9),
                ("Hz", TAU),
                ("kHz", TAU * 1e3),
                ("MHz", TAU * 1e6),
                ("GHz", TAU * 1e9),
            ],
            Dim::Temperature => &[("K", 1.0), ("mK", 1e-3), ("uK", 1e-6), ("nK", 1e-9)],
            Dim::Length => &[("m", 1.0), ("cm", 1e-2), ("mm", 1e-3), ("um", 1e-6), ("nm", 1e-9)],
            Dim::Time => &[("s", 1.0), ("ms", 1e-3), ("us", 1e-6), ("ns", 1e-9), ("ps", 1e-12)],
            Dim::Angle => &[("rad", 1.0), ("mrad", 1e-3), ("deg", std::f64::consts::PI / 180.0)],
            Dim::Voltage => &[("V", 1.0), ("kV", 1e3), ("mV", 1e-3)],
            Dim::Mass => &[("kg", 1.0), ("amu", 1.660_539_068_92e-27)],
            Dim::Charge => &[("C", 1.0), ("e", E)],
            Dim::Wavenumber => &[("rad_m", 1.0)],
        }
    }

    /// Unit used when echoing values; its factor is exactly 1.
    pub fn base_unit(self) -> &'static str {
        self.units()[0].0
    }
}

impl fmt::Display for Dim {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = self.units().iter().map(|u| u.0).collect();
        write!(f, "{}", names.join(", "))
    }
}

fn number(field: &str, text: &str) -> Result<f64, ConfigError> {
    let v: f64 = text
        .parse()
        .map_err(|_| field_error(field, format!("`{text}` is not a number")))?;
    if !v.is_finite() {
        return Err(field_error(field, "must be finite"));
    }
    Ok(v)
}

/// `<number> <unit>` converted to SI.
/// `v · f`, dividing by the exact power of ten for sub-unit prefixes so
/// that e.g. `200 um` gives the correctly rounded 2e-4.
fn scale(v: f64, f: f64) -> f64 {
    let inv = (1.0 / f).round();
    if f < 1.0 && (inv.log10().round() - inv.log10()).abs() < 1e-12 {
        v / inv
    } else {
        v * f
    }
}

pub fn quantity(field: &str, text: &str, dim: Dim) -> Result<f64, ConfigError> {
    let parts: Vec<&str> = text.split_whitespace().collect();
    match parts.as_slice() {
        [t] => {
            // attached suffix, e.g. `200um`: longest unit name that leaves a number
            let mut units: Vec<_> = dim.units().iter().collect();
            units.sort_by_key(|(n, _)| std::cmp::Reverse(n.len()));
            units
                .iter()
                .find_map(|(n, f)| {
                    let v = t.strip_suffix(n)?;
                    let v: f64 = v.parse().ok().filter(|x: &f64| x.is_finite())?;
                    Some(scale(v, *f))
                })
                .ok_or_else(|| field_error(field, format!("`{text}` needs a unit suffix (one of {dim})")))
        }
        [v, u] => {
            let f = dim
                .units()
                .iter()
                .find(|(n, _)| n == u)
                .map(|p| p.1)
                .ok_or_else(|| field_error(field, format!("unknown unit `{u}`; expected one of {dim}")))?;
            Ok(scale(number(field, v)?, f))
        }
        _ => Err(field_error(field, format!("malformed quantity `{text}`"))),
    }
}

/// Detuning: a frequency, or a multiple of the linewidth (`-1.5 Gamma`).
pub fn detuning(field: &str, text: &str, linewidth: f64) -> Result<f64, ConfigError> {
    let parts: Vec<&str> = text.split_whitespace().collect();
    if let [v, "Gamma"] = parts.as_slice() {
        return Ok(number(field, v)? * linewidth);
    }
    quantity(field, text, Dim::Frequency)
        .map_err(|_| field_error(field, format!("`{text}` needs a frequency unit ({}) or `Gamma`", Dim::Frequency)))
}

/// Bare dimensionless number.
pub fn ratio(field: &str, text: &str) -> Result<f64, ConfigError> {
    if text.split_whitespace().count() != 1 {
        return Err(field_error(field, format!("`{text}` must be a bare dimensionless number")));
    }
    number(field, text)
}

pub fn count(field: &str, text: &str) -> Result<u64, ConfigError> {
    text.parse()
        .map_err(|_| field_error(field, format!("`{text}` must be a non-negative integer")))
}

pub fn choice<'a>(field: &str, text: &str, options: &[&'a str]) -> Result<&'a str, ConfigError> {
    options
        .iter()
        .find(|o| **o == text)
        .copied()
        .ok_or_else(|| field_error(field, format!("`{text}` is not one of {}", options.join(", "))))
}

pub fn flag(field: &str, text: &str) -> Result<bool, ConfigError> {
    match text {
        "on" | "true" | "yes" => Ok(true),
        "off" | "false" | "no" => Ok(false),
        _ => Err(field_error(field, format!("`{text}` must be on or off"))),
    }
}

/// Bare numbers separated by commas or whitespace.
pub fn list(field: &str, text: &str) -> Result<Vec<f64>, ConfigError> {
    let v = text
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| number(field, s))
        .collect::<Result<Vec<_>, _>>()?;
    if v.is_empty() {
        return Err(field_error(field, "list is empty"));
    }
    Ok(v)
}

/// Echo form of an SI value in the base unit of `dim`.
pub fn echo(v: f64, dim: Dim) -> String {
    format!("{v:e} {}", dim.base_unit())
}

/// Expected summary value: `<number> +- <tolerance>` or a literal.
#[derive(Debug, Clone, PartialEq)]
pub enum Expectation {
    Within { value: f64, tol: f64 },
    Literal(String),
}

impl Expectation {
    pub fn parse(field: &str, text: &str) -> Result<Self, ConfigError> {
        match text.split_once("+-") {
            Some((v, t)) => Ok(Self::Within {
                value: number(field, v.trim())?,
                tol: number(field, t.trim())?,
            }),
            None => Ok(Self::Literal(text.to_string())),
        }
    }

    pub fn holds(&self, actual: &str) -> bool {
        match self {
            Self::Within { value, tol } => actual.parse::<f64>().is_ok_and(|a| (a - value).abs() <= *tol),
            Self::Literal(s) => s == actual,
        }
    }
}

impl fmt::Display for Expectation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Within { value, tol } => write!(f, "{value} +- {tol}"),
            Self::Literal(s) => write!(f, "{s}"),
        }
    }
}

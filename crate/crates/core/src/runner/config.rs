//! Line-oriented experiment configs.
//!
//! Each non-blank line is `section.key = value`; `#` starts a comment.
//! Numbers accept fractions (`1/128`), lists are comma separated, and
//! radii that may be unbounded accept `inf`. Later lines override earlier
//! ones. See [`KEYS`] for the recognised keys.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::geometry::{DomainSpec, Obstacle};
use crate::grid::{PenaltyOptions, PsorOptions, Relaxation};
use crate::two_phase::InterfaceEstimate;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    Radial,
    Serrin,
    StabilitySweep,
    TwoPhase,
    MovingPlane,
    ExteriorProbe,
    Calibrate,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 7] = [
        Self::Radial,
        Self::Serrin,
        Self::StabilitySweep,
        Self::TwoPhase,
        Self::MovingPlane,
        Self::ExteriorProbe,
        Self::Calibrate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Radial => "radial",
            Self::Serrin => "serrin",
            Self::StabilitySweep => "stability-sweep",
            Self::TwoPhase => "two-phase",
            Self::MovingPlane => "moving-plane",
            Self::ExteriorProbe => "exterior-probe",
            Self::Calibrate => "calibrate",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown experiment kind `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KeyType {
    Text,
    Number,
    List,
}

/// Every accepted key with its value type.
pub const KEYS: [(&str, KeyType); 40] = [
    ("experiment.kind", KeyType::Text),
    ("experiment.seed", KeyType::Number),
    ("experiment.output", KeyType::Text),
    ("domain.kind", KeyType::Text),
    ("domain.params", KeyType::List),
    ("domain.radius", KeyType::Number),
    ("domain.semi_x", KeyType::Number),
    ("domain.semi_y", KeyType::Number),
    ("domain.center_x", KeyType::Number),
    ("domain.center_y", KeyType::Number),
    ("domain.amplitude", KeyType::Number),
    ("domain.mode", KeyType::Number),
    ("domain.amplitudes", KeyType::List),
    ("obstacle.kind", KeyType::Text),
    ("obstacle.params", KeyType::List),
    ("obstacle.dimension", KeyType::Number),
    ("obstacle.height", KeyType::Number),
    ("obstacle.curvature", KeyType::Number),
    ("obstacle.plateau_radius", KeyType::Number),
    ("obstacle.smoothing", KeyType::Number),
    ("radial.radius", KeyType::Number),
    ("radial.dirichlet", KeyType::Number),
    ("radial.radii", KeyType::List),
    ("conductivity.sigma_plus", KeyType::Number),
    ("conductivity.sigma_minus", KeyType::Number),
    ("conductivity.outer_radius", KeyType::Number),
    ("conductivity.estimate", KeyType::Text),
    ("probe.interface_radius", KeyType::Number),
    ("probe.schedule", KeyType::List),
    ("calibrate.radius", KeyType::Number),
    ("numeric.h", KeyType::Number),
    ("numeric.tol", KeyType::Number),
    ("numeric.omega", KeyType::Number),
    ("numeric.max_sweeps", KeyType::Number),
    ("numeric.eps", KeyType::List),
    ("numeric.ctol", KeyType::Number),
    ("numeric.samples", KeyType::Number),
    ("numeric.trials", KeyType::Number),
    ("numeric.start_eps", KeyType::Number),
    ("moving_plane.directions", KeyType::Number),
];

pub fn key_type(key: &str) -> Option<KeyType> {
    KEYS.iter().find(|(k, _)| *k == key).map(|(_, t)| *t)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entry {
    pub line: usize,
    pub key: String,
    pub value: String,
}

/// A parsed and validated experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub seed: u64,
    /// Output directory below the output root; defaults to the kind name.
    pub output: String,
    pub domain: DomainSpec,
    /// Perturbation amplitudes for `stability-sweep`.
    pub amplitudes: Vec<f64>,
    pub obstacle: Obstacle,
    pub radial_radius: f64,
    pub dirichlet: f64,
    /// Radii for the boundary-flux monotonicity table of `radial`.
    pub radii: Vec<f64>,
    pub sigma_plus: f64,
    pub sigma_minus: f64,
    pub outer_radius: f64,
    pub estimate: InterfaceEstimate,
    pub interface_radius: f64,
    pub schedule: Vec<f64>,
    pub calibrate_radius: f64,
    pub h: f64,
    pub tol: f64,
    pub omega: Relaxation,
    pub max_sweeps: usize,
    /// ε values; `None` when not configured.
    pub eps: Option<Vec<f64>>,
    pub start_eps: f64,
    pub ctol: Option<f64>,
    pub samples: usize,
    pub trials: usize,
    pub directions: usize,
    entries: Vec<Entry>,
}

fn config_error(line: usize, message: impl Into<String>) -> Error {
    Error::Config {
        line,
        message: message.into(),
    }
}

/// Parses a number, accepting `a/b` fractions and, if `unbounded`, `inf`.
pub fn parse_number(s: &str, unbounded: bool) -> std::result::Result<f64, String> {
    let s = s.trim();
    if unbounded && matches!(s, "inf" | "infinity") {
        return Ok(f64::INFINITY);
    }
    let value = match s.split_once('/') {
        Some((a, b)) => {
            let a: f64 = a.trim().parse().map_err(|_| format!("`{s}` is not a number"))?;
            let b: f64 = b.trim().parse().map_err(|_| format!("`{s}` is not a number"))?;
            a / b
        }
        None => s.parse().map_err(|_| format!("`{s}` is not a number"))?,
    };
    if value.is_finite() {
        Ok(value)
    } else {
        Err(format!("`{s}` is not a finite number"))
    }
}

fn parse_list(s: &str) -> std::result::Result<Vec<f64>, String> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',').map(|v| parse_number(v, false)).collect()
}

struct Lookup<'a> {
    entries: &'a [Entry],
}

impl<'a> Lookup<'a> {
    fn entry(&self, key: &str) -> Option<&'a Entry> {
        self.entries.iter().rev().find(|e| e.key == key)
    }

    fn line(&self, key: &str) -> usize {
        self.entry(key).map_or(0, |e| e.line)
    }

    fn text(&self, key: &str, default: &str) -> String {
        self.entry(key).map_or_else(|| default.to_string(), |e| e.value.clone())
    }

    fn number_with(&self, key: &str, default: f64, unbounded: bool, valid: impl Fn(f64) -> bool, range: &str) -> Result<f64> {
        let Some(e) = self.entry(key) else {
            return Ok(default);
        };
        let v = parse_number(&e.value, unbounded).map_err(|m| config_error(e.line, format!("{key}: {m}")))?;
        if valid(v) {
            Ok(v)
        } else {
            Err(config_error(e.line, format!("{key} = {v} is outside {range}")))
        }
    }

    fn number(&self, key: &str, default: f64, valid: impl Fn(f64) -> bool, range: &str) -> Result<f64> {
        self.number_with(key, default, false, valid, range)
    }

    fn count(&self, key: &str, default: usize, min: usize) -> Result<usize> {
        let v = self.number(
            key,
            default as f64,
            |v| v.fract() == 0.0 && v >= min as f64,
            &format!("the integers ≥ {min}"),
        )?;
        Ok(v as usize)
    }

    fn list(&self, key: &str, valid: impl Fn(f64) -> bool, range: &str) -> Result<Option<Vec<f64>>> {
        let Some(e) = self.entry(key) else {
            return Ok(None);
        };
        let values = parse_list(&e.value).map_err(|m| config_error(e.line, format!("{key}: {m}")))?;
        if let Some(bad) = values.iter().find(|&&v| !valid(v)) {
            return Err(config_error(e.line, format!("{key} contains {bad}, outside {range}")));
        }
        Ok(Some(values))
    }
}

fn positive(v: f64) -> bool {
    v > 0.0
}

/// Named keys each family reads, in `params` order.
fn domain_keys(kind: &str) -> Option<&'static [&'static str]> {
    Some(match kind {
        "ball" => &["domain.radius"],
        "ellipse" => &["domain.semi_x", "domain.semi_y"],
        "shifted-ball" => &["domain.radius", "domain.center_x", "domain.center_y"],
        "perturbed-ball" => &["domain.radius", "domain.amplitude", "domain.mode"],
        _ => return None,
    })
}

fn obstacle_keys(kind: &str) -> Option<&'static [&'static str]> {
    Some(match kind {
        "cap" => &["obstacle.height", "obstacle.curvature"],
        "plateau" => &[
            "obstacle.height",
            "obstacle.curvature",
            "obstacle.plateau_radius",
            "obstacle.smoothing",
        ],
        _ => return None,
    })
}

/// Resolves a family's parameters from either `<section>.params` or the
/// named keys, which may not be mixed.
fn family_params(
    l: &Lookup,
    section: &str,
    kind: &str,
    keys: &[&str],
    defaults: &[f64],
) -> Result<Vec<f64>> {
    let params_key = format!("{section}.params");
    let Some(e) = l.entry(&params_key) else {
        return keys
            .iter()
            .zip(defaults)
            .map(|(k, &d)| {
                l.entry(k)
                    .map_or(Ok(d), |e| parse_number(&e.value, false).map_err(|m| config_error(e.line, format!("{k}: {m}"))))
            })
            .collect::<Result<_>>();
    };
    if let Some(k) = keys.iter().find(|k| l.entry(k).is_some()) {
        return Err(config_error(l.line(k), format!("{k} conflicts with {params_key}")));
    }
    let values = parse_list(&e.value).map_err(|m| config_error(e.line, format!("{params_key}: {m}")))?;
    if values.len() != keys.len() {
        return Err(config_error(
            e.line,
            format!("{params_key} for {kind} takes {} values, found {}", keys.len(), values.len()),
        ));
    }
    Ok(values)
}

fn parse_domain(l: &Lookup) -> Result<DomainSpec> {
    let line = l.line("domain.kind");
    let kind = l.text("domain.kind", "ball");
    let keys = domain_keys(&kind).ok_or_else(|| config_error(line, format!("unknown domain.kind `{kind}`")))?;
    let defaults: &[f64] = match kind.as_str() {
        "ball" => &[1.0],
        "ellipse" => &[1.0, 1.3],
        "shifted-ball" => &[1.0, 0.2, 0.0],
        _ => &[1.0, 0.05, 3.0],
    };
    let p = family_params(l, "domain", &kind, keys, defaults)?;
    let bad = |i: usize, range: &str| {
        let line = l.entry("domain.params").map_or_else(|| l.line(keys[i]), |e| e.line);
        config_error(line, format!("{} = {} is outside {range}", keys[i], p[i]))
    };
    for (i, k) in keys.iter().enumerate() {
        let ok = match *k {
            "domain.center_x" | "domain.center_y" => true,
            "domain.amplitude" => (0.0..1.0).contains(&p[i]),
            "domain.mode" => p[i].fract() == 0.0 && p[i] >= 1.0,
            _ => p[i] > 0.0,
        };
        if !ok {
            let range = match *k {
                "domain.amplitude" => "[0, 1)",
                "domain.mode" => "the integers ≥ 1",
                _ => "(0, ∞)",
            };
            return Err(bad(i, range));
        }
    }
    match kind.as_str() {
        "ball" => DomainSpec::ball(p[0]),
        "ellipse" => DomainSpec::ellipse(p[0], p[1]),
        "shifted-ball" => DomainSpec::shifted_ball(p[0], [p[1], p[2]]),
        _ => DomainSpec::perturbed_ball(p[0], p[1], p[2] as u32),
    }
    .map_err(|e| config_error(line, e.to_string()))
}

fn parse_obstacle(l: &Lookup) -> Result<Obstacle> {
    let line = l.line("obstacle.kind");
    let kind = l.text("obstacle.kind", "cap");
    let keys = obstacle_keys(&kind).ok_or_else(|| config_error(line, format!("unknown obstacle.kind `{kind}`")))?;
    let dimension = l.count("obstacle.dimension", 2, 2)?;
    let p = family_params(l, "obstacle", &kind, keys, &[1.0, 8.0, 0.05, 0.05])?;
    if let Some(i) = p.iter().position(|&v| v <= 0.0) {
        let line = l.entry("obstacle.params").map_or_else(|| l.line(keys[i]), |e| e.line);
        return Err(config_error(line, format!("{} = {} is outside (0, ∞)", keys[i], p[i])));
    }
    match kind.as_str() {
        "cap" => Obstacle::cap(dimension, p[0], p[1]),
        _ => Obstacle::plateau(dimension, p[0], p[1], p[2], p[3]),
    }
    .map_err(|e| config_error(line, e.to_string()))
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (k, raw) in text.lines().enumerate() {
            let line = k + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| config_error(line, format!("expected `section.key = value`, found `{content}`")))?;
            let key = key.trim();
            if key_type(key).is_none() {
                return Err(config_error(line, format!("unknown key `{key}`")));
            }
            entries.push(Entry {
                line,
                key: key.to_string(),
                value: value.trim().to_string(),
            });
        }
        Self::from_entries(entries)
    }

    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    /// The config with `key` set to `value`, revalidated. Used by sweeps.
    pub fn with_value(&self, key: &str, value: &str) -> Result<Self> {
        if key_type(key).is_none() {
            return Err(config_error(0, format!("unknown key `{key}`")));
        }
        let mut entries = self.entries.clone();
        entries.push(Entry {
            line: 0,
            key: key.to_string(),
            value: value.to_string(),
        });
        Self::from_entries(entries)
    }

    /// Config text reproducing this experiment, one line per effective entry.
    pub fn echo(&self) -> String {
        let mut out = String::new();
        for (k, _) in KEYS {
            if let Some(e) = self.entries.iter().rev().find(|e| e.key == k) {
                out.push_str(&format!("{} = {}\n", e.key, e.value));
            }
        }
        out
    }

    fn from_entries(entries: Vec<Entry>) -> Result<Self> {
        let l = Lookup { entries: &entries };
        let kind_entry = l
            .entry("experiment.kind")
            .ok_or_else(|| config_error(0, "missing experiment.kind"))?;
        let kind = kind_entry
            .value
            .parse::<ExperimentKind>()
            .map_err(|m| config_error(kind_entry.line, m))?;
        let seed = l.number("experiment.seed", 0.0, |v| v.fract() == 0.0 && v >= 0.0, "the integers ≥ 0")? as u64;
        let output = l.text("experiment.output", kind.name());
        if output.is_empty() || output.contains("..") {
            return Err(config_error(l.line("experiment.output"), "experiment.output must be a plain relative name"));
        }

        let domain = parse_domain(&l)?;
        let amplitudes = l
            .list("domain.amplitudes", |v| (0.0..1.0).contains(&v), "[0, 1)")?
            .unwrap_or_else(|| vec![0.02, 0.05, 0.1]);
        let obstacle = parse_obstacle(&l)?;

        let estimate_line = l.line("conductivity.estimate");
        let estimate = match l.text("conductivity.estimate", "minimax").as_str() {
            "minimax" => InterfaceEstimate::Minimax,
            "mean" => InterfaceEstimate::Mean,
            other => {
                return Err(config_error(
                    estimate_line,
                    format!("conductivity.estimate must be minimax or mean, found `{other}`"),
                ))
            }
        };

        let omega = match l.entry("numeric.omega") {
            Some(e) if e.value == "auto" => Relaxation::Auto,
            Some(_) => Relaxation::Fixed(l.number("numeric.omega", 1.5, |v| (1.0..2.0).contains(&v), "[1, 2)")?),
            None => Relaxation::Auto,
        };

        Ok(Self {
            kind,
            seed,
            output,
            domain,
            amplitudes,
            obstacle,
            radial_radius: l.number_with("radial.radius", 1.0, true, positive, "(0, ∞]")?,
            dirichlet: l.number("radial.dirichlet", 0.0, |v| v >= 0.0, "[0, ∞)")?,
            radii: l
                .list("radial.radii", positive, "(0, ∞)")?
                .unwrap_or_else(|| vec![0.5, 0.75, 1.0, 1.5, 2.0]),
            sigma_plus: l.number("conductivity.sigma_plus", 2.0, positive, "(0, ∞)")?,
            sigma_minus: l.number("conductivity.sigma_minus", 1.0, positive, "(0, ∞)")?,
            outer_radius: l.number_with("conductivity.outer_radius", 2.0, true, positive, "(0, ∞]")?,
            estimate,
            interface_radius: l.number("probe.interface_radius", 1.0, positive, "(0, ∞)")?,
            schedule: l
                .list("probe.schedule", positive, "(0, ∞)")?
                .unwrap_or_else(|| vec![2.0, 4.0, 8.0, 16.0]),
            calibrate_radius: l.number("calibrate.radius", 1.0, positive, "(0, ∞)")?,
            h: l.number("numeric.h", 1.0 / 128.0, |v| v > 0.0 && v <= 0.5, "(0, 1/2]")?,
            tol: l.number("numeric.tol", 1e-10, positive, "(0, ∞)")?,
            omega,
            max_sweeps: l.count("numeric.max_sweeps", 200_000, 1)?,
            eps: l.list("numeric.eps", |v| v > 0.0 && v < 1.0, "(0, 1)")?,
            start_eps: l.number("numeric.start_eps", 0.1, |v| v > 0.0 && v < 1.0, "(0, 1)")?,
            ctol: l.entry("numeric.ctol").map(|_| l.number("numeric.ctol", 0.0, positive, "(0, ∞)")).transpose()?,
            samples: l.count("numeric.samples", 256, 4)?,
            trials: l.count("numeric.trials", 16, 0)?,
            directions: l.count("moving_plane.directions", 8, 1)?,
            entries,
        })
    }

    pub fn psor(&self) -> PsorOptions {
        PsorOptions {
            omega: self.omega,
            tol: self.tol,
            max_sweeps: self.max_sweeps,
            record_energy: false,
        }
    }

    pub fn penalty(&self) -> PenaltyOptions {
        PenaltyOptions {
            omega: self.omega,
            tol: self.tol,
            max_sweeps: self.max_sweeps,
            start_eps: self.start_eps,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_fractions_and_defaults() {
        let cfg = ExperimentConfig::parse(
            "# calibration\nexperiment.kind = calibrate  # torsion\n\ncalibrate.radius = 1\nnumeric.h = 1/128\n",
        )
        .unwrap();
        assert_eq!(cfg.kind, ExperimentKind::Calibrate);
        assert_eq!(cfg.h, 1.0 / 128.0);
        assert_eq!(cfg.omega, Relaxation::Auto);
        assert_eq!(cfg.output, "calibrate");
        assert_eq!(cfg.echo(), "experiment.kind = calibrate\ncalibrate.radius = 1\nnumeric.h = 1/128\n");
    }

    #[test]
    fn errors_name_the_line() {
        let err = ExperimentConfig::parse("experiment.kind = serrin\ndomain.colour = red\n").unwrap_err();
        assert!(matches!(err, Error::Config { line: 2, .. }), "{err}");
        let err = ExperimentConfig::parse("experiment.kind = serrin\nnumeric.h = abc\n").unwrap_err();
        assert!(matches!(err, Error::Config { line: 2, .. }), "{err}");
        let err = ExperimentConfig::parse("experiment.kind = serrin\nnumeric.omega = 2.5\n").unwrap_err();
        assert!(matches!(err, Error::Config { line: 2, .. }), "{err}");
        let err = ExperimentConfig::parse("experiment.kind = serrin\njust words\n").unwrap_err();
        assert!(matches!(err, Error::Config { line: 2, .. }), "{err}");
        let err = ExperimentConfig::parse("experiment.kind = magic\n").unwrap_err();
        assert!(matches!(err, Error::Config { line: 1, .. }), "{err}");
        assert!(ExperimentConfig::parse("numeric.h = 1/64\n").is_err());
    }

    #[test]
    fn domains_and_overrides() {
        let cfg = ExperimentConfig::parse(
            "experiment.kind = serrin\ndomain.kind = ellipse\ndomain.semi_y = 1.3\nnumeric.omega = 1.2\n",
        )
        .unwrap();
        assert_eq!(cfg.domain, DomainSpec::ellipse(1.0, 1.3).unwrap());
        assert_eq!(cfg.omega, Relaxation::Fixed(1.2));
        let swept = cfg.with_value("numeric.h", "1/64").unwrap();
        assert_eq!(swept.h, 1.0 / 64.0);
        assert!(cfg.with_value("numeric.h", "-1").is_err());
        let inf = ExperimentConfig::parse("experiment.kind = radial\nradial.radius = inf\n").unwrap();
        assert!(inf.radial_radius.is_infinite());
        let listed = ExperimentConfig::parse("experiment.kind = exterior-probe\nprobe.schedule = 4, 8,16\n").unwrap();
        assert_eq!(listed.schedule, vec![4.0, 8.0, 16.0]);
    }

    #[test]
    fn family_params_lists() {
        let cfg = ExperimentConfig::parse(
            "experiment.kind = serrin\ndomain.kind = shifted-ball\ndomain.params = 1, 0.1, -0.2\nobstacle.kind = plateau\nobstacle.params = 1, 8, 0.05, 0.02\n",
        )
        .unwrap();
        assert_eq!(cfg.domain, DomainSpec::shifted_ball(1.0, [0.1, -0.2]).unwrap());
        assert_eq!(cfg.obstacle, Obstacle::plateau(2, 1.0, 8.0, 0.05, 0.02).unwrap());
        let err = ExperimentConfig::parse("experiment.kind = serrin\ndomain.kind = ellipse\ndomain.params = 1\n").unwrap_err();
        assert!(matches!(err, Error::Config { line: 3, .. }), "{err}");
        let err = ExperimentConfig::parse("experiment.kind = serrin\ndomain.params = 2\ndomain.radius = 1\n").unwrap_err();
        assert!(matches!(err, Error::Config { line: 3, .. }), "{err}");
        let err = ExperimentConfig::parse("experiment.kind = serrin\nobstacle.params = 1, -8\n").unwrap_err();
        assert!(matches!(err, Error::Config { line: 2, .. }), "{err}");
    }
}

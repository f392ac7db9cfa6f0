// SPDX-License-Identifier: Apache-2.0
//! Experiment configuration: a flat `key = value` format with `[section]`
//! headers, `#` comments and optional unit suffixes.
//!
//! Bare numbers are taken in the caller's unit system. With a suffix, times
//! are converted to μs and angular frequencies to rad/μs, so `MHz` means
//! cyclic megahertz and is multiplied by 2π.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use echo_cqed::model::{validate, PulseSequence, SystemParams};
use echo_cqed::Error as CoreError;

use crate::error::{ConfigError, ConfigErrors};

/// Named pipeline run by the driver.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    Fid,
    Cpmg,
    Eseem,
    Transmission,
    Signal,
    OracleCompare,
    Reconstruct,
}

impl Experiment {
    pub const ALL: [Experiment; 7] = [
        Experiment::Fid,
        Experiment::Cpmg,
        Experiment::Eseem,
        Experiment::Transmission,
        Experiment::Signal,
        Experiment::OracleCompare,
        Experiment::Reconstruct,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Fid => "fid",
            Experiment::Cpmg => "cpmg",
            Experiment::Eseem => "eseem",
            Experiment::Transmission => "transmission",
            Experiment::Signal => "signal",
            Experiment::OracleCompare => "oracle-compare",
            Experiment::Reconstruct => "reconstruct",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|e| e.name() == s)
    }

    /// Whether the pipeline needs a Hahn or CPMG sequence.
    fn needs_echoes(self) -> bool {
        matches!(self, Experiment::Cpmg | Experiment::Signal | Experiment::OracleCompare | Experiment::Reconstruct)
    }

    /// Whether the pipeline needs the nuclear-spin environment.
    fn needs_spin(self) -> bool {
        matches!(self, Experiment::Eseem | Experiment::Transmission)
    }
}

/// Pulse sequence family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SequenceKind {
    Fid,
    Hahn,
    Cpmg,
    Custom,
}

impl SequenceKind {
    fn name(self) -> &'static str {
        match self {
            SequenceKind::Fid => "fid",
            SequenceKind::Hahn => "hahn",
            SequenceKind::Cpmg => "cpmg",
            SequenceKind::Custom => "custom",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        [SequenceKind::Fid, SequenceKind::Hahn, SequenceKind::Cpmg, SequenceKind::Custom]
            .into_iter()
            .find(|k| k.name() == s)
    }
}

/// Pulse sequence as written in the file.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceSpec {
    pub kind: SequenceKind,
    pub n: usize,
    pub tau: f64,
    pub times: Vec<f64>,
}

impl SequenceSpec {
    pub fn build(&self) -> PulseSequence<f64> {
        match self.kind {
            SequenceKind::Fid => PulseSequence::Fid,
            SequenceKind::Hahn => PulseSequence::Hahn { tau: self.tau },
            SequenceKind::Cpmg => PulseSequence::Cpmg { n: self.n, tau: self.tau },
            SequenceKind::Custom => PulseSequence::Custom { times: self.times.clone() },
        }
    }

    /// Number of echoes of a Hahn or CPMG sequence.
    pub fn echoes(&self) -> usize {
        match self.kind {
            SequenceKind::Hahn => 1,
            SequenceKind::Cpmg => self.n,
            _ => 0,
        }
    }
}

/// Single nuclear spin-½ environment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpinSpec {
    pub hyperfine: f64,
    pub field_x: f64,
    pub field_z: f64,
    pub polarization: f64,
}

/// Extra noise on top of the static part implied by `T2*`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SpectrumSpec {
    /// Two-column `(ω, S_c)` table, resolved against the config directory.
    pub table: Option<PathBuf>,
    pub lorentzian_variance: f64,
    pub lorentzian_rate: f64,
}

/// Sampling grids.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub t_start: f64,
    pub t_stop: f64,
    pub t_points: usize,
    pub omega_points: usize,
    pub tau_stop: f64,
    pub tau_points: usize,
}

impl GridSpec {
    pub fn times(&self) -> Vec<f64> {
        linspace(self.t_start, self.t_stop, self.t_points)
    }
}

pub(crate) fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n <= 1 {
        return vec![a];
    }
    let h = (b - a) / (n - 1) as f64;
    (0..n).map(|k| a + h * k as f64).collect()
}

/// Which wavepacket form builds the emitted field.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Wavepacket {
    Exact,
    Simplified,
}

/// Cavity-field options.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CavitySpec {
    pub wavepacket: Wavepacket,
    pub sigma_x0: f64,
}

/// Line treatment in the oracle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LineKind {
    Markovian,
    Discretized,
}

/// Oracle options.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleSpec {
    pub line: LineKind,
    pub modes: usize,
    pub half_width: f64,
    pub panel_order: usize,
}

/// Reconstruction options.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReconstructSpec {
    pub threshold: f64,
    pub peak_noise: f64,
    pub sweep_points: usize,
}

/// Signal options.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignalSpec {
    /// Coupling window of the pulsed protocol; zero disables it.
    pub t_on: f64,
}

/// Fully resolved experiment description.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
    pub params: SystemParams<f64>,
    pub sequence: SequenceSpec,
    pub spin: SpinSpec,
    pub spectrum: SpectrumSpec,
    pub grid: GridSpec,
    pub cavity: CavitySpec,
    pub oracle: OracleSpec,
    pub reconstruct: ReconstructSpec,
    pub signal: SignalSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Rate,
    Time,
    Real,
    Count,
    Text,
    TimeList,
    Path,
}

const SCHEMA: &[(&str, &str, Kind)] = &[
    ("", "experiment", Kind::Text),
    ("", "seed", Kind::Count),
    ("", "output_dir", Kind::Path),
    ("params", "qubit_splitting", Kind::Rate),
    ("params", "detuning", Kind::Rate),
    ("params", "coupling", Kind::Rate),
    ("params", "kappa", Kind::Rate),
    ("params", "kappa_1", Kind::Rate),
    ("params", "kappa_2", Kind::Rate),
    ("params", "kappa_ext", Kind::Rate),
    ("params", "dephasing", Kind::Rate),
    ("params", "t2star", Kind::Time),
    ("sequence", "kind", Kind::Text),
    ("sequence", "n", Kind::Count),
    ("sequence", "tau", Kind::Time),
    ("sequence", "times", Kind::TimeList),
    ("spin", "hyperfine", Kind::Rate),
    ("spin", "field_x", Kind::Rate),
    ("spin", "field_z", Kind::Rate),
    ("spin", "polarization", Kind::Real),
    ("spectrum", "table", Kind::Path),
    ("spectrum", "lorentzian_variance", Kind::Real),
    ("spectrum", "lorentzian_rate", Kind::Rate),
    ("grid", "t_start", Kind::Time),
    ("grid", "t_stop", Kind::Time),
    ("grid", "t_points", Kind::Count),
    ("grid", "omega_points", Kind::Count),
    ("grid", "tau_stop", Kind::Time),
    ("grid", "tau_points", Kind::Count),
    ("cavity", "wavepacket", Kind::Text),
    ("cavity", "sigma_x0", Kind::Real),
    ("oracle", "line", Kind::Text),
    ("oracle", "modes", Kind::Count),
    ("oracle", "half_width", Kind::Rate),
    ("oracle", "panel_order", Kind::Count),
    ("reconstruct", "threshold", Kind::Real),
    ("reconstruct", "peak_noise", Kind::Real),
    ("reconstruct", "sweep_points", Kind::Count),
    ("signal", "t_on", Kind::Time),
];

const RATE_UNITS: &[(&str, f64)] = &[
    ("rad/us", 1.0),
    ("1/us", 1.0),
    ("rad/s", 1e-6),
    ("1/s", 1e-6),
    ("Hz", 2.0 * std::f64::consts::PI * 1e-6),
    ("kHz", 2.0 * std::f64::consts::PI * 1e-3),
    ("MHz", 2.0 * std::f64::consts::PI),
    ("GHz", 2.0 * std::f64::consts::PI * 1e3),
];

const TIME_UNITS: &[(&str, f64)] = &[("us", 1.0), ("ns", 1e-3), ("ms", 1e3), ("s", 1e6)];

#[derive(Debug, Clone, PartialEq)]
enum Value {
    Num(f64),
    Count(u64),
    Text(String),
    List(Vec<f64>),
}

fn parse_number(text: &str, kind: Kind) -> Result<f64, String> {
    let text = text.trim();
    let split = text.find(|c: char| c.is_whitespace()).map(|i| (&text[..i], text[i..].trim()));
    let (number, unit) = split.unwrap_or((text, ""));
    let value: f64 = number.parse().map_err(|_| format!("`{number}` is not a number"))?;
    if !value.is_finite() {
        return Err(format!("`{number}` is not finite"));
    }
    if unit.is_empty() {
        return Ok(value);
    }
    let (own, other, what) = match kind {
        Kind::Rate => (RATE_UNITS, TIME_UNITS, "a frequency or rate"),
        Kind::Time => (TIME_UNITS, RATE_UNITS, "a time"),
        _ => return Err(format!("this key takes a plain number, found unit `{unit}`")),
    };
    if let Some((_, f)) = own.iter().find(|(u, _)| *u == unit) {
        return Ok(value * f);
    }
    if other.iter().any(|(u, _)| *u == unit) {
        return Err(format!("unit `{unit}` does not fit {what}"));
    }
    let known: Vec<&str> = own.iter().map(|(u, _)| *u).collect();
    Err(format!("unknown unit `{unit}` for {what}; expected one of {}", known.join(", ")))
}

fn parse_value(text: &str, kind: Kind) -> Result<Value, String> {
    match kind {
        Kind::Rate | Kind::Time | Kind::Real => parse_number(text, kind).map(Value::Num),
        Kind::Count => text.trim().parse::<u64>().map(Value::Count).map_err(|_| format!("`{text}` is not a non-negative integer")),
        Kind::Text | Kind::Path => {
            if text.is_empty() {
                Err("empty value".into())
            } else {
                Ok(Value::Text(text.to_string()))
            }
        }
        Kind::TimeList => {
            if text.trim().is_empty() {
                return Ok(Value::List(Vec::new()));
            }
            text.split(',').map(|item| parse_number(item, Kind::Time)).collect::<Result<Vec<_>, _>>().map(Value::List)
        }
    }
}

struct Entries {
    map: BTreeMap<(String, String), (Value, usize)>,
}

impl Entries {
    fn get(&self, section: &str, key: &str) -> Option<&(Value, usize)> {
        self.map.get(&(section.to_string(), key.to_string()))
    }

    fn line(&self, section: &str, key: &str) -> usize {
        self.get(section, key).map_or(0, |(_, l)| *l)
    }

    fn num(&self, section: &str, key: &str) -> Option<f64> {
        match self.get(section, key) {
            Some((Value::Num(v), _)) => Some(*v),
            _ => None,
        }
    }

    fn count(&self, section: &str, key: &str) -> Option<u64> {
        match self.get(section, key) {
            Some((Value::Count(v), _)) => Some(*v),
            _ => None,
        }
    }

    fn text(&self, section: &str, key: &str) -> Option<&str> {
        match self.get(section, key) {
            Some((Value::Text(v), _)) => Some(v),
            _ => None,
        }
    }

    fn list(&self, section: &str, key: &str) -> Option<&[f64]> {
        match self.get(section, key) {
            Some((Value::List(v), _)) => Some(v),
            _ => None,
        }
    }
}

fn scan(text: &str) -> Result<Entries, ConfigErrors> {
    let mut errors = Vec::new();
    let mut map = BTreeMap::new();
    let mut section = String::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            match rest.strip_suffix(']') {
                Some(name) if SCHEMA.iter().any(|(s, _, _)| *s == name.trim()) && !name.trim().is_empty() => {
                    section = name.trim().to_string();
                }
                Some(name) => errors.push(ConfigError::new(line_no, format!("unknown section `[{}]`", name.trim()))),
                None => errors.push(ConfigError::new(line_no, "malformed section header")),
            }
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            errors.push(ConfigError::new(line_no, "expected `key = value`"));
            continue;
        };
        let (key, value) = (key.trim(), value.trim());
        let Some(&(_, _, kind)) = SCHEMA.iter().find(|(s, k, _)| *s == section && *k == key) else {
            let place = if section.is_empty() { "at top level".to_string() } else { format!("in [{section}]") };
            errors.push(ConfigError::new(line_no, format!("unknown key `{key}` {place}")));
            continue;
        };
        match parse_value(value, kind) {
            Ok(v) => {
                if let Some((_, first)) = map.insert((section.clone(), key.to_string()), (v, line_no)) {
                    errors.push(ConfigError::new(line_no, format!("duplicate key `{key}`, first set on line {first}")));
                }
            }
            Err(msg) => errors.push(ConfigError::new(line_no, format!("`{key}`: {msg}"))),
        }
    }
    if errors.is_empty() {
        Ok(Entries { map })
    } else {
        Err(ConfigErrors(errors))
    }
}

/// Parses a configuration, resolving relative paths against the current
/// directory.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigErrors> {
    parse_config_in(text, None)
}

/// Parses a configuration, resolving relative paths against `base`.
pub fn parse_config_in(text: &str, base: Option<&Path>) -> Result<ExperimentConfig, ConfigErrors> {
    let e = scan(text)?;
    let mut errors = Vec::new();
    let mut fail = |line: usize, msg: String| errors.push(ConfigError::new(line, msg));

    let experiment = match e.text("", "experiment") {
        Some(name) => Experiment::parse(name).unwrap_or_else(|| {
            let names: Vec<&str> = Experiment::ALL.iter().map(|x| x.name()).collect();
            fail(e.line("", "experiment"), format!("unknown experiment `{name}`; expected one of {}", names.join(", ")));
            Experiment::Fid
        }),
        None => {
            fail(0, "missing required key `experiment`".into());
            Experiment::Fid
        }
    };

    let reference = SystemParams::<f64>::weak_coupling_reference();
    let num = |s: &str, k: &str, d: f64| e.num(s, k).unwrap_or(d);
    let kappa = num("params", "kappa", reference.kappa);
    let kappa_in = num("params", "kappa_1", 0.0);
    let kappa_ext = num("params", "kappa_ext", 0.0);
    let params = SystemParams {
        qubit_splitting: num("params", "qubit_splitting", reference.qubit_splitting),
        detuning: num("params", "detuning", reference.detuning),
        coupling: num("params", "coupling", reference.coupling),
        kappa,
        kappa_in,
        kappa_out: num("params", "kappa_2", kappa - kappa_in - kappa_ext),
        kappa_ext,
        dephasing: num("params", "dephasing", reference.dephasing),
        t2star: num("params", "t2star", reference.t2star),
    };

    let kind = match e.text("sequence", "kind") {
        Some(name) => SequenceKind::parse(name).unwrap_or_else(|| {
            fail(e.line("sequence", "kind"), format!("unknown sequence kind `{name}`; expected fid, hahn, cpmg or custom"));
            SequenceKind::Cpmg
        }),
        None => SequenceKind::Cpmg,
    };
    let tau = match e.num("sequence", "tau") {
        Some(t) => t,
        None => {
            if matches!(kind, SequenceKind::Hahn | SequenceKind::Cpmg) && e.get("sequence", "kind").is_some() {
                fail(0, "missing required key `tau` in [sequence]".into());
            }
            10.0 / kappa
        }
    };
    let sequence = SequenceSpec {
        kind,
        n: e.count("sequence", "n").unwrap_or(5) as usize,
        tau,
        times: e.list("sequence", "times").map(<[f64]>::to_vec).unwrap_or_default(),
    };
    if kind == SequenceKind::Cpmg && sequence.n == 0 {
        fail(e.line("sequence", "n"), "a CPMG sequence needs n >= 1".into());
    }
    if experiment.needs_echoes() && !matches!(kind, SequenceKind::Hahn | SequenceKind::Cpmg) {
        fail(e.line("sequence", "kind"), format!("experiment `{}` needs a hahn or cpmg sequence", experiment.name()));
    }

    if experiment.needs_spin() && e.num("spin", "hyperfine").is_none() {
        fail(0, "missing required key `hyperfine` in [spin]".into());
    }
    let spin = SpinSpec {
        hyperfine: num("spin", "hyperfine", 0.0),
        field_x: num("spin", "field_x", 0.0),
        field_z: num("spin", "field_z", 0.0),
        polarization: num("spin", "polarization", 0.0),
    };
    if !(-1.0..=1.0).contains(&spin.polarization) {
        fail(e.line("spin", "polarization"), "`polarization` must lie in [-1, 1]".into());
    }

    let table = e.text("spectrum", "table").map(|p| match base {
        Some(dir) if Path::new(p).is_relative() => dir.join(p),
        _ => PathBuf::from(p),
    });
    if let Some(path) = &table {
        if !path.is_file() {
            fail(e.line("spectrum", "table"), format!("spectrum table `{}` does not exist", path.display()));
        }
    }
    let spectrum = SpectrumSpec {
        table,
        lorentzian_variance: num("spectrum", "lorentzian_variance", 0.0),
        lorentzian_rate: num("spectrum", "lorentzian_rate", 0.0),
    };
    if spectrum.lorentzian_variance < 0.0 || (spectrum.lorentzian_variance > 0.0 && !(spectrum.lorentzian_rate > 0.0)) {
        fail(e.line("spectrum", "lorentzian_variance"), "a Lorentzian needs variance >= 0 and rate > 0".into());
    }

    if experiment == Experiment::Fid && (spectrum.table.is_some() || spectrum.lorentzian_variance > 0.0) {
        let line = e.line("spectrum", "table").max(e.line("spectrum", "lorentzian_variance"));
        fail(line, "experiment `fid` uses the static T2* noise and dephasing only; remove [spectrum]".into());
    }

    let echo_span = sequence.echoes() as f64 * sequence.tau;
    let wm = echo_cqed::spinmodel::spin_frequencies(&spin_env(&spin)).1;
    let grid = GridSpec {
        t_start: num("grid", "t_start", 0.0),
        t_stop: num("grid", "t_stop", echo_span + 10.0 / kappa + 3.0 * params.t2star),
        t_points: e.count("grid", "t_points").unwrap_or(2001) as usize,
        omega_points: e.count("grid", "omega_points").unwrap_or(2001) as usize,
        tau_stop: num("grid", "tau_stop", if wm > 0.0 { 100.0 / wm } else { 100.0 }),
        tau_points: e.count("grid", "tau_points").unwrap_or(4096) as usize,
    };
    if grid.t_points < 2 || !(grid.t_stop > grid.t_start) || grid.t_start < 0.0 {
        fail(e.line("grid", "t_points").max(e.line("grid", "t_stop")), "time grid needs t_points >= 2 and 0 <= t_start < t_stop".into());
    }
    if grid.omega_points < 3 {
        fail(e.line("grid", "omega_points"), "`omega_points` must be at least 3".into());
    }
    if grid.tau_points < 8 || !(grid.tau_stop > 0.0) {
        fail(e.line("grid", "tau_points").max(e.line("grid", "tau_stop")), "delay grid needs tau_points >= 8 and tau_stop > 0".into());
    }

    let wavepacket = match e.text("cavity", "wavepacket") {
        None | Some("exact") => Wavepacket::Exact,
        Some("simplified") => Wavepacket::Simplified,
        Some(other) => {
            fail(e.line("cavity", "wavepacket"), format!("unknown wavepacket form `{other}`; expected exact or simplified"));
            Wavepacket::Exact
        }
    };
    let cavity = CavitySpec { wavepacket, sigma_x0: num("cavity", "sigma_x0", 1.0) };

    let line = match e.text("oracle", "line") {
        None | Some("markovian") => LineKind::Markovian,
        Some("discretized") => LineKind::Discretized,
        Some(other) => {
            fail(e.line("oracle", "line"), format!("unknown line treatment `{other}`; expected markovian or discretized"));
            LineKind::Markovian
        }
    };
    let oracle = OracleSpec {
        line,
        modes: e.count("oracle", "modes").unwrap_or(512) as usize,
        half_width: num("oracle", "half_width", 20.0 * kappa),
        panel_order: e.count("oracle", "panel_order").unwrap_or(8) as usize,
    };
    if oracle.panel_order == 0 || oracle.modes < 2 {
        fail(e.line("oracle", "panel_order").max(e.line("oracle", "modes")), "oracle needs panel_order >= 1 and modes >= 2".into());
    }

    let reconstruct = ReconstructSpec {
        threshold: num("reconstruct", "threshold", 1e-6),
        peak_noise: num("reconstruct", "peak_noise", 0.0),
        sweep_points: e.count("reconstruct", "sweep_points").map_or(sequence.echoes() + 1, |v| v as usize),
    };
    if reconstruct.sweep_points < sequence.echoes() + 1 {
        fail(e.line("reconstruct", "sweep_points"), format!("`sweep_points` must be at least {}", sequence.echoes() + 1));
    }
    if reconstruct.peak_noise < 0.0 {
        fail(e.line("reconstruct", "peak_noise"), "`peak_noise` must be non-negative".into());
    }
    let signal = SignalSpec { t_on: num("signal", "t_on", 0.0) };

    if let Err(err) = validate(&params, &sequence.build()) {
        let line = match err {
            CoreError::KappaPartition { .. } => ["kappa", "kappa_1", "kappa_2", "kappa_ext"]
                .iter()
                .map(|k| e.line("params", k))
                .filter(|&l| l > 0)
                .max()
                .unwrap_or(0),
            CoreError::UnorderedPulses => e.line("sequence", "times"),
            CoreError::InvalidParameter { name, .. } => {
                let key = match name {
                    "kappa_in" => "kappa_1",
                    "kappa_out" => "kappa_2",
                    other => other,
                };
                e.line("params", key).max(e.line("sequence", key))
            }
            _ => 0,
        };
        fail(line, err.to_string());
    }

    if !errors.is_empty() {
        return Err(ConfigErrors(errors));
    }
    Ok(ExperimentConfig {
        experiment,
        seed: e.count("", "seed").unwrap_or(0),
        output_dir: e.text("", "output_dir").map(PathBuf::from),
        params,
        sequence,
        spin,
        spectrum,
        grid,
        cavity,
        oracle,
        reconstruct,
        signal,
    })
}

pub(crate) fn spin_env(spin: &SpinSpec) -> echo_cqed::spinmodel::NuclearSpinEnv<f64> {
    echo_cqed::spinmodel::NuclearSpinEnv { hyperfine: spin.hyperfine, field_x: spin.field_x, field_z: spin.field_z }
}

impl ExperimentConfig {
    /// Serialises every resolved value as a bare number, so that parsing the
    /// output yields an identical configuration.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "experiment = {}", self.experiment.name());
        let _ = writeln!(out, "seed = {}", self.seed);
        if let Some(dir) = &self.output_dir {
            let _ = writeln!(out, "output_dir = {}", dir.display());
        }
        let p = &self.params;
        let mut section = |name: &str, rows: Vec<(&str, String)>| {
            let _ = writeln!(out, "\n[{name}]");
            for (k, v) in rows {
                let _ = writeln!(out, "{k} = {v}");
            }
        };
        section(
            "params",
            vec![
                ("qubit_splitting", p.qubit_splitting.to_string()),
                ("detuning", p.detuning.to_string()),
                ("coupling", p.coupling.to_string()),
                ("kappa", p.kappa.to_string()),
                ("kappa_1", p.kappa_in.to_string()),
                ("kappa_2", p.kappa_out.to_string()),
                ("kappa_ext", p.kappa_ext.to_string()),
                ("dephasing", p.dephasing.to_string()),
                ("t2star", p.t2star.to_string()),
            ],
        );
        let s = &self.sequence;
        let times: Vec<String> = s.times.iter().map(f64::to_string).collect();
        section(
            "sequence",
            vec![
                ("kind", s.kind.name().into()),
                ("n", s.n.to_string()),
                ("tau", s.tau.to_string()),
                ("times", times.join(", ")),
            ],
        );
        section(
            "spin",
            vec![
                ("hyperfine", self.spin.hyperfine.to_string()),
                ("field_x", self.spin.field_x.to_string()),
                ("field_z", self.spin.field_z.to_string()),
                ("polarization", self.spin.polarization.to_string()),
            ],
        );
        let mut rows = Vec::new();
        if let Some(t) = &self.spectrum.table {
            rows.push(("table", t.display().to_string()));
        }
        rows.push(("lorentzian_variance", self.spectrum.lorentzian_variance.to_string()));
        rows.push(("lorentzian_rate", self.spectrum.lorentzian_rate.to_string()));
        section("spectrum", rows);
        let g = &self.grid;
        section(
            "grid",
            vec![
                ("t_start", g.t_start.to_string()),
                ("t_stop", g.t_stop.to_string()),
                ("t_points", g.t_points.to_string()),
                ("omega_points", g.omega_points.to_string()),
                ("tau_stop", g.tau_stop.to_string()),
                ("tau_points", g.tau_points.to_string()),
            ],
        );
        section(
            "cavity",
            vec![
                ("wavepacket", if self.cavity.wavepacket == Wavepacket::Exact { "exact" } else { "simplified" }.into()),
                ("sigma_x0", self.cavity.sigma_x0.to_string()),
            ],
        );
        section(
            "oracle",
            vec![
                ("line", if self.oracle.line == LineKind::Markovian { "markovian" } else { "discretized" }.into()),
                ("modes", self.oracle.modes.to_string()),
                ("half_width", self.oracle.half_width.to_string()),
                ("panel_order", self.oracle.panel_order.to_string()),
            ],
        );
        section(
            "reconstruct",
            vec![
                ("threshold", self.reconstruct.threshold.to_string()),
                ("peak_noise", self.reconstruct.peak_noise.to_string()),
                ("sweep_points", self.reconstruct.sweep_points.to_string()),
            ],
        );
        section("signal", vec![("t_on", self.signal.t_on.to_string())]);
        out
    }
}

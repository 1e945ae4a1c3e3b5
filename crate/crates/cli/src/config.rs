//! Experiment configs. Every key is optional except the measure source;
//! unknown sections and keys are rejected before anything runs.

use std::fmt::{self, Write as _};
use std::path::PathBuf;
use std::str::FromStr;

use isomwalk::group::{DEFAULT_MAX_ORDER, DEFAULT_WORD_LENGTH};
use isomwalk::limits::{FrequencySpec, MultiscaleSpec};

use crate::ini::{self, Entry, ParseError, Section};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Experiment {
    Params,
    Simulate,
    Spectrum,
    VerifyClt,
    VerifyLlt,
    VerifyMultiscale,
    VerifyFourier,
    Conditions,
}

impl Experiment {
    pub const ALL: [Experiment; 8] = [
        Experiment::Params,
        Experiment::Simulate,
        Experiment::Spectrum,
        Experiment::VerifyClt,
        Experiment::VerifyLlt,
        Experiment::VerifyMultiscale,
        Experiment::VerifyFourier,
        Experiment::Conditions,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Experiment::Params => "params",
            Experiment::Simulate => "simulate",
            Experiment::Spectrum => "spectrum",
            Experiment::VerifyClt => "verify-clt",
            Experiment::VerifyLlt => "verify-llt",
            Experiment::VerifyMultiscale => "verify-multiscale",
            Experiment::VerifyFourier => "verify-fourier",
            Experiment::Conditions => "conditions",
        }
    }
}

impl FromStr for Experiment {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Experiment::ALL.into_iter().find(|e| e.as_str() == s).ok_or_else(|| format!("unknown experiment `{s}`"))
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct InlineAtom {
    pub weight: f64,
    pub rotation: Vec<f64>,
    pub translation: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum MeasureSource {
    Preset(String),
    /// Relative paths resolve against the config file's directory.
    File(PathBuf),
    Inline { dim: usize, atoms: Vec<InlineAtom> },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GroupKindSpec {
    /// Exact closure when finite within `max_order`, else the ergodic model.
    Auto,
    Finite,
    Ergodic,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GroupConfig {
    pub kind: GroupKindSpec,
    pub max_order: usize,
    pub word_length: usize,
    pub samples: usize,
}

impl Default for GroupConfig {
    fn default() -> Self {
        GroupConfig { kind: GroupKindSpec::Auto, max_order: DEFAULT_MAX_ORDER, word_length: DEFAULT_WORD_LENGTH, samples: 4096 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpectralCheck {
    Gap,
    Taylor,
    Consistency,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpectralConfig {
    pub check: SpectralCheck,
    /// Nodes on S¹, or the degree bound on S².
    pub resolution: usize,
    pub radii: Vec<f64>,
    /// Radius at which the comparison measure is expected to have no gap.
    pub degenerate_radius: f64,
}

impl Default for SpectralConfig {
    fn default() -> Self {
        SpectralConfig {
            check: SpectralCheck::Gap,
            resolution: 256,
            radii: isomwalk::limits::log_spaced(0.02, 0.2, 8),
            degenerate_radius: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BumpConfig {
    /// Defaults to the origin.
    pub center: Option<Vec<f64>>,
    pub radius: f64,
}

impl Default for BumpConfig {
    fn default() -> Self {
        BumpConfig { center: None, radius: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct SimulateConfig {
    pub moments: Vec<f64>,
    pub endpoints: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: Option<Experiment>,
    pub seed: u64,
    pub samples: usize,
    pub steps: Vec<usize>,
    /// Defaults to the origin.
    pub start: Option<Vec<f64>>,
    pub measure: MeasureSource,
    pub compare: Option<MeasureSource>,
    pub group: GroupConfig,
    pub spectral: SpectralConfig,
    pub bump: BumpConfig,
    pub multiscale: MultiscaleSpec,
    pub fourier: FrequencySpec,
    pub simulate: SimulateConfig,
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(measure: MeasureSource) -> Self {
        ExperimentConfig {
            experiment: None,
            seed: 1,
            samples: 100_000,
            steps: vec![64, 256, 1024],
            start: None,
            measure,
            compare: None,
            group: GroupConfig::default(),
            spectral: SpectralConfig::default(),
            bump: BumpConfig::default(),
            multiscale: MultiscaleSpec::default(),
            fourier: FrequencySpec::default(),
            simulate: SimulateConfig::default(),
            output: None,
        }
    }
}

const SCHEMA: &[(&str, &[&str])] = &[
    ("experiment", &["name", "seed", "samples", "steps", "start"]),
    ("measure", &["preset", "file", "dim", "atom"]),
    ("compare", &["preset", "file", "dim", "atom"]),
    ("group", &["kind", "max_order", "word_length", "samples"]),
    ("spectral", &["check", "resolution", "radii", "degenerate_radius"]),
    ("bump", &["center", "radius"]),
    ("multiscale", &["scale_exponent", "offset", "radius"]),
    ("fourier", &["low_count", "high_count", "high_min", "high_max", "probes"]),
    ("simulate", &["moments", "endpoints"]),
    ("output", &["dir"]),
];

/// Only `atom` may repeat.
const REPEATABLE: &[&str] = &["atom"];

fn bad(e: &Entry, msg: impl fmt::Display) -> ParseError {
    ParseError { line: e.line, msg: format!("`{}`: {msg}", e.key) }
}

fn num<T: FromStr>(e: &Entry) -> Result<T, ParseError> {
    e.value.parse().map_err(|_| bad(e, format!("cannot parse `{}`", e.value)))
}

fn float(e: &Entry, s: &str) -> Result<f64, ParseError> {
    let x: f64 = s.parse().map_err(|_| bad(e, format!("not a number: `{s}`")))?;
    if x.is_finite() {
        Ok(x)
    } else {
        Err(bad(e, format!("not finite: `{s}`")))
    }
}

fn floats(e: &Entry) -> Result<Vec<f64>, ParseError> {
    ini::list(&e.value).into_iter().map(|s| float(e, s)).collect()
}

fn ints(e: &Entry) -> Result<Vec<usize>, ParseError> {
    ini::list(&e.value).into_iter().map(|s| s.parse().map_err(|_| bad(e, format!("not an integer: `{s}`")))).collect()
}

fn boolean(e: &Entry) -> Result<bool, ParseError> {
    match e.value.as_str() {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(bad(e, "expected true or false")),
    }
}

/// `w | r11, r12, … | t1, …`
fn inline_atom(e: &Entry) -> Result<InlineAtom, ParseError> {
    let parts: Vec<&str> = e.value.split('|').collect();
    if parts.len() != 3 {
        return Err(bad(e, "expected `weight | rotation entries | translation entries`"));
    }
    let list = |s: &str| ini::list(s).into_iter().map(|x| float(e, x)).collect::<Result<Vec<_>, _>>();
    let w = list(parts[0])?;
    if w.len() != 1 {
        return Err(bad(e, "weight must be a single number"));
    }
    Ok(InlineAtom { weight: w[0], rotation: list(parts[1])?, translation: list(parts[2])? })
}

fn measure_source(s: &Section) -> Result<MeasureSource, ParseError> {
    let at = |key: &str| s.entries.iter().find(|e| e.key == key);
    let atoms: Vec<&Entry> = s.entries.iter().filter(|e| e.key == "atom").collect();
    let given = [at("preset").is_some(), at("file").is_some(), at("dim").is_some() || !atoms.is_empty()];
    if given.iter().filter(|&&g| g).count() != 1 {
        return Err(ParseError { line: s.line, msg: format!("[{}] needs exactly one of preset, file, or dim with atoms", s.name) });
    }
    if let Some(e) = at("preset") {
        return Ok(MeasureSource::Preset(e.value.clone()));
    }
    if let Some(e) = at("file") {
        if e.value.is_empty() {
            return Err(bad(e, "empty path"));
        }
        return Ok(MeasureSource::File(PathBuf::from(&e.value)));
    }
    let dim_entry = at("dim").ok_or_else(|| ParseError { line: s.line, msg: format!("[{}] inline atoms need `dim`", s.name) })?;
    let dim: usize = num(dim_entry)?;
    if atoms.is_empty() {
        return Err(bad(dim_entry, "no atoms given"));
    }
    let atoms = atoms.into_iter().map(inline_atom).collect::<Result<Vec<_>, _>>()?;
    Ok(MeasureSource::Inline { dim, atoms })
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig, ParseError> {
    let sections = ini::parse(text)?;
    for s in &sections {
        let allowed = SCHEMA
            .iter()
            .find(|(name, _)| *name == s.name)
            .ok_or_else(|| ParseError { line: s.line, msg: format!("unknown section [{}]", s.name) })?
            .1;
        for (i, e) in s.entries.iter().enumerate() {
            if !allowed.contains(&e.key.as_str()) {
                return Err(bad(e, format!("unknown key in [{}] (allowed: {})", s.name, allowed.join(", "))));
            }
            if !REPEATABLE.contains(&e.key.as_str()) && s.entries[..i].iter().any(|p| p.key == e.key) {
                return Err(bad(e, "given twice"));
            }
        }
    }
    let section = |name: &str| sections.iter().find(|s| s.name == name);
    let measure_section = section("measure").ok_or(ParseError { line: 1, msg: "missing [measure] section".into() })?;
    let mut cfg = ExperimentConfig::new(measure_source(measure_section)?);
    cfg.compare = section("compare").map(measure_source).transpose()?;

    for s in &sections {
        for e in &s.entries {
            match (s.name.as_str(), e.key.as_str()) {
                ("experiment", "name") => cfg.experiment = Some(e.value.parse().map_err(|m| bad(e, m))?),
                ("experiment", "seed") => cfg.seed = num(e)?,
                ("experiment", "samples") => cfg.samples = num(e)?,
                ("experiment", "steps") => cfg.steps = ints(e)?,
                ("experiment", "start") => cfg.start = Some(floats(e)?),
                ("group", "kind") => {
                    cfg.group.kind = match e.value.as_str() {
                        "auto" => GroupKindSpec::Auto,
                        "finite" => GroupKindSpec::Finite,
                        "ergodic" => GroupKindSpec::Ergodic,
                        _ => return Err(bad(e, "expected auto, finite or ergodic")),
                    }
                }
                ("group", "max_order") => cfg.group.max_order = num(e)?,
                ("group", "word_length") => cfg.group.word_length = num(e)?,
                ("group", "samples") => cfg.group.samples = num(e)?,
                ("spectral", "check") => {
                    cfg.spectral.check = match e.value.as_str() {
                        "gap" => SpectralCheck::Gap,
                        "taylor" => SpectralCheck::Taylor,
                        "consistency" => SpectralCheck::Consistency,
                        _ => return Err(bad(e, "expected gap, taylor or consistency")),
                    }
                }
                ("spectral", "resolution") => cfg.spectral.resolution = num(e)?,
                ("spectral", "radii") => cfg.spectral.radii = floats(e)?,
                ("spectral", "degenerate_radius") => cfg.spectral.degenerate_radius = float(e, &e.value)?,
                ("bump", "center") => cfg.bump.center = Some(floats(e)?),
                ("bump", "radius") => cfg.bump.radius = float(e, &e.value)?,
                ("multiscale", "scale_exponent") => cfg.multiscale.scale_exponent = float(e, &e.value)?,
                ("multiscale", "offset") => cfg.multiscale.offset = float(e, &e.value)?,
                ("multiscale", "radius") => cfg.multiscale.radius = float(e, &e.value)?,
                ("fourier", "low_count") => cfg.fourier.low_count = num(e)?,
                ("fourier", "high_count") => cfg.fourier.high_count = num(e)?,
                ("fourier", "high_min") => cfg.fourier.high_min = float(e, &e.value)?,
                ("fourier", "high_max") => cfg.fourier.high_max = float(e, &e.value)?,
                ("fourier", "probes") => {
                    cfg.fourier.probes = e
                        .value
                        .split(';')
                        .filter(|p| !p.trim().is_empty())
                        .map(|p| ini::list(p).into_iter().map(|x| float(e, x)).collect())
                        .collect::<Result<_, _>>()?
                }
                ("simulate", "moments") => cfg.simulate.moments = floats(e)?,
                ("simulate", "endpoints") => cfg.simulate.endpoints = boolean(e)?,
                ("output", "dir") => cfg.output = Some(PathBuf::from(&e.value)),
                _ => {}
            }
        }
    }
    if cfg.samples == 0 {
        return Err(ParseError { line: 1, msg: "`samples` must be positive".into() });
    }
    Ok(cfg)
}

fn join<T: fmt::Display>(v: &[T]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
}

fn write_measure_section(out: &mut String, name: &str, m: &MeasureSource) {
    let _ = writeln!(out, "\n[{name}]");
    match m {
        MeasureSource::Preset(p) => {
            let _ = writeln!(out, "preset = {p}");
        }
        MeasureSource::File(p) => {
            let _ = writeln!(out, "file = {}", p.display());
        }
        MeasureSource::Inline { dim, atoms } => {
            let _ = writeln!(out, "dim = {dim}");
            let _ = writeln!(out, "# atom = weight | rotation (row-major) | translation");
            for a in atoms {
                let _ = writeln!(out, "atom = {} | {} | {}", a.weight, join(&a.rotation), join(&a.translation));
            }
        }
    }
}

/// Serializes every field, so that parsing the output gives `cfg` back.
pub fn write_config(cfg: &ExperimentConfig) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "[experiment]");
    if let Some(e) = cfg.experiment {
        let _ = writeln!(out, "name = {e}");
    }
    let _ = writeln!(out, "seed = {}", cfg.seed);
    let _ = writeln!(out, "samples = {}", cfg.samples);
    let _ = writeln!(out, "steps = {}", join(&cfg.steps));
    if let Some(s) = &cfg.start {
        let _ = writeln!(out, "start = {}", join(s));
    }
    write_measure_section(&mut out, "measure", &cfg.measure);
    if let Some(c) = &cfg.compare {
        write_measure_section(&mut out, "compare", c);
    }
    let g = &cfg.group;
    let kind = match g.kind {
        GroupKindSpec::Auto => "auto",
        GroupKindSpec::Finite => "finite",
        GroupKindSpec::Ergodic => "ergodic",
    };
    let _ = write!(
        out,
        "\n[group]\nkind = {kind}\nmax_order = {}\nword_length = {}\nsamples = {}\n",
        g.max_order, g.word_length, g.samples
    );
    let sp = &cfg.spectral;
    let check = match sp.check {
        SpectralCheck::Gap => "gap",
        SpectralCheck::Taylor => "taylor",
        SpectralCheck::Consistency => "consistency",
    };
    let _ = write!(
        out,
        "\n[spectral]\ncheck = {check}\nresolution = {}\nradii = {}\ndegenerate_radius = {}\n",
        sp.resolution,
        join(&sp.radii),
        sp.degenerate_radius
    );
    let _ = writeln!(out, "\n[bump]");
    if let Some(c) = &cfg.bump.center {
        let _ = writeln!(out, "center = {}", join(c));
    }
    let _ = writeln!(out, "radius = {}", cfg.bump.radius);
    let m = &cfg.multiscale;
    let _ = write!(out, "\n[multiscale]\nscale_exponent = {}\noffset = {}\nradius = {}\n", m.scale_exponent, m.offset, m.radius);
    let f = &cfg.fourier;
    let _ = write!(
        out,
        "\n[fourier]\nlow_count = {}\nhigh_count = {}\nhigh_min = {}\nhigh_max = {}\n",
        f.low_count, f.high_count, f.high_min, f.high_max
    );
    if !f.probes.is_empty() {
        let _ = writeln!(out, "probes = {}", f.probes.iter().map(|p| join(p)).collect::<Vec<_>>().join("; "));
    }
    let _ = write!(out, "\n[simulate]\nmoments = {}\nendpoints = {}\n", join(&cfg.simulate.moments), cfg.simulate.endpoints);
    if let Some(o) = &cfg.output {
        let _ = write!(out, "\n[output]\ndir = {}\n", o.display());
    }
    out
}

/// Starting config for `init-example`.
pub fn example(experiment: Experiment) -> ExperimentConfig {
    let preset = |p: &str| MeasureSource::Preset(p.into());
    let mut cfg = ExperimentConfig::new(preset("rotation_rich"));
    cfg.experiment = Some(experiment);
    match experiment {
        Experiment::Params | Experiment::Conditions => {}
        Experiment::Simulate => {
            cfg.simulate.moments = vec![2.0, 3.0];
        }
        Experiment::Spectrum => {
            cfg.compare = Some(preset("line_lattice"));
        }
        Experiment::VerifyClt => {
            cfg.samples = 200_000;
            cfg.steps = vec![256, 1024, 4096];
        }
        Experiment::VerifyLlt => {
            cfg.samples = 400_000;
            cfg.steps = vec![256, 1024];
        }
        Experiment::VerifyMultiscale => {
            cfg.measure = preset("c3_symmetric");
            cfg.compare = Some(preset("c3_asymmetric"));
            cfg.samples = 1_000_000;
            cfg.steps = vec![16, 32, 64, 128, 256];
        }
        Experiment::VerifyFourier => {
            cfg.measure = preset("square_lattice");
            cfg.samples = 200_000;
            cfg.steps = vec![2500];
        }
    }
    cfg
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples_round_trip() {
        for e in Experiment::ALL {
            let cfg = example(e);
            let text = write_config(&cfg);
            assert_eq!(parse_config(&text).unwrap(), cfg, "{e}\n{text}");
        }
    }

    #[test]
    fn inline_and_file_sources_round_trip() {
        let mut cfg = ExperimentConfig::new(MeasureSource::Inline {
            dim: 2,
            atoms: vec![
                InlineAtom { weight: 0.5, rotation: vec![0.0, -1.0, 1.0, 0.0], translation: vec![0.1, 1e-7] },
                InlineAtom { weight: 0.5, rotation: vec![1.0, 0.0, 0.0, 1.0], translation: vec![-0.3, 2.0 / 3.0] },
            ],
        });
        cfg.compare = Some(MeasureSource::File("measures/other.measure".into()));
        cfg.start = Some(vec![0.25, -1.0]);
        cfg.bump.center = Some(vec![1.0, 2.0]);
        cfg.output = Some("out/dir".into());
        cfg.fourier.probes = vec![vec![1.0, 0.0], vec![0.5, 0.5]];
        cfg.simulate.endpoints = true;
        assert_eq!(parse_config(&write_config(&cfg)).unwrap(), cfg);
    }

    #[test]
    fn rejects_unknown_and_duplicate_keys() {
        let e = parse_config("[measure]\npreset = square_lattice\n[experiment]\nsed = 3\n").unwrap_err();
        assert_eq!(e.line, 4);
        assert!(e.msg.contains("unknown key"));
        assert!(parse_config("[measure]\npreset = a\n[extra]\n").unwrap_err().msg.contains("unknown section"));
        assert!(parse_config("[measure]\npreset = a\npreset = b\n").unwrap_err().msg.contains("twice"));
        assert!(parse_config("[measure]\npreset = a\nfile = b\n").unwrap_err().msg.contains("exactly one"));
        assert!(parse_config("[experiment]\nseed = 1\n").unwrap_err().msg.contains("[measure]"));
        assert!(parse_config("[measure]\npreset = a\n[experiment]\nname = verify-everything\n").is_err());
        assert!(parse_config("[measure]\ndim = 2\natom = 1 | 1, 0 | 0\n").is_ok());
        assert!(parse_config("[measure]\ndim = 2\natom = 1 | 1, 0\n").is_err());
        assert!(parse_config("[measure]\npreset = a\n[experiment]\nsamples = 0\n").is_err());
    }
}

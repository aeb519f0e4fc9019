//! Experiment drivers behind the CLI: model sources, grids, configurations and
//! deterministic CSV/JSON output.

mod experiments;

pub use experiments::{
    cmd_compare, cmd_diagnose, cmd_fig1, cmd_fig2, mp_setup, run_mp, ComparisonRow, Fig1Row, Fig1Summary,
    Fig2AlphaSummary, Fig2Summary,
};

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::free_energy::log_grid;
use crate::message_passing::{InitScheme, MpOptions};
use crate::minimizer::NewtonOptions;
use crate::model::{io::read_model, make_k_regular, random_model, GaussianModel};

/// Edge density used by `random:` generator specs that do not set one.
pub const DEFAULT_DENSITY: f64 = 0.5;

/// Model generator, written `kregular:n=8,k=4,r=0.27` or `random:n=8,lambda=0.9,seed=3`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum GeneratorSpec {
    KRegular { n: usize, k: usize, r: f64, h: f64 },
    Random { n: usize, lambda: f64, seed: u64, density: f64 },
}

impl GeneratorSpec {
    pub fn generate(&self) -> Result<GaussianModel> {
        match *self {
            Self::KRegular { n, k, r, h } => make_k_regular(n, k, r, DVector::from_element(n, h)),
            Self::Random { n, lambda, seed, density } => random_model(n, density, lambda, seed),
        }
    }
}

impl FromStr for GeneratorSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, rest) = s
            .split_once(':')
            .ok_or_else(|| Error::Parse(format!("generator spec `{s}` needs a `kind:` prefix")))?;
        let mut pairs = Vec::new();
        for item in rest.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (key, value) = item
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("expected key=value, got `{item}`")))?;
            pairs.push((key.trim(), value.trim()));
        }
        let mut take = |key: &str| -> Option<&str> {
            let pos = pairs.iter().position(|(k, _)| *k == key)?;
            Some(pairs.remove(pos).1)
        };
        let spec = match kind.trim() {
            "kregular" => Self::KRegular {
                n: parse_field(take("n"), "n", None)?,
                k: parse_field(take("k"), "k", None)?,
                r: parse_field(take("r"), "r", None)?,
                h: parse_field(take("h"), "h", Some(0.0))?,
            },
            "random" => Self::Random {
                n: parse_field(take("n"), "n", Some(8))?,
                lambda: parse_field(take("lambda"), "lambda", None)?,
                seed: parse_field(take("seed"), "seed", Some(0))?,
                density: parse_field(take("density"), "density", Some(DEFAULT_DENSITY))?,
            },
            other => return Err(Error::Parse(format!("unknown generator `{other}`"))),
        };
        if let Some((key, _)) = pairs.first() {
            return Err(Error::Parse(format!("unknown generator parameter `{key}`")));
        }
        Ok(spec)
    }
}

fn parse_field<T: FromStr>(raw: Option<&str>, key: &str, default: Option<T>) -> Result<T> {
    match (raw, default) {
        (Some(v), _) => v.parse().map_err(|_| Error::Parse(format!("bad value `{v}` for `{key}`"))),
        (None, Some(d)) => Ok(d),
        (None, None) => Err(Error::Parse(format!("generator parameter `{key}` is required"))),
    }
}

impl fmt::Display for GeneratorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::KRegular { n, k, r, h } => write!(f, "kregular:n={n},k={k},r={r},h={h}"),
            Self::Random { n, lambda, seed, density } => {
                write!(f, "random:n={n},lambda={lambda},seed={seed},density={density}")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelSource {
    File(PathBuf),
    Generator(GeneratorSpec),
}

impl ModelSource {
    pub fn load(&self) -> Result<GaussianModel> {
        match self {
            Self::File(path) => read_model(path),
            Self::Generator(spec) => spec.generate(),
        }
    }
}

/// Parses a grid written `log:LO:HI:COUNT`, `lin:LO:HI:COUNT` or as a comma list.
pub fn parse_grid(s: &str) -> Result<Vec<f64>> {
    let bad = || Error::Parse(format!("bad grid `{s}`"));
    let grid = if let Some(rest) = s.strip_prefix("log:").or_else(|| s.strip_prefix("lin:")) {
        let parts: Vec<&str> = rest.split(':').collect();
        let [lo, hi, count] = parts[..] else { return Err(bad()) };
        let lo: f64 = lo.parse().map_err(|_| bad())?;
        let hi: f64 = hi.parse().map_err(|_| bad())?;
        let count: usize = count.parse().map_err(|_| bad())?;
        if count == 0 || !(hi >= lo) {
            return Err(bad());
        }
        if s.starts_with("log:") {
            if !(lo > 0.0) {
                return Err(bad());
            }
            log_grid(lo, hi, count)
        } else {
            linear_grid(lo, hi, count)
        }
    } else {
        s.split(',').map(|v| v.trim().parse::<f64>().map_err(|_| bad())).collect::<Result<_>>()?
    };
    check_positive_grid(&grid, s)?;
    Ok(grid)
}

pub fn linear_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    (0..count).map(|k| lo + (hi - lo) * k as f64 / (count - 1) as f64).collect()
}

fn check_positive_grid(grid: &[f64], name: &str) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidOptions(format!("grid `{name}` is empty")));
    }
    if grid.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::InvalidOptions(format!("grid `{name}` must be positive")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentId {
    Fig1,
    Fig2Bounded,
    Fig2Unbounded,
    Sweep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PartitionScheme {
    /// Normalizable when `λ_max(|R|) < 1`, symmetric otherwise.
    #[default]
    Auto,
    Normalizable,
    Symmetric,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: ExperimentId,
    pub source: ModelSource,
    pub alpha_grid: Vec<f64>,
    pub t_grid: Vec<f64>,
    /// Coupling grid of the K-regular family; empty means derived from `K`.
    pub r_grid: Vec<f64>,
    /// α used where a single value is needed (the r panel of the K-regular scan).
    pub fixed_alpha: f64,
    /// Ray scales of the Newton inits, each used as `t·u_max`.
    pub init_t: Vec<f64>,
    pub newton: NewtonOptions,
    pub mp: MpOptions,
    pub partition: PartitionScheme,
    /// Message initialization; `None` picks the one matching the partition.
    pub init: Option<InitScheme>,
    pub output_dir: PathBuf,
    pub seed: u64,
}

impl ExperimentConfig {
    /// Defaults: α log-spaced on [1e-2, 1e2] (25 points), t log-spaced on
    /// [1e-1, 1e3] (200 points) and 20 Newton ray inits over the same t range.
    pub fn new(experiment: ExperimentId, source: ModelSource, output_dir: impl Into<PathBuf>) -> Self {
        let seed = match &source {
            ModelSource::Generator(GeneratorSpec::Random { seed, .. }) => *seed,
            _ => 0,
        };
        Self {
            experiment,
            source,
            alpha_grid: log_grid(1e-2, 1e2, 25),
            t_grid: log_grid(1e-1, 1e3, 200),
            r_grid: Vec::new(),
            fixed_alpha: 1.0,
            init_t: log_grid(1e-1, 1e3, 20),
            newton: NewtonOptions::default(),
            mp: MpOptions::default(),
            partition: PartitionScheme::Auto,
            init: None,
            output_dir: output_dir.into(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_positive_grid(&self.alpha_grid, "alpha_grid")?;
        check_positive_grid(&self.t_grid, "t_grid")?;
        check_positive_grid(&self.init_t, "init_t")?;
        if !self.r_grid.is_empty() {
            check_positive_grid(&self.r_grid, "r_grid")?;
        }
        if self.t_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidOptions("t_grid must be strictly increasing".into()));
        }
        if !(self.fixed_alpha.is_finite() && self.fixed_alpha > 0.0) {
            return Err(Error::InvalidOptions("fixed_alpha must be positive".into()));
        }
        self.newton.validate()?;
        self.mp.validate()?;
        Ok(())
    }

    /// Creates the output directory and writes the config next to the results.
    pub fn prepare_output(&self) -> Result<()> {
        fs::create_dir_all(&self.output_dir)?;
        let path = self.output_dir.join("config.json");
        fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Minimal CSV table with a one-line header.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: Vec<&'static str>) -> Self {
        Self { header, rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_csv())?;
        Ok(())
    }
}

pub(crate) fn cell(v: f64) -> String {
    format!("{v}")
}

/// Empty cell for a missing value.
pub(crate) fn opt_cell(v: Option<f64>) -> String {
    v.map(cell).unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generator_specs() {
        let spec: GeneratorSpec = "kregular:n=8,k=4,r=0.27".parse().unwrap();
        assert_eq!(spec, GeneratorSpec::KRegular { n: 8, k: 4, r: 0.27, h: 0.0 });
        let spec: GeneratorSpec = "random:n=8,lambda=0.9,seed=42".parse().unwrap();
        assert_eq!(spec, GeneratorSpec::Random { n: 8, lambda: 0.9, seed: 42, density: DEFAULT_DENSITY });
        assert_eq!(spec.to_string().parse::<GeneratorSpec>().unwrap(), spec);
        for bad in ["kregular", "kregular:n=8,k=4", "grid:n=3", "random:lambda=x", "random:lambda=0.9,foo=1"] {
            assert!(bad.parse::<GeneratorSpec>().is_err(), "{bad}");
        }
    }

    #[test]
    fn grids() {
        assert_eq!(parse_grid("0.5,1,2").unwrap(), vec![0.5, 1.0, 2.0]);
        let g = parse_grid("log:0.01:100:5").unwrap();
        assert_eq!(g.len(), 5);
        assert_eq!(g[0], 0.01);
        assert_eq!(g[4], 100.0);
        assert!((g[2] - 1.0).abs() < 1e-12);
        assert_eq!(parse_grid("lin:0.2:0.3:3").unwrap().len(), 3);
        for bad in ["", "log:0:1:3", "lin:1:0:3", "1,-2", "log:1:2", "a,b"] {
            assert!(parse_grid(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn config_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let spec = "random:n=8,lambda=0.9,seed=7".parse().unwrap();
        let cfg = ExperimentConfig::new(ExperimentId::Fig2Bounded, ModelSource::Generator(spec), dir.path());
        assert_eq!(cfg.seed, 7);
        cfg.validate().unwrap();
        cfg.prepare_output().unwrap();
        let back = ExperimentConfig::read(dir.path().join("config.json")).unwrap();
        assert_eq!(back.alpha_grid, cfg.alpha_grid);
        assert_eq!(back.source, cfg.source);
        assert_eq!(back.experiment, ExperimentId::Fig2Bounded);
    }

    #[test]
    fn config_rejects_bad_grids() {
        let src = ModelSource::Generator("kregular:n=8,k=4,r=0.2".parse().unwrap());
        let mut cfg = ExperimentConfig::new(ExperimentId::Fig1, src, "out");
        cfg.alpha_grid.clear();
        assert!(cfg.validate().is_err());
        cfg.alpha_grid = vec![1.0];
        cfg.t_grid = vec![2.0, 1.0];
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn csv_layout() {
        let mut t = Table::new(vec!["a", "b"]);
        t.push(vec![cell(0.1), opt_cell(None)]);
        assert_eq!(t.to_csv(), "a,b\n0.1,\n");
    }
}

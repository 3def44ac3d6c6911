//! Flat key-value experiment configuration: one `key = value` assignment per
//! line, `#` comments, unknown keys rejected.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use freundlich::error::{Error, Result};
use freundlich::grid::{Field, Grid};
use freundlich::kernel::Exponent;
use freundlich::state::{manufactured_instance, ManufacturedKind, SolveMethod};

/// Where a nodal field comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum FieldSource {
    Zero,
    Constant(f64),
    /// Nodal samples of sin(pi x) (1d).
    SinPi,
    /// Nodal samples of sin(2 pi x) (1d).
    Sin2Pi,
    /// Control of a manufactured instance.
    Instance(ManufacturedKind),
    /// Seeded uniform values in [-scale, scale].
    Random(f64),
    File(PathBuf),
}

impl FromStr for FieldSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "zero" {
            return Ok(Self::Zero);
        }
        if s == "nodal:sinpi" {
            return Ok(Self::SinPi);
        }
        if s == "nodal:sin2pi" {
            return Ok(Self::Sin2Pi);
        }
        if let Some(v) = s.strip_prefix("constant:") {
            return v
                .parse()
                .map(Self::Constant)
                .map_err(|_| Error::Parse(format!("bad constant in field source `{s}`")));
        }
        if let Some(kind) = s.strip_prefix("instance:") {
            return kind.parse().map(Self::Instance);
        }
        if let Some(v) = s.strip_prefix("random:") {
            return v
                .parse()
                .map(Self::Random)
                .map_err(|_| Error::Parse(format!("bad scale in field source `{s}`")));
        }
        if let Some(p) = s.strip_prefix("file:") {
            return Ok(Self::File(PathBuf::from(p)));
        }
        Err(Error::Parse(format!("unknown field source `{s}`")))
    }
}

impl FieldSource {
    /// Realize the field on `grid`; `draw` supplies seeded uniform values in
    /// [-0.5, 0.5) for the `random:` source.
    pub fn realize(
        &self,
        grid: Grid,
        alpha: Exponent<f64>,
        draw: &mut impl FnMut() -> f64,
    ) -> Result<Field<f64>> {
        match self {
            Self::Zero => Ok(Field::zeros(grid)),
            Self::Constant(c) => Ok(Field::constant(grid, *c)),
            Self::SinPi => Ok(Field::from_fn(grid, |x: f64, _| (std::f64::consts::PI * x).sin())),
            Self::Sin2Pi => Ok(Field::from_fn(grid, |x: f64, _| {
                (2.0 * std::f64::consts::PI * x).sin()
            })),
            Self::Instance(kind) => Ok(manufactured_instance(*kind, grid, alpha)?.control),
            Self::Random(scale) => Field::from_values(
                grid,
                (0..grid.interior_count())
                    .map(|_| 2.0 * scale * draw())
                    .collect(),
            ),
            Self::File(path) => {
                let file = std::fs::File::open(path)?;
                Field::read_delimited(grid, std::io::BufReader::new(file))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Solve,
    Differentiate,
    Optimize,
    Verify,
    Study(StudyKind),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StudyKind {
    Frechet,
    Deadzone,
    Convergence,
}

/// Validated experiment parameters.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub command: Command,
    pub dim: usize,
    pub n: usize,
    pub alpha: f64,
    pub nu: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
    pub samples: usize,
    pub method: SolveMethod,
    pub control: FieldSource,
    pub direction: FieldSource,
    pub desired: FieldSource,
    pub start: FieldSource,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    pub eps_dead: Option<f64>,
    pub tau_list: Vec<f64>,
    pub n_list: Vec<usize>,
    pub instance: ManufacturedKind,
    pub out: PathBuf,
}

impl ExperimentConfig {
    pub fn defaults(command: Command) -> Self {
        Self {
            command,
            dim: 1,
            n: 64,
            alpha: 0.5,
            nu: 1e-2,
            tol: 1e-8,
            max_iter: 2000,
            seed: 0,
            samples: 200,
            method: SolveMethod::AccelProx,
            control: FieldSource::Constant(10.0),
            direction: FieldSource::Sin2Pi,
            desired: FieldSource::SinPi,
            start: FieldSource::Constant(1.0),
            lower: Some(0.0),
            upper: Some(2.0),
            eps_dead: None,
            tau_list: vec![1e-1, 1e-2, 1e-3, 1e-4],
            n_list: vec![64, 128, 256],
            instance: ManufacturedKind::Sine,
            out: PathBuf::from("out"),
        }
    }

    /// Parse `key = value` lines into a config, then validate everything
    /// against the module preconditions.
    pub fn from_text(command: Command, text: &str) -> Result<Self> {
        let mut cfg = Self::defaults(command);
        let mut seen = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Parse(format!("line {}: expected `key = value`", lineno + 1))
            })?;
            let key = key.trim();
            let value = value.trim();
            if seen.insert(key.to_string(), lineno).is_some() {
                return Err(Error::Parse(format!(
                    "line {}: key `{key}` assigned twice",
                    lineno + 1
                )));
            }
            cfg.assign(key, value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(command: Command, path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_text(command, &text)
    }

    fn assign(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |what: &str| Error::Parse(format!("bad {what} value `{value}`"));
        match key {
            "dim" => self.dim = value.parse().map_err(|_| bad("dim"))?,
            "n" => self.n = value.parse().map_err(|_| bad("n"))?,
            "alpha" => self.alpha = value.parse().map_err(|_| bad("alpha"))?,
            "nu" => self.nu = value.parse().map_err(|_| bad("nu"))?,
            "tol" => self.tol = value.parse().map_err(|_| bad("tol"))?,
            "max_iter" => self.max_iter = value.parse().map_err(|_| bad("max_iter"))?,
            "seed" => self.seed = value.parse().map_err(|_| bad("seed"))?,
            "samples" => self.samples = value.parse().map_err(|_| bad("samples"))?,
            "method" => self.method = value.parse()?,
            "control" => self.control = value.parse()?,
            "direction" => self.direction = value.parse()?,
            "desired" => self.desired = value.parse()?,
            "start" => self.start = value.parse()?,
            "lower" => {
                self.lower = if value == "none" {
                    None
                } else {
                    Some(value.parse().map_err(|_| bad("lower"))?)
                }
            }
            "upper" => {
                self.upper = if value == "none" {
                    None
                } else {
                    Some(value.parse().map_err(|_| bad("upper"))?)
                }
            }
            "eps_dead" => self.eps_dead = Some(value.parse().map_err(|_| bad("eps_dead"))?),
            "tau_list" => {
                self.tau_list = value
                    .split(',')
                    .map(|t| t.trim().parse().map_err(|_| bad("tau_list")))
                    .collect::<Result<_>>()?
            }
            "n_list" => {
                self.n_list = value
                    .split(',')
                    .map(|t| t.trim().parse().map_err(|_| bad("n_list")))
                    .collect::<Result<_>>()?
            }
            "instance" => self.instance = value.parse()?,
            "out" => self.out = PathBuf::from(value),
            other => {
                return Err(Error::Parse(format!("unknown config key `{other}`")));
            }
        }
        Ok(())
    }

    fn validate(&self) -> Result<()> {
        Grid::new(self.dim, self.n)?;
        Exponent::new(self.alpha)?;
        let positive = |name: &str, v: f64| {
            if v > 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")))
            }
        };
        positive("nu", self.nu)?;
        positive("tol", self.tol)?;
        if self.samples == 0 {
            return Err(Error::InvalidArgument("samples must be >= 1".into()));
        }
        if let (Some(lo), Some(hi)) = (self.lower, self.upper) {
            if lo > hi {
                return Err(Error::InvalidArgument(format!(
                    "box bounds must satisfy lower <= upper, got [{lo}, {hi}]"
                )));
            }
        }
        if self.tau_list.is_empty() || self.tau_list.iter().any(|&t| t <= 0.0) {
            return Err(Error::InvalidArgument(
                "tau_list must be a nonempty list of positive values".into(),
            ));
        }
        if self
            .tau_list
            .windows(2)
            .any(|w| w[1] >= w[0])
        {
            return Err(Error::InvalidArgument(
                "tau_list must be strictly decreasing".into(),
            ));
        }
        for &n in &self.n_list {
            Grid::new(self.dim, n)?;
        }
        if let Some(eps) = self.eps_dead {
            if eps < 0.0 {
                return Err(Error::InvalidArgument(
                    "eps_dead must be nonnegative".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> Grid {
        Grid::new(self.dim, self.n).expect("validated")
    }

    pub fn exponent(&self) -> Exponent<f64> {
        Exponent::new(self.alpha).expect("validated")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_validates() {
        let cfg = ExperimentConfig::from_text(
            Command::Solve,
            "n = 32\nalpha = 0.25\ncontrol = constant:3 # a comment\n\ntol = 1e-9\n",
        )
        .unwrap();
        assert_eq!(cfg.n, 32);
        assert_eq!(cfg.alpha, 0.25);
        assert_eq!(cfg.control, FieldSource::Constant(3.0));
        assert_eq!(cfg.tol, 1e-9);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(ExperimentConfig::from_text(Command::Solve, "frobnicate = 1\n").is_err());
        assert!(ExperimentConfig::from_text(Command::Solve, "alpha = 1.5\n").is_err());
        assert!(ExperimentConfig::from_text(Command::Solve, "n = 1\n").is_err());
        assert!(ExperimentConfig::from_text(Command::Solve, "tol = -1\n").is_err());
        assert!(ExperimentConfig::from_text(Command::Solve, "n = 8\nn = 9\n").is_err());
        assert!(
            ExperimentConfig::from_text(Command::Solve, "lower = 2\nupper = 1\n").is_err()
        );
        assert!(ExperimentConfig::from_text(Command::Solve, "tau_list = 1e-2,1e-1\n").is_err());
    }

    #[test]
    fn field_source_grammar() {
        assert_eq!("zero".parse::<FieldSource>().unwrap(), FieldSource::Zero);
        assert_eq!(
            "constant:2.5".parse::<FieldSource>().unwrap(),
            FieldSource::Constant(2.5)
        );
        assert_eq!(
            "instance:plateau".parse::<FieldSource>().unwrap(),
            FieldSource::Instance(ManufacturedKind::Plateau)
        );
        assert!("instance:spiral".parse::<FieldSource>().is_err());
        assert!("gibberish".parse::<FieldSource>().is_err());
    }
}

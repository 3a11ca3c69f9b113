//! Line-based `key = value` experiment configuration with `#` comments and
//! dotted section names (`sampler.delta = 5e-5`).

use std::f64::consts::PI;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nfula::format::g17;
use nfula::samplers::KernelKind;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Problem {
    Deblur,
    Inpaint,
    Ct,
    Toy2d,
}

impl Problem {
    pub fn name(self) -> &'static str {
        match self {
            Problem::Deblur => "deblur",
            Problem::Inpaint => "inpaint",
            Problem::Ct => "ct",
            Problem::Toy2d => "toy2d",
        }
    }
}

impl FromStr for Problem {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "deblur" => Ok(Problem::Deblur),
            "inpaint" => Ok(Problem::Inpaint),
            "ct" => Ok(Problem::Ct),
            "toy2d" => Ok(Problem::Toy2d),
            _ => Err(format!("unknown problem {s:?} (expected deblur, inpaint, ct or toy2d)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Noise {
    Gaussian,
    Poisson,
}

impl FromStr for Noise {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "gaussian" => Ok(Noise::Gaussian),
            "poisson" => Ok(Noise::Poisson),
            _ => Err(format!("unknown noise model {s:?} (expected gaussian or poisson)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PriorKind {
    Flow,
    Patch,
    L1,
}

impl FromStr for PriorKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "flow" => Ok(PriorKind::Flow),
            "patch" => Ok(PriorKind::Patch),
            "l1" => Ok(PriorKind::L1),
            _ => Err(format!("unknown prior kind {s:?} (expected flow, patch or l1)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Coupling {
    Additive,
    Affine,
}

impl FromStr for Coupling {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "additive" => Ok(Coupling::Additive),
            "affine" => Ok(Coupling::Affine),
            _ => Err(format!("unknown coupling {s:?} (expected additive or affine)")),
        }
    }
}

trait Value: Sized {
    fn parse_value(s: &str) -> Result<Self, String>;
    fn render(&self) -> String;
}

impl Value for f64 {
    fn parse_value(s: &str) -> Result<Self, String> {
        s.parse().map_err(|_| format!("expected a number, got {s:?}"))
    }
    fn render(&self) -> String {
        g17(*self)
    }
}

impl Value for usize {
    fn parse_value(s: &str) -> Result<Self, String> {
        s.parse()
            .map_err(|_| format!("expected a nonnegative integer, got {s:?}"))
    }
    fn render(&self) -> String {
        self.to_string()
    }
}

impl Value for u64 {
    fn parse_value(s: &str) -> Result<Self, String> {
        s.parse()
            .map_err(|_| format!("expected a nonnegative integer, got {s:?}"))
    }
    fn render(&self) -> String {
        self.to_string()
    }
}

impl Value for String {
    fn parse_value(s: &str) -> Result<Self, String> {
        Ok(s.to_string())
    }
    fn render(&self) -> String {
        self.clone()
    }
}

impl Value for PathBuf {
    fn parse_value(s: &str) -> Result<Self, String> {
        Ok(PathBuf::from(s))
    }
    fn render(&self) -> String {
        self.display().to_string()
    }
}

macro_rules! enum_value {
    ($t:ty, $($v:path => $s:literal),+) => {
        impl Value for $t {
            fn parse_value(s: &str) -> Result<Self, String> {
                s.parse()
            }
            fn render(&self) -> String {
                match self {
                    $($v => $s.to_string(),)+
                }
            }
        }
    };
}

enum_value!(Problem, Problem::Deblur => "deblur", Problem::Inpaint => "inpaint", Problem::Ct => "ct", Problem::Toy2d => "toy2d");
enum_value!(Noise, Noise::Gaussian => "gaussian", Noise::Poisson => "poisson");
enum_value!(PriorKind, PriorKind::Flow => "flow", PriorKind::Patch => "patch", PriorKind::L1 => "l1");
enum_value!(Coupling, Coupling::Additive => "additive", Coupling::Affine => "affine");

impl Value for KernelKind {
    fn parse_value(s: &str) -> Result<Self, String> {
        KernelKind::parse(s)
            .ok_or_else(|| format!("unknown sampler kind {s:?} (expected ula, nf-ula, pnp-ula or myula)"))
    }
    fn render(&self) -> String {
        self.name().to_string()
    }
}

macro_rules! config {
    ($($key:literal => $field:ident : $t:ty, $doc:literal;)+) => {
        /// Resolved experiment settings. Every key has a default that may
        /// depend on `problem`.
        #[derive(Clone, Debug, PartialEq)]
        pub struct ExperimentConfig {
            $(#[doc = $doc] pub $field: $t,)+
        }

        impl ExperimentConfig {
            pub const KEYS: &'static [(&'static str, &'static str)] = &[$(($key, $doc)),+];

            /// Applies one `key = value` setting.
            pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
                match key {
                    $($key => self.$field = <$t as Value>::parse_value(value).map_err(|e| format!("{key}: {e}"))?,)+
                    _ => return Err(format!("unknown key {key:?}")),
                }
                Ok(())
            }

            /// `(key, rendered value)` for every setting, in declaration order.
            pub fn entries(&self) -> Vec<(&'static str, String)> {
                vec![$(($key, self.$field.render())),+]
            }
        }
    };
}

config! {
    "problem" => problem: Problem, "deblur, inpaint, ct or toy2d";
    "seed" => seed: u64, "seed of every randomized step";
    "image.phantom" => phantom: String, "built-in ground truth: disk, shepp-logan or checkerboard";
    "image.side" => side: usize, "image side length in pixels";
    "operator.blur_size" => blur_size: usize, "length of the horizontal motion-blur kernel";
    "operator.keep" => keep: f64, "fraction of pixels observed by the inpainting mask";
    "operator.n_angles" => n_angles: usize, "number of CT projection angles";
    "operator.angle_lo" => angle_lo: f64, "first CT angle in radians";
    "operator.angle_hi" => angle_hi: f64, "last CT angle in radians";
    "likelihood.noise" => noise: Noise, "gaussian or poisson";
    "likelihood.sigma" => sigma: f64, "Gaussian noise standard deviation";
    "likelihood.n0" => n0: f64, "Poisson incident photon count";
    "likelihood.mu" => mu: f64, "Poisson attenuation scale";
    "prior.kind" => prior: PriorKind, "flow (whole image), patch or l1";
    "prior.patch" => patch: usize, "patch side for patch priors and patch training";
    "prior.stride" => stride: usize, "patch stride of the patch prior";
    "prior.l1_weight" => l1_weight: f64, "weight of the l1 prior";
    "sampler.kind" => kind: KernelKind, "ula, nf-ula, pnp-ula or myula";
    "sampler.delta" => delta: f64, "step size";
    "sampler.alpha" => alpha: f64, "prior weight";
    "sampler.lambda" => lambda: f64, "projection parameter";
    "sampler.prox_lambda" => prox_lambda: f64, "MYULA proximal parameter; 0 uses delta";
    "sampler.box_lo" => box_lo: f64, "lower bound of the projection box";
    "sampler.box_hi" => box_hi: f64, "upper bound of the projection box";
    "sampler.monitor_lo" => monitor_lo: f64, "lower bound of the escape monitor box";
    "sampler.monitor_hi" => monitor_hi: f64, "upper bound of the escape monitor box";
    "sampler.iterations" => iterations: usize, "number of Langevin steps";
    "sampler.burn_in" => burn_in: usize, "steps discarded before retaining samples";
    "sampler.thinning" => thinning: usize, "retain every n-th sample";
    "sampler.trace_every" => trace_every: usize, "trace row interval";
    "sampler.chains" => chains: usize, "independent chains run in parallel";
    "sampler.memory_mb" => memory_mb: usize, "in-memory sample budget before spilling";
    "train.data" => train_data: String, "gaussian, mixture, ellipses or a directory of NFT1/PGM images";
    "train.n_images" => n_images: usize, "number of generated training images";
    "train.n_samples" => n_samples: usize, "number of generated 2D training points";
    "train.coupling" => coupling: Coupling, "additive or affine";
    "train.n_couplings" => n_couplings: usize, "number of coupling layers";
    "train.epochs" => epochs: usize, "training epochs";
    "train.batch_size" => batch_size: usize, "minibatch size";
    "train.lr" => lr: f64, "Adam learning rate";
    "train.jitter" => jitter: f64, "Gaussian jitter added to training samples";
    "paths.ground_truth" => ground_truth: String, "NFT1 or PGM ground truth; empty uses image.phantom";
    "paths.data" => data: PathBuf, "directory of degrade outputs read by sample";
    "paths.checkpoint" => checkpoint: PathBuf, "flow checkpoint written by train-flow";
    "paths.output" => output: PathBuf, "output directory of sample";
}

impl ExperimentConfig {
    pub fn for_problem(problem: Problem) -> Self {
        let image = problem != Problem::Toy2d;
        let (sigma, delta, alpha, lambda) = match problem {
            Problem::Deblur => (0.02, 5e-5, 1.5, 5e-5),
            Problem::Inpaint => (0.02, 5e-5, 2.0, 5e-5),
            Problem::Ct => (1.0, 1e-6, 1.0, 1e-6),
            Problem::Toy2d => (0.5, 1e-2, 1.0, 1.0),
        };
        ExperimentConfig {
            problem,
            seed: 0,
            phantom: "disk".into(),
            side: if image { 32 } else { 2 },
            blur_size: 9,
            keep: 0.2,
            n_angles: 30,
            angle_lo: 0.1 * PI,
            angle_hi: 0.9 * PI,
            noise: Noise::Gaussian,
            sigma,
            n0: 4096.0,
            mu: 0.05,
            prior: if image { PriorKind::Patch } else { PriorKind::Flow },
            patch: if image { 4 } else { 0 },
            stride: 2,
            l1_weight: 1.0,
            kind: KernelKind::NfUla,
            delta,
            alpha,
            lambda,
            prox_lambda: 0.0,
            box_lo: -100.0,
            box_hi: 100.0,
            monitor_lo: if image { -0.2 } else { -100.0 },
            monitor_hi: if image { 1.2 } else { 100.0 },
            iterations: if image { 20_000 } else { 100_000 },
            burn_in: if image { 4_000 } else { 1_000 },
            thinning: 1,
            trace_every: 100,
            chains: 1,
            memory_mb: 512,
            train_data: if image { "ellipses" } else { "gaussian" }.into(),
            n_images: 6,
            n_samples: 10_000,
            coupling: Coupling::Additive,
            n_couplings: 4,
            epochs: if image { 40 } else { 200 },
            batch_size: 256,
            lr: 2e-3,
            jitter: if image { 0.02 } else { 0.0 },
            ground_truth: String::new(),
            data: "data".into(),
            checkpoint: "flow.nfck".into(),
            output: "out".into(),
        }
    }

    /// Parses config text. `problem` is applied first so that the other
    /// defaults follow it regardless of line order; errors carry the line
    /// number.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut pairs = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| ConfigError {
                line: Some(i + 1),
                message: format!("expected `key = value`, got {line:?}"),
            })?;
            pairs.push((i + 1, k.trim().to_string(), v.trim().to_string()));
        }
        Self::from_pairs(pairs.iter().map(|(l, k, v)| (Some(*l), k.as_str(), v.as_str())))
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
            line: None,
            message: format!("{}: {e}", path.display()),
        })?;
        Self::parse(&text)
    }

    /// Builds a config from `(line, key, value)` triples; later settings
    /// override earlier ones.
    pub fn from_pairs<'a>(
        pairs: impl Iterator<Item = (Option<usize>, &'a str, &'a str)> + Clone,
    ) -> Result<Self, ConfigError> {
        let mut problem = Problem::Deblur;
        for (line, k, v) in pairs.clone() {
            if k == "problem" {
                problem = v.parse().map_err(|message| ConfigError { line, message })?;
            }
        }
        let mut cfg = Self::for_problem(problem);
        for (line, k, v) in pairs {
            cfg.set(k, v).map_err(|message| ConfigError { line, message })?;
        }
        Ok(cfg)
    }

    /// Config text that parses back to `self`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.entries() {
            s.push_str(&format!("{k} = {v}\n"));
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "config line {l}: {}", self.message),
            None => write!(f, "config: {}", self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn problem_defaults_independent_of_line_order() {
        let a = ExperimentConfig::parse("sampler.delta = 1e-4\nproblem = ct\n").unwrap();
        assert_eq!(a.problem, Problem::Ct);
        assert_eq!(a.delta, 1e-4);
        assert_eq!(a.sigma, 1.0);
        let b = ExperimentConfig::parse("problem = inpaint # comment\n\n").unwrap();
        assert_eq!(b.alpha, 2.0);
        assert_eq!(b.keep, 0.2);
    }

    #[test]
    fn unknown_key_and_bad_value_report_line() {
        let e = ExperimentConfig::parse("seed = 1\nsampler.dleta = 1\n").unwrap_err();
        assert_eq!(e.line, Some(2));
        assert!(e.message.contains("sampler.dleta"));
        let e = ExperimentConfig::parse("sampler.kind = mala\n").unwrap_err();
        assert_eq!(e.line, Some(1));
        let e = ExperimentConfig::parse("just words\n").unwrap_err();
        assert!(e.message.contains("key = value"));
    }

    #[test]
    fn echo_reparses_to_equal_config() {
        for p in [Problem::Deblur, Problem::Inpaint, Problem::Ct, Problem::Toy2d] {
            let mut c = ExperimentConfig::for_problem(p);
            c.delta = 0.1 + 0.2;
            c.kind = KernelKind::MyUla;
            c.ground_truth = "images/x.pgm".into();
            assert_eq!(ExperimentConfig::parse(&c.to_text()).unwrap(), c);
        }
    }

    #[test]
    fn every_key_is_documented_and_settable() {
        let mut c = ExperimentConfig::for_problem(Problem::Deblur);
        for (k, v) in c.clone().entries() {
            c.set(k, &v).unwrap();
        }
        assert_eq!(ExperimentConfig::KEYS.len(), c.entries().len());
        assert!(ExperimentConfig::KEYS.iter().all(|(_, d)| !d.is_empty()));
    }
}

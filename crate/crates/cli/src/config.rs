//! Experiment configuration: a single TOML document.

use std::path::{Path, PathBuf};

use morrey_core::conditions::{ConditionBounds, CorpusSpec, StabilityRule};
use morrey_core::experiments::{AttainmentSettings, CounterexampleSettings, FuzzSettings, UniversalSettings};
use morrey_core::norms::ExponentSet;
use morrey_core::weights::PowerWeightSpec;
use morrey_core::{Fidelity, Grid};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    Norms,
    Sparse,
    Conditions,
    PowerSweep,
    Counterexample,
    Universal,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::Norms => "norms",
            Kind::Sparse => "sparse",
            Kind::Conditions => "conditions",
            Kind::PowerSweep => "power-sweep",
            Kind::Counterexample => "counterexample",
            Kind::Universal => "universal",
        }
    }

    /// Kinds whose inputs are drawn from a seeded generator.
    pub fn randomized(self) -> bool {
        matches!(self, Kind::Norms | Kind::Sparse | Kind::Universal)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub dim: usize,
    pub level: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { dim: 1, level: 8 }
    }
}

/// `(p, p0, α)`, optionally with `q` and `q0` to be checked against the coupling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExponentSpec {
    pub p: f64,
    pub p0: f64,
    pub alpha: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q0: Option<f64>,
}

impl Default for ExponentSpec {
    fn default() -> Self {
        Self { p: 2.0, p0: 4.0, alpha: 0.125, q: None, q0: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSpec {
    pub dir: PathBuf,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self { dir: PathBuf::from("out") }
    }
}

/// The `ρ` grid and refinement levels of a power sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
    pub levels: Vec<usize>,
    pub rule: StabilityRule,
    pub center: [f64; 2],
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            start: -0.5,
            stop: 1.0,
            step: 1.0 / 16.0,
            levels: vec![4, 6, 8, 10],
            rule: StabilityRule::increment_ratio(),
            center: [0.5, 0.5],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub id: Option<String>,
    pub kind: Kind,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default)]
    pub exponents: ExponentSpec,
    #[serde(default)]
    pub weights: Vec<PowerWeightSpec>,
    #[serde(default)]
    pub fidelity: Option<Fidelity>,
    #[serde(default)]
    pub corpus: CorpusSpec,
    /// Left out of the JSON summary so output bytes do not depend on where they are written.
    #[serde(default, skip_serializing)]
    pub output: OutputSpec,
    #[serde(default)]
    pub bounds: ConditionBounds,
    #[serde(default)]
    pub sweep: SweepSpec,
    #[serde(default)]
    pub counterexample: CounterexampleSettings,
    #[serde(default)]
    pub attainment: AttainmentSettings,
    #[serde(default)]
    pub fuzz: FuzzSettings,
    #[serde(default)]
    pub universal: UniversalSettings,
}

/// Command-line values that take precedence over the document.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub fidelity: Option<Fidelity>,
    pub level: Option<usize>,
}

fn config_err(path: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{path}: {msg}"))
}

impl ExperimentConfig {
    pub fn for_kind(kind: Kind) -> Self {
        Self {
            id: None,
            kind,
            seed: None,
            grid: GridSpec::default(),
            exponents: ExponentSpec::default(),
            weights: Vec::new(),
            fidelity: None,
            corpus: CorpusSpec::default(),
            output: OutputSpec::default(),
            bounds: ConditionBounds::default(),
            sweep: SweepSpec::default(),
            counterexample: CounterexampleSettings::default(),
            attainment: AttainmentSettings::default(),
            fuzz: FuzzSettings::default(),
            universal: UniversalSettings::default(),
        }
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| config_err(&path.display().to_string(), e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string().trim_end().to_string()))
    }

    pub fn id(&self) -> String {
        self.id.clone().unwrap_or_else(|| self.kind.name().to_string())
    }

    pub fn fidelity(&self) -> Fidelity {
        self.fidelity.unwrap_or_else(|| Fidelity::default_for(self.grid.dim))
    }

    /// Applies command-line overrides and pushes the shared fields into the
    /// per-experiment settings.
    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.seed = Some(s);
        }
        if let Some(d) = &o.out {
            self.output.dir = d.clone();
        }
        if let Some(f) = o.fidelity {
            self.fidelity = Some(f);
        }
        if let Some(l) = o.level {
            self.grid.level = l;
            match self.kind {
                Kind::Sparse if self.grid.dim == 2 => self.fuzz.level_2d = l,
                Kind::Sparse => self.fuzz.level_1d = l,
                Kind::Counterexample => self.counterexample.level = l,
                Kind::Universal => self.universal.level = l,
                Kind::PowerSweep => self.sweep.levels.retain(|&x| x <= l),
                _ => {}
            }
        }
        if let Some(s) = self.seed {
            self.fuzz.seed = s;
            self.universal.seed = s;
        }
        if let Some(f) = self.fidelity {
            self.counterexample.fidelity = f;
            self.attainment.fidelity = f;
            self.fuzz.fidelity_1d = f;
        }
        if self.kind == Kind::Universal {
            self.universal.dim = self.grid.dim;
        }
    }

    /// Exponent coupling, grid limits and the seed requirement.
    pub fn validate(&self) -> Result<ExponentSet, CliError> {
        let n = self.grid.dim;
        let e = match (self.exponents.q, self.exponents.q0) {
            (Some(q), Some(q0)) => {
                ExponentSet::new(n, self.exponents.p, self.exponents.p0, q, q0, self.exponents.alpha)
            }
            (None, None) => ExponentSet::coupled(n, self.exponents.p, self.exponents.p0, self.exponents.alpha),
            _ => return Err(config_err("exponents", "give both q and q0 or neither")),
        }
        .map_err(|e| config_err("exponents", e))?;
        Grid::new(n, self.grid.level).map_err(|e| config_err("grid", e))?;
        if self.kind.randomized() && self.seed.is_none() {
            return Err(config_err("seed", format!("required for kind {}", self.kind.name())));
        }
        for (i, w) in self.weights.iter().enumerate() {
            if !(w.rho > -(n as f64)) {
                return Err(config_err(&format!("weights[{i}].rho"), format!("must exceed -n = -{n}, got {}", w.rho)));
            }
        }
        match self.kind {
            Kind::Conditions => {
                if self.weights.is_empty() {
                    return Err(config_err("weights", "at least one weight is required"));
                }
                for (i, &r) in self.attainment.singular.iter().enumerate() {
                    if !(e.q * r < e.lambda - n as f64) {
                        return Err(config_err(
                            &format!("attainment.singular[{i}]"),
                            format!("rho = {r} must satisfy q*rho < lambda - n = {}", e.lambda - n as f64),
                        ));
                    }
                }
            }
            Kind::PowerSweep => {
                if self.sweep.levels.len() < 2 {
                    return Err(config_err("sweep.levels", "need at least two refinement levels"));
                }
                if !(self.sweep.step > 0.0 && self.sweep.stop > self.sweep.start) {
                    return Err(config_err("sweep", "need step > 0 and stop > start"));
                }
                if !(self.sweep.start > -(n as f64)) {
                    return Err(config_err("sweep.start", format!("rho must exceed -n = -{n}")));
                }
                for &l in &self.sweep.levels {
                    Grid::new(n, l).map_err(|e| config_err("sweep.levels", e))?;
                }
            }
            Kind::Counterexample => {
                if self.counterexample.ms.iter().any(|&m| m <= 2) {
                    return Err(config_err("counterexample.ms", "every m must exceed 2"));
                }
                Grid::new(n, self.counterexample.level + 2).map_err(|e| config_err("counterexample.level", e))?;
            }
            Kind::Sparse => {
                let [lo, hi] = self.fuzz.alpha_range;
                if !(0.0 < lo && lo <= hi && hi < 1.0) {
                    return Err(config_err("fuzz.alpha_range", "need 0 < lo <= hi < 1"));
                }
            }
            Kind::Universal => {
                if self.universal.exponents.iter().any(|&p| !(p > 1.0)) {
                    return Err(config_err("universal.exponents", "every p must exceed 1"));
                }
            }
            _ => {}
        }
        Ok(e)
    }
}

//! Flat `key = value` scenario configs.
//!
//! One key per line, dotted namespaces, `#` starts a comment. Lists are
//! comma separated. Unknown or repeated keys are errors.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nonlocal_lab::domain::{EllipticityParams, Grid};
use nonlocal_lab::regularity::FitMode;
use nonlocal_lab::rng::SplitMix64;
use nonlocal_lab::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::generators::DataSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    CalphaCheck,
    MainEstimate,
    Liouville,
    Sigma2Limit,
    ScalingCheck,
}

impl ScenarioKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ScenarioKind::CalphaCheck => "calpha_check",
            ScenarioKind::MainEstimate => "main_estimate",
            ScenarioKind::Liouville => "liouville",
            ScenarioKind::Sigma2Limit => "sigma2_limit",
            ScenarioKind::ScalingCheck => "scaling_check",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "calpha_check" => ScenarioKind::CalphaCheck,
            "main_estimate" => ScenarioKind::MainEstimate,
            "liouville" => ScenarioKind::Liouville,
            "sigma2_limit" => ScenarioKind::Sigma2Limit,
            "scaling_check" => ScenarioKind::ScalingCheck,
            other => return Err(Error::Config(format!("unknown scenario `{other}`"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorChoice {
    Linear,
    PucciPlus,
    PucciMinus,
    Isaacs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelChoice {
    Power,
    Dyadic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeChoice {
    Auto,
    ConstantFit,
    AffineFit,
}

impl ModeChoice {
    /// `auto` picks constant fits for targets up to 1 and affine fits above.
    pub fn resolve(&self, target: f64) -> FitMode {
        match self {
            ModeChoice::ConstantFit => FitMode::ConstantFit,
            ModeChoice::AffineFit => FitMode::AffineFit,
            ModeChoice::Auto if target > 1.0 => FitMode::AffineFit,
            ModeChoice::Auto => FitMode::ConstantFit,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamsSpec {
    pub sigma: f64,
    pub sigma0: Option<f64>,
    pub lambda: f64,
    pub lambda_upper: f64,
}

impl ParamsSpec {
    pub fn build(&self) -> Result<EllipticityParams> {
        match self.sigma0 {
            Some(s0) => EllipticityParams::new(1, self.sigma, s0, self.lambda, self.lambda_upper),
            None => EllipticityParams::one_d(self.sigma, self.lambda, self.lambda_upper),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub half_width: f64,
    pub n_points: usize,
    pub t0: f64,
    pub t_end: f64,
    pub n_steps: usize,
}

impl GridSpec {
    pub fn build(&self) -> Result<Grid> {
        Grid::new(self.half_width, self.n_points, self.t0, self.t_end, self.n_steps)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorSpec {
    pub kind: OperatorChoice,
    pub kernel: KernelChoice,
    /// Profile value of the power kernel.
    pub c: f64,
    pub kernel_seed: u64,
    pub n_alpha: usize,
    pub n_beta: usize,
    pub family_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolutionSpec {
    pub active_radius: f64,
    pub safety: f64,
    /// Constant right-hand side `f`.
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisSpec {
    pub mode: ModeChoice,
    pub r_min: Option<f64>,
    pub r_max: f64,
    pub centers_x: Vec<f64>,
    pub centers_t: Vec<f64>,
    pub seminorm_radius: f64,
    pub seminorm_interval: (f64, f64),
    pub beta_target: Option<f64>,
    pub epsilon: f64,
    /// Exponent `p` of the power envelope `D(r) <= C r^p` reported over the window.
    pub envelope_exponent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiouvilleSpec {
    pub beta: f64,
    pub rhos: Vec<f64>,
    /// `v_rho` is inspected on `Q_1` anchored at this time of the rescaled clock.
    pub anchor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Limit2Spec {
    pub sigmas: Vec<f64>,
    /// Interior window `|x| <= window` where the error is measured.
    pub window: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingSpec {
    pub r: f64,
    pub c: f64,
    pub x0: f64,
    pub slope: f64,
    pub intercept: f64,
    pub pairs: usize,
    pub families: usize,
    pub field_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputSpec {
    pub dir: PathBuf,
    pub stem: String,
    pub level_stride: usize,
    pub node_stride: usize,
}

/// Fully resolved scenario description. Component seeds that were not given
/// explicitly are derived from the master seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub scenario: ScenarioKind,
    pub seed: u64,
    pub params: ParamsSpec,
    pub grid: GridSpec,
    pub operator: OperatorSpec,
    pub exterior: DataSpec,
    pub initial: Option<DataSpec>,
    pub evolution: EvolutionSpec,
    pub analysis: AnalysisSpec,
    pub liouville: LiouvilleSpec,
    pub limit2: Limit2Spec,
    pub scaling: ScalingSpec,
    /// Thresholds checked at the end of the run, by name.
    pub asserts: BTreeMap<String, f64>,
    pub output: OutputSpec,
}

pub(crate) struct Raw {
    map: BTreeMap<String, String>,
    used: BTreeSet<String>,
}

impl Raw {
    pub(crate) fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = match line.find('#') {
                Some(p) => &line[..p],
                None => line,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", n + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() || k.contains(char::is_whitespace) {
                return Err(Error::Config(format!("line {}: bad key `{k}`", n + 1)));
            }
            if map.insert(k.to_string(), v.to_string()).is_some() {
                return Err(Error::Config(format!("line {}: key `{k}` repeated", n + 1)));
            }
        }
        Ok(Self { map, used: BTreeSet::new() })
    }

    pub(crate) fn str(&mut self, key: &str) -> Option<String> {
        let v = self.map.get(key).cloned();
        if v.is_some() {
            self.used.insert(key.to_string());
        }
        v
    }

    pub(crate) fn has_prefix(&self, prefix: &str) -> bool {
        self.map.keys().any(|k| k.starts_with(prefix))
    }

    pub(crate) fn f64_opt(&mut self, key: &str) -> Result<Option<f64>> {
        self.str(key)
            .map(|v| {
                v.parse::<f64>()
                    .map_err(|_| Error::Config(format!("`{key}`: `{v}` is not a number")))
            })
            .transpose()
    }

    pub(crate) fn f64_or(&mut self, key: &str, default: f64) -> Result<f64> {
        Ok(self.f64_opt(key)?.unwrap_or(default))
    }

    pub(crate) fn f64_req(&mut self, key: &str) -> Result<f64> {
        self.f64_opt(key)?
            .ok_or_else(|| Error::Config(format!("missing key `{key}`")))
    }

    pub(crate) fn usize_or(&mut self, key: &str, default: usize) -> Result<usize> {
        match self.str(key) {
            Some(v) => v
                .parse()
                .map_err(|_| Error::Config(format!("`{key}`: `{v}` is not a nonnegative integer"))),
            None => Ok(default),
        }
    }

    pub(crate) fn u64_opt(&mut self, key: &str) -> Result<Option<u64>> {
        self.str(key)
            .map(|v| {
                v.parse::<u64>()
                    .map_err(|_| Error::Config(format!("`{key}`: `{v}` is not a 64-bit seed")))
            })
            .transpose()
    }

    fn list(&mut self, key: &str) -> Result<Option<Vec<f64>>> {
        self.str(key)
            .map(|v| {
                v.split(',')
                    .map(|s| {
                        s.trim()
                            .parse::<f64>()
                            .map_err(|_| Error::Config(format!("`{key}`: `{s}` is not a number")))
                    })
                    .collect()
            })
            .transpose()
    }

    pub(crate) fn finish(self) -> Result<()> {
        let unknown: Vec<&String> = self.map.keys().filter(|k| !self.used.contains(*k)).collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(format!("unknown keys: {unknown:?}")))
        }
    }
}

fn derived(seed: u64, label: &str) -> u64 {
    SplitMix64::stream(seed, label).next_u64()
}

fn enum_value<T>(raw: &mut Raw, key: &str, default: T, table: &[(&str, T)]) -> Result<T>
where
    T: Copy,
{
    match raw.str(key) {
        None => Ok(default),
        Some(v) => table
            .iter()
            .find(|(n, _)| *n == v)
            .map(|(_, t)| *t)
            .ok_or_else(|| Error::Config(format!("`{key}`: unknown value `{v}`"))),
    }
}

impl ScenarioConfig {
    pub fn parse(text: &str) -> Result<Self> {
        Self::parse_with_seed(text, None)
    }

    /// Parse, replacing the master seed when `seed` is given. Derived
    /// component seeds follow the override; explicit ones do not.
    pub fn parse_with_seed(text: &str, seed: Option<u64>) -> Result<Self> {
        let mut raw = Raw::parse(text)?;
        let scenario = ScenarioKind::parse(
            &raw.str("scenario")
                .ok_or_else(|| Error::Config("missing key `scenario`".into()))?,
        )?;
        let file_seed = raw.u64_opt("seed")?.unwrap_or(0);
        let seed = seed.unwrap_or(file_seed);

        let params = ParamsSpec {
            sigma: raw.f64_req("params.sigma")?,
            sigma0: raw.f64_opt("params.sigma0")?,
            lambda: raw.f64_or("params.lambda", 1.0)?,
            lambda_upper: raw.f64_or("params.lambda_upper", 1.0)?,
        };
        let grid = GridSpec {
            half_width: raw.f64_or("grid.half_width", 2.0)?,
            n_points: raw.usize_or("grid.n_points", 256)?,
            t0: raw.f64_or("grid.t0", -1.0)?,
            t_end: raw.f64_or("grid.t_end", 0.0)?,
            n_steps: raw.usize_or("grid.n_steps", 64)?,
        };
        let default_kind = match scenario {
            ScenarioKind::Liouville => OperatorChoice::PucciPlus,
            _ => OperatorChoice::Linear,
        };
        let operator = OperatorSpec {
            kind: enum_value(
                &mut raw,
                "operator.kind",
                default_kind,
                &[
                    ("linear", OperatorChoice::Linear),
                    ("pucci_plus", OperatorChoice::PucciPlus),
                    ("pucci_minus", OperatorChoice::PucciMinus),
                    ("isaacs", OperatorChoice::Isaacs),
                ],
            )?,
            kernel: enum_value(
                &mut raw,
                "operator.kernel",
                KernelChoice::Power,
                &[("power", KernelChoice::Power), ("dyadic", KernelChoice::Dyadic)],
            )?,
            c: raw.f64_opt("operator.c")?.unwrap_or(params.lambda),
            kernel_seed: raw
                .u64_opt("operator.kernel_seed")?
                .unwrap_or_else(|| derived(seed, "kernel")),
            n_alpha: raw.usize_or("operator.n_alpha", 2)?,
            n_beta: raw.usize_or("operator.n_beta", 2)?,
            family_seed: raw
                .u64_opt("operator.family_seed")?
                .unwrap_or_else(|| derived(seed, "family")),
        };
        let exterior = DataSpec::parse(&mut raw, "exterior", seed)?.unwrap_or(DataSpec::Zero);
        let initial = DataSpec::parse(&mut raw, "initial", seed)?;
        let evolution = EvolutionSpec {
            active_radius: raw.f64_or("evolution.active_radius", 1.0)?,
            safety: raw.f64_or("evolution.safety", nonlocal_lab::evolution::DEFAULT_SAFETY)?,
            rhs: raw.f64_or("evolution.rhs", 0.0)?,
        };
        let analysis = AnalysisSpec {
            mode: enum_value(
                &mut raw,
                "analysis.mode",
                ModeChoice::Auto,
                &[
                    ("auto", ModeChoice::Auto),
                    ("constant-fit", ModeChoice::ConstantFit),
                    ("affine-fit", ModeChoice::AffineFit),
                ],
            )?,
            r_min: raw.f64_opt("analysis.r_min")?,
            r_max: raw.f64_or("analysis.r_max", 0.25)?,
            centers_x: raw.list("analysis.centers_x")?.unwrap_or_else(|| vec![-0.5, -0.25, 0.0, 0.25, 0.5]),
            centers_t: raw.list("analysis.centers_t")?.unwrap_or_else(|| vec![-0.5, -0.25, 0.0]),
            seminorm_radius: raw.f64_or("analysis.seminorm_radius", 0.5)?,
            seminorm_interval: (
                raw.f64_or("analysis.seminorm_t0", -0.5)?,
                raw.f64_or("analysis.seminorm_t1", 0.0)?,
            ),
            beta_target: raw.f64_opt("analysis.beta_target")?,
            epsilon: raw.f64_or("analysis.epsilon", 0.05)?,
            envelope_exponent: raw.f64_or("analysis.envelope_exponent", 1.0)?,
        };
        let liouville = LiouvilleSpec {
            beta: raw.f64_or("liouville.beta", 0.5)?,
            rhos: raw.list("liouville.rhos")?.unwrap_or_else(|| vec![1.0, 2.0, 4.0]),
            anchor: raw.f64_or("liouville.anchor", 2.0)?,
        };
        let limit2 = Limit2Spec {
            sigmas: raw.list("limit2.sigmas")?.unwrap_or_else(|| vec![1.9, 1.99, 1.999]),
            window: raw.f64_or("limit2.window", 1.0)?,
        };
        let scaling = ScalingSpec {
            r: raw.f64_or("scaling.r", 2.0)?,
            c: raw.f64_or("scaling.c", 3.0)?,
            x0: raw.f64_or("scaling.x0", 0.5)?,
            slope: raw.f64_or("scaling.slope", 2.0)?,
            intercept: raw.f64_or("scaling.intercept", 1.0)?,
            pairs: raw.usize_or("scaling.pairs", 100)?,
            families: raw.usize_or("scaling.families", 5)?,
            field_seed: raw
                .u64_opt("scaling.field_seed")?
                .unwrap_or_else(|| derived(seed, "scaling-fields")),
        };
        let mut asserts = BTreeMap::new();
        let keys: Vec<String> = raw.map.keys().filter(|k| k.starts_with("assert.")).cloned().collect();
        for k in keys {
            let v = raw.f64_req(&k)?;
            asserts.insert(k["assert.".len()..].to_string(), v);
        }
        let output = OutputSpec {
            dir: PathBuf::from(raw.str("output.dir").unwrap_or_else(|| "out".into())),
            stem: raw.str("output.stem").unwrap_or_else(|| scenario.as_str().into()),
            level_stride: raw.usize_or("output.level_stride", 1)?,
            node_stride: raw.usize_or("output.node_stride", 1)?,
        };
        raw.finish()?;
        let cfg = Self {
            scenario,
            seed,
            params,
            grid,
            operator,
            exterior,
            initial,
            evolution,
            analysis,
            liouville,
            limit2,
            scaling,
            asserts,
            output,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, seed: Option<u64>) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse_with_seed(&text, seed)
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if let Err(e) = self.params.build() {
            return bad(format!("params: {e}"));
        }
        if let Err(e) = self.grid.build() {
            return bad(format!("grid: {e}"));
        }
        if self.output.level_stride == 0 || self.output.node_stride == 0 {
            return bad("output strides must be positive".into());
        }
        if self.analysis.centers_x.is_empty() || self.analysis.centers_t.is_empty() {
            return bad("analysis needs at least one center".into());
        }
        if self.liouville.rhos.iter().any(|&r| r < 1.0) {
            return bad("liouville.rhos must be at least 1".into());
        }
        if self.operator.n_alpha == 0 || self.operator.n_beta == 0 {
            return bad("Isaacs family dimensions must be positive".into());
        }
        Ok(())
    }

    /// Canonical text form; parsing it gives back the same config.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        let list = |v: &[f64]| v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(", ");
        kv("scenario", self.scenario.as_str().into());
        kv("seed", self.seed.to_string());
        kv("params.sigma", format!("{:?}", self.params.sigma));
        if let Some(s0) = self.params.sigma0 {
            kv("params.sigma0", format!("{s0:?}"));
        }
        kv("params.lambda", format!("{:?}", self.params.lambda));
        kv("params.lambda_upper", format!("{:?}", self.params.lambda_upper));
        kv("grid.half_width", format!("{:?}", self.grid.half_width));
        kv("grid.n_points", self.grid.n_points.to_string());
        kv("grid.t0", format!("{:?}", self.grid.t0));
        kv("grid.t_end", format!("{:?}", self.grid.t_end));
        kv("grid.n_steps", self.grid.n_steps.to_string());
        let op = &self.operator;
        kv("operator.kind", serde_plain(&op.kind));
        kv("operator.kernel", serde_plain(&op.kernel));
        kv("operator.c", format!("{:?}", op.c));
        kv("operator.kernel_seed", op.kernel_seed.to_string());
        kv("operator.n_alpha", op.n_alpha.to_string());
        kv("operator.n_beta", op.n_beta.to_string());
        kv("operator.family_seed", op.family_seed.to_string());
        for (k, v) in self.exterior.to_pairs("exterior") {
            kv(&k, v);
        }
        if let Some(i) = &self.initial {
            for (k, v) in i.to_pairs("initial") {
                kv(&k, v);
            }
        }
        kv("evolution.active_radius", format!("{:?}", self.evolution.active_radius));
        kv("evolution.safety", format!("{:?}", self.evolution.safety));
        kv("evolution.rhs", format!("{:?}", self.evolution.rhs));
        let a = &self.analysis;
        kv("analysis.mode", serde_plain(&a.mode));
        if let Some(r) = a.r_min {
            kv("analysis.r_min", format!("{r:?}"));
        }
        kv("analysis.r_max", format!("{:?}", a.r_max));
        kv("analysis.centers_x", list(&a.centers_x));
        kv("analysis.centers_t", list(&a.centers_t));
        kv("analysis.seminorm_radius", format!("{:?}", a.seminorm_radius));
        kv("analysis.seminorm_t0", format!("{:?}", a.seminorm_interval.0));
        kv("analysis.seminorm_t1", format!("{:?}", a.seminorm_interval.1));
        if let Some(b) = a.beta_target {
            kv("analysis.beta_target", format!("{b:?}"));
        }
        kv("analysis.epsilon", format!("{:?}", a.epsilon));
        kv("analysis.envelope_exponent", format!("{:?}", a.envelope_exponent));
        kv("liouville.beta", format!("{:?}", self.liouville.beta));
        kv("liouville.rhos", list(&self.liouville.rhos));
        kv("liouville.anchor", format!("{:?}", self.liouville.anchor));
        kv("limit2.sigmas", list(&self.limit2.sigmas));
        kv("limit2.window", format!("{:?}", self.limit2.window));
        let sc = &self.scaling;
        kv("scaling.r", format!("{:?}", sc.r));
        kv("scaling.c", format!("{:?}", sc.c));
        kv("scaling.x0", format!("{:?}", sc.x0));
        kv("scaling.slope", format!("{:?}", sc.slope));
        kv("scaling.intercept", format!("{:?}", sc.intercept));
        kv("scaling.pairs", sc.pairs.to_string());
        kv("scaling.families", sc.families.to_string());
        kv("scaling.field_seed", sc.field_seed.to_string());
        for (k, v) in &self.asserts {
            kv(&format!("assert.{k}"), format!("{v:?}"));
        }
        kv("output.dir", self.output.dir.display().to_string());
        kv("output.stem", self.output.stem.clone());
        kv("output.level_stride", self.output.level_stride.to_string());
        kv("output.node_stride", self.output.node_stride.to_string());
        s
    }
}

fn serde_plain<T: Serialize>(v: &T) -> String {
    match serde_json::to_value(v) {
        Ok(serde_json::Value::String(s)) => s,
        Ok(other) => other.to_string(),
        Err(_) => String::new(),
    }
}

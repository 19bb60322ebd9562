//! Named data generators for exterior and initial data.

use std::f64::consts::TAU;

use nonlocal_lab::domain::{BoundClass, Exterior};
use nonlocal_lab::rng::SplitMix64;
use nonlocal_lab::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::config::Raw;

/// Number of Fourier modes in the bounded-noise generator.
pub const NOISE_MODES: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum DataSpec {
    Zero,
    Constant { value: f64 },
    /// `amplitude * sum_j c_j cos(k_j x + phi_j)` with `sum |c_j| = 1` and
    /// wavenumbers drawn from `N(0, 1 / correlation^2)`.
    BoundedNoise { seed: u64, amplitude: f64, correlation: f64 },
    Cosine { amplitude: f64, frequency: f64, phase: f64 },
    Affine { slope: f64, intercept: f64 },
    /// `coefficient * |x|^exponent`.
    Power { coefficient: f64, exponent: f64 },
    /// `amplitude * exp(-x^2 / width^2)`.
    Gaussian { amplitude: f64, width: f64 },
}

/// Resolved noise modes `(c_j, k_j, phi_j)`.
pub fn noise_modes(seed: u64, correlation: f64) -> Vec<(f64, f64, f64)> {
    let mut rng = SplitMix64::stream(seed, "bounded-noise");
    let mut modes: Vec<(f64, f64, f64)> = (0..NOISE_MODES)
        .map(|_| {
            let c = rng.uniform(-1.0, 1.0);
            let k = rng.normal() / correlation;
            let phi = rng.uniform(0.0, TAU);
            (c, k, phi)
        })
        .collect();
    let total: f64 = modes.iter().map(|m| m.0.abs()).sum();
    for m in &mut modes {
        m.0 /= total;
    }
    modes
}

impl DataSpec {
    pub(crate) fn parse(raw: &mut Raw, prefix: &str, master: u64) -> Result<Option<Self>> {
        let ty = match raw.str(&format!("{prefix}.type")) {
            Some(t) => t,
            None if raw.has_prefix(&format!("{prefix}.")) => {
                return Err(Error::Config(format!("`{prefix}.*` keys given without `{prefix}.type`")))
            }
            None => return Ok(None),
        };
        let k = |n: &str| format!("{prefix}.{n}");
        let spec = match ty.as_str() {
            "zero" => DataSpec::Zero,
            "constant" => DataSpec::Constant {
                value: raw.f64_or(&k("value"), 0.0)?,
            },
            "bounded-noise" => DataSpec::BoundedNoise {
                seed: raw
                    .u64_opt(&k("seed"))?
                    .unwrap_or_else(|| SplitMix64::stream(master, &format!("{prefix}-noise")).next_u64()),
                amplitude: raw.f64_or(&k("amplitude"), 1.0)?,
                correlation: raw.f64_or(&k("correlation"), 0.25)?,
            },
            "cosine" => DataSpec::Cosine {
                amplitude: raw.f64_or(&k("amplitude"), 1.0)?,
                frequency: raw.f64_or(&k("frequency"), 1.0)?,
                phase: raw.f64_or(&k("phase"), 0.0)?,
            },
            "affine" => DataSpec::Affine {
                slope: raw.f64_or(&k("slope"), 1.0)?,
                intercept: raw.f64_or(&k("intercept"), 0.0)?,
            },
            "power" => DataSpec::Power {
                coefficient: raw.f64_or(&k("coefficient"), 1.0)?,
                exponent: raw.f64_req(&k("exponent"))?,
            },
            "gaussian" => DataSpec::Gaussian {
                amplitude: raw.f64_or(&k("amplitude"), 1.0)?,
                width: raw.f64_or(&k("width"), 1.0)?,
            },
            other => return Err(Error::Config(format!("`{prefix}.type`: unknown generator `{other}`"))),
        };
        spec.check()?;
        Ok(Some(spec))
    }

    /// Build from `(key, value)` pairs such as `("type", "cosine")`, using the
    /// same keys as the config file without the prefix.
    pub fn from_pairs(pairs: &[(String, String)], seed: u64) -> Result<Self> {
        let text: String = pairs.iter().map(|(k, v)| format!("data.{k} = {v}\n")).collect();
        let mut raw = Raw::parse(&text)?;
        let spec = Self::parse(&mut raw, "data", seed)?
            .ok_or_else(|| Error::Config("data spec needs a `type`".into()))?;
        raw.finish()?;
        Ok(spec)
    }

    fn check(&self) -> Result<()> {
        let ok = match *self {
            DataSpec::Zero => true,
            DataSpec::Constant { value } => value.is_finite(),
            DataSpec::BoundedNoise { amplitude, correlation, .. } => {
                amplitude.is_finite() && amplitude >= 0.0 && correlation > 0.0 && correlation.is_finite()
            }
            DataSpec::Cosine { amplitude, frequency, phase } => {
                amplitude.is_finite() && frequency.is_finite() && phase.is_finite()
            }
            DataSpec::Affine { slope, intercept } => slope.is_finite() && intercept.is_finite(),
            DataSpec::Power { coefficient, exponent } => {
                coefficient.is_finite() && exponent > 0.0 && exponent.is_finite()
            }
            DataSpec::Gaussian { amplitude, width } => amplitude.is_finite() && width > 0.0 && width.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid generator parameters {self:?}")))
        }
    }

    pub(crate) fn to_pairs(&self, prefix: &str) -> Vec<(String, String)> {
        let k = |n: &str| format!("{prefix}.{n}");
        let f = |v: f64| format!("{v:?}");
        match *self {
            DataSpec::Zero => vec![(k("type"), "zero".into())],
            DataSpec::Constant { value } => vec![(k("type"), "constant".into()), (k("value"), f(value))],
            DataSpec::BoundedNoise { seed, amplitude, correlation } => vec![
                (k("type"), "bounded-noise".into()),
                (k("seed"), seed.to_string()),
                (k("amplitude"), f(amplitude)),
                (k("correlation"), f(correlation)),
            ],
            DataSpec::Cosine { amplitude, frequency, phase } => vec![
                (k("type"), "cosine".into()),
                (k("amplitude"), f(amplitude)),
                (k("frequency"), f(frequency)),
                (k("phase"), f(phase)),
            ],
            DataSpec::Affine { slope, intercept } => vec![
                (k("type"), "affine".into()),
                (k("slope"), f(slope)),
                (k("intercept"), f(intercept)),
            ],
            DataSpec::Power { coefficient, exponent } => vec![
                (k("type"), "power".into()),
                (k("coefficient"), f(coefficient)),
                (k("exponent"), f(exponent)),
            ],
            DataSpec::Gaussian { amplitude, width } => vec![
                (k("type"), "gaussian".into()),
                (k("amplitude"), f(amplitude)),
                (k("width"), f(width)),
            ],
        }
    }

    /// `u''(x)` for the smooth generators.
    pub fn second_derivative(&self, x: f64) -> Option<f64> {
        match *self {
            DataSpec::Zero | DataSpec::Constant { .. } | DataSpec::Affine { .. } => Some(0.0),
            DataSpec::Cosine { amplitude, frequency, phase } => {
                Some(-amplitude * frequency * frequency * (frequency * x + phase).cos())
            }
            DataSpec::BoundedNoise { seed, amplitude, correlation } => Some(
                -amplitude
                    * noise_modes(seed, correlation)
                        .iter()
                        .map(|(c, k, p)| c * k * k * (k * x + p).cos())
                        .sum::<f64>(),
            ),
            DataSpec::Gaussian { amplitude, width } => {
                let w2 = width * width;
                Some(amplitude * (4.0 * x * x / (w2 * w2) - 2.0 / w2) * (-x * x / w2).exp())
            }
            DataSpec::Power { .. } => None,
        }
    }

    /// Time-independent exterior data with its declared bound class.
    pub fn build(&self) -> Exterior {
        match *self {
            DataSpec::Zero => Exterior::zero(),
            DataSpec::Constant { value } => Exterior::constant(value),
            DataSpec::BoundedNoise { seed, amplitude, correlation } => {
                let modes = noise_modes(seed, correlation);
                Exterior::stationary(
                    move |x| amplitude * modes.iter().map(|(c, k, p)| c * (k * x + p).cos()).sum::<f64>(),
                    BoundClass::Bounded { bound: amplitude },
                )
                .labelled("bounded-noise")
            }
            DataSpec::Cosine { amplitude, frequency, phase } => Exterior::stationary(
                move |x| amplitude * (frequency * x + phase).cos(),
                BoundClass::Bounded { bound: amplitude.abs() },
            )
            .labelled("cosine"),
            DataSpec::Affine { slope, intercept } => Exterior::affine(slope, intercept),
            DataSpec::Power { coefficient, exponent } => Exterior::stationary(
                move |x| coefficient * x.abs().powf(exponent),
                BoundClass::Growth { c: coefficient.abs(), beta: exponent },
            )
            .labelled("power"),
            DataSpec::Gaussian { amplitude, width } => Exterior::stationary(
                move |x| amplitude * (-x * x / (width * width)).exp(),
                BoundClass::Bounded { bound: amplitude.abs() },
            )
            .labelled("gaussian"),
        }
    }
}

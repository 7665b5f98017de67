//! Experiment configuration in TOML.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::processes::BrownianBridge;
use crate::spectral_measures::{generate_spectrum, Atom, DensityKind, SpectralMeasure, Spectrum, TruncationBudget};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MeasureSpec {
    /// Bernoulli convolution with contraction `ratio`.
    Aifs { ratio: f64 },
    /// The Bernoulli measure paired with `Lambda_m`, ratio `1/(2m)`.
    Generator { m: u32 },
    Atomic { atoms: Vec<Atom> },
    Density { density: DensityKind },
    /// Brownian bridge on `[0, pi]` with atoms at `2n`, `n <= n_max`.
    Bridge { n_max: usize },
}

impl MeasureSpec {
    pub fn build(&self) -> Result<SpectralMeasure> {
        match self {
            Self::Aifs { ratio } => SpectralMeasure::aifs(*ratio),
            Self::Generator { m } => Ok(SpectralMeasure::Aifs(crate::spectral_measures::Aifs::for_generator(*m)?)),
            Self::Atomic { atoms } => SpectralMeasure::atomic(atoms.clone()),
            Self::Density { density } => SpectralMeasure::density(*density),
            Self::Bridge { n_max } => Ok(BrownianBridge::new(*n_max)?.measure().clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSpec {
    pub m: u32,
    pub n: usize,
    /// Explicit frequencies overriding the generated ones.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frequencies: Option<Vec<f64>>,
}

impl SpectrumSpec {
    pub fn build(&self) -> Result<Spectrum> {
        match &self.frequencies {
            Some(f) => Spectrum::from_frequencies(f.clone()),
            None => generate_spectrum(self.m, self.n),
        }
    }
}

/// `points` equally spaced values from `start` to `end` inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub start: f64,
    pub end: f64,
    pub points: usize,
}

impl Grid {
    pub fn values(&self) -> Result<Vec<f64>> {
        if self.points == 0 || !self.start.is_finite() || !self.end.is_finite() {
            return Err(invalid("grid needs finite endpoints and at least one point"));
        }
        if self.points == 1 {
            return Ok(vec![self.start]);
        }
        let h = (self.end - self.start) / (self.points - 1) as f64;
        Ok((0..self.points)
            .map(|i| if i + 1 == self.points { self.end } else { self.start + h * i as f64 })
            .collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub paths: usize,
    pub seed: u64,
}

/// Thresholds used by `verify`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VerifySpec {
    pub deficit_threshold: f64,
    pub random_points: usize,
    pub mc_paths: usize,
}

impl Default for VerifySpec {
    fn default() -> Self {
        Self {
            deficit_threshold: 5e-2,
            random_points: 100,
            mc_paths: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub measure: MeasureSpec,
    pub spectrum: SpectrumSpec,
    #[serde(default)]
    pub budget: TruncationBudget,
    pub times: Grid,
    pub charfun: Grid,
    pub ensemble: EnsembleSpec,
    #[serde(default)]
    pub verify: VerifySpec,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            measure: MeasureSpec::Aifs { ratio: 0.25 },
            spectrum: SpectrumSpec {
                m: 2,
                n: 64,
                frequencies: None,
            },
            budget: TruncationBudget::default(),
            times: Grid {
                start: 0.0,
                end: 1.0,
                points: 65,
            },
            charfun: Grid {
                start: 0.0,
                end: 4.0 * std::f64::consts::PI,
                points: 33,
            },
            ensemble: EnsembleSpec { paths: 1000, seed: 42 },
            verify: VerifySpec::default(),
            output_dir: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::InvalidParameter(format!("config: {e}")))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::InvalidParameter(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidParameter(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.budget.validate()?;
        self.measure.build()?;
        self.spectrum.build()?;
        self.times.values()?;
        self.charfun.values()?;
        if self.ensemble.paths == 0 {
            return Err(invalid("ensemble needs at least one path"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn default_round_trips_and_validates() {
        let c = ExperimentConfig::default();
        c.validate().unwrap();
        let s = c.to_toml_string().unwrap();
        assert_eq!(ExperimentConfig::from_toml_str(&s).unwrap(), c);
    }

    #[test]
    fn hand_written_file() {
        let s = r#"
            output_dir = "runs/a"
            [measure]
            kind = "density"
            density = { kind = "ornstein_uhlenbeck", theta = 1.0, alpha = 1.0 }
            [spectrum]
            m = 2
            n = 8
            [times]
            start = 0.0
            end = 2.0
            points = 5
            [charfun]
            start = 0.0
            end = 1.0
            points = 3
            [ensemble]
            paths = 10
            seed = 7
        "#;
        let c = ExperimentConfig::from_toml_str(s).unwrap();
        assert_eq!(c.times.values().unwrap(), vec![0.0, 0.5, 1.0, 1.5, 2.0]);
        assert_eq!(c.budget, TruncationBudget::default());
        assert!(c.measure.build().unwrap().as_aifs().is_none());
        assert!(ExperimentConfig::from_toml_str("measure = 3").is_err());
    }

    fn measure_spec() -> impl Strategy<Value = MeasureSpec> {
        prop_oneof![
            (0.01f64..0.99).prop_map(|ratio| MeasureSpec::Aifs { ratio }),
            (2u32..6).prop_map(|m| MeasureSpec::Generator { m }),
            prop::collection::vec((-5.0f64..5.0, 0.0f64..2.0), 1..4)
                .prop_map(|v| MeasureSpec::Atomic { atoms: v.into_iter().map(|(point, mass)| Atom { point, mass }).collect() }),
            (0.1f64..3.0, 0.1f64..3.0).prop_map(|(theta, alpha)| MeasureSpec::Density {
                density: DensityKind::OrnsteinUhlenbeck { theta, alpha }
            }),
            (1usize..500).prop_map(|n_max| MeasureSpec::Bridge { n_max }),
        ]
    }

    proptest! {
        #[test]
        fn toml_round_trip_is_lossless(
            measure in measure_spec(),
            m in 2u32..5,
            n in 1usize..300,
            freqs in prop::option::of(prop::collection::vec(-1e3f64..1e3, 1..5)),
            start in -10.0f64..10.0,
            len in 0.0f64..10.0,
            points in 1usize..1000,
            paths in 1usize..100_000,
            seed in any::<u64>(),
            tol in 1e-15f64..1e-3,
        ) {
            let c = ExperimentConfig {
                measure,
                spectrum: SpectrumSpec { m, n, frequencies: freqs },
                budget: TruncationBudget::default().with_tol(tol),
                times: Grid { start, end: start + len, points },
                charfun: Grid { start: 0.0, end: len, points },
                ensemble: EnsembleSpec { paths, seed },
                verify: VerifySpec::default(),
                output_dir: PathBuf::from(format!("out/{seed}")),
            };
            let s = c.to_toml_string().unwrap();
            prop_assert_eq!(ExperimentConfig::from_toml_str(&s).unwrap(), c);
        }
    }
}

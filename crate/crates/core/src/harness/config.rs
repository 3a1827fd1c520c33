//! Run configuration (TOML) and loading of model and source files.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::modeode::{FitOptions, Grid, PicardOptions};
use crate::series::{AnalyticGerm, PhgSeries};
use crate::spectral::{ModelKind, SpectralModel};
use crate::Result;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub x0: f64,
    pub x_min: f64,
    pub count: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        let g = Grid::default();
        Self {
            x0: g.x0,
            x_min: g.x_min,
            count: g.count,
        }
    }
}

impl From<Grid> for GridConfig {
    fn from(g: Grid) -> Self {
        Self {
            x0: g.x0,
            x_min: g.x_min,
            count: g.count,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Sup-norm change at which the Picard iteration stops.
    pub picard: f64,
    pub picard_max_iter: usize,
    /// Allowed distance of a remainder slope from the next index.
    pub slope: f64,
    /// Relative noise floor of the remainder fits.
    pub noise: f64,
    pub gauge: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            picard: 1e-14,
            picard_max_iter: 200,
            slope: 0.1,
            noise: 1e-12,
            gauge: 1e-12,
        }
    }
}

/// Everything a `solve` run needs. Paths are taken relative to the working
/// directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Model JSON file, or a built-in model (see [`load_model`]).
    pub model_file: Option<String>,
    /// Expansion of `f` as series JSON; absent means `f ≡ −c0`.
    pub source_file: Option<PathBuf>,
    pub order: f64,
    pub c0: f64,
    pub germ: String,
    pub grid: GridConfig,
    pub tolerances: Tolerances,
    pub output_dir: Option<PathBuf>,
    /// Runs a bundled scenario instead of the model/source files.
    pub scenario: Option<String>,
    pub seed: u64,
    /// Per-mode values of `v(x₀)`; defaults to the formal series at `x₀`.
    pub boundary: Option<Vec<f64>>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model_file: None,
            source_file: None,
            order: 2.0,
            c0: 1.0,
            germ: "log1p".into(),
            grid: GridConfig::default(),
            tolerances: Tolerances::default(),
            output_dir: None,
            scenario: None,
            seed: 7,
            boundary: None,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_toml(&text)
    }

    /// Applies the keys present in `text` on top of `self`; absent keys keep
    /// their current values.
    pub fn overlay_toml(&self, text: &str) -> Result<Self> {
        let config = |e: &dyn std::fmt::Display| HarnessError::Config(e.to_string());
        let mut base = toml::Table::try_from(self).map_err(|e| config(&e))?;
        let top: toml::Table = toml::from_str(text).map_err(|e| config(&e))?;
        merge(&mut base, top);
        Ok(base.try_into().map_err(|e| config(&e))?)
    }

    pub fn overlay_file(&self, path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        self.overlay_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let t = &self.tolerances;
        for (name, v) in [
            ("picard", t.picard),
            ("slope", t.slope),
            ("noise", t.noise),
            ("gauge", t.gauge),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(HarnessError::Config(format!("tolerance `{name}` must be positive, got {v}")).into());
            }
        }
        if t.picard_max_iter == 0 {
            return Err(HarnessError::Config("picard_max_iter must be at least 1".into()).into());
        }
        if !(self.order >= 0.0 && self.order.is_finite()) {
            return Err(
                HarnessError::Config(format!("order must be finite and non-negative, got {}", self.order)).into(),
            );
        }
        if !self.c0.is_finite() {
            return Err(HarnessError::Config("c0 must be finite".into()).into());
        }
        self.grid()?;
        self.germ()?;
        Ok(())
    }

    pub fn grid(&self) -> Result<Grid> {
        Ok(Grid::new(self.grid.x0, self.grid.x_min, self.grid.count)?)
    }

    pub fn germ(&self) -> Result<AnalyticGerm> {
        Ok(AnalyticGerm::parse(&self.germ)?)
    }

    pub fn picard_options(&self) -> PicardOptions {
        PicardOptions {
            tol: self.tolerances.picard,
            max_iter: self.tolerances.picard_max_iter,
            ..Default::default()
        }
    }

    pub fn fit_options(&self) -> FitOptions {
        FitOptions {
            noise: self.tolerances.noise,
            gauge_tol: self.tolerances.gauge,
            slope_tolerance: self.tolerances.slope,
            ..Default::default()
        }
    }
}

fn merge(base: &mut toml::Table, top: toml::Table) {
    for (key, value) in top {
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(t)) => merge(b, t),
            (_, v) => {
                base.insert(key, v);
            }
        }
    }
}

/// Parses a built-in model name: `point`, `circle:MODES[:RADIUS]` or
/// `torus:N:CUTOFF[:RADIUS]`.
pub fn builtin_model(spec: &str) -> Option<Result<SpectralModel>> {
    let parts: Vec<&str> = spec.split(':').collect();
    let num = |i: usize| -> std::result::Result<Option<f64>, HarnessError> {
        parts
            .get(i)
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|e| HarnessError::Input(format!("model `{spec}`: {e}")))
            })
            .transpose()
    };
    let kind = match parts[0] {
        "point" if parts.len() == 1 => Ok(ModelKind::Point),
        "circle" if (2..=3).contains(&parts.len()) => (|| {
            Ok(ModelKind::Circle {
                modes: num(1)?.unwrap_or(0.0) as usize,
                radius: num(2)?.unwrap_or(1.0),
            })
        })(),
        "torus" if (3..=4).contains(&parts.len()) => (|| {
            Ok(ModelKind::Torus {
                n: num(1)?.unwrap_or(0.0) as usize,
                lattice_cutoff: num(2)?.unwrap_or(0.0) as u32,
                radius: num(3)?.unwrap_or(1.0),
            })
        })(),
        _ => return None,
    };
    Some(
        kind.and_then(|k| SpectralModel::builtin(k).map_err(|e| HarnessError::Input(e.to_string())))
            .map_err(Into::into),
    )
}

/// Loads a model from a JSON file, falling back to a built-in name.
pub fn load_model(spec: &str) -> Result<SpectralModel> {
    let path = Path::new(spec);
    if path.exists() {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        return Ok(SpectralModel::from_json(&text)?);
    }
    builtin_model(spec).unwrap_or_else(|| {
        Err(HarnessError::Input(format!("model `{spec}` is neither a file nor a built-in model")).into())
    })
}

/// Loads a source expansion; `None` gives the zero series on `len` modes.
pub fn load_source(path: Option<&Path>, len: usize) -> Result<PhgSeries> {
    match path {
        None => Ok(PhgSeries::zero(len, f64::INFINITY)),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| HarnessError::io(p, e))?;
            Ok(PhgSeries::from_json(&text)?)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip() {
        let cfg = RunConfig {
            model_file: Some("circle:3".into()),
            order: 1.5,
            boundary: Some(vec![0.1, 0.0, 0.0]),
            ..Default::default()
        };
        let back = RunConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn partial_toml_uses_defaults() {
        let cfg = RunConfig::from_toml("order = 3.0\n[grid]\ncount = 1024\n").unwrap();
        assert_eq!(cfg.order, 3.0);
        assert_eq!(cfg.grid.count, 1024);
        assert_eq!(cfg.grid.x0, 0.1);
        assert_eq!(cfg.tolerances, Tolerances::default());
    }

    #[test]
    fn rejects_bad_values() {
        let mut cfg = RunConfig::default();
        cfg.tolerances.noise = 0.0;
        assert!(cfg.validate().is_err());
        assert!(RunConfig::from_toml("unknown = 1").is_err());
        assert!(RunConfig::from_toml("order = \"two\"").is_err());
    }

    #[test]
    fn overlay_keeps_absent_keys() {
        let flags = RunConfig {
            model_file: Some("point".into()),
            order: 1.0,
            seed: 11,
            ..Default::default()
        };
        let cfg = flags.overlay_toml("order = 2.0\n[grid]\nx0 = 0.05\n").unwrap();
        assert_eq!(cfg.order, 2.0);
        assert_eq!(cfg.grid.x0, 0.05);
        assert_eq!(cfg.grid.count, flags.grid.count);
        assert_eq!(cfg.seed, 11);
        assert_eq!(cfg.model_file.as_deref(), Some("point"));
        assert!(flags.overlay_toml("bogus = true").is_err());
    }

    #[test]
    fn builtin_names() {
        assert_eq!(load_model("point").unwrap().len(), 1);
        assert_eq!(load_model("circle:5").unwrap().len(), 5);
        assert_eq!(load_model("circle:5:2.0").unwrap().eigenvalues()[1], 0.25);
        assert!(load_model("torus:2:2").unwrap().len() > 1);
        assert!(load_model("sphere").is_err());
        assert!(load_model("circle:x").is_err());
    }
}

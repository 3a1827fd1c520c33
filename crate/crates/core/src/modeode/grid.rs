use serde::{Deserialize, Serialize};

use super::ModeOdeError;

/// Geometrically spaced points `xMin = x_0 < … < x_{n−1} = x₀`, uniform in
/// `t = log x`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub x0: f64,
    pub x_min: f64,
    pub count: usize,
}

impl Default for Grid {
    fn default() -> Self {
        Self {
            x0: 0.1,
            x_min: 1e-6,
            count: 512,
        }
    }
}

impl Grid {
    pub fn new(x0: f64, x_min: f64, count: usize) -> Result<Self, ModeOdeError> {
        let grid = Self { x0, x_min, count };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<(), ModeOdeError> {
        if !(self.x_min > 0.0 && self.x0 > self.x_min && self.x0.is_finite()) {
            return Err(ModeOdeError::InvalidGrid(format!(
                "need 0 < xmin < x0, got xmin={} x0={}",
                self.x_min, self.x0
            )));
        }
        if self.count < 8 {
            return Err(ModeOdeError::InvalidGrid(format!(
                "need at least 8 points, got {}",
                self.count
            )));
        }
        Ok(())
    }

    /// Parses `"x0=0.1,xmin=1e-6,n=512"`; missing keys keep their defaults.
    pub fn parse(text: &str) -> Result<Self, ModeOdeError> {
        let mut grid = Grid::default();
        for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (key, value) = part
                .split_once('=')
                .ok_or_else(|| ModeOdeError::InvalidGrid(format!("expected key=value, got {part:?}")))?;
            let bad = |_| ModeOdeError::InvalidGrid(format!("bad value for {key}: {value:?}"));
            match key.trim() {
                "x0" => grid.x0 = value.trim().parse().map_err(bad)?,
                "xmin" => grid.x_min = value.trim().parse().map_err(bad)?,
                "n" => {
                    grid.count = value
                        .trim()
                        .parse()
                        .map_err(|_| ModeOdeError::InvalidGrid(format!("bad value for n: {value:?}")))?
                }
                other => return Err(ModeOdeError::InvalidGrid(format!("unknown grid key {other:?}"))),
            }
        }
        grid.validate()?;
        Ok(grid)
    }

    /// Spacing in `t = log x`.
    pub fn step(&self) -> f64 {
        (self.x0.ln() - self.x_min.ln()) / (self.count - 1) as f64
    }

    pub fn t(&self, k: usize) -> f64 {
        if k == self.count - 1 {
            return self.x0.ln();
        }
        self.x_min.ln() + k as f64 * self.step()
    }

    pub fn x(&self, k: usize) -> f64 {
        if k == 0 {
            self.x_min
        } else if k == self.count - 1 {
            self.x0
        } else {
            self.t(k).exp()
        }
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.count).map(|k| self.x(k)).collect()
    }

    /// The same interval with every panel halved.
    pub fn refined(&self) -> Self {
        Self {
            count: 2 * self.count - 1,
            ..self.clone()
        }
    }

    /// Indices of points inside `[lo, hi]`.
    pub fn window(&self, lo: f64, hi: f64) -> std::ops::Range<usize> {
        let pts = self.points();
        let start = pts.partition_point(|x| *x < lo * (1.0 - 1e-12));
        let end = pts.partition_point(|x| *x <= hi * (1.0 + 1e-12));
        start..end.max(start)
    }
}

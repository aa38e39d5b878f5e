//! Measurement geometry and physical constants.
//!
//! The source plane sits at `z = 0` and the hologram plane at `z = z_h`. Both
//! grids are cell-centred and share the lateral axis through the origin; grid
//! columns run along `x` and rows along `y`.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{NahError, Result};

/// Geometry of the planar holography setup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NahConfig {
    pub holo_rows: usize,
    pub holo_cols: usize,
    pub src_rows: usize,
    pub src_cols: usize,
    pub holo_pitch_x: f64,
    pub holo_pitch_y: f64,
    pub src_pitch_x: f64,
    pub src_pitch_y: f64,
    /// Hologram standoff above the source plane (m).
    pub z_h: f64,
    /// Speed of sound (m/s).
    pub c: f64,
    /// Air density (kg/m^3).
    pub rho0: f64,
    /// 2.0 for a baffled plane (Rayleigh), 1.0 for the bare velocity term.
    pub baffle_factor: f64,
}

impl Default for NahConfig {
    fn default() -> Self {
        let src_rows = 16;
        let src_cols = 64;
        let src_pitch_x = 0.0105;
        let src_pitch_y = 0.0165;
        let holo_rows = 8;
        let holo_cols = 8;
        NahConfig {
            holo_rows,
            holo_cols,
            src_rows,
            src_cols,
            holo_pitch_x: src_pitch_x * src_cols as f64 / holo_cols as f64,
            holo_pitch_y: src_pitch_y * src_rows as f64 / holo_rows as f64,
            src_pitch_x,
            src_pitch_y,
            z_h: 0.0312,
            c: 343.0,
            rho0: 1.225,
            baffle_factor: 2.0,
        }
    }
}

/// Lateral layout of a cell-centred grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub rows: usize,
    pub cols: usize,
    pub pitch_x: f64,
    pub pitch_y: f64,
}

impl Grid {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn width(&self) -> f64 {
        self.cols as f64 * self.pitch_x
    }

    pub fn height(&self) -> f64 {
        self.rows as f64 * self.pitch_y
    }

    pub fn x(&self, col: usize) -> f64 {
        (col as f64 + 0.5) * self.pitch_x - 0.5 * self.width()
    }

    pub fn y(&self, row: usize) -> f64 {
        (row as f64 + 0.5) * self.pitch_y - 0.5 * self.height()
    }

    /// Points in row-major order at height `z`.
    pub fn points(&self, z: f64) -> Vec<[f64; 3]> {
        let mut out = Vec::with_capacity(self.len());
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.push([self.x(c), self.y(r), z]);
            }
        }
        out
    }

    pub fn cell_area(&self) -> f64 {
        self.pitch_x * self.pitch_y
    }
}

impl NahConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [self.holo_rows, self.holo_cols, self.src_rows, self.src_cols];
        if counts.contains(&0) {
            return Err(NahError::Config("grid counts must be at least 1".into()));
        }
        let positive = [
            ("holo_pitch_x", self.holo_pitch_x),
            ("holo_pitch_y", self.holo_pitch_y),
            ("src_pitch_x", self.src_pitch_x),
            ("src_pitch_y", self.src_pitch_y),
            ("z_h", self.z_h),
            ("c", self.c),
            ("rho0", self.rho0),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(NahError::Config(format!("{name} must be finite and > 0, got {v}")));
            }
        }
        if self.baffle_factor != 1.0 && self.baffle_factor != 2.0 {
            return Err(NahError::Config(format!(
                "baffle_factor must be 1 or 2, got {}",
                self.baffle_factor
            )));
        }
        Ok(())
    }

    pub fn source_grid(&self) -> Grid {
        Grid {
            rows: self.src_rows,
            cols: self.src_cols,
            pitch_x: self.src_pitch_x,
            pitch_y: self.src_pitch_y,
        }
    }

    pub fn hologram_grid(&self) -> Grid {
        Grid {
            rows: self.holo_rows,
            cols: self.holo_cols,
            pitch_x: self.holo_pitch_x,
            pitch_y: self.holo_pitch_y,
        }
    }

    pub fn n_source(&self) -> usize {
        self.src_rows * self.src_cols
    }

    pub fn n_hologram(&self) -> usize {
        self.holo_rows * self.holo_cols
    }

    /// SHA-256 of the canonical JSON encoding. Keys propagator memos and tags
    /// tensor files written for a dataset.
    pub fn geometry_hash(&self) -> [u8; 32] {
        let json = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&json).into()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_matches_reference_geometry() {
        let cfg = NahConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.n_hologram(), 64);
        assert_eq!(cfg.n_source(), 1024);
        assert_eq!(cfg.z_h, 0.0312);
        assert_eq!(cfg.rho0, 1.225);
        let s = cfg.source_grid();
        let h = cfg.hologram_grid();
        assert!((s.width() - h.width()).abs() < 1e-12);
        assert!((s.height() - h.height()).abs() < 1e-12);
    }

    #[test]
    fn grids_are_centred() {
        let g = NahConfig::default().source_grid();
        let pts = g.points(0.0);
        let (sx, sy) = pts.iter().fold((0.0, 0.0), |(a, b), p| (a + p[0], b + p[1]));
        assert!(sx.abs() < 1e-9 && sy.abs() < 1e-9);
    }

    #[test]
    fn rejects_bad_values() {
        let mut cfg = NahConfig::default();
        cfg.baffle_factor = 1.5;
        assert!(cfg.validate().is_err());
        let mut cfg = NahConfig::default();
        cfg.src_cols = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = NahConfig::default();
        cfg.z_h = -0.01;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn hash_tracks_geometry() {
        let a = NahConfig::default();
        let mut b = a.clone();
        assert_eq!(a.geometry_hash(), b.geometry_hash());
        b.z_h = 0.05;
        assert_ne!(a.geometry_hash(), b.geometry_hash());
    }
}

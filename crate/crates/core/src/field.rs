use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{NahError, Result};

/// Physical meaning of a [`ComplexField`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Quantity {
    Pressure,
    NormalVelocity,
    /// Dimensionless coefficients (network parameters, source strengths).
    Coefficient,
}

impl Quantity {
    pub fn tag(self) -> u8 {
        match self {
            Quantity::Pressure => 0,
            Quantity::NormalVelocity => 1,
            Quantity::Coefficient => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(Quantity::Pressure),
            1 => Ok(Quantity::NormalVelocity),
            2 => Ok(Quantity::Coefficient),
            t => Err(NahError::BadQuantity(t)),
        }
    }
}

/// A row-major grid of complex values on a plane.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexField {
    rows: usize,
    cols: usize,
    values: Vec<Complex64>,
    quantity: Quantity,
}

impl ComplexField {
    pub fn new(rows: usize, cols: usize, values: Vec<Complex64>, quantity: Quantity) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(NahError::shape(format!("{rows}x{cols}"), format!("{} values", values.len())));
        }
        if let Some(i) = values.iter().position(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(NahError::Config(format!("non-finite field entry at index {i}")));
        }
        Ok(ComplexField {
            rows,
            cols,
            values,
            quantity,
        })
    }

    pub fn zeros(rows: usize, cols: usize, quantity: Quantity) -> Self {
        ComplexField {
            rows,
            cols,
            values: vec![Complex64::new(0.0, 0.0); rows * cols],
            quantity,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn quantity(&self) -> Quantity {
        self.quantity
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.values[row * self.cols + col]
    }

    pub fn max_modulus(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn scaled(&self, s: Complex64) -> ComplexField {
        ComplexField {
            rows: self.rows,
            cols: self.cols,
            values: self.values.iter().map(|v| v * s).collect(),
            quantity: self.quantity,
        }
    }

    /// Zero every entry outside `mask`.
    pub fn masked(&self, mask: &BinaryMask) -> Result<ComplexField> {
        mask.check_shape(self.rows, self.cols)?;
        let values = self
            .values
            .iter()
            .zip(mask.bits())
            .map(|(&v, &b)| if b { v } else { Complex64::new(0.0, 0.0) })
            .collect();
        Ok(ComplexField {
            values,
            ..self.clone()
        })
    }
}

/// Membership of source-grid points in the plate surface.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    rows: usize,
    cols: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(rows: usize, cols: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != rows * cols {
            return Err(NahError::shape(format!("{rows}x{cols}"), format!("{} bits", bits.len())));
        }
        if !bits.iter().any(|&b| b) {
            return Err(NahError::Config("mask has no active point".into()));
        }
        Ok(BinaryMask { rows, cols, bits })
    }

    pub fn full(rows: usize, cols: usize) -> Self {
        BinaryMask {
            rows,
            cols,
            bits: vec![true; rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> bool) -> Result<Self> {
        let mut bits = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                bits.push(f(r, c));
            }
        }
        BinaryMask::new(rows, cols, bits)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.bits[row * self.cols + col]
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn fraction(&self) -> f64 {
        self.count() as f64 / self.bits.len() as f64
    }

    pub fn is_full(&self) -> bool {
        self.bits.iter().all(|&b| b)
    }

    pub fn check_shape(&self, rows: usize, cols: usize) -> Result<()> {
        if (self.rows, self.cols) != (rows, cols) {
            return Err(NahError::shape(
                format!("{}x{}", self.rows, self.cols),
                format!("{rows}x{cols}"),
            ));
        }
        Ok(())
    }

    /// `.mask` file body: one line of `0`/`1` characters per row.
    pub fn to_text(&self) -> String {
        let mut s = String::with_capacity(self.rows * (self.cols + 1));
        for r in 0..self.rows {
            for c in 0..self.cols {
                s.push(if self.get(r, c) { '1' } else { '0' });
            }
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
        let rows = lines.len();
        let cols = lines.first().map(|l| l.trim().len()).unwrap_or(0);
        let mut bits = Vec::with_capacity(rows * cols);
        for line in &lines {
            let line = line.trim();
            if line.len() != cols {
                return Err(NahError::Config("ragged mask rows".into()));
            }
            for ch in line.chars() {
                match ch {
                    '0' => bits.push(false),
                    '1' => bits.push(true),
                    other => return Err(NahError::Config(format!("bad mask character {other:?}"))),
                }
            }
        }
        BinaryMask::new(rows, cols, bits)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_wrong_length_and_nan() {
        assert!(ComplexField::new(2, 2, vec![Complex64::new(0.0, 0.0); 3], Quantity::Pressure).is_err());
        let bad = vec![Complex64::new(f64::NAN, 0.0); 4];
        assert!(ComplexField::new(2, 2, bad, Quantity::Pressure).is_err());
    }

    #[test]
    fn empty_mask_rejected() {
        assert!(BinaryMask::new(2, 2, vec![false; 4]).is_err());
    }

    #[test]
    fn mask_text_round_trip() {
        let m = BinaryMask::from_fn(3, 5, |r, c| (r + c) % 2 == 0).unwrap();
        let back = BinaryMask::from_text(&m.to_text()).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn masking_zeroes_outside() {
        let f = ComplexField::new(1, 3, vec![Complex64::new(1.0, 1.0); 3], Quantity::NormalVelocity).unwrap();
        let m = BinaryMask::new(1, 3, vec![true, false, true]).unwrap();
        let g = f.masked(&m).unwrap();
        assert_eq!(g.values()[1], Complex64::new(0.0, 0.0));
        assert_eq!(g.values()[2], Complex64::new(1.0, 1.0));
    }
}

//! Row-major intensity grids.

use crate::error::{Error, Result};

/// H x W grid of real intensities, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Pixels {
    h: usize,
    w: usize,
    data: Vec<f64>,
}

impl Pixels {
    pub fn zeros(h: usize, w: usize) -> Self {
        Pixels {
            h,
            w,
            data: vec![0.0; h * w],
        }
    }

    pub fn from_data(h: usize, w: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != h * w {
            return Err(Error::ShapeMismatch {
                expected: h * w,
                got: data.len(),
            });
        }
        Ok(Pixels { h, w, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let h = rows.len();
        let w = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(h * w);
        for row in rows {
            if row.len() != w {
                return Err(Error::ShapeMismatch {
                    expected: w,
                    got: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Ok(Pixels { h, w, data })
    }

    pub fn h(&self) -> usize {
        self.h
    }

    pub fn w(&self) -> usize {
        self.w
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.w + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.w + c] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// 180-degree rotation (both axes reversed). Shape-preserving for any H x W.
    pub fn rot180(&self) -> Pixels {
        let mut data = self.data.clone();
        data.reverse();
        Pixels {
            h: self.h,
            w: self.w,
            data,
        }
    }

    pub fn clamp01(&mut self) {
        for v in &mut self.data {
            *v = v.clamp(0.0, 1.0);
        }
    }
}

//! Attention maps: a 2D float field highlighting salient regions.

use crate::error::{Error, Result};

/// Row-major float grid with `rows` x `cols` finite values.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionMap {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl AttentionMap {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Dimension {
                width: cols,
                height: rows,
            });
        }
        if values.len() != rows * cols {
            return Err(Error::Ingestion(format!(
                "attention has {} values, expected {rows}x{cols}",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Ingestion(format!(
                "attention value at index {i} is not finite"
            )));
        }
        Ok(Self { rows, cols, values })
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let values = (0..rows * cols).map(|i| f(i / cols, i % cols)).collect();
        Self::new(rows, cols, values)
    }

    pub fn constant(rows: usize, cols: usize, value: f64) -> Result<Self> {
        Self::new(rows, cols, vec![value; rows * cols])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols + col]
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    /// Min-max scales into [0, 1]. A constant map becomes all 0.5.
    pub fn normalize(&self) -> AttentionMap {
        let (lo, hi) = self.min_max();
        let span = hi - lo;
        let values = if span > 0.0 {
            self.values.iter().map(|v| (v - lo) / span).collect()
        } else {
            vec![0.5; self.values.len()]
        };
        AttentionMap {
            rows: self.rows,
            cols: self.cols,
            values,
        }
    }

    /// Bilinear resampling to `height` rows by `width` columns.
    ///
    /// Sample positions use pixel centers: output column `x` reads source
    /// coordinate `(x + 0.5) * cols / width - 0.5`, clamped to the grid.
    pub fn resample(&self, width: usize, height: usize) -> Result<AttentionMap> {
        if width == 0 || height == 0 {
            return Err(Error::Dimension { width, height });
        }
        if width == self.cols && height == self.rows {
            return Ok(self.clone());
        }
        let xs = axis_weights(self.cols, width);
        let ys = axis_weights(self.rows, height);
        let mut values = Vec::with_capacity(width * height);
        for &(y0, y1, fy) in &ys {
            for &(x0, x1, fx) in &xs {
                let top = lerp(self.get(y0, x0), self.get(y0, x1), fx);
                let bottom = lerp(self.get(y1, x0), self.get(y1, x1), fx);
                values.push(lerp(top, bottom, fy));
            }
        }
        Ok(AttentionMap {
            rows: height,
            cols: width,
            values,
        })
    }
}

fn lerp(a: f64, b: f64, t: f64) -> f64 {
    if t == 0.0 {
        a
    } else {
        a + (b - a) * t
    }
}

fn axis_weights(src: usize, dst: usize) -> Vec<(usize, usize, f64)> {
    let scale = src as f64 / dst as f64;
    let last = (src - 1) as f64;
    (0..dst)
        .map(|i| {
            let pos = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, last);
            let i0 = pos.floor() as usize;
            let i1 = (i0 + 1).min(src - 1);
            (i0, i1, pos - i0 as f64)
        })
        .collect()
}

/// Free-function form of [`AttentionMap::normalize`].
pub fn normalize_attention(att: &AttentionMap) -> AttentionMap {
    att.normalize()
}

/// Free-function form of [`AttentionMap::resample`].
pub fn resample_attention(att: &AttentionMap, width: usize, height: usize) -> Result<AttentionMap> {
    att.resample(width, height)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn normalize_examples() {
        let a = AttentionMap::new(1, 3, vec![2.0, 4.0, 6.0]).unwrap();
        assert_eq!(a.normalize().values(), &[0.0, 0.5, 1.0]);

        let unit = AttentionMap::new(2, 2, vec![0.0, 0.25, 1.0, 0.75]).unwrap();
        assert_eq!(unit.normalize(), unit);

        let c = AttentionMap::constant(3, 2, 7.5).unwrap();
        assert!(c.normalize().values().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn non_finite_rejected() {
        assert!(matches!(
            AttentionMap::new(1, 2, vec![0.0, f64::NAN]),
            Err(Error::Ingestion(_))
        ));
        assert!(AttentionMap::new(1, 2, vec![f64::INFINITY, 0.0]).is_err());
    }

    #[test]
    fn resample_constant_and_identity() {
        let c = AttentionMap::constant(3, 4, 0.3).unwrap();
        let up = c.resample(17, 9).unwrap();
        assert_eq!((up.rows(), up.cols()), (9, 17));
        assert!(up.values().iter().all(|&v| v == 0.3));

        let a = AttentionMap::from_fn(5, 7, |r, c| (r * 31 + c * 17) as f64 / 7.3).unwrap();
        assert_eq!(a.resample(7, 5).unwrap(), a);
    }

    #[test]
    fn resample_two_by_two_ramp() {
        // pixel-center positions for 2 -> 4 columns: -0.25, 0.25, 0.75, 1.25,
        // clamped to [0, 1]; hand-evaluated [0, 0.25, 0.75, 1] per row
        let a = AttentionMap::new(2, 2, vec![0.0, 1.0, 0.0, 1.0]).unwrap();
        let r = a.resample(4, 2).unwrap();
        assert_eq!((r.rows(), r.cols()), (2, 4));
        assert_eq!(r.values(), &[0.0, 0.25, 0.75, 1.0, 0.0, 0.25, 0.75, 1.0]);
    }

    #[test]
    fn resample_rejects_zero_target() {
        let a = AttentionMap::constant(2, 2, 1.0).unwrap();
        assert!(a.resample(0, 3).is_err());
    }

    fn map_strategy() -> impl Strategy<Value = AttentionMap> {
        (1usize..8, 1usize..8).prop_flat_map(|(r, c)| {
            proptest::collection::vec(-10.0f64..10.0, r * c)
                .prop_map(move |v| AttentionMap::new(r, c, v).unwrap())
        })
    }

    proptest! {
        #[test]
        fn normalize_is_monotone_and_bounded(a in map_strategy()) {
            let n = a.normalize();
            let (lo, hi) = a.min_max();
            prop_assert!(n.values().iter().all(|&v| (0.0..=1.0).contains(&v)));
            if hi > lo {
                let (nlo, nhi) = n.min_max();
                prop_assert_eq!(nlo, 0.0);
                prop_assert_eq!(nhi, 1.0);
                for (i, j) in (0..a.values().len()).flat_map(|i| (0..a.values().len()).map(move |j| (i, j))) {
                    if a.values()[i] < a.values()[j] {
                        prop_assert!(n.values()[i] <= n.values()[j]);
                    }
                }
            }
        }

        #[test]
        fn resample_stays_in_range(a in map_strategy(), w in 1usize..40, h in 1usize..40) {
            let (lo, hi) = a.min_max();
            let r = a.resample(w, h).unwrap();
            prop_assert_eq!(r.values().len(), w * h);
            prop_assert!(r.values().iter().all(|&v| v >= lo - 1e-12 && v <= hi + 1e-12));
        }
    }
}

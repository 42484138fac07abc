//! Binary masks stored as row-major run lengths.
//!
//! Runs alternate background/foreground starting with background, so a mask
//! whose first pixel is foreground begins with a zero-length run. The
//! canonical form has no other zero-length runs and no trailing zero run.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major RLE mask over a `width` x `height` grid.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawRle", into = "RawRle")]
pub struct BinaryMask {
    width: usize,
    height: usize,
    runs: Vec<u32>,
}

#[derive(Serialize, Deserialize)]
struct RawRle {
    width: usize,
    height: usize,
    runs: Vec<u32>,
}

impl TryFrom<RawRle> for BinaryMask {
    type Error = Error;

    fn try_from(raw: RawRle) -> Result<Self> {
        BinaryMask::from_runs(raw.width, raw.height, raw.runs)
    }
}

impl From<BinaryMask> for RawRle {
    fn from(m: BinaryMask) -> Self {
        RawRle {
            width: m.width,
            height: m.height,
            runs: m.runs,
        }
    }
}

fn check_dims(width: usize, height: usize) -> Result<usize> {
    match width.checked_mul(height) {
        Some(n) if n > 0 && n <= u32::MAX as usize => Ok(n),
        _ => Err(Error::Dimension { width, height }),
    }
}

impl BinaryMask {
    /// Encodes a row-major boolean raster.
    pub fn encode(width: usize, height: usize, raster: &[bool]) -> Result<Self> {
        let n = check_dims(width, height)?;
        if raster.len() != n {
            return Err(Error::Corruption(format!(
                "raster has {} pixels, expected {width}x{height}",
                raster.len()
            )));
        }
        let mut runs = Vec::new();
        let mut current = false;
        let mut count = 0u32;
        for &px in raster {
            if px != current {
                runs.push(count);
                count = 0;
                current = px;
            }
            count += 1;
        }
        runs.push(count);
        Ok(Self {
            width,
            height,
            runs,
        })
    }

    /// Builds a mask from run lengths, validating the total and merging any
    /// interior zero-length runs into canonical form.
    pub fn from_runs(width: usize, height: usize, runs: Vec<u32>) -> Result<Self> {
        let n = check_dims(width, height)?;
        let total: u64 = runs.iter().map(|&r| r as u64).sum();
        if total != n as u64 {
            return Err(Error::Corruption(format!(
                "runs sum to {total}, expected {width}x{height} = {n}"
            )));
        }
        let mut canonical: Vec<u32> = Vec::with_capacity(runs.len());
        // parity of `canonical.len()` tracks the value of the last run
        for (i, &len) in runs.iter().enumerate() {
            if len == 0 {
                continue;
            }
            let fg = i % 2 == 1;
            let last_fg = canonical.len().is_multiple_of(2);
            if canonical.is_empty() {
                if fg {
                    canonical.push(0);
                }
                canonical.push(len);
            } else if last_fg == fg {
                *canonical.last_mut().expect("nonempty") += len;
            } else {
                canonical.push(len);
            }
        }
        Ok(Self {
            width,
            height,
            runs: canonical,
        })
    }

    pub fn empty(width: usize, height: usize) -> Result<Self> {
        let n = check_dims(width, height)?;
        Ok(Self {
            width,
            height,
            runs: vec![n as u32],
        })
    }

    pub fn full(width: usize, height: usize) -> Result<Self> {
        let n = check_dims(width, height)?;
        Ok(Self {
            width,
            height,
            runs: vec![0, n as u32],
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn runs(&self) -> &[u32] {
        &self.runs
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.area() == 0
    }

    /// Decodes to a row-major boolean raster.
    pub fn decode(&self) -> Vec<bool> {
        let mut out = Vec::with_capacity(self.len());
        for (i, &len) in self.runs.iter().enumerate() {
            out.extend(std::iter::repeat_n(i % 2 == 1, len as usize));
        }
        out
    }

    /// Half-open pixel index ranges covered by foreground runs.
    pub fn spans(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let mut pos = 0usize;
        self.runs.iter().enumerate().filter_map(move |(i, &len)| {
            let start = pos;
            pos += len as usize;
            (i % 2 == 1 && len > 0).then_some((start, pos))
        })
    }

    /// Number of foreground pixels.
    pub fn area(&self) -> u64 {
        self.runs.iter().skip(1).step_by(2).map(|&r| r as u64).sum()
    }

    fn check_same_dims(&self, other: &BinaryMask) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::DimensionMismatch {
                left: self.dims(),
                right: other.dims(),
            });
        }
        Ok(())
    }

    /// `|self ∩ other|` computed by merging foreground spans.
    pub fn intersection_area(&self, other: &BinaryMask) -> Result<u64> {
        self.check_same_dims(other)?;
        let mut a = self.spans().peekable();
        let mut b = other.spans().peekable();
        let mut total = 0u64;
        while let (Some(&(a0, a1)), Some(&(b0, b1))) = (a.peek(), b.peek()) {
            let lo = a0.max(b0);
            let hi = a1.min(b1);
            if hi > lo {
                total += (hi - lo) as u64;
            }
            if a1 <= b1 {
                a.next();
            } else {
                b.next();
            }
        }
        Ok(total)
    }

    /// Pixelwise union.
    pub fn union(&self, other: &BinaryMask) -> Result<BinaryMask> {
        self.check_same_dims(other)?;
        let merged: Vec<bool> = self
            .decode()
            .into_iter()
            .zip(other.decode())
            .map(|(a, b)| a || b)
            .collect();
        BinaryMask::encode(self.width, self.height, &merged)
    }
}

/// Row-major raster to RLE.
pub fn rle_encode(width: usize, height: usize, raster: &[bool]) -> Result<BinaryMask> {
    BinaryMask::encode(width, height, raster)
}

/// RLE to row-major raster.
pub fn rle_decode(mask: &BinaryMask) -> Vec<bool> {
    mask.decode()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_and(a: &BinaryMask, b: &BinaryMask) -> u64 {
        a.decode()
            .iter()
            .zip(b.decode())
            .filter(|(x, y)| **x && *y)
            .count() as u64
    }

    #[test]
    fn encode_forced_cases() {
        assert_eq!(
            BinaryMask::encode(2, 2, &[true; 4]).unwrap().runs(),
            &[0, 4]
        );
        assert_eq!(BinaryMask::encode(2, 2, &[false; 4]).unwrap().runs(), &[4]);
        let checker = [true, false, false, true];
        assert_eq!(
            BinaryMask::encode(2, 2, &checker).unwrap().runs(),
            &[0, 1, 2, 1]
        );
    }

    #[test]
    fn encode_rejects_empty_grid() {
        assert!(matches!(
            BinaryMask::encode(0, 3, &[]),
            Err(Error::Dimension { .. })
        ));
        assert!(BinaryMask::encode(2, 2, &[true; 3]).is_err());
    }

    #[test]
    fn decode_forced_cases() {
        let full = BinaryMask::from_runs(2, 2, vec![0, 4]).unwrap();
        assert_eq!(full.decode(), vec![true; 4]);
        let none = BinaryMask::from_runs(2, 2, vec![4]).unwrap();
        assert_eq!(none.decode(), vec![false; 4]);
    }

    #[test]
    fn corrupt_runs_rejected() {
        assert!(matches!(
            BinaryMask::from_runs(2, 2, vec![1, 2]),
            Err(Error::Corruption(_))
        ));
        assert!(
            serde_json::from_str::<BinaryMask>(r#"{"width":2,"height":2,"runs":[5]}"#).is_err()
        );
    }

    #[test]
    fn from_runs_canonicalizes() {
        let m = BinaryMask::from_runs(3, 2, vec![1, 0, 2, 3, 0]).unwrap();
        assert_eq!(m.runs(), &[3, 3]);
        let m = BinaryMask::from_runs(3, 2, vec![0, 0, 6]).unwrap();
        assert_eq!(m.runs(), &[6]);
        let m = BinaryMask::from_runs(3, 2, vec![0, 2, 0, 4]).unwrap();
        assert_eq!(m.runs(), &[0, 6]);
    }

    #[test]
    fn area_cases() {
        assert_eq!(BinaryMask::full(10, 10).unwrap().area(), 100);
        assert_eq!(BinaryMask::empty(10, 10).unwrap().area(), 0);
        let checker: Vec<bool> = (0..16).map(|i| (i % 4 + i / 4) % 2 == 0).collect();
        let brute = checker.iter().filter(|&&p| p).count() as u64;
        assert_eq!(brute, 8);
        assert_eq!(BinaryMask::encode(4, 4, &checker).unwrap().area(), brute);
    }

    #[test]
    fn intersection_cases() {
        let top: Vec<bool> = (0..16).map(|i| i < 8).collect();
        let bottom: Vec<bool> = top.iter().map(|p| !p).collect();
        let a = BinaryMask::encode(4, 4, &top).unwrap();
        let b = BinaryMask::encode(4, 4, &bottom).unwrap();
        assert_eq!(a.intersection_area(&b).unwrap(), 0);
        assert_eq!(a.intersection_area(&a).unwrap(), a.area());

        let small: Vec<bool> = (0..16).map(|i| i == 5 || i == 6).collect();
        let small = BinaryMask::encode(4, 4, &small).unwrap();
        assert_eq!(small.intersection_area(&a).unwrap(), brute_and(&small, &a));
        assert_eq!(small.intersection_area(&a).unwrap(), small.area());

        let other = BinaryMask::full(4, 5).unwrap();
        assert!(matches!(
            a.intersection_area(&other),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn union_contains_both() {
        let a = BinaryMask::encode(3, 1, &[true, false, false]).unwrap();
        let b = BinaryMask::encode(3, 1, &[false, false, true]).unwrap();
        assert_eq!(a.union(&b).unwrap().decode(), vec![true, false, true]);
    }

    fn raster_strategy() -> impl Strategy<Value = (usize, usize, Vec<bool>)> {
        (1usize..=64, 1usize..=64).prop_flat_map(|(w, h)| {
            (
                Just(w),
                Just(h),
                proptest::collection::vec(any::<bool>(), w * h),
            )
        })
    }

    proptest! {
        #[test]
        fn round_trip_and_canonical((w, h, raster) in raster_strategy()) {
            let m = BinaryMask::encode(w, h, &raster).unwrap();
            prop_assert_eq!(m.decode(), raster);
            let again = BinaryMask::from_runs(w, h, m.runs().to_vec()).unwrap();
            prop_assert_eq!(&again, &m);
            prop_assert!(m.runs().iter().skip(1).all(|&r| r > 0));
        }

        #[test]
        fn intersection_matches_brute_force(
            (w, h, a) in raster_strategy(),
            seed in any::<u64>(),
        ) {
            let b: Vec<bool> = (0..w * h)
                .map(|i| (seed.wrapping_mul(i as u64 + 1).wrapping_add(seed >> 7)) % 3 == 0)
                .collect();
            let ma = BinaryMask::encode(w, h, &a).unwrap();
            let mb = BinaryMask::encode(w, h, &b).unwrap();
            let inter = ma.intersection_area(&mb).unwrap();
            prop_assert_eq!(inter, brute_and(&ma, &mb));
            prop_assert_eq!(inter, mb.intersection_area(&ma).unwrap());
            prop_assert!(inter <= ma.area().min(mb.area()));
            let nested = a.iter().zip(&b).all(|(x, y)| !x || *y)
                || a.iter().zip(&b).all(|(x, y)| !y || *x);
            prop_assert_eq!(inter == ma.area().min(mb.area()), nested);
        }
    }
}

//! Run-length compressed bitmaps over `u64` positions.
//!
//! Set bits are grouped into maximal runs. A run is stored as the gap from
//! the end of the previous run and its length minus one, both as varints,
//! so sparse sets and dense stretches both stay small.

use crate::codec::{Reader, Writer};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CompressedBitmap {
    /// Disjoint, non-adjacent `(start, len)` runs in ascending order.
    runs: Vec<(u64, u64)>,
}

impl CompressedBitmap {
    pub fn new() -> Self {
        CompressedBitmap::default()
    }

    /// Positions must be below `u64::MAX`.
    pub fn from_positions(positions: impl IntoIterator<Item = u64>) -> Self {
        let mut v: Vec<u64> = positions.into_iter().collect();
        v.sort_unstable();
        v.dedup();
        assert!(v.last().is_none_or(|&x| x < u64::MAX), "position u64::MAX is not representable");
        let mut runs: Vec<(u64, u64)> = Vec::new();
        for x in v {
            match runs.last_mut() {
                Some((s, len)) if *s + *len == x => *len += 1,
                _ => runs.push((x, 1)),
            }
        }
        CompressedBitmap { runs }
    }

    /// Number of set positions.
    pub fn len(&self) -> u64 {
        self.runs.iter().map(|r| r.1).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.runs.is_empty()
    }

    pub fn contains(&self, x: u64) -> bool {
        let i = self.runs.partition_point(|&(s, _)| s <= x);
        i > 0 && {
            let (s, len) = self.runs[i - 1];
            x - s < len
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = u64> + '_ {
        self.runs.iter().flat_map(|&(s, len)| s..s + len)
    }

    /// True when the two sets share a position.
    pub fn intersects(&self, other: &CompressedBitmap) -> bool {
        let (mut i, mut j) = (0, 0);
        while i < self.runs.len() && j < other.runs.len() {
            let (a, la) = self.runs[i];
            let (b, lb) = other.runs[j];
            if a + la <= b {
                i += 1;
            } else if b + lb <= a {
                j += 1;
            } else {
                return true;
            }
        }
        false
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.varint(self.runs.len() as u64);
        let mut end = 0u64;
        for &(s, len) in &self.runs {
            w.varint(s - end).varint(len - 1);
            end = s + len;
        }
        w.finish()
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut r = Reader::new(buf);
        let n = r.varint()?;
        if n > r.remaining() as u64 {
            return Err(Error::Malformed(format!("bitmap claims {n} runs")));
        }
        let mut runs = Vec::with_capacity(n as usize);
        let mut end = 0u64;
        for i in 0..n {
            let gap = r.varint()?;
            let len = r.varint()?.checked_add(1);
            // Every run after the first must leave a gap, or it would have
            // been merged into its predecessor.
            let start = end.checked_add(gap).filter(|_| i == 0 || gap > 0);
            let (Some(start), Some(len)) = (start, len) else {
                return Err(Error::Malformed("bitmap runs overlap or overflow".into()));
            };
            end = start
                .checked_add(len)
                .ok_or_else(|| Error::Malformed("bitmap run overflows".into()))?;
            runs.push((start, len));
        }
        r.expect_end()?;
        Ok(CompressedBitmap { runs })
    }
}

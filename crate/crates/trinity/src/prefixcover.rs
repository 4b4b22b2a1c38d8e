//! Prefix families and minimum prefix covers.
//!
//! A value `x` lies in `[lo, hi]` exactly when one of its `w + 1` wildcard
//! prefixes is an element of the range's minimum prefix cover.

use std::fmt;

/// A `width`-bit pattern whose low `width - prefix_len` bits are wildcards.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PrefixElement {
    bits: u64,
    prefix_len: u32,
    width: u32,
}

impl PrefixElement {
    /// Keeps the top `prefix_len` bits of `value` and clears the rest.
    pub fn new(value: u64, prefix_len: u32, width: u32) -> Self {
        assert!((1..=64).contains(&width) && prefix_len <= width);
        let free = width - prefix_len;
        let bits = if free >= 64 { 0 } else { value >> free << free };
        PrefixElement { bits, prefix_len, width }
    }

    pub fn bits(&self) -> u64 {
        self.bits
    }

    pub fn prefix_len(&self) -> u32 {
        self.prefix_len
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    /// The fixed leading bits as a number in `[0, 2^prefix_len)`.
    pub fn head(&self) -> u64 {
        let free = self.width - self.prefix_len;
        if free >= 64 { 0 } else { self.bits >> free }
    }

    pub fn covers(&self, x: u64) -> bool {
        let free = self.width - self.prefix_len;
        free >= 64 || (x >> free) == (self.bits >> free)
    }

    /// Smallest and largest covered values.
    pub fn span(&self) -> (u64, u64) {
        let free = self.width - self.prefix_len;
        let ones = if free >= 64 { u64::MAX } else { (1u64 << free) - 1 };
        (self.bits, self.bits | ones)
    }

    /// Position in a breadth-first numbering of the binary trie: the root
    /// (all wildcards) is 0 and the node for head `v` at depth `k` is
    /// `2^k - 1 + v`. Distinct elements of one width get distinct indices.
    pub fn trie_index(&self) -> u64 {
        debug_assert!(self.width <= 63);
        ((1u64 << self.prefix_len) - 1) + self.head()
    }

    /// Writes the canonical form, e.g. `110*`, into `buf` and returns it.
    pub fn write_canonical<'a>(&self, buf: &'a mut [u8; 64]) -> &'a [u8] {
        let w = self.width as usize;
        for (i, slot) in buf[..w].iter_mut().enumerate() {
            *slot = if (i as u32) < self.prefix_len {
                if (self.bits >> (self.width - 1 - i as u32)) & 1 == 1 { b'1' } else { b'0' }
            } else {
                b'*'
            };
        }
        &buf[..w]
    }

    pub fn canonical(&self) -> String {
        let mut buf = [0u8; 64];
        String::from_utf8(self.write_canonical(&mut buf).to_vec()).expect("ascii")
    }
}

impl fmt::Display for PrefixElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.canonical())
    }
}

/// The `w + 1` prefixes of one value; element `i` has `w - i` fixed bits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrefixFamily {
    pub elements: Vec<PrefixElement>,
}

pub fn prefix_family(x: u64, w: u32) -> PrefixFamily {
    debug_assert!(w == 64 || x >> w == 0);
    PrefixFamily {
        elements: (0..=w).map(|i| PrefixElement::new(x, w - i, w)).collect(),
    }
}

/// Exact minimum cover of a range, sorted by covered values.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RangeCover {
    pub elements: Vec<PrefixElement>,
}

impl RangeCover {
    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }
}

/// Greedy walk from `lo` taking the largest aligned block that fits.
pub fn range_cover(lo: u64, hi: u64, w: u32) -> RangeCover {
    assert!(lo <= hi && (w == 64 || hi >> w == 0));
    let mut elements = Vec::new();
    push_cover(lo, hi, w, &mut elements);
    RangeCover { elements }
}

fn push_cover(lo: u64, hi: u64, w: u32, out: &mut Vec<PrefixElement>) {
    let hi = hi as u128;
    let mut lo = lo as u128;
    while lo <= hi {
        let mut k = if lo == 0 { w } else { lo.trailing_zeros().min(w) };
        while lo + (1u128 << k) - 1 > hi {
            k -= 1;
        }
        out.push(PrefixElement::new(lo as u64, w - k, w));
        lo += 1u128 << k;
    }
}

/// Union of the covers of several disjoint intervals.
pub fn cover_intervals(intervals: &[(u64, u64)], w: u32) -> RangeCover {
    let mut elements = Vec::new();
    for &(lo, hi) in intervals {
        push_cover(lo, hi, w, &mut elements);
    }
    elements.sort_by_key(|e| (e.bits, e.prefix_len));
    elements.dedup();
    RangeCover { elements }
}

/// True iff the prefix family of `x` shares an element with `cover`.
/// Element equality is compared structurally, which is equivalent to
/// comparing canonical strings.
pub fn member(x: u64, cover: &RangeCover, w: u32) -> bool {
    cover
        .elements
        .iter()
        .any(|e| e.width == w && PrefixElement::new(x, e.prefix_len, w) == *e)
}

use std::cmp::Ordering;
use std::fmt;

/// Symmetric spatial multi-index, stored as per-axis derivative counts.
///
/// The canonical sequence form lists axes in nondecreasing order, so
/// `(1,1,2)` means `∂y1 ∂y1 ∂y2`. Indices order by total order first,
/// then lexicographically on the canonical sequence.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct MultiIndex {
    counts: [u8; 2],
}

impl MultiIndex {
    pub const EMPTY: MultiIndex = MultiIndex { counts: [0, 0] };

    pub fn from_counts(counts: [u8; 2]) -> Self {
        MultiIndex { counts }
    }

    /// Builds an index from 0-based axis labels in any order.
    pub fn from_axes(axes: &[usize]) -> Self {
        let mut counts = [0u8; 2];
        for &a in axes {
            assert!(a < 2, "axis {a} out of range (d <= 2)");
            counts[a] += 1;
        }
        MultiIndex { counts }
    }

    /// Single derivative along `axis` (0-based).
    pub fn axis(axis: usize) -> Self {
        Self::from_axes(&[axis])
    }

    /// Pure derivative of the given order along `axis`.
    pub fn pure(axis: usize, order: usize) -> Self {
        let mut counts = [0u8; 2];
        counts[axis] = order as u8;
        MultiIndex { counts }
    }

    pub fn order(&self) -> usize {
        self.counts[0] as usize + self.counts[1] as usize
    }

    pub fn count(&self, axis: usize) -> usize {
        self.counts[axis] as usize
    }

    pub fn counts(&self) -> [u8; 2] {
        self.counts
    }

    /// Highest axis used plus one (0 for the empty index).
    pub fn min_dimension(&self) -> usize {
        if self.counts[1] > 0 {
            2
        } else if self.counts[0] > 0 {
            1
        } else {
            0
        }
    }

    pub fn with_axis(&self, axis: usize) -> Self {
        let mut counts = self.counts;
        counts[axis] += 1;
        MultiIndex { counts }
    }

    /// Removes one derivative along `axis`, if present.
    pub fn without_axis(&self, axis: usize) -> Option<Self> {
        if self.counts[axis] == 0 {
            return None;
        }
        let mut counts = self.counts;
        counts[axis] -= 1;
        Some(MultiIndex { counts })
    }

    /// Canonical nondecreasing axis sequence (0-based).
    pub fn axes(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.order());
        for (a, &c) in self.counts.iter().enumerate() {
            out.extend(std::iter::repeat_n(a, c as usize));
        }
        out
    }

    /// Evaluates `ξ_{i1} ⋯ ξ_{ik}` for the canonical sequence.
    pub fn monomial(&self, xi: &[f64]) -> f64 {
        let mut v = 1.0;
        for a in self.axes() {
            v *= xi[a];
        }
        v
    }

    /// 1-based digit label used in identifiers, e.g. `"112"`.
    pub fn label(&self) -> String {
        self.axes().iter().map(|a| char::from(b'1' + *a as u8)).collect()
    }

    /// Parses a digit label such as `"12"`; digits must be nondecreasing.
    pub fn parse_label(label: &str, d: usize) -> Option<Self> {
        let mut prev = 0usize;
        let mut axes = Vec::with_capacity(label.len());
        for ch in label.chars() {
            let digit = ch.to_digit(10)? as usize;
            if digit == 0 || digit > d || digit < prev {
                return None;
            }
            prev = digit;
            axes.push(digit - 1);
        }
        Some(Self::from_axes(&axes))
    }

    /// All indices of exactly `order` in dimension `d`, canonical order.
    pub fn all_of_order(d: usize, order: usize) -> Vec<Self> {
        match d {
            1 => vec![Self::pure(0, order)],
            2 => (0..=order)
                .map(|c1| MultiIndex {
                    counts: [(order - c1) as u8, c1 as u8],
                })
                .collect(),
            _ => panic!("dimension {d} unsupported"),
        }
    }

    /// All indices with `|I| <= order`, canonical order.
    pub fn all_up_to(d: usize, order: usize) -> Vec<Self> {
        (0..=order).flat_map(|k| Self::all_of_order(d, k)).collect()
    }

    /// Number of indices with `|I| <= order`.
    pub fn count_up_to(d: usize, order: usize) -> usize {
        match d {
            1 => order + 1,
            2 => (order + 1) * (order + 2) / 2,
            _ => panic!("dimension {d} unsupported"),
        }
    }

    /// Position of this index inside `all_up_to(d, _)`.
    pub fn position(&self, d: usize) -> usize {
        let k = self.order();
        match d {
            1 => k,
            2 => k * (k + 1) / 2 + self.counts[1] as usize,
            _ => panic!("dimension {d} unsupported"),
        }
    }
}

impl Ord for MultiIndex {
    fn cmp(&self, other: &Self) -> Ordering {
        self.order()
            .cmp(&other.order())
            .then_with(|| other.counts[0].cmp(&self.counts[0]))
    }
}

impl PartialOrd for MultiIndex {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Debug for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({})", self.label())
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

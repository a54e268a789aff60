//! Blocked multi-index geometry on `Z^b`.
//!
//! A [`BlockStructure`] splits the `b` lattice coordinates into `d` blocks
//! `(b_1, …, b_d)`. Block `i` of a multi-index pairs with block `i` of a
//! [`Frequency`] to produce the `i`-th component of the momentum shift `kω`.
//!
//! Regions are finite point sets kept in lexicographic order; that order fixes
//! the row/column order of every matrix assembled downstream.

use std::collections::HashMap;
use std::f64::consts::TAU;
use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dimensions `(d; b_1, …, b_d)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct BlockStructure {
    blocks: Vec<usize>,
    offsets: Vec<usize>,
}

impl BlockStructure {
    pub fn new(blocks: Vec<usize>) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::Structure("block structure needs at least one block".into()));
        }
        if blocks.iter().any(|&bi| bi == 0) {
            return Err(Error::Structure(format!("every block size must be positive, got {blocks:?}")));
        }
        let mut offsets = Vec::with_capacity(blocks.len() + 1);
        let mut acc = 0;
        offsets.push(0);
        for &bi in &blocks {
            acc += bi;
            offsets.push(acc);
        }
        Ok(Self { blocks, offsets })
    }

    /// Space dimension `d`.
    pub fn d(&self) -> usize {
        self.blocks.len()
    }

    /// Lattice dimension `b = Σ b_i`.
    pub fn b(&self) -> usize {
        self.offsets[self.blocks.len()]
    }

    pub fn blocks(&self) -> &[usize] {
        &self.blocks
    }

    /// Flat coordinate range of block `i`.
    pub fn block_range(&self, i: usize) -> Range<usize> {
        self.offsets[i]..self.offsets[i + 1]
    }

    /// The standing assumption `b > d`. Recorded, not enforced.
    pub fn exceeds_dimension(&self) -> bool {
        self.b() > self.d()
    }
}

impl TryFrom<Vec<usize>> for BlockStructure {
    type Error = Error;

    fn try_from(blocks: Vec<usize>) -> Result<Self> {
        Self::new(blocks)
    }
}

impl From<BlockStructure> for Vec<usize> {
    fn from(bs: BlockStructure) -> Self {
        bs.blocks
    }
}

/// A point `k ∈ Z^b`, stored flat.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MultiIndex(Vec<i64>);

impl MultiIndex {
    pub fn new(entries: Vec<i64>) -> Self {
        Self(entries)
    }

    pub fn zero(b: usize) -> Self {
        Self(vec![0; b])
    }

    /// Unit vector `e_j` scaled by `scale`.
    pub fn unit(b: usize, j: usize, scale: i64) -> Self {
        let mut v = vec![0; b];
        v[j] = scale;
        Self(v)
    }

    pub fn entries(&self) -> &[i64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `|k| = max |k_ij|`.
    pub fn sup_norm(&self) -> u64 {
        self.0.iter().map(|x| x.unsigned_abs()).max().unwrap_or(0)
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&x| x == 0)
    }

    pub fn add(&self, other: &Self) -> Self {
        Self(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    pub fn neg(&self) -> Self {
        Self(self.0.iter().map(|a| -a).collect())
    }

    /// Sup-norm distance `|k − k'|` without allocating.
    pub fn distance(&self, other: &Self) -> u64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).unsigned_abs())
            .max()
            .unwrap_or(0)
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, x) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, " ")?;
            }
            write!(f, "{x}")?;
        }
        write!(f, ")")
    }
}

impl From<Vec<i64>> for MultiIndex {
    fn from(v: Vec<i64>) -> Self {
        Self(v)
    }
}

/// Frequency vector `ω ∈ [0, 2π]^b`, blocked like [`MultiIndex`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Frequency(Vec<f64>);

impl Frequency {
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if let Some(bad) = entries.iter().find(|w| !(0.0..=TAU).contains(*w)) {
            return Err(Error::Structure(format!("frequency entry {bad} outside [0, 2π]")));
        }
        Ok(Self(entries))
    }

    pub fn entries(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl TryFrom<Vec<f64>> for Frequency {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<Frequency> for Vec<f64> {
    fn from(w: Frequency) -> Self {
        w.0
    }
}

fn check_shape(bs: &BlockStructure, k: &MultiIndex, omega: &Frequency) -> Result<()> {
    if k.len() != bs.b() || omega.len() != bs.b() {
        return Err(Error::Structure(format!(
            "shape mismatch: b = {}, |k| has {} entries, ω has {}",
            bs.b(),
            k.len(),
            omega.len()
        )));
    }
    Ok(())
}

/// `kω = (k_1·ω_1, …, k_d·ω_d)`.
pub fn block_dot(bs: &BlockStructure, k: &MultiIndex, omega: &Frequency) -> Result<Vec<f64>> {
    check_shape(bs, k, omega)?;
    Ok(block_dot_unchecked(bs, k.entries(), omega.entries()))
}

pub(crate) fn block_dot_unchecked(bs: &BlockStructure, k: &[i64], omega: &[f64]) -> Vec<f64> {
    (0..bs.d())
        .map(|i| {
            bs.block_range(i)
                .map(|c| k[c] as f64 * omega[c])
                .sum::<f64>()
        })
        .collect()
}

/// Per-coordinate half-line restriction of an elementary region.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Restriction {
    None,
    /// Removes offsets `n < 0` relative to the center.
    Neg,
    /// Removes offsets `n > 0` relative to the center.
    Pos,
}

impl Restriction {
    fn admits(self, offset: i64) -> bool {
        match self {
            Restriction::None => true,
            Restriction::Neg => offset >= 0,
            Restriction::Pos => offset <= 0,
        }
    }
}

/// An elementary region: a cube `center + [−N, N]^b`, optionally with at least
/// two coordinate half-lines removed.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RegionDescriptor {
    pub center: MultiIndex,
    pub size: usize,
    pub restrictions: Vec<Restriction>,
}

impl RegionDescriptor {
    pub fn new(center: MultiIndex, size: usize, restrictions: Vec<Restriction>) -> Result<Self> {
        if restrictions.len() != center.len() {
            return Err(Error::Structure(format!(
                "{} restriction tags for a {}-dimensional center",
                restrictions.len(),
                center.len()
            )));
        }
        let active = restrictions.iter().filter(|r| **r != Restriction::None).count();
        if active == 1 {
            return Err(Error::Structure(
                "an elementary region restricts either no coordinate or at least two".into(),
            ));
        }
        Ok(Self { center, size, restrictions })
    }

    pub fn cube(center: MultiIndex, size: usize) -> Self {
        let b = center.len();
        Self { center, size, restrictions: vec![Restriction::None; b] }
    }

    pub fn is_full_cube(&self) -> bool {
        self.restrictions.iter().all(|r| *r == Restriction::None)
    }

    pub fn translated(&self, by: &MultiIndex) -> Self {
        Self { center: self.center.add(by), ..self.clone() }
    }

    pub fn contains(&self, k: &MultiIndex) -> bool {
        let n = self.size as i64;
        k.entries()
            .iter()
            .zip(self.center.entries())
            .zip(&self.restrictions)
            .all(|((&x, &c), r)| {
                let off = x - c;
                off.abs() <= n && r.admits(off)
            })
    }
}

/// Points of an elementary region in lexicographic order.
pub fn enumerate_region(desc: &RegionDescriptor) -> Region {
    let n = desc.size as i64;
    let ranges: Vec<(i64, i64)> = desc
        .restrictions
        .iter()
        .map(|r| match r {
            Restriction::None => (-n, n),
            Restriction::Neg => (0, n),
            Restriction::Pos => (-n, 0),
        })
        .collect();
    let offsets = box_points(&ranges);
    Region::from_sorted_unique(offsets.into_iter().map(|o| o.add(&desc.center)).collect())
}

/// All integer points of `Π [lo_i, hi_i]`, lexicographic.
pub(crate) fn box_points(ranges: &[(i64, i64)]) -> Vec<MultiIndex> {
    if ranges.iter().any(|(lo, hi)| lo > hi) {
        return Vec::new();
    }
    let count: usize = ranges.iter().map(|(lo, hi)| (hi - lo + 1) as usize).product();
    let mut out = Vec::with_capacity(count);
    let mut cur: Vec<i64> = ranges.iter().map(|r| r.0).collect();
    loop {
        out.push(MultiIndex(cur.clone()));
        let mut axis = ranges.len();
        loop {
            if axis == 0 {
                return out;
            }
            axis -= 1;
            if cur[axis] < ranges[axis].1 {
                cur[axis] += 1;
                for (c, r) in cur.iter_mut().zip(ranges).skip(axis + 1) {
                    *c = r.0;
                }
                break;
            }
        }
    }
}

/// The cube `[−r, r]^b` in lexicographic order.
pub fn cube_points(b: usize, r: i64) -> Vec<MultiIndex> {
    box_points(&vec![(-r, r); b])
}

/// `E_N^0`: the full cube plus every restriction pattern with at least two
/// restricted coordinates, all centered at the origin. There are `3^b − 2b`.
pub fn elementary_regions_at_scale(n: usize, bs: &BlockStructure) -> Vec<RegionDescriptor> {
    let b = bs.b();
    let tags = [Restriction::None, Restriction::Neg, Restriction::Pos];
    let total = 3usize.pow(b as u32);
    let mut out = Vec::new();
    for code in 0..total {
        let mut c = code;
        let pattern: Vec<Restriction> = (0..b)
            .map(|_| {
                let t = tags[c % 3];
                c /= 3;
                t
            })
            .collect();
        let active = pattern.iter().filter(|r| **r != Restriction::None).count();
        if active != 1 {
            out.push(RegionDescriptor { center: MultiIndex::zero(b), size: n, restrictions: pattern });
        }
    }
    out
}

/// A finite set of lattice points with O(1) membership.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Region {
    points: Vec<MultiIndex>,
    index: HashMap<MultiIndex, usize>,
}

impl Region {
    /// Builds a region from arbitrary points; duplicates are dropped.
    pub fn from_points(mut points: Vec<MultiIndex>) -> Result<Self> {
        if let Some(first) = points.first() {
            let b = first.len();
            if points.iter().any(|p| p.len() != b) {
                return Err(Error::Structure("region points have mixed dimensions".into()));
            }
        }
        points.sort();
        points.dedup();
        Ok(Self::from_sorted_unique(points))
    }

    fn from_sorted_unique(points: Vec<MultiIndex>) -> Self {
        let index = points.iter().enumerate().map(|(i, p)| (p.clone(), i)).collect();
        Self { points, index }
    }

    pub fn empty() -> Self {
        Self { points: Vec::new(), index: HashMap::new() }
    }

    pub fn points(&self) -> &[MultiIndex] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn contains(&self, k: &MultiIndex) -> bool {
        self.index.contains_key(k)
    }

    /// Row index of `k` in matrices assembled on this region.
    pub fn index_of(&self, k: &MultiIndex) -> Option<usize> {
        self.index.get(k).copied()
    }

    /// `sup_{n,n'} |n − n'|`; for the sup norm this is the widest coordinate extent.
    pub fn diam(&self) -> u64 {
        let Some(first) = self.points.first() else { return 0 };
        (0..first.len())
            .map(|c| {
                let (lo, hi) = self
                    .points
                    .iter()
                    .fold((i64::MAX, i64::MIN), |(lo, hi), p| (lo.min(p.0[c]), hi.max(p.0[c])));
                (hi - lo) as u64
            })
            .max()
            .unwrap_or(0)
    }

    /// `inf_{n ∈ Λ} |m − n|`, `None` for the empty region.
    pub fn dist(&self, m: &MultiIndex) -> Option<u64> {
        self.points.iter().map(|p| p.distance(m)).min()
    }

    pub fn is_subset_of(&self, other: &Region) -> bool {
        self.points.iter().all(|p| other.contains(p))
    }

    pub fn union(&self, other: &Region) -> Region {
        let mut pts = self.points.clone();
        pts.extend(other.points.iter().cloned());
        pts.sort();
        pts.dedup();
        Self::from_sorted_unique(pts)
    }

    pub fn difference(&self, other: &Region) -> Region {
        Self::from_sorted_unique(self.points.iter().filter(|p| !other.contains(p)).cloned().collect())
    }

    pub fn translated(&self, by: &MultiIndex) -> Region {
        Self::from_sorted_unique(self.points.iter().map(|p| p.add(by)).collect())
    }

    /// Points outside `Λ` within sup-distance `radius` of it.
    pub fn collar(&self, radius: u64) -> Region {
        if self.points.is_empty() || radius == 0 {
            return Region::empty();
        }
        let b = self.points[0].len();
        let offsets = cube_points(b, radius as i64);
        let mut out: Vec<MultiIndex> = Vec::new();
        for p in &self.points {
            for o in &offsets {
                let q = p.add(o);
                if !self.contains(&q) {
                    out.push(q);
                }
            }
        }
        out.sort();
        out.dedup();
        Self::from_sorted_unique(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bs(blocks: &[usize]) -> BlockStructure {
        BlockStructure::new(blocks.to_vec()).unwrap()
    }

    #[test]
    fn sup_norm_examples() {
        assert_eq!(MultiIndex::new(vec![0, 0]).sup_norm(), 0);
        assert_eq!(MultiIndex::new(vec![2, -1]).sup_norm(), 2);
        assert_eq!(MultiIndex::new(vec![3, -5]).sup_norm(), 5);
    }

    #[test]
    fn block_dot_examples() {
        let w = Frequency::new(vec![0.7, 0.5]).unwrap();
        let v = block_dot(&bs(&[2]), &MultiIndex::new(vec![2, -1]), &w).unwrap();
        assert!((v[0] - 0.9).abs() < 1e-15);

        let w = Frequency::new(vec![0.5, 0.25]).unwrap();
        let v = block_dot(&bs(&[1, 1]), &MultiIndex::new(vec![1, 1]), &w).unwrap();
        assert_eq!(v, vec![0.5, 0.25]);

        let zero = Frequency::new(vec![0.0; 3]).unwrap();
        let v = block_dot(&bs(&[2, 1]), &MultiIndex::new(vec![4, -7, 9]), &zero).unwrap();
        assert_eq!(v, vec![0.0, 0.0]);
    }

    #[test]
    fn block_dot_shape_mismatch() {
        let w = Frequency::new(vec![0.7]).unwrap();
        assert!(matches!(
            block_dot(&bs(&[2]), &MultiIndex::new(vec![1, 1]), &w),
            Err(Error::Structure(_))
        ));
    }

    #[test]
    fn frequency_range_is_checked() {
        assert!(Frequency::new(vec![7.0]).is_err());
        assert!(Frequency::new(vec![-0.1]).is_err());
        assert!(Frequency::new(vec![0.0, TAU]).is_ok());
    }

    #[test]
    fn region_examples() {
        let full = RegionDescriptor::cube(MultiIndex::zero(2), 1);
        assert_eq!(enumerate_region(&full).len(), 9);

        let corner = RegionDescriptor::new(
            MultiIndex::zero(2),
            1,
            vec![Restriction::Neg, Restriction::Neg],
        )
        .unwrap();
        let oracle: Vec<MultiIndex> = cube_points(2, 1)
            .into_iter()
            .filter(|k| k.entries().iter().all(|&x| x >= 0))
            .collect();
        assert_eq!(enumerate_region(&corner).points(), oracle.as_slice());
        assert_eq!(oracle.len(), 4);

        let degenerate = RegionDescriptor::new(
            MultiIndex::new(vec![3, -2]),
            0,
            vec![Restriction::Pos, Restriction::Neg],
        )
        .unwrap();
        assert_eq!(enumerate_region(&degenerate).points(), &[MultiIndex::new(vec![3, -2])]);
    }

    #[test]
    fn single_restriction_is_rejected() {
        let r = RegionDescriptor::new(MultiIndex::zero(2), 2, vec![Restriction::Neg, Restriction::None]);
        assert!(r.is_err());
    }

    #[test]
    fn elementary_region_counts() {
        // Oracle: count patterns in {none,neg,pos}^b with 0 or >= 2 active tags.
        for b in 1..=4usize {
            let mut count = 0;
            for code in 0..3usize.pow(b as u32) {
                let mut c = code;
                let mut active = 0;
                for _ in 0..b {
                    if c % 3 != 0 {
                        active += 1;
                    }
                    c /= 3;
                }
                if active != 1 {
                    count += 1;
                }
            }
            let blocks = vec![1; b];
            assert_eq!(elementary_regions_at_scale(3, &bs(&blocks)).len(), count);
        }
        assert_eq!(elementary_regions_at_scale(2, &bs(&[2])).len(), 5);
        assert_eq!(elementary_regions_at_scale(2, &bs(&[2, 1])).len(), 21);
        assert_eq!(elementary_regions_at_scale(2, &bs(&[1])).len(), 1);
    }

    #[test]
    fn elementary_regions_have_bounded_diameter() {
        for n in 0..4 {
            for desc in elementary_regions_at_scale(n, &bs(&[2, 1])) {
                assert!(enumerate_region(&desc).diam() <= 2 * n as u64);
            }
        }
    }

    fn brute_diam(r: &Region) -> u64 {
        let p = r.points();
        let mut best = 0;
        for a in p {
            for b in p {
                best = best.max(a.distance(b));
            }
        }
        best
    }

    #[test]
    fn collar_matches_definition() {
        let r = enumerate_region(&RegionDescriptor::cube(MultiIndex::zero(2), 2));
        let c = r.collar(1);
        assert_eq!(c.len(), 7 * 7 - 25);
        assert!(c.points().iter().all(|p| r.dist(p) == Some(1)));
    }

    proptest! {
        #[test]
        fn full_cube_size(n in 0usize..4, b in 1usize..4) {
            let d = RegionDescriptor::cube(MultiIndex::zero(b), n);
            prop_assert_eq!(enumerate_region(&d).len(), (2 * n + 1).pow(b as u32));
        }

        #[test]
        fn diam_and_dist_match_brute_force(
            pts in proptest::collection::vec(proptest::collection::vec(-6i64..6, 3), 1..60),
            probe in proptest::collection::vec(-9i64..9, 3),
        ) {
            let region = Region::from_points(pts.into_iter().map(MultiIndex::new).collect()).unwrap();
            prop_assert_eq!(region.diam(), brute_diam(&region));
            let m = MultiIndex::new(probe);
            let brute = region.points().iter().map(|p| p.distance(&m)).min();
            prop_assert_eq!(region.dist(&m), brute);
        }

        #[test]
        fn translation_equivariance(
            c in proptest::collection::vec(-5i64..5, 2),
            n in 0usize..3,
            pat in 0usize..5,
        ) {
            let descs = elementary_regions_at_scale(n, &bs(&[1, 1]));
            let base = &descs[pat];
            let shift = MultiIndex::new(c);
            let moved = enumerate_region(&base.translated(&shift));
            let expected = enumerate_region(base).translated(&shift);
            prop_assert_eq!(moved.points(), expected.points());
            for p in moved.points() {
                prop_assert!(base.translated(&shift).contains(p));
            }
        }
    }
}

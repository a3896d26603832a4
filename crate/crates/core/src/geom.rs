//! Points, rectangles and the Euclidean helpers the index is built on.
//!
//! Dimension is a deployment constant, so nothing here is generic over it.
//! Every binary operation checks that both operands agree and returns
//! [`GeomError::DimensionMismatch`] otherwise.

use std::cmp::Ordering;
use std::fmt;

use smallvec::SmallVec;

/// Inline storage for coordinates; d ≤ 3 never touches the heap.
pub type Coords = SmallVec<[f64; 3]>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GeomError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("point must have at least one coordinate")]
    Empty,
    #[error("coordinate {axis} is not finite ({value})")]
    NonFinite { axis: usize, value: f64 },
    #[error("rect min exceeds max on axis {axis} ({min} > {max})")]
    Inverted { axis: usize, min: f64, max: f64 },
}

fn check_dims(expected: usize, found: usize) -> Result<(), GeomError> {
    if expected == found {
        Ok(())
    } else {
        Err(GeomError::DimensionMismatch { expected, found })
    }
}

/// A location in index space. All coordinates are finite.
#[derive(Clone, PartialEq)]
pub struct Point {
    coords: Coords,
}

impl Point {
    pub fn new(coords: impl IntoIterator<Item = f64>) -> Result<Self, GeomError> {
        let coords: Coords = coords.into_iter().collect();
        if coords.is_empty() {
            return Err(GeomError::Empty);
        }
        if let Some((axis, &value)) = coords.iter().enumerate().find(|(_, c)| !c.is_finite()) {
            return Err(GeomError::NonFinite { axis, value });
        }
        Ok(Point { coords })
    }

    /// Shorthand for the common two-dimensional case.
    pub fn xy(x: f64, y: f64) -> Result<Self, GeomError> {
        Point::new([x, y])
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn coord(&self, axis: usize) -> f64 {
        self.coords[axis]
    }

    /// Lexicographic total order on coordinates (`f64::total_cmp` per axis).
    pub fn lex_cmp(&self, other: &Point) -> Ordering {
        for (a, b) in self.coords.iter().zip(other.coords.iter()) {
            match a.total_cmp(b) {
                Ordering::Equal => continue,
                ord => return ord,
            }
        }
        self.coords.len().cmp(&other.coords.len())
    }
}

impl fmt::Debug for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.coords.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

impl fmt::Display for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Closed axis-aligned box. Zero-extent boxes are valid.
#[derive(Clone, PartialEq)]
pub struct Rect {
    min: Point,
    max: Point,
}

impl Rect {
    pub fn new(min: Point, max: Point) -> Result<Self, GeomError> {
        check_dims(min.dim(), max.dim())?;
        for axis in 0..min.dim() {
            let (lo, hi) = (min.coord(axis), max.coord(axis));
            if lo > hi {
                return Err(GeomError::Inverted { axis, min: lo, max: hi });
            }
        }
        Ok(Rect { min, max })
    }

    /// The degenerate box holding exactly one point.
    pub fn from_point(p: &Point) -> Self {
        Rect {
            min: p.clone(),
            max: p.clone(),
        }
    }

    /// Bounding box of a non-empty set of points; `None` for an empty set.
    pub fn bounding<'a>(points: impl IntoIterator<Item = &'a Point>) -> Option<Self> {
        let mut iter = points.into_iter();
        let mut acc = Rect::from_point(iter.next()?);
        for p in iter {
            acc.expand_point(p);
        }
        Some(acc)
    }

    pub fn dim(&self) -> usize {
        self.min.dim()
    }

    pub fn min(&self) -> &Point {
        &self.min
    }

    pub fn max(&self) -> &Point {
        &self.max
    }

    pub fn lo(&self, axis: usize) -> f64 {
        self.min.coords[axis]
    }

    pub fn hi(&self, axis: usize) -> f64 {
        self.max.coords[axis]
    }

    pub fn center(&self, axis: usize) -> f64 {
        self.lo(axis) * 0.5 + self.hi(axis) * 0.5
    }

    /// Product of side lengths (area in 2-d, volume in 3-d).
    pub fn volume(&self) -> f64 {
        (0..self.dim()).map(|a| self.hi(a) - self.lo(a)).product()
    }

    /// Sum of side lengths.
    pub fn margin(&self) -> f64 {
        (0..self.dim()).map(|a| self.hi(a) - self.lo(a)).sum()
    }

    pub fn contains_point(&self, p: &Point) -> bool {
        p.dim() == self.dim() && (0..self.dim()).all(|a| self.lo(a) <= p.coord(a) && p.coord(a) <= self.hi(a))
    }

    pub fn contains_rect(&self, other: &Rect) -> bool {
        other.dim() == self.dim() && (0..self.dim()).all(|a| self.lo(a) <= other.lo(a) && other.hi(a) <= self.hi(a))
    }

    /// Volume of the intersection, 0 when the boxes only touch or are apart.
    pub fn overlap_volume(&self, other: &Rect) -> f64 {
        let mut v = 1.0;
        for a in 0..self.dim() {
            let len = self.hi(a).min(other.hi(a)) - self.lo(a).max(other.lo(a));
            if len <= 0.0 {
                return 0.0;
            }
            v *= len;
        }
        v
    }

    /// True when the interiors share positive volume.
    pub fn interiors_overlap(&self, other: &Rect) -> bool {
        (0..self.dim()).all(|a| self.hi(a).min(other.hi(a)) > self.lo(a).max(other.lo(a)))
    }

    pub(crate) fn expand_point(&mut self, p: &Point) {
        for a in 0..self.dim() {
            let c = p.coords[a];
            if c < self.min.coords[a] {
                self.min.coords[a] = c;
            }
            if c > self.max.coords[a] {
                self.max.coords[a] = c;
            }
        }
    }

    pub(crate) fn expand_rect(&mut self, r: &Rect) {
        for a in 0..self.dim() {
            if r.min.coords[a] < self.min.coords[a] {
                self.min.coords[a] = r.min.coords[a];
            }
            if r.max.coords[a] > self.max.coords[a] {
                self.max.coords[a] = r.max.coords[a];
            }
        }
    }

    pub(crate) fn with_point(&self, p: &Point) -> Rect {
        let mut r = self.clone();
        r.expand_point(p);
        r
    }

    pub(crate) fn set_lo(&mut self, axis: usize, v: f64) {
        self.min.coords[axis] = v;
    }

    pub(crate) fn set_hi(&mut self, axis: usize, v: f64) {
        self.max.coords[axis] = v;
    }
}

impl fmt::Debug for Rect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{:?}, {:?}]", self.min, self.max)
    }
}

/// Euclidean distance between two points.
pub fn distance(a: &Point, b: &Point) -> Result<f64, GeomError> {
    check_dims(a.dim(), b.dim())?;
    Ok(distance_unchecked(a, b))
}

/// Smallest distance from `p` to any point of `r`; 0 when `p` is inside.
pub fn mindist(p: &Point, r: &Rect) -> Result<f64, GeomError> {
    check_dims(r.dim(), p.dim())?;
    Ok(mindist_unchecked(p, r))
}

/// Closed-box intersection test: touching faces or corners count.
pub fn rect_intersects(a: &Rect, b: &Rect) -> Result<bool, GeomError> {
    check_dims(a.dim(), b.dim())?;
    Ok((0..a.dim()).all(|i| a.lo(i) <= b.hi(i) && b.lo(i) <= a.hi(i)))
}

/// Smallest box containing both arguments.
pub fn rect_union(a: &Rect, b: &Rect) -> Result<Rect, GeomError> {
    check_dims(a.dim(), b.dim())?;
    let mut out = a.clone();
    out.expand_rect(b);
    Ok(out)
}

// The unchecked variants sum in axis order so that `mindist <= distance`
// holds bit-for-bit for any point inside the box.
pub(crate) fn distance_unchecked(a: &Point, b: &Point) -> f64 {
    let mut sum = 0.0;
    for (x, y) in a.coords.iter().zip(b.coords.iter()) {
        let d = x - y;
        sum += d * d;
    }
    sum.sqrt()
}

pub(crate) fn mindist_unchecked(p: &Point, r: &Rect) -> f64 {
    let mut sum = 0.0;
    for a in 0..p.dim() {
        let c = p.coords[a];
        let gap = if c < r.lo(a) {
            r.lo(a) - c
        } else if c > r.hi(a) {
            c - r.hi(a)
        } else {
            0.0
        };
        sum += gap * gap;
    }
    sum.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(x: f64, y: f64) -> Point {
        Point::xy(x, y).unwrap()
    }

    fn r(a: (f64, f64), b: (f64, f64)) -> Rect {
        Rect::new(p(a.0, a.1), p(b.0, b.1)).unwrap()
    }

    #[test]
    fn distance_examples() {
        assert_eq!(distance(&p(0.0, 0.0), &p(0.0, 0.0)).unwrap(), 0.0);
        assert_eq!(distance(&p(0.0, 0.0), &p(3.0, 4.0)).unwrap(), 5.0);
        // sqrt(3.6^2 + 5.8^2) = sqrt(46.6), evaluated independently
        let d = distance(&p(1.2, -0.7), &p(-2.4, 5.1)).unwrap();
        assert!((d - 6.826419266350404).abs() < 1e-12);
    }

    #[test]
    fn distance_dimension_mismatch() {
        let a = Point::new([1.0, 2.0, 3.0]).unwrap();
        assert_eq!(
            distance(&a, &p(0.0, 0.0)),
            Err(GeomError::DimensionMismatch { expected: 3, found: 2 })
        );
    }

    #[test]
    fn point_rejects_nan_and_empty() {
        assert!(matches!(
            Point::new([1.0, f64::NAN]),
            Err(GeomError::NonFinite { axis: 1, .. })
        ));
        assert!(matches!(
            Point::new([f64::INFINITY]),
            Err(GeomError::NonFinite { axis: 0, .. })
        ));
        assert_eq!(Point::new([]), Err(GeomError::Empty));
    }

    #[test]
    fn rect_rejects_inverted() {
        assert!(matches!(
            Rect::new(p(1.0, 0.0), p(0.0, 1.0)),
            Err(GeomError::Inverted { axis: 0, .. })
        ));
        // degenerate is fine
        assert!(Rect::new(p(1.0, 1.0), p(1.0, 1.0)).is_ok());
    }

    #[test]
    fn mindist_examples() {
        assert_eq!(mindist(&p(0.0, 0.0), &r((-1.0, -1.0), (1.0, 1.0))).unwrap(), 0.0);
        assert_eq!(mindist(&p(3.0, 0.0), &r((0.0, -1.0), (1.0, 1.0))).unwrap(), 2.0);
        assert!(mindist(&Point::new([0.0]).unwrap(), &r((0.0, 0.0), (1.0, 1.0))).is_err());
    }

    #[test]
    fn intersects_examples() {
        let a = r((0.0, 0.0), (1.0, 1.0));
        assert!(rect_intersects(&a, &a).unwrap());
        assert!(!rect_intersects(&a, &r((2.0, 2.0), (3.0, 3.0))).unwrap());
        assert!(rect_intersects(&a, &r((1.0, 1.0), (2.0, 2.0))).unwrap());
    }

    #[test]
    fn union_examples() {
        let a = r((0.0, 0.0), (1.0, 1.0));
        assert_eq!(rect_union(&a, &a).unwrap(), a);
        assert_eq!(
            rect_union(&a, &r((2.0, 2.0), (3.0, 3.0))).unwrap(),
            r((0.0, 0.0), (3.0, 3.0))
        );
    }

    #[test]
    fn overlap_volume_ignores_shared_faces() {
        let a = r((0.0, 0.0), (1.0, 1.0));
        let b = r((1.0, 0.0), (2.0, 1.0));
        assert_eq!(a.overlap_volume(&b), 0.0);
        assert!(!a.interiors_overlap(&b));
        let c = r((0.5, 0.5), (2.0, 2.0));
        assert_eq!(a.overlap_volume(&c), 0.25);
        assert!(a.interiors_overlap(&c));
    }
}

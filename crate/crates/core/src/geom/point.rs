use std::fmt;

use serde::{Deserialize, Serialize};

use super::rational::{int, parse_rational, to_fraction_string, Rational};
use super::GeomError;

/// A point of `Q^d` with exact coordinates. Ordering is lexicographic.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RationalPoint(Vec<Rational>);

impl RationalPoint {
    pub fn new(coords: Vec<Rational>) -> Self {
        Self(coords)
    }

    pub fn splat(dim: usize, value: Rational) -> Self {
        Self(vec![value; dim])
    }

    pub fn from_ints(coords: &[i64]) -> Self {
        Self(coords.iter().map(|&c| super::rational::int(c)).collect())
    }

    /// Parses a list of `"num/den"` strings.
    pub fn parse<S: AsRef<str>>(coords: &[S]) -> Option<Self> {
        coords
            .iter()
            .map(|c| parse_rational(c.as_ref()))
            .collect::<Option<Vec<_>>>()
            .map(Self)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[Rational] {
        &self.0
    }

    pub fn coord(&self, axis: usize) -> &Rational {
        &self.0[axis]
    }

    pub fn into_coords(self) -> Vec<Rational> {
        self.0
    }

    pub fn to_strings(&self) -> Vec<String> {
        self.0.iter().map(to_fraction_string).collect()
    }

    /// Same coordinates, compared by numerator and denominator. Faster
    /// than `==` on long values with different denominators.
    pub fn same_as(&self, other: &RationalPoint) -> bool {
        self.0.len() == other.0.len()
            && self
                .0
                .iter()
                .zip(&other.0)
                .all(|(a, b)| a.denom() == b.denom() && a.numer() == b.numer())
    }

    /// Coordinate-wise arithmetic mean. `None` for an empty slice.
    pub fn mean<'a, I>(points: I) -> Option<RationalPoint>
    where
        I: IntoIterator<Item = &'a RationalPoint>,
    {
        // Equal points are summed once, times their count.
        let mut groups: Vec<(&RationalPoint, i64)> = Vec::new();
        for p in points {
            match groups.iter_mut().find(|(q, _)| q.same_as(p)) {
                Some((_, k)) => *k += 1,
                None => groups.push((p, 1)),
            }
        }
        let count: i64 = groups.iter().map(|(_, k)| k).sum();
        let ((first, k), rest) = groups.split_first()?;
        let mut sum: Vec<Rational> = first.0.iter().map(|c| c * int(*k)).collect();
        for (p, k) in rest {
            for (acc, c) in sum.iter_mut().zip(&p.0) {
                *acc += c * int(*k);
            }
        }
        let count = int(count);
        Some(RationalPoint(sum.into_iter().map(|s| s / &count).collect()))
    }
}

impl fmt::Display for RationalPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

impl Serialize for RationalPoint {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.to_strings().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for RationalPoint {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = Vec::<String>::deserialize(deserializer)?;
        RationalPoint::parse(&raw)
            .ok_or_else(|| serde::de::Error::custom(format!("invalid rational coordinates {raw:?}")))
    }
}

/// An indexed multiset of points. Subsets and partitions are index sets.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PointMultiset {
    members: Vec<RationalPoint>,
}

impl PointMultiset {
    pub fn new(members: Vec<RationalPoint>) -> Self {
        Self { members }
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn members(&self) -> &[RationalPoint] {
        &self.members
    }

    pub fn get(&self, index: usize) -> &RationalPoint {
        &self.members[index]
    }

    pub fn push(&mut self, point: RationalPoint) {
        self.members.push(point);
    }

    pub fn into_members(self) -> Vec<RationalPoint> {
        self.members
    }

    /// Common dimension of all members. Errors on a mismatch; `None` if empty.
    pub fn dim(&self) -> Result<Option<usize>, GeomError> {
        let Some(first) = self.members.first() else {
            return Ok(None);
        };
        let d = first.dim();
        for p in &self.members[1..] {
            if p.dim() != d {
                return Err(GeomError::DimensionMismatch {
                    expected: d,
                    found: p.dim(),
                });
            }
        }
        Ok(Some(d))
    }

    /// Members sorted lexicographically by coordinates.
    pub fn canonical(&self) -> PointMultiset {
        let mut members = self.members.clone();
        members.sort();
        PointMultiset { members }
    }

    pub fn select(&self, indices: &[usize]) -> PointMultiset {
        PointMultiset {
            members: indices.iter().map(|&i| self.members[i].clone()).collect(),
        }
    }
}

impl FromIterator<RationalPoint> for PointMultiset {
    fn from_iter<T: IntoIterator<Item = RationalPoint>>(iter: T) -> Self {
        Self {
            members: iter.into_iter().collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::rational::rational;

    #[test]
    fn mean_is_exact() {
        let z = [
            RationalPoint::from_ints(&[6]),
            RationalPoint::from_ints(&[3]),
            RationalPoint::from_ints(&[3]),
            RationalPoint::from_ints(&[6]),
        ];
        assert_eq!(RationalPoint::mean(&z), Some(RationalPoint::new(vec![rational(9, 2)])));
        assert_eq!(RationalPoint::mean(std::iter::empty()), None);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let y = PointMultiset::new(vec![RationalPoint::from_ints(&[1, 2]), RationalPoint::from_ints(&[1])]);
        assert!(matches!(
            y.dim(),
            Err(GeomError::DimensionMismatch { expected: 2, found: 1 })
        ));
    }

    #[test]
    fn serde_uses_fraction_strings() {
        let p = RationalPoint::new(vec![rational(1, 6), rational(-2, 1)]);
        let json = serde_json::to_string(&p).unwrap();
        assert_eq!(json, r#"["1/6","-2/1"]"#);
        let back: RationalPoint = serde_json::from_str(&json).unwrap();
        assert_eq!(back, p);
    }
}

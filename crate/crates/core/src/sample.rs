//! Point samples and their plain-text representation.
//!
//! Text format: UTF-8, one point per line, comma-separated decimal
//! coordinates. Lines whose first non-blank character is `#` and blank lines
//! are skipped.

use crate::error::{domain, Error, Result};
use std::fmt::Write as _;

/// An ordered, non-empty collection of points in ℝᵈ stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSample {
    dim: usize,
    coords: Vec<f64>,
}

impl PointSample {
    /// Builds a sample from a flat row-major coordinate buffer.
    pub fn from_flat(dim: usize, coords: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(domain("points must have dimension >= 1"));
        }
        if coords.is_empty() {
            return Err(domain("a sample needs at least one point"));
        }
        if !coords.len().is_multiple_of(dim) {
            return Err(domain(format!(
                "{} coordinates do not split into points of dimension {dim}",
                coords.len()
            )));
        }
        if let Some(pos) = coords.iter().position(|c| !c.is_finite()) {
            return Err(domain(format!(
                "non-finite coordinate {} in point {}",
                coords[pos],
                pos / dim
            )));
        }
        Ok(Self { dim, coords })
    }

    pub fn from_points<P: AsRef<[f64]>>(points: &[P]) -> Result<Self> {
        let dim = points.first().map(|p| p.as_ref().len()).unwrap_or(0);
        let mut coords = Vec::with_capacity(dim * points.len());
        for (i, p) in points.iter().enumerate() {
            let p = p.as_ref();
            if p.len() != dim {
                return Err(domain(format!(
                    "point {i} has {} coordinates, expected {dim}",
                    p.len()
                )));
            }
            coords.extend_from_slice(p);
        }
        Self::from_flat(dim, coords)
    }

    /// One-dimensional sample from scalars.
    pub fn from_scalars(values: &[f64]) -> Result<Self> {
        Self::from_flat(1, values.to_vec())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    /// Always false; kept for the usual `len`/`is_empty` pairing.
    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.coords.chunks_exact(self.dim)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.coords
    }

    /// Applies `f` to every point, producing a sample of dimension `out_dim`.
    pub fn map_points(
        &self,
        out_dim: usize,
        mut f: impl FnMut(&[f64], &mut [f64]),
    ) -> Result<Self> {
        let mut coords = vec![0.0; out_dim * self.len()];
        for (src, dst) in self.points().zip(coords.chunks_exact_mut(out_dim.max(1))) {
            f(src, dst);
        }
        Self::from_flat(out_dim, coords)
    }

    /// Serializes with 17 significant digits so that parsing is bit-exact.
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(self.coords.len() * 24);
        for p in self.points() {
            for (j, c) in p.iter().enumerate() {
                if j > 0 {
                    out.push(',');
                }
                let _ = write!(out, "{c:.16e}");
            }
            out.push('\n');
        }
        out
    }

    /// Parses the text format. Errors carry the 1-based line number in `offset`.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut dim = None;
        let mut coords = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let start = coords.len();
            for field in trimmed.split(',') {
                let field = field.trim();
                let v: f64 = field.parse().map_err(|_| Error::Parse {
                    offset: lineno + 1,
                    reason: format!("line {}: cannot parse {field:?} as a number", lineno + 1),
                })?;
                if !v.is_finite() {
                    return Err(Error::Parse {
                        offset: lineno + 1,
                        reason: format!("line {}: non-finite coordinate {field:?}", lineno + 1),
                    });
                }
                coords.push(v);
            }
            let width = coords.len() - start;
            match dim {
                None => dim = Some(width),
                Some(d) if d != width => {
                    return Err(Error::Parse {
                        offset: lineno + 1,
                        reason: format!(
                            "line {}: expected {d} coordinates, found {width}",
                            lineno + 1
                        ),
                    })
                }
                Some(_) => {}
            }
        }
        let dim = dim.ok_or(Error::Parse {
            offset: 0,
            reason: "no data lines".into(),
        })?;
        Self::from_flat(dim, coords)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rejects_ragged_and_non_finite() {
        assert!(PointSample::from_points(&[vec![0.0, 1.0], vec![2.0]]).is_err());
        assert!(PointSample::from_scalars(&[0.0, f64::NAN]).is_err());
        assert!(PointSample::from_scalars(&[]).is_err());
    }

    #[test]
    fn parses_comments_and_reports_lines() {
        let s = PointSample::from_text("# header\n0,1\n\n 2 , 3 \n").unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.point(1), &[2.0, 3.0]);
        match PointSample::from_text("0,1\n2\n") {
            Err(Error::Parse { offset, .. }) => assert_eq!(offset, 2),
            other => panic!("unexpected {other:?}"),
        }
        match PointSample::from_text("0\nabc\n") {
            Err(Error::Parse { offset, .. }) => assert_eq!(offset, 2),
            other => panic!("unexpected {other:?}"),
        }
        assert!(PointSample::from_text("# only comments\n").is_err());
    }

    proptest! {
        #[test]
        fn text_round_trip_is_bit_exact(
            d in 1usize..4,
            raw in proptest::collection::vec(proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO, 1..40),
        ) {
            let n = raw.len() / d;
            prop_assume!(n >= 1);
            let s = PointSample::from_flat(d, raw[..n * d].to_vec()).unwrap();
            let back = PointSample::from_text(&s.to_text()).unwrap();
            prop_assert_eq!(s.as_flat().len(), back.as_flat().len());
            for (a, b) in s.as_flat().iter().zip(back.as_flat()) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}

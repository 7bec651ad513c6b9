//! Seeded collocation and test point sets on axis-aligned boxes.
//!
//! Each role draws from its own stream of the root seed, so interior,
//! boundary, initial and test points never share random numbers.

use std::io::Write;
use std::path::Path;

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{Stream, StreamRng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxDomain {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl BoxDomain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() || lower.len() != upper.len() {
            return Err(Error::invalid("box bounds must have equal nonzero length"));
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l < u) || !l.is_finite() || !u.is_finite()) {
            return Err(Error::invalid(format!("box needs lower < upper on every axis, got {lower:?} / {upper:?}")));
        }
        Ok(Self { lower, upper })
    }

    /// `[0, 1]^dim`.
    pub fn unit(dim: usize) -> Result<Self> {
        Self::cube(dim, 0.0, 1.0)
    }

    pub fn cube(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo; dim], vec![hi; dim])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim() && x.iter().enumerate().all(|(k, &v)| v >= self.lower[k] && v <= self.upper[k])
    }

    /// Whether `x` lies on some face (within `tol`).
    pub fn on_boundary(&self, x: &[f64], tol: f64) -> bool {
        x.iter()
            .enumerate()
            .any(|(k, &v)| (v - self.lower[k]).abs() <= tol || (v - self.upper[k]).abs() <= tol)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PointRole {
    Interior,
    Boundary,
    Initial,
    Test,
}

impl PointRole {
    fn stream(self) -> Stream {
        match self {
            PointRole::Interior => Stream::Interior,
            PointRole::Boundary => Stream::Boundary,
            PointRole::Initial => Stream::Initial,
            PointRole::Test => Stream::Test,
        }
    }
}

impl std::fmt::Display for PointRole {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PointRole::Interior => "interior",
            PointRole::Boundary => "boundary",
            PointRole::Initial => "initial",
            PointRole::Test => "test",
        })
    }
}

/// `M x d` points with their role and seed.
#[derive(Debug, Clone)]
pub struct PointSet {
    pub points: Mat<f64>,
    pub role: PointRole,
    pub seed: u64,
}

impl PointSet {
    pub fn from_points(points: Mat<f64>, role: PointRole, seed: u64) -> Self {
        Self { points, role, seed }
    }

    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn point(&self, i: usize) -> Vec<f64> {
        (0..self.dim()).map(|k| self.points[(i, k)]).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = Vec<f64>> + '_ {
        (0..self.len()).map(|i| self.point(i))
    }

    /// Header `x0,...,x{d-1},role`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header: Vec<String> = (0..self.dim()).map(|k| format!("x{k}")).collect();
        header.push("role".into());
        wr.write_record(&header)?;
        for p in self.iter() {
            let mut rec: Vec<String> = p.iter().map(|v| format!("{v:e}")).collect();
            rec.push(self.role.to_string());
            wr.write_record(&rec)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

fn uniform_box(domain: &BoxDomain, count: usize, rng: &mut StreamRng) -> Mat<f64> {
    let d = domain.dim();
    let mut m = Mat::<f64>::zeros(count, d);
    for i in 0..count {
        for k in 0..d {
            let (lo, hi) = (domain.lower[k], domain.upper[k]);
            m[(i, k)] = lo + (hi - lo) * rng.uniform_open();
        }
    }
    m
}

fn sample_uniform(domain: &BoxDomain, count: usize, seed: u64, role: PointRole) -> PointSet {
    let mut rng = StreamRng::new(seed, role.stream());
    PointSet::from_points(uniform_box(domain, count, &mut rng), role, seed)
}

/// Uniform points in the open box.
pub fn sample_interior(domain: &BoxDomain, count: usize, seed: u64) -> PointSet {
    sample_uniform(domain, count, seed, PointRole::Interior)
}

/// Held-out evaluation points, on a stream no solver uses.
pub fn sample_test(domain: &BoxDomain, count: usize, seed: u64) -> PointSet {
    sample_uniform(domain, count, seed, PointRole::Test)
}

/// Boundary points: a face is picked uniformly among all `2d` faces, the
/// other coordinates are uniform on that face.
pub fn sample_boundary(domain: &BoxDomain, count: usize, seed: u64) -> PointSet {
    let axes: Vec<usize> = (0..domain.dim()).collect();
    sample_boundary_faces(domain, count, seed, &axes).expect("all axes are valid")
}

/// Boundary points restricted to the faces normal to `axes` (for example
/// the spatial faces of a space-time box).
pub fn sample_boundary_faces(domain: &BoxDomain, count: usize, seed: u64, axes: &[usize]) -> Result<PointSet> {
    if axes.is_empty() {
        return Err(Error::invalid("need at least one boundary axis"));
    }
    if let Some(&a) = axes.iter().find(|&&a| a >= domain.dim()) {
        return Err(Error::invalid(format!("axis {a} out of range for dimension {}", domain.dim())));
    }
    let mut rng = StreamRng::new(seed, Stream::Boundary);
    let mut m = uniform_box(domain, count, &mut rng);
    let faces = 2 * axes.len() as u64;
    for i in 0..count {
        let face = rng.below(faces) as usize;
        let axis = axes[face / 2];
        m[(i, axis)] = if face.is_multiple_of(2) {
            domain.lower[axis]
        } else {
            domain.upper[axis]
        };
    }
    Ok(PointSet::from_points(m, PointRole::Boundary, seed))
}

/// Points on the `time_axis = lower` slab, other coordinates uniform.
pub fn sample_initial(domain: &BoxDomain, count: usize, seed: u64, time_axis: usize) -> Result<PointSet> {
    if time_axis >= domain.dim() {
        return Err(Error::invalid(format!(
            "time axis {time_axis} out of range for dimension {}",
            domain.dim()
        )));
    }
    let mut rng = StreamRng::new(seed, Stream::Initial);
    let mut m = uniform_box(domain, count, &mut rng);
    for i in 0..count {
        m[(i, time_axis)] = domain.lower[time_axis];
    }
    Ok(PointSet::from_points(m, PointRole::Initial, seed))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn means(p: &PointSet) -> Vec<f64> {
        (0..p.dim())
            .map(|k| (0..p.len()).map(|i| p.points[(i, k)]).sum::<f64>() / p.len() as f64)
            .collect()
    }

    #[test]
    fn rejects_bad_box() {
        assert!(BoxDomain::new(vec![0.0], vec![0.0]).is_err());
        assert!(BoxDomain::new(vec![0.0, 1.0], vec![1.0]).is_err());
    }

    #[test]
    fn interior_is_uniform_and_deterministic() {
        let d = BoxDomain::unit(3).unwrap();
        assert!(sample_interior(&d, 0, 1).is_empty());
        let p = sample_interior(&d, 100_000, 7);
        assert!(means(&p).iter().all(|m| (m - 0.5).abs() < 0.01));
        assert!(p.iter().all(|x| d.contains(&x)));
        let q = sample_interior(&d, 100_000, 7);
        assert_eq!(p.points, q.points);
    }

    #[test]
    fn one_dimensional_boundary() {
        let d = BoxDomain::unit(1).unwrap();
        let p = sample_boundary(&d, 50, 3);
        assert!(p.iter().all(|x| x[0] == 0.0 || x[0] == 1.0));
    }

    #[test]
    fn faces_balanced() {
        let d = BoxDomain::unit(2).unwrap();
        let p = sample_boundary(&d, 4000, 11);
        let mut counts = [0usize; 4];
        for x in p.iter() {
            assert!(d.on_boundary(&x, 0.0));
            let f = if x[0] == 0.0 {
                0
            } else if x[0] == 1.0 {
                1
            } else if x[1] == 0.0 {
                2
            } else {
                3
            };
            counts[f] += 1;
        }
        assert!(counts.iter().all(|&c| (850..=1150).contains(&c)), "{counts:?}");
    }

    #[test]
    fn initial_slab() {
        let d = BoxDomain::new(vec![0.0, 0.0], vec![1.0, 1.5]).unwrap();
        let p = sample_initial(&d, 20_000, 5, 1).unwrap();
        assert_eq!(p.len(), 20_000);
        assert!(p.iter().all(|x| x[1] == 0.0));
        assert!((means(&p)[0] - 0.5).abs() < 0.01);
        assert_eq!(sample_initial(&d, 1, 5, 2).unwrap_err().kind(), "invalid-argument");
    }

    #[test]
    fn streams_are_disjoint() {
        let d = BoxDomain::unit(2).unwrap();
        let a = sample_interior(&d, 10, 1);
        let t = sample_test(&d, 10, 1);
        assert_ne!(a.points, t.points);
    }

    #[test]
    fn csv_export() {
        let d = BoxDomain::unit(2).unwrap();
        let p = sample_boundary(&d, 3, 2);
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("x0,x1,role\n"));
        assert_eq!(s.lines().count(), 4);
    }
}

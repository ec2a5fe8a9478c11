//! Per-line coordinates of a support under linear, circular, spatial and spherical
//! projections.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{dot, DiscreteMeasure, SphericalTree, TreeSystem};

/// Offset keeping the lift angle strictly inside `(0, π)`.
pub const SPHERICAL_LIFT_EPS: f64 = 1e-6;

/// Coordinate-wise injective map `h(x)_l = x_l + γ x_l^degree` (odd degree), or the identity.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SpatialMapConfig {
    #[default]
    Identity,
    OddPoly {
        degree: u32,
        gamma: f64,
    },
}

impl SpatialMapConfig {
    /// `x + x^3`.
    pub const CUBIC: SpatialMapConfig = SpatialMapConfig::OddPoly {
        degree: 3,
        gamma: 1.0,
    };

    pub fn validate(&self) -> Result<()> {
        if let SpatialMapConfig::OddPoly { degree, gamma } = *self {
            if degree < 3 || degree % 2 == 0 {
                return Err(Error::config(
                    "spatial_map.degree",
                    format!("must be an odd integer >= 3, got {degree}"),
                ));
            }
            if !(gamma > 0.0 && gamma.is_finite()) {
                return Err(Error::config(
                    "spatial_map.gamma",
                    format!("must be positive and finite, got {gamma}"),
                ));
            }
        }
        Ok(())
    }

    #[inline]
    pub fn apply_scalar(&self, x: f64) -> f64 {
        match *self {
            SpatialMapConfig::Identity => x,
            SpatialMapConfig::OddPoly { degree, gamma } => x + gamma * x.powi(degree as i32),
        }
    }

    /// `h'(x) = 1 + γ · degree · x^(degree-1)`.
    #[inline]
    pub fn derivative_scalar(&self, x: f64) -> f64 {
        match *self {
            SpatialMapConfig::Identity => 1.0,
            SpatialMapConfig::OddPoly { degree, gamma } => {
                1.0 + gamma * degree as f64 * x.powi(degree as i32 - 1)
            }
        }
    }
}

/// Applies `h` elementwise to a row-major point matrix.
pub fn spatial_map(points: &[f64], cfg: &SpatialMapConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    Ok(points.iter().map(|&x| cfg.apply_scalar(x)).collect())
}

pub fn spatial_map_measure(m: &DiscreteMeasure, cfg: &SpatialMapConfig) -> Result<DiscreteMeasure> {
    DiscreteMeasure::new(spatial_map(m.points(), cfg)?, m.dim(), m.weights().to_vec())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoordinateRange {
    RealLine,
    NonnegRay,
    SphericalZeroPi,
}

/// Coordinates `t[i][j]` of point `j` on line `i`. When `shared`, every line sees the
/// same row and only one is stored.
#[derive(Debug, Clone, PartialEq)]
pub struct CoordinateMatrix {
    values: Vec<f64>,
    lines: usize,
    points: usize,
    shared: bool,
    range: CoordinateRange,
}

impl CoordinateMatrix {
    pub fn per_line(
        values: Vec<f64>,
        lines: usize,
        points: usize,
        range: CoordinateRange,
    ) -> Result<Self> {
        if values.len() != lines * points {
            return Err(Error::ShapeMismatch(format!(
                "{} coordinates for {lines} lines × {points} points",
                values.len()
            )));
        }
        let m = Self {
            values,
            lines,
            points,
            shared: false,
            range,
        };
        m.check_range()?;
        Ok(m)
    }

    pub fn shared(row: Vec<f64>, lines: usize, range: CoordinateRange) -> Result<Self> {
        let points = row.len();
        let m = Self {
            values: row,
            lines,
            points,
            shared: true,
            range,
        };
        m.check_range()?;
        Ok(m)
    }

    fn check_range(&self) -> Result<()> {
        let ok = match self.range {
            CoordinateRange::RealLine => self.values.iter().all(|v| v.is_finite()),
            CoordinateRange::NonnegRay => self.values.iter().all(|v| v.is_finite() && *v >= 0.0),
            CoordinateRange::SphericalZeroPi => self
                .values
                .iter()
                .all(|v| (0.0..=std::f64::consts::PI).contains(v)),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::NonFinite("coordinates outside their declared range"))
        }
    }

    pub fn num_lines(&self) -> usize {
        self.lines
    }

    pub fn num_points(&self) -> usize {
        self.points
    }

    pub fn is_shared(&self) -> bool {
        self.shared
    }

    pub fn range(&self) -> CoordinateRange {
        self.range
    }

    pub fn row(&self, i: usize) -> &[f64] {
        assert!(i < self.lines, "line {i} out of range");
        if self.shared {
            &self.values
        } else {
            &self.values[i * self.points..(i + 1) * self.points]
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i)[j]
    }
}

fn check_tree_dim(m_dim: usize, tree_dim: usize) -> Result<()> {
    if m_dim != tree_dim {
        return Err(Error::DimensionMismatch {
            expected: tree_dim,
            found: m_dim,
        });
    }
    Ok(())
}

/// `t[i][j] = <y_j - x, θ_i>`, line-major.
pub(crate) fn linear_coords(points: &[f64], tree: &TreeSystem) -> Vec<f64> {
    let d = tree.dim();
    let n = points.len() / d;
    let root = tree.root();
    let mut out = vec![0.0; tree.num_lines() * n];
    let mut v = vec![0.0; d];
    for (j, y) in points.chunks_exact(d).enumerate() {
        v.iter_mut()
            .zip(y.iter().zip(root))
            .for_each(|(o, (a, b))| *o = a - b);
        for i in 0..tree.num_lines() {
            out[i * n + j] = dot(&v, tree.direction(i));
        }
    }
    out
}

/// `t[i][j] = |y_j - x - r θ_i|`, line-major.
pub(crate) fn circular_coords(points: &[f64], tree: &TreeSystem, r: f64) -> Vec<f64> {
    let d = tree.dim();
    let n = points.len() / d;
    let root = tree.root();
    let mut out = vec![0.0; tree.num_lines() * n];
    for (j, y) in points.chunks_exact(d).enumerate() {
        for i in 0..tree.num_lines() {
            let th = tree.direction(i);
            let mut s = 0.0;
            for l in 0..d {
                let c = y[l] - root[l] - r * th[l];
                s += c * c;
            }
            out[i * n + j] = s.sqrt();
        }
    }
    out
}

/// `|y_j - x|`, computed once per point; identical to every row of `circular_coords(.., 0)`.
pub(crate) fn circular_coords_r0(points: &[f64], root: &[f64]) -> Vec<f64> {
    let d = root.len();
    points
        .chunks_exact(d)
        .map(|y| {
            let mut s = 0.0;
            for l in 0..d {
                let c = y[l] - root[l] - 0.0;
                s += c * c;
            }
            s.sqrt()
        })
        .collect()
}

pub fn project_linear(m: &DiscreteMeasure, tree: &TreeSystem) -> Result<CoordinateMatrix> {
    check_tree_dim(m.dim(), tree.dim())?;
    CoordinateMatrix::per_line(
        linear_coords(m.points(), tree),
        tree.num_lines(),
        m.len(),
        CoordinateRange::RealLine,
    )
}

/// Circular projection. With `r == 0` all lines share one coordinate row, computed once.
pub fn project_circular(
    m: &DiscreteMeasure,
    tree: &TreeSystem,
    r: f64,
) -> Result<CoordinateMatrix> {
    check_tree_dim(m.dim(), tree.dim())?;
    if !(r >= 0.0) || !r.is_finite() {
        return Err(Error::NegativeRadius(r));
    }
    if r == 0.0 {
        CoordinateMatrix::shared(
            circular_coords_r0(m.points(), tree.root()),
            tree.num_lines(),
            CoordinateRange::NonnegRay,
        )
    } else {
        CoordinateMatrix::per_line(
            circular_coords(m.points(), tree, r),
            tree.num_lines(),
            m.len(),
            CoordinateRange::NonnegRay,
        )
    }
}

/// `arccos(clamp(<x, y_j>))`, no unit-norm check.
pub(crate) fn spherical_coords(points: &[f64], root: &[f64]) -> Vec<f64> {
    points
        .chunks_exact(root.len())
        .map(|y| dot(root, y).clamp(-1.0, 1.0).acos())
        .collect()
}

/// Geodesic distance from the tree root; shared by all edges of the tree.
pub fn project_spherical(m: &DiscreteMeasure, tree: &SphericalTree) -> Result<Vec<f64>> {
    check_tree_dim(m.dim(), tree.ambient_dim())?;
    if !m.is_spherical() {
        // validate even if the caller did not flag the measure
        m.clone().into_spherical()?;
    }
    Ok(spherical_coords(m.points(), tree.root()))
}

/// Lift angle `k(y) = π/(2(1+ε)) · (mean(y) + 1 + ε)`.
#[inline]
pub(crate) fn lift_angle(y: &[f64]) -> f64 {
    let eps = SPHERICAL_LIFT_EPS;
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    std::f64::consts::PI / (2.0 * (1.0 + eps)) * (mean + 1.0 + eps)
}

/// `h(y) = (cos k(y), sin k(y) · y)` row by row: R^m → R^{m+1}.
pub(crate) fn spherical_lift_points(points: &[f64], dim: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(points.len() / dim * (dim + 1));
    for y in points.chunks_exact(dim) {
        let k = lift_angle(y);
        let (s, c) = k.sin_cos();
        out.push(c);
        out.extend(y.iter().map(|v| s * v));
    }
    out
}

/// Injective lift S^d → S^{d+1}.
pub fn spherical_spatial_map(m: &DiscreteMeasure) -> Result<DiscreteMeasure> {
    let m = if m.is_spherical() {
        m.clone()
    } else {
        m.clone().into_spherical()?
    };
    DiscreteMeasure::spherical(
        spherical_lift_points(m.points(), m.dim()),
        m.dim() + 1,
        m.weights().to_vec(),
    )
}

//! Splitting maps: softmax over point-to-line (or point-to-edge) distances, giving each
//! support point a probability vector over the lines of a tree.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{dot, DiscreteMeasure, SphericalTree, TreeSystem, DIRECTION_TOL};

/// Below this value of `1 - <x,y>^2` a point is treated as sitting on the root axis.
pub const POLE_TOL: f64 = 1e-24;

/// Sign applied to distances inside the softmax.
///
/// `Positive` is the literal `softmax(d)`, which favours farther lines; `Negative`
/// gives closer lines more mass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitSign {
    #[default]
    Positive,
    Negative,
}

impl SplitSign {
    pub fn value(self) -> f64 {
        match self {
            SplitSign::Positive => 1.0,
            SplitSign::Negative => -1.0,
        }
    }
}

/// Distance fed to the Euclidean splitting softmax.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SplitDistance {
    /// Orthogonal distance to the full line.
    Line,
    /// `|y - x - |y - x - rθ| θ|`: distance to the point of the line at the circular coordinate.
    Circular { radius: f64 },
}

/// Row-stochastic `n × k` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitWeights {
    values: Vec<f64>,
    points: usize,
    lines: usize,
}

impl SplitWeights {
    pub fn new(values: Vec<f64>, points: usize, lines: usize) -> Result<Self> {
        if values.len() != points * lines || lines == 0 {
            return Err(Error::ShapeMismatch(format!(
                "{} split weights for {points} points × {lines} lines",
                values.len()
            )));
        }
        for (j, row) in values.chunks_exact(lines).enumerate() {
            let s: f64 = row.iter().sum();
            if row.iter().any(|v| !(*v >= 0.0)) || (s - 1.0).abs() > 1e-10 {
                return Err(Error::InvalidWeights(format!(
                    "split row {j} is not in the simplex"
                )));
            }
        }
        Ok(Self {
            values,
            points,
            lines,
        })
    }

    /// Every row equal to `1/k`.
    pub fn uniform(points: usize, lines: usize) -> Self {
        Self {
            values: vec![1.0 / lines as f64; points * lines],
            points,
            lines,
        }
    }

    pub fn num_points(&self) -> usize {
        self.points
    }

    pub fn num_lines(&self) -> usize {
        self.lines
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.values[j * self.lines..(j + 1) * self.lines]
    }

    pub fn get(&self, j: usize, i: usize) -> f64 {
        self.values[j * self.lines + i]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Orthogonal distance from `y` to the line `{x + tθ}`.
pub fn point_line_distance(y: &[f64], root: &[f64], direction: &[f64]) -> Result<f64> {
    if y.len() != root.len() || direction.len() != root.len() {
        return Err(Error::DimensionMismatch {
            expected: root.len(),
            found: y.len().max(direction.len()),
        });
    }
    let n = dot(direction, direction).sqrt();
    if (n - 1.0).abs() > DIRECTION_TOL {
        return Err(Error::NonUnitDirection { index: 0, norm: n });
    }
    Ok(line_distance(y, root, direction))
}

#[inline]
fn line_distance(y: &[f64], root: &[f64], th: &[f64]) -> f64 {
    let mut t = 0.0;
    for l in 0..y.len() {
        t += (y[l] - root[l]) * th[l];
    }
    let mut s = 0.0;
    for l in 0..y.len() {
        let c = (y[l] - root[l]) - t * th[l];
        s += c * c;
    }
    s.sqrt()
}

#[inline]
fn circular_split_distance(y: &[f64], root: &[f64], th: &[f64], r: f64) -> f64 {
    let mut s = 0.0;
    for l in 0..y.len() {
        let c = y[l] - root[l] - r * th[l];
        s += c * c;
    }
    let c = s.sqrt();
    let mut out = 0.0;
    for l in 0..y.len() {
        let u = (y[l] - root[l]) - c * th[l];
        out += u * u;
    }
    out.sqrt()
}

/// Raw distances, `n × k` row-major.
pub(crate) fn split_distances(points: &[f64], tree: &TreeSystem, mode: SplitDistance) -> Vec<f64> {
    let d = tree.dim();
    let k = tree.num_lines();
    let root = tree.root();
    let mut out = Vec::with_capacity(points.len() / d * k);
    for y in points.chunks_exact(d) {
        for i in 0..k {
            let th = tree.direction(i);
            out.push(match mode {
                SplitDistance::Line => line_distance(y, root, th),
                SplitDistance::Circular { radius } => circular_split_distance(y, root, th, radius),
            });
        }
    }
    out
}

/// Circular split distances reusing already computed circular coordinates
/// (`coords[i * n + j] = |y_j - x - r θ_i|`, line-major, or one value per point when
/// `shared`); equal to `split_distances(.., Circular { radius: r })` bit for bit.
pub(crate) fn circular_split_from_coords(
    points: &[f64],
    tree: &TreeSystem,
    coords: &[f64],
    shared: bool,
) -> Vec<f64> {
    let d = tree.dim();
    let k = tree.num_lines();
    let n = points.len() / d;
    let root = tree.root();
    let mut out = Vec::with_capacity(n * k);
    for (j, y) in points.chunks_exact(d).enumerate() {
        for i in 0..k {
            let th = tree.direction(i);
            let c = if shared { coords[j] } else { coords[i * n + j] };
            let mut s = 0.0;
            for l in 0..d {
                let u = (y[l] - root[l]) - c * th[l];
                s += u * u;
            }
            out.push(s.sqrt());
        }
    }
    out
}

/// Circular coordinates (line-major, or one per point when `r0`) together with the
/// `n × k` split distances, in one pass over the points. Same values, bit for bit, as
/// `circular_coords` followed by `circular_split_from_coords`.
pub(crate) fn circular_coords_and_split(
    points: &[f64],
    tree: &TreeSystem,
    r: f64,
    r0: bool,
) -> (Vec<f64>, Vec<f64>) {
    let d = tree.dim();
    let k = tree.num_lines();
    let n = points.len() / d;
    let root = tree.root();
    let mut coords = vec![0.0; if r0 { n } else { k * n }];
    let mut split = Vec::with_capacity(n * k);
    let mut v = vec![0.0; d];
    for (j, y) in points.chunks_exact(d).enumerate() {
        v.iter_mut()
            .zip(y.iter().zip(root))
            .for_each(|(o, (a, b))| *o = a - b);
        let shared = r0.then(|| v.iter().fold(0.0, |s, &a| s + (a - 0.0) * (a - 0.0)).sqrt());
        if let Some(c) = shared {
            coords[j] = c;
        }
        for i in 0..k {
            let th = tree.direction(i);
            let c = shared.unwrap_or_else(|| {
                let c = v.iter().zip(th).fold(0.0, |s, (a, t)| {
                    let u = a - r * t;
                    s + u * u
                });
                c.sqrt()
            });
            if !r0 {
                coords[i * n + j] = c;
            }
            let s = v.iter().zip(th).fold(0.0, |s, (a, t)| {
                let u = a - c * t;
                s + u * u
            });
            split.push(s.sqrt());
        }
    }
    (coords, split)
}

/// In-place row softmax of `scale · scores`.
pub(crate) fn softmax_rows(scores: &mut [f64], k: usize, scale: f64) {
    for row in scores.chunks_exact_mut(k) {
        let max = row
            .iter()
            .map(|v| scale * v)
            .fold(f64::NEG_INFINITY, f64::max);
        let mut s = 0.0;
        for v in row.iter_mut() {
            *v = (scale * *v - max).exp();
            s += *v;
        }
        row.iter_mut().for_each(|v| *v /= s);
    }
}

pub(crate) fn check_temperature(temperature: f64) -> Result<()> {
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(Error::config(
            "splitting_temperature",
            format!("must be positive and finite, got {temperature}"),
        ));
    }
    Ok(())
}

/// `α(y_j)_i = softmax_i(s · d(y_j, line i) / τ)`.
pub fn splitting_euclidean(
    m: &DiscreteMeasure,
    tree: &TreeSystem,
    mode: SplitDistance,
    sign: SplitSign,
    temperature: f64,
) -> Result<SplitWeights> {
    check_temperature(temperature)?;
    if m.dim() != tree.dim() {
        return Err(Error::DimensionMismatch {
            expected: tree.dim(),
            found: m.dim(),
        });
    }
    if let SplitDistance::Circular { radius } = mode {
        if !(radius >= 0.0) || !radius.is_finite() {
            return Err(Error::NegativeRadius(radius));
        }
    }
    let k = tree.num_lines();
    let mut values = split_distances(m.points(), tree, mode);
    softmax_rows(&mut values, k, sign.value() / temperature);
    Ok(SplitWeights {
        values,
        points: m.len(),
        lines: k,
    })
}

/// `β_i = arccos(<y, y_i> / s) · s` with `s = sqrt(1 - <x, y>^2)`, zero on the root axis.
#[inline]
pub(crate) fn beta_score(y: &[f64], root: &[f64], edge: &[f64]) -> f64 {
    let u = dot(root, y);
    let s2 = 1.0 - u * u;
    if s2 < POLE_TOL {
        return 0.0;
    }
    let s = s2.sqrt();
    (dot(y, edge) / s).clamp(-1.0, 1.0).acos() * s
}

pub(crate) fn beta_scores(points: &[f64], tree: &SphericalTree) -> Vec<f64> {
    let m = tree.ambient_dim();
    let k = tree.num_edges();
    let mut out = Vec::with_capacity(points.len() / m * k);
    for y in points.chunks_exact(m) {
        for i in 0..k {
            out.push(beta_score(y, tree.root(), tree.edge(i)));
        }
    }
    out
}

/// `α(y) = softmax(β(y, T))`.
pub fn splitting_spherical(m: &DiscreteMeasure, tree: &SphericalTree) -> Result<SplitWeights> {
    if m.dim() != tree.ambient_dim() {
        return Err(Error::DimensionMismatch {
            expected: tree.ambient_dim(),
            found: m.dim(),
        });
    }
    if !m.is_spherical() {
        m.clone().into_spherical()?;
    }
    let k = tree.num_edges();
    let mut values = beta_scores(m.points(), tree);
    softmax_rows(&mut values, k, 1.0);
    Ok(SplitWeights {
        values,
        points: m.len(),
        lines: k,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{
        sample_spherical_tree, sample_tree_system, sample_unit_sphere, stream_rng, DirectionScheme,
        IsometryEd,
    };
    use rand::Rng;
    use std::f64::consts::PI;

    #[test]
    fn line_distance_examples() {
        let th = [0.6, 0.8];
        let x = [1.0, -1.0];
        let y = [1.0 + 2.0 * 0.6, -1.0 + 2.0 * 0.8];
        assert!(point_line_distance(&y, &x, &th).unwrap().abs() < 1e-15);
        assert_eq!(
            point_line_distance(&[3.0, 4.0], &[0.0, 0.0], &[1.0, 0.0]).unwrap(),
            4.0
        );
        assert!(point_line_distance(&[3.0, 4.0], &[0.0, 0.0], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn line_distance_isometry_invariant() {
        let mut rng = stream_rng(11, 0);
        for _ in 0..100 {
            let d = rng.random_range(1..7);
            let y: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
            let x: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
            let th = sample_unit_sphere(d, &mut rng).unwrap();
            let g = IsometryEd::random(d, 2.0, &mut rng);
            let a = point_line_distance(&y, &x, &th).unwrap();
            let b = point_line_distance(&g.apply_point(&y), &g.apply_point(&x), &g.rotate(&th))
                .unwrap();
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn identical_lines_split_evenly() {
        let tree = TreeSystem::new(vec![0.0, 0.0], vec![1.0, 0.0, 1.0, 0.0]).unwrap();
        let m = DiscreteMeasure::uniform(vec![1.0, 2.0, -3.0, 0.5], 2).unwrap();
        for mode in [SplitDistance::Line, SplitDistance::Circular { radius: 0.3 }] {
            let w = splitting_euclidean(&m, &tree, mode, SplitSign::Positive, 1.0).unwrap();
            for j in 0..2 {
                assert_eq!(w.row(j), &[0.5, 0.5]);
            }
        }
    }

    #[test]
    fn hand_softmax() {
        let tree = TreeSystem::new(vec![0.0, 0.0], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let m = DiscreteMeasure::uniform(vec![2f64.ln(), 0.0], 2).unwrap();
        let w =
            splitting_euclidean(&m, &tree, SplitDistance::Line, SplitSign::Positive, 1.0).unwrap();
        assert!((w.get(0, 0) - 1.0 / 3.0).abs() < 1e-15);
        assert!((w.get(0, 1) - 2.0 / 3.0).abs() < 1e-15);
        let w =
            splitting_euclidean(&m, &tree, SplitDistance::Line, SplitSign::Negative, 1.0).unwrap();
        assert!((w.get(0, 0) - 2.0 / 3.0).abs() < 1e-15);
        assert!(
            splitting_euclidean(&m, &tree, SplitDistance::Line, SplitSign::Positive, 0.0).is_err()
        );
    }

    #[test]
    fn rows_are_stochastic_and_invariant() {
        let mut rng = stream_rng(12, 0);
        for _ in 0..50 {
            let d = rng.random_range(1..5);
            let k = rng.random_range(1..6);
            let pts: Vec<f64> = (0..d * 15).map(|_| rng.random_range(-2.0..2.0)).collect();
            let m = DiscreteMeasure::uniform(pts, d).unwrap();
            let tree =
                sample_tree_system(d, k, 0.5, DirectionScheme::IidUniform, &mut rng).unwrap();
            let g = IsometryEd::random(d, 1.5, &mut rng);
            let gm = g.apply_measure(&m).unwrap();
            let gt = g.apply_tree(&tree).unwrap();
            for mode in [SplitDistance::Line, SplitDistance::Circular { radius: 0.4 }] {
                for sign in [SplitSign::Positive, SplitSign::Negative] {
                    let a = splitting_euclidean(&m, &tree, mode, sign, 0.7).unwrap();
                    let b = splitting_euclidean(&gm, &gt, mode, sign, 0.7).unwrap();
                    for j in 0..m.len() {
                        assert!((a.row(j).iter().sum::<f64>() - 1.0).abs() < 1e-10);
                        for i in 0..k {
                            assert!((a.get(j, i) - b.get(j, i)).abs() < 1e-9);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn spherical_degenerate_rows_are_uniform() {
        let tree = SphericalTree::new(
            vec![0.0, 0.0, 1.0],
            vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, -1.0, 0.0, 0.0],
        )
        .unwrap();
        let m = DiscreteMeasure::uniform_spherical(vec![0.0, 0.0, 1.0, 0.0, 0.0, -1.0], 3).unwrap();
        let w = splitting_spherical(&m, &tree).unwrap();
        for j in 0..2 {
            for i in 0..3 {
                assert!((w.get(j, i) - 1.0 / 3.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn spherical_hand_beta() {
        // root e3, edges ±e1; y at polar angle φ and tangent angle ψ from e1.
        let tree =
            SphericalTree::new(vec![0.0, 0.0, 1.0], vec![1.0, 0.0, 0.0, -1.0, 0.0, 0.0]).unwrap();
        let (phi, psi) = (PI / 3.0, PI / 4.0);
        let y = [phi.sin() * psi.cos(), phi.sin() * psi.sin(), phi.cos()];
        let beta = beta_scores(&y, &tree);
        assert!((beta[0] - psi * phi.sin()).abs() < 1e-12);
        assert!((beta[1] - (PI - psi) * phi.sin()).abs() < 1e-12);
        let m = DiscreteMeasure::uniform_spherical(y.to_vec(), 3).unwrap();
        let w = splitting_spherical(&m, &tree).unwrap();
        let e0 = beta[0].exp();
        let e1 = beta[1].exp();
        assert!((w.get(0, 0) - e0 / (e0 + e1)).abs() < 1e-15);
    }

    #[test]
    fn spherical_split_rotation_invariant() {
        let mut rng = stream_rng(13, 0);
        for _ in 0..50 {
            let d = rng.random_range(2..5);
            let k = rng.random_range(1..6);
            let pts: Vec<f64> = (0..20)
                .flat_map(|_| sample_unit_sphere(d + 1, &mut rng).unwrap())
                .collect();
            let m = DiscreteMeasure::uniform_spherical(pts, d + 1).unwrap();
            let tree = sample_spherical_tree(d, k, &mut rng).unwrap();
            let g = IsometryEd::random(d + 1, 0.0, &mut rng);
            let a = splitting_spherical(&m, &tree).unwrap();
            let b = splitting_spherical(
                &g.apply_measure(&m).unwrap(),
                &g.apply_spherical_tree(&tree).unwrap(),
            )
            .unwrap();
            for (x, y) in a.values().iter().zip(b.values()) {
                assert!((x - y).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn circular_split_reuses_coordinates_exactly() {
        use crate::projection::{circular_coords, circular_coords_r0};
        let mut rng = stream_rng(15, 0);
        for r in [0.0, 0.3] {
            let tree =
                sample_tree_system(4, 3, 0.5, DirectionScheme::IidUniform, &mut rng).unwrap();
            let pts: Vec<f64> = (0..40).map(|_| rng.random_range(-2.0..2.0)).collect();
            let direct = split_distances(&pts, &tree, SplitDistance::Circular { radius: r });
            let coords = circular_coords(&pts, &tree, r);
            assert_eq!(
                circular_split_from_coords(&pts, &tree, &coords, false),
                direct
            );
            assert_eq!(
                circular_coords_and_split(&pts, &tree, r, false),
                (coords, direct.clone())
            );
            if r == 0.0 {
                let shared = circular_coords_r0(&pts, tree.root());
                assert_eq!(
                    circular_split_from_coords(&pts, &tree, &shared, true),
                    direct
                );
                assert_eq!(
                    circular_coords_and_split(&pts, &tree, 0.0, true),
                    (shared, direct)
                );
            }
        }
    }

    #[test]
    fn split_rows_are_continuous() {
        let mut rng = stream_rng(14, 0);
        let tree = sample_tree_system(3, 4, 0.2, DirectionScheme::IidUniform, &mut rng).unwrap();
        let stree = sample_spherical_tree(2, 4, &mut rng).unwrap();
        for _ in 0..200 {
            let y: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
            let mut yp = y.clone();
            yp[rng.random_range(0..3)] += 1e-7;
            for mode in [SplitDistance::Line, SplitDistance::Circular { radius: 0.5 }] {
                let a = splitting_euclidean(
                    &DiscreteMeasure::uniform(y.clone(), 3).unwrap(),
                    &tree,
                    mode,
                    SplitSign::Positive,
                    1.0,
                )
                .unwrap();
                let b = splitting_euclidean(
                    &DiscreteMeasure::uniform(yp.clone(), 3).unwrap(),
                    &tree,
                    mode,
                    SplitSign::Positive,
                    1.0,
                )
                .unwrap();
                for (p, q) in a.values().iter().zip(b.values()) {
                    assert!((p - q).abs() < 1e-6);
                }
            }
            let s = sample_unit_sphere(3, &mut rng).unwrap();
            let mut sp = s.clone();
            sp[0] += 1e-7;
            let a = beta_scores(&s, &stree);
            let b = beta_scores(&sp, &stree);
            for (p, q) in a.iter().zip(&b) {
                // β is Lipschitz away from the edge planes; near them arccos has a square-root cusp
                assert!((p - q).abs() < 1e-3);
            }
        }
    }
}

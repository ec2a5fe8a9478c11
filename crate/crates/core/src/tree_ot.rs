//! 1-Wasserstein distance on a concurrent tree ("spider"): `k` lines or rays glued at a
//! root sitting at coordinate 0 of every line.
//!
//! The ground metric is `|t - s|` for two points on the same line and `|t| + |s|` for
//! points on different lines. The closed form used here appends, on each line, a virtual
//! point at coordinate 0 carrying minus the line's net signed mass; the per-line CDF
//! integral of the augmented signed measure then equals the flow through every edge of
//! the spider. [`lp_tree_w1_oracle`] solves the same problem exactly from the full
//! distance matrix and is what the closed form is checked against.

use crate::error::{Error, Result};
use crate::geometry::DiscreteMeasure;
use crate::projection::{CoordinateMatrix, CoordinateRange};
use crate::splitting::SplitWeights;
use crate::transport::min_cost_transport;

/// Tolerance on equal total masses.
pub const MASS_TOL: f64 = 1e-10;

/// Sort key of the virtual root entry.
pub(crate) const ROOT_KEY: u32 = u32::MAX;

/// Discrete measure on a spider: per line, `(coordinate, mass)` pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedTreeMeasure {
    lines: Vec<Vec<(f64, f64)>>,
    range: CoordinateRange,
}

impl ProjectedTreeMeasure {
    pub fn new(lines: Vec<Vec<(f64, f64)>>, range: CoordinateRange) -> Result<Self> {
        if lines.is_empty() {
            return Err(Error::ShapeMismatch(
                "a tree needs at least one line".into(),
            ));
        }
        for &(t, m) in lines.iter().flatten() {
            if !t.is_finite() || !m.is_finite() {
                return Err(Error::NonFinite("projected tree measure"));
            }
            if m < 0.0 {
                return Err(Error::InvalidWeights(format!("negative mass {m}")));
            }
            let in_range = match range {
                CoordinateRange::RealLine => true,
                CoordinateRange::NonnegRay => t >= 0.0,
                CoordinateRange::SphericalZeroPi => (0.0..=std::f64::consts::PI).contains(&t),
            };
            if !in_range {
                return Err(Error::ShapeMismatch(format!(
                    "coordinate {t} outside {range:?}"
                )));
            }
        }
        let total: f64 = lines.iter().flatten().map(|(_, m)| m).sum();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::MassMismatch {
                left: total,
                right: 1.0,
            });
        }
        Ok(Self { lines, range })
    }

    pub fn num_lines(&self) -> usize {
        self.lines.len()
    }

    pub fn line(&self, i: usize) -> &[(f64, f64)] {
        &self.lines[i]
    }

    pub fn range(&self) -> CoordinateRange {
        self.range
    }

    pub fn line_mass(&self, i: usize) -> f64 {
        self.lines[i].iter().map(|(_, m)| m).sum()
    }
}

/// Point `j` puts mass `w_j · α[j][i]` at `t[i][j]` on line `i`.
pub fn build_projected_measure(
    m: &DiscreteMeasure,
    coords: &CoordinateMatrix,
    alpha: &SplitWeights,
) -> Result<ProjectedTreeMeasure> {
    let (n, k) = (m.len(), coords.num_lines());
    if coords.num_points() != n || alpha.num_points() != n || alpha.num_lines() != k {
        return Err(Error::ShapeMismatch(format!(
            "measure has {n} points, coordinates {}×{}, split weights {}×{}",
            coords.num_lines(),
            coords.num_points(),
            alpha.num_points(),
            alpha.num_lines()
        )));
    }
    let lines = (0..k)
        .map(|i| {
            let row = coords.row(i);
            (0..n)
                .map(|j| (row[j], m.weights()[j] * alpha.get(j, i)))
                .collect()
        })
        .collect();
    ProjectedTreeMeasure::new(lines, coords.range())
}

/// Sort key interleaving the two sides so that equal coordinates pair `μ_j` with `ν_j`.
#[inline]
pub(crate) fn mu_key(j: usize) -> u32 {
    (2 * j) as u32
}

#[inline]
pub(crate) fn nu_key(j: usize) -> u32 {
    (2 * j + 1) as u32
}

#[inline]
pub(crate) fn sort_entries(entries: &mut [(f64, u32)]) {
    entries.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
}

/// `Σ |prefix mass| · gap` over entries sorted by coordinate.
#[inline]
pub(crate) fn sorted_cost(sorted: &[(f64, u32)], mass: impl Fn(u32) -> f64) -> f64 {
    let mut prefix = 0.0;
    let mut total = 0.0;
    for w in sorted.windows(2) {
        prefix += mass(w[0].1);
        total += prefix.abs() * (w[1].0 - w[0].0);
    }
    total
}

#[inline]
fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Scratch buffers for [`sorted_cost_grad`].
#[derive(Default)]
pub(crate) struct GradScratch {
    prefix: Vec<f64>,
    suffix: Vec<f64>,
}

/// Cost and its partial derivatives for every sorted entry.
///
/// `visit(key, d_coord, d_mass)` receives the derivative of the cost with respect to the
/// entry's coordinate and to its signed mass. When a virtual root entry is present, the
/// root mass is treated as minus the line's net mass, so `d_mass` already includes the
/// root's dependence. At tied coordinates, `d_coord` is the midpoint of the one-sided
/// derivatives; `sign(0) = 0` is used for mass derivatives.
pub(crate) fn sorted_cost_grad(
    sorted: &[(f64, u32)],
    mass: impl Fn(u32) -> f64,
    scratch: &mut GradScratch,
    mut visit: impl FnMut(u32, f64, f64),
) -> f64 {
    let len = sorted.len();
    let GradScratch { prefix, suffix } = scratch;
    prefix.clear();
    prefix.resize(len, 0.0);
    suffix.clear();
    suffix.resize(len + 1, 0.0);

    let mut p = 0.0;
    let mut total = 0.0;
    for (pos, e) in sorted.iter().enumerate() {
        p += mass(e.1);
        prefix[pos] = p;
        if pos + 1 < len {
            total += p.abs() * (sorted[pos + 1].0 - e.0);
        }
    }
    for pos in (0..len).rev() {
        let gap = if pos + 1 < len {
            sorted[pos + 1].0 - sorted[pos].0
        } else {
            0.0
        };
        suffix[pos] = suffix[pos + 1] + sign(prefix[pos]) * gap;
    }
    let root_suffix = sorted
        .iter()
        .position(|e| e.1 == ROOT_KEY)
        .map(|pos| suffix[pos])
        .unwrap_or(0.0);

    let mut start = 0;
    while start < len {
        let mut end = start + 1;
        while end < len && sorted[end].0 == sorted[start].0 {
            end += 1;
        }
        let before = if start == 0 { 0.0 } else { prefix[start - 1] };
        let after = prefix[end - 1];
        for pos in start..end {
            let key = sorted[pos].1;
            if key == ROOT_KEY {
                continue;
            }
            let m = mass(key);
            let d_coord = if end - start == 1 {
                before.abs() - after.abs()
            } else {
                let left = before.abs() - (before + m).abs();
                let right = (after - m).abs() - after.abs();
                0.5 * (left + right)
            };
            visit(key, d_coord, suffix[pos] - root_suffix);
        }
        start = end;
    }
    total
}

/// Exact 1-D W1 between two equal-mass discrete measures: `∫ |F_a - F_b| dt`.
pub fn one_dim_w1(a: &[(f64, f64)], b: &[(f64, f64)]) -> Result<f64> {
    let sa: f64 = a.iter().map(|(_, m)| m).sum();
    let sb: f64 = b.iter().map(|(_, m)| m).sum();
    if (sa - sb).abs() > MASS_TOL {
        return Err(Error::MassMismatch {
            left: sa,
            right: sb,
        });
    }
    if a.iter()
        .chain(b)
        .any(|(t, m)| !t.is_finite() || !m.is_finite())
    {
        return Err(Error::NonFinite("one-dimensional measure"));
    }
    let mut entries: Vec<(f64, u32)> = a
        .iter()
        .enumerate()
        .map(|(j, e)| (e.0, mu_key(j)))
        .chain(b.iter().enumerate().map(|(j, e)| (e.0, nu_key(j))))
        .collect();
    sort_entries(&mut entries);
    Ok(sorted_cost(&entries, |key| {
        let j = (key / 2) as usize;
        if key % 2 == 0 {
            a[j].1
        } else {
            -b[j].1
        }
    }))
}

/// Entries of one line with the virtual root appended when the line has net mass.
fn line_entries(a: &[(f64, f64)], b: &[(f64, f64)], root_mass: f64) -> Vec<(f64, u32)> {
    let mut entries: Vec<(f64, u32)> = a
        .iter()
        .enumerate()
        .map(|(j, e)| (e.0, mu_key(j)))
        .chain(b.iter().enumerate().map(|(j, e)| (e.0, nu_key(j))))
        .collect();
    if root_mass != 0.0 {
        entries.push((0.0, ROOT_KEY));
    }
    sort_entries(&mut entries);
    entries
}

/// Closed-form W1 between two measures on the same spider.
pub fn spider_w1(mu: &ProjectedTreeMeasure, nu: &ProjectedTreeMeasure) -> Result<f64> {
    if mu.num_lines() != nu.num_lines() {
        return Err(Error::ShapeMismatch(format!(
            "trees have {} and {} lines",
            mu.num_lines(),
            nu.num_lines()
        )));
    }
    if mu.range() != nu.range() {
        return Err(Error::ShapeMismatch("coordinate ranges differ".into()));
    }
    let total = (0..mu.num_lines())
        .map(|i| {
            let (a, b) = (mu.line(i), nu.line(i));
            let root_mass = -(mu.line_mass(i) - nu.line_mass(i));
            let entries = line_entries(a, b, root_mass);
            sorted_cost(&entries, |key| {
                if key == ROOT_KEY {
                    return root_mass;
                }
                let j = (key / 2) as usize;
                if key % 2 == 0 {
                    a[j].1
                } else {
                    -b[j].1
                }
            })
        })
        .sum();
    Ok(total)
}

/// Tree metric between `(line_a, t)` and `(line_b, s)`.
pub fn tree_distance(line_a: usize, t: f64, line_b: usize, s: f64) -> f64 {
    if line_a == line_b {
        (t - s).abs()
    } else {
        t.abs() + s.abs()
    }
}

/// Exact tree W1 by solving the transport problem on the full pairwise tree-distance
/// matrix. Meant for small instances (tens of support points).
pub fn lp_tree_w1_oracle(mu: &ProjectedTreeMeasure, nu: &ProjectedTreeMeasure) -> Result<f64> {
    if mu.num_lines() != nu.num_lines() {
        return Err(Error::ShapeMismatch(
            "trees have different numbers of lines".into(),
        ));
    }
    let flatten = |p: &ProjectedTreeMeasure| -> Vec<(usize, f64, f64)> {
        (0..p.num_lines())
            .flat_map(|i| p.line(i).iter().map(move |&(t, m)| (i, t, m)))
            .collect()
    };
    let a = flatten(mu);
    let b = flatten(nu);
    let cost: Vec<f64> = a
        .iter()
        .flat_map(|&(li, t, _)| b.iter().map(move |&(lj, s, _)| tree_distance(li, t, lj, s)))
        .collect();
    let wa: Vec<f64> = a.iter().map(|e| e.2).collect();
    let wb: Vec<f64> = b.iter().map(|e| e.2).collect();
    min_cost_transport(&wa, &wb, &cost)
}

/// Coordinates of one side on every line: one row shared by all lines, or `k × n` line-major.
#[derive(Clone, Copy)]
pub(crate) enum LineCoords<'a> {
    Shared(&'a [f64]),
    PerLine(&'a [f64]),
}

impl<'a> LineCoords<'a> {
    #[inline]
    fn row(&self, i: usize, n: usize) -> &'a [f64] {
        match *self {
            LineCoords::Shared(r) => r,
            LineCoords::PerLine(v) => &v[i * n..(i + 1) * n],
        }
    }
}

/// Both sides of one tree: coordinates plus `k × n` line-major masses.
pub(crate) struct SpiderInput<'a> {
    pub lines: usize,
    pub mu_coords: LineCoords<'a>,
    pub mu_mass: &'a [f64],
    pub nu_coords: LineCoords<'a>,
    pub nu_mass: &'a [f64],
}

impl SpiderInput<'_> {
    fn sizes(&self) -> (usize, usize) {
        (
            self.mu_mass.len() / self.lines,
            self.nu_mass.len() / self.lines,
        )
    }

    fn root_mass(&self, i: usize) -> f64 {
        let (n, m) = self.sizes();
        let a: f64 = self.mu_mass[i * n..(i + 1) * n].iter().sum();
        let b: f64 = self.nu_mass[i * m..(i + 1) * m].iter().sum();
        -(a - b)
    }

    fn fill_entries(&self, i: usize, with_root: bool, entries: &mut Vec<(f64, u32)>) {
        let (n, m) = self.sizes();
        entries.clear();
        entries.extend(
            self.mu_coords
                .row(i, n)
                .iter()
                .enumerate()
                .map(|(j, &t)| (t, mu_key(j))),
        );
        entries.extend(
            self.nu_coords
                .row(i, m)
                .iter()
                .enumerate()
                .map(|(j, &t)| (t, nu_key(j))),
        );
        if with_root {
            entries.push((0.0, ROOT_KEY));
        }
        sort_entries(entries);
    }

    fn shared(&self) -> bool {
        matches!(
            (self.mu_coords, self.nu_coords),
            (LineCoords::Shared(_), LineCoords::Shared(_))
        )
    }

    #[inline]
    fn mass_fn(&self, i: usize, root_mass: f64) -> impl Fn(u32) -> f64 + '_ {
        let (n, m) = self.sizes();
        let mu = &self.mu_mass[i * n..(i + 1) * n];
        let nu = &self.nu_mass[i * m..(i + 1) * m];
        move |key| {
            if key == ROOT_KEY {
                root_mass
            } else if key % 2 == 0 {
                mu[(key / 2) as usize]
            } else {
                -nu[(key / 2) as usize]
            }
        }
    }
}

/// Spider W1 of one tree. When both sides share one coordinate row across lines the
/// support is sorted once; the virtual root always sits at coordinate 0 and carries its
/// mass line by line.
pub(crate) fn spider_cost(input: &SpiderInput) -> f64 {
    let k = input.lines;
    let mut entries = Vec::new();
    if input.shared() {
        input.fill_entries(0, true, &mut entries);
        (0..k)
            .map(|i| sorted_cost(&entries, input.mass_fn(i, input.root_mass(i))))
            .sum()
    } else {
        (0..k)
            .map(|i| {
                let root_mass = input.root_mass(i);
                input.fill_entries(i, root_mass != 0.0, &mut entries);
                sorted_cost(&entries, input.mass_fn(i, root_mass))
            })
            .sum()
    }
}

/// Spider W1 of one tree plus its derivatives with respect to the `μ` side: `d_coord` and
/// `d_mass` are `k × n` line-major and are overwritten.
pub(crate) fn spider_cost_grad(
    input: &SpiderInput,
    d_coord: &mut [f64],
    d_mass: &mut [f64],
) -> f64 {
    let k = input.lines;
    let (n, _) = input.sizes();
    d_coord.iter_mut().for_each(|v| *v = 0.0);
    d_mass.iter_mut().for_each(|v| *v = 0.0);
    let mut entries = Vec::new();
    let mut scratch = GradScratch::default();
    let shared = input.shared();
    if shared {
        input.fill_entries(0, true, &mut entries);
    }
    let mut total = 0.0;
    for i in 0..k {
        let root_mass = input.root_mass(i);
        if !shared {
            input.fill_entries(i, root_mass != 0.0, &mut entries);
        }
        let (dc, dm) = (
            &mut d_coord[i * n..(i + 1) * n],
            &mut d_mass[i * n..(i + 1) * n],
        );
        total += sorted_cost_grad(
            &entries,
            input.mass_fn(i, root_mass),
            &mut scratch,
            |key, c, m| {
                if key % 2 == 0 {
                    let j = (key / 2) as usize;
                    dc[j] = c;
                    dm[j] = m;
                }
            },
        );
    }
    total
}

const SIGNATURE_ZERO: f64 = 1e-13;

/// Hashes the combinatorial state of one tree: per line, the sort order and the sign of
/// every prefix sum. The spider cost is smooth while this stays constant.
pub(crate) fn spider_signature(input: &SpiderInput, hasher: &mut impl std::hash::Hasher) {
    let mut entries = Vec::new();
    for i in 0..input.lines {
        let root_mass = input.root_mass(i);
        input.fill_entries(i, input.shared() || root_mass != 0.0, &mut entries);
        let mass = input.mass_fn(i, root_mass);
        let mut prefix = 0.0;
        for e in &entries {
            prefix += mass(e.1);
            hasher.write_u32(e.1);
            // prefixes that are zero up to round-off (e.g. the line total) carry no kink
            let s = if prefix.abs() <= SIGNATURE_ZERO {
                0
            } else {
                sign(prefix) as i8
            };
            hasher.write_i8(s);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::stream_rng;
    use proptest::prelude::*;
    use rand::Rng;

    fn ptm(lines: Vec<Vec<(f64, f64)>>, range: CoordinateRange) -> ProjectedTreeMeasure {
        ProjectedTreeMeasure::new(lines, range).unwrap()
    }

    fn random_instance<R: Rng>(
        rng: &mut R,
        k: usize,
        range: CoordinateRange,
    ) -> ProjectedTreeMeasure {
        let mut lines = Vec::new();
        let mut total = 0.0;
        for _ in 0..k {
            let count = rng.random_range(0..=8);
            let line: Vec<(f64, f64)> = (0..count)
                .map(|_| {
                    let t = match range {
                        CoordinateRange::RealLine => rng.random_range(-3.0..3.0),
                        _ => rng.random_range(0.0..3.0),
                    };
                    let m: f64 = rng.random_range(0.01..1.0);
                    total += m;
                    (t, m)
                })
                .collect();
            lines.push(line);
        }
        if total == 0.0 {
            lines[0].push((0.5, 1.0));
            total = 1.0;
        }
        for l in &mut lines {
            l.iter_mut().for_each(|e| e.1 /= total);
        }
        ptm(lines, range)
    }

    #[test]
    fn one_dim_examples() {
        let a = [(0.0, 0.25), (1.0, 0.75)];
        assert_eq!(one_dim_w1(&a, &a).unwrap(), 0.0);
        assert_eq!(one_dim_w1(&[(0.0, 1.0)], &[(3.0, 1.0)]).unwrap(), 3.0);
        assert!(one_dim_w1(&[(0.0, 1.0)], &[(3.0, 0.5)]).is_err());
    }

    #[test]
    fn one_dim_matches_lp() {
        let mut rng = stream_rng(31, 0);
        for _ in 0..300 {
            let gen = |rng: &mut rand_chacha::ChaCha8Rng| {
                let w: Vec<f64> = (0..6).map(|_| rng.random_range(0.01..1.0)).collect();
                let s: f64 = w.iter().sum();
                (0..6)
                    .map(|j| (rng.random_range(-5.0..5.0), w[j] / s))
                    .collect::<Vec<(f64, f64)>>()
            };
            let a = gen(&mut rng);
            let b = gen(&mut rng);
            let cost: Vec<f64> = a
                .iter()
                .flat_map(|x| b.iter().map(move |y: &(f64, f64)| (x.0 - y.0).abs()))
                .collect();
            let wa: Vec<f64> = a.iter().map(|e| e.1).collect();
            let wb: Vec<f64> = b.iter().map(|e| e.1).collect();
            let lp = min_cost_transport(&wa, &wb, &cost).unwrap();
            assert!((one_dim_w1(&a, &b).unwrap() - lp).abs() < 1e-9);
        }
    }

    #[test]
    fn spider_examples() {
        let mu = ptm(vec![vec![(1.0, 1.0)], vec![]], CoordinateRange::NonnegRay);
        let nu = ptm(vec![vec![], vec![(1.0, 1.0)]], CoordinateRange::NonnegRay);
        assert_eq!(spider_w1(&mu, &mu).unwrap(), 0.0);
        assert_eq!(spider_w1(&mu, &nu).unwrap(), 2.0);
        // opposite sides of the root on one line
        let a = ptm(vec![vec![(-1.0, 1.0)]], CoordinateRange::RealLine);
        let b = ptm(vec![vec![(2.0, 1.0)]], CoordinateRange::RealLine);
        assert_eq!(spider_w1(&a, &b).unwrap(), 3.0);
        assert!(spider_w1(&mu, &a).is_err());
    }

    #[test]
    fn spider_matches_lp_oracle() {
        let mut rng = stream_rng(32, 0);
        for trial in 0..400 {
            let k = rng.random_range(1..=4);
            let range = if trial % 2 == 0 {
                CoordinateRange::RealLine
            } else {
                CoordinateRange::NonnegRay
            };
            let mu = random_instance(&mut rng, k, range);
            let nu = random_instance(&mut rng, k, range);
            let closed = spider_w1(&mu, &nu).unwrap();
            let lp = lp_tree_w1_oracle(&mu, &nu).unwrap();
            assert!(
                (closed - lp).abs() < 1e-9,
                "trial {trial}: {closed} vs {lp}"
            );
        }
    }

    #[test]
    fn spider_single_line_equals_one_dim() {
        let mut rng = stream_rng(33, 0);
        for _ in 0..100 {
            let mu = random_instance(&mut rng, 1, CoordinateRange::RealLine);
            let nu = random_instance(&mut rng, 1, CoordinateRange::RealLine);
            let a = spider_w1(&mu, &nu).unwrap();
            let b = one_dim_w1(mu.line(0), nu.line(0)).unwrap();
            if mu.line_mass(0) == nu.line_mass(0) {
                assert_eq!(a, b);
            } else {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn build_projected_measure_bookkeeping() {
        let m = DiscreteMeasure::new(vec![0.0, 1.0, 2.0], 1, vec![0.2, 0.3, 0.5]).unwrap();
        let coords =
            CoordinateMatrix::shared(vec![0.0, 1.0, 2.0], 3, CoordinateRange::NonnegRay).unwrap();
        let alpha = SplitWeights::uniform(3, 3);
        let p = build_projected_measure(&m, &coords, &alpha).unwrap();
        for i in 0..3 {
            assert!((p.line_mass(i) - 1.0 / 3.0).abs() < 1e-15);
        }
        let single =
            CoordinateMatrix::per_line(vec![0.0, 1.0, 2.0], 1, 3, CoordinateRange::RealLine)
                .unwrap();
        let p1 = build_projected_measure(&m, &single, &SplitWeights::uniform(3, 1)).unwrap();
        assert_eq!(p1.line(0), &[(0.0, 0.2), (1.0, 0.3), (2.0, 0.5)]);
        assert!(build_projected_measure(&m, &coords, &SplitWeights::uniform(2, 3)).is_err());
    }

    #[test]
    fn grad_at_tie_is_midpoint() {
        // μ = ν on one line: the paired subgradient is zero.
        let sorted = [
            (1.0, mu_key(0)),
            (1.0, nu_key(0)),
            (2.0, mu_key(1)),
            (2.0, nu_key(1)),
        ];
        let masses = |k: u32| if k % 2 == 0 { 0.5 } else { -0.5 };
        let mut s = GradScratch::default();
        let v = sorted_cost_grad(&sorted, masses, &mut s, |_, dc, dm| {
            assert_eq!(dc, 0.0);
            assert_eq!(dm, 0.0);
        });
        assert_eq!(v, 0.0);
    }

    proptest! {
        #[test]
        fn spider_is_symmetric_homogeneous_and_triangular(
            seed in any::<u64>(),
            k in 1usize..5,
            scale in 0.1f64..10.0,
        ) {
            let mut rng = stream_rng(seed, 0);
            let range = if seed % 2 == 0 { CoordinateRange::RealLine } else { CoordinateRange::NonnegRay };
            let a = random_instance(&mut rng, k, range);
            let b = random_instance(&mut rng, k, range);
            let c = random_instance(&mut rng, k, range);
            let ab = spider_w1(&a, &b).unwrap();
            let ba = spider_w1(&b, &a).unwrap();
            let bc = spider_w1(&b, &c).unwrap();
            let ac = spider_w1(&a, &c).unwrap();
            prop_assert!((ab - ba).abs() < 1e-12);
            prop_assert!(ac <= ab + bc + 1e-10);
            let scaled = |p: &ProjectedTreeMeasure| {
                ptm((0..k).map(|i| p.line(i).iter().map(|&(t, m)| (t * scale, m)).collect()).collect(), range)
            };
            let sab = spider_w1(&scaled(&a), &scaled(&b)).unwrap();
            prop_assert!((sab - scale * ab).abs() < 1e-9 * (1.0 + sab));
        }
    }
}

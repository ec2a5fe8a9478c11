use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use treeslice::geometry::{sample_unit_sphere, stream_rng};
use treeslice::gradients::{
    grad_estimate_spherical, grad_estimate_with_trees, piece_signature_with_trees,
};
use treeslice::projection::SpatialMapConfig;
use treeslice::{
    estimate_stsw, estimate_tsw_with_trees, sample_trees, DiscreteMeasure, DistanceConfig,
    StswMode, TswMode,
};

fn weights(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
    let s: f64 = w.iter().sum();
    w.iter().map(|v| v / s).collect()
}

fn cloud(n: usize, d: usize, rng: &mut ChaCha8Rng) -> DiscreteMeasure {
    let pts = (0..n * d)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect();
    DiscreteMeasure::new(pts, d, weights(n, rng)).unwrap()
}

fn cfg(seed: u64) -> DistanceConfig {
    DistanceConfig {
        num_trees: 2,
        lines_per_tree: 3,
        radius: 0.4,
        root_std: 0.5,
        seed,
        spatial_map: SpatialMapConfig::CUBIC,
        ..DistanceConfig::default()
    }
}

#[test]
fn first_order_taylor_remainder_is_quadratic() {
    let mut rng = stream_rng(404, 0);
    for mode in TswMode::ALL {
        let mut evaluated = 0;
        for trial in 0..20u64 {
            let c = cfg(trial);
            let mu = cloud(4, 3, &mut rng);
            let nu = cloud(5, 3, &mut rng);
            let trees = sample_trees(&c, 3).unwrap();
            let (est, grad) = grad_estimate_with_trees(&mu, &nu, &c, mode, &trees).unwrap();
            let mut v: Vec<f64> = (0..mu.points().len())
                .map(|_| rng.sample(StandardNormal))
                .collect();
            let vn = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.iter_mut().for_each(|x| *x /= vn);
            let moved = |h: f64| {
                let p: Vec<f64> = mu.points().iter().zip(&v).map(|(a, b)| a + h * b).collect();
                mu.with_points(p).unwrap()
            };
            let base_sig = piece_signature_with_trees(&mu, &nu, &c, mode, &trees).unwrap();
            if piece_signature_with_trees(&moved(1e-3), &nu, &c, mode, &trees).unwrap() != base_sig
            {
                continue;
            }
            evaluated += 1;
            let slope: f64 = grad.values.iter().zip(&v).map(|(g, d)| g * d).sum();
            let rem = |h: f64| {
                let f = estimate_tsw_with_trees(&moved(h), &nu, &c, mode, &trees)
                    .unwrap()
                    .value;
                (f - est.value - h * slope).abs()
            };
            let (r3, r4) = (rem(1e-3), rem(1e-4));
            assert!(
                r4 <= 0.02 * r3 + 1e-13,
                "{mode:?} trial {trial}: {r3:e} -> {r4:e}"
            );
        }
        assert!(
            evaluated >= 15,
            "{mode:?}: only {evaluated} instances stayed on one piece"
        );
    }
}

/// Inputs with duplicated points, points shared between μ and ν, and points placed on
/// tree roots and circle centres.
#[test]
fn fuzzed_inputs_never_produce_nan() {
    let mut rng = stream_rng(505, 0);
    for case in 0..10_000u64 {
        let d = rng.random_range(1..=3);
        let n = rng.random_range(1..=4);
        let mut mu = cloud(n, d, &mut rng).points().to_vec();
        let mut nu = cloud(rng.random_range(1..=4), d, &mut rng)
            .points()
            .to_vec();
        let c = DistanceConfig {
            num_trees: 2,
            lines_per_tree: rng.random_range(1..=3),
            radius: if rng.random_bool(0.3) { 0.0 } else { 0.3 },
            seed: case,
            ..cfg(case)
        };
        let trees = sample_trees(&c, d).unwrap();
        match case % 4 {
            0 if n > 1 => {
                let first: Vec<f64> = mu[..d].to_vec();
                mu[d..2 * d].copy_from_slice(&first);
            }
            1 => nu[..d].copy_from_slice(&mu[..d]),
            2 => mu[..d].copy_from_slice(trees[0].root()),
            _ => {
                let (x, th) = (trees[0].root(), trees[0].direction(0));
                for l in 0..d {
                    mu[l] = x[l] + c.radius * th[l];
                }
            }
        }
        if rng.random_bool(0.2) {
            nu = mu.clone();
        }
        let mu = DiscreteMeasure::uniform(mu, d).unwrap();
        let nu = DiscreteMeasure::uniform(nu, d).unwrap();
        let mode = TswMode::ALL[(case as usize / 4) % 4];
        let (e, g) = grad_estimate_with_trees(&mu, &nu, &c, mode, &trees).unwrap();
        assert!(
            e.value.is_finite() && e.value >= 0.0,
            "case {case} {mode:?}: {}",
            e.value
        );
        assert!(
            g.values.iter().all(|v| v.is_finite()),
            "case {case} {mode:?}"
        );
    }
}

#[test]
fn fuzzed_spherical_inputs_never_produce_nan() {
    let mut rng = stream_rng(606, 0);
    for case in 0..2_000u64 {
        let m = 3;
        let n = rng.random_range(1..=4);
        let mut pts: Vec<f64> = Vec::new();
        for _ in 0..n {
            pts.extend(sample_unit_sphere(m, &mut rng).unwrap());
        }
        if n > 1 && case % 3 == 0 {
            let first = pts[..m].to_vec();
            pts[m..2 * m].copy_from_slice(&first);
        }
        if case % 5 == 0 {
            // exact poles of the lift and antipodes
            pts[..m].copy_from_slice(&[0.0, 0.0, 1.0]);
        }
        let mu = DiscreteMeasure::uniform_spherical(pts.clone(), m).unwrap();
        let nu = if case % 2 == 0 {
            mu.clone()
        } else {
            let flipped: Vec<f64> = pts.iter().map(|v| -v).collect();
            DiscreteMeasure::uniform_spherical(flipped, m).unwrap()
        };
        let mode = if case % 4 < 2 {
            StswMode::Plain
        } else {
            StswMode::Spatial
        };
        let c = DistanceConfig {
            num_trees: 2,
            seed: case,
            ..cfg(case)
        };
        let (e, g) = grad_estimate_spherical(&mu, &nu, &c, mode).unwrap();
        assert!(e.value.is_finite(), "case {case}");
        assert!(
            g.values.iter().all(|v| v.is_finite()),
            "case {case} {mode:?}"
        );
        assert_eq!(e.value, estimate_stsw(&mu, &nu, &c, mode).unwrap().value);
    }
}

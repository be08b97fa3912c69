use std::collections::BTreeMap;
use std::sync::Arc;

use gcfg::schedule::forward_diffuse;
use gcfg::world::{analytic_noise_prediction, diffuse_mixture, restrict, sample_data, Component};
use gcfg::{AnalyticPredictor, GuidanceStack, MixtureWorld, NoisePredictor, NoiseSchedule};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn random_world(rng: &mut ChaCha8Rng) -> MixtureWorld {
    let d = rng.random_range(1..=3);
    let k = rng.random_range(1..=4);
    let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.2..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let comps = raw
        .iter()
        .map(|w| {
            let a: Vec<Vec<f64>> = (0..d)
                .map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect())
                .collect();
            let cov = (0..d)
                .map(|i| {
                    (0..d)
                        .map(|j| {
                            let dot: f64 = (0..d).map(|m| a[i][m] * a[j][m]).sum();
                            dot + if i == j { 0.2 } else { 0.0 }
                        })
                        .collect()
                })
                .collect();
            Component {
                weight: w / total,
                mean: (0..d).map(|_| rng.random_range(-4.0..4.0)).collect(),
                covariance: cov,
            }
        })
        .collect();
    let labels: BTreeMap<String, Vec<usize>> =
        [("first".to_string(), vec![0])].into_iter().collect();
    MixtureWorld::new(comps, labels).unwrap()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn central_gradient<F: Fn(&[f64]) -> f64>(f: F, z: &[f64], h: f64) -> Vec<f64> {
    (0..z.len())
        .map(|i| {
            let mut p = z.to_vec();
            let mut m = z.to_vec();
            p[i] += h;
            m[i] -= h;
            (f(&p) - f(&m)) / (2.0 * h)
        })
        .collect()
}

fn relative_error(got: &[f64], want: &[f64]) -> f64 {
    let diff: Vec<f64> = got.iter().zip(want).map(|(a, b)| a - b).collect();
    norm(&diff) / norm(want).max(1.0)
}

#[test]
fn score_matches_finite_differences_of_log_density() {
    let schedule = NoiseSchedule::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let world = random_world(&mut rng);
        let t = rng.random_range(0..=schedule.num_steps());
        let z: Vec<f64> = (0..world.dim())
            .map(|_| rng.random_range(-6.0..6.0))
            .collect();
        let mix = diffuse_mixture(&world, t, &schedule).unwrap();
        let fd = central_gradient(|x| mix.log_density(x).unwrap(), &z, 1e-5);
        worst = worst.max(relative_error(&mix.score(&z).unwrap(), &fd));
    }
    assert!(worst < 1e-5, "max relative error {worst}");
}

#[test]
fn analytic_prediction_is_the_conditional_mean_of_the_noise() {
    let schedule = NoiseSchedule::default();
    let world = MixtureWorld::quadrant();
    let t = 300;
    let n = 1_000_000;
    let data = sample_data(&world, None, n, 17).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(18);
    let bins = 12usize;
    let (lo, hi) = (-4.0, 4.0);
    // per bin: count, sum of noise, sum of analytic prediction
    let mut acc = vec![(0usize, [0.0f64; 2], [0.0f64; 2]); bins * bins];
    let mix = diffuse_mixture(&world, t, &schedule).unwrap();
    let scale = -(1.0 - schedule.alpha_bar(t).unwrap()).sqrt();
    for z0 in &data {
        let eps: Vec<f64> = (0..2).map(|_| StandardNormal.sample(&mut rng)).collect();
        let zt = forward_diffuse(z0, t, &eps, &schedule).unwrap();
        let cell: Option<Vec<usize>> = zt
            .iter()
            .map(|&x| {
                let f = (x - lo) / (hi - lo) * bins as f64;
                (f >= 0.0 && f < bins as f64).then_some(f as usize)
            })
            .collect();
        let Some(cell) = cell else { continue };
        let pred: Vec<f64> = mix.score(&zt).unwrap().iter().map(|g| scale * g).collect();
        let slot = &mut acc[cell[0] * bins + cell[1]];
        slot.0 += 1;
        for i in 0..2 {
            slot.1[i] += eps[i];
            slot.2[i] += pred[i];
        }
    }
    let mut checked = 0;
    for (count, eps_sum, pred_sum) in acc {
        if count < 4000 {
            continue;
        }
        checked += 1;
        for i in 0..2 {
            let gap = (eps_sum[i] - pred_sum[i]) / count as f64;
            assert!(gap.abs() < 0.05, "bin mean gap {gap} with {count} draws");
        }
    }
    assert!(checked >= 20, "only {checked} bins populated");
}

#[test]
fn composed_prediction_is_the_scaled_gradient_of_the_product_density() {
    let schedule = Arc::new(NoiseSchedule::default());
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for world in [MixtureWorld::quadrant(), MixtureWorld::correlated()] {
        let world = Arc::new(world);
        let oracle: Arc<dyn NoisePredictor> =
            Arc::new(AnalyticPredictor::new(world.clone(), schedule.clone()));
        for _ in 0..100 {
            let conds = ["left", "top"];
            let weights: Vec<f64> = (0..2).map(|_| rng.random_range(-1.5..3.0)).collect();
            let mut stack = GuidanceStack::unconditional(oracle.clone());
            for (c, w) in conds.iter().zip(&weights) {
                stack = stack.with_term(oracle.clone(), Some(c), *w).unwrap();
            }
            let t = rng.random_range(1..=schedule.num_steps());
            let z: Vec<f64> = (0..2).map(|_| rng.random_range(-6.0..6.0)).collect();

            let full = diffuse_mixture(&world, t, &schedule).unwrap();
            let parts: Vec<_> = conds
                .iter()
                .map(|c| diffuse_mixture(&restrict(&world, c).unwrap(), t, &schedule).unwrap())
                .collect();
            // log p_t(z) + Σ w_i log p_t(c_i | z), up to constants in z
            let log_product = |x: &[f64]| {
                let base = full.log_density(x).unwrap();
                base + parts
                    .iter()
                    .zip(&weights)
                    .map(|(p, w)| w * (p.log_density(x).unwrap() - base))
                    .sum::<f64>()
            };
            let scale = -(1.0 - schedule.alpha_bar(t).unwrap()).sqrt();
            let want: Vec<f64> = central_gradient(log_product, &z, 1e-5)
                .into_iter()
                .map(|g| scale * g)
                .collect();
            let got = stack.compose(&z, t).unwrap();
            let err = relative_error(&got, &want);
            assert!(err < 1e-5, "relative error {err} at t={t}, z={z:?}");
        }
    }
}

#[test]
fn equal_covariance_guidance_is_an_interpolated_gaussian() {
    let schedule = Arc::new(NoiseSchedule::default());
    let eye = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
    let a = MixtureWorld::gaussian(vec![0.0, 0.0], eye.clone()).unwrap();
    let b = MixtureWorld::gaussian(vec![4.0, 0.0], eye.clone()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..100 {
        let w: f64 = rng.random_range(-1.0..2.0);
        let target = MixtureWorld::gaussian(vec![4.0 * w, 0.0], eye.clone()).unwrap();
        let base: Arc<dyn NoisePredictor> = Arc::new(AnalyticPredictor::new(
            Arc::new(a.clone()),
            schedule.clone(),
        ));
        let term: Arc<dyn NoisePredictor> = Arc::new(AnalyticPredictor::new(
            Arc::new(b.clone()),
            schedule.clone(),
        ));
        let stack = GuidanceStack::unconditional(base)
            .with_term(term, None, w)
            .unwrap();
        let t = rng.random_range(1..=schedule.num_steps());
        let z: Vec<f64> = (0..2).map(|_| rng.random_range(-6.0..6.0)).collect();
        let got = stack.compose(&z, t).unwrap();
        let want = analytic_noise_prediction(&target, None, &z, t, &schedule).unwrap();
        assert!(relative_error(&got, &want) <= 1e-10);
    }
}

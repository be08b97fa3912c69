//! Self-contained numerical checks that back the algebra, oracle and
//! null-text recipes. Each returns metric rows.

use std::collections::BTreeMap;
use std::sync::Arc;

use gcfg::guidance::{cfg_reference, negative_prompt_reference};
use gcfg::nn::{convert_to_null_text, null_text_forward, null_text_injection, AttentionBlock};
use gcfg::rng::stream;
use gcfg::world::{diffuse_mixture, Component};
use gcfg::{ConstantPredictor, GuidanceStack, MixtureWorld, NoisePredictor, NoiseSchedule};
use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::Result;
use crate::measure::MetricRow;

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `‖got − want‖ / max(‖want‖, 1)`.
pub fn relative_error(got: &[f64], want: &[f64]) -> f64 {
    let diff: Vec<f64> = got.iter().zip(want).map(|(a, b)| a - b).collect();
    norm(&diff) / norm(want).max(1.0)
}

fn gaussian_vec(rng: &mut ChaCha8Rng, d: usize, scale: f64) -> Vec<f64> {
    (0..d)
        .map(|_| {
            let x: f64 = StandardNormal.sample(&mut *rng);
            scale * x
        })
        .collect()
}

/// Maximum relative error of the four reductions of the fused prediction
/// over `instances` random vector instances.
pub fn guidance_algebra(instances: usize, seed: u64) -> Result<Vec<MetricRow>> {
    let schedule = Arc::new(NoiseSchedule::default());
    let mut rng = stream(seed, &[0]);
    let mut worst = [0.0f64; 4];
    for _ in 0..instances {
        let d = rng.random_range(1..=8);
        let scale = 10f64.powf(rng.random_range(-2.0..2.0));
        let u = gaussian_vec(&mut rng, d, scale);
        let c = gaussian_vec(&mut rng, d, scale);
        let n = gaussian_vec(&mut rng, d, scale);
        let other = gaussian_vec(&mut rng, d, scale);
        let w: f64 = rng.random_range(-10.0..10.0);
        let t = rng.random_range(1..=schedule.num_steps());
        let z = gaussian_vec(&mut rng, d, 1.0);
        let model: Arc<dyn NoisePredictor> = Arc::new(
            ConstantPredictor::new(schedule.clone(), u.clone())
                .with_condition("pos", c.clone())
                .with_condition("neg", n.clone()),
        );
        let swapped: Arc<dyn NoisePredictor> = Arc::new(
            ConstantPredictor::new(schedule.clone(), other)
                .with_condition("pos", c.clone())
                .with_condition("neg", n.clone()),
        );

        let empty = GuidanceStack::unconditional(model.clone());
        worst[0] = worst[0].max(relative_error(&empty.compose(&z, t)?, &u));

        let cfg = GuidanceStack::unconditional(model.clone()).with_term(
            model.clone(),
            Some("pos"),
            1.0 + w,
        )?;
        worst[1] = worst[1].max(relative_error(
            &cfg.compose(&z, t)?,
            &cfg_reference(&u, &c, w)?,
        ));

        let pair = |base: &Arc<dyn NoisePredictor>| -> gcfg::Result<Vec<f64>> {
            GuidanceStack::unconditional(base.clone())
                .with_term(base.clone(), Some("pos"), w)?
                .with_term(base.clone(), Some("neg"), 1.0 - w)?
                .compose(&z, t)
        };
        let neg = negative_prompt_reference(&c, &n, w)?;
        let fused = pair(&model)?;
        worst[2] = worst[2].max(relative_error(&fused, &neg));
        worst[3] = worst[3].max(relative_error(&pair(&swapped)?, &fused));
    }
    let names = ["empty_stack", "cfg", "negative_prompt", "base_cancellation"];
    Ok(names
        .iter()
        .zip(worst)
        .map(|(name, v)| {
            MetricRow::new(
                &format!("guidance_algebra.{name}"),
                v,
                format!("max relative error over {instances} instances"),
            )
        })
        .collect())
}

fn random_world(rng: &mut ChaCha8Rng) -> gcfg::Result<MixtureWorld> {
    let d = rng.random_range(1..=3);
    let k = rng.random_range(1..=4);
    let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.2..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let mut comps = Vec::with_capacity(k);
    for w in raw {
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
        comps.push(Component {
            weight: w / total,
            mean: (0..d).map(|_| rng.random_range(-4.0..4.0)).collect(),
            covariance: cov,
        });
    }
    MixtureWorld::new(comps, BTreeMap::new())
}

/// Mixture score against central differences of the log density on random
/// worlds, timesteps and points.
pub fn score_oracle(triples: usize, seed: u64) -> Result<Vec<MetricRow>> {
    let schedule = NoiseSchedule::default();
    let mut rng = stream(seed, &[1]);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for _ in 0..triples {
        let world = random_world(&mut rng)?;
        let t = rng.random_range(0..=schedule.num_steps());
        let z: Vec<f64> = (0..world.dim())
            .map(|_| rng.random_range(-6.0..6.0))
            .collect();
        let mix = diffuse_mixture(&world, t, &schedule)?;
        let mut fd = Vec::with_capacity(z.len());
        for i in 0..z.len() {
            let (mut p, mut m) = (z.clone(), z.clone());
            p[i] += h;
            m[i] -= h;
            fd.push((mix.log_density(&p)? - mix.log_density(&m)?) / (2.0 * h));
        }
        worst = worst.max(relative_error(&mix.score(&z)?, &fd));
    }
    Ok(vec![MetricRow::new(
        "score_oracle.max_relative_error",
        worst,
        format!("{triples} random (world, z, t) triples, step {h}"),
    )])
}

fn tokens(rng: &mut ChaCha8Rng, n: usize, w: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, w, |_, _| StandardNormal.sample(&mut *rng))
}

/// Constancy, single-token and shape checks of the null-text block.
pub fn null_text(seed: u64) -> Result<Vec<MetricRow>> {
    let mut rng = stream(seed, &[2]);
    let (d_model, d_attn) = (12, 8);
    let block = AttentionBlock::random(d_model, d_attn, rng.random());
    let converted = convert_to_null_text(&block, &tokens(&mut rng, 5, d_attn))?;

    let mut injection_dev: f64 = 0.0;
    let mut residual_dev: f64 = 0.0;
    let mut shapes_ok = true;
    let reference = null_text_injection(&converted, 1)?;
    let reference_row = reference.row(0).into_owned();
    for &n in &[1usize, 7, 64] {
        let injected = null_text_injection(&converted, n)?;
        for row in injected.row_iter() {
            injection_dev = injection_dev.max((row - &reference_row).amax());
        }
        for _ in 0..10 {
            let f = tokens(&mut rng, n, d_model) * 10f64.powf(rng.random_range(-1.0..1.0));
            let out = null_text_forward(&converted, &f)?;
            shapes_ok &= out.shape() == f.shape();
            // (F + c) − F rounds, so this one is only exact up to ulps of F
            let delta = (&out - &f) - &injected;
            residual_dev = residual_dev.max(delta.amax() / f.amax().max(f64::MIN_POSITIVE));
        }
    }

    let single = convert_to_null_text(&block, &tokens(&mut rng, 1, d_attn))?;
    let mut single_dev: f64 = null_text_injection(&single, 1)?.amax();
    for &n in &[1usize, 7, 64] {
        let f = tokens(&mut rng, n, d_model);
        single_dev = single_dev.max((null_text_forward(&single, &f)? - &f).amax());
    }

    Ok(vec![
        MetricRow::new(
            "null_text.injection_deviation",
            injection_dev,
            "max difference between injected rows across inputs and token counts".into(),
        ),
        MetricRow::new(
            "null_text.residual_deviation",
            residual_dev,
            "max |(out - in) - injection| relative to max |in|".into(),
        ),
        MetricRow::new(
            "null_text.single_token_deviation",
            single_dev,
            "max |out - in| with one null token".into(),
        ),
        MetricRow::new(
            "null_text.shapes_preserved",
            if shapes_ok { 1.0 } else { 0.0 },
            "token counts 1, 7, 64".into(),
        ),
    ])
}

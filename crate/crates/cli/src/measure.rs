//! Metric requests evaluated against drawn samples and trained models.

use gcfg::metrics::{
    assignment_rate, frechet, grid_divergence, occupied_cells, product_log_density,
    rejection_sample, GaussianFit,
};
use gcfg::nn::{batch_loss, gradient_check, train, Checkpoint, ProbeBatch};
use gcfg::rng::stream;
use gcfg::world::{analytic_noise_prediction, sample_data};
use gcfg::NoisePredictor;
use rand::Rng;
use serde::Serialize;

use crate::config::{MetricDecl, SourceDecl};
use crate::diagnostics;
use crate::error::Result;
use crate::experiment::{label_of, Prepared, SourceSamples};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricRow {
    pub metric: String,
    pub value: f64,
    pub details: String,
}

impl MetricRow {
    pub fn new(metric: &str, value: f64, details: String) -> Self {
        Self {
            metric: metric.to_string(),
            value,
            details,
        }
    }
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "pass"
    } else {
        "fail"
    }
}

pub(crate) fn evaluate<'a, L>(
    prepared: &Prepared,
    decl: &MetricDecl,
    lookup: &L,
    seed: u64,
) -> Result<Vec<MetricRow>>
where
    L: Fn(&SourceDecl) -> &'a SourceSamples,
{
    let world = &prepared.world;
    let name = |source: &SourceDecl, metric: &str| -> String {
        match label_of(prepared, source).as_str() {
            "main" => metric.to_string(),
            label => format!("{metric}@{label}"),
        }
    };
    let mut rows = Vec::new();
    match decl {
        MetricDecl::Moments {
            source,
            expected_mean,
            expected_covariance,
            mean_tolerance,
            covariance_tolerance,
        } => {
            let fit = GaussianFit::from_samples(&lookup(source).points)?;
            let d = fit.dim();
            for i in 0..d {
                rows.push(MetricRow::new(
                    &name(source, &format!("mean[{i}]")),
                    fit.mean()[i],
                    String::new(),
                ));
            }
            for i in 0..d {
                for j in i..d {
                    rows.push(MetricRow::new(
                        &name(source, &format!("cov[{i}][{j}]")),
                        fit.covariance(i, j),
                        String::new(),
                    ));
                }
            }
            if let Some(mean) = expected_mean {
                let err = (0..d)
                    .map(|i| (fit.mean()[i] - mean[i]).abs())
                    .fold(0.0, f64::max);
                rows.push(MetricRow::new(
                    &name(source, "max_mean_error"),
                    err,
                    format!(
                        "expected {mean:?}, tolerance {mean_tolerance}: {}",
                        verdict(err <= *mean_tolerance)
                    ),
                ));
            }
            if let Some(cov) = expected_covariance {
                let err = (0..d)
                    .flat_map(|i| (0..d).map(move |j| (i, j)))
                    .map(|(i, j)| (fit.covariance(i, j) - cov[i][j]).abs())
                    .fold(0.0, f64::max);
                rows.push(MetricRow::new(
                    &name(source, "max_covariance_error"),
                    err,
                    format!(
                        "expected {cov:?}, tolerance {covariance_tolerance}: {}",
                        verdict(err <= *covariance_tolerance)
                    ),
                ));
            }
        }
        MetricDecl::AssignmentRate {
            name: label,
            condition,
            components,
            source,
        } => {
            let set: Vec<usize> = match (condition, components) {
                (Some(c), _) => world.selection(c)?.to_vec(),
                (None, Some(s)) => s.clone(),
                (None, None) => unreachable!("validated"),
            };
            let rate = assignment_rate(&lookup(source).points, world, &set)?;
            rows.push(MetricRow::new(
                &name(source, &format!("assignment_rate.{label}")),
                rate,
                format!("components {set:?}"),
            ));
        }
        MetricDecl::Frechet {
            reference,
            condition,
            source,
        } => {
            let reference = match reference {
                Some(d) => d.build()?,
                None => (**world).clone(),
            };
            let points = &lookup(source).points;
            let draws = sample_data(&reference, condition.as_deref(), points.len(), seed)?;
            let value = frechet(
                &GaussianFit::from_samples(points)?,
                &GaussianFit::from_samples(&draws)?,
            )?;
            rows.push(MetricRow::new(
                &name(source, "frechet"),
                value,
                format!("against {} fresh reference draws", draws.len()),
            ));
        }
        MetricDecl::GridDivergence {
            target,
            grid,
            calibration,
            calibration_factor,
            source,
        } => {
            let factors: Vec<(String, f64)> = target
                .iter()
                .map(|f| (f.condition.clone(), f.weight))
                .collect();
            let log_target =
                |z: &[f64]| product_log_density(world, &factors, z).unwrap_or(f64::NEG_INFINITY);
            let points = &lookup(source).points;
            let div = grid_divergence(points, &log_target, grid)?;
            rows.push(MetricRow::new(
                &name(source, "grid.tv"),
                div.tv,
                String::new(),
            ));
            rows.push(MetricRow::new(
                &name(source, "grid.kl"),
                div.kl,
                String::new(),
            ));
            rows.push(MetricRow::new(
                &name(source, "grid.residual"),
                div.residual,
                "target mass outside the grid".into(),
            ));
            if *calibration {
                let exact = rejection_sample(&log_target, grid, points.len(), seed)?;
                let calib = grid_divergence(&exact, &log_target, grid)?;
                let bound = calibration_factor * calib.tv;
                rows.push(MetricRow::new(
                    &name(source, "grid.calibration_tv"),
                    calib.tv,
                    format!("{} rejection draws from the target", exact.len()),
                ));
                rows.push(MetricRow::new(
                    &name(source, "grid.tv_bound"),
                    bound,
                    format!("{calibration_factor} x calibration tv"),
                ));
                rows.push(MetricRow::new(
                    &name(source, "grid.tv_ratio"),
                    div.tv / bound,
                    format!("tv <= bound: {}", verdict(div.tv <= bound)),
                ));
            }
        }
        MetricDecl::Support {
            reference,
            grid,
            min_count,
            source,
        } => {
            let own = occupied_cells(&lookup(source).points, grid, *min_count as u64)?;
            let other = occupied_cells(&lookup(reference).points, grid, *min_count as u64)?;
            let superset = other.is_subset(&own) && own.len() > other.len();
            let extra = own.len() as f64 / (other.len().max(1)) as f64 - 1.0;
            let reference_label = label_of(prepared, reference);
            rows.push(MetricRow::new(
                &name(source, "support.occupied"),
                own.len() as f64,
                format!("cells with at least {min_count} samples"),
            ));
            rows.push(MetricRow::new(
                &name(source, "support.reference_occupied"),
                other.len() as f64,
                format!("reference source `{reference_label}`"),
            ));
            rows.push(MetricRow::new(
                &name(source, "support.missing"),
                other.difference(&own).count() as f64,
                "reference cells not occupied by this source".into(),
            ));
            rows.push(MetricRow::new(
                &name(source, "support.strict_superset"),
                if superset { 1.0 } else { 0.0 },
                String::new(),
            ));
            rows.push(MetricRow::new(
                &name(source, "support.extra_fraction"),
                extra,
                "occupied / reference occupied - 1".into(),
            ));
        }
        MetricDecl::OracleMse { predictor, probes } => {
            let t = prepared.predictors[predictor]
                .trained
                .as_ref()
                .expect("validated: trained predictor");
            let schedule = &prepared.schedule;
            let mut rng = stream(seed, &[0]);
            let d = t.data.dim();
            let (mut trained, mut untrained) = (0.0, 0.0);
            for _ in 0..*probes {
                let step = rng.random_range(1..=schedule.num_steps());
                let z: Vec<f64> = (0..d).map(|_| rng.random_range(-6.0..6.0)).collect();
                let want = analytic_noise_prediction(&t.data, None, &z, step, schedule)?;
                let sq = |p: Vec<f64>| {
                    p.iter()
                        .zip(&want)
                        .map(|(a, b)| (a - b).powi(2))
                        .sum::<f64>()
                };
                trained += sq(t.model.predict(&z, step, None)?);
                untrained += sq(t.initial.predict(&z, step, None)?);
            }
            let n = *probes as f64;
            rows.push(MetricRow::new(
                &format!("oracle_mse.{predictor}"),
                trained / n,
                format!("{probes} probes, z uniform on [-6, 6]^{d}"),
            ));
            rows.push(MetricRow::new(
                &format!("oracle_mse.{predictor}.initial"),
                untrained / n,
                "same probes before training".into(),
            ));
            rows.push(MetricRow::new(
                &format!("oracle_mse.{predictor}.ratio"),
                trained / untrained,
                "trained / initial".into(),
            ));
        }
        MetricDecl::GradientCheck {
            predictor,
            probe_size,
        } => {
            let t = prepared.predictors[predictor]
                .trained
                .as_ref()
                .expect("validated");
            let fresh_probe = ProbeBatch::random(&t.initial, *probe_size, seed);
            let trained_probe = ProbeBatch::random(&t.model, *probe_size, seed);
            rows.push(MetricRow::new(
                &format!("gradient_check.{predictor}.initial"),
                gradient_check(&t.initial, &fresh_probe, seed),
                "max relative error, 100 parameters".into(),
            ));
            rows.push(MetricRow::new(
                &format!("gradient_check.{predictor}"),
                gradient_check(&t.model, &trained_probe, seed),
                format!(
                    "max relative error, 100 parameters; probe loss {}",
                    batch_loss(&t.model, &trained_probe)
                ),
            ));
        }
        MetricDecl::LossDrop { predictor } => {
            let t = prepared.predictors[predictor]
                .trained
                .as_ref()
                .expect("validated");
            let k = t.losses.len().min(10);
            let head = t.losses[..k].iter().sum::<f64>() / k as f64;
            let tail = t.losses[t.losses.len() - k..].iter().sum::<f64>() / k as f64;
            rows.push(MetricRow::new(
                &format!("loss_drop.{predictor}"),
                1.0 - tail / head,
                format!("mean loss of first {k} iterations {head}, last {k} {tail}"),
            ));
        }
        MetricDecl::TrainingDeterminism { predictor } => {
            let t = prepared.predictors[predictor]
                .trained
                .as_ref()
                .expect("validated");
            let again = train(t.initial.clone(), &t.source_world, &t.config)?.model;
            let same = Checkpoint::from_model(&again).to_json()
                == Checkpoint::from_model(&t.model).to_json();
            rows.push(MetricRow::new(
                &format!("training_determinism.{predictor}"),
                if same { 1.0 } else { 0.0 },
                "1 when a second run yields an identical checkpoint".into(),
            ));
        }
        MetricDecl::GuidanceAlgebra { instances } => {
            rows.extend(diagnostics::guidance_algebra(*instances, seed)?)
        }
        MetricDecl::ScoreOracle { triples } => {
            rows.extend(diagnostics::score_oracle(*triples, seed)?)
        }
        MetricDecl::NullText {} => rows.extend(diagnostics::null_text(seed)?),
    }
    Ok(rows)
}

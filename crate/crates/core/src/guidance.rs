//! Generalized classifier-free guidance.
//!
//! A [`GuidanceStack`] holds one unconditional base predictor and any number
//! of weighted conditional terms, each possibly served by a different model:
//!
//! ```text
//! ε̂(z, t) = ε₀(z, t) + Σᵢ wᵢ (εᵢ(z, cᵢ, t) − ε₀(z, t))
//! ```
//!
//! For analytic predictors this is the (scaled) score of
//! `p_t(z) Πᵢ p_t(cᵢ | z)^wᵢ`. Classic CFG, negative prompts and the
//! concept/control recipe are all particular stacks.

use std::sync::Arc;

use crate::error::{check_dim, Error, Result};
use crate::predictor::{Conditioning, NoisePredictor};
use crate::schedule::NoiseSchedule;

#[derive(Clone, Debug)]
pub struct GuidanceTerm {
    pub predictor: Arc<dyn NoisePredictor>,
    pub condition: Option<String>,
    pub weight: f64,
}

impl GuidanceTerm {
    pub fn new(predictor: Arc<dyn NoisePredictor>, condition: Option<&str>, weight: f64) -> Self {
        Self {
            predictor,
            condition: condition.map(str::to_string),
            weight,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GuidanceStack {
    base: Arc<dyn NoisePredictor>,
    terms: Vec<GuidanceTerm>,
}

impl GuidanceStack {
    /// Builds a stack, rejecting schedule or dimension mismatches and
    /// non-finite weights.
    pub fn new(base: Arc<dyn NoisePredictor>, terms: Vec<GuidanceTerm>) -> Result<Self> {
        if base.conditioning() == Conditioning::Required {
            return Err(Error::Guidance(
                "the base predictor must be able to predict unconditionally".into(),
            ));
        }
        for (i, term) in terms.iter().enumerate() {
            if !term.weight.is_finite() {
                return Err(Error::Guidance(format!(
                    "term {i} has non-finite weight {}",
                    term.weight
                )));
            }
            if term.predictor.schedule() != base.schedule() {
                return Err(Error::ScheduleMismatch(format!(
                    "term {i} uses a different noise schedule than the base"
                )));
            }
            if term.predictor.dim() != base.dim() {
                return Err(Error::Guidance(format!(
                    "term {i} predicts dimension {}, base predicts {}",
                    term.predictor.dim(),
                    base.dim()
                )));
            }
        }
        Ok(Self { base, terms })
    }

    pub fn unconditional(base: Arc<dyn NoisePredictor>) -> Self {
        Self {
            base,
            terms: Vec::new(),
        }
    }

    pub fn with_term(
        self,
        predictor: Arc<dyn NoisePredictor>,
        condition: Option<&str>,
        weight: f64,
    ) -> Result<Self> {
        let mut terms = self.terms;
        terms.push(GuidanceTerm::new(predictor, condition, weight));
        Self::new(self.base, terms)
    }

    pub fn base(&self) -> &Arc<dyn NoisePredictor> {
        &self.base
    }

    pub fn terms(&self) -> &[GuidanceTerm] {
        &self.terms
    }

    pub fn schedule(&self) -> &NoiseSchedule {
        self.base.schedule()
    }

    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    /// Copy of this stack with new term weights, in term order.
    pub fn reweighted(&self, weights: &[f64]) -> Result<Self> {
        if weights.len() != self.terms.len() {
            return Err(Error::Guidance(format!(
                "{} weights given for {} terms",
                weights.len(),
                self.terms.len()
            )));
        }
        let terms = self
            .terms
            .iter()
            .zip(weights)
            .map(|(t, &w)| GuidanceTerm {
                weight: w,
                ..t.clone()
            })
            .collect();
        Self::new(self.base.clone(), terms)
    }

    /// Fused noise prediction. The base is evaluated once; terms are
    /// accumulated in index order so the result is bit-stable.
    pub fn compose(&self, z: &[f64], t: usize) -> Result<Vec<f64>> {
        let uncond = self.base.predict(z, t, None)?;
        check_dim(z.len(), uncond.len())?;
        let mut out = uncond.clone();
        for (index, term) in self.terms.iter().enumerate() {
            let cond = term
                .predictor
                .predict(z, t, term.condition.as_deref())
                .map_err(|e| Error::Term {
                    index,
                    source: Box::new(e),
                })?;
            for ((o, c), u) in out.iter_mut().zip(&cond).zip(&uncond) {
                *o += term.weight * (c - u);
            }
        }
        Ok(out)
    }
}

/// Classic CFG: `(1 + w) cond − w uncond`.
pub fn cfg_reference(uncond: &[f64], cond: &[f64], w: f64) -> Result<Vec<f64>> {
    check_dim(uncond.len(), cond.len())?;
    Ok(uncond
        .iter()
        .zip(cond)
        .map(|(u, c)| (1.0 + w) * c - w * u)
        .collect())
}

/// Negative-prompt blend: `(1 − w) neg + w pos`.
pub fn negative_prompt_reference(pos: &[f64], neg: &[f64], w: f64) -> Result<Vec<f64>> {
    check_dim(pos.len(), neg.len())?;
    Ok(pos
        .iter()
        .zip(neg)
        .map(|(p, n)| (1.0 - w) * n + w * p)
        .collect())
}

/// Concept-centric stack: the prior supplies unconditional guidance, a
/// condition-free concept model supplies concept guidance at `w1`, and the
/// control model supplies `control_condition` guidance at `w2`. Composing it
/// gives `(1 − w1 − w2) ε_prior + w1 ε_concept + w2 ε_control(c)`.
pub fn concept_stack(
    prior: Arc<dyn NoisePredictor>,
    concept: Arc<dyn NoisePredictor>,
    control: Arc<dyn NoisePredictor>,
    control_condition: &str,
    w1: f64,
    w2: f64,
) -> Result<GuidanceStack> {
    if concept.conditioning() == Conditioning::Required {
        return Err(Error::Guidance(
            "the concept predictor must not require a condition".into(),
        ));
    }
    GuidanceStack::new(
        prior,
        vec![
            GuidanceTerm::new(concept, None, w1),
            GuidanceTerm::new(control, Some(control_condition), w2),
        ],
    )
}

//! Unit selection: simple random sampling, sequential pps-DUST with the
//! multiplicative spatial penalty, and random partition into sets.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::ArealFrame;

/// Lags beyond this are treated as unreachable (penalty factor 1).
pub const DEFAULT_MAX_LAG: u32 = 10;

/// Which unit field supplies the size measure `M_i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SizeField {
    /// The frame's `size` column.
    #[default]
    Size,
    /// The number of individuals `N_i`.
    Individuals,
    /// All units weighted equally.
    Equal,
}

impl SizeField {
    pub fn measure(self, frame: &ArealFrame, i: usize) -> f64 {
        let u = frame.unit(i);
        match self {
            SizeField::Size => u.size,
            SizeField::Individuals => u.n_individuals as f64,
            SizeField::Equal => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DustParams {
    /// First-lag spatial autocorrelation, in `[0, 1)`.
    pub eta0: f64,
    pub size_field: SizeField,
    /// Lag cap; `None` means no truncation.
    pub max_lag: Option<u32>,
}

impl DustParams {
    pub fn new(eta0: f64) -> Result<Self> {
        let p = Self {
            eta0,
            size_field: SizeField::Size,
            max_lag: Some(DEFAULT_MAX_LAG),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_size_field(mut self, size_field: SizeField) -> Self {
        self.size_field = size_field;
        self
    }

    pub fn with_max_lag(mut self, max_lag: Option<u32>) -> Self {
        self.max_lag = max_lag;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.eta0) {
            return Err(Error::domain(format!(
                "eta0 = {} is outside [0, 1)",
                self.eta0
            )));
        }
        if self.max_lag == Some(0) {
            return Err(Error::domain("max_lag must be at least 1"));
        }
        Ok(())
    }

    /// Multiplicative penalty `1 - eta0^lag`; unreachable or truncated lags give 1.
    pub fn penalty(&self, lag: Option<u32>) -> f64 {
        match lag {
            Some(l) if self.max_lag.is_none_or(|cap| l <= cap) && self.eta0 > 0.0 => {
                1.0 - self.eta0.powi(l as i32)
            }
            _ => 1.0,
        }
    }
}

/// Selected units (frame indices) in selection order, grouped into sets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SampleDraw {
    pub order: Vec<usize>,
    /// `n` disjoint blocks of size `k`; singletons for non-MNS designs.
    pub sets: Vec<Vec<usize>>,
    /// Seed of the generator that produced the draw, when known.
    pub seed: Option<u64>,
}

impl SampleDraw {
    fn singletons(order: Vec<usize>) -> Self {
        let sets = order.iter().map(|&i| vec![i]).collect();
        Self {
            order,
            sets,
            seed: None,
        }
    }

    pub fn ids<'a>(&self, frame: &'a ArealFrame) -> Vec<&'a str> {
        self.order
            .iter()
            .map(|&i| frame.unit(i).id.as_str())
            .collect()
    }
}

fn check_sample_size(frame: &ArealFrame, n: usize) -> Result<()> {
    if n == 0 || n > frame.len() {
        return Err(Error::argument(format!(
            "sample size {n} must be in 1..={}",
            frame.len()
        )));
    }
    Ok(())
}

/// Simple random sample of `n` units without replacement, in random order.
pub fn srs_draw<R: Rng + ?Sized>(frame: &ArealFrame, n: usize, rng: &mut R) -> Result<SampleDraw> {
    check_sample_size(frame, n)?;
    let mut idx: Vec<usize> = (0..frame.len()).collect();
    let (chosen, _) = idx.partial_shuffle(rng, n);
    Ok(SampleDraw::singletons(chosen.to_vec()))
}

/// DUST weights `M_i * prod_{r in selected} (1 - eta0^{l_ir})`, indexed by
/// unit. Selected units get weight 0.
pub fn dust_weights(frame: &ArealFrame, selected: &[usize], params: &DustParams) -> Vec<f64> {
    let mut w: Vec<f64> = (0..frame.len())
        .map(|i| params.size_field.measure(frame, i))
        .collect();
    for &r in selected {
        w[r] = 0.0;
    }
    if params.eta0 > 0.0 {
        for &r in selected {
            for (i, lag) in frame.lags_from(r, params.max_lag).into_iter().enumerate() {
                if lag.is_some_and(|l| l > 0) {
                    w[i] *= params.penalty(lag);
                }
            }
        }
    }
    w
}

/// Incremental sequential pps-DUST selection.
///
/// After each selection only units within `max_lag` of the new unit have
/// their weight updated, so one step costs one truncated breadth-first search
/// plus one pass over the weight vector.
#[derive(Debug, Clone)]
pub struct DustSampler<'a> {
    frame: &'a ArealFrame,
    params: DustParams,
    weights: Vec<f64>,
    order: Vec<usize>,
}

impl<'a> DustSampler<'a> {
    pub fn new(frame: &'a ArealFrame, params: DustParams) -> Result<Self> {
        params.validate()?;
        let weights = (0..frame.len())
            .map(|i| params.size_field.measure(frame, i))
            .collect();
        Ok(Self {
            frame,
            params,
            weights,
            order: Vec::new(),
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn selected(&self) -> &[usize] {
        &self.order
    }

    /// Conditional selection probabilities of the next draw.
    pub fn probabilities(&self) -> Result<Vec<f64>> {
        let total = self.total()?;
        Ok(self.weights.iter().map(|w| w / total).collect())
    }

    fn total(&self) -> Result<f64> {
        let total: f64 = self.weights.iter().sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::degenerate(format!(
                "all remaining DUST weights are zero after {} draws",
                self.order.len()
            )));
        }
        Ok(total)
    }

    /// Selects the next unit by cumulative-sum inversion.
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<usize> {
        let total = self.total()?;
        let target = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut chosen = None;
        for (i, &w) in self.weights.iter().enumerate() {
            if w > 0.0 {
                acc += w;
                chosen = Some(i);
                if acc > target {
                    break;
                }
            }
        }
        let chosen = chosen.expect("positive total implies a positive weight");
        self.weights[chosen] = 0.0;
        self.order.push(chosen);
        if self.params.eta0 > 0.0 {
            let params = self.params;
            let weights = &mut self.weights;
            self.frame.visit_within(chosen, params.max_lag, |j, l| {
                if l > 0 {
                    weights[j] *= params.penalty(Some(l));
                }
            });
        }
        Ok(chosen)
    }

    pub fn into_order(self) -> Vec<usize> {
        self.order
    }
}

/// Sequential pps-DUST draw of `n_total` distinct units.
pub fn dust_draw<R: Rng + ?Sized>(
    frame: &ArealFrame,
    n_total: usize,
    params: &DustParams,
    rng: &mut R,
) -> Result<SampleDraw> {
    check_sample_size(frame, n_total)?;
    let mut sampler = DustSampler::new(frame, *params)?;
    for _ in 0..n_total {
        sampler.step(rng)?;
    }
    Ok(SampleDraw::singletons(sampler.into_order()))
}

/// Uniformly random partition of `order` into `n` blocks of size `k`
/// (seeded shuffle, then consecutive blocking).
pub fn partition_sets<R: Rng + ?Sized>(
    order: &[usize],
    n: usize,
    k: usize,
    rng: &mut R,
) -> Result<Vec<Vec<usize>>> {
    if n == 0 || k == 0 || order.len() != n * k {
        return Err(Error::argument(format!(
            "cannot partition {} units into {n} sets of size {k}",
            order.len()
        )));
    }
    let mut shuffled = order.to_vec();
    shuffled.shuffle(rng);
    Ok(shuffled.chunks(k).map(<[usize]>::to_vec).collect())
}

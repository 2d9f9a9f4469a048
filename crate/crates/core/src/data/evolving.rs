//! Streams whose labelling rule drifts over time.
//!
//! Two labellers exist: the first keeps a sample's class, the second shifts it
//! by one (modulo the class count). At step `t` each sample is labelled by the
//! first labeller with probability `f_t`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::idx::LabeledImageSet;
use crate::error::{param_err, Result};
use crate::math::{Matrix, RandomSource};
use crate::net::{TimeStepData, Targets};

/// Number of steps the `f_t` schedule is defined for.
pub const SCHEDULE_STEPS: usize = 19;

/// `f_t = ½ sin(π/8 (4t/5 + 16/5)) + ½`, for `t` in `1..=19`.
pub fn evolving_label_prob(t: usize) -> Result<f64> {
    if !(1..=SCHEDULE_STEPS).contains(&t) {
        return param_err(format!("schedule is defined for t in 1..=19, got {t}"));
    }
    let t = t as f64;
    Ok(0.5 * (PI / 8.0 * (4.0 * t / 5.0 + 16.0 / 5.0)).sin() + 0.5)
}

pub fn schedule(steps: usize) -> Result<Vec<f64>> {
    (1..=steps).map(evolving_label_prob).collect()
}

/// Reproducibility record for a generated stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamManifest {
    pub seed: u64,
    #[serde(rename = "T")]
    pub steps: usize,
    pub per_step_n: usize,
    pub schedule: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvolvingStream {
    pub steps: Vec<TimeStepData>,
    pub schedule: Vec<f64>,
    /// Per step and sample: whether the identity labeller was used.
    pub identity_labelled: Vec<Vec<bool>>,
    pub seed: u64,
}

impl EvolvingStream {
    pub fn manifest(&self) -> StreamManifest {
        StreamManifest {
            seed: self.seed,
            steps: self.steps.len(),
            per_step_n: self.steps.first().map_or(0, TimeStepData::len),
            schedule: self.schedule.clone(),
        }
    }

    /// Labels of every step, for scoring.
    pub fn labels(&self) -> Vec<Vec<usize>> {
        self.steps
            .iter()
            .map(|s| match &s.targets {
                Targets::Classes(c) => c.clone(),
                Targets::Values(_) => Vec::new(),
            })
            .collect()
    }
}

/// Indices of `n` draws from a population of `size`: a random subset when it
/// fits, otherwise draws with replacement.
fn sample_indices(size: usize, n: usize, rs: &mut RandomSource) -> Vec<usize> {
    if n <= size {
        let mut all: Vec<usize> = (0..size).collect();
        for i in 0..n {
            let j = i + rs.index(size - i);
            all.swap(i, j);
        }
        all.truncate(n);
        all
    } else {
        (0..n).map(|_| rs.index(size)).collect()
    }
}

fn relabel(
    classes: &[usize],
    n_classes: usize,
    f: f64,
    rs: &mut RandomSource,
) -> (Vec<usize>, Vec<bool>) {
    classes
        .iter()
        .map(|&c| {
            let identity = rs.uniform() < f;
            (if identity { c } else { (c + 1) % n_classes }, identity)
        })
        .unzip()
}

/// Builds the drifting stream from `base` using the standard schedule.
pub fn build_evolving_stream(base: &LabeledImageSet, steps: usize, per_step_n: usize, seed: u64) -> Result<EvolvingStream> {
    build_evolving_stream_with_schedule(base, &schedule(steps)?, per_step_n, seed)
}

pub fn build_evolving_stream_with_schedule(
    base: &LabeledImageSet,
    schedule: &[f64],
    per_step_n: usize,
    seed: u64,
) -> Result<EvolvingStream> {
    if base.is_empty() {
        return param_err("base image set is empty");
    }
    if per_step_n == 0 {
        return param_err("per_step_n must be positive");
    }
    if let Some(f) = schedule.iter().find(|f| !(0.0..=1.0).contains(*f)) {
        return param_err(format!("labeller probability {f} outside [0, 1]"));
    }
    let root = RandomSource::new(seed);
    let mut steps = Vec::with_capacity(schedule.len());
    let mut identity = Vec::with_capacity(schedule.len());
    for (k, &f) in schedule.iter().enumerate() {
        let mut rs = root.child(k as u64 + 1);
        let idx = sample_indices(base.len(), per_step_n, &mut rs);
        let subset = base.subset(&idx)?;
        let (labels, mask) = relabel(&subset.labels, base.n_classes, f, &mut rs);
        steps.push(TimeStepData::new(subset.images, Targets::Classes(labels))?);
        identity.push(mask);
    }
    Ok(EvolvingStream {
        steps,
        schedule: schedule.to_vec(),
        identity_labelled: identity,
        seed,
    })
}

/// Half-distance between the two cluster centres along the first axis.
pub const DRIFT_CENTRE: f64 = 3.0;
/// Per-axis standard deviation of each cluster.
pub const DRIFT_SPREAD: f64 = 0.75;
/// Samples closer than this to the separating hyperplane `x_0 = 0` are redrawn.
pub const DRIFT_MARGIN: f64 = 0.5;

/// Two 2-D Gaussian clusters at `(±3, 0)`, truncated so that `x_0 = 0`
/// separates them with margin [`DRIFT_MARGIN`]. Cluster index is the base
/// class; the labelling drifts per the standard schedule.
pub fn synthetic_drift_stream(steps: usize, n_per_step: usize, seed: u64) -> Result<EvolvingStream> {
    synthetic_drift_stream_with_schedule(&schedule(steps)?, n_per_step, seed)
}

pub fn synthetic_drift_stream_with_schedule(schedule: &[f64], n_per_step: usize, seed: u64) -> Result<EvolvingStream> {
    if n_per_step == 0 {
        return param_err("n_per_step must be positive");
    }
    let root = RandomSource::new(seed);
    let mut steps = Vec::with_capacity(schedule.len());
    let mut identity = Vec::with_capacity(schedule.len());
    for (k, &f) in schedule.iter().enumerate() {
        if !(0.0..=1.0).contains(&f) {
            return param_err(format!("labeller probability {f} outside [0, 1]"));
        }
        let mut rs = root.child(k as u64 + 1);
        let mut xs = Vec::with_capacity(2 * n_per_step);
        let mut classes = Vec::with_capacity(n_per_step);
        for _ in 0..n_per_step {
            let class = usize::from(rs.uniform() < 0.5);
            let sign = if class == 1 { 1.0 } else { -1.0 };
            let x0 = loop {
                let x = sign * DRIFT_CENTRE + DRIFT_SPREAD * rs.standard_normal();
                if sign * x >= DRIFT_MARGIN {
                    break x;
                }
            };
            xs.push(x0);
            xs.push(DRIFT_SPREAD * rs.standard_normal());
            classes.push(class);
        }
        let (labels, mask) = relabel(&classes, 2, f, &mut rs);
        steps.push(TimeStepData::new(Matrix::new(n_per_step, 2, xs)?, Targets::Classes(labels))?);
        identity.push(mask);
    }
    Ok(EvolvingStream {
        steps,
        schedule: schedule.to_vec(),
        identity_labelled: identity,
        seed,
    })
}

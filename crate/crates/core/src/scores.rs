//! Splitting a detector's logit into a real score (negative-weight features),
//! a fake score (non-negative-weight features) and the bias.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::nnet::{MlpParams, Scalar};
use crate::synthgen::ImageSample;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreDecomposition {
    pub real_score: f64,
    pub fake_score: f64,
    pub bias: f64,
    pub logit: f64,
    pub i_real: Vec<usize>,
    pub i_fake: Vec<usize>,
}

/// `({i : w_i < 0}, {i : w_i ≥ 0})`, both ascending.
pub fn index_sets(w: &[f64]) -> (Vec<usize>, Vec<usize>) {
    (0..w.len()).partition(|&i| w[i] < 0.0)
}

pub fn decompose(w: &[f64], b: f64, h: &[f64]) -> Result<ScoreDecomposition> {
    if w.len() != h.len() {
        return Err(Error::DimensionMismatch {
            expected: w.len(),
            got: h.len(),
        });
    }
    if let Some(i) = h.iter().position(|&v| !(v >= 0.0)) {
        return Err(Error::ContractViolation(format!(
            "feature {i} is {} but features must be non-negative",
            h[i]
        )));
    }
    let (i_real, i_fake) = index_sets(w);
    let real_score = i_real.iter().fold(0.0, |acc, &i| acc + w[i] * h[i]);
    let fake_score = i_fake.iter().fold(0.0, |acc, &i| acc + w[i] * h[i]);
    Ok(ScoreDecomposition {
        real_score,
        fake_score,
        bias: b,
        logit: fake_score + real_score + b,
        i_real,
        i_fake,
    })
}

/// Decomposition of the detector's logit on one input.
pub fn decompose_input<T: Scalar>(params: &MlpParams<T>, pixels: &[f64]) -> Result<ScoreDecomposition> {
    let h: Vec<f64> = params.features(pixels)?.into_iter().map(Scalar::widen).collect();
    let w: Vec<f64> = params.head_w.iter().map(|v| v.widen()).collect();
    decompose(&w, params.head_b.widen(), &h)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
    /// Counts over 32 equal-width bins spanning `[min, max]`.
    pub histogram: Vec<usize>,
}

pub const HISTOGRAM_BINS: usize = 32;

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut histogram = vec![0; HISTOGRAM_BINS];
        let width = (max - min) / HISTOGRAM_BINS as f64;
        for &v in values {
            let bin = if width > 0.0 {
                (((v - min) / width) as usize).min(HISTOGRAM_BINS - 1)
            } else {
                0
            };
            histogram[bin] += 1;
        }
        Self {
            mean,
            std: var.sqrt(),
            min,
            max,
            histogram,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupStats {
    pub group: String,
    pub count: usize,
    pub real_score: Summary,
    pub fake_score: Summary,
    pub logit: Summary,
}

pub struct GroupSpec<'a> {
    pub name: String,
    pub predicate: Box<dyn Fn(&ImageSample) -> bool + 'a>,
}

impl<'a> GroupSpec<'a> {
    pub fn new(name: impl Into<String>, predicate: impl Fn(&ImageSample) -> bool + 'a) -> Self {
        Self {
            name: name.into(),
            predicate: Box::new(predicate),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupReport {
    pub groups: Vec<GroupStats>,
    /// One entry per requested group that matched no sample.
    pub warnings: Vec<String>,
}

pub fn group_stats<T: Scalar>(
    params: &MlpParams<T>,
    samples: &[ImageSample],
    groups: &[GroupSpec<'_>],
) -> Result<GroupReport> {
    let decomps = samples
        .iter()
        .map(|s| decompose_input(params, &s.pixels))
        .collect::<Result<Vec<_>>>()?;
    let mut report = GroupReport {
        groups: Vec::new(),
        warnings: Vec::new(),
    };
    for g in groups {
        let members: Vec<&ScoreDecomposition> = samples
            .iter()
            .zip(&decomps)
            .filter(|(s, _)| (g.predicate)(s))
            .map(|(_, d)| d)
            .collect();
        if members.is_empty() {
            log::warn!("group {} is empty; omitted", g.name);
            report.warnings.push(format!("group {} is empty", g.name));
            continue;
        }
        let col = |f: fn(&ScoreDecomposition) -> f64| members.iter().map(|d| f(d)).collect::<Vec<_>>();
        report.groups.push(GroupStats {
            group: g.name.clone(),
            count: members.len(),
            real_score: Summary::of(&col(|d| d.real_score)),
            fake_score: Summary::of(&col(|d| d.fake_score)),
            logit: Summary::of(&col(|d| d.logit)),
        });
    }
    Ok(report)
}

/// CSV with columns `sample_id,label,tags,real_score,fake_score,bias,logit`.
pub fn write_decomposition_csv<T: Scalar, W: Write>(
    params: &MlpParams<T>,
    samples: &[ImageSample],
    out: W,
) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(["sample_id", "label", "tags", "real_score", "fake_score", "bias", "logit"])?;
    for (i, s) in samples.iter().enumerate() {
        let d = decompose_input(params, &s.pixels)?;
        wtr.write_record([
            i.to_string(),
            (s.label as u8).to_string(),
            s.tags_string(),
            d.real_score.to_string(),
            d.fake_score.to_string(),
            d.bias.to_string(),
            d.logit.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

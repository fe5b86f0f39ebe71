use crate::error::{invalid, Result};
use crate::synthgen::Label;

/// Non-interpolated average precision: rank by score descending (ties keep
/// input order) and average the precision at every positive.
pub fn average_precision(scores: &[f64], labels: &[Label]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(invalid(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    let positives = labels.iter().filter(|&&l| l == Label::Fake).count();
    if positives == 0 || positives == labels.len() {
        return Err(invalid("average precision needs both classes"));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(invalid("NaN score"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank, &i) in order.iter().enumerate() {
        if labels[i] == Label::Fake {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    Ok(sum / positives as f64)
}

/// Fraction correct with "fake" predicted when `score >= threshold`.
pub fn accuracy(scores: &[f64], labels: &[Label], threshold: f64) -> Result<f64> {
    if scores.is_empty() || scores.len() != labels.len() {
        return Err(invalid("accuracy needs equal, non-empty score and label lists"));
    }
    let hits = scores
        .iter()
        .zip(labels)
        .filter(|(&s, &l)| (s >= threshold) == (l == Label::Fake))
        .count();
    Ok(hits as f64 / scores.len() as f64)
}

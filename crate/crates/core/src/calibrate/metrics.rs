use crate::error::{Error, Result};
use alloc::vec::Vec;

/// Rank-based AUROC (Mann–Whitney U with mid-ranks, so ties count one half).
pub fn auroc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::LengthMismatch { left: scores.len(), right: labels.len() });
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::param("scores", "NaN score"));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| scores[i].total_cmp(&scores[j]));

    // Ranks are doubled to stay integral.
    let mut rank_sum2: u64 = 0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        let pos_in_group = order[start..end].iter().filter(|&&i| labels[i]).count() as u64;
        // Mid-rank of positions start+1..=end, times two.
        rank_sum2 += pos_in_group * (start as u64 + 1 + end as u64);
        start = end;
    }
    let n_pos = n_pos as u64;
    let u2 = rank_sum2 - n_pos * (n_pos + 1);
    Ok(u2 as f64 / 2.0 / (n_pos * n_neg as u64) as f64)
}

/// `|mean(predictions) - mean(labels)|`.
pub fn absolute_bias(predictions: &[f64], labels: &[bool]) -> Result<f64> {
    if predictions.len() != labels.len() {
        return Err(Error::LengthMismatch { left: predictions.len(), right: labels.len() });
    }
    if predictions.is_empty() {
        return Err(Error::EmptyInput("absolute_bias"));
    }
    let n = predictions.len() as f64;
    let p = predictions.iter().sum::<f64>() / n;
    let y = labels.iter().filter(|&&l| l).count() as f64 / n;
    Ok((p - y).abs())
}

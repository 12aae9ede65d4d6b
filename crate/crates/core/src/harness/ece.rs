use crate::error::{Error, Result};

pub const DEFAULT_BINS: usize = 10;

/// Expected calibration error over `bins` equal-width confidence bins.
///
/// Bin `b` holds confidences in `[b/bins, (b+1)/bins)`, with 1.0 in the last
/// bin. Empty bins contribute nothing.
pub fn compute_ece(confidences: &[f64], correct: &[bool], bins: usize) -> Result<f64> {
    if confidences.is_empty() {
        return Err(Error::Eval("ECE of an empty sample".into()));
    }
    if confidences.len() != correct.len() {
        return Err(Error::shape(confidences.len(), correct.len()));
    }
    if bins == 0 {
        return Err(Error::Parameter("ECE needs at least one bin".into()));
    }
    if let Some(c) = confidences.iter().find(|c| !(0.0..=1.0).contains(*c)) {
        return Err(Error::InvalidInput(format!("confidence {c} outside [0, 1]")));
    }
    let mut count = vec![0usize; bins];
    let mut conf_sum = vec![0.0; bins];
    let mut hits = vec![0usize; bins];
    for (&c, &ok) in confidences.iter().zip(correct) {
        let b = ((c * bins as f64) as usize).min(bins - 1);
        count[b] += 1;
        conf_sum[b] += c;
        hits[b] += usize::from(ok);
    }
    let n = confidences.len() as f64;
    Ok((0..bins)
        .filter(|&b| count[b] > 0)
        .map(|b| {
            let m = count[b] as f64;
            (m / n) * (hits[b] as f64 / m - conf_sum[b] / m).abs()
        })
        .sum())
}

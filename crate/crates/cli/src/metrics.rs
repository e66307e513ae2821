//! Trimmed relative mean squared error between a rendering and a reference.

#[derive(Debug, thiserror::Error)]
pub enum MetricError {
    #[error("image has {0} pixels but reference has {1}")]
    DimensionMismatch(usize, usize),
}

/// Denominator stabilizer; declared in every metrics report.
pub const EPS_M: f64 = 1e-4;

/// Per-pixel error mean_c(I-R)^2 / (mean_c(R)^2 + 1e-4), with the
/// ceil(trim * pixels) largest errors dropped before averaging. `trim` of
/// 0.001 removes the worst 0.1% (fireflies the reference missed).
pub fn relmse(image: &[[f32; 3]], reference: &[[f32; 3]], trim: f64) -> Result<f64, MetricError> {
    if image.len() != reference.len() {
        return Err(MetricError::DimensionMismatch(image.len(), reference.len()));
    }
    let mut errs: Vec<f64> = image
        .iter()
        .zip(reference)
        .map(|(i, r)| {
            let mut sq = 0.0f64;
            let mut rm = 0.0f64;
            for c in 0..3 {
                let d = i[c] as f64 - r[c] as f64;
                sq += d * d;
                rm += r[c] as f64;
            }
            rm /= 3.0;
            (sq / 3.0) / (rm * rm + EPS_M)
        })
        .collect();
    let drop = ((trim * errs.len() as f64).ceil() as usize).min(errs.len());
    errs.sort_by(|a, b| b.total_cmp(a));
    let kept = &errs[drop..];
    if kept.is_empty() {
        return Ok(0.0);
    }
    Ok(kept.iter().sum::<f64>() / kept.len() as f64)
}

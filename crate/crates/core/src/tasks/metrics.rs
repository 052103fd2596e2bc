use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::nn::relative_l2_element;

pub const LATITUDE_BANDS: usize = 18;
/// Stabilizer of the per-band relative error `|p - r| / (r + 0.01)`.
pub const BAND_EPS: f64 = 0.01;

/// Bytes for `encoding_params + mlp_params` single-precision values.
pub fn memory_footprint(encoding_params: usize, mlp_params: usize) -> u64 {
    4 * (encoding_params as u64 + mlp_params as u64)
}

/// Sample-weighted errors of `pred` against `target`, both laid out as
/// `weights.len()` samples of `channels` values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorMetrics {
    /// Weighted mean of the relative-L2 loss elements.
    pub relative_l2: f64,
    /// PSNR of `log(1 + x)` values; the peak is the largest tonemapped target.
    pub psnr: f64,
}

pub fn error_metrics(pred: &[f64], target: &[f64], weights: &[f64], channels: usize) -> Result<ErrorMetrics> {
    if pred.len() != target.len() || pred.len() != weights.len() * channels || channels == 0 {
        return Err(Error::Shape("metric inputs disagree in length".into()));
    }
    let mut wsum = 0.0;
    let mut rel = 0.0;
    let mut mse = 0.0;
    let mut peak: f64 = 0.0;
    for (s, &w) in weights.iter().enumerate() {
        for c in 0..channels {
            let i = s * channels + c;
            let (p, t) = (pred[i], target[i]);
            rel += w * relative_l2_element(p, t).0;
            let r = p.max(0.0).ln_1p() - t.max(0.0).ln_1p();
            mse += w * r * r;
            peak = peak.max(t.max(0.0).ln_1p());
        }
        wsum += w * channels as f64;
    }
    if wsum <= 0.0 {
        return Err(Error::Shape("metric weights sum to zero".into()));
    }
    let mse = mse / wsum;
    let psnr = if mse == 0.0 { f64::INFINITY } else { 10.0 * (peak * peak / mse).log10() };
    Ok(ErrorMetrics { relative_l2: rel / wsum, psnr })
}

/// 10-degree band of a colatitude in `[0, pi]`.
pub fn latitude_band(colatitude: f64) -> usize {
    ((colatitude / PI * LATITUDE_BANDS as f64) as usize).min(LATITUDE_BANDS - 1)
}

/// Accumulates per-band weighted mean relative errors.
#[derive(Debug, Clone, PartialEq)]
pub struct BandAccumulator {
    sums: [f64; LATITUDE_BANDS],
    weights: [f64; LATITUDE_BANDS],
}

impl Default for BandAccumulator {
    fn default() -> Self {
        Self { sums: [0.0; LATITUDE_BANDS], weights: [0.0; LATITUDE_BANDS] }
    }
}

impl BandAccumulator {
    /// Adds one sample: the channel-mean of `|p - r| / (r + 0.01)`.
    pub fn add(&mut self, colatitude: f64, weight: f64, pred: &[f64], reference: &[f64]) {
        let e = pred
            .iter()
            .zip(reference)
            .map(|(p, r)| (p - r).abs() / (r + BAND_EPS))
            .sum::<f64>()
            / pred.len() as f64;
        let b = latitude_band(colatitude);
        self.sums[b] += weight * e;
        self.weights[b] += weight;
    }

    /// Band means, north pole first. Empty bands report 0.
    pub fn profile(&self) -> Vec<f64> {
        self.sums
            .iter()
            .zip(&self.weights)
            .map(|(s, w)| if *w > 0.0 { s / w } else { 0.0 })
            .collect()
    }
}

/// Worse of the two polar bands over the median of the six bands within 30
/// degrees of the equator.
pub fn polar_ratio(profile: &[f64]) -> f64 {
    assert_eq!(profile.len(), LATITUDE_BANDS);
    let polar = profile[0].max(profile[LATITUDE_BANDS - 1]);
    let mut mid: Vec<f64> = profile[6..12].to_vec();
    mid.sort_by(f64::total_cmp);
    let median = 0.5 * (mid[2] + mid[3]);
    polar / median
}

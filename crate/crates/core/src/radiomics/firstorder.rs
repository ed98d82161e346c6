use super::DiscretizationSpec;
use crate::error::{Error, Result};
use crate::stats::percentile_sorted;
use crate::volume::{Mask, Volume};

pub const FIRSTORDER_FEATURES: [&str; 19] = [
    "energy",
    "total_energy",
    "entropy",
    "minimum",
    "p10",
    "p90",
    "maximum",
    "mean",
    "median",
    "interquartile_range",
    "range",
    "mean_absolute_deviation",
    "robust_mad",
    "rms",
    "standard_deviation",
    "skewness",
    "kurtosis",
    "variance",
    "uniformity",
];

/// First-order statistics of the image inside `mask`.
pub fn firstorder_features(
    image: &Volume,
    mask: &Mask,
    disc: &DiscretizationSpec,
) -> Result<Vec<(&'static str, f64)>> {
    image.geometry().ensure_aligned(mask.geometry(), "image vs mask")?;
    let values: Vec<f64> = mask
        .data()
        .iter()
        .enumerate()
        .filter(|(_, &m)| m)
        .map(|(i, _)| image.get(i))
        .collect();
    firstorder_from_values(&values, image.geometry().voxel_volume(), disc)
}

/// Same as [`firstorder_features`] over an explicit sample of intensities.
///
/// Zero variance yields skewness and kurtosis of 0.
pub fn firstorder_from_values(
    values: &[f64],
    voxel_volume: f64,
    disc: &DiscretizationSpec,
) -> Result<Vec<(&'static str, f64)>> {
    if values.is_empty() {
        return Err(Error::EmptyMask);
    }
    if !(disc.bin_width > 0.0) {
        return Err(Error::invalid("bin width must be positive"));
    }
    let n = values.len() as f64;
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let min = sorted[0];
    let max = sorted[sorted.len() - 1];

    let energy: f64 = values.iter().map(|v| v * v).sum();
    let mean = values.iter().sum::<f64>() / n;
    let (mut m2, mut m3, mut m4, mut mad) = (0.0, 0.0, 0.0, 0.0);
    for v in values {
        let d = v - mean;
        m2 += d * d;
        m3 += d * d * d;
        m4 += d * d * d * d;
        mad += d.abs();
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    mad /= n;
    let (skewness, kurtosis) = if m2 == 0.0 {
        (0.0, 0.0)
    } else {
        (m3 / m2.powf(1.5), m4 / (m2 * m2))
    };

    let p10 = percentile_sorted(&sorted, 10.0);
    let p25 = percentile_sorted(&sorted, 25.0);
    let median = percentile_sorted(&sorted, 50.0);
    let p75 = percentile_sorted(&sorted, 75.0);
    let p90 = percentile_sorted(&sorted, 90.0);

    let robust: Vec<f64> = values.iter().copied().filter(|&v| v >= p10 && v <= p90).collect();
    let rn = robust.len() as f64;
    let rmean = robust.iter().sum::<f64>() / rn;
    let robust_mad = robust.iter().map(|v| (v - rmean).abs()).sum::<f64>() / rn;

    // sorted values give non-decreasing bin indices, so bins are runs
    let (mut entropy, mut uniformity) = (0.0, 0.0);
    let mut start = 0;
    while start < sorted.len() {
        let bin = ((sorted[start] - min) / disc.bin_width).floor();
        let mut end = start + 1;
        while end < sorted.len() && ((sorted[end] - min) / disc.bin_width).floor() == bin {
            end += 1;
        }
        let p = (end - start) as f64 / n;
        entropy -= p * p.log2();
        uniformity += p * p;
        start = end;
    }

    Ok(vec![
        ("energy", energy),
        ("total_energy", energy * voxel_volume),
        ("entropy", entropy),
        ("minimum", min),
        ("p10", p10),
        ("p90", p90),
        ("maximum", max),
        ("mean", mean),
        ("median", median),
        ("interquartile_range", p75 - p25),
        ("range", max - min),
        ("mean_absolute_deviation", mad),
        ("robust_mad", robust_mad),
        ("rms", (energy / n).sqrt()),
        ("standard_deviation", m2.sqrt()),
        ("skewness", skewness),
        ("kurtosis", kurtosis),
        ("variance", m2),
        ("uniformity", uniformity),
    ])
}

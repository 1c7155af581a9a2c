//! Correlation, trimming, density estimation and the random-angle experiment.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corruption::{RobustnessRecord, VariantKey};
use crate::error::{Error, Result};
use crate::geometry::GeometrySnapshot;

/// Pairs with `|m_original|` at or below this are skipped.
pub const MARGIN_EPS: f64 = 1e-9;
/// Fraction removed from each tail before comparing margin shifts.
pub const TRIM_FRACTION: f64 = 0.005;

/// Pearson product-moment correlation.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Dimension(format!("{} vs {} values", x.len(), y.len())));
    }
    if x.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "need at least 3 pairs, got {}",
            x.len()
        )));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation("a series is constant".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// 1-based ranks with ties sharing their average rank.
pub fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation (Pearson on average ranks).
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    pearson(&average_ranks(x), &average_ranks(y))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub rc_angle: f64,
    pub rc_l2: f64,
    pub rc_margin: f64,
    pub n: usize,
}

/// Correlates per-sample robustness with angle-to-true-class, feature length
/// and signed margin from a clean snapshot. Degenerate samples are skipped.
pub fn metric_robustness_correlations(
    snapshot: &GeometrySnapshot,
    records: &[RobustnessRecord],
) -> Result<CorrelationReport> {
    let by_id: HashMap<u64, &RobustnessRecord> =
        records.iter().map(|r| (r.sample_id, r)).collect();
    let (mut angle, mut length, mut margin, mut robust) = (vec![], vec![], vec![], vec![]);
    for s in snapshot.samples.iter().filter(|s| !s.degenerate) {
        if let Some(r) = by_id.get(&s.sample_id) {
            angle.push(s.angle_to_true());
            length.push(s.length);
            margin.push(s.margin);
            robust.push(r.correct_count as f64);
        }
    }
    if robust.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "{} aligned non-degenerate samples",
            robust.len()
        )));
    }
    Ok(CorrelationReport {
        rc_angle: pearson(&angle, &robust)?,
        rc_l2: pearson(&length, &robust)?,
        rc_margin: pearson(&margin, &robust)?,
        n: robust.len(),
    })
}

/// Drops the lowest and highest `⌊fraction · n⌋` values. Ties are ordered by
/// key, so the surviving multiset does not depend on input order.
pub fn trim_extremes<K: Ord + Clone>(items: &[(K, f64)], fraction: f64) -> Vec<(K, f64)> {
    let mut sorted: Vec<(K, f64)> = items.to_vec();
    sorted.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
    let cut = ((sorted.len() as f64 * fraction) + 1e-9).floor() as usize;
    if 2 * cut >= sorted.len() {
        return Vec::new();
    }
    sorted[cut..sorted.len() - cut].to_vec()
}

/// `(m_original − m_corrupted) / m_original`.
pub fn relative_change(original: f64, corrupted: f64) -> f64 {
    (original - corrupted) / original
}

/// Identifies one corrupted variant of one sample.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PairKey {
    pub sample_id: u64,
    pub corruption: String,
    pub severity: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelativeMarginChange {
    /// Pairs found in both the reference and a corrupted snapshot.
    pub total_pairs: usize,
    /// Pairs skipped because the original margin was ~0.
    pub excluded: usize,
    /// Trimmed relative changes, ascending.
    pub values: Vec<f64>,
    pub median: f64,
    pub mean: f64,
    pub density: DensityCurve,
}

/// Relative signed-margin change of every (sample, corruption, severity)
/// pair, with the lowest and highest 0.5% removed.
pub fn relative_margin_change(
    reference: &GeometrySnapshot,
    corrupted: &[(VariantKey, &GeometrySnapshot)],
) -> Result<RelativeMarginChange> {
    let mut pairs = Vec::new();
    let mut total = 0;
    let mut excluded = 0;
    for (key, snap) in corrupted {
        for s in &snap.samples {
            let Some(orig) = reference.get(s.sample_id) else {
                continue;
            };
            total += 1;
            if orig.margin.abs() <= MARGIN_EPS {
                excluded += 1;
                continue;
            }
            pairs.push((
                PairKey {
                    sample_id: s.sample_id,
                    corruption: key.corruption.clone(),
                    severity: key.severity,
                },
                relative_change(orig.margin, s.margin),
            ));
        }
    }
    if pairs.is_empty() {
        return Err(Error::InsufficientData("no valid margin pairs".into()));
    }
    let values: Vec<f64> = trim_extremes(&pairs, TRIM_FRACTION)
        .into_iter()
        .map(|(_, v)| v)
        .collect();
    if values.is_empty() {
        return Err(Error::InsufficientData("nothing left after trimming".into()));
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let density = density("relative_margin_change", &values, None)?;
    Ok(RelativeMarginChange {
        total_pairs: total,
        excluded,
        median: median_sorted(&values),
        mean,
        values,
        density,
    })
}

fn median_sorted(v: &[f64]) -> f64 {
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Some(median_sorted(&v))
}

/// Linear-interpolated quantile of sorted data.
fn quantile_sorted(v: &[f64], q: f64) -> f64 {
    let pos = q * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

pub const MIN_BINS: usize = 10;
pub const MAX_BINS: usize = 512;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityCurve {
    pub metric: String,
    /// `bins + 1` ascending edges.
    pub edges: Vec<f64>,
    pub centers: Vec<f64>,
    /// Normalized so that `Σ height · width = 1`.
    pub heights: Vec<f64>,
    pub counts: Vec<usize>,
}

impl DensityCurve {
    pub fn area(&self) -> f64 {
        self.heights
            .iter()
            .zip(self.edges.windows(2))
            .map(|(h, e)| h * (e[1] - e[0]))
            .sum()
    }
}

/// Histogram density. With `bins = None` the bin count follows the
/// Freedman–Diaconis rule, floored at 10 and capped at 512. Non-finite
/// values are ignored.
pub fn density(metric: &str, values: &[f64], bins: Option<usize>) -> Result<DensityCurve> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return Err(Error::InsufficientData("density of an empty series".into()));
    }
    v.sort_by(f64::total_cmp);
    let (lo, hi) = (v[0], v[v.len() - 1]);
    let range = hi - lo;
    let nbins = match bins {
        Some(b) if b > 0 => b,
        Some(_) => return Err(Error::InvalidArgument("bin count must be positive".into())),
        None => {
            let iqr = quantile_sorted(&v, 0.75) - quantile_sorted(&v, 0.25);
            let width = 2.0 * iqr * (v.len() as f64).powf(-1.0 / 3.0);
            if width > 0.0 && range > 0.0 {
                ((range / width).ceil() as usize).clamp(MIN_BINS, MAX_BINS)
            } else {
                MIN_BINS
            }
        }
    };
    let (start, width) = if range > 0.0 {
        (lo, range / nbins as f64)
    } else {
        // A constant series gets unit-scale bins centred on the value.
        let w = (lo.abs() * 1e-3).max(1e-3);
        (lo - w * nbins as f64 / 2.0, w)
    };
    let edges: Vec<f64> = (0..=nbins).map(|i| start + width * i as f64).collect();
    let mut counts = vec![0usize; nbins];
    for &x in &v {
        let b = (((x - start) / width).floor() as isize).clamp(0, nbins as isize - 1) as usize;
        counts[b] += 1;
    }
    let n = v.len() as f64;
    Ok(DensityCurve {
        metric: metric.to_string(),
        centers: edges.windows(2).map(|e| (e[0] + e[1]) / 2.0).collect(),
        heights: counts.iter().map(|&c| c as f64 / (n * width)).collect(),
        edges,
        counts,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngleStats {
    pub dim: usize,
    pub mean_angle_deg: f64,
    pub std_angle_deg: f64,
    pub n_pairs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngleExperimentResult {
    pub seed: u64,
    pub dims: Vec<AngleStats>,
}

/// Sample mean and standard deviation.
pub fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn random_vector(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..=1.0)).collect();
        if v.iter().any(|&x| x != 0.0) {
            return v;
        }
    }
}

/// Angle statistics of `n_pairs` independent pairs of vectors with i.i.d.
/// uniform `[-1, 1]` coordinates, per dimension. Each dimension uses its
/// own ChaCha stream of `seed`, so results do not depend on the order of
/// `dims`.
pub fn random_angle_experiment(dims: &[usize], n_pairs: usize, seed: u64) -> Result<AngleExperimentResult> {
    if n_pairs == 0 {
        return Err(Error::InvalidArgument("need at least one pair".into()));
    }
    if let Some(&d) = dims.iter().find(|&&d| d < 2) {
        return Err(Error::InvalidArgument(format!("dimension {d} < 2")));
    }
    let stats = dims
        .iter()
        .map(|&d| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(d as u64);
            let angles: Vec<f64> = (0..n_pairs)
                .map(|_| {
                    let a = random_vector(&mut rng, d);
                    let b = random_vector(&mut rng, d);
                    crate::geometry::angle(&a, &b).expect("non-zero vectors")
                })
                .collect();
            let (mean, std) = mean_std(&angles);
            AngleStats {
                dim: d,
                mean_angle_deg: mean,
                std_angle_deg: std,
                n_pairs,
            }
        })
        .collect();
    Ok(AngleExperimentResult { seed, dims: stats })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::GeometrySample;
    use proptest::prelude::{any, prop_assert, prop_assert_eq, proptest};

    #[test]
    fn pearson_examples() {
        assert!((pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!((pearson(&[1.0, 2.0, 3.0], &[6.0, 4.0, 2.0]).unwrap() + 1.0).abs() < 1e-12);
        // deviations (-1, 0, 1) and (1/3, -2/3, 1/3): covariance 0
        assert!(pearson(&[1.0, 2.0, 3.0], &[1.0, 0.0, 1.0]).unwrap().abs() < 1e-12);
        assert!(matches!(
            pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]),
            Err(Error::UndefinedCorrelation(_))
        ));
        assert!(pearson(&[1.0, 2.0], &[1.0, 2.0]).is_err());
    }

    proptest! {
        #[test]
        fn pearson_symmetric_scale_invariant_bounded(
            pts in proptest::collection::vec((-100.0f64..100.0, -100.0f64..100.0), 3..50),
            a in 0.1f64..10.0,
            b in -10.0f64..10.0,
        ) {
            let x: Vec<f64> = pts.iter().map(|p| p.0).collect();
            let y: Vec<f64> = pts.iter().map(|p| p.1).collect();
            if let (Ok(r), Ok(r2)) = (pearson(&x, &y), pearson(&y, &x)) {
                prop_assert!((r - r2).abs() < 1e-12);
                prop_assert!(r.abs() <= 1.0);
                let xs: Vec<f64> = x.iter().map(|v| a * v + b).collect();
                prop_assert!((pearson(&xs, &y).unwrap() - r).abs() < 1e-9);
            }
        }

        #[test]
        fn trimming_ignores_input_order(
            mut v in proptest::collection::vec(-5i32..5, 0..400),
            seed in any::<u64>(),
        ) {
            let items: Vec<(usize, f64)> = v.iter().enumerate().map(|(i, &x)| (i, x as f64)).collect();
            let a: Vec<f64> = trim_extremes(&items, TRIM_FRACTION).into_iter().map(|p| p.1).collect();
            let mut shuffled = items.clone();
            use rand::seq::SliceRandom;
            shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let b: Vec<f64> = trim_extremes(&shuffled, TRIM_FRACTION).into_iter().map(|p| p.1).collect();
            prop_assert_eq!(a, b);
            v.clear();
        }
    }

    #[test]
    fn spearman_handles_ties() {
        assert_eq!(average_ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
        let r = spearman(&[1.0, 2.0, 3.0, 4.0], &[10.0, 20.0, 30.0, 1000.0]).unwrap();
        assert!((r - 1.0).abs() < 1e-12);
    }

    #[test]
    fn trimming_counts() {
        let items: Vec<(usize, f64)> = (0..1000).map(|i| (i, ((i * 7919) % 1000) as f64)).collect();
        let kept = trim_extremes(&items, TRIM_FRACTION);
        assert_eq!(kept.len(), 990);
        assert_eq!(kept.first().unwrap().1, 5.0);
        assert_eq!(kept.last().unwrap().1, 994.0);
    }

    #[test]
    fn relative_change_examples() {
        assert_eq!(relative_change(2.0, 1.0), 0.5);
        assert_eq!(relative_change(1.0, 1.5), -0.5);
    }

    fn snap(margins: &[(u64, f64)]) -> GeometrySnapshot {
        let samples = margins
            .iter()
            .map(|&(id, m)| GeometrySample {
                sample_id: id,
                true_label: 0,
                predicted_label: if m >= 0.0 { 0 } else { 1 },
                angles: vec![30.0, 60.0],
                length: 1.0,
                margin: m,
                correct: m >= 0.0,
                degenerate: false,
            })
            .collect();
        GeometrySnapshot::new("c", "d", 2, 0, samples).unwrap()
    }

    #[test]
    fn relative_margin_change_excludes_zero_margins() {
        let reference = snap(&[(1, 2.0), (2, 0.0), (3, 1.0)]);
        let corrupted = snap(&[(1, 1.0), (2, 0.5), (3, 1.5)]);
        let key = VariantKey::new("brightness", 1);
        let out = relative_margin_change(&reference, &[(key, &corrupted)]).unwrap();
        assert_eq!(out.total_pairs, 3);
        assert_eq!(out.excluded, 1);
        assert_eq!(out.values, vec![-0.5, 0.5]);
        assert_eq!(out.median, 0.0);
        let none = snap(&[(1, 0.0)]);
        assert!(relative_margin_change(&none, &[(VariantKey::new("x", 1), &none)]).is_err());
    }

    #[test]
    fn density_examples() {
        let d = density("c", &[2.5; 40], None).unwrap();
        assert_eq!(d.counts.iter().filter(|&&c| c > 0).count(), 1);
        assert!((d.area() - 1.0).abs() < 1e-9);
        assert!(density("e", &[], None).is_err());

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let v: Vec<f64> = (0..1000).map(|_| rng.random_range(-3.0..7.0f64).powi(3)).collect();
        let d = density("r", &v, None).unwrap();
        assert!((d.area() - 1.0).abs() < 1e-6);
        assert!(d.heights.len() >= MIN_BINS);
    }

    #[test]
    fn uniform_density_is_flat() {
        // Monte Carlo: U[0,1] density is 1 everywhere.
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let v: Vec<f64> = (0..100_000).map(|_| rng.random::<f64>()).collect();
        let d = density("u", &v, None).unwrap();
        let max = d.heights.iter().copied().fold(0.0, f64::max);
        assert!((max - 1.0).abs() < 0.15, "max height {max}");
    }

    #[test]
    fn random_angles_concentrate_at_ninety() {
        let r = random_angle_experiment(&[2, 512], 10_000, 4).unwrap();
        let (low, high) = (&r.dims[0], &r.dims[1]);
        assert!((88.0..=92.0).contains(&high.mean_angle_deg), "{high:?}");
        assert!(high.std_angle_deg < 5.0);
        assert!(low.std_angle_deg > high.std_angle_deg);
        assert_eq!(r, random_angle_experiment(&[2, 512], 10_000, 4).unwrap());
        // streams are per dimension
        let only = random_angle_experiment(&[512], 10_000, 4).unwrap();
        assert_eq!(only.dims[0], r.dims[1]);
        assert!(random_angle_experiment(&[1], 10, 0).is_err());
    }

    #[test]
    fn angle_spread_shrinks_with_dimension() {
        let r = random_angle_experiment(&[2, 8, 32, 128, 512], 4000, 9).unwrap();
        for w in r.dims.windows(2) {
            assert!(w[1].std_angle_deg <= w[0].std_angle_deg + 0.5, "{w:?}");
        }
    }
}

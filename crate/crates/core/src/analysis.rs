//! Which features distinguish chosen thumbnails: per-video rank quantiles of the 53
//! analysis features at the thumbnail frame and chi-square tests of uniformity.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;
use statrs::function::gamma::gamma_ur;

use crate::aesthetics::{analysis_names, stillness_series, AestheticExtractor, ANALYSIS_DIM};
use crate::error::{Error, Result};
use crate::evaluation::{load_video, pixel_signature, signature_mse, ManifestEntry, MatchConfig, MatcherKind, Subject};
use crate::frame_io::{Frame, SourceRegistry};

pub const DEFAULT_BINS: usize = 10;
pub const SIGNIFICANCE: f64 = 0.05;

/// `(#values strictly below the thumbnail's + 0.5 #ties) / #values` over the frames that
/// are neither the thumbnail nor excluded.
pub fn rank_quantile(values: &[f64], thumbnail: usize, excluded: &[bool]) -> Result<f64> {
    if thumbnail >= values.len() || excluded.len() != values.len() {
        return Err(Error::DimensionMismatch(format!(
            "thumbnail {thumbnail}, {} values, {} exclusion flags",
            values.len(),
            excluded.len()
        )));
    }
    let t = values[thumbnail];
    let (mut below, mut ties, mut count) = (0usize, 0usize, 0usize);
    for (i, &v) in values.iter().enumerate() {
        if i == thumbnail || excluded[i] {
            continue;
        }
        count += 1;
        if v < t {
            below += 1;
        } else if v == t {
            ties += 1;
        }
    }
    if count == 0 {
        return Err(Error::NoComparisonFrames);
    }
    Ok((below as f64 + 0.5 * ties as f64) / count as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChiSquareResult {
    pub feature: String,
    pub statistic: f64,
    pub degrees_of_freedom: usize,
    pub p_value: f64,
    pub mean_quantile: f64,
    pub std_quantile: f64,
    /// Fewer than five expected samples per bin.
    pub too_few_samples: bool,
}

impl ChiSquareResult {
    pub fn significant(&self) -> bool {
        self.p_value < SIGNIFICANCE
    }
}

/// Upper tail of the chi-square distribution, `Q(dof/2, x/2)`.
pub fn chi_square_sf(statistic: f64, dof: usize) -> f64 {
    if statistic <= 0.0 {
        return 1.0;
    }
    gamma_ur(dof as f64 / 2.0, statistic / 2.0).clamp(0.0, 1.0)
}

/// Goodness of fit of `quantiles` to the uniform distribution on `[0, 1]` over `bins`
/// equal-width bins (a value of exactly 1 falls in the last bin).
pub fn chi_square_uniform(feature: &str, quantiles: &[f64], bins: usize) -> Result<ChiSquareResult> {
    if bins < 2 {
        return Err(Error::InvalidConfig("at least two bins are needed".into()));
    }
    if quantiles.is_empty() {
        return Err(Error::EmptyInput);
    }
    if let Some(q) = quantiles.iter().find(|q| !(0.0..=1.0).contains(*q)) {
        return Err(Error::InvalidData(format!("quantile {q} outside [0,1]")));
    }
    let n = quantiles.len();
    let too_few_samples = n < 5 * bins;
    if too_few_samples {
        log::warn!("{feature}: {n} samples for {bins} bins; the chi-square approximation is poor");
    }
    let mut observed = vec![0usize; bins];
    for &q in quantiles {
        observed[((q * bins as f64) as usize).min(bins - 1)] += 1;
    }
    let expected = n as f64 / bins as f64;
    let statistic: f64 = observed.iter().map(|&o| (o as f64 - expected).powi(2) / expected).sum();
    let mean = quantiles.iter().sum::<f64>() / n as f64;
    let var = quantiles.iter().map(|q| (q - mean).powi(2)).sum::<f64>() / n as f64;
    Ok(ChiSquareResult {
        feature: feature.to_string(),
        statistic,
        degrees_of_freedom: bins - 1,
        p_value: chi_square_sf(statistic, bins - 1),
        mean_quantile: mean,
        std_quantile: var.sqrt(),
        too_few_samples,
    })
}

/// Frames that are near-duplicates of the thumbnail under `config` (the thumbnail itself
/// is not flagged).
pub fn near_duplicate_mask(frames: &[Frame], thumbnail: usize, config: &MatchConfig) -> Result<Vec<bool>> {
    let thumb = frames
        .get(thumbnail)
        .ok_or_else(|| Error::InvalidData(format!("thumbnail {thumbnail} outside {} frames", frames.len())))?;
    if config.matcher == MatcherKind::PixelSsd {
        // one signature for the thumbnail instead of one per comparison
        let reference = pixel_signature(thumb);
        return Ok(frames
            .par_iter()
            .enumerate()
            .map(|(i, f)| i != thumbnail && signature_mse(&pixel_signature(f), &reference) < config.theta)
            .collect());
    }
    frames
        .par_iter()
        .enumerate()
        .map(|(i, f)| Ok(i != thumbnail && config.matches(Subject::frame(i, f), Subject::frame(thumbnail, thumb))?))
        .collect()
}

/// The 53 analysis features of every frame, `[frame][feature]`.
pub fn analysis_features(frames: &[Frame], extractor: &AestheticExtractor) -> Result<Vec<Vec<f64>>> {
    let grays: Vec<_> = frames.par_iter().map(Frame::to_gray).collect();
    let stillness = stillness_series(&grays)?;
    let vectors = extractor.compute_all(frames)?;
    Ok(vectors
        .iter()
        .zip(stillness)
        .map(|(v, s)| v.with_stillness(s).values().to_vec())
        .collect())
}

/// One quantile per analysis feature for a video's thumbnail.
pub fn quantile_row(features: &[Vec<f64>], thumbnail: usize, excluded: &[bool]) -> Result<Vec<f64>> {
    if features.iter().any(|f| f.len() != ANALYSIS_DIM) {
        return Err(Error::DimensionMismatch(format!("feature rows must have {ANALYSIS_DIM} values")));
    }
    (0..ANALYSIS_DIM)
        .map(|j| {
            let column: Vec<f64> = features.iter().map(|f| f[j]).collect();
            rank_quantile(&column, thumbnail, excluded)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuantileMatrix {
    pub names: Vec<String>,
    pub video_ids: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuantileReport {
    pub matrix: QuantileMatrix,
    /// Sorted by p-value, most significant first (feature order on ties).
    pub results: Vec<ChiSquareResult>,
    /// Videos left out, with the reason.
    pub skipped: Vec<(String, String)>,
}

impl QuantileReport {
    pub fn flagged(&self) -> Vec<&str> {
        self.results.iter().filter(|r| r.significant()).map(|r| r.feature.as_str()).collect()
    }

    pub fn result(&self, feature: &str) -> Option<&ChiSquareResult> {
        self.results.iter().find(|r| r.feature == feature)
    }
}

/// Tests every column of a quantile matrix.
pub fn significance(matrix: &QuantileMatrix, bins: usize) -> Result<Vec<ChiSquareResult>> {
    if matrix.rows.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut results: Vec<ChiSquareResult> = matrix
        .names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let column: Vec<f64> = matrix.rows.iter().map(|r| r[j]).collect();
            chi_square_uniform(name, &column, bins)
        })
        .collect::<Result<_>>()?;
    results.sort_by(|a, b| a.p_value.total_cmp(&b.p_value));
    Ok(results)
}

/// Builds the report from per-video outcomes `(id, row or error)`; failed videos are
/// skipped with a warning.
pub fn report_from_rows(rows: Vec<(String, Result<Vec<f64>>)>, bins: usize) -> Result<QuantileReport> {
    let mut matrix = QuantileMatrix {
        names: analysis_names().to_vec(),
        video_ids: Vec::new(),
        rows: Vec::new(),
    };
    let mut skipped = Vec::new();
    for (id, row) in rows {
        match row {
            Ok(r) => {
                matrix.video_ids.push(id);
                matrix.rows.push(r);
            }
            Err(e) => {
                log::warn!("skipping {id}: {e}");
                skipped.push((id, e.to_string()));
            }
        }
    }
    let results = significance(&matrix, bins)?;
    Ok(QuantileReport {
        matrix,
        results,
        skipped,
    })
}

/// Quantile row of one in-memory video.
pub fn video_quantiles(frames: &[Frame], thumbnail: usize, extractor: &AestheticExtractor, config: &MatchConfig) -> Result<Vec<f64>> {
    let excluded = near_duplicate_mask(frames, thumbnail, config)?;
    let features = analysis_features(frames, extractor)?;
    quantile_row(&features, thumbnail, &excluded)
}

/// Runs the study over a manifest; each entry's `gt_frame_index` is its thumbnail.
pub fn feature_quantile_report(
    entries: &[ManifestEntry],
    sources: &SourceRegistry,
    extractor: &AestheticExtractor,
    config: &MatchConfig,
    bins: usize,
) -> Result<QuantileReport> {
    config.validate()?;
    if entries.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let rows = entries
        .par_iter()
        .map(|e| {
            let row = load_video(e, sources).and_then(|v| video_quantiles(&v.frames, e.gt_frame_index, extractor, config));
            (e.id.clone(), row)
        })
        .collect();
    report_from_rows(rows, bins)
}

pub fn write_quantile_csv(out: impl Write, matrix: &QuantileMatrix) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["video".to_string()];
    header.extend(matrix.names.iter().cloned());
    w.write_record(&header)?;
    for (id, row) in matrix.video_ids.iter().zip(&matrix.rows) {
        let mut rec = vec![id.clone()];
        rec.extend(row.iter().map(|q| format!("{q:.6}")));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_significance_csv(out: impl Write, results: &[ChiSquareResult]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["feature", "mean_q", "std_q", "chi2", "dof", "p", "significant"])?;
    for r in results {
        w.write_record([
            r.feature.clone(),
            format!("{:.6}", r.mean_quantile),
            format!("{:.6}", r.std_quantile),
            format!("{:.6}", r.statistic),
            r.degrees_of_freedom.to_string(),
            format!("{:.6e}", r.p_value),
            r.significant().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use proptest::prelude::*;
    use rand::Rng;

    /// `1 - integral_0^x f(t) dt` for the chi-square density by composite Simpson on a
    /// fine grid, written from the density alone.
    fn integrated_sf(x: f64, dof: usize) -> f64 {
        if x <= 0.0 {
            return 1.0;
        }
        let k = dof as f64 / 2.0;
        let ln_norm = -(k * 2f64.ln() + statrs::function::gamma::ln_gamma(k));
        let density = |t: f64| if t <= 0.0 { 0.0 } else { (ln_norm + (k - 1.0) * t.ln() - t / 2.0).exp() };
        let steps = 200_000;
        let h = x / steps as f64;
        let mut sum = density(0.0) + density(x);
        for i in 1..steps {
            sum += density(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        1.0 - sum * h / 3.0
    }

    #[test]
    fn quantile_extremes_and_ties() {
        let mut v: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let none = vec![false; 10];
        assert_eq!(rank_quantile(&v, 9, &none).unwrap(), 1.0);
        assert_eq!(rank_quantile(&v, 0, &none).unwrap(), 0.0);
        v.fill(3.0);
        assert_eq!(rank_quantile(&v, 4, &none).unwrap(), 0.5);
        let mut all = vec![true; 10];
        all[4] = false;
        assert!(matches!(rank_quantile(&v, 4, &all), Err(Error::NoComparisonFrames)));
        assert!(matches!(rank_quantile(&[1.0], 0, &[false]), Err(Error::NoComparisonFrames)));
    }

    proptest! {
        #[test]
        fn quantiles_ignore_increasing_transforms(
            raw in proptest::collection::vec(-5i32..5, 2..30),
            t in 0usize..30,
        ) {
            let t = t % raw.len();
            let v: Vec<f64> = raw.iter().map(|&x| x as f64).collect();
            let w: Vec<f64> = v.iter().map(|x| (x * 0.7).exp() + x * x * x).collect();
            let none = vec![false; v.len()];
            let q = rank_quantile(&v, t, &none).unwrap();
            prop_assert!((0.0..=1.0).contains(&q));
            prop_assert_eq!(q, rank_quantile(&w, t, &none).unwrap());
        }

        #[test]
        fn chi_square_ignores_sample_order(mut qs in proptest::collection::vec(0.0f64..=1.0, 1..200), seed in 0u64..100) {
            let a = chi_square_uniform("f", &qs, 10).unwrap();
            use rand::seq::SliceRandom;
            qs.shuffle(&mut fixtures::rng(seed));
            let b = chi_square_uniform("f", &qs, 10).unwrap();
            prop_assert_eq!(a.statistic, b.statistic);
            prop_assert!(a.statistic >= 0.0 && (0.0..=1.0).contains(&a.p_value));
        }
    }

    #[test]
    fn chi_square_exact_cases() {
        let uniform: Vec<f64> = (0..1000).map(|i| (i / 100) as f64 / 10.0 + 0.05).collect();
        let r = chi_square_uniform("u", &uniform, 10).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value, 1.0);
        assert_eq!(r.degrees_of_freedom, 9);
        let lumped = vec![0.42; 1000];
        let r = chi_square_uniform("l", &lumped, 10).unwrap();
        assert_eq!(r.statistic, 9000.0);
        assert!(r.p_value < 1e-100);
        assert!(chi_square_uniform("few", &[0.5; 10], 10).unwrap().too_few_samples);
    }

    #[test]
    fn p_value_matches_numeric_integration() {
        for x in [0.0, 5.0, 16.92, 50.0] {
            let (p, oracle) = (chi_square_sf(x, 9), integrated_sf(x, 9));
            assert!((p - oracle).abs() < 1e-6, "x {x}: {p} vs {oracle}");
        }
        assert!((integrated_sf(16.92, 9) - 0.05).abs() < 1e-3);
        let ps: Vec<f64> = (0..60).map(|i| chi_square_sf(i as f64, 9)).collect();
        assert!(ps.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn uniform_samples_pass_in_most_trials() {
        let passes = (0..100)
            .filter(|&seed| {
                let mut rng = fixtures::rng(seed);
                let qs: Vec<f64> = (0..1000).map(|_| rng.random::<f64>()).collect();
                chi_square_uniform("u", &qs, 10).unwrap().p_value > 0.05
            })
            .count();
        assert!(passes >= 90, "{passes}");
    }

    #[test]
    fn near_duplicates_of_the_thumbnail_are_excluded() {
        let frames = fixtures::cut_video(&[4, 4], 32, 24, 2);
        let mask = near_duplicate_mask(&frames, 1, &MatchConfig::default()).unwrap();
        assert_eq!(mask, vec![true, false, true, true, false, false, false, false]);
        let generic = MatchConfig {
            matcher: MatcherKind::DescriptorL2,
            theta: 0.05,
        };
        assert_eq!(near_duplicate_mask(&frames, 1, &generic).unwrap(), mask);
    }

    #[test]
    fn report_skips_failing_videos_and_sorts() {
        let mut rng = fixtures::rng(3);
        let rows: Vec<(String, Result<Vec<f64>>)> = (0..60)
            .map(|i| {
                let mut row: Vec<f64> = (0..ANALYSIS_DIM).map(|_| rng.random::<f64>()).collect();
                row[40] = 0.95 + 0.05 * rng.random::<f64>();
                (i.to_string(), Ok(row))
            })
            .chain(std::iter::once(("bad".to_string(), Err(Error::NoComparisonFrames))))
            .collect();
        let report = report_from_rows(rows, 10).unwrap();
        assert_eq!(report.matrix.rows.len(), 60);
        assert_eq!(report.skipped.len(), 1);
        assert_eq!(report.results[0].feature, "sharpness_sobel");
        assert!(report.results.windows(2).all(|w| w[0].p_value <= w[1].p_value));
        let mut csv = Vec::new();
        write_significance_csv(&mut csv, &report.results).unwrap();
        assert!(String::from_utf8(csv).unwrap().starts_with("feature,mean_q,std_q,chi2,dof,p,significant\n"));
        let mut csv = Vec::new();
        write_quantile_csv(&mut csv, &report.matrix).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert_eq!(text.lines().next().unwrap().split(',').count(), 54);
    }
}

//! Attractiveness scoring: the stillness heuristic and a random-forest regressor over
//! aesthetic vectors, plus model persistence and training data I/O.

mod forest;
mod format;

pub use forest::{pearson, train_forest, ForestConfig, ForestModel, Node, Tree};
pub use format::{load_model, read_model, save_model, write_model, MAGIC, VERSION};

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aesthetics::{aesthetic_names, AestheticExtractor, AESTHETIC_DIM};
use crate::error::{Error, Result};
use crate::frame_io::Frame;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreMode {
    Unsupervised,
    Supervised,
}

impl ScoreMode {
    pub fn name(self) -> &'static str {
        match self {
            ScoreMode::Unsupervised => "unsupervised",
            ScoreMode::Supervised => "supervised",
        }
    }
}

impl fmt::Display for ScoreMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Assigns an attractiveness score to a frame. `stillness` is the frame's stillness
/// against its predecessor.
pub trait Scorer: Send + Sync {
    fn mode(&self) -> ScoreMode;
    fn score(&self, frame: &Frame, stillness: f64) -> Result<f64>;
}

pub struct StillnessScorer;

impl Scorer for StillnessScorer {
    fn mode(&self) -> ScoreMode {
        ScoreMode::Unsupervised
    }

    fn score(&self, _frame: &Frame, stillness: f64) -> Result<f64> {
        Ok(stillness)
    }
}

pub struct ForestScorer {
    pub model: Arc<ForestModel>,
    pub extractor: Arc<AestheticExtractor>,
}

impl Scorer for ForestScorer {
    fn mode(&self) -> ScoreMode {
        ScoreMode::Supervised
    }

    fn score(&self, frame: &Frame, _stillness: f64) -> Result<f64> {
        let v = self.extractor.compute(frame)?;
        self.model.predict_slice(v.values())
    }
}

/// What a scorer constructor may draw on.
#[derive(Clone, Default)]
pub struct ScorerContext {
    pub model: Option<Arc<ForestModel>>,
    pub extractor: Arc<AestheticExtractor>,
}

pub type ScorerFactory = fn(&ScorerContext) -> Result<Box<dyn Scorer>>;

/// Scorers by name.
pub struct ScorerRegistry {
    factories: BTreeMap<&'static str, ScorerFactory>,
}

impl ScorerRegistry {
    pub fn empty() -> Self {
        Self {
            factories: BTreeMap::new(),
        }
    }

    pub fn register(&mut self, name: &'static str, factory: ScorerFactory) {
        self.factories.insert(name, factory);
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.factories.keys().copied().collect()
    }

    pub fn create(&self, name: &str, ctx: &ScorerContext) -> Result<Box<dyn Scorer>> {
        let factory = self.factories.get(name).ok_or_else(|| Error::UnknownStrategy {
            kind: "scorer",
            name: name.to_string(),
            available: self.names().join(", "),
        })?;
        factory(ctx)
    }
}

impl Default for ScorerRegistry {
    fn default() -> Self {
        let mut r = Self::empty();
        r.register("unsupervised", |_| Ok(Box::new(StillnessScorer)));
        r.register("supervised", |ctx| {
            let model = ctx.model.clone().ok_or(Error::ModelMissing)?;
            if model.feature_dim != AESTHETIC_DIM {
                return Err(Error::DimensionMismatch(format!(
                    "model has {} features, aesthetic vectors have {AESTHETIC_DIM}",
                    model.feature_dim
                )));
            }
            Ok(Box::new(ForestScorer {
                model,
                extractor: ctx.extractor.clone(),
            }))
        });
        r
    }
}

pub fn scorer_for(mode: ScoreMode, ctx: &ScorerContext) -> Result<Box<dyn Scorer>> {
    ScorerRegistry::default().create(mode.name(), ctx)
}

/// One score per keyframe, in keyframe order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreTable {
    pub mode: ScoreMode,
    pub entries: Vec<(usize, f64)>,
}

impl ScoreTable {
    pub fn get(&self, frame: usize) -> Option<f64> {
        self.entries.iter().find(|e| e.0 == frame).map(|e| e.1)
    }
}

/// Scores the given keyframes; `frames` and `stillness` are indexed by frame index.
pub fn score_keyframes(keyframes: &[usize], frames: &[Frame], stillness: &[f64], scorer: &dyn Scorer) -> Result<ScoreTable> {
    let entries = keyframes
        .par_iter()
        .map(|&k| {
            let frame = frames
                .get(k)
                .ok_or_else(|| Error::InvalidData(format!("keyframe {k} outside {} frames", frames.len())))?;
            let s = *stillness
                .get(k)
                .ok_or_else(|| Error::InvalidData(format!("no stillness for frame {k}")))?;
            let score = scorer.score(frame, s)?;
            if !score.is_finite() {
                return Err(Error::InvalidData(format!("non-finite score for frame {k}")));
            }
            Ok((k, score))
        })
        .collect::<Result<_>>()?;
    Ok(ScoreTable {
        mode: scorer.mode(),
        entries,
    })
}

/// Reads a training CSV: a header naming every aesthetic feature plus `score`; other
/// columns are ignored.
pub fn read_training_csv(path: &Path) -> Result<(Array2<f64>, Vec<f64>)> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::InvalidData(format!("training CSV lacks column {name}")))
    };
    let feature_cols: Vec<usize> = aesthetic_names().iter().map(|n| column(n)).collect::<Result<_>>()?;
    let score_col = column("score")?;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        let parse = |c: usize| -> Result<f64> {
            let raw = record.get(c).unwrap_or("").trim();
            raw.parse()
                .map_err(|_| Error::InvalidData(format!("row {}: cannot parse {raw:?}", line + 2)))
        };
        for &c in &feature_cols {
            xs.push(parse(c)?);
        }
        ys.push(parse(score_col)?);
    }
    if ys.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    let x = Array2::from_shape_vec((ys.len(), AESTHETIC_DIM), xs).expect("row-major feature buffer");
    Ok((x, ys))
}

pub fn write_training_csv(path: &Path, x: &Array2<f64>, y: &[f64]) -> Result<()> {
    if x.ncols() != AESTHETIC_DIM || x.nrows() != y.len() {
        return Err(Error::DimensionMismatch(format!("{}x{} features for {} targets", x.nrows(), x.ncols(), y.len())));
    }
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<&str> = aesthetic_names().iter().map(String::as_str).collect();
    header.push("score");
    w.write_record(&header)?;
    for (row, target) in x.outer_iter().zip(y) {
        let mut rec: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        rec.push(target.to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use ndarray::{s, Array1};
    use rand::Rng;

    fn small_config(n_trees: usize) -> ForestConfig {
        ForestConfig {
            n_trees,
            ..ForestConfig::default()
        }
    }

    #[test]
    fn constant_target_predicts_constant() {
        let (x, _) = fixtures::regression_harness(200, 52, 3, 1);
        let y = vec![2.5; 200];
        let m = train_forest(x.view(), &y, &small_config(10), 0).unwrap();
        let mut rng = fixtures::rng(3);
        for _ in 0..50 {
            let v = Array1::from_shape_fn(52, |_| rng.random::<f64>());
            assert_eq!(m.predict(v.view()).unwrap(), 2.5);
        }
    }

    #[test]
    fn single_informative_feature_is_learned() {
        let (x, y) = fixtures::regression_harness(2500, 52, 17, 2);
        let m = train_forest(x.slice(s![..2000, ..]), &y[..2000], &ForestConfig::default(), 7).unwrap();
        let preds: Vec<f64> = x.slice(s![2000.., ..]).outer_iter().map(|r| m.predict(r).unwrap()).collect();
        let r = pearson(&preds, &y[2000..]);
        assert!(r >= 0.9, "holdout r = {r}");
    }

    #[test]
    fn training_is_deterministic_and_thread_independent() {
        let (x, y) = fixtures::regression_harness(300, 52, 0, 4);
        let a = train_forest(x.view(), &y, &small_config(12), 9).unwrap();
        let b = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| train_forest(x.view(), &y, &small_config(12), 9).unwrap());
        let (mut fa, mut fb) = (Vec::new(), Vec::new());
        write_model(&a, &mut fa).unwrap();
        write_model(&b, &mut fb).unwrap();
        assert_eq!(fa, fb);
        assert_ne!(a, train_forest(x.view(), &y, &small_config(12), 10).unwrap());
    }

    #[test]
    fn single_leaf_and_memorization() {
        let leaf = ForestModel {
            trees: vec![Tree { nodes: vec![Node { feature: 0, threshold: 0.0, left: 0, right: 0, leaf_value: 1.75, is_leaf: true }] }],
            feature_dim: 52,
            seed: 0,
            config: ForestConfig::default(),
        };
        assert_eq!(leaf.predict_slice(&[0.0; 52]).unwrap(), 1.75);
        assert!(matches!(leaf.predict_slice(&[0.0; 5]), Err(Error::DimensionMismatch(_))));

        let (x, _) = fixtures::regression_harness(60, 52, 0, 5);
        let mut rng = fixtures::rng(6);
        let y: Vec<f64> = (0..60).map(|_| rng.random_range(-3.0..3.0)).collect();
        let config = ForestConfig {
            n_trees: 1,
            min_leaf: 1,
            features_per_split: 52,
            max_depth: None,
            bootstrap: false,
        };
        let m = train_forest(x.view(), &y, &config, 0).unwrap();
        for (row, target) in x.outer_iter().zip(&y) {
            assert_eq!(m.predict(row).unwrap(), *target);
        }
    }

    #[test]
    fn predictions_stay_within_target_range() {
        let (x, y) = fixtures::regression_harness(400, 52, 5, 8);
        let y: Vec<f64> = y.iter().map(|v| v * 4.0 - 1.0).collect();
        let m = train_forest(x.view(), &y, &small_config(20), 1).unwrap();
        let (lo, hi) = y.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
        let mut rng = fixtures::rng(9);
        for _ in 0..200 {
            let v = Array1::from_shape_fn(52, |_| rng.random_range(-1.0..2.0));
            let p = m.predict(v.view()).unwrap();
            assert!(lo <= p && p <= hi);
        }
        let mut reversed = m.clone();
        reversed.trees.reverse();
        let v = Array1::from_elem(52, 0.3);
        assert!((m.predict(v.view()).unwrap() - reversed.predict(v.view()).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn invalid_training_input() {
        let (x, y) = fixtures::regression_harness(10, 52, 0, 0);
        assert!(matches!(train_forest(x.slice(s![..1, ..]), &y[..1], &small_config(2), 0), Err(Error::EmptyTrainingSet)));
        assert!(matches!(train_forest(x.view(), &y[..9], &small_config(2), 0), Err(Error::DimensionMismatch(_))));
        let mut bad = x.clone();
        bad[[3, 3]] = f64::NAN;
        assert!(train_forest(bad.view(), &y, &small_config(2), 0).is_err());
        let mut dup = x.clone();
        dup.row_mut(1).assign(&x.row(0));
        let mut ydup = y.clone();
        ydup[1] = y[0];
        let m = train_forest(dup.view(), &ydup, &small_config(5), 0).unwrap();
        assert!(m.predict(x.row(0)).unwrap().is_finite());
    }

    #[test]
    fn model_file_round_trip() {
        let (x, y) = fixtures::regression_harness(300, 52, 2, 11);
        let m = train_forest(x.view(), &y, &ForestConfig::default(), 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.thfor");
        save_model(&m, &path).unwrap();
        let loaded = load_model(&path).unwrap();
        assert_eq!(loaded, m);
        let mut rng = fixtures::rng(12);
        for _ in 0..1000 {
            let v = Array1::from_shape_fn(52, |_| rng.random::<f64>());
            assert_eq!(loaded.predict(v.view()).unwrap(), m.predict(v.view()).unwrap());
        }
    }

    #[test]
    fn corrupt_model_files() {
        let (x, y) = fixtures::regression_harness(50, 52, 2, 1);
        let m = train_forest(x.view(), &y, &small_config(3), 3).unwrap();
        let mut bytes = Vec::new();
        write_model(&m, &mut bytes).unwrap();
        assert!(matches!(read_model(&b""[..]), Err(Error::BadMagic)));
        assert!(matches!(read_model(&b"THFOR"[..]), Err(Error::BadMagic)));
        assert!(matches!(read_model(&b"NOTAMODELFILE"[..]), Err(Error::BadMagic)));
        for cut in [8, 20, 40, bytes.len() / 2, bytes.len() - 1] {
            assert!(matches!(read_model(&bytes[..cut]), Err(Error::CorruptNode(_))), "cut {cut}");
        }
        let mut version = bytes.clone();
        version[7] = 9;
        assert!(matches!(read_model(&version[..]), Err(Error::VersionMismatch(9))));
        // first node of the first tree: header 40 bytes, node count 4 bytes, then
        // feature(2) threshold(8) left(4)
        let first_node = 7 + 4 * 3 + 8 + 4 * 3 + 1 + 4;
        assert!(!m.trees[0].nodes[0].is_leaf);
        let mut child = bytes.clone();
        child[first_node + 10..first_node + 14].copy_from_slice(&u32::MAX.to_le_bytes());
        assert!(matches!(read_model(&child[..]), Err(Error::CorruptNode(_))));
    }

    #[test]
    fn stillness_scorer_and_modes() {
        let frames = fixtures::cut_video(&[4], 16, 16, 0);
        let stillness = [1.0, 0.4, 0.7, 0.2];
        let table = score_keyframes(&[1, 3], &frames, &stillness, &StillnessScorer).unwrap();
        assert_eq!(table.entries, vec![(1, 0.4), (3, 0.2)]);
        assert_eq!(table.mode, ScoreMode::Unsupervised);
        let ctx = ScorerContext::default();
        assert!(matches!(scorer_for(ScoreMode::Supervised, &ctx), Err(Error::ModelMissing)));
        assert!(ScorerRegistry::default().create("cnn", &ctx).is_err());
        assert_eq!(ScorerRegistry::default().names(), vec!["supervised", "unsupervised"]);
    }

    #[test]
    fn constant_model_ties_every_keyframe() {
        let (x, _) = fixtures::regression_harness(20, 52, 0, 0);
        let m = train_forest(x.view(), &[0.5; 20], &small_config(3), 0).unwrap();
        let ctx = ScorerContext {
            model: Some(Arc::new(m)),
            ..ScorerContext::default()
        };
        let scorer = scorer_for(ScoreMode::Supervised, &ctx).unwrap();
        let frames = fixtures::cut_video(&[3, 3], 32, 24, 2);
        let table = score_keyframes(&[0, 2, 4], &frames, &[1.0; 6], scorer.as_ref()).unwrap();
        assert!(table.entries.iter().all(|e| e.1 == 0.5));
        let unsup = score_keyframes(&[0, 2, 4], &frames, &[1.0; 6], &StillnessScorer).unwrap();
        let keys = |t: &ScoreTable| t.entries.iter().map(|e| e.0).collect::<Vec<_>>();
        assert_eq!(keys(&table), keys(&unsup));
    }

    #[test]
    fn training_csv_round_trip() {
        let (x, y) = fixtures::regression_harness(5, 52, 0, 0);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("train.csv");
        write_training_csv(&path, &x, &y).unwrap();
        let (x2, y2) = read_training_csv(&path).unwrap();
        assert_eq!(x2, x);
        assert_eq!(y2, y);
        std::fs::write(&path, "contrast,score\n1,2\n").unwrap();
        assert!(read_training_csv(&path).is_err());
    }
}

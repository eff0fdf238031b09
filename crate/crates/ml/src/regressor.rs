//! Uniform front end over all surrogate model kinds.

use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::boost::{fit_boosted, BoostParams, BoostedModel, Goss};
use crate::error::{MlError, Result};
use crate::forest::{Forest, ForestParams};
use crate::gp::GpModel;
use crate::knn::KnnModel;
use crate::tree::{fit_tree, SplitRule, Tree, TreeParams};

/// First line of every persisted model file.
pub const MODEL_MAGIC: &str = "QMLMODEL1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Knn,
    GaussianProcess,
    DecisionTree,
    RandomForest,
    ExtraTrees,
    Gbdt,
    HistGbdt,
}

impl ModelKind {
    pub const ALL: [ModelKind; 7] = [
        ModelKind::Knn,
        ModelKind::GaussianProcess,
        ModelKind::DecisionTree,
        ModelKind::RandomForest,
        ModelKind::ExtraTrees,
        ModelKind::Gbdt,
        ModelKind::HistGbdt,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Knn => "knn",
            ModelKind::GaussianProcess => "gaussian-process",
            ModelKind::DecisionTree => "decision-tree",
            ModelKind::RandomForest => "random-forest",
            ModelKind::ExtraTrees => "extra-trees",
            ModelKind::Gbdt => "gbdt",
            ModelKind::HistGbdt => "hist-gbdt",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = MlError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .or(match s.as_str() {
                "gp" => Some(ModelKind::GaussianProcess),
                "rf" => Some(ModelKind::RandomForest),
                "et" => Some(ModelKind::ExtraTrees),
                "lgbm" | "hgb" => Some(ModelKind::HistGbdt),
                _ => None,
            })
            .ok_or_else(|| MlError::InvalidInput(format!("unknown model kind {s:?}")))
    }
}

/// Hyperparameters of every kind; each kind reads the fields it needs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    /// knn neighbours.
    pub k: usize,
    /// GP length-scale on standardized features; `None` uses the median
    /// pairwise distance.
    pub length_scale: Option<f64>,
    /// GP diagonal noise.
    pub noise: f64,
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    pub max_features: Option<usize>,
    pub n_trees: usize,
    pub rounds: usize,
    pub learning_rate: f64,
    /// Histogram bins (hist-gbdt).
    pub bins: usize,
    pub goss: Option<Goss>,
}

impl Hyperparams {
    pub fn defaults(kind: ModelKind) -> Self {
        let base = Self {
            k: 5,
            length_scale: None,
            noise: 1e-6,
            max_depth: Some(12),
            min_samples_leaf: 2,
            max_features: None,
            n_trees: 200,
            rounds: 300,
            learning_rate: 0.1,
            bins: 64,
            goss: None,
        };
        match kind {
            ModelKind::Gbdt => Self {
                max_depth: Some(6),
                ..base
            },
            ModelKind::HistGbdt => Self {
                max_depth: Some(6),
                goss: Some(Goss::default()),
                ..base
            },
            _ => base,
        }
    }

    fn tree(&self) -> TreeParams {
        TreeParams {
            max_depth: self.max_depth,
            min_samples_leaf: self.min_samples_leaf,
            max_features: self.max_features,
            rule: SplitRule::Best,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
enum Fitted {
    Knn(KnnModel),
    Gp(GpModel),
    Tree(Tree),
    Forest(Forest),
    Boosted(BoostedModel),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Regressor {
    pub kind: ModelKind,
    pub params: Hyperparams,
    pub seed: u64,
    n_features: usize,
    fitted: Option<Fitted>,
}

fn validate(x: &[Vec<f64>], y: Option<&[f64]>, n_features: Option<usize>) -> Result<usize> {
    let p = match n_features {
        Some(p) => p,
        None => x.first().map(Vec::len).ok_or_else(|| MlError::InvalidInput("no training rows".into()))?,
    };
    if let Some(y) = y {
        if y.len() != x.len() {
            return Err(MlError::Dimension(format!("{} rows vs {} targets", x.len(), y.len())));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(MlError::InvalidInput("non-finite target".into()));
        }
    }
    for (i, r) in x.iter().enumerate() {
        if r.len() != p {
            return Err(MlError::Dimension(format!("row {i} has {} features, expected {p}", r.len())));
        }
        if r.iter().any(|v| !v.is_finite()) {
            return Err(MlError::InvalidInput(format!("row {i} has a NaN or infinite feature")));
        }
    }
    Ok(p)
}

impl Regressor {
    pub fn new(kind: ModelKind, seed: u64) -> Self {
        Self::with_params(kind, Hyperparams::defaults(kind), seed)
    }

    pub fn with_params(kind: ModelKind, params: Hyperparams, seed: u64) -> Self {
        Self {
            kind,
            params,
            seed,
            n_features: 0,
            fitted: None,
        }
    }

    pub fn is_fitted(&self) -> bool {
        self.fitted.is_some()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn fit(&mut self, x: &[Vec<f64>], y: &[f64]) -> Result<()> {
        let p = validate(x, Some(y), None)?;
        let hp = &self.params;
        let n = y.len();
        let fitted = match self.kind {
            ModelKind::Knn => Fitted::Knn(KnnModel::fit(x, y, hp.k)),
            ModelKind::GaussianProcess => Fitted::Gp(GpModel::fit(x, y, hp.length_scale, hp.noise)?),
            ModelKind::DecisionTree => Fitted::Tree(fit_tree(x, y, (0..n).collect(), None, &hp.tree(), self.seed)),
            ModelKind::RandomForest => {
                Fitted::Forest(Forest::fit(x, y, &ForestParams::random_forest(hp.n_trees, hp.tree()), self.seed))
            }
            ModelKind::ExtraTrees => {
                Fitted::Forest(Forest::fit(x, y, &ForestParams::extra_trees(hp.n_trees, hp.tree()), self.seed))
            }
            ModelKind::Gbdt | ModelKind::HistGbdt => {
                let hist = self.kind == ModelKind::HistGbdt;
                let bp = BoostParams {
                    rounds: hp.rounds,
                    learning_rate: hp.learning_rate,
                    tree: hp.tree(),
                    bins: hist.then_some(hp.bins),
                    goss: if hist { hp.goss } else { None },
                };
                Fitted::Boosted(fit_boosted(x, y, &bp, self.seed))
            }
        };
        self.n_features = p;
        self.fitted = Some(fitted);
        Ok(())
    }

    /// Prediction for one row, without input validation.
    pub fn predict_row(&self, row: &[f64]) -> Result<f64> {
        let model = self.fitted.as_ref().ok_or(MlError::NotFitted)?;
        Ok(match model {
            Fitted::Knn(m) => m.predict_row(row),
            Fitted::Gp(m) => m.predict_row(row),
            Fitted::Tree(m) => m.predict_row(row),
            Fitted::Forest(m) => m.predict_row(row),
            Fitted::Boosted(m) => m.predict_row(row),
        })
    }

    pub fn predict(&self, x: &[Vec<f64>]) -> Result<Vec<f64>> {
        if !self.is_fitted() {
            return Err(MlError::NotFitted);
        }
        validate(x, None, Some(self.n_features))?;
        x.iter().map(|r| self.predict_row(r)).collect()
    }

    /// Training-set RMSE per boosting round, for boosted kinds.
    pub fn boosting_curve(&self) -> Option<&[f64]> {
        match &self.fitted {
            Some(Fitted::Boosted(m)) => Some(&m.train_rmse),
            _ => None,
        }
    }

    /// Writes `QMLMODEL1` on the first line followed by the JSON model.
    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{MODEL_MAGIC}")?;
        serde_json::to_writer(&mut w, self)?;
        writeln!(w)
    }

    pub fn read_from<R: BufRead>(mut r: R, origin: &Path) -> Result<Self> {
        let format = |message: String| MlError::Format {
            path: origin.to_path_buf(),
            message,
        };
        let mut first = String::new();
        r.read_line(&mut first).map_err(|e| format(e.to_string()))?;
        if first.trim_end() != MODEL_MAGIC {
            return Err(format(format!("missing {MODEL_MAGIC} header")));
        }
        serde_json::from_reader(r).map_err(|e| format(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let io = |source| MlError::Io {
            path: path.to_path_buf(),
            source,
        };
        let f = std::fs::File::create(path).map_err(io)?;
        let mut w = std::io::BufWriter::new(f);
        self.write_to(&mut w).map_err(io)?;
        w.flush().map_err(io)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|source| MlError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::read_from(std::io::BufReader::new(f), path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn data() -> (Vec<Vec<f64>>, Vec<f64>) {
        let x: Vec<Vec<f64>> = (0..60)
            .map(|i| vec![(i as f64 * 0.37).sin(), (i as f64 * 0.11).cos() * 3.0])
            .collect();
        let y = x.iter().map(|r| r[0] * r[1] + 0.5 * r[0]).collect();
        (x, y)
    }

    #[test]
    fn kind_names_round_trip() {
        for k in ModelKind::ALL {
            assert_eq!(k.name().parse::<ModelKind>().unwrap(), k);
        }
        assert_eq!("LGBM".parse::<ModelKind>().unwrap(), ModelKind::HistGbdt);
        assert!("svr".parse::<ModelKind>().is_err());
    }

    #[test]
    fn every_kind_fits_predicts_and_is_deterministic() {
        let (x, y) = data();
        for kind in ModelKind::ALL {
            let mut params = Hyperparams::defaults(kind);
            params.n_trees = 20;
            params.rounds = 30;
            let mut a = Regressor::with_params(kind, params, 9);
            let mut b = Regressor::with_params(kind, params, 9);
            a.fit(&x, &y).unwrap();
            b.fit(&x, &y).unwrap();
            let pa = a.predict(&x).unwrap();
            assert_eq!(pa, b.predict(&x).unwrap(), "{kind}");
            assert!(pa.iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn gbdt_starts_from_the_mean() {
        let (x, y) = data();
        let mut params = Hyperparams::defaults(ModelKind::Gbdt);
        params.rounds = 0;
        let mut m = Regressor::with_params(ModelKind::Gbdt, params, 0);
        m.fit(&x, &y).unwrap();
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        assert_eq!(m.predict_row(&[0.0, 0.0]).unwrap(), mean);
    }

    #[test]
    fn input_errors() {
        let (x, y) = data();
        let m = Regressor::new(ModelKind::Knn, 0);
        assert!(matches!(m.predict(&x), Err(MlError::NotFitted)));
        let mut m = Regressor::new(ModelKind::DecisionTree, 0);
        let mut bad = x.clone();
        bad[3][1] = f64::NAN;
        assert!(matches!(m.fit(&bad, &y), Err(MlError::InvalidInput(_))));
        assert!(m.fit(&x, &y[1..]).is_err());
        m.fit(&x, &y).unwrap();
        assert!(matches!(m.predict(&[vec![1.0]]), Err(MlError::Dimension(_))));
    }

    #[test]
    fn persistence_round_trip() {
        let (x, y) = data();
        let dir = tempfile::tempdir().unwrap();
        for kind in ModelKind::ALL {
            let mut params = Hyperparams::defaults(kind);
            params.n_trees = 5;
            params.rounds = 10;
            let mut m = Regressor::with_params(kind, params, 1);
            m.fit(&x, &y).unwrap();
            let path = dir.path().join(format!("{kind}.model"));
            m.save(&path).unwrap();
            let text = std::fs::read_to_string(&path).unwrap();
            assert!(text.starts_with("QMLMODEL1\n"));
            let back = Regressor::load(&path).unwrap();
            assert_eq!(back.predict(&x).unwrap(), m.predict(&x).unwrap());
        }
        let junk = dir.path().join("junk");
        std::fs::write(&junk, "NOTAMODEL\n{}").unwrap();
        assert!(matches!(Regressor::load(&junk), Err(MlError::Format { .. })));
    }
}

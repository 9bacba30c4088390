use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierKind {
    /// softmax over cosine similarity to each prototype
    Cosine,
    /// softmax over negative euclidean distance
    Euclidean,
    LogisticRegression,
}

impl ClassifierKind {
    pub const ALL: [ClassifierKind; 3] = [
        ClassifierKind::LogisticRegression,
        ClassifierKind::Euclidean,
        ClassifierKind::Cosine,
    ];

    pub fn short(self) -> &'static str {
        match self {
            ClassifierKind::Cosine => "CO",
            ClassifierKind::Euclidean => "EU",
            ClassifierKind::LogisticRegression => "LR",
        }
    }
}

impl fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ClassifierKind::Cosine => "cosine",
            ClassifierKind::Euclidean => "euclidean",
            ClassifierKind::LogisticRegression => "logistic_regression",
        })
    }
}

impl std::str::FromStr for ClassifierKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cosine" | "co" => Ok(ClassifierKind::Cosine),
            "euclidean" | "eu" => Ok(ClassifierKind::Euclidean),
            "logistic_regression" | "logistic" | "lr" => Ok(ClassifierKind::LogisticRegression),
            other => Err(Error::Argument(format!("unknown classifier `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction<T> {
    pub probabilities: Vec<T>,
    /// index into the episode's class order
    pub predicted: usize,
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

fn norm<T: Real>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

/// First index of the maximum.
fn argmax<T: Real>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

fn softmax<T: Real>(scores: &[T]) -> Vec<T> {
    let max = scores.iter().copied().fold(T::neg_infinity(), T::max);
    let exp: Vec<T> = scores.iter().map(|&s| (s - max).exp()).collect();
    let total = exp.iter().copied().fold(T::zero(), |a, b| a + b);
    exp.into_iter().map(|e| e / total).collect()
}

fn similarities<T: Real>(query: &[T], prototypes: &[Vec<T>], kind: ClassifierKind) -> Result<Vec<T>> {
    match kind {
        ClassifierKind::Cosine => {
            let qn = norm(query);
            if qn == T::zero() {
                return Err(Error::Numerics("query vector has zero norm".into()));
            }
            prototypes
                .iter()
                .map(|p| {
                    let pn = norm(p);
                    if pn == T::zero() {
                        return Err(Error::Numerics("prototype has zero norm".into()));
                    }
                    Ok(dot(query, p) / (qn * pn))
                })
                .collect()
        }
        ClassifierKind::Euclidean => Ok(prototypes
            .iter()
            .map(|p| {
                let d2 = query
                    .iter()
                    .zip(p)
                    .fold(T::zero(), |acc, (&a, &b)| acc + (a - b) * (a - b));
                -d2.sqrt()
            })
            .collect()),
        ClassifierKind::LogisticRegression => Err(Error::Argument(
            "logistic regression needs a fitted EpisodeClassifier".into(),
        )),
    }
}

/// Nearest-prototype classification: softmax of the similarity scores,
/// ties resolved toward the lowest class index.
pub fn classify<T: Real>(
    query: &[T],
    prototypes: &[Vec<T>],
    kind: ClassifierKind,
) -> Result<Prediction<T>> {
    if prototypes.is_empty() {
        return Err(Error::Argument("no prototypes".into()));
    }
    if let Some(p) = prototypes.iter().find(|p| p.len() != query.len()) {
        return Err(Error::Dimension(format!(
            "query has length {}, prototype has length {}",
            query.len(),
            p.len()
        )));
    }
    let scores = similarities(query, prototypes, kind)?;
    Ok(Prediction {
        predicted: argmax(&scores),
        probabilities: softmax(&scores),
    })
}

/// Full-batch gradient descent settings for the logistic-regression head.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticConfig {
    pub iterations: usize,
    pub learning_rate: f64,
    /// L2 penalty; `None` means `1 / (n_way * k_shot)`.
    pub l2: Option<f64>,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        Self {
            iterations: 100,
            learning_rate: 1.0,
            l2: None,
        }
    }
}

fn l2_normalized<T: Real>(v: &[T]) -> Vec<T> {
    let n = norm(v);
    if n == T::zero() {
        v.to_vec()
    } else {
        v.iter().map(|&x| x / n).collect()
    }
}

/// Multinomial logistic regression on L2-normalized features.
#[derive(Debug, Clone, PartialEq)]
struct LogisticModel<T> {
    /// one weight row per class
    weights: Vec<Vec<T>>,
    bias: Vec<T>,
}

impl<T: Real> LogisticModel<T> {
    fn scores(&self, x: &[T]) -> Vec<T> {
        self.weights
            .iter()
            .zip(&self.bias)
            .map(|(w, &b)| dot(w, x) + b)
            .collect()
    }

    fn fit(
        features: &[Vec<T>],
        labels: &[usize],
        classes: usize,
        l2: f64,
        config: &LogisticConfig,
    ) -> Self {
        let dim = features[0].len();
        let xs: Vec<Vec<T>> = features.iter().map(|f| l2_normalized(f)).collect();
        let n = T::from_usize(xs.len()).expect("count fits");
        let lr = T::lit(config.learning_rate);
        let lambda = T::lit(l2);
        let mut model = Self {
            weights: vec![vec![T::zero(); dim]; classes],
            bias: vec![T::zero(); classes],
        };
        for _ in 0..config.iterations {
            let mut grad_w = vec![vec![T::zero(); dim]; classes];
            let mut grad_b = vec![T::zero(); classes];
            for (x, &y) in xs.iter().zip(labels) {
                let p = softmax(&model.scores(x));
                for c in 0..classes {
                    let err = p[c] - if c == y { T::one() } else { T::zero() };
                    grad_b[c] = grad_b[c] + err;
                    for (g, &xv) in grad_w[c].iter_mut().zip(x) {
                        *g = *g + err * xv;
                    }
                }
            }
            for c in 0..classes {
                for (w, g) in model.weights[c].iter_mut().zip(&grad_w[c]) {
                    *w = *w - lr * (*g / n + lambda * *w);
                }
                model.bias[c] = model.bias[c] - lr * grad_b[c] / n;
            }
        }
        model
    }
}

/// Per-episode classifier over the episode's class order.
#[derive(Debug, Clone, PartialEq)]
pub enum EpisodeClassifier<T> {
    Prototype {
        kind: ClassifierKind,
        prototypes: Vec<Vec<T>>,
    },
    Logistic(LogisticModelHandle<T>),
}

/// Opaque fitted logistic-regression head.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticModelHandle<T>(LogisticModel<T>);

impl<T: Real> EpisodeClassifier<T> {
    /// For the logistic head the training rows are every support feature plus
    /// one fused prototype per class, so the fusion factor affects all heads.
    pub fn fit(
        kind: ClassifierKind,
        prototypes: &[Vec<T>],
        support: &[Vec<Vec<T>>],
        config: &LogisticConfig,
    ) -> Result<Self> {
        match kind {
            ClassifierKind::Cosine | ClassifierKind::Euclidean => Ok(Self::Prototype {
                kind,
                prototypes: prototypes.to_vec(),
            }),
            ClassifierKind::LogisticRegression => {
                let classes = prototypes.len();
                let shots = support.first().map_or(0, Vec::len);
                if classes == 0 || shots == 0 {
                    return Err(Error::Argument("empty support set".into()));
                }
                let mut features = vec![];
                let mut labels = vec![];
                for (c, rows) in support.iter().enumerate() {
                    for r in rows {
                        features.push(r.clone());
                        labels.push(c);
                    }
                }
                for (c, p) in prototypes.iter().enumerate() {
                    features.push(p.clone());
                    labels.push(c);
                }
                let l2 = config.l2.unwrap_or(1.0 / (classes * shots) as f64);
                Ok(Self::Logistic(LogisticModelHandle(LogisticModel::fit(
                    &features, &labels, classes, l2, config,
                ))))
            }
        }
    }

    pub fn predict(&self, query: &[T]) -> Result<Prediction<T>> {
        match self {
            Self::Prototype { kind, prototypes } => classify(query, prototypes, *kind),
            Self::Logistic(LogisticModelHandle(model)) => {
                let scores = model.scores(&l2_normalized(query));
                Ok(Prediction {
                    predicted: argmax(&scores),
                    probabilities: softmax(&scores),
                })
            }
        }
    }
}

//! Client datasets and deterministic splitting.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One training example: a feature vector and a dense integer class label
/// (kept 0 for regression-style objectives that only read the features).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub x: Vec<f64>,
    pub y: usize,
}

impl LabeledExample {
    pub fn new(x: Vec<f64>, y: usize) -> Self {
        LabeledExample { x, y }
    }
}

/// A client's local data as disjoint train/validation/test partitions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClientDataset {
    pub train: Vec<LabeledExample>,
    pub validation: Vec<LabeledExample>,
    pub test: Vec<LabeledExample>,
}

impl ClientDataset {
    pub fn total_len(&self) -> usize {
        self.train.len() + self.validation.len() + self.test.len()
    }

    pub fn split(&self, which: Split) -> &[LabeledExample] {
        match which {
            Split::Train => &self.train,
            Split::Validation => &self.validation,
            Split::Test => &self.test,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Validation,
    Test,
}

/// Randomly partitions `examples` into train/validation/test.
///
/// Validation and test receive `floor(f * n)` examples each; the remainder
/// goes to train, so the held-out splits are never larger than requested.
/// Deterministic given the RNG stream.
pub fn split_dataset(
    examples: Vec<LabeledExample>,
    fractions: (f64, f64, f64),
    rng: &mut impl Rng,
) -> Result<ClientDataset> {
    let (f_train, f_val, f_test) = fractions;
    if f_train <= 0.0 || f_val < 0.0 || f_test < 0.0 {
        return Err(Error::config("split fractions must be positive"));
    }
    let sum = f_train + f_val + f_test;
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::config(format!(
            "split fractions must sum to 1, got {sum}"
        )));
    }
    let n = examples.len();
    if n < 3 {
        return Err(Error::config(format!(
            "need at least 3 examples to split, got {n}"
        )));
    }

    let n_val = (f_val * n as f64).floor() as usize;
    let n_test = (f_test * n as f64).floor() as usize;
    let n_train = n - n_val - n_test;

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);

    let mut slots: Vec<Option<LabeledExample>> = examples.into_iter().map(Some).collect();
    let mut take = |indices: &[usize]| -> Vec<LabeledExample> {
        indices.iter().map(|&i| slots[i].take().unwrap()).collect()
    };

    let train = take(&order[..n_train]);
    let validation = take(&order[n_train..n_train + n_val]);
    let test = take(&order[n_train + n_val..]);

    Ok(ClientDataset {
        train,
        validation,
        test,
    })
}

/// Writes examples in the portable column-text format: one example per line,
/// label first, then the features space-separated.
pub fn dump_examples(w: &mut impl std::io::Write, examples: &[LabeledExample]) -> std::io::Result<()> {
    for ex in examples {
        write!(w, "{}", ex.y)?;
        for v in &ex.x {
            write!(w, " {v}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::train::StudentModel;
use crate::data::{Dataset, LabelSpace};
use crate::error::{Error, Result};
use crate::integration::{ensemble_predict, single_teacher_predict};
use crate::math::argmax;
use crate::teacher::TeacherModel;

/// Anything that maps a feature vector to a global label index.
pub trait Classifier: Sync {
    fn classify(&self, x: &[f64]) -> Result<usize>;
    fn num_classes(&self) -> usize;
}

impl Classifier for StudentModel {
    fn classify(&self, x: &[f64]) -> Result<usize> {
        Ok(argmax(&self.model.logits(x)?))
    }

    fn num_classes(&self) -> usize {
        self.label_space.num_labels()
    }
}

/// Argmax over concatenated teacher logits.
pub struct Ensemble<'a> {
    pub teachers: &'a [TeacherModel],
    pub space: &'a LabelSpace,
}

impl Classifier for Ensemble<'_> {
    fn classify(&self, x: &[f64]) -> Result<usize> {
        ensemble_predict(self.teachers, self.space, x)
    }

    fn num_classes(&self) -> usize {
        self.space.num_labels()
    }
}

/// One teacher with out-of-subset labels padded to zero.
pub struct SingleTeacher<'a> {
    pub teacher: &'a TeacherModel,
    pub space: &'a LabelSpace,
}

impl Classifier for SingleTeacher<'_> {
    fn classify(&self, x: &[f64]) -> Result<usize> {
        single_teacher_predict(self.teacher, self.space, x)
    }

    fn num_classes(&self) -> usize {
        self.space.num_labels()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub accuracy: f64,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
    /// Recall per true class; `None` for classes absent from the test set.
    pub per_class_accuracy: Vec<Option<f64>>,
}

fn predictions<C: Classifier + ?Sized>(model: &C, features: &[Vec<f64>]) -> Result<Vec<usize>> {
    features.par_iter().map(|x| model.classify(x)).collect()
}

pub(crate) fn accuracy_of<C: Classifier + ?Sized>(model: &C, features: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
    if features.is_empty() {
        return Err(Error::Eval("empty evaluation set".into()));
    }
    let preds = predictions(model, features)?;
    let hits = preds.iter().zip(labels).filter(|(p, y)| p == y).count();
    Ok(hits as f64 / features.len() as f64)
}

/// Accuracy and confusion matrix on a labeled test set.
pub fn evaluate_accuracy<C: Classifier + ?Sized>(model: &C, test: &Dataset) -> Result<EvalResult> {
    let labels = test.require_labels("evaluation")?;
    if test.is_empty() {
        return Err(Error::Eval("empty test set".into()));
    }
    let k = model.num_classes();
    test.check_labels(k)?;
    let preds = predictions(model, test.features())?;
    let mut confusion = vec![vec![0usize; k]; k];
    for (&y, &p) in labels.iter().zip(&preds) {
        if p >= k {
            return Err(Error::Internal(format!("prediction {p} out of range for {k} classes")));
        }
        confusion[y][p] += 1;
    }
    let hits: usize = (0..k).map(|c| confusion[c][c]).sum();
    let per_class_accuracy = confusion
        .iter()
        .enumerate()
        .map(|(c, row)| {
            let n: usize = row.iter().sum();
            (n > 0).then(|| row[c] as f64 / n as f64)
        })
        .collect();
    Ok(EvalResult {
        accuracy: hits as f64 / test.len() as f64,
        confusion,
        per_class_accuracy,
    })
}

//! Sequence classifier: one recurrent layer whose final hidden state feeds a
//! fully connected softmax readout, trained with cross-entropy.

use rayon::prelude::*;

use crate::bptt::{backward_sequence, forward_sequence};
use crate::cells::{CellKind, CellParams};
use crate::data::SequenceDataset;
use crate::error::{Error, Result};
use crate::numkernel::{argmax, glorot_uniform, softmax, Matrix, SeededRng};

/// Cell parameters plus the dense readout to class logits.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierParams {
    pub cell: CellParams,
    /// k x n readout matrix.
    pub readout_w: Matrix,
    /// Length-k readout bias.
    pub readout_b: Vec<f64>,
}

impl ClassifierParams {
    pub fn init(kind: CellKind, n: usize, m: usize, k: usize, rng: &mut SeededRng) -> Self {
        let cell = CellParams::init(kind, n, m, rng);
        ClassifierParams {
            cell,
            readout_w: glorot_uniform(rng, k, n),
            readout_b: vec![0.0; k],
        }
    }

    pub fn zeros(kind: CellKind, n: usize, m: usize, k: usize) -> Self {
        ClassifierParams {
            cell: CellParams::zeros(kind, n, m),
            readout_w: Matrix::zeros(k, n),
            readout_b: vec![0.0; k],
        }
    }

    pub fn zeros_like(&self) -> Self {
        ClassifierParams::zeros(self.cell.kind, self.cell.n, self.cell.m, self.classes())
    }

    pub fn classes(&self) -> usize {
        self.readout_b.len()
    }

    /// Cell parameters plus `k*n + k` readout scalars.
    pub fn flat_len(&self) -> usize {
        self.cell.flat_len() + self.classes() * self.cell.n + self.classes()
    }

    /// Flat order: cell enumeration, then readout matrix row-major, then bias.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = self.cell.flatten();
        out.extend_from_slice(self.readout_w.data());
        out.extend_from_slice(&self.readout_b);
        out
    }

    pub fn assign_from_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.flat_len() {
            return Err(Error::Dimension(format!(
                "flat classifier length {} does not match schema length {}",
                flat.len(),
                self.flat_len()
            )));
        }
        let cell_len = self.cell.flat_len();
        self.cell.assign_from_flat(&flat[..cell_len])?;
        let w_len = self.readout_w.data().len();
        self.readout_w
            .data_mut()
            .copy_from_slice(&flat[cell_len..cell_len + w_len]);
        self.readout_b
            .copy_from_slice(&flat[cell_len + w_len..]);
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.cell.is_finite()
            && self.readout_w.is_finite()
            && self.readout_b.iter().all(|x| x.is_finite())
    }
}

/// Classifier output for one sequence.
#[derive(Clone, Debug)]
pub struct Prediction {
    pub logits: Vec<f64>,
    pub probabilities: Vec<f64>,
    /// Argmax of the probabilities, lowest index on ties.
    pub class: usize,
}

/// Per-example training result: loss, prediction, and gradients shaped like
/// the classifier parameters.
#[derive(Clone, Debug)]
pub struct SampleEval {
    pub loss: f64,
    pub prediction: Prediction,
    pub grads: ClassifierParams,
}

fn readout(params: &ClassifierParams, h: &[f64]) -> Prediction {
    let mut logits = params.readout_w.mul_vec(h);
    for (l, b) in logits.iter_mut().zip(&params.readout_b) {
        *l += b;
    }
    let probabilities = softmax(&logits);
    let class = argmax(&probabilities);
    Prediction {
        logits,
        probabilities,
        class,
    }
}

/// Forward pass to class probabilities: `logits = V h_T + c`.
pub fn predict(params: &ClassifierParams, xs: &[Vec<f64>]) -> Result<Prediction> {
    let (state, _) = forward_sequence(&params.cell, xs)?;
    Ok(readout(params, &state.h))
}

/// Cross-entropy loss and exact gradients for one labelled sequence. The
/// logit gradient is `p - onehot(label)`; the cell receives `Vᵀ (p - onehot)`
/// through the full backward sweep.
pub fn loss_and_grad(
    params: &ClassifierParams,
    xs: &[Vec<f64>],
    label: usize,
) -> Result<SampleEval> {
    let k = params.classes();
    if label >= k {
        return Err(Error::Input(format!(
            "label {label} out of range for {k} classes"
        )));
    }
    let (state, tape) = forward_sequence(&params.cell, xs)?;
    let prediction = readout(params, &state.h);
    let loss = -prediction.probabilities[label].ln();

    let mut d_logits = prediction.probabilities.clone();
    d_logits[label] -= 1.0;

    let mut grads = params.zeros_like();
    grads.readout_w.add_outer(&d_logits, &state.h);
    grads.readout_b.copy_from_slice(&d_logits);

    let d_h = params.readout_w.mul_vec_t(&d_logits);
    let cell_grads = backward_sequence(&params.cell, &tape, &d_h)?;
    grads.cell = cell_grads.cell;

    Ok(SampleEval {
        loss,
        prediction,
        grads,
    })
}

/// Fraction of examples whose predicted class equals the label.
pub fn accuracy(params: &ClassifierParams, dataset: &SequenceDataset) -> Result<f64> {
    if dataset.examples.is_empty() {
        return Err(Error::Input("accuracy over an empty dataset".into()));
    }
    let correct = dataset
        .examples
        .par_iter()
        .map(|ex| {
            predict(params, &ex.xs).map(|p| usize::from(p.class == ex.label))
        })
        .try_reduce(|| 0usize, |a, b| Ok(a + b))?;
    Ok(correct as f64 / dataset.examples.len() as f64)
}

/// Mean cross-entropy loss over a dataset, without gradients.
pub fn mean_loss(params: &ClassifierParams, dataset: &SequenceDataset) -> Result<f64> {
    if dataset.examples.is_empty() {
        return Err(Error::Input("loss over an empty dataset".into()));
    }
    let total = dataset
        .examples
        .par_iter()
        .map(|ex| {
            if ex.label >= params.classes() {
                return Err(Error::Input(format!(
                    "label {} out of range for {} classes",
                    ex.label,
                    params.classes()
                )));
            }
            predict(params, &ex.xs).map(|p| -p.probabilities[ex.label].ln())
        })
        .try_reduce(|| 0.0, |a, b| Ok(a + b))?;
    Ok(total / dataset.examples.len() as f64)
}

/// Central-difference check over every classifier scalar (cell, readout
/// matrix, readout bias) against the cross-entropy loss.
pub fn classifier_gradient_check(
    params: &ClassifierParams,
    xs: &[Vec<f64>],
    label: usize,
) -> Result<f64> {
    use crate::bptt::{relative_error, GRAD_CHECK_EPS};

    let analytic = loss_and_grad(params, xs, label)?.grads.flatten();
    let base = params.flatten();
    let mut probe = params.clone();
    let mut theta = base.clone();
    let mut max_rel: f64 = 0.0;
    for j in 0..base.len() {
        theta[j] = base[j] + GRAD_CHECK_EPS;
        probe.assign_from_flat(&theta)?;
        let plus = loss_and_grad(&probe, xs, label)?.loss;

        theta[j] = base[j] - GRAD_CHECK_EPS;
        probe.assign_from_flat(&theta)?;
        let minus = loss_and_grad(&probe, xs, label)?.loss;

        theta[j] = base[j];
        let numeric = (plus - minus) / (2.0 * GRAD_CHECK_EPS);
        max_rel = max_rel.max(relative_error(analytic[j], numeric));
    }
    Ok(max_rel)
}

use crate::error::{Result, SlampError};
use crate::tensor::Tensor;

/// Mean softmax cross-entropy over a `[batch, classes]` logit tensor.
///
/// Returns the loss and its gradient with respect to the logits. The loss is
/// evaluated in `f64` with the log-sum-exp shift.
pub fn cross_entropy_loss(logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor)> {
    let &[batch, classes] = logits.shape() else {
        return Err(SlampError::InvalidShape {
            shape: logits.shape().to_vec(),
            reason: "logits must be [batch, classes]".into(),
        });
    };
    if labels.len() != batch {
        return Err(SlampError::ShapeMismatch {
            op: "cross_entropy_loss",
            left: vec![batch],
            right: vec![labels.len()],
        });
    }
    if batch == 0 {
        return Err(SlampError::EmptyDataset);
    }
    let mut loss = 0.0f64;
    let mut grad = vec![0.0f32; batch * classes];
    let inv_batch = 1.0 / batch as f64;
    for (b, &label) in labels.iter().enumerate() {
        if label >= classes {
            return Err(SlampError::LabelOutOfRange { label, classes });
        }
        let row = &logits.data()[b * classes..(b + 1) * classes];
        let max = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v as f64));
        let exps: Vec<f64> = row.iter().map(|&v| (v as f64 - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        loss += (z.ln() + max - row[label] as f64) * inv_batch;
        for (c, e) in exps.iter().enumerate() {
            let target = if c == label { 1.0 } else { 0.0 };
            grad[b * classes + c] = ((e / z - target) * inv_batch) as f32;
        }
    }
    Ok((loss, Tensor::new(vec![batch, classes], grad)?))
}

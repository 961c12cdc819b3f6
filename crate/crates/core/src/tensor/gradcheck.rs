use super::Tensor;
use crate::error::{Error, Result};

/// Outcome of a finite-difference gradient check.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// Max relative error per input, in input order.
    pub per_input: Vec<f32>,
    pub max_rel_err: f32,
}

/// Compares analytic gradients of a scalar-valued tensor function against
/// central finite differences (f(x+eps) - f(x-eps)) / (2 eps), with the
/// difference quotient taken in f64.
///
/// Errors are measured relative to the largest analytic gradient magnitude of
/// the same input, so small-gradient elements are judged against the input's
/// gradient scale rather than their own near-zero values.
pub fn gradcheck<F>(f: F, inputs: &[Tensor], eps: f32) -> Result<GradCheckReport>
where
    F: Fn(&[Tensor]) -> Result<Tensor>,
{
    for (i, t) in inputs.iter().enumerate() {
        if !t.is_var() {
            return Err(Error::Usage(format!(
                "gradcheck input {i} must be a leaf variable"
            )));
        }
        t.clear_grad();
    }
    let y = f(inputs)?;
    if y.len() != 1 {
        return Err(Error::Usage(format!(
            "gradcheck function must be scalar-valued, got shape {:?}",
            y.shape()
        )));
    }
    y.backward()?;
    let analytic: Vec<Vec<f32>> = inputs
        .iter()
        .map(|t| t.grad().unwrap_or_else(|| vec![0.0; t.len()]))
        .collect();

    let mut per_input = Vec::with_capacity(inputs.len());
    for (i, input) in inputs.iter().enumerate() {
        let gmax = analytic[i]
            .iter()
            .fold(0.0f32, |acc, v| acc.max(v.abs()));
        let mut worst = 0.0f32;
        for j in 0..input.len() {
            let eval = |delta: f32| -> Result<f64> {
                let mut data = input.data().to_vec();
                data[j] += delta;
                let probe = Tensor::new(input.shape().to_vec(), data)?;
                let mut probe_inputs: Vec<Tensor> = inputs.to_vec();
                probe_inputs[i] = probe;
                Ok(f(&probe_inputs)?.item()? as f64)
            };
            let fp = eval(eps)?;
            let fm = eval(-eps)?;
            let numeric = ((fp - fm) / (2.0 * eps as f64)) as f32;
            let a = analytic[i][j];
            let denom = (a.abs() + numeric.abs()).max(gmax).max(1e-12);
            let err = (a - numeric).abs() / denom;
            if err > worst {
                worst = err;
            }
        }
        per_input.push(worst);
    }
    let max_rel_err = per_input.iter().fold(0.0f32, |a, b| a.max(*b));
    Ok(GradCheckReport {
        per_input,
        max_rel_err,
    })
}

/// Directional variant for deep composites: checks the analytic gradient's
/// projection along its own direction against a central finite difference of
/// the whole tensor moved by +-eps in that direction.
///
/// Per-element differences of a deep f32 network sit below the forward
/// pass's quantization noise; the directional derivative concentrates the
/// whole gradient norm into one measurable slope.
pub fn gradcheck_directional<F>(f: F, inputs: &[Tensor], eps: f32) -> Result<GradCheckReport>
where
    F: Fn(&[Tensor]) -> Result<Tensor>,
{
    for (i, t) in inputs.iter().enumerate() {
        if !t.is_var() {
            return Err(Error::Usage(format!(
                "gradcheck input {i} must be a leaf variable"
            )));
        }
        t.clear_grad();
    }
    let y = f(inputs)?;
    if y.len() != 1 {
        return Err(Error::Usage(format!(
            "gradcheck function must be scalar-valued, got shape {:?}",
            y.shape()
        )));
    }
    y.backward()?;

    let mut per_input = Vec::with_capacity(inputs.len());
    for (i, input) in inputs.iter().enumerate() {
        let grad = input.grad().unwrap_or_else(|| vec![0.0; input.len()]);
        let norm = (grad.iter().map(|g| (*g as f64).powi(2)).sum::<f64>()).sqrt();
        if norm == 0.0 {
            per_input.push(0.0);
            continue;
        }
        let dir: Vec<f64> = grad.iter().map(|g| *g as f64 / norm).collect();
        let eval = |sign: f64| -> Result<f64> {
            let data: Vec<f32> = input
                .data()
                .iter()
                .zip(&dir)
                .map(|(x, d)| (*x as f64 + sign * eps as f64 * d) as f32)
                .collect();
            let probe = Tensor::new(input.shape().to_vec(), data)?;
            let mut probe_inputs: Vec<Tensor> = inputs.to_vec();
            probe_inputs[i] = probe;
            Ok(f(&probe_inputs)?.item()? as f64)
        };
        let numeric = (eval(1.0)? - eval(-1.0)?) / (2.0 * eps as f64);
        // Analytic directional derivative along g/|g| is exactly |g|.
        let err = ((norm - numeric).abs() / norm.abs().max(numeric.abs()).max(1e-12)) as f32;
        per_input.push(err);
    }
    let max_rel_err = per_input.iter().fold(0.0f32, |a, b| a.max(*b));
    Ok(GradCheckReport {
        per_input,
        max_rel_err,
    })
}

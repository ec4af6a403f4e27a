//! Central finite-difference gradient oracle.
//!
//! This is test machinery: it re-evaluates a forward-only closure at
//! perturbed inputs and never touches the backward implementation it is
//! checking.

use super::tensor::Tensor;
use super::NnError;
use crate::rng::Rng;

pub const DEFAULT_STEP: f64 = 1e-5;

/// Worst relative error found, with its location.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub worst_input: usize,
    pub worst_coord: usize,
    pub coords_checked: usize,
}

/// Relative error with an absolute floor of 1, so near-zero gradient pairs
/// compare absolutely.
fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1.0)
}

/// Compares backward-pass gradients of `build` against central finite
/// differences in f64.
///
/// `build` must construct the scalar loss from the given leaves alone.
/// `coords_per_input` limits how many coordinates of each input are probed
/// (0 checks all of them); probed coordinates are drawn from `rng`.
pub fn check_gradients<F>(
    build: F,
    inputs: &[(Vec<usize>, Vec<f64>)],
    step: f64,
    coords_per_input: usize,
    rng: &mut Rng,
) -> Result<GradCheckReport, NnError>
where
    F: Fn(&[Tensor<f64>]) -> Result<Tensor<f64>, NnError>,
{
    // Analytic gradients.
    let leaves: Vec<Tensor<f64>> = inputs
        .iter()
        .map(|(shape, data)| Tensor::param(shape.clone(), data.clone()))
        .collect::<Result<_, _>>()?;
    let loss = build(&leaves)?;
    loss.backward()?;
    let analytic: Vec<Vec<f64>> = leaves
        .iter()
        .map(|l| l.grad().unwrap_or_else(|| vec![0.0; l.len()]))
        .collect();

    let eval = |values: &[Vec<f64>]| -> Result<f64, NnError> {
        let consts: Vec<Tensor<f64>> = inputs
            .iter()
            .zip(values)
            .map(|((shape, _), data)| Tensor::from_vec(shape.clone(), data.clone()))
            .collect::<Result<_, _>>()?;
        build(&consts)?.item()
    };

    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst_input: 0,
        worst_coord: 0,
        coords_checked: 0,
    };
    let base: Vec<Vec<f64>> = inputs.iter().map(|(_, d)| d.clone()).collect();
    for (which, (_, data)) in inputs.iter().enumerate() {
        let coords: Vec<usize> = if coords_per_input == 0 || coords_per_input >= data.len() {
            (0..data.len()).collect()
        } else {
            rng.sample_indices(data.len(), coords_per_input)
        };
        for coord in coords {
            let mut plus = base.clone();
            plus[which][coord] += step;
            let mut minus = base.clone();
            minus[which][coord] -= step;
            let numeric = (eval(&plus)? - eval(&minus)?) / (2.0 * step);
            let err = rel_err(analytic[which][coord], numeric);
            report.coords_checked += 1;
            if err > report.max_rel_err {
                report.max_rel_err = err;
                report.worst_input = which;
                report.worst_coord = coord;
            }
        }
    }
    Ok(report)
}

/// Random tensor values in [-1, 1).
pub fn random_values(shape: &[usize], rng: &mut Rng) -> (Vec<usize>, Vec<f64>) {
    let n: usize = shape.iter().product();
    (
        shape.to_vec(),
        (0..n).map(|_| rng.range(-1.0, 1.0)).collect(),
    )
}

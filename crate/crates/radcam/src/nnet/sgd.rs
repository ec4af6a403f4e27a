//! SGD with momentum over named parameters.

use super::real::Real;
use super::tensor::Tensor;
use super::NnError;

/// A trainable array with its momentum buffer.
pub struct Parameter<T: Real> {
    pub name: String,
    pub shape: Vec<usize>,
    pub value: Vec<T>,
    pub velocity: Vec<T>,
}

impl<T: Real> Parameter<T> {
    pub fn new(name: String, shape: Vec<usize>, value: Vec<T>) -> Self {
        let n = value.len();
        Parameter {
            name,
            shape,
            value,
            velocity: vec![T::ZERO; n],
        }
    }
}

/// `v <- momentum * v + g; p <- p - lr * v`, one gradient buffer per
/// parameter in order.
pub fn apply_gradients<T: Real>(
    params: &mut [Parameter<T>],
    grads: &[Vec<T>],
    lr: T,
    momentum: T,
) -> Result<(), NnError> {
    if grads.len() != params.len() {
        return Err(NnError::MissingGrad {
            name: format!("expected {} gradient buffers, got {}", params.len(), grads.len()),
        });
    }
    for (p, g) in params.iter_mut().zip(grads) {
        if g.len() != p.value.len() {
            return Err(NnError::MissingGrad {
                name: format!("{}: gradient length {} != {}", p.name, g.len(), p.value.len()),
            });
        }
        for i in 0..p.value.len() {
            p.velocity[i] = momentum * p.velocity[i] + g[i];
            p.value[i] -= lr * p.velocity[i];
        }
    }
    Ok(())
}

/// Reads gradients off graph leaves (in parameter order), applies the update,
/// and zeroes the leaf gradients. A leaf without a populated gradient is an
/// error.
pub fn sgd_step<T: Real>(
    params: &mut [Parameter<T>],
    leaves: &[Tensor<T>],
    lr: T,
    momentum: T,
) -> Result<(), NnError> {
    if leaves.len() != params.len() {
        return Err(NnError::MissingGrad {
            name: format!("expected {} leaves, got {}", params.len(), leaves.len()),
        });
    }
    let mut grads = Vec::with_capacity(params.len());
    for (p, leaf) in params.iter().zip(leaves) {
        let Some(g) = leaf.grad() else {
            return Err(NnError::MissingGrad {
                name: p.name.clone(),
            });
        };
        grads.push(g);
    }
    apply_gradients(params, &grads, lr, momentum)?;
    for leaf in leaves {
        leaf.zero_grad();
    }
    Ok(())
}

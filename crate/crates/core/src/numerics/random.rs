use rand::Rng;
use rand_distr::StandardNormal;

use super::{Real, Tensor};
use crate::error::Result;

/// I.i.d. standard normal tensor. Fails on a zero or empty shape.
pub fn sample_gaussian<S: Real, R: Rng + ?Sized>(
    shape: &[usize],
    rng: &mut R,
) -> Result<Tensor<S>> {
    super::tensor::check_shape(shape)?;
    let count: usize = shape.iter().product();
    let data = (0..count)
        .map(|_| S::of(rng.sample::<f64, _>(StandardNormal)))
        .collect();
    Tensor::new(shape.to_vec(), data)
}

/// Uniform on `[-bound, bound]`.
pub fn sample_uniform<S: Real, R: Rng + ?Sized>(
    shape: &[usize],
    bound: f64,
    rng: &mut R,
) -> Result<Tensor<S>> {
    super::tensor::check_shape(shape)?;
    let count: usize = shape.iter().product();
    let data = (0..count)
        .map(|_| S::of(rng.random_range(-bound..=bound)))
        .collect();
    Tensor::new(shape.to_vec(), data)
}

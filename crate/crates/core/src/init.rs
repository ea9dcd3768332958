use rand::Rng;

use crate::tensor::Tensor;

/// Uniform(-√(1/fan_in), +√(1/fan_in)) weights.
pub fn fan_in_uniform<R: Rng>(rng: &mut R, rows: usize, cols: usize, fan_in: usize) -> Tensor {
    let bound = (1.0 / fan_in.max(1) as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.gen_range(-bound..bound)).collect();
    Tensor::matrix(rows, cols, data).expect("rows * cols values")
}

pub fn ones(n: usize) -> Tensor {
    Tensor::filled(vec![n], 1.0)
}

pub fn zeros(n: usize) -> Tensor {
    Tensor::zeros(vec![n])
}

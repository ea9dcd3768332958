use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Road network topology: raw adjacency and its symmetric GCN normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct RoadNetwork {
    adjacency: Tensor,
    normalized: Tensor,
}

impl RoadNetwork {
    pub fn new(adjacency: Tensor) -> Result<Self> {
        let normalized = normalize_adjacency(&adjacency)?;
        Ok(RoadNetwork { adjacency, normalized })
    }

    pub fn nodes(&self) -> usize {
        self.adjacency.rows()
    }

    pub fn adjacency(&self) -> &Tensor {
        &self.adjacency
    }

    /// `D̃^{-1/2} (A + I) D̃^{-1/2}`.
    pub fn normalized(&self) -> &Tensor {
        &self.normalized
    }
}

/// `Â = D̃^{-1/2}(A + I)D̃^{-1/2}` with `D̃` the degree matrix of `A + I`.
///
/// Rejects non-square, negative, or non-finite adjacency.
pub fn normalize_adjacency(a: &Tensor) -> Result<Tensor> {
    let n = a.rows();
    if a.shape().len() != 2 || a.cols() != n {
        return Err(Error::Data(format!("adjacency must be square, got {:?}", a.shape())));
    }
    if let Some(bad) = a.data().iter().find(|x| !x.is_finite() || **x < 0.0) {
        return Err(Error::Data(format!(
            "adjacency entries must be finite and nonnegative, found {bad}"
        )));
    }
    let mut with_loops = a.clone();
    for i in 0..n {
        with_loops.set(i, i, a.get(i, i) + 1.0);
    }
    let inv_sqrt_deg: Vec<f64> = (0..n)
        .map(|i| 1.0 / with_loops.row(i).iter().sum::<f64>().sqrt())
        .collect();
    let mut out = Tensor::zeros(vec![n, n]);
    for i in 0..n {
        for j in 0..n {
            out.set(i, j, inv_sqrt_deg[i] * with_loops.get(i, j) * inv_sqrt_deg[j]);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_node_is_self_loop() {
        let n = normalize_adjacency(&Tensor::from_rows(&[[0.0]]).unwrap()).unwrap();
        assert_eq!(n.data(), &[1.0]);
    }

    #[test]
    fn two_node_edge() {
        let a = Tensor::from_rows(&[[0.0, 1.0], [1.0, 0.0]]).unwrap();
        let n = normalize_adjacency(&a).unwrap();
        for v in n.data() {
            assert!((v - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn isolated_node_keeps_unit_self_loop() {
        let a = Tensor::from_rows(&[[0.0, 1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]]).unwrap();
        let n = normalize_adjacency(&a).unwrap();
        assert_eq!(n.get(2, 2), 1.0);
        assert_eq!(n.get(2, 0), 0.0);
    }

    #[test]
    fn rejects_negative_and_non_square() {
        assert!(matches!(
            normalize_adjacency(&Tensor::from_rows(&[[0.0, -1.0], [1.0, 0.0]]).unwrap()),
            Err(Error::Data(_))
        ));
        assert!(normalize_adjacency(&Tensor::zeros(vec![2, 3])).is_err());
    }

    #[test]
    fn matches_scalar_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 5;
        let mut a = Tensor::zeros(vec![n, n]);
        for i in 0..n {
            for j in 0..n {
                if i != j && rng.gen_bool(0.5) {
                    a.set(i, j, rng.gen_range(0.1..2.0));
                }
            }
        }
        let got = normalize_adjacency(&a).unwrap();
        let mut deg = vec![0.0; n];
        for i in 0..n {
            for j in 0..n {
                deg[i] += a.get(i, j) + if i == j { 1.0 } else { 0.0 };
            }
        }
        for i in 0..n {
            for j in 0..n {
                let aij = a.get(i, j) + if i == j { 1.0 } else { 0.0 };
                let expect = aij / (deg[i].sqrt() * deg[j].sqrt());
                assert!((got.get(i, j) - expect).abs() <= 1e-12);
            }
        }
    }

    fn random_symmetric(rng: &mut ChaCha8Rng, n: usize) -> Tensor {
        let mut a = Tensor::zeros(vec![n, n]);
        for i in 0..n {
            for j in i + 1..n {
                if rng.gen_bool(0.3) {
                    let w = rng.gen_range(0.1..3.0);
                    a.set(i, j, w);
                    a.set(j, i, w);
                }
            }
        }
        a
    }

    #[test]
    fn symmetric_with_spectral_radius_at_most_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for n in 1..=20 {
            let a_hat = normalize_adjacency(&random_symmetric(&mut rng, n)).unwrap();
            for i in 0..n {
                for j in 0..n {
                    assert!((a_hat.get(i, j) - a_hat.get(j, i)).abs() <= 1e-12);
                }
            }
            // power iteration on Â² (positive semidefinite) gives λ_max(Â)²
            let mut v: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..1.0)).collect();
            let mut lambda = 0.0;
            for _ in 0..500 {
                let w: Vec<f64> = (0..n).map(|i| (0..n).map(|j| a_hat.get(i, j) * v[j]).sum()).collect();
                let w2: Vec<f64> = (0..n).map(|i| (0..n).map(|j| a_hat.get(i, j) * w[j]).sum()).collect();
                let norm = w2.iter().map(|x| x * x).sum::<f64>().sqrt();
                lambda = norm / v.iter().map(|x| x * x).sum::<f64>().sqrt();
                v = w2.iter().map(|x| x / norm).collect();
            }
            assert!(lambda.sqrt() <= 1.0 + 1e-9, "n={n} radius {}", lambda.sqrt());
        }
    }
}

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::linalg::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OptimizerSpec {
    Sgd {
        lr: f64,
    },
    Adam {
        lr: f64,
        #[serde(default = "beta1")]
        beta1: f64,
        #[serde(default = "beta2")]
        beta2: f64,
        #[serde(default = "eps")]
        eps: f64,
    },
}

fn beta1() -> f64 {
    0.9
}
fn beta2() -> f64 {
    0.999
}
fn eps() -> f64 {
    1e-8
}

impl OptimizerSpec {
    pub fn adam(lr: f64) -> Self {
        OptimizerSpec::Adam { lr, beta1: beta1(), beta2: beta2(), eps: eps() }
    }
}

pub struct Optimizer {
    spec: OptimizerSpec,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: i32,
}

impl Optimizer {
    pub fn new(spec: OptimizerSpec, params: &[Matrix]) -> Self {
        let zeros = || params.iter().map(|p| vec![0.0; p.as_slice().len()]).collect();
        Self { spec, m: zeros(), v: zeros(), t: 0 }
    }

    pub fn step(&mut self, params: &mut [Matrix], grads: &[Matrix]) {
        self.t += 1;
        for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            match self.spec {
                OptimizerSpec::Sgd { lr } => {
                    for (x, d) in p.as_mut_slice().iter_mut().zip(g.as_slice()) {
                        *x -= lr * d;
                    }
                }
                OptimizerSpec::Adam { lr, beta1, beta2, eps } => {
                    let c1 = 1.0 - beta1.powi(self.t);
                    let c2 = 1.0 - beta2.powi(self.t);
                    let (m, v) = (&mut self.m[k], &mut self.v[k]);
                    for (i, (x, d)) in p.as_mut_slice().iter_mut().zip(g.as_slice()).enumerate() {
                        m[i] = beta1 * m[i] + (1.0 - beta1) * d;
                        v[i] = beta2 * v[i] + (1.0 - beta2) * d * d;
                        *x -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
                    }
                }
            }
        }
    }
}

/// `rows x cols` with orthonormal columns (or rows, when wide), from a
/// Gaussian draw orthonormalized by modified Gram-Schmidt.
pub fn orthogonal_init(rows: usize, cols: usize, rng: &mut impl Rng) -> Matrix {
    let (tall, short) = (rows.max(cols), rows.min(cols));
    // `short` vectors of length `tall`
    let mut q: Vec<Vec<f64>> = Vec::with_capacity(short);
    while q.len() < short {
        let mut v: Vec<f64> = (0..tall).map(|_| StandardNormal.sample(rng)).collect();
        for _ in 0..2 {
            for u in &q {
                let d: f64 = u.iter().zip(&v).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(u).for_each(|(x, a)| *x -= d * a);
            }
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-8 {
            q.push(v.into_iter().map(|x| x / n).collect());
        }
    }
    let mut m = Matrix::zeros(rows, cols);
    for (k, u) in q.iter().enumerate() {
        for (i, &x) in u.iter().enumerate() {
            if rows >= cols {
                m[(i, k)] = x;
            } else {
                m[(k, i)] = x;
            }
        }
    }
    m
}

/// Normal with standard deviation `sd`, redrawn outside `±2 sd`.
pub fn truncated_normal_init(rows: usize, cols: usize, sd: f64, rng: &mut impl Rng) -> Matrix {
    let mut m = Matrix::zeros(rows, cols);
    for x in m.as_mut_slice() {
        *x = loop {
            let z: f64 = StandardNormal.sample(rng);
            if z.abs() <= 2.0 {
                break sd * z;
            }
        };
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn orthogonal_init_has_unit_singular_values() {
        let mut rng = stream(0, "init");
        for (r, c) in [(3, 3), (6, 3), (3, 6), (128, 64)] {
            let w = orthogonal_init(r, c, &mut rng);
            let s = crate::linalg::svd(&w).unwrap();
            assert!(s.singular_values.iter().all(|v| (v - 1.0).abs() < 1e-12), "{r}x{c}");
        }
    }

    #[test]
    fn truncated_normal_stays_in_range() {
        let w = truncated_normal_init(50, 50, 0.1, &mut stream(0, "t"));
        assert!(w.as_slice().iter().all(|v| v.abs() <= 0.2));
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut p = vec![Matrix::from_vec(1, 2, vec![1.0, -1.0]).unwrap()];
        let g = vec![Matrix::from_vec(1, 2, vec![3.0, -0.5]).unwrap()];
        let mut opt = Optimizer::new(OptimizerSpec::adam(0.01), &p);
        opt.step(&mut p, &g);
        assert!((p[0][(0, 0)] - 0.99).abs() < 1e-8);
        assert!((p[0][(0, 1)] + 0.99).abs() < 1e-8);
    }

    #[test]
    fn sgd_step() {
        let mut p = vec![Matrix::from_vec(1, 1, vec![1.0]).unwrap()];
        let mut opt = Optimizer::new(OptimizerSpec::Sgd { lr: 0.1 }, &p);
        opt.step(&mut p, &[Matrix::from_vec(1, 1, vec![2.0]).unwrap()]);
        assert!((p[0][(0, 0)] - 0.8).abs() < 1e-15);
    }
}

//! Matrix-valued reverse-mode differentiation.
//!
//! Batches are rows: a layer maps `x: B x n` to `x Wᵀ + 1 bᵀ` with
//! `W: m x n` and the bias stored as an `m x 1` column.

use crate::activation::ActivationSpec;
use crate::error::Result;
use crate::linalg::{svd, DomainBox, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

/// Elementwise maps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Unary {
    Act(ActivationSpec),
    Exp,
    Ln,
    Abs,
    Square,
    Neg,
    Scale(f64),
    AddConst(f64),
    Recip,
    /// `2 ln cosh x`, i.e. `ln(1/(1 - tanh² x))`.
    LnCosh2,
    /// `1/σ′(-x)`: the inverse derivative at the image of `-x`.
    InvDerivAtNeg(ActivationSpec),
}

impl Unary {
    fn eval(self, x: f64) -> f64 {
        match self {
            Unary::Act(a) => a.apply(x),
            Unary::Exp => x.exp(),
            Unary::Ln => x.ln(),
            Unary::Abs => x.abs(),
            Unary::Square => x * x,
            Unary::Neg => -x,
            Unary::Scale(c) => c * x,
            Unary::AddConst(c) => x + c,
            Unary::Recip => 1.0 / x,
            Unary::LnCosh2 => {
                // 2 ln cosh x = 2|x| + 2 ln(1 + e^{-2|x|}) - 2 ln 2
                let a = x.abs();
                2.0 * a + 2.0 * (-2.0 * a).exp().ln_1p() - 2.0 * std::f64::consts::LN_2
            }
            Unary::InvDerivAtNeg(a) => 1.0 / a.derivative(-x),
        }
    }

    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Unary::Act(a) => a.derivative(x),
            Unary::Exp => y,
            Unary::Ln => 1.0 / x,
            Unary::Abs => x.signum(),
            Unary::Square => 2.0 * x,
            Unary::Neg => -1.0,
            Unary::Scale(c) => c,
            Unary::AddConst(_) => 1.0,
            Unary::Recip => -y * y,
            Unary::LnCosh2 => 2.0 * x.tanh(),
            Unary::InvDerivAtNeg(a) => y * y * a.second_derivative(-x),
        }
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    /// `x Wᵀ + 1 bᵀ`
    Linear {
        x: Var,
        w: Var,
        b: Var,
    },
    Unary {
        a: Var,
        f: Unary,
    },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    /// Multiplies every entry by a `1 x 1` variable.
    ScaleBy {
        a: Var,
        s: Var,
    },
    Sum(Var),
    Mean(Var),
    RowSum(Var),
    /// Mean cross-entropy of row-wise softmax; keeps the probabilities.
    SoftmaxXent {
        logits: Var,
        labels: Vec<usize>,
        probs: Matrix,
    },
    /// Precomputed gradient of a scalar function of one input.
    Custom {
        a: Var,
        grad: Matrix,
    },
    /// `max(|lo_i|, |hi_i|)` of the interval image; keeps the corner
    /// subgradients `∂/∂W_ij` and `∂/∂b_i`.
    IntervalRadius {
        w: Var,
        b: Var,
        dw: Matrix,
        db: Vec<f64>,
    },
    Max(Var, Var),
}

#[derive(Debug, Clone)]
struct Node {
    value: Matrix,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn scalar(v: f64) -> Matrix {
    Matrix::from_raw(1, 1, vec![v])
}

fn zip_with(a: &Matrix, b: &Matrix, f: impl Fn(f64, f64) -> f64) -> Matrix {
    assert_eq!((a.rows(), a.cols()), (b.rows(), b.cols()), "shape mismatch");
    let data = a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| f(*x, *y)).collect();
    Matrix::from_raw(a.rows(), a.cols(), data)
}

fn map(a: &Matrix, f: impl Fn(f64) -> f64) -> Matrix {
    let data = a.as_slice().iter().map(|x| f(*x)).collect();
    Matrix::from_raw(a.rows(), a.cols(), data)
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: Matrix, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn constant(&mut self, v: f64) -> Var {
        self.leaf(scalar(v))
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn scalar_value(&self, v: Var) -> f64 {
        self.value(v)[(0, 0)]
    }

    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Var {
        let (xv, wv, bv) = (self.value(x), self.value(w), self.value(b));
        assert_eq!(xv.cols(), wv.cols(), "linear: input width");
        assert_eq!((bv.rows(), bv.cols()), (wv.rows(), 1), "linear: bias shape");
        let (n, m, k) = (xv.rows(), wv.rows(), wv.cols());
        let mut out = Matrix::zeros(n, m);
        for i in 0..n {
            let xr = xv.row(i);
            for j in 0..m {
                let wr = wv.row(j);
                let mut s = bv[(j, 0)];
                for t in 0..k {
                    s += xr[t] * wr[t];
                }
                out[(i, j)] = s;
            }
        }
        self.push(out, Op::Linear { x, w, b })
    }

    pub fn unary(&mut self, a: Var, f: Unary) -> Var {
        let v = map(self.value(a), |x| f.eval(x));
        self.push(v, Op::Unary { a, f })
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = zip_with(self.value(a), self.value(b), |x, y| x + y);
        self.push(v, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = zip_with(self.value(a), self.value(b), |x, y| x - y);
        self.push(v, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = zip_with(self.value(a), self.value(b), |x, y| x * y);
        self.push(v, Op::Mul(a, b))
    }

    pub fn max(&mut self, a: Var, b: Var) -> Var {
        let v = zip_with(self.value(a), self.value(b), f64::max);
        self.push(v, Op::Max(a, b))
    }

    pub fn scale_by(&mut self, a: Var, s: Var) -> Var {
        let c = self.scalar_value(s);
        let v = map(self.value(a), |x| c * x);
        self.push(v, Op::ScaleBy { a, s })
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let v = self.value(a).as_slice().iter().sum();
        self.push(scalar(v), Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let m = self.value(a);
        let v = m.as_slice().iter().sum::<f64>() / m.as_slice().len() as f64;
        self.push(scalar(v), Op::Mean(a))
    }

    pub fn row_sum(&mut self, a: Var) -> Var {
        let m = self.value(a);
        let data = (0..m.rows()).map(|i| m.row(i).iter().sum()).collect();
        let v = Matrix::from_raw(m.rows(), 1, data);
        self.push(v, Op::RowSum(a))
    }

    pub fn softmax_xent(&mut self, logits: Var, labels: &[usize]) -> Var {
        let z = self.value(logits);
        assert_eq!(z.rows(), labels.len(), "one label per row");
        let mut probs = Matrix::zeros(z.rows(), z.cols());
        let mut loss = 0.0;
        for (i, &y) in labels.iter().enumerate() {
            let row = z.row(i);
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            for (j, v) in row.iter().enumerate() {
                probs[(i, j)] = (v - lse).exp();
            }
            loss += lse - row[y];
        }
        let n = labels.len() as f64;
        self.push(scalar(loss / n), Op::SoftmaxXent { logits, labels: labels.to_vec(), probs })
    }

    /// `ln det(WᵀW) = 2 Σ ln s_i`, gradient `2 U Σ⁻¹ Vᵀ` with `s` clamped
    /// below at `1e-8`; and `‖W‖ = s_1` with gradient `u_1 v_1ᵀ`. One SVD.
    pub fn svd_terms(&mut self, w: Var) -> Result<(Var, Var)> {
        let wv = self.value(w).clone();
        let s = svd(&wv)?;
        let (r, c) = (wv.rows(), wv.cols());
        let mut g_det = Matrix::zeros(r, c);
        let mut g_norm = Matrix::zeros(r, c);
        let mut logdet = 0.0;
        for (t, &sv) in s.singular_values.iter().enumerate() {
            let sc = sv.max(1e-8);
            logdet += 2.0 * sc.ln();
            for i in 0..r {
                for j in 0..c {
                    let uv = s.u[(i, t)] * s.v[(j, t)];
                    g_det[(i, j)] += 2.0 * uv / sc;
                    if t == 0 {
                        g_norm[(i, j)] = uv;
                    }
                }
            }
        }
        let top = s.singular_values.first().copied().unwrap_or(0.0);
        let a = self.push(scalar(logdet), Op::Custom { a: w, grad: g_det });
        let b = self.push(scalar(top), Op::Custom { a: w, grad: g_norm });
        Ok((a, b))
    }

    /// `‖b‖_∞` with the subgradient at the first maximizing entry.
    pub fn norm_inf(&mut self, b: Var) -> Var {
        let bv = self.value(b);
        let (mut k, mut best) = (0, 0.0);
        for (i, v) in bv.as_slice().iter().enumerate() {
            if v.abs() > best {
                best = v.abs();
                k = i;
            }
        }
        let mut grad = Matrix::zeros(bv.rows(), bv.cols());
        if best > 0.0 {
            grad.as_mut_slice()[k] = bv.as_slice()[k].signum();
        }
        self.push(scalar(best), Op::Custom { a: b, grad })
    }

    /// Per output `i`, `max(|lo_i|, |hi_i|)` for the interval image of
    /// `domain` under `x ↦ W x + b`, differentiated through the maximizing
    /// corner.
    pub fn interval_radius(&mut self, w: Var, b: Var, domain: &DomainBox) -> Var {
        let (wv, bv) = (self.value(w), self.value(b));
        let (m, n) = (wv.rows(), wv.cols());
        let mut out = Matrix::zeros(m, 1);
        let mut dw = Matrix::zeros(m, n);
        let mut db = vec![0.0; m];
        for i in 0..m {
            let (mut hi, mut lo) = (bv[(i, 0)], bv[(i, 0)]);
            let mut hi_corner = vec![0.0; n];
            let mut lo_corner = vec![0.0; n];
            for j in 0..n {
                let (a, c) = (domain.lower()[j], domain.upper()[j]);
                let wij = wv[(i, j)];
                let (xa, xc) = (wij * a, wij * c);
                if xc >= xa {
                    hi += xc;
                    hi_corner[j] = c;
                    lo += xa;
                    lo_corner[j] = a;
                } else {
                    hi += xa;
                    hi_corner[j] = a;
                    lo += xc;
                    lo_corner[j] = c;
                }
            }
            let (corner, sign, val) = if hi.abs() >= lo.abs() {
                (hi_corner, hi.signum(), hi.abs())
            } else {
                (lo_corner, lo.signum(), lo.abs())
            };
            out[(i, 0)] = val;
            for j in 0..n {
                dw[(i, j)] = sign * corner[j];
            }
            db[i] = sign;
        }
        self.push(out, Op::IntervalRadius { w, b, dw, db })
    }

    /// Gradients of the `1 x 1` output with respect to every node.
    pub fn backward(&self, out: Var) -> Gradients {
        let mut g: Vec<Option<Matrix>> = vec![None; self.nodes.len()];
        g[out.0] = Some(scalar(1.0));
        let acc = |g: &mut Vec<Option<Matrix>>, v: Var, delta: Matrix| match &mut g[v.0] {
            Some(m) => {
                for (x, d) in m.as_mut_slice().iter_mut().zip(delta.as_slice()) {
                    *x += d;
                }
            }
            slot @ None => *slot = Some(delta),
        };
        for idx in (0..=out.0).rev() {
            let Some(go) = g[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {}
                Op::Linear { x, w, b } => {
                    let (xv, wv) = (self.value(*x), self.value(*w));
                    let (n, m, k) = (xv.rows(), wv.rows(), wv.cols());
                    let mut gx = Matrix::zeros(n, k);
                    let mut gw = Matrix::zeros(m, k);
                    let mut gb = Matrix::zeros(m, 1);
                    for i in 0..n {
                        for j in 0..m {
                            let d = go[(i, j)];
                            if d == 0.0 {
                                continue;
                            }
                            gb[(j, 0)] += d;
                            let (xr, wr) = (xv.row(i), wv.row(j));
                            for t in 0..k {
                                gx[(i, t)] += d * wr[t];
                                gw[(j, t)] += d * xr[t];
                            }
                        }
                    }
                    acc(&mut g, *x, gx);
                    acc(&mut g, *w, gw);
                    acc(&mut g, *b, gb);
                }
                Op::Unary { a, f } => {
                    let av = self.value(*a);
                    let data = av
                        .as_slice()
                        .iter()
                        .zip(node.value.as_slice())
                        .zip(go.as_slice())
                        .map(|((x, y), d)| d * f.derivative(*x, *y))
                        .collect();
                    acc(&mut g, *a, Matrix::from_raw(av.rows(), av.cols(), data));
                }
                Op::Add(a, b) => {
                    acc(&mut g, *a, go.clone());
                    acc(&mut g, *b, go.clone());
                }
                Op::Sub(a, b) => {
                    acc(&mut g, *a, go.clone());
                    acc(&mut g, *b, map(&go, |d| -d));
                }
                Op::Mul(a, b) => {
                    acc(&mut g, *a, zip_with(&go, self.value(*b), |d, y| d * y));
                    acc(&mut g, *b, zip_with(&go, self.value(*a), |d, x| d * x));
                }
                Op::Max(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let ga = zip_with(&zip_with(av, bv, |x, y| if x >= y { 1.0 } else { 0.0 }), &go, |s, d| s * d);
                    let gb = zip_with(&ga, &go, |x, d| d - x);
                    acc(&mut g, *a, ga);
                    acc(&mut g, *b, gb);
                }
                Op::ScaleBy { a, s } => {
                    let c = self.scalar_value(*s);
                    let av = self.value(*a);
                    let gs: f64 = go.as_slice().iter().zip(av.as_slice()).map(|(d, x)| d * x).sum();
                    acc(&mut g, *a, map(&go, |d| c * d));
                    acc(&mut g, *s, scalar(gs));
                }
                Op::Sum(a) | Op::Mean(a) => {
                    let av = self.value(*a);
                    let d = go[(0, 0)] / if matches!(node.op, Op::Mean(_)) { av.as_slice().len() as f64 } else { 1.0 };
                    acc(&mut g, *a, map(av, |_| d));
                }
                Op::RowSum(a) => {
                    let av = self.value(*a);
                    let mut ga = Matrix::zeros(av.rows(), av.cols());
                    for i in 0..av.rows() {
                        for j in 0..av.cols() {
                            ga[(i, j)] = go[(i, 0)];
                        }
                    }
                    acc(&mut g, *a, ga);
                }
                Op::SoftmaxXent { logits, labels, probs } => {
                    let scale = go[(0, 0)] / labels.len() as f64;
                    let mut gl = probs.clone();
                    for (i, &y) in labels.iter().enumerate() {
                        gl[(i, y)] -= 1.0;
                    }
                    acc(&mut g, *logits, map(&gl, |v| v * scale));
                }
                Op::Custom { a, grad } => {
                    let d = go[(0, 0)];
                    acc(&mut g, *a, map(grad, |v| v * d));
                }
                Op::IntervalRadius { w, b, dw, db } => {
                    let mut gw = dw.clone();
                    for i in 0..gw.rows() {
                        for j in 0..gw.cols() {
                            gw[(i, j)] *= go[(i, 0)];
                        }
                    }
                    let gb =
                        Matrix::from_raw(db.len(), 1, db.iter().enumerate().map(|(i, s)| s * go[(i, 0)]).collect());
                    acc(&mut g, *w, gw);
                    acc(&mut g, *b, gb);
                }
            }
            g[idx] = Some(go);
        }
        Gradients { grads: g }
    }
}

pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    /// Gradient with respect to `v`, zero-shaped like `like` when `v` does
    /// not influence the output.
    pub fn get(&self, v: Var, like: &Matrix) -> Matrix {
        self.grads[v.0].clone().unwrap_or_else(|| Matrix::zeros(like.rows(), like.cols()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd<F: Fn(f64) -> f64>(f: F, x: f64, h: f64) -> f64 {
        (f(x + h) - f(x - h)) / (2.0 * h)
    }

    #[test]
    fn unary_derivatives_match_differences() {
        let fs = [
            Unary::Act(ActivationSpec::Tanh),
            Unary::Act(ActivationSpec::smooth_leaky_relu()),
            Unary::Exp,
            Unary::Ln,
            Unary::Square,
            Unary::Recip,
            Unary::LnCosh2,
            Unary::InvDerivAtNeg(ActivationSpec::smooth_leaky_relu()),
        ];
        for f in fs {
            for x in [0.3, 1.1, 2.5] {
                let y = f.eval(x);
                let d = f.derivative(x, y);
                let n = fd(|t| f.eval(t), x, 1e-5);
                assert!((d - n).abs() <= 1e-7 * d.abs().max(1.0), "{f:?} at {x}: {d} vs {n}");
            }
        }
        // stable for large arguments
        assert!((Unary::LnCosh2.eval(400.0) - 2.0 * (400.0 - std::f64::consts::LN_2)).abs() < 1e-9);
    }

    #[test]
    fn quadratic_in_one_weight() {
        let mut t = Tape::new();
        let w = t.leaf(scalar(1.7));
        let s = t.unary(w, Unary::Square);
        let l = t.unary(s, Unary::Scale(3.0));
        let g = t.backward(l);
        assert!((g.get(w, &scalar(0.0))[(0, 0)] - 6.0 * 1.7).abs() < 1e-12);
    }

    #[test]
    fn shared_nodes_accumulate() {
        let mut t = Tape::new();
        let x = t.leaf(scalar(2.0));
        let y = t.mul(x, x);
        let z = t.add(y, x);
        let g = t.backward(z);
        assert_eq!(g.get(x, &scalar(0.0))[(0, 0)], 5.0);
    }
}

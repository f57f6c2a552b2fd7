//! The two trained models and their bound-based regularizers, written on
//! the tape.

use rand::Rng;

use super::autodiff::{Tape, Unary, Var};
use super::optim::{orthogonal_init, truncated_normal_init};
use crate::activation::ActivationSpec;
use crate::error::Result;
use crate::linalg::{DomainBox, Matrix};
use crate::network::{DomainMode, FinalTransform, LayerSpec, ModelFlavor, NetworkSpec};

/// One forward pass: data loss, regularizer value and `loss + λ r`.
pub struct Graph {
    pub tape: Tape,
    pub params: Vec<Var>,
    pub loss: Var,
    pub reg: Var,
    pub total: Var,
    pub output: Var,
}

impl Graph {
    pub fn loss(&self) -> f64 {
        self.tape.scalar_value(self.loss)
    }

    pub fn reg(&self) -> f64 {
        self.tape.scalar_value(self.reg)
    }

    pub fn total(&self) -> f64 {
        self.tape.scalar_value(self.total)
    }

    /// Gradient of `total` with respect to every parameter.
    pub fn gradients(&self) -> Vec<Matrix> {
        let g = self.tape.backward(self.total);
        self.params.iter().map(|&p| g.get(p, self.tape.value(p))).collect()
    }
}

fn column(v: &[f64]) -> Matrix {
    Matrix::from_vec(v.len(), 1, v.to_vec()).expect("column")
}

fn bias_vec(m: &Matrix) -> Vec<f64> {
    m.as_slice().to_vec()
}

/// Rows `idx` of `x`.
pub fn select_rows(x: &Matrix, idx: &[usize]) -> Matrix {
    let mut out = Matrix::zeros(idx.len(), x.cols());
    for (r, &i) in idx.iter().enumerate() {
        out.as_mut_slice()[r * x.cols()..(r + 1) * x.cols()].copy_from_slice(x.row(i));
    }
    out
}

// ---- synthetic regression ------------------------------------------------

/// `f(x) = w3 exp(-‖W2 tanh(W1 x + b1) + b2‖²)` with `W1: 3x3`, `W2: 6x3`.
/// Parameters in order `W1, b1, W2, b2, w3`.
pub fn synthetic_init(rng: &mut impl Rng) -> Vec<Matrix> {
    vec![
        orthogonal_init(3, 3, rng),
        Matrix::zeros(3, 1),
        orthogonal_init(6, 3, rng),
        Matrix::zeros(6, 1),
        Matrix::from_vec(1, 1, vec![1.0]).expect("1x1"),
    ]
}

/// Only `W1`, `W2` and `w3` are trained; the biases stay at zero.
pub const SYNTHETIC_FROZEN: [usize; 2] = [1, 3];

pub fn synthetic_input_domain() -> DomainBox {
    DomainBox::symmetric(3, 1.0).expect("valid box")
}

/// `r = |w3| ∏_i cosh²(m_i) / (|det W1ᵀW1|^{1/4} |det W2ᵀW2|^{1/4})`, with
/// `m_i` the largest endpoint modulus of `(W1 X0 + b1)_i`.
pub fn synthetic_graph(params: &[Matrix], x: &Matrix, t: &[f64], lambda: f64) -> Result<Graph> {
    let mut tape = Tape::new();
    let p: Vec<Var> = params.iter().map(|m| tape.leaf(m.clone())).collect();
    let (w1, b1, w2, b2, w3) = (p[0], p[1], p[2], p[3], p[4]);
    let xv = tape.leaf(x.clone());
    let tv = tape.leaf(column(t));

    let h = tape.linear(xv, w1, b1);
    let h = tape.unary(h, Unary::Act(ActivationSpec::Tanh));
    let z = tape.linear(h, w2, b2);
    let z2 = tape.unary(z, Unary::Square);
    let s = tape.row_sum(z2);
    let s = tape.unary(s, Unary::Neg);
    let e = tape.unary(s, Unary::Exp);
    let y = tape.scale_by(e, w3);
    let diff = tape.sub(y, tv);
    let sq = tape.unary(diff, Unary::Square);
    let loss = tape.mean(sq);

    let m = tape.interval_radius(w1, b1, &synthetic_input_domain());
    let lc = tape.unary(m, Unary::LnCosh2);
    let lc = tape.sum(lc);
    let aw = tape.unary(w3, Unary::Abs);
    let lw = tape.unary(aw, Unary::Ln);
    let (ld1, _) = tape.svd_terms(w1)?;
    let (ld2, _) = tape.svd_terms(w2)?;
    let ld = tape.add(ld1, ld2);
    let ld = tape.unary(ld, Unary::Scale(-0.25));
    let ln_r = tape.add(lw, lc);
    let ln_r = tape.add(ln_r, ld);
    let reg = tape.unary(ln_r, Unary::Exp);

    let weighted = tape.unary(reg, Unary::Scale(lambda));
    let total = tape.add(loss, weighted);
    Ok(Graph { tape, params: p, loss, reg, total, output: y })
}

/// The trained synthetic model as a network.
pub fn synthetic_spec(params: &[Matrix]) -> Result<NetworkSpec> {
    NetworkSpec::new(
        ModelFlavor::Plain,
        synthetic_input_domain(),
        vec![
            LayerSpec::dense(params[0].clone(), bias_vec(&params[1]), Some(ActivationSpec::Tanh)),
            LayerSpec::dense(params[2].clone(), bias_vec(&params[3]), None),
        ],
        FinalTransform::gaussian_bump(params[4][(0, 0)]),
        DomainMode::Tight,
    )
}

// ---- dense classifier ----------------------------------------------------

pub fn classifier_activation() -> ActivationSpec {
    ActivationSpec::smooth_leaky_relu()
}

/// Widths `input -> widths[0] -> ... -> classes`; the first two layers are
/// orthogonal, the rest truncated normal with `sd = sqrt(2 / (fan_in + fan_out))`.
/// Parameters alternate `W_l, b_l`.
pub fn classifier_init(input: usize, widths: &[usize], classes: usize, rng: &mut impl Rng) -> Vec<Matrix> {
    let mut dims = vec![input];
    dims.extend_from_slice(widths);
    dims.push(classes);
    let mut out = Vec::new();
    for l in 0..dims.len() - 1 {
        let (n, m) = (dims[l], dims[l + 1]);
        let w = if l < 2 {
            orthogonal_init(m, n, rng)
        } else {
            truncated_normal_init(m, n, (2.0 / (n + m) as f64).sqrt(), rng)
        };
        out.push(w);
        out.push(Matrix::zeros(m, 1));
    }
    out
}

pub fn classifier_input_domain(input: usize) -> DomainBox {
    DomainBox::cube(input, 0.0, 1.0).expect("valid box")
}

/// Cross-entropy plus `λ (r1 + r2 + r3)` over the first two layers:
/// `r1 = Σ 1/σ′(-R_l)`, `r2 = Σ 1/(1 + |det W_lᵀW_l|^{1/4})`, `r3 = Σ ‖W_l‖`,
/// with `R_l = ‖W_l‖ r_{l-1} + ‖b_l‖_∞` and `r_l = max |σ(±R_l)|`.
///
/// For this activation `1/σ′` is decreasing, so its supremum over
/// `σ([-R, R])` sits at `σ(-R)`.
pub fn classifier_graph(params: &[Matrix], x: &Matrix, labels: &[usize], lambda: f64) -> Result<Graph> {
    let act = classifier_activation();
    let mut tape = Tape::new();
    let p: Vec<Var> = params.iter().map(|m| tape.leaf(m.clone())).collect();
    let layers = p.len() / 2;
    let mut h = tape.leaf(x.clone());
    for l in 0..layers {
        h = tape.linear(h, p[2 * l], p[2 * l + 1]);
        if l + 1 < layers {
            h = tape.unary(h, Unary::Act(act));
        }
    }
    let loss = tape.softmax_xent(h, labels);

    let r0 = classifier_input_domain(x.cols()).sup_radius();
    let mut r_prev = tape.constant(r0);
    let (mut r1, mut r2, mut r3) = (tape.constant(0.0), tape.constant(0.0), tape.constant(0.0));
    for l in 0..2.min(layers) {
        let (ld, norm) = tape.svd_terms(p[2 * l])?;
        let binf = tape.norm_inf(p[2 * l + 1]);
        let big_r = tape.mul(norm, r_prev);
        let big_r = tape.add(big_r, binf);

        let inv = tape.unary(big_r, Unary::InvDerivAtNeg(act));
        r1 = tape.add(r1, inv);

        let q = tape.unary(ld, Unary::Scale(0.25));
        let q = tape.unary(q, Unary::Exp);
        let q = tape.unary(q, Unary::AddConst(1.0));
        let q = tape.unary(q, Unary::Recip);
        r2 = tape.add(r2, q);

        r3 = tape.add(r3, norm);

        let up = tape.unary(big_r, Unary::Act(act));
        let up = tape.unary(up, Unary::Abs);
        let neg = tape.unary(big_r, Unary::Neg);
        let down = tape.unary(neg, Unary::Act(act));
        let down = tape.unary(down, Unary::Abs);
        r_prev = tape.max(up, down);
    }
    let reg = tape.add(r1, r2);
    let reg = tape.add(reg, r3);
    let weighted = tape.unary(reg, Unary::Scale(lambda));
    let total = tape.add(loss, weighted);
    Ok(Graph { tape, params: p, loss, reg, total, output: h })
}

/// The trained classifier as a network scoring class `class`.
pub fn classifier_spec(params: &[Matrix], class: usize) -> Result<NetworkSpec> {
    let layers = params.len() / 2;
    let specs = (0..layers)
        .map(|l| {
            let act = (l + 1 < layers).then(classifier_activation);
            LayerSpec::dense(params[2 * l].clone(), bias_vec(&params[2 * l + 1]), act)
        })
        .collect();
    NetworkSpec::new(
        ModelFlavor::Plain,
        classifier_input_domain(params[0].cols()),
        specs,
        FinalTransform::softmax(class),
        DomainMode::NormRecipe,
    )
}

/// Fraction of rows whose largest logit is the label.
pub fn accuracy(logits: &Matrix, labels: &[usize]) -> f64 {
    let hits = labels
        .iter()
        .enumerate()
        .filter(|(i, &y)| {
            let row = logits.row(*i);
            let best = (0..row.len()).fold(0, |b, j| if row[j] > row[b] { j } else { b });
            best == y
        })
        .count();
    hits as f64 / labels.len() as f64
}

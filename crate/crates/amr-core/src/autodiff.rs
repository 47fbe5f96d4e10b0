//! Reverse-mode automatic differentiation over dense `f64` matrices.
//!
//! Every differentiable computation in the model (path encoding, graph
//! convolution, co-attention, scoring, losses) is expressed as a sequence of
//! ops recorded on a [`Tape`]. Calling [`Tape::backward`] from a scalar output
//! walks the recording in reverse and accumulates gradients for every node,
//! in particular the parameter leaves.
//!
//! Values are plain `ndarray::Array2<f64>`; vectors are n×1 or 1×n matrices
//! and scalars are 1×1. Shapes are asserted at record time — mismatches are
//! programming errors, not recoverable conditions.

use ndarray::Array2;

/// Dense f64 matrix, the only value type the tape knows about.
pub type Matrix = Array2<f64>;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Matmul(Var, Var),
    Transpose(Var),
    Reshape(Var),
    Scale(Var, f64),
    AddConst(Var),
    Relu(Var),
    LeakyRelu(Var, f64),
    Sigmoid(Var),
    Tanh(Var),
    Softplus(Var),
    /// Softmax down the rows of an n×1 column vector.
    SoftmaxCol(Var),
    /// Independent softmax across the columns of each row.
    SoftmaxRows(Var),
    SumAll(Var),
    /// Frobenius norm, yielding 1×1.
    Norm2(Var),
    /// `out[i, :] = col[i] * mat[i, :]` for `(mat, col)`.
    RowScale(Var, Var),
    /// Whole matrix scaled by a 1×1 variable: `(mat, scalar)`.
    ScaleVar(Var, Var),
    SumList(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceRows(Var, usize, usize),
    SliceCols(Var, usize, usize),
    /// Broadcast-add a 1×m row vector to every row of an n×m matrix.
    AddRowVec(Var, Var),
}

struct Node {
    value: Matrix,
    op: Op,
}

/// Gradients produced by [`Tape::backward`].
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `v`, if any path reached it.
    pub fn wrt(&self, v: Var) -> Option<&Matrix> {
        self.grads[v.0].as_ref()
    }

    /// Like [`Gradients::wrt`] but materializes zeros for unreached nodes.
    pub fn wrt_or_zeros(&self, v: Var, shape: (usize, usize)) -> Matrix {
        match self.grads[v.0] {
            Some(ref g) => g.clone(),
            None => Matrix::zeros(shape),
        }
    }
}

/// Append-only recording of a computation.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of recorded nodes.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    /// Value of a 1×1 node as a scalar.
    pub fn scalar(&self, v: Var) -> f64 {
        let m = self.value(v);
        assert_eq!(m.dim(), (1, 1), "scalar() on non-1x1 node");
        m[[0, 0]]
    }

    fn push(&mut self, value: Matrix, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn scalar_leaf(&mut self, x: f64) -> Var {
        self.leaf(Matrix::from_elem((1, 1), x))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.value(a).dim(), self.value(b).dim(), "add shape");
        let v = self.value(a) + self.value(b);
        self.push(v, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.value(a).dim(), self.value(b).dim(), "sub shape");
        let v = self.value(a) - self.value(b);
        self.push(v, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.value(a).dim(), self.value(b).dim(), "mul shape");
        let v = self.value(a) * self.value(b);
        self.push(v, Op::Mul(a, b))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(
            self.value(a).dim().1,
            self.value(b).dim().0,
            "matmul inner dim"
        );
        let v = self.value(a).dot(self.value(b));
        self.push(v, Op::Matmul(a, b))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let v = self.value(a).t().as_standard_layout().into_owned();
        self.push(v, Op::Transpose(a))
    }

    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Var {
        let (r, c) = self.value(a).dim();
        assert_eq!(r * c, rows * cols, "reshape element count");
        let v = self
            .value(a)
            .iter()
            .cloned()
            .collect::<Vec<f64>>();
        let v = Matrix::from_shape_vec((rows, cols), v).expect("reshape");
        self.push(v, Op::Reshape(a))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a) * c;
        self.push(v, Op::Scale(a, c))
    }

    pub fn add_const(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a) + c;
        self.push(v, Op::AddConst(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(|x| x.max(0.0));
        self.push(v, Op::Relu(a))
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        let v = self.value(a).mapv(|x| if x > 0.0 { x } else { slope * x });
        self.push(v, Op::LeakyRelu(a, slope))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(sigmoid_f);
        self.push(v, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(f64::tanh);
        self.push(v, Op::Tanh(a))
    }

    /// Numerically stable `ln(1 + e^x)` elementwise.
    pub fn softplus(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(softplus_f);
        self.push(v, Op::Softplus(a))
    }

    pub fn softmax_col(&mut self, a: Var) -> Var {
        assert_eq!(self.value(a).dim().1, 1, "softmax_col wants n x 1");
        let col: Vec<f64> = self.value(a).column(0).to_vec();
        let sm = softmax_slice(&col);
        let v = Matrix::from_shape_vec((sm.len(), 1), sm).unwrap();
        self.push(v, Op::SoftmaxCol(a))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let src = self.value(a);
        let mut v = src.clone();
        for mut row in v.rows_mut() {
            let sm = softmax_slice(&row.to_vec());
            row.assign(&ndarray::Array1::from_vec(sm));
        }
        self.push(v, Op::SoftmaxRows(a))
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let s = self.value(a).sum();
        self.push(Matrix::from_elem((1, 1), s), Op::SumAll(a))
    }

    pub fn norm2(&mut self, a: Var) -> Var {
        let s = self.value(a).iter().map(|x| x * x).sum::<f64>().sqrt();
        self.push(Matrix::from_elem((1, 1), s), Op::Norm2(a))
    }

    pub fn row_scale(&mut self, mat: Var, col: Var) -> Var {
        let (n, _) = self.value(mat).dim();
        assert_eq!(self.value(col).dim(), (n, 1), "row_scale col shape");
        let mut v = self.value(mat).clone();
        for (i, mut row) in v.rows_mut().into_iter().enumerate() {
            let c = self.nodes[col.0].value[[i, 0]];
            row.mapv_inplace(|x| x * c);
        }
        self.push(v, Op::RowScale(mat, col))
    }

    pub fn scale_var(&mut self, mat: Var, s: Var) -> Var {
        assert_eq!(self.value(s).dim(), (1, 1), "scale_var scalar shape");
        let c = self.scalar(s);
        let v = self.value(mat) * c;
        self.push(v, Op::ScaleVar(mat, s))
    }

    /// Elementwise sum of same-shaped matrices; one node regardless of arity.
    pub fn sum_list(&mut self, vars: &[Var]) -> Var {
        assert!(!vars.is_empty(), "sum_list of nothing");
        let mut v = self.value(vars[0]).clone();
        for &x in &vars[1..] {
            assert_eq!(self.value(x).dim(), v.dim(), "sum_list shape");
            v += self.value(x);
        }
        self.push(v, Op::SumList(vars.to_vec()))
    }

    /// Stack matrices with equal column counts on top of each other.
    pub fn concat_rows(&mut self, vars: &[Var]) -> Var {
        assert!(!vars.is_empty(), "concat_rows of nothing");
        let cols = self.value(vars[0]).dim().1;
        let total: usize = vars.iter().map(|&v| self.value(v).dim().0).sum();
        let mut out = Matrix::zeros((total, cols));
        let mut at = 0;
        for &v in vars {
            let m = self.value(v);
            assert_eq!(m.dim().1, cols, "concat_rows col count");
            let r = m.dim().0;
            out.slice_mut(ndarray::s![at..at + r, ..]).assign(m);
            at += r;
        }
        self.push(out, Op::ConcatRows(vars.to_vec()))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Var {
        let (r, _) = self.value(a).dim();
        assert!(start + len <= r, "slice_rows range");
        let v = self
            .value(a)
            .slice(ndarray::s![start..start + len, ..])
            .to_owned();
        self.push(v, Op::SliceRows(a, start, len))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let (_, c) = self.value(a).dim();
        assert!(start + len <= c, "slice_cols range");
        let v = self
            .value(a)
            .slice(ndarray::s![.., start..start + len])
            .to_owned();
        self.push(v, Op::SliceCols(a, start, len))
    }

    pub fn add_rowvec(&mut self, mat: Var, row: Var) -> Var {
        let (_, m) = self.value(mat).dim();
        assert_eq!(self.value(row).dim(), (1, m), "add_rowvec row shape");
        let r = self.value(row).row(0).to_owned();
        let mut v = self.value(mat).clone();
        for mut out in v.rows_mut() {
            out += &r;
        }
        self.push(v, Op::AddRowVec(mat, row))
    }

    /// Frobenius inner product `sum(a ⊙ b)` as a 1×1 node.
    pub fn frob_dot(&mut self, a: Var, b: Var) -> Var {
        let m = self.mul(a, b);
        self.sum_all(m)
    }

    /// Backpropagate from a 1×1 `loss` node through the whole recording.
    pub fn backward(&self, loss: Var) -> Gradients {
        assert_eq!(self.value(loss).dim(), (1, 1), "backward from non-scalar");
        let mut grads: Vec<Option<Matrix>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Matrix::from_elem((1, 1), 1.0));

        for idx in (0..=loss.0).rev() {
            let g = match grads[idx].take() {
                Some(g) => g,
                None => continue,
            };
            self.accumulate(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Gradients { grads }
    }

    fn accumulate(&self, idx: usize, g: &Matrix, grads: &mut [Option<Matrix>]) {
        let node = &self.nodes[idx];
        let val = |v: Var| &self.nodes[v.0].value;
        let mut bump = |v: Var, delta: Matrix| {
            match &mut grads[v.0] {
                Some(acc) => *acc += &delta,
                slot @ None => *slot = Some(delta),
            };
        };
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                bump(*a, g.clone());
                bump(*b, g.clone());
            }
            Op::Sub(a, b) => {
                bump(*a, g.clone());
                bump(*b, -g.clone());
            }
            Op::Mul(a, b) => {
                bump(*a, g * val(*b));
                bump(*b, g * val(*a));
            }
            Op::Matmul(a, b) => {
                bump(*a, g.dot(&val(*b).t()));
                bump(*b, val(*a).t().dot(g));
            }
            Op::Transpose(a) => bump(*a, g.t().to_owned()),
            Op::Reshape(a) => {
                let (r, c) = val(*a).dim();
                let flat: Vec<f64> = g.iter().cloned().collect();
                bump(*a, Matrix::from_shape_vec((r, c), flat).unwrap());
            }
            Op::Scale(a, c) => bump(*a, g * *c),
            Op::AddConst(a) => bump(*a, g.clone()),
            Op::Relu(a) => {
                let mask = val(*a).mapv(|x| if x > 0.0 { 1.0 } else { 0.0 });
                bump(*a, g * &mask);
            }
            Op::LeakyRelu(a, slope) => {
                let s = *slope;
                let mask = val(*a).mapv(|x| if x > 0.0 { 1.0 } else { s });
                bump(*a, g * &mask);
            }
            Op::Sigmoid(a) => {
                let y = &node.value;
                bump(*a, g * &(y * &(1.0 - y)));
            }
            Op::Tanh(a) => {
                let y = &node.value;
                bump(*a, g * &(1.0 - y * y));
            }
            Op::Softplus(a) => {
                let d = val(*a).mapv(sigmoid_f);
                bump(*a, g * &d);
            }
            Op::SoftmaxCol(a) => {
                let y = &node.value;
                let dot: f64 = y
                    .iter()
                    .zip(g.iter())
                    .map(|(yi, gi)| yi * gi)
                    .sum();
                bump(*a, y * &(g - dot));
            }
            Op::SoftmaxRows(a) => {
                let y = &node.value;
                let mut out = Matrix::zeros(y.dim());
                for (i, yrow) in y.rows().into_iter().enumerate() {
                    let grow = g.row(i);
                    let dot: f64 = yrow.iter().zip(grow.iter()).map(|(a, b)| a * b).sum();
                    for (j, o) in out.row_mut(i).iter_mut().enumerate() {
                        *o = yrow[j] * (grow[j] - dot);
                    }
                }
                bump(*a, out);
            }
            Op::SumAll(a) => {
                let s = g[[0, 0]];
                bump(*a, Matrix::from_elem(val(*a).dim(), s));
            }
            Op::Norm2(a) => {
                let n = node.value[[0, 0]];
                if n > 0.0 {
                    bump(*a, val(*a) * (g[[0, 0]] / n));
                }
            }
            Op::RowScale(mat, col) => {
                let m = val(*mat);
                let c = val(*col);
                let mut dmat = g.clone();
                for (i, mut row) in dmat.rows_mut().into_iter().enumerate() {
                    let ci = c[[i, 0]];
                    row.mapv_inplace(|x| x * ci);
                }
                let mut dcol = Matrix::zeros(c.dim());
                for i in 0..m.dim().0 {
                    dcol[[i, 0]] = g
                        .row(i)
                        .iter()
                        .zip(m.row(i).iter())
                        .map(|(a, b)| a * b)
                        .sum();
                }
                bump(*mat, dmat);
                bump(*col, dcol);
            }
            Op::ScaleVar(mat, s) => {
                let c = val(*s)[[0, 0]];
                bump(*mat, g * c);
                let ds: f64 = g
                    .iter()
                    .zip(val(*mat).iter())
                    .map(|(a, b)| a * b)
                    .sum();
                bump(*s, Matrix::from_elem((1, 1), ds));
            }
            Op::SumList(vs) => {
                for &v in vs {
                    bump(v, g.clone());
                }
            }
            Op::ConcatRows(vs) => {
                let mut at = 0;
                for &v in vs {
                    let r = val(v).dim().0;
                    bump(v, g.slice(ndarray::s![at..at + r, ..]).to_owned());
                    at += r;
                }
            }
            Op::SliceRows(a, start, len) => {
                let mut d = Matrix::zeros(val(*a).dim());
                d.slice_mut(ndarray::s![*start..*start + *len, ..]).assign(g);
                bump(*a, d);
            }
            Op::SliceCols(a, start, len) => {
                let mut d = Matrix::zeros(val(*a).dim());
                d.slice_mut(ndarray::s![.., *start..*start + *len]).assign(g);
                bump(*a, d);
            }
            Op::AddRowVec(mat, row) => {
                bump(*mat, g.clone());
                let colsum = g.sum_axis(ndarray::Axis(0));
                bump(*row, colsum.insert_axis(ndarray::Axis(0)));
            }
        }
    }
}

fn sigmoid_f(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softplus_f(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn softmax_slice(xs: &[f64]) -> Vec<f64> {
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = xs.iter().map(|x| (x - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

/// Central-difference gradient of `f` with respect to `x`, one entry at a time.
///
/// `f` must be a pure function of `x`. Used throughout the test suites as the
/// independent oracle for analytic gradients.
pub fn numeric_gradient<F>(x: &Matrix, eps: f64, mut f: F) -> Matrix
where
    F: FnMut(&Matrix) -> f64,
{
    let mut g = Matrix::zeros(x.dim());
    let mut probe = x.clone();
    for idx in ndarray::indices(x.dim()) {
        let orig = probe[idx];
        probe[idx] = orig + eps;
        let hi = f(&probe);
        probe[idx] = orig - eps;
        let lo = f(&probe);
        probe[idx] = orig;
        g[idx] = (hi - lo) / (2.0 * eps);
    }
    g
}

/// Worst relative disagreement between two gradients.
///
/// Entries where both sides are below `floor` in magnitude count as exact.
pub fn max_rel_err(analytic: &Matrix, numeric: &Matrix, floor: f64) -> f64 {
    assert_eq!(analytic.dim(), numeric.dim());
    analytic
        .iter()
        .zip(numeric.iter())
        .map(|(&a, &n)| {
            let scale = a.abs().max(n.abs());
            if scale < floor {
                0.0
            } else {
                (a - n).abs() / scale
            }
        })
        .fold(0.0, f64::max)
}

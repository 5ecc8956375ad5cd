use std::cell::RefCell;
use std::rc::Rc;

use crate::error::{Error, Result};
use crate::grad::Tensor;

/// Records forward operations so [`Var::backward`] can replay them in
/// reverse. A tape is single-threaded; separate tapes may run in parallel.
#[derive(Clone, Default)]
pub struct Tape {
    inner: Rc<RefCell<TapeInner>>,
}

/// Handle to one node on a [`Tape`].
#[derive(Clone)]
pub struct Var {
    tape: Tape,
    idx: usize,
}

#[derive(Default)]
struct TapeInner {
    shapes: Vec<Vec<usize>>,
    values: Vec<Vec<f64>>,
    grads: Vec<Vec<f64>>,
    ops: Vec<Op>,
}

enum Op {
    Add { out: usize, a: usize, b: usize },
    Sub { out: usize, a: usize, b: usize },
    Mul { out: usize, a: usize, b: usize },
    Scale { out: usize, a: usize, c: f64 },
    AddScalar { out: usize, a: usize },
    Matmul { out: usize, a: usize, b: usize, m: usize, k: usize, n: usize },
    SumAxis { out: usize, a: usize, axis: usize, rows: usize, cols: usize },
    SumAll { out: usize, a: usize },
    Mean { out: usize, a: usize },
    Exp { out: usize, a: usize },
    Log { out: usize, a: usize },
    Sigmoid { out: usize, a: usize },
    Softplus { out: usize, a: usize },
    Clamp { out: usize, a: usize, lo: f64, hi: f64 },
    Softmax { out: usize, a: usize, rows: usize, cols: usize, over_cols: bool },
    L2Norm { out: usize, a: usize },
    CosSim { out: usize, a: usize, b: usize },
    Reshape { out: usize, a: usize },
    SelectRows { out: usize, a: usize, rows: Vec<usize>, cols: usize },
    StackRows { out: usize, parts: Vec<usize>, cols: usize },
}

fn stable_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn stable_softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

impl TapeInner {
    fn push(&mut self, shape: Vec<usize>, values: Vec<f64>) -> usize {
        let idx = self.values.len();
        self.grads.push(vec![0.0; values.len()]);
        self.shapes.push(shape);
        self.values.push(values);
        idx
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    /// A differentiable leaf; gradients accumulate here during backward.
    pub fn leaf(&self, values: Vec<f64>, shape: &[usize]) -> Result<Var> {
        self.node(values, shape)
    }

    /// A constant input. Gradients are still tracked internally but callers
    /// treat the node as frozen.
    pub fn constant(&self, values: Vec<f64>, shape: &[usize]) -> Result<Var> {
        self.node(values, shape)
    }

    pub fn scalar(&self, v: f64) -> Var {
        self.node(vec![v], &[1]).expect("scalar shape is valid")
    }

    pub fn from_tensor(&self, t: &Tensor) -> Result<Var> {
        self.node(t.values().to_vec(), t.shape())
    }

    /// Stacks rank-1 vars of equal length into a rank-2 tensor, one row
    /// per input.
    pub fn stack_rows(&self, parts: &[&Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::shape("stack_rows of zero rows"));
        }
        let (cols, values, indices) = {
            let inner = self.inner.borrow();
            let cols = inner.shapes[parts[0].idx][0];
            let mut values = Vec::with_capacity(parts.len() * cols);
            let mut indices = Vec::with_capacity(parts.len());
            for p in parts {
                if !Rc::ptr_eq(&self.inner, &p.tape.inner) {
                    return Err(Error::shape("stack_rows across tapes"));
                }
                let s = &inner.shapes[p.idx];
                if s.len() != 1 || s[0] != cols {
                    return Err(Error::shape(format!(
                        "stack_rows expects rank-1 rows of length {cols}, got {s:?}"
                    )));
                }
                values.extend_from_slice(&inner.values[p.idx]);
                indices.push(p.idx);
            }
            (cols, values, indices)
        };
        let shape = vec![parts.len(), cols];
        let out = {
            let mut inner = self.inner.borrow_mut();
            let out = inner.push(shape, values);
            inner.ops.push(Op::StackRows {
                out,
                parts: indices,
                cols,
            });
            out
        };
        Ok(Var {
            tape: self.clone(),
            idx: out,
        })
    }

    fn node(&self, values: Vec<f64>, shape: &[usize]) -> Result<Var> {
        let expect: usize = shape.iter().product();
        if values.len() != expect {
            return Err(Error::shape(format!(
                "node of shape {shape:?} needs {expect} values, got {}",
                values.len()
            )));
        }
        let idx = self.inner.borrow_mut().push(shape.to_vec(), values);
        Ok(Var {
            tape: self.clone(),
            idx,
        })
    }
}

impl Var {
    pub fn shape(&self) -> Vec<usize> {
        self.tape.inner.borrow().shapes[self.idx].clone()
    }

    pub fn value(&self) -> Vec<f64> {
        self.tape.inner.borrow().values[self.idx].clone()
    }

    pub fn scalar_value(&self) -> f64 {
        let inner = self.tape.inner.borrow();
        debug_assert_eq!(inner.values[self.idx].len(), 1);
        inner.values[self.idx][0]
    }

    pub fn grad(&self) -> Vec<f64> {
        self.tape.inner.borrow().grads[self.idx].clone()
    }

    pub fn len(&self) -> usize {
        self.tape.inner.borrow().values[self.idx].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Converts the current value to a plain tensor (detached).
    pub fn to_tensor(&self) -> Tensor {
        let inner = self.tape.inner.borrow();
        Tensor::new(&inner.shapes[self.idx], inner.values[self.idx].clone())
            .expect("node shapes are consistent")
    }

    fn same_tape(&self, other: &Var) -> Result<()> {
        if !Rc::ptr_eq(&self.tape.inner, &other.tape.inner) {
            return Err(Error::shape("operands recorded on different tapes"));
        }
        Ok(())
    }

    fn binary_elementwise(
        &self,
        other: &Var,
        f: impl Fn(f64, f64) -> f64,
        make: impl Fn(usize, usize, usize) -> Op,
    ) -> Result<Var> {
        self.same_tape(other)?;
        let (shape, values) = {
            let inner = self.tape.inner.borrow();
            let sa = &inner.shapes[self.idx];
            let sb = &inner.shapes[other.idx];
            if sa != sb {
                return Err(Error::shape(format!(
                    "elementwise op on shapes {sa:?} and {sb:?}"
                )));
            }
            let va = &inner.values[self.idx];
            let vb = &inner.values[other.idx];
            let out: Vec<f64> = va.iter().zip(vb).map(|(&x, &y)| f(x, y)).collect();
            (sa.clone(), out)
        };
        let out = {
            let mut inner = self.tape.inner.borrow_mut();
            let out = inner.push(shape, values);
            let op = make(out, self.idx, other.idx);
            inner.ops.push(op);
            out
        };
        Ok(Var {
            tape: self.tape.clone(),
            idx: out,
        })
    }

    fn unary(&self, values: Vec<f64>, shape: Vec<usize>, make: impl Fn(usize, usize) -> Op) -> Var {
        let out = {
            let mut inner = self.tape.inner.borrow_mut();
            let out = inner.push(shape, values);
            let op = make(out, self.idx);
            inner.ops.push(op);
            out
        };
        Var {
            tape: self.tape.clone(),
            idx: out,
        }
    }

    pub fn add(&self, other: &Var) -> Result<Var> {
        self.binary_elementwise(other, |x, y| x + y, |out, a, b| Op::Add { out, a, b })
    }

    pub fn sub(&self, other: &Var) -> Result<Var> {
        self.binary_elementwise(other, |x, y| x - y, |out, a, b| Op::Sub { out, a, b })
    }

    /// Elementwise product.
    pub fn mul(&self, other: &Var) -> Result<Var> {
        self.binary_elementwise(other, |x, y| x * y, |out, a, b| Op::Mul { out, a, b })
    }

    pub fn scale(&self, c: f64) -> Var {
        let (shape, values) = {
            let inner = self.tape.inner.borrow();
            let out = inner.values[self.idx].iter().map(|&x| x * c).collect();
            (inner.shapes[self.idx].clone(), out)
        };
        self.unary(values, shape, |out, a| Op::Scale { out, a, c })
    }

    pub fn neg(&self) -> Var {
        self.scale(-1.0)
    }

    pub fn add_scalar(&self, c: f64) -> Var {
        let (shape, values) = {
            let inner = self.tape.inner.borrow();
            let out = inner.values[self.idx].iter().map(|&x| x + c).collect();
            (inner.shapes[self.idx].clone(), out)
        };
        self.unary(values, shape, |out, a| Op::AddScalar { out, a })
    }

    /// Matrix product of two rank-2 tensors, (m×k)·(k×n) → (m×n).
    pub fn matmul(&self, other: &Var) -> Result<Var> {
        self.same_tape(other)?;
        let (m, k, n, values) = {
            let inner = self.tape.inner.borrow();
            let sa = &inner.shapes[self.idx];
            let sb = &inner.shapes[other.idx];
            if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
                return Err(Error::shape(format!("matmul on shapes {sa:?} and {sb:?}")));
            }
            let (m, k, n) = (sa[0], sa[1], sb[1]);
            let va = &inner.values[self.idx];
            let vb = &inner.values[other.idx];
            let mut out = vec![0.0; m * n];
            for i in 0..m {
                for p in 0..k {
                    let aip = va[i * k + p];
                    if aip == 0.0 {
                        continue;
                    }
                    for j in 0..n {
                        out[i * n + j] += aip * vb[p * n + j];
                    }
                }
            }
            (m, k, n, out)
        };
        let out = {
            let mut inner = self.tape.inner.borrow_mut();
            let out = inner.push(vec![m, n], values);
            inner.ops.push(Op::Matmul {
                out,
                a: self.idx,
                b: other.idx,
                m,
                k,
                n,
            });
            out
        };
        Ok(Var {
            tape: self.tape.clone(),
            idx: out,
        })
    }

    /// Sums a rank-2 tensor along `axis` (0 → column sums, 1 → row sums).
    pub fn sum_axis(&self, axis: usize) -> Result<Var> {
        let (rows, cols, values) = {
            let inner = self.tape.inner.borrow();
            let s = &inner.shapes[self.idx];
            if s.len() != 2 || axis > 1 {
                return Err(Error::shape(format!("sum_axis({axis}) on shape {s:?}")));
            }
            let (rows, cols) = (s[0], s[1]);
            let v = &inner.values[self.idx];
            let out = if axis == 1 {
                (0..rows)
                    .map(|i| v[i * cols..(i + 1) * cols].iter().sum())
                    .collect()
            } else {
                (0..cols)
                    .map(|j| (0..rows).map(|i| v[i * cols + j]).sum())
                    .collect()
            };
            (rows, cols, out)
        };
        let len = if axis == 1 { rows } else { cols };
        let out = {
            let mut inner = self.tape.inner.borrow_mut();
            let out = inner.push(vec![len], values);
            inner.ops.push(Op::SumAxis {
                out,
                a: self.idx,
                axis,
                rows,
                cols,
            });
            out
        };
        Ok(Var {
            tape: self.tape.clone(),
            idx: out,
        })
    }

    /// Sum of all elements, producing a scalar.
    pub fn sum(&self) -> Var {
        let total = {
            let inner = self.tape.inner.borrow();
            inner.values[self.idx].iter().sum()
        };
        self.unary(vec![total], vec![1], |out, a| Op::SumAll { out, a })
    }

    /// Mean of all elements, producing a scalar.
    pub fn mean(&self) -> Var {
        let total: f64 = {
            let inner = self.tape.inner.borrow();
            let v = &inner.values[self.idx];
            v.iter().sum::<f64>() / v.len() as f64
        };
        self.unary(vec![total], vec![1], |out, a| Op::Mean { out, a })
    }

    pub fn exp(&self) -> Var {
        let (shape, values) = {
            let inner = self.tape.inner.borrow();
            let out = inner.values[self.idx].iter().map(|&x| x.exp()).collect();
            (inner.shapes[self.idx].clone(), out)
        };
        self.unary(values, shape, |out, a| Op::Exp { out, a })
    }

    /// Natural log; requires strictly positive inputs.
    pub fn log(&self) -> Result<Var> {
        let (shape, values) = {
            let inner = self.tape.inner.borrow();
            let v = &inner.values[self.idx];
            if let Some(bad) = v.iter().find(|&&x| x <= 0.0) {
                return Err(Error::domain(format!("log of non-positive value {bad}")));
            }
            let out = v.iter().map(|&x| x.ln()).collect();
            (inner.shapes[self.idx].clone(), out)
        };
        Ok(self.unary(values, shape, |out, a| Op::Log { out, a }))
    }

    pub fn sigmoid(&self) -> Var {
        let (shape, values) = {
            let inner = self.tape.inner.borrow();
            let out = inner.values[self.idx]
                .iter()
                .map(|&x| stable_sigmoid(x))
                .collect();
            (inner.shapes[self.idx].clone(), out)
        };
        self.unary(values, shape, |out, a| Op::Sigmoid { out, a })
    }

    /// ln(1 + e^x), computed without overflow.
    pub fn softplus(&self) -> Var {
        let (shape, values) = {
            let inner = self.tape.inner.borrow();
            let out = inner.values[self.idx]
                .iter()
                .map(|&x| stable_softplus(x))
                .collect();
            (inner.shapes[self.idx].clone(), out)
        };
        self.unary(values, shape, |out, a| Op::Softplus { out, a })
    }

    /// Elementwise max with a constant. Gradient passes strictly inside the
    /// clamp and is zero at the boundary.
    pub fn clamp_min(&self, lo: f64) -> Var {
        self.clamp(lo, f64::INFINITY)
    }

    pub fn relu(&self) -> Var {
        self.clamp_min(0.0)
    }

    pub fn clamp(&self, lo: f64, hi: f64) -> Var {
        let (shape, values) = {
            let inner = self.tape.inner.borrow();
            let out = inner.values[self.idx]
                .iter()
                .map(|&x| x.clamp(lo, hi))
                .collect();
            (inner.shapes[self.idx].clone(), out)
        };
        self.unary(values, shape, |out, a| Op::Clamp { out, a, lo, hi })
    }

    /// Softmax with max-subtraction, the only sanctioned implementation.
    /// Rank-1 tensors take `axis = 0`; rank-2 tensors normalize rows with
    /// `axis = 1` and columns with `axis = 0`.
    pub fn softmax(&self, axis: usize) -> Result<Var> {
        let (rows, cols, over_cols, values) = {
            let inner = self.tape.inner.borrow();
            let s = &inner.shapes[self.idx];
            let v = &inner.values[self.idx];
            let (rows, cols, over_cols) = match (s.len(), axis) {
                (1, 0) => (1, s[0], true),
                (2, 1) => (s[0], s[1], true),
                (2, 0) => (s[1], s[0], false),
                _ => {
                    return Err(Error::shape(format!("softmax(axis={axis}) on shape {s:?}")));
                }
            };
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::domain("softmax over non-finite scores"));
            }
            // Treat the normalized direction as contiguous lanes; for
            // column-softmax the lane stride is the row width.
            let mut out = vec![0.0; v.len()];
            let (lanes, lane_len) = (rows, cols);
            for lane in 0..lanes {
                let index = |i: usize| {
                    if over_cols {
                        lane * lane_len + i
                    } else {
                        i * lanes + lane
                    }
                };
                let mut mx = f64::NEG_INFINITY;
                for i in 0..lane_len {
                    mx = mx.max(v[index(i)]);
                }
                let mut denom = 0.0;
                for i in 0..lane_len {
                    let e = (v[index(i)] - mx).exp();
                    out[index(i)] = e;
                    denom += e;
                }
                for i in 0..lane_len {
                    out[index(i)] /= denom;
                }
            }
            (rows, cols, over_cols, out)
        };
        let shape = self.shape();
        let out = {
            let mut inner = self.tape.inner.borrow_mut();
            let out = inner.push(shape, values);
            inner.ops.push(Op::Softmax {
                out,
                a: self.idx,
                rows,
                cols,
                over_cols,
            });
            out
        };
        Ok(Var {
            tape: self.tape.clone(),
            idx: out,
        })
    }

    pub fn l2_norm(&self) -> Var {
        let norm = {
            let inner = self.tape.inner.borrow();
            inner.values[self.idx]
                .iter()
                .map(|x| x * x)
                .sum::<f64>()
                .sqrt()
        };
        self.unary(vec![norm], vec![1], |out, a| Op::L2Norm { out, a })
    }

    /// Cosine similarity of two rank-1 vectors; errors on zero-norm inputs.
    pub fn cosine_sim(&self, other: &Var) -> Result<Var> {
        self.same_tape(other)?;
        let value = {
            let inner = self.tape.inner.borrow();
            let sa = &inner.shapes[self.idx];
            let sb = &inner.shapes[other.idx];
            if sa.len() != 1 || sa != sb {
                return Err(Error::shape(format!(
                    "cosine_sim on shapes {sa:?} and {sb:?}"
                )));
            }
            let u = &inner.values[self.idx];
            let v = &inner.values[other.idx];
            let nu = u.iter().map(|x| x * x).sum::<f64>().sqrt();
            let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if nu == 0.0 || nv == 0.0 {
                return Err(Error::domain("cosine similarity of a zero-norm vector"));
            }
            u.iter().zip(v).map(|(&x, &y)| x * y).sum::<f64>() / (nu * nv)
        };
        let out = {
            let mut inner = self.tape.inner.borrow_mut();
            let out = inner.push(vec![1], vec![value]);
            inner.ops.push(Op::CosSim {
                out,
                a: self.idx,
                b: other.idx,
            });
            out
        };
        Ok(Var {
            tape: self.tape.clone(),
            idx: out,
        })
    }

    /// View with a new shape over the same element order.
    pub fn reshape(&self, shape: &[usize]) -> Result<Var> {
        let values = {
            let inner = self.tape.inner.borrow();
            let expect: usize = shape.iter().product();
            if inner.values[self.idx].len() != expect {
                return Err(Error::shape(format!(
                    "reshape of {:?} to {shape:?}",
                    inner.shapes[self.idx]
                )));
            }
            inner.values[self.idx].clone()
        };
        Ok(self.unary(values, shape.to_vec(), |out, a| Op::Reshape { out, a }))
    }

    /// Gathers rows of a rank-2 tensor.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Var> {
        let (cols, values) = {
            let inner = self.tape.inner.borrow();
            let s = &inner.shapes[self.idx];
            if s.len() != 2 {
                return Err(Error::shape(format!("select_rows on shape {s:?}")));
            }
            if let Some(&bad) = rows.iter().find(|&&r| r >= s[0]) {
                return Err(Error::shape(format!(
                    "select_rows index {bad} out of bounds for {} rows",
                    s[0]
                )));
            }
            let cols = s[1];
            let v = &inner.values[self.idx];
            let mut out = Vec::with_capacity(rows.len() * cols);
            for &r in rows {
                out.extend_from_slice(&v[r * cols..(r + 1) * cols]);
            }
            (cols, out)
        };
        let shape = vec![rows.len(), cols];
        let rows = rows.to_vec();
        let out = {
            let mut inner = self.tape.inner.borrow_mut();
            let out = inner.push(shape, values);
            inner.ops.push(Op::SelectRows {
                out,
                a: self.idx,
                rows,
                cols,
            });
            out
        };
        Ok(Var {
            tape: self.tape.clone(),
            idx: out,
        })
    }

    /// Backpropagates from a scalar root, populating gradients of every
    /// node reached. Each recorded op is visited exactly once.
    pub fn backward(&self) -> Result<()> {
        let mut inner = self.tape.inner.borrow_mut();
        if inner.values[self.idx].len() != 1 {
            return Err(Error::shape(format!(
                "backward root must be scalar, got shape {:?}",
                inner.shapes[self.idx]
            )));
        }
        for g in inner.grads.iter_mut() {
            g.iter_mut().for_each(|x| *x = 0.0);
        }
        inner.grads[self.idx][0] = 1.0;
        let inner = &mut *inner;
        for op in inner.ops.iter().rev() {
            apply_backward(op, &inner.values, &mut inner.grads);
        }
        Ok(())
    }
}

fn apply_backward(op: &Op, values: &[Vec<f64>], grads: &mut [Vec<f64>]) {
    match *op {
        Op::Add { out, a, b } => {
            let g = grads[out].clone();
            for (ga, &gi) in grads[a].iter_mut().zip(&g) {
                *ga += gi;
            }
            for (gb, &gi) in grads[b].iter_mut().zip(&g) {
                *gb += gi;
            }
        }
        Op::Sub { out, a, b } => {
            let g = grads[out].clone();
            for (ga, &gi) in grads[a].iter_mut().zip(&g) {
                *ga += gi;
            }
            for (gb, &gi) in grads[b].iter_mut().zip(&g) {
                *gb -= gi;
            }
        }
        Op::Mul { out, a, b } => {
            let g = grads[out].clone();
            for i in 0..g.len() {
                grads[a][i] += g[i] * values[b][i];
            }
            for i in 0..g.len() {
                grads[b][i] += g[i] * values[a][i];
            }
        }
        Op::Scale { out, a, c } => {
            let g = grads[out].clone();
            for (ga, &gi) in grads[a].iter_mut().zip(&g) {
                *ga += c * gi;
            }
        }
        Op::AddScalar { out, a } | Op::Reshape { out, a } => {
            let g = grads[out].clone();
            for (ga, &gi) in grads[a].iter_mut().zip(&g) {
                *ga += gi;
            }
        }
        Op::Matmul { out, a, b, m, k, n } => {
            let g = grads[out].clone();
            // dA += dC · Bᵀ
            for i in 0..m {
                for p in 0..k {
                    let mut acc = 0.0;
                    for j in 0..n {
                        acc += g[i * n + j] * values[b][p * n + j];
                    }
                    grads[a][i * k + p] += acc;
                }
            }
            // dB += Aᵀ · dC
            for p in 0..k {
                for j in 0..n {
                    let mut acc = 0.0;
                    for i in 0..m {
                        acc += values[a][i * k + p] * g[i * n + j];
                    }
                    grads[b][p * n + j] += acc;
                }
            }
        }
        Op::SumAxis {
            out,
            a,
            axis,
            rows,
            cols,
        } => {
            let g = grads[out].clone();
            for i in 0..rows {
                for j in 0..cols {
                    grads[a][i * cols + j] += if axis == 1 { g[i] } else { g[j] };
                }
            }
        }
        Op::SumAll { out, a } => {
            let g = grads[out][0];
            for ga in grads[a].iter_mut() {
                *ga += g;
            }
        }
        Op::Mean { out, a } => {
            let g = grads[out][0] / values[a].len() as f64;
            for ga in grads[a].iter_mut() {
                *ga += g;
            }
        }
        Op::Exp { out, a } => {
            let g = grads[out].clone();
            for i in 0..g.len() {
                grads[a][i] += g[i] * values[out][i];
            }
        }
        Op::Log { out, a } => {
            let g = grads[out].clone();
            for i in 0..g.len() {
                grads[a][i] += g[i] / values[a][i];
            }
        }
        Op::Sigmoid { out, a } => {
            let g = grads[out].clone();
            for i in 0..g.len() {
                let y = values[out][i];
                grads[a][i] += g[i] * y * (1.0 - y);
            }
        }
        Op::Softplus { out, a } => {
            let g = grads[out].clone();
            for i in 0..g.len() {
                grads[a][i] += g[i] * stable_sigmoid(values[a][i]);
            }
        }
        Op::Clamp { out, a, lo, hi } => {
            let g = grads[out].clone();
            for i in 0..g.len() {
                let x = values[a][i];
                if x > lo && x < hi {
                    grads[a][i] += g[i];
                }
            }
        }
        Op::Softmax {
            out,
            a,
            rows,
            cols,
            over_cols,
        } => {
            let g = grads[out].clone();
            let (lanes, lane_len) = (rows, cols);
            for lane in 0..lanes {
                let index = |i: usize| {
                    if over_cols {
                        lane * lane_len + i
                    } else {
                        i * lanes + lane
                    }
                };
                let mut dot = 0.0;
                for i in 0..lane_len {
                    dot += g[index(i)] * values[out][index(i)];
                }
                for i in 0..lane_len {
                    let y = values[out][index(i)];
                    grads[a][index(i)] += y * (g[index(i)] - dot);
                }
            }
        }
        Op::L2Norm { out, a } => {
            let g = grads[out][0];
            let norm = values[out][0];
            if norm > 0.0 {
                for i in 0..values[a].len() {
                    grads[a][i] += g * values[a][i] / norm;
                }
            }
        }
        Op::CosSim { out, a, b } => {
            let g = grads[out][0];
            let s = values[out][0];
            let u = &values[a];
            let v = &values[b];
            let nu = u.iter().map(|x| x * x).sum::<f64>().sqrt();
            let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            for i in 0..u.len() {
                grads[a][i] += g * (v[i] / (nu * nv) - s * u[i] / (nu * nu));
            }
            for i in 0..v.len() {
                grads[b][i] += g * (u[i] / (nu * nv) - s * v[i] / (nv * nv));
            }
        }
        Op::SelectRows {
            out,
            a,
            ref rows,
            cols,
        } => {
            let g = grads[out].clone();
            for (i, &r) in rows.iter().enumerate() {
                for j in 0..cols {
                    grads[a][r * cols + j] += g[i * cols + j];
                }
            }
        }
        Op::StackRows {
            out,
            ref parts,
            cols,
        } => {
            let g = grads[out].clone();
            for (i, &p) in parts.iter().enumerate() {
                for j in 0..cols {
                    grads[p][j] += g[i * cols + j];
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn leaf(tape: &Tape, v: &[f64]) -> Var {
        tape.leaf(v.to_vec(), &[v.len()]).unwrap()
    }

    #[test]
    fn cosine_self_similarity_is_one() {
        let tape = Tape::new();
        let u = leaf(&tape, &[0.3, -1.2, 2.5]);
        let s = u.cosine_sim(&u).unwrap();
        assert!((s.scalar_value() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cosine_of_zero_vector_errors() {
        let tape = Tape::new();
        let u = leaf(&tape, &[0.0, 0.0]);
        let v = leaf(&tape, &[1.0, 2.0]);
        assert!(u.cosine_sim(&v).is_err());
    }

    #[test]
    fn softmax_of_constant_vector_is_uniform() {
        let tape = Tape::new();
        let x = leaf(&tape, &[4.2; 7]);
        let y = x.softmax(0).unwrap();
        for v in y.value() {
            assert!((v - 1.0 / 7.0).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_rows_and_cols_sum_to_one() {
        let tape = Tape::new();
        let x = tape
            .leaf(vec![1.0, -2.0, 0.5, 3.0, 0.0, -1.0], &[2, 3])
            .unwrap();
        let rows = x.softmax(1).unwrap().value();
        assert!((rows[0..3].iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((rows[3..6].iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let cols = x.softmax(0).unwrap().value();
        assert!(((cols[0] + cols[3]) - 1.0).abs() < 1e-12);
        assert!(((cols[1] + cols[4]) - 1.0).abs() < 1e-12);
        assert!(((cols[2] + cols[5]) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sum_of_sigmoid_gradient_at_zero() {
        // d/dx σ(x) at 0 is 1/4 per element.
        let tape = Tape::new();
        let x = leaf(&tape, &[0.0, 0.0, 0.0]);
        let loss = x.sigmoid().sum();
        loss.backward().unwrap();
        for g in x.grad() {
            assert!((g - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn matmul_forward_and_backward() {
        // C = A·B with A = [[1,2],[3,4]], B = [[5],[6]] → C = [17, 39].
        let tape = Tape::new();
        let a = tape.leaf(vec![1.0, 2.0, 3.0, 4.0], &[2, 2]).unwrap();
        let b = tape.leaf(vec![5.0, 6.0], &[2, 1]).unwrap();
        let c = a.matmul(&b).unwrap();
        assert_eq!(c.value(), vec![17.0, 39.0]);
        c.sum().backward().unwrap();
        // d(sum C)/dA = 1·Bᵀ per row, d/dB = column sums of A.
        assert_eq!(a.grad(), vec![5.0, 6.0, 5.0, 6.0]);
        assert_eq!(b.grad(), vec![4.0, 6.0]);
    }

    #[test]
    fn matmul_shape_mismatch_errors() {
        let tape = Tape::new();
        let a = tape.leaf(vec![1.0, 2.0], &[1, 2]).unwrap();
        let b = tape.leaf(vec![1.0; 3], &[3, 1]).unwrap();
        assert!(a.matmul(&b).is_err());
    }

    #[test]
    fn log_domain_error() {
        let tape = Tape::new();
        let x = leaf(&tape, &[1.0, 0.0]);
        assert!(x.log().is_err());
    }

    #[test]
    fn backward_requires_scalar_root() {
        let tape = Tape::new();
        let x = leaf(&tape, &[1.0, 2.0]);
        assert!(x.backward().is_err());
    }

    #[test]
    fn fanout_accumulates() {
        // f(x) = x·x + x at x=3 → f' = 2x + 1 = 7.
        let tape = Tape::new();
        let x = tape.scalar(3.0);
        let y = x.mul(&x).unwrap().add(&x).unwrap();
        y.backward().unwrap();
        assert_eq!(y.scalar_value(), 12.0);
        assert_eq!(x.grad(), vec![7.0]);
    }

    #[test]
    fn select_rows_scatters_gradient() {
        let tape = Tape::new();
        let x = tape
            .leaf(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0], &[3, 2])
            .unwrap();
        let sel = x.select_rows(&[2, 0]).unwrap();
        assert_eq!(sel.value(), vec![5.0, 6.0, 1.0, 2.0]);
        sel.mul(&sel).unwrap().sum().backward().unwrap();
        assert_eq!(x.grad(), vec![2.0, 4.0, 0.0, 0.0, 10.0, 12.0]);
    }
}

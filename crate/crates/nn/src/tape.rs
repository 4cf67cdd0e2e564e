//! Reverse-mode autodiff over dense `f64` arrays.
//!
//! A [`Tape`] records every operation as a node holding its value and a
//! backward closure. Nodes are appended in evaluation order, so iterating
//! them in reverse is a reverse topological order; [`Tape::backward`] visits
//! each node exactly once. A tape lives for one forward/backward pass, which
//! zeroes gradients between optimizer steps.

use std::cell::RefCell;
use std::collections::HashMap;
use std::rc::Rc;

use crate::error::{shape_err, Result};
use crate::params::{ParamId, ParamStore};

type BackwardFn = Box<dyn Fn(&[f64], &mut GradSink)>;

struct Node {
    shape: Vec<usize>,
    value: Rc<Vec<f64>>,
    requires_grad: bool,
    backward: Option<BackwardFn>,
    param: Option<ParamId>,
}

#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    bound_params: RefCell<HashMap<ParamId, usize>>,
}

/// Handle to a node on a tape.
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var#{}{:?}", self.id, self.shape())
    }
}

/// Accumulates gradients of parents during the backward sweep.
pub struct GradSink<'a> {
    grads: &'a mut [Option<Vec<f64>>],
    sizes: &'a [usize],
    requires: &'a [bool],
}

impl GradSink<'_> {
    /// Gradient buffer of node `id`, or `None` when it needs no gradient.
    pub fn get(&mut self, id: usize) -> Option<&mut [f64]> {
        if !self.requires[id] {
            return None;
        }
        let size = self.sizes[id];
        Some(self.grads[id].get_or_insert_with(|| vec![0.0; size]))
    }
}

/// Gradients of a scalar with respect to every node that required one.
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    params: Vec<(ParamId, usize)>,
}

impl Gradients {
    pub fn wrt(&self, var: Var<'_>) -> Option<&[f64]> {
        self.grads.get(var.id).and_then(|g| g.as_deref())
    }

    /// Gradient for each parameter bound on the tape (zeros if unused).
    pub fn params(&self, store: &ParamStore) -> Vec<(ParamId, Vec<f64>)> {
        self.params
            .iter()
            .map(|&(pid, node)| {
                let g = self.grads[node]
                    .clone()
                    .unwrap_or_else(|| vec![0.0; store.get(pid).data.len()]);
                (pid, g)
            })
            .collect()
    }
}

pub(crate) fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push_node(&self, node: Node) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(node);
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    /// A leaf that takes no gradient.
    pub fn constant(&self, shape: &[usize], data: Vec<f64>) -> Var<'_> {
        assert_eq!(numel(shape), data.len(), "constant shape/data mismatch");
        self.push_node(Node {
            shape: shape.to_vec(),
            value: Rc::new(data),
            requires_grad: false,
            backward: None,
            param: None,
        })
    }

    /// A leaf whose gradient is tracked.
    pub fn leaf(&self, shape: &[usize], data: Vec<f64>) -> Var<'_> {
        assert_eq!(numel(shape), data.len(), "leaf shape/data mismatch");
        self.push_node(Node {
            shape: shape.to_vec(),
            value: Rc::new(data),
            requires_grad: true,
            backward: None,
            param: None,
        })
    }

    pub fn scalar(&self, v: f64) -> Var<'_> {
        self.constant(&[1], vec![v])
    }

    /// Binds a stored parameter; repeated calls return the same node.
    pub fn param(&self, store: &ParamStore, id: ParamId) -> Var<'_> {
        if let Some(&node) = self.bound_params.borrow().get(&id) {
            return Var {
                tape: self,
                id: node,
            };
        }
        let p = store.get(id);
        let var = self.push_node(Node {
            shape: p.shape.clone(),
            value: Rc::new(p.data.clone()),
            requires_grad: true,
            backward: None,
            param: Some(id),
        });
        self.bound_params.borrow_mut().insert(id, var.id);
        var
    }

    /// Records a custom operation. `backward` receives the output gradient
    /// and a sink for parent gradients; it is dropped when no parent needs one.
    pub fn op(
        &self,
        parents: &[Var<'_>],
        shape: Vec<usize>,
        value: Vec<f64>,
        backward: impl Fn(&[f64], &mut GradSink) + 'static,
    ) -> Var<'_> {
        debug_assert_eq!(numel(&shape), value.len());
        let requires_grad = {
            let nodes = self.nodes.borrow();
            parents.iter().any(|p| nodes[p.id].requires_grad)
        };
        self.push_node(Node {
            shape,
            value: Rc::new(value),
            requires_grad,
            backward: if requires_grad {
                Some(Box::new(backward))
            } else {
                None
            },
            param: None,
        })
    }

    /// Reverse sweep from a scalar output.
    pub fn backward(&self, output: Var<'_>) -> Gradients {
        let nodes = self.nodes.borrow();
        assert_eq!(
            nodes[output.id].value.len(),
            1,
            "backward needs a scalar output"
        );
        let sizes: Vec<usize> = nodes.iter().map(|n| n.value.len()).collect();
        let requires: Vec<bool> = nodes.iter().map(|n| n.requires_grad).collect();
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; nodes.len()];
        if requires[output.id] {
            grads[output.id] = Some(vec![1.0]);
        }
        for id in (0..=output.id).rev() {
            let Some(backward) = nodes[id].backward.as_ref() else {
                continue;
            };
            let Some(gout) = grads[id].take() else {
                continue;
            };
            let mut sink = GradSink {
                grads: &mut grads,
                sizes: &sizes,
                requires: &requires,
            };
            backward(&gout, &mut sink);
            grads[id] = Some(gout);
        }
        let params = nodes
            .iter()
            .enumerate()
            .filter_map(|(i, n)| n.param.map(|p| (p, i)))
            .collect();
        Gradients { grads, params }
    }
}

impl<'t> Var<'t> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tape.nodes.borrow()[self.id].shape.clone()
    }

    pub fn value(&self) -> Rc<Vec<f64>> {
        self.tape.nodes.borrow()[self.id].value.clone()
    }

    pub fn len(&self) -> usize {
        self.tape.nodes.borrow()[self.id].value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn item(&self) -> f64 {
        let v = self.value();
        assert_eq!(v.len(), 1, "item() on a non-scalar");
        v[0]
    }

    pub fn requires_grad(&self) -> bool {
        self.tape.nodes.borrow()[self.id].requires_grad
    }

    /// Same data, new shape.
    pub fn reshape(self, shape: &[usize]) -> Result<Var<'t>> {
        if numel(shape) != self.len() {
            return shape_err(format!("cannot reshape {:?} to {shape:?}", self.shape()));
        }
        let id = self.id;
        Ok(self.tape.op(
            &[self],
            shape.to_vec(),
            self.value().to_vec(),
            move |g, s| {
                if let Some(dx) = s.get(id) {
                    add_into(dx, g);
                }
            },
        ))
    }

    fn binary(
        self,
        other: Var<'t>,
        name: &str,
        f: impl Fn(f64, f64) -> f64,
        da: impl Fn(f64, f64, f64) -> f64 + 'static,
        db: impl Fn(f64, f64, f64) -> f64 + 'static,
    ) -> Result<Var<'t>> {
        if self.shape() != other.shape() {
            return shape_err(format!(
                "{name}: shapes {:?} and {:?} differ",
                self.shape(),
                other.shape()
            ));
        }
        let (a, b) = (self.value(), other.value());
        let out: Vec<f64> = a.iter().zip(b.iter()).map(|(&x, &y)| f(x, y)).collect();
        let (ia, ib) = (self.id, other.id);
        Ok(self
            .tape
            .op(&[self, other], self.shape(), out, move |g, s| {
                if let Some(dx) = s.get(ia) {
                    for i in 0..g.len() {
                        dx[i] += da(a[i], b[i], g[i]);
                    }
                }
                if let Some(dy) = s.get(ib) {
                    for i in 0..g.len() {
                        dy[i] += db(a[i], b[i], g[i]);
                    }
                }
            }))
    }

    pub fn add(self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, "add", |a, b| a + b, |_, _, g| g, |_, _, g| g)
    }

    pub fn sub(self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, "sub", |a, b| a - b, |_, _, g| g, |_, _, g| -g)
    }

    pub fn mul(self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, "mul", |a, b| a * b, |_, b, g| g * b, |a, _, g| g * a)
    }

    pub fn div(self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(
            other,
            "div",
            |a, b| a / b,
            |_, b, g| g / b,
            |a, b, g| -g * a / (b * b),
        )
    }

    fn unary(self, f: impl Fn(f64) -> f64, df: impl Fn(f64, f64) -> f64 + 'static) -> Var<'t> {
        let x = self.value();
        let y: Vec<f64> = x.iter().map(|&v| f(v)).collect();
        let yc = Rc::new(y.clone());
        let id = self.id;
        self.tape.op(&[self], self.shape(), y, move |g, s| {
            if let Some(dx) = s.get(id) {
                for i in 0..g.len() {
                    dx[i] += g[i] * df(x[i], yc[i]);
                }
            }
        })
    }

    pub fn scale(self, k: f64) -> Var<'t> {
        self.unary(move |x| k * x, move |_, _| k)
    }

    pub fn add_scalar(self, k: f64) -> Var<'t> {
        self.unary(move |x| x + k, |_, _| 1.0)
    }

    pub fn neg(self) -> Var<'t> {
        self.scale(-1.0)
    }

    pub fn square(self) -> Var<'t> {
        self.unary(|x| x * x, |x, _| 2.0 * x)
    }

    pub fn sqrt(self) -> Var<'t> {
        self.unary(f64::sqrt, |_, y| 0.5 / y)
    }

    pub fn exp(self) -> Var<'t> {
        self.unary(f64::exp, |_, y| y)
    }

    /// Subgradient 0 at the origin.
    pub fn abs(self) -> Var<'t> {
        self.unary(f64::abs, |x, _| {
            if x > 0.0 {
                1.0
            } else if x < 0.0 {
                -1.0
            } else {
                0.0
            }
        })
    }

    pub fn relu(self) -> Var<'t> {
        self.unary(|x| x.max(0.0), |x, _| if x > 0.0 { 1.0 } else { 0.0 })
    }

    pub fn leaky_relu(self, slope: f64) -> Var<'t> {
        self.unary(
            move |x| if x > 0.0 { x } else { slope * x },
            move |x, _| if x > 0.0 { 1.0 } else { slope },
        )
    }

    pub fn sigmoid(self) -> Var<'t> {
        self.unary(sigmoid, |_, y| y * (1.0 - y))
    }

    pub fn softplus(self) -> Var<'t> {
        self.unary(softplus, |x, _| sigmoid(x))
    }

    pub fn sum(self) -> Var<'t> {
        let total = self.value().iter().sum();
        let id = self.id;
        self.tape.op(&[self], vec![1], vec![total], move |g, s| {
            if let Some(dx) = s.get(id) {
                for d in dx.iter_mut() {
                    *d += g[0];
                }
            }
        })
    }

    pub fn mean(self) -> Var<'t> {
        let n = self.len() as f64;
        self.sum().scale(1.0 / n)
    }

    fn dims2(&self, name: &str) -> Result<(usize, usize)> {
        match self.shape().as_slice() {
            [r, c] => Ok((*r, *c)),
            s => shape_err(format!("{name}: expected a matrix, got {s:?}")),
        }
    }

    /// `[n, k] x [k, m] -> [n, m]`.
    pub fn matmul(self, other: Var<'t>) -> Result<Var<'t>> {
        let (n, k) = self.dims2("matmul")?;
        let (k2, m) = other.dims2("matmul")?;
        if k != k2 {
            return shape_err(format!("matmul: inner dims {k} and {k2} differ"));
        }
        let (a, b) = (self.value(), other.value());
        let out = matmul_raw(&a, &b, n, k, m);
        let (ia, ib) = (self.id, other.id);
        Ok(self.tape.op(&[self, other], vec![n, m], out, move |g, s| {
            if let Some(da) = s.get(ia) {
                // dA = G B^T
                for i in 0..n {
                    let grow = &g[i * m..(i + 1) * m];
                    for p in 0..k {
                        let brow = &b[p * m..(p + 1) * m];
                        let mut acc = 0.0;
                        for j in 0..m {
                            acc += grow[j] * brow[j];
                        }
                        da[i * k + p] += acc;
                    }
                }
            }
            if let Some(db) = s.get(ib) {
                // dB = A^T G
                for i in 0..n {
                    let grow = &g[i * m..(i + 1) * m];
                    for p in 0..k {
                        let aip = a[i * k + p];
                        if aip == 0.0 {
                            continue;
                        }
                        let drow = &mut db[p * m..(p + 1) * m];
                        for j in 0..m {
                            drow[j] += aip * grow[j];
                        }
                    }
                }
            }
        }))
    }

    /// Adds a length-`m` row vector to every row of an `[n, m]` matrix.
    pub fn add_row(self, bias: Var<'t>) -> Result<Var<'t>> {
        let (n, m) = self.dims2("add_row")?;
        if bias.len() != m {
            return shape_err(format!(
                "add_row: bias has {} entries, rows have {m}",
                bias.len()
            ));
        }
        let (x, b) = (self.value(), bias.value());
        let out: Vec<f64> = (0..n * m).map(|i| x[i] + b[i % m]).collect();
        let (ix, ib) = (self.id, bias.id);
        Ok(self.tape.op(&[self, bias], vec![n, m], out, move |g, s| {
            if let Some(dx) = s.get(ix) {
                add_into(dx, g);
            }
            if let Some(db) = s.get(ib) {
                for i in 0..n * m {
                    db[i % m] += g[i];
                }
            }
        }))
    }

    pub fn transpose(self) -> Result<Var<'t>> {
        let (n, m) = self.dims2("transpose")?;
        let x = self.value();
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            for j in 0..m {
                out[j * n + i] = x[i * m + j];
            }
        }
        let id = self.id;
        Ok(self.tape.op(&[self], vec![m, n], out, move |g, s| {
            if let Some(dx) = s.get(id) {
                for i in 0..n {
                    for j in 0..m {
                        dx[i * m + j] += g[j * n + i];
                    }
                }
            }
        }))
    }

    /// Row-wise softmax of an `[n, m]` matrix.
    pub fn softmax_rows(self) -> Result<Var<'t>> {
        let (n, m) = self.dims2("softmax_rows")?;
        let x = self.value();
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            let row = &x[i * m..(i + 1) * m];
            let mx = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for j in 0..m {
                let e = (row[j] - mx).exp();
                out[i * m + j] = e;
                z += e;
            }
            for j in 0..m {
                out[i * m + j] /= z;
            }
        }
        let y = Rc::new(out.clone());
        let id = self.id;
        Ok(self.tape.op(&[self], vec![n, m], out, move |g, s| {
            if let Some(dx) = s.get(id) {
                for i in 0..n {
                    let yr = &y[i * m..(i + 1) * m];
                    let gr = &g[i * m..(i + 1) * m];
                    let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for j in 0..m {
                        dx[i * m + j] += yr[j] * (gr[j] - dot);
                    }
                }
            }
        }))
    }

    /// Columns `start..start+len` of an `[n, m]` matrix.
    pub fn slice_cols(self, start: usize, len: usize) -> Result<Var<'t>> {
        let (n, m) = self.dims2("slice_cols")?;
        if start + len > m {
            return shape_err(format!("slice_cols: {start}+{len} exceeds {m} columns"));
        }
        let x = self.value();
        let mut out = Vec::with_capacity(n * len);
        for i in 0..n {
            out.extend_from_slice(&x[i * m + start..i * m + start + len]);
        }
        let id = self.id;
        Ok(self.tape.op(&[self], vec![n, len], out, move |g, s| {
            if let Some(dx) = s.get(id) {
                for i in 0..n {
                    for j in 0..len {
                        dx[i * m + start + j] += g[i * len + j];
                    }
                }
            }
        }))
    }

    /// Rows selected by `index` (rows may repeat).
    pub fn gather_rows(self, index: &[usize]) -> Result<Var<'t>> {
        let (n, m) = self.dims2("gather_rows")?;
        if let Some(&bad) = index.iter().find(|&&i| i >= n) {
            return shape_err(format!("gather_rows: row {bad} out of {n}"));
        }
        let x = self.value();
        let mut out = Vec::with_capacity(index.len() * m);
        for &r in index {
            out.extend_from_slice(&x[r * m..(r + 1) * m]);
        }
        let index = index.to_vec();
        let id = self.id;
        Ok(self
            .tape
            .op(&[self], vec![index.len(), m], out, move |g, s| {
                if let Some(dx) = s.get(id) {
                    for (k, &r) in index.iter().enumerate() {
                        for j in 0..m {
                            dx[r * m + j] += g[k * m + j];
                        }
                    }
                }
            }))
    }

    /// Multiplies row `i` of an `[n, m]` matrix by the constant `factors[i]`.
    pub fn scale_rows(self, factors: &[f64]) -> Result<Var<'t>> {
        let (n, m) = self.dims2("scale_rows")?;
        if factors.len() != n {
            return shape_err(format!(
                "scale_rows: {} factors for {n} rows",
                factors.len()
            ));
        }
        let x = self.value();
        let out: Vec<f64> = (0..n * m).map(|i| x[i] * factors[i / m]).collect();
        let factors = factors.to_vec();
        let id = self.id;
        Ok(self.tape.op(&[self], vec![n, m], out, move |g, s| {
            if let Some(dx) = s.get(id) {
                for i in 0..n * m {
                    dx[i] += g[i] * factors[i / m];
                }
            }
        }))
    }
}

/// Row-wise concatenation of `[n, a_i]` matrices into `[n, Σ a_i]`.
pub fn concat_cols<'t>(parts: &[Var<'t>]) -> Result<Var<'t>> {
    let Some(first) = parts.first() else {
        return shape_err("concat_cols: no inputs");
    };
    let tape = first.tape;
    let mut widths = Vec::with_capacity(parts.len());
    let n = first.dims2("concat_cols")?.0;
    for p in parts {
        let (r, c) = p.dims2("concat_cols")?;
        if r != n {
            return shape_err(format!("concat_cols: row counts {n} and {r} differ"));
        }
        widths.push(c);
    }
    let total: usize = widths.iter().sum();
    let values: Vec<Rc<Vec<f64>>> = parts.iter().map(|p| p.value()).collect();
    let mut out = Vec::with_capacity(n * total);
    for i in 0..n {
        for (v, &w) in values.iter().zip(&widths) {
            out.extend_from_slice(&v[i * w..(i + 1) * w]);
        }
    }
    let ids: Vec<usize> = parts.iter().map(|p| p.id).collect();
    Ok(tape.op(parts, vec![n, total], out, move |g, s| {
        let mut offset = 0;
        for (&id, &w) in ids.iter().zip(&widths) {
            if let Some(dx) = s.get(id) {
                for i in 0..n {
                    for j in 0..w {
                        dx[i * w + j] += g[i * total + offset + j];
                    }
                }
            }
            offset += w;
        }
    }))
}

/// Flat concatenation. For channel-planar volumes this stacks channels.
pub fn concat_flat<'t>(parts: &[Var<'t>], shape: Vec<usize>) -> Result<Var<'t>> {
    let Some(first) = parts.first() else {
        return shape_err("concat_flat: no inputs");
    };
    let total: usize = parts.iter().map(|p| p.len()).sum();
    if numel(&shape) != total {
        return shape_err(format!("concat_flat: {total} values do not fit {shape:?}"));
    }
    let mut out = Vec::with_capacity(total);
    let mut spans = Vec::with_capacity(parts.len());
    for p in parts {
        let v = p.value();
        spans.push((p.id, out.len(), v.len()));
        out.extend_from_slice(&v);
    }
    Ok(first.tape.op(parts, shape, out, move |g, s| {
        for &(id, start, len) in &spans {
            if let Some(dx) = s.get(id) {
                add_into(dx, &g[start..start + len]);
            }
        }
    }))
}

pub(crate) fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

pub(crate) fn matmul_raw(a: &[f64], b: &[f64], n: usize, k: usize, m: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * m];
    for i in 0..n {
        let orow = &mut out[i * m..(i + 1) * m];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let brow = &b[p * m..(p + 1) * m];
            for j in 0..m {
                orow[j] += aip * brow[j];
            }
        }
    }
    out
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_rule_on_shared_input() {
        let tape = Tape::new();
        let x = tape.leaf(&[2], vec![3.0, -2.0]);
        let y = x.mul(x).unwrap().sum();
        let g = tape.backward(y);
        assert_eq!(g.wrt(x).unwrap(), &[6.0, -4.0]);
    }

    #[test]
    fn constants_get_no_gradient() {
        let tape = Tape::new();
        let c = tape.constant(&[2], vec![1.0, 2.0]);
        let x = tape.leaf(&[2], vec![0.5, 0.5]);
        let y = c.mul(x).unwrap().sum();
        let g = tape.backward(y);
        assert!(g.wrt(c).is_none());
        assert_eq!(g.wrt(x).unwrap(), &[1.0, 2.0]);
    }

    #[test]
    fn matmul_and_bias() {
        let tape = Tape::new();
        let x = tape.constant(&[1, 2], vec![3.0, 4.0]);
        let w = tape.leaf(&[2, 1], vec![1.0, 1.0]);
        let b = tape.leaf(&[1], vec![0.0]);
        let y = x.matmul(w).unwrap().add_row(b).unwrap();
        assert_eq!(y.item(), 7.0);
        let g = tape.backward(y.sum());
        assert_eq!(g.wrt(w).unwrap(), &[3.0, 4.0]);
        assert_eq!(g.wrt(b).unwrap(), &[1.0]);
    }

    #[test]
    fn shape_errors() {
        let tape = Tape::new();
        let a = tape.leaf(&[2, 3], vec![0.0; 6]);
        let b = tape.leaf(&[2, 3], vec![0.0; 6]);
        assert!(a.matmul(b).is_err());
        assert!(a.add(tape.leaf(&[3], vec![0.0; 3])).is_err());
        assert!(a.reshape(&[5]).is_err());
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let tape = Tape::new();
        let x = tape.leaf(
            &[3, 4],
            (0..12).map(|i| (i as f64 * 0.37).sin() * 5.0).collect(),
        );
        let y = x.softmax_rows().unwrap().value();
        for r in 0..3 {
            let s: f64 = y[r * 4..(r + 1) * 4].iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }
}

//! Bidirectional gated recurrent layers with hand-written backpropagation.
//!
//! One direction computes, for input row `x_t` and previous state `h`:
//!
//! ```text
//! z   = sigmoid(x_t W_z + h U_z + b_z)
//! r   = sigmoid(x_t W_r + h U_r + b_r)
//! n   = tanh(x_t W_n + (r * h) U_n + b_n)
//! h_t = (1 - z) * n + z * h
//! ```
//!
//! with `h_0 = 0`. `W = [W_z | W_r | W_n]` is `in x 3H`, `U` is `H x 3H` and
//! `b` has `3H` entries. With all parameters and inputs zero the gates sit at
//! `z = r = 0.5`, `n = 0` and every state stays exactly zero.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};

use crate::params::{slice1, slice1_mut, slice2, slice2_mut, ParamFile, Parameters};
use crate::error::Result;
use crate::rng::{self, SeededRng};

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[derive(Debug, Clone, PartialEq)]
pub struct GruCell {
    pub w_in: Array2<f64>,
    pub w_rec: Array2<f64>,
    pub bias: Array1<f64>,
}

/// Activations kept from a forward pass, in processing order.
#[derive(Debug, Clone)]
pub struct GruTrace {
    reverse: bool,
    x: Array2<f64>,
    /// Row `t` is the state before step `t`; row `N` is the final state.
    h: Array2<f64>,
    z: Array2<f64>,
    r: Array2<f64>,
    n: Array2<f64>,
}

fn reversed(x: ArrayView2<f64>) -> Array2<f64> {
    x.slice(s![..;-1, ..]).to_owned()
}

impl GruCell {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        GruCell {
            w_in: Array2::zeros((input, 3 * hidden)),
            w_rec: Array2::zeros((hidden, 3 * hidden)),
            bias: Array1::zeros(3 * hidden),
        }
    }

    /// Uniform in `[-1/sqrt(H), 1/sqrt(H)]`.
    pub fn init(input: usize, hidden: usize, r: &mut SeededRng) -> Self {
        let k = 1.0 / (hidden as f64).sqrt();
        GruCell {
            w_in: Array2::from_shape_fn((input, 3 * hidden), |_| rng::symmetric(r, k)),
            w_rec: Array2::from_shape_fn((hidden, 3 * hidden), |_| rng::symmetric(r, k)),
            bias: Array1::from_shape_fn(3 * hidden, |_| rng::symmetric(r, k)),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w_in.nrows()
    }

    pub fn hidden(&self) -> usize {
        self.w_rec.nrows()
    }

    /// Runs over the rows of `x` (last to first when `reverse`) and returns the
    /// states aligned with the input rows.
    pub fn forward(&self, x: ArrayView2<f64>, reverse: bool) -> (Array2<f64>, GruTrace) {
        let hd = self.hidden();
        let steps = x.nrows();
        let x = if reverse { reversed(x) } else { x.to_owned() };
        let mut xw = x.dot(&self.w_in);
        xw += &self.bias;

        let u_zr = self.w_rec.slice(s![.., ..2 * hd]);
        let u_n = self.w_rec.slice(s![.., 2 * hd..]);
        let mut h = Array2::zeros((steps + 1, hd));
        let mut z = Array2::zeros((steps, hd));
        let mut r = Array2::zeros((steps, hd));
        let mut n = Array2::zeros((steps, hd));

        for t in 0..steps {
            let hp = h.row(t).to_owned();
            let zr = hp.dot(&u_zr);
            let row = xw.row(t);
            for j in 0..hd {
                z[[t, j]] = sigmoid(row[j] + zr[j]);
                r[[t, j]] = sigmoid(row[hd + j] + zr[hd + j]);
            }
            let rh = &r.row(t) * &hp;
            let un = rh.dot(&u_n);
            for j in 0..hd {
                let nn = (row[2 * hd + j] + un[j]).tanh();
                n[[t, j]] = nn;
                let zz = z[[t, j]];
                h[[t + 1, j]] = (1.0 - zz) * nn + zz * hp[j];
            }
        }

        let out = h.slice(s![1.., ..]);
        let out = if reverse { reversed(out) } else { out.to_owned() };
        (out, GruTrace { reverse, x, h, z, r, n })
    }

    /// Accumulates parameter gradients into `grads` and returns the gradient
    /// with respect to the input rows (original order).
    pub fn backward(&self, trace: &GruTrace, d_out: ArrayView2<f64>, grads: &mut GruCell) -> Array2<f64> {
        let hd = self.hidden();
        let steps = trace.x.nrows();
        let d_out = if trace.reverse { reversed(d_out) } else { d_out.to_owned() };
        let u_zr = self.w_rec.slice(s![.., ..2 * hd]);
        let u_n = self.w_rec.slice(s![.., 2 * hd..]);

        let mut d_a = Array2::zeros((steps, 3 * hd));
        let mut rh_all = Array2::zeros((steps, hd));
        let mut dh_next = Array1::<f64>::zeros(hd);

        for t in (0..steps).rev() {
            let hp = trace.h.row(t);
            let (z, r, n) = (trace.z.row(t), trace.r.row(t), trace.n.row(t));
            let dh = &d_out.row(t) + &dh_next;

            let mut dhp = &dh * &z;
            let mut da_n = Array1::zeros(hd);
            let mut da_z = Array1::zeros(hd);
            for j in 0..hd {
                da_n[j] = dh[j] * (1.0 - z[j]) * (1.0 - n[j] * n[j]);
                da_z[j] = dh[j] * (hp[j] - n[j]) * z[j] * (1.0 - z[j]);
                rh_all[[t, j]] = r[j] * hp[j];
            }
            let d_rh = u_n.dot(&da_n);
            let mut da_r = Array1::zeros(hd);
            for j in 0..hd {
                da_r[j] = d_rh[j] * hp[j] * r[j] * (1.0 - r[j]);
                dhp[j] += d_rh[j] * r[j];
            }
            let mut row = d_a.row_mut(t);
            row.slice_mut(s![..hd]).assign(&da_z);
            row.slice_mut(s![hd..2 * hd]).assign(&da_r);
            row.slice_mut(s![2 * hd..]).assign(&da_n);
            dhp += &u_zr.dot(&d_a.slice(s![t, ..2 * hd]));
            dh_next = dhp;
        }

        let h_prev = trace.h.slice(s![..steps, ..]);
        {
            let mut g_zr = grads.w_rec.slice_mut(s![.., ..2 * hd]);
            g_zr += &h_prev.t().dot(&d_a.slice(s![.., ..2 * hd]));
        }
        {
            let mut g_n = grads.w_rec.slice_mut(s![.., 2 * hd..]);
            g_n += &rh_all.t().dot(&d_a.slice(s![.., 2 * hd..]));
        }
        grads.w_in += &trace.x.t().dot(&d_a);
        grads.bias += &d_a.sum_axis(Axis(0));

        let dx = d_a.dot(&self.w_in.t());
        if trace.reverse {
            reversed(dx.view())
        } else {
            dx
        }
    }

    fn visit_named(&self, prefix: &str, f: &mut dyn FnMut(&str, &[f64])) {
        f(&format!("{prefix}.w_in"), slice2(&self.w_in));
        f(&format!("{prefix}.w_rec"), slice2(&self.w_rec));
        f(&format!("{prefix}.bias"), slice1(&self.bias));
    }

    fn visit_named_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut [f64])) {
        f(&format!("{prefix}.w_in"), slice2_mut(&mut self.w_in));
        f(&format!("{prefix}.w_rec"), slice2_mut(&mut self.w_rec));
        f(&format!("{prefix}.bias"), slice1_mut(&mut self.bias));
    }

    fn store(&self, file: &mut ParamFile, prefix: &str) {
        file.set_matrix(&format!("{prefix}.w_in"), &self.w_in);
        file.set_matrix(&format!("{prefix}.w_rec"), &self.w_rec);
        file.set_vector(&format!("{prefix}.bias"), &self.bias);
    }

    fn load(file: &ParamFile, prefix: &str, input: usize, hidden: usize) -> Result<Self> {
        Ok(GruCell {
            w_in: file.matrix_shaped(&format!("{prefix}.w_in"), input, 3 * hidden)?,
            w_rec: file.matrix_shaped(&format!("{prefix}.w_rec"), hidden, 3 * hidden)?,
            bias: file.vector(&format!("{prefix}.bias"), 3 * hidden)?,
        })
    }
}

/// A stack of bidirectional layers; each layer emits `[forward | backward]`
/// states of width `2H` and feeds the next.
#[derive(Debug, Clone, PartialEq)]
pub struct BiGru {
    pub layers: Vec<(GruCell, GruCell)>,
}

#[derive(Debug, Clone)]
pub struct BiGruTrace {
    layers: Vec<(GruTrace, GruTrace)>,
}

impl BiGru {
    pub fn init(input: usize, hidden: usize, depth: usize, r: &mut SeededRng) -> Self {
        let layers = (0..depth)
            .map(|l| {
                let inp = if l == 0 { input } else { 2 * hidden };
                (GruCell::init(inp, hidden, r), GruCell::init(inp, hidden, r))
            })
            .collect();
        BiGru { layers }
    }

    pub fn zeros(input: usize, hidden: usize, depth: usize) -> Self {
        let layers = (0..depth)
            .map(|l| {
                let inp = if l == 0 { input } else { 2 * hidden };
                (GruCell::zeros(inp, hidden), GruCell::zeros(inp, hidden))
            })
            .collect();
        BiGru { layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].0.input_dim()
    }

    pub fn hidden(&self) -> usize {
        self.layers[0].0.hidden()
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn output_dim(&self) -> usize {
        2 * self.hidden()
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> (Array2<f64>, BiGruTrace) {
        let mut input = x.to_owned();
        let mut traces = Vec::with_capacity(self.layers.len());
        for (fwd, bwd) in &self.layers {
            let (hf, tf) = fwd.forward(input.view(), false);
            let (hb, tb) = bwd.forward(input.view(), true);
            input = ndarray::concatenate(Axis(1), &[hf.view(), hb.view()]).expect("equal rows");
            traces.push((tf, tb));
        }
        (input, BiGruTrace { layers: traces })
    }

    pub fn backward(&self, trace: &BiGruTrace, d_out: ArrayView2<f64>, grads: &mut BiGru) -> Array2<f64> {
        let hd = self.hidden();
        let mut d = d_out.to_owned();
        for (l, (fwd, bwd)) in self.layers.iter().enumerate().rev() {
            let (tf, tb) = &trace.layers[l];
            let (gf, gb) = &mut grads.layers[l];
            let dxf = fwd.backward(tf, d.slice(s![.., ..hd]), gf);
            let dxb = bwd.backward(tb, d.slice(s![.., hd..]), gb);
            d = dxf + dxb;
        }
        d
    }

    pub(crate) fn visit_named(&self, prefix: &str, f: &mut dyn FnMut(&str, &[f64])) {
        for (l, (fwd, bwd)) in self.layers.iter().enumerate() {
            fwd.visit_named(&format!("{prefix}.l{l}.fwd"), f);
            bwd.visit_named(&format!("{prefix}.l{l}.bwd"), f);
        }
    }

    pub(crate) fn visit_named_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut [f64])) {
        for (l, (fwd, bwd)) in self.layers.iter_mut().enumerate() {
            fwd.visit_named_mut(&format!("{prefix}.l{l}.fwd"), f);
            bwd.visit_named_mut(&format!("{prefix}.l{l}.bwd"), f);
        }
    }

    pub(crate) fn store(&self, file: &mut ParamFile, prefix: &str) {
        file.set_meta(&format!("{prefix}.input"), self.input_dim());
        file.set_meta(&format!("{prefix}.hidden"), self.hidden());
        file.set_meta(&format!("{prefix}.depth"), self.depth());
        for (l, (fwd, bwd)) in self.layers.iter().enumerate() {
            fwd.store(file, &format!("{prefix}.l{l}.fwd"));
            bwd.store(file, &format!("{prefix}.l{l}.bwd"));
        }
    }

    pub(crate) fn load(file: &ParamFile, prefix: &str) -> Result<Self> {
        let input: usize = file.meta_parse(&format!("{prefix}.input"))?;
        let hidden: usize = file.meta_parse(&format!("{prefix}.hidden"))?;
        let depth: usize = file.meta_parse(&format!("{prefix}.depth"))?;
        let layers = (0..depth)
            .map(|l| {
                let inp = if l == 0 { input } else { 2 * hidden };
                Ok((
                    GruCell::load(file, &format!("{prefix}.l{l}.fwd"), inp, hidden)?,
                    GruCell::load(file, &format!("{prefix}.l{l}.bwd"), inp, hidden)?,
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(BiGru { layers })
    }
}

impl Parameters for BiGru {
    fn visit(&self, f: &mut dyn FnMut(&str, &[f64])) {
        self.visit_named("gru", f)
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut [f64])) {
        self.visit_named_mut("gru", f)
    }
}

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;

use super::NnError;

/// Weights and biases of a three-layer network (or tensors shaped like them).
///
/// Weight `k` is stored `in x out` so a batch `X` (rows = samples) maps as
/// `X W + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensors {
    pub w: Vec<Array2<f64>>,
    pub b: Vec<Array1<f64>>,
}

impl Tensors {
    pub fn zeros(dims: [usize; 4]) -> Self {
        Self {
            w: (0..3).map(|k| Array2::zeros((dims[k], dims[k + 1]))).collect(),
            b: (0..3).map(|k| Array1::zeros(dims[k + 1])).collect(),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            w: self.w.iter().map(|w| Array2::zeros(w.raw_dim())).collect(),
            b: self.b.iter().map(|b| Array1::zeros(b.raw_dim())).collect(),
        }
    }

    /// Flat views in the fixed order `w0, b0, w1, b1, w2, b2`.
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(6);
        for k in 0..self.w.len() {
            out.push(self.w[k].as_slice().expect("standard layout"));
            out.push(self.b[k].as_slice().expect("standard layout"));
        }
        out
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(6);
        for (w, b) in self.w.iter_mut().zip(self.b.iter_mut()) {
            out.push(w.as_slice_mut().expect("standard layout"));
            out.push(b.as_slice_mut().expect("standard layout"));
        }
        out
    }

    pub fn len(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }

    pub fn add_assign(&mut self, other: &Tensors) {
        for (a, b) in self.slices_mut().into_iter().zip(other.slices()) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }
}

/// Activations saved by [`Mlp::forward_cached`] for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    input: Array2<f64>,
    h1: Array2<f64>,
    h2: Array2<f64>,
}

/// Dense network with two ReLU hidden layers and a linear output.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    dims: [usize; 4],
    pub params: Tensors,
}

impl Mlp {
    pub fn zeros(dims: [usize; 4]) -> Result<Self, NnError> {
        if dims.iter().any(|&d| d == 0) {
            return Err(NnError::Dims(dims));
        }
        Ok(Self { dims, params: Tensors::zeros(dims) })
    }

    /// Uniform fan-in initialization, `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`,
    /// with the output layer further scaled by `output_scale`.
    pub fn new<R: Rng + ?Sized>(
        dims: [usize; 4],
        output_scale: f64,
        rng: &mut R,
    ) -> Result<Self, NnError> {
        let mut net = Self::zeros(dims)?;
        for k in 0..3 {
            let bound = 1.0 / (dims[k] as f64).sqrt();
            let scale = if k == 2 { output_scale } else { 1.0 };
            for v in net.params.w[k].iter_mut() {
                *v = rng.random_range(-bound..bound) * scale;
            }
            for v in net.params.b[k].iter_mut() {
                *v = rng.random_range(-bound..bound) * scale;
            }
        }
        Ok(net)
    }

    pub fn from_params(dims: [usize; 4], params: Tensors) -> Result<Self, NnError> {
        let expect = Tensors::zeros(dims);
        for (a, b) in expect.slices().iter().zip(params.slices()) {
            if a.len() != b.len() {
                return Err(NnError::Shape { what: "parameter tensor", expected: a.len(), got: b.len() });
            }
        }
        for k in 0..3 {
            if params.w[k].dim() != (dims[k], dims[k + 1]) {
                return Err(NnError::Dims(dims));
            }
        }
        Ok(Self { dims, params })
    }

    pub fn dims(&self) -> [usize; 4] {
        self.dims
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        self.dims[3]
    }

    fn check_input(&self, x: &ArrayView2<f64>) -> Result<(), NnError> {
        if x.ncols() != self.dims[0] {
            return Err(NnError::Shape { what: "network input", expected: self.dims[0], got: x.ncols() });
        }
        Ok(())
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Result<Array2<f64>, NnError> {
        self.check_input(&x)?;
        let p = &self.params;
        let h1 = (x.dot(&p.w[0]) + &p.b[0]).mapv_into(relu);
        let h2 = (h1.dot(&p.w[1]) + &p.b[1]).mapv_into(relu);
        Ok(h2.dot(&p.w[2]) + &p.b[2])
    }

    pub fn forward_one(&self, x: &[f64]) -> Result<Vec<f64>, NnError> {
        let view = ArrayView2::from_shape((1, x.len()), x).expect("row vector");
        Ok(self.forward(view)?.into_raw_vec_and_offset().0)
    }

    pub fn forward_cached(&self, x: ArrayView2<f64>) -> Result<(Array2<f64>, ForwardCache), NnError> {
        self.check_input(&x)?;
        let p = &self.params;
        let h1 = (x.dot(&p.w[0]) + &p.b[0]).mapv_into(relu);
        let h2 = (h1.dot(&p.w[1]) + &p.b[1]).mapv_into(relu);
        let y = h2.dot(&p.w[2]) + &p.b[2];
        Ok((y, ForwardCache { input: x.to_owned(), h1, h2 }))
    }

    /// Reverse-mode pass. Gradients are summed over the batch rows of
    /// `grad_out`; the ReLU derivative at zero is taken as zero.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        grad_out: ArrayView2<f64>,
    ) -> Result<(Tensors, Array2<f64>), NnError> {
        if grad_out.ncols() != self.dims[3] || grad_out.nrows() != cache.input.nrows() {
            return Err(NnError::Shape {
                what: "output gradient",
                expected: self.dims[3],
                got: grad_out.ncols(),
            });
        }
        let p = &self.params;
        let g3 = grad_out;
        let dw2 = cache.h2.t().dot(&g3);
        let db2 = g3.sum_axis(Axis(0));
        let mut g2 = g3.dot(&p.w[2].t());
        g2.zip_mut_with(&cache.h2, |g, &h| if h <= 0.0 { *g = 0.0 });
        let dw1 = cache.h1.t().dot(&g2);
        let db1 = g2.sum_axis(Axis(0));
        let mut g1 = g2.dot(&p.w[1].t());
        g1.zip_mut_with(&cache.h1, |g, &h| if h <= 0.0 { *g = 0.0 });
        let dw0 = cache.input.t().dot(&g1);
        let db0 = g1.sum_axis(Axis(0));
        let gx = g1.dot(&p.w[0].t());
        let std = |a: Array2<f64>| if a.is_standard_layout() { a } else { a.as_standard_layout().into_owned() };
        let grads = Tensors { w: vec![std(dw0), std(dw1), std(dw2)], b: vec![db0, db1, db2] };
        Ok((grads, gx))
    }

    /// Polyak averaging: `self <- (1 - tau) self + tau src`.
    pub fn soft_update(&mut self, src: &Mlp, tau: f64) {
        for (t, s) in self.params.slices_mut().into_iter().zip(src.params.slices()) {
            t.iter_mut().zip(s).for_each(|(a, b)| *a = (1.0 - tau) * *a + tau * b);
        }
    }
}

fn relu(v: f64) -> f64 {
    v.max(0.0)
}

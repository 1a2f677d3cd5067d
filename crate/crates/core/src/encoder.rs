//! MLP encoder with a projection head, trained by exact reverse-mode
//! gradients through the row-wise L2 normalization of the projection.

use ndarray::{Array1, Array2, Axis, Zip};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Affine map `x W + b` with `W` of shape `(inputs, outputs)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer<F> {
    pub weight: Array2<F>,
    pub bias: Array1<F>,
}

impl<F: Scalar> Layer<F> {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            weight: Array2::zeros((inputs, outputs)),
            bias: Array1::zeros(outputs),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.nrows()
    }

    pub fn outputs(&self) -> usize {
        self.weight.ncols()
    }

    fn same_shape(&self, other: &Layer<F>) -> bool {
        self.weight.dim() == other.weight.dim() && self.bias.dim() == other.bias.dim()
    }
}

/// Encoder stack followed by the projection head. ReLU follows every layer
/// except the final projection layer, so the encoder output is the
/// post-activation of its last layer.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderModel<F> {
    encoder: Vec<Layer<F>>,
    projection: Vec<Layer<F>>,
    generation: u64,
}

/// Per-layer gradients, laid out like the model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGrads<F> {
    pub encoder: Vec<Layer<F>>,
    pub projection: Vec<Layer<F>>,
}

impl<F: Scalar> ModelGrads<F> {
    pub fn zeros_like(model: &EncoderModel<F>) -> Self {
        let z = |ls: &[Layer<F>]| ls.iter().map(|l| Layer::zeros(l.inputs(), l.outputs())).collect();
        Self {
            encoder: z(&model.encoder),
            projection: z(&model.projection),
        }
    }

    pub fn layers(&self) -> impl Iterator<Item = &Layer<F>> {
        self.encoder.iter().chain(&self.projection)
    }

    pub fn layers_mut(&mut self) -> impl Iterator<Item = &mut Layer<F>> {
        self.encoder.iter_mut().chain(&mut self.projection)
    }

    pub fn accumulate(&mut self, other: &ModelGrads<F>) {
        for (a, b) in self.layers_mut().zip(other.layers()) {
            a.weight += &b.weight;
            a.bias += &b.bias;
        }
    }

    /// Flattened in declaration order, as [`EncoderModel::params_flat`].
    pub fn flat(&self) -> Vec<F> {
        flatten(self.layers())
    }
}

fn flatten<'a, F: Scalar>(layers: impl Iterator<Item = &'a Layer<F>>) -> Vec<F> {
    let mut out = Vec::new();
    for l in layers {
        out.extend(l.weight.iter().copied());
        out.extend(l.bias.iter().copied());
    }
    out
}

fn chain_dims(layers: &[Layer<impl Scalar>]) -> Vec<usize> {
    let mut dims = Vec::with_capacity(layers.len() + 1);
    if let Some(first) = layers.first() {
        dims.push(first.inputs());
    }
    dims.extend(layers.iter().map(Layer::outputs));
    dims
}

impl<F: Scalar> EncoderModel<F> {
    /// He-normal weights and zero biases for the given layer widths.
    /// `projection_dims[0]` must equal the last encoder width.
    pub fn init(encoder_dims: &[usize], projection_dims: &[usize], seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut build = |dims: &[usize]| -> Vec<Layer<F>> {
            dims.windows(2)
                .map(|w| {
                    let std = (2.0 / w[0] as f64).sqrt();
                    let weight = Array2::from_shape_fn((w[0], w[1]), |_| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        F::of(std * z)
                    });
                    Layer {
                        weight,
                        bias: Array1::zeros(w[1]),
                    }
                })
                .collect()
        };
        let encoder = build(encoder_dims);
        let projection = build(projection_dims);
        Self::from_layers(encoder, projection)
    }

    pub fn zeros(encoder_dims: &[usize], projection_dims: &[usize]) -> Result<Self> {
        let build = |dims: &[usize]| dims.windows(2).map(|w| Layer::zeros(w[0], w[1])).collect();
        Self::from_layers(build(encoder_dims), build(projection_dims))
    }

    pub fn from_layers(encoder: Vec<Layer<F>>, projection: Vec<Layer<F>>) -> Result<Self> {
        if encoder.is_empty() || projection.is_empty() {
            return Err(Error::Shape(
                "encoder and projection head each need at least one layer".into(),
            ));
        }
        let all: Vec<&Layer<F>> = encoder.iter().chain(&projection).collect();
        for l in &all {
            if l.bias.len() != l.outputs() {
                return Err(Error::Shape(format!(
                    "bias of length {} for a layer with {} outputs",
                    l.bias.len(),
                    l.outputs()
                )));
            }
        }
        for w in all.windows(2) {
            if w[0].outputs() != w[1].inputs() {
                return Err(Error::Shape(format!(
                    "layer widths do not chain: {} -> {}",
                    w[0].outputs(),
                    w[1].inputs()
                )));
            }
        }
        if all.iter().any(|l| l.weight.iter().chain(l.bias.iter()).any(|v| !v.is_finite())) {
            return Err(Error::Numeric("non-finite parameter".into()));
        }
        Ok(Self {
            encoder,
            projection,
            generation: 0,
        })
    }

    pub fn encoder_dims(&self) -> Vec<usize> {
        chain_dims(&self.encoder)
    }

    pub fn projection_dims(&self) -> Vec<usize> {
        chain_dims(&self.projection)
    }

    pub fn input_dim(&self) -> usize {
        self.encoder[0].inputs()
    }

    pub fn output_dim(&self) -> usize {
        self.encoder.last().unwrap().outputs()
    }

    pub fn encoder_layers(&self) -> &[Layer<F>] {
        &self.encoder
    }

    pub fn projection_layers(&self) -> &[Layer<F>] {
        &self.projection
    }

    pub fn layers(&self) -> impl Iterator<Item = &Layer<F>> {
        self.encoder.iter().chain(&self.projection)
    }

    /// Mutable parameter access; invalidates every outstanding forward cache.
    pub fn layers_mut(&mut self) -> impl Iterator<Item = &mut Layer<F>> {
        self.generation += 1;
        self.encoder.iter_mut().chain(&mut self.projection)
    }

    /// Mutable access to the projection head only (still bumps the generation).
    pub fn projection_layers_mut(&mut self) -> &mut [Layer<F>] {
        self.generation += 1;
        &mut self.projection
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn num_params(&self) -> usize {
        self.layers().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    /// Parameters in declaration order: per layer, weight (row-major) then bias.
    pub fn params_flat(&self) -> Vec<F> {
        flatten(self.layers())
    }

    pub fn set_params_flat(&mut self, values: &[F]) -> Result<()> {
        if values.len() != self.num_params() {
            return Err(Error::Shape(format!(
                "{} values for {} parameters",
                values.len(),
                self.num_params()
            )));
        }
        let mut it = values.iter().copied();
        for l in self.layers_mut() {
            for v in l.weight.iter_mut().chain(l.bias.iter_mut()) {
                *v = it.next().unwrap();
            }
        }
        Ok(())
    }

    pub(crate) fn same_shape(&self, grads: &ModelGrads<F>) -> bool {
        self.encoder.len() == grads.encoder.len()
            && self.projection.len() == grads.projection.len()
            && self.layers().zip(grads.layers()).all(|(a, b)| a.same_shape(b))
    }
}

/// Activations retained by [`forward`] for [`backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache<F> {
    generation: u64,
    /// Input to every layer, encoder then projection.
    inputs: Vec<Array2<F>>,
    /// Affine outputs of every layer before the activation.
    pre_activations: Vec<Array2<F>>,
    norms: Array1<F>,
}

#[derive(Debug, Clone)]
pub struct ForwardOutput<F> {
    pub encoder_output: Array2<F>,
    /// Unit-norm rows; a zero raw projection stays zero.
    pub projection_output: Array2<F>,
    /// Rows whose raw projection was the zero vector.
    pub degenerate: Vec<bool>,
    pub cache: ForwardCache<F>,
}

fn relu<F: Scalar>(x: &Array2<F>) -> Array2<F> {
    x.mapv(|v| if v > F::zero() { v } else { F::zero() })
}

fn check_input<F: Scalar>(model: &EncoderModel<F>, input: &Array2<F>) -> Result<()> {
    if input.ncols() != model.input_dim() {
        return Err(Error::Shape(format!(
            "input width {} but the encoder expects {}",
            input.ncols(),
            model.input_dim()
        )));
    }
    Ok(())
}

/// Encoder features only, without caching.
pub fn encode<F: Scalar>(model: &EncoderModel<F>, input: &Array2<F>) -> Result<Array2<F>> {
    check_input(model, input)?;
    let mut h = input.clone();
    for l in &model.encoder {
        h = relu(&(h.dot(&l.weight) + &l.bias));
    }
    if h.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite encoder output".into()));
    }
    Ok(h)
}

pub fn forward<F: Scalar>(model: &EncoderModel<F>, input: &Array2<F>) -> Result<ForwardOutput<F>> {
    check_input(model, input)?;
    let total = model.encoder.len() + model.projection.len();
    let mut inputs = Vec::with_capacity(total);
    let mut pre = Vec::with_capacity(total);
    let mut h = input.clone();
    let mut encoder_output = None;
    for (idx, l) in model.layers().enumerate() {
        let z = h.dot(&l.weight) + &l.bias;
        let next = if idx + 1 < total { relu(&z) } else { z.clone() };
        inputs.push(std::mem::replace(&mut h, next));
        pre.push(z);
        if idx + 1 == model.encoder.len() {
            encoder_output = Some(h.clone());
        }
    }
    let norms: Array1<F> = h
        .axis_iter(Axis(0))
        .map(|r| r.iter().fold(F::zero(), |a, &v| a + v * v).sqrt())
        .collect();
    let degenerate: Vec<bool> = norms.iter().map(|&n| n == F::zero()).collect();
    let mut projection_output = h;
    for (mut row, &n) in projection_output.axis_iter_mut(Axis(0)).zip(norms.iter()) {
        if n > F::zero() {
            row.mapv_inplace(|v| v / n);
        }
    }
    let encoder_output = encoder_output.expect("encoder has at least one layer");
    if projection_output.iter().chain(encoder_output.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite forward output".into()));
    }
    Ok(ForwardOutput {
        encoder_output,
        projection_output,
        degenerate,
        cache: ForwardCache {
            generation: model.generation,
            inputs,
            pre_activations: pre,
            norms,
        },
    })
}

/// Parameter gradients given `d loss / d projection_output`.
pub fn backward<F: Scalar>(
    model: &EncoderModel<F>,
    cache: &ForwardCache<F>,
    grad_wrt_projection: &Array2<F>,
) -> Result<ModelGrads<F>> {
    if cache.generation != model.generation {
        return Err(Error::State(
            "forward cache predates the latest parameter update".into(),
        ));
    }
    let total = model.encoder.len() + model.projection.len();
    let last = &cache.pre_activations[total - 1];
    if grad_wrt_projection.dim() != last.dim() {
        return Err(Error::Shape(format!(
            "upstream gradient {:?} but projection output {:?}",
            grad_wrt_projection.dim(),
            last.dim()
        )));
    }
    // d u / d v for u = v / |v| applied row-wise: (g - u (u.g)) / |v|
    let mut delta = grad_wrt_projection.clone();
    for ((mut g, v), &n) in delta
        .axis_iter_mut(Axis(0))
        .zip(last.axis_iter(Axis(0)))
        .zip(cache.norms.iter())
    {
        if n == F::zero() {
            g.fill(F::zero());
            continue;
        }
        let ug = v.iter().zip(g.iter()).fold(F::zero(), |a, (&vi, &gi)| a + vi * gi) / n;
        Zip::from(&mut g).and(&v).for_each(|gi, &vi| {
            *gi = (*gi - vi / n * ug) / n;
        });
    }
    backward_raw(model, cache, &delta)
}

/// Parameter gradients given `d loss / d raw projection`, i.e. skipping the
/// row normalization.
pub fn backward_raw<F: Scalar>(
    model: &EncoderModel<F>,
    cache: &ForwardCache<F>,
    grad_wrt_raw: &Array2<F>,
) -> Result<ModelGrads<F>> {
    if cache.generation != model.generation {
        return Err(Error::State(
            "forward cache predates the latest parameter update".into(),
        ));
    }
    let total = model.encoder.len() + model.projection.len();
    if grad_wrt_raw.dim() != cache.pre_activations[total - 1].dim() {
        return Err(Error::Shape(format!(
            "upstream gradient {:?} but projection output {:?}",
            grad_wrt_raw.dim(),
            cache.pre_activations[total - 1].dim()
        )));
    }
    let mut delta = grad_wrt_raw.clone();
    let mut grads = ModelGrads::zeros_like(model);
    let layers: Vec<&Layer<F>> = model.layers().collect();
    let mut grad_layers: Vec<&mut Layer<F>> = grads.layers_mut().collect();
    for idx in (0..total).rev() {
        if idx + 1 < total {
            Zip::from(&mut delta)
                .and(&cache.pre_activations[idx])
                .for_each(|d, &z| {
                    if z <= F::zero() {
                        *d = F::zero();
                    }
                });
        }
        let gl = &mut grad_layers[idx];
        gl.weight = cache.inputs[idx].t().dot(&delta);
        gl.bias = delta.sum_axis(Axis(0));
        if idx > 0 {
            delta = delta.dot(&layers[idx].weight.t());
        }
    }
    Ok(grads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::Rng;

    #[test]
    fn zero_model_output() {
        let m = EncoderModel::<f64>::zeros(&[3, 4], &[4, 2]).unwrap();
        let out = forward(&m, &array![[1.0, 2.0, 3.0], [-1.0, 0.5, 0.0]]).unwrap();
        assert!(out.encoder_output.iter().all(|&v| v == 0.0));
        assert!(out.projection_output.iter().all(|&v| v == 0.0));
        assert_eq!(out.degenerate, vec![true, true]);
    }

    #[test]
    fn identity_layer_passes_positive_input() {
        let id = Layer {
            weight: Array2::eye(3),
            bias: Array1::zeros(3),
        };
        let m = EncoderModel::from_layers(vec![id.clone()], vec![id]).unwrap();
        let x = array![[0.5, 1.0, 2.0]];
        let out = forward(&m, &x).unwrap();
        assert_eq!(out.encoder_output, x);
        assert_eq!(encode(&m, &x).unwrap(), x);
    }

    #[test]
    fn matches_straight_line_evaluation() {
        let m = EncoderModel::<f64>::init(&[4, 5, 3], &[3, 6, 2], 17).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = Array2::from_shape_fn((3, 4), |_| rng.random_range(-1.0..1.0));
        let out = forward(&m, &x).unwrap();
        // explicit per-row loops over the flat parameter vector
        let p = m.params_flat();
        let dims = [4usize, 5, 3, 6, 2];
        for r in 0..3 {
            let mut h: Vec<f64> = x.row(r).to_vec();
            let mut off = 0;
            let mut enc = Vec::new();
            for li in 0..4 {
                let (ni, no) = (dims[li], dims[li + 1]);
                let mut z = vec![0.0; no];
                for (o, zo) in z.iter_mut().enumerate() {
                    let mut s = p[off + ni * no + o];
                    for i in 0..ni {
                        s += h[i] * p[off + i * no + o];
                    }
                    *zo = if li < 3 { s.max(0.0) } else { s };
                }
                off += ni * no + no;
                h = z;
                if li == 1 {
                    enc = h.clone();
                }
            }
            let n = h.iter().map(|v| v * v).sum::<f64>().sqrt();
            for j in 0..2 {
                assert!((out.projection_output[[r, j]] - h[j] / n).abs() < 1e-12);
            }
            for j in 0..3 {
                assert!((out.encoder_output[[r, j]] - enc[j]).abs() < 1e-12);
            }
            let norm: f64 = out.projection_output.row(r).iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn shape_errors() {
        let m = EncoderModel::<f64>::init(&[4, 5], &[5, 2], 1).unwrap();
        assert!(matches!(forward(&m, &Array2::zeros((2, 3))), Err(Error::Shape(_))));
        assert!(EncoderModel::<f64>::init(&[4, 5], &[6, 2], 1).is_err());
        let out = forward(&m, &Array2::ones((2, 4))).unwrap();
        assert!(matches!(backward(&m, &out.cache, &Array2::zeros((2, 3))), Err(Error::Shape(_))));
    }

    #[test]
    fn stale_cache_rejected() {
        let mut m = EncoderModel::<f64>::init(&[2, 3], &[3, 2], 1).unwrap();
        let out = forward(&m, &array![[1.0, 2.0]]).unwrap();
        let p = m.params_flat();
        m.set_params_flat(&p).unwrap();
        assert!(matches!(
            backward(&m, &out.cache, &array![[1.0, 0.0]]),
            Err(Error::State(_))
        ));
    }

    #[test]
    fn zero_upstream_gradient() {
        let m = EncoderModel::<f64>::init(&[3, 4, 4], &[4, 2], 5).unwrap();
        let x = array![[0.3, -0.2, 1.0], [1.0, 1.0, -1.0]];
        let out = forward(&m, &x).unwrap();
        let g = backward(&m, &out.cache, &Array2::zeros((2, 2))).unwrap();
        assert!(g.flat().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn linear_layer_gradient_is_input_outer_ones() {
        let id = Layer {
            weight: Array2::eye(2),
            bias: Array1::zeros(2),
        };
        let proj = Layer {
            weight: array![[1.0, -2.0, 0.5], [0.0, 1.0, 3.0]],
            bias: array![0.1, 0.2, 0.3],
        };
        let m = EncoderModel::from_layers(vec![id], vec![proj]).unwrap();
        let x = array![[3.0, 4.0], [1.0, 2.0]];
        let out = forward(&m, &x).unwrap();
        // loss = sum of raw projection outputs
        let g = backward_raw(&m, &out.cache, &Array2::ones((2, 3))).unwrap();
        let expected = x.t().dot(&Array2::<f64>::ones((2, 3)));
        assert_eq!(g.projection[0].weight, expected);
        assert_eq!(g.projection[0].bias, array![2.0, 2.0, 2.0]);
    }
}

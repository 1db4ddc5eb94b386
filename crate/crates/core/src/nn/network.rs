use super::layers::*;
use super::{Rng, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Layer {
    Param { name: String, params: LayerParams },
    Relu,
    MaxPool { h: usize, w: usize },
    Dropout { p: f64 },
    Flatten,
}

impl Layer {
    pub fn params(&self) -> Option<&LayerParams> {
        match self {
            Layer::Param { params, .. } => Some(params),
            _ => None,
        }
    }

    pub fn params_mut(&mut self) -> Option<&mut LayerParams> {
        match self {
            Layer::Param { params, .. } => Some(params),
            _ => None,
        }
    }

    pub fn name(&self) -> Option<&str> {
        match self {
            Layer::Param { name, .. } => Some(name),
            _ => None,
        }
    }
}

#[derive(Clone, Debug)]
enum Entry {
    Conv(Conv2dCache),
    Bn { cache: BatchNormCache, batch_stats: bool },
    Dense { input: Tensor },
    Relu(Vec<bool>),
    Pool(MaxPoolCache),
    Dropout(Option<Vec<f64>>),
    Flatten(Vec<usize>),
}

/// Activations recorded by [`Sequential::forward`] for one batch.
#[derive(Clone, Debug)]
pub struct Cache {
    start: usize,
    entries: Vec<Entry>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamGrad {
    pub weight: Tensor,
    pub bias: Tensor,
}

/// Parameter gradients, one slot per layer of the owning network. Frozen and
/// parameterless layers hold `None`.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub per_layer: Vec<Option<ParamGrad>>,
}

impl Gradients {
    pub fn zeros_like(net: &Sequential) -> Self {
        let per_layer = net
            .layers
            .iter()
            .map(|l| {
                l.params().filter(|p| !p.frozen).map(|p| ParamGrad {
                    weight: Tensor::zeros(p.weight.shape()),
                    bias: Tensor::zeros(p.bias.shape()),
                })
            })
            .collect();
        Gradients { per_layer }
    }

    pub fn is_zero(&self) -> bool {
        self.per_layer
            .iter()
            .flatten()
            .all(|g| g.weight.data().iter().chain(g.bias.data()).all(|v| *v == 0.0))
    }

    /// Adds `other` slot by slot. A slot present only in `other` is copied.
    pub fn accumulate(&mut self, other: Gradients) -> Result<()> {
        if other.per_layer.len() != self.per_layer.len() {
            return Err(Error::Shape("gradients from different networks".into()));
        }
        for (mine, theirs) in self.per_layer.iter_mut().zip(other.per_layer) {
            match (mine.as_mut(), theirs) {
                (Some(a), Some(b)) => {
                    a.weight.data_mut().iter_mut().zip(b.weight.data()).for_each(|(x, y)| *x += y);
                    a.bias.data_mut().iter_mut().zip(b.bias.data()).for_each(|(x, y)| *x += y);
                }
                (None, Some(b)) => *mine = Some(b),
                (_, None) => {}
            }
        }
        Ok(())
    }

    pub fn scale(&mut self, s: f64) {
        for g in self.per_layer.iter_mut().flatten() {
            g.weight.data_mut().iter_mut().chain(g.bias.data_mut()).for_each(|v| *v *= s);
        }
    }
}

/// Ordered layer stack.
#[derive(Clone, Debug, PartialEq)]
pub struct Sequential {
    pub layers: Vec<Layer>,
}

impl Sequential {
    pub fn new(layers: Vec<Layer>) -> Self {
        Sequential { layers }
    }

    pub fn forward(&self, input: &Tensor, mode: Mode, rng: &mut Rng) -> Result<(Tensor, Cache)> {
        self.forward_range(0, self.layers.len(), input, mode, rng)
    }

    /// Runs layers `start..end`. Frozen batch-norm layers always use their
    /// running statistics, so a frozen prefix behaves identically in both modes.
    pub fn forward_range(
        &self,
        start: usize,
        end: usize,
        input: &Tensor,
        mode: Mode,
        rng: &mut Rng,
    ) -> Result<(Tensor, Cache)> {
        let training = mode == Mode::Train;
        let mut x = input.clone();
        let mut entries = Vec::with_capacity(end - start);
        for layer in &self.layers[start..end] {
            let (y, entry) = match layer {
                Layer::Param { params, .. } => match params.kind {
                    LayerKind::Conv2d => {
                        let (y, c) = conv2d_forward(&x, params)?;
                        (y, Entry::Conv(c))
                    }
                    LayerKind::BatchNorm => {
                        let batch_stats = training && !params.frozen;
                        let (y, cache) = batchnorm_forward(&x, params, batch_stats)?;
                        (y, Entry::Bn { cache, batch_stats })
                    }
                    LayerKind::Dense | LayerKind::LinearOutput => {
                        let y = dense_forward(&x, params)?;
                        (y, Entry::Dense { input: x })
                    }
                },
                Layer::Relu => {
                    let (y, mask) = relu_forward(&x);
                    (y, Entry::Relu(mask))
                }
                Layer::MaxPool { h, w } => {
                    let (y, c) = maxpool2d_forward(&x, *h, *w)?;
                    (y, Entry::Pool(c))
                }
                Layer::Dropout { p } => {
                    let (y, mask) = dropout_forward(&x, *p, training, rng)?;
                    (y, Entry::Dropout(mask))
                }
                Layer::Flatten => {
                    let shape = x.shape().to_vec();
                    let n = shape[0];
                    let rest = x.len() / n;
                    (x.reshape(&[n, rest])?, Entry::Flatten(shape))
                }
            };
            entries.push(entry);
            x = y;
        }
        Ok((x, Cache { start, entries }))
    }

    /// Inference-mode forward without keeping the cache.
    pub fn infer(&self, input: &Tensor) -> Result<Tensor> {
        let mut rng = Rng::new(0);
        Ok(self.forward(input, Mode::Infer, &mut rng)?.0)
    }

    /// Backpropagates `grad_out` through the layers recorded in `cache`.
    /// Returns gradients for every non-frozen parameter layer and the gradient
    /// with respect to the cached input. Layers outside the cached range get
    /// `None`.
    pub fn backward(&self, cache: &Cache, grad_out: &Tensor) -> Result<(Gradients, Tensor)> {
        let end = cache.start + cache.entries.len();
        if end > self.layers.len() {
            return Err(Error::State("cache does not belong to this network".into()));
        }
        let mut per_layer: Vec<Option<ParamGrad>> = vec![None; self.layers.len()];
        let mut g = grad_out.clone();
        for (offset, entry) in cache.entries.iter().enumerate().rev() {
            let idx = cache.start + offset;
            let layer = &self.layers[idx];
            g = match (layer, entry) {
                (Layer::Param { params, .. }, Entry::Conv(c)) => {
                    let (dx, pg) = conv2d_backward(&g, params, c, !params.frozen)?;
                    per_layer[idx] = pg.map(|(weight, bias)| ParamGrad { weight, bias });
                    dx
                }
                (Layer::Param { params, .. }, Entry::Bn { cache, .. }) => {
                    let (dx, dgamma, dbeta) = batchnorm_backward(&g, params, cache)?;
                    if !params.frozen {
                        per_layer[idx] = Some(ParamGrad { weight: dgamma, bias: dbeta });
                    }
                    dx
                }
                (Layer::Param { params, .. }, Entry::Dense { input }) => {
                    let (dx, pg) = dense_backward(&g, input, params, !params.frozen)?;
                    per_layer[idx] = pg.map(|(weight, bias)| ParamGrad { weight, bias });
                    dx
                }
                (Layer::Relu, Entry::Relu(mask)) => relu_backward(&g, mask),
                (Layer::MaxPool { .. }, Entry::Pool(c)) => maxpool2d_backward(&g, c),
                (Layer::Dropout { .. }, Entry::Dropout(mask)) => match mask {
                    Some(m) => {
                        let dx = g.data().iter().zip(m).map(|(a, b)| a * b).collect();
                        Tensor::from_raw(g.shape().to_vec(), dx)
                    }
                    None => g,
                },
                (Layer::Flatten, Entry::Flatten(shape)) => g.reshape(shape)?,
                _ => return Err(Error::State(format!("cache entry does not match layer {idx}"))),
            };
        }
        Ok((Gradients { per_layer }, g))
    }

    /// Folds the batch statistics recorded in a training-mode `cache` into
    /// the running statistics of every non-frozen batch-norm layer.
    pub fn commit_running_stats(&mut self, cache: &Cache) {
        for (offset, entry) in cache.entries.iter().enumerate() {
            let Entry::Bn { cache: bn, batch_stats: true } = entry else { continue };
            let Some(params) = self.layers[cache.start + offset].params_mut() else { continue };
            if params.frozen {
                continue;
            }
            let (Some(mean), Some(var)) = (&bn.batch_mean, &bn.batch_var) else { continue };
            let unbias = if bn.count > 1 { bn.count as f64 / (bn.count - 1) as f64 } else { 1.0 };
            if let Some(rm) = params.running_mean.as_mut() {
                for (r, m) in rm.data_mut().iter_mut().zip(mean) {
                    *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * m;
                }
            }
            if let Some(rv) = params.running_var.as_mut() {
                for (r, v) in rv.data_mut().iter_mut().zip(var) {
                    *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * v * unbias;
                }
            }
        }
    }

    pub fn param_layers(&self) -> impl Iterator<Item = (usize, &str, &LayerParams)> {
        self.layers
            .iter()
            .enumerate()
            .filter_map(|(i, l)| match l {
                Layer::Param { name, params } => Some((i, name.as_str(), params)),
                _ => None,
            })
    }

    pub fn num_parameters(&self) -> usize {
        self.param_layers().map(|(_, _, p)| p.weight.len() + p.bias.len()).sum()
    }

    /// Shape of the output for an input of `input_shape`, computed by
    /// propagating a zero tensor. Returns every intermediate shape.
    pub fn shape_trace(&self, input_shape: &[usize]) -> Result<Vec<Vec<usize>>> {
        let mut x = Tensor::zeros(input_shape);
        let mut rng = Rng::new(0);
        let mut shapes = Vec::with_capacity(self.layers.len());
        for i in 0..self.layers.len() {
            x = self.forward_range(i, i + 1, &x, Mode::Infer, &mut rng)?.0;
            shapes.push(x.shape().to_vec());
        }
        Ok(shapes)
    }
}

use std::fmt;

use ndarray::{Array1, Array2, ArrayD, ArrayView2, Axis, Ix1, IxDyn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::kernels::{BnLayout, ConvGeom, PoolGeom, BN_EPS, BN_MOMENTUM};
use super::spec::{numel, LayerSpec, ModelSpec};
use crate::constraints::{build_mask, ConstraintPolicy};
use crate::{Error, Result, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ParamName {
    #[serde(rename = "W")]
    Weight,
    #[serde(rename = "b")]
    Bias,
    #[serde(rename = "gamma")]
    Gamma,
    #[serde(rename = "beta")]
    Beta,
}

impl ParamName {
    pub fn as_str(self) -> &'static str {
        match self {
            ParamName::Weight => "W",
            ParamName::Bias => "b",
            ParamName::Gamma => "gamma",
            ParamName::Beta => "beta",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "W" => ParamName::Weight,
            "b" => ParamName::Bias,
            "gamma" => ParamName::Gamma,
            "beta" => ParamName::Beta,
            _ => return None,
        })
    }
}

impl fmt::Display for ParamName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A parameter tensor addressed by parametric-layer ordinal (first = 1).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ParamId {
    pub layer: usize,
    pub name: ParamName,
}

impl ParamId {
    pub fn new(layer: usize, name: ParamName) -> Self {
        ParamId { layer, name }
    }
}

impl fmt::Display for ParamId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "layer{}.{}", self.layer, self.name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param<S> {
    pub name: ParamName,
    pub value: ArrayD<S>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunningStats<S> {
    pub mean: Array1<S>,
    pub var: Array1<S>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer<S> {
    pub spec: LayerSpec,
    /// Parametric ordinal, `None` for parameter-free layers.
    pub ordinal: Option<usize>,
    pub params: Vec<Param<S>>,
    pub running: Option<RunningStats<S>>,
    pub in_shape: Vec<usize>,
    pub out_shape: Vec<usize>,
}

impl<S: Scalar> Layer<S> {
    pub fn param(&self, name: ParamName) -> Option<&ArrayD<S>> {
        self.params.iter().find(|p| p.name == name).map(|p| &p.value)
    }

    fn param2(&self, name: ParamName) -> ndarray::ArrayView2<'_, S> {
        let v = self.param(name).expect("layer parameter present");
        let rows = v.shape()[0];
        let cols = v.len() / rows.max(1);
        v.view()
            .into_shape_with_order((rows, cols))
            .expect("parameters are stored in standard layout")
    }

    fn param1(&self, name: ParamName) -> ndarray::ArrayView1<'_, S> {
        self.param(name)
            .expect("layer parameter present")
            .view()
            .into_dimensionality::<Ix1>()
            .expect("vector parameter")
    }

    fn conv_geom(&self) -> ConvGeom {
        let LayerSpec::Conv2d {
            kernel,
            stride,
            padding,
            ..
        } = self.spec
        else {
            unreachable!("conv geometry on non-conv layer")
        };
        ConvGeom {
            c: self.in_shape[0],
            h: self.in_shape[1],
            w: self.in_shape[2],
            k: kernel,
            stride,
            pad: padding,
            oh: self.out_shape[1],
            ow: self.out_shape[2],
        }
    }

    fn pool_geom(&self) -> PoolGeom {
        let LayerSpec::Maxpool { size, stride } = self.spec else {
            unreachable!("pool geometry on non-pool layer")
        };
        PoolGeom {
            c: self.in_shape[0],
            h: self.in_shape[1],
            w: self.in_shape[2],
            size,
            stride: stride.unwrap_or(size),
            oh: self.out_shape[1],
            ow: self.out_shape[2],
        }
    }
}

/// Auxiliary values a layer needs for its backward pass.
#[derive(Debug, Clone)]
enum Aux<S> {
    None,
    PoolArg(Vec<usize>),
    Norm {
        xhat: Array2<S>,
        inv_std: Array1<S>,
        batch_mean: Array1<S>,
        batch_var: Array1<S>,
    },
}

/// Activation record of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache<S> {
    mode: Mode,
    nodes: Vec<Array2<S>>,
    aux: Vec<Aux<S>>,
}

impl<S> ForwardCache<S> {
    pub fn mode(&self) -> Mode {
        self.mode
    }

    /// Node `k` output (node 0 is the input).
    pub fn node(&self, k: usize) -> Option<&Array2<S>> {
        self.nodes.get(k)
    }
}

#[derive(Debug, Clone)]
pub struct Forward<S> {
    pub logits: Array2<S>,
    pub cache: ForwardCache<S>,
}

/// One gradient tensor per parameter, in [`Network::param_ids`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<S> {
    pub ids: Vec<ParamId>,
    pub values: Vec<ArrayD<S>>,
}

impl<S: Scalar> Gradients<S> {
    pub fn get(&self, id: ParamId) -> Option<&ArrayD<S>> {
        self.ids.iter().position(|&i| i == id).map(|p| &self.values[p])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network<S> {
    spec: ModelSpec,
    layers: Vec<Layer<S>>,
    policy: Option<ConstraintPolicy>,
}

fn sample_tensor<S: Scalar>(
    rng: &mut ChaCha8Rng,
    shape: &[usize],
    std: f64,
    nonneg: bool,
) -> ArrayD<S> {
    let normal = Normal::new(0.0, std).expect("positive std");
    ArrayD::from_shape_fn(IxDyn(shape), |_| {
        let v: f64 = normal.sample(rng);
        S::of(if nonneg { v.abs() } else { v })
    })
}

impl<S: Scalar> Network<S> {
    /// Unconstrained network with He-style Gaussian weights and zero biases.
    pub fn new(spec: ModelSpec, init_seed: u64) -> Result<Self> {
        Self::init(spec, init_seed, None)
    }

    /// Network whose sign-constrained tensors start non-negative: weights
    /// are drawn from `|N(0, 1/fan_in)|`, so the initial model is already
    /// input-output convex. The policy is attached to the model.
    pub fn new_convex(spec: ModelSpec, init_seed: u64, policy: ConstraintPolicy) -> Result<Self> {
        Self::init(spec, init_seed, Some(policy))
    }

    fn init(spec: ModelSpec, seed: u64, policy: Option<ConstraintPolicy>) -> Result<Self> {
        let nodes = spec.node_shapes()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::with_capacity(spec.layers.len());
        let mut ordinal = 0;
        for (i, ls) in spec.layers.iter().enumerate() {
            let (in_shape, out_shape) = (nodes[i].clone(), nodes[i + 1].clone());
            let ord = if ls.is_parametric() {
                ordinal += 1;
                Some(ordinal)
            } else {
                None
            };
            let mut layer = Layer {
                spec: ls.clone(),
                ordinal: ord,
                params: Vec::new(),
                running: None,
                in_shape,
                out_shape,
            };
            let constrained = policy.is_some() && ordinal > 1;
            match *ls {
                LayerSpec::Dense { units } => {
                    let fan_in = numel(&layer.in_shape);
                    let (std, nonneg) = weight_init(fan_in, constrained);
                    layer.params.push(Param {
                        name: ParamName::Weight,
                        value: sample_tensor(&mut rng, &[units, fan_in], std, nonneg),
                    });
                    layer.params.push(Param {
                        name: ParamName::Bias,
                        value: ArrayD::zeros(IxDyn(&[units])),
                    });
                }
                LayerSpec::Conv2d { filters, kernel, .. } => {
                    let c = layer.in_shape[0];
                    let (std, nonneg) = weight_init(c * kernel * kernel, constrained);
                    layer.params.push(Param {
                        name: ParamName::Weight,
                        value: sample_tensor(&mut rng, &[filters, c, kernel, kernel], std, nonneg),
                    });
                    layer.params.push(Param {
                        name: ParamName::Bias,
                        value: ArrayD::zeros(IxDyn(&[filters])),
                    });
                }
                LayerSpec::Batchnorm => {
                    let ch = BnLayout::from_shape(&layer.in_shape).channels;
                    layer.params.push(Param {
                        name: ParamName::Gamma,
                        value: ArrayD::from_elem(IxDyn(&[ch]), S::one()),
                    });
                    layer.params.push(Param {
                        name: ParamName::Beta,
                        value: ArrayD::zeros(IxDyn(&[ch])),
                    });
                    layer.running = Some(RunningStats {
                        mean: Array1::zeros(ch),
                        var: Array1::from_elem(ch, S::one()),
                    });
                }
                _ => {}
            }
            layers.push(layer);
        }
        Ok(Network {
            spec,
            layers,
            policy,
        })
    }

    /// Reassembles a model from stored parameters, checking every shape.
    pub fn from_parts(
        spec: ModelSpec,
        params: Vec<(ParamId, ArrayD<S>)>,
        running: Vec<(usize, RunningStats<S>)>,
        policy: Option<ConstraintPolicy>,
    ) -> Result<Self> {
        let mut net = Self::init(spec, 0, None)?;
        net.policy = policy;
        let expected = net.param_ids();
        if expected.len() != params.len() {
            return Err(Error::Shape(format!(
                "expected {} parameter tensors, got {}",
                expected.len(),
                params.len()
            )));
        }
        for (id, value) in params {
            let slot = net
                .param_mut(id)
                .ok_or(Error::MissingParam {
                    layer: id.layer,
                    name: id.name,
                })?;
            if slot.shape() != value.shape() {
                return Err(Error::Shape(format!(
                    "{id}: expected shape {:?}, got {:?}",
                    slot.shape(),
                    value.shape()
                )));
            }
            *slot = value;
        }
        for (ord, stats) in running {
            let layer = net
                .layers
                .iter_mut()
                .find(|l| l.ordinal == Some(ord) && l.running.is_some())
                .ok_or_else(|| Error::Format(format!("no batchnorm layer with ordinal {ord}")))?;
            let cur = layer.running.as_ref().expect("checked");
            if cur.mean.len() != stats.mean.len() || cur.var.len() != stats.var.len() {
                return Err(Error::Shape(format!("running statistics of layer {ord}")));
            }
            if stats.var.iter().any(|&v| !(v > S::zero())) {
                return Err(Error::Format(format!(
                    "running variance of layer {ord} must be strictly positive"
                )));
            }
            layer.running = Some(stats);
        }
        Ok(net)
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[Layer<S>] {
        &self.layers
    }

    /// Running statistics of batchnorm layers, keyed by parametric ordinal.
    pub fn running_stats(&self) -> impl Iterator<Item = (usize, &RunningStats<S>)> {
        self.layers
            .iter()
            .filter_map(|l| Some((l.ordinal?, l.running.as_ref()?)))
    }

    pub fn running_stats_mut(&mut self, ordinal: usize) -> Option<&mut RunningStats<S>> {
        self.layers
            .iter_mut()
            .find(|l| l.ordinal == Some(ordinal))
            .and_then(|l| l.running.as_mut())
    }

    pub fn policy(&self) -> Option<&ConstraintPolicy> {
        self.policy.as_ref()
    }

    pub fn set_policy(&mut self, policy: Option<ConstraintPolicy>) {
        self.policy = policy;
    }

    pub fn num_parametric_layers(&self) -> usize {
        self.layers.iter().filter(|l| l.ordinal.is_some()).count()
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        self.params().map(|(id, _)| id).collect()
    }

    pub fn params(&self) -> impl Iterator<Item = (ParamId, &ArrayD<S>)> {
        self.layers.iter().flat_map(|l| {
            l.params.iter().map(move |p| {
                (
                    ParamId::new(l.ordinal.expect("parametric layer"), p.name),
                    &p.value,
                )
            })
        })
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = (ParamId, &mut ArrayD<S>)> {
        self.layers.iter_mut().flat_map(|l| {
            let ord = l.ordinal;
            l.params.iter_mut().map(move |p| {
                (
                    ParamId::new(ord.expect("parametric layer"), p.name),
                    &mut p.value,
                )
            })
        })
    }

    pub fn param(&self, id: ParamId) -> Option<&ArrayD<S>> {
        self.params().find(|(i, _)| *i == id).map(|(_, v)| v)
    }

    pub fn param_mut(&mut self, id: ParamId) -> Option<&mut ArrayD<S>> {
        self.params_mut().find(|(i, _)| *i == id).map(|(_, v)| v)
    }

    pub fn num_params(&self) -> usize {
        self.params().map(|(_, v)| v.len()).sum()
    }

    /// Parameters flattened in [`Network::param_ids`] order.
    pub fn flat_params(&self) -> Vec<S> {
        self.params().flat_map(|(_, v)| v.iter().copied()).collect()
    }

    /// Copy of the model in another scalar type.
    pub fn cast<T: Scalar>(&self) -> Network<T> {
        let conv = |a: &ArrayD<S>| a.mapv(|v| T::of(v.as_f64()));
        Network {
            spec: self.spec.clone(),
            layers: self
                .layers
                .iter()
                .map(|l| Layer {
                    spec: l.spec.clone(),
                    ordinal: l.ordinal,
                    params: l
                        .params
                        .iter()
                        .map(|p| Param {
                            name: p.name,
                            value: conv(&p.value),
                        })
                        .collect(),
                    running: l.running.as_ref().map(|r| RunningStats {
                        mean: r.mean.mapv(|v| T::of(v.as_f64())),
                        var: r.var.mapv(|v| T::of(v.as_f64())),
                    }),
                    in_shape: l.in_shape.clone(),
                    out_shape: l.out_shape.clone(),
                })
                .collect(),
            policy: self.policy.clone(),
        }
    }

    /// Infer-mode logits.
    pub fn logits(&self, inputs: ArrayView2<S>) -> Result<Array2<S>> {
        Ok(self.forward(inputs, Mode::Infer)?.logits)
    }

    /// Pre-final-map outputs for `inputs` (`[n, input_len]`, images flattened
    /// channel-major).
    pub fn forward(&self, inputs: ArrayView2<S>, mode: Mode) -> Result<Forward<S>> {
        if inputs.ncols() != self.spec.input_len() {
            return Err(Error::Shape(format!(
                "model expects {} input features, batch has {}",
                self.spec.input_len(),
                inputs.ncols()
            )));
        }
        let n = inputs.nrows();
        let mut nodes: Vec<Array2<S>> = Vec::with_capacity(self.layers.len() + 1);
        let mut aux = Vec::with_capacity(self.layers.len());
        nodes.push(inputs.to_owned());
        for (i, layer) in self.layers.iter().enumerate() {
            let x = &nodes[i];
            let out_len = numel(&layer.out_shape);
            let (y, a) = match layer.spec {
                LayerSpec::Dense { .. } => {
                    let w = layer.param2(ParamName::Weight);
                    let b = layer.param1(ParamName::Bias);
                    (x.dot(&w.t()) + b, Aux::None)
                }
                LayerSpec::Conv2d { .. } => {
                    let g = layer.conv_geom();
                    let w = layer.param2(ParamName::Weight);
                    let b = layer.param1(ParamName::Bias);
                    let mut y = Array2::<S>::zeros((n, out_len));
                    let mut cols = Array2::<S>::zeros((g.patches(), g.patch_len()));
                    for (xr, mut yr) in x.axis_iter(Axis(0)).zip(y.axis_iter_mut(Axis(0))) {
                        g.im2col(xr.as_slice().expect("contiguous row"), &mut cols);
                        let out = cols.dot(&w.t());
                        let p = g.patches();
                        for (f, &bf) in b.iter().enumerate() {
                            for q in 0..p {
                                yr[f * p + q] = out[(q, f)] + bf;
                            }
                        }
                    }
                    (y, Aux::None)
                }
                LayerSpec::Maxpool { .. } => {
                    let g = layer.pool_geom();
                    let mut y = Array2::<S>::zeros((n, out_len));
                    let mut arg = vec![0usize; n * out_len];
                    for (r, (xr, mut yr)) in
                        x.axis_iter(Axis(0)).zip(y.axis_iter_mut(Axis(0))).enumerate()
                    {
                        g.forward(
                            xr.as_slice().expect("contiguous row"),
                            yr.as_slice_mut().expect("contiguous row"),
                            &mut arg[r * out_len..(r + 1) * out_len],
                        );
                    }
                    (y, Aux::PoolArg(arg))
                }
                LayerSpec::Batchnorm => {
                    let lay = BnLayout::from_shape(&layer.in_shape);
                    let gamma = layer.param1(ParamName::Gamma);
                    let beta = layer.param1(ParamName::Beta);
                    let (mean, var) = match mode {
                        Mode::Train => lay.moments(x.view()),
                        Mode::Infer => {
                            let r = layer.running.as_ref().expect("batchnorm running stats");
                            (r.mean.clone(), r.var.clone())
                        }
                    };
                    let inv_std = var.mapv(|v| S::one() / (v + S::of(BN_EPS)).sqrt());
                    let mut xhat = x.clone();
                    let mut y = x.clone();
                    for (mut hr, mut yr) in xhat.axis_iter_mut(Axis(0)).zip(y.axis_iter_mut(Axis(0))) {
                        for (j, (h, yv)) in hr.iter_mut().zip(yr.iter_mut()).enumerate() {
                            let c = j / lay.spatial;
                            *h = (*h - mean[c]) * inv_std[c];
                            *yv = gamma[c] * *h + beta[c];
                        }
                    }
                    let a = match mode {
                        Mode::Train => Aux::Norm {
                            xhat,
                            inv_std,
                            batch_mean: mean,
                            batch_var: var,
                        },
                        Mode::Infer => Aux::Norm {
                            xhat,
                            inv_std,
                            batch_mean: Array1::zeros(0),
                            batch_var: Array1::zeros(0),
                        },
                    };
                    (y, a)
                }
                LayerSpec::Activation { activation } => (x.mapv(|v| activation.apply(v)), Aux::None),
                LayerSpec::SkipAdd { from } => (x + &nodes[from], Aux::None),
            };
            if y.iter().any(|v| !v.is_finite()) {
                return Err(Error::NumericFailure {
                    layer: i + 1,
                    kind: layer.spec.kind_name().to_string(),
                });
            }
            nodes.push(y);
            aux.push(a);
        }
        let logits = nodes.last().expect("at least one layer").clone();
        Ok(Forward {
            logits,
            cache: ForwardCache { mode, nodes, aux },
        })
    }

    fn check_cache(&self, cache: &ForwardCache<S>) -> Result<()> {
        if cache.nodes.len() != self.layers.len() + 1 || cache.aux.len() != self.layers.len() {
            return Err(Error::CacheMismatch(format!(
                "cache holds {} nodes, model has {} layers",
                cache.nodes.len(),
                self.layers.len()
            )));
        }
        let n = cache.nodes[0].nrows();
        for (k, node) in cache.nodes.iter().enumerate() {
            let want = if k == 0 {
                self.spec.input_len()
            } else {
                numel(&self.layers[k - 1].out_shape)
            };
            if node.ncols() != want || node.nrows() != n {
                return Err(Error::CacheMismatch(format!(
                    "node {k} is {}x{}, expected {n}x{want}",
                    node.nrows(),
                    node.ncols()
                )));
            }
        }
        for (k, (layer, a)) in self.layers.iter().zip(&cache.aux).enumerate() {
            let ok = match (&layer.spec, a) {
                (LayerSpec::Maxpool { .. }, Aux::PoolArg(_)) => true,
                (LayerSpec::Batchnorm, Aux::Norm { .. }) => true,
                (LayerSpec::Maxpool { .. } | LayerSpec::Batchnorm, _) => false,
                (_, Aux::None) => true,
                _ => false,
            };
            if !ok {
                return Err(Error::CacheMismatch(format!("layer {} record", k + 1)));
            }
        }
        Ok(())
    }

    /// Reverse-mode gradients of `sum(d_logits * logits)` w.r.t. every parameter.
    pub fn backward(&self, cache: &ForwardCache<S>, d_logits: ArrayView2<S>) -> Result<Gradients<S>> {
        self.check_cache(cache)?;
        let last = cache.nodes.last().expect("non-empty");
        if d_logits.dim() != last.dim() {
            return Err(Error::Shape(format!(
                "d_logits is {:?}, logits are {:?}",
                d_logits.dim(),
                last.dim()
            )));
        }
        let n_layers = self.layers.len();
        let mut dnode: Vec<Option<Array2<S>>> = vec![None; n_layers + 1];
        dnode[n_layers] = Some(d_logits.to_owned());
        let mut layer_grads: Vec<Vec<ArrayD<S>>> = vec![Vec::new(); n_layers];

        fn accumulate<S: Scalar>(slot: &mut Option<Array2<S>>, g: Array2<S>) {
            match slot {
                Some(acc) => *acc += &g,
                None => *slot = Some(g),
            }
        }

        for k in (1..=n_layers).rev() {
            let layer = &self.layers[k - 1];
            let x = &cache.nodes[k - 1];
            let dy = match dnode[k].take() {
                Some(d) => d,
                None => Array2::zeros(cache.nodes[k].dim()),
            };
            let dx = match layer.spec {
                LayerSpec::Dense { .. } => {
                    let w = layer.param2(ParamName::Weight);
                    let dw = dy.t().dot(x);
                    let db = dy.sum_axis(Axis(0));
                    layer_grads[k - 1] = vec![dw.into_dyn(), db.into_dyn()];
                    dy.dot(&w)
                }
                LayerSpec::Conv2d { .. } => {
                    let g = layer.conv_geom();
                    let w = layer.param2(ParamName::Weight);
                    let (f, p) = (w.nrows(), g.patches());
                    let mut dw = Array2::<S>::zeros(w.dim());
                    let mut db = Array1::<S>::zeros(f);
                    let mut dx = Array2::<S>::zeros(x.dim());
                    let mut cols = Array2::<S>::zeros((p, g.patch_len()));
                    for ((xr, dyr), mut dxr) in x
                        .axis_iter(Axis(0))
                        .zip(dy.axis_iter(Axis(0)))
                        .zip(dx.axis_iter_mut(Axis(0)))
                    {
                        g.im2col(xr.as_slice().expect("contiguous row"), &mut cols);
                        let dout = dyr
                            .to_owned()
                            .into_shape_with_order((f, p))
                            .expect("standard layout");
                        dw += &dout.dot(&cols);
                        db += &dout.sum_axis(Axis(1));
                        let dcols = dout.t().dot(&w);
                        g.col2im(dcols.view(), dxr.as_slice_mut().expect("contiguous row"));
                    }
                    let wshape = layer.param(ParamName::Weight).expect("weights").shape().to_vec();
                    let dw = dw
                        .into_shape_with_order(IxDyn(&wshape))
                        .expect("same element count");
                    layer_grads[k - 1] = vec![dw, db.into_dyn()];
                    dx
                }
                LayerSpec::Maxpool { .. } => {
                    let Aux::PoolArg(arg) = &cache.aux[k - 1] else {
                        unreachable!("checked by check_cache")
                    };
                    let out_len = dy.ncols();
                    let mut dx = Array2::<S>::zeros(x.dim());
                    for (r, (dyr, mut dxr)) in dy.axis_iter(Axis(0)).zip(dx.axis_iter_mut(Axis(0))).enumerate() {
                        for (o, &g) in dyr.iter().enumerate() {
                            dxr[arg[r * out_len + o]] += g;
                        }
                    }
                    dx
                }
                LayerSpec::Batchnorm => {
                    let Aux::Norm { xhat, inv_std, .. } = &cache.aux[k - 1] else {
                        unreachable!("checked by check_cache")
                    };
                    let lay = BnLayout::from_shape(&layer.in_shape);
                    let gamma = layer.param1(ParamName::Gamma);
                    let (dbeta, dgamma) = lay.channel_sums(dy.view(), xhat.view());
                    let mut dx = dy.clone();
                    match cache.mode {
                        Mode::Infer => {
                            for mut row in dx.axis_iter_mut(Axis(0)) {
                                for (j, v) in row.iter_mut().enumerate() {
                                    let c = j / lay.spatial;
                                    *v *= gamma[c] * inv_std[c];
                                }
                            }
                        }
                        Mode::Train => {
                            let m = S::of((x.nrows() * lay.spatial) as f64);
                            for (mut row, hrow) in dx.axis_iter_mut(Axis(0)).zip(xhat.axis_iter(Axis(0))) {
                                for (j, (v, &h)) in row.iter_mut().zip(hrow.iter()).enumerate() {
                                    let c = j / lay.spatial;
                                    *v = gamma[c] * inv_std[c] / m
                                        * (m * *v - dbeta[c] - h * dgamma[c]);
                                }
                            }
                        }
                    }
                    layer_grads[k - 1] = vec![dgamma.into_dyn(), dbeta.into_dyn()];
                    dx
                }
                LayerSpec::Activation { activation } => {
                    let mut dx = dy;
                    dx.zip_mut_with(x, |d, &xv| *d *= activation.derivative(xv));
                    dx
                }
                LayerSpec::SkipAdd { from } => {
                    accumulate(&mut dnode[from], dy.clone());
                    dy
                }
            };
            accumulate(&mut dnode[k - 1], dx);
        }

        let mut ids = Vec::new();
        let mut values = Vec::new();
        for (layer, grads) in self.layers.iter().zip(layer_grads) {
            for (p, g) in layer.params.iter().zip(grads) {
                debug_assert_eq!(p.value.shape(), g.shape());
                ids.push(ParamId::new(layer.ordinal.expect("parametric"), p.name));
                values.push(g);
            }
        }
        Ok(Gradients { ids, values })
    }

    /// Folds the batch statistics of a train-mode pass into the running
    /// statistics (`running = 0.9 * running + 0.1 * batch`, unbiased variance).
    pub fn commit_batch_stats(&mut self, cache: &ForwardCache<S>) -> Result<()> {
        if cache.mode != Mode::Train {
            return Ok(());
        }
        self.check_cache(cache)?;
        let n = cache.nodes[0].nrows();
        let mom = S::of(BN_MOMENTUM);
        for (layer, a) in self.layers.iter_mut().zip(&cache.aux) {
            if let (Some(r), Aux::Norm {
                batch_mean,
                batch_var,
                ..
            }) = (layer.running.as_mut(), a)
            {
                let m = n * BnLayout::from_shape(&layer.in_shape).spatial;
                let corr = if m > 1 {
                    S::of(m as f64 / (m - 1) as f64)
                } else {
                    S::one()
                };
                r.mean.zip_mut_with(batch_mean, |rm, &bm| *rm = mom * *rm + (S::one() - mom) * bm);
                r.var.zip_mut_with(batch_var, |rv, &bv| *rv = mom * *rv + (S::one() - mom) * bv * corr);
            }
        }
        Ok(())
    }

    /// The sign-constraint mask implied by the attached policy (empty when
    /// the model is unconstrained).
    pub fn constraint_mask(&self) -> Vec<ParamId> {
        match &self.policy {
            Some(p) => build_mask(self, p).entries,
            None => Vec::new(),
        }
    }
}

fn weight_init(fan_in: usize, constrained: bool) -> (f64, bool) {
    if constrained {
        (1.0 / fan_in as f64, true)
    } else {
        ((2.0 / fan_in as f64).sqrt(), false)
    }
}

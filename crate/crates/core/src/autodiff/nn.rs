//! Parameter storage and the small set of layers the models are built from.

use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng as _;

use super::{Graph, Tensor, Var};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::se3::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub usize);

static NEXT_STORE: AtomicU64 = AtomicU64::new(0);

fn next_store_uid() -> u64 {
    NEXT_STORE.fetch_add(1, Ordering::Relaxed)
}

/// Ordered collection of named tensors. Layers hold [`ParamId`]s into it.
///
/// Each store (and each clone) carries a process-unique id so graphs can
/// bind parameters from several stores at once.
#[derive(Debug)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
    frozen: bool,
    uid: u64,
}

impl Default for ParamStore {
    fn default() -> Self {
        ParamStore {
            names: Vec::new(),
            tensors: Vec::new(),
            frozen: false,
            uid: next_store_uid(),
        }
    }
}

impl Clone for ParamStore {
    fn clone(&self) -> Self {
        ParamStore {
            names: self.names.clone(),
            tensors: self.tensors.clone(),
            frozen: self.frozen,
            uid: next_store_uid(),
        }
    }
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore::default()
    }

    pub(crate) fn uid(&self) -> u64 {
        self.uid
    }

    pub fn add(&mut self, name: impl Into<String>, t: Tensor) -> ParamId {
        self.names.push(name.into());
        self.tensors.push(t);
        ParamId(self.tensors.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn num_values(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// A frozen store binds into graphs as constants.
    pub fn set_frozen(&mut self, frozen: bool) {
        self.frozen = frozen;
    }

    pub fn trainable(&self) -> bool {
        !self.frozen
    }

    /// Copies values for every name in `src` that exists here with the same shape.
    pub fn load_from<'a>(&mut self, src: impl IntoIterator<Item = (&'a str, &'a Tensor)>) -> Result<usize> {
        let mut n = 0;
        for (name, t) in src {
            if let Some(id) = self.find(name) {
                if self.tensors[id.0].shape != t.shape {
                    return Err(Error::ShapeError(format!(
                        "parameter {name}: expected {:?}, found {:?}",
                        self.tensors[id.0].shape, t.shape
                    )));
                }
                self.tensors[id.0].data.clone_from(&t.data);
                n += 1;
            }
        }
        Ok(n)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Gelu,
}

impl Activation {
    pub fn apply(self, g: &mut Graph, x: Var) -> Var {
        match self {
            Activation::Relu => g.relu(x),
            Activation::Gelu => g.gelu(x),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Gelu => "gelu",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "relu" => Some(Activation::Relu),
            "gelu" => Some(Activation::Gelu),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputActivation {
    Identity,
    Relu,
    Sigmoid,
}

/// Glorot-uniform weights, zero bias.
#[derive(Debug, Clone, Copy)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl Linear {
    pub fn new(store: &mut ParamStore, name: &str, fan_in: usize, fan_out: usize, rng: &mut Rng) -> Self {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let data = (0..fan_in * fan_out).map(|_| rng.random_range(-limit..limit)).collect();
        let w = store.add(format!("{name}.w"), Tensor { shape: vec![fan_in, fan_out], data });
        let b = store.add(format!("{name}.b"), Tensor::zeros(&[1, fan_out]));
        Linear { w, b, fan_in, fan_out }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let w = g.param(store, self.w);
        let b = g.param(store, self.b);
        let y = g.matmul(x, w)?;
        g.add_row(y, b)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpSpec {
    /// Input width followed by each layer's output width.
    pub widths: Vec<usize>,
    pub activation: Activation,
    pub output: OutputActivation,
}

#[derive(Debug, Clone)]
pub struct Mlp {
    pub layers: Vec<Linear>,
    pub activation: Activation,
    pub output: OutputActivation,
}

impl Mlp {
    pub fn new(store: &mut ParamStore, name: &str, spec: &MlpSpec, rng: &mut Rng) -> Result<Self> {
        if spec.widths.len() < 2 || spec.widths.contains(&0) {
            return Err(Error::invalid(format!("mlp widths {:?}", spec.widths)));
        }
        let layers = spec
            .widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| Linear::new(store, &format!("{name}.{i}"), w[0], w[1], rng))
            .collect();
        Ok(Mlp {
            layers,
            activation: spec.activation,
            output: spec.output,
        })
    }

    pub fn in_width(&self) -> usize {
        self.layers[0].fan_in
    }

    pub fn out_width(&self) -> usize {
        self.layers[self.layers.len() - 1].fan_out
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, mut x: Var) -> Result<Var> {
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            x = layer.forward(g, store, x)?;
            x = if i < last {
                self.activation.apply(g, x)
            } else {
                match self.output {
                    OutputActivation::Identity => x,
                    OutputActivation::Relu => g.relu(x),
                    OutputActivation::Sigmoid => g.sigmoid(x),
                }
            };
        }
        Ok(x)
    }
}

/// PointNet-style encoder: a shared per-point MLP, max-pool over each
/// cloud, then a linear projection to the embedding.
#[derive(Debug, Clone)]
pub struct PointEncoder {
    pub point_mlp: Mlp,
    pub post: Linear,
    pub embedding_dim: usize,
}

impl PointEncoder {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        point_widths: &[usize],
        embedding_dim: usize,
        activation: Activation,
        rng: &mut Rng,
    ) -> Result<Self> {
        if embedding_dim < 16 {
            return Err(Error::invalid(format!("embedding_dim must be at least 16, got {embedding_dim}")));
        }
        let mut widths = vec![3];
        widths.extend_from_slice(point_widths);
        let spec = MlpSpec {
            widths,
            activation,
            output: OutputActivation::Relu,
        };
        let point_mlp = Mlp::new(store, &format!("{name}.point"), &spec, rng)?;
        let post = Linear::new(store, &format!("{name}.post"), point_mlp.out_width(), embedding_dim, rng);
        Ok(PointEncoder {
            point_mlp,
            post,
            embedding_dim,
        })
    }

    /// Embeds clouds stacked row-wise in `points` (`sum(N) x 3`), one output
    /// row per `[start, end)` segment.
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, points: Var, segments: &[(usize, usize)]) -> Result<Var> {
        if g.dims(points).1 != 3 {
            return Err(Error::ShapeError(format!("points must be Nx3, got {:?}", g.dims(points))));
        }
        let h = self.point_mlp.forward(g, store, points)?;
        let pooled = g.segment_max(h, segments)?;
        self.post.forward(g, store, pooled)
    }

    /// Forward pass without gradient tracking.
    pub fn embed(&self, store: &ParamStore, clouds: &[&[Vec3]]) -> Result<Tensor> {
        let mut g = Graph::inference();
        let (pts, segs) = stack_clouds(clouds)?;
        let p = g.constant(pts);
        let e = self.forward(&mut g, store, p, &segs)?;
        Ok(g.value(e).clone())
    }
}

/// Stacks point clouds into one `sum(N) x 3` tensor plus their row ranges.
pub fn stack_clouds(clouds: &[&[Vec3]]) -> Result<(Tensor, Vec<(usize, usize)>)> {
    let mut data = Vec::new();
    let mut segs = Vec::with_capacity(clouds.len());
    for c in clouds {
        if c.is_empty() {
            return Err(Error::invalid("cannot encode an empty cloud"));
        }
        let start = data.len() / 3;
        for p in c.iter() {
            data.extend_from_slice(&[p.x, p.y, p.z]);
        }
        segs.push((start, data.len() / 3));
    }
    let rows = data.len() / 3;
    Ok((Tensor::matrix(rows, 3, data)?, segs))
}

/// Sinusoidal encoding of a scalar: pairs `(sin(t w_i), cos(t w_i))` with
/// `w_i = 10000^(-2i/dims)`.
pub fn positional_encoding(t: f64, dims: usize) -> Result<Vec<f64>> {
    if dims == 0 || !dims.is_multiple_of(2) {
        return Err(Error::invalid(format!("encoding width must be even and positive, got {dims}")));
    }
    let mut out = Vec::with_capacity(dims);
    for i in 0..dims / 2 {
        let w = 10000f64.powf(-2.0 * i as f64 / dims as f64);
        out.push((t * w).sin());
        out.push((t * w).cos());
    }
    Ok(out)
}

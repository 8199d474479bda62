//! DDPM grasp generator over rotation-representation x translation
//! coordinates, conditioned on a point-cloud embedding.
//!
//! A grasp is encoded relative to the centroid of the observed cloud as
//! `[kappa * (t - centroid), repr(R)]`. The translation and rotation blocks
//! are noised with separate beta schedules.

use std::path::Path;

use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::autodiff::{
    adam_step, positional_encoding, Activation, AdamConfig, AdamState, Checkpoint, Graph, Linear, Mlp, MlpSpec,
    OutputActivation, ParamStore, PointEncoder, Tensor, Var,
};
use crate::error::{Error, Result};
use crate::oracle::LabeledGraspSet;
use crate::rng::{derive_seed, rng, Rng};
use crate::se3::{decode_repr, rotation_to_repr, GraspPose, ReprKind, Vec3};
use crate::shape::PointCloud;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channel {
    Translation,
    Rotation,
}

/// Variance of the noise added by a reverse step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReverseVariance {
    /// `beta_t (1 - abar_{t-1}) / (1 - abar_t)`, the forward posterior variance.
    Posterior,
    /// `beta_t`.
    Beta,
}

impl ReverseVariance {
    pub fn as_str(self) -> &'static str {
        match self {
            ReverseVariance::Posterior => "posterior",
            ReverseVariance::Beta => "beta",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "posterior" => Some(ReverseVariance::Posterior),
            "beta" => Some(ReverseVariance::Beta),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    pub betas_trans: Vec<f64>,
    pub betas_rot: Vec<f64>,
    pub variance: ReverseVariance,
    alpha_bars_trans: Vec<f64>,
    alpha_bars_rot: Vec<f64>,
}

fn cumulative_alpha(betas: &[f64]) -> Vec<f64> {
    betas
        .iter()
        .scan(1.0, |acc, b| {
            *acc *= 1.0 - b;
            Some(*acc)
        })
        .collect()
}

impl NoiseSchedule {
    pub fn new(betas_trans: Vec<f64>, betas_rot: Vec<f64>) -> Result<Self> {
        if betas_trans.is_empty() || betas_trans.len() != betas_rot.len() {
            return Err(Error::invalid("both channels need the same, non-zero number of steps"));
        }
        if betas_trans.iter().chain(&betas_rot).any(|b| !(*b > 0.0 && *b < 1.0)) {
            return Err(Error::invalid("every beta must lie in (0, 1)"));
        }
        Ok(NoiseSchedule {
            variance: ReverseVariance::Posterior,
            alpha_bars_trans: cumulative_alpha(&betas_trans),
            alpha_bars_rot: cumulative_alpha(&betas_rot),
            betas_trans,
            betas_rot,
        })
    }

    /// Betas spaced linearly from `lo` to `hi` over `steps` steps, per channel.
    pub fn linear(steps: usize, trans: (f64, f64), rot: (f64, f64)) -> Result<Self> {
        let ramp = |(lo, hi): (f64, f64)| -> Vec<f64> {
            if steps == 1 {
                return vec![lo];
            }
            (0..steps)
                .map(|i| lo + (hi - lo) * i as f64 / (steps - 1) as f64)
                .collect()
        };
        if steps == 0 {
            return Err(Error::invalid("schedule needs at least one step"));
        }
        NoiseSchedule::new(ramp(trans), ramp(rot))
    }

    pub fn steps(&self) -> usize {
        self.betas_trans.len()
    }

    pub fn beta(&self, ch: Channel, t: usize) -> f64 {
        match ch {
            Channel::Translation => self.betas_trans[t],
            Channel::Rotation => self.betas_rot[t],
        }
    }

    pub fn alpha_bar(&self, ch: Channel, t: usize) -> f64 {
        match ch {
            Channel::Translation => self.alpha_bars_trans[t],
            Channel::Rotation => self.alpha_bars_rot[t],
        }
    }

    pub fn with_variance(mut self, variance: ReverseVariance) -> Self {
        self.variance = variance;
        self
    }

    /// Variance of the noise added when stepping from `t` to `t - 1`; zero at `t = 0`.
    pub fn reverse_variance(&self, ch: Channel, t: usize) -> f64 {
        if t == 0 {
            return 0.0;
        }
        let beta = self.beta(ch, t);
        match self.variance {
            ReverseVariance::Beta => beta,
            ReverseVariance::Posterior => beta * (1.0 - self.alpha_bar(ch, t - 1)) / (1.0 - self.alpha_bar(ch, t)),
        }
    }
}

impl Default for NoiseSchedule {
    fn default() -> Self {
        NoiseSchedule::linear(10, (1e-4, 0.2), (1e-4, 0.2)).expect("default schedule is valid")
    }
}

fn channel_of(i: usize) -> Channel {
    if i < 3 {
        Channel::Translation
    } else {
        Channel::Rotation
    }
}

/// How the per-object extent of positive translations is reduced over axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExtentReduction {
    MeanAxes,
    MaxAxis,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KappaMode {
    Computed(ExtentReduction),
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizationStats {
    pub kappa: f64,
    pub objects_used: usize,
    pub objects_skipped: usize,
}

/// `kappa = 1 / mean_i(extent_i)` over objects with at least one positive,
/// where `extent_i` reduces the per-axis `max - min` of positive translations.
pub fn kappa_from_positives(positives: &[Vec<GraspPose>], reduction: ExtentReduction) -> Result<NormalizationStats> {
    let mut extents = Vec::new();
    let mut skipped = 0;
    for set in positives {
        if set.is_empty() {
            skipped += 1;
            continue;
        }
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        for g in set {
            lo = lo.inf(&g.translation);
            hi = hi.sup(&g.translation);
        }
        let span = hi - lo;
        extents.push(match reduction {
            ExtentReduction::MeanAxes => span.sum() / 3.0,
            ExtentReduction::MaxAxis => span.max(),
        });
    }
    if extents.is_empty() {
        return Err(Error::invalid("no object has a positive grasp"));
    }
    let mean = extents.iter().sum::<f64>() / extents.len() as f64;
    if !(mean > 0.0) || !mean.is_finite() {
        return Err(Error::DegenerateExtent);
    }
    Ok(NormalizationStats {
        kappa: 1.0 / mean,
        objects_used: extents.len(),
        objects_skipped: skipped,
    })
}

pub fn compute_kappa(dataset: &[LabeledGraspSet], reduction: ExtentReduction) -> Result<NormalizationStats> {
    let positives: Vec<Vec<GraspPose>> = dataset.iter().map(LabeledGraspSet::positives).collect();
    kappa_from_positives(&positives, reduction)
}

/// Maps grasps to and from the network's coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraspCodec {
    pub kappa: f64,
    pub repr: ReprKind,
}

impl GraspCodec {
    pub fn new(kappa: f64, repr: ReprKind) -> Result<Self> {
        if !(kappa > 0.0 && kappa.is_finite()) {
            return Err(Error::invalid(format!("kappa must be positive and finite, got {kappa}")));
        }
        Ok(GraspCodec { kappa, repr })
    }

    pub fn dim(&self) -> usize {
        3 + self.repr.width()
    }

    pub fn encode(&self, g: &GraspPose, centroid: &Vec3) -> Vec<f64> {
        let t = (g.translation - centroid) * self.kappa;
        let mut v = vec![t.x, t.y, t.z];
        v.extend(rotation_to_repr(&g.rotation, self.repr).values);
        v
    }

    pub fn decode(&self, v: &[f64], centroid: &Vec3) -> Result<GraspPose> {
        if v.len() != self.dim() {
            return Err(Error::ShapeError(format!("grasp vector has {} values, expected {}", v.len(), self.dim())));
        }
        let rotation = decode_repr(self.repr, &v[3..])?;
        let t = Vec3::new(v[0], v[1], v[2]) / self.kappa + centroid;
        Ok(GraspPose::new(rotation, t))
    }
}

/// Per channel: `x_t = sqrt(abar) x0 + sqrt(1 - abar) eps`.
pub fn noise_with(x0: &[f64], t: usize, schedule: &NoiseSchedule, rng: &mut Rng) -> Result<(Vec<f64>, Vec<f64>)> {
    if t >= schedule.steps() {
        return Err(Error::invalid(format!("step {t} outside 0..{}", schedule.steps())));
    }
    let eps: Vec<f64> = x0.iter().map(|_| rng.sample(StandardNormal)).collect();
    let noisy = x0
        .iter()
        .zip(&eps)
        .enumerate()
        .map(|(i, (x, e))| {
            let ab = schedule.alpha_bar(channel_of(i), t);
            ab.sqrt() * x + (1.0 - ab).sqrt() * e
        })
        .collect();
    Ok((noisy, eps))
}

pub fn forward_noise(x0: &[f64], t: usize, schedule: &NoiseSchedule, seed: u64) -> Result<(Vec<f64>, Vec<f64>)> {
    noise_with(x0, t, schedule, &mut rng(seed))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorArch {
    pub embedding_dim: usize,
    pub point_widths: Vec<usize>,
    pub pe_dims: usize,
    /// Width of the projection applied to the noisy grasp before the head.
    pub grasp_feat: usize,
    pub head_width: usize,
    pub head_depth: usize,
    pub activation: Activation,
}

impl Default for GeneratorArch {
    fn default() -> Self {
        GeneratorArch {
            embedding_dim: 128,
            point_widths: vec![64, 128],
            pe_dims: 32,
            grasp_feat: 64,
            head_width: 256,
            head_depth: 4,
            activation: Activation::Relu,
        }
    }
}

impl GeneratorArch {
    fn to_values(&self) -> Vec<f64> {
        let mut v = vec![
            self.embedding_dim as f64,
            self.pe_dims as f64,
            self.grasp_feat as f64,
            self.head_width as f64,
            self.head_depth as f64,
            match self.activation {
                Activation::Relu => 0.0,
                Activation::Gelu => 1.0,
            },
        ];
        v.extend(self.point_widths.iter().map(|&w| w as f64));
        v
    }

    fn from_values(v: &[f64]) -> Result<Self> {
        if v.len() < 7 || v.iter().any(|x| x.fract() != 0.0 || *x < 0.0) {
            return Err(Error::format("malformed meta.arch"));
        }
        Ok(GeneratorArch {
            embedding_dim: v[0] as usize,
            pe_dims: v[1] as usize,
            grasp_feat: v[2] as usize,
            head_width: v[3] as usize,
            head_depth: v[4] as usize,
            activation: if v[5] == 0.0 { Activation::Relu } else { Activation::Gelu },
            point_widths: v[6..].iter().map(|&w| w as usize).collect(),
        })
    }
}

/// Generator network plus everything needed to use it: schedule, kappa and
/// rotation representation.
#[derive(Debug, Clone)]
pub struct Generator {
    pub arch: GeneratorArch,
    pub codec: GraspCodec,
    pub schedule: NoiseSchedule,
    pub config_hash: u64,
    pub store: ParamStore,
    encoder: PointEncoder,
    grasp_in: Linear,
    head: Mlp,
    pe_table: Vec<Vec<f64>>,
}

impl Generator {
    pub fn new(arch: GeneratorArch, codec: GraspCodec, schedule: NoiseSchedule, seed: u64) -> Result<Self> {
        if arch.head_depth == 0 || arch.head_width == 0 || arch.grasp_feat == 0 {
            return Err(Error::invalid("noise head needs at least one hidden layer"));
        }
        let mut r = rng(seed);
        let mut store = ParamStore::new();
        let encoder = PointEncoder::new(&mut store, "encoder", &arch.point_widths, arch.embedding_dim, arch.activation, &mut r)?;
        let grasp_in = Linear::new(&mut store, "grasp_in", codec.dim(), arch.grasp_feat, &mut r);
        let mut widths = vec![arch.embedding_dim + arch.pe_dims + arch.grasp_feat];
        widths.extend(std::iter::repeat_n(arch.head_width, arch.head_depth));
        widths.push(codec.dim());
        let head = Mlp::new(
            &mut store,
            "head",
            &MlpSpec {
                widths,
                activation: arch.activation,
                output: OutputActivation::Identity,
            },
            &mut r,
        )?;
        let pe_table = (0..schedule.steps())
            .map(|t| positional_encoding(t as f64, arch.pe_dims))
            .collect::<Result<_>>()?;
        Ok(Generator {
            arch,
            codec,
            schedule,
            config_hash: 0,
            store,
            encoder,
            grasp_in,
            head,
            pe_table,
        })
    }

    pub fn dim(&self) -> usize {
        self.codec.dim()
    }

    pub fn kappa(&self) -> f64 {
        self.codec.kappa
    }

    pub fn encoder(&self) -> &PointEncoder {
        &self.encoder
    }

    /// Embedding of one mean-centered cloud.
    pub fn embed(&self, cloud: &PointCloud) -> Result<Vec<f64>> {
        Ok(self.encoder.embed(&self.store, &[&cloud.points])?.data)
    }

    /// Noise prediction for rows `x_t` at steps `t_idx`, given one embedding row per grasp.
    fn predict_noise(&self, g: &mut Graph, emb_rows: Var, x_t: Var, t_idx: &[usize]) -> Result<Var> {
        let mut pe = Vec::with_capacity(t_idx.len() * self.arch.pe_dims);
        for &t in t_idx {
            pe.extend_from_slice(&self.pe_table[t]);
        }
        let pe = g.constant(Tensor::matrix(t_idx.len(), self.arch.pe_dims, pe)?);
        let h = self.grasp_in.forward(g, &self.store, x_t)?;
        let h = g.relu(h);
        let x = g.concat(&[emb_rows, pe, h])?;
        self.head.forward(g, &self.store, x)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut c = Checkpoint::new();
        for (name, t) in self.store.iter() {
            c.push(name, t.clone());
        }
        c.push("meta.kappa", Tensor::scalar(self.codec.kappa));
        c.push(
            "meta.config_hash",
            Tensor::row(vec![(self.config_hash >> 32) as f64, (self.config_hash & 0xffff_ffff) as f64]),
        );
        c.push("meta.repr", Tensor::scalar(f64::from(self.codec.repr.code())));
        c.push("meta.betas_trans", Tensor::row(self.schedule.betas_trans.clone()));
        c.push("meta.betas_rot", Tensor::row(self.schedule.betas_rot.clone()));
        c.push(
            "meta.variance",
            Tensor::scalar(match self.schedule.variance {
                ReverseVariance::Posterior => 0.0,
                ReverseVariance::Beta => 1.0,
            }),
        );
        c.push("meta.arch", Tensor::row(self.arch.to_values()));
        c
    }

    pub fn from_checkpoint(c: &Checkpoint) -> Result<Self> {
        let repr_code = c.scalar("meta.repr")?;
        let repr = ReprKind::from_code(repr_code as u8)
            .filter(|_| repr_code.fract() == 0.0)
            .ok_or_else(|| Error::format(format!("unknown repr code {repr_code}")))?;
        let codec = GraspCodec::new(c.scalar("meta.kappa")?, repr)?;
        let variance = match c.scalar("meta.variance")? {
            0.0 => ReverseVariance::Posterior,
            1.0 => ReverseVariance::Beta,
            v => return Err(Error::format(format!("unknown variance code {v}"))),
        };
        let schedule = NoiseSchedule::new(
            c.require("meta.betas_trans")?.data.clone(),
            c.require("meta.betas_rot")?.data.clone(),
        )?
        .with_variance(variance);
        let arch = GeneratorArch::from_values(&c.require("meta.arch")?.data)?;
        let mut model = Generator::new(arch, codec, schedule, 0)?;
        let loaded = model.store.load_from(c.iter().filter(|(n, _)| !n.starts_with("meta.")))?;
        if loaded != model.store.len() {
            return Err(Error::format(format!(
                "checkpoint holds {loaded} of {} generator parameters",
                model.store.len()
            )));
        }
        model.config_hash = read_hash(c)?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_checkpoint().save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Generator::from_checkpoint(&Checkpoint::load(path)?)
    }
}

pub(crate) fn read_hash(c: &Checkpoint) -> Result<u64> {
    let h = &c.require("meta.config_hash")?.data;
    if h.len() != 2 {
        return Err(Error::format("meta.config_hash must hold two halves"));
    }
    Ok(((h[0] as u64) << 32) | (h[1] as u64))
}

/// Training view of one object: its observation clouds and positive grasps
/// in the mesh frame.
#[derive(Debug, Clone, Copy)]
pub struct TrainObject<'a> {
    pub clouds: &'a [PointCloud],
    pub positives: &'a [GraspPose],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenTrainConfig {
    pub steps: usize,
    pub lr: f64,
    pub objects_per_batch: usize,
    pub grasps_per_object: usize,
    pub seed: u64,
}

impl Default for GenTrainConfig {
    fn default() -> Self {
        GenTrainConfig {
            steps: 20_000,
            lr: 1e-3,
            objects_per_batch: 4,
            grasps_per_object: 16,
            seed: 0,
        }
    }
}

struct Batch {
    points: Tensor,
    segments: Vec<(usize, usize)>,
    owner: Vec<usize>,
    x_t: Tensor,
    t_idx: Vec<usize>,
    eps: Tensor,
}

fn make_batch(model: &Generator, objects: &[TrainObject], usable: &[usize], cfg: &GenTrainConfig, r: &mut Rng) -> Result<Batch> {
    let d = model.dim();
    let mut points = Vec::new();
    let mut segments = Vec::with_capacity(cfg.objects_per_batch);
    let b = cfg.objects_per_batch * cfg.grasps_per_object;
    let mut owner = Vec::with_capacity(b);
    let mut x_t = Vec::with_capacity(b * d);
    let mut eps = Vec::with_capacity(b * d);
    let mut t_idx = Vec::with_capacity(b);
    for slot in 0..cfg.objects_per_batch {
        let obj = &objects[usable[r.random_range(0..usable.len())]];
        let cloud = &obj.clouds[r.random_range(0..obj.clouds.len())];
        let start = points.len() / 3;
        for p in &cloud.points {
            points.extend_from_slice(&[p.x, p.y, p.z]);
        }
        segments.push((start, points.len() / 3));
        for _ in 0..cfg.grasps_per_object {
            let g = &obj.positives[r.random_range(0..obj.positives.len())];
            let t = r.random_range(0..model.schedule.steps());
            let x0 = model.codec.encode(g, &cloud.centroid);
            let (xt, e) = noise_with(&x0, t, &model.schedule, r)?;
            x_t.extend(xt);
            eps.extend(e);
            t_idx.push(t);
            owner.push(slot);
        }
    }
    let rows = points.len() / 3;
    Ok(Batch {
        points: Tensor::matrix(rows, 3, points)?,
        segments,
        owner,
        x_t: Tensor::matrix(b, d, x_t)?,
        t_idx,
        eps: Tensor::matrix(b, d, eps)?,
    })
}

fn batch_loss(model: &Generator, g: &mut Graph, batch: &Batch) -> Result<Var> {
    let p = g.constant(batch.points.clone());
    let emb = model.encoder.forward(g, &model.store, p, &batch.segments)?;
    let rows = g.gather_rows(emb, &batch.owner)?;
    let x = g.constant(batch.x_t.clone());
    let pred = model.predict_noise(g, rows, x, &batch.t_idx)?;
    g.mse(pred, &batch.eps)
}

fn usable_objects(objects: &[TrainObject]) -> Result<Vec<usize>> {
    let usable: Vec<usize> = objects
        .iter()
        .enumerate()
        .filter(|(_, o)| !o.positives.is_empty() && !o.clouds.is_empty())
        .map(|(i, _)| i)
        .collect();
    if usable.is_empty() {
        return Err(Error::invalid("no object has both a cloud and a positive grasp"));
    }
    Ok(usable)
}

/// Records the denoising loss of a seeded minibatch on `g`: encoder, noise
/// head and MSE, differentiable in every generator parameter.
pub fn denoising_loss(model: &Generator, g: &mut Graph, objects: &[TrainObject], cfg: &GenTrainConfig, seed: u64) -> Result<Var> {
    let usable = usable_objects(objects)?;
    let batch = make_batch(model, objects, &usable, cfg, &mut rng(seed))?;
    batch_loss(model, g, &batch)
}

/// Denoising loss on a seeded minibatch, without updating the model.
pub fn eval_loss(model: &Generator, objects: &[TrainObject], cfg: &GenTrainConfig, seed: u64) -> Result<f64> {
    let mut g = Graph::inference();
    let loss = denoising_loss(model, &mut g, objects, cfg, seed)?;
    Ok(g.value(loss).item())
}

/// Minimizes `||eps - net(x_t, t, cloud)||^2`. Returns the loss per step.
pub fn train_generator(model: &mut Generator, objects: &[TrainObject], cfg: &GenTrainConfig) -> Result<Vec<f64>> {
    if cfg.objects_per_batch == 0 || cfg.grasps_per_object == 0 {
        return Err(Error::invalid("batch sizes must be positive"));
    }
    let usable = usable_objects(objects)?;
    let mut r = rng(derive_seed(cfg.seed, "train_generator", 0));
    let mut adam = AdamState::new(&model.store);
    let adam_cfg = AdamConfig {
        lr: cfg.lr,
        ..AdamConfig::default()
    };
    let mut losses = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let batch = make_batch(model, objects, &usable, cfg, &mut r)?;
        let mut g = Graph::new();
        let loss = batch_loss(model, &mut g, &batch)?;
        let value = g.value(loss).item();
        if !value.is_finite() {
            return Err(Error::NumericFailure(format!("generator loss is {value} at step {step}")));
        }
        g.backward(loss)?;
        let grads = g.param_grads(&model.store);
        adam_step(&mut model.store, &grads, &mut adam, &adam_cfg)?;
        losses.push(value);
    }
    Ok(losses)
}

/// Work done by one call to [`sample_grasps`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SampleStats {
    pub network_calls: usize,
    pub network_rows: usize,
    pub matmul_flops: usize,
}

/// Runs the reverse process for `b` grasps from standard-normal starts.
///
/// Element `i` draws all its noise from its own stream derived from
/// `(seed, i)`, so a grasp does not depend on the batch size.
pub fn sample_grasps(model: &Generator, cloud: &PointCloud, b: usize, seed: u64) -> Result<(Vec<GraspPose>, SampleStats)> {
    if b == 0 {
        return Err(Error::invalid("batch size must be at least 1"));
    }
    let d = model.dim();
    let emb = model.embed(cloud)?;
    let mut emb_rows = Vec::with_capacity(b * emb.len());
    for _ in 0..b {
        emb_rows.extend_from_slice(&emb);
    }
    let emb_rows = Tensor::matrix(b, emb.len(), emb_rows)?;
    let mut streams: Vec<Rng> = (0..b).map(|i| rng(derive_seed(seed, "sample", i as u64))).collect();
    let mut x: Vec<f64> = Vec::with_capacity(b * d);
    for s in &mut streams {
        for _ in 0..d {
            x.push(s.sample(StandardNormal));
        }
    }
    let mut stats = SampleStats::default();
    for t in (0..model.schedule.steps()).rev() {
        let mut g = Graph::inference();
        let e = g.constant(emb_rows.clone());
        let xv = g.constant(Tensor::matrix(b, d, x.clone())?);
        let pred = model.predict_noise(&mut g, e, xv, &vec![t; b])?;
        stats.network_calls += 1;
        stats.network_rows += b;
        stats.matmul_flops += g.counts().matmul_flops;
        let eps = &g.value(pred).data;
        for (i, s) in streams.iter_mut().enumerate() {
            for j in 0..d {
                let ch = channel_of(j);
                let beta = model.schedule.beta(ch, t);
                let ab = model.schedule.alpha_bar(ch, t);
                let k = i * d + j;
                let mean = (x[k] - beta / (1.0 - ab).sqrt() * eps[k]) / (1.0 - beta).sqrt();
                x[k] = if t > 0 {
                    mean + model.schedule.reverse_variance(ch, t).sqrt() * s.sample::<f64, _>(StandardNormal)
                } else {
                    mean
                };
            }
        }
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericFailure("reverse process produced non-finite values".into()));
    }
    let grasps = x
        .chunks_exact(d)
        .map(|v| model.codec.decode(v, &cloud.centroid))
        .collect::<Result<_>>()?;
    Ok((grasps, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::se3::Rotation;

    #[test]
    fn schedule_is_monotone() {
        let s = NoiseSchedule::default();
        assert_eq!(s.steps(), 10);
        for ch in [Channel::Translation, Channel::Rotation] {
            assert!((s.alpha_bar(ch, 0) - (1.0 - 1e-4)).abs() < 1e-15);
            for t in 1..10 {
                assert!(s.alpha_bar(ch, t) < s.alpha_bar(ch, t - 1));
            }
        }
        assert!(NoiseSchedule::new(vec![0.1, 1.0], vec![0.1, 0.1]).is_err());
        assert!(NoiseSchedule::new(vec![0.1], vec![0.1, 0.1]).is_err());
    }

    #[test]
    fn kappa_examples() {
        let g = |x, y, z| GraspPose::from_translation(Vec3::new(x, y, z));
        let set = vec![vec![g(0.0, 0.0, 0.0), g(0.2, 0.3, 0.4)]];
        let k = kappa_from_positives(&set, ExtentReduction::MeanAxes).unwrap();
        assert!((k.kappa - 1.0 / 0.3).abs() < 1e-12);
        let k = kappa_from_positives(&set, ExtentReduction::MaxAxis).unwrap();
        assert!((k.kappa - 2.5).abs() < 1e-12);
        let same = vec![vec![g(0.1, 0.1, 0.1), g(0.1, 0.1, 0.1)], vec![]];
        assert!(matches!(
            kappa_from_positives(&same, ExtentReduction::MeanAxes),
            Err(Error::DegenerateExtent)
        ));
    }

    #[test]
    fn forward_noise_is_seeded_and_rejects_bad_steps() {
        let s = NoiseSchedule::default();
        let x0 = [0.1, 0.2, 0.3, 0.0, 0.5, -0.5];
        assert_eq!(forward_noise(&x0, 3, &s, 9).unwrap(), forward_noise(&x0, 3, &s, 9).unwrap());
        assert!(forward_noise(&x0, 10, &s, 9).is_err());
    }

    #[test]
    fn codec_roundtrip() {
        for repr in ReprKind::ALL {
            let c = GraspCodec::new(3.7, repr).unwrap();
            let g = GraspPose::new(Rotation::about_y(0.7).compose(&Rotation::about_z(-1.2)), Vec3::new(0.03, -0.2, 0.11));
            let centroid = Vec3::new(0.5, 0.1, -0.3);
            let back = c.decode(&c.encode(&g, &centroid), &centroid).unwrap();
            assert!((back.translation - g.translation).norm() < 1e-12);
            assert!((back.rotation.matrix() - g.rotation.matrix()).norm() < 1e-9);
        }
    }

    fn tiny() -> Generator {
        let arch = GeneratorArch {
            embedding_dim: 16,
            point_widths: vec![8, 16],
            pe_dims: 8,
            grasp_feat: 8,
            head_width: 16,
            head_depth: 2,
            activation: Activation::Relu,
        };
        Generator::new(arch, GraspCodec::new(10.0, ReprKind::LieAlgebra).unwrap(), NoiseSchedule::default(), 5).unwrap()
    }

    #[test]
    fn checkpoint_roundtrip() {
        let mut m = tiny();
        m.config_hash = 0xdead_beef_1234_5678;
        let bytes = m.to_checkpoint().to_bytes().unwrap();
        let back = Generator::from_checkpoint(&Checkpoint::from_bytes(&bytes).unwrap()).unwrap();
        assert_eq!(back.config_hash, m.config_hash);
        assert_eq!(back.to_checkpoint().to_bytes().unwrap(), bytes);
    }

    #[test]
    fn sampling_rejects_empty_batch_and_counts_rows() {
        let m = tiny();
        let cloud = PointCloud::new(vec![Vec3::new(0.01, 0.0, 0.0), Vec3::new(-0.01, 0.0, 0.0)])
            .unwrap()
            .mean_centered();
        assert!(sample_grasps(&m, &cloud, 0, 1).is_err());
        let (g, stats) = sample_grasps(&m, &cloud, 7, 1).unwrap();
        assert_eq!(g.len(), 7);
        assert_eq!(stats.network_calls, 10);
        assert_eq!(stats.network_rows, 70);
    }
}

//! Grasp scoring head on top of the generator's frozen point encoder.
//!
//! The encoder weights are copied out of a trained [`Generator`] and never
//! updated, so every cloud is embedded once and training touches only the
//! head. The head sees `[embedding, kappa * (t - centroid), repr(R)]`.

use std::path::Path;

use rand::Rng as _;

use crate::autodiff::{
    adam_step, sigmoid, Activation, AdamConfig, AdamState, Checkpoint, Graph, Mlp, MlpSpec, OutputActivation,
    stack_clouds, ParamStore, PointEncoder, Tensor, Var,
};
use crate::diffusion::{read_hash, sample_grasps, Generator, GraspCodec};
use crate::error::{Error, Result};
use crate::oracle::{label_all, GraspOracle, GripperModel, LabeledGraspSet, Provenance};
use crate::rng::{derive_seed, rng, Rng};
use crate::se3::{GraspPose, ReprKind};
use crate::shape::{PointCloud, TriangleMesh};

/// Hidden widths of the scoring head.
pub const HEAD_WIDTHS: [usize; 2] = [256, 256];

/// Scores in `[0, 1]`, one per grasp.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredGrasps {
    pub grasps: Vec<GraspPose>,
    pub scores: Vec<f64>,
}

impl ScoredGrasps {
    pub fn new(grasps: Vec<GraspPose>, scores: Vec<f64>) -> Result<Self> {
        if grasps.len() != scores.len() {
            return Err(Error::invalid("grasp and score counts differ"));
        }
        if scores.iter().any(|s| !(0.0..=1.0).contains(s)) {
            return Err(Error::invalid("scores must lie in [0, 1]"));
        }
        Ok(ScoredGrasps { grasps, scores })
    }

    pub fn len(&self) -> usize {
        self.grasps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grasps.is_empty()
    }
}

/// Result of [`filter_grasps`]. `indices` point into the unfiltered input.
#[derive(Debug, Clone, PartialEq)]
pub struct Filtered {
    pub indices: Vec<usize>,
    pub scored: ScoredGrasps,
}

impl Filtered {
    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Keeps scores `>= threshold`, then the `top_k` best, ties by original index.
pub fn filter_grasps(scored: &ScoredGrasps, threshold: f64, top_k: usize) -> Result<Filtered> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::invalid(format!("threshold must lie in [0, 1], got {threshold}")));
    }
    if top_k == 0 {
        return Err(Error::invalid("top_k must be at least 1"));
    }
    let mut idx: Vec<usize> = (0..scored.len()).filter(|&i| scored.scores[i] >= threshold).collect();
    // stable sort keeps index order among equal scores
    idx.sort_by(|&a, &b| scored.scores[b].total_cmp(&scored.scores[a]));
    idx.truncate(top_k);
    Ok(Filtered {
        scored: ScoredGrasps {
            grasps: idx.iter().map(|&i| scored.grasps[i]).collect(),
            scores: idx.iter().map(|&i| scored.scores[i]).collect(),
        },
        indices: idx,
    })
}

fn provenance_code(p: Provenance) -> f64 {
    match p {
        Provenance::Offline => 0.0,
        Provenance::OnGenerator => 1.0,
        Provenance::Mixed => 2.0,
    }
}

fn provenance_from_code(v: f64) -> Result<Provenance> {
    match v {
        0.0 => Ok(Provenance::Offline),
        1.0 => Ok(Provenance::OnGenerator),
        2.0 => Ok(Provenance::Mixed),
        x => Err(Error::format(format!("unknown provenance code {x}"))),
    }
}

#[derive(Debug, Clone)]
pub struct Discriminator {
    pub codec: GraspCodec,
    pub provenance: Provenance,
    /// Hash of the generator the encoder was taken from.
    pub generator_hash: u64,
    pub config_hash: u64,
    pub encoder_store: ParamStore,
    pub head_store: ParamStore,
    encoder: PointEncoder,
    encoder_widths: Vec<usize>,
    activation: Activation,
    head: Mlp,
}

impl Discriminator {
    /// Fresh head over a copy of `generator`'s encoder.
    pub fn new(generator: &Generator, seed: u64) -> Result<Self> {
        let arch = &generator.arch;
        let mut d = Discriminator::blank(
            generator.codec,
            arch.embedding_dim,
            &arch.point_widths,
            arch.activation,
            seed,
        )?;
        let src = generator.store.iter().filter(|(n, _)| n.starts_with("encoder."));
        let n = d.encoder_store.load_from(src)?;
        if n != d.encoder_store.len() {
            return Err(Error::invalid("generator encoder does not match the discriminator layout"));
        }
        d.generator_hash = generator.config_hash;
        Ok(d)
    }

    fn blank(
        codec: GraspCodec,
        embedding_dim: usize,
        point_widths: &[usize],
        activation: Activation,
        seed: u64,
    ) -> Result<Self> {
        let mut r = rng(seed);
        let mut encoder_store = ParamStore::new();
        let encoder = PointEncoder::new(&mut encoder_store, "encoder", point_widths, embedding_dim, activation, &mut r)?;
        encoder_store.set_frozen(true);
        let mut head_store = ParamStore::new();
        let mut widths = vec![embedding_dim + codec.dim()];
        widths.extend(HEAD_WIDTHS);
        widths.push(1);
        let head = Mlp::new(
            &mut head_store,
            "disc_head",
            &MlpSpec {
                widths,
                activation: Activation::Relu,
                output: OutputActivation::Identity,
            },
            &mut rng(derive_seed(seed, "disc_head", 0)),
        )?;
        Ok(Discriminator {
            codec,
            provenance: Provenance::Offline,
            generator_hash: 0,
            config_hash: 0,
            encoder_store,
            head_store,
            encoder,
            encoder_widths: point_widths.to_vec(),
            activation,
            head,
        })
    }

    pub fn embedding_dim(&self) -> usize {
        self.encoder.embedding_dim
    }

    pub fn input_width(&self) -> usize {
        self.head.in_width()
    }

    pub fn embed(&self, cloud: &PointCloud) -> Result<Vec<f64>> {
        Ok(self.encoder.embed(&self.encoder_store, &[&cloud.points])?.data)
    }

    fn features(&self, emb: &[f64], centroid: &crate::se3::Vec3, g: &GraspPose, out: &mut Vec<f64>) {
        out.extend_from_slice(emb);
        out.extend(self.codec.encode(g, centroid));
    }

    fn logits(&self, rows: usize, x: Vec<f64>) -> Result<Vec<f64>> {
        let mut g = Graph::inference();
        let xv = g.constant(Tensor::matrix(rows, self.input_width(), x)?);
        let out = self.head.forward(&mut g, &self.head_store, xv)?;
        Ok(g.value(out).data.clone())
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut c = Checkpoint::new();
        for (name, t) in self.encoder_store.iter().chain(self.head_store.iter()) {
            c.push(name, t.clone());
        }
        c.push("meta.kappa", Tensor::scalar(self.codec.kappa));
        c.push("meta.repr", Tensor::scalar(f64::from(self.codec.repr.code())));
        c.push("meta.provenance", Tensor::scalar(provenance_code(self.provenance)));
        let split = |h: u64| Tensor::row(vec![(h >> 32) as f64, (h & 0xffff_ffff) as f64]);
        c.push("meta.config_hash", split(self.config_hash));
        c.push("meta.generator_hash", split(self.generator_hash));
        let mut arch = vec![
            self.embedding_dim() as f64,
            match self.activation {
                Activation::Relu => 0.0,
                Activation::Gelu => 1.0,
            },
        ];
        arch.extend(self.encoder_widths.iter().map(|&w| w as f64));
        c.push("meta.encoder_arch", Tensor::row(arch));
        c
    }

    pub fn from_checkpoint(c: &Checkpoint) -> Result<Self> {
        let repr_code = c.scalar("meta.repr")?;
        let repr = ReprKind::from_code(repr_code as u8)
            .filter(|_| repr_code.fract() == 0.0)
            .ok_or_else(|| Error::format(format!("unknown repr code {repr_code}")))?;
        let codec = GraspCodec::new(c.scalar("meta.kappa")?, repr)?;
        let arch = &c.require("meta.encoder_arch")?.data;
        if arch.len() < 3 || arch.iter().any(|x| x.fract() != 0.0 || *x < 0.0) {
            return Err(Error::format("malformed meta.encoder_arch"));
        }
        let activation = if arch[1] == 0.0 { Activation::Relu } else { Activation::Gelu };
        let widths: Vec<usize> = arch[2..].iter().map(|&w| w as usize).collect();
        let mut d = Discriminator::blank(codec, arch[0] as usize, &widths, activation, 0)?;
        let params = || c.iter().filter(|(n, _)| !n.starts_with("meta."));
        let n_enc = d.encoder_store.load_from(params())?;
        let n_head = d.head_store.load_from(params())?;
        if n_enc != d.encoder_store.len() || n_head != d.head_store.len() {
            return Err(Error::format("checkpoint is missing discriminator parameters"));
        }
        d.provenance = provenance_from_code(c.scalar("meta.provenance")?)?;
        d.config_hash = read_hash(c)?;
        let h = &c.require("meta.generator_hash")?.data;
        if h.len() != 2 {
            return Err(Error::format("meta.generator_hash must hold two halves"));
        }
        d.generator_hash = ((h[0] as u64) << 32) | (h[1] as u64);
        Ok(d)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_checkpoint().save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Discriminator::from_checkpoint(&Checkpoint::load(path)?)
    }
}

/// Scores grasps (mesh frame) against one mean-centered cloud. The cloud is
/// embedded once and the embedding reused for every grasp.
pub fn score_grasps(disc: &Discriminator, cloud: &PointCloud, grasps: &[GraspPose]) -> Result<ScoredGrasps> {
    if grasps.is_empty() {
        return Ok(ScoredGrasps {
            grasps: Vec::new(),
            scores: Vec::new(),
        });
    }
    let emb = disc.embed(cloud)?;
    let mut x = Vec::with_capacity(grasps.len() * disc.input_width());
    for g in grasps {
        disc.features(&emb, &cloud.centroid, g, &mut x);
    }
    let scores = disc.logits(grasps.len(), x)?.into_iter().map(sigmoid).collect();
    ScoredGrasps::new(grasps.to_vec(), scores)
}

/// Records BCE over `grasps` with `labels` on `g`, running the encoder on
/// `cloud` inside the graph. Gradients reach the encoder only when
/// `encoder_store` is unfrozen.
pub fn classification_loss(
    disc: &Discriminator,
    g: &mut Graph,
    cloud: &PointCloud,
    grasps: &[GraspPose],
    labels: &[f64],
) -> Result<Var> {
    if grasps.is_empty() || grasps.len() != labels.len() {
        return Err(Error::invalid("need one label per grasp and at least one grasp"));
    }
    let (pts, segments) = stack_clouds(&[&cloud.points])?;
    let p = g.constant(pts);
    let emb = disc.encoder.forward(g, &disc.encoder_store, p, &segments)?;
    let rows = g.gather_rows(emb, &vec![0; grasps.len()])?;
    let mut codes = Vec::with_capacity(grasps.len() * disc.codec.dim());
    for gr in grasps {
        codes.extend(disc.codec.encode(gr, &cloud.centroid));
    }
    let codes = g.constant(Tensor::matrix(grasps.len(), disc.codec.dim(), codes)?);
    let x = g.concat(&[rows, codes])?;
    let logits = disc.head.forward(g, &disc.head_store, x)?;
    g.bce_logits(logits, &Tensor::matrix(grasps.len(), 1, labels.to_vec())?)
}

/// One object's training material: observation clouds plus labeled sets.
/// Which sets are used depends on the training mode.
#[derive(Debug, Clone, Copy)]
pub struct DiscObject<'a> {
    pub clouds: &'a [PointCloud],
    pub offline: Option<&'a LabeledGraspSet>,
    pub on_generator: Option<&'a LabeledGraspSet>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscTrainConfig {
    pub steps: usize,
    pub lr: f64,
    pub batch: usize,
    pub seed: u64,
    /// Which labeled sets to train on.
    pub mode: Provenance,
    /// Probability of drawing from the offline sets in mixed mode.
    pub offline_weight: f64,
    /// Draw positives and negatives with equal probability.
    pub balance_classes: bool,
}

impl Default for DiscTrainConfig {
    fn default() -> Self {
        DiscTrainConfig {
            steps: 3000,
            lr: 1e-3,
            batch: 128,
            seed: 0,
            mode: Provenance::OnGenerator,
            offline_weight: 0.5,
            balance_classes: true,
        }
    }
}

/// `(object, grasp)` references split by source and label.
struct Pools<'a> {
    // [source][label] with source 0 = offline, 1 = on-generator; label 0 = negative
    items: [[Vec<(usize, &'a GraspPose)>; 2]; 2],
}

impl<'a> Pools<'a> {
    fn build(objects: &[DiscObject<'a>], mode: Provenance) -> Self {
        let mut items: [[Vec<(usize, &GraspPose)>; 2]; 2] = Default::default();
        for (i, o) in objects.iter().enumerate() {
            if o.clouds.is_empty() {
                continue;
            }
            let sets = [
                (0, o.offline.filter(|_| mode != Provenance::OnGenerator)),
                (1, o.on_generator.filter(|_| mode != Provenance::Offline)),
            ];
            for (src, set) in sets {
                let Some(set) = set else { continue };
                for (g, l) in set.grasps.iter().zip(&set.labels) {
                    items[src][usize::from(l.is_positive())].push((i, g));
                }
            }
        }
        Pools { items }
    }

    fn count(&self, label: usize) -> usize {
        self.items[0][label].len() + self.items[1][label].len()
    }

    fn source_len(&self, src: usize) -> usize {
        self.items[src][0].len() + self.items[src][1].len()
    }

    fn draw(&self, cfg: &DiscTrainConfig, r: &mut Rng) -> (usize, &'a GraspPose, f64) {
        let src = match (self.source_len(0) > 0, self.source_len(1) > 0) {
            (true, true) => usize::from(r.random::<f64>() >= cfg.offline_weight),
            (true, false) => 0,
            _ => 1,
        };
        let pool = &self.items[src];
        let label = if cfg.balance_classes && !pool[0].is_empty() && !pool[1].is_empty() {
            usize::from(r.random::<bool>())
        } else {
            // proportional to class sizes
            let n = pool[0].len() + pool[1].len();
            usize::from(r.random_range(0..n) >= pool[0].len())
        };
        let (obj, g) = pool[label][r.random_range(0..pool[label].len())];
        (obj, g, label as f64)
    }
}

/// Trains the head with binary cross-entropy. Encoder weights are untouched.
/// Returns the loss per step.
pub fn train_discriminator(disc: &mut Discriminator, objects: &[DiscObject], cfg: &DiscTrainConfig) -> Result<Vec<f64>> {
    if cfg.batch == 0 {
        return Err(Error::invalid("batch must be at least 1"));
    }
    if !(0.0..=1.0).contains(&cfg.offline_weight) {
        return Err(Error::invalid("offline_weight must lie in [0, 1]"));
    }
    let pools = Pools::build(objects, cfg.mode);
    let (neg, pos) = (pools.count(0), pools.count(1));
    if pos == 0 || neg == 0 {
        let only = if pos == 0 { "negative" } else { "positive" };
        return Err(Error::DegenerateLabels(format!("{} grasps, all {only}", pos + neg)));
    }
    // embedding bank: the encoder is frozen, so each cloud is embedded once
    let bank: Vec<Vec<Vec<f64>>> = objects
        .iter()
        .map(|o| o.clouds.iter().map(|c| disc.embed(c)).collect::<Result<_>>())
        .collect::<Result<_>>()?;
    let mut r = rng(derive_seed(cfg.seed, "train_discriminator", 0));
    let mut adam = AdamState::new(&disc.head_store);
    let adam_cfg = AdamConfig {
        lr: cfg.lr,
        ..AdamConfig::default()
    };
    let width = disc.input_width();
    let mut losses = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let mut x = Vec::with_capacity(cfg.batch * width);
        let mut y = Vec::with_capacity(cfg.batch);
        for _ in 0..cfg.batch {
            let (obj, g, label) = pools.draw(cfg, &mut r);
            let k = r.random_range(0..objects[obj].clouds.len());
            disc.features(&bank[obj][k], &objects[obj].clouds[k].centroid, g, &mut x);
            y.push(label);
        }
        let mut g = Graph::new();
        let xv = g.constant(Tensor::matrix(cfg.batch, width, x)?);
        let logits = disc.head.forward(&mut g, &disc.head_store, xv)?;
        let loss = g.bce_logits(logits, &Tensor::matrix(cfg.batch, 1, y)?)?;
        let value = g.value(loss).item();
        if !value.is_finite() {
            return Err(Error::NumericFailure(format!("discriminator loss is {value} at step {step}")));
        }
        g.backward(loss)?;
        let grads = g.param_grads(&disc.head_store);
        adam_step(&mut disc.head_store, &grads, &mut adam, &adam_cfg)?;
        losses.push(value);
    }
    disc.provenance = cfg.mode;
    Ok(losses)
}

/// One object to sample on: id, mesh for labeling and its observed clouds.
#[derive(Debug, Clone, Copy)]
pub struct SampleTarget<'a> {
    pub id: &'a str,
    pub mesh: &'a TriangleMesh,
    pub clouds: &'a [PointCloud],
}

/// Samples `b_per_object` grasps from the generator for every object and
/// labels them with the oracle. The batch is split as evenly as possible
/// across the object's clouds, earlier clouds taking the remainder.
pub fn build_on_generator_dataset(
    generator: &Generator,
    objects: &[SampleTarget],
    oracle: &dyn GraspOracle,
    gripper: &GripperModel,
    b_per_object: usize,
    seed: u64,
) -> Result<Vec<LabeledGraspSet>> {
    objects
        .iter()
        .enumerate()
        .map(|(i, o)| {
            if o.clouds.is_empty() {
                return Err(Error::invalid(format!("object {} has no cloud to sample on", o.id)));
            }
            let n = o.clouds.len();
            let mut grasps = Vec::with_capacity(b_per_object);
            for (k, cloud) in o.clouds.iter().enumerate() {
                let b = b_per_object / n + usize::from(k < b_per_object % n);
                if b > 0 {
                    let s = derive_seed(derive_seed(seed, "on_generator", i as u64), "cloud", k as u64);
                    grasps.extend(sample_grasps(generator, cloud, b, s)?.0);
                }
            }
            let labels = label_all(oracle, o.mesh, &grasps);
            LabeledGraspSet::new(o.id, *gripper, Provenance::OnGenerator, grasps, labels)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::{GeneratorArch, NoiseSchedule};
    use crate::metrics::roc_auc;
    use crate::oracle::Label;
    use crate::se3::{Rotation, Vec3};

    fn generator() -> Generator {
        let arch = GeneratorArch {
            embedding_dim: 16,
            point_widths: vec![8, 16],
            pe_dims: 8,
            grasp_feat: 8,
            head_width: 16,
            head_depth: 1,
            activation: Activation::Relu,
        };
        Generator::new(arch, GraspCodec::new(10.0, ReprKind::LieAlgebra).unwrap(), NoiseSchedule::default(), 3).unwrap()
    }

    fn cloud() -> PointCloud {
        let mut r = rng(4);
        let pts = (0..32)
            .map(|_| Vec3::new(r.random_range(-0.03..0.03), r.random_range(-0.03..0.03), r.random_range(-0.03..0.03)))
            .collect();
        PointCloud::new(pts).unwrap().mean_centered()
    }

    fn grasps(n: usize, seed: u64) -> Vec<GraspPose> {
        let mut r = rng(seed);
        (0..n)
            .map(|_| {
                let t = Vec3::new(r.random_range(-0.1..0.1), r.random_range(-0.1..0.1), r.random_range(-0.1..0.1));
                GraspPose::new(Rotation::random(&mut r), t)
            })
            .collect()
    }

    #[test]
    fn filter_example_and_edges() {
        let g = grasps(3, 0);
        let s = ScoredGrasps::new(g.clone(), vec![0.9, 0.4, 0.8]).unwrap();
        let f = filter_grasps(&s, 0.5, 2).unwrap();
        assert_eq!(f.indices, vec![0, 2]);
        assert_eq!(f.scored.scores, vec![0.9, 0.8]);
        assert_eq!(filter_grasps(&s, 0.0, 2).unwrap().indices, vec![0, 2]);
        assert!(filter_grasps(&s, 1.0, 3).unwrap().is_empty());
        assert!(filter_grasps(&s, 1.5, 3).is_err());
        assert!(filter_grasps(&s, 0.5, 0).is_err());
        let ties = ScoredGrasps::new(grasps(4, 1), vec![0.5, 0.7, 0.5, 0.7]).unwrap();
        assert_eq!(filter_grasps(&ties, 0.0, 4).unwrap().indices, vec![1, 3, 0, 2]);
    }

    #[test]
    fn zero_head_scores_one_half() {
        let mut d = Discriminator::new(&generator(), 0).unwrap();
        let ids: Vec<_> = d.head_store.ids().collect();
        for id in ids {
            d.head_store.get_mut(id).data.fill(0.0);
        }
        let s = score_grasps(&d, &cloud(), &grasps(5, 2)).unwrap();
        assert!(s.scores.iter().all(|&p| p == 0.5));
        let mut g = Graph::new();
        let p = g.constant(Tensor::matrix(5, 1, s.scores.clone()).unwrap());
        let bce = g.bce(p, &Tensor::matrix(5, 1, vec![1.0, 0.0, 1.0, 0.0, 1.0]).unwrap()).unwrap();
        assert!((g.value(bce).item() - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn scores_are_per_grasp() {
        let d = Discriminator::new(&generator(), 0).unwrap();
        let c = cloud();
        let g = grasps(20, 3);
        let all = score_grasps(&d, &c, &g).unwrap();
        assert!(all.scores.iter().all(|s| (0.0..=1.0).contains(s)));
        let rev: Vec<_> = g.iter().rev().copied().collect();
        let back = score_grasps(&d, &c, &rev).unwrap();
        for (i, s) in back.scores.iter().enumerate() {
            assert_eq!(*s, all.scores[19 - i]);
        }
        for (i, gi) in g.iter().enumerate() {
            let one = score_grasps(&d, &c, &[*gi, *gi]).unwrap();
            assert_eq!(one.scores[0], one.scores[1]);
            assert!((one.scores[0] - all.scores[i]).abs() < 1e-12);
        }
    }

    fn separable(n: usize, seed: u64) -> LabeledGraspSet {
        let g = grasps(n, seed);
        let labels = g.iter().map(|p| Label::from_bool(p.translation.x + 0.5 * p.translation.y > 0.01)).collect();
        LabeledGraspSet::new("toy", GripperModel::parallel_jaw(), Provenance::Offline, g, labels).unwrap()
    }

    #[test]
    fn separable_labels_train_to_high_auc_with_frozen_encoder() {
        let gen = generator();
        let mut d = Discriminator::new(&gen, 1).unwrap();
        let before = d.encoder_store.clone();
        let clouds = [cloud()];
        let set = separable(400, 5);
        let obj = [DiscObject {
            clouds: &clouds,
            offline: Some(&set),
            on_generator: None,
        }];
        let cfg = DiscTrainConfig {
            steps: 2000,
            batch: 64,
            mode: Provenance::Offline,
            ..DiscTrainConfig::default()
        };
        train_discriminator(&mut d, &obj, &cfg).unwrap();
        assert_eq!(d.provenance, Provenance::Offline);
        for ((na, a), (nb, b)) in before.iter().zip(d.encoder_store.iter()) {
            assert_eq!(na, nb);
            assert_eq!(a.data, b.data);
        }
        let s = score_grasps(&d, &clouds[0], &set.grasps).unwrap();
        let labels: Vec<bool> = set.labels.iter().map(|l| l.is_positive()).collect();
        let auc = roc_auc(&s.scores, &labels).unwrap();
        assert!(auc > 0.99, "auc {auc}");
    }

    #[test]
    fn single_class_is_degenerate() {
        let gen = generator();
        let mut d = Discriminator::new(&gen, 1).unwrap();
        let clouds = [cloud()];
        let g = grasps(10, 1);
        let set = LabeledGraspSet::new("x", GripperModel::parallel_jaw(), Provenance::Offline, g, vec![Label::Negative; 10]).unwrap();
        let obj = [DiscObject {
            clouds: &clouds,
            offline: Some(&set),
            on_generator: None,
        }];
        let cfg = DiscTrainConfig {
            mode: Provenance::Offline,
            ..DiscTrainConfig::default()
        };
        assert!(matches!(train_discriminator(&mut d, &obj, &cfg), Err(Error::DegenerateLabels(_))));
        // on-generator mode sees no data at all
        let cfg = DiscTrainConfig::default();
        assert!(matches!(train_discriminator(&mut d, &obj, &cfg), Err(Error::DegenerateLabels(_))));
    }

    #[test]
    fn checkpoint_roundtrip_keeps_provenance() {
        let mut d = Discriminator::new(&generator(), 2).unwrap();
        d.provenance = Provenance::Mixed;
        d.config_hash = 0x1234_5678_9abc;
        let bytes = d.to_checkpoint().to_bytes().unwrap();
        let back = Discriminator::from_checkpoint(&Checkpoint::from_bytes(&bytes).unwrap()).unwrap();
        assert_eq!(back.provenance, Provenance::Mixed);
        assert_eq!(back.input_width(), 16 + 6);
        assert_eq!(back.to_checkpoint().to_bytes().unwrap(), bytes);
    }

    #[test]
    fn on_generator_dataset_sizes() {
        use crate::oracle::AnalyticOracle;
        use crate::shape::{make_primitive, Primitive};
        let gen = generator();
        let mesh = make_primitive(&Primitive::Sphere { radius: 0.03 }, 8).unwrap();
        let c = [cloud(), cloud(), cloud()];
        let targets: Vec<SampleTarget> = (0..8)
            .map(|_| SampleTarget {
                id: "s",
                mesh: &mesh,
                clouds: &c,
            })
            .collect();
        let gripper = GripperModel::parallel_jaw();
        let oracle = AnalyticOracle::new(gripper).unwrap();
        let sets = build_on_generator_dataset(&gen, &targets, &oracle, &gripper, 250, 0).unwrap();
        assert_eq!(sets.iter().map(LabeledGraspSet::len).sum::<usize>(), 2000);
        assert!(sets.iter().all(|s| s.provenance == Provenance::OnGenerator));
    }
}

//! The training recipe and evaluation suite as file-backed stages.
//!
//! Every stage writes under `<out>/<config hash>/`, where `<out>` is
//! `GG_OUT_DIR` if set and the config's `[output] dir` otherwise. Stages
//! record their artifacts (path and SHA-256) in `manifest.json`; a stage
//! whose inputs are missing fails with [`Error::MissingArtifact`].
//!
//! The in-memory functions ([`Materials::build`], [`fit_generator`],
//! [`fit_discriminator`], [`evaluate`], ...) are what the stages call and
//! can be used directly.

pub mod config;
pub mod report;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::diffusion::{
    compute_kappa, sample_grasps, train_generator, GenTrainConfig, Generator, GeneratorArch, GraspCodec, KappaMode,
    NoiseSchedule, TrainObject,
};
use crate::discriminator::{
    build_on_generator_dataset, filter_grasps, score_grasps, train_discriminator, DiscObject, DiscTrainConfig,
    Discriminator, SampleTarget,
};
use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::metrics::{
    coverage, emd, pose_errors, precision_coverage_curve, roc_auc, tuning_sweep, write_sweep_csv, EmdReport,
    EvalTarget, PrecisionCoverageCurve,
};
use crate::oracle::{
    build_offline_dataset, label_all, summarize, write_summary_csv, AnalyticOracle, LabeledGraspSet, ProposalMix,
    Provenance,
};
use crate::rng::derive_seed;
use crate::shape::{PointCloud, TriangleMesh};
use crate::suite::{build_suite, observe, observe_many, CloudSpec, SuiteObject};

pub use config::PipelineConfig;
use report::{histogram_svg, line_plot_svg, MetricTable};

pub const MANIFEST: &str = "manifest.json";
pub const OUT_ENV: &str = "GG_OUT_DIR";

/// Stage names in recipe order.
pub const STAGES: [&str; 8] = ["gen-data", "train-gen", "build-ongen", "train-disc", "sample", "eval", "emd", "sweep"];

/// Everything `gen-data` produces, in memory.
#[derive(Debug, Clone)]
pub struct Materials {
    pub objects: Vec<SuiteObject>,
    pub offline: Vec<LabeledGraspSet>,
    /// Independent oracle-labeled proposals; their positives are the
    /// evaluation ground truth.
    pub heldout: Vec<LabeledGraspSet>,
    pub train_clouds: Vec<Vec<PointCloud>>,
    /// One complete cloud per object, never used for training.
    pub eval_clouds: Vec<PointCloud>,
}

fn cloud_spec(cfg: &PipelineConfig, partial_ratio: f64) -> CloudSpec {
    CloudSpec {
        points: cfg.data.points,
        partial_ratio,
        ..CloudSpec::default()
    }
}

impl Materials {
    pub fn build(cfg: &PipelineConfig) -> Result<Self> {
        let objects = build_suite(&cfg.suite)?;
        let pairs: Vec<(String, TriangleMesh)> = objects.iter().map(|o| (o.id.clone(), o.mesh.clone())).collect();
        let mix = ProposalMix {
            surface_fraction: cfg.data.surface_fraction,
        };
        let seed = cfg.data.seed;
        let offline = build_offline_dataset(&pairs, &cfg.gripper, cfg.data.grasps_per_object, &mix, derive_seed(seed, "offline", 0))?;
        let heldout = build_offline_dataset(
            &pairs,
            &cfg.gripper,
            cfg.data.gt_grasps_per_object,
            &mix,
            derive_seed(seed, "heldout", 0),
        )?;
        let train_spec = cloud_spec(cfg, cfg.generator.cloud_mix_ratio);
        let eval_spec = cloud_spec(cfg, 0.0);
        let mut train_clouds = Vec::with_capacity(objects.len());
        let mut eval_clouds = Vec::with_capacity(objects.len());
        for (i, o) in objects.iter().enumerate() {
            let i = i as u64;
            train_clouds.push(observe_many(&o.mesh, &train_spec, cfg.data.clouds_per_object, derive_seed(seed, "train_clouds", i))?);
            eval_clouds.push(observe(&o.mesh, &eval_spec, derive_seed(seed, "eval_cloud", i))?);
        }
        Ok(Materials {
            objects,
            offline,
            heldout,
            train_clouds,
            eval_clouds,
        })
    }

    pub fn gt_positives(&self) -> Vec<Vec<crate::se3::GraspPose>> {
        self.heldout.iter().map(LabeledGraspSet::positives).collect()
    }
}

/// `kappa` per the config's mode.
pub fn resolve_kappa(cfg: &PipelineConfig, offline: &[LabeledGraspSet]) -> Result<f64> {
    match cfg.generator.kappa_mode {
        KappaMode::Fixed(k) => Ok(k),
        KappaMode::Computed(red) => Ok(compute_kappa(offline, red)?.kappa),
    }
}

pub fn generator_arch(cfg: &PipelineConfig) -> GeneratorArch {
    GeneratorArch {
        embedding_dim: cfg.generator.embedding_dim,
        ..GeneratorArch::default()
    }
}

/// Builds and trains the generator on the offline positives.
pub fn fit_generator_with_kappa(cfg: &PipelineConfig, m: &Materials, kappa: f64) -> Result<(Generator, Vec<f64>)> {
    let g = &cfg.generator;
    let schedule = NoiseSchedule::linear(g.steps_t, g.beta_trans, g.beta_rot)?.with_variance(g.variance);
    let codec = GraspCodec::new(kappa, g.repr)?;
    let mut model = Generator::new(generator_arch(cfg), codec, schedule, derive_seed(g.seed, "generator_init", 0))?;
    model.config_hash = cfg.hash_u64();
    let positives: Vec<Vec<_>> = m.offline.iter().map(LabeledGraspSet::positives).collect();
    let objects: Vec<TrainObject> = m
        .train_clouds
        .iter()
        .zip(&positives)
        .map(|(c, p)| TrainObject { clouds: c, positives: p })
        .collect();
    let train = GenTrainConfig {
        steps: g.steps,
        lr: g.lr,
        objects_per_batch: g.objects_per_batch,
        grasps_per_object: g.batch / g.objects_per_batch,
        seed: g.seed,
    };
    let losses = train_generator(&mut model, &objects, &train)?;
    Ok((model, losses))
}

pub fn fit_generator(cfg: &PipelineConfig, m: &Materials) -> Result<(Generator, Vec<f64>)> {
    let kappa = resolve_kappa(cfg, &m.offline)?;
    fit_generator_with_kappa(cfg, m, kappa)
}

/// Samples and labels the on-generator dataset, spreading each object's
/// batch over its training clouds.
pub fn on_generator_sets(cfg: &PipelineConfig, gen: &Generator, m: &Materials, seed: u64) -> Result<Vec<LabeledGraspSet>> {
    let oracle = AnalyticOracle::new(cfg.gripper)?;
    let targets: Vec<SampleTarget> = m
        .objects
        .iter()
        .zip(&m.train_clouds)
        .map(|(o, c)| SampleTarget {
            id: &o.id,
            mesh: &o.mesh,
            clouds: c,
        })
        .collect();
    build_on_generator_dataset(gen, &targets, &oracle, &cfg.gripper, cfg.on_generator.grasps_per_object, seed)
}

/// Trains a discriminator head in `mode` on top of `gen`'s encoder.
pub fn fit_discriminator(
    cfg: &PipelineConfig,
    gen: &Generator,
    m: &Materials,
    on_gen: Option<&[LabeledGraspSet]>,
    mode: Provenance,
    seed: u64,
) -> Result<(Discriminator, Vec<f64>)> {
    let mut disc = Discriminator::new(gen, derive_seed(seed, "disc_init", 0))?;
    disc.config_hash = cfg.hash_u64();
    let objects: Vec<DiscObject> = (0..m.objects.len())
        .map(|i| DiscObject {
            clouds: &m.train_clouds[i],
            offline: Some(&m.offline[i]),
            on_generator: on_gen.and_then(|s| s.get(i)),
        })
        .collect();
    let d = &cfg.discriminator;
    let train = DiscTrainConfig {
        steps: d.steps,
        lr: d.lr,
        batch: d.batch,
        seed,
        mode,
        offline_weight: d.offline_weight,
        balance_classes: d.balance_classes,
    };
    let losses = train_discriminator(&mut disc, &objects, &train)?;
    Ok((disc, losses))
}

/// Evaluation of one object.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectEval {
    pub object_id: String,
    /// Coverage of all sampled grasps.
    pub coverage: f64,
    /// Oracle precision of all sampled grasps.
    pub raw_precision: f64,
    /// Precision after filtering at the eval threshold; `None` if nothing passed.
    pub filtered_precision: Option<f64>,
    pub retained: usize,
    /// Mean pose errors of the sampled grasps to the nearest ground truth.
    pub translation_error: f64,
    pub rotation_error: f64,
    pub curve: PrecisionCoverageCurve,
    /// Discriminator ROC AUC on the sampled grasps, if both classes occur.
    pub roc_auc: Option<f64>,
}

/// Samples `eval.batch` grasps per object from its held-out cloud, scores
/// them and measures them against the held-out ground truth.
pub fn evaluate(cfg: &PipelineConfig, gen: &Generator, disc: &Discriminator, m: &Materials, seed: u64) -> Result<Vec<ObjectEval>> {
    let oracle = AnalyticOracle::new(cfg.gripper)?;
    let gt = m.gt_positives();
    let e = &cfg.eval;
    let mut out = Vec::with_capacity(m.objects.len());
    for (i, o) in m.objects.iter().enumerate() {
        let cloud = &m.eval_clouds[i];
        let (grasps, _) = sample_grasps(gen, cloud, e.batch, derive_seed(seed, "eval", i as u64))?;
        let scored = score_grasps(disc, cloud, &grasps)?;
        let labels: Vec<bool> = label_all(&oracle, &o.mesh, &grasps).iter().map(|l| l.is_positive()).collect();
        let raw_precision = labels.iter().filter(|&&p| p).count() as f64 / labels.len() as f64;
        let kept = filter_grasps(&scored, e.threshold, e.top_k)?;
        let filtered_precision = (!kept.is_empty())
            .then(|| kept.indices.iter().filter(|&&k| labels[k]).count() as f64 / kept.indices.len() as f64);
        let (cov, curve, (te, re)) = if gt[i].is_empty() {
            // nothing to cover: report zeros rather than failing the whole run
            let curve = PrecisionCoverageCurve { points: Vec::new(), auc: 0.0 };
            (0.0, curve, (f64::NAN, f64::NAN))
        } else {
            (
                coverage(&grasps, &gt[i])?,
                precision_coverage_curve(&scored, &gt[i], &oracle, &o.mesh, &e.thresholds)?,
                pose_errors(&grasps, &gt[i])?,
            )
        };
        out.push(ObjectEval {
            object_id: o.id.clone(),
            coverage: cov,
            raw_precision,
            filtered_precision,
            retained: kept.indices.len(),
            translation_error: te,
            rotation_error: re,
            curve,
            roc_auc: roc_auc(&scored.scores, &labels).ok(),
        });
    }
    Ok(out)
}

/// EMD between on-generator and offline negatives, and between two disjoint
/// halves of the offline negatives, per object.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftReport {
    pub on_gen_vs_offline: EmdReport,
    pub offline_split: EmdReport,
}

pub fn distribution_shift(cfg: &PipelineConfig, m: &Materials, on_gen: &[LabeledGraspSet], seed: u64) -> Result<ShiftReport> {
    let (n_sub, reps) = (cfg.eval.emd_subsample, cfg.eval.emd_repeats);
    let mut cross = Vec::new();
    let mut split = Vec::new();
    for (i, (off, gen)) in m.offline.iter().zip(on_gen).enumerate() {
        let off_neg = off.negatives();
        let gen_neg = gen.negatives();
        if off_neg.len() < 2 || gen_neg.is_empty() {
            continue;
        }
        let s = derive_seed(seed, "emd", i as u64);
        // seeded disjoint halves
        let mut idx: Vec<usize> = (0..off_neg.len()).collect();
        rand::seq::SliceRandom::shuffle(idx.as_mut_slice(), &mut crate::rng::rng(derive_seed(s, "split", 0)));
        let half = idx.len() / 2;
        let a: Vec<_> = idx[..half].iter().map(|&k| off_neg[k]).collect();
        let b: Vec<_> = idx[half..].iter().map(|&k| off_neg[k]).collect();
        cross.push((off.object_id.clone(), emd(&gen_neg, &off_neg, n_sub, reps, derive_seed(s, "cross", 0))?));
        split.push((off.object_id.clone(), emd(&a, &b, n_sub, reps, derive_seed(s, "within", 0))?));
    }
    Ok(ShiftReport {
        on_gen_vs_offline: EmdReport::new(cross, n_sub, reps),
        offline_split: EmdReport::new(split, n_sub, reps),
    })
}

/// One cell of an ablation: a trained generator evaluated on the held-out
/// clouds without filtering.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationCell {
    pub label: String,
    pub kappa: f64,
    pub seed: u64,
    pub coverage: f64,
    pub precision: f64,
    pub translation_error: f64,
    pub rotation_error: f64,
}

/// Unfiltered coverage, precision and pose errors averaged over objects.
pub fn generator_quality(cfg: &PipelineConfig, gen: &Generator, m: &Materials, seed: u64) -> Result<(f64, f64, f64, f64)> {
    let oracle = AnalyticOracle::new(cfg.gripper)?;
    let gt = m.gt_positives();
    let (mut c, mut p, mut t, mut r, mut n) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (i, o) in m.objects.iter().enumerate() {
        if gt[i].is_empty() {
            continue;
        }
        let (grasps, _) = sample_grasps(gen, &m.eval_clouds[i], cfg.eval.batch, derive_seed(seed, "quality", i as u64))?;
        let pos = label_all(&oracle, &o.mesh, &grasps).iter().filter(|l| l.is_positive()).count();
        let (te, re) = pose_errors(&grasps, &gt[i])?;
        c += coverage(&grasps, &gt[i])?;
        p += pos as f64 / grasps.len() as f64;
        t += te;
        r += re;
        n += 1.0;
    }
    if n == 0.0 {
        return Err(Error::invalid("no object has held-out positives"));
    }
    Ok((c / n, p / n, t / n, r / n))
}

/// Trains one generator per `(factor, seed)` with `kappa = factor * kappa*`.
pub fn kappa_ablation(cfg: &PipelineConfig, m: &Materials, factors: &[f64], seeds: &[u64]) -> Result<Vec<AblationCell>> {
    let base = compute_kappa(&m.offline, crate::diffusion::ExtentReduction::MeanAxes)?.kappa;
    let mut cells = Vec::new();
    for &seed in seeds {
        for &f in factors {
            let mut c = cfg.clone();
            c.generator.seed = seed;
            let (gen, _) = fit_generator_with_kappa(&c, m, f * base)?;
            let (coverage, precision, te, re) = generator_quality(&c, &gen, m, derive_seed(seed, "kappa_eval", 0))?;
            cells.push(AblationCell {
                label: format!("{f}"),
                kappa: f * base,
                seed,
                coverage,
                precision,
                translation_error: te,
                rotation_error: re,
            });
        }
    }
    Ok(cells)
}

/// Trains one generator per `(repr, seed)`.
pub fn repr_ablation(cfg: &PipelineConfig, m: &Materials, seeds: &[u64]) -> Result<Vec<AblationCell>> {
    let mut cells = Vec::new();
    for &seed in seeds {
        for repr in crate::se3::ReprKind::ALL {
            let mut c = cfg.clone();
            c.generator.seed = seed;
            c.generator.repr = repr;
            let (gen, _) = fit_generator(&c, m)?;
            let (coverage, precision, te, re) = generator_quality(&c, &gen, m, derive_seed(seed, "repr_eval", 0))?;
            cells.push(AblationCell {
                label: repr.as_str().to_string(),
                kappa: gen.kappa(),
                seed,
                coverage,
                precision,
                translation_error: te,
                rotation_error: re,
            });
        }
    }
    Ok(cells)
}

pub fn ablation_csv(key: &str, cells: &[AblationCell]) -> String {
    let mut s = format!("{key},kappa,seed,coverage,precision,translation_error,rotation_error\n");
    for c in cells {
        s += &format!(
            "{},{},{},{},{},{},{}\n",
            c.label, c.kappa, c.seed, c.coverage, c.precision, c.translation_error, c.rotation_error
        );
    }
    s
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ArtifactRecord {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct StageRecord {
    pub artifacts: Vec<ArtifactRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Default)]
/// No timestamps, so reruns of the same config write identical bytes.
pub struct Manifest {
    pub config_hash: String,
    pub version: String,
    /// Seed of every stage, by config section.
    pub seeds: BTreeMap<String, u64>,
    pub stages: BTreeMap<String, StageRecord>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Options of the `sample` stage.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleOptions {
    /// Restrict to one object id.
    pub object: Option<String>,
    pub batch: usize,
    pub threshold: f64,
    pub top_k: usize,
    pub seed: u64,
}

/// A content-addressed run directory.
#[derive(Debug, Clone)]
pub struct Run {
    pub cfg: PipelineConfig,
    pub dir: PathBuf,
    pub hash: String,
}

impl Run {
    /// Opens `<root>/<hash>`, where `root` is `GG_OUT_DIR` or the config's
    /// output directory.
    pub fn open(cfg: PipelineConfig) -> Result<Self> {
        let root = std::env::var_os(OUT_ENV).map_or_else(|| cfg.out_dir.clone(), PathBuf::from);
        Run::open_in(cfg, &root)
    }

    pub fn open_in(cfg: PipelineConfig, root: &Path) -> Result<Self> {
        let hash = cfg.hash_hex();
        let dir = root.join(&hash);
        std::fs::create_dir_all(&dir)?;
        let run = Run { cfg, dir, hash };
        let cfg_path = run.dir.join("config.cfg");
        if !cfg_path.exists() {
            write_atomic(&cfg_path, run.cfg.to_text().as_bytes())?;
        }
        if !run.dir.join(MANIFEST).exists() {
            let m = Manifest {
                config_hash: run.hash.clone(),
                version: env!("CARGO_PKG_VERSION").to_string(),
                seeds: run.cfg.seeds(),
                stages: BTreeMap::new(),
            };
            run.write_manifest(&m)?;
        }
        Ok(run)
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.dir.join(rel)
    }

    pub fn manifest(&self) -> Result<Manifest> {
        let text = std::fs::read_to_string(self.path(MANIFEST))?;
        Ok(serde_json::from_str(&text)?)
    }

    fn write_manifest(&self, m: &Manifest) -> Result<()> {
        let mut text = serde_json::to_string_pretty(m)?;
        text.push('\n');
        write_atomic(&self.path(MANIFEST), text.as_bytes())
    }

    fn record(&self, stage: &str, written: &[String]) -> Result<()> {
        let mut artifacts = Vec::with_capacity(written.len());
        for rel in written {
            let bytes = std::fs::read(self.path(rel))?;
            artifacts.push(ArtifactRecord {
                path: rel.clone(),
                sha256: sha256_hex(&bytes),
                bytes: bytes.len() as u64,
            });
        }
        let mut m = self.manifest()?;
        m.stages.insert(
            stage.to_string(),
            StageRecord { artifacts },
        );
        self.write_manifest(&m)
    }

    /// Fails with [`Error::MissingArtifact`] unless `stage` completed and all
    /// its artifacts are still present.
    fn require(&self, stage: &str) -> Result<()> {
        let m = self.manifest()?;
        let missing = |path: PathBuf| Error::MissingArtifact {
            stage: stage.to_string(),
            path,
        };
        let rec = m.stages.get(stage).ok_or_else(|| missing(self.dir.clone()))?;
        for a in &rec.artifacts {
            let p = self.path(&a.path);
            if !p.exists() {
                return Err(missing(p));
            }
        }
        Ok(())
    }

    fn write(&self, written: &mut Vec<String>, rel: String, bytes: &[u8]) -> Result<()> {
        write_atomic(&self.path(&rel), bytes)?;
        written.push(rel);
        Ok(())
    }

    pub fn gen_data(&self) -> Result<Materials> {
        let m = Materials::build(&self.cfg)?;
        let mut w = Vec::new();
        for (i, o) in m.objects.iter().enumerate() {
            self.write(&mut w, format!("objects/{}.off", o.id), o.mesh.to_off().as_bytes())?;
            self.write(&mut w, format!("data/{}.offline.jsonl", o.id), m.offline[i].to_jsonl(None)?.as_bytes())?;
            self.write(&mut w, format!("data/{}.heldout.jsonl", o.id), m.heldout[i].to_jsonl(None)?.as_bytes())?;
            for (k, c) in m.train_clouds[i].iter().enumerate() {
                self.write(&mut w, format!("clouds/{}.train{k}.ggpc", o.id), &c.to_bytes())?;
            }
            self.write(&mut w, format!("clouds/{}.eval.ggpc", o.id), &m.eval_clouds[i].to_bytes())?;
        }
        let mut csv = Vec::new();
        write_summary_csv(&mut csv, &summarize(&m.offline))?;
        self.write(&mut w, "data/summary.csv".into(), &csv)?;
        self.record("gen-data", &w)?;
        Ok(m)
    }

    pub fn load_materials(&self) -> Result<Materials> {
        self.require("gen-data")?;
        let specs = build_suite(&self.cfg.suite)?;
        let mut m = Materials {
            objects: Vec::new(),
            offline: Vec::new(),
            heldout: Vec::new(),
            train_clouds: Vec::new(),
            eval_clouds: Vec::new(),
        };
        for o in specs {
            let mesh = TriangleMesh::load_off(&self.path(&format!("objects/{}.off", o.id)))?;
            m.offline.push(LabeledGraspSet::load(&self.path(&format!("data/{}.offline.jsonl", o.id)))?.0);
            m.heldout.push(LabeledGraspSet::load(&self.path(&format!("data/{}.heldout.jsonl", o.id)))?.0);
            let clouds = (0..self.cfg.data.clouds_per_object)
                .map(|k| PointCloud::load(&self.path(&format!("clouds/{}.train{k}.ggpc", o.id))))
                .collect::<Result<_>>()?;
            m.train_clouds.push(clouds);
            m.eval_clouds.push(PointCloud::load(&self.path(&format!("clouds/{}.eval.ggpc", o.id)))?);
            m.objects.push(SuiteObject { mesh, ..o });
        }
        Ok(m)
    }

    pub fn train_gen(&self) -> Result<Generator> {
        let m = self.load_materials()?;
        let (gen, losses) = fit_generator(&self.cfg, &m)?;
        let mut w = Vec::new();
        self.write(&mut w, "generator.ggck".into(), &gen.to_checkpoint().to_bytes()?)?;
        self.write(&mut w, "generator_loss.csv".into(), loss_csv(&losses).as_bytes())?;
        self.record("train-gen", &w)?;
        Ok(gen)
    }

    pub fn load_generator(&self) -> Result<Generator> {
        self.require("train-gen")?;
        Generator::load(&self.path("generator.ggck"))
    }

    pub fn build_ongen(&self) -> Result<Vec<LabeledGraspSet>> {
        let m = self.load_materials()?;
        let gen = self.load_generator()?;
        let sets = on_generator_sets(&self.cfg, &gen, &m, self.cfg.on_generator.seed)?;
        let mut w = Vec::new();
        for s in &sets {
            self.write(&mut w, format!("data/{}.ongen.jsonl", s.object_id), s.to_jsonl(None)?.as_bytes())?;
        }
        let mut csv = Vec::new();
        write_summary_csv(&mut csv, &summarize(&sets))?;
        self.write(&mut w, "data/ongen_summary.csv".into(), &csv)?;
        self.record("build-ongen", &w)?;
        Ok(sets)
    }

    pub fn load_ongen(&self, m: &Materials) -> Result<Vec<LabeledGraspSet>> {
        self.require("build-ongen")?;
        m.objects
            .iter()
            .map(|o| Ok(LabeledGraspSet::load(&self.path(&format!("data/{}.ongen.jsonl", o.id)))?.0))
            .collect()
    }

    pub fn train_disc(&self) -> Result<Discriminator> {
        let m = self.load_materials()?;
        let gen = self.load_generator()?;
        let mode = self.cfg.discriminator.mode;
        let on_gen = if mode == Provenance::Offline {
            None
        } else {
            Some(self.load_ongen(&m)?)
        };
        let (disc, losses) = fit_discriminator(&self.cfg, &gen, &m, on_gen.as_deref(), mode, self.cfg.discriminator.seed)?;
        let mut w = Vec::new();
        self.write(&mut w, "discriminator.ggck".into(), &disc.to_checkpoint().to_bytes()?)?;
        self.write(&mut w, "discriminator_loss.csv".into(), loss_csv(&losses).as_bytes())?;
        self.record("train-disc", &w)?;
        Ok(disc)
    }

    pub fn load_discriminator(&self) -> Result<Discriminator> {
        self.require("train-disc")?;
        Discriminator::load(&self.path("discriminator.ggck"))
    }

    /// Samples `batch` grasps per object from its eval cloud, scores and
    /// filters them. Writes one scored grasp file per object.
    pub fn sample(&self, opts: &SampleOptions) -> Result<Vec<PathBuf>> {
        let m = self.load_materials()?;
        let gen = self.load_generator()?;
        let disc = self.load_discriminator()?;
        let oracle = AnalyticOracle::new(self.cfg.gripper)?;
        if let Some(id) = &opts.object {
            if !m.objects.iter().any(|o| &o.id == id) {
                return Err(Error::invalid(format!("unknown object `{id}`")));
            }
        }
        let mut w = Vec::new();
        for (i, o) in m.objects.iter().enumerate() {
            if opts.object.as_ref().is_some_and(|id| id != &o.id) {
                continue;
            }
            let cloud = &m.eval_clouds[i];
            let (grasps, _) = sample_grasps(&gen, cloud, opts.batch, derive_seed(opts.seed, "sample", i as u64))?;
            let scored = score_grasps(&disc, cloud, &grasps)?;
            let kept = filter_grasps(&scored, opts.threshold, opts.top_k)?;
            let labels = label_all(&oracle, &o.mesh, &kept.scored.grasps);
            let set = LabeledGraspSet::new(o.id.clone(), self.cfg.gripper, Provenance::OnGenerator, kept.scored.grasps, labels)?;
            let rel = format!(
                "samples/{}.b{}_t{}_k{}_s{}.jsonl",
                o.id, opts.batch, opts.threshold, opts.top_k, opts.seed
            );
            self.write(&mut w, rel, set.to_jsonl(Some(&kept.scored.scores))?.as_bytes())?;
        }
        self.record("sample", &w)?;
        Ok(w.into_iter().map(|r| self.path(&r)).collect())
    }

    pub fn eval(&self) -> Result<Vec<ObjectEval>> {
        let m = self.load_materials()?;
        let gen = self.load_generator()?;
        let disc = self.load_discriminator()?;
        let evals = evaluate(&self.cfg, &gen, &disc, &m, self.cfg.eval.seed)?;
        let mut curves = String::from("object_id,threshold,precision,coverage\n");
        let mut table = MetricTable::default();
        let mut series = Vec::new();
        for e in &evals {
            for p in &e.curve.points {
                curves += &format!("{},{},{},{}\n", e.object_id, p.threshold, p.precision, p.coverage);
            }
            table.push("coverage", &e.object_id, Some(e.coverage));
            table.push("raw_precision", &e.object_id, Some(e.raw_precision));
            table.push("filtered_precision", &e.object_id, e.filtered_precision);
            table.push("retained", &e.object_id, Some(e.retained as f64));
            table.push("pc_auc", &e.object_id, Some(e.curve.auc));
            table.push("roc_auc", &e.object_id, e.roc_auc);
            table.push("translation_error", &e.object_id, Some(e.translation_error).filter(|v| v.is_finite()));
            table.push("rotation_error", &e.object_id, Some(e.rotation_error).filter(|v| v.is_finite()));
            series.push((e.object_id.clone(), e.curve.points.iter().map(|p| (p.coverage, p.precision)).collect()));
        }
        let mut w = Vec::new();
        self.write(&mut w, "eval/curves.csv".into(), curves.as_bytes())?;
        self.write(&mut w, "eval/metrics.csv".into(), table.to_csv().as_bytes())?;
        let svg = line_plot_svg("precision vs coverage", "coverage", "precision", &series);
        self.write(&mut w, "eval/curves.svg".into(), svg.as_bytes())?;
        self.record("eval", &w)?;
        Ok(evals)
    }

    pub fn emd(&self) -> Result<ShiftReport> {
        let m = self.load_materials()?;
        let on_gen = self.load_ongen(&m)?;
        let rep = distribution_shift(&self.cfg, &m, &on_gen, self.cfg.eval.seed)?;
        let mut table = MetricTable::default();
        for (id, v) in &rep.on_gen_vs_offline.per_object {
            table.push("emd_ongen_vs_offline", id, Some(*v));
        }
        for (id, v) in &rep.offline_split.per_object {
            table.push("emd_offline_split", id, Some(*v));
        }
        table.push("emd_ongen_vs_offline_mean", "all", Some(rep.on_gen_vs_offline.mean));
        table.push("emd_offline_split_mean", "all", Some(rep.offline_split.mean));
        let groups = [
            ("on-generator vs offline".to_string(), rep.on_gen_vs_offline.per_object.iter().map(|x| x.1).collect()),
            ("offline split".to_string(), rep.offline_split.per_object.iter().map(|x| x.1).collect()),
        ];
        let mut w = Vec::new();
        self.write(&mut w, "emd/emd.csv".into(), table.to_csv().as_bytes())?;
        self.write(&mut w, "emd/emd.svg".into(), histogram_svg("negative-set EMD", "EMD", &groups, 10).as_bytes())?;
        self.record("emd", &w)?;
        Ok(rep)
    }

    pub fn sweep(&self) -> Result<PathBuf> {
        let m = self.load_materials()?;
        let gen = self.load_generator()?;
        let disc = self.load_discriminator()?;
        let oracle = AnalyticOracle::new(self.cfg.gripper)?;
        let targets: Vec<EvalTarget> = m
            .objects
            .iter()
            .zip(&m.eval_clouds)
            .map(|(o, c)| EvalTarget {
                id: &o.id,
                mesh: &o.mesh,
                cloud: c,
            })
            .collect();
        let e = &self.cfg.eval;
        let rows = tuning_sweep(&gen, &disc, &targets, &oracle, &e.sweep_batches, &e.sweep_thresholds, e.seed)?;
        let mut csv = Vec::new();
        write_sweep_csv(&mut csv, &rows)?;
        let mut w = Vec::new();
        self.write(&mut w, "sweep/sweep.csv".into(), &csv)?;
        self.record("sweep", &w)?;
        Ok(self.path("sweep/sweep.csv"))
    }

    /// All stages in recipe order (sampling with the eval settings).
    pub fn run_all(&self) -> Result<()> {
        self.gen_data()?;
        self.train_gen()?;
        self.build_ongen()?;
        self.train_disc()?;
        self.sample(&SampleOptions {
            object: None,
            batch: self.cfg.eval.batch,
            threshold: self.cfg.eval.threshold,
            top_k: self.cfg.eval.top_k,
            seed: self.cfg.eval.seed,
        })?;
        self.eval()?;
        self.emd()?;
        self.sweep()?;
        Ok(())
    }
}

fn loss_csv(losses: &[f64]) -> String {
    let mut s = String::from("step,loss\n");
    for (i, l) in losses.iter().enumerate() {
        s += &format!("{i},{l}\n");
    }
    s
}

/// Process exit code for an error: 2 config, 3 missing upstream artifact,
/// 4 numeric failure, 1 anything else.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config { .. } => 2,
        Error::MissingArtifact { .. } => 3,
        Error::NumericFailure(_) | Error::OptimizerError { .. } => 4,
        _ => 1,
    }
}

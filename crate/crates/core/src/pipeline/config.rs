//! Pipeline config: flat `key = value` lines grouped under `[section]`
//! headers, `#` starts a comment. Every key is optional; unknown sections
//! and keys are errors. See `configs/toy.cfg` for the full list.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::diffusion::{ExtentReduction, KappaMode, ReverseVariance};
use crate::error::{Error, Result};
use crate::oracle::{GripperKind, GripperModel, ProposalMix, Provenance};
use crate::se3::ReprKind;
use crate::suite::{PrimitiveKind, SuiteSpec};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DataConfig {
    pub grasps_per_object: usize,
    pub surface_fraction: f64,
    pub clouds_per_object: usize,
    pub points: usize,
    /// Held-out ground-truth proposals per object for evaluation.
    pub gt_grasps_per_object: usize,
    pub seed: u64,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            grasps_per_object: 2000,
            surface_fraction: ProposalMix::default().surface_fraction,
            clouds_per_object: 8,
            points: 256,
            gt_grasps_per_object: 2000,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GeneratorConfig {
    pub steps_t: usize,
    pub beta_trans: (f64, f64),
    pub beta_rot: (f64, f64),
    #[serde(serialize_with = "ser_variance")]
    pub variance: ReverseVariance,
    pub repr: ReprKind,
    #[serde(serialize_with = "ser_kappa")]
    pub kappa_mode: KappaMode,
    pub embedding_dim: usize,
    pub steps: usize,
    pub lr: f64,
    /// Grasps per optimizer step, split evenly over `objects_per_batch` clouds.
    pub batch: usize,
    pub objects_per_batch: usize,
    pub seed: u64,
    /// Fraction of observation clouds rendered as partial views.
    pub cloud_mix_ratio: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            steps_t: 10,
            beta_trans: (1e-4, 0.2),
            beta_rot: (1e-4, 0.2),
            variance: ReverseVariance::Posterior,
            repr: ReprKind::LieAlgebra,
            kappa_mode: KappaMode::Computed(ExtentReduction::MeanAxes),
            embedding_dim: 128,
            steps: 20_000,
            lr: 1e-3,
            batch: 64,
            objects_per_batch: 4,
            seed: 0,
            cloud_mix_ratio: 0.5,
        }
    }
}

fn ser_variance<S: serde::Serializer>(v: &ReverseVariance, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(v.as_str())
}

fn ser_kappa<S: serde::Serializer>(k: &KappaMode, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&format_kappa_mode(k))
}

pub fn format_kappa_mode(k: &KappaMode) -> String {
    match k {
        KappaMode::Computed(ExtentReduction::MeanAxes) => "computed".into(),
        KappaMode::Computed(ExtentReduction::MaxAxis) => "computed:max_axis".into(),
        KappaMode::Fixed(v) => format!("fixed:{v}"),
    }
}

pub fn parse_kappa_mode(s: &str) -> std::result::Result<KappaMode, String> {
    match s {
        "computed" | "computed:mean_axes" => Ok(KappaMode::Computed(ExtentReduction::MeanAxes)),
        "computed:max_axis" => Ok(KappaMode::Computed(ExtentReduction::MaxAxis)),
        _ => {
            let v = s
                .strip_prefix("fixed:")
                .ok_or_else(|| format!("kappa_mode must be `computed` or `fixed:<value>`, got `{s}`"))?;
            let v: f64 = v.trim().parse().map_err(|_| format!("bad fixed kappa `{v}`"))?;
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!("fixed kappa must be positive, got {v}"));
            }
            Ok(KappaMode::Fixed(v))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OnGeneratorConfig {
    pub grasps_per_object: usize,
    pub seed: u64,
}

impl Default for OnGeneratorConfig {
    fn default() -> Self {
        OnGeneratorConfig {
            // 2000 per object leaves the filtered precision short of 0.7 on
            // most toy objects.
            grasps_per_object: 8000,
            seed: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscriminatorConfig {
    pub mode: Provenance,
    pub steps: usize,
    pub lr: f64,
    pub batch: usize,
    pub offline_weight: f64,
    pub balance_classes: bool,
    pub seed: u64,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        DiscriminatorConfig {
            mode: Provenance::OnGenerator,
            steps: 60_000,
            lr: 1e-3,
            batch: 128,
            offline_weight: 0.5,
            balance_classes: true,
            seed: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalConfig {
    pub batch: usize,
    pub threshold: f64,
    pub top_k: usize,
    pub thresholds: Vec<f64>,
    pub emd_subsample: usize,
    pub emd_repeats: usize,
    pub sweep_batches: Vec<usize>,
    pub sweep_thresholds: Vec<f64>,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            batch: 512,
            threshold: 0.7,
            top_k: 512,
            thresholds: (0..20).map(|i| i as f64 / 20.0).collect(),
            emd_subsample: 500,
            emd_repeats: 5,
            sweep_batches: vec![16, 64, 256],
            sweep_thresholds: vec![0.0, 0.5, 0.7, 0.9, 0.99],
            seed: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteConfig {
    pub count: usize,
    pub kinds: Vec<String>,
    pub box_edge: (f64, f64),
    pub radius: (f64, f64),
    pub height: (f64, f64),
    pub sphere_radius: (f64, f64),
    pub resolution: usize,
    pub seed: u64,
}

impl From<&SuiteSpec> for SuiteConfig {
    fn from(s: &SuiteSpec) -> Self {
        SuiteConfig {
            count: s.count,
            kinds: s.kinds.iter().map(|k| k.as_str().to_string()).collect(),
            box_edge: s.box_edge,
            radius: s.radius,
            height: s.height,
            sphere_radius: s.sphere_radius,
            resolution: s.resolution,
            seed: s.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub suite: SuiteSpec,
    pub gripper: GripperModel,
    pub data: DataConfig,
    pub generator: GeneratorConfig,
    pub on_generator: OnGeneratorConfig,
    pub discriminator: DiscriminatorConfig,
    pub eval: EvalConfig,
    /// Root for content-addressed run directories. Not part of the hash.
    pub out_dir: PathBuf,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            suite: SuiteSpec::default(),
            gripper: GripperModel::parallel_jaw(),
            data: DataConfig::default(),
            generator: GeneratorConfig::default(),
            on_generator: OnGeneratorConfig::default(),
            discriminator: DiscriminatorConfig::default(),
            eval: EvalConfig::default(),
            out_dir: PathBuf::from("out"),
        }
    }
}

#[derive(Serialize)]
struct Canonical<'a> {
    version: u32,
    suite: SuiteConfig,
    gripper: &'a GripperModel,
    data: &'a DataConfig,
    generator: &'a GeneratorConfig,
    on_generator: &'a OnGeneratorConfig,
    discriminator: &'a DiscriminatorConfig,
    eval: &'a EvalConfig,
}

impl PipelineConfig {
    /// Canonical JSON of every setting that affects artifacts.
    pub fn canonical_json(&self) -> String {
        let c = Canonical {
            version: 1,
            suite: SuiteConfig::from(&self.suite),
            gripper: &self.gripper,
            data: &self.data,
            generator: &self.generator,
            on_generator: &self.on_generator,
            discriminator: &self.discriminator,
            eval: &self.eval,
        };
        serde_json::to_string(&c).expect("config serializes")
    }

    pub fn seeds(&self) -> std::collections::BTreeMap<String, u64> {
        [
            ("suite", self.suite.seed),
            ("data", self.data.seed),
            ("generator", self.generator.seed),
            ("on_generator", self.on_generator.seed),
            ("discriminator", self.discriminator.seed),
            ("eval", self.eval.seed),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }

    /// First 16 hex digits of the SHA-256 of [`PipelineConfig::canonical_json`].
    pub fn hash_hex(&self) -> String {
        let digest = Sha256::digest(self.canonical_json().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn hash_u64(&self) -> u64 {
        u64::from_str_radix(&self.hash_hex(), 16).expect("hex digest")
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = PipelineConfig::default();
        let mut section = String::new();
        let mut seen: BTreeMap<(String, String), usize> = BTreeMap::new();
        let mut gripper_overrides = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| Error::Config { line: line_no, msg };
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| err(format!("unterminated section header `{line}`")))?
                    .trim();
                if !SECTIONS.contains(&name) {
                    return Err(err(format!("unknown section [{name}]")));
                }
                section = name.to_string();
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected `key = value`, got `{line}`")))?;
            let (key, value) = (key.trim(), value.trim());
            if section.is_empty() {
                return Err(err(format!("key `{key}` appears before any section")));
            }
            if let Some(prev) = seen.insert((section.clone(), key.to_string()), line_no) {
                return Err(err(format!("duplicate key `{key}` (first set on line {prev})")));
            }
            if section == "gripper" && key != "kind" {
                gripper_overrides.push((key.to_string(), value.to_string(), line_no));
                continue;
            }
            cfg.set(&section, key, value).map_err(err)?;
        }
        for (key, value, line) in gripper_overrides {
            cfg.set_gripper(&key, &value).map_err(|msg| Error::Config { line, msg })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        PipelineConfig::parse(&text)
    }

    fn set(&mut self, section: &str, key: &str, v: &str) -> std::result::Result<(), String> {
        let unknown = || Err(format!("unknown key `{key}` in [{section}]"));
        match section {
            "suite" => {
                let s = &mut self.suite;
                match key {
                    "count" => s.count = num(v)?,
                    "kinds" => {
                        s.kinds = list(v)
                            .into_iter()
                            .map(|k| PrimitiveKind::from_str(&k).map_err(|e| e.to_string()))
                            .collect::<std::result::Result<_, _>>()?
                    }
                    "box_edge" => s.box_edge = range(v)?,
                    "radius" => s.radius = range(v)?,
                    "height" => s.height = range(v)?,
                    "sphere_radius" => s.sphere_radius = range(v)?,
                    "resolution" => s.resolution = num(v)?,
                    "seed" => s.seed = num(v)?,
                    _ => return unknown(),
                }
            }
            "gripper" => {
                let kind = GripperKind::from_str(v).map_err(|e| e.to_string())?;
                self.gripper = match kind {
                    GripperKind::ParallelJaw => GripperModel::parallel_jaw(),
                    GripperKind::Suction => GripperModel::suction(),
                };
            }
            "data" => {
                let d = &mut self.data;
                match key {
                    "grasps_per_object" => d.grasps_per_object = num(v)?,
                    "surface_fraction" => d.surface_fraction = num(v)?,
                    "clouds_per_object" => d.clouds_per_object = num(v)?,
                    "points" => d.points = num(v)?,
                    "gt_grasps_per_object" => d.gt_grasps_per_object = num(v)?,
                    "seed" => d.seed = num(v)?,
                    _ => return unknown(),
                }
            }
            "generator" => {
                let g = &mut self.generator;
                match key {
                    "T" => g.steps_t = num(v)?,
                    "beta_trans" => g.beta_trans = range(v)?,
                    "beta_rot" => g.beta_rot = range(v)?,
                    "variance" => {
                        g.variance = ReverseVariance::parse(v).ok_or_else(|| format!("variance must be posterior or beta, got `{v}`"))?
                    }
                    "repr" => g.repr = ReprKind::from_str(v).map_err(|e| e.to_string())?,
                    "kappa_mode" => g.kappa_mode = parse_kappa_mode(v)?,
                    "embedding_dim" => g.embedding_dim = num(v)?,
                    "steps" => g.steps = num(v)?,
                    "lr" => g.lr = num(v)?,
                    "batch" => g.batch = num(v)?,
                    "objects_per_batch" => g.objects_per_batch = num(v)?,
                    "seed" => g.seed = num(v)?,
                    "cloud_mix_ratio" => g.cloud_mix_ratio = num(v)?,
                    _ => return unknown(),
                }
            }
            "on_generator" => match key {
                "grasps_per_object" => self.on_generator.grasps_per_object = num(v)?,
                "seed" => self.on_generator.seed = num(v)?,
                _ => return unknown(),
            },
            "discriminator" => {
                let d = &mut self.discriminator;
                match key {
                    "mode" => d.mode = Provenance::from_str(v).map_err(|e| e.to_string())?,
                    "steps" => d.steps = num(v)?,
                    "lr" => d.lr = num(v)?,
                    "batch" => d.batch = num(v)?,
                    "offline_weight" => d.offline_weight = num(v)?,
                    "balance_classes" => d.balance_classes = num(v)?,
                    "seed" => d.seed = num(v)?,
                    _ => return unknown(),
                }
            }
            "eval" => {
                let e = &mut self.eval;
                match key {
                    "batch" => e.batch = num(v)?,
                    "threshold" => e.threshold = num(v)?,
                    "top_k" => e.top_k = num(v)?,
                    "thresholds" => e.thresholds = nums(v)?,
                    "emd_subsample" => e.emd_subsample = num(v)?,
                    "emd_repeats" => e.emd_repeats = num(v)?,
                    "sweep_batches" => e.sweep_batches = nums(v)?,
                    "sweep_thresholds" => e.sweep_thresholds = nums(v)?,
                    "seed" => e.seed = num(v)?,
                    _ => return unknown(),
                }
            }
            "output" => match key {
                "dir" => self.out_dir = PathBuf::from(v),
                _ => return unknown(),
            },
            _ => unreachable!("section names are checked by the caller"),
        }
        Ok(())
    }

    fn set_gripper(&mut self, key: &str, v: &str) -> std::result::Result<(), String> {
        let g = &mut self.gripper;
        let slot = match key {
            "max_width" => &mut g.max_width,
            "finger_depth" => &mut g.finger_depth,
            "finger_thickness" => &mut g.finger_thickness,
            "finger_width" => &mut g.finger_width,
            "palm_thickness" => &mut g.palm_thickness,
            "friction_mu" => &mut g.friction_mu,
            "cup_radius" => &mut g.cup_radius,
            "collision_margin" => &mut g.collision_margin,
            _ => return Err(format!("unknown key `{key}` in [gripper]")),
        };
        *slot = num(v)?;
        Ok(())
    }

    /// Checks cross-field constraints. Errors report line 0.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config { line: 0, msg });
        self.suite.validate().or_else(|e| bad(e.to_string()))?;
        self.gripper.validate().or_else(|e| bad(e.to_string()))?;
        let d = &self.data;
        if d.grasps_per_object == 0 || d.clouds_per_object == 0 || d.points == 0 || d.gt_grasps_per_object == 0 {
            return bad("[data] counts must be positive".into());
        }
        if !(0.0..=1.0).contains(&d.surface_fraction) {
            return bad("[data] surface_fraction must lie in [0, 1]".into());
        }
        let g = &self.generator;
        if g.steps_t == 0 {
            return bad("[generator] T must be at least 1".into());
        }
        for (name, (lo, hi)) in [("beta_trans", g.beta_trans), ("beta_rot", g.beta_rot)] {
            if !(lo > 0.0 && lo <= hi && hi < 1.0) {
                return bad(format!("[generator] {name} must satisfy 0 < lo <= hi < 1"));
            }
        }
        if g.embedding_dim < 16 {
            return bad(format!("[generator] embedding_dim must be at least 16, got {}", g.embedding_dim));
        }
        if g.objects_per_batch == 0 || g.batch < g.objects_per_batch || !g.batch.is_multiple_of(g.objects_per_batch) {
            return bad("[generator] batch must be a positive multiple of objects_per_batch".into());
        }
        if !(g.lr > 0.0) || !(0.0..=1.0).contains(&g.cloud_mix_ratio) {
            return bad("[generator] lr must be positive and cloud_mix_ratio in [0, 1]".into());
        }
        if self.on_generator.grasps_per_object == 0 {
            return bad("[on_generator] grasps_per_object must be positive".into());
        }
        let s = &self.discriminator;
        if s.batch == 0 || !(s.lr > 0.0) || !(0.0..=1.0).contains(&s.offline_weight) {
            return bad("[discriminator] needs batch > 0, lr > 0 and offline_weight in [0, 1]".into());
        }
        let e = &self.eval;
        if e.batch == 0 || e.top_k == 0 || e.emd_subsample == 0 || e.emd_repeats == 0 {
            return bad("[eval] counts must be positive".into());
        }
        let unit = |v: &f64| (0.0..=1.0).contains(v);
        if !unit(&e.threshold) || !e.thresholds.iter().all(unit) || !e.sweep_thresholds.iter().all(unit) {
            return bad("[eval] thresholds must lie in [0, 1]".into());
        }
        if e.thresholds.is_empty() || e.thresholds.windows(2).any(|w| w[0] > w[1]) {
            return bad("[eval] thresholds must be non-empty and ascending".into());
        }
        if e.sweep_batches.is_empty() || e.sweep_thresholds.is_empty() || e.sweep_batches.contains(&0) {
            return bad("[eval] sweep grids must be non-empty with positive batches".into());
        }
        Ok(())
    }

    /// Config text that parses back to `self` (modulo float formatting).
    pub fn to_text(&self) -> String {
        let s = &self.suite;
        let g = &self.gripper;
        let d = &self.data;
        let n = &self.generator;
        let o = &self.on_generator;
        let c = &self.discriminator;
        let e = &self.eval;
        let join = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        let kinds: Vec<&str> = s.kinds.iter().map(|k| k.as_str()).collect();
        let mut t = String::new();
        t += &format!(
            "[suite]\ncount = {}\nkinds = {}\nbox_edge = {},{}\nradius = {},{}\nheight = {},{}\nsphere_radius = {},{}\nresolution = {}\nseed = {}\n\n",
            s.count,
            kinds.join(","),
            s.box_edge.0,
            s.box_edge.1,
            s.radius.0,
            s.radius.1,
            s.height.0,
            s.height.1,
            s.sphere_radius.0,
            s.sphere_radius.1,
            s.resolution,
            s.seed
        );
        t += &format!(
            "[gripper]\nkind = {}\nmax_width = {}\nfinger_depth = {}\nfinger_thickness = {}\nfinger_width = {}\npalm_thickness = {}\nfriction_mu = {}\ncup_radius = {}\ncollision_margin = {}\n\n",
            g.kind, g.max_width, g.finger_depth, g.finger_thickness, g.finger_width, g.palm_thickness, g.friction_mu, g.cup_radius, g.collision_margin
        );
        t += &format!(
            "[data]\ngrasps_per_object = {}\nsurface_fraction = {}\nclouds_per_object = {}\npoints = {}\ngt_grasps_per_object = {}\nseed = {}\n\n",
            d.grasps_per_object, d.surface_fraction, d.clouds_per_object, d.points, d.gt_grasps_per_object, d.seed
        );
        t += &format!(
            "[generator]\nT = {}\nbeta_trans = {},{}\nbeta_rot = {},{}\nvariance = {}\nrepr = {}\nkappa_mode = {}\nembedding_dim = {}\nsteps = {}\nlr = {}\nbatch = {}\nobjects_per_batch = {}\nseed = {}\ncloud_mix_ratio = {}\n\n",
            n.steps_t,
            n.beta_trans.0,
            n.beta_trans.1,
            n.beta_rot.0,
            n.beta_rot.1,
            n.variance.as_str(),
            n.repr,
            format_kappa_mode(&n.kappa_mode),
            n.embedding_dim,
            n.steps,
            n.lr,
            n.batch,
            n.objects_per_batch,
            n.seed,
            n.cloud_mix_ratio
        );
        t += &format!("[on_generator]\ngrasps_per_object = {}\nseed = {}\n\n", o.grasps_per_object, o.seed);
        t += &format!(
            "[discriminator]\nmode = {}\nsteps = {}\nlr = {}\nbatch = {}\noffline_weight = {}\nbalance_classes = {}\nseed = {}\n\n",
            c.mode, c.steps, c.lr, c.batch, c.offline_weight, c.balance_classes, c.seed
        );
        let batches: Vec<String> = e.sweep_batches.iter().map(|b| b.to_string()).collect();
        t += &format!(
            "[eval]\nbatch = {}\nthreshold = {}\ntop_k = {}\nthresholds = {}\nemd_subsample = {}\nemd_repeats = {}\nsweep_batches = {}\nsweep_thresholds = {}\nseed = {}\n\n",
            e.batch,
            e.threshold,
            e.top_k,
            join(&e.thresholds),
            e.emd_subsample,
            e.emd_repeats,
            batches.join(","),
            join(&e.sweep_thresholds),
            e.seed
        );
        t += &format!("[output]\ndir = {}\n", self.out_dir.display());
        t
    }
}

const SECTIONS: [&str; 8] = [
    "suite",
    "gripper",
    "data",
    "generator",
    "on_generator",
    "discriminator",
    "eval",
    "output",
];

fn num<T: FromStr>(v: &str) -> std::result::Result<T, String> {
    v.parse().map_err(|_| format!("cannot parse `{v}`"))
}

fn list(v: &str) -> Vec<String> {
    v.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect()
}

fn nums<T: FromStr>(v: &str) -> std::result::Result<Vec<T>, String> {
    list(v).iter().map(|s| num(s)).collect()
}

fn range(v: &str) -> std::result::Result<(f64, f64), String> {
    match nums::<f64>(v)?.as_slice() {
        [lo, hi] => Ok((*lo, *hi)),
        _ => Err(format!("expected `lo,hi`, got `{v}`")),
    }
}

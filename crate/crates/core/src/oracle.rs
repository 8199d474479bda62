//! Analytic grasp-success oracles and uniform candidate sampling.
//!
//! Gripper frame convention: the gripper approaches along `+z`; parallel
//! jaws close along `x` and the grasp origin is the midpoint of the closing
//! segment. Suction cups seal at the first surface hit along `+z`.

use std::f64::consts::PI;
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{fit_plane, triangle_box_overlap, Aabb};
use crate::rng::{derive_seed, rng};
use crate::se3::{GraspPose, PoseRecord, Rotation, Vec3};
use crate::shape::{SurfaceSampler, TriangleMesh};

pub const LABELED_SET_FORMAT: &str = "graspgen.labeled_grasps";
pub const LABELED_SET_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GripperKind {
    ParallelJaw,
    Suction,
}

impl fmt::Display for GripperKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GripperKind::ParallelJaw => "parallel_jaw",
            GripperKind::Suction => "suction",
        })
    }
}

impl std::str::FromStr for GripperKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "parallel_jaw" => Ok(GripperKind::ParallelJaw),
            "suction" => Ok(GripperKind::Suction),
            other => Err(Error::invalid(format!("unknown gripper kind `{other}`"))),
        }
    }
}

/// Geometry and contact parameters of a gripper (meters).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GripperModel {
    pub kind: GripperKind,
    /// Jaw opening.
    pub max_width: f64,
    /// Finger length along the approach axis.
    pub finger_depth: f64,
    pub finger_thickness: f64,
    /// Finger extent along the gripper `y` axis.
    pub finger_width: f64,
    pub palm_thickness: f64,
    pub friction_mu: f64,
    pub cup_radius: f64,
    /// Inflation applied to every gripper box in collision checks.
    pub collision_margin: f64,
}

impl GripperModel {
    /// Franka-like parallel jaw: 8 cm opening, 5 cm fingers.
    pub fn parallel_jaw() -> Self {
        GripperModel {
            kind: GripperKind::ParallelJaw,
            max_width: 0.08,
            finger_depth: 0.05,
            finger_thickness: 0.01,
            finger_width: 0.02,
            palm_thickness: 0.01,
            friction_mu: 0.5,
            cup_radius: 0.0,
            collision_margin: 0.001,
        }
    }

    /// 30 mm suction cup.
    pub fn suction() -> Self {
        GripperModel {
            kind: GripperKind::Suction,
            max_width: 0.0,
            finger_depth: 0.0,
            finger_thickness: 0.0,
            finger_width: 0.0,
            palm_thickness: 0.0,
            friction_mu: 0.5,
            cup_radius: 0.015,
            collision_margin: 0.001,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.friction_mu > 0.0 && self.friction_mu.is_finite()) {
            return Err(Error::invalid("friction_mu must be positive"));
        }
        match self.kind {
            GripperKind::ParallelJaw => {
                let dims = [
                    self.max_width,
                    self.finger_depth,
                    self.finger_thickness,
                    self.finger_width,
                    self.palm_thickness,
                ];
                if dims.iter().any(|d| !(*d > 0.0 && d.is_finite())) {
                    return Err(Error::invalid("parallel jaw dimensions must be positive"));
                }
            }
            GripperKind::Suction => {
                if !(self.cup_radius > 0.0 && self.cup_radius.is_finite()) {
                    return Err(Error::invalid("cup_radius must be positive"));
                }
            }
        }
        Ok(())
    }

    /// Gripper collision boxes as (center, half extents) in the gripper frame.
    pub fn collision_boxes(&self) -> Vec<(Vec3, Vec3)> {
        let m = self.collision_margin;
        let w = self.max_width;
        let ft = self.finger_thickness;
        let fd = self.finger_depth;
        let fw = self.finger_width;
        let pt = self.palm_thickness;
        let finger_half = Vec3::new(ft / 2.0 + m, fw / 2.0 + m, fd / 2.0 + m);
        // fingers sit just outside the opening so their inflated inner faces
        // bound a clear gap of exactly `max_width`
        let fx = w / 2.0 + m + ft / 2.0;
        vec![
            (Vec3::new(fx, 0.0, 0.0), finger_half),
            (Vec3::new(-fx, 0.0, 0.0), finger_half),
            (
                Vec3::new(0.0, 0.0, -fd / 2.0 - pt / 2.0),
                Vec3::new(fx + ft / 2.0 + m, fw / 2.0 + m, pt / 2.0 + m),
            ),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    Negative,
    Positive,
}

impl Label {
    pub fn is_positive(self) -> bool {
        self == Label::Positive
    }

    pub fn from_bool(positive: bool) -> Self {
        if positive {
            Label::Positive
        } else {
            Label::Negative
        }
    }

    pub fn as_u8(self) -> u8 {
        u8::from(self.is_positive())
    }
}

/// Anything that assigns ground-truth success labels to grasps.
pub trait GraspOracle {
    fn gripper(&self) -> &GripperModel;
    fn label(&self, mesh: &TriangleMesh, grasp: &GraspPose) -> Label;
}

/// Dispatches to [`label_antipodal`] or [`label_suction`] by gripper kind.
#[derive(Debug, Clone, Copy)]
pub struct AnalyticOracle {
    pub gripper: GripperModel,
}

impl AnalyticOracle {
    pub fn new(gripper: GripperModel) -> Result<Self> {
        gripper.validate()?;
        Ok(AnalyticOracle { gripper })
    }
}

impl GraspOracle for AnalyticOracle {
    fn gripper(&self) -> &GripperModel {
        &self.gripper
    }

    fn label(&self, mesh: &TriangleMesh, grasp: &GraspPose) -> Label {
        match self.gripper.kind {
            GripperKind::ParallelJaw => label_antipodal(mesh, grasp, &self.gripper),
            GripperKind::Suction => label_suction(mesh, grasp, &self.gripper),
        }
    }
}

/// Contacts found by closing the jaws along the gripper `x` axis.
#[derive(Debug, Clone, Copy)]
pub struct JawContacts {
    pub left: Vec3,
    pub left_normal: Vec3,
    pub right: Vec3,
    pub right_normal: Vec3,
}

/// First surface hits seen from each end of the closing segment, or `None`
/// when the segment misses or starts inside the object.
pub fn jaw_contacts(mesh: &TriangleMesh, grasp: &GraspPose, gripper: &GripperModel) -> Option<JawContacts> {
    let half = gripper.max_width / 2.0;
    let axis = grasp.transform_vector(&Vec3::x());
    let right_end = grasp.transform_point(&Vec3::new(half, 0.0, 0.0));
    let left_end = grasp.transform_point(&Vec3::new(-half, 0.0, 0.0));
    let right = mesh.raycast(&right_end, &(-axis), 0.0)?;
    let left = mesh.raycast(&left_end, &axis, 0.0)?;
    if right.t > gripper.max_width || left.t > gripper.max_width {
        return None;
    }
    // each finger must meet a face that looks back at it
    if right.normal.dot(&axis) <= 0.0 || left.normal.dot(&axis) >= 0.0 {
        return None;
    }
    if (right.point - left.point).dot(&axis) <= 0.0 {
        return None;
    }
    Some(JawContacts {
        left: left.point,
        left_normal: left.normal,
        right: right.point,
        right_normal: right.normal,
    })
}

/// Antipodal parallel-jaw test: two opposing contacts inside the closing
/// segment, both normals inside the friction cone, and no collision between
/// the open gripper (two fingers and palm) and the mesh.
pub fn label_antipodal(mesh: &TriangleMesh, grasp: &GraspPose, gripper: &GripperModel) -> Label {
    if gripper.kind != GripperKind::ParallelJaw || !grasp.is_finite() {
        return Label::Negative;
    }
    let Some(c) = jaw_contacts(mesh, grasp, gripper) else {
        return Label::Negative;
    };
    let axis = grasp.transform_vector(&Vec3::x());
    let cone = gripper.friction_mu.atan();
    let right_angle = c.right_normal.dot(&axis).clamp(-1.0, 1.0).acos();
    let left_angle = c.left_normal.dot(&(-axis)).clamp(-1.0, 1.0).acos();
    if right_angle > cone || left_angle > cone {
        return Label::Negative;
    }
    Label::from_bool(!gripper_collides(mesh, grasp, gripper))
}

/// True when any inflated gripper box touches the mesh surface or lies inside it.
pub fn gripper_collides(mesh: &TriangleMesh, grasp: &GraspPose, gripper: &GripperModel) -> bool {
    let local: Vec<Vec3> = mesh
        .vertices
        .iter()
        .map(|v| grasp.inverse_transform_point(v))
        .collect();
    let Some(bounds) = Aabb::from_points(&local) else {
        return false;
    };
    for (center, half) in gripper.collision_boxes() {
        let box_bounds = Aabb {
            min: center - half,
            max: center + half,
        };
        if !bounds.overlaps(&box_bounds) {
            continue;
        }
        let hit = mesh.triangles.iter().any(|t| {
            triangle_box_overlap(&half, [local[t[0]] - center, local[t[1]] - center, local[t[2]] - center])
        });
        if hit || point_inside(mesh, &grasp.transform_point(&center)) {
            return true;
        }
    }
    false
}

/// Ray-parity inside test along a fixed generic direction.
pub fn point_inside(mesh: &TriangleMesh, p: &Vec3) -> bool {
    let dir = Vec3::new(0.5773, 0.5774, 0.5775).normalize();
    let mut count = 0;
    let mut origin = *p;
    let mut travelled = 0.0;
    while let Some(hit) = mesh.raycast(&origin, &dir, 1e-12) {
        count += 1;
        travelled += hit.t;
        origin = hit.point;
        if count > mesh.triangles.len() || travelled > 1e6 {
            break;
        }
    }
    count % 2 == 1
}

const SUCTION_RIM_RAYS: usize = 16;
const SUCTION_INNER_RAYS: usize = 8;
const SUCTION_MAX_TILT_DEG: f64 = 15.0;
const SUCTION_FLATNESS: f64 = 0.1;

/// Geometry seen by a suction cup at a grasp pose.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SealGeometry {
    /// Distance from the cup center to the surface along the approach axis.
    pub standoff: f64,
    /// Angle between the approach axis and the inward surface normal (rad).
    pub tilt: f64,
    /// Max distance of the probed patch from its best-fit plane (m).
    pub deviation: f64,
}

/// Probes the patch under the cup with the center ray plus two rings of
/// parallel rays (at the rim and at half radius). `None` when any ray misses.
pub fn suction_seal(mesh: &TriangleMesh, grasp: &GraspPose, gripper: &GripperModel) -> Option<SealGeometry> {
    let r = gripper.cup_radius;
    let approach = grasp.transform_vector(&Vec3::z());
    let origin = grasp.translation;
    let hit = mesh.raycast(&origin, &approach, 0.0)?;
    let tilt = hit.normal.dot(&(-approach)).clamp(-1.0, 1.0).acos();
    let mut patch = vec![hit.point];
    let rings = [(r, SUCTION_RIM_RAYS), (0.5 * r, SUCTION_INNER_RAYS)];
    for (radius, count) in rings {
        for k in 0..count {
            let a = 2.0 * PI * k as f64 / count as f64;
            let offset = grasp.transform_vector(&Vec3::new(radius * a.cos(), radius * a.sin(), 0.0));
            let h = mesh.raycast(&(origin + offset), &approach, 0.0)?;
            patch.push(h.point);
        }
    }
    let (centroid, normal) = fit_plane(&patch)?;
    let deviation = patch
        .iter()
        .map(|p| (p - centroid).dot(&normal).abs())
        .fold(0.0, f64::max);
    Some(SealGeometry {
        standoff: hit.t,
        tilt,
        deviation,
    })
}

/// Seal model for a suction cup: the approach ray must reach the surface
/// within two cup radii, the surface normal must be within 15 degrees of the
/// approach, and the patch under the cup must deviate from its best-fit
/// plane by at most a tenth of the radius.
pub fn label_suction(mesh: &TriangleMesh, grasp: &GraspPose, gripper: &GripperModel) -> Label {
    if gripper.kind != GripperKind::Suction || !grasp.is_finite() {
        return Label::Negative;
    }
    let Some(seal) = suction_seal(mesh, grasp, gripper) else {
        return Label::Negative;
    };
    let r = gripper.cup_radius;
    Label::from_bool(
        seal.standoff <= 2.0 * r
            && seal.tilt <= SUCTION_MAX_TILT_DEG.to_radians()
            && seal.deviation <= SUCTION_FLATNESS * r,
    )
}

/// Region from which candidate translations are drawn: the mesh bounding box
/// grown by half the jaw opening (or one cup radius) on every side, so its
/// total extent grows by `max_width` (or `2 * cup_radius`).
pub fn proposal_region(mesh: &TriangleMesh, gripper: &GripperModel) -> Aabb {
    let margin = match gripper.kind {
        GripperKind::ParallelJaw => gripper.max_width / 2.0,
        GripperKind::Suction => gripper.cup_radius,
    };
    mesh.aabb().inflated(margin)
}

/// Uniform translations in [`proposal_region`] with Haar-uniform orientations.
pub fn sample_candidate_grasps(
    mesh: &TriangleMesh,
    n: usize,
    gripper: &GripperModel,
    seed: u64,
) -> Result<Vec<GraspPose>> {
    if n == 0 {
        return Err(Error::invalid("candidate count must be at least 1"));
    }
    let region = proposal_region(mesh, gripper);
    let mut rng = rng(seed);
    Ok((0..n)
        .map(|_| {
            let t = Vec3::from_fn(|i, _| rng.random_range(region.min[i]..=region.max[i]));
            GraspPose::new(Rotation::random(&mut rng), t)
        })
        .collect())
}

const SURFACE_TILT_DEG: f64 = 30.0;

fn random_unit(rng: &mut crate::rng::Rng) -> Vec3 {
    loop {
        let v = Vec3::from_fn(|_, _| rng.sample::<f64, _>(rand_distr::StandardNormal));
        let n = v.norm();
        if n > 1e-9 {
            return v / n;
        }
    }
}

fn random_perpendicular(axis: &Vec3, rng: &mut crate::rng::Rng) -> Vec3 {
    loop {
        let v = random_unit(rng);
        let p = v - axis * axis.dot(&v);
        if p.norm() > 1e-6 {
            return p.normalize();
        }
    }
}

/// `axis` tilted by a uniform angle in `[0, max_tilt]` towards a random direction.
fn tilted(axis: &Vec3, max_tilt: f64, rng: &mut crate::rng::Rng) -> Vec3 {
    let side = random_perpendicular(axis, rng);
    let a = rng.random_range(0.0..=max_tilt);
    (axis * a.cos() + side * a.sin()).normalize()
}

/// Proposals anchored at uniform surface points, so that a usable fraction
/// of them lands near a feasible contact.
///
/// Parallel jaw: the closing axis is the outward normal tilted by up to 30
/// degrees with a uniform roll about it. The closing line is moved along the
/// approach so that the side of the object facing the palm sits 2 to 25 mm
/// in front of the finger roots, and shifted up to 1 cm sideways; the origin is then placed on that
/// line so the chord it cuts through the object fits inside the opening.
/// Suction: the approach is the inward normal tilted by up to 30 degrees and
/// the cup starts up to 2.5 cup radii away from the surface.
pub fn sample_surface_proposals(
    mesh: &TriangleMesh,
    n: usize,
    gripper: &GripperModel,
    seed: u64,
) -> Result<Vec<GraspPose>> {
    if n == 0 {
        return Err(Error::invalid("candidate count must be at least 1"));
    }
    let sampler = SurfaceSampler::new(mesh)?;
    let mut rng = rng(seed);
    let max_tilt = SURFACE_TILT_DEG.to_radians();
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let (p, normal) = sampler.sample(&mut rng);
        let pose = match gripper.kind {
            GripperKind::ParallelJaw => {
                let x = tilted(&normal, max_tilt, &mut rng);
                let z = random_perpendicular(&x, &mut rng);
                let y = z.cross(&x);
                // keep the palm-facing side of the object clear of the palm
                let back = mesh
                    .vertices
                    .iter()
                    .map(|v| (v - p).dot(&z))
                    .fold(f64::INFINITY, f64::min);
                let along = back + gripper.finger_depth / 2.0 - rng.random_range(0.002..=0.025);
                let side = rng.random_range(-0.01..=0.01);
                let q = p + z * along + y * side;
                // centre the closing segment on the chord it cuts, when the chord fits
                let w = gripper.max_width;
                let chord = mesh
                    .raycast(&(q + x * w), &(-x), 0.0)
                    .zip(mesh.raycast(&(q - x * w), &x, 0.0))
                    .map(|(r, l)| (r.point.dot(&x), l.point.dot(&x)));
                let origin = match chord {
                    Some((right, left)) if right > left && right - left < w => {
                        let slack = (w - (right - left)) / 2.0;
                        q + x * ((right + left) / 2.0 - q.dot(&x) + rng.random_range(-slack..=slack))
                    }
                    _ => q - x * rng.random_range(0.0..=w / 2.0),
                };
                GraspPose::new(Rotation::from_matrix_unchecked(nalgebra::Matrix3::from_columns(&[x, y, z])), origin)
            }
            GripperKind::Suction => {
                let z = tilted(&(-normal), max_tilt, &mut rng);
                let x = random_perpendicular(&z, &mut rng);
                let y = z.cross(&x);
                let standoff = rng.random_range(0.0..=2.5 * gripper.cup_radius);
                GraspPose::new(
                    Rotation::from_matrix_unchecked(nalgebra::Matrix3::from_columns(&[x, y, z])),
                    p - z * standoff,
                )
            }
        };
        out.push(pose);
    }
    Ok(out)
}

/// How offline candidates are proposed: a `surface_fraction` share comes
/// from [`sample_surface_proposals`], the rest from [`sample_candidate_grasps`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProposalMix {
    pub surface_fraction: f64,
}

impl Default for ProposalMix {
    fn default() -> Self {
        ProposalMix { surface_fraction: 0.75 }
    }
}

impl ProposalMix {
    pub fn uniform() -> Self {
        ProposalMix { surface_fraction: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.surface_fraction) {
            return Err(Error::invalid("surface_fraction must lie in [0, 1]"));
        }
        Ok(())
    }

    /// Uniform proposals first, then surface-anchored ones.
    pub fn propose(&self, mesh: &TriangleMesh, n: usize, gripper: &GripperModel, seed: u64) -> Result<Vec<GraspPose>> {
        self.validate()?;
        if n == 0 {
            return Err(Error::invalid("candidate count must be at least 1"));
        }
        let n_surface = (n as f64 * self.surface_fraction).round() as usize;
        let mut out = Vec::with_capacity(n);
        if n_surface < n {
            out.extend(sample_candidate_grasps(mesh, n - n_surface, gripper, derive_seed(seed, "uniform", 0))?);
        }
        if n_surface > 0 {
            out.extend(sample_surface_proposals(mesh, n_surface, gripper, derive_seed(seed, "surface", 0))?);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    #[default]
    Offline,
    OnGenerator,
    Mixed,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Provenance::Offline => "offline",
            Provenance::OnGenerator => "on_generator",
            Provenance::Mixed => "mixed",
        })
    }
}

impl std::str::FromStr for Provenance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "offline" => Ok(Provenance::Offline),
            "on_generator" => Ok(Provenance::OnGenerator),
            "mixed" => Ok(Provenance::Mixed),
            other => Err(Error::invalid(format!("unknown provenance `{other}`"))),
        }
    }
}

/// Grasps of one object with binary success labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledGraspSet {
    pub object_id: String,
    pub gripper: GripperModel,
    pub provenance: Provenance,
    pub grasps: Vec<GraspPose>,
    pub labels: Vec<Label>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SetHeader {
    format: String,
    version: u32,
    object_id: String,
    provenance: Provenance,
    oracle: GripperModel,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraspRecord {
    pub object_id: String,
    pub gripper: GripperKind,
    pub quat_wxyz: [f64; 4],
    pub trans: [f64; 3],
    pub label: u8,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub score: Option<f64>,
}

impl LabeledGraspSet {
    pub fn new(
        object_id: impl Into<String>,
        gripper: GripperModel,
        provenance: Provenance,
        grasps: Vec<GraspPose>,
        labels: Vec<Label>,
    ) -> Result<Self> {
        if grasps.len() != labels.len() {
            return Err(Error::invalid("grasp and label counts differ"));
        }
        Ok(LabeledGraspSet {
            object_id: object_id.into(),
            gripper,
            provenance,
            grasps,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.grasps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grasps.is_empty()
    }

    pub fn positives(&self) -> Vec<GraspPose> {
        self.filter(Label::Positive)
    }

    pub fn negatives(&self) -> Vec<GraspPose> {
        self.filter(Label::Negative)
    }

    fn filter(&self, want: Label) -> Vec<GraspPose> {
        self.grasps
            .iter()
            .zip(&self.labels)
            .filter(|(_, &l)| l == want)
            .map(|(g, _)| *g)
            .collect()
    }

    pub fn positive_count(&self) -> usize {
        self.labels.iter().filter(|l| l.is_positive()).count()
    }

    pub fn positive_rate(&self) -> f64 {
        if self.is_empty() {
            0.0
        } else {
            self.positive_count() as f64 / self.len() as f64
        }
    }

    /// JSON-lines text: a header line, then one record per grasp.
    pub fn to_jsonl(&self, scores: Option<&[f64]>) -> Result<String> {
        let header = SetHeader {
            format: LABELED_SET_FORMAT.to_string(),
            version: LABELED_SET_VERSION,
            object_id: self.object_id.clone(),
            provenance: self.provenance,
            oracle: self.gripper,
        };
        let mut out = serde_json::to_string(&header)?;
        out.push('\n');
        for (i, (g, l)) in self.grasps.iter().zip(&self.labels).enumerate() {
            let pose = PoseRecord::from(g);
            let rec = GraspRecord {
                object_id: self.object_id.clone(),
                gripper: self.gripper.kind,
                quat_wxyz: pose.quat_wxyz,
                trans: pose.trans,
                label: l.as_u8(),
                score: scores.map(|s| s[i]),
            };
            out.push_str(&serde_json::to_string(&rec)?);
            out.push('\n');
        }
        Ok(out)
    }

    /// Parses [`LabeledGraspSet::to_jsonl`] output; returns scores when present.
    pub fn from_jsonl(reader: impl BufRead) -> Result<(Self, Option<Vec<f64>>)> {
        let mut lines = reader.lines();
        let header_line = lines.next().ok_or_else(|| Error::format("empty grasp set file"))??;
        let header: SetHeader = serde_json::from_str(&header_line)?;
        if header.format != LABELED_SET_FORMAT || header.version != LABELED_SET_VERSION {
            return Err(Error::format(format!(
                "unsupported grasp set format {} v{}",
                header.format, header.version
            )));
        }
        let mut grasps = Vec::new();
        let mut labels = Vec::new();
        let mut scores = Vec::new();
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: GraspRecord = serde_json::from_str(&line)?;
            grasps.push(GraspPose::try_from(&PoseRecord {
                quat_wxyz: rec.quat_wxyz,
                trans: rec.trans,
            })?);
            labels.push(match rec.label {
                0 => Label::Negative,
                1 => Label::Positive,
                other => return Err(Error::format(format!("label must be 0 or 1, got {other}"))),
            });
            if let Some(s) = rec.score {
                scores.push(s);
            }
        }
        let scores = match scores.len() {
            0 => None,
            n if n == grasps.len() => Some(scores),
            _ => return Err(Error::format("score present on only some records")),
        };
        let set = LabeledGraspSet::new(header.object_id, header.oracle, header.provenance, grasps, labels)?;
        Ok((set, scores))
    }

    pub fn save(&self, path: &Path, scores: Option<&[f64]>) -> Result<()> {
        crate::io::write_atomic(path, self.to_jsonl(scores)?.as_bytes())
    }

    pub fn load(path: &Path) -> Result<(Self, Option<Vec<f64>>)> {
        let f = std::fs::File::open(path)?;
        LabeledGraspSet::from_jsonl(std::io::BufReader::new(f))
    }
}

/// Labels `grasps` with the oracle.
pub fn label_all(oracle: &dyn GraspOracle, mesh: &TriangleMesh, grasps: &[GraspPose]) -> Vec<Label> {
    grasps.iter().map(|g| oracle.label(mesh, g)).collect()
}

/// Per-object summary line of a dataset build.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SetSummary {
    pub object_id: String,
    pub count: usize,
    pub positives: usize,
    pub positive_rate: f64,
    /// Objects without positives are kept (their negatives remain useful).
    pub no_positives: bool,
}

pub fn summarize(sets: &[LabeledGraspSet]) -> Vec<SetSummary> {
    sets.iter()
        .map(|s| SetSummary {
            object_id: s.object_id.clone(),
            count: s.len(),
            positives: s.positive_count(),
            positive_rate: s.positive_rate(),
            no_positives: s.positive_count() == 0,
        })
        .collect()
}

pub fn write_summary_csv(w: &mut impl Write, summary: &[SetSummary]) -> Result<()> {
    writeln!(w, "object_id,count,positives,positive_rate,no_positives")?;
    for s in summary {
        writeln!(
            w,
            "{},{},{},{},{}",
            s.object_id, s.count, s.positives, s.positive_rate, s.no_positives
        )?;
    }
    Ok(())
}

/// Samples and labels `n_per_object` proposals for every object.
///
/// Each object uses its own seed derived from `seed` and its index.
pub fn build_offline_dataset(
    objects: &[(String, TriangleMesh)],
    gripper: &GripperModel,
    n_per_object: usize,
    mix: &ProposalMix,
    seed: u64,
) -> Result<Vec<LabeledGraspSet>> {
    if n_per_object == 0 {
        return Err(Error::invalid("n_per_object must be at least 1"));
    }
    let oracle = AnalyticOracle::new(*gripper)?;
    objects
        .iter()
        .enumerate()
        .map(|(i, (id, mesh))| {
            let grasps = mix.propose(mesh, n_per_object, gripper, derive_seed(seed, "offline", i as u64))?;
            let labels = label_all(&oracle, mesh, &grasps);
            LabeledGraspSet::new(id.clone(), *gripper, Provenance::Offline, grasps, labels)
        })
        .collect()
}

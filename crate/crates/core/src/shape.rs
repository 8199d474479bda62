//! Parametric object meshes, point clouds and training-time augmentation.
//!
//! Meshes are stored as ASCII OFF. Clouds use a small binary container:
//!
//! ```text
//! offset  size  field
//! 0       4     magic "GGPC"
//! 4       4     version (u32 LE, currently 1)
//! 8       8     point count N (u64 LE)
//! 16      24    centroid recorded at centering time (3 x f64 LE)
//! 40      24*N  points (x, y, z f64 LE)
//! ```

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::Path;

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{closest_point_on_triangle, ray_triangle, Aabb};
use crate::rng::{rng, Rng};
use crate::se3::{GraspPose, Rotation, Vec3};

const MIN_TRIANGLE_AREA: f64 = 1e-12;
const CLOUD_MAGIC: &[u8; 4] = b"GGPC";
const CLOUD_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[usize; 3]>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayHit {
    pub t: f64,
    pub triangle: usize,
    pub point: Vec3,
    /// Outward unit normal of the hit triangle.
    pub normal: Vec3,
}

impl TriangleMesh {
    /// Validates index ranges and rejects degenerate triangles.
    pub fn new(vertices: Vec<Vec3>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        if vertices.iter().any(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(Error::invalid("mesh has non-finite vertices"));
        }
        for (i, t) in triangles.iter().enumerate() {
            if t.iter().any(|&k| k >= vertices.len()) {
                return Err(Error::invalid(format!("triangle {i} indexes past the vertex list")));
            }
        }
        let mesh = TriangleMesh {
            vertices,
            triangles,
        };
        if let Some(i) = (0..mesh.triangles.len()).find(|&i| mesh.triangle_area(i) <= MIN_TRIANGLE_AREA) {
            return Err(Error::invalid(format!("triangle {i} is degenerate")));
        }
        Ok(mesh)
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn triangle(&self, i: usize) -> [Vec3; 3] {
        let [a, b, c] = self.triangles[i];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn triangle_area(&self, i: usize) -> f64 {
        let [a, b, c] = self.triangle(i);
        0.5 * (b - a).cross(&(c - a)).norm()
    }

    pub fn area(&self) -> f64 {
        (0..self.triangles.len()).map(|i| self.triangle_area(i)).sum()
    }

    /// Signed volume via the divergence theorem; positive for outward winding.
    pub fn volume(&self) -> f64 {
        (0..self.triangles.len())
            .map(|i| {
                let [a, b, c] = self.triangle(i);
                a.dot(&b.cross(&c)) / 6.0
            })
            .sum()
    }

    pub fn normal(&self, i: usize) -> Vec3 {
        let [a, b, c] = self.triangle(i);
        (b - a).cross(&(c - a)).normalize()
    }

    pub fn aabb(&self) -> Aabb {
        Aabb::from_points(&self.vertices).unwrap_or(Aabb {
            min: Vec3::zeros(),
            max: Vec3::zeros(),
        })
    }

    /// Sphere around the bounding-box center enclosing every vertex.
    pub fn bounding_sphere(&self) -> (Vec3, f64) {
        let c = self.aabb().center();
        let r = self
            .vertices
            .iter()
            .map(|v| (v - c).norm())
            .fold(0.0, f64::max);
        (c, r)
    }

    /// Every undirected edge is shared by exactly two triangles, with
    /// opposite orientation.
    pub fn is_watertight(&self) -> bool {
        use std::collections::HashMap;
        let mut directed: HashMap<(usize, usize), usize> = HashMap::new();
        for t in &self.triangles {
            for k in 0..3 {
                *directed.entry((t[k], t[(k + 1) % 3])).or_default() += 1;
            }
        }
        !self.triangles.is_empty()
            && directed
                .iter()
                .all(|(&(a, b), &n)| n == 1 && directed.get(&(b, a)) == Some(&1))
    }

    /// Nearest intersection along `origin + t * dir` with `t > t_min`.
    pub fn raycast(&self, origin: &Vec3, dir: &Vec3, t_min: f64) -> Option<RayHit> {
        let mut best: Option<(f64, usize)> = None;
        for (i, tri) in self.triangles.iter().enumerate() {
            let verts = [&self.vertices[tri[0]], &self.vertices[tri[1]], &self.vertices[tri[2]]];
            if let Some(t) = ray_triangle(origin, dir, verts, t_min) {
                if best.is_none_or(|(bt, _)| t < bt) {
                    best = Some((t, i));
                }
            }
        }
        best.map(|(t, i)| RayHit {
            t,
            triangle: i,
            point: origin + dir * t,
            normal: self.normal(i),
        })
    }

    /// Closest surface point and its distance.
    pub fn closest_point(&self, p: &Vec3) -> Option<(Vec3, f64)> {
        self.triangles
            .iter()
            .map(|t| {
                let q = closest_point_on_triangle(
                    p,
                    &self.vertices[t[0]],
                    &self.vertices[t[1]],
                    &self.vertices[t[2]],
                );
                (q, (q - p).norm())
            })
            .min_by(|a, b| a.1.total_cmp(&b.1))
    }

    pub fn distance_to_point(&self, p: &Vec3) -> f64 {
        self.closest_point(p).map_or(f64::INFINITY, |(_, d)| d)
    }

    /// Applies a rigid transform to every vertex.
    pub fn transformed(&self, pose: &GraspPose) -> TriangleMesh {
        TriangleMesh {
            vertices: self.vertices.iter().map(|v| pose.transform_point(v)).collect(),
            triangles: self.triangles.clone(),
        }
    }

    pub fn to_off(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "OFF");
        let _ = writeln!(s, "{} {} 0", self.vertices.len(), self.triangles.len());
        for v in &self.vertices {
            let _ = writeln!(s, "{} {} {}", v.x, v.y, v.z);
        }
        for t in &self.triangles {
            let _ = writeln!(s, "3 {} {} {}", t[0], t[1], t[2]);
        }
        s
    }

    /// Parses ASCII OFF; polygonal faces are fan-triangulated.
    pub fn from_off(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .map(|l| l.split('#').next().unwrap_or("").trim())
            .filter(|l| !l.is_empty());
        let header = lines.next().ok_or_else(|| Error::format("empty OFF file"))?;
        let counts_line = if header == "OFF" {
            lines.next().ok_or_else(|| Error::format("OFF file missing counts"))?
        } else if let Some(rest) = header.strip_prefix("OFF") {
            rest
        } else {
            return Err(Error::format("missing OFF header"));
        };
        let counts = parse_numbers::<usize>(counts_line)?;
        if counts.len() < 2 {
            return Err(Error::format("OFF counts line needs vertex and face counts"));
        }
        let (nv, nf) = (counts[0], counts[1]);
        let mut vertices = Vec::with_capacity(nv);
        for _ in 0..nv {
            let line = lines.next().ok_or_else(|| Error::format("OFF file truncated in vertices"))?;
            let c = parse_numbers::<f64>(line)?;
            if c.len() < 3 {
                return Err(Error::format("OFF vertex needs 3 coordinates"));
            }
            vertices.push(Vec3::new(c[0], c[1], c[2]));
        }
        let mut triangles = Vec::with_capacity(nf);
        for _ in 0..nf {
            let line = lines.next().ok_or_else(|| Error::format("OFF file truncated in faces"))?;
            let f = parse_numbers::<usize>(line)?;
            let k = *f.first().ok_or_else(|| Error::format("empty OFF face"))?;
            if k < 3 || f.len() < k + 1 {
                return Err(Error::format("malformed OFF face"));
            }
            for j in 1..k - 1 {
                triangles.push([f[1], f[j + 1], f[j + 2]]);
            }
        }
        TriangleMesh::new(vertices, triangles)
    }

    pub fn save_off(&self, path: &Path) -> Result<()> {
        crate::io::write_atomic(path, self.to_off().as_bytes())
    }

    pub fn load_off(path: &Path) -> Result<Self> {
        TriangleMesh::from_off(&std::fs::read_to_string(path)?)
    }
}

fn parse_numbers<T: std::str::FromStr>(line: &str) -> Result<Vec<T>> {
    line.split_whitespace()
        .map(|w| w.parse::<T>().map_err(|_| Error::format(format!("bad number `{w}` in OFF"))))
        .collect()
}

/// Parametric primitives; dimensions in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Primitive {
    Box { x: f64, y: f64, z: f64 },
    Cylinder { radius: f64, height: f64 },
    Sphere { radius: f64 },
    /// Cylinder of the given height capped by two hemispheres.
    CappedComposite { radius: f64, height: f64 },
}

impl Primitive {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Primitive::Box { .. } => "box",
            Primitive::Cylinder { .. } => "cylinder",
            Primitive::Sphere { .. } => "sphere",
            Primitive::CappedComposite { .. } => "capped_composite",
        }
    }

    fn dims(&self) -> Vec<f64> {
        match *self {
            Primitive::Box { x, y, z } => vec![x, y, z],
            Primitive::Cylinder { radius, height } => vec![radius, height],
            Primitive::Sphere { radius } => vec![radius],
            Primitive::CappedComposite { radius, height } => vec![radius, height],
        }
    }
}

/// Builds a watertight, outward-wound mesh centered on its bounding box.
///
/// `resolution` is the number of segments around round profiles (and twice
/// the number of latitude bands on spheres and caps).
pub fn make_primitive(shape: &Primitive, resolution: usize) -> Result<TriangleMesh> {
    if shape.dims().iter().any(|d| !(d.is_finite() && *d > 0.0)) {
        return Err(Error::invalid(format!("{} needs positive dimensions", shape.kind_name())));
    }
    if resolution < 8 {
        return Err(Error::invalid("resolution must be at least 8 segments"));
    }
    let mesh = match *shape {
        Primitive::Box { x, y, z } => box_mesh(x, y, z),
        Primitive::Cylinder { radius, height } => {
            let h = height / 2.0;
            lathe(&[(0.0, -h), (radius, -h), (radius, h), (0.0, h)], resolution)
        }
        Primitive::Sphere { radius } => lathe(&hemisphere_profile(radius, resolution, 0.0, 0.0), resolution),
        Primitive::CappedComposite { radius, height } => {
            lathe(&hemisphere_profile(radius, resolution, -height / 2.0, height / 2.0), resolution)
        }
    }?;
    let c = mesh.aabb().center();
    Ok(TriangleMesh {
        vertices: mesh.vertices.iter().map(|v| v - c).collect(),
        triangles: mesh.triangles,
    })
}

fn box_mesh(x: f64, y: f64, z: f64) -> Result<TriangleMesh> {
    let (hx, hy, hz) = (x / 2.0, y / 2.0, z / 2.0);
    let vertices = (0..8)
        .map(|i| {
            Vec3::new(
                if i & 1 == 0 { -hx } else { hx },
                if i & 2 == 0 { -hy } else { hy },
                if i & 4 == 0 { -hz } else { hz },
            )
        })
        .collect();
    let triangles = vec![
        [0, 2, 3], [0, 3, 1], // -z
        [4, 5, 7], [4, 7, 6], // +z
        [0, 1, 5], [0, 5, 4], // -y
        [2, 6, 7], [2, 7, 3], // +y
        [0, 4, 6], [0, 6, 2], // -x
        [1, 3, 7], [1, 7, 5], // +x
    ];
    TriangleMesh::new(vertices, triangles)
}

/// (radius, z) profile of a sphere split at the equator into two caps centered
/// at `z_lo` and `z_hi`; equal centers give a plain sphere.
fn hemisphere_profile(r: f64, resolution: usize, z_lo: f64, z_hi: f64) -> Vec<(f64, f64)> {
    let bands = (resolution / 4).max(2);
    let mut profile = Vec::new();
    for i in 0..=bands {
        let phi = PI / 2.0 * i as f64 / bands as f64;
        profile.push((r * phi.sin(), z_lo - r * phi.cos()));
    }
    let start = if z_lo == z_hi { 1 } else { 0 };
    for i in start..=bands {
        let phi = PI / 2.0 * i as f64 / bands as f64;
        profile.push((r * phi.cos(), z_hi + r * phi.sin()));
    }
    profile
}

/// Surface of revolution about z. The profile runs bottom to top and must
/// start and end on the axis (radius 0).
fn lathe(profile: &[(f64, f64)], segments: usize) -> Result<TriangleMesh> {
    let rings = &profile[1..profile.len() - 1];
    let mut vertices = vec![Vec3::new(0.0, 0.0, profile[0].1)];
    for &(r, z) in rings {
        for j in 0..segments {
            let a = 2.0 * PI * j as f64 / segments as f64;
            vertices.push(Vec3::new(r * a.cos(), r * a.sin(), z));
        }
    }
    let top = vertices.len();
    vertices.push(Vec3::new(0.0, 0.0, profile[profile.len() - 1].1));

    let ring = |i: usize, j: usize| 1 + i * segments + j % segments;
    let mut triangles = Vec::new();
    for j in 0..segments {
        triangles.push([ring(0, j + 1), ring(0, j), 0]);
    }
    for i in 0..rings.len() - 1 {
        for j in 0..segments {
            triangles.push([ring(i, j), ring(i, j + 1), ring(i + 1, j)]);
            triangles.push([ring(i, j + 1), ring(i + 1, j + 1), ring(i + 1, j)]);
        }
    }
    let last = rings.len() - 1;
    for j in 0..segments {
        triangles.push([ring(last, j), ring(last, j + 1), top]);
    }
    TriangleMesh::new(vertices, triangles)
}

/// A set of 3D points plus the centroid removed by [`PointCloud::mean_center`].
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Vec3>,
    pub centroid: Vec3,
}

impl PointCloud {
    pub fn new(points: Vec<Vec3>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::invalid("point cloud must contain at least one point"));
        }
        if points.iter().any(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(Error::invalid("point cloud has non-finite points"));
        }
        Ok(PointCloud {
            points,
            centroid: Vec3::zeros(),
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn mean(&self) -> Vec3 {
        self.points.iter().fold(Vec3::zeros(), |acc, p| acc + p) / self.points.len() as f64
    }

    /// Subtracts the mean and accumulates it into `centroid`.
    pub fn mean_center(&mut self) {
        let m = self.mean();
        for p in &mut self.points {
            *p -= m;
        }
        self.centroid += m;
    }

    pub fn mean_centered(mut self) -> Self {
        self.mean_center();
        self
    }

    /// Points back in the frame they had before centering.
    pub fn uncentered_points(&self) -> Vec<Vec3> {
        self.points.iter().map(|p| p + self.centroid).collect()
    }

    pub fn translated(&self, delta: &Vec3) -> PointCloud {
        PointCloud {
            points: self.points.iter().map(|p| p + delta).collect(),
            centroid: self.centroid,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(40 + 24 * self.points.len());
        out.extend_from_slice(CLOUD_MAGIC);
        out.extend_from_slice(&CLOUD_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.points.len() as u64).to_le_bytes());
        for v in std::iter::once(&self.centroid).chain(&self.points) {
            for c in v.iter() {
                out.extend_from_slice(&c.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = bytes;
        let mut head = [0u8; 16];
        r.read_exact(&mut head).map_err(|_| Error::format("cloud file shorter than header"))?;
        if &head[0..4] != CLOUD_MAGIC {
            return Err(Error::format("bad cloud magic"));
        }
        let version = u32::from_le_bytes(head[4..8].try_into().unwrap_or_default());
        if version != CLOUD_VERSION {
            return Err(Error::format(format!("unsupported cloud version {version}")));
        }
        let n = u64::from_le_bytes(head[8..16].try_into().unwrap_or_default()) as usize;
        if r.len() != 24 * (n + 1) {
            return Err(Error::format("cloud payload length does not match header"));
        }
        let vals: Vec<f64> = r
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap_or_default()))
            .collect();
        let mut pts = vals.chunks_exact(3).map(|c| Vec3::new(c[0], c[1], c[2]));
        let centroid = pts.next().ok_or_else(|| Error::format("missing centroid"))?;
        let mut cloud = PointCloud::new(pts.collect())?;
        cloud.centroid = centroid;
        Ok(cloud)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut buf = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut buf)?;
        PointCloud::from_bytes(&buf)
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(&self.to_bytes())?;
        Ok(())
    }
}

/// Area-weighted surface sampler.
#[derive(Debug, Clone)]
pub struct SurfaceSampler<'a> {
    mesh: &'a TriangleMesh,
    cumulative: Vec<f64>,
    total: f64,
}

impl<'a> SurfaceSampler<'a> {
    pub fn new(mesh: &'a TriangleMesh) -> Result<Self> {
        if mesh.is_empty() {
            return Err(Error::invalid("cannot sample an empty mesh"));
        }
        let mut cumulative = Vec::with_capacity(mesh.triangles.len());
        let mut total = 0.0;
        for i in 0..mesh.triangles.len() {
            total += mesh.triangle_area(i);
            cumulative.push(total);
        }
        Ok(SurfaceSampler { mesh, cumulative, total })
    }

    /// A uniform surface point and the outward normal of its triangle.
    pub fn sample(&self, rng: &mut Rng) -> (Vec3, Vec3) {
        let u = rng.random::<f64>() * self.total;
        let i = self.cumulative.partition_point(|&c| c <= u).min(self.cumulative.len() - 1);
        let [a, b, c] = self.mesh.triangle(i);
        let r1 = rng.random::<f64>().sqrt();
        let r2 = rng.random::<f64>();
        (a * (1.0 - r1) + b * (r1 * (1.0 - r2)) + c * (r1 * r2), self.mesh.normal(i))
    }
}

/// Area-weighted uniform sampling of the mesh surface.
pub fn sample_surface(mesh: &TriangleMesh, n: usize, seed: u64) -> Result<PointCloud> {
    let sampler = SurfaceSampler::new(mesh)?;
    if n == 0 {
        return Err(Error::invalid("sample count must be at least 1"));
    }
    let mut rng = rng(seed);
    PointCloud::new((0..n).map(|_| sampler.sample(&mut rng).0).collect())
}

/// Single-view cloud: one point per camera ray that hits the mesh.
///
/// The camera looks at the bounding-sphere center; rays pass through a
/// `width x height` grid on the plane through that center, spanning the
/// bounding-sphere diameter.
pub fn render_partial(
    mesh: &TriangleMesh,
    camera: &Vec3,
    width: usize,
    height: usize,
) -> Result<PointCloud> {
    if width < 2 || height < 2 {
        return Err(Error::invalid("image grid must be at least 2x2"));
    }
    let (center, radius) = mesh.bounding_sphere();
    let offset = center - camera;
    if offset.norm() <= radius {
        return Err(Error::invalid("camera must lie outside the bounding sphere"));
    }
    let forward = offset.normalize();
    let helper = if forward.z.abs() < 0.9 { Vec3::z() } else { Vec3::x() };
    let right = forward.cross(&helper).normalize();
    let up = right.cross(&forward);
    let mut points = Vec::new();
    for iy in 0..height {
        let v = -radius + 2.0 * radius * iy as f64 / (height - 1) as f64;
        for ix in 0..width {
            let u = -radius + 2.0 * radius * ix as f64 / (width - 1) as f64;
            let target = center + right * u + up * v;
            let dir = (target - camera).normalize();
            if let Some(hit) = mesh.raycast(camera, &dir, 0.0) {
                points.push(hit.point);
            }
        }
    }
    if points.is_empty() {
        return Err(Error::EmptyView);
    }
    PointCloud::new(points)
}

/// Uniform direction on the upper hemisphere (`z >= 0`) scaled to
/// `radius_factor` times the bounding-sphere radius.
pub fn random_viewpoint(mesh: &TriangleMesh, radius_factor: f64, rng: &mut Rng) -> Vec3 {
    let (center, radius) = mesh.bounding_sphere();
    let mut d = Vec3::new(
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
    );
    while d.norm() < 1e-9 {
        d = Vec3::new(rng.sample(StandardNormal), rng.sample(StandardNormal), 1.0);
    }
    d.z = d.z.abs();
    center + d.normalize() * (radius_factor * radius)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    pub random_so3: bool,
    /// Keep this many points (without replacement); `None` keeps all.
    pub subsample_n: Option<usize>,
    /// Random camera viewpoints rendered per object when assembling clouds.
    pub viewpoint_count: usize,
    pub outlier_fraction: f64,
    /// Minimum distance of injected outliers from the mesh surface (m).
    pub outlier_offset: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            random_so3: false,
            subsample_n: None,
            viewpoint_count: 0,
            outlier_fraction: 0.0,
            outlier_offset: 0.0,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self, source_n: usize) -> Result<()> {
        if !(0.0..=0.2).contains(&self.outlier_fraction) {
            return Err(Error::invalid("outlier_fraction must lie in [0, 0.2]"));
        }
        if !(self.outlier_offset >= 0.0 && self.outlier_offset.is_finite()) {
            return Err(Error::invalid("outlier_offset must be a finite non-negative distance"));
        }
        if let Some(n) = self.subsample_n {
            if n == 0 || n > source_n {
                return Err(Error::invalid(format!(
                    "subsample_n {n} must be in 1..={source_n}"
                )));
            }
        }
        Ok(())
    }
}

/// Augmented cloud together with the rotation applied about its centroid.
#[derive(Debug, Clone)]
pub struct Augmented {
    pub cloud: PointCloud,
    pub rotation: Rotation,
}

pub fn augment(cloud: &PointCloud, cfg: &AugmentConfig, mesh: &TriangleMesh, seed: u64) -> Result<PointCloud> {
    augment_tracked(cloud, cfg, mesh, seed).map(|a| a.cloud)
}

/// Mean-center, optionally rotate, subsample, then inject outliers.
///
/// `mesh` must be in the frame of the incoming cloud's uncentered points.
/// Outliers are placed beyond the nearest face of the mesh bounding box,
/// `outlier_offset` to `2 * outlier_offset` outside it, which bounds their
/// distance from the surface from below.
pub fn augment_tracked(
    cloud: &PointCloud,
    cfg: &AugmentConfig,
    mesh: &TriangleMesh,
    seed: u64,
) -> Result<Augmented> {
    cfg.validate(cloud.len())?;
    let mut rng = rng(seed);
    let mut out = cloud.clone().mean_centered();
    let rotation = if cfg.random_so3 {
        Rotation::random(&mut rng)
    } else {
        Rotation::identity()
    };
    if cfg.random_so3 {
        for p in &mut out.points {
            *p = rotation.apply(p);
        }
    }
    if let Some(n) = cfg.subsample_n {
        if n < out.len() {
            let mut idx = rand::seq::index::sample(&mut rng, out.len(), n).into_vec();
            idx.sort_unstable();
            out.points = idx.into_iter().map(|i| out.points[i]).collect();
        }
    }
    let n_out = (cfg.outlier_fraction * out.len() as f64).ceil() as usize;
    if n_out > 0 && !mesh.is_empty() {
        let bounds = mesh.aabb();
        let inv = rotation.transpose();
        let base = out.points.clone();
        for _ in 0..n_out {
            let p = base[rng.random_range(0..base.len())];
            let p_obj = inv.apply(&p) + out.centroid;
            let (axis, upper) = nearest_face(&bounds, &p_obj);
            let push = cfg.outlier_offset * (1.0 + rng.random::<f64>());
            let mut q = p_obj;
            q[axis] = if upper {
                bounds.max[axis] + push
            } else {
                bounds.min[axis] - push
            };
            out.points.push(rotation.apply(&(q - out.centroid)));
        }
    }
    Ok(Augmented {
        cloud: out,
        rotation,
    })
}

fn nearest_face(b: &Aabb, p: &Vec3) -> (usize, bool) {
    let mut best = (0, false, f64::INFINITY);
    for axis in 0..3 {
        let lo = (p[axis] - b.min[axis]).abs();
        let hi = (b.max[axis] - p[axis]).abs();
        if lo < best.2 {
            best = (axis, false, lo);
        }
        if hi < best.2 {
            best = (axis, true, hi);
        }
    }
    (best.0, best.1)
}

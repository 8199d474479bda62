//! Seeded suites of primitive objects and the point clouds observed of them.

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng};
use crate::se3::Vec3;
use crate::shape::{make_primitive, random_viewpoint, render_partial, sample_surface, PointCloud, Primitive, TriangleMesh};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrimitiveKind {
    Box,
    Cylinder,
    Sphere,
    CappedComposite,
}

impl PrimitiveKind {
    pub const ALL: [PrimitiveKind; 4] = [
        PrimitiveKind::Box,
        PrimitiveKind::Cylinder,
        PrimitiveKind::Sphere,
        PrimitiveKind::CappedComposite,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PrimitiveKind::Box => "box",
            PrimitiveKind::Cylinder => "cylinder",
            PrimitiveKind::Sphere => "sphere",
            PrimitiveKind::CappedComposite => "capped_composite",
        }
    }
}

impl std::str::FromStr for PrimitiveKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PrimitiveKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown primitive kind `{s}`")))
    }
}

/// Object `i` of a suite has kind `kinds[i % kinds.len()]` and dimensions
/// drawn uniformly from the ranges below.
#[derive(Debug, Clone, PartialEq)]
pub struct SuiteSpec {
    pub count: usize,
    pub kinds: Vec<PrimitiveKind>,
    /// Box edge lengths.
    pub box_edge: (f64, f64),
    /// Radius of cylinders and capped composites.
    pub radius: (f64, f64),
    /// Height of cylinders and of the straight part of capped composites.
    pub height: (f64, f64),
    pub sphere_radius: (f64, f64),
    pub resolution: usize,
    pub seed: u64,
}

impl Default for SuiteSpec {
    fn default() -> Self {
        SuiteSpec {
            count: 16,
            kinds: PrimitiveKind::ALL.to_vec(),
            box_edge: (0.03, 0.06),
            radius: (0.015, 0.025),
            height: (0.04, 0.08),
            sphere_radius: (0.018, 0.026),
            resolution: 16,
            seed: 0,
        }
    }
}

impl SuiteSpec {
    pub fn validate(&self) -> Result<()> {
        if self.count == 0 {
            return Err(Error::invalid("suite needs at least one object"));
        }
        if self.kinds.is_empty() {
            return Err(Error::invalid("suite needs at least one primitive kind"));
        }
        for (name, (lo, hi)) in [
            ("box_edge", self.box_edge),
            ("radius", self.radius),
            ("height", self.height),
            ("sphere_radius", self.sphere_radius),
        ] {
            if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
                return Err(Error::invalid(format!("{name} range must satisfy 0 < lo <= hi")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SuiteObject {
    pub id: String,
    pub primitive: Primitive,
    pub mesh: TriangleMesh,
}

fn draw(rng: &mut crate::rng::Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

pub fn build_suite(spec: &SuiteSpec) -> Result<Vec<SuiteObject>> {
    spec.validate()?;
    (0..spec.count)
        .map(|i| {
            let kind = spec.kinds[i % spec.kinds.len()];
            let mut r = rng(derive_seed(spec.seed, "object", i as u64));
            let primitive = match kind {
                PrimitiveKind::Box => Primitive::Box {
                    x: draw(&mut r, spec.box_edge),
                    y: draw(&mut r, spec.box_edge),
                    z: draw(&mut r, spec.box_edge),
                },
                PrimitiveKind::Cylinder => Primitive::Cylinder {
                    radius: draw(&mut r, spec.radius),
                    height: draw(&mut r, spec.height),
                },
                PrimitiveKind::Sphere => Primitive::Sphere {
                    radius: draw(&mut r, spec.sphere_radius),
                },
                PrimitiveKind::CappedComposite => Primitive::CappedComposite {
                    radius: draw(&mut r, spec.radius),
                    height: draw(&mut r, spec.height),
                },
            };
            Ok(SuiteObject {
                id: format!("{:02}_{}", i, kind.as_str()),
                primitive,
                mesh: make_primitive(&primitive, spec.resolution)?,
            })
        })
        .collect()
}

/// How observation clouds are produced.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CloudSpec {
    /// Points per cloud.
    pub points: usize,
    /// Fraction of clouds rendered from a single random viewpoint; the rest
    /// are complete surface samples.
    pub partial_ratio: f64,
    /// Camera ray grid side for partial views.
    pub view_grid: usize,
    /// Camera distance in bounding-sphere radii.
    pub view_distance: f64,
}

impl Default for CloudSpec {
    fn default() -> Self {
        CloudSpec {
            points: 256,
            partial_ratio: 0.0,
            view_grid: 32,
            view_distance: 3.0,
        }
    }
}

impl CloudSpec {
    pub fn validate(&self) -> Result<()> {
        if self.points == 0 {
            return Err(Error::invalid("clouds need at least one point"));
        }
        if !(0.0..=1.0).contains(&self.partial_ratio) {
            return Err(Error::invalid("partial ratio must lie in [0, 1]"));
        }
        if self.view_grid < 2 || !(self.view_distance > 1.0) {
            return Err(Error::invalid("view grid must be >= 2 and view distance > 1"));
        }
        Ok(())
    }
}

/// One mean-centered cloud of exactly `spec.points` points; its centroid
/// records the offset back to the mesh frame.
pub fn observe(mesh: &TriangleMesh, spec: &CloudSpec, seed: u64) -> Result<PointCloud> {
    spec.validate()?;
    let mut r = rng(seed);
    let partial = spec.partial_ratio > 0.0 && r.random::<f64>() < spec.partial_ratio;
    let cloud = if partial {
        let camera = random_viewpoint(mesh, spec.view_distance, &mut r);
        let view = render_partial(mesh, &camera, spec.view_grid, spec.view_grid)?;
        let n = view.len();
        let points: Vec<Vec3> = if n >= spec.points {
            let mut idx = rand::seq::index::sample(&mut r, n, spec.points).into_vec();
            idx.sort_unstable();
            idx.into_iter().map(|i| view.points[i]).collect()
        } else {
            (0..spec.points).map(|_| view.points[r.random_range(0..n)]).collect()
        };
        PointCloud::new(points)?
    } else {
        sample_surface(mesh, spec.points, r.random())?
    };
    Ok(cloud.mean_centered())
}

/// `count` clouds of one object from independent derived seeds.
pub fn observe_many(mesh: &TriangleMesh, spec: &CloudSpec, count: usize, seed: u64) -> Result<Vec<PointCloud>> {
    (0..count)
        .map(|k| observe(mesh, spec, derive_seed(seed, "cloud", k as u64)))
        .collect()
}

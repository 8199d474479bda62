//! Triangle-level geometric queries shared by the shape and oracle modules.

use nalgebra::{Matrix3, SymmetricEigen};

use crate::se3::Vec3;

const RAY_EPS: f64 = 1e-14;

/// Möller–Trumbore ray/triangle intersection, two-sided.
///
/// Returns the ray parameter `t > t_min` of the hit.
pub fn ray_triangle(origin: &Vec3, dir: &Vec3, tri: [&Vec3; 3], t_min: f64) -> Option<f64> {
    let e1 = tri[1] - tri[0];
    let e2 = tri[2] - tri[0];
    let p = dir.cross(&e2);
    let det = e1.dot(&p);
    if det.abs() < RAY_EPS {
        return None;
    }
    let inv = 1.0 / det;
    let s = origin - tri[0];
    let u = s.dot(&p) * inv;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let q = s.cross(&e1);
    let v = dir.dot(&q) * inv;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    let t = e2.dot(&q) * inv;
    (t > t_min).then_some(t)
}

/// Closest point on triangle `abc` to `p` (Ericson, Real-Time Collision Detection 5.1.5).
pub fn closest_point_on_triangle(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> Vec3 {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return *a;
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return *b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return a + ab * v;
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return *c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return a + ac * w;
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return b + (c - b) * w;
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    a + ab * v + ac * w
}

/// Axis-aligned box given by center and half extents.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn from_points<'a>(points: impl IntoIterator<Item = &'a Vec3>) -> Option<Self> {
        let mut it = points.into_iter();
        let first = *it.next()?;
        let (min, max) = it.fold((first, first), |(lo, hi), p| (lo.inf(p), hi.sup(p)));
        Some(Aabb { min, max })
    }

    pub fn center(&self) -> Vec3 {
        (self.min + self.max) * 0.5
    }

    pub fn half_extents(&self) -> Vec3 {
        (self.max - self.min) * 0.5
    }

    pub fn inflated(&self, margin: f64) -> Self {
        let m = Vec3::repeat(margin);
        Aabb {
            min: self.min - m,
            max: self.max + m,
        }
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    pub fn overlaps(&self, other: &Aabb) -> bool {
        (0..3).all(|i| self.min[i] <= other.max[i] && other.min[i] <= self.max[i])
    }
}

/// Separating-axis test between a triangle and a box centered at the origin
/// with the given half extents (Akenine-Möller). Touching counts as overlap.
pub fn triangle_box_overlap(half: &Vec3, tri: [Vec3; 3]) -> bool {
    let [v0, v1, v2] = tri;
    for i in 0..3 {
        let lo = v0[i].min(v1[i]).min(v2[i]);
        let hi = v0[i].max(v1[i]).max(v2[i]);
        if lo > half[i] || hi < -half[i] {
            return false;
        }
    }
    let edges = [v1 - v0, v2 - v1, v0 - v2];
    let axes = [Vec3::x(), Vec3::y(), Vec3::z()];
    for e in &edges {
        for a in &axes {
            let axis = a.cross(e);
            if axis.norm_squared() < 1e-30 {
                continue;
            }
            let p0 = v0.dot(&axis);
            let p1 = v1.dot(&axis);
            let p2 = v2.dot(&axis);
            let r = half.x * axis.x.abs() + half.y * axis.y.abs() + half.z * axis.z.abs();
            let lo = p0.min(p1).min(p2);
            let hi = p0.max(p1).max(p2);
            if lo > r || hi < -r {
                return false;
            }
        }
    }
    let n = edges[0].cross(&edges[1]);
    if n.norm_squared() < 1e-30 {
        return true;
    }
    let d = n.dot(&v0);
    let r = half.x * n.x.abs() + half.y * n.y.abs() + half.z * n.z.abs();
    d.abs() <= r
}

/// Least-squares plane through `points`: returns (centroid, unit normal).
pub fn fit_plane(points: &[Vec3]) -> Option<(Vec3, Vec3)> {
    if points.len() < 3 {
        return None;
    }
    let n = points.len() as f64;
    let centroid = points.iter().fold(Vec3::zeros(), |acc, p| acc + p) / n;
    let mut cov = Matrix3::zeros();
    for p in points {
        let d = p - centroid;
        cov += d * d.transpose();
    }
    let eig = SymmetricEigen::new(cov);
    let k = eig.eigenvalues.imin();
    let normal: Vec3 = eig.eigenvectors.column(k).into_owned();
    Some((centroid, normal.normalize()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ray_hits_triangle_interior() {
        let a = Vec3::new(-1.0, -1.0, 0.0);
        let b = Vec3::new(1.0, -1.0, 0.0);
        let c = Vec3::new(0.0, 1.0, 0.0);
        let o = Vec3::new(0.0, 0.0, 2.0);
        let t = ray_triangle(&o, &Vec3::new(0.0, 0.0, -1.0), [&a, &b, &c], 0.0).unwrap();
        assert!((t - 2.0).abs() < 1e-15);
        assert!(ray_triangle(&o, &Vec3::new(0.0, 0.0, 1.0), [&a, &b, &c], 0.0).is_none());
        assert!(ray_triangle(&o, &Vec3::new(1.0, 0.0, 0.0), [&a, &b, &c], 0.0).is_none());
    }

    #[test]
    fn closest_point_regions() {
        let a = Vec3::new(0.0, 0.0, 0.0);
        let b = Vec3::new(1.0, 0.0, 0.0);
        let c = Vec3::new(0.0, 1.0, 0.0);
        let p = closest_point_on_triangle(&Vec3::new(0.2, 0.2, 3.0), &a, &b, &c);
        assert!((p - Vec3::new(0.2, 0.2, 0.0)).norm() < 1e-15);
        let p = closest_point_on_triangle(&Vec3::new(-1.0, -1.0, 0.0), &a, &b, &c);
        assert_eq!(p, a);
        let p = closest_point_on_triangle(&Vec3::new(1.0, 1.0, 0.0), &a, &b, &c);
        assert!((p - Vec3::new(0.5, 0.5, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn triangle_box_sat() {
        let half = Vec3::new(1.0, 1.0, 1.0);
        let inside = [
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(0.5, 0.0, 0.0),
            Vec3::new(0.0, 0.5, 0.0),
        ];
        assert!(triangle_box_overlap(&half, inside));
        let far = inside.map(|v| v + Vec3::new(5.0, 0.0, 0.0));
        assert!(!triangle_box_overlap(&half, far));
        // large triangle slicing through the box without vertices inside
        let slicing = [
            Vec3::new(-10.0, -10.0, 0.0),
            Vec3::new(10.0, -10.0, 0.0),
            Vec3::new(0.0, 10.0, 0.0),
        ];
        assert!(triangle_box_overlap(&half, slicing));
        // diagonal plane that passes near the corner but misses it
        let miss = [
            Vec3::new(3.5, 0.0, 0.0),
            Vec3::new(0.0, 3.5, 0.0),
            Vec3::new(0.0, 0.0, 3.5),
        ];
        assert!(!triangle_box_overlap(&half, miss));
        let hit = miss.map(|v| v * (2.5 / 3.5));
        assert!(triangle_box_overlap(&half, hit));
    }

    #[test]
    fn plane_fit_recovers_normal() {
        let pts: Vec<Vec3> = (0..20)
            .map(|i| {
                let x = (i % 5) as f64;
                let y = (i / 5) as f64;
                Vec3::new(x, y, 0.5 * x - 0.25 * y + 1.0)
            })
            .collect();
        let (_, n) = fit_plane(&pts).unwrap();
        let expected = Vec3::new(0.5, -0.25, -1.0).normalize();
        assert!((n.dot(&expected).abs() - 1.0).abs() < 1e-12);
    }
}

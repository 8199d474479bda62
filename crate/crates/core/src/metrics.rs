//! Precision, coverage, pose errors, earth mover's distance and the
//! inference tuning sweep.

use std::io::Write;

use crate::diffusion::{sample_grasps, Generator};
use crate::discriminator::{filter_grasps, score_grasps, Discriminator, ScoredGrasps};
use crate::error::{Error, Result};
use crate::oracle::{label_all, GraspOracle};
use crate::rng::{derive_seed, rng};
use crate::se3::{pose_distance, rotation_distance, translation_distance, GraspPose};
use crate::shape::{PointCloud, TriangleMesh};

pub const COVERAGE_RADIUS: f64 = 0.01;

/// Distance used to match a ground-truth grasp to a prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Matching {
    #[default]
    Translation,
    /// Translation plus geodesic rotation angle.
    Pose,
}

impl Matching {
    fn distance(self, a: &GraspPose, b: &GraspPose) -> f64 {
        match self {
            Matching::Translation => translation_distance(a, b),
            Matching::Pose => pose_distance(a, b),
        }
    }
}

/// Fraction of `gt` whose nearest prediction lies within `radius`. Predictions
/// may be reused across ground-truth grasps.
pub fn coverage_with(predicted: &[GraspPose], gt: &[GraspPose], radius: f64, matching: Matching) -> Result<f64> {
    if gt.is_empty() {
        return Err(Error::invalid("coverage needs at least one ground-truth grasp"));
    }
    let hit = gt
        .iter()
        .filter(|g| predicted.iter().any(|p| matching.distance(g, p) <= radius))
        .count();
    Ok(hit as f64 / gt.len() as f64)
}

pub fn coverage(predicted: &[GraspPose], gt: &[GraspPose]) -> Result<f64> {
    coverage_with(predicted, gt, COVERAGE_RADIUS, Matching::Translation)
}

/// Oracle success rate.
pub fn precision(grasps: &[GraspPose], oracle: &dyn GraspOracle, mesh: &TriangleMesh) -> Result<f64> {
    if grasps.is_empty() {
        return Err(Error::invalid("precision of an empty grasp set is undefined"));
    }
    let pos = label_all(oracle, mesh, grasps).iter().filter(|l| l.is_positive()).count();
    Ok(pos as f64 / grasps.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub threshold: f64,
    pub precision: f64,
    pub coverage: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrecisionCoverageCurve {
    pub points: Vec<CurvePoint>,
    pub auc: f64,
}

/// Trapezoidal area under precision over coverage.
///
/// Points are sorted by coverage (ties by precision, highest first) and the
/// first point's precision is extended down to coverage 0, so a single point
/// gives its `precision * coverage` rectangle.
pub fn curve_auc(points: &[CurvePoint]) -> f64 {
    let mut p: Vec<(f64, f64)> = points.iter().map(|c| (c.coverage, c.precision)).collect();
    if p.is_empty() {
        return 0.0;
    }
    p.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.total_cmp(&a.1)));
    let mut area = p[0].0 * p[0].1;
    for w in p.windows(2) {
        area += (w[1].0 - w[0].0) * (w[0].1 + w[1].1) * 0.5;
    }
    area
}

/// One curve point per threshold. Empty filtered sets give `(0, 0)`.
pub fn precision_coverage_curve(
    scored: &ScoredGrasps,
    gt: &[GraspPose],
    oracle: &dyn GraspOracle,
    mesh: &TriangleMesh,
    thresholds: &[f64],
) -> Result<PrecisionCoverageCurve> {
    if thresholds.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::invalid("thresholds must be sorted ascending"));
    }
    let labels = label_all(oracle, mesh, &scored.grasps);
    let mut points = Vec::with_capacity(thresholds.len());
    for &t in thresholds {
        let kept: Vec<usize> = (0..scored.len()).filter(|&i| scored.scores[i] >= t).collect();
        let point = if kept.is_empty() {
            CurvePoint {
                threshold: t,
                precision: 0.0,
                coverage: 0.0,
            }
        } else {
            let pos = kept.iter().filter(|&&i| labels[i].is_positive()).count();
            let grasps: Vec<GraspPose> = kept.iter().map(|&i| scored.grasps[i]).collect();
            CurvePoint {
                threshold: t,
                precision: pos as f64 / kept.len() as f64,
                coverage: coverage(&grasps, gt)?,
            }
        };
        points.push(point);
    }
    let auc = curve_auc(&points);
    Ok(PrecisionCoverageCurve { points, auc })
}

/// Mean translation (m) and rotation (rad) error of each prediction to its
/// nearest ground-truth grasp under [`pose_distance`].
pub fn pose_errors(predicted: &[GraspPose], gt: &[GraspPose]) -> Result<(f64, f64)> {
    if predicted.is_empty() || gt.is_empty() {
        return Err(Error::invalid("pose errors need non-empty predicted and ground-truth sets"));
    }
    let (mut te, mut re) = (0.0, 0.0);
    for p in predicted {
        let mut best = &gt[0];
        let mut best_d = pose_distance(p, best);
        for g in &gt[1..] {
            let d = pose_distance(p, g);
            if d < best_d {
                best_d = d;
                best = g;
            }
        }
        te += translation_distance(p, best);
        re += rotation_distance(p, best);
    }
    let n = predicted.len() as f64;
    Ok((te / n, re / n))
}

/// Exact minimum-cost perfect matching on a square cost matrix (row-major,
/// `n x n`), by shortest augmenting paths with row and column potentials.
/// Returns the column assigned to each row.
pub fn linear_sum_assignment(cost: &[f64], n: usize) -> Result<Vec<usize>> {
    if cost.len() != n * n {
        return Err(Error::ShapeError(format!("cost matrix has {} entries, expected {}", cost.len(), n * n)));
    }
    if cost.iter().any(|c| !c.is_finite()) {
        return Err(Error::invalid("assignment costs must be finite"));
    }
    // 1-based bookkeeping; index 0 is the virtual source column
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut row_of = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut col_of = vec![0; n];
    for j in 1..=n {
        col_of[row_of[j] - 1] = j - 1;
    }
    Ok(col_of)
}

/// Mean assigned cost of an optimal matching.
pub fn assignment_mean_cost(cost: &[f64], n: usize) -> Result<f64> {
    if n == 0 {
        return Ok(0.0);
    }
    let cols = linear_sum_assignment(cost, n)?;
    Ok(cols.iter().enumerate().map(|(i, &j)| cost[i * n + j]).sum::<f64>() / n as f64)
}

fn cost_matrix(a: &[&GraspPose], b: &[&GraspPose]) -> Vec<f64> {
    let mut c = Vec::with_capacity(a.len() * b.len());
    for x in a {
        for y in b {
            c.push(pose_distance(x, y));
        }
    }
    c
}

/// Earth mover's distance between two grasp sets: the mean over `repeats`
/// random subsamples of size `min(n_sub, |a|, |b|)` of the optimal mean
/// matching cost under [`pose_distance`].
pub fn emd(a: &[GraspPose], b: &[GraspPose], n_sub: usize, repeats: usize, seed: u64) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::invalid("emd needs two non-empty sets"));
    }
    if n_sub == 0 || repeats == 0 {
        return Err(Error::invalid("n_sub and repeats must be positive"));
    }
    let n = n_sub.min(a.len()).min(b.len());
    let mut total = 0.0;
    for k in 0..repeats {
        let mut r = rng(derive_seed(seed, "emd", k as u64));
        let pick = |set: &'_ [GraspPose], r: &mut crate::rng::Rng| -> Vec<usize> {
            if n == set.len() {
                (0..n).collect()
            } else {
                let mut idx = rand::seq::index::sample(r, set.len(), n).into_vec();
                idx.sort_unstable();
                idx
            }
        };
        let ia = pick(a, &mut r);
        let ib = pick(b, &mut r);
        let sa: Vec<&GraspPose> = ia.iter().map(|&i| &a[i]).collect();
        let sb: Vec<&GraspPose> = ib.iter().map(|&i| &b[i]).collect();
        total += assignment_mean_cost(&cost_matrix(&sa, &sb), n)?;
    }
    Ok(total / repeats as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmdReport {
    pub per_object: Vec<(String, f64)>,
    pub n_sub: usize,
    pub repeats: usize,
    pub mean: f64,
}

impl EmdReport {
    pub fn new(per_object: Vec<(String, f64)>, n_sub: usize, repeats: usize) -> Self {
        let mean = if per_object.is_empty() {
            0.0
        } else {
            per_object.iter().map(|(_, v)| v).sum::<f64>() / per_object.len() as f64
        };
        EmdReport {
            per_object,
            n_sub,
            repeats,
            mean,
        }
    }
}

/// Probability that a random positive outscores a random negative; ties
/// count one half.
pub fn roc_auc(scores: &[f64], positive: &[bool]) -> Result<f64> {
    if scores.len() != positive.len() {
        return Err(Error::invalid("score and label counts differ"));
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::DegenerateLabels(format!("{} labels, one class", positive.len())));
    }
    // rank sum of positives with average ranks over ties
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += idx[i..=j].iter().filter(|&&k| positive[k]).count() as f64 * avg;
        i = j + 1;
    }
    let (p, q) = (n_pos as f64, n_neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * q))
}

/// Object to evaluate on.
#[derive(Debug, Clone, Copy)]
pub struct EvalTarget<'a> {
    pub id: &'a str,
    pub mesh: &'a TriangleMesh,
    pub cloud: &'a PointCloud,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub object_id: String,
    pub batch: usize,
    pub threshold: f64,
    pub retained: usize,
    /// `None` when nothing passed the threshold.
    pub precision: Option<f64>,
}

/// Every `(batch, threshold)` pair for every object. Each batch size is
/// sampled once per object and then filtered at each threshold.
pub fn tuning_sweep(
    generator: &Generator,
    disc: &Discriminator,
    objects: &[EvalTarget],
    oracle: &dyn GraspOracle,
    batch_sizes: &[usize],
    thresholds: &[f64],
    seed: u64,
) -> Result<Vec<SweepRow>> {
    if batch_sizes.is_empty() || thresholds.is_empty() {
        return Err(Error::invalid("sweep grids must be non-empty"));
    }
    let mut objects = objects.to_vec();
    objects.sort_by(|a, b| a.id.cmp(b.id));
    let mut rows = Vec::new();
    for (oi, o) in objects.iter().enumerate() {
        for &b in batch_sizes {
            let (grasps, _) = sample_grasps(generator, o.cloud, b, derive_seed(seed, "sweep", oi as u64))?;
            let scored = score_grasps(disc, o.cloud, &grasps)?;
            let labels = label_all(oracle, o.mesh, &grasps);
            for &t in thresholds {
                let kept = filter_grasps(&scored, t, b)?;
                let precision = (!kept.is_empty()).then(|| {
                    kept.indices.iter().filter(|&&i| labels[i].is_positive()).count() as f64 / kept.indices.len() as f64
                });
                rows.push(SweepRow {
                    object_id: o.id.to_string(),
                    batch: b,
                    threshold: t,
                    retained: kept.indices.len(),
                    precision,
                });
            }
        }
    }
    Ok(rows)
}

/// Undefined precision is written as `null`, never as a number.
pub fn write_sweep_csv(w: &mut impl Write, rows: &[SweepRow]) -> Result<()> {
    writeln!(w, "object_id,batch,threshold,retained,precision")?;
    for r in rows {
        let p = r.precision.map_or_else(|| "null".to_string(), |p| format!("{p}"));
        writeln!(w, "{},{},{},{},{}", r.object_id, r.batch, r.threshold, r.retained, p)?;
    }
    Ok(())
}

//! Independent reference implementations shared by the integration tests
//! and the acceptance harness.

#![allow(dead_code)]

use graspgen::autodiff::{Graph, ParamStore, Tensor, Var};
use graspgen::se3::{pose_distance, rotation_distance, translation_distance, GraspPose};
use graspgen::Result;

/// Finite-difference step.
pub const FD_STEP: f64 = 1e-6;
/// Relative tolerance and absolute floor. Flooring the denominator at
/// `FD_ABS / FD_REL` makes `rel_err < FD_REL` mean "within 1e-4 relative
/// or within 1e-6 absolute".
pub const FD_REL: f64 = 1e-4;
pub const FD_ABS: f64 = 1e-6;
const FD_FLOOR: f64 = FD_ABS / FD_REL;

pub fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(FD_FLOOR)
}

/// Max relative error between reverse-mode and central-difference gradients
/// of `f` with respect to every entry of every input. `f` may return a
/// non-scalar; it is reduced with fixed pseudo-random weights.
pub fn gradcheck(inputs: &[Tensor], f: &dyn Fn(&mut Graph, &[Var]) -> Result<Var>) -> Result<f64> {
    let reduce = |g: &mut Graph, out: Var| -> Result<Var> {
        let n = g.value(out).data.len();
        if n == 1 {
            return Ok(out);
        }
        let w: Vec<f64> = (0..n).map(|i| 0.3 + ((i * 7919) % 13) as f64 / 13.0).collect();
        let wv = g.constant(Tensor::new(g.value(out).shape.clone(), w)?);
        let p = g.mul(out, wv)?;
        Ok(g.sum(p))
    };
    let eval = |xs: &[Tensor]| -> Result<f64> {
        let mut g = Graph::inference();
        let vars: Vec<Var> = xs.iter().map(|t| g.constant(t.clone())).collect();
        let out = f(&mut g, &vars)?;
        let s = reduce(&mut g, out)?;
        Ok(g.value(s).item())
    };
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.leaf(t.clone())).collect();
    let out = f(&mut g, &vars)?;
    let s = reduce(&mut g, out)?;
    g.backward(s)?;
    let mut worst: f64 = 0.0;
    for (k, v) in vars.iter().enumerate() {
        let analytic = g.grad(*v).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; inputs[k].len()]);
        for j in 0..inputs[k].len() {
            let mut plus = inputs.to_vec();
            plus[k].data[j] += FD_STEP;
            let mut minus = inputs.to_vec();
            minus[k].data[j] -= FD_STEP;
            let numeric = (eval(&plus)? - eval(&minus)?) / (2.0 * FD_STEP);
            worst = worst.max(rel_err(analytic[j], numeric));
        }
    }
    Ok(worst)
}

/// Accessors for the parameter stores of a model under test.
pub struct Stores<M> {
    pub count: usize,
    pub get: fn(&M, usize) -> &ParamStore,
    pub get_mut: fn(&mut M, usize) -> &mut ParamStore,
}

/// Same check for the parameters of `model`, across every store. `stride`
/// subsamples entries; the first entry of every tensor is always checked.
pub fn gradcheck_params<M>(
    model: &mut M,
    stores: &Stores<M>,
    stride: usize,
    loss: &dyn Fn(&mut Graph, &M) -> Result<Var>,
) -> Result<(f64, usize)> {
    let mut g = Graph::new();
    let l = loss(&mut g, model)?;
    g.backward(l)?;
    let grads: Vec<Vec<Vec<f64>>> = (0..stores.count).map(|k| g.param_grads((stores.get)(model, k))).collect();
    let eval = |m: &M| -> Result<f64> {
        let mut g = Graph::inference();
        let l = loss(&mut g, m)?;
        Ok(g.value(l).item())
    };
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for k in 0..stores.count {
        let ids: Vec<_> = (stores.get)(model, k).ids().collect();
        for (pi, id) in ids.iter().enumerate() {
            let n = (stores.get)(model, k).get(*id).len();
            for j in (0..n).step_by(stride) {
                let orig = (stores.get)(model, k).get(*id).data[j];
                (stores.get_mut)(model, k).get_mut(*id).data[j] = orig + FD_STEP;
                let up = eval(model)?;
                (stores.get_mut)(model, k).get_mut(*id).data[j] = orig - FD_STEP;
                let down = eval(model)?;
                (stores.get_mut)(model, k).get_mut(*id).data[j] = orig;
                worst = worst.max(rel_err(grads[k][pi][j], (up - down) / (2.0 * FD_STEP)));
                checked += 1;
            }
        }
    }
    Ok((worst, checked))
}

/// O(n m) coverage: each ground-truth grasp scans every prediction.
pub fn brute_coverage(pred: &[GraspPose], gt: &[GraspPose], radius: f64) -> f64 {
    let mut hit = 0usize;
    for g in gt {
        let mut best = f64::INFINITY;
        for p in pred {
            let d = ((g.translation.x - p.translation.x).powi(2)
                + (g.translation.y - p.translation.y).powi(2)
                + (g.translation.z - p.translation.z).powi(2))
            .sqrt();
            best = best.min(d);
        }
        if best <= radius {
            hit += 1;
        }
    }
    hit as f64 / gt.len() as f64
}

/// O(n m) pose errors under `pose_distance` (first minimum wins).
pub fn brute_pose_errors(pred: &[GraspPose], gt: &[GraspPose]) -> (f64, f64) {
    let (mut t, mut r) = (0.0, 0.0);
    for p in pred {
        let mut best = 0;
        for (j, g) in gt.iter().enumerate() {
            if pose_distance(p, g) < pose_distance(p, &gt[best]) {
                best = j;
            }
        }
        t += translation_distance(p, &gt[best]);
        r += rotation_distance(p, &gt[best]);
    }
    (t / pred.len() as f64, r / pred.len() as f64)
}

/// Minimum total cost by enumerating all permutations (n <= 8).
pub fn enumerate_assignment(cost: &[f64], n: usize) -> f64 {
    fn rec(cost: &[f64], n: usize, row: usize, used: &mut [bool], acc: f64, best: &mut f64) {
        if row == n {
            *best = best.min(acc);
            return;
        }
        for j in 0..n {
            if !used[j] {
                used[j] = true;
                rec(cost, n, row + 1, used, acc + cost[row * n + j], best);
                used[j] = false;
            }
        }
    }
    let mut best = f64::INFINITY;
    rec(cost, n, 0, &mut vec![false; n], 0.0, &mut best);
    best
}

/// Munkres' original algorithm (zero covering with starred and primed
/// zeros). Independent of the potential-based solver in the crate.
/// Returns the column of each row.
pub fn munkres(cost: &[f64], n: usize) -> Vec<usize> {
    let mut c = cost.to_vec();
    for i in 0..n {
        let m = (0..n).map(|j| c[i * n + j]).fold(f64::INFINITY, f64::min);
        for j in 0..n {
            c[i * n + j] -= m;
        }
    }
    for j in 0..n {
        let m = (0..n).map(|i| c[i * n + j]).fold(f64::INFINITY, f64::min);
        for i in 0..n {
            c[i * n + j] -= m;
        }
    }
    // 1 = starred, 2 = primed
    let mut mark = vec![0u8; n * n];
    let mut row_cov = vec![false; n];
    let mut col_cov = vec![false; n];
    for i in 0..n {
        for j in 0..n {
            if c[i * n + j] == 0.0 && !row_cov[i] && !col_cov[j] {
                mark[i * n + j] = 1;
                row_cov[i] = true;
                col_cov[j] = true;
            }
        }
    }
    row_cov.fill(false);
    col_cov.fill(false);
    loop {
        for j in 0..n {
            col_cov[j] = (0..n).any(|i| mark[i * n + j] == 1);
        }
        if col_cov.iter().filter(|&&x| x).count() == n {
            break;
        }
        loop {
            // find an uncovered zero
            let mut found = None;
            'search: for i in 0..n {
                if row_cov[i] {
                    continue;
                }
                for j in 0..n {
                    if !col_cov[j] && c[i * n + j] == 0.0 {
                        found = Some((i, j));
                        break 'search;
                    }
                }
            }
            match found {
                Some((i, j)) => {
                    mark[i * n + j] = 2;
                    if let Some(sj) = (0..n).find(|&jj| mark[i * n + jj] == 1) {
                        row_cov[i] = true;
                        col_cov[sj] = false;
                    } else {
                        // augmenting path of alternating primes and stars
                        let mut path = vec![(i, j)];
                        loop {
                            let (_, pj) = *path.last().unwrap();
                            let Some(si) = (0..n).find(|&ii| mark[ii * n + pj] == 1) else { break };
                            path.push((si, pj));
                            let pj2 = (0..n).find(|&jj| mark[si * n + jj] == 2).unwrap();
                            path.push((si, pj2));
                        }
                        for &(pi, pj) in &path {
                            mark[pi * n + pj] = if mark[pi * n + pj] == 1 { 0 } else { 1 };
                        }
                        for m in mark.iter_mut() {
                            if *m == 2 {
                                *m = 0;
                            }
                        }
                        row_cov.fill(false);
                        col_cov.fill(false);
                        break;
                    }
                }
                None => {
                    let mut m = f64::INFINITY;
                    for i in 0..n {
                        for j in 0..n {
                            if !row_cov[i] && !col_cov[j] {
                                m = m.min(c[i * n + j]);
                            }
                        }
                    }
                    for i in 0..n {
                        for j in 0..n {
                            if row_cov[i] {
                                c[i * n + j] += m;
                            }
                            if !col_cov[j] {
                                c[i * n + j] -= m;
                            }
                        }
                    }
                }
            }
        }
    }
    (0..n).map(|i| (0..n).find(|&j| mark[i * n + j] == 1).unwrap()).collect()
}

/// Mean matched cost, summed in row order.
pub fn mean_cost(cost: &[f64], n: usize, cols: &[usize]) -> f64 {
    cols.iter().enumerate().map(|(i, &j)| cost[i * n + j]).sum::<f64>() / n as f64
}

fn random_tensor(rows: usize, cols: usize, lo: f64, hi: f64, seed: u64) -> Tensor {
    use rand::Rng as _;
    let mut r = graspgen::rng::rng(seed);
    let data = (0..rows * cols).map(|_| r.random_range(lo..hi)).collect();
    Tensor::matrix(rows, cols, data).unwrap()
}

/// Values bounded away from zero so ReLU kinks never fall inside a step.
fn away_from_zero(rows: usize, cols: usize, seed: u64) -> Tensor {
    let mut t = random_tensor(rows, cols, 0.1, 1.0, seed);
    for (i, v) in t.data.iter_mut().enumerate() {
        if i % 2 == 1 {
            *v = -*v;
        }
    }
    t
}

/// Worst relative error for each graph op.
pub fn op_gradchecks() -> Result<Vec<(&'static str, f64)>> {
    let a = random_tensor(3, 4, -1.0, 1.0, 1);
    let b = random_tensor(4, 2, -1.0, 1.0, 2);
    let c = random_tensor(3, 4, -1.0, 1.0, 3);
    let row = random_tensor(1, 4, -1.0, 1.0, 4);
    let target = random_tensor(3, 4, -1.0, 1.0, 5);
    let probs = random_tensor(3, 1, 0.1, 0.9, 6);
    let labels = Tensor::matrix(3, 1, vec![1.0, 0.0, 1.0])?;
    let points = random_tensor(7, 3, -1.0, 1.0, 7);
    let kinked = away_from_zero(3, 4, 8);
    let mut out = Vec::new();
    out.push(("matmul", gradcheck(&[a.clone(), b.clone()], &|g, v| g.matmul(v[0], v[1]))?));
    out.push(("add", gradcheck(&[a.clone(), c.clone()], &|g, v| g.add(v[0], v[1]))?));
    out.push(("add_row", gradcheck(&[a.clone(), row], &|g, v| g.add_row(v[0], v[1]))?));
    out.push(("mul", gradcheck(&[a.clone(), c.clone()], &|g, v| g.mul(v[0], v[1]))?));
    out.push(("scale", gradcheck(&[a.clone()], &|g, v| Ok(g.scale(v[0], -1.7)))?));
    out.push(("relu", gradcheck(&[kinked], &|g, v| Ok(g.relu(v[0])))?));
    out.push(("gelu", gradcheck(&[a.clone()], &|g, v| Ok(g.gelu(v[0])))?));
    out.push(("sigmoid", gradcheck(&[a.clone()], &|g, v| Ok(g.sigmoid(v[0])))?));
    out.push(("mse", gradcheck(&[a.clone()], &|g, v| g.mse(v[0], &target))?));
    out.push(("bce", gradcheck(&[probs], &|g, v| g.bce(v[0], &labels))?));
    let logits = random_tensor(3, 1, -3.0, 3.0, 9);
    out.push(("bce_logits", gradcheck(&[logits], &|g, v| g.bce_logits(v[0], &labels))?));
    out.push(("sum", gradcheck(&[a.clone()], &|g, v| Ok(g.sum(v[0])))?));
    out.push((
        "segment_max",
        gradcheck(&[points.clone()], &|g, v| g.segment_max(v[0], &[(0, 3), (3, 7)]))?,
    ));
    out.push(("maxpool_over_points", gradcheck(&[points], &|g, v| g.maxpool_over_points(v[0]))?));
    out.push(("concat", gradcheck(&[a.clone(), b.clone()], &|g, v| {
        let bt = g.matmul(v[0], v[1])?;
        g.concat(&[v[0], bt])
    })?));
    out.push(("gather_rows", gradcheck(&[a], &|g, v| g.gather_rows(v[0], &[2, 0, 2, 1, 2]))?));
    Ok(out)
}

pub fn tiny_generator(seed: u64) -> graspgen::diffusion::Generator {
    use graspgen::autodiff::Activation;
    use graspgen::diffusion::{Generator, GeneratorArch, GraspCodec, NoiseSchedule};
    use graspgen::se3::ReprKind;
    let arch = GeneratorArch {
        embedding_dim: 16,
        point_widths: vec![8, 16],
        pe_dims: 8,
        grasp_feat: 8,
        head_width: 16,
        head_depth: 2,
        activation: Activation::Relu,
    };
    Generator::new(arch, GraspCodec::new(10.0, ReprKind::LieAlgebra).unwrap(), NoiseSchedule::default(), seed).unwrap()
}

pub fn small_box_cloud(n: usize, seed: u64) -> graspgen::shape::PointCloud {
    use graspgen::shape::{make_primitive, sample_surface, Primitive};
    let mesh = make_primitive(&Primitive::Box { x: 0.06, y: 0.04, z: 0.1 }, 8).unwrap();
    sample_surface(&mesh, n, seed).unwrap().mean_centered()
}

pub fn random_grasps(n: usize, seed: u64) -> Vec<GraspPose> {
    use graspgen::se3::{Rotation, Vec3};
    use rand::Rng as _;
    let mut r = graspgen::rng::rng(seed);
    (0..n)
        .map(|_| {
            let t = Vec3::new(r.random_range(-0.1..0.1), r.random_range(-0.1..0.1), r.random_range(-0.1..0.1));
            GraspPose::new(Rotation::random(&mut r), t)
        })
        .collect()
}

/// Worst relative error over generator parameters (encoder, grasp
/// projection and noise head) of the seeded denoising loss, and over
/// discriminator parameters (encoder and head) of the BCE loss.
pub fn network_gradchecks(stride: usize) -> Result<Vec<(&'static str, f64, usize)>> {
    use graspgen::diffusion::{denoising_loss, GenTrainConfig, Generator, TrainObject};
    use graspgen::discriminator::{classification_loss, Discriminator};
    let clouds = vec![small_box_cloud(24, 11), small_box_cloud(24, 12)];
    let positives = random_grasps(6, 13);
    let objects = [TrainObject {
        clouds: &clouds,
        positives: &positives,
    }];
    let cfg = GenTrainConfig {
        objects_per_batch: 2,
        grasps_per_object: 3,
        ..GenTrainConfig::default()
    };
    let mut gen = tiny_generator(21);
    let gen_stores = Stores::<Generator> {
        count: 1,
        get: |m, _| &m.store,
        get_mut: |m, _| &mut m.store,
    };
    let (gen_err, gen_n) = gradcheck_params(&mut gen, &gen_stores, stride, &|g, m| {
        denoising_loss(m, g, &objects, &cfg, 77)
    })?;

    let mut disc = Discriminator::new(&gen, 22)?;
    disc.encoder_store.set_frozen(false);
    let grasps = random_grasps(5, 14);
    let labels = [1.0, 0.0, 0.0, 1.0, 1.0];
    let disc_stores = Stores::<Discriminator> {
        count: 2,
        get: |d, k| if k == 0 { &d.encoder_store } else { &d.head_store },
        get_mut: |d, k| if k == 0 { &mut d.encoder_store } else { &mut d.head_store },
    };
    let (disc_err, disc_n) = gradcheck_params(&mut disc, &disc_stores, stride * 8, &|g, d| {
        classification_loss(d, g, &clouds[0], &grasps, &labels)
    })?;
    Ok(vec![("generator", gen_err, gen_n), ("discriminator", disc_err, disc_n)])
}

/// Seeded pose set spread over a 20 cm cube.
pub fn pose_set(n: usize, seed: u64) -> Vec<GraspPose> {
    random_grasps(n, seed)
}

/// Worst absolute gap between the crate's metrics and the brute-force
/// oracles on seeded sets of 200 to 500 elements, plus the 3x3 case.
pub fn metric_oracle_gaps() -> Result<Vec<(String, f64)>> {
    use graspgen::metrics::{assignment_mean_cost, coverage, emd, linear_sum_assignment, pose_errors, COVERAGE_RADIUS};
    use graspgen::se3::Vec3;
    let mut out = Vec::new();
    for (k, (np, ng)) in [(200, 500), (500, 200), (350, 350)].into_iter().enumerate() {
        let pred = pose_set(np, 100 + k as u64);
        // jitter a copy of part of the prediction set so coverage is not trivial
        let mut gt = pose_set(ng, 200 + k as u64);
        for (i, g) in gt.iter_mut().enumerate().step_by(3) {
            let p = &pred[i % np];
            g.translation = p.translation + Vec3::new(0.004 * (i % 5) as f64, -0.003, 0.002);
        }
        let c = coverage(&pred, &gt)?;
        out.push((format!("coverage {np}x{ng}"), (c - brute_coverage(&pred, &gt, COVERAGE_RADIUS)).abs()));
        let (t, r) = pose_errors(&pred, &gt)?;
        let (bt, br) = brute_pose_errors(&pred, &gt);
        out.push((format!("pose_errors {np}x{ng}"), (t - bt).abs().max((r - br).abs())));
    }
    for (n, seed) in [(200, 7), (240, 8)] {
        let a = pose_set(n, seed);
        let b = pose_set(n, seed + 50);
        let mut cost = Vec::with_capacity(n * n);
        for x in &a {
            for y in &b {
                cost.push(pose_distance(x, y));
            }
        }
        let reference = mean_cost(&cost, n, &munkres(&cost, n));
        out.push((format!("emd {n}x{n}"), (emd(&a, &b, n, 1, 3)? - reference).abs()));
    }
    let c3 = [1.0, 2.0, 3.0, 2.0, 1.0, 3.0, 3.0, 3.0, 1.0];
    let cols = linear_sum_assignment(&c3, 3)?;
    let total: f64 = cols.iter().enumerate().map(|(i, &j)| c3[i * 3 + j]).sum();
    out.push(("3x3 total vs 3! enumeration".into(), (total - enumerate_assignment(&c3, 3)).abs()));
    out.push(("3x3 mean".into(), (assignment_mean_cost(&c3, 3)? - 1.0).abs()));
    Ok(out)
}

/// Hand-checkable labeling cases: (name, label matches the expectation).
pub fn oracle_hand_cases() -> Vec<(&'static str, bool)> {
    use graspgen::oracle::{label_antipodal, label_suction, GripperModel, Label};
    use graspgen::se3::{Rotation, Vec3};
    use graspgen::shape::{make_primitive, Primitive};
    use nalgebra::Matrix3;
    // gripper x (closing) -> world x, approach (gripper z) -> world -z
    let down = Rotation::new(Matrix3::from_columns(&[Vec3::x(), -Vec3::y(), -Vec3::z()])).unwrap();
    let jaw = GripperModel::parallel_jaw();
    let cup = GripperModel::suction();

    let cylinder = make_primitive(&Primitive::Cylinder { radius: 0.03, height: 0.1 }, 32).unwrap();
    // jaws across a diameter, palm above the top cap
    let centered = GraspPose::new(down, Vec3::new(0.0, 0.0, 0.035));
    let displaced = GraspPose::new(down, Vec3::new(0.0, 0.10, 0.035));
    let wide = make_primitive(&Primitive::Box { x: 0.12, y: 0.04, z: 0.04 }, 8).unwrap();
    let across_wide = GraspPose::new(down, Vec3::new(0.0, 0.0, 0.01));

    let slab = make_primitive(&Primitive::Box { x: 0.1, y: 0.1, z: 0.05 }, 8).unwrap();
    let flat = GraspPose::new(down, Vec3::new(0.0, 0.0, 0.04));
    let tilted = GraspPose::new(down.compose(&Rotation::about_x(30f64.to_radians())), Vec3::new(0.0, 0.0, 0.035));
    let cube = make_primitive(&Primitive::Box { x: 0.1, y: 0.1, z: 0.1 }, 8).unwrap();
    // cup axis along the bisector of the edge at x = z = 0.05
    let approach = Vec3::new(-1.0, 0.0, -1.0).normalize();
    let edge_r = Rotation::new(Matrix3::from_columns(&[Vec3::y(), approach.cross(&Vec3::y()), approach])).unwrap();
    let on_edge = GraspPose::new(edge_r, Vec3::new(0.05, 0.0, 0.05) - approach * 0.01);

    vec![
        ("cylinder centered, jaws on a diameter: positive", label_antipodal(&cylinder, &centered, &jaw) == Label::Positive),
        ("cylinder grasp displaced 10 cm: negative", label_antipodal(&cylinder, &displaced, &jaw) == Label::Negative),
        ("box wider than the opening: negative", label_antipodal(&wide, &across_wide, &jaw) == Label::Negative),
        ("suction centered on a flat face: positive", label_suction(&slab, &flat, &cup) == Label::Positive),
        ("suction on a 90 degree edge: negative", label_suction(&cube, &on_edge, &cup) == Label::Negative),
        ("suction 30 degrees off the normal: negative", label_suction(&slab, &tilted, &cup) == Label::Negative),
    ]
}

/// Counts label changes when mesh and grasps are moved by the same rigid
/// transform. Returns (changes, checks, positives among the base labels).
pub fn oracle_invariance(transforms: usize, grasps_per_case: usize, seed: u64) -> Result<(usize, usize, usize)> {
    use graspgen::oracle::{AnalyticOracle, GraspOracle, GripperModel, ProposalMix};
    use graspgen::se3::{Rotation, Vec3};
    use graspgen::shape::{make_primitive, Primitive};
    use rand::Rng as _;
    let meshes = [
        make_primitive(&Primitive::Box { x: 0.05, y: 0.07, z: 0.1 }, 8)?,
        make_primitive(&Primitive::Cylinder { radius: 0.025, height: 0.12 }, 24)?,
        make_primitive(&Primitive::Sphere { radius: 0.035 }, 16)?,
    ];
    let mut r = graspgen::rng::rng(seed);
    let (mut changes, mut checks, mut positives) = (0, 0, 0);
    for gripper in [GripperModel::parallel_jaw(), GripperModel::suction()] {
        let oracle = AnalyticOracle::new(gripper)?;
        for (m, mesh) in meshes.iter().enumerate() {
            // half positives where available, the rest negatives
            let pool = ProposalMix::default().propose(mesh, 600, &gripper, seed + m as u64)?;
            let labels: Vec<bool> = pool.iter().map(|g| oracle.label(mesh, g).is_positive()).collect();
            let mut pick: Vec<usize> = (0..pool.len()).filter(|&i| labels[i]).take(grasps_per_case / 2).collect();
            pick.extend((0..pool.len()).filter(|&i| !labels[i]).take(grasps_per_case - pick.len()));
            positives += pick.iter().filter(|&&i| labels[i]).count();
            for _ in 0..transforms {
                let t = GraspPose::new(
                    Rotation::random(&mut r),
                    Vec3::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)),
                );
                let moved = mesh.transformed(&t);
                for &i in &pick {
                    checks += 1;
                    if oracle.label(&moved, &t.compose(&pool[i])).is_positive() != labels[i] {
                        changes += 1;
                    }
                }
            }
        }
    }
    Ok((changes, checks, positives))
}

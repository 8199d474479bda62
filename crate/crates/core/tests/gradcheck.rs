mod common;

use common::FD_REL as TOL;

#[test]
fn every_op_matches_central_differences() {
    for (op, err) in common::op_gradchecks().unwrap() {
        assert!(err < TOL, "{op}: relative error {err:e}");
    }
}

#[test]
fn encoder_and_heads_match_central_differences() {
    for (net, err, n) in common::network_gradchecks(3).unwrap() {
        assert!(n > 100, "{net}: only {n} entries checked");
        eprintln!("{net}: {n} entries, worst {err:e}");
        assert!(err < TOL, "{net}: relative error {err:e}");
    }
}

#[test]
fn frozen_encoder_gets_no_gradient() {
    use graspgen::autodiff::Graph;
    use graspgen::discriminator::{classification_loss, Discriminator};
    let gen = common::tiny_generator(1);
    let disc = Discriminator::new(&gen, 2).unwrap();
    let cloud = common::small_box_cloud(16, 3);
    let grasps = common::random_grasps(4, 4);
    let mut g = Graph::new();
    let l = classification_loss(&disc, &mut g, &cloud, &grasps, &[1.0, 0.0, 1.0, 0.0]).unwrap();
    g.backward(l).unwrap();
    assert!(g.param_grads(&disc.encoder_store).iter().flatten().all(|&x| x == 0.0));
    assert!(g.param_grads(&disc.head_store).iter().flatten().any(|&x| x != 0.0));
}

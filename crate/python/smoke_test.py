"""Smoke test for the graspgen_py extension.

    pip install maturin
    maturin build --release -m crates/py/Cargo.toml
    pip install target/wheels/graspgen_py-*.whl
    python python/smoke_test.py [generator.ggck]

With a checkpoint argument it also samples grasps from that generator.
"""

import math
import pathlib
import sys

import graspgen_py as gg

ROOT = pathlib.Path(__file__).resolve().parent.parent


def pose(rot, t):
    return [list(rot[0]) + [t[0]], list(rot[1]) + [t[1]], list(rot[2]) + [t[2]], [0.0, 0.0, 0.0, 1.0]]


def main():
    w = [0.3, -1.2, 0.4]
    back = gg.log_so3(gg.exp_so3(w))
    assert max(abs(a - b) for a, b in zip(w, back)) < 1e-12, back

    eye = gg.exp_so3([0.0, 0.0, 0.0])
    a = pose(eye, [0.0, 0.0, 0.0])
    b = pose(eye, [0.02, 0.0, 0.0])
    assert abs(gg.pose_distance(a, b) - 0.02) < 1e-12
    assert gg.coverage([a], [a, b]) == 0.5
    te, re = gg.pose_errors([b], [a])
    assert abs(te - 0.02) < 1e-12 and re == 0.0
    assert gg.emd([a, b], [a, b], n_sub=2, repeats=1) == 0.0

    tilted = pose(gg.exp_so3([0.0, math.pi / 2, 0.0]), [0.0, 0.0, 0.0])
    labels = gg.label_grasps("cylinder", [0.03, 0.1], [a, tilted, b])
    assert len(labels) == 3 and all(isinstance(x, bool) for x in labels)

    h = gg.config_hash(str(ROOT / "configs" / "tiny.cfg"))
    assert len(h) == 16 and h != gg.config_hash()

    try:
        gg.label_grasps("torus", [0.1], [a])
    except ValueError:
        pass
    else:
        raise AssertionError("unknown shape accepted")

    if len(sys.argv) > 1:
        gen = gg.Generator.load(sys.argv[1])
        cloud = [[0.03 * math.cos(k), 0.03 * math.sin(k), 0.01 * (k % 5)] for k in range(128)]
        grasps = gen.sample(cloud, 8, seed=1)
        assert len(grasps) == 8 and all(len(g) == 4 for g in grasps)
        print(f"sampled 8 grasps, kappa {gen.kappa:.3f}")

    print("smoke test ok")


if __name__ == "__main__":
    main()

#!/usr/bin/env python3
"""Smoke test for the desq_py extension module.

Builds the cdylib with cargo, loads it, and exercises training, prediction,
feature weights, retraining, and the baseline from Python.

Usage: python3 python/smoke_test.py [--release]
"""

import random
import shutil
import subprocess
import sys
import tempfile
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent


def build_extension(release: bool) -> Path:
    cmd = ["cargo", "build", "-p", "desq-py"]
    profile = "debug"
    if release:
        cmd.append("--release")
        profile = "release"
    subprocess.run(cmd, cwd=REPO, check=True)
    built = REPO / "target" / profile / "libdesq_py.so"
    if not built.exists():  # macOS fallback
        built = REPO / "target" / profile / "libdesq_py.dylib"
    stage = Path(tempfile.mkdtemp(prefix="desq_py_"))
    target = stage / "desq_py.so"
    shutil.copy2(built, target)
    return stage


def make_blobs(n, seed):
    rng = random.Random(seed)
    xs, ys = [], []
    for _ in range(n):
        cls = rng.random() < 0.5
        shift = 2.5 if cls else 0.0
        xs.append([shift + rng.random(), rng.random()])
        ys.append(float(cls))
    return xs, ys


def main() -> int:
    release = "--release" in sys.argv
    stage = build_extension(release)
    sys.path.insert(0, str(stage))
    import desq_py

    xs, ys = make_blobs(200, seed=7)
    ds = desq_py.Dataset(xs, ys, "classify", feature_names=["signal", "noise"])
    assert ds.n_rows == 200 and ds.n_cols == 2

    model = desq_py.train(ds, depth=2, clusters=2, seed=1)
    print(f"trained: {model.tree_size()} nodes, depth {model.depth()}, rows {model.n_rows()}")

    # the separable blobs should classify essentially perfectly
    preds = model.predict_batch(xs)
    acc = sum(p == y for p, y in zip(preds, ys)) / len(ys)
    print(f"train accuracy: {acc:.3f}")
    assert acc > 0.95, f"expected near-perfect separation, got {acc}"

    # correlation weights single out the signal feature, unit-norm overall
    raw, norm = model.feature_weights()
    print(f"weights: raw={['%.3f' % w for w in raw]} normalized={['%.3f' % w for w in norm]}")
    assert norm[0] > norm[1], "signal feature should dominate"
    assert abs(sum(w * w for w in norm) - 1.0) < 1e-9

    # retraining appends rows and rebuilds
    xs_new, ys_new = make_blobs(40, seed=8)
    model.retrain(xs_new, ys_new)
    assert model.n_rows() == 240
    preds_new = model.predict_batch(xs_new)
    acc_new = sum(p == y for p, y in zip(preds_new, ys_new)) / len(ys_new)
    print(f"post-retrain accuracy on new rows: {acc_new:.3f}")
    assert acc_new > 0.9

    # the ledger report carries a populated retrain section
    report = model.ledger_report()
    retrain_writes = next(
        int(line.split("\t")[2])
        for line in report.splitlines()
        if line.startswith("retrain\tnode_writes")
    )
    assert retrain_writes > 0, "retrain phase should record forest writes"

    # determinism: identical seeds give identical predictions
    m1 = desq_py.train(ds, depth=2, clusters=3, seed=42)
    m2 = desq_py.train(ds, depth=2, clusters=3, seed=42)
    assert m1.predict_batch(xs) == m2.predict_batch(xs)
    assert m1.dump_tree() == m2.dump_tree()

    # regression path with label rescaling back to original units
    xr = [[float(i)] for i in range(60)]
    yr = [20.0 + 3.0 * i for i in range(60)]
    reg = desq_py.Dataset(xr, yr, "regress")
    rmodel = desq_py.train(reg, depth=2, clusters=2, seed=3)
    mid = rmodel.predict([30.0])
    print(f"regression prediction at x=30: {mid:.1f}")
    assert 20.0 <= mid <= 200.0

    # baseline comparator
    base = desq_py.train_baseline(ds, depth=2)
    base_acc = sum(base.predict(x) == y for x, y in zip(xs, ys)) / len(ys)
    print(f"baseline train accuracy: {base_acc:.3f} (size {base.tree_size()})")
    assert base_acc > 0.95

    # noisy estimator mode stays usable end to end
    noisy = desq_py.train(ds, depth=1, clusters=2, seed=1, method="ae", eps1=0.01)
    noisy_acc = sum(p == y for p, y in zip(noisy.predict_batch(xs), ys)) / len(ys)
    print(f"ae-mode train accuracy: {noisy_acc:.3f}")
    assert noisy_acc > 0.9

    print("smoke test passed")
    return 0


if __name__ == "__main__":
    sys.exit(main())

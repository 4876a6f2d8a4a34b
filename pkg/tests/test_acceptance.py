"""Acceptance suite: one test per criterion, each at its stated tolerance.

The conftest hook prints a PASS/FAIL line per criterion at the end of the
run.  Wall-clock budgets are asserted where the criterion states one.
"""

import math
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
from helpers import fd_grad, margin_safe_input, rel_err

from subgridboost.boosting import (
    compute_boost_weights,
    line_search,
    risk_of_scores,
)
from subgridboost.checkpoint import load_checkpoint, save_checkpoint
from subgridboost.data import (
    load_cifar10_binary,
    load_idx,
    write_cifar10_binary,
    write_idx,
)
from subgridboost.harness import DatasetSpec, RunConfig, load_dataset, run_experiment
from subgridboost.learners import build_basic_learner, build_probe
from subgridboost.nn import (
    Network,
    conv_spec,
    dense_spec,
    flatten_spec,
    mse_loss,
    pool_spec,
    relu_spec,
)
from subgridboost.subgrid import ImportanceMap, select_subgrid


def _build(specs, geometry, split, seed):
    rng = np.random.default_rng(seed)
    layers = []
    geom = tuple(geometry)
    for spec in specs:
        layer = spec.build(geom, rng)
        geom = layer.out_geometry(geom)
        layers.append(layer)
    return Network(layers, split)


def test_weight_algebra():
    # 1e5 random (scores, label, class-count) triples in under 5 seconds
    start = time.perf_counter()
    rng = np.random.default_rng(2024)
    total = 0
    worst_sum = 0.0
    while total < 100_000:
        m = int(rng.integers(2, 101))
        n = min(2000, 100_000 - total)
        scores = rng.normal(size=(n, m))
        labels = rng.integers(1, m + 1, size=n)
        w = compute_boost_weights(scores, labels)
        worst_sum = max(worst_sum, float(np.abs(w.sum(axis=1)).max()))
        idx = np.arange(n)
        assert np.all(w[idx, labels - 1] > 0)
        off = w.copy()
        off[idx, labels - 1] = -1.0
        assert np.all(off < 0)
        total += n
    assert worst_sum < 1e-12, worst_sum
    assert time.perf_counter() - start < 5.0


def test_functional_gradient_oracle():
    # closed form vs central-difference directional derivative, 200 instances
    from subgridboost.boosting import functional_gradient

    start = time.perf_counter()
    rng = np.random.default_rng(7)
    eps = 1e-5
    for _ in range(200):
        n = int(rng.integers(2, 12))
        m = int(rng.integers(2, 8))
        base = rng.normal(size=(n, m))
        g = rng.normal(size=(n, m))
        labels = rng.integers(1, m + 1, size=n)
        w = compute_boost_weights(base, labels)
        analytic = functional_gradient(g, w)
        numeric = (
            risk_of_scores(base + eps * g, labels) - risk_of_scores(base - eps * g, labels)
        ) / (2 * eps)
        assert abs(analytic - numeric) / max(abs(numeric), 1.0) < 1e-4
    assert time.perf_counter() - start < 30.0


def test_gradient_checks():
    # every layer kind plus the importance-map input-gradient path, 20 seeds
    start = time.perf_counter()
    for seed in range(20):
        rng = np.random.default_rng(1000 + seed)

        # conv2d parameters and input (smooth, no guard needed)
        net = _build([conv_spec(3, 3, pad=1)], (2, 5, 5), 1, seed)
        x = rng.normal(size=(2, 2, 5, 5))
        u = rng.normal(size=(2, 3, 5, 5))

        def loss():
            return float(np.sum(net.forward(x) * u))

        net.forward(x)
        net.zero_grad()
        gin = net.backward(u, wrt_input=True)
        for p in net.params():
            assert rel_err(p.grad, fd_grad(loss, p.data)) < 1e-4
        assert rel_err(gin, fd_grad(loss, x)) < 1e-4

        # dense
        net = _build([dense_spec(4)], (6,), 0, seed)
        x = rng.normal(size=(3, 6))
        u = rng.normal(size=(3, 4))
        net.forward(x)
        net.zero_grad()
        gin = net.backward(u, wrt_input=True)
        for p in net.params():
            assert rel_err(p.grad, fd_grad(loss, p.data)) < 1e-4
        assert rel_err(gin, fd_grad(loss, x)) < 1e-4

        # full stack: conv + relu + maxpool + flatten + dense, margin-guarded
        net = _build(
            [conv_spec(2, 3, pad=1), relu_spec(), pool_spec(2), flatten_spec(), dense_spec(3)],
            (1, 6, 6),
            4,
            seed,
        )
        x = margin_safe_input(net, rng, (2, 1, 6, 6))
        u = rng.normal(size=(2, 3))
        net.forward(x)
        net.zero_grad()
        gin = net.backward(u, wrt_input=True)
        for p in net.params():
            assert rel_err(p.grad, fd_grad(loss, p.data)) < 1e-4
        assert rel_err(gin, fd_grad(loss, x)) < 1e-4

        # importance-map path: input gradient of the squared-error loss
        # against boost weights, through a probe network
        basic = build_basic_learner("tiny-cnn-2conv", (1, 8, 8), 3, seed)
        probe = build_probe(basic, basic)
        x = margin_safe_input(probe, rng, (2, 1, 8, 8))
        w = compute_boost_weights(np.zeros((2, 3)), rng.integers(1, 4, size=2))

        def importance_loss():
            return mse_loss(probe.forward(x), w)[0]

        pred = probe.forward(x)
        _, grad = mse_loss(pred, w)
        gin = probe.backward(grad, wrt_input=True)
        assert rel_err(gin, fd_grad(importance_loss, x)) < 1e-4
    assert time.perf_counter() - start < 120.0


def test_line_search_oracle():
    base = np.zeros((3, 2))
    g = np.tile([1.0, -1.0], (3, 1))
    alpha = line_search(base, g, np.array([1, 1, 2]))
    assert abs(alpha - math.log(2.0) / 2.0) <= 1e-5

    sym = line_search(np.zeros((2, 2)), np.tile([1.0, -1.0], (2, 1)), np.array([1, 2]))
    assert abs(sym) <= 1e-6

    aligned = line_search(np.zeros((1, 2)), np.array([[1.0, -1.0]]), np.array([1]), alpha_max=10.0)
    assert aligned == 10.0


def test_retention_arithmetic():
    imp = ImportanceMap(32, 32)
    imp.values[:] = np.random.default_rng(0).random((32, 32))
    mask = select_subgrid(imp, 0.9, 0.9)
    assert mask.pixel_count == 841
    retention = mask.pixel_count / (32 * 32)
    assert abs(retention - 0.821) < 0.001  # "about 81%" of the pixels


TINY_SPEC = DatasetSpec(
    "synthetic", n_train=300, n_test=150, geometry=(1, 12, 12), n_classes=3,
    difficulty=0.8, data_seed=11,
)


def test_degeneracy_collapses():
    cfg = RunConfig(
        method="subgrid-boostcnn", dataset=TINY_SPEC, nb=3, epochs=2, nu=0.5,
        keep_rows=1.0, keep_cols=1.0, lr=3e-3, weight_decay=1e-4, batch_size=32, seed=4,
    )
    full = run_experiment(cfg)
    plain = run_experiment(replace(cfg, method="boostcnn"))
    for a, b in zip(full.record.rounds, plain.record.rounds):
        assert abs(a.train_risk - b.train_risk) <= 1e-10

    damped = run_experiment(replace(cfg, nu=0.0, keep_rows=0.8, keep_cols=0.8))
    _, test, _ = load_dataset(TINY_SPEC)
    ens = damped.ensemble
    assert np.array_equal(ens.scores(test.inputs), ens.basic.net.forward(test.inputs))


def test_monotone_risk():
    # 5 boosting rounds on the localized-signal set: risk never increases
    start = time.perf_counter()
    spec = DatasetSpec(
        "synthetic", n_train=2000, n_test=500, geometry=(1, 16, 16), n_classes=4,
        difficulty=1.0, data_seed=5,
    )
    cfg = RunConfig(
        method="subgrid-boostcnn", dataset=spec, nb=5, epochs=3, nu=0.5,
        keep_rows=0.75, keep_cols=0.75, lr=3e-3, weight_decay=1e-4, batch_size=64, seed=1,
    )
    result = run_experiment(cfg)
    risks = [rm.train_risk for rm in result.record.rounds]
    initial = float(spec.n_classes - 1)  # risk of the zero predictor
    assert risks[0] <= initial
    for before, after in zip(risks, risks[1:]):
        assert after <= before + 1e-12, risks
    assert time.perf_counter() - start < 600.0


TREND_SPEC = DatasetSpec(
    "synthetic", n_train=1500, n_test=1500, geometry=(1, 16, 16), n_classes=4,
    difficulty=1.25, data_seed=7,
)
TREND_CFG = RunConfig(
    method="boostcnn", dataset=TREND_SPEC, nb=8, epochs=3, nu=0.2,
    keep_rows=0.65, keep_cols=0.65, lr=3e-3, weight_decay=1e-4, batch_size=64, seed=0,
)
TREND_SEEDS = (1, 2, 3)


def test_trend_reproduction():
    # matched budget (nb * epochs for every method); median over 3 seeds
    start = time.perf_counter()
    finals = {}
    for method in ("subgrid-boostcnn", "boostcnn", "single-cnn", "subgrid-ecnn"):
        finals[method] = [
            run_experiment(replace(TREND_CFG, method=method, seed=s)).record.final_accuracy
            for s in TREND_SEEDS
        ]
    med = {m: float(np.median(a)) for m, a in finals.items()}
    assert med["subgrid-boostcnn"] >= med["boostcnn"] >= med["single-cnn"], med
    std_boost = float(np.std(finals["subgrid-boostcnn"], ddof=1))
    std_ecnn = float(np.std(finals["subgrid-ecnn"], ddof=1))
    assert std_boost <= std_ecnn, (std_boost, std_ecnn)
    assert time.perf_counter() - start < 3600.0


def test_persistence_roundtrip(tmp_path):
    cfg = RunConfig(
        method="subgrid-boostcnn", dataset=TINY_SPEC, nb=3, epochs=1, nu=0.5,
        keep_rows=0.7, keep_cols=0.7, lr=3e-3, weight_decay=1e-4, batch_size=32, seed=9,
    )
    ens = run_experiment(cfg).ensemble
    path = tmp_path / "ens.sgbc"
    save_checkpoint(ens, path)
    back = load_checkpoint(path)
    x = np.random.default_rng(3).normal(size=(100, 1, 12, 12))
    np.testing.assert_array_equal(ens.scores(x), back.scores(x))


def test_format_fidelity(tmp_path):
    rng = np.random.default_rng(1)

    # CIFAR-10 records round-trip bit-exactly
    records = rng.integers(0, 256, size=(12, 3073), dtype=np.uint8)
    records[:, 0] = rng.integers(0, 10, size=12)
    src = tmp_path / "cifar.bin"
    src.write_bytes(records.tobytes())
    again = tmp_path / "cifar2.bin"
    write_cifar10_binary(again, load_cifar10_binary(src))
    assert src.read_bytes() == again.read_bytes()

    # IDX pair round-trips bit-exactly
    import struct

    images = rng.integers(0, 256, size=(6, 5, 4), dtype=np.uint8)
    labels = rng.integers(0, 9, size=6, dtype=np.uint8)
    ip, lp = tmp_path / "i.idx", tmp_path / "l.idx"
    with open(ip, "wb") as fh:
        fh.write(struct.pack(">IIII", 0x803, 6, 5, 4))
        fh.write(images.tobytes())
    with open(lp, "wb") as fh:
        fh.write(struct.pack(">II", 0x801, 6))
        fh.write(labels.tobytes())
    batch = load_idx(ip, lp)
    ip2, lp2 = tmp_path / "i2.idx", tmp_path / "l2.idx"
    write_idx(ip2, lp2, batch)
    assert ip.read_bytes() == ip2.read_bytes()
    assert lp.read_bytes() == lp2.read_bytes()

    # a real CIFAR-10 test batch, when present, holds exactly 10000 samples
    for candidate in (
        Path(__file__).resolve().parent.parent / "datasets/cifar-10-batches-bin/test_batch.bin",
        Path("/root/data/cifar-10-batches-bin/test_batch.bin"),
    ):
        if candidate.exists():
            assert len(load_cifar10_binary(candidate)) == 10000
            break

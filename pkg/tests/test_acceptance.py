"""Acceptance suite: one test per criterion, each printing a PASS line.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion
lines as they complete. Stated runtime budgets are asserted.
"""
import itertools
import time
from fractions import Fraction

import numpy as np
import pytest

from quantevo import (
    Model,
    MutationConfig,
    Tensor,
    complexity,
    conv,
    cycle_ratio,
    dense,
    derive_scheme,
    finetune_layer,
    finetune_model,
    forward,
    make_evaluator,
    make_teacher_fixture,
    quantize,
    quantize_model,
    sample_mask,
    sample_steps,
    sensitivity_rank,
    set_layer_weights,
    spawn_rng,
)
from quantevo.cli import main


def _report(n: int, label: str) -> None:
    print(f"ACCEPTANCE {n} ({label}): PASS")


def _exhaustive_nearest(x: np.ndarray, scheme) -> np.ndarray:
    """Independent oracle: argmin over every representable grid value,
    ties away from zero."""
    grid = np.arange(scheme.code_min, scheme.code_max + 1) * scheme.sigma
    out = np.empty(x.size)
    for i, xi in enumerate(x.ravel()):
        d = np.abs(grid - xi)
        nearest = grid[d == d.min()]
        out[i] = nearest[np.argmax(np.abs(nearest))]
    return out.reshape(x.shape)


def test_criterion_1_quantizer_exactness():
    start = time.perf_counter()
    rng = np.random.Generator(np.random.PCG64(101))
    for _ in range(1000):
        bits = int(rng.integers(2, 9))
        scale = float(rng.uniform(0.01, 50.0))
        x = Tensor(rng.normal(0.0, scale, size=12))
        scheme = derive_scheme(x, bits)
        q = quantize(x, scheme).weights

        np.testing.assert_array_equal(q.data, _exhaustive_nearest(x.data, scheme))

        lo, hi = scheme.code_min * scheme.sigma, scheme.code_max * scheme.sigma
        in_range = (x.data >= lo) & (x.data <= hi)
        assert np.all(np.abs(q.data - x.data)[in_range] <= scheme.sigma / 2)

        assert quantize(q, scheme).weights.equals(q)
    elapsed = time.perf_counter() - start
    assert elapsed < 10.0, f"criterion 1 took {elapsed:.1f}s"
    _report(1, "quantizer exactness vs exhaustive oracle")


def test_criterion_2_scheme_derivation_worked_cases():
    s = derive_scheme(Tensor([0.75]), 8)
    assert (s.int_bits, s.frac_bits) == (0, 7)
    s = derive_scheme(Tensor([4.0]), 8)
    assert (s.int_bits, s.frac_bits) == (2, 5)
    _report(2, "scheme derivation worked cases")


def test_criterion_3_complexity_model():
    # conv layer with C=2, D=3, 3x3 kernel on a 4x4 input -> P=4 output map
    model = Model((conv("c", np.ones((3, 2, 3, 3)), stride=1, padding=0),), (2, 4, 4))
    report = complexity(model, 8, 8)
    assert report.layers[0].mac_count == 4 * 2 * 3 * 3 * 3 == 216
    assert report.layers[0].memory_words == 2 * 3 * 3 * 3 == 54

    assert cycle_ratio(8, 8) == Fraction(1, 9)
    assert cycle_ratio(8, 16) == Fraction(2, 9)
    assert cycle_ratio(4, 8) < cycle_ratio(8, 8) / 2
    _report(3, "complexity MACs, memory, cycle ratios")


def test_criterion_4_mutation_statistics():
    start = time.perf_counter()
    cfg = MutationConfig()

    steps = sample_steps((100_000,), cfg, spawn_rng(202, "steps"))
    values, counts = np.unique(steps.data, return_counts=True)
    freqs = dict(zip(values.tolist(), (counts / steps.size).tolist()))
    assert set(freqs) <= {-2.0, -1.0, 1.0, 2.0}
    assert abs(freqs[-1.0] - 0.4) <= 0.01
    assert abs(freqs[1.0] - 0.4) <= 0.01
    assert abs(freqs[-2.0] - 0.1) <= 0.01
    assert abs(freqs[2.0] - 0.1) <= 0.01

    mask = sample_mask((1_000_000,), 0.02, spawn_rng(202, "mask"))
    assert abs(mask.data.mean() - 0.02) <= 0.001

    elapsed = time.perf_counter() - start
    assert elapsed < 5.0, f"criterion 4 took {elapsed:.1f}s"
    _report(4, "mutation statistics")


def test_criterion_5_grid_closure_and_elitism():
    model, data = make_teacher_fixture(16, [64, 32, 10], 600, seed=3)
    evaluator = make_evaluator(data, "agreement")
    qmodel, schemes = quantize_model(model, 4)
    ranking = sensitivity_rank(model, evaluator, 4)
    cfg = MutationConfig(p=0.02, population_size=8, iterations=12, seed=3)
    tuned, histories = finetune_model(qmodel, ranking, schemes, cfg, evaluator)

    for name, scheme in schemes.items():
        codes = tuned.layer(name).weights.data / scheme.sigma
        np.testing.assert_array_equal(codes, np.round(codes))
        assert codes.min() >= scheme.code_min
        assert codes.max() <= scheme.code_max

    for history in histories.values():
        best = [r.best_fitness for r in history]
        assert all(b2 >= b1 for b1, b2 in zip(best, best[1:]))
    _report(5, "grid closure and exact elitism monotonicity")


def test_criterion_6_micro_oracle_optimality():
    start = time.perf_counter()
    hits = 0
    for seed in range(20):
        rng = np.random.Generator(np.random.PCG64(1000 + seed))
        w = rng.normal(0.0, 1.0, size=(2, 2))
        probes = Tensor(rng.standard_normal((64, 2)))
        float_model = Model((dense("lin", w),), (2,))
        teacher = np.argmax(forward(float_model, probes).data, axis=1)

        def agreement(m):
            out = forward(m, probes).data
            return float(np.mean(np.argmax(out, axis=1) == teacher))

        scheme = derive_scheme(Tensor(w), 3)
        nn = quantize(Tensor(w), scheme)
        base_codes = nn.codes().ravel()

        # exhaustive +-2 LSB neighbourhood of the rounded point (5^4 states)
        best_oracle = -1.0
        for offs in itertools.product(range(-2, 3), repeat=4):
            codes = np.clip(base_codes + np.array(offs), scheme.code_min, scheme.code_max)
            cand = Tensor((codes * scheme.sigma).reshape(2, 2))
            best_oracle = max(best_oracle, agreement(set_layer_weights(float_model, "lin", cand)))

        qmodel = set_layer_weights(float_model, "lin", nn.weights)
        cfg = MutationConfig(p=0.5, population_size=8, iterations=40, seed=seed)
        _, history = finetune_layer(qmodel, "lin", scheme, cfg, agreement)
        if history[-1].best_fitness >= best_oracle:
            hits += 1
    elapsed = time.perf_counter() - start
    assert hits >= 18, f"reached the oracle optimum in only {hits}/20 seeds"
    assert elapsed < 30.0, f"criterion 6 took {elapsed:.1f}s"
    _report(6, f"micro-scale oracle optimality ({hits}/20 seeds)")


def test_criterion_7_desk_scale_improvement_over_nearest_neighbour():
    start = time.perf_counter()
    strict_wins = 0
    floor_holds = 0
    pairs = []
    for seed in range(10):
        model, data = make_teacher_fixture(16, [64, 32, 10], 2000, seed=seed)
        evaluator = make_evaluator(data, "agreement")
        qmodel, schemes = quantize_model(model, 4)
        a_nn = evaluator(qmodel)  # measured baseline, not asserted a priori
        assert a_nn < 1.0
        ranking = sensitivity_rank(model, evaluator, 4)
        cfg = MutationConfig(p=0.02, population_size=16, iterations=32, seed=seed)
        tuned, _ = finetune_model(qmodel, ranking, schemes, cfg, evaluator)
        a_ft = evaluator(tuned)
        strict_wins += a_ft > a_nn
        floor_holds += a_ft >= a_nn
        pairs.append((a_nn, a_ft))
    elapsed = time.perf_counter() - start
    assert floor_holds == 10, f"elitism floor broken: {pairs}"
    assert strict_wins >= 9, f"strict improvement in only {strict_wins}/10 seeds: {pairs}"
    assert elapsed < 120.0, f"criterion 7 took {elapsed:.1f}s"
    _report(7, f"desk-scale fine-tuning beats rounding ({strict_wins}/10 strict wins)")


def test_criterion_8_sensitivity_matches_bruteforce():
    rng = np.random.Generator(np.random.PCG64(404))
    w0 = rng.normal(0, 0.4, size=(5, 8))
    w1 = rng.normal(0, 6.0, size=(8, 8))  # wide range: quantizes badly
    w2 = rng.normal(0, 0.4, size=(8, 3))
    model = Model((dense("L0", w0), dense("L1", w1), dense("L2", w2)), (5,))
    probes = Tensor(rng.standard_normal((300, 5)))
    teacher = np.argmax(forward(model, probes).data, axis=1)

    def evaluator(m):
        return float(np.mean(np.argmax(forward(m, probes).data, axis=1) == teacher))

    # independent brute force over the three solo-quantized models
    brute = []
    for name in ("L0", "L1", "L2"):
        w = model.layer(name).weights
        solo = set_layer_weights(model, name, quantize(w, derive_scheme(w, 4)).weights)
        brute.append((name, evaluator(solo)))
    expected = [n for n, _ in sorted(brute, key=lambda t: -t[1])]

    ranking = sensitivity_rank(model, evaluator, 4)
    assert ranking.layer_names() == expected
    assert [e.metric for e in ranking.entries] == sorted((m for _, m in brute), reverse=True)
    _report(8, "sensitivity ranking equals brute force")


def test_criterion_9_reproducibility_of_finetune_runs(tmp_path):
    fx = tmp_path / "fx"
    assert main(["fixture", "--arch", "12-8-4", "--input-dim", "6", "--samples", "400",
                 "--seed", "5", "--out", str(fx)]) == 0
    q = tmp_path / "q"
    assert main(["quantize", "--model", str(fx / "model.qemodel"), "--total-bits", "4",
                 "--out", str(q)]) == 0

    def run(out, workers):
        rc = main([
            "finetune",
            "--model", str(q / "quantized.qemodel"),
            "--schemes", str(q / "schemes.json"),
            "--data", str(fx / "data.csv"),
            "--metric", "agreement",
            "--population", "6",
            "--iterations", "8",
            "--mutation-p", "0.05",
            "--seed", "5",
            "--workers", str(workers),
            "--out", str(out),
        ])
        assert rc == 0

    a, b = tmp_path / "run_a", tmp_path / "run_b"
    run(a, workers=1)
    run(b, workers=1)
    # identical manifests modulo the output directory itself
    ma = (a / "manifest.json").read_text().replace(str(a), "OUT")
    mb = (b / "manifest.json").read_text().replace(str(b), "OUT")
    assert ma == mb
    assert (a / "finetuned.qemodel").read_bytes() == (b / "finetuned.qemodel").read_bytes()
    histories = sorted(p.name for p in a.glob("history_*.csv"))
    assert histories
    for name in histories:
        assert (a / name).read_bytes() == (b / name).read_bytes()

    # replaying the recorded manifest reproduces the outputs bit-exactly
    replay = tmp_path / "run_replay"
    assert main(["finetune", "--config", str(a / "manifest.json"), "--out", str(replay)]) == 0
    assert (replay / "finetuned.qemodel").read_bytes() == (a / "finetuned.qemodel").read_bytes()

    # parallel candidate evaluation cannot change any output byte
    par = tmp_path / "run_parallel"
    run(par, workers=4)
    assert (par / "finetuned.qemodel").read_bytes() == (a / "finetuned.qemodel").read_bytes()
    for name in histories:
        assert (par / name).read_bytes() == (a / name).read_bytes()
    _report(9, "byte-identical finetune runs, serial and parallel")

"""End-to-end acceptance checks.

Each test carries an ``acceptance`` marker; the pytest summary prints one
PASS/FAIL line per criterion. Run alone with::

    pytest tests/test_acceptance.py -v

The first three criteria need the KDD Cup 99 10% training file. Point
``WHALEFS_KDD10`` at it, or place it at ``data/kddcup.data_10_percent`` (or
``.gz``) in the repository root. Without it those three fail.
"""

from __future__ import annotations

import csv
import json
import os
import tempfile
import time
from fractions import Fraction
from functools import lru_cache
from pathlib import Path

import numpy as np
import pytest

from whalefs.classifier import KNNClassifier
from whalefs.cli import ExperimentConfig, main, run_experiment, subsample
from whalefs.dataset import generate_synthetic
from whalefs.fitness import FitnessEvaluator, exhaustive_optimum
from whalefs.metrics import (
    ConfusionMatrix,
    accuracy,
    error_rate,
    f_measure,
    precision,
    sensitivity,
)
from whalefs.optimizer import ConvergenceLog, OptimizerConfig, run

from kddlike import write_kdd_like

SEEDS = range(10)
REPO = Path(__file__).resolve().parent.parent
KDD_CANDIDATES = ("data/kddcup.data_10_percent", "data/kddcup.data_10_percent.gz")

# every convergence log produced below, keyed by run label
LOGS: dict[str, ConvergenceLog] = {}


def kdd10_path() -> Path:
    env = os.environ.get("WHALEFS_KDD10")
    candidates = [Path(env)] if env else [REPO / c for c in KDD_CANDIDATES]
    for path in candidates:
        if path.is_file():
            return path
    pytest.fail("KDD Cup 99 10% file not found (set WHALEFS_KDD10 or add "
                "data/kddcup.data_10_percent[.gz]); criterion cannot be checked")


# -- shared runs -------------------------------------------------------------

@lru_cache(maxsize=None)
def desk_runs() -> dict:
    """Seeds 0-9 on a stratified 5,000-row subsample: pop 20, 100 iterations."""
    source = kdd10_path()
    work = Path(tempfile.mkdtemp(prefix="whalefs-desk-"))
    sample = work / "kdd5000.txt"
    subsample(source, 5000, seed=0, out_path=sample)
    results = {}
    for seed in SEEDS:
        out = work / f"seed{seed}"
        cfg = ExperimentConfig(train=str(sample), out=str(out), pop=20, iters=100,
                               alpha=0.99, seed=seed, baselines=("all_features",))
        start = time.perf_counter()
        manifest = run_experiment(cfg)
        elapsed = time.perf_counter() - start
        conv = ConvergenceLog.from_csv((out / "convergence.csv").read_text())
        LOGS[f"kdd seed {seed}"] = conv
        with open(out / "baselines.csv") as fh:
            rows = {r["name"]: r for r in csv.DictReader(fh)}
        results[seed] = {"log": conv, "seconds": elapsed, "manifest": manifest, "rows": rows}
    return results


@pytest.fixture(scope="module")
def desk():
    return desk_runs()


@lru_cache(maxsize=None)
def recovery_runs() -> dict:
    out = {}
    for seed in SEEDS:
        data = generate_synthetic(400, 41, range(5), noise_sd=0.05, seed=seed)
        best, conv = run(data, OptimizerConfig(population=20, iterations=50, seed=seed))
        LOGS[f"recovery seed {seed}"] = conv
        out[seed] = best.mask
    return out


@lru_cache(maxsize=None)
def toy_runs() -> dict:
    out = {}
    for seed in SEEDS:
        data = generate_synthetic(200, 4, (0, 2), noise_sd=0.15, seed=seed)
        config = OptimizerConfig(population=20, iterations=200, seed=seed)
        evaluator = FitnessEvaluator(data, config.protocol)
        best, conv = run(data, config, evaluator)
        LOGS[f"toy seed {seed}"] = conv
        _, optimum = exhaustive_optimum(evaluator)
        out[seed] = (best.score, optimum.scalar)
    return out


# -- criteria ----------------------------------------------------------------

@pytest.mark.slow
@pytest.mark.acceptance("AC1", "convergence magnitude on the KDD desk subset")
def test_ac1_convergence_magnitude(desk, record_property):
    r = desk[0]
    initial, final = r["log"].best_series[0], r["log"].best_series[100]
    record_property("detail", f"initial {initial:.5f}, final {final:.5f}, {r['seconds']:.0f}s")
    assert final <= 0.03
    assert final <= 0.5 * initial
    assert r["seconds"] <= 300


@pytest.mark.slow
@pytest.mark.acceptance("AC2", "selected subset shrinks to at most 30 of 41")
def test_ac2_subset_shrinkage(desk, record_property):
    counts = [int(desk[s]["rows"]["woa_ga"]["feature_count"]) for s in SEEDS]
    hits = sum(c <= 30 for c in counts)
    record_property("detail", f"{hits}/10 seeds, counts {counts}")
    assert hits >= 8


@pytest.mark.slow
@pytest.mark.acceptance("AC3", "selection does no harm to test accuracy")
def test_ac3_no_harm(desk, record_property):
    gaps = [float(desk[s]["rows"]["woa_ga"]["accuracy"])
            - float(desk[s]["rows"]["all_features"]["accuracy"]) for s in SEEDS]
    hits = sum(g >= -0.005 for g in gaps)
    record_property("detail", f"{hits}/10 seeds, worst gap {min(gaps):+.4f}")
    assert hits >= 8


def exact_knn(train_X, train_y, query, k) -> int:
    """Exact-arithmetic distance sort; ties by training index, votes to the larger label."""
    def dist(row):
        return sum((Fraction(a) - Fraction(b)) ** 2 for a, b in zip(row, query))
    order = sorted(range(len(train_X)), key=lambda i: (dist(train_X[i]), i))
    votes = [int(train_y[i]) for i in order[:k]]
    ones = sum(votes)
    return 1 if ones >= k - ones else 0


@pytest.mark.acceptance("AC4", "KNN matches an exhaustive distance-sort oracle")
def test_ac4_knn_oracle(record_property):
    rng = np.random.default_rng(2024)
    hits = 0
    for q in range(200):
        d = (2, 3, 41)[q % 3]
        k = (1, 3, 5)[(q // 3) % 3]
        if q % 2:
            # coarse grid: many exact distance ties
            X = rng.integers(0, 3, size=(21, d)).astype(float)
        else:
            X = rng.random((21, d))
        y = rng.integers(0, 2, size=20)
        train, query = X[:20], X[20]
        if q % 4 == 1:
            query = train[rng.integers(20)]
        expected = exact_knn(train.tolist(), y, query.tolist(), k)
        got = int(KNNClassifier(n_neighbors=k).fit(train, y).predict(query[None, :])[0])
        hits += got == expected
    record_property("detail", f"{hits}/200 queries agree")
    assert hits == 200


@pytest.mark.acceptance("AC5", "metric identities on fuzzed confusion matrices")
def test_ac5_metric_identities(record_property):
    rng = np.random.default_rng(99)
    problems = 0
    for i in range(1000):
        scale = int(10 ** rng.integers(1, 7))
        counts = rng.integers(0, scale, size=4)
        counts[rng.random(4) < 0.15] = 0  # exercise empty cells
        if counts.sum() == 0:
            counts[i % 4] = 1
        cm = ConfusionMatrix(*(int(c) for c in counts))
        tp, fp, tn, fn = (int(c) for c in counts)
        exact_p = Fraction(tp, tp + fp) if tp + fp else Fraction(0)
        exact_s = Fraction(tp, tp + fn) if tp + fn else Fraction(0)
        exact_f = 2 * exact_p * exact_s / (exact_p + exact_s) if exact_p + exact_s else 0
        metrics = (accuracy(cm), error_rate(cm), precision(cm), sensitivity(cm), f_measure(cm))
        ok = (accuracy(cm) + error_rate(cm) == 1.0
              and precision(cm) == float(exact_p) and sensitivity(cm) == float(exact_s)
              and abs(f_measure(cm) - float(exact_f)) <= 1e-12
              and all(0.0 <= m <= 1.0 for m in metrics))
        problems += not ok
    record_property("detail", f"{1000 - problems}/1000 matrices satisfy all identities")
    assert problems == 0


@pytest.mark.acceptance("AC6", "byte-identical reruns from one manifest, serial and parallel")
def test_ac6_determinism(tmp_path, record_property):
    data = tmp_path / "train.txt"
    write_kdd_like(data, 1500, seed=5)
    first = tmp_path / "first"
    run_experiment(ExperimentConfig(train=str(data), out=str(first), pop=20, iters=20,
                                    seed=3, baselines=()))
    manifest = json.loads((first / "run_manifest.json").read_text())
    assert manifest["config"]["seed"] == 3
    reruns = []
    for jobs in (1, 4):
        out = tmp_path / f"jobs{jobs}"
        assert main(["--config", str(first / "run_manifest.json"), "--out", str(out),
                     "--jobs", str(jobs)]) == 0
        reruns.append(out)
    LOGS["determinism run"] = ConvergenceLog.from_csv((first / "convergence.csv").read_text())
    names = ("convergence.csv", "selected_features.txt", "metrics.json")
    same = [all((first / n).read_bytes() == (r / n).read_bytes() for n in names)
            for r in reruns]
    record_property("detail", f"serial rerun identical: {same[0]}, 4-thread rerun identical: "
                              f"{same[1]}")
    assert all(same)


@pytest.mark.acceptance("AC7", "recovers informative features of a synthetic problem")
def test_ac7_ground_truth_recovery(record_property):
    found = [int(mask.bits[:5].sum()) for mask in recovery_runs().values()]
    hits = sum(f >= 4 for f in found)
    record_property("detail", f"{hits}/10 seeds keep >=4 of 5, per seed {found}")
    assert hits >= 8


@pytest.mark.acceptance("AC8", "matches the exhaustive optimum on a 4-feature problem")
def test_ac8_exhaustive_optimum(record_property):
    results = toy_runs()
    hits = sum(best == optimum for best, optimum in results.values())
    record_property("detail", f"{hits}/10 seeds reach the 16-mask optimum")
    assert hits >= 9


@pytest.mark.acceptance("AC9", "best-so-far fitness never increases")
def test_ac9_monotone_elitism(record_property):
    recovery_runs()
    toy_runs()
    notes = []
    try:
        desk_runs()
    except pytest.fail.Exception:
        notes.append("KDD desk runs unavailable")
    bad = [name for name, conv in LOGS.items() if not conv.is_monotone()]
    record_property("detail", f"{len(LOGS) - len(bad)}/{len(LOGS)} logged runs monotone"
                    + ("" if not notes else f" ({notes[0]})"))
    assert LOGS and not bad

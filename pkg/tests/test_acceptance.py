"""Acceptance criteria; each test records one PASS/FAIL line with its runtime."""

import time
from contextlib import contextmanager
from itertools import product
from math import comb

import numpy as np
import pytest

from haarscat import pipeline
from haarscat.datasets import grid_graph, scramble, synthetic_smooth
from haarscat.features import pls_select
from haarscat.haar_wavelet import cascade_oracle
from haarscat.matching import brute_force_matching, min_weight_perfect_matching
from haarscat.multires import connectivity_fraction, identity_multires, random_multires
from haarscat.pairing_learn import LearnReport, learn_multires
from haarscat.reconstruct import round_trip_report
from haarscat.scattering import boolean_transform, l1_norms, order_of, transform, transform_last

RESULTS: list[str] = []


@contextmanager
def criterion(n: int, title: str, limit: float, spent: float = 0.0):
    """Time the block plus ``spent`` earlier seconds; pass when nothing raises within ``limit`` seconds."""
    t0 = time.perf_counter() - spent
    status, note = "FAIL", ""
    try:
        yield
        elapsed = time.perf_counter() - t0
        if elapsed >= limit:
            note = f" over the {limit:g} s limit"
        else:
            status = "PASS"
    except BaseException as exc:
        note = f" {type(exc).__name__}: {str(exc).splitlines()[0] if str(exc) else ''}"
        raise
    finally:
        elapsed = time.perf_counter() - t0
        RESULTS.append(f"{status} criterion {n:2d} {title} ({elapsed:.2f} s){note}")
    assert status == "PASS", RESULTS[-1]


@pytest.fixture(scope="module")
def mnist_config():
    return pipeline.resolve_config({
        "dataset": {"kind": "idx", "per_class_train": 200, "per_class_test": 100, "split_seed": 0},
        "geometry": "grid", "N": 8, "J": 10, "m_max": 4, "M": 500,
    })


@pytest.fixture(scope="module")
def mnist_run(mnist, mnist_config):
    t0 = time.perf_counter()
    report = pipeline.run_experiment(mnist_config, dataset=mnist)
    return report, time.perf_counter() - t0


class TestAcceptance:
    def test_01_energy(self):
        rng = np.random.default_rng(1)
        with criterion(1, "energy preservation", 10):
            for d in (8, 16, 32, 64):
                J_max = d.bit_length() - 1
                for _ in range(250):
                    m = random_multires(d, int(rng.integers(0, J_max + 1)), rng)
                    x = rng.standard_normal(d)
                    S = transform_last(x, m)
                    assert abs(np.sum(S ** 2) - 2 ** m.J * np.sum(x ** 2)) <= 1e-10 * 2 ** m.J * np.sum(x ** 2)

    def test_02_contraction(self):
        rng = np.random.default_rng(2)
        with criterion(2, "contraction", 10):
            for _ in range(1000):
                d = int(rng.choice([8, 16, 32, 64]))
                m = random_multires(d, int(rng.integers(0, d.bit_length())), rng)
                x, y = rng.standard_normal((2, d)) * rng.uniform(0.01, 10)
                lhs = np.linalg.norm(transform_last(x, m) - transform_last(y, m))
                assert lhs <= 2 ** (m.J / 2) * np.linalg.norm(x - y) + 1e-12

    def test_03_oracle_equivalence(self):
        rng = np.random.default_rng(3)
        with criterion(3, "wavelet cascade oracle", 60):
            for d, J in ((16, 4), (32, 5)):
                for _ in range(5):
                    m = random_multires(d, J, rng)
                    channels = [order_of(q, J) for q in range(1 << J) if order_of(q, J).m <= 4]
                    for x in rng.standard_normal((100, d)):
                        S = transform_last(x, m)
                        for c in channels:
                            np.testing.assert_allclose(cascade_oracle(x, m, J, c.scales), S[:, c.q],
                                                       rtol=1e-10, atol=1e-10)

    def test_04_matching_optimality(self):
        rng = np.random.default_rng(4)
        with criterion(4, "blossom vs brute force", 120):
            for n in (4, 6, 8, 10, 12):
                for _ in range(200):
                    c = np.triu(rng.integers(0, 1 << 20, (n, n)), 1)
                    c = c + c.T
                    pairs = min_weight_perfect_matching(c)
                    assert sorted(v for p in pairs for v in p) == list(range(n))
                    assert sum(int(c[a, b]) for a, b in pairs) == brute_force_matching(c)[1]

    def test_05_sparsity_identity(self):
        rng = np.random.default_rng(5)
        with criterion(5, "sparsity identity", 30):
            for d, count in ((16, 50), (64, 100), (256, 100)):
                # the identity needs |a + b| = a + b, so the inputs are nonnegative
                x = rng.random((count, d))
                report = LearnReport()
                m = learn_multires(x, d.bit_length() - 1, report=report)
                layers = transform(x, m)
                for j, lv in enumerate(report.levels):
                    growth = l1_norms(layers[j + 1]).sum() - l1_norms(layers[j]).sum()
                    bound = 2.0 ** -20 * (d >> j) / 2
                    assert abs(growth - lv.total_cost) <= bound + 1e-9 * max(1.0, abs(growth))

    def test_06_reconstruction(self):
        with criterion(6, "reconstruction d=16 J=4", 30):
            r = round_trip_report(16, 4, 100, family="random")
            print(f"criterion 6 report: {r}")
            assert r["ambiguous_count"] == 0, (
                f"{r['ambiguous_count']} of 100 trials ambiguous, {r['reflection_only']} of them only by "
                "x versus 2*mean(x) - x, which share S_J under any depth-log2(d) multiresolution")
            assert r["max_abs_error"] is not None and r["max_abs_error"] < 1e-8

    def test_07_geometry_recovery(self):
        with criterion(7, "geometry recovery on a 16x16 grid", 300):
            g = grid_graph(16, 16)
            ds = synthetic_smooth(g, 2000, seed=7, smoothing_steps=4)
            m = learn_multires(ds.signals, 2)
            fractions = connectivity_fraction(m, g)
            print(f"criterion 7 connected fractions: {fractions}")
            assert fractions[1] >= 0.9 and fractions[2] >= 0.9

    def test_08_order_histogram(self):
        rng = np.random.default_rng(8)
        with criterion(8, "order histogram", 1):
            d = 1024
            for J in range(11):
                S = transform_last(rng.standard_normal(d), random_multires(d, J, rng))
                # independent bookkeeping: a sum keeps its parent's order, a difference adds one
                orders = np.zeros(1, dtype=int)
                for _ in range(J):
                    orders = np.column_stack([orders, orders + 1]).ravel()
                per_entry = np.broadcast_to(orders, S.shape).ravel()
                hist = np.bincount(per_entry, minlength=J + 1)
                assert hist.tolist() == [comb(J, m) * d // 2 ** J for m in range(J + 1)]

    def test_09_mnist_classification(self, mnist_run):
        report, elapsed = mnist_run
        title = f"MNIST 2000/1000 grid ensemble, test error {report['error_rate']:.1%}"
        with criterion(9, title, 900, spent=elapsed):
            print(f"criterion 9 test error {report['error_rate']:.4f}, M={report['M']}, {elapsed:.1f} s")
            assert report["M"] == 500
            assert report["error_rate"] <= 0.10

    def test_10_scramble_equivariance(self, mnist, mnist_config, mnist_run):
        with criterion(10, "scramble equivariance", 300):
            scrambled = pipeline.run_experiment(mnist_config, dataset=scramble(mnist, 10))
            assert scrambled["error_rate"] == mnist_run[0]["error_rate"]
            assert scrambled["per_class_error"] == mnist_run[0]["per_class_error"]

    def test_11_pls(self):
        rng = np.random.default_rng(11)
        with criterion(11, "PLS greedy selection", 5):
            Z = rng.standard_normal((50, 20))
            labels = rng.integers(0, 3, 50)
            for c in range(3):
                sel = pls_select(Z, labels, c, 10)
                f = (labels == c).astype(float)
                for k, p in enumerate(sel.selected):
                    chosen = Z[:, sel.selected[:k]]
                    best, best_score = -1, -np.inf
                    for col in range(20):
                        if col in sel.selected[:k]:
                            continue
                        r = Z[:, col] - chosen @ np.linalg.lstsq(chosen, Z[:, col], rcond=None)[0] if k else Z[:, col]
                        score = abs(f @ r) / np.linalg.norm(r)
                        if score > best_score:
                            best, best_score = col, score
                    assert p == best
                phi = Z[:, sel.selected] @ sel.coef.T
                assert np.max(np.abs(phi.T @ phi - np.eye(sel.K))) < 1e-8

    def test_12_boolean(self):
        def oracle(bits, pairings):
            layer = [[b] for b in bits]
            for pairs in pairings:
                layer = [[v for a, b in zip(layer[p], layer[q]) for v in (a | b, a ^ b)] for p, q in pairs]
            return layer

        rng = np.random.default_rng(12)
        with criterion(12, "boolean or/xor cascade", 1):
            for m in [identity_multires(4, 2)] + [random_multires(4, 2, rng) for _ in range(5)]:
                pairings = [p.tolist() for p in m.pairings]
                for bits in product((0, 1), repeat=4):
                    got = boolean_transform(np.array(bits, dtype=bool), m)[-1].astype(int).tolist()
                    assert got == oracle(list(bits), pairings)

import itertools

import numpy as np
import pytest

from tvwass.exact_ot import w2_exact_oracle

from oracles import w2_linprog


def test_matching_diracs():
    pts = np.array([[0.0, 0.0], [1.0, 2.0], [3.0, -1.0]])
    w = np.array([0.2, 0.5, 0.3])
    assert w2_exact_oracle(pts, w, pts, w) == pytest.approx(0.0, abs=1e-9)


def test_identity_pairing_when_optimal():
    a = np.array([[0.0, 0.0], [10.0, 0.0]])
    b = np.array([[0.1, 0.0], [10.1, 0.0]])
    w = np.array([0.5, 0.5])
    got = w2_exact_oracle(a, w, b, w)
    identity = 0.5 * 0.01 + 0.5 * 0.01
    swapped = 0.5 * 10.1 ** 2 + 0.5 * 9.9 ** 2
    assert got == pytest.approx(identity, rel=1e-9)
    assert got < swapped


def test_small_instance_vertex_enumeration():
    # 2x2 transport polytope vertices are the two permutation-like plans
    a = np.array([[0.0, 0.0], [1.0, 0.0]])
    b = np.array([[0.0, 1.0], [1.0, 1.0]])
    wa = np.array([0.3, 0.7])
    wb = np.array([0.6, 0.4])
    cost = ((a[:, None, :] - b[None, :, :]) ** 2).sum(axis=2)
    # enumerate vertices: flows determined by a spanning tree; brute force
    # over the single free variable f00 in [max(0, .3-.4), min(.3, .6)]
    best = np.inf
    for f00 in np.linspace(max(0.0, wa[0] - wb[1]), min(wa[0], wb[0]), 200001):
        f01 = wa[0] - f00
        f10 = wb[0] - f00
        f11 = wb[1] - f01
        best = min(best, (cost * np.array([[f00, f01], [f10, f11]])).sum())
    assert w2_exact_oracle(a, wa, b, wb) == pytest.approx(best, abs=1e-8)


def test_random_instances_match_linprog():
    rng = np.random.default_rng(20)
    for _ in range(10):
        na, nb = rng.integers(2, 7, size=2)
        a = rng.random((na, 2)) * 3
        b = rng.random((nb, 2)) * 3
        wa = rng.random(na) + 0.05
        wb = rng.random(nb) + 0.05
        wa /= wa.sum()
        wb /= wb.sum()
        got = w2_exact_oracle(a, wa, b, wb)
        ref = w2_linprog(a, wa, b, wb)
        assert got == pytest.approx(ref, rel=1e-6, abs=1e-9)


def test_rejects_large_support():
    pts = np.random.default_rng(0).random((65, 2))
    w = np.ones(65) / 65
    with pytest.raises(ValueError):
        w2_exact_oracle(pts, w, pts[:2], np.array([0.5, 0.5]))


def test_rejects_mass_mismatch_and_bad_weights():
    a = np.array([[0.0, 0.0]])
    b = np.array([[1.0, 0.0]])
    with pytest.raises(ValueError):
        w2_exact_oracle(a, [1.0], b, [1.5])
    with pytest.raises(ValueError):
        w2_exact_oracle(a, [0.0], b, [0.0])

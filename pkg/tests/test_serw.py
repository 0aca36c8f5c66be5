import json

import numpy as np
import pytest
from sklearn.base import clone

from serwkit.align import random_orthogonal
from serwkit.exceptions import InputError
from serwkit.gromov import gw_solve
from serwkit.mmspace import MmSpace, l2_normalize
from serwkit.serw import (
    SERW,
    FixedSERW,
    SerwConfig,
    alignment_cost,
    base_embedding,
    check_bounds,
    fserw,
    resolve_dimension,
    serw_train,
)


def loop_alignment(x, y, r, plan):
    total = 0.0
    for i in range(x.shape[0]):
        for j in range(y.shape[0]):
            diff = x[i] - r @ y[j]
            total += plan[i, j] * float(diff @ diff)
    return total


def test_alignment_cost_examples(rng):
    x = rng.standard_normal((4, 3))
    assert alignment_cost(x, x, np.eye(3), np.eye(4) / 4) == pytest.approx(0.0, abs=1e-15)
    assert alignment_cost([[1.0, 0.0]], [[0.0, 1.0]], np.eye(2), [[1.0]]) == 2.0


def test_alignment_cost_matches_loop(rng):
    for _ in range(10):
        x, y = rng.standard_normal((7, 3)), rng.standard_normal((5, 3))
        r = random_orthogonal(3, rng)
        plan = rng.random((7, 5))
        plan /= plan.sum()
        assert alignment_cost(x, y, r, plan) == pytest.approx(loop_alignment(x, y, r, plan),
                                                              abs=1e-12)


def test_fserw_value_is_half_alignment(rng):
    a, b = MmSpace(rng.standard_normal((8, 3))), MmSpace(rng.standard_normal((6, 2)))
    xe, ye = base_embedding(a, 2), base_embedding(b, 2)
    res = fserw(a, b, xe, ye)
    j = alignment_cost(xe, ye, res.rotation, res.coupling)
    assert res.value == pytest.approx(0.5 * j, abs=1e-9)
    np.testing.assert_array_equal(res.x_emb, xe)
    with pytest.raises(InputError):
        fserw(a, b, xe, base_embedding(b, 1))


def test_fserw_vanishes_on_rotated_pushforward(rng):
    x = rng.standard_normal((9, 4))
    a = MmSpace(x, rng.dirichlet(np.ones(9)))
    perm = rng.permutation(9)
    r0 = random_orthogonal(3, rng)
    phi = base_embedding(a, 3)
    psi = phi[perm] @ r0.T
    b = MmSpace(x[perm], a.weights[perm])
    assert fserw(a, b, phi, psi).value < 1e-8
    assert fserw(a, a, phi, phi).value < 1e-15


def test_fserw_symmetric(rng):
    for _ in range(5):
        a = MmSpace(rng.standard_normal((7, 3)), rng.dirichlet(np.ones(7)))
        b = MmSpace(rng.standard_normal((6, 3)), rng.dirichlet(np.ones(6)))
        pa, pb = base_embedding(a, 2), base_embedding(b, 2)
        assert fserw(a, b, pa, pb).value == pytest.approx(fserw(b, a, pb, pa).value, abs=1e-7)


def test_coupling_marginals_are_pushforward_weights(rng):
    a = MmSpace(rng.standard_normal((7, 3)), rng.dirichlet(np.ones(7)))
    b = MmSpace(rng.standard_normal((5, 3)), rng.dirichlet(np.ones(5)))
    res = serw_train(a, b, epochs=1, batches=2, seed=3, dim=2)
    np.testing.assert_allclose(res.coupling.plan.sum(axis=1), a.weights, atol=1e-12)
    np.testing.assert_allclose(res.coupling.plan.sum(axis=0), b.weights, atol=1e-12)


def test_resolve_dimension():
    a, b = MmSpace(np.eye(5)), MmSpace(np.eye(4))
    assert resolve_dimension(a, b) == 3
    assert resolve_dimension(a, b, 2) == 2
    for bad in (0, 4, 1.5):
        with pytest.raises(InputError):
            resolve_dimension(a, b, bad)


def test_config_validation():
    with pytest.raises(InputError):
        SerwConfig(batches=0)
    with pytest.raises(InputError):
        SerwConfig(embed="pca")
    with pytest.raises(InputError):
        SerwConfig(lr=0.0)
    assert SerwConfig(epochs=0).epochs == 0


def test_zero_epochs_equals_fserw(rng):
    a, b = MmSpace(rng.standard_normal((10, 3))), MmSpace(rng.standard_normal((8, 4)))
    for embed in ("mds", "lle"):
        trained = serw_train(a, b, epochs=0, embed=embed, dim=2, seed=5)
        fixed = fserw(a, b, base_embedding(a, 2, embed), base_embedding(b, 2, embed), seed=5)
        assert trained.value == fixed.value
        assert trained.objective_trace == []


def test_value_matches_returned_iterates(rng):
    a, b = MmSpace(rng.standard_normal((12, 3))), MmSpace(rng.standard_normal((10, 2)))
    res = serw_train(a, b, epochs=2, batches=3, batch_size=6, lr=1e-2, seed=1)
    j = alignment_cost(res.x_emb, res.y_emb, res.rotation, res.coupling)
    assert res.value == pytest.approx(0.5 * j, abs=1e-9)
    assert res.x_emb.shape[1] == res.y_emb.shape[1]


def test_trace_terms_finite_and_nonnegative(rng):
    a, b = MmSpace(rng.standard_normal((12, 3))), MmSpace(rng.standard_normal((11, 4)))
    res = serw_train(a, b, epochs=3, batches=4, batch_size=8, lr=1e-2, seed=2)
    assert len(res.objective_trace) == 12
    for step in res.objective_trace:
        assert np.isfinite(step["transport"]) and step["transport"] >= 0
        assert step["distortion_x"] >= 0 and step["distortion_y"] >= 0


def test_training_deterministic(rng):
    a, b = MmSpace(rng.standard_normal((9, 3))), MmSpace(rng.standard_normal((9, 2)))
    r1 = serw_train(a, b, epochs=2, batches=2, seed=7)
    r2 = serw_train(a, b, epochs=2, batches=2, seed=7)
    assert r1.value == r2.value
    assert json.dumps(r1.to_dict()) == json.dumps(r2.to_dict())


@pytest.mark.parametrize("seed", range(10))
def test_distortion_regression_guard(seed):
    # short run on an isometric pair: training must not blow up the distortion
    r = np.random.default_rng(seed)
    x = r.standard_normal((15, 3))
    y = x[r.permutation(15)] @ random_orthogonal(3, r).T
    a, b = MmSpace(x), MmSpace(y)
    start = serw_train(a, b, epochs=0, seed=seed)
    end = serw_train(a, b, epochs=2, batches=3, lr=1e-3, seed=seed)
    for d0, d1 in zip(start.distortions, end.distortions):
        assert d1.tau <= 1.05 * d0.tau


def test_bounds_isometric_constants(rng):
    x = rng.standard_normal((8, 2))
    a = MmSpace(x)
    y = x @ random_orthogonal(2, rng).T
    b = MmSpace(y)
    res = fserw(a, b, x, y)
    gw = gw_solve(a, b)
    rep = check_bounds(a, b, res, gw)
    assert rep.alpha == pytest.approx(0.0, abs=1e-12)
    assert rep.beta == pytest.approx(4.0, abs=1e-12)
    assert rep.serw_squared < 1e-10 and rep.gw_squared < 1e-8
    assert rep.upper_holds and rep.lower_holds


def test_bounds_normalised_inputs(rng):
    a = l2_normalize(MmSpace(rng.standard_normal((9, 3))))
    b = l2_normalize(MmSpace(rng.standard_normal((7, 4))))
    res = serw_train(a, b, epochs=1, batches=2, seed=0)
    rep = check_bounds(a, b, res, gw_solve(a, b))
    assert rep.m_bar == pytest.approx(4.0, abs=1e-12)
    assert rep.m_underbar == pytest.approx(6.0, abs=1e-12)
    assert rep.upper_holds
    assert set(rep.to_dict()) == {"gw_squared", "serw_squared", "alpha", "beta", "m_bar",
                                  "m_underbar", "lower_holds", "upper_holds", "slack_lower",
                                  "slack_upper"}


def test_upper_flag_matches_inequality(rng):
    a, b = MmSpace(rng.standard_normal((6, 2))), MmSpace(rng.standard_normal((6, 2)))
    for s, g in [(0.5, 0.1), (1e6, 0.0), (0.0, 0.0)]:
        rep = check_bounds(a, b, s, g)
        expected = rep.serw_squared <= rep.beta * rep.gw_squared + 4 * rep.beta * rep.m_underbar + 1e-7
        assert rep.upper_holds == expected
    assert not check_bounds(a, b, 1e6, 0.0).upper_holds


def test_estimators(rng):
    x, y = rng.standard_normal((10, 3)), rng.standard_normal((9, 2))
    est = SERW(epochs=1, batches=2, seed=0)
    assert clone(est).get_params() == est.get_params()
    est.fit(x, y)
    assert est.coupling_.shape == (10, 9)
    assert est.embedding_x_.shape[1] == est.embedding_y_.shape[1]
    fixed = FixedSERW().fit(x[:, :2], y)
    assert fixed.value_ >= 0
    assert FixedSERW().fit(y, y).value_ < 1e-12

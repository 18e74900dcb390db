import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ocpnet import autodiff as ad
from ocpnet.autodiff import GradResult, Layout, ParamVector, check_grad, grad_of
from ocpnet.exceptions import NumericalFailure
from ocpnet.method1 import Method1Model
from ocpnet.method2 import FourierLayerModel
from ocpnet.pmploss import PointGrid, pmp_loss
from ocpnet.problems import make_problem

FLAT = Layout.from_shapes([("phi", (2,))])


def sum_squares(blocks):
    return ad.vsum(blocks["phi"] ** 2)


def test_quadratic():
    res = grad_of(sum_squares, ParamVector([1.0, 2.0], FLAT))
    assert res.loss == 5.0
    np.testing.assert_array_equal(res.grad, [2.0, 4.0])


def test_constant_loss_has_zero_gradient():
    res = grad_of(lambda b: 7.0, ParamVector([1.0, 2.0], FLAT))
    assert res.loss == 7.0
    np.testing.assert_array_equal(res.grad, [0.0, 0.0])


def test_quadratic_check_grad_is_tight(rng):
    rep = check_grad(sum_squares, ParamVector(rng.normal(size=2), FLAT))
    assert rep.passed and rep.worst_rel_error <= 1e-10


def test_non_finite_loss_names_block():
    layout = Layout.from_shapes([("a", (1,)), ("b", (2,))])
    with pytest.raises(NumericalFailure) as info:
        grad_of(lambda blk: ad.vsum(ad.reciprocal(blk["b"])), ParamVector([1.0, 0.0, 1.0], layout))
    assert info.value.where == "b"


def test_corrupted_gradient_is_reported(rng):
    at = ParamVector(rng.normal(size=2), FLAT)

    def broken(fn, p):
        r = grad_of(fn, p)
        g = r.grad.copy()
        g[1] += 0.5
        return GradResult(r.loss, g)

    rep = check_grad(sum_squares, at, gradient=broken)
    assert not rep.passed
    assert rep.worst_index == 1


def test_layout_pack_unpack_roundtrip(rng):
    layout = Layout.from_shapes([("w", (3, 2)), ("b", (3,)), ("v", (2, 3))])
    assert sum(b.size for b in layout.blocks) == layout.size == 15
    v = rng.normal(size=15)
    np.testing.assert_array_equal(layout.pack(layout.unpack(v)), v)
    assert layout.block_of(0) == "w" and layout.block_of(6) == "b" and layout.block_of(14) == "v"


@pytest.mark.parametrize("op", [
    lambda a, b: a * b + a,
    lambda a, b: (a - b) ** 2,
    lambda a, b: a / (b * b + 1.0),
    lambda a, b: ad.sigmoid(a) * ad.exp(b),
    lambda a, b: ad.sin(a) * ad.cos(b),
    lambda a, b: -a + 3.0 - b,
    lambda a, b: 1.0 / (1.0 + a * a),
])
def test_elementwise_ops(op, rng):
    layout = Layout.from_shapes([("a", (4,)), ("b", (4,))])
    at = ParamVector(rng.normal(size=8), layout)
    rep = check_grad(lambda blk: ad.vsum(op(blk["a"], blk["b"])), at)
    assert rep.passed, rep


def test_broadcast_matmul_and_indexing(rng):
    layout = Layout.from_shapes([("W", (3, 4)), ("c", (4,)), ("x", (5, 3))])
    at = ParamVector(rng.normal(size=layout.size), layout)

    def fn(blk):
        h = ad.sigmoid(blk["x"] @ blk["W"] + blk["c"])
        col = h[:, 1]
        return ad.vsum(ad.vsum(h * h, axis=0)) + ad.vsum(col) + ad.vsum(ad.transpose(h)[2])

    rep = check_grad(fn, at)
    assert rep.passed, rep


def test_method1_loss_gradient_matches_central_differences(rng):
    p = make_problem("OCP1")
    model = Method1Model(p, 3)
    at = ParamVector(model.init_values(rng), model.layout)
    grid = PointGrid(np.linspace(0, 1, 4), np.array([0.0, 0.5, 1.0]))
    rep = check_grad(lambda b: pmp_loss(model, b, p, grid), at, step=1e-6, tol=1e-6)
    assert rep.passed, rep


def test_method2_loss_gradient_ocp3(rng):
    p = make_problem("OCP3")
    model = FourierLayerModel(p, 3, 2, 2)
    at = ParamVector(model.init_values(rng), model.layout)
    grid = PointGrid(np.linspace(0, 8, 5), np.array([0.0, 10.0, 40.0]))
    rep = check_grad(lambda b: pmp_loss(model, b, p, grid), at, step=1e-5, tol=1e-6)
    assert rep.passed, rep


def _poly(blk):
    return ad.vsum(blk["phi"] ** 3 * 0.5 + ad.sin(blk["phi"]))


@settings(max_examples=30, deadline=None)
@given(alpha=st.floats(-3, 3), beta=st.floats(-3, 3),
       phi=st.lists(st.floats(-2, 2), min_size=2, max_size=2))
def test_gradient_linearity(alpha, beta, phi):
    at = ParamVector(phi, FLAT)
    combo = grad_of(lambda b: alpha * sum_squares(b) + beta * _poly(b), at).grad
    expect = alpha * grad_of(sum_squares, at).grad + beta * grad_of(_poly, at).grad
    np.testing.assert_allclose(combo, expect, rtol=0, atol=1e-12)


def test_deterministic(rng):
    p = make_problem("OCP2")
    model = Method1Model(p, 4)
    at = ParamVector(model.init_values(rng), model.layout)
    grid = PointGrid(np.linspace(0, 2, 6), p.x0_train[:4])
    a = grad_of(lambda b: pmp_loss(model, b, p, grid), at)
    b = grad_of(lambda b: pmp_loss(model, b, p, grid), at)
    assert a.loss == b.loss
    assert np.array_equal(a.grad, b.grad)

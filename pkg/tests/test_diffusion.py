import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from steadydiff.chain import scale_chain
from steadydiff.diffusion import DiffusionModel, SmoothFunction, apply_generator, build_dm, polynomial_1d, sqrt_psd
from steadydiff.errors import NotSPDError
from steadydiff.zoo import ErlangAParams, build_erlang_a, build_mphn, mphn_avar_bar, mphn_center


def test_erlang_a_noise_is_sqrt2():
    dm = build_dm(scale_chain(build_erlang_a(ErlangAParams(mu=1.0, theta=0.5)), 100, [100.0]))
    assert dm.sqrt_avar0[0, 0] == pytest.approx(np.sqrt(2.0), rel=1e-15)


def test_phase_type_avar0_from_closed_form(serial_ph):
    n = 100.0
    dm = build_dm(scale_chain(build_mphn(serial_ph), n, mphn_center(serial_ph, n)))
    np.testing.assert_allclose(dm.avar0, mphn_avar_bar(serial_ph, n, np.zeros(2)), rtol=1e-14)
    L = dm.sqrt_avar0
    np.testing.assert_allclose(L @ L.T, dm.avar0, rtol=1e-12)
    assert np.linalg.eigvalsh(dm.avar0)[0] > 0


@pytest.mark.parametrize("m, root", [
    (np.diag([4.0, 9.0]), np.diag([2.0, 3.0])),
    (np.eye(3), np.eye(3)),
])
def test_sqrt_psd_known_roots(m, root):
    np.testing.assert_allclose(sqrt_psd(m), root, atol=1e-14)


def test_sqrt_psd_by_squaring():
    m = np.array([[2.0, 1.0], [1.0, 2.0]])
    L = sqrt_psd(m)
    w, U = np.linalg.eigh(m)
    np.testing.assert_allclose(L, U @ np.diag(np.sqrt(w)) @ U.T, rtol=1e-14)
    np.testing.assert_allclose(L @ L, m, rtol=1e-14)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (3, 3), elements=st.floats(-2, 2)))
def test_sqrt_psd_square_and_symmetry(B):
    m = B @ B.T + 0.1 * np.eye(3)
    L = sqrt_psd(m)
    assert np.array_equal(L, L.T)
    assert np.linalg.norm(L @ L - m) <= 1e-12 * np.linalg.norm(m)


def test_non_spd_rejected():
    with pytest.raises(NotSPDError):
        sqrt_psd(np.array([[1.0, 0.0], [0.0, -1.0]]))


def test_generator_of_square_under_ou(ou):
    u = polynomial_1d([0, 0, 1])
    x = np.linspace(-3, 3, 13)[:, None]
    np.testing.assert_allclose(apply_generator(ou, u, x), -2 * x[:, 0] ** 2 + 2, atol=1e-12)


def test_generator_of_linear_function_is_drift_projection():
    dm = DiffusionModel.from_drift(lambda x: np.stack([-x[..., 0] + x[..., 1], np.sin(x[..., 0])], axis=-1),
                                   [[2.0, 0.3], [0.3, 1.0]])
    c = np.array([0.7, -1.2])
    u = SmoothFunction(lambda x: x @ c, lambda x: np.broadcast_to(c, x.shape),
                       lambda x: np.zeros(x.shape + (2,)), dim=2)
    x = np.random.default_rng(0).normal(size=(20, 2))
    np.testing.assert_allclose(apply_generator(dm, u, x), dm.drift_hat(x) @ c, atol=1e-14)


def test_generator_at_origin_for_erlang_a():
    dm = build_dm(scale_chain(build_erlang_a(ErlangAParams(mu=1.0, theta=0.5)), 100, [100.0]))
    u = polynomial_1d([0.3, -1.0, 2.5, 0.7])  # u''(0) = 5
    assert apply_generator(dm, u, np.zeros((1, 1)))[0] == pytest.approx(5.0)


def test_generator_linearity_and_constant(ou):
    x = np.linspace(-2, 2, 9)[:, None]
    u, v = polynomial_1d([1, 2, 3]), polynomial_1d([0, -1, 0, 1])
    a, b = 1.7, -0.4
    w = polynomial_1d([a * 1 + 0, a * 2 - b, a * 3, b])
    lhs = apply_generator(ou, w, x)
    rhs = a * apply_generator(ou, u, x) + b * apply_generator(ou, v, x)
    assert np.allclose(lhs, rhs, rtol=1e-10, atol=1e-12)
    assert np.all(apply_generator(ou, polynomial_1d([5.0]), x) == 0)


def test_finite_difference_fallback_matches_analytic():
    dm = DiffusionModel.from_drift(lambda x: -x, [[2.0, 0.5], [0.5, 1.0]])
    u_an = SmoothFunction(lambda x: x[..., 0] ** 2 * x[..., 1],
                          lambda x: np.stack([2 * x[..., 0] * x[..., 1], x[..., 0] ** 2], axis=-1),
                          lambda x: np.stack([np.stack([2 * x[..., 1], 2 * x[..., 0]], -1),
                                              np.stack([2 * x[..., 0], np.zeros_like(x[..., 0])], -1)], -2),
                          dim=2)
    x = np.random.default_rng(1).normal(size=(10, 2))
    fd = apply_generator(dm, lambda y: y[..., 0] ** 2 * y[..., 1], x)
    np.testing.assert_allclose(fd, apply_generator(dm, u_an, x), rtol=1e-5, atol=1e-6)

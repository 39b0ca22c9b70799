import numpy as np
import pytest

from steadydiff.chain import derive_drift, scale_chain
from steadydiff.diffusion import SmoothFunction, polynomial_1d
from steadydiff.errors import MultipleRootsError
from steadydiff.fluid import FluidModel, check_fm_lyapunov, integrate_fm, scale_family, stationary_point
from steadydiff.zoo import ErlangAParams, build_erlang_a, build_mphn, erlang_a_center


def test_linear_decay():
    fm = FluidModel(lambda x: -x, 1)
    traj = integrate_fm(fm, [1.0], 1.0, 1e-3)
    assert traj.x[-1, 0] == pytest.approx(np.exp(-1.0), abs=1e-6)


def test_zero_drift_is_constant():
    traj = integrate_fm(FluidModel(lambda x: np.zeros_like(x), 2), [3.0, -1.0], 5.0, 0.1)
    assert np.all(traj.x == np.array([3.0, -1.0]))


def test_overloaded_erlang_a_relaxes_to_stationary_point():
    # n=100, N=80: below N the solution is 100 - (100 - x0) e^{-t}; above, x -> 120 at rate theta
    p = ErlangAParams(mu=1.0, theta=0.5, staffing=80.0)
    fm = FluidModel.from_chain(build_erlang_a(p), 100)
    traj = integrate_fm(fm, [0.0], 40.0, 0.01)
    t1 = np.log(100.0 / 20.0)  # time to reach N=80 from 0
    expected = 120.0 - 40.0 * np.exp(-0.5 * (40.0 - t1))
    assert traj.x[-1, 0] == pytest.approx(expected, abs=1e-6)


@pytest.mark.parametrize("theta", [0.3, 1.0, 2.5])
def test_contraction_property(theta):
    h = 0.01
    traj = integrate_fm(FluidModel(lambda x: -theta * x, 1), [2.0], 3.0, h)
    assert np.all(np.abs(traj.x[:, 0]) <= 2.0 * np.exp(-theta * traj.t) + 10 * h)


@pytest.mark.parametrize("N, root", [(120.0, 100.0), (80.0, 120.0)])
def test_erlang_a_stationary_point(N, root):
    chain = build_erlang_a(ErlangAParams(mu=1.0, theta=0.5, staffing=N))
    fm = FluidModel.from_chain(chain, 100)
    sp = stationary_point(fm, [10.0])
    assert sp.point[0] == pytest.approx(root, abs=1e-8)
    assert sp.residual <= 1e-10 * 100
    assert np.linalg.norm(derive_drift(chain, 100, sp.point)) == sp.residual


def test_phase_type_stationary_point(serial_ph):
    n = 200.0
    fm = FluidModel.from_chain(build_mphn(serial_ph), n)
    sp = stationary_point(fm, [n, 0.0])
    np.testing.assert_allclose(sp.point, [n / 2, n / 2], atol=1e-8)


def test_multiple_roots_detected():
    fm = FluidModel(lambda x: x * (1 - x ** 2), 1)
    with pytest.raises(MultipleRootsError):
        stationary_point(fm, [0.9], extra_starts=[[-0.9]])


def test_scale_family_uses_fluid_root():
    chain = build_erlang_a(ErlangAParams(mu=1.0, theta=0.5, staffing=80.0))
    (sc,) = scale_family(chain, [100.0])
    assert sc.center[0] == pytest.approx(120.0, abs=1e-8)


def _quadratic(shift=0.0):
    return SmoothFunction(lambda x: 1 + shift + x[..., 0] ** 2, lambda x: 2 * x,
                          lambda x: 2 * np.ones(x.shape[:-1] + (1, 1)), dim=1)


def test_fm_lyapunov_erlang_a_rate():
    mu, theta = 1.0, 0.5
    p = ErlangAParams(mu=mu, theta=theta)
    fam = [scale_chain(build_erlang_a(p), n, [erlang_a_center(p, n)]) for n in (100, 10000)]
    grid = np.linspace(-8, 8, 801)
    rep = check_fm_lyapunov(_quadratic(), fam, grid)
    assert rep.verdict
    assert rep.eta == pytest.approx(2 * min(mu, theta), rel=1e-12)


def test_fm_lyapunov_linear_drift_and_shift_invariance():
    class Lin:
        n = 1.0

        @staticmethod
        def drift_hat(x):
            return -x

    grid = np.linspace(-5, 5, 101)
    r1 = check_fm_lyapunov(_quadratic(), [Lin()], grid)
    r2 = check_fm_lyapunov(_quadratic(shift=7.0), [Lin()], grid)
    assert r1.eta == pytest.approx(2.0)
    assert r1.verdict == r2.verdict
    assert r1.eta == pytest.approx(r2.eta, rel=1e-12)


def test_fm_lyapunov_unstable_drift():
    class Up:
        n = 1.0

        @staticmethod
        def drift_hat(x):
            return x

    rep = check_fm_lyapunov(polynomial_1d([1, 0, 0, 0, 1]), [Up()], np.linspace(-3, 3, 61))
    assert not rep.verdict
    assert rep.counterexample is not None

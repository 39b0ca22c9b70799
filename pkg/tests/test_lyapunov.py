import numpy as np
import pytest

from steadydiff.chain import scale_chain
from steadydiff.diffusion import DiffusionModel, SmoothFunction, build_dm
from steadydiff.errors import CertificationError, HypothesisCheckError
from steadydiff.lyapunov import (attest_finite_integral, check_dm_to_ctmc, check_subexponential, check_ul,
                                 generic_candidate, moment_bound_check, power_candidate, quadratic_candidate,
                                 radial_candidate, recheck, search_quadratic_candidate)
from steadydiff.steady import dm_stationary_1d, symmetric_grid
from steadydiff.zoo import ErlangAParams, build_erlang_a, build_mm_inf, build_mphn, erlang_a_center, mphn_center


def erlang_family(ns=(100, 1000, 10000), mu=1.0, theta=0.5):
    p = ErlangAParams(mu=mu, theta=theta)
    chain = build_erlang_a(p)
    return [build_dm(scale_chain(chain, n, [erlang_a_center(p, n)])) for n in ns]


def test_ou_quadratic_closed_form(ou):
    # A(1 + x^2) + (1 + x^2) = 3 - x^2: b = 3 at the origin, K = sqrt(3)
    cert = check_ul([ou], radial_candidate(1, 1), 1.0, 10.0)
    assert cert.delta == 1.0
    assert cert.b == pytest.approx(3.0, rel=1e-12)
    assert cert.K == pytest.approx(np.sqrt(3.0), abs=1e-9)
    assert cert.moment_bound == pytest.approx(3.0)
    assert cert.evidence == "grid+structural-tail"


@pytest.mark.parametrize("m", [1, 2])
def test_erlang_a_family_certifies(m):
    fam = erlang_family()
    cand = radial_candidate(1, m)
    cert = check_ul(fam, cand, 0.5, 10.0)
    assert cert.delta > 0 and np.isfinite(cert.b) and np.isfinite(cert.K)
    assert all(recheck(cert, dm, cand) for dm in fam)
    assert cert.to_dict()["schema"] == "steadydiff-ul-certificate/1"


def test_delta_is_lowered_when_trial_fails(ou):
    # for 1 + x^2 under OU the rate cannot exceed 2; a trial of 3 must be bisected down
    cert = check_ul([ou], radial_candidate(1, 1), 3.0, 10.0)
    assert 1.9 < cert.delta < 2.0


def test_maximize_delta(ou):
    cert = check_ul([ou], radial_candidate(1, 1), 1.0, 10.0, maximize_delta=True)
    assert 1.9 < cert.delta <= 2.0


def test_unstable_drift_is_refused():
    dm = DiffusionModel.from_drift(lambda x: np.asarray(x), [[2.0]])
    with pytest.raises(CertificationError) as exc:
        check_ul([dm], radial_candidate(1, 1), 0.5, 10.0)
    assert exc.value.counterexample is not None


def test_recheck_rejects_tampered_certificate(ou):
    cand = radial_candidate(1, 1)
    cert = check_ul([ou], cand, 1.0, 10.0)
    cert.K = 1.0
    assert not recheck(cert, ou, cand)


def test_certificate_invariant_under_scaling(ou):
    cand = radial_candidate(1, 1)
    c1 = check_ul([ou], cand, 1.0, 10.0)
    c2 = check_ul([ou], cand.scaled(7.0), 1.0, 10.0)
    assert c2.delta == c1.delta
    assert c2.K == pytest.approx(c1.K, abs=1e-9)
    assert c2.b == pytest.approx(7.0 * c1.b, rel=1e-12)


def test_subexponential_constants_for_quadratic():
    s = check_subexponential(radial_candidate(1, 1))
    # sup (1 + (r+1)^2) / (1 + r^2) is attained at r = (sqrt 5 - 1)/2 and is below 4
    r = (np.sqrt(5) - 1) / 2
    assert s.c3 == pytest.approx((1 + (r + 1) ** 2) / (1 + r ** 2), rel=1e-6)
    assert s.c3 <= 4.0
    assert s.method == "structural-polynomial"


def test_subexponential_constant_candidate():
    one = SmoothFunction(lambda x: np.ones(x.shape[:-1]), lambda x: np.zeros(x.shape),
                         lambda x: np.zeros(x.shape + (1,)), lambda x: np.zeros(x.shape + (1, 1)), dim=1)
    s = check_subexponential(generic_candidate(one, envelope=(1.0, 1.0)))
    assert s.c3 == 1.0


def test_gaussian_growth_is_not_subexponential():
    g = SmoothFunction(lambda x: np.exp(x[..., 0] ** 2), lambda x: 2 * x * np.exp(x ** 2),
                       lambda x: ((2 + 4 * x ** 2) * np.exp(x ** 2))[..., None], dim=1)
    with pytest.raises(HypothesisCheckError):
        check_subexponential(generic_candidate(g, envelope=(10.0, 1.0)))
    with pytest.raises(HypothesisCheckError):
        check_subexponential(generic_candidate(g))


def test_transfer_constant_quadratic_by_hand():
    # (2|x| + 2)(1 + |x|) / (1 + x^2) has supremum 4 at |x| = 1
    t = check_dm_to_ctmc(radial_candidate(1, 1), np.linspace(-10, 10, 20001))
    assert t.C == pytest.approx(4.0, rel=1e-6)
    assert t.C <= 10


def test_transfer_constant_quartic_is_finite():
    t = check_dm_to_ctmc(radial_candidate(1, 2), np.linspace(-10, 10, 2001))
    assert np.isfinite(t.C)


def test_power_candidate_derivatives():
    base = quadratic_candidate([[1.0]], rho=1.0)
    V2 = power_candidate(base, 2)
    x = np.array([[1.0]])
    assert V2.value(x)[0] == pytest.approx(4.0)
    assert V2.grad(x)[0, 0] == pytest.approx(8.0)
    assert power_candidate(base, 1) is base
    h = 1e-4
    y = np.array([[0.7]])
    fd_grad = (V2.value(y + h) - V2.value(y - h)) / (2 * h)
    fd_hess = (V2.grad(y + h) - V2.grad(y - h)) / (2 * h)
    fd_third = (V2.hess(y + h) - V2.hess(y - h)) / (2 * h)
    assert V2.grad(y)[0, 0] == pytest.approx(fd_grad[0], rel=1e-7)
    assert V2.hess(y)[0, 0, 0] == pytest.approx(fd_hess[0, 0], rel=1e-7)
    assert V2.third(y)[0, 0, 0, 0] == pytest.approx(fd_third[0, 0, 0], rel=1e-6)


def test_radial_third_derivative_by_finite_differences():
    cand = radial_candidate(2, 3, dim=2)
    x = np.array([[0.4, -0.9]])
    h = 1e-5
    for j in range(2):
        e = np.zeros(2)
        e[j] = h
        fd = (cand.hess(x + e) - cand.hess(x - e)) / (2 * h)
        np.testing.assert_allclose(cand.third(x)[0, :, :, j], fd[0], rtol=1e-6, atol=1e-6)


def test_moment_bound_against_stationary_laws():
    fam = erlang_family()
    cand = radial_candidate(1, 1)
    cert = check_ul(fam, cand, 0.5, 10.0)
    pis = [dm_stationary_1d(dm, symmetric_grid(12, 0.01)) for dm in fam]
    rep = moment_bound_check(cert, pis, lambda x: cand.value(x))
    assert rep["verdict"]
    assert rep["max"] <= cert.moment_bound


def test_finite_integral_attestation():
    assert attest_finite_integral(build_mm_inf(1.0), 100)["status"] == "attested"
    assert attest_finite_integral(build_erlang_a(ErlangAParams(mu=1.0, theta=0.5)), 100)["status"] == "attested"


def test_quadratic_search_for_phase_type(serial_ph):
    fam = [build_dm(scale_chain(build_mphn(serial_ph), n, mphn_center(serial_ph, n))) for n in (25.0, 100.0)]
    cand, cert = search_quadratic_candidate(fam, rho=1.0, m=1, delta_trial=0.3, outer_radius=8.0)
    assert cand.kind == "quadratic"
    assert cert.delta > 0
    assert all(recheck(cert, dm, cand, h=0.25) for dm in fam)

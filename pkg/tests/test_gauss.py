import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cdjp.errors import NonPureInput, SingularMatrix
from cdjp.fock import build_operators, ket_to_dm, make_ket, moments
from cdjp.gauss import (
    GaussCoords, closed_form_op, op_matrix, squeezing_parameter, steady_state_covariances, theta0_benchmark,
)

# 30-digit mpmath values of the steady covariances and the squeezing parameter
Q_TAU15 = (0.999861178582369907081192604014, 0.016662039607268763449850971101, 1.0004165028010135695359739239)
XI_TAU15 = 0.000138824629884503220407117833963 - 0.00833063426352841406394581324345j
Q_TAU1E4 = (0.999999999687500000341820217158, 0.0000249999999843750000195324171026,
            1.00000000093749999916994521881)


def test_steady_covariances_tau15():
    assert np.allclose(steady_state_covariances(15.0), Q_TAU15, rtol=0, atol=1e-14)


def test_steady_covariances_large_tau_keep_digits():
    q3, q4, q5 = steady_state_covariances(1e4)
    assert q3 == pytest.approx(Q_TAU1E4[0], abs=1e-15)
    assert q4 == pytest.approx(Q_TAU1E4[1], rel=1e-12)
    assert q5 == pytest.approx(Q_TAU1E4[2], abs=1e-15)


@given(st.floats(0.05, 1e5))
@settings(max_examples=50, deadline=None)
def test_steady_state_is_pure(tau):
    q3, q4, q5 = steady_state_covariances(tau)
    assert q3 * q5 - q4 * q4 == pytest.approx(1.0, abs=1e-12)


def test_squeezing_parameter_tau15():
    xi = squeezing_parameter(*Q_TAU15)
    assert abs(xi - XI_TAU15) < 1e-13
    # both branches of sinh 2R give the same ξ
    assert abs(squeezing_parameter(*Q_TAU15, branch=-1) - xi) < 1e-15


def test_squeezing_parameter_rejects_mixed():
    with pytest.raises(NonPureInput):
        squeezing_parameter(1.2, 0.0, 1.2)


def test_vacuum_has_no_squeezing():
    assert squeezing_parameter(1.0, 0.0, 1.0) == 0


def test_squeezed_vacuum_reproduces_covariances():
    ops = build_operators(36)
    psi = make_ket("squeezed_vacuum", 36, xi=squeezing_parameter(*Q_TAU15))
    _, _, vx, cov, vp = moments(ket_to_dm(psi), ops)
    assert np.allclose([2 * vx, 2 * cov, 2 * vp], Q_TAU15, atol=1e-12)


def test_gauss_coords_validation():
    with pytest.raises(ValueError):
        GaussCoords(0, 0, 0.5, 0.0, 1.0)
    g = GaussCoords.from_moments(0.1, 0.2, 0.5, 0.0, 0.5)
    assert g.q3 == 1.0 and g.q5 == 1.0


def test_closed_form_hits_endpoints():
    _, path = closed_form_op((0.2, -0.1), (1.0, 0.5), 3.0, 15.0)
    q1, q2 = path(np.array([0.0, 3.0]))
    assert np.allclose([q1[0], q2[0]], [0.2, -0.1], atol=1e-13)
    assert np.allclose([q1[-1], q2[-1]], [1.0, 0.5], atol=1e-12)


def test_closed_form_with_free_endpoint_is_free_rotation():
    # when the target is the freely rotated start the multipliers vanish
    t_f = 2.0
    q_f = (0.5 * np.cos(t_f), -0.5 * np.sin(t_f))
    const, path = closed_form_op((0.5, 0.0), q_f, t_f, 15.0)
    assert abs(const.alpha1) < 1e-12 and abs(const.alpha2) < 1e-12


def test_closed_form_is_resonantly_driven():
    # q1 = (a t + b) cos t + (c t + d) sin t, so q̈1 + q1 = 2c cos t - 2a sin t with a, c = α S / 8τ
    tau = 15.0
    q3, q4, _ = steady_state_covariances(tau)
    const, path = closed_form_op((0.0, 0.0), (1.0, 0.5), 3.0, tau)
    t = np.linspace(0.1, 2.9, 15)
    h = 1e-4
    q1 = path(t)[0]
    d2q1 = (path(t + h)[0] - 2 * q1 + path(t - h)[0]) / h**2
    k = (q3 * q3 + q4 * q4) / (8 * tau)
    expected = 2 * const.alpha2 * k * np.cos(t) - 2 * const.alpha1 * k * np.sin(t)
    assert np.max(np.abs(d2q1 + q1 - expected)) < 1e-5


def test_singular_endpoint_matrix():
    # S t c + D s and friends vanish together only at t = 0; use a tiny horizon
    A = op_matrix(1e-14, 15.0, *steady_state_covariances(15.0)[:2])
    assert np.linalg.cond(A) > 1e12 or np.allclose(A, 0)
    with pytest.raises(SingularMatrix):
        closed_form_op((0, 0), (1, 0), 1e-14, 15.0)


def test_closed_form_rejects_nonpositive_horizon():
    with pytest.raises(ValueError):
        closed_form_op((0, 0), (1, 0), 0.0, 15.0)


def test_theta0_benchmark_means_match_closed_form():
    bench = theta0_benchmark(tau=15.0, t_f=3.0, dt=1e-3, q_f=(1.0, 0.5), n_levels=36)
    assert bench.max_mean_deviation < 2e-2
    assert abs(bench.mlp_x[-1] - 1.0) < 1e-6 and abs(bench.mlp_p[-1] - 0.5) < 1e-6
    rows = list(bench.overlay_rows())
    assert len(rows) == bench.t.size and len(rows[0]) == 11

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from monchain import kernels
from helpers import haar_unitary

GATE_IMPLS = [kernels.apply_gate_statevector_numpy, kernels.apply_gate_statevector_numba]
Z_IMPLS = [kernels.z_profile_statevector_numpy, kernels.z_profile_statevector_numba]
UP_IMPLS = [kernels.up_probability_statevector_numpy, kernels.up_probability_statevector_numba]
PROJ_IMPLS = [kernels.project_site_statevector_numpy, kernels.project_site_statevector_numba]
PREDICT_IMPLS = [kernels.collapse_pair_predict_numpy, kernels.collapse_pair_predict_numba]


def random_state(rng, L):
    psi = rng.normal(size=1 << L) + 1j * rng.normal(size=1 << L)
    return np.ascontiguousarray(psi / np.linalg.norm(psi))


def dense_two_site_op(gate, site, L):
    return np.kron(np.kron(np.eye(1 << site), gate), np.eye(1 << (L - site - 2)))


@pytest.mark.parametrize("impl", GATE_IMPLS)
def test_apply_gate_matches_kron(impl):
    rng = np.random.default_rng(5)
    L = 6
    for site in range(L - 1):
        psi = random_state(rng, L)
        gate = haar_unitary(rng, 4)
        expected = dense_two_site_op(gate, site, L) @ psi
        work = psi.copy()
        impl(work, np.ascontiguousarray(gate), site, L)
        np.testing.assert_allclose(work, expected, atol=1e-12)


@pytest.mark.parametrize("impl", Z_IMPLS)
def test_z_profile_matches_operator_expectation(impl):
    rng = np.random.default_rng(6)
    L = 5
    psi = random_state(rng, L)
    z = np.diag([1.0, -1.0])
    for site in range(L):
        op = np.kron(np.kron(np.eye(1 << site), z), np.eye(1 << (L - site - 1)))
        expected = np.real(psi.conj() @ op @ psi)
        got = impl(psi, L)[site]
        assert abs(got - expected) < 1e-12


@pytest.mark.parametrize("impl", UP_IMPLS)
def test_up_probability_matches_projector(impl):
    rng = np.random.default_rng(7)
    L = 5
    psi = random_state(rng, L)
    proj = np.diag([1.0, 0.0])
    for site in range(L):
        op = np.kron(np.kron(np.eye(1 << site), proj), np.eye(1 << (L - site - 1)))
        expected = np.real(psi.conj() @ op @ psi)
        assert abs(impl(psi, site, L) - expected) < 1e-12


@pytest.mark.parametrize("impl", PROJ_IMPLS)
def test_project_zeroes_branch_and_returns_weight(impl):
    rng = np.random.default_rng(8)
    L = 4
    for site in range(L):
        for keep_up in (True, False):
            psi = random_state(rng, L)
            p_up = kernels.up_probability_statevector_numpy(psi, site, L)
            work = psi.copy()
            weight = impl(work, site, keep_up, L)
            expected = p_up if keep_up else 1.0 - p_up
            assert abs(weight - expected) < 1e-12
            # kept branch untouched, other branch exactly zero
            block = work.reshape(1 << site, 2, -1)
            orig = psi.reshape(1 << site, 2, -1)
            keep = 0 if keep_up else 1
            assert np.all(block[:, 1 - keep, :] == 0)
            np.testing.assert_array_equal(block[:, keep, :], orig[:, keep, :])


@pytest.mark.parametrize("impl", PREDICT_IMPLS)
def test_predict_is_exact_on_a_line(impl):
    # linear interpolation reproduces a straight predictor curve exactly,
    # span edges included
    xb = np.linspace(0.0, 10.0, 25)
    yb = 2.5 * xb - 1.0
    vb = np.full(25, 0.04)
    xa = np.sort(np.random.default_rng(1).uniform(0.0, 10.0, size=40))
    xa[0], xa[-1] = 0.0, 10.0
    yhat, vhat, ok = impl(xa, xb, yb, vb)
    assert ok.all()
    np.testing.assert_allclose(yhat, 2.5 * xa - 1.0, atol=1e-12)
    # convex variance weights keep vhat between half and the full knot value
    assert np.all(vhat <= 0.04 + 1e-15)
    assert np.all(vhat >= 0.02 - 1e-15)


@pytest.mark.parametrize("impl", PREDICT_IMPLS)
def test_predict_refuses_to_extrapolate(impl):
    xb = np.linspace(0.0, 1.0, 10)
    yb = np.sin(xb)
    vb = np.ones(10)
    xa = np.array([-0.5, 0.0, 0.5, 1.0, 1.5])
    yhat, vhat, ok = impl(xa, xb, yb, vb)
    assert ok.tolist() == [False, True, True, True, False]
    assert yhat[0] == vhat[0] == 0.0
    assert yhat[-1] == vhat[-1] == 0.0


@pytest.mark.parametrize("impl", PREDICT_IMPLS)
def test_predict_variance_propagation_at_and_between_knots(impl):
    xb = np.array([0.0, 1.0, 3.0])
    yb = np.array([1.0, -1.0, 5.0])
    vb = np.array([1.0, 4.0, 9.0])
    yhat, vhat, ok = impl(np.array([0.0, 0.5, 1.0, 2.0, 3.0]), xb, yb, vb)
    assert ok.all()
    np.testing.assert_allclose(yhat, [1.0, 0.0, -1.0, 2.0, 5.0], atol=1e-14)
    # at a knot the weight collapses onto that sample; between knots it is
    # the convex-square combination of the two bracketing variances
    np.testing.assert_allclose(vhat, [1.0, 0.25 * 1.0 + 0.25 * 4.0, 4.0, 0.25 * 4.0 + 0.25 * 9.0, 9.0], atol=1e-14)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(4, 60))
def test_predict_paths_agree(seed, n):
    rng = np.random.default_rng(seed)
    xb = np.cumsum(0.01 + rng.uniform(size=n))
    yb = rng.normal(size=n)
    vb = rng.uniform(0.1, 2.0, size=n)
    xa = rng.uniform(xb[0] - 1.0, xb[-1] + 1.0, size=2 * n)
    a_y, a_v, a_ok = kernels.collapse_pair_predict_numpy(xa, xb, yb, vb)
    b_y, b_v, b_ok = kernels.collapse_pair_predict_numba(xa, xb, yb, vb)
    np.testing.assert_array_equal(a_ok, b_ok)
    np.testing.assert_allclose(a_y, b_y, rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(a_v, b_v, rtol=1e-12, atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 7))
def test_statevector_paths_agree(seed, L):
    rng = np.random.default_rng(seed)
    psi = random_state(rng, L)
    gate = haar_unitary(rng, 4)
    site = int(rng.integers(0, L - 1))
    a = psi.copy()
    b = psi.copy()
    kernels.apply_gate_statevector_numpy(a, gate, site, L)
    kernels.apply_gate_statevector_numba(b, np.ascontiguousarray(gate), site, L)
    np.testing.assert_allclose(a, b, atol=1e-13)
    np.testing.assert_allclose(
        kernels.z_profile_statevector_numpy(a, L),
        kernels.z_profile_statevector_numba(b, L),
        atol=1e-12,
    )


def test_dispatcher_respects_flag():
    # the module-level binding follows availability and the env flag
    if kernels.USE_NUMBA:
        assert kernels.apply_gate_statevector is kernels.apply_gate_statevector_numba
    else:
        assert kernels.apply_gate_statevector is kernels.apply_gate_statevector_numpy

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from monchain.mps import MpsState, entropy_from_schmidt
from monchain.model import ChainSpec, bond_gate
from helpers import haar_unitary


def dense_two_site_op(gate, site, L):
    return np.kron(np.kron(np.eye(1 << site), gate), np.eye(1 << (L - site - 2)))


def random_gate_state(L, n_gates, seed, chi_max=256, sv_cutoff=0.0):
    """MPS and dense statevector evolved through the same random gates."""
    rng = np.random.default_rng(seed)
    state = MpsState.from_product_state("ud" * (L // 2), chi_max=chi_max, sv_cutoff=sv_cutoff)
    psi = state.to_statevector()
    for _ in range(n_gates):
        bond = int(rng.integers(0, L - 1))
        gate = haar_unitary(rng, 4)
        state.apply_gate(bond, gate)
        psi = dense_two_site_op(gate, bond, L) @ psi
    return state, psi


def test_product_state_statevector():
    state = MpsState.from_product_state("uudd")
    psi = state.to_statevector()
    expected = np.zeros(16)
    expected[0b0011] = 1.0  # site 0 is the most significant bit
    np.testing.assert_array_equal(psi, expected)


def test_product_state_rejects_bad_pattern():
    with pytest.raises(ValueError, match="'u' and 'd'"):
        MpsState.from_product_state("uxdd")
    with pytest.raises(ValueError, match="at least two"):
        MpsState.from_product_state("u")


def test_domain_wall_profile():
    state = MpsState.domain_wall(8)
    np.testing.assert_allclose(state.z_profile(), [1, 1, 1, 1, -1, -1, -1, -1], atol=1e-14)
    with pytest.raises(ValueError, match="even"):
        MpsState.domain_wall(5)


def test_apply_gate_matches_dense():
    state, psi = random_gate_state(L=6, n_gates=12, seed=3)
    np.testing.assert_allclose(state.to_statevector(), psi, atol=1e-10)


def test_move_center_is_gauge_only():
    state, psi = random_gate_state(L=6, n_gates=8, seed=4)
    for target in (0, 5, 2, 3, 0):
        state.move_center(target)
        assert state.center == target
        np.testing.assert_allclose(state.to_statevector(), psi, atol=1e-10)
        assert state.norm_error() < 1e-12


def test_z_profile_matches_dense():
    state, psi = random_gate_state(L=6, n_gates=10, seed=5)
    z = np.diag([1.0, -1.0])
    expected = [
        np.real(psi.conj() @ np.kron(np.kron(np.eye(1 << i), z), np.eye(1 << (5 - i))) @ psi)
        for i in range(6)
    ]
    np.testing.assert_allclose(state.z_profile(), expected, atol=1e-10)


def test_entropy_matches_dense_svd():
    state, psi = random_gate_state(L=6, n_gates=10, seed=6)
    for bond in range(5):
        s = np.linalg.svd(psi.reshape(1 << (bond + 1), -1), compute_uv=False)
        expected = entropy_from_schmidt(s / np.linalg.norm(s))
        assert state.entanglement_entropy(bond) == pytest.approx(expected, abs=1e-9)


def test_entropy_rotation_pair():
    # a single XX+YY half-rotation entangles |ud> into a two-term Schmidt
    # state with weights cos^2, sin^2
    spec = ChainSpec(L=2, delta=0.5)
    state = MpsState.from_product_state("ud")
    state.apply_gate(0, bond_gate(spec, 0, np.pi / 8).matrix)
    assert state.entanglement_entropy(0) == pytest.approx(0.4164955306996875, abs=1e-12)
    assert state.site_up_probability(0) == pytest.approx(0.8535533905932737, abs=1e-12)


def test_schmidt_cache_stays_fresh_across_updates():
    state, psi = random_gate_state(L=6, n_gates=6, seed=7)
    before = state.entanglement_entropy(2)
    gate = haar_unitary(np.random.default_rng(8), 4)
    state.apply_gate(2, gate)
    psi = dense_two_site_op(gate, 2, 6) @ psi
    s = np.linalg.svd(psi.reshape(8, -1), compute_uv=False)
    after = entropy_from_schmidt(s / np.linalg.norm(s))
    assert state.entanglement_entropy(2) == pytest.approx(after, abs=1e-9)
    assert after != pytest.approx(before, abs=1e-6)


def test_schmidt_cache_invalidated_by_projection():
    state, _ = random_gate_state(L=4, n_gates=6, seed=9)
    state.entanglement_entropy(1)
    state.project_site(0, True)
    psi = state.to_statevector()
    s = np.linalg.svd(psi.reshape(4, -1), compute_uv=False)
    expected = entropy_from_schmidt(s / np.linalg.norm(s))
    assert state.entanglement_entropy(1) == pytest.approx(expected, abs=1e-9)


def test_truncation_report_matches_fidelity_loss():
    # for a single truncation the discarded weight equals 1 - |<psi_t|psi>|^2
    state, psi = random_gate_state(L=6, n_gates=10, seed=10)
    truncated = state.copy()
    truncated.chi_max = 2
    gate = np.eye(4, dtype=complex)
    report = truncated.apply_gate(2, gate)
    assert report.new_dim == 2
    overlap = abs(np.vdot(truncated.to_statevector(), psi)) ** 2
    assert report.discarded_weight == pytest.approx(1.0 - overlap, abs=1e-12)
    assert truncated.norm_error() < 1e-12


def test_bond_dims_respect_cap():
    state, _ = random_gate_state(L=8, n_gates=30, seed=11, chi_max=5)
    assert max(state.bond_dims) <= 5


def test_sv_cutoff_trims_exact_zeros():
    # gates acting on a product state create rank-2 cuts at most; with a
    # relative cutoff the reported dimension never pads with zeros
    state = MpsState.from_product_state("uddu", chi_max=64, sv_cutoff=1e-12)
    spec = ChainSpec(L=4, delta=0.5)
    report = state.apply_gate(0, bond_gate(spec, 0, 0.3).matrix)
    assert report.new_dim == 2


def test_project_site_weight_and_renormalization():
    state, psi = random_gate_state(L=6, n_gates=10, seed=12)
    p_up = state.site_up_probability(3)
    weight = state.project_site(3, True)
    assert weight == pytest.approx(p_up, abs=1e-12)
    assert state.norm_error() < 1e-12
    z = state.z_profile()
    assert z[3] == pytest.approx(1.0, abs=1e-12)


def test_project_zero_weight_branch_raises():
    state = MpsState.from_product_state("uu")
    with pytest.raises(FloatingPointError, match="zero-weight"):
        state.project_site(0, False)


def test_snapshot_round_trip(tmp_path):
    state, _ = random_gate_state(L=6, n_gates=10, seed=13)
    path = tmp_path / "state.mps"
    state.save(path)
    loaded = MpsState.load(path)
    assert loaded.L == state.L
    assert loaded.center == state.center
    assert loaded.chi_max == state.chi_max
    assert loaded.sv_cutoff == state.sv_cutoff
    for a, b in zip(loaded.tensors, state.tensors):
        np.testing.assert_array_equal(a, b)


def test_snapshot_rejects_garbage(tmp_path):
    path = tmp_path / "junk.bin"
    path.write_bytes(b"not a snapshot at all")
    with pytest.raises(ValueError, match="bad magic"):
        MpsState.load(path)


@settings(max_examples=25, deadline=None)
@given(st.text(alphabet="ud", min_size=2, max_size=8))
def test_product_states_have_zero_entropy(pattern):
    state = MpsState.from_product_state(pattern)
    expected = [1.0 if ch == "u" else -1.0 for ch in pattern]
    np.testing.assert_allclose(state.z_profile(), expected, atol=1e-14)
    assert np.all(state.entropy_profile() < 1e-12)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000))
def test_random_circuit_preserves_norm_and_matches_dense(seed):
    state, psi = random_gate_state(L=4, n_gates=6, seed=seed)
    assert state.norm_error() < 1e-12
    np.testing.assert_allclose(state.to_statevector(), psi, atol=1e-10)

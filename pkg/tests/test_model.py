import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm

from monchain.model import ChainSpec, bond_gate, bond_hamiltonian, trotter_schedule


def test_chain_spec_validation():
    with pytest.raises(ValueError, match="at least two sites"):
        ChainSpec(L=1, delta=0.5)
    with pytest.raises(ValueError, match="positive"):
        ChainSpec(L=4, delta=0.5, dt=0.0)
    with pytest.raises(ValueError, match="J is a fixed convention"):
        ChainSpec(L=4, delta=0.5, J=2.0)


def test_chain_spec_flags_gapped_regime():
    with pytest.warns(UserWarning, match="gapless"):
        ChainSpec(L=4, delta=1.0)
    with pytest.warns(UserWarning, match="gapless"):
        ChainSpec(L=4, delta=-1.5)


def test_bond_hamiltonian_matrix():
    spec = ChainSpec(L=4, delta=0.5)
    h = bond_hamiltonian(spec, 0)
    expected = np.array(
        [
            [0.25, 0, 0, 0],
            [0, -0.25, 1, 0],
            [0, 1, -0.25, 0],
            [0, 0, 0, 0.25],
        ]
    )
    np.testing.assert_allclose(h, expected, atol=0)
    assert np.allclose(h, h.conj().T)


def test_bond_hamiltonian_isotropic_spectrum():
    # Heisenberg point: triplet at +1/2, singlet at -3/2
    with pytest.warns(UserWarning):
        spec = ChainSpec(L=4, delta=1.0)
    evals = np.linalg.eigvalsh(bond_hamiltonian(spec, 0))
    np.testing.assert_allclose(evals, [-1.5, 0.5, 0.5, 0.5], atol=1e-14)


def test_bond_hamiltonian_bond_range():
    spec = ChainSpec(L=4, delta=0.5)
    with pytest.raises(ValueError, match="out of range"):
        bond_hamiltonian(spec, 3)
    with pytest.raises(ValueError, match="out of range"):
        bond_hamiltonian(spec, -1)


def test_bond_gate_matches_expm():
    spec = ChainSpec(L=4, delta=0.5)
    for tau in (0.05, 0.37, -0.8, 2.0):
        g = bond_gate(spec, 1, tau)
        ref = expm(-1j * tau * bond_hamiltonian(spec, 1))
        assert np.max(np.abs(g.matrix - ref)) < 1e-12


def test_bond_gate_identity_at_zero():
    g = bond_gate(ChainSpec(L=4, delta=0.7), 0, 0.0)
    np.testing.assert_allclose(g.matrix, np.eye(4), atol=0)


def test_bond_gate_charge_block_structure():
    # gate never mixes total-Sz sectors: only corners and the middle block
    g = bond_gate(ChainSpec(L=4, delta=0.3), 0, 0.9).matrix
    mask = np.zeros((4, 4), dtype=bool)
    mask[0, 0] = mask[3, 3] = True
    mask[1:3, 1:3] = True
    assert np.all(g[~mask] == 0)


def test_bond_gate_matrix_is_read_only():
    g = bond_gate(ChainSpec(L=4, delta=0.5), 0, 0.1)
    with pytest.raises(ValueError):
        g.matrix[0, 0] = 0


@settings(max_examples=40, deadline=None)
@given(
    delta=st.floats(-0.99, 0.99),
    tau=st.floats(-2.0, 2.0, allow_nan=False),
)
def test_bond_gate_unitary_and_exact(delta, tau):
    spec = ChainSpec(L=4, delta=delta)
    u = bond_gate(spec, 0, tau).matrix
    np.testing.assert_allclose(u @ u.conj().T, np.eye(4), atol=1e-12)
    ref = expm(-1j * tau * bond_hamiltonian(spec, 0))
    assert np.max(np.abs(u - ref)) < 1e-10


def test_trotter_schedule_palindrome():
    spec = ChainSpec(L=6, delta=0.5, dt=0.1)
    sched = trotter_schedule(spec)
    assert len(sched) == 2 * (spec.L - 1)
    order = sched.bond_order
    assert order == (0, 1, 2, 3, 4, 4, 3, 2, 1, 0)
    assert order == order[::-1]
    assert all(g.tau == 0.05 for g in sched)


def test_trotter_schedule_shares_one_matrix():
    sched = trotter_schedule(ChainSpec(L=8, delta=0.5, dt=0.1))
    mats = {id(g.matrix) for g in sched}
    assert len(mats) == 1
    assert not sched.gates[0].matrix.flags.writeable


def test_trotter_schedule_composes_to_half_steps():
    # forward pass gates each carry dt/2; two applications of a bond's
    # gate compose to the full-dt bond gate
    spec = ChainSpec(L=4, delta=0.5, dt=0.1)
    g = trotter_schedule(spec).gates[0]
    full = bond_gate(spec, 0, spec.dt).matrix
    np.testing.assert_allclose(g.matrix @ g.matrix, full, atol=1e-14)

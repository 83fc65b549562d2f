"""Exact dense backend for small chains.

Serves as the independent reference implementation: full 2^L statevectors,
exact propagators via eigendecomposition, and probability-weighted density
matrices.  ``DenseState`` deliberately mirrors the state protocol of
``MpsState`` (apply_gate, site_up_probability, project_site, z_profile,
entanglement_entropy), so trajectory code runs unchanged on either backend
and shared-RNG comparisons are structural rather than reimplemented.

Basis convention: site i is bit L-1-i of the index (site 0 most
significant), i.e. the ordering produced by kron over ascending sites.
"""

from __future__ import annotations

import numpy as np

from . import kernels
from .model import ChainSpec, TrotterSchedule, bond_hamiltonian
from .mps import TruncationReport, entropy_from_schmidt

_DENSE_LIMIT = 14
_EXACT_LIMIT = 12


class DenseState:
    """Normalized dense statevector with the shared state protocol."""

    def __init__(self, psi: np.ndarray, L: int):
        if psi.shape != (1 << L,):
            raise ValueError(f"psi has shape {psi.shape}, expected ({1 << L},)")
        self.psi = np.ascontiguousarray(psi, dtype=np.complex128)
        self._L = L

    @property
    def L(self) -> int:
        return self._L

    @classmethod
    def from_product_state(cls, pattern: str) -> "DenseState":
        L = len(pattern)
        if L > _DENSE_LIMIT:
            raise ValueError(f"dense backend refuses L={L} > {_DENSE_LIMIT}")
        bad = sorted(set(pattern) - {"u", "d"})
        if bad:
            raise ValueError(f"pattern may only contain 'u' and 'd', got {bad}")
        idx = 0
        for ch in pattern:
            idx = (idx << 1) | (ch == "d")
        psi = np.zeros(1 << L, dtype=np.complex128)
        psi[idx] = 1.0
        return cls(psi, L)

    @classmethod
    def domain_wall(cls, L: int) -> "DenseState":
        if L % 2:
            raise ValueError(f"domain wall needs even L, got {L}")
        return cls.from_product_state("u" * (L // 2) + "d" * (L // 2))

    def copy(self) -> "DenseState":
        return DenseState(self.psi.copy(), self._L)

    def norm_error(self) -> float:
        return abs(1.0 - float(np.linalg.norm(self.psi)))

    # -- shared state protocol -------------------------------------------

    def apply_gate(self, bond: int, matrix: np.ndarray) -> TruncationReport:
        """Exact two-site gate; reports zero discarded weight, dim 0 (n/a)."""
        if not 0 <= bond < self._L - 1:
            raise ValueError(f"bond {bond} out of range for L={self._L}")
        kernels.apply_gate_statevector(self.psi, matrix, bond, self._L)
        return TruncationReport(bond=bond, discarded_weight=0.0, new_dim=0)

    def site_up_probability(self, site: int) -> float:
        if not 0 <= site < self._L:
            raise ValueError(f"site {site} out of range for L={self._L}")
        p = kernels.up_probability_statevector(self.psi, site, self._L)
        return min(max(float(p), 0.0), 1.0)

    def project_site(self, site: int, keep_up: bool) -> float:
        if not 0 <= site < self._L:
            raise ValueError(f"site {site} out of range for L={self._L}")
        weight = float(kernels.project_site_statevector(self.psi, site, bool(keep_up), self._L))
        if weight < 1e-280:
            raise FloatingPointError(f"projection onto a zero-weight branch at site {site}")
        self.psi /= np.sqrt(weight)
        return min(weight, 1.0)

    def z_profile(self) -> np.ndarray:
        return kernels.z_profile_statevector(self.psi, self._L)

    def expectation_z(self, site: int) -> float:
        return 2.0 * self.site_up_probability(site) - 1.0

    def entanglement_entropy(self, bond: int) -> float:
        """Entropy across the cut (bond, bond+1), natural log."""
        if not 0 <= bond < self._L - 1:
            raise ValueError(f"bond {bond} out of range for L={self._L}")
        m = self.psi.reshape(1 << (bond + 1), -1)
        s = np.linalg.svd(m, compute_uv=False)
        return entropy_from_schmidt(s / np.linalg.norm(s))

    def schmidt_values(self, bond: int) -> np.ndarray:
        m = self.psi.reshape(1 << (bond + 1), -1)
        s = np.linalg.svd(m, compute_uv=False)
        return s / np.linalg.norm(s)

    def to_statevector(self) -> np.ndarray:
        return self.psi.copy()


def dense_trotter_step(state: DenseState, schedule: TrotterSchedule) -> None:
    """Apply one full Trotter step gate by gate."""
    for g in schedule:
        state.apply_gate(g.bond, g.matrix)


def assemble_hamiltonian(spec: ChainSpec) -> np.ndarray:
    """Full 2^L x 2^L Hamiltonian from the bond terms."""
    if spec.L > _EXACT_LIMIT:
        raise ValueError(f"dense Hamiltonian refuses L={spec.L} > {_EXACT_LIMIT}")
    dim = 1 << spec.L
    H = np.zeros((dim, dim), dtype=np.complex128)
    for b in range(spec.n_bonds):
        h = bond_hamiltonian(spec, b)
        left = np.eye(1 << b)
        right = np.eye(1 << (spec.L - b - 2))
        H += np.kron(np.kron(left, h), right)
    return H


class ExactEvolver:
    """Exact time evolution exp(-i H t) via one eigendecomposition."""

    def __init__(self, spec: ChainSpec):
        self.spec = spec
        H = assemble_hamiltonian(spec)
        self.eigenvalues, self.eigenvectors = np.linalg.eigh(H)

    def step(self, state: DenseState, t: float) -> None:
        phases = np.exp(-1.0j * self.eigenvalues * t)
        coeff = self.eigenvectors.conj().T @ state.psi
        state.psi = self.eigenvectors @ (phases * coeff)

    def propagator(self, t: float) -> np.ndarray:
        phases = np.exp(-1.0j * self.eigenvalues * t)
        return (self.eigenvectors * phases) @ self.eigenvectors.conj().T


def reduced_density(state: DenseState, sites: list[int]) -> np.ndarray:
    """Reduced density matrix of ``sites`` (ascending order preserved)."""
    L = state.L
    rest = [i for i in range(L) if i not in set(sites)]
    perm = list(sites) + rest
    m = state.psi.reshape([2] * L).transpose(perm).reshape(1 << len(sites), -1)
    return m @ m.conj().T


def averaged_reduced_density(states: list[DenseState], weights: list[float], sites: list[int]) -> np.ndarray:
    """Probability-weighted average of reduced density matrices.

    Weights must sum to 1 (checked loosely); this is the object whose
    entropy stays distinct from the trajectory-averaged pure-state entropy.
    """
    w = np.asarray(weights, dtype=float)
    if abs(w.sum() - 1.0) > 1e-8:
        raise ValueError(f"weights must sum to 1, got {w.sum()}")
    rho = np.zeros((1 << len(sites), 1 << len(sites)), dtype=np.complex128)
    for state, wi in zip(states, w):
        rho += wi * reduced_density(state, sites)
    return rho


def entropy_of_density(rho: np.ndarray) -> float:
    """Von Neumann entropy (natural log) of a density matrix."""
    evals = np.linalg.eigvalsh(rho)
    evals = evals[evals > 1e-15]
    return float(-np.sum(evals * np.log(evals)))

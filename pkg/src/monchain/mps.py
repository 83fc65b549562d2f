"""Finite matrix-product-state engine in mixed-canonical form.

Tensors are indexed ``tensors[i][left, phys, right]`` with phys 0 = up,
1 = down.  Every tensor strictly left of ``center`` is a left isometry,
every tensor strictly right of it a right isometry, and the center tensor
carries the state norm, which all public operations keep at 1.  Gauge
moves use QR and do not change the state; two-site gates use SVD with a
relative singular-value cutoff and a hard bond-dimension cap.

Schmidt spectra are cached per bond with a stamp counter: any operation
that changes the state (gate, projection) bumps the stamp, and a cached
spectrum is used only if its stamp is current.  Gauge moves leave the
stamp alone.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
import scipy.linalg

_SNAPSHOT_MAGIC = b"MCSNAP01"


@dataclass(frozen=True)
class TruncationReport:
    """Outcome of one two-site update."""

    bond: int
    discarded_weight: float
    new_dim: int


def _svd(a: np.ndarray):
    """SVD with a fallback driver; gesdd occasionally fails to converge."""
    try:
        return np.linalg.svd(a, full_matrices=False)
    except np.linalg.LinAlgError:
        return scipy.linalg.svd(a, full_matrices=False, lapack_driver="gesvd")


def entropy_from_schmidt(s: np.ndarray) -> float:
    """Von Neumann entropy (natural log) of a normalized Schmidt vector."""
    p = np.asarray(s, dtype=float) ** 2
    p = p[p > 0.0]
    return float(-np.sum(p * np.log(p)))


class MpsState:
    """Mixed-canonical MPS for a spin-1/2 open chain."""

    def __init__(self, tensors: list[np.ndarray], center: int, chi_max: int = 350, sv_cutoff: float = 1e-10):
        if chi_max < 1:
            raise ValueError(f"chi_max must be >= 1, got {chi_max}")
        if sv_cutoff < 0:
            raise ValueError(f"sv_cutoff must be >= 0, got {sv_cutoff}")
        self.tensors = tensors
        self.center = center
        self.chi_max = chi_max
        self.sv_cutoff = sv_cutoff
        self._stamp = 0
        self._schmidt: list[np.ndarray | None] = [None] * (self.L - 1)
        self._schmidt_stamp = [-1] * (self.L - 1)

    # -- constructors -----------------------------------------------------

    @classmethod
    def from_product_state(cls, pattern: str, chi_max: int = 350, sv_cutoff: float = 1e-10) -> "MpsState":
        """Build |pattern> from a string of 'u'/'d' characters."""
        if len(pattern) < 2:
            raise ValueError("need at least two sites")
        bad = sorted(set(pattern) - {"u", "d"})
        if bad:
            raise ValueError(f"pattern may only contain 'u' and 'd', got {bad}")
        tensors = []
        for ch in pattern:
            t = np.zeros((1, 2, 1), dtype=np.complex128)
            t[0, 0 if ch == "u" else 1, 0] = 1.0
            tensors.append(t)
        state = cls(tensors, center=0, chi_max=chi_max, sv_cutoff=sv_cutoff)
        for b in range(state.L - 1):
            state._schmidt[b] = np.ones(1)
            state._schmidt_stamp[b] = state._stamp
        return state

    @classmethod
    def domain_wall(cls, L: int, chi_max: int = 350, sv_cutoff: float = 1e-10) -> "MpsState":
        """Sharp wall |u..u d..d> with L/2 up spins on the left; L must be even."""
        if L % 2:
            raise ValueError(f"domain wall needs even L, got {L}")
        return cls.from_product_state("u" * (L // 2) + "d" * (L // 2), chi_max=chi_max, sv_cutoff=sv_cutoff)

    # -- basic queries ----------------------------------------------------

    @property
    def L(self) -> int:
        return len(self.tensors)

    @property
    def bond_dims(self) -> tuple[int, ...]:
        return tuple(self.tensors[i].shape[2] for i in range(self.L - 1))

    def norm_error(self) -> float:
        return abs(1.0 - float(np.linalg.norm(self.tensors[self.center])))

    def copy(self) -> "MpsState":
        out = MpsState([t.copy() for t in self.tensors], self.center, self.chi_max, self.sv_cutoff)
        out._stamp = self._stamp
        out._schmidt = [None if s is None else s.copy() for s in self._schmidt]
        out._schmidt_stamp = list(self._schmidt_stamp)
        return out

    # -- gauge moves ------------------------------------------------------

    def _move_right(self) -> None:
        c = self.center
        l, _, r = self.tensors[c].shape
        q, rmat = np.linalg.qr(self.tensors[c].reshape(l * 2, r))
        self.tensors[c] = q.reshape(l, 2, -1)
        self.tensors[c + 1] = np.tensordot(rmat, self.tensors[c + 1], axes=(1, 0))
        self.center = c + 1

    def _move_left(self) -> None:
        c = self.center
        l, _, r = self.tensors[c].shape
        q, rmat = np.linalg.qr(self.tensors[c].reshape(l, 2 * r).conj().T)
        self.tensors[c] = q.conj().T.reshape(-1, 2, r)
        self.tensors[c - 1] = np.tensordot(self.tensors[c - 1], rmat.conj().T, axes=(2, 0))
        self.center = c - 1

    def move_center(self, site: int) -> None:
        """Shift the orthogonality center to ``site`` by QR sweeps."""
        if not 0 <= site < self.L:
            raise ValueError(f"site {site} out of range for L={self.L}")
        while self.center < site:
            self._move_right()
        while self.center > site:
            self._move_left()

    # -- state-changing operations ---------------------------------------

    def apply_gate(self, bond: int, matrix: np.ndarray) -> TruncationReport:
        """Two-site update on (bond, bond+1) with SVD truncation.

        The split direction follows the sweep: a center at or left of the
        bond ends at bond+1 (forward sweep), otherwise at bond, so the
        palindromic schedule needs no extra gauge moves.
        """
        if not 0 <= bond < self.L - 1:
            raise ValueError(f"bond {bond} out of range for L={self.L}")
        forward = self.center <= bond
        if self.center < bond:
            self.move_center(bond)
        elif self.center > bond + 1:
            self.move_center(bond + 1)

        theta = np.tensordot(self.tensors[bond], self.tensors[bond + 1], axes=(2, 0))
        l, _, _, r = theta.shape
        theta = np.tensordot(matrix, theta.reshape(l, 4, r), axes=(1, 1)).transpose(1, 0, 2)
        u, s, vh = _svd(theta.reshape(l * 2, 2 * r))

        total = float(np.sum(s**2))
        keep = int(np.count_nonzero(s >= self.sv_cutoff * s[0]))
        keep = max(1, min(keep, self.chi_max))
        discarded = max(1.0 - float(np.sum(s[:keep] ** 2)) / total, 0.0)
        s_kept = s[:keep] / np.linalg.norm(s[:keep])

        u = u[:, :keep]
        vh = vh[:keep, :]
        if forward:
            self.tensors[bond] = u.reshape(l, 2, keep)
            self.tensors[bond + 1] = (s_kept[:, None] * vh).reshape(keep, 2, r)
            self.center = bond + 1
        else:
            self.tensors[bond] = (u * s_kept[None, :]).reshape(l, 2, keep)
            self.tensors[bond + 1] = vh.reshape(keep, 2, r)
            self.center = bond

        self._stamp += 1
        self._schmidt[bond] = s_kept
        self._schmidt_stamp[bond] = self._stamp
        return TruncationReport(bond=bond, discarded_weight=discarded, new_dim=keep)

    def project_site(self, site: int, keep_up: bool) -> float:
        """Collapse ``site`` to up (or down), renormalize, return the Born
        weight of the kept branch before renormalization."""
        self.move_center(site)
        m = self.tensors[site]
        keep = 0 if keep_up else 1
        weight = float(np.linalg.norm(m[:, keep, :]) ** 2)
        if weight < 1e-280:
            raise FloatingPointError(f"projection onto a zero-weight branch at site {site}")
        m[:, 1 - keep, :] = 0.0
        m /= np.sqrt(weight)
        self._stamp += 1
        return min(weight, 1.0)

    # -- measurements-related queries ------------------------------------

    def site_up_probability(self, site: int) -> float:
        """Born probability of finding ``site`` up."""
        self.move_center(site)
        p = float(np.linalg.norm(self.tensors[site][:, 0, :]) ** 2)
        return min(max(p, 0.0), 1.0)

    def expectation_z(self, site: int) -> float:
        return 2.0 * self.site_up_probability(site) - 1.0

    def z_profile(self) -> np.ndarray:
        """All <Z_i> in one right-to-left sweep; leaves the center at site 0."""
        self.move_center(self.L - 1)
        out = np.empty(self.L)
        while True:
            m = self.tensors[self.center]
            up = float(np.linalg.norm(m[:, 0, :]) ** 2)
            dn = float(np.linalg.norm(m[:, 1, :]) ** 2)
            out[self.center] = (up - dn) / (up + dn)
            if self.center == 0:
                break
            self._move_left()
        return out

    # -- entanglement -----------------------------------------------------

    def schmidt_values(self, bond: int) -> np.ndarray:
        """Normalized Schmidt spectrum across the cut (bond, bond+1)."""
        if not 0 <= bond < self.L - 1:
            raise ValueError(f"bond {bond} out of range for L={self.L}")
        if self._schmidt_stamp[bond] == self._stamp and self._schmidt[bond] is not None:
            return self._schmidt[bond].copy()
        self.move_center(bond)
        l, _, r = self.tensors[bond].shape
        s = np.linalg.svd(self.tensors[bond].reshape(l * 2, r), compute_uv=False)
        s = s / np.linalg.norm(s)
        self._schmidt[bond] = s
        self._schmidt_stamp[bond] = self._stamp
        return s.copy()

    def entanglement_entropy(self, bond: int) -> float:
        """Von Neumann entropy (natural log) across the cut (bond, bond+1)."""
        return entropy_from_schmidt(self.schmidt_values(bond))

    def entropy_profile(self) -> np.ndarray:
        return np.array([self.entanglement_entropy(b) for b in range(self.L - 1)])

    # -- conversions and snapshots ----------------------------------------

    def to_statevector(self) -> np.ndarray:
        """Dense amplitudes with site 0 as the most significant bit.

        Guarded to L <= 20; meant for oracle comparisons, not production.
        """
        if self.L > 20:
            raise ValueError(f"refusing dense conversion at L={self.L}")
        acc = np.ones((1, 1), dtype=np.complex128)
        for t in self.tensors:
            acc = np.tensordot(acc, t, axes=(1, 0))
            acc = acc.reshape(acc.shape[0] * 2, -1)
        return acc[:, 0]

    def save(self, path) -> None:
        """Binary snapshot: header plus raw little-endian tensors."""
        with open(path, "wb") as fh:
            fh.write(_SNAPSHOT_MAGIC)
            fh.write(struct.pack("<IIdi", self.L, self.chi_max, self.sv_cutoff, self.center))
            for t in self.tensors:
                l, _, r = t.shape
                fh.write(struct.pack("<II", l, r))
                fh.write(np.ascontiguousarray(t, dtype="<c16").tobytes())

    @classmethod
    def load(cls, path) -> "MpsState":
        with open(path, "rb") as fh:
            magic = fh.read(len(_SNAPSHOT_MAGIC))
            if magic != _SNAPSHOT_MAGIC:
                raise ValueError(f"not a snapshot file: bad magic {magic!r}")
            L, chi_max, sv_cutoff, center = struct.unpack("<IIdi", fh.read(20))
            tensors = []
            for _ in range(L):
                l, r = struct.unpack("<II", fh.read(8))
                buf = fh.read(l * 2 * r * 16)
                tensors.append(np.frombuffer(buf, dtype="<c16").reshape(l, 2, r).astype(np.complex128))
        return cls(tensors, center=center, chi_max=chi_max, sv_cutoff=sv_cutoff)

"""Hot numeric kernels: numba-jitted with a pure-numpy fallback.

Every public kernel exists in two implementations, ``*_numba`` and
``*_numpy``, with identical signatures.  The paths accumulate in different
orders, so they agree to rounding (~1e-12 relative), while each path on its
own is bit-deterministic run to run.  The module-level name binds to the
jitted version unless numba is missing or the environment variable
``MONCHAIN_NO_NUMBA`` is set to a truthy value, in which case the numpy
path is used.  ``benchmarks/bench_kernels.py`` times the two paths against
each other.

Statevector kernels address site ``i`` of an ``L``-site chain as bit
``L-1-i`` of the basis-state index (site 0 is the most significant bit),
matching the ordering produced by ``kron`` over ascending site index.
"""

from __future__ import annotations

import os

import numpy as np

_flag = os.environ.get("MONCHAIN_NO_NUMBA", "").strip().lower()
NUMBA_DISABLED = _flag in {"1", "true", "yes", "on"}

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn

        if args and callable(args[0]):
            return args[0]
        return wrap


USE_NUMBA = HAVE_NUMBA and not NUMBA_DISABLED


# ---------------------------------------------------------------------------
# two-site gate on a dense statevector


def apply_gate_statevector_numpy(psi: np.ndarray, gate: np.ndarray, site: int, L: int) -> None:
    """Apply a 4x4 gate to adjacent sites (site, site+1) of psi, in place."""
    pre = 1 << site
    post = 1 << (L - site - 2)
    block = psi.reshape(pre, 4, post)
    block[:] = np.einsum("ab,ibj->iaj", gate, block)


@njit(cache=True)
def apply_gate_statevector_numba(psi, gate, site, L):  # pragma: no cover - exercised via dispatcher
    post = 1 << (L - site - 2)
    pre = 1 << site
    stride = post
    for a in range(pre):
        base = a * 4 * post
        for j in range(post):
            i0 = base + j
            i1 = i0 + stride
            i2 = i1 + stride
            i3 = i2 + stride
            v0 = psi[i0]
            v1 = psi[i1]
            v2 = psi[i2]
            v3 = psi[i3]
            psi[i0] = gate[0, 0] * v0 + gate[0, 1] * v1 + gate[0, 2] * v2 + gate[0, 3] * v3
            psi[i1] = gate[1, 0] * v0 + gate[1, 1] * v1 + gate[1, 2] * v2 + gate[1, 3] * v3
            psi[i2] = gate[2, 0] * v0 + gate[2, 1] * v1 + gate[2, 2] * v2 + gate[2, 3] * v3
            psi[i3] = gate[3, 0] * v0 + gate[3, 1] * v1 + gate[3, 2] * v2 + gate[3, 3] * v3


# ---------------------------------------------------------------------------
# Z expectation profile


def z_profile_statevector_numpy(psi: np.ndarray, L: int) -> np.ndarray:
    w = psi.real**2 + psi.imag**2
    out = np.empty(L)
    for i in range(L):
        halves = w.reshape(1 << i, 2, -1).sum(axis=(0, 2))
        out[i] = halves[0] - halves[1]
    return out


@njit(cache=True)
def z_profile_statevector_numba(psi, L):  # pragma: no cover - exercised via dispatcher
    out = np.zeros(L)
    n = psi.shape[0]
    for idx in range(n):
        v = psi[idx]
        w = v.real * v.real + v.imag * v.imag
        if w == 0.0:
            continue
        for i in range(L):
            if (idx >> (L - 1 - i)) & 1:
                out[i] -= w
            else:
                out[i] += w
    return out


# ---------------------------------------------------------------------------
# single-site Born probability and projection


def up_probability_statevector_numpy(psi: np.ndarray, site: int, L: int) -> float:
    w = psi.real**2 + psi.imag**2
    return float(w.reshape(1 << site, 2, -1)[:, 0, :].sum())


@njit(cache=True)
def up_probability_statevector_numba(psi, site, L):  # pragma: no cover - exercised via dispatcher
    post = 1 << (L - site - 1)
    pre = 1 << site
    acc = 0.0
    for a in range(pre):
        base = a * 2 * post
        for j in range(post):
            v = psi[base + j]
            acc += v.real * v.real + v.imag * v.imag
    return acc


def project_site_statevector_numpy(psi: np.ndarray, site: int, keep_up: bool, L: int) -> float:
    """Zero the discarded branch in place; return the kept branch weight."""
    block = psi.reshape(1 << site, 2, -1)
    keep = 0 if keep_up else 1
    drop = 1 - keep
    kept = float((block[:, keep, :].real ** 2 + block[:, keep, :].imag ** 2).sum())
    block[:, drop, :] = 0.0
    return kept


@njit(cache=True)
def project_site_statevector_numba(psi, site, keep_up, L):  # pragma: no cover - exercised via dispatcher
    post = 1 << (L - site - 1)
    pre = 1 << site
    kept = 0.0
    off_keep = 0 if keep_up else post
    off_drop = post - off_keep
    for a in range(pre):
        base = a * 2 * post
        for j in range(post):
            v = psi[base + off_keep + j]
            kept += v.real * v.real + v.imag * v.imag
            psi[base + off_drop + j] = 0.0
    return kept


# ---------------------------------------------------------------------------
# cross-curve interpolation with error propagation (scaling collapse)
#
# One curve predicts another through its piecewise-linear interpolant,
# restricted to x values inside its own span.  Refusing to extrapolate
# keeps edge points from injecting parameter-dependent bias, and the
# propagated interpolant variance lets the caller combine predictions
# from several curves inverse-variance weighted, so every scored point
# contributes ~1 to a chi-square-like quality at a true collapse.


def collapse_pair_predict_numpy(
    xa: np.ndarray, xb: np.ndarray, yb: np.ndarray, vb: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Linear-interpolant prediction of curve b at the positions xa.

    xb must be sorted strictly ascending; vb holds per-point error
    variances of yb.  Returns (yhat, vhat, ok) where ok flags positions
    inside [xb[0], xb[-1]] and vhat propagates the bracketing variances
    through the interpolation weights.  Entries with ok False are zero.
    """
    n = xa.shape[0]
    yhat = np.zeros(n)
    vhat = np.zeros(n)
    ok = (xa >= xb[0]) & (xa <= xb[-1])
    if not ok.any():
        return yhat, vhat, ok
    xi = xa[ok]
    hi = np.clip(np.searchsorted(xb, xi, side="right"), 1, xb.size - 1)
    lo = hi - 1
    dx = xb[hi] - xb[lo]
    f = (xi - xb[lo]) / dx
    yhat[ok] = yb[lo] + f * (yb[hi] - yb[lo])
    vhat[ok] = (1.0 - f) ** 2 * vb[lo] + f**2 * vb[hi]
    return yhat, vhat, ok


@njit(cache=True)
def collapse_pair_predict_numba(xa, xb, yb, vb):  # pragma: no cover - exercised via dispatcher
    n = xa.shape[0]
    nb = xb.shape[0]
    yhat = np.zeros(n)
    vhat = np.zeros(n)
    ok = np.zeros(n, dtype=np.bool_)
    lo_x = xb[0]
    hi_x = xb[nb - 1]
    for j in range(n):
        v = xa[j]
        if v < lo_x or v > hi_x:
            continue
        lo = 0
        hi = nb - 1
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if xb[mid] <= v:
                lo = mid
            else:
                hi = mid
        f = (v - xb[lo]) / (xb[hi] - xb[lo])
        yhat[j] = yb[lo] + f * (yb[hi] - yb[lo])
        vhat[j] = (1.0 - f) ** 2 * vb[lo] + f * f * vb[hi]
        ok[j] = True
    return yhat, vhat, ok


# ---------------------------------------------------------------------------
# dispatch

if USE_NUMBA:
    apply_gate_statevector = apply_gate_statevector_numba
    z_profile_statevector = z_profile_statevector_numba
    up_probability_statevector = up_probability_statevector_numba
    project_site_statevector = project_site_statevector_numba
    collapse_pair_predict = collapse_pair_predict_numba
else:
    apply_gate_statevector = apply_gate_statevector_numpy
    z_profile_statevector = z_profile_statevector_numpy
    up_probability_statevector = up_probability_statevector_numpy
    project_site_statevector = project_site_statevector_numpy
    collapse_pair_predict = collapse_pair_predict_numpy

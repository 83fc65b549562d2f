"""Domain-wall observables: density profiles, spreading, regime diagnostics.

The melted fraction of a domain wall is tracked through the normalized
spin density f_i = (<Z_i> + 1) / L, which sums to 1 and acts as a
probability distribution over sites.  Site coordinates are centered,
x_i = i - (L-1)/2 for 0-based i, so a perfectly antisymmetric profile has
a second moment of exactly (L^2 - 1)/12 at all times.

The spreading variance is measured two ways on purpose: the variance
route sigma2 = var(t) - var(0) and the first-moment route
sigma2_alt = m1(0)^2 - m1(t)^2.  They agree exactly when the second
moment is conserved, so their gap is a live diagnostic, never to be
collapsed into a single code path.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .analysis import derivative_series


def centered_coordinates(L: int) -> np.ndarray:
    """Site coordinates with the chain center at zero."""
    return np.arange(L) - (L - 1) / 2.0


def spin_density(z: np.ndarray) -> np.ndarray:
    """Normalized density f = (z + 1) / L along the last axis."""
    z = np.asarray(z, dtype=float)
    return (z + 1.0) / z.shape[-1]


@dataclass
class SpreadingSeries:
    """Spreading measures of a (trajectory-averaged) density history."""

    times: np.ndarray
    sigma2: np.ndarray
    sigma2_alt: np.ndarray
    first_moment: np.ndarray
    second_moment: np.ndarray

    @classmethod
    def from_density(cls, times: np.ndarray, f: np.ndarray, conservation_tol: float = 1e-6) -> "SpreadingSeries":
        f = np.asarray(f, dtype=float)
        sums = f.sum(axis=1)
        worst = float(np.max(np.abs(sums - 1.0)))
        if worst > conservation_tol:
            raise ValueError(f"density not conserved: max |sum f - 1| = {worst:.3e}")
        x = centered_coordinates(f.shape[1])
        m1 = f @ x
        m2 = f @ (x * x)
        var = m2 - m1 * m1
        return cls(
            times=np.asarray(times, dtype=float),
            sigma2=var - var[0],
            sigma2_alt=m1[0] ** 2 - m1 * m1,
            first_moment=m1,
            second_moment=m2,
        )

    @classmethod
    def from_profile(cls, times: np.ndarray, z: np.ndarray, conservation_tol: float = 1e-6) -> "SpreadingSeries":
        return cls.from_density(times, spin_density(z), conservation_tol=conservation_tol)

    def save_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("t,sigma2,sigma2_alt,m1,m2\n")
            for i, t in enumerate(self.times):
                fh.write(
                    f"{format(float(t), '.17g')},{format(float(self.sigma2[i]), '.17g')},"
                    f"{format(float(self.sigma2_alt[i]), '.17g')},"
                    f"{format(float(self.first_moment[i]), '.17g')},"
                    f"{format(float(self.second_moment[i]), '.17g')}\n"
                )

    @classmethod
    def load_csv(cls, path) -> "SpreadingSeries":
        data = np.genfromtxt(path, delimiter=",", names=True)
        return cls(
            times=np.atleast_1d(data["t"]),
            sigma2=np.atleast_1d(data["sigma2"]),
            sigma2_alt=np.atleast_1d(data["sigma2_alt"]),
            first_moment=np.atleast_1d(data["m1"]),
            second_moment=np.atleast_1d(data["m2"]),
        )


def spreading(times: np.ndarray, f: np.ndarray, conservation_tol: float = 1e-6) -> SpreadingSeries:
    """Spreading measures from a density history f[t, site]."""
    return SpreadingSeries.from_density(times, f, conservation_tol=conservation_tol)


def usable_window(f: np.ndarray, edge_tol: float = 1e-3) -> np.ndarray:
    """Mask of times before the melted region reaches either chain end.

    A time counts as contaminated once the edge density deviates from its
    initial value by more than ``edge_tol``; the mask is monotone, so
    nothing after the first contaminated time is usable.
    """
    f = np.asarray(f, dtype=float)
    bad = (np.abs(f[:, 0] - f[0, 0]) > edge_tol) | (np.abs(f[:, -1] - f[0, -1]) > edge_tol)
    return ~np.logical_or.accumulate(bad)


def regime_derivatives(series: SpreadingSeries, lam: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Smoothed first and second time derivatives of sigma2."""
    d1 = derivative_series(series.times, series.sigma2, order=1, lam=lam)
    d2 = derivative_series(series.times, series.sigma2, order=2, lam=lam)
    return d1, d2


def classify_regime(times: np.ndarray, d1: np.ndarray, d2: np.ndarray) -> str:
    """Label growth as "ballistic", "diffusive" or "indeterminate".

    Convention (quarter-window means over the supplied window): persistent
    positive curvature late in the window means ballistic; curvature that
    has died off relative to early times, with positive slope, means
    diffusive.  A globally flat second derivative (max below 2% of the
    mean slope) is diffusive outright.  Everything else, e.g. an
    intermediate power law whose curvature decays but has not vanished,
    is indeterminate.
    """
    times = np.asarray(times, dtype=float)
    if times.size < 8:
        raise ValueError(f"need at least 8 points to classify, got {times.size}")
    quarter = max(times.size // 4, 2)
    d1_late = float(np.mean(d1[-quarter:]))
    d2_early = float(np.mean(d2[:quarter]))
    d2_late = float(np.mean(d2[-quarter:]))
    d2_mean = float(np.mean(d2))
    slope_scale = float(np.mean(np.abs(d1)))

    if np.max(np.abs(d2)) <= 0.02 * slope_scale:
        return "diffusive" if d1_late > 0 else "indeterminate"
    if d1_late > 0 and abs(d2_late) <= 0.1 * abs(d2_early):
        return "diffusive"
    if d2_late > 0.1 * d2_mean and d2_late >= 0.5 * d2_early:
        return "ballistic"
    return "indeterminate"

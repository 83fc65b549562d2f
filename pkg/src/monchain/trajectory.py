"""Quantum-trajectory driver: single runs and parallel ensembles.

One step = one full second-order Trotter step followed by one measurement
layer; observables are sampled between the two, so the sample at t = n*dt
sees the unitary update but not that step's measurements.  The t = 0
sample is taken before any evolution.

Ensemble statistics are reduced with a fixed pairwise tree over the
trajectory index, so results are bit-identical for any worker count.
Each trajectory owns an independent Philox stream keyed by
(master_seed, index).
"""

from __future__ import annotations

import math
import multiprocessing as mp
from dataclasses import dataclass, field

import numpy as np

from .model import ChainSpec, trotter_schedule
from .monitor import MeasurementRecord, MonitorSpec, make_rng, measurement_layer
from .mps import MpsState
from .observables import centered_coordinates
from .oracle import DenseState

# A single two-site update discarding more than this much weight means the
# bond cap is badly undersized; the trajectory aborts rather than silently
# degrade.
ABORT_DISCARDED_WEIGHT = 0.01

# Fraction of aborted trajectories above which the whole ensemble fails.
ENSEMBLE_ABORT_FRACTION = 0.01


class TruncationBlowupError(RuntimeError):
    """A single SVD truncation discarded more weight than allowed."""

    def __init__(self, traj_index: int, step: int, bond: int, weight: float):
        self.traj_index = traj_index
        self.step = step
        self.bond = bond
        self.weight = weight
        super().__init__(
            f"trajectory {traj_index}: discarded weight {weight:.3e} at "
            f"step {step}, bond {bond} exceeds {ABORT_DISCARDED_WEIGHT}"
        )


class EnsembleAbortError(RuntimeError):
    """Too many trajectories aborted for the ensemble to be trustworthy."""

    def __init__(self, n_aborted: int, n_traj: int):
        self.n_aborted = n_aborted
        self.n_traj = n_traj
        super().__init__(
            f"{n_aborted} of {n_traj} trajectories aborted on truncation "
            f"blowup (> {ENSEMBLE_ABORT_FRACTION:.0%} allowed)"
        )


@dataclass(frozen=True)
class RunConfig:
    """Everything needed to reproduce a run."""

    chain: ChainSpec
    monitor: MonitorSpec
    horizon: float
    chi_max: int = 350
    sv_cutoff: float = 1e-10
    sample_every: int = 1
    n_traj: int = 1
    master_seed: int = 0

    def __post_init__(self) -> None:
        if self.monitor.dt != self.chain.dt:
            raise ValueError(
                f"monitor dt {self.monitor.dt} differs from chain dt {self.chain.dt}"
            )
        if not self.horizon > 0:
            raise ValueError(f"horizon must be positive, got {self.horizon}")
        if self.sample_every < 1:
            raise ValueError(f"sample_every must be >= 1, got {self.sample_every}")
        if self.n_traj < 1:
            raise ValueError(f"n_traj must be >= 1, got {self.n_traj}")
        if self.chi_max < 1:
            raise ValueError(f"chi_max must be >= 1, got {self.chi_max}")
        if self.sv_cutoff < 0:
            raise ValueError(f"sv_cutoff must be >= 0, got {self.sv_cutoff}")

    @classmethod
    def build(
        cls,
        L: int,
        delta: float,
        p_unit: float,
        horizon: float,
        dt: float = 0.1,
        chi_max: int = 350,
        sv_cutoff: float = 1e-10,
        sample_every: int = 1,
        n_traj: int = 1,
        master_seed: int = 0,
    ) -> "RunConfig":
        return cls(
            chain=ChainSpec(L=L, delta=delta, dt=dt),
            monitor=MonitorSpec.from_unit_rate(p_unit, dt),
            horizon=horizon,
            chi_max=chi_max,
            sv_cutoff=sv_cutoff,
            sample_every=sample_every,
            n_traj=n_traj,
            master_seed=master_seed,
        )

    @property
    def n_steps(self) -> int:
        return int(math.ceil(self.horizon / self.chain.dt - 1e-9))

    @property
    def sample_steps(self) -> tuple[int, ...]:
        return tuple(range(0, self.n_steps + 1, self.sample_every))

    @property
    def mid_bond(self) -> int:
        return (self.chain.L - 1) // 2


@dataclass
class TrajectoryResult:
    """Sampled series of one trajectory."""

    config: RunConfig
    traj_index: int
    backend: str
    times: np.ndarray
    z: np.ndarray
    entropy_mid: np.ndarray
    record: MeasurementRecord
    max_discarded_weight: float
    max_norm_error: float


@dataclass
class EnsembleSeries:
    """Trajectory-averaged series with standard errors.

    ``m1``/``m2`` are the first/second moments of the spin density over
    centered coordinates, accumulated per trajectory so their errors are
    honest.  ``asym`` holds z[i] + z[L-1-i] for the first L//2 sites: zero
    in expectation for a domain-wall initial state.
    """

    config: RunConfig
    times: np.ndarray
    n_ok: int
    n_aborted: int
    mean_z: np.ndarray
    stderr_z: np.ndarray
    mean_entropy: np.ndarray
    stderr_entropy: np.ndarray
    mean_m1: np.ndarray
    stderr_m1: np.ndarray
    mean_m2: np.ndarray
    stderr_m2: np.ndarray
    mean_m2_drift: np.ndarray
    stderr_m2_drift: np.ndarray
    mean_asym: np.ndarray
    stderr_asym: np.ndarray
    aborted_indices: list[int] = field(default_factory=list)

    @property
    def L(self) -> int:
        return self.config.chain.L


def run_trajectory(config: RunConfig, traj_index: int = 0, backend: str = "mps") -> TrajectoryResult:
    """Evolve one monitored trajectory and sample observables.

    ``backend`` is "mps" or "dense"; both run the same loop against the
    shared state protocol, so with equal seeds they draw identical
    randomness and follow the same measurement history.
    """
    L = config.chain.L
    if backend == "mps":
        state = MpsState.domain_wall(L, chi_max=config.chi_max, sv_cutoff=config.sv_cutoff)
    elif backend == "dense":
        state = DenseState.domain_wall(L)
    else:
        raise ValueError(f"unknown backend {backend!r}")

    schedule = trotter_schedule(config.chain)
    rng, key = make_rng(config.master_seed, traj_index)
    record = MeasurementRecord(master_seed=config.master_seed, traj_index=traj_index, rng_key=key)

    sample_steps = config.sample_steps
    n_samples = len(sample_steps)
    times = np.array([n * config.chain.dt for n in sample_steps])
    z = np.empty((n_samples, L))
    entropy = np.empty(n_samples)
    mid = config.mid_bond
    max_disc = 0.0
    max_norm = 0.0

    def take(i: int) -> None:
        nonlocal max_norm
        entropy[i] = state.entanglement_entropy(mid)
        z[i] = state.z_profile()
        max_norm = max(max_norm, state.norm_error())

    take(0)
    next_sample = 1
    for n in range(1, config.n_steps + 1):
        for g in schedule:
            rep = state.apply_gate(g.bond, g.matrix)
            if rep.discarded_weight > max_disc:
                max_disc = rep.discarded_weight
            if rep.discarded_weight > ABORT_DISCARDED_WEIGHT:
                raise TruncationBlowupError(traj_index, n, g.bond, rep.discarded_weight)
        if next_sample < n_samples and n == sample_steps[next_sample]:
            take(next_sample)
            next_sample += 1
        record.steps.append((n, measurement_layer(state, config.monitor, rng)))

    return TrajectoryResult(
        config=config,
        traj_index=traj_index,
        backend=backend,
        times=times,
        z=z,
        entropy_mid=entropy,
        record=record,
        max_discarded_weight=max_disc,
        max_norm_error=max_norm,
    )


# ---------------------------------------------------------------------------
# ensemble machinery


def _pairwise_sum(arrays: list[np.ndarray]) -> np.ndarray:
    """Fixed-topology pairwise tree sum; order depends only on list order."""
    work = list(arrays)
    while len(work) > 1:
        merged = [work[i] + work[i + 1] for i in range(0, len(work) - 1, 2)]
        if len(work) % 2:
            merged.append(work[-1])
        work = merged
    return work[0]


def _trajectory_payload(args: tuple[RunConfig, int]):
    """Worker body: run one trajectory, return reduced per-sample arrays."""
    config, k = args
    try:
        res = run_trajectory(config, k, backend="mps")
    except TruncationBlowupError as err:
        return (k, "abort", err.step, err.bond, err.weight)
    L = config.chain.L
    x = centered_coordinates(L)
    f = (res.z + 1.0) / L
    m1 = f @ x
    m2 = f @ (x * x)
    half = L // 2
    asym = res.z[:, :half] + res.z[:, L - 1 : L - 1 - half : -1]
    return (k, "ok", res.z, res.entropy_mid, m1, m2, m2 - m2[0], asym, res.max_discarded_weight, res.max_norm_error)


def _init_worker() -> None:
    # Oversubscribed BLAS threads inside worker processes slow everything
    # down and add nondeterministic scheduling; pin to one.
    try:
        from threadpoolctl import threadpool_limits

        global _BLAS_LIMIT
        _BLAS_LIMIT = threadpool_limits(limits=1)
    except ImportError:
        pass


def _mean_stderr(parts: list[np.ndarray], n: int) -> tuple[np.ndarray, np.ndarray]:
    mean = _pairwise_sum(parts) / n
    if n < 2:
        return mean, np.zeros_like(mean)
    # two-pass: centering before squaring avoids the sum-of-squares
    # cancellation that would corrupt stderr on near-constant columns
    resid_sq = _pairwise_sum([(p - mean) ** 2 for p in parts])
    var = np.maximum(resid_sq, 0.0) / (n - 1)
    return mean, np.sqrt(var / n)


def run_ensemble(config: RunConfig, workers: int = 1) -> EnsembleSeries:
    """Run config.n_traj trajectories and reduce them deterministically.

    Trajectories that abort on truncation blowup are dropped from the
    statistics; if more than ENSEMBLE_ABORT_FRACTION of them abort the
    whole ensemble raises EnsembleAbortError.
    """
    args = [(config, k) for k in range(config.n_traj)]
    if workers <= 1:
        raw = [_trajectory_payload(a) for a in args]
    else:
        ctx = mp.get_context("fork")
        with ctx.Pool(workers, initializer=_init_worker) as pool:
            raw = pool.map(_trajectory_payload, args, chunksize=1)

    ok = [r for r in raw if r[1] == "ok"]
    aborted = [r[0] for r in raw if r[1] == "abort"]
    if len(aborted) > ENSEMBLE_ABORT_FRACTION * config.n_traj:
        raise EnsembleAbortError(len(aborted), config.n_traj)
    if not ok:
        raise EnsembleAbortError(len(aborted), config.n_traj)

    n = len(ok)
    mean_z, stderr_z = _mean_stderr([r[2] for r in ok], n)
    mean_s, stderr_s = _mean_stderr([r[3] for r in ok], n)
    mean_m1, stderr_m1 = _mean_stderr([r[4] for r in ok], n)
    mean_m2, stderr_m2 = _mean_stderr([r[5] for r in ok], n)
    mean_m2_drift, stderr_m2_drift = _mean_stderr([r[6] for r in ok], n)
    mean_asym, stderr_asym = _mean_stderr([r[7] for r in ok], n)

    sample_steps = config.sample_steps
    times = np.array([s * config.chain.dt for s in sample_steps])
    return EnsembleSeries(
        config=config,
        times=times,
        n_ok=n,
        n_aborted=len(aborted),
        mean_z=mean_z,
        stderr_z=stderr_z,
        mean_entropy=mean_s,
        stderr_entropy=stderr_s,
        mean_m1=mean_m1,
        stderr_m1=stderr_m1,
        mean_m2=mean_m2,
        stderr_m2=stderr_m2,
        mean_m2_drift=mean_m2_drift,
        stderr_m2_drift=stderr_m2_drift,
        mean_asym=mean_asym,
        stderr_asym=stderr_asym,
        aborted_indices=aborted,
    )


# ---------------------------------------------------------------------------
# flat-file output (all floats written as %.17g for byte-stable reruns)


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def save_profile_csv(path, times: np.ndarray, mean_z: np.ndarray, stderr_z: np.ndarray | None = None) -> None:
    """Long-format site profile: t,site,mean_z[,stderr_z]."""
    with open(path, "w") as fh:
        if stderr_z is None:
            fh.write("t,site,z\n")
            for i, t in enumerate(times):
                for j in range(mean_z.shape[1]):
                    fh.write(f"{_fmt(t)},{j},{_fmt(mean_z[i, j])}\n")
        else:
            fh.write("t,site,mean_z,stderr_z\n")
            for i, t in enumerate(times):
                for j in range(mean_z.shape[1]):
                    fh.write(f"{_fmt(t)},{j},{_fmt(mean_z[i, j])},{_fmt(stderr_z[i, j])}\n")


def load_profile_csv(path) -> tuple[np.ndarray, np.ndarray, np.ndarray | None]:
    """Inverse of save_profile_csv; returns (times, z, stderr or None)."""
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        rows = [line.strip().split(",") for line in fh if line.strip()]
    has_err = "stderr_z" in header
    times = []
    for t, *_ in rows:
        if not times or times[-1] != float(t):
            times.append(float(t))
    n_t = len(times)
    L = len(rows) // n_t
    z = np.empty((n_t, L))
    err = np.empty((n_t, L)) if has_err else None
    for row in rows:
        i = times.index(float(row[0]))
        j = int(row[1])
        z[i, j] = float(row[2])
        if has_err:
            err[i, j] = float(row[3])
    return np.array(times), z, err


def save_entropy_csv(path, times: np.ndarray, entropy: np.ndarray, stderr: np.ndarray | None = None) -> None:
    with open(path, "w") as fh:
        if stderr is None:
            fh.write("t,entropy\n")
            for t, s in zip(times, entropy):
                fh.write(f"{_fmt(t)},{_fmt(s)}\n")
        else:
            fh.write("t,mean_entropy,stderr_entropy\n")
            for t, s, e in zip(times, entropy, stderr):
                fh.write(f"{_fmt(t)},{_fmt(s)},{_fmt(e)}\n")


def load_entropy_csv(path) -> tuple[np.ndarray, np.ndarray, np.ndarray | None]:
    data = np.genfromtxt(path, delimiter=",", names=True)
    names = data.dtype.names
    times = np.atleast_1d(data["t"])
    col = "entropy" if "entropy" in names else "mean_entropy"
    entropy = np.atleast_1d(data[col])
    err = np.atleast_1d(data["stderr_entropy"]) if "stderr_entropy" in names else None
    return times, entropy, err


def save_moments_csv(path, series: EnsembleSeries) -> None:
    with open(path, "w") as fh:
        fh.write("t,mean_m1,stderr_m1,mean_m2,stderr_m2\n")
        for i, t in enumerate(series.times):
            fh.write(
                f"{_fmt(t)},{_fmt(series.mean_m1[i])},{_fmt(series.stderr_m1[i])},"
                f"{_fmt(series.mean_m2[i])},{_fmt(series.stderr_m2[i])}\n"
            )


def save_ensemble(series: EnsembleSeries, outdir, tag: str) -> list[str]:
    """Write profile, entropy and moment files; returns the paths."""
    import os

    paths = []
    p = os.path.join(outdir, f"{tag}_profile.csv")
    save_profile_csv(p, series.times, series.mean_z, series.stderr_z)
    paths.append(p)
    p = os.path.join(outdir, f"{tag}_entropy.csv")
    save_entropy_csv(p, series.times, series.mean_entropy, series.stderr_entropy)
    paths.append(p)
    p = os.path.join(outdir, f"{tag}_moments.csv")
    save_moments_csv(p, series)
    paths.append(p)
    return paths

"""Projective Z monitoring: rates, RNG streams, measurement layers, records.

A measurement layer visits every site once per Trotter step.  Each site is
selected independently with probability ``p_step``; selected sites are
measured projectively with Born statistics and the state is renormalized.
``p_step`` relates to the per-unit-time rate by
``p_unit = 1 - (1 - p_step)**(1/dt)``.

Randomness is counter-based (Philox) with one independent stream per
trajectory, derived from (master_seed, trajectory index) via SeedSequence
spawn keys.  Within a layer the draw order is fixed: one block of L
site-selection uniforms, then one outcome uniform per selected site in
ascending site order.  This makes trajectories byte-reproducible for a
given (master_seed, index) regardless of scheduling.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

# Outcome branches with Born weight below this are forced to the dominant
# branch; the outcome uniform is still drawn so stream positions stay fixed.
DEGENERATE_BRANCH = 1e-12


def rate_to_step(p_unit: float, dt: float) -> float:
    """Per-step selection probability giving rate ``p_unit`` per unit time."""
    if not 0.0 <= p_unit <= 1.0:
        raise ValueError(f"p_unit must lie in [0, 1], got {p_unit}")
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    return 1.0 - (1.0 - p_unit) ** dt


def step_to_rate(p_step: float, dt: float) -> float:
    """Per-unit-time rate implied by per-step probability ``p_step``."""
    if not 0.0 <= p_step <= 1.0:
        raise ValueError(f"p_step must lie in [0, 1], got {p_step}")
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    return 1.0 - (1.0 - p_step) ** (1.0 / dt)


@dataclass(frozen=True)
class MonitorSpec:
    """Monitoring strength, stored in both per-unit and per-step form."""

    p_unit: float
    p_step: float
    dt: float

    def __post_init__(self) -> None:
        expect = rate_to_step(self.p_unit, self.dt)
        if abs(expect - self.p_step) > 1e-12:
            raise ValueError(
                f"inconsistent rates: p_unit={self.p_unit} at dt={self.dt} "
                f"implies p_step={expect}, got {self.p_step}"
            )

    @classmethod
    def from_unit_rate(cls, p_unit: float, dt: float) -> "MonitorSpec":
        return cls(p_unit=p_unit, p_step=rate_to_step(p_unit, dt), dt=dt)

    @classmethod
    def from_step_probability(cls, p_step: float, dt: float) -> "MonitorSpec":
        return cls(p_unit=step_to_rate(p_step, dt), p_step=p_step, dt=dt)


def make_rng(master_seed: int, traj_index: int) -> tuple[np.random.Generator, int]:
    """Philox stream for one trajectory; returns (generator, 64-bit key)."""
    ss = np.random.SeedSequence(master_seed, spawn_key=(traj_index,))
    key = int(ss.generate_state(1, np.uint64)[0])
    return np.random.Generator(np.random.Philox(key=key)), key


@dataclass
class MeasurementRecord:
    """Full measurement history of one trajectory.

    ``steps`` holds one entry per Trotter step: (step index, list of
    (site, outcome)) with outcome +1 for up and -1 for down.  Steps with
    no selected site appear with an empty list.
    """

    master_seed: int
    traj_index: int
    rng_key: int
    steps: list[tuple[int, list[tuple[int, int]]]] = field(default_factory=list)

    def n_measurements(self) -> int:
        return sum(len(m) for _, m in self.steps)

    def to_jsonl(self, path) -> None:
        with open(path, "w") as fh:
            header = {
                "master_seed": self.master_seed,
                "traj_index": self.traj_index,
                "rng_key": self.rng_key,
            }
            fh.write(json.dumps(header, sort_keys=True) + "\n")
            for n, events in self.steps:
                fh.write(json.dumps({"step": n, "events": events}) + "\n")

    @classmethod
    def from_jsonl(cls, path) -> "MeasurementRecord":
        with open(path) as fh:
            header = json.loads(fh.readline())
            rec = cls(
                master_seed=header["master_seed"],
                traj_index=header["traj_index"],
                rng_key=header["rng_key"],
            )
            for line in fh:
                row = json.loads(line)
                rec.steps.append((row["step"], [(s, o) for s, o in row["events"]]))
        return rec


def measure_site(state, site: int, rng: np.random.Generator) -> int:
    """Projectively measure one site with Born statistics; returns +/-1.

    Works on any state exposing site_up_probability / project_site.  The
    outcome uniform is always consumed, even when a branch weight is
    degenerate and the outcome is forced.
    """
    u = rng.random()
    p_up = state.site_up_probability(site)
    if p_up < DEGENERATE_BRANCH:
        up = False
    elif 1.0 - p_up < DEGENERATE_BRANCH:
        up = True
    else:
        up = u < p_up
    state.project_site(site, up)
    return 1 if up else -1


def measurement_layer(state, spec: MonitorSpec, rng: np.random.Generator) -> list[tuple[int, int]]:
    """One monitoring layer over all sites; returns [(site, outcome), ...].

    Site-selection uniforms are drawn as one length-L block up front, so
    the outcome-draw positions depend only on which sites were selected.
    """
    select = rng.random(state.L) < spec.p_step
    events = []
    for site in np.flatnonzero(select):
        events.append((int(site), measure_site(state, int(site), rng)))
    return events

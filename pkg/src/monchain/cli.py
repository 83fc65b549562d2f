"""Command-line interface.

Subcommands: evolve (one trajectory), ensemble (trajectory average),
analyze (spreading, derivatives, exponents, collapses), oracle-check
(dense-backend cross-validation) and sweep (parameter grids with resume).

All runs are driven by a JSON config file; every written file of floats
uses %.17g, and each output directory gets a manifest.json mapping file
names to sha256 content hashes with no timestamps, so identical inputs
reproduce byte-identical output trees.  Exit codes: 0 success, 1 data or
I/O error, 2 config error, 3 numerical abort (truncation blowup).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys

import numpy as np

from . import __version__
from .analysis import (
    fit_exponent,
    optimize_collapse,
    optimize_entropy_collapse,
    steady_state_entropy,
)
from .model import ChainSpec
from .monitor import MonitorSpec
from .observables import SpreadingSeries, classify_regime, regime_derivatives, spin_density, usable_window
from .oracle import DenseState, ExactEvolver
from .trajectory import (
    EnsembleAbortError,
    RunConfig,
    TruncationBlowupError,
    load_entropy_csv,
    load_profile_csv,
    run_ensemble,
    run_trajectory,
    save_ensemble,
    save_entropy_csv,
    save_profile_csv,
)


class ConfigError(ValueError):
    """Invalid run configuration; message lists every offending key."""


_DEFAULTS = {
    "dt": 0.1,
    "chi_max": 350,
    "sv_cutoff": 1e-10,
    "sample_every": 1,
    "n_traj": 1,
    "master_seed": 0,
}
_REQUIRED = ("L", "delta", "p_unit", "T")
_ALL_KEYS = set(_REQUIRED) | set(_DEFAULTS)


def _check_scalar(key, value, problems, kind, low=None, high=None, strict_low=False):
    if kind is int:
        if not isinstance(value, int) or isinstance(value, bool):
            problems.append(f"{key}: expected an integer, got {value!r}")
            return None
    else:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            problems.append(f"{key}: expected a number, got {value!r}")
            return None
        value = float(value)
    if low is not None and (value <= low if strict_low else value < low):
        problems.append(f"{key}: must be {'>' if strict_low else '>='} {low}, got {value}")
        return None
    if high is not None and value > high:
        problems.append(f"{key}: must be <= {high}, got {value}")
        return None
    return value


def parse_config(raw: dict, allow_grid: bool = False) -> dict:
    """Validate a config dict, apply defaults, and report every problem.

    With allow_grid=True the keys L and p_unit may also be lists; the
    returned dict then carries them as lists for sweep expansion.
    """
    problems = []
    unknown = sorted(set(raw) - _ALL_KEYS)
    for key in unknown:
        problems.append(f"{key}: unknown key")
    missing = [k for k in _REQUIRED if k not in raw]
    for key in missing:
        problems.append(f"{key}: required key missing")

    out = dict(_DEFAULTS)
    grid_keys = {"L", "p_unit"} if allow_grid else set()

    def handle(key, kind, **lim):
        if key not in raw:
            return
        value = raw[key]
        if key in grid_keys and isinstance(value, list):
            if not value:
                problems.append(f"{key}: grid list may not be empty")
                return
            checked = [_check_scalar(key, v, problems, kind, **lim) for v in value]
            if all(c is not None for c in checked):
                out[key] = checked
            return
        checked = _check_scalar(key, value, problems, kind, **lim)
        if checked is not None:
            out[key] = checked

    handle("L", int, low=2)
    handle("delta", float)
    handle("p_unit", float, low=0.0, high=1.0)
    handle("T", float, low=0.0, strict_low=True)
    handle("dt", float, low=0.0, strict_low=True)
    handle("chi_max", int, low=1)
    handle("sv_cutoff", float, low=0.0)
    handle("sample_every", int, low=1)
    handle("n_traj", int, low=1)
    handle("master_seed", int)

    if problems:
        raise ConfigError("invalid config:\n  " + "\n  ".join(problems))
    return out


def load_config(path, allow_grid: bool = False) -> dict:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as err:
        raise ConfigError(f"invalid config: {path} is not valid JSON ({err})") from err
    if not isinstance(raw, dict):
        raise ConfigError("invalid config: top level must be a JSON object")
    return parse_config(raw, allow_grid=allow_grid)


def config_to_run(cfg: dict) -> RunConfig:
    return RunConfig(
        chain=ChainSpec(L=cfg["L"], delta=cfg["delta"], dt=cfg["dt"]),
        monitor=MonitorSpec.from_unit_rate(cfg["p_unit"], cfg["dt"]),
        horizon=cfg["T"],
        chi_max=cfg["chi_max"],
        sv_cutoff=cfg["sv_cutoff"],
        sample_every=cfg["sample_every"],
        n_traj=cfg["n_traj"],
        master_seed=cfg["master_seed"],
    )


# ---------------------------------------------------------------------------
# manifests


def _sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _write_json(path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_manifest(outdir, command: str, config: dict, paths: list[str], extra: dict | None = None) -> str:
    manifest = {
        "tool": "monchain",
        "version": __version__,
        "command": command,
        "config": config,
        "outputs": {os.path.relpath(p, outdir): _sha256(p) for p in paths},
    }
    if extra:
        manifest.update(extra)
    mpath = os.path.join(outdir, "manifest.json")
    _write_json(mpath, manifest)
    return mpath


# ---------------------------------------------------------------------------
# subcommands


def cmd_evolve(args) -> int:
    cfg = load_config(args.config)
    run = config_to_run(cfg)
    os.makedirs(args.out, exist_ok=True)
    res = run_trajectory(run, traj_index=args.traj, backend=args.backend)
    tag = args.tag or f"traj{args.traj}"
    paths = []
    p = os.path.join(args.out, f"{tag}_profile.csv")
    save_profile_csv(p, res.times, res.z)
    paths.append(p)
    p = os.path.join(args.out, f"{tag}_entropy.csv")
    save_entropy_csv(p, res.times, res.entropy_mid)
    paths.append(p)
    p = os.path.join(args.out, f"{tag}_record.jsonl")
    res.record.to_jsonl(p)
    paths.append(p)
    write_manifest(
        args.out,
        "evolve",
        cfg,
        paths,
        extra={
            "traj_index": args.traj,
            "backend": args.backend,
            "max_discarded_weight": res.max_discarded_weight,
            "n_measurements": res.record.n_measurements(),
        },
    )
    print(f"evolve: wrote {len(paths)} files to {args.out}")
    return 0


def cmd_ensemble(args) -> int:
    cfg = load_config(args.config)
    run = config_to_run(cfg)
    os.makedirs(args.out, exist_ok=True)
    series = run_ensemble(run, workers=args.workers)
    tag = args.tag or "ensemble"
    paths = save_ensemble(series, args.out, tag)
    write_manifest(
        args.out,
        "ensemble",
        cfg,
        paths,
        extra={"n_ok": series.n_ok, "n_aborted": series.n_aborted},
    )
    print(f"ensemble: {series.n_ok} trajectories ({series.n_aborted} aborted), wrote {args.out}")
    return 0


def _analyze_derivatives(args) -> int:
    times, mean_z, _ = load_profile_csv(args.profile)
    f = spin_density(mean_z)
    mask = usable_window(f, edge_tol=args.edge_tol)
    series = SpreadingSeries.from_density(times, f, conservation_tol=args.conservation_tol)
    os.makedirs(args.out, exist_ok=True)
    paths = []
    p = os.path.join(args.out, "spreading.csv")
    series.save_csv(p)
    paths.append(p)

    t_w = times[mask]
    win = SpreadingSeries(
        times=t_w,
        sigma2=series.sigma2[mask],
        sigma2_alt=series.sigma2_alt[mask],
        first_moment=series.first_moment[mask],
        second_moment=series.second_moment[mask],
    )
    d1, d2 = regime_derivatives(win, lam=args.lam)
    p = os.path.join(args.out, "derivatives.csv")
    with open(p, "w") as fh:
        fh.write("t,d1,d2\n")
        for t, a, b in zip(t_w, d1, d2):
            fh.write(f"{format(float(t), '.17g')},{format(float(a), '.17g')},{format(float(b), '.17g')}\n")
    paths.append(p)
    regime = classify_regime(t_w, d1, d2)
    p = os.path.join(args.out, "window.json")
    _write_json(
        p,
        {
            "edge_tol": args.edge_tol,
            "n_total": int(times.size),
            "n_usable": int(mask.sum()),
            "t_max_usable": float(t_w[-1]),
            "regime": regime,
        },
    )
    paths.append(p)
    write_manifest(args.out, "analyze-derivatives", {"profile": os.path.basename(args.profile)}, paths)
    print(f"analyze: regime={regime}, {int(mask.sum())}/{times.size} usable times")
    return 0


def _analyze_exponent(args) -> int:
    series = SpreadingSeries.load_csv(args.spreading)
    fit = fit_exponent(series.times, series.sigma2, window=(args.window[0], args.window[1]), seed=args.seed)
    os.makedirs(args.out, exist_ok=True)
    p = os.path.join(args.out, "exponent.json")
    _write_json(
        p,
        {
            "exponent": fit.exponent,
            "ci_low": fit.ci_low,
            "ci_high": fit.ci_high,
            "intercept": fit.intercept,
            "window": list(fit.window),
            "n_points": fit.n_points,
        },
    )
    write_manifest(args.out, "analyze-exponent", {"spreading": os.path.basename(args.spreading)}, [p])
    print(f"analyze: exponent={fit.exponent:.4f} CI=[{fit.ci_low:.4f}, {fit.ci_high:.4f}]")
    return 0


def _parse_series_arg(items, key_kind):
    parsed = []
    for item in items:
        try:
            head, path = item.split(":", 1)
            parsed.append((key_kind(head), path))
        except ValueError as err:
            raise ConfigError(f"invalid --series entry {item!r}; expected VALUE:PATH") from err
    return parsed


def _analyze_collapse(args) -> int:
    curves = []
    for p_val, path in _parse_series_arg(args.series, float):
        series = SpreadingSeries.load_csv(path)
        keep = (series.times >= args.t_min) & (series.sigma2 > 0)
        if keep.sum() < 8:
            raise ConfigError(f"series {path}: fewer than 8 usable points after t >= {args.t_min}")
        curves.append((p_val, series.times[keep], series.sigma2[keep]))
    result = optimize_collapse(
        curves,
        p_c_bounds=tuple(args.pc_bounds),
        beta_bounds=tuple(args.beta_bounds),
        eta_bounds=tuple(args.eta_bounds),
    )
    os.makedirs(args.out, exist_ok=True)
    paths = []
    p = os.path.join(args.out, "collapse.json")
    _write_json(
        p,
        {
            "p_c": result.p_c,
            "beta": result.beta,
            "eta": result.eta,
            "cost": result.cost,
            "bounds_hit": result.bounds_hit,
            "hit_axes": list(result.hit_axes),
            "n_evaluations": result.n_evaluations,
        },
    )
    paths.append(p)
    p = os.path.join(args.out, "collapsed.csv")
    with open(p, "w") as fh:
        fh.write("p,t,x,y\n")
        for p_val, t, s2 in curves:
            x = (p_val - result.p_c) * t ** (1.0 / result.eta)
            y = s2 * t ** (-result.beta)
            for ti, xi, yi in zip(t, x, y):
                fh.write(
                    f"{format(p_val, '.17g')},{format(float(ti), '.17g')},"
                    f"{format(float(xi), '.17g')},{format(float(yi), '.17g')}\n"
                )
    paths.append(p)
    write_manifest(args.out, "analyze-collapse", {"n_series": len(curves)}, paths)
    flag = " (bounds hit!)" if result.bounds_hit else ""
    print(f"analyze: p_c={result.p_c:.4f} beta={result.beta:.4f} eta={result.eta:.4f} cost={result.cost:.3e}{flag}")
    return 0


def _analyze_entropy_collapse(args) -> int:
    rows = np.genfromtxt(args.table, delimiter=",", names=True)
    rows = np.atleast_1d(rows)
    datasets = {}
    for L in sorted(set(int(v) for v in rows["L"])):
        sel = rows[rows["L"] == L]
        order = np.argsort(sel["p"])
        datasets[L] = (np.asarray(sel["p"][order], dtype=float), np.asarray(sel["entropy"][order], dtype=float))
    if len(datasets) < 2:
        raise ConfigError("entropy collapse needs at least two system sizes in the table")
    result = optimize_entropy_collapse(
        datasets, p_c_bounds=tuple(args.pc_bounds), nu_bounds=tuple(args.nu_bounds)
    )
    os.makedirs(args.out, exist_ok=True)
    p = os.path.join(args.out, "entropy_collapse.json")
    _write_json(
        p,
        {
            "p_c": result.p_c,
            "nu": result.nu,
            "cost": result.cost,
            "bounds_hit": result.bounds_hit,
            "hit_axes": list(result.hit_axes),
            "n_evaluations": result.n_evaluations,
        },
    )
    write_manifest(args.out, "analyze-entropy-collapse", {"table": os.path.basename(args.table)}, [p])
    flag = " (bounds hit!)" if result.bounds_hit else ""
    print(f"analyze: p_c={result.p_c:.4f} nu={result.nu:.4f} cost={result.cost:.3e}{flag}")
    return 0


def _analyze_steady_state(args) -> int:
    times, entropy, _ = load_entropy_csv(args.entropy)
    value = steady_state_entropy(times, entropy, window_frac=args.frac)
    payload = {"steady_state_entropy": value, "window_frac": args.frac}
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        p = os.path.join(args.out, "steady_state.json")
        _write_json(p, payload)
        write_manifest(args.out, "analyze-steady-state", {"entropy": os.path.basename(args.entropy)}, [p])
    print(f"analyze: steady-state entropy = {value:.6f}")
    return 0


def cmd_analyze(args) -> int:
    dispatch = {
        "derivatives": _analyze_derivatives,
        "exponent": _analyze_exponent,
        "collapse": _analyze_collapse,
        "entropy-collapse": _analyze_entropy_collapse,
        "steady-state": _analyze_steady_state,
    }
    return dispatch[args.mode](args)


def cmd_oracle_check(args) -> int:
    """Cross-validate the MPS engine against the dense backend."""
    failures = 0

    def report(name: str, ok: bool, detail: str) -> None:
        nonlocal failures
        failures += not ok
        print(f"oracle-check {'PASS' if ok else 'FAIL'}: {name} ({detail})")

    # gate against direct matrix exponential
    from scipy.linalg import expm

    from .model import bond_gate, bond_hamiltonian, trotter_schedule

    spec = ChainSpec(L=args.L, delta=args.delta, dt=args.dt)
    h = bond_hamiltonian(spec, 0)
    dev = float(np.max(np.abs(bond_gate(spec, 0, 0.37).matrix - expm(-0.37j * h))))
    report("closed-form bond gate vs expm", dev < 1e-12, f"max dev {dev:.2e}")

    # Trotter error order on a small dense chain
    small = ChainSpec(L=6, delta=args.delta, dt=0.2)
    exact = ExactEvolver(small)
    errs = []
    for dt in (0.2, 0.1):
        stepped = DenseState.domain_wall(6)
        n = int(round(1.0 / dt))
        sched = trotter_schedule(ChainSpec(L=6, delta=args.delta, dt=dt))
        for _ in range(n):
            for g in sched:
                stepped.apply_gate(g.bond, g.matrix)
        ref = DenseState.domain_wall(6)
        exact.step(ref, 1.0)
        errs.append(float(np.linalg.norm(stepped.psi - ref.psi)))
    ratio = errs[0] / errs[1]
    report("second-order Trotter halving ratio", 3.0 < ratio < 5.0, f"ratio {ratio:.2f}")

    # shared-seed monitored trajectory, MPS vs dense
    run = RunConfig.build(
        L=args.L,
        delta=args.delta,
        p_unit=args.p_unit,
        horizon=args.T,
        dt=args.dt,
        chi_max=1 << (args.L // 2),
        sv_cutoff=0.0,
        master_seed=args.seed,
    )
    res_m = run_trajectory(run, 0, backend="mps")
    res_d = run_trajectory(run, 0, backend="dense")
    same_record = res_m.record.steps == res_d.record.steps
    dz = float(np.max(np.abs(res_m.z - res_d.z)))
    ds = float(np.max(np.abs(res_m.entropy_mid - res_d.entropy_mid)))
    report("identical measurement history", same_record, f"{res_m.record.n_measurements()} measurements")
    report("z profiles agree", dz < 1e-8, f"max dev {dz:.2e}")
    report("half-cut entropies agree", ds < 1e-8, f"max dev {ds:.2e}")

    print(f"oracle-check: {'all checks passed' if failures == 0 else f'{failures} check(s) FAILED'}")
    return 0 if failures == 0 else 1


def cmd_sweep(args) -> int:
    cfg = load_config(args.config, allow_grid=True)
    Ls = cfg["L"] if isinstance(cfg["L"], list) else [cfg["L"]]
    ps = cfg["p_unit"] if isinstance(cfg["p_unit"], list) else [cfg["p_unit"]]
    os.makedirs(args.out, exist_ok=True)
    manifest_path = os.path.join(args.out, "manifest.json")
    known = {}
    if os.path.exists(manifest_path):
        with open(manifest_path) as fh:
            known = json.load(fh).get("outputs", {})

    def cell_done(paths):
        for p in paths:
            rel = os.path.relpath(p, args.out)
            if rel not in known or not os.path.exists(p) or _sha256(p) != known[rel]:
                return False
        return True

    all_paths = []
    table_rows = []
    n_aborted_total = 0
    cell_index = 0
    for L in Ls:
        for p_unit in ps:
            tag = f"L{L}_p{p_unit:g}"
            expected = [
                os.path.join(args.out, f"{tag}_{kind}.csv")
                for kind in ("profile", "entropy", "moments", "spreading")
            ]
            cell_seed = int(
                np.random.SeedSequence(cfg["master_seed"], spawn_key=(0xC411, cell_index)).generate_state(
                    1, np.uint64
                )[0]
            )
            cell_index += 1
            if cell_done(expected):
                print(f"sweep: {tag} already complete, skipping")
            else:
                cell_cfg = dict(cfg, L=L, p_unit=p_unit, master_seed=cell_seed)
                series = run_ensemble(config_to_run(cell_cfg), workers=args.workers)
                n_aborted_total += series.n_aborted
                save_ensemble(series, args.out, tag)
                spr = SpreadingSeries.from_profile(series.times, series.mean_z, conservation_tol=1e-4)
                spr.save_csv(expected[3])
                for pth in expected:
                    known[os.path.relpath(pth, args.out)] = _sha256(pth)
                write_manifest(
                    args.out,
                    "sweep",
                    cfg,
                    [os.path.join(args.out, rel) for rel in known],
                    extra={"n_aborted": n_aborted_total},
                )
                print(f"sweep: {tag} done ({series.n_ok} trajectories)")
            all_paths.extend(expected)
            times, entropy, _ = load_entropy_csv(expected[1])
            table_rows.append((L, p_unit, steady_state_entropy(times, entropy, window_frac=args.frac)))

    table_path = os.path.join(args.out, "steady_state_entropy.csv")
    with open(table_path, "w") as fh:
        fh.write("L,p,entropy\n")
        for L, p_unit, s in table_rows:
            fh.write(f"{L},{format(p_unit, '.17g')},{format(s, '.17g')}\n")
    all_paths.append(table_path)
    known[os.path.relpath(table_path, args.out)] = _sha256(table_path)
    write_manifest(
        args.out,
        "sweep",
        cfg,
        [os.path.join(args.out, rel) for rel in known],
        extra={"n_aborted": n_aborted_total},
    )
    print(f"sweep: {len(table_rows)} cells complete, table at {table_path}")
    return 0


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="monchain", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"monchain {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("evolve", help="run a single monitored trajectory")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--traj", type=int, default=0, help="trajectory index (RNG stream)")
    p.add_argument("--backend", choices=("mps", "dense"), default="mps")
    p.add_argument("--tag", default=None)
    p.set_defaults(func=cmd_evolve)

    p = sub.add_parser("ensemble", help="run and average many trajectories")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--tag", default=None)
    p.set_defaults(func=cmd_ensemble)

    p = sub.add_parser("analyze", help="spreading, derivatives, exponents, collapses")
    p.add_argument("--mode", required=True, choices=("derivatives", "exponent", "collapse", "entropy-collapse", "steady-state"))
    p.add_argument("--profile", help="ensemble profile CSV (derivatives mode)")
    p.add_argument("--spreading", help="spreading CSV (exponent mode)")
    p.add_argument("--series", action="append", default=[], help="VALUE:PATH, repeatable (collapse mode)")
    p.add_argument("--table", help="L,p,entropy CSV (entropy-collapse mode)")
    p.add_argument("--entropy", help="entropy CSV (steady-state mode)")
    p.add_argument("--out", default=None)
    p.add_argument("--lam", type=float, default=None, help="spline penalty; omit for GCV")
    p.add_argument("--edge-tol", type=float, default=1e-3)
    p.add_argument("--conservation-tol", type=float, default=1e-6)
    p.add_argument("--window", type=float, nargs=2, default=(2.0, 1e30))
    p.add_argument("--t-min", type=float, default=2.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--frac", type=float, default=0.6)
    p.add_argument("--pc-bounds", type=float, nargs=2, default=(0.05, 0.3))
    p.add_argument("--beta-bounds", type=float, nargs=2, default=(1.0, 2.0))
    p.add_argument("--eta-bounds", type=float, nargs=2, default=(1.5, 4.0))
    p.add_argument("--nu-bounds", type=float, nargs=2, default=(0.5, 3.0))
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("oracle-check", help="cross-validate against the dense backend")
    p.add_argument("--L", type=int, default=8)
    p.add_argument("--delta", type=float, default=0.5)
    p.add_argument("--p-unit", dest="p_unit", type=float, default=0.3)
    p.add_argument("--T", type=float, default=2.0)
    p.add_argument("--dt", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=7)
    p.set_defaults(func=cmd_oracle_check)

    p = sub.add_parser("sweep", help="grid of ensembles with resume support")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--frac", type=float, default=0.6, help="steady-state window fraction")
    p.set_defaults(func=cmd_sweep)

    return parser


_REQUIRED_BY_MODE = {
    "derivatives": ("profile",),
    "exponent": ("spreading",),
    "collapse": ("series",),
    "entropy-collapse": ("table",),
    "steady-state": ("entropy",),
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "analyze":
            for need in _REQUIRED_BY_MODE[args.mode]:
                if not getattr(args, need):
                    raise ConfigError(f"analyze --mode {args.mode} requires --{need.replace('_', '-')}")
            if args.mode in ("derivatives", "exponent", "collapse", "entropy-collapse") and not args.out:
                raise ConfigError(f"analyze --mode {args.mode} requires --out")
        return args.func(args)
    except ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except (TruncationBlowupError, EnsembleAbortError) as err:
        print(f"numerical abort: {err}", file=sys.stderr)
        return 3
    except (FileNotFoundError, ValueError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

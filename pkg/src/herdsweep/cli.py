"""Command-line front end: ``herdsweep <command> [options]``.

Exit codes: 0 success, 1 synthesis budget exhausted, 2 bad input,
3 scare function fails the theory gate.
"""

from __future__ import annotations

import argparse
import json
import platform
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import blowup_profile, error_summary, volume_bound_check, write_rows
from .dynamics import evolve_set
from .errors import DomainError, HerdError, PreconditionError, SynthesisError, TheoryGateError
from .geometry.tube import ball_tube
from .scare import classify, necessary_integral
from .scenario import Scenario, load_scenario, parse_ladder, parse_phi, scenario_from_dict
from .synthesis import ControlSchedule, approximate_sweeping, confine

EXIT_OK, EXIT_BUDGET, EXIT_INPUT, EXIT_GATE = 0, 1, 2, 3
DEFAULT_PROFILE_EPS = [0.1, 0.05, 0.025, 0.0125]


class _Timer:
    def __init__(self):
        self.timings = {}

    def __call__(self, name):
        timer = self

        class _Span:
            def __enter__(self):
                self.t0 = time.perf_counter()

            def __exit__(self, *exc):
                timer.timings[name] = round(time.perf_counter() - self.t0, 3)

        return _Span()


def _versions() -> dict:
    import matplotlib
    import scipy
    import shapely
    import skimage

    return {"herdsweep": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "shapely": shapely.__version__, "matplotlib": matplotlib.__version__,
            "scikit-image": skimage.__version__}


def _dump(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.bool_):
        return bool(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not serializable: {type(o)}")


def _out_dir(args, sc: Scenario, command: str) -> Path:
    out = Path(args.out or sc.out or f"runs/{command}")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _manifest(out: Path, command: str, sc: Scenario | None, timer: _Timer, outputs, status: int) -> None:
    _dump(out / "manifest.json", {
        "schema": 1,
        "command": command,
        "scenario_hash": sc.digest if sc else None,
        "versions": _versions(),
        "timings": timer.timings,
        "outputs": sorted(outputs),
        "exit_code": status,
    })


def _evolution_rows(evo):
    for t, s in zip(evo.times, evo.states):
        for kind, pts in (("boundary", s.boundary), ("sample", s.samples)):
            for i, p in enumerate(pts):
                yield {"t": t, "kind": kind, "index": i, "x": p[0], "y": p[1]}


def _write_evolution(path: Path, evo) -> None:
    write_rows(path, _evolution_rows(evo), ["t", "kind", "index", "x", "y"])


def _track_rows(times, pts):
    for k, t in enumerate(times):
        for i, p in enumerate(pts[k]):
            yield {"t": t, "sample": i, "x": p[0], "y": p[1]}


def _scenario(args) -> Scenario:
    if not getattr(args, "scenario", None):
        raise DomainError("this command needs --scenario")
    sc = load_scenario(args.scenario)
    if getattr(args, "ladder", None):
        sc.ladder = parse_ladder(args.ladder)
    if getattr(args, "phi", None):
        sc.scare = parse_phi(args.phi)
    return sc


# commands ---------------------------------------------------------------------------


def cmd_classify(args) -> int:
    if args.scenario:
        sc = load_scenario(args.scenario)
        f, d = sc.scare, sc.dimension
    else:
        if not args.phi:
            raise DomainError("classify needs --phi or --scenario")
        f, d = parse_phi(args.phi), args.dim
    if args.phi and args.scenario:
        f = parse_phi(args.phi)
    rep = classify(f, d)
    out = rep.to_json()
    m = necessary_integral(f, d)
    out["necessary_integral"] = None if not np.isfinite(m) else float(m)
    out["scare"] = f.to_json()
    print(json.dumps(out, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_confine(args) -> int:
    sc = _scenario(args)
    if sc.omega0 is None or sc.omega1 is None:
        raise DomainError("confine needs omega0 and omega1")
    out = _out_dir(args, sc, "confine")
    timer = _Timer()
    with timer("confine"):
        res = confine(sc.omega0, sc.omega1, sc.T, sc.eps, sc.scare, ladder=sc.ladder,
                      progress=(lambda r: print(f"rung {r.n}x{r.N}: {r.reason}, d_H={r.achieved_dH:.4g}",
                                                file=sys.stderr)) if args.verbose else None)
    outputs = ["report.json", "manifest.json", "ladder.csv"]
    report = res.report()
    report["eps"] = sc.eps
    report["T"] = sc.T
    report["scenario_hash"] = sc.digest
    with timer("write"):
        write_rows(out / "ladder.csv", (h.to_json() for h in res.history),
                   ["n", "N", "success", "achieved_dH", "max_excess", "witness_displacement", "coverage",
                    "min_clearance", "delta0_min", "delta0_max"])
        if res.schedule is not None:
            (out / "schedule.json").write_text(json.dumps(res.schedule.to_json(), indent=1, sort_keys=True) + "\n")
            outputs.append("schedule.json")
        if res.evolution is not None:
            _write_evolution(out / "evolution.csv", res.evolution)
            outputs.append("evolution.csv")
        _dump(out / "report.json", report)
    if not args.no_figures and res.evolution is not None:
        from . import plotting

        with timer("figures"):
            plotting.plot_evolution(res.evolution.times, [s.boundary for s in res.evolution.states],
                                    out / "evolution.png", sc.omega1.boundary, sc.eps)
            plotting.plot_ladder([h.to_json() for h in res.history], out / "ladder.png", eps=sc.eps)
        outputs += ["evolution.png", "ladder.png"]
    status = EXIT_OK if res.success else EXIT_BUDGET
    _manifest(out, "confine", sc, timer, outputs, status)
    print(json.dumps({"success": res.success, "rung": report["rung"], "achieved_dH": res.achieved_dH,
                      "out": str(out)}, default=_json_default))
    return status


def cmd_sweep(args) -> int:
    sc = _scenario(args)
    if sc.omega0 is None:
        raise DomainError("sweep needs omega0")
    tube = sc.tube
    if tube is None:
        raise DomainError("sweep needs an explicit tube")
    out = _out_dir(args, sc, "sweep")
    timer = _Timer()
    with timer("sweep"):
        res = approximate_sweeping(tube, sc.omega0, sc.T, sc.eps, sc.scare, delta=sc.delta, ladder=sc.ladder,
                                   continuum_points=args.continuum)
    fin = res.rungs[-1]
    ref = res.reference.at(fin.times)
    cand = res.candidate.points
    with timer("write"):
        write_rows(out / "reference.csv", _track_rows(fin.times, ref), ["t", "sample", "x", "y"])
        write_rows(out / "candidate.csv", _track_rows(fin.times, cand), ["t", "sample", "x", "y"])
        summary = error_summary((fin.times, ref), (fin.times, cand))
        write_rows(out / "errors.csv", summary.rows(), ["t", "max_error", "hausdorff"])
        write_rows(out / "ladder.csv", (r.to_json() for r in res.rungs),
                   ["n", "N", "delta", "sup_error", "max_dH"])
        (out / "schedule.json").write_text(json.dumps(res.schedule.to_json(), indent=1, sort_keys=True) + "\n")
        report = res.report(sc.eps)
        report["scenario_hash"] = sc.digest
        _dump(out / "report.json", report)
    outputs = ["reference.csv", "candidate.csv", "errors.csv", "ladder.csv", "schedule.json", "report.json",
               "manifest.json"]
    if not args.no_figures:
        from . import plotting

        with timer("figures"):
            plotting.plot_errors(fin.times, fin.per_time_error, fin.per_time_dH, out / "errors.png", sc.eps)
            plotting.plot_ladder([r.to_json() for r in res.rungs], out / "ladder.png", key="sup_error",
                                 eps=sc.eps, title="sup trajectory error per rung")
        outputs += ["errors.png", "ladder.png"]
    status = EXIT_OK if res.success else EXIT_BUDGET
    _manifest(out, "sweep", sc, timer, outputs, status)
    print(json.dumps({"success": res.success, "sup_error": res.sup_error, "max_dH": res.max_dH,
                      "out": str(out)}))
    return status


def cmd_profile(args) -> int:
    if args.scenario:
        sc = _scenario(args)
    else:
        if not args.phi:
            raise DomainError("profile needs --phi or --scenario")
        sc = scenario_from_dict({"scare": args.phi, "dimension": args.dim, "T": 1.0})
    tube = sc.tube or ball_tube(1.0, (0.0, 0.0), 1.0)
    prof = sc.profile or {}
    eps = prof.get("eps", DEFAULT_PROFILE_EPS)
    out = _out_dir(args, sc, "profile")
    timer = _Timer()
    with timer("profile"):
        rep = blowup_profile(tube, sc.scare, float(prof.get("t", 0.0)), eps, int(prof.get("panels", 256)),
                             int(prof.get("feet", 64)))
    with timer("write"):
        write_rows(out / "profiles.csv", rep.rows(), ["eps", "normal_inflow", "alignment_defect"])
        _dump(out / "report.json", {
            "slope": rep.slope,
            "inflow_increasing": rep.inflow_increasing,
            "defect_decreasing": rep.defect_decreasing,
            "inflow_ratio": float(np.max(np.abs(rep.inflow)) / np.min(np.abs(rep.inflow))),
            "scenario_hash": sc.digest,
        })
    outputs = ["profiles.csv", "report.json", "manifest.json"]
    if not args.no_figures:
        from . import plotting

        with timer("figures"):
            plotting.plot_profile(rep.eps, rep.inflow, rep.defect, out / "profile.png", rep.slope)
        outputs.append("profile.png")
    _manifest(out, "profile", sc, timer, outputs, EXIT_OK)
    print(json.dumps({"slope": rep.slope, "out": str(out)}))
    return EXIT_OK


def cmd_simulate(args) -> int:
    sc = _scenario(args)
    if sc.omega0 is None:
        raise DomainError("simulate needs omega0")
    try:
        schedule = ControlSchedule.from_json(json.loads(Path(args.schedule).read_text()))
    except (OSError, json.JSONDecodeError) as exc:
        raise DomainError(f"cannot read schedule {args.schedule}: {exc}") from exc
    out = _out_dir(args, sc, "simulate")
    timer = _Timer()
    out_t = np.concatenate([schedule.node_times, [schedule.T]])
    with timer("simulate"):
        evo = evolve_set(sc.omega0, schedule.control(sc.scare), schedule.T, output_times=out_t,
                         on_violation="stop")
    outputs = ["evolution.csv", "report.json", "manifest.json"]
    report = {"flags": evo.flags, "final_time": float(evo.times[-1]), "scenario_hash": sc.digest}
    vols = evo.volumes()
    vol_rows = [{"t": t, "volume": v} for t, v in zip(evo.times, vols)]
    cols = ["t", "volume"]
    vb = None
    if np.isfinite(necessary_integral(sc.scare, sc.dimension)):
        vb = volume_bound_check(evo, sc.scare, sc.dimension)
        vol_rows = [dict(r, bound=b, margin=m) for r, b, m in zip(vol_rows, vb.bound, vb.margin)]
        cols += ["bound", "margin"]
        report["volume_bound_ok"] = vb.ok
        report["min_volume_margin"] = float(vb.margin.min())
    with timer("write"):
        _write_evolution(out / "evolution.csv", evo)
        write_rows(out / "volume.csv", vol_rows, cols)
        _dump(out / "report.json", report)
    outputs.append("volume.csv")
    if not args.no_figures:
        from . import plotting

        with timer("figures"):
            target = sc.omega1.boundary if sc.omega1 is not None else None
            plotting.plot_evolution(evo.times, [s.boundary for s in evo.states], out / "evolution.png", target,
                                    sc.eps if target is not None else None, schedule.agents)
            if vb is not None:
                plotting.plot_volume(evo.times, vols, vb.bound, out / "volume.png")
                outputs.append("volume.png")
        outputs.append("evolution.png")
    status = EXIT_OK if evo.flags["violation_time"] is None else EXIT_BUDGET
    _manifest(out, "simulate", sc, timer, outputs, status)
    print(json.dumps({"violation_time": evo.flags["violation_time"], "out": str(out)}))
    return status


# entry point ----------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="herdsweep", description="Herding a set with one repelling agent.")
    p.add_argument("--version", action="version", version=f"herdsweep {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out=True):
        sp.add_argument("--scenario", help="scenario JSON file")
        sp.add_argument("--phi", help="scare function: power:<p>[:<c>] or table:<csv>")
        sp.add_argument("--dim", type=int, default=2, help="space dimension (default 2)")
        if out:
            sp.add_argument("--out", help="output directory")
            sp.add_argument("--no-figures", action="store_true", help="skip matplotlib figures")
        return sp

    common(sub.add_parser("classify", help="check the scare-function hypotheses"), out=False)
    c = common(sub.add_parser("confine", help="synthesize a confinement control"))
    c.add_argument("--ladder", help="budget ladder, e.g. 20x32,40x64")
    c.add_argument("-v", "--verbose", action="store_true")
    s = common(sub.add_parser("sweep", help="approximate a sweeping process by an agent control"))
    s.add_argument("--ladder", help="budget ladder, e.g. 20x32,40x64")
    s.add_argument("--continuum", type=int, default=16, help="points also flowed by the boundary field")
    common(sub.add_parser("profile", help="normal inflow and alignment near the tube boundary"))
    m = common(sub.add_parser("simulate", help="evolve omega0 under a saved schedule"))
    m.add_argument("--schedule", required=True, help="schedule.json from confine or sweep")
    return p


COMMANDS = {"classify": cmd_classify, "confine": cmd_confine, "sweep": cmd_sweep, "profile": cmd_profile,
            "simulate": cmd_simulate}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except TheoryGateError as exc:
        print(f"theory gate: {exc}", file=sys.stderr)
        return EXIT_GATE
    except (DomainError, PreconditionError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except SynthesisError as exc:
        print(f"synthesis failed: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except HerdError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BUDGET


if __name__ == "__main__":
    sys.exit(main())

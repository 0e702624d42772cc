"""Command line interface: ``netduality <command> ...``.

Exit codes: 0 success, 2 invalid input, 3 a required rank condition fails,
4 numerical failure.  Reports are JSON on stdout with a ``schema_version``.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import __version__
from .duality import INFINITE, duality_report
from .energy import energy_report
from .errors import InputError, NetDualityError
from .networks import MODELS, SweepConfig, run_sweep
from .numkernel import DEFAULT_TOL, ToleranceConfig, parse_matrix, parse_sections, render_sections
from .observer import ClosedLoop, assemble_closed_loop, simulate_closed_loop, synthesize_functional_observer
from .system import SystemBundle
from .targetctl import parse_poles, place_target_poles, setpoint_feedforward

SCHEMA_VERSION = 1
MODEL_ALIASES = {"ba": "barabasi_albert", "nw": "newman_watts"}


def _emit(command: str, payload: dict) -> None:
    out = {"schema_version": SCHEMA_VERSION, "command": command}
    out.update(payload)
    json.dump(out, sys.stdout, indent=2, default=_json_default)
    sys.stdout.write("\n")


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def _read(path) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None


def _load_system(path) -> SystemBundle:
    return SystemBundle.from_text(_read(path))


def _horizon(args):
    if args.infinite or (args.t1 is None and args.default_infinite):
        return INFINITE
    return 10.0 if args.t1 is None else args.t1


def _tolerances(args) -> ToleranceConfig:
    return ToleranceConfig(rank_rel_tol=args.tol) if getattr(args, "tol", None) else DEFAULT_TOL


def _complex_list(z):
    return [[float(np.real(v)), float(np.imag(v))] for v in np.atleast_1d(z)]


def _float_list(text: str, what: str) -> List[float]:
    try:
        return [float(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise InputError(f"cannot parse {what} {text!r}") from None


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_analyze(args) -> int:
    sys_ = _load_system(args.system)
    sys_.require("C")
    cfg = _tolerances(args)
    rep = duality_report(sys_.C, sys_.A, sys_.F, _horizon(args), cfg)
    _emit("analyze", rep.to_dict())
    return 0


def cmd_energy(args) -> int:
    sys_ = _load_system(args.system)
    if sys_.B is None and sys_.C is None:
        raise InputError("energy needs a B: or C: section")
    if (args.dt is None) != (args.T is None):
        raise InputError("--dt and --T go together")
    rep = energy_report(sys_, _horizon(args), _tolerances(args), args.dt, args.T)
    payload = rep.to_dict()
    payload["horizon"] = _horizon(args)
    if rep.g_matrix is not None:
        payload["G"] = rep.g_matrix
    _emit("energy", payload)
    return 0


def cmd_design_feedback(args) -> int:
    sys_ = _load_system(args.system)
    sys_.require("B")
    cfg = _tolerances(args)
    design = place_target_poles(sys_.A, sys_.B, sys_.F, parse_poles(args.poles), cfg)
    sections = {"K": design.K}
    if args.setpoint is not None:
        z = np.array(_float_list(args.setpoint, "setpoint"))
        design.feedforward_r = setpoint_feedforward(sys_.A, sys_.B, design.K, sys_.F, z)
        sections["R"] = design.feedforward_r[None, :]
    if args.out:
        Path(args.out).write_text(render_sections(sections, "state feedback u = r - K x"))
    _emit("design feedback", design.to_dict())
    return 0


def _load_gain(path):
    text = _read(path)
    if any(line.strip().endswith(":") for line in text.splitlines()):
        sections = parse_sections(text)
        if "K" not in sections:
            raise InputError(f"{path} has no K: section")
        return sections["K"], sections.get("R")
    return parse_matrix(text), None


def cmd_design_observer(args) -> int:
    sys_ = _load_system(args.system)
    sys_.require("B", "C")
    K, R = _load_gain(args.gain)
    cfg = _tolerances(args)
    obs = synthesize_functional_observer(sys_.C, sys_.A, K, parse_poles(args.obs_poles), cfg, B=sys_.B)
    res = obs.residuals(sys_.A, sys_.C, K, sys_.B)
    if args.out:
        Path(args.out).write_text(obs.to_text("functional observer w' = N w + J y (+ H u), u = r + D w + E y"))
    cl = assemble_closed_loop(sys_.A, sys_.B, sys_.C, obs, None if R is None else R.reshape(-1), F=sys_.F)
    if args.loop:
        Path(args.loop).write_text(cl.to_text("closed loop"))
    _emit(
        "design observer",
        {
            "order": obs.n0,
            "observer_poles": _complex_list(obs.poles),
            "residuals": res,
            "valid": obs.is_valid(sys_.A, sys_.C, K, sys_.B),
            "uses_input_injection": bool(np.any(obs.injection(sys_.p))),
            "closed_loop_spectrum": _complex_list(cl.spectrum),
            "separation_error": cl.separation_error,
            "estimation_coupling": cl.coupling,
        },
    )
    return 0


def cmd_simulate(args) -> int:
    cl = ClosedLoop.from_text(_read(args.loop))
    traj = simulate_closed_loop(cl, t1=args.t, dt=args.dt)
    sig = traj.signals
    cols = [traj.times[:, None], sig["x"], sig["w"]]
    head = ["t"] + [f"x{i + 1}" for i in range(sig["x"].shape[1])] + [f"w{i + 1}" for i in range(sig["w"].shape[1])]
    if "z" in sig:
        cols.append(sig["z"])
        head += [f"z{i + 1}" for i in range(sig["z"].shape[1])]
    cols.append(np.linalg.norm(sig["e"], axis=1)[:, None])
    head.append("e_norm")
    np.savetxt(args.out, np.hstack(cols), delimiter=",", header=",".join(head), comments="", fmt="%.17g")
    if args.plot:
        from .plotting import plot_closed_loop

        plot_closed_loop(traj, args.plot)
    payload = {"samples": len(traj), "final_state": traj.final[: cl.n], "final_error_norm": float(np.linalg.norm(sig["e"][-1]))}
    if "z" in sig:
        payload["final_z"] = sig["z"][-1]
    _emit("simulate", payload)
    return 0


def cmd_sweep(args) -> int:
    model = MODEL_ALIASES.get(args.model, args.model)
    sizes = [int(s) for s in _float_list(args.sizes, "sizes")]
    config = SweepConfig(
        model=model,
        sizes=tuple(sizes),
        realizations=args.realizations,
        ratios=tuple(_float_list(args.ratio, "ratio")),
        seed=args.seed,
        alpha=args.alpha,
        io_fraction=args.io_fraction,
        workers=args.workers,
    )
    result = run_sweep(config)
    result.write_csv(args.out)
    if args.plot:
        from .plotting import plot_sweep

        plot_sweep(result, args.plot)
    failures = sum(1 for r in result.rows if r.status.startswith("error"))
    _emit("sweep", {"model": model, "seed": args.seed, "rows": len(result.rows), "failures": failures, "means": result.means()})
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def _add_horizon(p, default_infinite: bool):
    g = p.add_mutually_exclusive_group()
    default = "infinite" if default_infinite else "t1 = 10"
    g.add_argument("--t1", type=float, help=f"finite horizon (default: {default})")
    g.add_argument("--infinite", action="store_true", help="infinite horizon (A must be Hurwitz)")
    p.set_defaults(default_infinite=default_infinite)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="netduality",
        description="Target controllability / functional observability of linear network systems.",
        epilog="Pole lists start with '-': write them as --poles=-4,-5,-0.5+0.866i,-0.5-0.866i",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="duality report for (C, A; F)")
    p.add_argument("--system", required=True, help="system file with A:, C:, F:")
    _add_horizon(p, default_infinite=False)
    p.add_argument("--tol", type=float, help="relative rank tolerance (default 1e-9)")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("energy", help="target control / observation energies")
    p.add_argument("--system", required=True)
    _add_horizon(p, default_infinite=True)
    p.add_argument("--dt", type=float, help="sampling step for the estimability condition number")
    p.add_argument("--T", type=float, help="sampling window for the estimability condition number")
    p.add_argument("--tol", type=float)
    p.set_defaults(func=cmd_energy)

    p = sub.add_parser("design", help="feedback or observer design")
    dsub = p.add_subparsers(dest="what", required=True)
    q = dsub.add_parser("feedback", help="static feedback placing the target-visible poles")
    q.add_argument("--system", required=True)
    q.add_argument("--poles", required=True, help="comma-separated, e.g. --poles=-4,-5,-6")
    q.add_argument("--setpoint", help="comma-separated target setpoint z*")
    q.add_argument("--out", help="write K (and R) to this file")
    q.add_argument("--tol", type=float)
    q.set_defaults(func=cmd_design_feedback)
    q = dsub.add_parser("observer", help="functional observer for -K x")
    q.add_argument("--system", required=True)
    q.add_argument("--gain", required=True, help="file with a K: section (as written by design feedback)")
    q.add_argument("--obs-poles", required=True, help="comma-separated, e.g. --obs-poles=-1")
    q.add_argument("--out", help="write N, J, D, E, T to this file")
    q.add_argument("--loop", help="write the complete closed loop (input for simulate)")
    q.add_argument("--tol", type=float)
    q.set_defaults(func=cmd_design_observer)

    p = sub.add_parser("simulate", help="simulate a closed loop file")
    p.add_argument("--loop", required=True, help="A:, B:, C:, N:, J:, D:, E:, T: and optionally F:, H:, R:, X0:, W0:")
    p.add_argument("--t", type=float, default=10.0, help="final time")
    p.add_argument("--dt", type=float, default=1e-3)
    p.add_argument("--out", required=True, help="CSV output")
    p.add_argument("--plot", help="PNG with z(t) and the estimation error")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="energies of random networks against size")
    p.add_argument("--model", required=True, choices=list(MODELS) + list(MODEL_ALIASES))
    p.add_argument("--sizes", default="25,50,100,200")
    p.add_argument("--realizations", type=int, default=20)
    p.add_argument("--ratio", default="0.3", help="target fraction r/n, comma-separated for several")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--alpha", type=float, default=0.1)
    p.add_argument("--io-fraction", type=float, default=0.1, help="actuators and sensors per node (p/n = q/n)")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True, help="CSV output")
    p.add_argument("--plot", help="PNG of the mean energies")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except NetDualityError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())

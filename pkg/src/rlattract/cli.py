"""Command-line interface.

Subcommands:

* ``ml-eval``     evaluate the Mittag-Leffler function at one point
* ``solve``       solve an initial-value problem from a JSON config, CSV out
* ``certify``     run the attractivity certification, JSON certificate out
* ``scan-kernel`` export the kernel scan quantities as CSV
* ``repro``       regenerate the bundled reference scenarios

Exit codes: 0 success (certify: certified), 1 not certified, 2 input
error, 3 accuracy error, 4 solver convergence failure.  Outputs are
deterministic: identical configs yield byte-identical files (the config
hash is embedded in every artifact).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .attractivity import (
    ScanGrid,
    certify,
    contraction_q,
    corollary_threshold,
    g_forcing_bound,
    kernel_double_conv_sup,
    kernel_tail_bound,
    qin_probe,
    sector_check,
)
from .config import ResolvedConfig, load_config, resolve_config
from .errors import (
    AccuracyError,
    ConvergenceError,
    DomainError,
    ExprError,
    InputError,
    RLAttractError,
)
from .quadrature import build_mesh
from .solver import solve_ivp, solve_linear_voc
from .special_functions import MLIndex, ml_scalar_full

EXIT_OK = 0
EXIT_NOT_CERTIFIED = 1
EXIT_INPUT = 2
EXIT_ACCURACY = 3
EXIT_SOLVER = 4

_FMT = "%.16e"  # 17 significant digits


def _fmt(x: float) -> str:
    return _FMT % x


def _write_csv(path, header_cols, rows, meta_lines):
    lines = [f"# {m}" for m in meta_lines]
    lines.append(",".join(header_cols))
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _trajectory_rows(traj):
    t = traj.mesh.nodes
    x = traj.x_values()
    defects = traj.defects if traj.defects is not None else np.zeros(len(t))
    return np.column_stack([t, traj.y, x, defects])


def _write_trajectory(path, traj, cfg_hash, extra_meta=(), trailer=None):
    s = traj.y.shape[1]
    cols = (
        ["t"]
        + [f"y_{i+1}" for i in range(s)]
        + [f"x_{i+1}" for i in range(s)]
        + ["residual"]
    )
    meta = [f"config_hash: {cfg_hash}", f"rlattract {__version__}"] + list(extra_meta)
    lines = [f"# {m}" for m in meta]
    lines.append(",".join(cols))
    for row in _trajectory_rows(traj):
        lines.append(",".join(_fmt(v) for v in row))
    if trailer:
        lines.append(f"# {trailer}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


# ------------------------------------------------------------ subcommands

def _cmd_ml_eval(args) -> int:
    try:
        parts = str(args.z).split(",")
        if len(parts) == 1:
            z = complex(float(parts[0]), 0.0)
        elif len(parts) == 2:
            z = complex(float(parts[0]), float(parts[1]))
        else:
            raise ValueError(args.z)
    except ValueError:
        print(f"error: --z expects 're' or 're,im', got {args.z!r}", file=sys.stderr)
        return EXIT_INPUT
    try:
        idx = MLIndex(args.alpha, args.beta)
        val, est = ml_scalar_full(idx, z, args.tol)
    except DomainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except AccuracyError as exc:
        print(f"accuracy error: {exc}", file=sys.stderr)
        return EXIT_ACCURACY
    print(f"E({args.alpha:g}, {args.beta:g}; {z}) = {val.real!r}"
          + (f" + {val.imag!r}j" if val.imag else "")
          + f"   (error estimate {est:.3e})")
    return EXIT_OK


def _cmd_solve(args) -> int:
    cfg = load_config(args.config)
    for warning in cfg.continuity_warnings():
        print(f"warning: {warning}", file=sys.stderr)
    mesh = cfg.build_mesh()
    problem = cfg.build_problem()
    meta = [f"config: {json.dumps(cfg.resolved_dict(), sort_keys=True)}"]
    try:
        traj = solve_ivp(problem, mesh, tol=cfg.tol_solver)
    except ConvergenceError as exc:
        # partial result: solve on the truncated mesh that did converge
        nfail = exc.node_index or 1
        trailer = f"FAILED: {exc}"
        if nfail > 2:
            part = build_mesh(mesh.nodes[nfail - 1], nfail - 1 if nfail - 1 >= 2 else 2,
                              mesh.grading)
            try:
                traj = solve_ivp(problem, part, tol=cfg.tol_solver)
                _write_trajectory(args.out, traj, cfg.config_hash(), meta, trailer)
            except RLAttractError:
                Path(args.out).write_text(f"# {trailer}\n", encoding="utf-8")
        else:
            Path(args.out).write_text(f"# {trailer}\n", encoding="utf-8")
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    _write_trajectory(args.out, traj, cfg.config_hash(), meta)
    print(f"wrote {args.out}")
    return EXIT_OK


def _certificate_for(cfg: ResolvedConfig):
    system = cfg.build_system()
    cert = certify(system, cfg.scan, norm_ord=cfg.norm_ord)
    cert.notes.append(f"config sha256: {cfg.config_hash()}")
    return cert


def _cmd_certify(args) -> int:
    cfg = load_config(args.config)
    for warning in cfg.continuity_warnings():
        print(f"warning: {warning}", file=sys.stderr)
    cert = _certificate_for(cfg)
    Path(args.out).write_text(
        json.dumps(cert.to_json_dict(), indent=2) + "\n", encoding="utf-8"
    )
    print(f"verdict: {cert.verdict} (wrote {args.out})")
    return EXIT_OK if cert.verdict.startswith("certified") else EXIT_NOT_CERTIFIED


def _cmd_scan_kernel(args) -> int:
    cfg = load_config(args.config)
    if cfg.a_matrix is None:
        raise InputError("scan-kernel needs the config key 'A'")
    sector = sector_check(cfg.a_matrix, cfg.alpha)
    if not sector.in_sector:
        print(
            "not in sector: margin "
            f"{sector.margin:.6f} rad, eigenvalues {sector.eigenvalues}",
            file=sys.stderr,
        )
        return EXIT_NOT_CERTIFIED
    conv = kernel_double_conv_sup(cfg.a_matrix, cfg.alpha, cfg.scan, cfg.norm_ord)
    tail = kernel_tail_bound(cfg.a_matrix, cfg.alpha, args.t0, cfg.scan, cfg.norm_ord)
    tail_at = dict(zip(tail.samples[:, 0], tail.samples[:, 1]))
    rows = []
    for t, val in conv.samples:
        rows.append([t, tail_at.get(t, float("nan")), val])
    _write_csv(
        args.out,
        ["t", "kernel_tail", "weighted_conv"],
        rows,
        [
            f"config_hash: {cfg.config_hash()}",
            f"G_sup: {_fmt(conv.sup)} stabilized: {conv.stabilized}",
            f"tail M: {_fmt(tail.m)} at t0: {args.t0:g}",
        ],
    )
    print(f"wrote {args.out} (G_sup = {conv.sup:.6f})")
    return EXIT_OK


# ------------------------------------------------------------ repro

_EXAMPLE_G = "1/(1+sqrt(t))"


def _repro_example1(outdir: Path) -> None:
    base = {
        "alpha": 0.5,
        "A": [[-1.0]],
        "mesh": {"T": 100.0, "N": 1024, "grading": 4.0},
    }
    grid = ScanGrid()
    threshold = corollary_threshold([[-1.0]], 0.5, grid)
    qval = round(0.9 * threshold, 12)
    doc = dict(base, Q=[[repr(qval)]], g=[_EXAMPLE_G], x0=[1.0])
    cfg = resolve_config(doc)
    cert = _certificate_for(cfg)
    (outdir / "cert.json").write_text(json.dumps(cert.to_json_dict(), indent=2) + "\n")
    traj = solve_linear_voc(cfg.build_system(), cfg.x0, cfg.build_mesh())
    _write_trajectory(outdir / "trajectory.csv", traj, cfg.config_hash(),
                      [f"config: {json.dumps(doc, sort_keys=True)}"])
    _write_csv(outdir / "g_scan.csv", ["t", "value"], cert.conv_scan.samples,
               ["weighted convolution scan (approaches 1/|A|)"])
    _write_csv(outdir / "q_scan.csv", ["t", "value"], cert.q_scan.samples,
               [f"contraction scan, q = {_fmt(cert.q)}"])
    print(f"example1: verdict {cert.verdict}, q = {cert.q:.4f}")


_EXAMPLE2_LITERAL_Q = "piecewise(t<=1000: 1000, else: 1000000/t)"
# same structure (Q = c on [0, c], c^2/t after) at a magnitude whose
# transient stays well inside double range
_EXAMPLE2_SCALED_Q = "piecewise(t<=2: 2, else: 4/t)"


def _repro_example2(outdir: Path) -> None:
    literal = {
        "alpha": 0.5,
        "A": [[-1.0]],
        "Q": [[_EXAMPLE2_LITERAL_Q]],
        "g": [_EXAMPLE_G],
        "x0": [1.0],
    }
    cfg = resolve_config(literal)
    cert = _certificate_for(cfg)
    (outdir / "cert.json").write_text(json.dumps(cert.to_json_dict(), indent=2) + "\n")
    _write_csv(outdir / "q_decay_scan.csv", ["t", "q_norm"], cert.theorem3.samples,
               ["|||Q(t)||| decay scan (literal coefficients)"])
    # The literal coefficient 1000 produces transient growth far beyond
    # double range, so the simulated trajectory uses scaled coefficients
    # with the same structure; certification above is at literal values.
    scaled = {
        "alpha": 0.5,
        "A": [[-1.0]],
        "Q": [[_EXAMPLE2_SCALED_Q]],
        "g": [_EXAMPLE_G],
        "x0": [1.0],
        "mesh": {"T": 100.0, "N": 1024, "grading": 4.0},
    }
    scfg = resolve_config(scaled)
    scert = _certificate_for(scfg)
    (outdir / "cert_scaled.json").write_text(
        json.dumps(scert.to_json_dict(), indent=2) + "\n"
    )
    traj = solve_linear_voc(scfg.build_system(), scfg.x0, scfg.build_mesh())
    _write_trajectory(
        outdir / "trajectory.csv", traj, scfg.config_hash(),
        [f"config: {json.dumps(scaled, sort_keys=True)}",
         "scaled-coefficient simulation (literal values overflow doubles)"],
    )
    print(f"example2: literal verdict {cert.verdict}, scaled verdict {scert.verdict}")


def _repro_cong(outdir: Path) -> None:
    doc = {
        "alpha": 0.5,
        "A": [[-1.0]],
        "Q": [["2"]],
        "x0": [1.0],
        "mesh": {"T": 20.0, "N": 1024, "grading": 4.0},
    }
    cfg = resolve_config(doc)
    cert = _certificate_for(cfg)
    (outdir / "cert.json").write_text(json.dumps(cert.to_json_dict(), indent=2) + "\n")
    traj = solve_linear_voc(cfg.build_system(), cfg.x0, cfg.build_mesh())
    _write_trajectory(outdir / "trajectory.csv", traj, cfg.config_hash(),
                      [f"config: {json.dumps(doc, sort_keys=True)}",
                       "bounded Q with stable A is not sufficient: |x| grows"])
    print(f"cong: verdict {cert.verdict}, q = {cert.q:.4f}")


def _repro_qin(outdir: Path) -> None:
    samples = qin_probe([[-1.0]], 0.5)
    _write_csv(
        outdir / "kernel_blowup.csv",
        ["t", "kernel_norm", "leading_term"],
        samples,
        ["resolvent kernel norm vs t**(alpha-1)/Gamma(alpha): no bound of "
         "the form M*exp(-gamma*t) can hold near t = 0"],
    )
    print("qin: wrote kernel blow-up samples")


_REPRO = {
    "example1": _repro_example1,
    "example2": _repro_example2,
    "cong": _repro_cong,
    "qin": _repro_qin,
}


def _cmd_repro(args) -> int:
    if args.name not in _REPRO:
        print(
            f"error: unknown scenario {args.name!r} "
            f"(available: {', '.join(sorted(_REPRO))})",
            file=sys.stderr,
        )
        return EXIT_INPUT
    outdir = Path(args.out_dir or ".") / f"repro_{args.name}"
    outdir.mkdir(parents=True, exist_ok=True)
    _REPRO[args.name](outdir)
    print(f"wrote {outdir}/")
    return EXIT_OK


# ------------------------------------------------------------ entry point

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rlattract",
        description="Fractional linear systems: weighted-space solver and "
                    "attractivity certification.",
    )
    parser.add_argument("--version", action="version", version=f"rlattract {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ml-eval", help="evaluate E(alpha, beta; z)")
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--beta", type=float, required=True)
    p.add_argument("--z", required=True, help="complex argument as 're' or 're,im'")
    p.add_argument("--tol", type=float, default=1e-9)
    p.set_defaults(fn=_cmd_ml_eval)

    p = sub.add_parser("solve", help="solve an initial-value problem")
    p.add_argument("config", help="JSON run configuration")
    p.add_argument("--out", default="trajectory.csv")
    p.set_defaults(fn=_cmd_solve)

    p = sub.add_parser("certify", help="attractivity certification")
    p.add_argument("config")
    p.add_argument("--out", default="cert.json")
    p.set_defaults(fn=_cmd_certify)

    p = sub.add_parser("scan-kernel", help="export kernel scan quantities")
    p.add_argument("config")
    p.add_argument("--out", default="g_scan.csv")
    p.add_argument("--t0", type=float, default=1.0, help="tail-bound start time")
    p.set_defaults(fn=_cmd_scan_kernel)

    p = sub.add_parser("repro", help="regenerate a reference scenario")
    p.add_argument("name", help="example1 | example2 | cong | qin")
    p.add_argument("--out-dir", default=None)
    p.set_defaults(fn=_cmd_repro)
    return parser


def _merge_negative_z(argv):
    # argparse would treat the value of "--z -2,0" as a flag; fold it in
    out = []
    i = 0
    while i < len(argv):
        arg = argv[i]
        if arg == "--z" and i + 1 < len(argv) and argv[i + 1].startswith("-"):
            out.append(f"--z={argv[i + 1]}")
            i += 2
            continue
        out.append(arg)
        i += 1
    return out


def main(argv=None) -> int:
    parser = _build_parser()
    if argv is None:
        argv = sys.argv[1:]
    argv = _merge_negative_z(list(argv))
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on bad flags and 0 on --help
        return int(exc.code or 0)
    try:
        return args.fn(args)
    except (InputError, ExprError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except AccuracyError as exc:
        print(f"accuracy error: {exc}", file=sys.stderr)
        return EXIT_ACCURACY
    except ConvergenceError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()

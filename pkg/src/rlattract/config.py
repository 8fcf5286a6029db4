"""Run configuration: strict JSON schema, defaults, deterministic hash.

Unknown keys anywhere in the document are rejected so a typo cannot
silently fall back to a default.  The resolved configuration (defaults
filled in) is what gets hashed and echoed into output metadata.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import expr as expr_mod
from .attractivity import ScanGrid
from .errors import ExprSyntaxError, InputError
from .quadrature import GradedMesh, build_mesh, default_grading
from .solver import IVProblem, LinearSystem

__all__ = ["ResolvedConfig", "load_config", "resolve_config", "NONLINEAR_PRESETS"]


def _neg_cubic(t, x):
    return -(x**3)


def _contracting_sine(t, x):
    return -np.sin(x)


# name -> (rhs, lipschitz bound or None)
NONLINEAR_PRESETS = {
    "neg_cubic": (_neg_cubic, None),
    "contracting_sine": (_contracting_sine, 1.0),
}

_NORMS = {"2": 2, "1": 1, "inf": np.inf}

_TOP_KEYS = {"alpha", "A", "Q", "g", "x0", "mesh", "scan", "tolerances", "norm", "rhs_preset"}
_MESH_KEYS = {"T", "N", "grading"}
_SCAN_KEYS = {"t_min", "t_max", "per_decade", "inner_N"}
_TOL_KEYS = {"solver", "ml"}


def _reject_unknown(d: dict, allowed: set, where: str):
    unknown = set(d) - allowed
    if unknown:
        raise InputError(
            f"unknown config key(s) in {where}: {', '.join(sorted(unknown))} "
            f"(allowed: {', '.join(sorted(allowed))})"
        )


def _as_float(v, where: str) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise InputError(f"{where} must be a number, got {v!r}")
    v = float(v)
    if not math.isfinite(v):
        raise InputError(f"{where} must be finite, got {v!r}")
    return v


@dataclass
class ResolvedConfig:
    alpha: float
    a_matrix: Optional[np.ndarray]
    q_sources: Optional[list]
    g_sources: Optional[list]
    x0: np.ndarray
    mesh_t: float
    mesh_n: int
    mesh_grading: float
    scan: ScanGrid
    tol_solver: float
    tol_ml: float
    norm_key: str
    rhs_preset: Optional[str]

    @property
    def norm_ord(self):
        return _NORMS[self.norm_key]

    @property
    def dimension(self) -> int:
        return self.x0.size

    def resolved_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "A": None if self.a_matrix is None else self.a_matrix.tolist(),
            "Q": self.q_sources,
            "g": self.g_sources,
            "x0": self.x0.tolist(),
            "mesh": {"T": self.mesh_t, "N": self.mesh_n, "grading": self.mesh_grading},
            "scan": {
                "t_min": self.scan.t_min,
                "t_max": self.scan.t_max,
                "per_decade": self.scan.per_decade,
                "inner_N": self.scan.inner_n,
            },
            "tolerances": {"solver": self.tol_solver, "ml": self.tol_ml},
            "norm": self.norm_key,
            "rhs_preset": self.rhs_preset,
        }

    def config_hash(self) -> str:
        blob = json.dumps(self.resolved_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def build_mesh(self) -> GradedMesh:
        return build_mesh(self.mesh_t, self.mesh_n, self.mesh_grading)

    def _parse_entries(self, sources, what: str):
        parsed = []
        for i, row in enumerate(sources):
            out_row = []
            for j, src in enumerate(row):
                try:
                    out_row.append(expr_mod.parse(src))
                except ExprSyntaxError as exc:
                    raise InputError(f"{what}[{i}][{j}]: {exc}") from exc
            parsed.append(out_row)
        return parsed

    def continuity_warnings(self) -> list:
        warnings = []
        if self.q_sources:
            for i, row in enumerate(self._parse_entries(self.q_sources, "Q")):
                for j, e in enumerate(row):
                    warnings += expr_mod.continuity_warnings(e, f"Q[{i}][{j}]")
        if self.g_sources:
            for j, e in enumerate(self._parse_entries([self.g_sources], "g")[0]):
                warnings += expr_mod.continuity_warnings(e, f"g[{j}]")
        return warnings

    def build_system(self) -> LinearSystem:
        if self.a_matrix is None:
            raise InputError("this command needs a linear system: config key 'A' is required")
        q_fn = q_arr = None
        g_fn = g_arr = None
        if self.q_sources:
            q_ast = self._parse_entries(self.q_sources, "Q")
            q_fn = lambda t: expr_mod.eval_matrix(q_ast, t)  # noqa: E731

            def q_arr(ts, _ast=q_ast):
                cols = [[expr_mod.eval_array(e, ts) for e in row] for row in _ast]
                return np.stack([np.stack(r, axis=1) for r in cols], axis=1)

        if self.g_sources:
            g_ast = self._parse_entries([self.g_sources], "g")[0]
            g_fn = lambda t: np.array([expr_mod.evaluate(e, t) for e in g_ast])  # noqa: E731

            def g_arr(ts, _ast=g_ast):
                return np.stack([expr_mod.eval_array(e, ts) for e in _ast], axis=1)

        return LinearSystem(
            self.alpha, self.a_matrix, q=q_fn, g=g_fn, q_array=q_arr, g_array=g_arr
        )

    def build_problem(self) -> IVProblem:
        if self.rhs_preset is not None:
            rhs, lip = NONLINEAR_PRESETS[self.rhs_preset]
            return IVProblem(self.alpha, rhs, self.x0, lipschitz=lip)
        return self.build_system().as_ivp(self.x0)


def resolve_config(doc: dict) -> ResolvedConfig:
    """Validate a parsed JSON document and fill in defaults."""
    if not isinstance(doc, dict):
        raise InputError("config root must be a JSON object")
    _reject_unknown(doc, _TOP_KEYS, "the config root")
    if "alpha" not in doc:
        raise InputError("config key 'alpha' is required")
    alpha = _as_float(doc["alpha"], "alpha")
    if not 0.0 < alpha < 1.0:
        raise InputError(f"alpha must lie in (0, 1), got {alpha}")

    rhs_preset = doc.get("rhs_preset")
    if rhs_preset is not None:
        if rhs_preset not in NONLINEAR_PRESETS:
            raise InputError(
                f"unknown rhs_preset {rhs_preset!r} "
                f"(available: {', '.join(sorted(NONLINEAR_PRESETS))})"
            )
        if "A" in doc or "Q" in doc or "g" in doc:
            raise InputError("rhs_preset and A/Q/g are mutually exclusive")

    a_matrix = None
    dim = 1
    if "A" in doc:
        a_raw = doc["A"]
        if not (isinstance(a_raw, list) and a_raw and all(isinstance(r, list) for r in a_raw)):
            raise InputError("A must be a nested array [[...], ...]")
        a_matrix = np.array(
            [[_as_float(v, f"A[{i}][{j}]") for j, v in enumerate(row)]
             for i, row in enumerate(a_raw)]
        )
        if a_matrix.ndim != 2 or a_matrix.shape[0] != a_matrix.shape[1]:
            raise InputError(f"A must be square, got shape {a_matrix.shape}")
        dim = a_matrix.shape[0]
    elif rhs_preset is None:
        raise InputError("config needs either 'A' (linear system) or 'rhs_preset'")

    q_sources = None
    if "Q" in doc and doc["Q"] is not None:
        q_raw = doc["Q"]
        ok = (
            isinstance(q_raw, list)
            and len(q_raw) == dim
            and all(isinstance(r, list) and len(r) == dim for r in q_raw)
            and all(isinstance(v, str) for r in q_raw for v in r)
        )
        if not ok:
            raise InputError(f"Q must be a {dim}x{dim} array of expression strings")
        q_sources = [list(r) for r in q_raw]

    g_sources = None
    if "g" in doc and doc["g"] is not None:
        g_raw = doc["g"]
        if not (isinstance(g_raw, list) and len(g_raw) == dim
                and all(isinstance(v, str) for v in g_raw)):
            raise InputError(f"g must be a length-{dim} array of expression strings")
        g_sources = list(g_raw)

    if "x0" in doc:
        x0_raw = doc["x0"]
        if not (isinstance(x0_raw, list) and len(x0_raw) == dim):
            raise InputError(f"x0 must be a length-{dim} array of numbers")
        x0 = np.array([_as_float(v, f"x0[{j}]") for j, v in enumerate(x0_raw)])
    else:
        x0 = np.ones(dim)

    mesh_doc = doc.get("mesh", {})
    if not isinstance(mesh_doc, dict):
        raise InputError("mesh must be an object")
    _reject_unknown(mesh_doc, _MESH_KEYS, "mesh")
    mesh_t = _as_float(mesh_doc.get("T", 10.0), "mesh.T")
    mesh_n = mesh_doc.get("N", 1024)
    if isinstance(mesh_n, bool) or not isinstance(mesh_n, int) or mesh_n < 2:
        raise InputError(f"mesh.N must be an integer >= 2, got {mesh_n!r}")
    mesh_grading = _as_float(mesh_doc.get("grading", default_grading(alpha)), "mesh.grading")

    scan_doc = doc.get("scan", {})
    if not isinstance(scan_doc, dict):
        raise InputError("scan must be an object")
    _reject_unknown(scan_doc, _SCAN_KEYS, "scan")
    inner_n = scan_doc.get("inner_N", 1024)
    if isinstance(inner_n, bool) or not isinstance(inner_n, int):
        raise InputError(f"scan.inner_N must be an integer, got {inner_n!r}")
    per_decade = scan_doc.get("per_decade", 20)
    if isinstance(per_decade, bool) or not isinstance(per_decade, int):
        raise InputError(f"scan.per_decade must be an integer, got {per_decade!r}")
    try:
        scan = ScanGrid(
            t_min=_as_float(scan_doc.get("t_min", 1e-2), "scan.t_min"),
            t_max=_as_float(scan_doc.get("t_max", 1e4), "scan.t_max"),
            per_decade=per_decade,
            inner_n=inner_n,
        )
    except Exception as exc:
        raise InputError(f"invalid scan grid: {exc}") from exc

    tol_doc = doc.get("tolerances", {})
    if not isinstance(tol_doc, dict):
        raise InputError("tolerances must be an object")
    _reject_unknown(tol_doc, _TOL_KEYS, "tolerances")
    tol_solver = _as_float(tol_doc.get("solver", 1e-8), "tolerances.solver")
    tol_ml = _as_float(tol_doc.get("ml", 1e-9), "tolerances.ml")
    if not (tol_solver > 0 and tol_ml > 0):
        raise InputError("tolerances must be positive")

    norm_key = doc.get("norm", "2")
    if norm_key not in _NORMS:
        raise InputError(f"norm must be one of {sorted(_NORMS)}, got {norm_key!r}")

    return ResolvedConfig(
        alpha=alpha,
        a_matrix=a_matrix,
        q_sources=q_sources,
        g_sources=g_sources,
        x0=x0,
        mesh_t=mesh_t,
        mesh_n=mesh_n,
        mesh_grading=mesh_grading,
        scan=scan,
        tol_solver=tol_solver,
        tol_ml=tol_ml,
        norm_key=norm_key,
        rhs_preset=rhs_preset,
    )


def load_config(path: str) -> ResolvedConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise InputError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(
            f"malformed JSON in {path} at line {exc.lineno}, column {exc.colno} "
            f"(byte offset {exc.pos}): {exc.msg}"
        ) from exc
    return resolve_config(doc)

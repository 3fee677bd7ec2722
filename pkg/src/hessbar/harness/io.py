"""Trace and summary persistence, and problem-file loading.

Files are written to a temporary sibling and renamed into place, so a
reader never sees a partial artifact.  Floats are written with ``repr``,
which round-trips exactly.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from pathlib import Path
from typing import Sequence

import numpy as np

from ..errors import ConfigurationError
from ..geometry import ConstraintSystem
from ..problems import (
    Problem,
    BoxLift,
    make_beale_box,
    make_quadratic,
    make_rosenbrock_box,
    random_convex_qp_with_optimum,
    random_nonconvex_qp,
)
from ..solver import IterationRecord
from ..tap import TapInstance, generate_tap_instance, tap_problem

TRACE_HEADER = ("k", "f", "alpha", "backtracks", "comp_residual", "v_norm_x")


def _fmt(value: float) -> str:
    return repr(float(value))


def atomic_write_text(path: str | Path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        # mkstemp creates 0600; artifacts get ordinary permissions
        os.chmod(tmp, 0o644)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def trace_to_csv(trace: Sequence[IterationRecord]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(TRACE_HEADER)
    for rec in trace:
        writer.writerow(
            [
                rec.k,
                _fmt(rec.f_value),
                _fmt(rec.step_alpha),
                rec.backtracks,
                _fmt(rec.complementarity_residual),
                _fmt(rec.v_norm_x),
            ]
        )
    return buf.getvalue()


def write_trace_csv(path: str | Path, trace: Sequence[IterationRecord]) -> Path:
    return atomic_write_text(path, trace_to_csv(trace))


def read_trace_csv(path: str | Path) -> list[IterationRecord]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != TRACE_HEADER:
            raise ConfigurationError(f"{path}: expected header {','.join(TRACE_HEADER)}")
        return [
            IterationRecord(int(k), float(f), float(a), int(b), float(c), float(v))
            for k, f, a, b, c, v in reader
        ]


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        # JSON has no inf/nan; keep the information as a string
        return x if math.isfinite(x) else repr(x)
    return obj


def dumps_json(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_json(path: str | Path, obj) -> Path:
    return atomic_write_text(path, dumps_json(obj))


def read_json(path: str | Path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}: invalid JSON ({exc})") from exc


# ---------------------------------------------------------------------------
# problem files


def _constraints(spec: dict | None, n: int) -> ConstraintSystem:
    if spec is None:
        return ConstraintSystem.unconstrained(n)
    return ConstraintSystem.from_dict(spec, n=n)


def build_problem(spec: dict, seed: int = 0, base_dir: str | Path | None = None) -> Problem:
    try:
        return _build_problem(spec, seed, base_dir)
    except ConfigurationError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        # rank-deficient or inconsistent constraints are input errors too
        raise ConfigurationError(f"invalid problem specification: {type(exc).__name__}: {exc}") from exc


def _build_problem(spec: dict, seed: int, base_dir: str | Path | None) -> Problem:
    """Problem from its file representation.

    ``objective.type`` selects the family:

    - ``quadratic``: ``{"Q": [[...]], "c": [...]}`` with ``constraints``;
    - ``rosenbrock`` / ``beale``: built-in lifted boxes; ``start_seed`` draws a
      random interior start instead of the box center;
    - ``custom_qp``: seeded generator, ``{"generator": "nonconvex"|"convex",
      "n", "m", "negative_eigs"?, "seed"?}``;
    - ``tap``: ``{"instance": <file or inline dict>, "mode"?}`` or generator
      fields ``{"vertices", "od_pairs", "paths", "seed"?, "attachment_m"?}``.

    Top-level ``L`` overrides the Lipschitz constant and ``start`` the start.
    """
    from dataclasses import replace

    if "objective" not in spec:
        raise ConfigurationError("problem file needs an 'objective' entry")
    obj = spec["objective"]
    kind = obj.get("type")
    if kind == "quadratic":
        q = np.asarray(obj["Q"], dtype=float)
        c = np.asarray(obj["c"], dtype=float)
        problem = make_quadratic(q, c, _constraints(spec.get("constraints"), q.shape[0]), name=obj.get("name", "quadratic"))
        if "optimum" in obj:
            problem = replace(problem, known_optimum=(None, float(obj["optimum"])))
    elif kind in ("rosenbrock", "beale"):
        problem = make_rosenbrock_box() if kind == "rosenbrock" else make_beale_box()
        if "start_seed" in obj:
            box: BoxLift = problem.metadata["box"]
            problem = replace(problem, start=box.random_interior(int(obj["start_seed"])))
    elif kind == "custom_qp":
        gen = obj.get("generator", "nonconvex")
        s = int(obj.get("seed", seed))
        n, m = int(obj["n"]), int(obj["m"])
        if gen == "nonconvex":
            problem, _ = random_nonconvex_qp(n, m, int(obj.get("negative_eigs", 1)), s)
        elif gen == "convex":
            problem, _ = random_convex_qp_with_optimum(n, m, s)
        else:
            raise ConfigurationError(f"unknown QP generator {gen!r}")
    elif kind == "tap":
        mode = obj.get("mode", "PathCostSum")
        if "instance" in obj:
            inst_spec = obj["instance"]
            if isinstance(inst_spec, str):
                path = Path(inst_spec)
                if base_dir is not None and not path.is_absolute():
                    path = Path(base_dir) / path
                inst_spec = read_json(path)
            instance = TapInstance.from_dict(inst_spec)
        else:
            instance, _ = generate_tap_instance(
                int(obj["vertices"]),
                int(obj["od_pairs"]),
                int(obj["paths"]),
                int(obj.get("seed", seed)),
                int(obj.get("attachment_m", 2)),
            )
        problem = tap_problem(instance, mode)
    else:
        raise ConfigurationError(f"unknown objective type {kind!r}")
    if "L" in spec:
        problem = replace(problem, lipschitz_l=float(spec["L"]))
    if "start" in spec:
        problem = replace(problem, start=np.asarray(spec["start"], dtype=float))
    return problem


def load_problem(path: str | Path, seed: int = 0) -> Problem:
    path = Path(path)
    return build_problem(read_json(path), seed=seed, base_dir=path.parent)

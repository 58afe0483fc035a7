"""Serialization of iteration logs and fit results (CSV and JSON)."""
from __future__ import annotations

import csv
import io
import json
import math

import numpy as np

from .trustregion import FitResult, IterationRecord, Outcome

LOG_COLUMNS = ("iter", "cost", "grad_norm", "delta", "lambda", "rho", "step1_norm",
               "step2_norm", "alpha_ratio", "outcome", "r_evals", "j_evals", "rpp_evals")


def fmt_float(x):
    """17 significant digits (exact round trip); empty for missing values."""
    if x is None:
        return ""
    return f"{float(x):.17g}"


def _record_row(rec: IterationRecord):
    return [str(rec.iter), fmt_float(rec.cost), fmt_float(rec.grad_norm), fmt_float(rec.delta),
            fmt_float(rec.lam), fmt_float(rec.rho), fmt_float(rec.step1_norm),
            fmt_float(rec.step2_norm), fmt_float(rec.alpha_ratio), rec.outcome.value,
            str(rec.r_evals), str(rec.j_evals), str(rec.rpp_evals)]


def log_to_csv(log) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(LOG_COLUMNS)
    for rec in log:
        w.writerow(_record_row(rec))
    return buf.getvalue()


def _opt(s):
    return None if s == "" else float(s)


def log_from_csv(text: str):
    """Parse a CSV log back into records. ``theta`` is not stored and comes back as None."""
    reader = csv.DictReader(io.StringIO(text))
    if tuple(reader.fieldnames or ()) != LOG_COLUMNS:
        raise ValueError(f"unexpected log columns {reader.fieldnames}")
    out = []
    for row in reader:
        out.append(IterationRecord(
            iter=int(row["iter"]), theta=None, cost=float(row["cost"]),
            grad_norm=float(row["grad_norm"]), delta=_opt(row["delta"]), lam=float(row["lambda"]),
            rho=_opt(row["rho"]), step1_norm=float(row["step1_norm"]),
            step2_norm=float(row["step2_norm"]), alpha_ratio=float(row["alpha_ratio"]),
            outcome=Outcome(row["outcome"]), r_evals=int(row["r_evals"]),
            j_evals=int(row["j_evals"]), rpp_evals=int(row["rpp_evals"])))
    return out


def _json_float(x):
    if x is None:
        return None
    x = float(x)
    return x if math.isfinite(x) else None


def record_to_dict(rec: IterationRecord) -> dict:
    return {
        "iter": rec.iter,
        "theta": [float(v) for v in rec.theta] if rec.theta is not None else None,
        "cost": _json_float(rec.cost),
        "grad_norm": _json_float(rec.grad_norm),
        "delta": _json_float(rec.delta),
        "lambda": _json_float(rec.lam),
        "rho": _json_float(rec.rho),
        "step1_norm": _json_float(rec.step1_norm),
        "step2_norm": _json_float(rec.step2_norm),
        "alpha_ratio": _json_float(rec.alpha_ratio),
        "outcome": rec.outcome.value,
        "r_evals": rec.r_evals,
        "j_evals": rec.j_evals,
        "rpp_evals": rec.rpp_evals,
    }


def result_to_dict(result: FitResult) -> dict:
    return {
        "status": result.status.value,
        "theta": [float(v) for v in np.asarray(result.theta)],
        "cost": _json_float(result.cost),
        "grad_norm": _json_float(result.grad_norm),
        "counters": result.counters.as_dict(),
        "log": [record_to_dict(r) for r in result.log],
    }


def dumps_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=False) + "\n"

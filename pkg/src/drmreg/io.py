"""CSV ingestion and JSON persistence of fitted models."""
from __future__ import annotations

import csv
import json
import re

import numpy as np

from .core import DRMError, ModelParams, SampleSet
from .estimation import FittedModel

__all__ = [
    "DataFormatError",
    "SCHEMA_VERSION",
    "read_table",
    "read_data",
    "model_to_dict",
    "model_from_dict",
    "save_model",
    "load_model",
]

SCHEMA_VERSION = 1

# Plain decimal with optional exponent; rejects nan/inf, "1_000" and locale forms.
_NUMBER = re.compile(r"^[+-]?(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?$")


class DataFormatError(DRMError, ValueError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


def _number(text, line, column):
    text = text.strip()
    if not _NUMBER.match(text):
        raise DataFormatError(f"column {column!r}: {text!r} is not a number", line)
    return float(text)


def read_table(path, text_columns=("group",)):
    """Read a headed CSV into ``(header, numeric_columns, text_values)``.

    Returns the numeric column names, an ``(n, k)`` float array and a dict of
    the requested text columns.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataFormatError("empty file", 1) from None
        missing = [name for name in text_columns if name not in header]
        if missing:
            raise DataFormatError(f"no {missing[0]!r} column in header {header}", 1)
        text_idx = {name: header.index(name) for name in text_columns}
        num_idx = [i for i, h in enumerate(header) if h not in text_idx]
        rows, texts = [], {name: [] for name in text_idx}
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataFormatError(
                    f"expected {len(header)} fields, found {len(row)}", lineno)
            rows.append([_number(row[i], lineno, header[i]) for i in num_idx])
            for name, i in text_idx.items():
                value = row[i].strip()
                if not value:
                    raise DataFormatError(f"missing {name!r} value", lineno)
                texts[name].append(value)
    names = [header[i] for i in num_idx]
    values = np.array(rows, dtype=float).reshape(len(rows), len(names))
    return names, values, texts


def read_data(path, reference=None, group_column="group"):
    """Load a data file: one text group column, numeric covariates then response.

    Returns ``(SampleSet, numeric column names)``.  Groups keep their order of
    first appearance; ``reference`` defaults to the last of them.
    """
    names, values, texts = read_table(path, (group_column,))
    if len(names) < 1:
        raise DataFormatError("need at least one numeric column", 1)
    labels = np.array(texts[group_column])
    order = list(dict.fromkeys(labels.tolist()))
    if len(order) < 2:
        raise DataFormatError("need at least two distinct groups")
    if reference is None:
        reference = order[-1]
    if reference not in order:
        raise DataFormatError(f"reference group {reference!r} not found; groups are {order}")
    groups = [values[labels == g] for g in order]
    return SampleSet(groups, order, reference), names


def _wald_dict(w):
    return {"statistic": w.statistic, "dof": w.dof, "pvalue": w.pvalue}


def model_to_dict(model: FittedModel, columns=None, inference=None) -> dict:
    """JSON-ready representation of a fitted model.

    ``inference`` is an optional dict with ``se`` (ModelParams),
    ``wald_per_group`` (label -> WaldResult) and ``wald_joint`` (WaldResult).
    """
    sizes = model.sizes
    out = {
        "schema_version": SCHEMA_VERSION,
        "dimension": model.dimension,
        "columns": list(columns) if columns is not None else None,
        "groups": [{"label": lab, "size": int(sizes[i]), "reference": i == model.q}
                   for i, lab in enumerate(model.labels)],
        "alpha": model.params.alpha.tolist(),
        "beta": model.params.beta.tolist(),
        "rho": model.rho.tolist(),
        "log_lik": model.log_lik,
        "converged": bool(model.converged),
        "iterations": int(model.iterations),
        "grad_norm": model.grad_norm,
        "standardized": bool(model.standardized),
        "center": model.center.tolist(),
        "scale": model.scale.tolist(),
        "constraint_residuals": model.constraint_residuals().tolist(),
        "p_hat": model.p_hat.tolist(),
        "points": model.points.tolist(),
        "membership": model.membership.tolist(),
    }
    if inference:
        se = inference.get("se")
        if se is not None:
            out["se"] = {"alpha": se.alpha.tolist(), "beta": se.beta.tolist()}
        if "wald_per_group" in inference:
            out["wald_per_group"] = {k: _wald_dict(v)
                                     for k, v in inference["wald_per_group"].items()}
        if "wald_joint" in inference:
            out["wald_joint"] = _wald_dict(inference["wald_joint"])
        if "covariance_form" in inference:
            out["covariance_form"] = inference["covariance_form"]
    return out


def model_from_dict(d: dict) -> FittedModel:
    """Rebuild a :class:`FittedModel`; fields this version does not know are ignored."""
    try:
        labels = tuple(g["label"] for g in d["groups"])
        points = np.asarray(d["points"], dtype=float).reshape(-1, int(d["dimension"]))
        params = ModelParams(np.asarray(d["alpha"], dtype=float),
                             np.asarray(d["beta"], dtype=float).reshape(len(labels) - 1, -1))
        return FittedModel(
            params=params,
            p_hat=np.asarray(d["p_hat"], dtype=float),
            points=points,
            membership=np.asarray(d["membership"], dtype=int),
            labels=labels,
            rho=np.asarray(d["rho"], dtype=float),
            log_lik=float(d["log_lik"]),
            converged=bool(d["converged"]),
            iterations=int(d.get("iterations", 0)),
            grad_norm=float(d.get("grad_norm", np.nan)),
            center=np.asarray(d["center"], dtype=float),
            scale=np.asarray(d["scale"], dtype=float),
            standardized=bool(d.get("standardized", True)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise DataFormatError(f"invalid model file: {exc}") from exc


def save_model(model: FittedModel, path, columns=None, inference=None):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model, columns, inference), fh, indent=1)
        fh.write("\n")


def load_model(path):
    """Return ``(FittedModel, raw dict)``."""
    with open(path, encoding="utf-8") as fh:
        try:
            d = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataFormatError(f"model file is not valid JSON ({exc.msg})", exc.lineno) from exc
    return model_from_dict(d), d

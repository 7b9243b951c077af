"""File formats: CSV ingestion, atomic writes, fit and truth JSON documents."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
import tempfile
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .model import Dataset, Design, Domain, MixingMeasure, RegressionFunction

FIT_FORMAT = "npmixreg-fit"
TRUTH_FORMAT = "npmixreg-truth"
FORMAT_VERSION = 1


class DataError(ValueError):
    """Malformed or unusable input data."""


# ---------------------------------------------------------------------------
# CSV input
# ---------------------------------------------------------------------------


def read_table(path: str, columns: Sequence[str]) -> dict:
    """Read numeric ``columns`` from a headed CSV file.

    Returns a mapping column name -> float array. Errors name the line
    (1-based, header is line 1) and the column.
    """
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"{path}: cannot open ({exc.strerror})") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file, a header line is required") from None
        except csv.Error as exc:
            raise DataError(f"{path}:1: {exc}") from None
        header = [h.strip() for h in header]
        missing = [c for c in columns if c not in header]
        if missing:
            raise DataError(f"{path}:1: missing column(s) {missing}; header is {header}")
        idx = {c: header.index(c) for c in columns}
        out = {c: [] for c in columns}
        try:
            for row in reader:
                line = reader.line_num
                if not row or all(not cell.strip() for cell in row):
                    continue
                if len(row) != len(header):
                    raise DataError(f"{path}:{line}: expected {len(header)} fields, found {len(row)}")
                for c, j in idx.items():
                    cell = row[j].strip()
                    try:
                        v = float(cell)
                    except ValueError:
                        raise DataError(
                            f"{path}:{line}: column {c!r} (field {j + 1}): cannot parse {cell!r} as a number"
                        ) from None
                    if not math.isfinite(v):
                        raise DataError(f"{path}:{line}: column {c!r} (field {j + 1}): non-finite value {cell!r}")
                    out[c].append(v)
        except csv.Error as exc:
            raise DataError(f"{path}:{reader.line_num}: {exc}") from None
    if not out[columns[0]]:
        raise DataError(f"{path}: no data rows")
    return {c: np.array(v) for c, v in out.items()}


def load_dataset(path: str, x_cols: Sequence[str], y_col: str, intercept: bool,
                 design: Design = Design.FIXED) -> Dataset:
    """Dataset from CSV; ``intercept`` prepends a constant-1 covariate."""
    cols = read_table(path, list(x_cols) + [y_col])
    X = np.column_stack([cols[c] for c in x_cols])
    if intercept:
        X = np.column_stack([np.ones(X.shape[0]), X])
    return Dataset(X, cols[y_col], design)


def file_digest(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


# ---------------------------------------------------------------------------
# Output
# ---------------------------------------------------------------------------


def dumps_json(obj) -> str:
    """Deterministic JSON: sorted keys, shortest round-trip floats."""
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_atomic(path: str, text: str):
    """Write ``text`` to a temporary file in the same directory, then rename."""
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path: str, obj):
    write_atomic(path, dumps_json(obj))


def csv_text(header: Sequence[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_cell(v) for v in row])
    return buf.getvalue()


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, np.integer):
        return int(v)
    return v


def write_csv(path: str, header: Sequence[str], rows):
    write_atomic(path, csv_text(header, rows))


# ---------------------------------------------------------------------------
# Fit documents
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FitDocument:
    """Contents of ``fit.json``.

    Atoms and weights are kept exactly as stored so that a load followed by
    a save reproduces the file byte for byte.
    """

    method: str
    regression: dict
    intercept: bool
    x_cols: tuple
    y_col: str
    domain: Optional[dict]
    sigma: float
    atoms: tuple
    weights: tuple
    loglik_mean: float
    loglik_sum: float
    converged: bool
    stop_reason: str
    n: int

    @property
    def rf(self) -> RegressionFunction:
        return RegressionFunction.from_dict(self.regression)

    @property
    def measure(self) -> MixingMeasure:
        return MixingMeasure(np.array(self.atoms, dtype=float), np.array(self.weights, dtype=float))

    @property
    def domain_obj(self) -> Optional[Domain]:
        return None if self.domain is None else Domain.from_dict(self.domain)

    def to_dict(self) -> dict:
        return {
            "format": FIT_FORMAT,
            "version": FORMAT_VERSION,
            "method": self.method,
            "regression": self.regression,
            "intercept": self.intercept,
            "x_cols": list(self.x_cols),
            "y_col": self.y_col,
            "domain": self.domain,
            "sigma": self.sigma,
            "atoms": [list(a) for a in self.atoms],
            "weights": list(self.weights),
            "loglik_mean": self.loglik_mean,
            "loglik_sum": self.loglik_sum,
            "converged": self.converged,
            "stop_reason": self.stop_reason,
            "n": self.n,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FitDocument":
        if d.get("format") != FIT_FORMAT:
            raise DataError(f"not a fit document (format={d.get('format')!r})")
        return cls(
            method=d["method"], regression=d["regression"], intercept=bool(d["intercept"]),
            x_cols=tuple(d["x_cols"]), y_col=d["y_col"], domain=d["domain"], sigma=float(d["sigma"]),
            atoms=tuple(tuple(a) for a in d["atoms"]), weights=tuple(d["weights"]),
            loglik_mean=d["loglik_mean"], loglik_sum=d["loglik_sum"],
            converged=bool(d["converged"]), stop_reason=d["stop_reason"], n=int(d["n"]),
        )


def load_json(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise DataError(f"{path}: cannot open ({exc.strerror})") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}:{exc.lineno}:{exc.colno}: invalid JSON ({exc.msg})") from exc


def load_fit(path: str) -> FitDocument:
    try:
        return FitDocument.from_dict(load_json(path))
    except KeyError as exc:
        raise DataError(f"{path}: fit document lacks field {exc.args[0]!r}") from None


def load_model(path: str):
    """``(rf, sigma, measure, intercept)`` from a fit or truth document."""
    d = load_json(path)
    fmt = d.get("format")
    try:
        if fmt == FIT_FORMAT:
            doc = FitDocument.from_dict(d)
            return doc.rf, doc.sigma, doc.measure, doc.intercept
        if fmt == TRUTH_FORMAT:
            sigma = d["sigma"]
            sigma = np.asarray(sigma, dtype=float) if isinstance(sigma, list) else float(sigma)
            measure = MixingMeasure(np.array(d["atoms"], dtype=float), np.array(d["weights"], dtype=float))
            return RegressionFunction.from_dict(d["regression"]), sigma, measure, bool(d["intercept"])
    except KeyError as exc:
        raise DataError(f"{path}: document lacks field {exc.args[0]!r}") from None
    raise DataError(f"{path}: unrecognized document format {fmt!r}")

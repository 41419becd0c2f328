"""Datasets, z-score normalization state, and CSV ingestion."""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError

# Enough digits for exact float64 round trips in CSV output.
FLOAT_FMT = "%.17g"


@dataclass(frozen=True)
class NormState:
    """Per-variable z-score parameters learned from training data."""

    x_mean: np.ndarray
    x_sd: np.ndarray
    y_mean: float
    y_sd: float

    def apply_x(self, X: np.ndarray) -> np.ndarray:
        return (X - self.x_mean) / self.x_sd

    def apply_y(self, y: np.ndarray) -> np.ndarray:
        return (y - self.y_mean) / self.y_sd

    def invert_y(self, y_norm: np.ndarray) -> np.ndarray:
        return self.y_mean + self.y_sd * y_norm

    def coef_scale(self) -> np.ndarray:
        """Multiplier taking normalized-scale slopes to the raw scale."""
        return self.y_sd / self.x_sd


@dataclass
class Dataset:
    """Response vector, covariate matrix, and optional normalization state."""

    y: np.ndarray
    X: np.ndarray
    column_names: list[str] | None = None
    norm_state: NormState | None = None
    _skip_checks: bool = field(default=False, repr=False)

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=float)
        self.X = np.asarray(self.X, dtype=float)
        if self._skip_checks:
            return
        if self.y.ndim != 1 or self.X.ndim != 2:
            raise DataError("y must be a vector and X a matrix")
        n, p = self.X.shape
        if len(self.y) != n:
            raise DataError(f"y has {len(self.y)} rows but X has {n}")
        if n < 2:
            raise DataError(f"need at least 2 observations, got {n}")
        if p < 1:
            raise DataError("need at least 1 covariate")
        if not np.all(np.isfinite(self.y)) or not np.all(np.isfinite(self.X)):
            raise DataError("dataset contains non-finite entries")
        if self.column_names is not None and len(self.column_names) != p:
            raise DataError("column_names length does not match X")
        if self.norm_state is not None and not np.all(self.norm_state.x_sd > 0):
            raise DataError("normalization state has non-positive column sd")
        const = np.flatnonzero(self.X.std(axis=0) == 0)
        if const.size:
            names = (
                [self.column_names[i] for i in const]
                if self.column_names
                else list(const)
            )
            warnings.warn(f"constant covariate column(s): {names}", stacklevel=2)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]


def fit_norm_state(y: np.ndarray, X: np.ndarray) -> NormState:
    """Learn z-score parameters; every variable must have positive spread."""
    x_sd = X.std(axis=0)
    y_sd = float(y.std())
    bad = np.flatnonzero(x_sd == 0)
    if bad.size:
        raise DataError(f"cannot z-score constant covariate column(s) {list(bad)}")
    if y_sd == 0:
        raise DataError("cannot z-score a constant response")
    return NormState(X.mean(axis=0), x_sd, float(y.mean()), y_sd)


def normalize_dataset(data: Dataset) -> Dataset:
    """Z-score a training dataset and record the transformation."""
    ns = fit_norm_state(data.y, data.X)
    return Dataset(
        ns.apply_y(data.y), ns.apply_x(data.X), data.column_names, norm_state=ns
    )


def load_csv(path, response: str | None = None, log_response: bool = False):
    """Read an RFC-4180-style CSV with a header row.

    Returns ``(y, X, covariate_names)`` when ``response`` names a column,
    otherwise ``(None, X, names)``. Non-numeric cells and ragged rows raise
    :class:`DataError`.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(
                    f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}"
                )
            try:
                rows.append([float(v) for v in row])
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: non-numeric cell ({exc})") from None
    if not rows:
        raise DataError(f"{path}: no data rows")
    mat = np.asarray(rows, dtype=float)
    if response is None:
        return None, mat, list(header)
    if response not in header:
        raise DataError(f"{path}: response column {response!r} not in header {header}")
    ri = header.index(response)
    y = mat[:, ri]
    X = np.delete(mat, ri, axis=1)
    names = [h for i, h in enumerate(header) if i != ri]
    if log_response:
        if np.any(y <= 0):
            raise DataError("log-response requested but response has values <= 0")
        y = np.log(y)
    return y, X, names


def write_csv(path, header: list[str], columns: list[np.ndarray]) -> None:
    """Write columns as CSV with deterministic float formatting."""
    arrays = [np.asarray(c) for c in columns]
    n = len(arrays[0])
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for i in range(n):
            row = []
            for col in arrays:
                v = col[i]
                if isinstance(v, str):
                    row.append(v)
                elif isinstance(v, (np.integer, int, np.bool_, bool)):
                    row.append(str(int(v)))
                else:
                    row.append(FLOAT_FMT % float(v))
            writer.writerow(row)

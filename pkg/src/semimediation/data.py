"""CSV ingestion, model specification, and design-matrix construction.

Every estimator in this package works on a :class:`DesignMatrix` built from a
:class:`Dataset` and a :class:`ModelSpec`; this module owns validation of both.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass

import numpy as np

logger = logging.getLogger(__name__)

# Relative singular-value cutoff for rank checks, on the same scale as the
# solver's reciprocal-condition-number screen.
RANK_RTOL = 1e-10

ROLE_INTERCEPT = "intercept"
ROLE_TREATMENT = "treatment"
ROLE_MEDIATOR = "mediator"
ROLE_INTERACTION = "interaction"
ROLE_COVARIATE = "covariate"


class DataError(ValueError):
    """Unusable input data or an invalid model specification."""


@dataclass(frozen=True)
class Dataset:
    """Immutable numeric table; all columns share length ``n``."""

    column_names: tuple[str, ...]
    columns: dict[str, np.ndarray]
    n: int
    n_dropped: int = 0

    def __post_init__(self) -> None:
        if self.n < 1:
            raise DataError("dataset must contain at least one row")
        for name in self.column_names:
            col = self.columns[name]
            if col.shape != (self.n,):
                raise DataError(f"column {name!r} has length {col.shape}, expected ({self.n},)")
            if not np.all(np.isfinite(col)):
                raise DataError(f"column {name!r} contains non-finite values")

    def column(self, name: str) -> np.ndarray:
        if name not in self.columns:
            raise DataError(f"unknown column {name!r}")
        return self.columns[name]

    def with_scaled_column(self, name: str, factor: float) -> "Dataset":
        """Return a copy with one column multiplied by ``factor``."""
        if not (math.isfinite(factor) and factor != 0.0):
            raise DataError("scale factor must be finite and nonzero")
        new_cols = dict(self.columns)
        new_cols[name] = self.column(name) * factor
        return Dataset(self.column_names, new_cols, self.n, self.n_dropped)


def dataset_from_arrays(**named: np.ndarray) -> Dataset:
    """Build a Dataset from keyword arrays (test and simulation convenience)."""
    cols = {k: np.ascontiguousarray(v, dtype=float) for k, v in named.items()}
    n = len(next(iter(cols.values())))
    return Dataset(tuple(cols), cols, n)


@dataclass(frozen=True)
class ModelSpec:
    """Declarative regression layout for one mediation-model equation.

    ``mediator`` is absent for the mediator-model spec itself; ``interaction``
    adds the elementwise treatment*mediator column to the design.
    """

    response: str
    treatment: str
    mediator: str | None = None
    covariates: tuple[str, ...] = ()
    interaction: bool = False

    def validate(self, dataset: Dataset) -> None:
        referenced = [self.response, self.treatment, *([self.mediator] if self.mediator else []), *self.covariates]
        for name in referenced:
            if name not in dataset.columns:
                raise DataError(f"column {name!r} not present in dataset")
        if len(set(referenced)) != len(referenced):
            raise DataError("response, treatment, mediator, and covariates must be distinct columns")
        if self.interaction and self.mediator is None:
            raise DataError("interaction requires a mediator column")
        t = dataset.column(self.treatment)
        if not np.all((t == 0.0) | (t == 1.0)):
            raise DataError(f"treatment column {self.treatment!r} must contain only 0/1 values")


@dataclass(frozen=True)
class DesignMatrix:
    """Numeric regressor matrix with per-column roles; first column is the intercept."""

    values: np.ndarray
    column_roles: tuple[str, ...]
    p: int

    def role_index(self, role: str) -> int:
        return self.column_roles.index(role)

    def covariate_indices(self) -> tuple[int, ...]:
        return tuple(i for i, r in enumerate(self.column_roles) if r == ROLE_COVARIATE)


def load_csv(path: str, columns: list[str] | None = None) -> Dataset:
    """Read a comma-separated file with a header row into a Dataset.

    When ``columns`` is given, only those columns are parsed and retained.
    Rows with a missing or unparseable cell in any retained column are dropped;
    the drop count is logged and stored on the returned Dataset.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if columns is None:
            keep = list(range(len(header)))
            names = header
        else:
            missing = [c for c in columns if c not in header]
            if missing:
                raise DataError(f"{path}: columns not found in header: {missing}")
            keep = [header.index(c) for c in columns]
            names = list(columns)

        rows: list[list[float]] = []
        dropped = 0
        for lineno, raw in enumerate(reader, start=2):
            if not raw:
                continue
            if len(raw) != len(header):
                raise DataError(f"{path}:{lineno}: expected {len(header)} cells, found {len(raw)}")
            parsed: list[float] = []
            for i in keep:
                try:
                    v = float(raw[i])
                except ValueError:
                    break
                if not math.isfinite(v):
                    break
                parsed.append(v)
            if len(parsed) == len(keep):
                rows.append(parsed)
            else:
                dropped += 1

    if not rows:
        raise DataError(f"{path}: no usable rows after filtering ({dropped} dropped)")
    if dropped:
        logger.info("%s: dropped %d row(s) with missing or unparseable cells", path, dropped)
    mat = np.asarray(rows, dtype=float)
    cols = {name: np.ascontiguousarray(mat[:, j]) for j, name in enumerate(names)}
    return Dataset(tuple(names), cols, mat.shape[0], n_dropped=dropped)


def build_design(dataset: Dataset, spec: ModelSpec) -> DesignMatrix:
    """Assemble [intercept, treatment, mediator?, interaction?, covariates...].

    The interaction column is the exact elementwise product of the treatment
    and mediator columns. Raises on rank deficiency.
    """
    spec.validate(dataset)
    cols: list[np.ndarray] = [np.ones(dataset.n)]
    roles: list[str] = [ROLE_INTERCEPT]

    t = dataset.column(spec.treatment)
    cols.append(t)
    roles.append(ROLE_TREATMENT)

    if spec.mediator is not None:
        m = dataset.column(spec.mediator)
        cols.append(m)
        roles.append(ROLE_MEDIATOR)
        if spec.interaction:
            cols.append(t * m)
            roles.append(ROLE_INTERACTION)

    for name in spec.covariates:
        cols.append(dataset.column(name))
        roles.append(ROLE_COVARIATE)

    values = np.column_stack(cols)
    svals = np.linalg.svd(values, compute_uv=False)
    rank = int(np.sum(svals > RANK_RTOL * svals[0]))
    if rank < values.shape[1]:
        raise DataError(f"design matrix is rank-deficient (rank {rank} < p {values.shape[1]})")
    return DesignMatrix(values, tuple(roles), values.shape[1])


def response_vector(dataset: Dataset, spec: ModelSpec) -> np.ndarray:
    return dataset.column(spec.response)

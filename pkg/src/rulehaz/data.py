"""Survival dataset container and CSV ingestion."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

REQUIRED_COLUMNS = ("time", "event", "treatment")


class DataError(ValueError):
    """Raised when input data violates the dataset invariants."""


def _binary(values: np.ndarray, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.size and not np.all((arr == 0) | (arr == 1)):
        raise DataError(f"column '{name}' must contain only 0/1 values")
    return arr.astype(np.int8)


def infer_kinds(covariates: np.ndarray) -> tuple[str, ...]:
    kinds = []
    for col in np.asarray(covariates, dtype=float).T:
        is_binary = col.size > 0 and np.all((col == 0) | (col == 1))
        kinds.append("binary" if is_binary else "continuous")
    return tuple(kinds)


@dataclass(frozen=True)
class SurvivalDataset:
    """Right-censored survival data from a two-arm trial.

    Parameters
    ----------
    times : (N,) array
        Observed survival or censoring times, strictly positive.
    events : (N,) array of {0, 1}
        1 if the event was observed, 0 if censored.
    treatments : (N,) array of {0, 1}
        1 for the treatment arm, 0 for control.
    covariates : (N, p) array
        Covariate matrix without missing values.
    feature_names, feature_kinds : tuple of str, optional
        Column labels and ``"continuous"``/``"binary"`` tags. Inferred
        when omitted.
    """

    times: np.ndarray
    events: np.ndarray
    treatments: np.ndarray
    covariates: np.ndarray
    feature_names: tuple[str, ...] = field(default=())
    feature_kinds: tuple[str, ...] = field(default=())

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float).ravel()
        covariates = np.asarray(self.covariates, dtype=float)
        if covariates.ndim == 1:
            covariates = covariates.reshape(-1, 1) if times.size else covariates.reshape(0, -1)
        n = times.size
        if covariates.shape[0] != n:
            raise DataError(f"covariates have {covariates.shape[0]} rows, expected {n}")
        if not np.all(np.isfinite(times)) or np.any(times <= 0):
            raise DataError("times must be strictly positive and finite")
        if np.isnan(covariates).any():
            raise DataError("covariates contain missing values")
        events = _binary(np.ravel(self.events), "event")
        treatments = _binary(np.ravel(self.treatments), "treatment")
        if events.size != n or treatments.size != n:
            raise DataError("times, events and treatments must have equal length")

        p = covariates.shape[1]
        names = tuple(self.feature_names) or tuple(f"x{j + 1}" for j in range(p))
        kinds = tuple(self.feature_kinds) or infer_kinds(covariates)
        if len(names) != p or len(kinds) != p:
            raise DataError("feature_names/feature_kinds must match covariate columns")
        if len(set(names)) != p:
            raise DataError("feature names must be unique")

        for attr, value in [
            ("times", times),
            ("events", events),
            ("treatments", treatments),
            ("covariates", covariates),
            ("feature_names", names),
            ("feature_kinds", kinds),
        ]:
            if isinstance(value, np.ndarray):
                value.setflags(write=False)
            object.__setattr__(self, attr, value)

    @property
    def n(self) -> int:
        return self.times.size

    @property
    def p(self) -> int:
        return self.covariates.shape[1]

    def subset(self, index) -> "SurvivalDataset":
        index = np.asarray(index)
        return SurvivalDataset(
            self.times[index],
            self.events[index],
            self.treatments[index],
            self.covariates[index],
            self.feature_names,
            self.feature_kinds,
        )

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.covariates, columns=list(self.feature_names))
        frame.insert(0, "treatment", self.treatments.astype(int))
        frame.insert(0, "event", self.events.astype(int))
        frame.insert(0, "time", self.times)
        return frame


def _read_frame(path) -> pd.DataFrame:
    try:
        return pd.read_csv(Path(path), sep=",", encoding="utf-8", float_precision="round_trip")
    except pd.errors.EmptyDataError as exc:
        raise DataError(f"{path}: empty file, a header row is required") from exc


def from_frame(frame: pd.DataFrame) -> SurvivalDataset:
    missing = [c for c in REQUIRED_COLUMNS if c not in frame.columns]
    if missing:
        raise DataError(f"missing required columns: {', '.join(missing)}")
    if frame.isna().any().any():
        bad = [str(c) for c in frame.columns[frame.isna().any()]]
        raise DataError(f"missing values in columns: {', '.join(bad)}")
    covariate_cols = [c for c in frame.columns if c not in REQUIRED_COLUMNS]
    try:
        covariates = frame[covariate_cols].to_numpy(dtype=float)
    except ValueError as exc:
        raise DataError(f"non-numeric covariate values: {exc}") from exc
    return SurvivalDataset(
        times=frame["time"].to_numpy(dtype=float),
        events=frame["event"].to_numpy(dtype=float),
        treatments=frame["treatment"].to_numpy(dtype=float),
        covariates=covariates.reshape(len(frame), len(covariate_cols)),
        feature_names=tuple(str(c) for c in covariate_cols),
    )


def load_csv(path) -> SurvivalDataset:
    """Load a dataset from CSV with ``time``, ``event`` and ``treatment`` columns."""
    return from_frame(_read_frame(path))


def load_covariates(path, feature_names) -> np.ndarray:
    """Load a covariate-only CSV, checking its columns against ``feature_names``.

    Outcome columns (``time``, ``event``, ``treatment``) are ignored when present.
    """
    frame = _read_frame(path)
    cols = [str(c) for c in frame.columns if c not in REQUIRED_COLUMNS]
    expected = list(feature_names)
    missing = [c for c in expected if c not in cols]
    extra = [c for c in cols if c not in expected]
    if missing or extra:
        raise DataError(
            "covariate schema mismatch; missing: [%s]; extra: [%s]"
            % (", ".join(missing), ", ".join(extra))
        )
    sub = frame[expected]
    if sub.isna().any().any():
        raise DataError("covariate file contains missing values")
    return sub.to_numpy(dtype=float).reshape(len(frame), len(expected))

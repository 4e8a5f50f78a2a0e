"""Tabular sample sets, CSV round-tripping, splitting, and seeded RNG streams.

All randomness in the package flows through explicitly passed
``numpy.random.Generator`` objects. :func:`stream_rng` derives independent,
reproducible generators from one master seed and a named path, so that
parallel runs never share state and every experiment is replayable.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

# "%.17g" prints enough digits to round-trip any float64 exactly.
FLOAT_FORMAT = "%.17g"

RandomState = int | np.random.Generator | None


def ensure_rng(random_state: RandomState) -> np.random.Generator:
    """Return a Generator: pass one through, seed from an int, or fresh entropy."""
    if isinstance(random_state, np.random.Generator):
        return random_state
    return np.random.default_rng(random_state)


def stream_rng(seed: int, *path) -> np.random.Generator:
    """Independent generator for a named stream under one master seed.

    ``path`` mixes strings and integers, e.g. ``stream_rng(7, "run", 3, "init")``.
    Distinct paths give statistically independent streams; the same
    (seed, path) always gives the same stream.
    """
    if seed < 0:
        raise ValueError("seed must be a non-negative integer")
    entropy = [int(seed)]
    for part in path:
        if isinstance(part, (int, np.integer)):
            entropy.append(int(part) & 0xFFFFFFFFFFFFFFFF)
        else:
            digest = hashlib.sha256(str(part).encode()).digest()
            entropy.append(int.from_bytes(digest[:8], "little"))
    return np.random.default_rng(np.random.SeedSequence(entropy))


@dataclass(frozen=True)
class SampleSet:
    """Immutable paired feature matrix and output vector.

    features: (n, d_total) float64 matrix, all entries finite.
    outputs: length-n float64 vector.
    feature_names: d_total unique labels, in column order.
    """

    features: np.ndarray
    outputs: np.ndarray
    feature_names: tuple[str, ...]

    def __post_init__(self):
        features = np.ascontiguousarray(self.features, dtype=float)
        outputs = np.ascontiguousarray(self.outputs, dtype=float)
        names = tuple(str(c) for c in self.feature_names)
        if features.ndim != 2:
            raise ValueError("features must be a 2-D matrix")
        if outputs.ndim != 1:
            raise ValueError("outputs must be a 1-D vector")
        if features.shape[0] != outputs.shape[0]:
            raise ValueError(
                f"row mismatch: {features.shape[0]} feature rows vs "
                f"{outputs.shape[0]} outputs"
            )
        if features.shape[1] < 1:
            raise ValueError("at least one feature column is required")
        if len(names) != features.shape[1]:
            raise ValueError("feature_names length must equal the column count")
        if len(set(names)) != len(names):
            raise ValueError("feature_names must be unique")
        if not np.isfinite(features).all() or not np.isfinite(outputs).all():
            raise ValueError("all entries must be finite")
        features.setflags(write=False)
        outputs.setflags(write=False)
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "outputs", outputs)
        object.__setattr__(self, "feature_names", names)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d_total(self) -> int:
        return self.features.shape[1]

    def take(self, indices) -> "SampleSet":
        """Row subset, in the given order."""
        idx = np.asarray(indices, dtype=int)
        return SampleSet(self.features[idx], self.outputs[idx], self.feature_names)

    def head(self, n: int) -> "SampleSet":
        """First n rows."""
        return SampleSet(self.features[:n], self.outputs[:n], self.feature_names)


@dataclass(frozen=True)
class Split:
    """Disjoint train/test partition of one SampleSet."""

    train: SampleSet
    test: SampleSet
    ratio: float


def load_csv(path, output_column: str) -> SampleSet:
    """Load a header+comma CSV into a SampleSet.

    All non-output columns become features, in header order. Rows containing
    any non-finite value (NaN/inf) are dropped. A non-numeric cell is an
    error, as are a missing file, a missing output column, and a table with
    no data rows.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")
    # round_trip parsing: the default float parser can be one ulp off
    frame = pd.read_csv(path, float_precision="round_trip")
    if frame.shape[0] == 0:
        raise ValueError(f"empty table: {path}")
    if output_column not in frame.columns:
        raise ValueError(f"missing column {output_column!r} in {path}")
    for col in frame.columns:
        if not np.issubdtype(frame[col].dtype, np.number):
            bad = frame[col][pd.to_numeric(frame[col], errors="coerce").isna()]
            where = bad.index[0] if len(bad) else "?"
            raise ValueError(f"non-numeric cell in column {col!r}, row {where}")
    values = frame.to_numpy(dtype=float)
    keep = np.isfinite(values).all(axis=1)
    frame = frame.loc[keep]
    feature_cols = [c for c in frame.columns if c != output_column]
    return SampleSet(
        frame[feature_cols].to_numpy(dtype=float),
        frame[output_column].to_numpy(dtype=float),
        tuple(feature_cols),
    )


def save_csv(samples: SampleSet, path, output_column: str = "y") -> None:
    """Write a SampleSet as CSV at full float64 precision (17 significant digits)."""
    if output_column in samples.feature_names:
        raise ValueError(f"output column name {output_column!r} collides with a feature")
    frame = pd.DataFrame(samples.features, columns=list(samples.feature_names))
    frame[output_column] = samples.outputs
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")


def random_split(samples: SampleSet, ratio: float = 0.75,
                 random_state: RandomState = None) -> Split:
    """Uniform random train/test partition without replacement.

    train gets round(ratio * n) rows; the split is a pure function of
    (samples, ratio, seed). The 0.75 default matches the standard 75/25
    evaluation protocol used throughout the experiment harness.
    """
    if not 0.0 < ratio < 1.0:
        raise ValueError("ratio must lie strictly between 0 and 1")
    if samples.n < 2:
        raise ValueError("need at least 2 rows to split")
    rng = ensure_rng(random_state)
    n_train = int(np.floor(ratio * samples.n + 0.5))
    perm = rng.permutation(samples.n)
    train_idx = np.sort(perm[:n_train])
    test_idx = np.sort(perm[n_train:])
    return Split(samples.take(train_idx), samples.take(test_idx), ratio)

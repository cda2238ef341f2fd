"""Loading, encoding and splitting of KDD-format connection records.

KDD Cup 99 rows carry 41 feature fields followed by a label token, which in
the published files ends with a period (``normal.``, ``smurf.``). Three of the
fields (protocol_type, service, flag) are categorical; everything else is
numeric.
"""

from __future__ import annotations

import gzip
import hashlib
import io
import os
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Iterable, Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

KDD_FEATURE_NAMES = (
    "duration", "protocol_type", "service", "flag", "src_bytes", "dst_bytes",
    "land", "wrong_fragment", "urgent", "hot", "num_failed_logins",
    "logged_in", "num_compromised", "root_shell", "su_attempted", "num_root",
    "num_file_creations", "num_shells", "num_access_files",
    "num_outbound_cmds", "is_host_login", "is_guest_login", "count",
    "srv_count", "serror_rate", "srv_serror_rate", "rerror_rate",
    "srv_rerror_rate", "same_srv_rate", "diff_srv_rate",
    "srv_diff_host_rate", "dst_host_count", "dst_host_srv_count",
    "dst_host_same_srv_rate", "dst_host_diff_srv_rate",
    "dst_host_same_src_port_rate", "dst_host_srv_diff_host_rate",
    "dst_host_serror_rate", "dst_host_srv_serror_rate",
    "dst_host_rerror_rate", "dst_host_srv_rerror_rate",
)
KDD_CATEGORICAL = frozenset({"protocol_type", "service", "flag"})

NUMERIC = "numeric"
CATEGORICAL = "categorical"


class Label(IntEnum):
    NORMAL = 0
    ATTACK = 1


class KDDParseError(ValueError):
    """Malformed input line. ``lineno`` is 1-based."""

    def __init__(self, message: str, lineno: int, feature: str | None = None):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno
        self.feature = feature


@dataclass(frozen=True)
class FeatureSchema:
    names: tuple[str, ...]
    kinds: tuple[str, ...]
    category_tables: dict[str, tuple[str, ...]] = field(default_factory=dict)

    def __post_init__(self):
        if len(self.names) != len(self.kinds):
            raise ValueError("names and kinds differ in length")
        if len(set(self.names)) != len(self.names):
            raise ValueError("feature names must be unique")
        bad = set(self.kinds) - {NUMERIC, CATEGORICAL}
        if bad:
            raise ValueError(f"unknown feature kinds: {sorted(bad)}")

    @property
    def n_features(self) -> int:
        return len(self.names)

    def is_categorical(self, j: int) -> bool:
        return self.kinds[j] == CATEGORICAL

    def index_of(self, name: str) -> int:
        return self.names.index(name)

    def with_tables(self, tables: dict[str, tuple[str, ...]]) -> "FeatureSchema":
        return FeatureSchema(self.names, self.kinds, dict(tables))

    @classmethod
    def kdd(cls) -> "FeatureSchema":
        kinds = tuple(CATEGORICAL if n in KDD_CATEGORICAL else NUMERIC
                      for n in KDD_FEATURE_NAMES)
        return cls(KDD_FEATURE_NAMES, kinds)

    @classmethod
    def numeric(cls, n_features: int) -> "FeatureSchema":
        names = tuple(f"f{j + 1}" for j in range(n_features))
        return cls(names, (NUMERIC,) * n_features)


@dataclass(frozen=True)
class ConnectionRecord:
    """One raw row: numeric fields as floats, categorical fields as tokens."""

    features: tuple
    label: str

    def __post_init__(self):
        if not self.label:
            raise ValueError("empty label")

    @property
    def binary_label(self) -> Label:
        return Label.NORMAL if self.label == "normal" else Label.ATTACK


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class EncodedDataset:
    """Numerically encoded rows in [0, 1] with binary labels.

    ``row_ids`` tracks the position of every row in the dataset it was
    originally encoded from, so that splits can be checked for overlap.
    """

    X: np.ndarray
    y: np.ndarray
    schema: FeatureSchema
    bounds: np.ndarray
    row_ids: np.ndarray | None = None

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        y = np.asarray(self.y, dtype=np.int8)
        if X.ndim != 2 or y.ndim != 1 or len(X) != len(y):
            raise ValueError(f"shape mismatch: X {X.shape}, y {y.shape}")
        if X.shape[1] != self.schema.n_features:
            raise ValueError("row width does not match schema")
        bounds = np.asarray(self.bounds, dtype=float)
        if bounds.shape != (X.shape[1], 2) or np.any(bounds[:, 0] > bounds[:, 1]):
            raise ValueError("bounds must be (d, 2) with min <= max")
        row_ids = np.arange(len(y)) if self.row_ids is None else np.asarray(self.row_ids)
        object.__setattr__(self, "X", _freeze(X))
        object.__setattr__(self, "y", _freeze(y))
        object.__setattr__(self, "bounds", _freeze(bounds))
        object.__setattr__(self, "row_ids", _freeze(row_ids.astype(np.int64)))

    def __len__(self) -> int:
        return len(self.y)

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    def class_counts(self) -> tuple[int, int]:
        n_attack = int(self.y.sum())
        return len(self.y) - n_attack, n_attack

    def take(self, idx) -> "EncodedDataset":
        idx = np.asarray(idx, dtype=np.int64)
        return EncodedDataset(self.X[idx], self.y[idx], self.schema, self.bounds,
                              self.row_ids[idx])

    def to_records(self) -> list[ConnectionRecord]:
        """Serializable view; labels become "normal"/"attack"."""
        names = {Label.NORMAL: "normal", Label.ATTACK: "attack"}
        return [ConnectionRecord(tuple(float(v) for v in row), names[Label(lab)])
                for row, lab in zip(self.X, self.y)]


# -- parsing -----------------------------------------------------------------

def _lines(source) -> Iterable[str]:
    if isinstance(source, (str, os.PathLike)):
        return _open_text(source)
    return source


def _open_text(path) -> io.TextIOBase:
    path = os.fspath(path)
    with open(path, "rb") as fh:
        magic = fh.read(2)
    if magic == b"\x1f\x8b":
        return io.TextIOWrapper(gzip.open(path, "rb"), encoding="utf-8")
    return open(path, "r", encoding="utf-8")


def parse_line(line: str, schema: FeatureSchema, lineno: int = 1) -> ConnectionRecord:
    parts = [p.strip() for p in line.strip().split(",")]
    d = schema.n_features
    if len(parts) != d + 1:
        raise KDDParseError(f"expected {d + 1} fields, got {len(parts)}", lineno)
    label = parts[-1]
    if label.endswith("."):
        label = label[:-1]
    if not label:
        raise KDDParseError("empty label", lineno)
    values = []
    for j, tok in enumerate(parts[:-1]):
        if schema.is_categorical(j):
            values.append(tok)
            continue
        try:
            values.append(float(tok))
        except ValueError:
            raise KDDParseError(
                f"non-numeric value {tok!r} in feature {schema.names[j]!r}",
                lineno, schema.names[j]) from None
    return ConnectionRecord(tuple(values), label)


def parse_kdd(source, schema: FeatureSchema | None = None) -> list[ConnectionRecord]:
    """Parse KDD-format lines from an iterable of strings or a file path.

    Gzip files are detected by their magic bytes. Blank lines are skipped.
    """
    schema = schema or FeatureSchema.kdd()
    lines = _lines(source)
    try:
        return [parse_line(line, schema, i)
                for i, line in enumerate(lines, start=1) if line.strip()]
    finally:
        if isinstance(lines, io.IOBase):
            lines.close()


def _format_value(v) -> str:
    if isinstance(v, str):
        return v
    v = float(v)
    if v.is_integer() and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def format_record(record: ConnectionRecord, trailing_period: bool = True) -> str:
    fields = [_format_value(v) for v in record.features]
    fields.append(record.label + ("." if trailing_period else ""))
    return ",".join(fields)


def write_kdd(records: Iterable[ConnectionRecord], path, trailing_period: bool = True):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(format_record(rec, trailing_period) + "\n")


# -- encoding ----------------------------------------------------------------

def _infer_schema(records: Sequence[ConnectionRecord]) -> FeatureSchema:
    d = len(records[0].features)
    if d == len(KDD_FEATURE_NAMES):
        return FeatureSchema.kdd()
    return FeatureSchema.numeric(d)


def _category_tables(records, schema) -> dict[str, tuple[str, ...]]:
    tables = {}
    for j, name in enumerate(schema.names):
        if schema.is_categorical(j):
            tables[name] = tuple(sorted({r.features[j] for r in records}))
    return tables


def _raw_matrix(records, schema) -> np.ndarray:
    d = schema.n_features
    raw = np.empty((len(records), d), dtype=float)
    lookups = {name: {tok: i for i, tok in enumerate(table)}
               for name, table in schema.category_tables.items()}
    for i, rec in enumerate(records):
        if len(rec.features) != d:
            raise ValueError(f"record {i} has {len(rec.features)} features, expected {d}")
        for j, v in enumerate(rec.features):
            if schema.is_categorical(j):
                table = lookups[schema.names[j]]
                # unseen tokens share the code one past the table end
                raw[i, j] = table.get(v, len(table))
            else:
                raw[i, j] = v
    return raw


def _scale(raw: np.ndarray, bounds: np.ndarray) -> np.ndarray:
    lo, hi = bounds[:, 0], bounds[:, 1]
    span = hi - lo
    safe = np.where(span > 0, span, 1.0)
    X = (raw - lo) / safe
    X[:, span == 0] = 0.0
    return np.clip(X, 0.0, 1.0)


def encode(records: Sequence[ConnectionRecord],
           schema_hint: FeatureSchema | None = None,
           bounds: np.ndarray | None = None) -> EncodedDataset:
    """Encode raw records into an :class:`EncodedDataset`.

    Without ``schema_hint`` the category tables and the min-max bounds are
    learned from ``records``. Passing the schema (and bounds) of a training
    set encodes test rows against it; values outside the training range are
    clipped into [0, 1].
    """
    if len(records) == 0:
        raise ValueError("cannot encode an empty record list")
    if schema_hint is None:
        schema = _infer_schema(records)
        schema = schema.with_tables(_category_tables(records, schema))
    elif any(schema_hint.is_categorical(j) and schema_hint.names[j] not in schema_hint.category_tables
             for j in range(schema_hint.n_features)):
        schema = schema_hint.with_tables(
            {**_category_tables(records, schema_hint), **schema_hint.category_tables})
    else:
        schema = schema_hint
    raw = _raw_matrix(records, schema)
    if bounds is None:
        bounds = np.column_stack([raw.min(axis=0), raw.max(axis=0)])
    y = np.array([r.binary_label for r in records], dtype=np.int8)
    return EncodedDataset(_scale(raw, np.asarray(bounds, dtype=float)), y, schema, bounds)


class KDDEncoder(TransformerMixin, BaseEstimator):
    """Estimator wrapper around :func:`encode`.

    ``fit`` learns category tables and scaling bounds from training records;
    ``transform`` returns the encoded feature matrix.
    """

    def __init__(self, schema: FeatureSchema | None = None):
        self.schema = schema

    def fit(self, records, y=None):
        train = encode(records, self.schema)
        self.schema_ = train.schema
        self.bounds_ = train.bounds
        self.feature_names_in_ = np.array(train.schema.names, dtype=object)
        self.n_features_in_ = train.n_features
        return self

    def encode(self, records) -> EncodedDataset:
        check_is_fitted(self)
        return encode(records, self.schema_, self.bounds_)

    def transform(self, records) -> np.ndarray:
        return np.array(self.encode(records).X)

    def get_feature_names_out(self, input_features=None):
        check_is_fitted(self)
        return np.array(self.schema_.names, dtype=object)


# -- splitting ---------------------------------------------------------------

def stratified_indices(y, fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Index form of :func:`stratified_split`.

    For each class in label order the class members are permuted with one
    ``numpy.random.default_rng(seed)`` stream; the first
    ``round(n_c * fraction)`` (clamped to [1, n_c - 1]) go to the first part.
    Both index arrays are returned sorted.
    """
    if not 0.0 < fraction < 1.0:
        raise ValueError("fraction must lie in (0, 1)")
    y = np.asarray(y)
    rng = np.random.default_rng(seed)
    first, second = [], []
    for c in (Label.NORMAL, Label.ATTACK):
        members = np.flatnonzero(y == c)
        if len(members) < 2:
            raise ValueError(f"class {c.name} has {len(members)} rows; need at least 2")
        members = rng.permutation(members)
        n_first = min(max(int(np.floor(len(members) * fraction + 0.5)), 1), len(members) - 1)
        first.append(members[:n_first])
        second.append(members[n_first:])
    return np.sort(np.concatenate(first)), np.sort(np.concatenate(second))


def stratified_split(data: EncodedDataset, fraction: float,
                     seed: int) -> tuple[EncodedDataset, EncodedDataset]:
    a, b = stratified_indices(data.y, fraction, seed)
    return data.take(a), data.take(b)


def stratified_sample_indices(y, n: int, seed: int) -> np.ndarray:
    """Choose ``n`` rows preserving the binary class ratio, in shuffled order.

    Class quotas use largest-remainder rounding, so each class count is within
    one of its exact share.
    """
    y = np.asarray(y)
    total = len(y)
    if n < 4:
        raise ValueError("n must be at least 4")
    if n > total:
        raise ValueError(f"requested {n} rows but only {total} are available")
    rng = np.random.default_rng(seed)
    groups = [np.flatnonzero(y == c) for c in (Label.NORMAL, Label.ATTACK)]
    exact = np.array([len(g) * n / total for g in groups])
    quota = np.floor(exact).astype(int)
    for i in np.argsort(-(exact - quota), kind="stable")[: n - quota.sum()]:
        quota[i] += 1
    chosen = [rng.permutation(g)[:q] for g, q in zip(groups, quota)]
    return rng.permutation(np.concatenate(chosen))


# -- synthetic data ----------------------------------------------------------

def generate_synthetic(n: int, d: int, informative: Sequence[int], noise_sd: float,
                       seed: int, separation: float = 4.0,
                       min_gap: float = 0.1) -> EncodedDataset:
    """Two Gaussian clusters that differ only along ``informative`` features.

    The class means are ``max(separation * noise_sd, min_gap)`` apart in
    Euclidean distance, split evenly over the informative features and
    centered on 0.5; other features have mean 0.5 in both classes. Every
    feature gets N(0, noise_sd) noise and is clipped to [0, 1]. Because no
    single informative feature separates the classes on its own, a good
    subset has to keep most of them.
    """
    informative = sorted(set(int(j) for j in informative))
    if not informative:
        raise ValueError("informative feature list is empty")
    if informative[0] < 0 or informative[-1] >= d:
        raise ValueError("informative indices must lie in [0, d)")
    if n < 4:
        raise ValueError("n must be at least 4")
    rng = np.random.default_rng(seed)
    y = np.zeros(n, dtype=np.int8)
    y[n // 2:] = Label.ATTACK
    y = rng.permutation(y)
    gap = max(separation * noise_sd, min_gap) / np.sqrt(len(informative))
    centers = np.full((n, d), 0.5)
    sign = np.where(y == Label.ATTACK, 1.0, -1.0)
    centers[:, informative] += (sign * gap / 2)[:, None]
    X = np.clip(centers + rng.normal(0.0, noise_sd, size=(n, d)), 0.0, 1.0)
    bounds = np.tile([0.0, 1.0], (d, 1))
    return EncodedDataset(X, y, FeatureSchema.numeric(d), bounds)


def checksum(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()

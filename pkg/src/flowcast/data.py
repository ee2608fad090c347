"""Flow-series ingestion, repair, normalization, windowing and splits.

Sources are T x N matrices of vehicle counts per 5-minute interval, either
as headerless CSV (literal ``nan`` marks a missing cell) or as the packed
binary format described in the README (magic ``ESGCNDS1``, JSON header,
float32 payload, optional missing-value mask).

The supervised protocol: linear interpolation of missing runs, global
mean/std normalization fitted on the first 60% of time steps, sliding
12-in / 12-out windows with stride 1, and a chronological 6:2:2 split of
the window list.
"""

from __future__ import annotations

import json
import struct
import warnings
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

BIN_MAGIC = b"ESGCNDS1"


class DataError(ValueError):
    """Malformed or insufficient input data."""


@dataclass
class SeriesDataset:
    values: np.ndarray                 # [T, N] float32
    missing_mask: np.ndarray           # [T, N] bool, True = missing
    interval_minutes: int = 5
    name: str = ""

    @property
    def num_steps(self) -> int:
        return self.values.shape[0]

    @property
    def num_nodes(self) -> int:
        return self.values.shape[1]


@dataclass
class NormStats:
    mean: float
    std: float

    def apply(self, x):
        return (np.asarray(x, dtype=np.float64) - self.mean) / self.std

    def invert(self, z):
        return np.asarray(z, dtype=np.float64) * self.std + self.mean


# -- loading --------------------------------------------------------------------


def load_csv(path: str, zeros_as_missing: bool = False) -> SeriesDataset:
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", UserWarning)  # empty file is our error below
            values = np.loadtxt(path, delimiter=",", dtype=np.float64, ndmin=2)
    except FileNotFoundError:
        raise DataError(f"data file not found: {path}") from None
    except ValueError as exc:
        raise DataError(f"malformed csv {path}: {exc}") from None
    if values.size == 0:
        raise DataError(f"empty data file: {path}")
    mask = np.isnan(values)
    if zeros_as_missing:
        mask |= values == 0.0
    values = np.where(mask, 0.0, values)
    return SeriesDataset(values.astype(np.float32), mask, name=str(path))


def load_bin(path: str, zeros_as_missing: bool = False) -> SeriesDataset:
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except FileNotFoundError:
        raise DataError(f"data file not found: {path}") from None
    if len(blob) < len(BIN_MAGIC) + 4:
        raise DataError(f"truncated bin file: {path}")
    if blob[:8] != BIN_MAGIC:
        raise DataError(f"bad magic in {path}: expected {BIN_MAGIC!r}, got {blob[:8]!r}")
    (hlen,) = struct.unpack_from("<I", blob, 8)
    header_end = 12 + hlen
    try:
        header = json.loads(blob[12:header_end].decode("utf-8"))
        t, n = int(header["T"]), int(header["N"])
        interval = int(header.get("interval_minutes", 5))
        has_mask = bool(header["has_mask"])
    except (ValueError, KeyError, UnicodeDecodeError) as exc:
        raise DataError(f"malformed bin header in {path}: {exc}") from None
    if t <= 0 or n <= 0:
        raise DataError(f"bin header of {path} declares empty data ({t}x{n})")

    need = header_end + 4 * t * n + (t * n if has_mask else 0)
    if len(blob) != need:
        raise DataError(f"bin payload of {path} is {len(blob)} bytes, expected {need}")
    values = np.frombuffer(blob, dtype="<f4", count=t * n, offset=header_end)
    values = values.reshape(t, n).astype(np.float32)
    if has_mask:
        mask = np.frombuffer(blob, dtype=np.uint8, count=t * n,
                             offset=header_end + 4 * t * n).reshape(t, n) != 0
    else:
        mask = np.zeros((t, n), dtype=bool)
    mask = mask | np.isnan(values)
    if zeros_as_missing:
        mask |= values == 0.0
    values = np.where(mask, 0.0, values).astype(np.float32)
    return SeriesDataset(values, mask, interval_minutes=interval, name=str(path))


def save_bin(ds: SeriesDataset, path: str) -> None:
    header = json.dumps({"T": ds.num_steps, "N": ds.num_nodes,
                         "interval_minutes": ds.interval_minutes, "has_mask": True}).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(BIN_MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        fh.write(ds.values.astype("<f4").tobytes())
        fh.write(ds.missing_mask.astype(np.uint8).tobytes())


def load_dataset(path: str, format: str, zeros_as_missing: bool = False) -> SeriesDataset:
    if format == "csv":
        return load_csv(path, zeros_as_missing)
    if format == "bin":
        return load_bin(path, zeros_as_missing)
    raise DataError(f"unknown data format {format!r}")


# -- repair and normalization -----------------------------------------------------


def interpolate(ds: SeriesDataset) -> SeriesDataset:
    """Fill missing runs linearly between observed neighbors; runs touching
    either end take the nearest observed value. Idempotent."""
    values = ds.values.astype(np.float64)
    t = ds.num_steps
    steps = np.arange(t)
    out = values.copy()
    for node in range(ds.num_nodes):
        missing = ds.missing_mask[:, node]
        if not missing.any():
            continue
        observed = ~missing
        if not observed.any():
            raise DataError(f"node {node} has no observed values")
        out[:, node] = np.interp(steps, steps[observed], values[observed, node])
    repaired = SeriesDataset(out.astype(np.float32), np.zeros_like(ds.missing_mask),
                             interval_minutes=ds.interval_minutes, name=ds.name)
    return repaired


def fit_normalizer(values: np.ndarray, train_fraction: float = 0.6) -> NormStats:
    """Global mean/std over all cells in the first ``train_fraction`` of steps."""
    t = values.shape[0]
    span = int(np.floor(t * train_fraction))
    if span < 1:
        raise DataError(f"too few time steps ({t}) to fit normalization")
    train = np.asarray(values[:span], dtype=np.float64)
    mean = float(train.mean())
    std = float(train.std())
    if not std > 0:
        raise DataError("zero std in the normalization span (constant series)")
    return NormStats(mean, std)


# -- windowing ---------------------------------------------------------------------


def window_starts(num_steps: int, t_in: int = 12, t_out: int = 12) -> np.ndarray:
    count = num_steps - (t_in + t_out) + 1
    if count < 1:
        raise DataError(f"series of {num_steps} steps too short for {t_in}+{t_out} windows")
    return np.arange(count)


def split_windows(starts: np.ndarray, train_fraction: float = 0.6,
                  val_fraction: float = 0.2) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    w = len(starts)
    n_train = int(np.floor(w * train_fraction))
    n_val = int(np.floor(w * val_fraction))
    n_test = w - n_train - n_val
    if n_train < 1 or n_val < 1 or n_test < 1:
        raise DataError(f"insufficient windows: {w} split to {n_train}/{n_val}/{n_test}")
    return starts[:n_train], starts[n_train:n_train + n_val], starts[n_train + n_val:]


@dataclass
class WindowBatch:
    inputs: np.ndarray        # [b, 1, n, t_in] float32, normalized
    targets_norm: np.ndarray  # [b, t_out, n] float32
    targets_raw: np.ndarray   # [b, t_out, n] float32
    starts: np.ndarray


@dataclass
class PreparedData:
    raw: np.ndarray           # [T, N] float32 after interpolation
    norm: np.ndarray          # [T, N] float32 normalized
    stats: NormStats
    t_in: int
    t_out: int
    splits: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def num_nodes(self) -> int:
        return self.raw.shape[1]


def prepare(ds: SeriesDataset, t_in: int = 12, t_out: int = 12,
            train_fraction: float = 0.6, val_fraction: float = 0.2) -> PreparedData:
    repaired = interpolate(ds)
    stats = fit_normalizer(repaired.values, train_fraction)
    norm = stats.apply(repaired.values).astype(np.float32)
    starts = window_starts(repaired.num_steps, t_in, t_out)
    train, val, test = split_windows(starts, train_fraction, val_fraction)
    return PreparedData(repaired.values, norm, stats, t_in, t_out,
                        splits={"train": train, "val": val, "test": test})


def make_batch(prep: PreparedData, starts: np.ndarray) -> WindowBatch:
    in_idx = starts[:, None] + np.arange(prep.t_in)[None, :]
    out_idx = starts[:, None] + prep.t_in + np.arange(prep.t_out)[None, :]
    inputs = prep.norm[in_idx]                       # [b, t_in, n]
    inputs = inputs.transpose(0, 2, 1)[:, None, :, :]  # [b, 1, n, t_in]
    return WindowBatch(np.ascontiguousarray(inputs),
                       np.ascontiguousarray(prep.norm[out_idx]),
                       np.ascontiguousarray(prep.raw[out_idx]),
                       starts)


def iter_batches(prep: PreparedData, split: str, batch_size: int,
                 shuffle: bool = False, rng: np.random.Generator | None = None
                 ) -> Iterator[WindowBatch]:
    """Mini-batches over one split; the last short batch is kept.

    Shuffling requires an explicit generator so epoch order is a pure
    function of the caller's seed; val/test order stays chronological.
    """
    starts = prep.splits[split]
    if shuffle:
        if rng is None:
            raise ValueError("shuffle=True requires an rng")
        starts = rng.permutation(starts)
    for lo in range(0, len(starts), batch_size):
        yield make_batch(prep, starts[lo:lo + batch_size])

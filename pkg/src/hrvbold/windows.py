"""Sliding-window supervised samples, normalization, and fold assignment.

A window of ``window_len`` frames predicts the HRV value at the window's
``target_offset`` frame (zero-based 9, i.e. the 10th frame), so the model
sees both past and future BOLD context around the target. Window inputs
are views into the scan's ROI matrix; nothing is copied until batches are
assembled.

Fold assignment operates on whole scans so that no scan contributes
windows to both sides of a split, and the normalizer is fitted on
training windows only.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ValidationError
from .records import HrvSeries, RoiMatrix
from .seeding import make_rng

logger = logging.getLogger(__name__)

_STREAM_FOLDS = 21


@dataclass(frozen=True)
class WindowSpec:
    window_len: int = 65
    target_offset: int = 9
    stride: int = 1

    def __post_init__(self):
        if self.window_len < 1:
            raise ValidationError("window_len must be >= 1")
        if not 0 <= self.target_offset < self.window_len:
            raise ValidationError("target_offset must lie in [0, window_len)")
        if self.stride < 1:
            raise ValidationError("stride must be >= 1")

    def n_windows(self, n_frames: int) -> int:
        if n_frames < self.window_len:
            return 0
        return (n_frames - self.window_len) // self.stride + 1

    def digest(self) -> str:
        blob = json.dumps({"window_len": self.window_len,
                           "target_offset": self.target_offset,
                           "stride": self.stride}, sort_keys=True)
        return hashlib.sha1(blob.encode()).hexdigest()[:12]


@dataclass(eq=False)
class WindowSample:
    """One [window_len x n_channels] input slab and its scalar HRV target."""

    scan_id: str
    target_frame: int
    input: np.ndarray
    target: float

    def __post_init__(self):
        if not np.isfinite(self.target):
            raise ValidationError("window target must be finite")


def build_windows(roi: RoiMatrix, hrv: HrvSeries, spec: WindowSpec = WindowSpec(),
                  scan_id: str = "") -> list[WindowSample]:
    """All windows of a scan, in frame order. Inputs are views, not copies."""
    if roi.n_frames != len(hrv):
        raise ValidationError(f"ROI frames ({roi.n_frames}) and HRV length "
                              f"({len(hrv)}) differ")
    if roi.n_frames < spec.window_len:
        logger.warning("scan %s: %d frames < window_len %d, no windows",
                       scan_id, roi.n_frames, spec.window_len)
        return []
    samples = []
    for start in range(0, roi.n_frames - spec.window_len + 1, spec.stride):
        tf = start + spec.target_offset
        samples.append(WindowSample(scan_id=scan_id, target_frame=tf,
                                    input=roi.values[start:start + spec.window_len],
                                    target=float(hrv.values[tf])))
    return samples


def stack_inputs(samples: Sequence[WindowSample],
                 dtype=np.float64) -> tuple[np.ndarray, np.ndarray]:
    """Materialize (inputs [n, L, C], targets [n]) arrays for a sample list."""
    if not samples:
        raise ValidationError("no samples to stack")
    inputs = np.stack([s.input for s in samples]).astype(dtype, copy=False)
    targets = np.array([s.target for s in samples], dtype=dtype)
    return inputs, targets


@dataclass(eq=False)
class Normalizer:
    """Per-channel z-scoring statistics fitted on a training pool."""

    channel_mean: np.ndarray
    channel_std: np.ndarray
    target_mean: float
    target_std: float

    def __post_init__(self):
        self.channel_mean = np.asarray(self.channel_mean, dtype=np.float64)
        self.channel_std = np.asarray(self.channel_std, dtype=np.float64)
        if np.any(self.channel_std <= 0) or self.target_std <= 0:
            raise ValidationError("normalizer stds must be positive")

    @property
    def n_channels(self) -> int:
        return len(self.channel_mean)

    def standardize_input(self, x: np.ndarray) -> np.ndarray:
        return (x - self.channel_mean) / self.channel_std

    def standardize_target(self, y) -> np.ndarray:
        return (np.asarray(y, dtype=np.float64) - self.target_mean) / self.target_std

    def unstandardize_target(self, y) -> np.ndarray:
        return np.asarray(y, dtype=np.float64) * self.target_std + self.target_mean

    def state_bytes(self) -> bytes:
        """Canonical byte serialization, used by leakage-guard checks."""
        return (self.channel_mean.tobytes() + self.channel_std.tobytes()
                + np.float64(self.target_mean).tobytes()
                + np.float64(self.target_std).tobytes())


def fit_normalizer(samples: Sequence[WindowSample],
                   chunk: int = 512) -> Normalizer:
    """Channel stats pooled over all training windows and time steps;
    target stats over training targets only.

    Zero-variance channels (or a constant target) get std 1 and a logged
    warning. Accumulation order is fixed, so the result is bit-identical
    across runs on the same sample list.
    """
    if len(samples) < 2:
        raise ValidationError("need at least 2 samples to fit a normalizer")
    n_channels = samples[0].input.shape[1]
    s1 = np.zeros(n_channels)
    s2 = np.zeros(n_channels)
    count = 0
    for i in range(0, len(samples), chunk):
        block = np.stack([s.input for s in samples[i:i + chunk]])
        s1 += block.sum(axis=(0, 1))
        s2 += (block * block).sum(axis=(0, 1))
        count += block.shape[0] * block.shape[1]
    mean = s1 / count
    var = np.maximum(s2 / count - mean * mean, 0.0)
    std = np.sqrt(var)
    flat = std <= 0
    if np.any(flat):
        logger.warning("%d zero-variance channel(s), std forced to 1",
                       int(flat.sum()))
        std = np.where(flat, 1.0, std)

    targets = np.array([s.target for s in samples], dtype=np.float64)
    t_mean = float(targets.mean())
    t_var = float(np.maximum(np.mean(targets * targets) - t_mean * t_mean, 0.0))
    t_std = float(np.sqrt(t_var))
    if t_std <= 0:
        logger.warning("constant training target, target std forced to 1")
        t_std = 1.0
    return Normalizer(channel_mean=mean, channel_std=std,
                      target_mean=t_mean, target_std=t_std)


def apply_normalizer(norm: Normalizer,
                     samples: Sequence[WindowSample]) -> list[WindowSample]:
    """Standardize inputs and targets; returns new samples (copies)."""
    out = []
    for s in samples:
        if s.input.shape[1] != norm.n_channels:
            raise ValidationError(f"sample has {s.input.shape[1]} channels, "
                                  f"normalizer expects {norm.n_channels}")
        out.append(WindowSample(scan_id=s.scan_id, target_frame=s.target_frame,
                                input=norm.standardize_input(s.input),
                                target=float(norm.standardize_target(s.target))))
    return out


@dataclass(frozen=True)
class FoldAssignment:
    k: int
    fold_of: Mapping[str, int]

    def __post_init__(self):
        sizes = self.fold_sizes()
        if len(sizes) != self.k:
            raise ValidationError("every fold index in [0, k) must be assigned")

    def fold_sizes(self) -> dict[int, int]:
        sizes: dict[int, int] = {f: 0 for f in range(self.k)}
        for f in self.fold_of.values():
            if not 0 <= f < self.k:
                raise ValidationError(f"fold index {f} out of range")
            sizes[f] += 1
        return sizes

    def test_scans(self, fold: int) -> list[str]:
        return sorted(s for s, f in self.fold_of.items() if f == fold)

    def train_scans(self, fold: int) -> list[str]:
        return sorted(s for s, f in self.fold_of.items() if f != fold)


def assign_folds(scan_ids: Iterable[str], k: int = 10, seed: int = 0,
                 groups: Mapping[str, str] | None = None) -> FoldAssignment:
    """Shuffle scans deterministically and deal them round-robin into k folds.

    With ``groups`` (e.g. scan -> subject), whole groups are dealt instead
    so related scans never straddle a split; fold sizes may then differ by
    more than one scan.
    """
    raw = list(scan_ids)
    ids = sorted(set(raw))
    if len(ids) != len(raw):
        raise ValidationError("duplicate scan ids")
    if k < 2:
        raise ValidationError("k must be >= 2: one fold leaves no held-out data")
    rng = make_rng(seed, _STREAM_FOLDS)
    if groups is None:
        if k > len(ids):
            raise ValidationError(f"k={k} exceeds {len(ids)} scans")
        order = rng.permutation(len(ids))
        fold_of = {ids[j]: int(pos % k) for pos, j in enumerate(order)}
    else:
        missing = [s for s in ids if s not in groups]
        if missing:
            raise ValidationError(f"no group for scans {missing[:3]}...")
        unique = sorted(set(groups[s] for s in ids))
        if k > len(unique):
            raise ValidationError(f"k={k} exceeds {len(unique)} groups")
        order = rng.permutation(len(unique))
        group_fold = {unique[j]: int(pos % k) for pos, j in enumerate(order)}
        fold_of = {s: group_fold[groups[s]] for s in ids}
    return FoldAssignment(k=k, fold_of=fold_of)


class WindowCache:
    """Per-scan binary cache of materialized window tensors.

    Files are keyed by (scan_id, spec digest), so changing the window
    geometry never aliases stale tensors.
    """

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def _path(self, scan_id: str, spec: WindowSpec) -> Path:
        return self.root / f"{scan_id}-{spec.digest()}.npz"

    def has(self, scan_id: str, spec: WindowSpec) -> bool:
        return self._path(scan_id, spec).is_file()

    def put(self, scan_id: str, spec: WindowSpec,
            samples: Sequence[WindowSample]) -> Path:
        path = self._path(scan_id, spec)
        if samples:
            inputs, targets = stack_inputs(samples)
            frames = np.array([s.target_frame for s in samples], dtype=np.int64)
        else:
            inputs = np.empty((0, spec.window_len, 0))
            targets = np.empty(0)
            frames = np.empty(0, dtype=np.int64)
        np.savez_compressed(path, inputs=inputs, targets=targets,
                            target_frames=frames)
        return path

    def get(self, scan_id: str, spec: WindowSpec) -> list[WindowSample]:
        with np.load(self._path(scan_id, spec)) as blob:
            inputs = blob["inputs"]
            targets = blob["targets"]
            frames = blob["target_frames"]
        return [WindowSample(scan_id=scan_id, target_frame=int(f),
                             input=inputs[i], target=float(targets[i]))
                for i, f in enumerate(frames)]

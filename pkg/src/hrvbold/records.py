"""Shared data model: scans, ROI matrices, PPG traces, HRV series, beat times.

Everything downstream (simulator, triage, windowing, training, metrics)
consumes these types rather than raw files. Construction validates the
type invariants, so a value that exists is a value that is well formed.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import TYPE_CHECKING, Mapping, Sequence

import numpy as np

from .errors import ValidationError

if TYPE_CHECKING:  # pragma: no cover - import cycle guard, typing only
    from .ppg import QualityClass


class RoiGroup(str, Enum):
    """Anatomical grouping of an ROI channel."""

    CORTICAL = "Cortical"
    SUBCORTICAL = "Subcortical"
    WHITE_MATTER = "WhiteMatter"
    STRUCTURAL = "Structural"


#: Short tags used as channel-name prefixes in the on-disk CSV header.
GROUP_TAGS: dict[RoiGroup, str] = {
    RoiGroup.CORTICAL: "CTX",
    RoiGroup.SUBCORTICAL: "SUB",
    RoiGroup.WHITE_MATTER: "WM",
    RoiGroup.STRUCTURAL: "STR",
}
TAG_GROUPS = {tag: group for group, tag in GROUP_TAGS.items()}


@dataclass(frozen=True)
class RoiChannel:
    """One named ROI channel with its anatomical group."""

    name: str
    group: RoiGroup

    @property
    def tagged_name(self) -> str:
        return f"{GROUP_TAGS[self.group]}:{self.name}"

    @staticmethod
    def from_tagged(tagged: str) -> "RoiChannel":
        tag, sep, name = tagged.partition(":")
        if not sep or tag not in TAG_GROUPS or not name:
            raise ValidationError(f"malformed tagged channel name {tagged!r}")
        return RoiChannel(name=name, group=TAG_GROUPS[tag])


class RoiConfigLabel(str, Enum):
    """The four input configurations compared in the ablation, plus Custom."""

    DYNAMIC_PLUS_WM = "DynamicPlusWM"
    DYNAMIC_ONLY = "DynamicOnly"
    STATIC_PLUS_WM = "StaticPlusWM"
    STRUCTURAL_ONLY = "StructuralOnly"
    CUSTOM = "Custom"


_CANONICAL_COUNTS: dict[RoiConfigLabel, dict[RoiGroup, int]] = {
    RoiConfigLabel.DYNAMIC_PLUS_WM: {
        RoiGroup.CORTICAL: 518,
        RoiGroup.SUBCORTICAL: 62,
        RoiGroup.WHITE_MATTER: 48,
    },
    RoiConfigLabel.DYNAMIC_ONLY: {
        RoiGroup.CORTICAL: 518,
        RoiGroup.SUBCORTICAL: 62,
    },
    RoiConfigLabel.STATIC_PLUS_WM: {
        RoiGroup.CORTICAL: 360,
        RoiGroup.WHITE_MATTER: 48,
    },
    RoiConfigLabel.STRUCTURAL_ONLY: {
        RoiGroup.STRUCTURAL: 69,
    },
}


@dataclass(frozen=True)
class RoiConfig:
    """Channel-count budget per ROI group for one input configuration."""

    label: RoiConfigLabel
    group_counts: Mapping[RoiGroup, int]

    @property
    def total(self) -> int:
        return sum(self.group_counts.values())

    def __post_init__(self):
        for group, count in self.group_counts.items():
            if count < 0:
                raise ValidationError(f"negative channel count for {group}")
        if self.total == 0:
            raise ValidationError("RoiConfig must contain at least one channel")


def make_roi_config(label: RoiConfigLabel | str) -> RoiConfig:
    """Return the canonical group counts for one of the four named configs."""
    label = RoiConfigLabel(label)
    if label not in _CANONICAL_COUNTS:
        raise ValidationError(f"no canonical counts for label {label.value}; "
                              "use custom_roi_config for bespoke channel sets")
    return RoiConfig(label=label, group_counts=dict(_CANONICAL_COUNTS[label]))


def custom_roi_config(group_counts: Mapping[RoiGroup | str, int]) -> RoiConfig:
    """Build a bespoke channel-count configuration (desk-scale experiments)."""
    counts = {RoiGroup(g): int(n) for g, n in group_counts.items()}
    return RoiConfig(label=RoiConfigLabel.CUSTOM, group_counts=counts)


def default_channels(config: RoiConfig) -> tuple[RoiChannel, ...]:
    """Enumerate generically named channels matching a config's counts."""
    channels = []
    for group in RoiGroup:
        n = config.group_counts.get(group, 0)
        channels.extend(RoiChannel(name=f"{group.value.lower()}_{i:03d}", group=group)
                        for i in range(n))
    return tuple(channels)


@dataclass(eq=False)
class RoiMatrix:
    """BOLD time series, one column per ROI channel, one row per frame."""

    channels: tuple[RoiChannel, ...]
    values: np.ndarray

    def __post_init__(self):
        self.channels = tuple(self.channels)
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ValidationError("ROI values must be a 2-D [frames x channels] array")
        if self.values.shape[1] != len(self.channels):
            raise ValidationError(
                f"ROI matrix has {self.values.shape[1]} columns "
                f"but {len(self.channels)} channel descriptors")
        if not np.all(np.isfinite(self.values)):
            bad = np.argwhere(~np.isfinite(self.values))[0]
            raise ValidationError(
                f"non-finite ROI value at frame {bad[0]}, channel {bad[1]} "
                f"({self.channels[bad[1]].tagged_name})")
        names = [c.tagged_name for c in self.channels]
        if len(set(names)) != len(names):
            raise ValidationError("duplicate channel names in ROI matrix")

    @property
    def n_frames(self) -> int:
        return self.values.shape[0]

    @property
    def n_channels(self) -> int:
        return self.values.shape[1]

    def group_indices(self, group: RoiGroup) -> np.ndarray:
        return np.array([i for i, c in enumerate(self.channels) if c.group == group],
                        dtype=np.intp)

    def subset(self, indices: Sequence[int]) -> "RoiMatrix":
        idx = np.asarray(indices, dtype=np.intp)
        return RoiMatrix(channels=tuple(self.channels[i] for i in idx),
                         values=self.values[:, idx])

    def matches_config(self, config: RoiConfig) -> bool:
        counts: dict[RoiGroup, int] = {}
        for c in self.channels:
            counts[c.group] = counts.get(c.group, 0) + 1
        return counts == {g: n for g, n in config.group_counts.items() if n > 0}


@dataclass(eq=False)
class PpgSignal:
    """Uniformly sampled photoplethysmography trace."""

    sample_rate_hz: float
    values: np.ndarray
    quality: "QualityClass | None" = None

    def __post_init__(self):
        self.sample_rate_hz = float(self.sample_rate_hz)
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.sample_rate_hz <= 0:
            raise ValidationError("PPG sample rate must be positive")
        if self.values.ndim != 1:
            raise ValidationError("PPG values must be one-dimensional")
        if not np.all(np.isfinite(self.values)):
            raise ValidationError("PPG trace contains non-finite samples")

    @property
    def duration_s(self) -> float:
        return len(self.values) / self.sample_rate_hz

    def __len__(self) -> int:
        return len(self.values)


@dataclass(eq=False)
class HrvSeries:
    """Heart-rate variability per frame: windowed std of inter-beat intervals,
    in seconds, aligned to the TR grid."""

    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 1:
            raise ValidationError("HRV series must be one-dimensional")
        if not np.all(np.isfinite(self.values)):
            raise ValidationError("HRV series contains non-finite values")
        if np.any(self.values < 0):
            raise ValidationError("HRV values must be non-negative")

    def __len__(self) -> int:
        return len(self.values)


@dataclass(eq=False)
class BeatTimes:
    """Detected or simulated heartbeat times, seconds from scan start."""

    times_s: np.ndarray

    def __post_init__(self):
        self.times_s = np.asarray(self.times_s, dtype=np.float64)
        if self.times_s.ndim != 1:
            raise ValidationError("beat times must be one-dimensional")
        if len(self.times_s):
            if not np.all(np.isfinite(self.times_s)):
                raise ValidationError("beat times contain non-finite values")
            if np.any(self.times_s < 0):
                raise ValidationError("beat times must be non-negative")
            if np.any(np.diff(self.times_s) <= 0):
                raise ValidationError("beat times must be strictly increasing")

    def __len__(self) -> int:
        return len(self.times_s)

    def intervals(self) -> np.ndarray:
        """Inter-beat intervals, seconds."""
        return np.diff(self.times_s)


@dataclass(eq=False)
class ScanRecord:
    """One scan's bundle: ROI matrix plus optional PPG trace and HRV target."""

    scan_id: str
    subject_id: str
    tr_seconds: float
    roi: RoiMatrix
    ppg: PpgSignal | None = None
    hrv: HrvSeries | None = None

    def __post_init__(self):
        self.tr_seconds = float(self.tr_seconds)
        if not self.scan_id:
            raise ValidationError("scan_id must be non-empty")
        if self.tr_seconds <= 0:
            raise ValidationError(f"tr_seconds must be positive, got {self.tr_seconds}")
        if self.hrv is not None and len(self.hrv) != self.roi.n_frames:
            raise ValidationError(
                f"HRV length {len(self.hrv)} does not match "
                f"{self.roi.n_frames} ROI frames")

    @property
    def duration_s(self) -> float:
        return self.roi.n_frames * self.tr_seconds

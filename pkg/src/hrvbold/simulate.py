"""Synthetic paired (BOLD ROI, PPG, ground-truth HRV) scan generation.

The cardiac process is an integrate-and-fire oscillator driven by a smooth
instantaneous heart-rate trajectory (three sinusoids at staggered
timescales plus low-amplitude jitter, clipped to a physiological band).
Heart-rate variability is defined as the population standard deviation of
inter-beat intervals whose midpoints fall inside a short window centered
on each frame; the same definition is used by the measurement path in
:mod:`hrvbold.ppg`, which is what makes the simulator usable as an oracle.

BOLD channels couple to the z-scored HRV through a unit-energy
double-gamma response kernel (positive lobe peaking near 4 s, undershoot
near 12 s, truncated at 42 s) with a per-group lag. Every channel also
carries the scan's global slow-cosine drift, weighted by its group's
susceptibility (strong in gray matter, weak in white matter): a
common-mode confound that within-group averaging cannot remove, so the
lightly-contaminated white-matter channels at their longer lag genuinely
enrich the input.

All generators are pure functions of (config, seed): Philox streams only,
no global RNG state.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping

import numpy as np

from .errors import ValidationError
from .records import (BeatTimes, HrvSeries, PpgSignal, RoiConfig, RoiGroup,
                      RoiMatrix, ScanRecord, default_channels)
from .seeding import make_rng

#: Window (seconds) over which inter-beat-interval spread defines HRV.
HRV_WINDOW_S = 6.0

#: Pulse template geometry: fast rise, slow decay, unit peak.
PULSE_RISE_S = 0.15
PULSE_DECAY_S = 0.45
PULSE_PEAK_OFFSET_S = PULSE_RISE_S
PULSE_SUPPORT_S = PULSE_RISE_S + PULSE_DECAY_S

#: Gaussian noise floor of the synthetic PPG, as a fraction of the unit peak.
PPG_NOISE_STD = 0.02

#: Coupling kernel geometry (seconds).
KERNEL_PEAK_S = 4.0
KERNEL_UNDERSHOOT_S = 12.0
KERNEL_SUPPORT_S = 42.0

# Philox sub-stream tags, one per independent randomness consumer.
_STREAM_CARDIAC = 1
_STREAM_PPG_NOISE = 2
_STREAM_PPG_DEFECT = 3
_STREAM_BOLD_MIX = 4
_STREAM_BOLD_DRIFT = 5
_STREAM_BOLD_NOISE = 6

_HR_CLIP_BPM = (40.0, 180.0)
_HR_GRID_DT = 0.005


@dataclass(frozen=True)
class CardiacSimConfig:
    """Parameters of the simulated cardiac process."""

    duration_frames: int
    tr_seconds: float = 0.8
    mean_hr_bpm: float = 75.0
    hr_modulation_depth: float = 6.0
    hr_modulation_timescale_s: float = 30.0
    seed: int = 0

    def __post_init__(self):
        if self.duration_frames < 0:
            raise ValidationError("duration_frames must be >= 0")
        if self.tr_seconds <= 0:
            raise ValidationError("tr_seconds must be positive")
        if not 50.0 <= self.mean_hr_bpm <= 150.0:
            raise ValidationError("mean_hr_bpm must lie in [50, 150]")
        if self.hr_modulation_depth < 0:
            raise ValidationError("hr_modulation_depth must be >= 0")
        if self.hr_modulation_timescale_s <= 0:
            raise ValidationError("hr_modulation_timescale_s must be positive")

    @property
    def duration_s(self) -> float:
        return self.duration_frames * self.tr_seconds


class DefectKind(str, Enum):
    NONE = "None"
    CORRECTABLE_SPIKES = "CorrectableSpikes"
    UNCORRECTABLE_SPIKES = "UncorrectableSpikes"
    CLIPPING = "Clipping"
    GAPS = "Gaps"
    LOW_AMPLITUDE = "LowAmplitude"
    NO_RECORDING = "NoRecording"


@dataclass(frozen=True)
class DefectSpec:
    """PPG defect to inject. Only the parameters of `kind` are used."""

    kind: DefectKind = DefectKind.NONE
    spike_count: int = 5
    spike_fraction: float = 0.0   # overrides spike_count when > 0
    spike_height_mad: float = 20.0
    clip_fraction: float = 0.15
    gap_fraction: float = 0.2
    n_gaps: int = 1
    amplitude_scale: float = 0.02

    def __post_init__(self):
        if not 0.0 <= self.gap_fraction < 1.0:
            raise ValidationError("gap_fraction must lie in [0, 1)")
        if not 0.0 <= self.clip_fraction < 1.0:
            raise ValidationError("clip_fraction must lie in [0, 1)")
        if self.amplitude_scale < 0:
            raise ValidationError("amplitude_scale must be >= 0")


@dataclass(frozen=True)
class BoldSimConfig:
    """HRV-to-BOLD coupling model parameters.

    ``seed`` drives the scan-specific realizations (noise, drift phase);
    ``mixing_seed`` drives the per-channel coupling weights, which are a
    property of the parcellation and therefore held fixed across scans
    unless the caller varies it.
    """

    roi_config: RoiConfig
    snr: float = 1.0
    coupling_gain_by_group: Mapping[RoiGroup, float] = field(
        default_factory=lambda: dict(DEFAULT_COUPLING_GAINS))
    coupling_lag_s_by_group: Mapping[RoiGroup, float] = field(
        default_factory=lambda: dict(DEFAULT_COUPLING_LAGS))
    drift_amplitude: float = 0.3
    seed: int = 0
    mixing_seed: int = 7

    def __post_init__(self):
        if self.snr <= 0:
            raise ValidationError("snr must be positive")
        if self.drift_amplitude < 0:
            raise ValidationError("drift_amplitude must be >= 0")
        for group, count in self.roi_config.group_counts.items():
            if count == 0:
                continue
            if group not in self.coupling_gain_by_group:
                raise ValidationError(f"no coupling gain for group {group.value}")
            if group not in self.coupling_lag_s_by_group:
                raise ValidationError(f"no coupling lag for group {group.value}")
            if self.coupling_lag_s_by_group[group] < 0:
                raise ValidationError("coupling lags must be >= 0")


DEFAULT_COUPLING_GAINS: dict[RoiGroup, float] = {
    RoiGroup.CORTICAL: 1.0,
    RoiGroup.SUBCORTICAL: 0.8,
    RoiGroup.WHITE_MATTER: 0.9,
    RoiGroup.STRUCTURAL: 0.7,
}

# White matter responds later than gray matter; staggered lags give the
# ROI-group ablations genuinely complementary signal.
DEFAULT_COUPLING_LAGS: dict[RoiGroup, float] = {
    RoiGroup.CORTICAL: 3.0,
    RoiGroup.SUBCORTICAL: 3.0,
    RoiGroup.WHITE_MATTER: 7.0,
    RoiGroup.STRUCTURAL: 4.0,
}

# Susceptibility of each group to the scan's global slow drift. Vascular
# drift rides mostly on gray matter; white matter sees far less of it,
# which is what makes those channels valuable for confound removal.
DRIFT_WEIGHT_BY_GROUP: dict[RoiGroup, float] = {
    RoiGroup.CORTICAL: 1.0,
    RoiGroup.SUBCORTICAL: 1.0,
    RoiGroup.WHITE_MATTER: 0.1,
    RoiGroup.STRUCTURAL: 0.8,
}


def gen_beat_times(cfg: CardiacSimConfig) -> BeatTimes:
    """Integrate-and-fire beat generation over a smooth HR trajectory.

    The instantaneous rate is the configured mean plus three random-phase
    sinusoids (periods 0.5x, 1x, 2x the modulation timescale, amplitudes
    summing to the modulation depth) plus interpolated Gaussian jitter at
    5% of the depth, clipped to [40, 180] bpm. A beat fires each time the
    integrated rate crosses the next whole cycle; the first beat is at 0.
    """
    duration = cfg.duration_s
    if duration <= 0:
        return BeatTimes(times_s=np.empty(0))

    rng = make_rng(cfg.seed, _STREAM_CARDIAC)
    t = np.arange(0.0, duration + _HR_GRID_DT, _HR_GRID_DT)
    t = t[t <= duration + 1e-12]

    hr = np.full_like(t, cfg.mean_hr_bpm)
    periods = cfg.hr_modulation_timescale_s * np.array([0.5, 1.0, 2.0])
    amps = cfg.hr_modulation_depth * np.array([0.25, 0.5, 0.25])
    phases = rng.uniform(0.0, 2.0 * np.pi, size=3)
    for period, amp, phase in zip(periods, amps, phases):
        hr += amp * np.sin(2.0 * np.pi * t / period + phase)
    # jitter knots at 1 s spacing, linearly interpolated onto the fine grid
    n_knots = max(2, int(np.ceil(duration)) + 1)
    knots = rng.normal(0.0, 0.05 * cfg.hr_modulation_depth, size=n_knots)
    hr += np.interp(t, np.linspace(0.0, duration, n_knots), knots)
    hr = np.clip(hr, *_HR_CLIP_BPM)

    rate_hz = hr / 60.0
    phase = np.empty_like(t)
    phase[0] = 0.0
    np.cumsum(0.5 * (rate_hz[1:] + rate_hz[:-1]) * np.diff(t), out=phase[1:])

    n_beats = int(np.floor(phase[-1])) + 1
    ks = np.arange(n_beats, dtype=np.float64)
    idx = np.searchsorted(phase, ks, side="left")
    times = np.empty(n_beats)
    times[0] = 0.0
    j = idx[1:]
    frac = (ks[1:] - phase[j - 1]) / (phase[j] - phase[j - 1])
    times[1:] = t[j - 1] + frac * (t[j] - t[j - 1])
    return BeatTimes(times_s=times)


def hrv_from_beats(beats: BeatTimes, tr_seconds: float, n_frames: int,
                   window_s: float = HRV_WINDOW_S) -> HrvSeries:
    """Frame-aligned HRV: population std of the inter-beat intervals whose
    midpoints fall within ``window_s`` centered on each frame time.

    Frames with fewer than two qualifying intervals inherit the nearest
    computable frame's value (ties resolve toward the earlier frame).
    """
    if window_s <= 0:
        raise ValidationError("window_s must be positive")
    if n_frames < 1:
        raise ValidationError("n_frames must be >= 1")
    if len(beats) < 3:
        raise ValidationError(f"insufficient beats: need >= 3, got {len(beats)}")

    ibis = beats.intervals()
    mids = 0.5 * (beats.times_s[:-1] + beats.times_s[1:])
    center = float(np.mean(ibis))
    dev = ibis - center
    csum = np.concatenate([[0.0], np.cumsum(dev)])
    csum2 = np.concatenate([[0.0], np.cumsum(dev * dev)])

    frame_times = np.arange(n_frames) * tr_seconds
    lo = np.searchsorted(mids, frame_times - window_s / 2.0, side="left")
    hi = np.searchsorted(mids, frame_times + window_s / 2.0, side="right")
    counts = hi - lo

    values = np.zeros(n_frames)
    computable = counts >= 2
    if not np.any(computable):
        raise ValidationError("no frame has two inter-beat intervals in its window")
    n = counts[computable].astype(np.float64)
    s1 = csum[hi[computable]] - csum[lo[computable]]
    s2 = csum2[hi[computable]] - csum2[lo[computable]]
    var = np.maximum(s2 / n - (s1 / n) ** 2, 0.0)
    values[computable] = np.sqrt(var)

    if not np.all(computable):
        good = np.flatnonzero(computable)
        bad = np.flatnonzero(~computable)
        pos = np.searchsorted(good, bad)
        left = good[np.clip(pos - 1, 0, len(good) - 1)]
        right = good[np.clip(pos, 0, len(good) - 1)]
        nearest = np.where(bad - left <= right - bad, left, right)
        values[bad] = values[nearest]
    return HrvSeries(values=values)


def _pulse_template(offsets: np.ndarray) -> np.ndarray:
    """Asymmetric unit-peak pulse: half-cosine rise then half-cosine decay."""
    wave = np.zeros_like(offsets)
    rising = (offsets >= 0) & (offsets < PULSE_RISE_S)
    wave[rising] = 0.5 - 0.5 * np.cos(np.pi * offsets[rising] / PULSE_RISE_S)
    falling = (offsets >= PULSE_RISE_S) & (offsets <= PULSE_SUPPORT_S)
    wave[falling] = 0.5 + 0.5 * np.cos(
        np.pi * (offsets[falling] - PULSE_RISE_S) / PULSE_DECAY_S)
    return wave


def synth_ppg(beats: BeatTimes, sample_rate_hz: float, duration_s: float,
              defect: DefectSpec = DefectSpec(), seed: int = 0) -> PpgSignal:
    """Superimposed pulse templates plus noise, then the requested defect.

    The clean waveform and the defect draw from independent sub-streams of
    the same seed, so the pre-injection signal of a defective trace is
    exactly the defect-free trace from the same call parameters.
    """
    if sample_rate_hz < 50:
        raise ValidationError("sample_rate_hz must be >= 50")
    n = int(round(duration_s * sample_rate_hz))
    values = np.zeros(n)
    if n == 0:
        return PpgSignal(sample_rate_hz=sample_rate_hz, values=values)

    for beat in beats.times_s:
        i0 = max(0, int(np.ceil(beat * sample_rate_hz)))
        i1 = min(n - 1, int(np.floor((beat + PULSE_SUPPORT_S) * sample_rate_hz)))
        if i1 < i0:
            continue
        offs = np.arange(i0, i1 + 1) / sample_rate_hz - beat
        values[i0:i1 + 1] += _pulse_template(offs)

    noise_rng = make_rng(seed, _STREAM_PPG_NOISE)
    values += noise_rng.normal(0.0, PPG_NOISE_STD, size=n)
    values = _apply_defect(values, defect, make_rng(seed, _STREAM_PPG_DEFECT))
    return PpgSignal(sample_rate_hz=sample_rate_hz, values=values)


def _apply_defect(values: np.ndarray, defect: DefectSpec,
                  rng: np.random.Generator) -> np.ndarray:
    kind = defect.kind
    n = len(values)
    if kind is DefectKind.NONE:
        return values
    if kind is DefectKind.NO_RECORDING:
        return np.zeros_like(values)
    if kind is DefectKind.LOW_AMPLITUDE:
        return values * defect.amplitude_scale
    if kind in (DefectKind.CORRECTABLE_SPIKES, DefectKind.UNCORRECTABLE_SPIKES):
        count = defect.spike_count
        if defect.spike_fraction > 0:
            count = int(round(defect.spike_fraction * n))
        count = min(count, n)
        mad = float(np.median(np.abs(values - np.median(values))))
        positions = rng.choice(n, size=count, replace=False)
        signs = rng.choice([-1.0, 1.0], size=count)
        heights = defect.spike_height_mad * rng.uniform(0.7, 1.5, size=count)
        out = values.copy()
        out[positions] = np.median(values) + signs * heights * 1.4826 * mad
        return out
    if kind is DefectKind.CLIPPING:
        ceiling = np.quantile(values, 1.0 - defect.clip_fraction)
        return np.minimum(values, ceiling)
    if kind is DefectKind.GAPS:
        out = values.copy()
        per_gap = int(round(defect.gap_fraction * n / max(1, defect.n_gaps)))
        if per_gap == 0:
            return out
        for _ in range(defect.n_gaps):
            start = int(rng.integers(0, max(1, n - per_gap)))
            out[start:start + per_gap] = out[start]
        return out
    raise ValidationError(f"unhandled defect kind {kind}")


def cardiac_response_kernel(tr_seconds: float) -> np.ndarray:
    """Unit-energy double-gamma coupling kernel sampled on the TR grid.

    Positive lobe peaks near 4 s, undershoot near 12 s, support truncated
    at 42 s. Normalized so the discrete sum of squares is exactly 1.
    """
    if tr_seconds <= 0:
        raise ValidationError("tr_seconds must be positive")
    t = np.arange(0.0, KERNEL_SUPPORT_S + tr_seconds, tr_seconds)
    t = t[t <= KERNEL_SUPPORT_S]
    a1, theta1 = 6.0, KERNEL_PEAK_S / 5.0
    a2, theta2 = 12.0, KERNEL_UNDERSHOOT_S / 11.0
    with np.errstate(divide="ignore"):
        lobe = np.where(t > 0, t ** (a1 - 1) * np.exp(-t / theta1), 0.0)
        under = np.where(t > 0, t ** (a2 - 1) * np.exp(-t / theta2), 0.0)
    lobe /= lobe.max()
    under /= under.max()
    kernel = lobe - under / 6.0
    return kernel / np.sqrt(np.sum(kernel ** 2))


def synth_bold(hrv: HrvSeries, cfg: BoldSimConfig, tr_seconds: float) -> RoiMatrix:
    """Couple z-scored HRV into every channel of the configured ROI set.

    channel = gain_g * (1 + u_i) * (zscore(hrv) (*) kernel)(t - lag_g)
              + w_g * global drift + white noise with std(coupled)/snr.

    u_i ~ U(-0.5, 0.5) is the per-channel mixing weight; when a group's
    gain is 0 the channel is pure noise (unit-scaled noise floor). The
    drift is one slow cosine per scan scaled by the group's susceptibility
    w_g, so no amount of within-group averaging removes it.
    """
    n = len(hrv)
    channels = default_channels(cfg.roi_config)
    kernel = cardiac_response_kernel(tr_seconds)

    std = float(np.std(hrv.values))
    if std > 1e-12:
        z = (hrv.values - np.mean(hrv.values)) / std
    else:
        z = np.zeros(n)
    coupled_base = np.convolve(z, kernel)[:n]

    mix_rng = make_rng(cfg.mixing_seed, _STREAM_BOLD_MIX)
    drift_rng = make_rng(cfg.seed, _STREAM_BOLD_DRIFT)
    noise_rng = make_rng(cfg.seed, _STREAM_BOLD_NOISE)

    duration = n * tr_seconds
    frame_t = np.arange(n) * tr_seconds
    # One global slow-cosine nuisance per scan; groups differ in
    # susceptibility. Its period overlaps the band of the coupled signal,
    # so it cannot be filtered out temporally, only by contrasting groups
    # with different susceptibility.
    period = drift_rng.uniform(duration / 8.0, duration / 2.0) \
        if duration > 0 else 1.0
    phase = drift_rng.uniform(0.0, 2.0 * np.pi)
    global_drift = cfg.drift_amplitude * np.cos(
        2.0 * np.pi * frame_t / period + phase)

    values = np.empty((n, len(channels)))
    col = 0
    for group in RoiGroup:
        count = cfg.roi_config.group_counts.get(group, 0)
        if count == 0:
            continue
        gain = cfg.coupling_gain_by_group[group]
        lag_frames = int(round(cfg.coupling_lag_s_by_group[group] / tr_seconds))
        lagged = np.zeros(n)
        if lag_frames < n:
            lagged[lag_frames:] = coupled_base[:n - lag_frames]

        drift = DRIFT_WEIGHT_BY_GROUP[group] * global_drift

        mixes = mix_rng.uniform(-0.5, 0.5, size=count)
        for u in mixes:
            coupled = gain * (1.0 + u) * lagged
            scale = float(np.std(coupled))
            if scale <= 1e-12:
                scale = 1.0
            noise = noise_rng.normal(0.0, scale / cfg.snr, size=n)
            values[:, col] = coupled + drift + noise
            col += 1
    return RoiMatrix(channels=channels, values=values)


def simulate_scan(cardiac: CardiacSimConfig, bold: BoldSimConfig,
                  defect: DefectSpec = DefectSpec(), scan_id: str = "scan-0000",
                  subject_id: str = "subj-0000",
                  ppg_sample_rate_hz: float = 100.0) -> ScanRecord:
    """Full synthetic scan: beats -> ground-truth HRV -> PPG + BOLD bundle.

    The record's ``hrv`` field is the ground truth derived from the true
    beat times; defects affect only the recorded PPG trace.
    """
    beats = gen_beat_times(cardiac)
    hrv = hrv_from_beats(beats, cardiac.tr_seconds, cardiac.duration_frames)
    ppg = synth_ppg(beats, ppg_sample_rate_hz, cardiac.duration_s,
                    defect=defect, seed=cardiac.seed)
    roi = synth_bold(hrv, bold, cardiac.tr_seconds)
    return ScanRecord(scan_id=scan_id, subject_id=subject_id,
                      tr_seconds=cardiac.tr_seconds, roi=roi, ppg=ppg, hrv=hrv)

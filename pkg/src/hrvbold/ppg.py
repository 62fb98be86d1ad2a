"""PPG quality triage, spike correction, beat detection, HRV extraction.

Quality triage is a decision cascade in worst-defect-first order:
NoRecording, Gaps, Clipping, LowAmplitude, spike classes, Clean. All
statistics are robust (median/MAD, percentile amplitudes) because spikes
would corrupt moment-based thresholds.

Spikes are scored by the robust z of the centered second difference
rather than of the raw samples: a sparse bradycardic pulse train has a
small sample MAD and its genuine pulse peaks would otherwise out-score
true artifacts, while the second difference is blind to smooth pulses
and enormous at single-sample impulses.

Beat detection band-passes to the cardiac band, estimates the dominant
beat period from the autocorrelation, picks prominence-gated candidate
maxima, and then refines each candidate with a matched filter built from
the scan's own average beat waveform (sub-sample vertex by parabolic
interpolation). The refinement removes the systematic shift that any
smoothing-based argmax suffers on an asymmetric pulse.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import signal as sps

from .errors import DataError, ValidationError
from .records import BeatTimes, HrvSeries, PpgSignal
from .simulate import HRV_WINDOW_S, hrv_from_beats

from enum import Enum

#: Cardiac band in Hz (30 to 180 bpm, inclusive of pediatric rates).
CARDIAC_BAND_HZ = (0.5, 3.0)

#: Lag range searched for the dominant beat period, seconds.
PERIOD_RANGE_S = (1.0 / CARDIAC_BAND_HZ[1], 1.0 / CARDIAC_BAND_HZ[0])

#: Minimum normalized autocorrelation for a credible cardiac rhythm.
MIN_AUTOCORR = 0.2

#: Constant runs shorter than this do not count as recording gaps
#: (clipping plateaus produce sub-second constant runs).
GAP_MIN_RUN_S = 0.25

#: Expected robust amplitude (p95 - p5) of a healthy trace in device
#: units; the simulator's pulse template has unit peak. cmd_qc replaces
#: this with the corpus median robust amplitude.
REFERENCE_AMPLITUDE = 1.0

_MATCH_HALF_FRAC = 0.30   # matched-filter segment half-width, x period
_MATCH_SHIFT_FRAC = 0.12  # matched-filter search half-range, x period


class QualityLabel(str, Enum):
    CLEAN = "Clean"
    CORRECTABLE_SPIKES = "CorrectableSpikes"
    UNCORRECTABLE_SPIKES = "UncorrectableSpikes"
    CLIPPING = "Clipping"
    GAPS = "Gaps"
    LOW_AMPLITUDE = "LowAmplitude"
    NO_RECORDING = "NoRecording"


#: Labels kept for model training (spike correction rescues the second).
USABLE_LABELS = (QualityLabel.CLEAN, QualityLabel.CORRECTABLE_SPIKES)


@dataclass(frozen=True)
class QualityClass:
    """Triage outcome: exactly one label plus the measured diagnostics."""

    label: QualityLabel
    diagnostics: dict[str, float] = field(default_factory=dict)


@dataclass(frozen=True)
class QcThresholds:
    spike_z: float = 6.0
    max_correctable_spike_fraction: float = 0.02
    clip_fraction: float = 0.05
    gap_fraction: float = 0.05
    min_amplitude_ratio: float = 0.1
    zero_fraction_for_norec: float = 0.98

    def __post_init__(self):
        if self.spike_z <= 0:
            raise ValidationError("spike_z must be positive")
        for name in ("max_correctable_spike_fraction", "clip_fraction",
                     "gap_fraction", "min_amplitude_ratio",
                     "zero_fraction_for_norec"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ValidationError(f"{name} must lie in (0, 1), got {v}")


def _second_difference(values: np.ndarray) -> np.ndarray:
    d = np.zeros_like(values)
    n = len(values)
    if n >= 3:
        d[1:-1] = values[1:-1] - 0.5 * (values[:-2] + values[2:])
        d[0] = values[0] - values[1]
        d[-1] = values[-1] - values[-2]
    elif n == 2:
        d[0] = values[0] - values[1]
        d[1] = values[1] - values[0]
    return d


def spike_zscores(values: np.ndarray) -> np.ndarray:
    """Robust z of the centered second difference (median/MAD scale)."""
    d = _second_difference(values)
    sigma = 1.4826 * np.median(np.abs(d - np.median(d)))
    if sigma <= 0:
        return np.zeros_like(values)
    return np.abs(d) / sigma


def _constant_runs(values: np.ndarray) -> np.ndarray:
    """Lengths of maximal runs of exactly-equal consecutive samples."""
    if len(values) == 0:
        return np.empty(0, dtype=np.intp)
    change = np.flatnonzero(np.diff(values) != 0)
    starts = np.concatenate([[0], change + 1])
    return np.diff(np.concatenate([starts, [len(values)]]))


def classify_quality(ppg: PpgSignal, th: QcThresholds = QcThresholds(),
                     reference_amplitude: float = REFERENCE_AMPLITUDE) -> QualityClass:
    """Assign exactly one quality label; first matching rule wins.

    ``reference_amplitude`` is the robust amplitude a healthy trace is
    expected to show in the recording's units; pass a corpus-derived
    value when classifying a batch.
    """
    v = ppg.values
    n = len(v)
    if n == 0:
        return QualityClass(QualityLabel.NO_RECORDING,
                            {"spike_fraction": 1.0, "clip_fraction": 1.0,
                             "gap_fraction": 1.0, "amplitude_ratio": 1.0,
                             "zero_fraction": 1.0})

    zero_fraction = float(np.mean(v == 0.0))
    constant_fraction = float(np.mean(v == np.median(v)))
    norec_fraction = max(zero_fraction, constant_fraction)

    runs = _constant_runs(v)
    min_run = max(2, int(round(GAP_MIN_RUN_S * ppg.sample_rate_hz)))
    gap_runs = runs[runs >= min_run]
    longest_gap = float(gap_runs.max() / n) if len(gap_runs) else 0.0
    gap_coverage = float(gap_runs.sum() / n)

    span = float(v.max() - v.min())
    if span > 0:
        tol = 1e-3 * span
        clip_measured = max(float(np.mean(v >= v.max() - tol)),
                            float(np.mean(v <= v.min() + tol)))
    else:
        clip_measured = 1.0

    robust_amp = float(np.percentile(v, 95) - np.percentile(v, 5))
    amplitude_ratio = robust_amp / reference_amplitude

    z = spike_zscores(v)
    spike_fraction = float(np.mean(z >= th.spike_z))

    diagnostics = {
        "spike_fraction": spike_fraction,
        "clip_fraction": clip_measured,
        "gap_fraction": gap_coverage,
        "amplitude_ratio": amplitude_ratio,
        "zero_fraction": zero_fraction,
    }

    if norec_fraction >= th.zero_fraction_for_norec:
        label = QualityLabel.NO_RECORDING
    elif longest_gap > th.gap_fraction or gap_coverage >= th.gap_fraction:
        label = QualityLabel.GAPS
    elif clip_measured >= th.clip_fraction:
        label = QualityLabel.CLIPPING
    elif amplitude_ratio < th.min_amplitude_ratio:
        label = QualityLabel.LOW_AMPLITUDE
    elif spike_fraction > 0:
        if spike_fraction <= th.max_correctable_spike_fraction:
            label = QualityLabel.CORRECTABLE_SPIKES
        else:
            label = QualityLabel.UNCORRECTABLE_SPIKES
    else:
        label = QualityLabel.CLEAN
    return QualityClass(label, diagnostics)


def correct_spikes(ppg: PpgSignal, th: QcThresholds = QcThresholds()) -> PpgSignal:
    """Replace spike samples (mask dilated 2 samples each side) by linear
    interpolation between the nearest non-spike neighbors.

    Clean input passes through unchanged; edge spikes take the nearest
    valid value (no extrapolation). Idempotent on its own output.
    """
    v = ppg.values
    mask = spike_zscores(v) >= th.spike_z
    if not np.any(mask):
        return PpgSignal(sample_rate_hz=ppg.sample_rate_hz, values=v.copy(),
                         quality=ppg.quality)
    dilated = np.convolve(mask.astype(np.int8), np.ones(5, dtype=np.int8),
                          mode="same") > 0
    good = np.flatnonzero(~dilated)
    out = v.copy()
    if len(good) == 0:
        return PpgSignal(sample_rate_hz=ppg.sample_rate_hz, values=out,
                         quality=ppg.quality)
    bad = np.flatnonzero(dilated)
    out[bad] = np.interp(bad, good, v[good])
    return PpgSignal(sample_rate_hz=ppg.sample_rate_hz, values=out, quality=None)


def _bandpassed(values: np.ndarray, fs: float) -> np.ndarray:
    lo, hi = CARDIAC_BAND_HZ
    hi = min(hi, 0.45 * fs)
    sos = sps.butter(1, [lo, hi], btype="bandpass", fs=fs, output="sos")
    return sps.sosfiltfilt(sos, values)


def _autocorrelation(x: np.ndarray) -> np.ndarray:
    """Normalized linear autocorrelation at non-negative lags (FFT-based)."""
    n = len(x)
    nfft = sps.next_fast_len(2 * n)
    spectrum = np.fft.rfft(x, nfft)
    ac = np.fft.irfft(spectrum * np.conj(spectrum), nfft)[:n]
    return ac / ac[0]


def _estimate_period(filtered: np.ndarray, fs: float) -> float:
    """Dominant beat period from the autocorrelation of the filtered trace.

    The smallest local maximum reaching 40% of the strongest one wins, so
    an alternating-interval rhythm reports the beat spacing rather than
    the full pattern period.
    """
    x = filtered - filtered.mean()
    denom = float(np.dot(x, x))
    if denom <= 0:
        raise DataError("no cardiac rhythm: constant signal")
    ac = _autocorrelation(x)
    lo = int(np.floor(PERIOD_RANGE_S[0] * fs))
    hi = min(int(np.ceil(PERIOD_RANGE_S[1] * fs)), len(ac) - 1)
    if hi <= lo + 1:
        raise DataError("no cardiac rhythm: signal too short")
    segment = ac[lo:hi + 1]
    peak = float(segment.max())
    if peak < MIN_AUTOCORR:
        raise DataError(f"no cardiac rhythm: autocorrelation peak "
                        f"{peak:.3f} < {MIN_AUTOCORR}")
    local, _ = sps.find_peaks(segment)
    strong = local[segment[local] >= 0.4 * peak]
    best = strong[0] if len(strong) else int(np.argmax(segment))
    return (best + lo) / fs


def _parabolic_offset(y0: float, y1: float, y2: float) -> float:
    den = y0 - 2.0 * y1 + y2
    if den >= 0:
        return 0.0
    return float(np.clip(0.5 * (y0 - y2) / den, -1.0, 1.0))


def _refine_peaks(values: np.ndarray, candidates: np.ndarray, period: float,
                  fs: float) -> np.ndarray:
    """Matched-filter refinement against the scan's average beat waveform."""
    half = max(3, int(round(_MATCH_HALF_FRAC * period * fs)))
    shift = max(2, int(round(_MATCH_SHIFT_FRAC * period * fs)))
    base = values - np.median(values)
    pad = np.concatenate([np.zeros(half + shift), base, np.zeros(half + shift)])
    off0 = half + shift

    segments = np.stack([pad[off0 + i - half: off0 + i + half + 1]
                         for i in candidates])
    wave = segments.mean(axis=0)
    jw = int(np.argmax(wave))
    sub = _parabolic_offset(*wave[max(0, jw - 1):jw + 2]) if 0 < jw < len(wave) - 1 else 0.0
    anchor = (jw + sub) - half

    times = np.empty(len(candidates))
    shifts = np.arange(-shift, shift + 1)
    for row, i in enumerate(candidates):
        c0 = off0 + i
        corr = np.array([float(np.dot(pad[c0 - half + d: c0 + half + 1 + d], wave))
                         for d in shifts])
        k = int(np.argmax(corr))
        sub = _parabolic_offset(*corr[k - 1:k + 2]) if 0 < k < len(corr) - 1 else 0.0
        times[row] = (i + (k + sub) - shift + anchor) / fs
    return times


def detect_peaks(ppg: PpgSignal) -> BeatTimes:
    """Locate beat times in a clean or spike-corrected PPG trace.

    Raises DataError("no cardiac rhythm ...") when the autocorrelation in
    the cardiac lag band never reaches 0.2 (e.g. white noise input).
    """
    fs = ppg.sample_rate_hz
    v = ppg.values
    if len(v) < int(fs):
        raise DataError("no cardiac rhythm: signal shorter than one second")
    filtered = _bandpassed(v, fs)
    period = _estimate_period(filtered, fs)

    robust_amp = float(np.percentile(filtered, 95) - np.percentile(filtered, 5))
    candidates, _ = sps.find_peaks(filtered,
                                   distance=max(1, int(0.6 * period * fs)),
                                   prominence=0.3 * robust_amp)
    if len(candidates) == 0:
        raise DataError("no cardiac rhythm: no prominent maxima")

    times = np.sort(_refine_peaks(v, candidates, period, fs))
    keep = np.concatenate([[True], np.diff(times) > 0.3 * period])
    times = times[keep]
    duration = len(v) / fs
    times = times[(times >= 0.0) & (times <= duration)]
    if len(times) == 0:
        raise DataError("no cardiac rhythm: no refined peaks in range")
    return BeatTimes(times_s=times)


def extract_hrv(ppg: PpgSignal, tr_seconds: float, n_frames: int,
                window_s: float = HRV_WINDOW_S) -> HrvSeries:
    """Measured HRV target: windowed IBI spread of the detected beats.

    Identical definition to the simulator's ground truth, so the two
    paths agree up to peak-detection jitter.
    """
    return hrv_from_beats(detect_peaks(ppg), tr_seconds, n_frames, window_s)

"""On-disk scan format: one directory per scan.

Layout::

    <scan_id>/
        roi.csv    header = tagged channel names, one row per frame
        ppg.csv    single column, present only when the scan has a PPG trace
        hrv.csv    single column, present only when the scan has an HRV target
        meta.json  ids, TR, PPG sample rate, presence flags, quality annotation

Values are printed with 17 significant digits so a write/read round trip
reproduces every float64 bit-exactly.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import DataError, ValidationError
from .records import HrvSeries, PpgSignal, RoiChannel, RoiMatrix, ScanRecord

ROI_FILE = "roi.csv"
PPG_FILE = "ppg.csv"
HRV_FILE = "hrv.csv"
META_FILE = "meta.json"

_FLOAT_FMT = "%.17g"


def write_scan(record: ScanRecord, path: str | Path) -> None:
    """Write a scan directory in the layout read_scan consumes.

    The record is re-validated first so a mutated-invalid record is
    rejected before any file is touched.
    """
    record = ScanRecord(scan_id=record.scan_id, subject_id=record.subject_id,
                        tr_seconds=record.tr_seconds, roi=record.roi,
                        ppg=record.ppg, hrv=record.hrv)
    path = Path(path)
    try:
        path.mkdir(parents=True, exist_ok=True)
        header = ",".join(c.tagged_name for c in record.roi.channels)
        np.savetxt(path / ROI_FILE, record.roi.values, fmt=_FLOAT_FMT,
                   delimiter=",", header=header, comments="")
        if record.ppg is not None:
            np.savetxt(path / PPG_FILE, record.ppg.values, fmt=_FLOAT_FMT,
                       header="ppg", comments="")
        if record.hrv is not None:
            np.savetxt(path / HRV_FILE, record.hrv.values, fmt=_FLOAT_FMT,
                       header="hrv", comments="")
        meta = {
            "scan_id": record.scan_id,
            "subject_id": record.subject_id,
            "tr_seconds": record.tr_seconds,
            "ppg_sample_rate_hz": record.ppg.sample_rate_hz if record.ppg else None,
            "ppg_present": record.ppg is not None,
            "hrv_present": record.hrv is not None,
            "ppg_quality": _quality_to_json(record.ppg),
        }
        with open(path / META_FILE, "w") as fh:
            json.dump(meta, fh, indent=2)
            fh.write("\n")
    except OSError as exc:
        raise DataError(f"cannot write scan directory {path}: {exc}") from exc


def read_scan(path: str | Path) -> ScanRecord:
    """Load and validate one scan directory."""
    path = Path(path)
    meta_path = path / META_FILE
    if not meta_path.is_file():
        raise DataError(f"sidecar not found: {meta_path}")
    try:
        with open(meta_path) as fh:
            meta = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot parse sidecar {meta_path}: {exc}") from exc

    try:
        roi = _read_roi(path / ROI_FILE)
        ppg = None
        if meta.get("ppg_present"):
            rate = meta.get("ppg_sample_rate_hz")
            if rate is None:
                raise DataError(f"{meta_path}: ppg_present but no ppg_sample_rate_hz")
            ppg = PpgSignal(sample_rate_hz=rate,
                            values=_read_column(path / PPG_FILE),
                            quality=_quality_from_json(meta.get("ppg_quality")))
        hrv = None
        if meta.get("hrv_present"):
            hrv = HrvSeries(values=_read_column(path / HRV_FILE))
        return ScanRecord(scan_id=str(meta["scan_id"]),
                          subject_id=str(meta.get("subject_id", "")),
                          tr_seconds=meta["tr_seconds"],
                          roi=roi, ppg=ppg, hrv=hrv)
    except KeyError as exc:
        raise DataError(f"{meta_path}: missing key {exc}") from exc
    except (TypeError, ValidationError) as exc:
        raise DataError(f"invalid scan data in {path}: {exc}") from exc


def _read_roi(roi_path: Path) -> RoiMatrix:
    if not roi_path.is_file():
        raise DataError(f"missing file: {roi_path}")
    with open(roi_path) as fh:
        header = fh.readline().strip()
        if not header:
            raise DataError(f"{roi_path}: empty header row")
        channels = tuple(RoiChannel.from_tagged(tok) for tok in header.split(","))
        try:
            values = np.loadtxt(fh, delimiter=",", ndmin=2)
        except ValueError as exc:
            raise DataError(f"{roi_path}: malformed CSV body: {exc}") from exc
    if values.size == 0:
        values = values.reshape(0, len(channels))
    if values.shape[1] != len(channels):
        raise DataError(f"{roi_path}: {values.shape[1]} value columns do not match "
                        f"{len(channels)} header channels")
    return RoiMatrix(channels=channels, values=values)


def _read_column(path: Path) -> np.ndarray:
    if not path.is_file():
        raise DataError(f"missing file: {path}")
    try:
        values = np.loadtxt(path, skiprows=1, ndmin=1)
    except ValueError as exc:
        raise DataError(f"{path}: malformed CSV body: {exc}") from exc
    return values


def _quality_to_json(ppg: PpgSignal | None):
    if ppg is None or ppg.quality is None:
        return None
    return {"label": ppg.quality.label.value,
            "diagnostics": {k: float(v) for k, v in ppg.quality.diagnostics.items()}}


def _quality_from_json(blob):
    if blob is None:
        return None
    from .ppg import QualityClass, QualityLabel

    return QualityClass(label=QualityLabel(blob["label"]),
                        diagnostics=dict(blob.get("diagnostics", {})))


def list_scan_dirs(root: str | Path) -> list[Path]:
    """All scan directories under a data root, sorted for determinism."""
    root = Path(root)
    if not root.is_dir():
        raise DataError(f"data root {root} is not a directory")
    return sorted(p for p in root.iterdir() if (p / META_FILE).is_file())

"""End-to-end pipeline: simulate, triage, window, cross-validate, compare, report.

Every stage is a pure function of (ExperimentConfig, master seed): scan
seeds are master_seed + index, and every other random decision (defect
shuffling, fold dealing, validation carving, model init, batch order,
channel subsampling) draws from Philox streams keyed by the master seed
and a stage tag. Reports are byte-identical across reruns; wall-clock
timings go to a separate timing file so they never break that.
"""

from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import __version__
from .errors import DataError, ValidationError
from .metrics import (ConfigComparison, ScanEvaluation, compare_configs,
                      evaluate_scan, variability_accuracy_analysis)
from .network import (ModelConfig, TrainHyper, predict_scan, save_checkpoint,
                      train)
from .ppg import (QcThresholds, QualityLabel, USABLE_LABELS, classify_quality,
                  correct_spikes, extract_hrv)
from .records import (HrvSeries, PpgSignal, RoiConfigLabel, RoiGroup,
                      ScanRecord, custom_roi_config, make_roi_config)
from .scanio import list_scan_dirs, read_scan, write_scan
from .seeding import make_rng
from .simulate import (BoldSimConfig, CardiacSimConfig, DefectKind, DefectSpec,
                       simulate_scan)
from .windows import (WindowCache, WindowSpec, assign_folds, apply_normalizer,
                      build_windows, fit_normalizer, stack_inputs)

logger = logging.getLogger(__name__)

CORRECTED_PPG_FILE = "ppg_corrected.csv"

# stage tags for seed derivation
_STAGE_CARDIAC_PARAMS = 90
_STAGE_DEFECT_SHUFFLE = 91
_STAGE_VAL_CARVE = 60
_STAGE_MODEL_INIT = 70
_STAGE_TRAIN_SHUFFLE = 71
_STAGE_CHANNEL_SUBSET = 80


def derive_seed(master: int, stage: int, index: int = 0) -> int:
    """Stable 31-bit seed fan-out for nested components."""
    return int(make_rng(master, stage, index).integers(2 ** 31))


@dataclass(frozen=True)
class SimProfile:
    """Synthetic corpus shape: per-scan cardiac parameters are drawn
    uniformly from the configured ranges, seeded by the master seed."""

    n_scans: int = 40
    duration_frames: int = 400
    tr_seconds: float = 0.8
    ppg_sample_rate_hz: float = 100.0
    snr: float = 1.0
    drift_amplitude: float = 0.1
    mean_hr_range_bpm: tuple[float, float] = (58.0, 95.0)
    depth_range_bpm: tuple[float, float] = (2.0, 12.0)
    timescale_range_s: tuple[float, float] = (40.0, 64.0)
    hrv_window_s: float = 6.0
    roi_label: str = "DynamicPlusWM"
    roi_custom_counts: Mapping[str, int] | None = None
    defect_mix: Mapping[str, float] = field(
        default_factory=lambda: {"None": 1.0})

    def roi_config(self):
        if self.roi_custom_counts is not None:
            return custom_roi_config(
                {RoiGroup(g): n for g, n in self.roi_custom_counts.items()})
        return make_roi_config(self.roi_label)


@dataclass(frozen=True)
class ModelProfile:
    """Architecture and optimizer settings for the desk-scale experiments.

    The stride-2 first block halves the sequence the recurrent stage must
    integrate, which is what lets training converge inside the CPU budget.
    """

    conv_blocks: tuple[tuple[int, int, int], ...] = ((32, 9, 2), (16, 7, 1))
    pool: tuple[str, ...] = ("None", "Max2")
    gru_hidden: int = 32
    dense_hidden: int = 16
    activation: str = "ReLU"
    dtype: str = "float32"
    learning_rate: float = 1e-3
    batch_size: int = 256
    max_epochs: int = 30
    patience: int = 10
    weight_decay: float = 3e-3

    def model_config(self, n_channels: int, window_len: int, seed: int) -> ModelConfig:
        return ModelConfig(n_channels=n_channels, window_len=window_len,
                           conv_blocks=self.conv_blocks, pool=self.pool,
                           gru_hidden=self.gru_hidden,
                           dense_hidden=self.dense_hidden,
                           activation=self.activation, dtype=self.dtype,
                           seed=seed)

    def train_hyper(self) -> TrainHyper:
        return TrainHyper(learning_rate=self.learning_rate,
                          batch_size=self.batch_size,
                          max_epochs=self.max_epochs, patience=self.patience,
                          weight_decay=self.weight_decay)


@dataclass(frozen=True)
class ExperimentConfig:
    data_root: str = "data"
    output_root: str = "out"
    seed: int = 0
    k_folds: int = 10
    val_fraction: float = 0.1
    train_stride: int = 2
    group_by_subject: bool = False
    window: WindowSpec = field(default_factory=WindowSpec)
    model: ModelProfile = field(default_factory=ModelProfile)
    qc: QcThresholds = field(default_factory=QcThresholds)
    sim: SimProfile = field(default_factory=SimProfile)
    roi_labels: tuple[str, ...] = ("DynamicPlusWM", "DynamicOnly",
                                   "StaticPlusWM", "StructuralOnly")
    jobs: int = 1

    def __post_init__(self):
        if not 0.0 < self.val_fraction < 0.5:
            raise ValidationError("val_fraction must lie in (0, 0.5)")
        if self.train_stride < 1:
            raise ValidationError("train_stride must be >= 1")
        if self.jobs < 1:
            raise ValidationError("jobs must be >= 1")

    def to_dict(self) -> dict:
        blob = asdict(self)
        return blob

    @staticmethod
    def from_dict(blob: Mapping) -> "ExperimentConfig":
        blob = dict(blob)
        if "window" in blob and isinstance(blob["window"], Mapping):
            blob["window"] = WindowSpec(**blob["window"])
        if "model" in blob and isinstance(blob["model"], Mapping):
            m = dict(blob["model"])
            if "conv_blocks" in m:
                m["conv_blocks"] = tuple(tuple(b) for b in m["conv_blocks"])
            if "pool" in m:
                m["pool"] = tuple(m["pool"])
            blob["model"] = ModelProfile(**m)
        if "qc" in blob and isinstance(blob["qc"], Mapping):
            blob["qc"] = QcThresholds(**blob["qc"])
        if "sim" in blob and isinstance(blob["sim"], Mapping):
            s = dict(blob["sim"])
            for key in ("mean_hr_range_bpm", "depth_range_bpm", "timescale_range_s"):
                if key in s:
                    s[key] = tuple(s[key])
            blob["sim"] = SimProfile(**s)
        if "roi_labels" in blob:
            blob["roi_labels"] = tuple(blob["roi_labels"])
        return ExperimentConfig(**blob)


def load_config(path: str | Path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            return ExperimentConfig.from_dict(json.load(fh))
    except OSError as exc:
        raise DataError(f"cannot read config {path}: {exc}") from exc
    except (TypeError, json.JSONDecodeError) as exc:
        raise ValidationError(f"malformed config {path}: {exc}") from exc


def write_run_record(cfg: ExperimentConfig, command: str) -> Path:
    out = Path(cfg.output_root)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "run.json"
    with open(path, "w") as fh:
        json.dump({"command": command, "version": __version__,
                   "config": cfg.to_dict()}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.17g}"
    return str(value)


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

def cmd_simulate(cfg: ExperimentConfig, n_scans: int | None = None,
                 defect_mix: Mapping[str, float] | None = None) -> Path:
    """Generate the synthetic corpus: scan directories plus a manifest CSV."""
    sim = cfg.sim
    n = n_scans if n_scans is not None else sim.n_scans
    mix = dict(defect_mix if defect_mix is not None else sim.defect_mix)
    if n < 1:
        raise ValidationError("n_scans must be >= 1")
    total = sum(mix.values())
    if abs(total - 1.0) > 1e-9:
        raise ValidationError(f"defect mix proportions sum to {total}, expected 1")
    kinds = []
    for name in mix:
        kinds.append(DefectKind(name))

    # largest-remainder apportionment of scan counts per defect kind
    quotas = {k: mix[k.value] * n for k in kinds}
    counts = {k: int(np.floor(quotas[k])) for k in kinds}
    short = n - sum(counts.values())
    for k in sorted(kinds, key=lambda k: (quotas[k] - counts[k], k.value),
                    reverse=True)[:short]:
        counts[k] += 1
    assignment = [k for k in sorted(kinds, key=lambda k: k.value)
                  for _ in range(counts[k])]
    make_rng(cfg.seed, _STAGE_DEFECT_SHUFFLE).shuffle(assignment)

    roi_config = sim.roi_config()
    data_root = Path(cfg.data_root)
    data_root.mkdir(parents=True, exist_ok=True)
    rows = []
    for i in range(n):
        scan_seed = cfg.seed + i
        draw = make_rng(cfg.seed, _STAGE_CARDIAC_PARAMS, i)
        cardiac = CardiacSimConfig(
            duration_frames=sim.duration_frames, tr_seconds=sim.tr_seconds,
            mean_hr_bpm=float(draw.uniform(*sim.mean_hr_range_bpm)),
            hr_modulation_depth=float(draw.uniform(*sim.depth_range_bpm)),
            hr_modulation_timescale_s=float(draw.uniform(*sim.timescale_range_s)),
            seed=scan_seed)
        bold = BoldSimConfig(roi_config=roi_config, snr=sim.snr,
                             drift_amplitude=sim.drift_amplitude,
                             seed=scan_seed, mixing_seed=cfg.seed)
        defect = DefectSpec(kind=assignment[i])
        scan_id = f"scan-{i:04d}"
        record = simulate_scan(cardiac, bold, defect, scan_id=scan_id,
                               subject_id=f"subj-{i:04d}",
                               ppg_sample_rate_hz=sim.ppg_sample_rate_hz)
        write_scan(record, data_root / scan_id)
        rows.append([scan_id, record.subject_id, scan_seed,
                     assignment[i].value, _fmt(float(np.std(record.hrv.values)))])

    manifest = Path(cfg.output_root) / "manifest.csv"
    _write_csv(manifest, ["scan_id", "subject_id", "seed", "defect_kind",
                          "hrv_std"], rows)
    write_run_record(cfg, "simulate")
    return manifest


# ---------------------------------------------------------------------------
# qc
# ---------------------------------------------------------------------------

def cmd_qc(cfg: ExperimentConfig) -> Path:
    """Triage every scan's PPG; keep Clean plus corrected CorrectableSpikes.

    The LowAmplitude reference is the corpus median robust amplitude, so
    the check self-calibrates to the recording units at hand.
    """
    scan_dirs = list_scan_dirs(cfg.data_root)
    if not scan_dirs:
        raise DataError(f"no scans under {cfg.data_root}")
    records = [(d, read_scan(d)) for d in scan_dirs]

    amps = [float(np.percentile(r.ppg.values, 95) - np.percentile(r.ppg.values, 5))
            for _, r in records if r.ppg is not None and len(r.ppg) > 0]
    reference = float(np.median(amps)) if amps else 1.0

    report_rows = []
    kept_rows = []
    class_counts: dict[str, int] = {}
    for scan_dir, record in records:
        if record.ppg is None:
            label = QualityLabel.NO_RECORDING
            diagnostics = {}
        else:
            quality = classify_quality(record.ppg, cfg.qc,
                                       reference_amplitude=reference)
            label = quality.label
            diagnostics = quality.diagnostics
        class_counts[label.value] = class_counts.get(label.value, 0) + 1
        kept = label in USABLE_LABELS
        ppg_file = "ppg.csv"
        if kept and label is QualityLabel.CORRECTABLE_SPIKES:
            corrected = correct_spikes(record.ppg, cfg.qc)
            np.savetxt(scan_dir / CORRECTED_PPG_FILE, corrected.values,
                       fmt="%.17g", header="ppg", comments="")
            ppg_file = CORRECTED_PPG_FILE
        report_rows.append([record.scan_id, label.value, int(kept),
                            _fmt(diagnostics.get("spike_fraction")),
                            _fmt(diagnostics.get("clip_fraction")),
                            _fmt(diagnostics.get("gap_fraction")),
                            _fmt(diagnostics.get("amplitude_ratio")),
                            _fmt(diagnostics.get("zero_fraction"))])
        if kept:
            kept_rows.append([record.scan_id, record.subject_id, label.value,
                              ppg_file])

    out = Path(cfg.output_root) / "qc"
    _write_csv(out / "qc_report.csv",
               ["scan_id", "label", "kept", "spike_fraction", "clip_fraction",
                "gap_fraction", "amplitude_ratio", "zero_fraction"],
               report_rows)
    kept_manifest = out / "manifest_kept.csv"
    _write_csv(kept_manifest, ["scan_id", "subject_id", "label", "ppg_file"],
               kept_rows)
    summary = {"n_scans": len(records), "n_kept": len(kept_rows),
               "reference_amplitude": reference,
               "class_counts": dict(sorted(class_counts.items())),
               "selection_line": f"selected {len(kept_rows)} of {len(records)} "
                                 f"scans with usable PPG"}
    with open(out / "qc_summary.json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    logger.info("%s", summary["selection_line"])
    write_run_record(cfg, "qc")
    return kept_manifest


def _load_kept_scans(cfg: ExperimentConfig) -> list[tuple[ScanRecord, str]]:
    """Kept scans with their (possibly corrected) PPG substituted in."""
    kept_manifest = Path(cfg.output_root) / "qc" / "manifest_kept.csv"
    if not kept_manifest.is_file():
        raise DataError(f"filtered manifest {kept_manifest} not found; "
                        f"run the qc command first")
    with open(kept_manifest) as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise DataError("qc kept no scans; nothing to train on")
    out = []
    for row in rows:
        scan_dir = Path(cfg.data_root) / row["scan_id"]
        record = read_scan(scan_dir)
        if row["ppg_file"] == CORRECTED_PPG_FILE:
            values = np.loadtxt(scan_dir / CORRECTED_PPG_FILE, skiprows=1)
            record = ScanRecord(scan_id=record.scan_id,
                                subject_id=record.subject_id,
                                tr_seconds=record.tr_seconds, roi=record.roi,
                                ppg=PpgSignal(record.ppg.sample_rate_hz, values),
                                hrv=record.hrv)
        out.append((record, row["subject_id"]))
    return out


def measured_hrv(record: ScanRecord, window_s: float) -> HrvSeries:
    """The regression target: HRV extracted from the recorded PPG."""
    if record.ppg is None:
        raise DataError(f"scan {record.scan_id} has no PPG trace")
    return extract_hrv(record.ppg, record.tr_seconds, record.roi.n_frames,
                       window_s)


# ---------------------------------------------------------------------------
# windows
# ---------------------------------------------------------------------------

def cmd_windows(cfg: ExperimentConfig) -> Path:
    """Per-scan sample-count report plus a binary cache of window tensors."""
    scans = _load_kept_scans(cfg)
    train_spec = replace(cfg.window, stride=cfg.train_stride)
    cache = WindowCache(Path(cfg.output_root) / "windows" / "cache")
    rows = []
    for record, _subject in scans:
        hrv = measured_hrv(record, cfg.sim.hrv_window_s)
        samples = build_windows(record.roi, hrv, train_spec, record.scan_id)
        cache.put(record.scan_id, train_spec, samples)
        rows.append([record.scan_id, record.roi.n_frames,
                     cfg.window.n_windows(record.roi.n_frames), len(samples)])
    report = Path(cfg.output_root) / "windows" / "windows_report.csv"
    _write_csv(report, ["scan_id", "n_frames", "n_windows_stride1",
                        "n_windows_train_stride"], rows)
    write_run_record(cfg, "windows")
    return report


# ---------------------------------------------------------------------------
# cross-validated training
# ---------------------------------------------------------------------------

def _carve_validation(train_ids: list[str], cfg: ExperimentConfig,
                      fold: int) -> tuple[list[str], list[str]]:
    n_val = max(1, int(round(cfg.val_fraction * len(train_ids))))
    if n_val >= len(train_ids):
        raise ValidationError("validation carve would empty the training split")
    order = make_rng(cfg.seed, _STAGE_VAL_CARVE, fold).permutation(len(train_ids))
    ordered = [train_ids[i] for i in order]
    return sorted(ordered[n_val:]), sorted(ordered[:n_val])


def _run_fold(args) -> dict:
    (fold, cfg, scans_blob, folds_of, out_dir) = args
    records = {sid: rec for sid, rec in scans_blob}
    test_ids = sorted(s for s, f in folds_of.items() if f == fold)
    pool_ids = sorted(s for s, f in folds_of.items() if f != fold)
    train_ids, val_ids = _carve_validation(pool_ids, cfg, fold)

    train_spec = replace(cfg.window, stride=cfg.train_stride)
    hrv_by_scan = {sid: measured_hrv(records[sid], cfg.sim.hrv_window_s)
                   for sid in sorted(records)}

    def scan_windows(sid):
        return build_windows(records[sid].roi, hrv_by_scan[sid], train_spec, sid)

    train_samples = [w for sid in train_ids for w in scan_windows(sid)]
    val_samples = [w for sid in val_ids for w in scan_windows(sid)]
    if not train_samples or not val_samples:
        raise DataError(f"fold {fold}: empty training or validation window set")

    normalizer = fit_normalizer(train_samples)
    x_train, y_train = stack_inputs(apply_normalizer(normalizer, train_samples))
    x_val, y_val = stack_inputs(apply_normalizer(normalizer, val_samples))

    n_channels = records[test_ids[0]].roi.n_channels
    model_cfg = cfg.model.model_config(
        n_channels, cfg.window.window_len,
        seed=derive_seed(cfg.seed, _STAGE_MODEL_INIT, fold))
    hyper = cfg.model.train_hyper()
    params, report = train(model_cfg, hyper, x_train, y_train, x_val, y_val,
                           seed=derive_seed(cfg.seed, _STAGE_TRAIN_SHUFFLE, fold))

    fold_dir = out_dir / f"fold_{fold:02d}"
    fold_dir.mkdir(parents=True, exist_ok=True)
    save_checkpoint(fold_dir / "checkpoint.npz", params, model_cfg, hyper)
    train_blob = report.to_dict()
    wall = train_blob.pop("wall_time_s")
    with open(fold_dir / "train_report.json", "w") as fh:
        json.dump(train_blob, fh, indent=2, sort_keys=True)
        fh.write("\n")

    evaluations = []
    predictions = {}
    for sid in test_ids:
        record = records[sid]
        pred = predict_scan(params, model_cfg, record.roi, cfg.window, normalizer)
        measured = hrv_by_scan[sid].values
        evaluation = evaluate_scan(sid, pred, measured)
        evaluations.append((evaluation, float(normalizer.target_std)))
        predictions[sid] = (measured, pred)
    return {"fold": fold, "test_ids": test_ids, "train_ids": train_ids,
            "val_ids": val_ids, "evaluations": evaluations,
            "predictions": predictions, "report": train_blob,
            "wall_time_s": wall}


def cmd_train_cv(cfg: ExperimentConfig,
                 scans: list[tuple[ScanRecord, str]] | None = None,
                 out_subdir: str = "cv") -> dict:
    """K-fold cross-validated training; every scan is tested exactly once."""
    if scans is None:
        scans = _load_kept_scans(cfg)
    ids = [rec.scan_id for rec, _ in scans]
    if cfg.k_folds > len(ids):
        raise ValidationError(f"k={cfg.k_folds} exceeds {len(ids)} scans")
    groups = {rec.scan_id: subject for rec, subject in scans} \
        if cfg.group_by_subject else None
    assignment = assign_folds(ids, cfg.k_folds, cfg.seed, groups=groups)

    out_dir = Path(cfg.output_root) / out_subdir
    out_dir.mkdir(parents=True, exist_ok=True)
    scans_blob = [(rec.scan_id, rec) for rec, _ in scans]
    tasks = [(fold, cfg, scans_blob, dict(assignment.fold_of), out_dir)
             for fold in range(cfg.k_folds)]
    if cfg.jobs > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            results = list(pool.map(_run_fold, tasks))
    else:
        results = [_run_fold(t) for t in tasks]
    results.sort(key=lambda r: r["fold"])

    evaluations: list[ScanEvaluation] = []
    target_stds: dict[str, float] = {}
    pred_dir = out_dir / "predictions"
    pred_dir.mkdir(parents=True, exist_ok=True)
    fold_summaries = []
    timing = {}
    for res in results:
        for evaluation, t_std in res["evaluations"]:
            evaluations.append(evaluation)
            target_stds[evaluation.scan_id] = t_std
        for sid, (measured, pred) in sorted(res["predictions"].items()):
            rows = [[frame, _fmt(measured[frame]),
                     _fmt(pred[frame]) if np.isfinite(pred[frame]) else ""]
                    for frame in range(len(measured))]
            _write_csv(pred_dir / f"{sid}.csv",
                       ["frame", "measured_hrv_s", "predicted_hrv_s"], rows)
        rs = [e.pearson_r for e, _ in res["evaluations"] if e.pearson_r is not None]
        fold_summaries.append({
            "fold": res["fold"], "test_scans": res["test_ids"],
            "n_train_scans": len(res["train_ids"]),
            "n_val_scans": len(res["val_ids"]),
            "best_epoch": res["report"]["best_epoch"],
            "n_epochs": len(res["report"]["train_losses"]),
            "best_val_loss": res["report"]["best_val_loss"],
            "mean_test_r": float(np.mean(rs)) if rs else None,
        })
        timing[f"fold_{res['fold']:02d}_s"] = res["wall_time_s"]

    evaluations.sort(key=lambda e: e.scan_id)
    rows = []
    for e in evaluations:
        t_std = target_stds[e.scan_id]
        rows.append([e.scan_id, _fmt(e.mae), _fmt(e.mse), _fmt(e.pearson_r),
                     _fmt(e.dtw), _fmt(e.hrv_std), e.n_frames,
                     _fmt(e.mae / t_std), _fmt(e.mse / (t_std * t_std))])
    _write_csv(out_dir / "evaluations.csv",
               ["scan_id", "mae_s", "mse_s2", "pearson_r", "dtw", "hrv_std_s",
                "n_frames", "mae_standardized", "mse_standardized"], rows)

    defined_r = [e.pearson_r for e in evaluations if e.pearson_r is not None]
    fold_means = [f["mean_test_r"] for f in fold_summaries
                  if f["mean_test_r"] is not None]
    report = {
        "n_scans": len(evaluations),
        "k_folds": cfg.k_folds,
        "mean_over_scans": {
            "mae_s": float(np.mean([e.mae for e in evaluations])),
            "mse_s2": float(np.mean([e.mse for e in evaluations])),
            "pearson_r": float(np.mean(defined_r)) if defined_r else None,
            "dtw": float(np.mean([e.dtw for e in evaluations])),
            "n_r_excluded": len(evaluations) - len(defined_r),
        },
        "mean_over_folds_then_scans": {
            "pearson_r": float(np.mean(fold_means)) if fold_means else None,
        },
        "median_over_scans": {
            "pearson_r": float(np.median(defined_r)) if defined_r else None,
        },
        "folds": fold_summaries,
        "seed": cfg.seed,
    }
    with open(out_dir / "cv_report.json", "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(out_dir / "timing.json", "w") as fh:
        json.dump(timing, fh, indent=2, sort_keys=True)
        fh.write("\n")
    if out_subdir == "cv":
        write_run_record(cfg, "train-cv")
    return report


# ---------------------------------------------------------------------------
# ROI-configuration ablation
# ---------------------------------------------------------------------------

def _subset_channels(record: ScanRecord, label: RoiConfigLabel,
                     seed: int) -> ScanRecord:
    roi = record.roi
    cortical = roi.group_indices(RoiGroup.CORTICAL)
    subcortical = roi.group_indices(RoiGroup.SUBCORTICAL)
    wm = roi.group_indices(RoiGroup.WHITE_MATTER)
    dynamic = np.concatenate([cortical, subcortical])
    if label is RoiConfigLabel.DYNAMIC_PLUS_WM:
        idx = np.arange(roi.n_channels)
    elif label is RoiConfigLabel.DYNAMIC_ONLY:
        idx = dynamic
    elif label is RoiConfigLabel.STATIC_PLUS_WM:
        pick = make_rng(seed, _STAGE_CHANNEL_SUBSET, 1).choice(
            len(dynamic), size=360, replace=False)
        idx = np.concatenate([dynamic[np.sort(pick)], wm])
    elif label is RoiConfigLabel.STRUCTURAL_ONLY:
        pick = make_rng(seed, _STAGE_CHANNEL_SUBSET, 2).choice(
            roi.n_channels, size=69, replace=False)
        idx = np.sort(pick)
    else:
        raise ValidationError(f"no subsetting rule for label {label}")
    return ScanRecord(scan_id=record.scan_id, subject_id=record.subject_id,
                      tr_seconds=record.tr_seconds, roi=roi.subset(idx),
                      ppg=record.ppg, hrv=record.hrv)


def cmd_compare_rois(cfg: ExperimentConfig) -> ConfigComparison:
    """Train and evaluate once per ROI configuration, then compare.

    The synthetic corpus must carry the full DynamicPlusWM channel set
    (518 cortical + 62 subcortical + 48 white matter); the static and
    structural configurations are seeded channel subsamples of matching
    size, so this ablation probes channel count and white-matter
    inclusion, not atlas identity.
    """
    scans = _load_kept_scans(cfg)
    full = make_roi_config(RoiConfigLabel.DYNAMIC_PLUS_WM)
    for record, _ in scans:
        if not record.roi.matches_config(full):
            raise ValidationError(
                f"scan {record.scan_id} does not carry the full DynamicPlusWM "
                f"channel set required for the ROI comparison")

    evals_by_config: dict[str, list[ScanEvaluation]] = {}
    for label_name in cfg.roi_labels:
        label = RoiConfigLabel(label_name)
        subset = [(_subset_channels(rec, label, cfg.seed), subj)
                  for rec, subj in scans]
        cmd_train_cv(cfg, scans=subset, out_subdir=f"rois/{label.value}")
        evals_by_config[label.value] = _read_evaluations(
            Path(cfg.output_root) / "rois" / label.value / "evaluations.csv")

    comparison = compare_configs(evals_by_config)
    out = Path(cfg.output_root) / "rois"
    for metric in ("mae", "mse", "pearson_r", "dtw"):
        rows = []
        for label in comparison.labels:
            for e in comparison.per_scan[label]:
                value = getattr(e, metric)
                rows.append([label, e.scan_id, _fmt(value)])
        _write_csv(out / f"violin_{metric}.csv", ["config", "scan_id", metric],
                   rows)
    blob = {
        "labels": list(comparison.labels),
        "summary": {k: dict(v) for k, v in comparison.summary.items()},
        "best_label": comparison.best_label,
        "improvement_pct": dict(comparison.improvement_pct),
        "improvement_definition": "(mean_r_best - mean_r_other) / mean_r_other"
                                  " * 100 on matched scans",
        "p_matrix": {f"{a}|{b}": (None if res is None else {
            "p_value": res.p_value, "statistic": res.statistic,
            "median_diff": res.median_diff, "direction": res.direction,
            "n_effective": res.n_effective, "method": res.method})
            for (a, b), res in comparison.p_matrix.items()},
        "note": "static/structural configurations are seeded channel "
                "subsamples of matching counts, not real atlases",
    }
    with open(out / "comparison.json", "w") as fh:
        json.dump(blob, fh, indent=2, sort_keys=True)
        fh.write("\n")
    write_run_record(cfg, "compare-rois")
    return comparison


def _read_evaluations(path: Path) -> list[ScanEvaluation]:
    if not path.is_file():
        raise DataError(f"missing evaluations file {path}")
    out = []
    with open(path) as fh:
        for row in csv.DictReader(fh):
            r = row["pearson_r"]
            out.append(ScanEvaluation(
                scan_id=row["scan_id"], mae=float(row["mae_s"]),
                mse=float(row["mse_s2"]),
                pearson_r=float(r) if r else None, dtw=float(row["dtw"]),
                hrv_std=float(row["hrv_std_s"]), n_frames=int(row["n_frames"])))
    return out


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------

def cmd_report(cfg: ExperimentConfig) -> Path:
    """Render SVG figures and a markdown summary from existing artifacts."""
    from . import plots

    out = Path(cfg.output_root)
    report_dir = out / "report"
    report_dir.mkdir(parents=True, exist_ok=True)
    cv_dir = out / "cv"
    missing = [str(p) for p in (cv_dir / "evaluations.csv",
                                cv_dir / "cv_report.json",
                                cv_dir / "predictions")
               if not p.exists()]
    if missing:
        raise DataError("missing evaluation artifacts: " + ", ".join(missing))

    evaluations = _read_evaluations(cv_dir / "evaluations.csv")
    with open(cv_dir / "cv_report.json") as fh:
        cv_report = json.load(fh)

    overlay_files = []
    for e in evaluations:
        pred_path = cv_dir / "predictions" / f"{e.scan_id}.csv"
        measured, predicted = _read_prediction(pred_path)
        svg = plots.overlay_plot(
            measured, predicted, cfg.sim.tr_seconds,
            report_dir / f"overlay_{e.scan_id}.svg", title=e.scan_id,
            annotations={"MAE": e.mae, "MSE": e.mse, "r": e.pearson_r,
                         "DTW": e.dtw})
        overlay_files.append(svg.name)

    analysis = variability_accuracy_analysis(evaluations)
    _write_csv(report_dir / "variability.csv",
               ["scan_id", "hrv_std_s", "pearson_r"],
               [[sid, _fmt(s), _fmt(r)] for sid, s, r in analysis.points])
    plots.scatter_plot([p[1] for p in analysis.points],
                       [p[2] for p in analysis.points],
                       report_dir / "variability_scatter.svg",
                       slope=analysis.slope, intercept=analysis.intercept,
                       title="HRV variability vs reconstruction accuracy")

    violin_files = []
    rois_dir = out / "rois"
    comparison_note = ""
    if (rois_dir / "comparison.json").is_file():
        for metric in ("mae", "mse", "pearson_r", "dtw"):
            values: dict[str, list[float]] = {}
            with open(rois_dir / f"violin_{metric}.csv") as fh:
                for row in csv.DictReader(fh):
                    if row[metric]:
                        values.setdefault(row["config"], []).append(
                            float(row[metric]))
            svg = plots.violin_plot(values, report_dir / f"violin_{metric}.svg",
                                    ylabel=metric)
            violin_files.append(svg.name)
        with open(rois_dir / "comparison.json") as fh:
            comparison = json.load(fh)
        comparison_note = (f"best configuration: {comparison['best_label']}; "
                           f"improvement%: {comparison['improvement_pct']}")

    lines = ["# HRV reconstruction report", ""]
    mos = cv_report["mean_over_scans"]
    lines.append(f"- scans evaluated: {cv_report['n_scans']} across "
                 f"{cv_report['k_folds']} folds")
    lines.append(f"- mean over scans: MAE {mos['mae_s']:.4g} s, "
                 f"MSE {mos['mse_s2']:.4g} s^2, r {mos['pearson_r']:.4g}, "
                 f"DTW {mos['dtw']:.4g}")
    lines.append(f"- variability vs accuracy: slope {analysis.slope:.4g}, "
                 f"pearson {analysis.pearson_corr}, "
                 f"spearman {analysis.spearman_corr}")
    if comparison_note:
        lines.append(f"- {comparison_note}")
    lines.append("")
    lines.append(f"- overlay figures: {len(overlay_files)}")
    lines.append(f"- scatter: variability_scatter.svg")
    if violin_files:
        lines.append(f"- violins: {', '.join(violin_files)}")
    summary = report_dir / "summary.md"
    summary.write_text("\n".join(lines) + "\n")
    write_run_record(cfg, "report")
    return summary


def _read_prediction(path: Path) -> tuple[np.ndarray, np.ndarray]:
    if not path.is_file():
        raise DataError(f"missing prediction file {path}")
    measured, predicted = [], []
    with open(path) as fh:
        for row in csv.DictReader(fh):
            measured.append(float(row["measured_hrv_s"]))
            predicted.append(float(row["predicted_hrv_s"])
                             if row["predicted_hrv_s"] else np.nan)
    return np.array(measured), np.array(predicted)

import numpy as np
import pytest

from hrvbold.errors import ValidationError
from hrvbold.records import (BeatTimes, HrvSeries, PpgSignal, RoiChannel,
                             RoiConfigLabel, RoiGroup, RoiMatrix, ScanRecord,
                             custom_roi_config, default_channels,
                             make_roi_config)


def small_roi(n_frames=4, n_channels=3):
    channels = tuple(RoiChannel(f"ch{i}", RoiGroup.CORTICAL)
                     for i in range(n_channels))
    values = np.arange(n_frames * n_channels, dtype=float).reshape(
        n_frames, n_channels)
    return RoiMatrix(channels=channels, values=values)


class TestRoiConfig:
    def test_canonical_totals(self):
        assert make_roi_config("DynamicPlusWM").total == 628
        assert make_roi_config("DynamicOnly").total == 580
        assert make_roi_config("StaticPlusWM").total == 408
        assert make_roi_config("StructuralOnly").total == 69

    def test_group_breakdown(self):
        cfg = make_roi_config(RoiConfigLabel.DYNAMIC_PLUS_WM)
        assert cfg.group_counts[RoiGroup.CORTICAL] == 518
        assert cfg.group_counts[RoiGroup.SUBCORTICAL] == 62
        assert cfg.group_counts[RoiGroup.WHITE_MATTER] == 48

    def test_arithmetic_relations(self):
        full = make_roi_config("DynamicPlusWM").total
        dyn = make_roi_config("DynamicOnly").total
        static = make_roi_config("StaticPlusWM")
        assert full == dyn + 48
        assert static.group_counts[RoiGroup.CORTICAL] == 360
        assert static.group_counts[RoiGroup.WHITE_MATTER] == 48

    def test_custom_config(self):
        cfg = custom_roi_config({"Cortical": 5, RoiGroup.WHITE_MATTER: 2})
        assert cfg.label is RoiConfigLabel.CUSTOM
        assert cfg.total == 7
        assert len(default_channels(cfg)) == 7

    def test_custom_label_has_no_canonical_counts(self):
        with pytest.raises(ValidationError):
            make_roi_config("Custom")

    def test_empty_config_rejected(self):
        with pytest.raises(ValidationError):
            custom_roi_config({"Cortical": 0})


class TestRoiMatrix:
    def test_shape_accessors(self):
        roi = small_roi(5, 2)
        assert roi.n_frames == 5
        assert roi.n_channels == 2

    def test_non_finite_rejected_with_location(self):
        channels = (RoiChannel("a", RoiGroup.CORTICAL),
                    RoiChannel("b", RoiGroup.WHITE_MATTER))
        values = np.zeros((3, 2))
        values[1, 1] = np.nan
        with pytest.raises(ValidationError, match="frame 1, channel 1"):
            RoiMatrix(channels=channels, values=values)

    def test_channel_count_mismatch(self):
        with pytest.raises(ValidationError):
            RoiMatrix(channels=(RoiChannel("a", RoiGroup.CORTICAL),),
                      values=np.zeros((2, 3)))

    def test_duplicate_names_rejected(self):
        channels = (RoiChannel("a", RoiGroup.CORTICAL),
                    RoiChannel("a", RoiGroup.CORTICAL))
        with pytest.raises(ValidationError):
            RoiMatrix(channels=channels, values=np.zeros((2, 2)))

    def test_subset_and_group_indices(self):
        channels = (RoiChannel("a", RoiGroup.CORTICAL),
                    RoiChannel("b", RoiGroup.WHITE_MATTER),
                    RoiChannel("c", RoiGroup.CORTICAL))
        roi = RoiMatrix(channels=channels, values=np.arange(6.0).reshape(2, 3))
        assert roi.group_indices(RoiGroup.WHITE_MATTER).tolist() == [1]
        sub = roi.subset([0, 2])
        assert sub.n_channels == 2
        assert np.array_equal(sub.values, roi.values[:, [0, 2]])

    def test_tagged_names_round_trip(self):
        ch = RoiChannel("ATR_L", RoiGroup.WHITE_MATTER)
        assert ch.tagged_name == "WM:ATR_L"
        assert RoiChannel.from_tagged("WM:ATR_L") == ch
        with pytest.raises(ValidationError):
            RoiChannel.from_tagged("nocolon")


class TestSignals:
    def test_ppg_validation(self):
        with pytest.raises(ValidationError):
            PpgSignal(sample_rate_hz=0.0, values=np.zeros(4))
        with pytest.raises(ValidationError):
            PpgSignal(sample_rate_hz=100.0, values=np.array([1.0, np.inf]))
        ppg = PpgSignal(sample_rate_hz=50.0, values=np.zeros(100))
        assert ppg.duration_s == 2.0

    def test_hrv_nonnegative_finite(self):
        with pytest.raises(ValidationError):
            HrvSeries(values=np.array([0.1, -0.2]))
        with pytest.raises(ValidationError):
            HrvSeries(values=np.array([0.1, np.nan]))
        assert len(HrvSeries(values=np.array([0.0, 0.1]))) == 2

    def test_beat_times_strictly_increasing(self):
        with pytest.raises(ValidationError):
            BeatTimes(times_s=np.array([0.0, 1.0, 1.0]))
        with pytest.raises(ValidationError):
            BeatTimes(times_s=np.array([-0.5, 1.0]))
        beats = BeatTimes(times_s=np.array([0.0, 0.8, 1.8]))
        assert np.allclose(beats.intervals(), [0.8, 1.0])


class TestScanRecord:
    def test_hrv_length_must_match_frames(self):
        with pytest.raises(ValidationError, match="HRV length"):
            ScanRecord(scan_id="s", subject_id="p", tr_seconds=0.8,
                       roi=small_roi(4), hrv=HrvSeries(values=np.zeros(3)))

    def test_tr_positive(self):
        with pytest.raises(ValidationError):
            ScanRecord(scan_id="s", subject_id="p", tr_seconds=-1.0,
                       roi=small_roi())

    def test_duration(self):
        rec = ScanRecord(scan_id="s", subject_id="p", tr_seconds=0.5,
                         roi=small_roi(10))
        assert rec.duration_s == 5.0

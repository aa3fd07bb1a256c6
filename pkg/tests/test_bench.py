"""Harness tests: experiment plumbing, reports, tensor files, determinism."""

import json

import pytest

from scaledq.core import RangeError, ScaleConfig, ScaledInt
from scaledq.ops import QTensor
from scaledq.reference import FTensor
from scaledq.bench import (
    CSV_HEADER,
    ExperimentSpec,
    UsageError,
    div_sweep,
    load_tensor,
    memory_report,
    reports_to_csv,
    run_bench,
    run_suite,
    save_tensor,
    suite_specs,
)

CFG = ScaleConfig()


class TestExperimentSpec:
    def test_unknown_operator(self):
        with pytest.raises(UsageError):
            ExperimentSpec("fft")

    def test_bad_dims(self):
        with pytest.raises(UsageError):
            ExperimentSpec("conv2d", h=0)
        with pytest.raises(UsageError):
            ExperimentSpec("conv2d", trials=0)


class TestRunBench:
    def test_identity_linear_is_exact(self):
        spec = ExperimentSpec("linear", i=3, o=3, h=4, w=4, trials=3,
                              weight_mode="identity")
        report = run_bench(spec, CFG)
        assert report.mse == 0.0
        assert report.max_abs_err == 0.0

    def test_same_seed_same_bytes(self):
        spec = ExperimentSpec("conv2d", i=2, o=2, h=6, w=6, trials=3, seed=11)
        a = run_bench(spec, CFG)
        b = run_bench(spec, CFG)
        assert a.csv_row() == b.csv_row()

    def test_different_seed_differs(self):
        s1 = ExperimentSpec("conv2d", i=2, o=2, h=6, w=6, trials=3, seed=1)
        s2 = ExperimentSpec("conv2d", i=2, o=2, h=6, w=6, trials=3, seed=2)
        assert run_bench(s1, CFG).mse != run_bench(s2, CFG).mse

    def test_fixed_input_reused_across_trials(self):
        fixed = FTensor((1, 1, 2, 2), (0.1, 0.2, 0.3, 0.4))
        spec = ExperimentSpec("conv2d", i=1, o=1, h=2, w=2, trials=2, seed=3)
        report = run_bench(spec, CFG, fixed_input=fixed)
        assert report.mse >= 0.0
        with pytest.raises(UsageError):
            run_bench(ExperimentSpec("conv2d", i=2, o=1, h=2, w=2, trials=1), CFG,
                      fixed_input=fixed)

    def test_report_row_fields(self):
        spec = ExperimentSpec("softmax", i=1, o=1, h=2, w=2, trials=2)
        row = run_bench(spec, CFG).csv_row()
        fields = row.split(",")
        assert len(fields) == len(CSV_HEADER.split(","))
        assert fields[0] == "softmax"
        assert int(fields[7]) == 2

    def test_gelu_variant_label(self):
        spec = ExperimentSpec("gelu", h=2, w=2, trials=1, label="gelu[series-linear]")
        report = run_bench(spec, CFG, gelu_variant="series-linear")
        assert report.operator_label == "gelu[series-linear]"


class TestSuite:
    def test_row_order_and_labels(self):
        labels = [(s.label or s.operator, s.i, s.o) for s, _ in suite_specs(seed=0)]
        assert labels == [
            ("conv2d", 3, 3), ("conv2d", 3, 9), ("conv2d", 3, 1),
            ("layer-norm", 1, 1),
            ("depthwise-conv2d", 3, 3), ("depthwise-conv2d", 3, 9),
            ("linear", 3, 9), ("linear", 3, 1), ("linear", 3, 3),
            ("softmax", 1, 1),
            ("gelu[series-cubed]", 1, 1), ("gelu[series-linear]", 1, 1),
        ]

    def test_small_suite_reproducible(self):
        a = reports_to_csv(run_suite(CFG, seed=5, trials=2, side=4))
        b = reports_to_csv(run_suite(CFG, seed=5, trials=2, side=4))
        assert a == b
        assert a.startswith(CSV_HEADER + "\n")


class TestDivSweep:
    def test_tiny_config_sweep_exhaustive(self):
        cfg = ScaleConfig(p_bits=4, scale_bits=4)
        report = div_sweep(cfg)
        assert report.pairs == 15 * 15
        assert report.divisible_inexact == 0
        assert report.max_rel_err <= 2 ** -2  # 4-bit magnitudes are coarse


class TestTensorFiles:
    def test_f64_round_trip(self, tmp_path):
        path = str(tmp_path / "t.json")
        t = FTensor((2, 2), (0.5, -1.25, 3.0, 0.0))
        save_tensor(path, t)
        back = load_tensor(path, CFG)
        assert isinstance(back, FTensor)
        assert back == t

    def test_scaled_round_trip(self, tmp_path):
        path = str(tmp_path / "q.json")
        t = QTensor((3,), (ScaledInt(122, 3), ScaledInt(33, 7, True), ScaledInt(0)))
        save_tensor(path, t)
        back = load_tensor(path, CFG)
        assert isinstance(back, QTensor)
        assert back.data == t.data

    def test_scaled_format_is_signed_pairs(self, tmp_path):
        path = str(tmp_path / "q.json")
        save_tensor(path, QTensor((1,), (ScaledInt(7, 2, True),)))
        payload = json.loads(open(path).read())
        assert payload == {"shape": [1], "kind": "scaled", "data": [[-7, 2]]}

    def test_out_of_range_magnitude_rejected(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text('{"shape": [1], "kind": "scaled", "data": [[256, 0]]}')
        with pytest.raises(RangeError):
            load_tensor(str(p), CFG)

    def test_out_of_range_scale_rejected(self, tmp_path):
        p = tmp_path / "bad2.json"
        p.write_text('{"shape": [1], "kind": "scaled", "data": [[1, 99]]}')
        with pytest.raises(RangeError):
            load_tensor(str(p), CFG)

    def test_garbage_rejected(self, tmp_path):
        p = tmp_path / "nope.json"
        p.write_text("[1, 2")
        with pytest.raises(UsageError):
            load_tensor(str(p), CFG)
        with pytest.raises(UsageError):
            load_tensor(str(tmp_path / "missing.json"), CFG)


class TestMemoryReport:
    def test_default_config(self):
        report = memory_report(CFG)
        assert report["bits_per_element"] == 13
        assert abs(report["reduction_factor"] - 4.923) <= 0.001

    def test_other_configs(self):
        assert memory_report(ScaleConfig(p_bits=8, scale_bits=8))["reduction_factor"] == 4.0
        assert memory_report(ScaleConfig(p_bits=4, scale_bits=4))["reduction_factor"] == 8.0

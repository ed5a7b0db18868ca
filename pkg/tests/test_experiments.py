"""Experiment records, CSV round-trips, sweep and benchmark runners."""

import csv
import math

import numpy as np
import pytest

from unsupix import experiments as exp
from unsupix.image_io import save_image, save_labelmap
from unsupix.segmenter import RunConfig

from scenes import make_benchmark_corpus, make_scene


def tiny_cfg(**kwargs):
    base = dict(n_superpixels=6, iterations=5, width_mult=0.125, log_every=5)
    base.update(kwargs)
    return RunConfig(**base)


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("corpus")
    return make_benchmark_corpus(tmp, n_images=3, size=16)


class TestExperimentRecord:
    def _record(self):
        return exp.ExperimentRecord(
            image_id="img01",
            method="ours",
            config={"n_superpixels": 6, "lambda_": 2.0},
            n_superpixels_used=4,
            asa=0.91234567,
            br=0.5,
            wall_time=1.234567,
            seed=3,
        )

    def test_row_round_trip(self):
        rec = self._record()
        again = exp.ExperimentRecord.from_row(rec.to_row())
        # floats survive at the emitted 6-significant-digit precision
        assert again.to_row() == rec.to_row()
        assert again.image_id == rec.image_id
        assert again.config == rec.config

    def test_nan_metrics_become_empty_fields(self):
        rec = self._record()
        rec.asa = float("nan")
        row = rec.to_row()
        assert row[4] == ""
        assert math.isnan(exp.ExperimentRecord.from_row(row).asa)

    def test_csv_file_round_trip(self, tmp_path):
        records = [self._record(), self._record()]
        records[1].image_id = "img02"
        records[1].asa = float("nan")
        path = tmp_path / "records.csv"
        exp.write_records_csv(path, records)
        loaded = exp.read_records_csv(path)
        assert [r.to_row() for r in loaded] == [r.to_row() for r in records]

    def test_unexpected_header_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("a,b,c\n1,2,3\n")
        with pytest.raises(ValueError, match="header"):
            exp.read_records_csv(path)


class TestLambdaSweep:
    def test_row_count_and_configs(self, corpus, tmp_path):
        img_dir, _ = corpus
        out = tmp_path / "sweep.csv"
        records = exp.run_lambda_sweep(img_dir, [0.1, 2.0], tiny_cfg(), out_csv=out)
        assert len(records) == 6  # 2 lambdas x 3 images
        lambdas = sorted({r.config["lambda_"] for r in records})
        assert lambdas == [0.1, 2.0]
        assert all(math.isnan(r.asa) for r in records)
        assert all(r.n_superpixels_used >= 1 for r in records)
        loaded = exp.read_records_csv(out)
        assert [r.to_row() for r in loaded] == [r.to_row() for r in records]

    def test_failures_logged_and_skipped(self, tmp_path, caplog):
        img_dir = tmp_path / "imgs"
        img_dir.mkdir()
        image, _ = make_scene(5, size=16, n_regions=3)
        save_image(img_dir / "good.png", image)
        (img_dir / "broken.png").write_bytes(b"not a png")
        with caplog.at_level("ERROR"):
            records = exp.run_lambda_sweep(img_dir, [1.0], tiny_cfg())
        assert len(records) == 1
        assert any("broken" in r.message for r in caplog.records)

    def test_records_reproduce_runs(self, corpus):
        img_dir, _ = corpus
        records = exp.run_lambda_sweep(img_dir, [0.5], tiny_cfg(seed=9))
        rec = records[0]
        cfg = RunConfig(**rec.config)
        from unsupix.image_io import load_image, normalize_inputs
        from unsupix.segmenter import segment

        norm = normalize_inputs(load_image(img_dir / f"{rec.image_id}.png"))
        result = segment(norm.i_norm, norm.x_norm, cfg)
        assert result.n_superpixels_used == rec.n_superpixels_used


class TestBenchmark:
    def test_methods_and_scores(self, corpus, tmp_path):
        img_dir, gt_dir = corpus
        out = tmp_path / "bench.csv"
        records = exp.run_benchmark(
            img_dir, gt_dir, methods=["ours", "ours_no_recons", "slic"],
            counts=[6], base_cfg=tiny_cfg(), out_csv=out,
        )
        assert len(records) == 9  # 3 images x 3 methods
        for rec in records:
            assert 0 < rec.asa <= 1
            assert 0 <= rec.br <= 1
        no_recons = [r for r in records if r.method == "ours_no_recons"]
        assert all(r.config["beta"] == 0.0 for r in no_recons)
        ours = [r for r in records if r.method == "ours"]
        assert all(r.config["beta"] == tiny_cfg().beta for r in ours)

    def test_missing_ground_truth_skipped_with_warning(self, tmp_path, caplog):
        img_dir = tmp_path / "imgs"
        gt_dir = tmp_path / "gt"
        img_dir.mkdir()
        gt_dir.mkdir()
        image, labels = make_scene(6, size=16, n_regions=3)
        save_image(img_dir / "a.png", image)
        save_image(img_dir / "b.png", image)
        save_labelmap(gt_dir / "a.png", labels)
        with caplog.at_level("WARNING"):
            records = exp.run_benchmark(
                img_dir, gt_dir, methods=["slic"], counts=[4], base_cfg=tiny_cfg()
            )
        assert {r.image_id for r in records} == {"a"}
        assert any("b.png" in r.message for r in caplog.records)

    def test_empty_image_dir_gives_header_only_csv(self, tmp_path):
        img_dir = tmp_path / "imgs"
        img_dir.mkdir()
        out = tmp_path / "empty.csv"
        records = exp.run_benchmark(img_dir, img_dir, methods=["slic"], counts=[4], out_csv=out)
        assert records == []
        with open(out) as fh:
            rows = list(csv.reader(fh))
        assert rows == [list(exp.ExperimentRecord._FIELDS)]

    def test_multiple_annotations_found_by_stem(self, tmp_path):
        img_dir = tmp_path / "imgs"
        gt_dir = tmp_path / "gt"
        img_dir.mkdir()
        gt_dir.mkdir()
        image, labels = make_scene(7, size=16, n_regions=3)
        save_image(img_dir / "multi.png", image)
        save_labelmap(gt_dir / "multi_0.png", labels)
        save_labelmap(gt_dir / "multi_1.csv", labels)
        paths = exp.find_ground_truths(gt_dir, "multi")
        assert [p.name for p in paths] == ["multi_0.png", "multi_1.csv"]
        records = exp.run_benchmark(img_dir, gt_dir, methods=["slic"], counts=[4])
        assert len(records) == 1

    def test_unknown_method_rejected(self, corpus):
        img_dir, gt_dir = corpus
        with pytest.raises(ValueError, match="unknown method"):
            exp.run_benchmark(img_dir, gt_dir, methods=["fh"], counts=[4])

    def test_parallel_matches_serial(self, corpus):
        img_dir, gt_dir = corpus
        kwargs = dict(methods=["slic"], counts=[5], base_cfg=tiny_cfg())
        serial = exp.run_benchmark(img_dir, gt_dir, n_jobs=1, **kwargs)
        parallel = exp.run_benchmark(img_dir, gt_dir, n_jobs=2, **kwargs)

        def rows_sans_time(records):
            return [r.to_row()[:6] + r.to_row()[7:] for r in records]

        assert rows_sans_time(serial) == rows_sans_time(parallel)


class TestWorkerEnvVar:
    def test_env_var_controls_default(self, monkeypatch):
        monkeypatch.setenv(exp.WORKERS_ENV_VAR, "3")
        assert exp._n_jobs(None) == 3
        monkeypatch.setenv(exp.WORKERS_ENV_VAR, "junk")
        assert exp._n_jobs(None) == 1
        monkeypatch.delenv(exp.WORKERS_ENV_VAR)
        assert exp._n_jobs(None) == 1
        assert exp._n_jobs(4) == 4

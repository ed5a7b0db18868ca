"""Dataset sweeps, the SLIC comparison benchmark, and CSV experiment records.

Every emitted row carries the full configuration of its run (as JSON in the
``config`` column) plus the seed, so any row can be reproduced exactly.
Sweeps can fan out over processes; set the ``UNSUPIX_WORKERS`` environment
variable or pass ``n_jobs``. CSV writing always happens in the parent.
"""

from __future__ import annotations

import csv
import json
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import metrics
from .image_io import load_image, load_labelmap, normalize_inputs
from .segmenter import RunConfig, segment
from .slic import slic as run_slic

logger = logging.getLogger(__name__)

WORKERS_ENV_VAR = "UNSUPIX_WORKERS"

_IMAGE_SUFFIXES = (".png", ".ppm")


@dataclass
class ExperimentRecord:
    """One (image, method, configuration) run and its scores.

    ``asa``/``br`` are NaN when no ground truth was available (pure count
    sweeps). ``config`` is a JSON-serializable dict of the run parameters.
    """

    image_id: str
    method: str
    config: dict
    n_superpixels_used: int
    asa: float
    br: float
    wall_time: float
    seed: int

    _FIELDS = ("image_id", "method", "config", "n_superpixels_used", "asa", "br", "wall_time", "seed")

    def to_row(self) -> list[str]:
        return [
            self.image_id,
            self.method,
            json.dumps(self.config, sort_keys=True),
            str(self.n_superpixels_used),
            _fmt(self.asa),
            _fmt(self.br),
            _fmt(self.wall_time),
            str(self.seed),
        ]

    @classmethod
    def from_row(cls, row: list[str]) -> "ExperimentRecord":
        if len(row) != len(cls._FIELDS):
            raise ValueError(f"expected {len(cls._FIELDS)} columns, got {len(row)}")
        return cls(
            image_id=row[0],
            method=row[1],
            config=json.loads(row[2]),
            n_superpixels_used=int(row[3]),
            asa=float(row[4]) if row[4] else float("nan"),
            br=float(row[5]) if row[5] else float("nan"),
            wall_time=float(row[6]) if row[6] else float("nan"),
            seed=int(row[7]),
        )


def _fmt(x: float) -> str:
    """Floats with 6 significant digits; NaN becomes an empty field."""
    if x != x:
        return ""
    return f"{x:.6g}"


def write_records_csv(path, records: list[ExperimentRecord]):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(ExperimentRecord._FIELDS)
        for rec in records:
            writer.writerow(rec.to_row())


def read_records_csv(path) -> list[ExperimentRecord]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != ExperimentRecord._FIELDS:
            raise ValueError(f"{path}: unexpected header {header}")
        return [ExperimentRecord.from_row(row) for row in reader]


def _n_jobs(n_jobs: int | None) -> int:
    if n_jobs is not None:
        return max(1, n_jobs)
    env = os.environ.get(WORKERS_ENV_VAR)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            logger.warning("ignoring non-integer %s=%r", WORKERS_ENV_VAR, env)
    return 1


def _limit_worker_threads():
    # one BLAS thread per worker process; the processes provide parallelism
    try:
        from threadpoolctl import threadpool_limits

        global _worker_thread_limit
        _worker_thread_limit = threadpool_limits(limits=1)
    except Exception:
        pass


def list_images(image_dir) -> list[Path]:
    image_dir = Path(image_dir)
    if not image_dir.is_dir():
        raise ValueError(f"{image_dir}: not a directory")
    return sorted(p for p in image_dir.iterdir() if p.suffix.lower() in _IMAGE_SUFFIXES)


def find_ground_truths(gt_dir, stem: str) -> list[Path]:
    """Ground-truth files for an image: ``<stem>.*`` or ``<stem>_<k>.*``."""
    gt_dir = Path(gt_dir)
    out = []
    for p in sorted(gt_dir.iterdir()):
        if p.suffix.lower() not in (".png", ".csv"):
            continue
        if p.stem == stem or (
            p.stem.startswith(stem + "_") and p.stem[len(stem) + 1 :].isdigit()
        ):
            out.append(p)
    return out


def _config_dict(cfg: RunConfig) -> dict:
    return asdict(cfg)


def _run_ours(image_path: str, cfg_kwargs: dict, method: str) -> ExperimentRecord:
    cfg = RunConfig(**cfg_kwargs)
    image = load_image(image_path)
    norm = normalize_inputs(image)
    result = segment(norm.i_norm, norm.x_norm, cfg)
    return ExperimentRecord(
        image_id=Path(image_path).stem,
        method=method,
        config=_config_dict(cfg),
        n_superpixels_used=result.n_superpixels_used,
        asa=float("nan"),
        br=float("nan"),
        wall_time=result.elapsed,
        seed=cfg.seed,
    )


def _evaluate_record(rec: ExperimentRecord, labels, gt_paths: list[Path], epsilon: int):
    gts = [load_labelmap(p) for p in gt_paths]
    report = metrics.evaluate(labels, gts, epsilon=epsilon)
    rec.asa = report.asa
    rec.br = report.br


def _benchmark_job(args) -> ExperimentRecord | None:
    try:
        return _benchmark_one(args)
    except Exception:
        logger.exception("benchmark failed on %s (%s)", args[0], args[2])
        return None


def _benchmark_one(args) -> ExperimentRecord:
    image_path, gt_paths, method, count, cfg_kwargs, epsilon = args
    image = load_image(image_path)
    stem = Path(image_path).stem
    start = time.perf_counter()
    if method == "slic":
        config = {
            "n_segments": count,
            "compactness": 10.0,
            "max_iters": 10,
            "enforce_connectivity": True,
        }
        labels = run_slic(image, **config)
        elapsed = time.perf_counter() - start
        seed = 0
    else:
        cfg = RunConfig(**dict(cfg_kwargs, n_superpixels=count))
        if method == "ours_no_recons":
            cfg.beta = 0.0
        norm = normalize_inputs(image)
        result = segment(norm.i_norm, norm.x_norm, cfg)
        labels = result.labels
        elapsed = result.elapsed
        config = _config_dict(cfg)
        seed = cfg.seed
    rec = ExperimentRecord(
        image_id=stem,
        method=method,
        config=config,
        n_superpixels_used=int(np.unique(labels).size),
        asa=float("nan"),
        br=float("nan"),
        wall_time=elapsed,
        seed=seed,
    )
    _evaluate_record(rec, labels, gt_paths, epsilon)
    return rec


def _sweep_job(args) -> ExperimentRecord | None:
    image_path, cfg_kwargs, method = args
    try:
        return _run_ours(image_path, cfg_kwargs, method)
    except Exception:
        logger.exception("sweep failed on %s", image_path)
        return None


def _map_jobs(fn, jobs, n_jobs: int):
    if n_jobs <= 1 or len(jobs) <= 1:
        return [fn(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=n_jobs, initializer=_limit_worker_threads) as pool:
        return list(pool.map(fn, jobs))


def run_lambda_sweep(
    image_dir,
    lambdas: list[float],
    base_cfg: RunConfig | None = None,
    out_csv=None,
    n_jobs: int | None = None,
) -> list[ExperimentRecord]:
    """Segment every image in ``image_dir`` once per lambda value.

    Emits one record per (image, lambda); failures on individual images
    are logged and skipped. The record rows are returned and, if
    ``out_csv`` is given, also written there.
    """
    base_cfg = base_cfg or RunConfig()
    images = list_images(image_dir)
    jobs = []
    for lam in lambdas:
        cfg_kwargs = dict(asdict(base_cfg), lambda_=float(lam))
        for path in images:
            jobs.append((str(path), cfg_kwargs, "ours"))
    results = _map_jobs(_sweep_job, jobs, _n_jobs(n_jobs))
    records = [r for r in results if r is not None]
    if out_csv is not None:
        write_records_csv(out_csv, records)
    return records


def run_benchmark(
    image_dir,
    gt_dir,
    methods: list[str] = ("ours", "ours_no_recons", "slic"),
    counts: list[int] = (50,),
    base_cfg: RunConfig | None = None,
    epsilon: int = 1,
    out_csv=None,
    n_jobs: int | None = None,
) -> list[ExperimentRecord]:
    """Compare methods at several superpixel counts against ground truth.

    Images are paired with ground-truth label maps by filename stem
    (``foo.png`` matches ``foo.png``/``foo.csv``/``foo_0.png``...). Images
    without any ground truth are skipped with a warning. ``ours_no_recons``
    runs the optimizer with the reconstruction cost disabled (beta = 0).
    """
    base_cfg = base_cfg or RunConfig()
    for m in methods:
        if m not in ("ours", "ours_no_recons", "slic"):
            raise ValueError(f"unknown method {m!r}")
    jobs = []
    for path in list_images(image_dir):
        gt_paths = find_ground_truths(gt_dir, path.stem)
        if not gt_paths:
            logger.warning("no ground truth for %s; skipping", path.name)
            continue
        for method in methods:
            for count in counts:
                jobs.append(
                    (str(path), gt_paths, method, int(count), asdict(base_cfg), epsilon)
                )
    results = _map_jobs(_benchmark_job, jobs, _n_jobs(n_jobs))
    records = [r for r in results if r is not None]
    if out_csv is not None:
        write_records_csv(out_csv, records)
    return records

"""Dataset synthesis, single runs, sweeps and aggregate reports.

Layout produced under ``config.out_dir``::

    dataset/            synth() output + manifest.json
    runs/<ALG>_g<g>/    trace CSV, reconstruction, quality.csv, record.json
    summary.csv         one row per sweep cell
"""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Optional

import numpy as np

from ..denoisers import make_denoiser
from ..errors import DivergenceError, InvalidInputError
from ..forward_model import (
    ForwardOperator,
    KSpaceData,
    SamplingMask,
    add_noise,
    apply_forward,
    generate_cartesian_mask,
    generate_coil_maps,
    generate_phantom,
)
from ..metrics import QualityReport, quality_report
from ..solvers import IterationTrace, SolverConfig, run_solver
from . import io
from .config import ExperimentConfig

log = logging.getLogger(__name__)

MANIFEST = "manifest.json"
SUMMARY_COLUMNS = (
    "algorithm",
    "gamma1",
    "termination",
    "iterations",
    "rsnr_db",
    "ssim",
    "residual_sq",
    "discrepancy_ratio",
    "iters_to_0.5db",
)


@dataclass
class Dataset:
    x_true: np.ndarray
    coil_maps: np.ndarray
    mask: SamplingMask
    y_clean: KSpaceData
    y: KSpaceData
    manifest: dict

    def operator(self):
        return ForwardOperator(self.coil_maps, self.mask)


def build_dataset(config: ExperimentConfig) -> Dataset:
    """Synthesize phantom, coils, mask and k-space in memory."""
    im = config.image
    x = generate_phantom(im.width, im.height, im.kind, im.variant)
    maps = generate_coil_maps(im.width, im.height, config.num_coils)
    mask = generate_cartesian_mask(
        im.height, config.mask.acceleration, config.mask.acs_lines, config.mask.seed
    )
    op = ForwardOperator(maps, mask)
    y_clean = apply_forward(op, x)
    y = add_noise(y_clean, config.noise.snr_db, config.noise.seed)
    n = im.width * im.height
    m = op.samples_per_coil
    manifest = {
        "C": config.num_coils,
        "M": m,
        "N": n,
        "N_over_M": n / m,
        "width": im.width,
        "height": im.height,
        "num_lines": mask.num_lines,
        "sigma_sq": y.sigma_sq,
        "config": config.to_dict(),
    }
    return Dataset(x, maps, mask, y_clean, y, manifest)


def synth(config: ExperimentConfig, out_dir=None) -> Path:
    """Write a dataset directory and return its path.

    Files: ``phantom.cimg`` / ``phantom.png``, ``coils.cimg`` (stacked),
    ``mask.txt``, ``kspace_clean.cimg`` and ``kspace_noisy.cimg`` (stacked
    per coil) and ``manifest.json``.
    """
    ds = build_dataset(config)
    out = Path(out_dir) if out_dir is not None else Path(config.out_dir) / "dataset"
    out.mkdir(parents=True, exist_ok=True)
    io.write_complex(out / "phantom.cimg", ds.x_true)
    io.write_magnitude_png(out / "phantom.png", ds.x_true)
    io.write_stack(out / "coils.cimg", ds.coil_maps)
    io.write_mask(out / "mask.txt", ds.mask)
    io.write_stack(out / "kspace_clean.cimg", ds.y_clean.per_coil)
    io.write_stack(out / "kspace_noisy.cimg", ds.y.per_coil)
    manifest = dict(ds.manifest)
    manifest["files"] = {
        "phantom": "phantom.cimg",
        "coils": "coils.cimg",
        "mask": "mask.txt",
        "kspace_clean": "kspace_clean.cimg",
        "kspace_noisy": "kspace_noisy.cimg",
    }
    (out / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return out


_REQUIRED = ("C", "M", "N", "width", "height", "num_lines", "sigma_sq", "files")


def load_dataset(path) -> Dataset:
    """Read and validate a dataset written by :func:`synth`."""
    path = Path(path)
    try:
        manifest = json.loads((path / MANIFEST).read_text())
    except FileNotFoundError:
        raise InvalidInputError(f"{path}: no {MANIFEST}") from None
    except json.JSONDecodeError as exc:
        raise InvalidInputError(f"{path}: manifest is not valid JSON ({exc})") from None
    missing = [k for k in _REQUIRED if k not in manifest]
    if missing:
        raise InvalidInputError(f"{path}: manifest lacks {missing}")
    files = manifest["files"]
    try:
        c, w, h = int(manifest["C"]), int(manifest["width"]), int(manifest["height"])
        x = io.read_complex(path / files["phantom"])
        maps = io.read_stack(path / files["coils"], c)
        mask = io.read_mask(path / files["mask"])
        y_clean = io.read_stack(path / files["kspace_clean"], c)
        y_noisy = io.read_stack(path / files["kspace_noisy"], c)
    except (KeyError, FileNotFoundError, ValueError) as exc:
        raise InvalidInputError(f"{path}: unreadable dataset ({exc})") from None
    if x.shape != (h, w) or maps.shape != (c, h, w):
        raise InvalidInputError(f"{path}: image/coil shapes disagree with manifest")
    if mask.height != h or mask.num_lines != manifest["num_lines"]:
        raise InvalidInputError(f"{path}: mask disagrees with manifest")
    if y_noisy.shape != (c, mask.num_lines, w) or y_clean.shape != y_noisy.shape:
        raise InvalidInputError(f"{path}: k-space shape disagrees with manifest")
    if manifest["M"] != mask.num_lines * w or manifest["N"] != h * w:
        raise InvalidInputError(f"{path}: M/N in manifest are inconsistent")
    sigma_sq = float(manifest["sigma_sq"])
    return Dataset(x, maps, mask, KSpaceData(y_clean, 0.0), KSpaceData(y_noisy, sigma_sq), manifest)


def _check_consistent(config: ExperimentConfig, ds: Dataset):
    im = config.image
    if (ds.manifest["width"], ds.manifest["height"]) != (im.width, im.height):
        raise InvalidInputError("dataset dimensions do not match the config")
    if ds.manifest["C"] != config.num_coils:
        raise InvalidInputError("dataset coil count does not match the config")


@dataclass
class RunRecord:
    algorithm: str
    gamma1: float  # normalised (multiply by 1/||A||^2 for the actual stepsize)
    termination: str  # converged | max_iters | diverged
    iterations: int
    quality: Optional[QualityReport]
    iters_to_05db: Optional[int]
    final_gamma1: float
    trace_file: str
    duration_s: float
    config: dict
    error: Optional[str] = None

    @property
    def diverged(self):
        return self.termination == "diverged"

    def to_dict(self):
        d = asdict(self)
        d["quality"] = self.quality.as_dict() if self.quality is not None else None
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if d.get("quality") is not None:
            d["quality"] = QualityReport(**d["quality"])
        return cls(**d)

    def summary_row(self):
        q = self.quality
        return {
            "algorithm": self.algorithm,
            "gamma1": self.gamma1,
            "termination": self.termination,
            "iterations": self.iterations,
            "rsnr_db": q.rsnr_db if q else math.nan,
            "ssim": q.ssim if q else math.nan,
            "residual_sq": q.residual_sq if q else math.nan,
            "discrepancy_ratio": q.discrepancy_ratio if q else math.nan,
            "iters_to_0.5db": self.iters_to_05db if self.iters_to_05db is not None else "",
        }


def _fmt(v):
    return repr(v) if isinstance(v, float) else str(v)


def write_trace_csv(path, trace: IterationTrace):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(IterationTrace.COLUMNS)
        for row in trace.rows():
            writer.writerow([_fmt(v) for v in row])


def read_trace_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _write_rows(path, columns, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(row[c]) for c in columns])


def run_name(algorithm, gamma1):
    return f"{algorithm}_g{gamma1:.6g}"


def run(config: ExperimentConfig, dataset, algorithm=None, gamma1=None, out_dir=None, f=None):
    """Execute one solver on a dataset and write its outputs.

    ``dataset`` may be a :class:`Dataset` or a dataset directory.  Divergence
    is not raised; it is recorded with ``termination = "diverged"``.
    """
    ds = dataset if isinstance(dataset, Dataset) else load_dataset(dataset)
    _check_consistent(config, ds)
    algorithm = algorithm or config.solver.algorithms[0]
    gamma1 = float(gamma1 if gamma1 is not None else config.solver.gamma1)
    op = ds.operator()
    if f is None:
        f = make_denoiser(config.denoiser.name, config.denoiser.params, ds.x_true.shape)
    s = config.solver
    solver_cfg = SolverConfig(
        algorithm=algorithm,
        gamma1_init=gamma1 / op.op_norm_sq,
        beta=s.beta,
        alpha=s.alpha,
        max_iters=s.max_iters,
        rel_tol=s.rel_tol,
    )
    run_dir = Path(out_dir) if out_dir is not None else Path(config.out_dir) / "runs" / run_name(algorithm, gamma1)
    run_dir.mkdir(parents=True, exist_ok=True)
    trace_file = f"trace_{run_name(algorithm, gamma1)}.csv"

    start = time.perf_counter()
    error = None
    try:
        result = run_solver(solver_cfg, op, ds.y, f, ground_truth=ds.x_true)
        trace, x_hat = result.trace, result.x
        termination, iterations, final_gamma1 = result.termination, result.iterations, result.state.gamma1
    except DivergenceError as exc:
        log.warning("%s gamma1=%g diverged: %s", algorithm, gamma1, exc)
        trace, x_hat = getattr(exc, "trace", IterationTrace()), None
        termination, iterations, final_gamma1 = "diverged", exc.iteration, math.nan
        error = str(exc)
    duration = time.perf_counter() - start

    write_trace_csv(run_dir / trace_file, trace)
    quality = None
    if x_hat is not None:
        quality = quality_report(ds.x_true, x_hat, ds.y, op, s.beta)
        io.write_complex(run_dir / "recon.cimg", x_hat)
        io.write_magnitude_png(run_dir / "recon.png", x_hat, vmax=float(np.abs(ds.x_true).max()))
        _write_rows(run_dir / "quality.csv", tuple(quality.as_dict()), [quality.as_dict()])
    record = RunRecord(
        algorithm=algorithm,
        gamma1=gamma1,
        termination=termination,
        iterations=iterations,
        quality=quality,
        iters_to_05db=trace.iterations_to_within(0.5) if x_hat is not None else None,
        final_gamma1=final_gamma1 * op.op_norm_sq,
        trace_file=trace_file,
        duration_s=duration,
        config=config.to_dict(),
        error=error,
    )
    (run_dir / "record.json").write_text(json.dumps(record.to_dict(), indent=2, sort_keys=True) + "\n")
    return record


def sweep_cells(config: ExperimentConfig):
    grid = config.solver.gamma1_grid or (config.solver.gamma1,)
    return [(alg, float(g)) for alg in config.solver.algorithms for g in grid]


def sweep(config: ExperimentConfig, dataset, n_jobs=1, out_dir=None):
    """Run every (algorithm, gamma1) cell and write ``summary.csv``.

    A cell that fails with invalid input is recorded and the sweep continues.
    Returns the list of :class:`RunRecord` in cell order.
    """
    ds = dataset if isinstance(dataset, Dataset) else load_dataset(dataset)
    root = Path(out_dir) if out_dir is not None else Path(config.out_dir)
    cells = sweep_cells(config)
    if not cells:
        raise InvalidInputError("sweep grid is empty")

    def one(cell):
        alg, g = cell
        try:
            return run(config, ds, alg, g, out_dir=root / "runs" / run_name(alg, g))
        except InvalidInputError as exc:
            return RunRecord(alg, g, "failed", 0, None, None, math.nan, "", 0.0, config.to_dict(), str(exc))

    if n_jobs > 1:
        with ThreadPoolExecutor(n_jobs) as pool:
            records = list(pool.map(one, cells))
    else:
        records = [one(c) for c in cells]
    root.mkdir(parents=True, exist_ok=True)
    _write_rows(root / "summary.csv", SUMMARY_COLUMNS, [r.summary_row() for r in records])
    return records


def load_records(paths):
    """Collect RunRecords from record.json files or directories containing them."""
    records = []
    for p in map(Path, paths):
        files = [p] if p.is_file() else sorted(p.rglob("record.json"))
        for f in files:
            records.append(RunRecord.from_dict(json.loads(f.read_text())))
    return records


REPORT_COLUMNS = ("algorithm", "runs", "failures", "mean_rsnr_db", "mean_ssim", "mean_iters_to_0.5db")


def report(records, out_file=None):
    """Per-algorithm means over non-diverged runs.

    Diverged or failed runs are excluded from the means and counted in
    ``failures``.
    """
    if not records:
        raise InvalidInputError("report needs at least one run record")
    by_alg = {}
    for r in records:
        by_alg.setdefault(r.algorithm, []).append(r)
    rows = []
    for alg in sorted(by_alg):
        ok = [r for r in by_alg[alg] if r.quality is not None]
        its = [r.iters_to_05db for r in ok if r.iters_to_05db is not None]
        rows.append(
            {
                "algorithm": alg,
                "runs": len(by_alg[alg]),
                "failures": len(by_alg[alg]) - len(ok),
                "mean_rsnr_db": float(np.mean([r.quality.rsnr_db for r in ok])) if ok else math.nan,
                "mean_ssim": float(np.mean([r.quality.ssim for r in ok])) if ok else math.nan,
                "mean_iters_to_0.5db": float(np.mean(its)) if its else math.nan,
            }
        )
    if out_file is not None:
        _write_rows(out_file, REPORT_COLUMNS, rows)
    return rows


def ensemble_configs(config: ExperimentConfig, variants=range(10)):
    """Copies of ``config`` over phantom variants (rotation/intensity seeds)."""
    return [replace(config, image=replace(config.image, variant=v)) for v in variants]

"""Experiment configuration, stored as JSON.

Stepsizes in the config are *normalised*: a value ``g`` means
``gamma1 = g / ||A||^2``, so grids read the same for any operator scaling.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional

from ..errors import InvalidInputError
from ..forward_model import PHANTOM_KINDS
from ..solvers import ALGORITHMS


@dataclass(frozen=True)
class ImageSpec:
    width: int = 128
    height: int = 128
    kind: str = "ellipse-phantom"
    variant: Optional[int] = None


@dataclass(frozen=True)
class MaskSpec:
    acceleration: float = 4.0
    acs_lines: int = 8
    seed: int = 0


@dataclass(frozen=True)
class NoiseSpec:
    snr_db: float = 20.0  # inf disables noise
    seed: int = 0


@dataclass(frozen=True)
class DenoiserSpec:
    name: str = "wavelet"
    params: dict = field(default_factory=lambda: {"threshold": 0.03, "levels": 3})


@dataclass(frozen=True)
class SolverSpec:
    algorithms: tuple = ("ATM2",)
    gamma1: float = 1.0
    gamma1_grid: Optional[tuple] = None
    beta: float = 0.95
    alpha: float = 0.2
    max_iters: int = 200
    rel_tol: float = 1e-6


@dataclass(frozen=True)
class ExperimentConfig:
    image: ImageSpec = field(default_factory=ImageSpec)
    num_coils: int = 4
    mask: MaskSpec = field(default_factory=MaskSpec)
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    denoiser: DenoiserSpec = field(default_factory=DenoiserSpec)
    solver: SolverSpec = field(default_factory=SolverSpec)
    out_dir: str = "out"

    def __post_init__(self):
        validate(self)

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d):
        try:
            solver = dict(d.get("solver", {}))
            for key in ("algorithms", "gamma1_grid"):
                if solver.get(key) is not None:
                    solver[key] = tuple(solver[key])
            return cls(
                image=ImageSpec(**d.get("image", {})),
                num_coils=d.get("num_coils", 4),
                mask=MaskSpec(**d.get("mask", {})),
                noise=NoiseSpec(**d.get("noise", {})),
                denoiser=DenoiserSpec(**d.get("denoiser", {})),
                solver=SolverSpec(**solver),
                out_dir=d.get("out_dir", "out"),
            )
        except TypeError as exc:
            raise InvalidInputError(f"bad config: {exc}") from None

    @classmethod
    def from_json(cls, text):
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise InvalidInputError(f"config is not valid JSON: {exc}") from None

    def save(self, path):
        Path(path).write_text(self.to_json() + "\n")

    @classmethod
    def load(cls, path):
        return cls.from_json(Path(path).read_text())

    def with_overrides(self, seed=None, out_dir=None, algorithm=None, gamma1=None, snr_db=None):
        """Apply command-line style overrides (``None`` leaves a field alone)."""
        cfg = self
        if seed is not None:
            cfg = replace(cfg, mask=replace(cfg.mask, seed=seed), noise=replace(cfg.noise, seed=seed))
        if snr_db is not None:
            cfg = replace(cfg, noise=replace(cfg.noise, snr_db=snr_db))
        if algorithm is not None:
            cfg = replace(cfg, solver=replace(cfg.solver, algorithms=(algorithm,)))
        if gamma1 is not None:
            cfg = replace(cfg, solver=replace(cfg.solver, gamma1=gamma1, gamma1_grid=None))
        if out_dir is not None:
            cfg = replace(cfg, out_dir=str(out_dir))
        return cfg


def validate(cfg: ExperimentConfig):
    im = cfg.image
    if im.kind not in PHANTOM_KINDS:
        raise InvalidInputError(f"unknown phantom kind {im.kind!r}")
    if im.width < 8 or im.height < 8:
        raise InvalidInputError("image must be at least 8x8")
    if cfg.num_coils < 1:
        raise InvalidInputError("num_coils must be >= 1")
    if not cfg.mask.acceleration >= 1:
        raise InvalidInputError("acceleration must be >= 1")
    if math.isnan(cfg.noise.snr_db):
        raise InvalidInputError("snr_db must be a number or inf")
    s = cfg.solver
    if not s.algorithms or any(a not in ALGORITHMS for a in s.algorithms):
        raise InvalidInputError(f"algorithms must be drawn from {ALGORITHMS}")
    if not s.gamma1 > 0:
        raise InvalidInputError("gamma1 must be positive")
    if s.gamma1_grid is not None and (not s.gamma1_grid or min(s.gamma1_grid) <= 0):
        raise InvalidInputError("gamma1_grid must be a nonempty list of positive values")
    if not 0 < s.beta <= 1 or not 0 < s.alpha <= 1:
        raise InvalidInputError("beta and alpha must lie in (0, 1]")
    if s.max_iters < 1:
        raise InvalidInputError("max_iters must be >= 1")


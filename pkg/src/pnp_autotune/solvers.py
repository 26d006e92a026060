"""Plug-and-play primal-dual splitting with fixed and autotuned stepsizes.

Four variants share one iteration loop:

``PDS``
    Quadratic-loss PnP-PDS with a fixed primal stepsize ``gamma1``.
``ATO``
    PnP-PDS with the indicator loss ``||y - z||^2 <= beta*C*M*sigma^2``; the
    dual step is a scaled projection and the stepsizes stay fixed.
``ATM1``
    Quadratic-loss PnP-PDS whose ``gamma1`` is rescaled multiplicatively by
    ``||y - A x_k||^2 / (beta*C*M*sigma^2)`` every 5th iteration from k = 20.
``ATM2``
    Damped multiplicative ``gamma1`` update with residual-triggered restarts
    and escalation of the restart value.

In every variant ``gamma2 = 1 / (gamma1 * ||A||^2)``.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, NamedTuple, Optional

import numpy as np

from .errors import DivergenceError, InvalidInputError
from .forward_model import ForwardOperator, KSpaceData
from .metrics import rsnr_db

__all__ = [
    "ALGORITHMS",
    "SolverConfig",
    "SolverState",
    "IterationTrace",
    "SolverResult",
    "ATM2Update",
    "initial_state",
    "pds_step",
    "ato_step",
    "fixed_point_residual",
    "atm1_gamma_update",
    "atm2_gamma_update",
    "run_pnp_pds",
    "run_pds_ato",
    "run_pds_atm1",
    "run_pds_atm2",
    "run_solver",
    "genie_tune",
    "default_gamma_grid",
]

ALGORITHMS = ("PDS", "ATO", "ATM1", "ATM2")

# Abort when the data residual grows this much beyond its starting value.
DIVERGENCE_FACTOR = 1e6


@dataclass(frozen=True)
class SolverConfig:
    """Parameters of one solver run.

    ``rel_tol = inf`` disables the relative-change stopping test, so exactly
    ``max_iters`` iterations run.  ``autotune = False`` freezes the stepsizes
    of ATM1/ATM2, which then reproduce plain PDS.
    """

    algorithm: str = "PDS"
    gamma1_init: float = 1.0
    beta: float = 0.95
    alpha: float = 0.2
    max_iters: int = 200
    rel_tol: float = 1e-6
    record_trace: bool = True
    autotune: bool = True

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise InvalidInputError(f"unknown algorithm {self.algorithm!r}")
        if not (self.gamma1_init > 0 and math.isfinite(self.gamma1_init)):
            raise InvalidInputError("gamma1_init must be positive and finite")
        if not 0 < self.beta <= 1:
            raise InvalidInputError("beta must lie in (0, 1]")
        if not 0 < self.alpha <= 1:
            raise InvalidInputError("alpha must lie in (0, 1]")
        if self.max_iters < 1:
            raise InvalidInputError("max_iters must be >= 1")
        if not self.rel_tol >= 0:
            raise InvalidInputError("rel_tol must be non-negative")


@dataclass(frozen=True)
class SolverState:
    """Iterate ``(x_k, v_k)`` plus the stepsize bookkeeping of ATM2.

    ``gamma1_0`` is the value a restart resets ``gamma1`` to.
    """

    x: np.ndarray
    v: np.ndarray
    gamma1: float
    gamma2: float
    gamma1_0: float
    restart_now: bool = False
    restart_allowed: bool = True
    iter: int = 0


def initial_state(op: ForwardOperator, gamma1: float, x0, v0=None) -> SolverState:
    x0 = np.array(x0, dtype=np.complex128, copy=True)
    if v0 is None:
        v0 = np.zeros(op.kspace_shape, dtype=np.complex128)
    return SolverState(
        x=x0,
        v=np.array(v0, dtype=np.complex128, copy=True),
        gamma1=float(gamma1),
        gamma2=1.0 / (gamma1 * op.op_norm_sq),
        gamma1_0=float(gamma1),
    )


def _check_shapes(state, op, y):
    if state.x.shape != op.image_shape:
        raise InvalidInputError(f"x shape {state.x.shape} != {op.image_shape}")
    if state.v.shape != op.kspace_shape or y.per_coil.shape != op.kspace_shape:
        raise InvalidInputError(
            f"dual/measurement shape does not match operator {op.kspace_shape}"
        )


def pds_step(state: SolverState, op: ForwardOperator, y: KSpaceData, f) -> SolverState:
    """One quadratic-loss PnP-PDS iteration.

    ``x_k = f(x_{k-1} - g1 A^H v_{k-1})`` followed by
    ``v_k = v_{k-1}/(1+g2) + g2/(1+g2) (A(2x_k - x_{k-1}) - y)``.
    """
    _check_shapes(state, op, y)
    g1, g2 = state.gamma1, state.gamma2
    x = f(state.x - g1 * op.adjoint(state.v))
    v = state.v / (1.0 + g2) + (g2 / (1.0 + g2)) * (
        op.forward(2.0 * x - state.x) - y.per_coil
    )
    return replace(state, x=x, v=v, iter=state.iter + 1)


def ato_step(
    state: SolverState,
    op: ForwardOperator,
    y: KSpaceData,
    f,
    beta: float = 0.95,
    sigma_sq: Optional[float] = None,
) -> SolverState:
    """One indicator-loss PnP-PDS iteration.

    The dual update scales ``u = v + g2 (A(2x_k - x_{k-1}) - y)`` by
    ``max(0, 1 - g2 sqrt(beta C M) sigma / ||u||)``.
    """
    _check_shapes(state, op, y)
    if sigma_sq is None:
        sigma_sq = y.sigma_sq
    g1, g2 = state.gamma1, state.gamma2
    x = f(state.x - g1 * op.adjoint(state.v))
    u = state.v + g2 * (op.forward(2.0 * x - state.x) - y.per_coil)
    norm_u = float(np.linalg.norm(u))
    radius = g2 * math.sqrt(beta * y.total_samples * sigma_sq)
    if norm_u == 0.0 or norm_u <= radius:
        v = np.zeros_like(u)
    else:
        v = (1.0 - radius / norm_u) * u
    return replace(state, x=x, v=v, iter=state.iter + 1)


def fixed_point_residual(x, op: ForwardOperator, y: KSpaceData, gamma1: float, f, eps=1e-12):
    """``||x - f(x - gamma1 A^H (A x - y))|| / max(||x||, eps)``."""
    if not gamma1 > 0:
        raise InvalidInputError("gamma1 must be positive")
    x = np.asarray(x)
    grad = op.adjoint(op.forward(x) - y.per_coil)
    return float(np.linalg.norm(x - f(x - gamma1 * grad)) / max(np.linalg.norm(x), eps))


def atm1_gamma_update(k: int, gamma1_prev: float, residual: float, target: float) -> float:
    """Multiplicative update applied only when ``k > 19`` and ``k % 5 == 0``."""
    if k > 19 and k % 5 == 0:
        return gamma1_prev * residual / target
    return gamma1_prev


class ATM2Update(NamedTuple):
    gamma1: float
    gamma1_0: float
    restart_now: bool
    restart_allowed: bool
    restart_fired: bool


def atm2_gamma_update(
    k: int,
    gamma1_prev: float,
    gamma1_prev2: Optional[float],
    gamma1_0: float,
    restart_allowed: bool,
    residual: float,
    residual_prev: float,
    target: float,
    alpha: float,
) -> ATM2Update:
    """Stepsize logic of ATM2 for iteration ``k`` (after x_k, v_k are formed).

    Parameters
    ----------
    gamma1_prev, gamma1_prev2 : float
        ``gamma1`` at iterations k-1 and k-2 (``gamma1_prev2`` is unused
        while ``k <= 2``).
    gamma1_0 : float
        Current restart value.
    residual, residual_prev : float
        ``||y - A x_k||^2`` and ``||y - A x_{k-1}||^2``.
    target : float
        ``beta * C * M * sigma^2``.
    """
    restart_now = residual > residual_prev
    if residual < target:
        restart_allowed = False
    elif residual > 1.1 * target:
        restart_allowed = True

    fired = restart_allowed and restart_now
    if fired:
        gamma1 = gamma1_0
    else:
        gamma1 = alpha * gamma1_prev * residual / target + (1.0 - alpha) * gamma1_prev

    # exact equality: only repeated restarts to the same stored value trigger it
    if k > 2 and gamma1 == gamma1_prev == gamma1_prev2:
        gamma1_0 = 10.0 * gamma1_0
    return ATM2Update(gamma1, gamma1_0, restart_now, restart_allowed, fired)


@dataclass
class IterationTrace:
    """Per-iteration diagnostics of a run.

    ``rsnr_db`` holds NaN when no ground truth was supplied and
    ``fp_residual`` holds NaN when tracing was disabled.
    """

    target: float = math.nan
    iters: list = field(default_factory=list)
    residual_sq: list = field(default_factory=list)
    gamma1: list = field(default_factory=list)
    rsnr_db: list = field(default_factory=list)
    fp_residual: list = field(default_factory=list)
    restart_fired: list = field(default_factory=list)

    COLUMNS = ("iter", "residual_sq", "target", "gamma1", "rsnr_db", "fp_residual", "restart_fired")

    def append(self, k, residual, gamma1, rsnr=math.nan, fp=math.nan, fired=False):
        self.iters.append(k)
        self.residual_sq.append(residual)
        self.gamma1.append(gamma1)
        self.rsnr_db.append(rsnr)
        self.fp_residual.append(fp)
        self.restart_fired.append(bool(fired))

    def __len__(self):
        return len(self.iters)

    def rows(self):
        for i in range(len(self)):
            yield (
                self.iters[i],
                self.residual_sq[i],
                self.target,
                self.gamma1[i],
                self.rsnr_db[i],
                self.fp_residual[i],
                int(self.restart_fired[i]),
            )

    def iterations_to_within(self, db=0.5):
        """First iteration whose rSNR is within ``db`` of the final rSNR."""
        if not self.rsnr_db:
            return None
        final = self.rsnr_db[-1]
        if math.isnan(final):
            return None
        for k, r in zip(self.iters, self.rsnr_db):
            if r == final or abs(r - final) <= db:
                return k
        return self.iters[-1]


@dataclass
class SolverResult:
    x: np.ndarray
    trace: IterationTrace
    state: SolverState
    termination: str  # "converged" or "max_iters"

    @property
    def iterations(self):
        return self.state.iter


def _residual_sq(op, y, x):
    r = y.per_coil - op.forward(x)
    return float(np.vdot(r, r).real)


def _iterate(config, op, y, f, x0, ground_truth, algorithm):
    if x0 is None:
        x0 = op.adjoint(y.per_coil)
    target = config.beta * y.total_samples * y.sigma_sq
    if algorithm in ("ATM1", "ATM2") and not y.sigma_sq > 0:
        raise InvalidInputError(f"{algorithm} needs a positive noise variance")
    norm_sq = op.op_norm_sq
    if not norm_sq > 0:
        raise InvalidInputError("operator norm estimate is zero")
    state = initial_state(op, config.gamma1_init, x0)
    trace = IterationTrace(target=target)
    residual_prev = _residual_sq(op, y, state.x)
    blowup_ref = residual_prev if residual_prev > 0 else float(np.vdot(y.per_coil, y.per_coil).real)
    gamma1_hist = [state.gamma1]  # gamma1_{k-1}, gamma1_{k-2}, ...
    termination = "max_iters"

    for k in range(1, config.max_iters + 1):
        x_prev = state.x
        if algorithm == "ATO":
            state = ato_step(state, op, y, f, config.beta, y.sigma_sq)
        else:
            state = pds_step(state, op, y, f)
        if not (np.all(np.isfinite(state.x)) and np.all(np.isfinite(state.v))):
            raise DivergenceError(k, "non-finite iterate")
        residual = _residual_sq(op, y, state.x)
        if blowup_ref > 0 and residual > DIVERGENCE_FACTOR * blowup_ref:
            raise DivergenceError(k, f"residual grew beyond {DIVERGENCE_FACTOR:g}x its initial value")

        fired = False
        if config.autotune and algorithm == "ATM1":
            g1 = atm1_gamma_update(k, state.gamma1, residual, target)
            state = replace(state, gamma1=g1, gamma2=1.0 / (g1 * norm_sq))
        elif config.autotune and algorithm == "ATM2":
            upd = atm2_gamma_update(
                k,
                state.gamma1,
                gamma1_hist[-2] if len(gamma1_hist) > 1 else None,
                state.gamma1_0,
                state.restart_allowed,
                residual,
                residual_prev,
                target,
                config.alpha,
            )
            fired = upd.restart_fired
            state = replace(
                state,
                gamma1=upd.gamma1,
                gamma2=1.0 / (upd.gamma1 * norm_sq),
                gamma1_0=upd.gamma1_0,
                restart_now=upd.restart_now,
                restart_allowed=upd.restart_allowed,
            )
        if not math.isfinite(state.gamma1) or state.gamma1 <= 0:
            raise DivergenceError(k, f"stepsize gamma1 became {state.gamma1}")
        gamma1_hist = [gamma1_hist[-1], state.gamma1]

        if config.record_trace:
            rsnr = rsnr_db(ground_truth, state.x) if ground_truth is not None else math.nan
            fp = fixed_point_residual(state.x, op, y, state.gamma1, f)
            trace.append(k, residual, state.gamma1, rsnr, fp, fired)
        residual_prev = residual

        if math.isfinite(config.rel_tol) and k > 1:
            # skip k = 1 (x_1 = f(x_0) has not seen the data yet) and zero
            # iterates, where the dual may still be moving
            prev_norm = np.linalg.norm(x_prev)
            if prev_norm > 0 and np.linalg.norm(state.x - x_prev) < config.rel_tol * prev_norm:
                termination = "converged"
                break

    if not config.record_trace and ground_truth is not None:
        trace.append(state.iter, residual_prev, state.gamma1, rsnr_db(ground_truth, state.x))
    return SolverResult(state.x, trace, state, termination)


def _run_checked(expected, config, op, y, f, x0, ground_truth):
    if config.algorithm != expected:
        raise InvalidInputError(f"config.algorithm is {config.algorithm!r}, expected {expected!r}")
    return _iterate(config, op, y, f, x0, ground_truth, expected)


def run_pnp_pds(config, op, y, f, x0=None, ground_truth=None) -> SolverResult:
    """Quadratic-loss PnP-PDS with fixed ``gamma1 = config.gamma1_init``.

    ``x0`` defaults to the zero-filled image ``A^H y``; ``v0`` is zero.
    Raises :class:`DivergenceError` if an iterate becomes non-finite.
    """
    return _run_checked("PDS", config, op, y, f, x0, ground_truth)


def run_pds_ato(config, op, y, f, x0=None, ground_truth=None) -> SolverResult:
    """Indicator-loss PnP-PDS; the fixed point does not depend on ``gamma1``."""
    return _run_checked("ATO", config, op, y, f, x0, ground_truth)


def run_pds_atm1(config, op, y, f, x0=None, ground_truth=None) -> SolverResult:
    return _run_checked("ATM1", config, op, y, f, x0, ground_truth)


def run_pds_atm2(config, op, y, f, x0=None, ground_truth=None) -> SolverResult:
    """Damped, restarting autotuned PnP-PDS (see :func:`atm2_gamma_update`)."""
    return _run_checked("ATM2", config, op, y, f, x0, ground_truth)


_RUNNERS: dict[str, Callable] = {
    "PDS": run_pnp_pds,
    "ATO": run_pds_ato,
    "ATM1": run_pds_atm1,
    "ATM2": run_pds_atm2,
}


def run_solver(config, op, y, f, x0=None, ground_truth=None) -> SolverResult:
    """Dispatch on ``config.algorithm``."""
    return _RUNNERS[config.algorithm](config, op, y, f, x0, ground_truth)


def default_gamma_grid(norm_sq=1.0, num=25, low=1e-2, high=1e2):
    """Log-spaced ``gamma1`` values spanning ``[low, high] / ||A||^2``."""
    return list(np.logspace(math.log10(low), math.log10(high), num) / norm_sq)


def genie_tune(grid, op, y, f, x0=None, ground_truth=None, config=None, n_jobs=1):
    """Pick the fixed ``gamma1`` that maximises the final rSNR of PDS.

    Diverged runs score ``-inf``; ties go to the smaller ``gamma1``.

    Returns
    -------
    best_gamma1 : float
    best_result : SolverResult
    """
    if ground_truth is None:
        raise InvalidInputError("genie tuning needs the ground truth image")
    grid = sorted(float(g) for g in grid)
    if not grid:
        raise InvalidInputError("gamma1 grid is empty")
    base = config if config is not None else SolverConfig()
    base = replace(base, algorithm="PDS")

    def score(gamma1):
        cfg = replace(base, gamma1_init=gamma1)
        try:
            res = run_pnp_pds(cfg, op, y, f, x0, ground_truth)
        except DivergenceError:
            return -math.inf, None
        return rsnr_db(ground_truth, res.x), res

    op.op_norm_sq  # compute the cached norm before any threads start
    if n_jobs > 1:
        with ThreadPoolExecutor(n_jobs) as pool:
            scored = list(pool.map(score, grid))
    else:
        scored = [score(g) for g in grid]

    best = None
    for gamma1, (value, res) in zip(grid, scored):
        if res is not None and (best is None or value > best[1]):
            best = (gamma1, value, res)
    if best is None:
        raise DivergenceError(0, "every genie grid run diverged")
    return best[0], best[2]

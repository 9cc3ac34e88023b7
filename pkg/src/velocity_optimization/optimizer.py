"""Direct coarse-to-fine optimisation of a stationary velocity field under the registration loss."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, List, NamedTuple, Optional, Tuple, Type

import numpy as np

from registration_loss import LossReport, total_loss
from spatial_transform import exp_svf, gaussian_smooth, jacobian, warp_scalar, warp_tensor_components
from tensor_reorientation import ReorientationError, check_orientation, reorient_field_counted
from volume_io import GridSpec, ScalarVolume, TensorVolume, VectorField, VectorKind, assert_same_grid

from .config import RegistrationConfig
from .control_grid import ControlGrid, promote, upsample_control

logger = logging.getLogger(__name__)


class NonFiniteLossError(RuntimeError):
    def __init__(self, message: str, report: Optional[LossReport] = None):
        super().__init__(message)
        self.report = report


@dataclass(frozen=True)
class RegistrationInputs:
    """Fixed/moving T2w (required) and fixed/moving tensors (optional, always as a pair)."""

    fixed_t2w: ScalarVolume
    moving_t2w: ScalarVolume
    fixed_dti: Optional[TensorVolume] = None
    moving_dti: Optional[TensorVolume] = None
    mask: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        assert_same_grid(self.fixed_t2w, self.moving_t2w)
        if (self.fixed_dti is None) != (self.moving_dti is None):
            raise ValueError("fixed and moving tensor volumes must be given together")
        if self.fixed_dti is not None:
            assert_same_grid(self.fixed_t2w, self.fixed_dti)
            assert_same_grid(self.fixed_t2w, self.moving_dti)

    @property
    def grid(self) -> GridSpec:
        return self.fixed_t2w.grid

    @property
    def has_dti(self) -> bool:
        return self.fixed_dti is not None


class WarpedMoving(NamedTuple):
    t2w: ScalarVolume
    dti: Optional[TensorVolume]
    substituted: int


@dataclass(frozen=True)
class TraceEntry:
    level: int
    iteration: int
    step: float
    report: LossReport
    event: str = "accept"


class RegistrationResult(NamedTuple):
    control: ControlGrid
    velocity: VectorField
    displacement: VectorField
    trace: List[TraceEntry]
    report: LossReport


def warp_moving(inputs: RegistrationInputs, phi: VectorField, *, strict: bool = True, with_dti: bool = True) -> WarpedMoving:
    """Warp the moving T2w and, when present, component-warp then reorient the moving tensors."""

    moved_t2w = warp_scalar(inputs.moving_t2w, phi)
    if not (with_dti and inputs.has_dti):
        return WarpedMoving(moved_t2w, None, 0)
    moved_dti, substituted = reorient_field_counted(
        warp_tensor_components(inputs.moving_dti, phi), phi, strict=strict
    )
    return WarpedMoving(moved_t2w, moved_dti, substituted)


def _smoothed_exp(raw: np.ndarray, grid: GridSpec, cfg: RegistrationConfig):
    velocity = gaussian_smooth(VectorField(grid, VectorKind.VELOCITY, raw), cfg.sigma_mm)
    return velocity, exp_svf(velocity, cfg.steps)


def _dense(cg: ControlGrid, grid: GridSpec, base: Optional[np.ndarray]) -> np.ndarray:
    raw = upsample_control(cg, grid).data
    return raw if base is None else raw + base


def _loss_of_dense(raw: np.ndarray, inputs: RegistrationInputs, cfg: RegistrationConfig) -> LossReport:
    _, phi = _smoothed_exp(raw, inputs.grid, cfg)
    use_dti = inputs.has_dti and cfg.weights.alpha > 0
    if cfg.strict_folds and not use_dti:
        # same voxels and thresholds the tensor reorientation enforces
        check_orientation(jacobian(phi).data)
    moved = warp_moving(inputs, phi, strict=cfg.strict_folds, with_dti=use_dti)
    return total_loss(
        inputs.fixed_t2w,
        moved.t2w,
        inputs.fixed_dti if use_dti else None,
        moved.dti,
        phi,
        cfg.weights,
        inputs.mask,
    )


def evaluate(
    cg: ControlGrid,
    inputs: RegistrationInputs,
    cfg: RegistrationConfig,
    base: Optional[np.ndarray] = None,
) -> LossReport:
    """Upsample, smooth, exponentiate, warp (and reorient), then score.

    With ``cfg.strict_folds`` a singular or folded deformation raises a
    ReorientationError whether or not tensors take part in the loss.

    ``base`` is an optional dense velocity residual added to the upsampled
    control field; it carries the part of a coarser level that the current
    control grid cannot represent.
    """

    return _loss_of_dense(_dense(cg, inputs.grid, base), inputs, cfg)


def central_differences(
    x0: np.ndarray,
    objective: Callable[[np.ndarray], float],
    epsilon: float,
    workers: int = 1,
    rejects: Tuple[Type[BaseException], ...] = (),
) -> np.ndarray:
    """g_i = (E(x + eps e_i) - E(x - eps e_i)) / 2 eps, evaluations recombined in index order.

    A perturbed evaluation whose objective raises one of ``rejects`` is treated like a rejected
    line-search trial: that coordinate gets a zero gradient.
    """

    if epsilon <= 0:
        raise ValueError(f"epsilon must be > 0, got {epsilon}")
    x0 = np.asarray(x0, dtype=np.float64)

    def perturbed(index: int) -> Tuple[float, bool]:
        i, sign = divmod(index, 2)
        x = x0.copy()
        x[i] += epsilon if sign == 0 else -epsilon
        try:
            return float(objective(x)), True
        except rejects as exc:
            logger.debug("[register] perturbation %d rejected: %s", index, exc)
            return float("nan"), False

    indices = range(2 * x0.size)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(perturbed, indices))
    else:
        results = [perturbed(i) for i in indices]

    values = np.array([value for value, _ in results], dtype=np.float64)
    usable = np.array([ok for _, ok in results], dtype=bool)
    if not np.all(np.isfinite(values[usable])):
        raise NonFiniteLossError("non-finite loss in the finite-difference gradient")

    both = usable[0::2] & usable[1::2]
    if not np.all(both):
        logger.debug("[register] %d coordinate(s) with a rejected perturbation", int(np.count_nonzero(~both)))
    gradient = np.zeros(x0.size)
    gradient[both] = (values[0::2][both] - values[1::2][both]) / (2.0 * epsilon)
    return gradient


def fd_gradient(
    cg: ControlGrid,
    inputs: Optional[RegistrationInputs],
    cfg: RegistrationConfig,
    *,
    objective: Optional[Callable[[np.ndarray], float]] = None,
    base: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Central finite-difference gradient of the total loss w.r.t. the flattened control parameters.

    ``objective`` replaces the loss with any function of the flat parameter vector.
    """

    if objective is None:
        if inputs is None:
            raise ValueError("inputs are required unless an objective is supplied")

        def objective(flat: np.ndarray) -> float:
            return evaluate(cg.with_flat(flat), inputs, cfg, base).total

        return central_differences(
            cg.flat(), objective, cfg.fd_epsilon, cfg.workers, rejects=(ReorientationError,)
        )

    return central_differences(cg.flat(), objective, cfg.fd_epsilon, cfg.workers)


def _checked(report: LossReport, where: str) -> LossReport:
    if not report.is_finite():
        raise NonFiniteLossError(f"non-finite loss {where}: {report}", report)
    return report


def register(inputs: RegistrationInputs, cfg: RegistrationConfig) -> RegistrationResult:
    """Coarse-to-fine gradient descent with backtracking line search.

    Accepted iterations strictly decrease the total loss, so the returned state
    is never worse than the identity it starts from.
    """

    grid = inputs.grid
    n_levels = len(cfg.levels)
    cg = ControlGrid.zeros(cfg.levels[0])
    base = np.zeros(grid.shape + (3,))

    best_raw = _dense(cg, grid, base)
    report = _checked(_loss_of_dense(best_raw, inputs, cfg), "at the identity")
    trace: List[TraceEntry] = [TraceEntry(level=0, iteration=0, step=0.0, report=report, event="initial")]
    logger.info(
        "[register] start total=%.6f ncc=%.6f eds=%.6g be=%.6g dti=%s",
        report.total, report.ncc, report.eds, report.be, inputs.has_dti and cfg.weights.alpha > 0,
    )

    for level, shape in enumerate(cfg.levels):
        if level > 0:
            fine = promote(cg, shape, grid)
            # keep the represented velocity unchanged across the promotion
            base = base + upsample_control(cg, grid).data - upsample_control(fine, grid).data
            cg = fine
            trace.append(TraceEntry(level=level, iteration=0, step=0.0, report=report, event="promote"))

        step = cfg.initial_step
        logger.info("[register] level %d/%d control grid %s (%d params)", level + 1, n_levels, shape, cg.size)
        for iteration in range(1, cfg.iterations + 1):
            gradient = fd_gradient(cg, inputs, cfg, base=base)
            gmax = float(np.max(np.abs(gradient))) if gradient.size else 0.0
            if gmax == 0.0:
                logger.info("[register] level %d: zero gradient at iter %d", level + 1, iteration)
                break
            direction = -gradient / gmax

            accepted = None
            trial_step = step
            for _ in range(cfg.max_halvings + 1):
                trial = cg.with_flat(cg.flat() + trial_step * direction)
                trial_raw = _dense(trial, grid, base)
                try:
                    trial_report = _checked(_loss_of_dense(trial_raw, inputs, cfg), "during line search")
                except ReorientationError as exc:
                    logger.debug("[register] trial step %.3g rejected: %s", trial_step, exc)
                    trial_step *= 0.5
                    continue
                if trial_report.total < report.total:
                    accepted = (trial, trial_raw, trial_report)
                    break
                trial_step *= 0.5

            if accepted is None:
                logger.warning("[register] level %d: line search exhausted at iter %d", level + 1, iteration)
                break

            decrease = report.total - accepted[2].total
            cg, best_raw, report = accepted
            trace.append(TraceEntry(level=level, iteration=iteration, step=trial_step, report=report))
            logger.debug(
                "[register] level %d/%d iter %d total=%.6f step=%.3g",
                level + 1, n_levels, iteration, report.total, trial_step,
            )
            step = trial_step * cfg.step_growth
            if decrease < cfg.tolerance:
                logger.info("[register] level %d: decrease %.3g below tolerance", level + 1, decrease)
                break

        logger.info("[register] level %d/%d done total=%.6f", level + 1, n_levels, report.total)

    velocity, displacement = _smoothed_exp(best_raw, grid, cfg)
    return RegistrationResult(cg, velocity, displacement, trace, report)

"""Central finite-difference verification of analytic gradients."""

from __future__ import annotations

import logging
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field

import numpy as np

from jtft.constants import GRADCHECK_FLOOR, GRADCHECK_H, GRADCHECK_MAX_COORDS, GRADCHECK_TOL
from jtft.core.errors import InvalidCheckError, ParameterError
from jtft.core.tensor import Tape, Tensor, backward

logger = logging.getLogger("jtft.gradcheck")


@dataclass
class CoordinateError:
    param: str
    index: tuple[int, ...]
    analytic: float
    numeric: float
    rel_error: float


@dataclass
class GradcheckReport:
    """Outcome of a finite-difference check over a list of parameters."""

    tol: float
    max_rel_error: float = 0.0
    checked: int = 0
    per_param: dict[str, float] = field(default_factory=dict)
    failures: list[CoordinateError] = field(default_factory=list)
    worst: CoordinateError | None = None

    @property
    def passed(self) -> bool:
        return not self.failures


def relative_error(analytic: float, numeric: float, floor: float = GRADCHECK_FLOOR) -> float:
    """|a - n| over max(|a|, |n|, floor); the floor keeps near-zero gradients absolute."""
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def _coordinates(size: int, max_coords: int, rng: np.random.Generator) -> np.ndarray:
    if size <= max_coords:
        return np.arange(size)
    return np.sort(rng.choice(size, size=max_coords, replace=False))


def finite_diff_gradcheck(
    f: Callable[[], Tensor],
    params: Sequence[Tensor],
    h: float = GRADCHECK_H,
    tol: float = GRADCHECK_TOL,
    *,
    names: Sequence[str] | None = None,
    rng: np.random.Generator | None = None,
    max_coords: int = GRADCHECK_MAX_COORDS,
    floor: float = GRADCHECK_FLOOR,
) -> GradcheckReport:
    """Compare backward() against (f(θ+h) − f(θ−h)) / 2h coordinate by coordinate.

    ``f`` takes no arguments and reads the parameters it closes over; it must be
    deterministic (dropout off). Parameters with more than ``max_coords``
    entries are checked on a random subset. Existing gradient slots are restored.
    """
    if h <= 0:
        raise ParameterError(f"Finite-difference step must be positive, got {h}")
    rng = rng if rng is not None else np.random.default_rng(0)
    if names is None:
        names = [p.name or f"param{i}" for i, p in enumerate(params)]

    first, second = float(f()), float(f())
    if first != second:
        raise InvalidCheckError(
            "Function under gradient check is not deterministic",
            f"f evaluated to {first!r} then {second!r}",
        )

    saved = [p.grad for p in params]
    for p in params:
        p.grad = None
    with Tape() as tape:
        loss = f()
    backward(loss, tape)
    analytic = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in params]
    for p, g in zip(params, saved, strict=True):
        p.grad = g

    report = GradcheckReport(tol=tol)
    for name, p, grad in zip(names, params, analytic, strict=True):
        worst_here = 0.0
        for flat in _coordinates(p.size, max_coords, rng):
            original = p.data.flat[flat]
            p.data.flat[flat] = original + h
            plus = float(f())
            p.data.flat[flat] = original - h
            minus = float(f())
            p.data.flat[flat] = original

            numeric = (plus - minus) / (2.0 * h)
            a = float(grad.flat[flat])
            err = relative_error(a, numeric, floor)
            report.checked += 1
            worst_here = max(worst_here, err)
            index = tuple(int(i) for i in np.unravel_index(flat, p.shape))
            coord = CoordinateError(name, index, a, numeric, err)
            if report.worst is None or err > report.worst.rel_error:
                report.worst = coord
            if err > tol:
                report.failures.append(coord)
        report.per_param[name] = worst_here
        report.max_rel_error = max(report.max_rel_error, worst_here)
        logger.debug("gradcheck %s: max rel err %.3e", name, worst_here)

    return report

"""
Finite-difference gradient checking.

The forward pass is replayed in 64-bit so a 1e-3 relative tolerance on
central differences is meaningful.
"""

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from core.logging.logger import get_logger
from engine.tensor import Graph, Tensor, backward, precision

logger = get_logger(__name__)

Coordinate = Tuple[str, Tuple[int, ...]]
GradHook = Callable[[Dict[str, np.ndarray]], None]


@dataclass
class GradCheckEntry:
    """One sampled parameter coordinate"""

    tensor: str
    index: Tuple[int, ...]
    analytic: float
    numeric: float
    rel_error: float
    passed: bool


@dataclass
class GradCheckReport:
    """Outcome of a gradient check"""

    entries: List[GradCheckEntry] = field(default_factory=list)
    tolerance: float = 1e-3

    @property
    def max_rel_error(self) -> float:
        return max((e.rel_error for e in self.entries), default=0.0)

    @property
    def passed(self) -> bool:
        return all(e.passed for e in self.entries)

    @property
    def failing_tensors(self) -> List[str]:
        return sorted({e.tensor for e in self.entries if not e.passed})


def relative_error(analytic: float, numeric: float, floor: float = 1e-6) -> float:
    """|a - n| / max(|a|, |n|, floor); the floor keeps near-zero gradients from blowing up"""
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def sample_coordinates(
    tensors: Mapping[str, Tensor],
    min_samples: int,
    rng: np.random.Generator,
) -> List[Coordinate]:
    """Spread at least ``min_samples`` coordinates across every given tensor"""
    names = [name for name, t in tensors.items() if t.requires_grad]
    if not names:
        return []
    per_tensor = max(1, math.ceil(min_samples / len(names)))
    coords: List[Coordinate] = []
    for name in names:
        t = tensors[name]
        picks = rng.choice(t.size, size=min(per_tensor, t.size), replace=False)
        for flat in sorted(int(p) for p in picks):
            coords.append((name, tuple(int(i) for i in np.unravel_index(flat, t.shape))))
    return coords


def check_gradients(
    loss_fn: Callable[[], Tensor],
    tensors: Mapping[str, Tensor],
    coordinates: Sequence[Coordinate],
    step: float = 1e-4,
    tolerance: float = 1e-3,
    grad_hook: Optional[GradHook] = None,
) -> GradCheckReport:
    """
    Compare analytic and central-difference gradients.

    Args:
        loss_fn: builds the scalar loss from ``tensors`` each time it is called
        tensors: every tensor the loss reads (frozen ones included, so the
            whole replay runs in 64-bit)
        coordinates: (tensor name, index) pairs to check
        step: finite-difference step
        tolerance: maximum accepted relative error
        grad_hook: test hook that may alter the analytic gradients before comparison

    Returns:
        GradCheckReport
    """
    originals = {name: (t.data, t.grad) for name, t in tensors.items()}
    report = GradCheckReport(tolerance=tolerance)

    try:
        with precision(np.float64):
            for t in tensors.values():
                t.data = t.data.astype(np.float64)
                t.grad = None

            with Graph():
                loss = loss_fn()
                backward(loss)
            analytic = {
                name: (t.grad.copy() if t.grad is not None else np.zeros_like(t.data))
                for name, t in tensors.items()
            }
            if grad_hook is not None:
                grad_hook(analytic)

            for name, index in coordinates:
                t = tensors[name]
                center = t.data[index]
                t.data[index] = center + step
                plus = loss_fn().item()
                t.data[index] = center - step
                minus = loss_fn().item()
                t.data[index] = center

                numeric = (plus - minus) / (2.0 * step)
                a = float(analytic[name][index])
                err = relative_error(a, numeric)
                report.entries.append(
                    GradCheckEntry(name, index, a, numeric, err, err < tolerance)
                )
    finally:
        for name, t in tensors.items():
            t.data, t.grad = originals[name]

    if report.passed:
        logger.info("gradcheck_passed", samples=len(report.entries), max_rel_error=report.max_rel_error)
    else:
        for tensor in report.failing_tensors:
            logger.warning("gradcheck_failed", tensor=tensor, max_rel_error=report.max_rel_error)
    return report

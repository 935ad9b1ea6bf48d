"""Central finite-difference verification of hand-written backward passes.

The function under test is presented as a single callable mapping a dict of
named arrays to ``(scalar_loss, grads)`` where ``grads`` mirrors the input
dict.  Each selected element is wiggled by ``+step`` / ``-step`` and the
central difference is compared against the analytic entry.

A piecewise-linear network is only differentiable inside one activation
region; a finite step that crosses a ReLU kink produces a difference
quotient of neither side's derivative.  The callable may therefore return
a third value, a boolean activation signature: elements whose +step and
-step signatures differ are excluded from the comparison (and counted).

Always run in float64: the comparison floor is far below float32 noise.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

LossAndGrads = Callable[[Mapping[str, np.ndarray]], tuple]


@dataclass
class GradCheckResult:
    max_relative_error: float
    worst_name: str
    worst_index: tuple
    checked: int
    tolerance: float
    skipped_kinks: int = 0

    @property
    def passed(self) -> bool:
        return self.max_relative_error <= self.tolerance

    def __str__(self) -> str:
        status = "ok" if self.passed else "FAIL"
        return (f"grad_check {status}: max rel err {self.max_relative_error:.3e} "
                f"at {self.worst_name}{list(self.worst_index)} "
                f"({self.checked} elements, {self.skipped_kinks} kink-skipped, "
                f"tol {self.tolerance:.1e})")


def grad_check(fn: LossAndGrads, arrays: Mapping[str, np.ndarray], *,
               step: float = 1e-5, tolerance: float = 1e-4,
               sample_limit: int = 128, seed: int = 0,
               denom_floor: float = 1e-6) -> GradCheckResult:
    """Compare analytic gradients of ``fn`` against central differences.

    Arrays larger than ``sample_limit`` are probed at a seeded random
    subsample of element indices; smaller arrays are probed exhaustively.
    The per-element error is |fd - analytic| / max(|fd|, |analytic|,
    denom_floor), so pairs that are both vanishingly small do not alarm.
    """
    work = {k: np.array(v, dtype=np.float64) for k, v in arrays.items()}
    center = fn(work)
    analytic = {k: np.asarray(v, dtype=np.float64) for k, v in center[1].items()}
    rng = np.random.default_rng(seed)

    worst = 0.0
    worst_name = ""
    worst_index: tuple = ()
    checked = 0
    skipped = 0
    for name, arr in work.items():
        if name not in analytic:
            raise KeyError(f"fn returned no gradient for '{name}'")
        grad = analytic[name]
        if grad.shape != arr.shape:
            raise ValueError(f"gradient for '{name}' has shape {grad.shape}, expected {arr.shape}")
        size = arr.size
        if size <= sample_limit:
            flat_indices = np.arange(size)
        else:
            flat_indices = rng.choice(size, size=sample_limit, replace=False)
        flat = arr.reshape(-1)
        for fi in flat_indices:
            orig = flat[fi]
            flat[fi] = orig + step
            res_plus = fn(work)
            flat[fi] = orig - step
            res_minus = fn(work)
            flat[fi] = orig
            if len(res_plus) > 2 and not np.array_equal(res_plus[2], res_minus[2]):
                skipped += 1
                continue
            fd = (res_plus[0] - res_minus[0]) / (2.0 * step)
            an = grad.reshape(-1)[fi]
            err = abs(fd - an) / max(abs(fd), abs(an), denom_floor)
            checked += 1
            if err > worst:
                worst = err
                worst_name = name
                worst_index = np.unravel_index(fi, arr.shape)
    return GradCheckResult(max_relative_error=worst, worst_name=worst_name,
                           worst_index=tuple(int(i) for i in worst_index),
                           checked=checked, tolerance=tolerance, skipped_kinks=skipped)

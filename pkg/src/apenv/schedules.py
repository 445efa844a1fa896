"""Step-size rules for the two subgradient loops.

A schedule is called as ``schedule(k, subgradient)`` and returns the step
for iteration ``k``. The dual loop also passes the current multipliers as
``schedule(k, tau, lam)``; schedules that do not need them ignore them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "ConstantSchedule",
    "AdaptiveDualSchedule",
    "AdaptiveWeightSchedule",
    "dual_epsilon_schedule",
    "weight_epsilon_schedule",
    "schedule_from_dict",
]


@dataclass(frozen=True)
class ConstantSchedule:
    step: float

    def __post_init__(self):
        if not self.step > 0:
            raise ValueError("step size must be positive")

    def __call__(self, k, subgradient, point=None) -> float:
        return self.step

    def to_dict(self):
        return {"kind": "constant", "step": self.step}


@dataclass(frozen=True)
class AdaptiveDualSchedule:
    """Step shrinks as the size violation falls below the cut points.

    ``steps[0]`` while the violation exceeds ``cuts[0]``, ``steps[1]`` while
    it exceeds ``cuts[1]``, ``steps[2]`` otherwise.

    With ``key="max"`` the violation is ``max tau``. With ``key="kkt"``
    (default) undersized components whose multiplier is still positive count
    too: the violation is the largest of ``tau_i`` and, where ``lam_i > 0``,
    ``|tau_i|``. Both agree whenever every positive multiplier sits at a
    component that over-rejects, e.g. on a cold start from zero; the second
    also lets a warm-started run shed multipliers that are too large.
    """

    steps: tuple = (0.01, 0.001, 0.0001)
    cuts: tuple = (0.02, 0.002)
    key: str = "kkt"

    def __post_init__(self):
        if self.key not in ("kkt", "max"):
            raise ValueError("key must be 'kkt' or 'max'")

    def __call__(self, k, tau, lam=None) -> float:
        tau = np.asarray(tau, dtype=np.float64)
        if self.key == "kkt" and lam is not None:
            tau = np.where(np.asarray(lam) > 0, np.abs(tau), tau)
        top = float(np.max(tau))
        if top > self.cuts[0]:
            return self.steps[0]
        if top > self.cuts[1]:
            return self.steps[1]
        return self.steps[2]

    def to_dict(self):
        return {"kind": "adaptive", "steps": list(self.steps), "cuts": list(self.cuts), "key": self.key}


@dataclass(frozen=True)
class AdaptiveWeightSchedule:
    """Step shrinks as the worst power shortfall ``min gamma`` approaches zero.

    ``steps[0]`` while ``min gamma < -cuts[0]``, ``steps[1]`` while
    ``min gamma < -cuts[1]``, ``steps[2]`` otherwise.
    """

    steps: tuple = (0.01, 0.001, 0.0001)
    cuts: tuple = (0.02, 0.002)

    def __call__(self, k, gamma, point=None) -> float:
        low = float(np.min(gamma))
        if low < -self.cuts[0]:
            return self.steps[0]
        if low < -self.cuts[1]:
            return self.steps[1]
        return self.steps[2]

    def to_dict(self):
        return {"kind": "adaptive", "steps": list(self.steps), "cuts": list(self.cuts)}


def dual_epsilon_schedule(epsilon: float, n_null: int, alpha: float) -> ConstantSchedule:
    """Constant step ``eps / sqrt(M0 max(1 - alpha, alpha))`` with an eps-accuracy guarantee."""
    return ConstantSchedule(epsilon / math.sqrt(n_null * max(1.0 - alpha, alpha)))


def weight_epsilon_schedule(epsilon: float, n_alt: int) -> ConstantSchedule:
    """Constant step ``eps / sqrt(M1)`` for the weight loop."""
    return ConstantSchedule(epsilon / math.sqrt(n_alt))


def schedule_from_dict(spec: dict | None, loop: str):
    """Build a schedule from a config entry; ``loop`` is ``"inner"`` or ``"outer"``."""
    adaptive = AdaptiveDualSchedule if loop == "inner" else AdaptiveWeightSchedule
    if spec is None:
        return adaptive()
    kind = spec.get("kind", "adaptive")
    if kind == "adaptive":
        kw = {}
        if "steps" in spec:
            kw["steps"] = tuple(float(s) for s in spec["steps"])
        if "cuts" in spec:
            kw["cuts"] = tuple(float(c) for c in spec["cuts"])
        if "key" in spec and loop == "inner":
            kw["key"] = str(spec["key"])
        return adaptive(**kw)
    if kind == "constant":
        return ConstantSchedule(float(spec["step"]))
    raise ValueError(f"unknown {loop} schedule kind {kind!r}")

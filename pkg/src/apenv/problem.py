"""Testing problems, parameter points, null components, tests and switching rules.

A :class:`TestingProblem` knows how to turn standardized baseline draws into
observations at any parameter value and how to evaluate log densities. All
densities are compared through log ratios against the problem's reference
point, which keeps sums of densities finite even when the raw densities
overflow.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numpy as np
from scipy.special import logsumexp

__all__ = [
    "ParameterPoint",
    "PointMass",
    "BaseDistribution",
    "NullComponent",
    "AlternativeSupport",
    "TestingProblem",
    "AdHocTest",
    "SwitchingRule",
    "ValidationReport",
    "validate_problem",
    "mixture_log_density",
    "as_point",
    "as_component",
]


class ParameterPoint:
    """A point in the parameter space.

    Parameters
    ----------
    coords : sequence of float or float
        Problem-specific coordinates, for example ``(beta, delta)``.
    label : str, optional
        Display name.

    Notes
    -----
    Equality and hashing use the coordinates only, so two points with the
    same coordinates but different labels count as duplicates.
    """

    __slots__ = ("coords", "label")

    def __init__(self, coords, label: str | None = None):
        arr = np.atleast_1d(np.asarray(coords, dtype=np.float64))
        if arr.ndim != 1:
            raise ValueError("parameter coordinates must form a vector")
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"parameter coordinates must be finite, got {arr.tolist()}")
        object.__setattr__(self, "coords", tuple(float(c) for c in arr))
        object.__setattr__(self, "label", label)

    def __setattr__(self, name, value):
        raise AttributeError("ParameterPoint is immutable")

    @property
    def dim(self) -> int:
        return len(self.coords)

    def as_array(self) -> np.ndarray:
        return np.array(self.coords)

    def __eq__(self, other):
        return isinstance(other, ParameterPoint) and self.coords == other.coords

    def __hash__(self):
        return hash(self.coords)

    def __repr__(self):
        body = ", ".join(f"{c:g}" for c in self.coords)
        return f"ParameterPoint(({body}))"

    def describe(self) -> str:
        return self.label or "(" + ", ".join(f"{c:g}" for c in self.coords) + ")"


def as_point(x) -> ParameterPoint:
    """Coerce coordinates or an existing point to :class:`ParameterPoint`."""
    return x if isinstance(x, ParameterPoint) else ParameterPoint(x)


@dataclass(frozen=True)
class PointMass:
    """Null component concentrated at one parameter point."""

    point: ParameterPoint

    kind = "point"

    def describe(self) -> str:
        return f"point {self.point.describe()}"

    def to_dict(self) -> dict:
        return {"kind": "point", "theta": list(self.point.coords)}


@dataclass(frozen=True)
class BaseDistribution:
    """Uniform distribution on the segment from ``start`` to ``stop``.

    Its density is the average of ``f_theta`` over the segment. Problems may
    supply a closed form; otherwise an ``n_nodes`` midpoint rule is used.
    """

    start: ParameterPoint
    stop: ParameterPoint
    label: str = ""
    n_nodes: int = 201

    kind = "base"

    def __post_init__(self):
        if self.start.dim != self.stop.dim:
            raise ValueError("segment endpoints differ in dimension")
        if self.n_nodes < 1:
            raise ValueError("quadrature needs at least one node")

    def thetas_at(self, u) -> np.ndarray:
        """Points at fractions ``u`` of the way along the segment, shape (len(u), d)."""
        u = np.asarray(u, dtype=np.float64)[:, None]
        a = self.start.as_array()
        return a[None, :] + u * (self.stop.as_array() - a)[None, :]

    def nodes(self) -> np.ndarray:
        """Midpoint quadrature nodes, equally weighted."""
        return self.thetas_at((np.arange(self.n_nodes) + 0.5) / self.n_nodes)

    @property
    def degenerate(self) -> bool:
        return self.start == self.stop

    def describe(self) -> str:
        if self.label:
            return self.label
        return f"uniform {self.start.describe()}..{self.stop.describe()}"

    def to_dict(self) -> dict:
        return {
            "kind": "base",
            "start": list(self.start.coords),
            "stop": list(self.stop.coords),
            "label": self.label,
            "n_nodes": self.n_nodes,
        }


NullComponent = Union[PointMass, BaseDistribution]


def as_component(x) -> NullComponent:
    """Accept a component, a point, or bare coordinates."""
    if isinstance(x, (PointMass, BaseDistribution)):
        return x
    return PointMass(as_point(x))


def component_from_dict(d: dict) -> NullComponent:
    if d["kind"] == "point":
        return PointMass(ParameterPoint(d["theta"]))
    return BaseDistribution(
        ParameterPoint(d["start"]), ParameterPoint(d["stop"]), d.get("label", ""), d.get("n_nodes", 201)
    )


class AlternativeSupport(Sequence):
    """Ordered finite set of alternative parameter points."""

    def __init__(self, points):
        pts = tuple(as_point(p) for p in points)
        if len(pts) == 0:
            raise ValueError("alternative support needs at least one point")
        self.points = pts

    def __len__(self):
        return len(self.points)

    def __getitem__(self, i):
        return self.points[i]

    def as_array(self) -> np.ndarray:
        return np.array([p.coords for p in self.points])

    def extended(self, new_points) -> "AlternativeSupport":
        return AlternativeSupport(list(self.points) + [as_point(p) for p in new_points])

    def __repr__(self):
        return f"AlternativeSupport({len(self)} points)"


class TestingProblem(ABC):
    """Sampler and density evaluator for one testing problem.

    Subclasses implement :meth:`sample`, :meth:`log_ratio`, :meth:`in_null`
    and :meth:`in_alt`. ``log_ratio(thetas, y)`` must equal
    ``log f_theta(y) - log f_ref(y)`` exactly, with ``ref`` the
    :attr:`reference_point`.

    Location families, where ``y = location(theta) + noise`` and the log
    ratio is linear in ``y``, can also override :meth:`natural_params` and
    :meth:`location`; the evaluator then avoids storing their alternative
    density blocks.
    """

    __test__ = False  # not a pytest class

    name: str = "problem"
    dim_y: int
    dim_theta: int
    dim_base: int
    reference_point: ParameterPoint

    @abstractmethod
    def sample(self, base: np.ndarray, theta) -> np.ndarray:
        """Observations from baseline draws at ``theta`` (one point or one per draw)."""

    @abstractmethod
    def log_ratio(self, thetas: np.ndarray, y: np.ndarray) -> np.ndarray:
        """(N, C) array of ``log f_theta_c(y_m) - log f_ref(y_m)``."""

    @abstractmethod
    def in_null(self, theta: ParameterPoint) -> bool: ...

    @abstractmethod
    def in_alt(self, theta: ParameterPoint) -> bool: ...

    def ref_log_density(self, y: np.ndarray) -> np.ndarray:
        """``log f_ref(y)``; zero when the problem only defines ratios."""
        return np.zeros(np.asarray(y).shape[0])

    def log_density(self, thetas, y) -> np.ndarray:
        """(N, C) log densities (up to a theta-free constant for ratio-only problems)."""
        y = self._as_obs(y)
        return self.log_ratio(self._as_thetas(thetas), y) + self.ref_log_density(y)[:, None]

    def base_log_ratio(self, component: BaseDistribution, y: np.ndarray):
        """Closed-form mixture log ratio, or ``None`` to fall back on quadrature."""
        return None

    def natural_params(self, thetas: np.ndarray):
        """``(eta, a)`` with log ratio ``eta . y - a``, or ``None``."""
        return None

    def location(self, thetas: np.ndarray):
        """Shift such that ``sample(base, theta) = sample(base, ref) + location(theta)``."""
        return None

    @property
    def factorizable(self) -> bool:
        return type(self).natural_params is not TestingProblem.natural_params

    # -- helpers ---------------------------------------------------------

    def _as_thetas(self, thetas) -> np.ndarray:
        if isinstance(thetas, ParameterPoint):
            thetas = [thetas.coords]
        elif isinstance(thetas, (list, tuple)) and thetas and isinstance(thetas[0], ParameterPoint):
            thetas = [p.coords for p in thetas]
        arr = np.asarray(thetas, dtype=np.float64)
        if arr.ndim == 1:
            arr = arr.reshape(-1, self.dim_theta) if self.dim_theta > 1 else arr[:, None]
        if arr.shape[1] != self.dim_theta:
            raise ValueError(f"{self.name}: parameters must have dimension {self.dim_theta}")
        return arr

    def _as_obs(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=np.float64)
        if y.ndim == 1:
            y = y[:, None] if self.dim_y == 1 else y[None, :]
        if y.shape[1] != self.dim_y:
            raise ValueError(f"{self.name}: observations must have dimension {self.dim_y}")
        return y

    def component_log_ratio(self, component: NullComponent, y: np.ndarray) -> np.ndarray:
        """Log ratio of a null component's (mixture) density against the reference."""
        y = self._as_obs(y)
        if isinstance(component, PointMass):
            return self.log_ratio(self._as_thetas(component.point), y)[:, 0]
        if component.degenerate:
            return self.log_ratio(self._as_thetas(component.start), y)[:, 0]
        closed = self.base_log_ratio(component, y)
        if closed is not None:
            return closed
        nodes = component.nodes()
        out = np.empty(y.shape[0])
        step = max(1, 2_000_000 // max(1, len(nodes)))
        for lo in range(0, y.shape[0], step):
            block = self.log_ratio(nodes, y[lo : lo + step])
            out[lo : lo + step] = logsumexp(block, axis=1) - np.log(len(nodes))
        return out

    def point_log_ratios(self, points, y) -> np.ndarray:
        return self.log_ratio(self._as_thetas(list(points)), self._as_obs(y))

    def sample_component(self, base: np.ndarray, component, strata=None) -> np.ndarray:
        """Observations for a point or a base distribution (one theta per draw)."""
        component = as_component(component)
        if isinstance(component, PointMass):
            return self.sample(base, component.point.as_array())
        if component.degenerate:
            return self.sample(base, component.start.as_array())
        if strata is None:
            raise ValueError("sampling a base distribution needs the bank's strata")
        return self.sample(base, component.thetas_at(strata))

    def describe(self) -> dict:
        return {"name": self.name}


def mixture_log_density(component, y, problem: TestingProblem) -> np.ndarray:
    """Log density of a null component at observations ``y``.

    Point masses give ``log f_theta(y)``. Base distributions give the log of
    the averaged density, analytic where the problem provides it and an
    equal-weight midpoint rule otherwise.

    Returns
    -------
    ndarray, shape (N,)
    """
    component = as_component(component)
    y = problem._as_obs(y)
    out = problem.component_log_ratio(component, y) + problem.ref_log_density(y)
    if not np.all(np.isfinite(out)):
        raise FloatingPointError(f"non-finite mixture density for {component.describe()}")
    return out


@dataclass(frozen=True)
class AdHocTest:
    """A test given by its rejection probability ``rule(y)`` in ``[0, 1]``.

    ``similar`` marks tests whose null rejection is exactly alpha on the
    whole null (used by seed tuning).
    """

    rule: Callable[[np.ndarray], np.ndarray]
    name: str = "ad hoc"
    similar: bool = False

    def __call__(self, y) -> np.ndarray:
        out = np.asarray(self.rule(y), dtype=np.float64)
        if out.size and (out.min() < 0.0 or out.max() > 1.0):
            raise ValueError(f"test {self.name!r} returned values outside [0, 1]")
        return out


@dataclass(frozen=True)
class SwitchingRule:
    """Defer to ``standard_test`` whenever ``statistic(y) > switch_point``.

    ``safe_level`` is the parameter level below which the statistic should
    almost never cross the switch point; :meth:`check` measures that.
    """

    statistic: Callable[[np.ndarray], np.ndarray]
    switch_point: float
    standard_test: AdHocTest
    name: str = "switching"
    safe_level: float | None = None

    def forced(self, y: np.ndarray) -> np.ndarray:
        """int8 array: -1 where the Lagrange comparison applies, else the standard decision."""
        stat = np.asarray(self.statistic(y))
        out = np.full(stat.shape[0], -1, dtype=np.int8)
        hit = stat > self.switch_point
        if np.any(hit):
            dec = self.standard_test(y[hit])
            if np.any((dec != 0.0) & (dec != 1.0)):
                raise ValueError("the standard test behind a switching rule must be nonrandomized")
            out[hit] = dec.astype(np.int8)
        return out

    def check(self, problem: TestingProblem, bank, points, threshold: float = 0.01) -> dict:
        """Probability of switching at each of ``points``; flags values above ``threshold``."""
        probs = {}
        for p in points:
            p = as_point(p)
            y = problem.sample(bank.base, p.as_array())
            probs[p.describe()] = float(np.mean(np.asarray(self.statistic(y)) > self.switch_point))
        worst = max(probs.values()) if probs else 0.0
        return {"probabilities": probs, "max": worst, "ok": worst <= threshold, "threshold": threshold}

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "switch_point": self.switch_point,
            "standard_test": self.standard_test.name,
            "safe_level": self.safe_level,
        }


@dataclass
class ValidationReport:
    """Structured outcome of :func:`validate_problem`."""

    violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def add(self, kind: str, detail: str):
        self.violations.append({"kind": kind, "detail": detail})

    def kinds(self) -> list:
        return [v["kind"] for v in self.violations]


def validate_problem(problem: TestingProblem, null, alt, n_probe: int = 256, seed: int = 0) -> ValidationReport:
    """Check supports against the problem's predicates and probe densities.

    Never raises for problem-level defects; every issue becomes an entry of
    the returned report.
    """
    report = ValidationReport()
    alt_points = list(alt.points if isinstance(alt, AlternativeSupport) else alt)
    comps = [as_component(c) for c in null]
    if not comps:
        report.add("empty null", "no null components")
    if not alt_points:
        report.add("empty alternative", "no alternative points")
    for comp in comps:
        pts = [comp.point] if isinstance(comp, PointMass) else [comp.start, comp.stop]
        for p in pts:
            if p.dim != problem.dim_theta:
                report.add("dimension", f"{p.describe()} has dimension {p.dim}")
            elif not problem.in_null(p):
                report.add("point not in null", f"null component {comp.describe()} leaves the null space")
    seen = set()
    for p in alt_points:
        p = as_point(p)
        if p.dim != problem.dim_theta:
            report.add("dimension", f"{p.describe()} has dimension {p.dim}")
            continue
        if p in seen:
            report.add("duplicate support point", p.describe())
        seen.add(p)
        if problem.in_null(p):
            report.add("point in null", f"alternative point {p.describe()} lies in the null space")
        elif not problem.in_alt(p):
            report.add("point not in alternative", p.describe())
    if report.violations:
        return report
    rng = np.random.default_rng(seed)
    base = rng.standard_normal((n_probe, problem.dim_base))
    strata = (rng.permutation(n_probe) + 0.5) / n_probe
    sources = comps + [PointMass(as_point(p)) for p in alt_points]
    for src in sources:
        try:
            y = problem.sample_component(base, src, strata)
            vals = [problem.component_log_ratio(c, y) for c in comps]
            vals.append(problem.point_log_ratios(alt_points, y).ravel())
            if not all(np.all(np.isfinite(v)) for v in vals):
                report.add("non-finite density", f"draws at {src.describe()}")
        except (FloatingPointError, ValueError, OverflowError) as exc:
            report.add("non-finite density", f"draws at {src.describe()}: {exc}")
    return report

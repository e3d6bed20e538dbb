"""Dynamical systems, observables and orbit sampling.

Four systems are built in: the doubling map, the intermittent LSV map, and two
invertible skew products ("bakers") whose base is one of the former and whose
fiber is mapped affinely into the sub-interval indexed by the base branch.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Iterator, Optional, Tuple

import numpy as np
from scipy import optimize

from gordinlab.core import streams
from gordinlab.core.errors import DomainError, ShapeError

logger = logging.getLogger(__name__)

# Lowest representable LSV state; keeps orbits from being absorbed at the fixed point.
LSV_FLOOR = 1e-15
REFRESH_SCALE = 2.0**-52
DEFAULT_BURN_IN = 10_000


class MapKind(str, Enum):
    DOUBLING = "doubling"
    LSV = "lsv"
    UNIFORM_BAKER = "uniform_baker"
    INTERMITTENT_BAKER = "intermittent_baker"


@dataclass(frozen=True)
class MapDescriptor:
    kind: MapKind
    gamma: float = 0.0
    fiber_contraction: float = 0.5
    # "polynomial": fibers follow the inverse branches of the LSV map, so they
    # contract only as fast as the base expands near the neutral fixed point.
    fiber_rate: str = "geometric"

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", MapKind(self.kind))
        if not (0.0 <= self.gamma < 1.0):
            raise DomainError(f"gamma must lie in [0, 1), got {self.gamma}")
        if self.fiber_rate not in ("geometric", "polynomial"):
            raise DomainError(f"fiber_rate must be 'geometric' or 'polynomial', got {self.fiber_rate!r}")
        if self.fiber_rate == "polynomial" and self.kind != MapKind.INTERMITTENT_BAKER:
            raise DomainError("polynomial fiber contraction needs the intermittent baker")
        if self.fiber_rate == "polynomial" and self.fiber_contraction != 0.5:
            raise DomainError("polynomial fibers split at 1/2; fiber_contraction must stay 0.5")
        if not (0.0 < self.fiber_contraction < 1.0):
            raise DomainError(f"fiber_contraction must lie in (0, 1), got {self.fiber_contraction}")
        if self.is_baker and self.fiber_contraction > 0.5:
            # branch images [0, c) and [1 - c, 1) overlap otherwise
            raise DomainError(
                f"baker maps are injective only for fiber_contraction <= 1/2, got {self.fiber_contraction}"
            )

    @property
    def is_baker(self) -> bool:
        return self.kind in (MapKind.UNIFORM_BAKER, MapKind.INTERMITTENT_BAKER)

    @property
    def has_lsv_base(self) -> bool:
        return self.kind in (MapKind.LSV, MapKind.INTERMITTENT_BAKER)

    @property
    def base(self) -> "MapDescriptor":
        """The one-dimensional map acting on the base coordinate."""
        if self.kind == MapKind.UNIFORM_BAKER:
            return MapDescriptor(MapKind.DOUBLING)
        if self.kind == MapKind.INTERMITTENT_BAKER:
            return MapDescriptor(MapKind.LSV, gamma=self.gamma)
        return self

    @property
    def label(self) -> str:
        if self.has_lsv_base:
            return f"{self.kind.value}(gamma={self.gamma:g})"
        return self.kind.value


@dataclass(frozen=True)
class Point:
    base: float
    fiber: Optional[float] = None

    def __post_init__(self) -> None:
        if not math.isfinite(self.base):
            raise DomainError(f"non-finite base coordinate {self.base}")
        object.__setattr__(self, "base", float(self.base) % 1.0)
        if self.fiber is not None:
            if not math.isfinite(self.fiber):
                raise DomainError(f"non-finite fiber coordinate {self.fiber}")
            object.__setattr__(self, "fiber", float(self.fiber) % 1.0)


# ---------------------------------------------------------------------------
# Scalar steps
# ---------------------------------------------------------------------------

def _check_gamma(gamma: float) -> None:
    if not (0.0 <= gamma < 1.0):
        raise DomainError(f"gamma must lie in [0, 1), got {gamma}")


def doubling_step(x: float) -> float:
    if not (0.0 <= x < 1.0):
        raise DomainError(f"x must lie in [0, 1), got {x}")
    return (2.0 * x) % 1.0


def lsv_step(x: float, gamma: float) -> float:
    """One step of the LSV map; the boundary x = 1/2 belongs to the second branch."""
    if not (0.0 <= x < 1.0):
        raise DomainError(f"x must lie in [0, 1), got {x}")
    _check_gamma(gamma)
    if x < 0.5:
        return x * (1.0 + 2.0**gamma * x**gamma)
    return 2.0 * x - 1.0


def baker_step(p: Point, desc: MapDescriptor) -> Point:
    if not desc.is_baker:
        raise DomainError(f"{desc.kind.value} is not a baker map")
    if p.fiber is None:
        raise DomainError("baker maps need a fiber coordinate")
    base, fiber = step_points(desc, np.array([p.base]), np.array([p.fiber]))
    return Point(float(base[0]), float(fiber[0]))


def baker_inverse(p: Point, desc: MapDescriptor) -> Point:
    if not desc.is_baker:
        raise DomainError(f"{desc.kind.value} is not a baker map")
    if p.fiber is None:
        raise DomainError("baker maps need a fiber coordinate")
    base, fiber = inverse_points(desc, np.array([p.base]), np.array([p.fiber]))
    return Point(float(base[0]), float(fiber[0]))


# ---------------------------------------------------------------------------
# Vectorised steps
# ---------------------------------------------------------------------------

def lsv_map(x: np.ndarray, gamma: float) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    left = x * (1.0 + 2.0**gamma * np.power(x, gamma))
    return np.where(x < 0.5, left, 2.0 * x - 1.0)


def branch_index(x: np.ndarray) -> np.ndarray:
    return (np.asarray(x) >= 0.5).astype(np.int64)


def base_map(desc: MapDescriptor, x: np.ndarray) -> np.ndarray:
    if desc.has_lsv_base:
        return lsv_map(x, desc.gamma)
    return np.mod(2.0 * np.asarray(x, dtype=np.float64), 1.0)


def _lsv_left_inverse(x: np.ndarray, gamma: float) -> np.ndarray:
    """Solve y(1 + 2^g y^g) = x for y in [0, 1/2].

    Newton from y = x, which lies right of the root; the branch is increasing
    and convex, so the iterates decrease monotonically onto it.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.size == 0:
        return x.copy()
    c = 2.0**gamma
    root = optimize.newton(
        lambda y: y + c * np.power(y, 1.0 + gamma) - x.ravel(),
        x.ravel().copy(),
        fprime=lambda y: 1.0 + (1.0 + gamma) * c * np.power(y, gamma),
        tol=1e-15,
        maxiter=100,
    )
    return np.clip(np.reshape(root, x.shape), 0.0, 0.5)


def base_inverse(desc: MapDescriptor, x: np.ndarray, branch: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    right = 0.5 * (x + 1.0)
    if desc.has_lsv_base:
        left = _lsv_left_inverse(x, desc.gamma)
    else:
        left = 0.5 * x
    return np.where(branch == 1, right, left)


def step_points(
    desc: MapDescriptor,
    base: np.ndarray,
    fiber: Optional[np.ndarray] = None,
) -> Tuple[np.ndarray, Optional[np.ndarray]]:
    new_base = base_map(desc, base)
    if not desc.is_baker:
        return new_base, None
    if desc.fiber_rate == "polynomial":
        return new_base, base_inverse(desc, fiber, branch_index(base))
    c = desc.fiber_contraction
    new_fiber = c * fiber + branch_index(base) * (1.0 - c)
    return new_base, new_fiber


def inverse_points(
    desc: MapDescriptor,
    base: np.ndarray,
    fiber: np.ndarray,
) -> Tuple[np.ndarray, np.ndarray]:
    c = desc.fiber_contraction
    branch = (np.asarray(fiber) >= 1.0 - c).astype(np.int64)
    if desc.fiber_rate == "polynomial":
        prev_fiber = base_map(desc, fiber)
    else:
        prev_fiber = (fiber - branch * (1.0 - c)) / c
    prev_base = base_inverse(desc, base, branch)
    return prev_base, np.clip(prev_fiber, 0.0, np.nextafter(1.0, 0.0))


def _refresh(desc: MapDescriptor, base: np.ndarray, noise: np.ndarray) -> np.ndarray:
    out = np.mod(base + noise * REFRESH_SCALE, 1.0)
    if desc.has_lsv_base:
        out = np.maximum(out, LSV_FLOOR)
    return out


# ---------------------------------------------------------------------------
# Observables
# ---------------------------------------------------------------------------

Evaluator = Callable[[np.ndarray, Optional[np.ndarray]], np.ndarray]


@dataclass(frozen=True)
class Observable:
    name: str
    dimension: int
    evaluator: Evaluator = field(repr=False)
    sup_norm_bound: float
    lipschitz_bound: Optional[float] = None
    needs_fiber: bool = False
    shift: Tuple[float, ...] = ()

    def __call__(self, base: np.ndarray, fiber: Optional[np.ndarray] = None) -> np.ndarray:
        if self.needs_fiber and fiber is None:
            raise DomainError(f"observable {self.name!r} needs a fiber coordinate")
        values = self.evaluator(np.asarray(base, dtype=np.float64), fiber)
        if self.shift:
            values = values - np.asarray(self.shift)
        return values

    def at(self, p: Point) -> np.ndarray:
        fiber = None if p.fiber is None else np.array([p.fiber])
        return self(np.array([p.base]), fiber)[0]

    def centered(self, mean: np.ndarray) -> "Observable":
        """Subtract a further constant; the sup bound grows accordingly."""
        mean = np.atleast_1d(np.asarray(mean, dtype=np.float64))
        if mean.shape != (self.dimension,):
            raise ShapeError(f"mean has shape {mean.shape}, expected ({self.dimension},)")
        old = np.asarray(self.shift) if self.shift else np.zeros(self.dimension)
        return replace(
            self,
            shift=tuple(float(s) for s in old + mean),
            sup_norm_bound=self.sup_norm_bound + float(np.linalg.norm(mean)),
        )


def _col(*parts: np.ndarray) -> np.ndarray:
    return np.stack(parts, axis=-1)


def _half_shift(x: np.ndarray) -> np.ndarray:
    return np.mod(2.0 * x, 1.0) - 0.5


_BUILTINS = {
    "zero": lambda: Observable("zero", 1, lambda x, y: _col(np.zeros_like(x)), 0.0, 0.0),
    "x_centered": lambda: Observable("x_centered", 1, lambda x, y: _col(x - 0.5), 0.5, 1.0),
    "cos2pi": lambda: Observable("cos2pi", 1, lambda x, y: _col(np.cos(2 * np.pi * x)), 1.0, 2 * np.pi),
    "cos_coboundary": lambda: Observable(
        "cos_coboundary",
        1,
        lambda x, y: _col(np.cos(4 * np.pi * x) - np.cos(2 * np.pi * x)),
        2.0,
        6 * np.pi,
    ),
    "pair_degenerate": lambda: Observable(
        "pair_degenerate", 2, lambda x, y: _col(x - 0.5, _half_shift(x)), math.sqrt(0.5)
    ),
    "pair_drift": lambda: Observable(
        "pair_drift",
        2,
        lambda x, y: _col(x - 0.5, _half_shift(x) + np.cos(2 * np.pi * x)),
        math.sqrt(0.25 + 1.5**2),
    ),
    "fiber_centered": lambda: Observable(
        "fiber_centered", 1, lambda x, y: _col(y - 0.5), 0.5, 1.0, needs_fiber=True
    ),
    "base_fiber_pair": lambda: Observable(
        "base_fiber_pair", 2, lambda x, y: _col(x - 0.5, y - 0.5), math.sqrt(0.5), 1.0, needs_fiber=True
    ),
}

BUILTIN_OBSERVABLES = tuple(_BUILTINS)


def builtin_observable(name: str) -> Observable:
    try:
        return _BUILTINS[name]()
    except KeyError:
        raise DomainError(f"unknown observable {name!r}; choose from {', '.join(BUILTIN_OBSERVABLES)}") from None


def coboundary_observable(h: Callable[[np.ndarray], np.ndarray], desc: MapDescriptor, sup: float) -> Observable:
    """v = h o T - h for a function h of the base coordinate."""

    def _eval(x: np.ndarray, y: Optional[np.ndarray]) -> np.ndarray:
        return _col(h(base_map(desc, x)) - h(x))

    return Observable("coboundary", 1, _eval, 2.0 * sup)


# ---------------------------------------------------------------------------
# Orbits
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Orbit:
    base: np.ndarray
    fiber: Optional[np.ndarray]
    observable_values: np.ndarray
    burn_in: int
    seed: int

    def __post_init__(self) -> None:
        if len(self.base) != len(self.observable_values):
            raise ShapeError("orbit points and observable values differ in length")

    @property
    def n_steps(self) -> int:
        return len(self.base)

    @property
    def dimension(self) -> int:
        return self.observable_values.shape[1]

    @property
    def points(self) -> list[Point]:
        if self.fiber is None:
            return [Point(float(b)) for b in self.base]
        return [Point(float(b), float(f)) for b, f in zip(self.base, self.fiber)]


@dataclass(frozen=True)
class Interval:
    """Initial law: uniform on [low, high) in the base coordinate."""

    low: float = 0.0
    high: float = 1.0

    def __post_init__(self) -> None:
        if not (0.0 <= self.low < self.high <= 1.0):
            raise DomainError(f"invalid initial interval [{self.low}, {self.high})")


def initial_points(
    desc: MapDescriptor,
    replicas: int,
    seed: int,
    start: Interval = Interval(),
    stream_offset: int = 0,
) -> Tuple[np.ndarray, Optional[np.ndarray]]:
    ids = range(stream_offset, stream_offset + replicas)
    u = streams.uniforms(seed, streams.LANE_INIT_BASE, ids)
    base = start.low + (start.high - start.low) * u
    if desc.has_lsv_base:
        base = np.maximum(base, LSV_FLOOR)
    fiber = streams.uniforms(seed, streams.LANE_INIT_FIBER, ids) if desc.is_baker else None
    return base, fiber


def iterate_ensemble(
    desc: MapDescriptor,
    n_steps: int,
    replicas: int,
    seed: int,
    burn_in: int = DEFAULT_BURN_IN,
    start: Optional[Interval] = None,
    initial: Optional[Tuple[np.ndarray, Optional[np.ndarray]]] = None,
    stream_offset: int = 0,
) -> Iterator[Tuple[np.ndarray, Optional[np.ndarray]]]:
    """Yield the ensemble state at times 0..n_steps-1 after burn-in.

    Each replica is its own random stream; the low bits of the base coordinate
    are refreshed after every step so expanding maps do not collapse onto the
    dyadic rationals of the floating-point grid.
    """
    if n_steps < 1:
        raise DomainError(f"n_steps must be >= 1, got {n_steps}")
    if burn_in < 0:
        raise DomainError(f"burn_in must be >= 0, got {burn_in}")
    if initial is None:
        base, fiber = initial_points(desc, replicas, seed, start or Interval(), stream_offset)
    else:
        base, fiber = initial
        base = np.asarray(base, dtype=np.float64).copy()
        fiber = None if fiber is None else np.asarray(fiber, dtype=np.float64).copy()
    refresh = streams.ReplicaStreams(seed, streams.LANE_REFRESH, range(stream_offset, stream_offset + len(base)))
    for _ in range(burn_in):
        base, fiber = step_points(desc, base, fiber)
        base = _refresh(desc, base, refresh.draw())
    for step in range(n_steps):
        yield base, fiber
        if step + 1 < n_steps:
            base, fiber = step_points(desc, base, fiber)
            base = _refresh(desc, base, refresh.draw())


def sample_invariant(
    desc: MapDescriptor,
    count: int,
    seed: int,
    burn_in: int = DEFAULT_BURN_IN,
) -> Tuple[np.ndarray, Optional[np.ndarray]]:
    """Approximate draws from the physical measure: final states of a burnt-in ensemble."""
    state = None
    for state in iterate_ensemble(desc, 1, count, seed, burn_in=burn_in):
        pass
    return state


def sample_orbit(
    desc: MapDescriptor,
    obs: Observable,
    x0: Optional[Point],
    n_steps: int,
    burn_in: int = DEFAULT_BURN_IN,
    seed: int = 0,
) -> Orbit:
    if obs.needs_fiber and not desc.is_baker:
        raise DomainError(f"observable {obs.name!r} needs a baker map")
    initial = None
    if x0 is not None:
        fiber = None
        if desc.is_baker:
            fiber = np.array([0.5 if x0.fiber is None else x0.fiber])
        initial = (np.array([x0.base]), fiber)
    bases = np.empty(n_steps)
    fibers = np.empty(n_steps) if desc.is_baker else None
    for j, (b, f) in enumerate(iterate_ensemble(desc, n_steps, 1, seed, burn_in, initial=initial)):
        bases[j] = b[0]
        if fibers is not None:
            fibers[j] = f[0]
    values = obs(bases, fibers)
    logger.debug("sampled %d-step orbit of %s (burn-in %d, seed %d)", n_steps, desc.label, burn_in, seed)
    return Orbit(base=bases, fiber=fibers, observable_values=values, burn_in=burn_in, seed=seed)

"""Fast-slow systems and their homogenised SDE limits.

The slow variable follows x_{n+1} = x_n + eps^2 a(x_n) + eps b(x_n) v(y_n) with
y_n an orbit of the fast map. As eps -> 0 the rescaled path t -> x_{[t/eps^2]}
converges to dX = ã(X) dt + b(X) dW, where ã carries a correction built from
the drift matrix E of the fast observable.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional

import numpy as np

from gordinlab.core import streams
from gordinlab.core.errors import BlowupError, DomainError, ShapeError
from gordinlab.core.maps import DEFAULT_BURN_IN, MapDescriptor, Observable, iterate_ensemble
from gordinlab.core.stats import TestReport, psd_factor, two_sample_compare

logger = logging.getLogger(__name__)

BLOWUP_LIMIT = 1e6
MACRO_POINTS = 1000
MAX_EPSILON = 0.1

VectorField = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class FastSlowConfig:
    epsilon: float
    xi: np.ndarray
    a: VectorField = field(repr=False)
    b: VectorField = field(repr=False)
    db: VectorField = field(repr=False)
    fast: MapDescriptor
    observable: Observable
    t_end: float = 1.0
    burn_in: int = DEFAULT_BURN_IN

    def __post_init__(self) -> None:
        if not (0.0 < self.epsilon <= MAX_EPSILON):
            raise DomainError(f"epsilon must lie in (0, {MAX_EPSILON}], got {self.epsilon}")
        if self.t_end <= 0.0:
            raise DomainError(f"t_end must be positive, got {self.t_end}")
        xi = np.atleast_1d(np.asarray(self.xi, dtype=np.float64))
        object.__setattr__(self, "xi", xi)
        b0 = self.b(xi[None, :])
        if b0.shape != (1, len(xi), self.observable.dimension):
            raise ShapeError(
                f"b(x) has shape {b0.shape[1:]}, expected ({len(xi)}, {self.observable.dimension})"
            )

    @property
    def dimension(self) -> int:
        return len(self.xi)

    @property
    def steps(self) -> int:
        return int(np.floor(self.t_end / self.epsilon**2 + 1e-9))


@dataclass(frozen=True)
class SDEConfig:
    drift: VectorField = field(repr=False)
    diffusion: VectorField = field(repr=False)
    sigma: np.ndarray
    dt: float
    xi: np.ndarray
    t_end: float = 1.0

    def __post_init__(self) -> None:
        if self.dt <= 0.0:
            raise DomainError(f"dt must be positive, got {self.dt}")
        object.__setattr__(self, "xi", np.atleast_1d(np.asarray(self.xi, dtype=np.float64)))
        object.__setattr__(self, "sigma", np.atleast_2d(np.asarray(self.sigma, dtype=np.float64)))
        psd_factor(self.sigma)

    @property
    def steps(self) -> int:
        return int(np.floor(self.t_end / self.dt + 1e-9))


@dataclass(frozen=True)
class SlowPaths:
    """Paths of shape (R, MACRO_POINTS, d) on a uniform macro grid."""

    times: np.ndarray
    paths: np.ndarray

    @property
    def terminal(self) -> np.ndarray:
        return self.paths[:, -1, :]

    def rows(self) -> list[tuple]:
        out = []
        for r in range(self.paths.shape[0]):
            for i, t in enumerate(self.times):
                out.append((r, float(t), *self.paths[r, i]))
        return out


def macro_grid(t_end: float) -> np.ndarray:
    return np.linspace(0.0, t_end, MACRO_POINTS)


def _guard(x: np.ndarray, step: int) -> None:
    if not np.all(np.isfinite(x)) or np.abs(x).max(initial=0.0) > BLOWUP_LIMIT:
        raise BlowupError(f"slow variable left |x| <= {BLOWUP_LIMIT:g} at step {step}")


# ---------------------------------------------------------------------------
# Simulators
# ---------------------------------------------------------------------------

def fast_slow_ensemble(cfg: FastSlowConfig, replicas: int, seed: int) -> SlowPaths:
    times = macro_grid(cfg.t_end)
    eps2 = cfg.epsilon**2
    marks = np.floor(times / eps2 + 1e-9).astype(np.int64)
    x = np.repeat(cfg.xi[None, :], replicas, axis=0)
    out = np.empty((replicas, len(times), cfg.dimension))
    cursor = 0
    fast = iterate_ensemble(cfg.fast, cfg.steps + 1, replicas, seed, burn_in=cfg.burn_in)
    for step, (base, fiber) in enumerate(fast):
        while cursor < len(marks) and marks[cursor] == step:
            out[:, cursor] = x
            cursor += 1
        if step == cfg.steps:
            break
        v = cfg.observable(base, fiber)
        x = x + eps2 * cfg.a(x) + cfg.epsilon * np.einsum("rab,rb->ra", cfg.b(x), v)
        _guard(x, step)
    logger.info("fast-slow ensemble: %d replicas, eps=%g, %d steps", replicas, cfg.epsilon, cfg.steps)
    return SlowPaths(times=times, paths=out)


def fast_slow_simulate(cfg: FastSlowConfig, seed: int) -> SlowPaths:
    """A single slow path x_eps(t) = x_[t/eps^2]."""
    return fast_slow_ensemble(cfg, 1, seed)


def euler_maruyama_ensemble(cfg: SDEConfig, replicas: int, seed: int) -> SlowPaths:
    """Itô Euler-Maruyama with increments of covariance sigma dt."""
    factor = psd_factor(cfg.sigma)
    times = macro_grid(cfg.t_end)
    marks = np.floor(times / cfg.dt + 1e-9).astype(np.int64)
    d = len(cfg.xi)
    noise_dim = cfg.sigma.shape[0]
    noise = streams.ReplicaStreams(seed, streams.LANE_GAUSS, range(replicas), normal_width=noise_dim)
    x = np.repeat(cfg.xi[None, :], replicas, axis=0)
    out = np.empty((replicas, len(times), d))
    scale = np.sqrt(cfg.dt)
    cursor = 0
    for step in range(cfg.steps + 1):
        while cursor < len(marks) and marks[cursor] == step:
            out[:, cursor] = x
            cursor += 1
        if step == cfg.steps:
            break
        dw = scale * noise.draw() @ factor.T
        x = x + cfg.drift(x) * cfg.dt + np.einsum("rab,rb->ra", cfg.diffusion(x), dw)
        _guard(x, step)
    logger.info("Euler-Maruyama ensemble: %d replicas, dt=%g", replicas, cfg.dt)
    return SlowPaths(times=times, paths=out)


def euler_maruyama(cfg: SDEConfig, seed: int) -> SlowPaths:
    return euler_maruyama_ensemble(cfg, 1, seed)


# ---------------------------------------------------------------------------
# Drift correction
# ---------------------------------------------------------------------------

CONVENTIONS = ("proposition", "literal_half")


def correction_term(b: VectorField, db: VectorField, E: np.ndarray, x: np.ndarray) -> np.ndarray:
    """sum_{alpha,gamma,delta} E^{gamma delta} d_alpha b^{beta delta}(x) b^{alpha gamma}(x)."""
    E = np.atleast_2d(np.asarray(E, dtype=np.float64))
    bx = b(x)
    dbx = db(x)
    if dbx.shape[1:] != (bx.shape[1], bx.shape[1], bx.shape[2]) or E.shape != (bx.shape[2], bx.shape[2]):
        raise ShapeError(f"inconsistent shapes: b {bx.shape[1:]}, db {dbx.shape[1:]}, E {E.shape}")
    return np.einsum("gd,nabd,nag->nb", E, dbx, bx)


def corrected_drift(
    a: VectorField,
    b: VectorField,
    db: VectorField,
    E: np.ndarray,
    convention: str = "proposition",
) -> VectorField:
    if convention not in CONVENTIONS:
        raise DomainError(f"unknown convention {convention!r}; choose from {CONVENTIONS}")
    weight = 1.0 if convention == "proposition" else 0.5
    E = np.atleast_2d(np.asarray(E, dtype=np.float64))

    def drift(x: np.ndarray) -> np.ndarray:
        return a(x) + weight * correction_term(b, db, E, x)

    return drift


# ---------------------------------------------------------------------------
# Built-in models
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SlowModel:
    name: str
    a: VectorField = field(repr=False)
    b: VectorField = field(repr=False)
    db: VectorField = field(repr=False)
    dimension: int
    noise_dimension: int

    def zero_xi(self) -> np.ndarray:
        return np.zeros(self.dimension)


def _proposition_model() -> SlowModel:
    def a(x):
        out = np.zeros_like(x)
        out[:, 1] = -x[:, 1] ** 2
        return out

    def b(x):
        out = np.zeros((len(x), 2, 2))
        out[:, 0, 0] = 1.0
        out[:, 1, 1] = x[:, 0]
        return out

    def db(x):
        out = np.zeros((len(x), 2, 2, 2))
        out[:, 0, 1, 1] = 1.0
        return out

    return SlowModel("proposition", a, b, db, 2, 2)


def _identity_model(d: int) -> SlowModel:
    return SlowModel(
        "identity",
        lambda x: np.zeros_like(x),
        lambda x: np.broadcast_to(np.eye(d), (len(x), d, d)).copy(),
        lambda x: np.zeros((len(x), d, d, d)),
        d,
        d,
    )


def _linear_model() -> SlowModel:
    return SlowModel(
        "linear",
        lambda x: np.zeros_like(x),
        lambda x: x[:, :, None].copy(),
        lambda x: np.ones((len(x), 1, 1, 1)),
        1,
        1,
    )


def _constant_drift_model(d: int) -> SlowModel:
    def a(x):
        out = np.zeros_like(x)
        out[:, 0] = 1.0
        return out

    return SlowModel(
        "constant_drift",
        a,
        lambda x: np.zeros((len(x), d, d)),
        lambda x: np.zeros((len(x), d, d, d)),
        d,
        d,
    )


SLOW_MODELS = ("proposition", "identity", "linear", "constant_drift")


def slow_model(name: str, dimension: int = 1) -> SlowModel:
    if name == "proposition":
        return _proposition_model()
    if name == "identity":
        return _identity_model(dimension)
    if name == "linear":
        return _linear_model()
    if name == "constant_drift":
        return _constant_drift_model(dimension)
    raise DomainError(f"unknown slow model {name!r}; choose from {', '.join(SLOW_MODELS)}")


def fast_slow_config(
    model: SlowModel,
    fast: MapDescriptor,
    observable: Observable,
    epsilon: float,
    xi: Optional[np.ndarray] = None,
    t_end: float = 1.0,
    burn_in: int = DEFAULT_BURN_IN,
) -> FastSlowConfig:
    return FastSlowConfig(
        epsilon=epsilon,
        xi=model.zero_xi() if xi is None else xi,
        a=model.a,
        b=model.b,
        db=model.db,
        fast=fast,
        observable=observable,
        t_end=t_end,
        burn_in=burn_in,
    )


def limiting_sde(
    cfg: FastSlowConfig,
    sigma: np.ndarray,
    E: np.ndarray,
    convention: Optional[str] = "proposition",
) -> SDEConfig:
    """SDE on the same macro step dt = eps^2; convention=None drops the correction."""
    drift = cfg.a if convention is None else corrected_drift(cfg.a, cfg.b, cfg.db, E, convention)
    return SDEConfig(drift=drift, diffusion=cfg.b, sigma=sigma, dt=cfg.epsilon**2, xi=cfg.xi, t_end=cfg.t_end)


# ---------------------------------------------------------------------------
# Comparisons
# ---------------------------------------------------------------------------

def _moment_report(name: str, a: float, b: float, sa: float, sb: float, sizes: tuple, seed: Optional[int]) -> TestReport:
    combined = float(np.hypot(sa, sb))
    diff = abs(float(a) - float(b))
    z = diff / combined if combined > 0 else (np.inf if diff > 1e-12 else 0.0)
    return TestReport(
        test_name=name,
        statistic=float(z),
        p_value=None,
        threshold=3.0,
        passed=z <= 3.0,
        sample_sizes=sizes,
        seed=seed,
        details={"fast_slow": float(a), "sde": float(b)},
    )


def _var_stderr(x: np.ndarray) -> float:
    centered = x - x.mean()
    m4 = float(np.mean(centered**4))
    var = float(np.var(x, ddof=1))
    return float(np.sqrt(max(m4 - var**2, 0.0) / len(x)))


def _cov_stderr(x: np.ndarray, y: np.ndarray) -> float:
    prod = (x - x.mean()) * (y - y.mean())
    return float(prod.std(ddof=1) / np.sqrt(len(x)))


def homogenisation_compare(
    fs_terminal: np.ndarray,
    sde_terminal: np.ndarray,
    seed: Optional[int] = None,
) -> List[TestReport]:
    """Means, variances and covariances at 3 combined stderr, plus KS per component."""
    fs = np.atleast_2d(np.asarray(fs_terminal, dtype=np.float64))
    sde = np.atleast_2d(np.asarray(sde_terminal, dtype=np.float64))
    if fs.shape[1] != sde.shape[1]:
        raise ShapeError(f"ensembles differ in dimension: {fs.shape[1]} vs {sde.shape[1]}")
    reports: List[TestReport] = []
    sizes = (fs.shape[0], sde.shape[0])
    d = fs.shape[1]
    for k in range(d):
        a, b = fs[:, k], sde[:, k]
        r = _moment_report(
            f"mean[{k}]",
            a.mean(),
            b.mean(),
            a.std(ddof=1) / np.sqrt(len(a)),
            b.std(ddof=1) / np.sqrt(len(b)),
            sizes,
            seed,
        )
        reports.append(r)
        r = _moment_report(f"var[{k}]", a.var(ddof=1), b.var(ddof=1), _var_stderr(a), _var_stderr(b), sizes, seed)
        reports.append(r)
    for i in range(d):
        for j in range(i + 1, d):
            ca = np.cov(fs[:, i], fs[:, j])[0, 1]
            cb = np.cov(sde[:, i], sde[:, j])[0, 1]
            r = _moment_report(
                f"cov[{i},{j}]", ca, cb, _cov_stderr(fs[:, i], fs[:, j]), _cov_stderr(sde[:, i], sde[:, j]), sizes, seed
            )
            reports.append(r)
    for k in range(d):
        reports.append(two_sample_compare(fs[:, k], sde[:, k], name=f"ks[{k}]", seed=seed))
    return reports


def timescale_consistency(cfg: FastSlowConfig, replicas: int, seed: int) -> List[TestReport]:
    """Terminal moments at eps and eps/2 agree within 3 combined stderr."""
    coarse = fast_slow_ensemble(cfg, replicas, seed)
    fine = fast_slow_ensemble(replace(cfg, epsilon=cfg.epsilon / 2), replicas, seed + 1)
    return [r for r in homogenisation_compare(coarse.terminal, fine.terminal, seed) if not r.test_name.startswith("ks")]


def lipschitz_estimate(fn: VectorField, paths: SlowPaths, bound: Optional[float] = None) -> float:
    """Largest difference quotient of fn between consecutive macro-grid points."""
    x = paths.paths.reshape(-1, paths.paths.shape[-1])
    values = fn(x).reshape(paths.paths.shape[0], paths.paths.shape[1], -1)
    dx = np.linalg.norm(np.diff(paths.paths, axis=1), axis=2)
    df = np.linalg.norm(np.diff(values, axis=1), axis=2)
    moving = dx > 1e-12
    quotient = float((df[moving] / dx[moving]).max()) if np.any(moving) else 0.0
    if bound is not None and quotient > bound:
        logger.warning("difference quotient %.3g exceeds the Lipschitz bound %.3g", quotient, bound)
    return quotient

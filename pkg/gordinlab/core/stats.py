"""Statistical checks: normality, reference law for (W, 𝕎), maximal inequalities."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats as sps

from gordinlab.core import streams
from gordinlab.core.decomposition import martingale_part
from gordinlab.core.errors import DomainError, PSDError, ShapeError
from gordinlab.core.maps import DEFAULT_BURN_IN, Interval, MapDescriptor, Observable
from gordinlab.core.processes import ensemble_terminal_pairs
from gordinlab.core.transfer import UlamOperator, apply_transfer, grid_norm, lookup, project

logger = logging.getLogger(__name__)

P_THRESHOLD = 0.01
SAFETY_FACTOR = 1.1
RIO_CONSTANT = 128.0
DOOB_CONSTANT = 4.0
SMALL_N = 100


@dataclass
class TestReport:
    test_name: str
    statistic: float
    p_value: Optional[float]
    threshold: float
    passed: bool
    sample_sizes: Tuple[int, ...]
    seed: Optional[int] = None
    flags: List[str] = field(default_factory=list)
    details: dict = field(default_factory=dict)

    # keep pytest from collecting this as a test class
    __test__ = False

    def __post_init__(self) -> None:
        if self.p_value is not None and not (0.0 <= self.p_value <= 1.0):
            raise DomainError(f"p-value {self.p_value} outside [0, 1]")

    def to_dict(self) -> dict:
        out = asdict(self)
        out["sample_sizes"] = list(self.sample_sizes)
        return out


def majority_verdict(reports: Sequence[TestReport]) -> bool:
    """Passes when a strict majority of repetitions pass (2 of 3)."""
    if not reports:
        return False
    return 2 * sum(r.passed for r in reports) > len(reports)


def mean_within_stderr(
    samples: np.ndarray,
    target,
    name: str = "mean",
    sigmas: float = 3.0,
    seed: Optional[int] = None,
) -> TestReport:
    samples = np.asarray(samples, dtype=np.float64)
    target = np.broadcast_to(np.asarray(target, dtype=np.float64), samples.shape[1:])
    mean = samples.mean(axis=0)
    stderr = samples.std(axis=0, ddof=1) / np.sqrt(samples.shape[0])
    diff = np.abs(mean - target)
    z = np.where(stderr > 0, diff / np.where(stderr > 0, stderr, 1.0), np.where(diff > 1e-12, np.inf, 0.0))
    worst = float(np.max(z))
    return TestReport(
        test_name=name,
        statistic=worst,
        p_value=None,
        threshold=sigmas,
        passed=worst <= sigmas,
        sample_sizes=(samples.shape[0],),
        seed=seed,
        details={"mean": np.atleast_1d(mean).tolist(), "stderr": np.atleast_1d(stderr).tolist(), "target": np.atleast_1d(target).tolist()},
    )


# ---------------------------------------------------------------------------
# Kolmogorov-Smirnov
# ---------------------------------------------------------------------------

def ks_normality(
    samples: np.ndarray,
    variance: float,
    name: str = "ks_normality",
    seed: Optional[int] = None,
) -> TestReport:
    if variance <= 0.0:
        raise DomainError(f"variance must be positive, got {variance}")
    samples = np.asarray(samples, dtype=np.float64).ravel()
    result = sps.kstest(samples, "norm", args=(0.0, np.sqrt(variance)))
    p = float(np.clip(result.pvalue, 0.0, 1.0))
    return TestReport(
        test_name=name,
        statistic=float(result.statistic),
        p_value=p,
        threshold=P_THRESHOLD,
        passed=p > P_THRESHOLD,
        sample_sizes=(len(samples),),
        seed=seed,
    )


def _columns(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return x.reshape(x.shape[0], -1)


def two_sample_compare(
    a: np.ndarray,
    b: np.ndarray,
    name: str = "two_sample",
    seed: Optional[int] = None,
) -> TestReport:
    """Per-coordinate two-sample KS with a Bonferroni-corrected p-value."""
    ca, cb = _columns(a), _columns(b)
    if ca.shape[1] != cb.shape[1]:
        raise ShapeError(f"sample dimensions differ: {ca.shape[1]} vs {cb.shape[1]}")
    results = [sps.ks_2samp(ca[:, k], cb[:, k]) for k in range(ca.shape[1])]
    p = min(1.0, ca.shape[1] * min(float(r.pvalue) for r in results))
    return TestReport(
        test_name=name,
        statistic=max(float(r.statistic) for r in results),
        p_value=p,
        threshold=P_THRESHOLD,
        passed=p > P_THRESHOLD,
        sample_sizes=(ca.shape[0], cb.shape[0]),
        seed=seed,
        details={"per_coordinate_p": [float(r.pvalue) for r in results]},
    )


# ---------------------------------------------------------------------------
# Reference law
# ---------------------------------------------------------------------------

def psd_factor(sigma: np.ndarray, rtol: float = 1e-9) -> np.ndarray:
    """F with F F^T = sigma; zero modes allowed."""
    sigma = np.atleast_2d(np.asarray(sigma, dtype=np.float64))
    if sigma.shape[0] != sigma.shape[1]:
        raise ShapeError(f"covariance must be square, got {sigma.shape}")
    if not np.allclose(sigma, sigma.T, atol=1e-8):
        raise PSDError("covariance is not symmetric")
    eigenvalues, eigenvectors = np.linalg.eigh(0.5 * (sigma + sigma.T))
    floor = -rtol * max(1.0, float(np.abs(eigenvalues).max()))
    if eigenvalues.min() < floor:
        raise PSDError(f"covariance has negative eigenvalue {eigenvalues.min():.3g}")
    return eigenvectors * np.sqrt(np.clip(eigenvalues, 0.0, None))


@dataclass(frozen=True)
class ReferenceLawSampler:
    """(W(1), 𝕎(1)) with W a Brownian motion of covariance sigma and 𝕎 = ∫W⊗dW + t E."""

    sigma: np.ndarray
    drift_E: np.ndarray
    n_fine: int = 1 << 12
    _factor: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        sigma = np.atleast_2d(np.asarray(self.sigma, dtype=np.float64))
        drift = np.atleast_2d(np.asarray(self.drift_E, dtype=np.float64))
        if drift.shape != sigma.shape:
            raise ShapeError(f"drift {drift.shape} and covariance {sigma.shape} differ")
        if self.n_fine < 1:
            raise DomainError(f"n_fine must be >= 1, got {self.n_fine}")
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "drift_E", drift)
        object.__setattr__(self, "_factor", psd_factor(sigma))

    @property
    def dimension(self) -> int:
        return self.sigma.shape[0]


def _ito_sums(
    factor: np.ndarray,
    count: int,
    seed: int,
    steps: int,
    coarse_every: int = 0,
) -> Tuple[np.ndarray, np.ndarray, Optional[np.ndarray]]:
    d = factor.shape[0]
    noise = streams.ReplicaStreams(seed, streams.LANE_GAUSS, range(count), normal_width=d)
    scale = np.sqrt(1.0 / steps)
    w = np.zeros((count, d))
    ww = np.zeros((count, d, d))
    coarse = np.zeros((count, d, d)) if coarse_every else None
    anchor = np.zeros((count, d))
    for step in range(steps):
        dw = scale * noise.draw() @ factor.T
        ww += w[:, :, None] * dw[:, None, :]
        w += dw
        if coarse_every and (step + 1) % coarse_every == 0:
            coarse += anchor[:, :, None] * (w - anchor)[:, None, :]
            anchor = w.copy()
    return w, ww, coarse


def sample_limit_pair(sampler: ReferenceLawSampler, count: int, seed: int) -> Tuple[np.ndarray, np.ndarray]:
    """Left-point Riemann sums at resolution n_fine; returns (W(1), 𝕎(1)) per sample."""
    if count < 1:
        raise DomainError(f"count must be >= 1, got {count}")
    w, ww, _ = _ito_sums(sampler._factor, count, seed, sampler.n_fine)
    return w, ww + sampler.drift_E


def reference_convergence_check(sampler: ReferenceLawSampler, count: int, seed: int) -> TestReport:
    """Doubling n_fine along the same Brownian paths moves mean 𝕎(1) by less than one stderr."""
    w, fine, coarse = _ito_sums(sampler._factor, count, seed, 2 * sampler.n_fine, coarse_every=2)
    shift = np.abs(fine.mean(axis=0) - coarse.mean(axis=0))
    stderr = fine.std(axis=0, ddof=1) / np.sqrt(count)
    ratio = float(np.max(np.where(stderr > 0, shift / np.where(stderr > 0, stderr, 1.0), 0.0)))
    return TestReport(
        test_name="reference_convergence",
        statistic=ratio,
        p_value=None,
        threshold=1.0,
        passed=ratio < 1.0,
        sample_sizes=(count,),
        seed=seed,
    )


# ---------------------------------------------------------------------------
# Maximal inequalities
# ---------------------------------------------------------------------------

def _grid_observable(op: UlamOperator, values, name: str) -> Observable:
    def _eval(x: np.ndarray, y: Optional[np.ndarray]) -> np.ndarray:
        return lookup(op, values, x)

    return Observable(name, values.dimension, _eval, float(np.linalg.norm(values.values, axis=1).max()))


def _l1_series_sum(op: UlamOperator, v, horizon: int = 400, tol: float = 1e-14) -> float:
    total = 0.0
    current = v
    for n in range(horizon):
        if n:
            current = apply_transfer(op, current, 1)
        norm = grid_norm(op, current, 1)
        total += norm
        if norm < tol:
            break
    return total


def maximal_inequality_suite(
    desc: MapDescriptor,
    obs: Observable,
    op: UlamOperator,
    n: int,
    replicas: int,
    seed: int,
    burn_in: int = DEFAULT_BURN_IN,
    k: Optional[int] = None,
) -> List[TestReport]:
    """Rio-type bound for max |v_l| and Doob bound for max |m_l|, over one ensemble of orbits."""
    v_grid = project(op, obs)
    sample = ensemble_terminal_pairs(desc, obs, n, replicas, seed, burn_in=burn_in)
    rio_lhs = float(np.mean(sample.max_partial**2))
    rio_rhs = SAFETY_FACTOR * RIO_CONSTANT * n * obs.sup_norm_bound * _l1_series_sum(op, v_grid)
    rio = TestReport(
        test_name=f"rio[{obs.name}]",
        statistic=rio_lhs,
        p_value=None,
        threshold=rio_rhs,
        passed=rio_lhs <= rio_rhs,
        sample_sizes=(replicas,),
        seed=seed,
        details={"n": n},
    )

    dec = martingale_part(op, v_grid, k)
    m_obs = _grid_observable(op, dec.mart, f"m[{obs.name}]")
    # same seed, same orbits
    m_sample = ensemble_terminal_pairs(desc, m_obs, n, replicas, seed, burn_in=burn_in)
    m_l2 = grid_norm(op, dec.mart, 2)
    doob_lhs = float(np.sqrt(np.mean(m_sample.max_partial**2)))
    doob_rhs = SAFETY_FACTOR * DOOB_CONSTANT * np.sqrt(n) * m_l2
    observed = doob_lhs / (np.sqrt(n) * m_l2) if m_l2 > 0 else 0.0
    doob = TestReport(
        test_name=f"doob[{obs.name}]",
        statistic=doob_lhs,
        p_value=None,
        threshold=float(doob_rhs),
        passed=doob_lhs <= doob_rhs,
        sample_sizes=(replicas,),
        seed=seed,
        details={"n": n, "observed_ratio": float(observed)},
    )
    for report in (rio, doob):
        if not report.passed:
            logger.error("%s violated: %.4g > %.4g", report.test_name, report.statistic, report.threshold)
    return [rio, doob]


# ---------------------------------------------------------------------------
# Changed initial law
# ---------------------------------------------------------------------------

def zweimuller_robustness(
    desc: MapDescriptor,
    obs: Observable,
    nu: Optional[Interval],
    n: int,
    replicas: int,
    seed: int,
    burn_in: int = DEFAULT_BURN_IN,
) -> TestReport:
    """W_n(1) started from nu (no burn-in) against W_n(1) sampled from mu.

    ``nu=None`` draws the first ensemble from mu as well, on disjoint streams.
    """
    if nu is None:
        first = ensemble_terminal_pairs(desc, obs, n, replicas, seed, burn_in=burn_in)
    else:
        first = ensemble_terminal_pairs(desc, obs, n, replicas, seed, burn_in=0, start=nu)
    reference = ensemble_terminal_pairs(desc, obs, n, replicas, seed, burn_in=burn_in, stream_offset=replicas)
    report = two_sample_compare(first.w, reference.w, name="robustness", seed=seed)
    report.details["nu"] = None if nu is None else [nu.low, nu.high]
    report.details["n"] = n
    if n < SMALL_N:
        report.flags.append("small-n")
        logger.warning("robustness run with n=%d is preasymptotic; verdict is not meaningful", n)
    return report

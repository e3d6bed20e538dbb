"""The processes W_n and 𝕎_n, and the covariance and drift estimators."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from itertools import combinations
from typing import Dict, Optional

import numpy as np

from gordinlab.core.decomposition import Decomposition
from gordinlab.core.errors import DomainError, ShapeError
from gordinlab.core.maps import DEFAULT_BURN_IN, Interval, MapDescriptor, Observable, Orbit, iterate_ensemble
from gordinlab.core.transfer import LagCorrelations, UlamOperator, power_law_tail

logger = logging.getLogger(__name__)

AGREEMENT_SIGMAS = 3.0


# ---------------------------------------------------------------------------
# Paths
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PathPair:
    """W_n and 𝕎_n on the grid t_i = i/n, i = 0..floor(nK)."""

    times: np.ndarray
    w_path: np.ndarray
    ww_path: Optional[np.ndarray]
    n: int
    K: float

    def rows(self) -> list[tuple]:
        out = []
        for i, t in enumerate(self.times):
            row = [float(t), *self.w_path[i]]
            if self.ww_path is not None:
                row.extend(self.ww_path[i].ravel())
            out.append(tuple(row))
        return out


def _partial_sums(orbit: Orbit, n: int, K: float) -> np.ndarray:
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n}")
    steps = int(np.floor(n * K + 1e-9))
    if orbit.n_steps < steps:
        raise ShapeError(f"orbit has {orbit.n_steps} points, the path on [0, {K}] needs {steps}")
    values = orbit.observable_values[:steps]
    sums = np.zeros((steps + 1, orbit.dimension))
    np.cumsum(values, axis=0, out=sums[1:])
    return sums


def wip_path(orbit: Orbit, n: int, K: float = 1.0) -> PathPair:
    sums = _partial_sums(orbit, n, K)
    times = np.arange(len(sums)) / n
    return PathPair(times=times, w_path=sums / np.sqrt(n), ww_path=None, n=n, K=K)


def iterated_path(orbit: Orbit, n: int, K: float = 1.0) -> PathPair:
    """𝕎(t_{j+1}) = 𝕎(t_j) + S_j (x) v_j / n with S_j the sum of the first j values."""
    sums = _partial_sums(orbit, n, K)
    values = orbit.observable_values[: len(sums) - 1]
    increments = np.einsum("ja,jb->jab", sums[:-1], values)
    d = orbit.dimension
    ww = np.zeros((len(sums), d, d))
    np.cumsum(increments, axis=0, out=ww[1:])
    times = np.arange(len(sums)) / n
    return PathPair(times=times, w_path=sums / np.sqrt(n), ww_path=ww / n, n=n, K=K)


def shuffle_identity_error(path: PathPair) -> float:
    """Largest relative defect of W (x) W = 𝕎 + 𝕎^T + sum of squared increments."""
    if path.ww_path is None:
        raise DomainError("shuffle identity needs the iterated path")
    dw = np.diff(path.w_path, axis=0)
    quad = np.zeros_like(path.ww_path)
    np.cumsum(np.einsum("ja,jb->jab", dw, dw), axis=0, out=quad[1:])
    lhs = np.einsum("ta,tb->tab", path.w_path, path.w_path)
    sym = path.ww_path + np.swapaxes(path.ww_path, 1, 2)
    scale = (
        np.abs(lhs).max(axis=(1, 2))
        + np.abs(sym).max(axis=(1, 2))
        + np.abs(quad).max(axis=(1, 2))
        + np.finfo(float).tiny
    )
    defect = np.abs(lhs - sym - quad).max(axis=(1, 2))
    return float(np.max(defect / scale))


# ---------------------------------------------------------------------------
# Ensembles
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EnsembleSample:
    """Per-replica W_n(1), 𝕎_n(1) and max_{l<=n} |v_l|."""

    w: np.ndarray
    ww: np.ndarray
    max_partial: np.ndarray
    n: int
    seed: int

    @property
    def replicas(self) -> int:
        return self.w.shape[0]

    def ww_mean(self) -> "Estimate":
        return Estimate.from_samples(self.ww)


def ensemble_terminal_pairs(
    desc: MapDescriptor,
    obs: Observable,
    n: int,
    replicas: int,
    seed: int,
    burn_in: int = DEFAULT_BURN_IN,
    start: Optional[Interval] = None,
    stream_offset: int = 0,
) -> EnsembleSample:
    """Running-sum recurrence over an ensemble; orbits are never stored."""
    if replicas < 1:
        raise DomainError(f"replicas must be >= 1, got {replicas}")
    d = obs.dimension
    sums = np.zeros((replicas, d))
    ww = np.zeros((replicas, d, d))
    peak = np.zeros(replicas)
    states = iterate_ensemble(desc, n, replicas, seed, burn_in=burn_in, start=start, stream_offset=stream_offset)
    for base, fiber in states:
        v = obs(base, fiber)
        ww += sums[:, :, None] * v[:, None, :]
        sums += v
        np.maximum(peak, np.linalg.norm(sums, axis=1), out=peak)
    logger.debug("ensemble of %d replicas, n=%d, seed=%d on %s", replicas, n, seed, desc.label)
    return EnsembleSample(w=sums / np.sqrt(n), ww=ww / n, max_partial=peak, n=n, seed=seed)


# ---------------------------------------------------------------------------
# Estimators
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Estimate:
    value: np.ndarray
    stderr: np.ndarray
    tail_bound: float = 0.0

    @classmethod
    def exact(cls, value) -> "Estimate":
        value = np.atleast_2d(np.asarray(value, dtype=np.float64))
        return cls(value=value, stderr=np.zeros_like(value))

    @classmethod
    def from_samples(cls, samples: np.ndarray, tail_bound: float = 0.0) -> "Estimate":
        samples = np.asarray(samples, dtype=np.float64)
        count = samples.shape[0]
        stderr = samples.std(axis=0, ddof=1) / np.sqrt(count) if count > 1 else np.zeros(samples.shape[1:])
        return cls(value=samples.mean(axis=0), stderr=stderr, tail_bound=tail_bound)

    def to_dict(self) -> dict:
        return {"value": self.value.tolist(), "stderr": self.stderr.tolist(), "tail_bound": self.tail_bound}


def _symmetrize(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + np.swapaxes(a, -1, -2))


def sigma_direct(sample: EnsembleSample) -> Estimate:
    outer = np.einsum("ra,rb->rab", sample.w, sample.w)
    return Estimate.from_samples(_symmetrize(outer))


def _lag_slice(corr: LagCorrelations, J: Optional[int]) -> tuple[np.ndarray, int]:
    J = corr.max_lag if J is None else J
    if J < 1:
        raise DomainError(f"J must be >= 1, got {J}")
    if J > corr.max_lag:
        raise DomainError(f"J={J} exceeds the {corr.max_lag} recorded lags")
    return corr.per_chain[:, : J + 1], J


def _tail(corr: LagCorrelations, J: int) -> float:
    norms = np.abs(corr.mean[: J + 1]).max(axis=(1, 2))
    if J < 4 or norms[-1] <= 1e-12 * norms.max():
        return 0.0
    return power_law_tail(norms, J // 2)


def sigma_green_kubo(corr: LagCorrelations, J: Optional[int] = None) -> Estimate:
    """C_0 + sum_{j=1}^J (C_j + C_j^T), one value per chain."""
    lags, J = _lag_slice(corr, J)
    per_chain = lags[:, 0] + lags[:, 1:].sum(axis=1) + np.swapaxes(lags[:, 1:], -1, -2).sum(axis=1)
    return Estimate.from_samples(_symmetrize(per_chain), tail_bound=2.0 * _tail(corr, J))


def drift_matrix(corr: LagCorrelations, J: Optional[int] = None) -> Estimate:
    """E = sum_{j=1}^J C_j."""
    lags, J = _lag_slice(corr, J)
    return Estimate.from_samples(lags[:, 1:].sum(axis=1), tail_bound=_tail(corr, J))


def sigma_martingale(op: UlamOperator, dec: Decomposition) -> Estimate:
    m = dec.mart.values
    return Estimate.exact(np.einsum("i,ia,ib->ab", op.cell_weights, m, m))


@dataclass(frozen=True)
class Verdict:
    degenerate: bool
    smallest_eigenvalue: float
    witness: Optional[np.ndarray]
    estimator: str


@dataclass(frozen=True)
class SigmaReport:
    sigma_direct: Optional[Estimate]
    sigma_green_kubo: Optional[Estimate]
    sigma_martingale: Optional[Estimate]
    drift_E: Optional[Estimate]
    verdict: Optional[Verdict] = None
    discrepancies: Dict[str, float] = field(default_factory=dict)

    def estimates(self) -> Dict[str, Estimate]:
        named = {
            "direct": self.sigma_direct,
            "green_kubo": self.sigma_green_kubo,
            "martingale": self.sigma_martingale,
        }
        return {k: v for k, v in named.items() if v is not None}

    @property
    def degenerate(self) -> bool:
        return bool(self.verdict and self.verdict.degenerate)

    @property
    def agree(self) -> bool:
        return all(z <= AGREEMENT_SIGMAS for z in self.discrepancies.values())

    def to_dict(self) -> dict:
        out = {name: est.to_dict() for name, est in self.estimates().items()}
        out["drift_E"] = None if self.drift_E is None else self.drift_E.to_dict()
        out["discrepancies"] = dict(self.discrepancies)
        if self.verdict is not None:
            out["degenerate"] = self.verdict.degenerate
            out["smallest_eigenvalue"] = self.verdict.smallest_eigenvalue
            out["witness"] = None if self.verdict.witness is None else self.verdict.witness.tolist()
        return out


def discrepancy(a: Estimate, b: Estimate) -> float:
    """Largest entrywise |a - b| in units of the combined standard error."""
    combined = np.sqrt(a.stderr**2 + b.stderr**2)
    diff = np.abs(a.value - b.value)
    z = np.zeros_like(diff)
    noisy = combined > 0
    z[noisy] = diff[noisy] / combined[noisy]
    z[~noisy & (diff > 1e-12)] = np.inf
    return float(z.max())


def degeneracy_check(report: SigmaReport, tol: float = 1e-3, estimator: Optional[str] = None) -> Verdict:
    available = report.estimates()
    if not available:
        raise DomainError("sigma report carries no estimate")
    if estimator is None:
        estimator = next(name for name in ("martingale", "green_kubo", "direct") if name in available)
    if estimator not in available:
        raise DomainError(f"estimator {estimator!r} not present in the report")
    sigma = _symmetrize(available[estimator].value)
    eigenvalues, eigenvectors = np.linalg.eigh(sigma)
    smallest = float(eigenvalues[0])
    if smallest >= tol:
        return Verdict(False, smallest, None, estimator)
    witness = eigenvectors[:, 0]
    nonzero = np.flatnonzero(np.abs(witness) > 1e-12)
    if nonzero.size and witness[nonzero[-1]] < 0:
        witness = -witness
    return Verdict(True, smallest, witness, estimator)


def sigma_report(
    direct: Optional[Estimate] = None,
    green_kubo: Optional[Estimate] = None,
    martingale: Optional[Estimate] = None,
    drift: Optional[Estimate] = None,
    tol: float = 1e-3,
) -> SigmaReport:
    report = SigmaReport(direct, green_kubo, martingale, drift)
    pairs = {
        f"{a}~{b}": discrepancy(report.estimates()[a], report.estimates()[b])
        for a, b in combinations(report.estimates(), 2)
    }
    verdict = degeneracy_check(report, tol) if report.estimates() else None
    report = SigmaReport(direct, green_kubo, martingale, drift, verdict, pairs)
    for name, est in report.estimates().items():
        logger.info("Sigma[%s] = %s", name, np.array2string(est.value, precision=5))
    return report

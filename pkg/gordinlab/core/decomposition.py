"""Martingale-coboundary decompositions.

Noninvertible maps work on the Ulam grid: v = m + chi o T - chi with
chi = sum_{j>=1} P^j v and P m = 0.

Baker maps carry a stable foliation by vertical fibers, so F_0-measurable means
"a function of the base coordinate" and E_0 is an average over the fiber. There
v = v_hat + chi_plus o T - chi_plus with v_hat F_0-measurable, and v_hat is
decomposed again on the base grid.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Optional, Tuple

import numpy as np

from gordinlab.core import maps
from gordinlab.core.errors import DomainError, ResolutionError
from gordinlab.core.maps import MapDescriptor, MapKind, Observable
from gordinlab.core.transfer import (
    DecaySeries,
    GridFunction,
    UlamOperator,
    apply_transfer,
    build_ulam,
    compose,
    grid_norm,
    lag_correlations,
    make_series,
)

logger = logging.getLogger(__name__)

KER_P_LIMIT = 0.1
DEFAULT_LSV_TRUNCATION = 40
DOUBLING_TRUNCATION_CAP = 60
CHUNK = 1024


# ---------------------------------------------------------------------------
# Noninvertible setting
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Decomposition:
    chi: GridFunction
    mart: GridFunction
    truncation_k: int
    residual_ker_P: float
    l2_cauchy_gap: float
    remainder: GridFunction = field(repr=False)
    tail_estimate: float = 0.0


def chi_truncated(op: UlamOperator, v: GridFunction, k: int) -> GridFunction:
    if k < 1:
        raise DomainError(f"k must be >= 1, got {k}")
    total = np.zeros_like(v.values)
    current = v
    for _ in range(k):
        current = apply_transfer(op, current, 1)
        total += current.values
    return GridFunction(total)


def default_truncation(op: UlamOperator, v: GridFunction) -> int:
    """Smallest k with |P^k v|_1 < 1e-6 for the doubling base, a fixed depth otherwise."""
    if op.desc.base.kind != MapKind.DOUBLING:
        return DEFAULT_LSV_TRUNCATION
    current = v
    for k in range(1, DOUBLING_TRUNCATION_CAP + 1):
        current = apply_transfer(op, current, 1)
        if grid_norm(op, current, 1) < 1e-6:
            return k
    return DOUBLING_TRUNCATION_CAP


def _martingale(op: UlamOperator, v: GridFunction, k: int) -> Tuple[GridFunction, GridFunction, GridFunction]:
    chi = chi_truncated(op, v, k)
    remainder = apply_transfer(op, v, k)
    mart = v - compose(op, chi) + chi - remainder
    return chi, mart, remainder


def martingale_part(op: UlamOperator, v: GridFunction, k: Optional[int] = None) -> Decomposition:
    """m^(k) = v - chi_k o T + chi_k - P^k v, with diagnostics."""
    k = default_truncation(op, v) if k is None else k
    if k < 1:
        raise DomainError(f"k must be >= 1, got {k}")
    chi, mart, remainder = _martingale(op, v, k)
    residual = grid_norm(op, apply_transfer(op, mart, 1), 1)
    if residual > KER_P_LIMIT:
        raise ResolutionError(f"|P m|_1 = {residual:.3g} exceeds {KER_P_LIMIT}; the grid is under-resolved")
    _, mart_2k, _ = _martingale(op, v, 2 * k)
    gap = grid_norm(op, mart - mart_2k, 2)

    norms = [grid_norm(op, apply_transfer(op, v, n), 1) for n in range(k + 1)]
    tail = _geometric_tail(np.asarray(norms))
    logger.info("martingale part at k=%d: |Pm|_1=%.3g, Cauchy gap=%.3g", k, residual, gap)
    return Decomposition(
        chi=chi,
        mart=mart,
        truncation_k=k,
        residual_ker_P=residual,
        l2_cauchy_gap=gap,
        remainder=remainder,
        tail_estimate=tail,
    )


def _geometric_tail(norms: np.ndarray) -> float:
    """Tail of sum_n norms[n] beyond the last entry, extrapolating the last ratio."""
    if len(norms) < 2 or norms[-1] <= 0.0:
        return 0.0
    ratio = norms[-1] / norms[-2] if norms[-2] > 0 else 1.0
    if ratio >= 1.0:
        return float("inf")
    return float(norms[-1] * ratio / (1.0 - ratio))


def reconstruction_error(op: UlamOperator, v: GridFunction, dec: Decomposition) -> float:
    """|v - (m + chi o T - chi)|_1 on the grid."""
    return grid_norm(op, v - (dec.mart + compose(op, dec.chi) - dec.chi), 1)


def l2_cauchy_bound_check(op: UlamOperator, v: GridFunction, ell: int, k: int) -> Tuple[float, float]:
    """(|m^(k) - m^(ell)|_2^2, 4 |v|_inf sum_{n>=ell} |P^n v|_1)."""
    if not (1 <= ell < k):
        raise DomainError(f"need 1 <= ell < k, got ell={ell}, k={k}")
    _, m_k, _ = _martingale(op, v, k)
    _, m_ell, _ = _martingale(op, v, ell)
    lhs = grid_norm(op, m_k - m_ell, 2) ** 2

    horizon = 4 * k
    norms = np.empty(horizon + 1)
    current = v
    for n in range(horizon + 1):
        if n:
            current = apply_transfer(op, current, 1)
        norms[n] = grid_norm(op, current, 1)
    tail = norms[ell:].sum() + _geometric_tail(norms)
    rhs = 4.0 * grid_norm(op, v, np.inf) * tail
    return float(lhs), float(rhs)


def decomposition_rows(op: UlamOperator, v: GridFunction, dec: Decomposition) -> list[tuple]:
    """(cell, x, v..., chi..., m...) per cell, for CSV dumps."""
    rows = []
    for i, x in enumerate(op.midpoints):
        rows.append((i, float(x), *v.values[i], *dec.chi.values[i], *dec.mart.values[i]))
    return rows


# ---------------------------------------------------------------------------
# Fiber conditional expectations
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FiberNodes:
    """Quadrature nodes along the stable fiber.

    Shared nodes (shape (K,)) when the fiber-conditional law does not depend on
    the base point; otherwise one node set per equal-mass base bin (shape (B, m)).
    """

    method: str
    nodes: np.ndarray
    edges: Optional[np.ndarray] = None

    def for_points(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x)
        if self.nodes.ndim == 1:
            return np.broadcast_to(self.nodes, (len(x), len(self.nodes)))
        bins = np.clip(np.searchsorted(self.edges, x, side="right") - 1, 0, len(self.nodes) - 1)
        return self.nodes[bins]


def _require_baker(desc: MapDescriptor) -> None:
    if not desc.is_baker:
        raise DomainError(f"{desc.kind.value} has no stable fibers; use a baker map")


def fiber_nodes(
    desc: MapDescriptor,
    method: str = "exact_quadrature",
    resolution: int = 256,
    seed: int = 0,
    per_bin: int = 64,
) -> FiberNodes:
    _require_baker(desc)
    if method == "exact_quadrature":
        if desc.kind != MapKind.UNIFORM_BAKER:
            raise DomainError("exact fiber quadrature needs the uniform baker")
        depth = int(round(np.log2(resolution)))
        if 2**depth != resolution:
            raise DomainError(f"exact quadrature resolution must be a power of two, got {resolution}")
        c = desc.fiber_contraction
        # fiber law: sum_k b_k (1 - c) c^(k-1) with fair bits b_k
        bits = (np.arange(resolution)[:, None] >> np.arange(depth)[None, ::-1]) & 1
        scales = (1.0 - c) * c ** np.arange(depth)
        nodes = bits @ scales + 0.5 * c**depth
        return FiberNodes(method=method, nodes=np.sort(nodes))
    if method == "binned":
        base, fiber = maps.sample_invariant(desc, resolution * per_bin, seed)
        order = np.argsort(base, kind="stable")
        base, fiber = base[order], fiber[order]
        chunks = base.reshape(resolution, per_bin)
        edges = np.concatenate([[0.0], chunks[1:, 0], [1.0]])
        if np.any(np.diff(edges) <= 0.0):
            raise ResolutionError(f"empty base bin among {resolution} equal-mass bins; lower the resolution")
        return FiberNodes(method=method, nodes=fiber.reshape(resolution, per_bin), edges=edges)
    raise DomainError(f"unknown method {method!r}; use 'exact_quadrature' or 'binned'")


def _step_n(desc: MapDescriptor, base: np.ndarray, fiber: np.ndarray, n: int):
    for _ in range(n):
        base, fiber = maps.step_points(desc, base, fiber)
    return base, fiber


def fiber_average_series(
    desc: MapDescriptor,
    v: Observable,
    x: np.ndarray,
    n_terms: int,
    nodes: FiberNodes,
) -> np.ndarray:
    """E_0(v o T^j)(x) for j = 0..n_terms-1; shape (len(x), n_terms, d)."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty((len(x), n_terms, v.dimension))
    for lo in range(0, len(x), CHUNK):
        xs = x[lo : lo + CHUNK]
        ys = nodes.for_points(xs)
        base = np.repeat(xs[:, None], ys.shape[1], axis=1).ravel()
        fiber = np.array(ys, dtype=np.float64).ravel()
        for j in range(n_terms):
            if j:
                base, fiber = maps.step_points(desc, base, fiber)
            out[lo : lo + CHUNK, j] = v(base, fiber).reshape(len(xs), ys.shape[1], -1).mean(axis=1)
    return out


@dataclass(frozen=True)
class FiberAverage:
    """E_0 w as a function of the base coordinate."""

    desc: MapDescriptor
    w: Observable
    nodes: FiberNodes

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return fiber_average_series(self.desc, self.w, np.atleast_1d(x), 1, self.nodes)[:, 0, :]


def forward_observable(desc: MapDescriptor, v: Observable, n: int) -> Observable:
    """v o T^n."""

    def _eval(x: np.ndarray, y: Optional[np.ndarray]) -> np.ndarray:
        return v(*_step_n(desc, x, y, n))

    return Observable(f"{v.name}∘T^{n}", v.dimension, _eval, v.sup_norm_bound, needs_fiber=desc.is_baker)


def backward_observable(desc: MapDescriptor, v: Observable, n: int) -> Observable:
    """v o T^-n."""

    def _eval(x: np.ndarray, y: Optional[np.ndarray]) -> np.ndarray:
        for _ in range(n):
            x, y = maps.inverse_points(desc, x, y)
        return v(x, y)

    return Observable(f"{v.name}∘T^-{n}", v.dimension, _eval, v.sup_norm_bound, needs_fiber=True)


def fiber_conditional_expectation(
    desc: MapDescriptor,
    w: Observable,
    method: str = "exact_quadrature",
    resolution: Optional[int] = None,
    seed: int = 0,
) -> FiberAverage:
    if resolution is None:
        resolution = 256 if method == "exact_quadrature" else 512
    return FiberAverage(desc=desc, w=w, nodes=fiber_nodes(desc, method, resolution, seed))


def default_nodes_method(desc: MapDescriptor) -> str:
    if desc.kind == MapKind.UNIFORM_BAKER:
        return "exact_quadrature"
    return "binned"


def chi_plus_truncation(desc: MapDescriptor, v: Observable, tol: float = 1e-8) -> int:
    """Smallest k with Lip(v) c^(k+1) / (1 - c) < tol under geometric fiber contraction."""
    lip = v.lipschitz_bound
    if lip is None or desc.fiber_rate != "geometric":
        logger.warning("no geometric tail bound for %s on %s; using k=%d", v.name, desc.label, DEFAULT_LSV_TRUNCATION)
        return DEFAULT_LSV_TRUNCATION
    if lip == 0.0:
        return 1
    c = desc.fiber_contraction
    k = int(np.ceil(np.log(tol * (1.0 - c) / lip) / np.log(c))) - 1
    return max(k, 1)


# ---------------------------------------------------------------------------
# Invertible setting
# ---------------------------------------------------------------------------

def hybrid_criterion_diagnostic(
    desc: MapDescriptor,
    v: Observable,
    n_max: int = 24,
    grid_n: int = 1 << 12,
    method: Optional[str] = None,
    seed: int = 0,
    op: Optional[UlamOperator] = None,
    points: int = 2048,
) -> Tuple[DecaySeries, DecaySeries]:
    """(|E_0(v o T^-n)|_1, |E_0(v o T^n) - v o T^n|_2) for n = 0..n_max.

    The first series uses E_0(v o T^-n) = P^n E_0 v on the base grid; the second
    is an L^2 norm over base points and fiber nodes.
    """
    _require_baker(desc)
    method = method or default_nodes_method(desc)
    nodes = fiber_nodes(desc, method, seed=seed)
    op = op or build_ulam(desc, grid_n)

    e0v = GridFunction(fiber_average_series(desc, v, op.midpoints, 1, nodes)[:, 0, :])
    minus = np.empty(n_max + 1)
    current = e0v
    for n in range(n_max + 1):
        if n:
            current = apply_transfer(op, current, 1)
        minus[n] = grid_norm(op, current, 1)

    if method == "exact_quadrature":
        x = (np.arange(points) + 0.5) / points
    else:
        x, _ = maps.sample_invariant(desc, points, seed + 1)
    plus = np.zeros(n_max + 1)
    for lo in range(0, len(x), CHUNK):
        xs = x[lo : lo + CHUNK]
        ys = nodes.for_points(xs)
        width = ys.shape[1]
        base = np.repeat(xs[:, None], width, axis=1).ravel()
        fiber = np.array(ys, dtype=np.float64).ravel()
        for n in range(n_max + 1):
            if n:
                base, fiber = maps.step_points(desc, base, fiber)
            vals = v(base, fiber).reshape(len(xs), width, -1)
            dev = vals - vals.mean(axis=1, keepdims=True)
            plus[n] += float(np.sum(dev**2)) / width
    plus = np.sqrt(plus / len(x))
    logger.info("hybrid criterion for %s on %s: |E0 v|_1=%.3g, series_plus(%d)=%.3g", v.name, desc.label, minus[0], n_max, plus[-1])
    return make_series(minus, 1), make_series(plus, 2)


@dataclass(frozen=True)
class InvertibleDecomposition:
    """v = v_hat + chi_plus o T - chi_plus, and v_hat = m + chi_minus o f - chi_minus."""

    desc: MapDescriptor
    v: Observable = field(repr=False)
    nodes: FiberNodes = field(repr=False)
    op: UlamOperator = field(repr=False)
    chi_minus: GridFunction = field(repr=False)
    truncation_k: int
    truncation_minus: int
    residual_minus_one: float

    def _averages(self, x: np.ndarray) -> np.ndarray:
        return fiber_average_series(self.desc, self.v, x, self.truncation_k + 2, self.nodes)

    def chi_plus(self, base: np.ndarray, fiber: np.ndarray) -> np.ndarray:
        """sum_{j=0}^{k} (E_0(v o T^j) - v o T^j)."""
        g = self._averages(base)[:, : self.truncation_k + 1].sum(axis=1)
        total = np.zeros_like(g)
        b, f = np.asarray(base, dtype=np.float64), np.asarray(fiber, dtype=np.float64)
        for j in range(self.truncation_k + 1):
            if j:
                b, f = maps.step_points(self.desc, b, f)
            total += self.v(b, f)
        return g - total

    def v_hat(self, base: np.ndarray) -> np.ndarray:
        base = np.asarray(base, dtype=np.float64)
        k = self.truncation_k
        here = self._averages(base).sum(axis=1)
        there = self._averages(maps.base_map(self.desc, base))[:, : k + 1].sum(axis=1)
        return here - there

    def chi_minus_at(self, base: np.ndarray) -> np.ndarray:
        return self.chi_minus.values[self.op.cell_index(base)]

    def mart(self, base: np.ndarray) -> np.ndarray:
        base = np.asarray(base, dtype=np.float64)
        return self.v_hat(base) - self.chi_minus_at(maps.base_map(self.desc, base)) + self.chi_minus_at(base)

    def chi(self, base: np.ndarray, fiber: np.ndarray) -> np.ndarray:
        return self.chi_minus_at(base) + self.chi_plus(base, fiber)

    def reconstruction_error(self, count: int = 100_000, seed: int = 0) -> float:
        """|v - (v_hat + chi_plus o T - chi_plus)|_2 over physical-measure samples."""
        base, fiber = maps.sample_invariant(self.desc, count, seed)
        nb, nf = maps.step_points(self.desc, base, fiber)
        err = self.v(base, fiber) - (self.v_hat(base) + self.chi_plus(nb, nf) - self.chi_plus(base, fiber))
        return float(np.sqrt(np.mean(np.sum(err**2, axis=1))))


def invertible_decomposition(
    desc: MapDescriptor,
    v: Observable,
    k: Optional[int] = None,
    grid_n: int = 1 << 12,
    method: Optional[str] = None,
    seed: int = 0,
    op: Optional[UlamOperator] = None,
) -> InvertibleDecomposition:
    _require_baker(desc)
    k = chi_plus_truncation(desc, v) if k is None else k
    if k < 1:
        raise DomainError(f"k must be >= 1, got {k}")
    nodes = fiber_nodes(desc, method or default_nodes_method(desc), seed=seed)
    op = op or build_ulam(desc, grid_n)

    e0v = GridFunction(fiber_average_series(desc, v, op.midpoints, 1, nodes)[:, 0, :])
    k_minus = default_truncation(op, e0v)
    chi_minus = chi_truncated(op, e0v, k_minus)
    dec = InvertibleDecomposition(
        desc=desc,
        v=v,
        nodes=nodes,
        op=op,
        chi_minus=chi_minus,
        truncation_k=k,
        truncation_minus=k_minus,
        residual_minus_one=0.0,
    )
    # E_{-1} m = 0 means P m = 0 for the base transfer operator.
    m_grid = GridFunction(dec.v_hat(op.midpoints)) - compose(op, chi_minus) + chi_minus
    residual = grid_norm(op, apply_transfer(op, m_grid, 1), 1)
    logger.info("invertible decomposition on %s: k=%d, k_minus=%d, |E_-1 m|_1=%.3g", desc.label, k, k_minus, residual)
    return replace(dec, residual_minus_one=residual)


@dataclass(frozen=True)
class DriftIdentity:
    lhs: np.ndarray
    rhs: np.ndarray
    lhs_stderr: np.ndarray
    rhs_stderr: np.ndarray
    allowance: float

    @property
    def agrees(self) -> bool:
        limit = 3.0 * np.sqrt(self.lhs_stderr**2 + self.rhs_stderr**2) + self.allowance
        return bool(np.all(np.abs(self.lhs - self.rhs) <= limit))


def drift_identity_check(
    desc: MapDescriptor,
    v: Observable,
    k: Optional[int] = None,
    orbit_budget: int = 1 << 20,
    seed: int = 0,
    max_lag: int = 60,
    points: int = 20_000,
    dec: Optional[InvertibleDecomposition] = None,
) -> DriftIdentity:
    """Lag-sum drift against int (chi (x) v - m (x) chi_plus o T) dmu, both by Monte Carlo."""
    _require_baker(desc)
    dec = dec or invertible_decomposition(desc, v, k, seed=seed)
    chains = 32
    corr = lag_correlations(desc, v, max_lag, chains=chains, length=max(orbit_budget // chains, 4 * max_lag), seed=seed)
    lag_sums = corr.per_chain[:, 1:].sum(axis=1)
    lhs = lag_sums.mean(axis=0)
    lhs_se = lag_sums.std(axis=0, ddof=1) / np.sqrt(chains)

    base, fiber = maps.sample_invariant(desc, points, seed + 7)
    nb, nf = maps.step_points(desc, base, fiber)
    chi = dec.chi(base, fiber)
    terms = np.einsum("na,nb->nab", chi, v(base, fiber)) - np.einsum(
        "na,nb->nab", dec.mart(base), dec.chi_plus(nb, nf)
    )
    rhs = terms.mean(axis=0)
    rhs_se = terms.std(axis=0, ddof=1) / np.sqrt(points)
    # truncation of the base sum and the grid lookup of chi_minus
    allowance = 1e-3 + 2.0 * v.sup_norm_bound / dec.op.grid_size
    result = DriftIdentity(lhs=lhs, rhs=rhs, lhs_stderr=lhs_se, rhs_stderr=rhs_se, allowance=allowance)
    logger.info("drift identity on %s: agrees=%s", desc.label, result.agrees)
    return result

"""Ulam discretisation of the transfer operator and correlation estimates."""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import spsolve
from scipy.stats import qmc

from gordinlab.core.errors import DomainError, InvariantViolation, ResolutionError, ShapeError
from gordinlab.core.maps import (
    DEFAULT_BURN_IN,
    MapDescriptor,
    MapKind,
    Observable,
    base_inverse,
    base_map,
    iterate_ensemble,
)

logger = logging.getLogger(__name__)

ULAM_MAGIC = b"ULAM"
_HEADER = struct.Struct("<4sIQ")
MARKOV_FLOOR = 1e-10


def van_der_corput(count: int) -> np.ndarray:
    """Base-2 radical inverses of 0..count-1."""
    return qmc.Halton(d=1, scramble=False).random(count)[:, 0]


@dataclass(frozen=True)
class GridFunction:
    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim == 1:
            values = values[:, None]
        if values.ndim != 2:
            raise ShapeError(f"grid values must be (N, d), got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise DomainError("grid function has non-finite entries")
        object.__setattr__(self, "values", values)

    @property
    def grid_size(self) -> int:
        return self.values.shape[0]

    @property
    def dimension(self) -> int:
        return self.values.shape[1]

    def __add__(self, other: "GridFunction") -> "GridFunction":
        return GridFunction(self.values + other.values)

    def __sub__(self, other: "GridFunction") -> "GridFunction":
        return GridFunction(self.values - other.values)

    def scaled(self, factor: float) -> "GridFunction":
        return GridFunction(self.values * factor)

    @classmethod
    def zeros(cls, n: int, d: int = 1) -> "GridFunction":
        return cls(np.zeros((n, d)))


@dataclass(frozen=True)
class UlamOperator:
    """Ulam approximation of P on the cells between consecutive ``edges``.

    ``matrix[i, j]`` is the fraction of cell j mapped into cell i. ``transfer``
    acts on cell values as P does on L^1(mu) and ``koopman`` as composition with T.
    """

    desc: MapDescriptor
    matrix: sparse.csr_matrix
    transfer: sparse.csr_matrix
    koopman: sparse.csr_matrix
    cell_weights: np.ndarray
    edges: np.ndarray

    @property
    def grid_size(self) -> int:
        return len(self.cell_weights)

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.edges)

    @property
    def midpoints(self) -> np.ndarray:
        return 0.5 * (self.edges[:-1] + self.edges[1:])

    def cell_index(self, x: np.ndarray) -> np.ndarray:
        return np.clip(np.searchsorted(self.edges, np.asarray(x), side="right") - 1, 0, self.grid_size - 1)


def ulam_edges(desc: MapDescriptor, n: int) -> np.ndarray:
    """Cell edges on [0, 1]: uniform, except near the neutral fixed point of an LSV base.

    There the cells are the intervals between successive left-branch preimages of
    1/2, starting where those intervals get narrower than 1/n. Each such cell maps
    exactly onto its right neighbour, so long laminar stretches are followed step
    by step instead of being smeared across one coarse cell.
    """
    base = desc.base
    depth = n // 4
    if not base.has_lsv_base or depth < 2:
        return np.linspace(0.0, 1.0, n + 1)

    def preimage(x: float) -> float:
        return float(base_inverse(base, np.array([x]), np.zeros(1, dtype=np.int64))[0])

    top = 0.5
    lower = preimage(top)
    while top - lower > 1.0 / n:
        top, lower = lower, preimage(lower)
    points = [top]
    while len(points) < depth and points[-1] >= MARKOV_FLOOR:
        points.append(preimage(points[-1]))
    refined = np.concatenate([[0.0], points[::-1]])
    uniform = np.linspace(top, 1.0, n - len(points) + 1)[1:]
    logger.debug("%s: %d refined cells below %.3g, deepest edge %.3g", base.label, len(points), top, points[-1])
    return np.concatenate([refined, uniform])


def _sampled_fractions(base: MapDescriptor, edges: np.ndarray, samples_per_cell: int) -> sparse.csr_matrix:
    n = len(edges) - 1
    offsets = np.mod(van_der_corput(samples_per_cell) + 0.5 / samples_per_cell, 1.0)
    x = edges[:-1, None] + offsets[None, :] * np.diff(edges)[:, None]
    images = np.clip(np.searchsorted(edges, base_map(base, x.ravel()), side="right") - 1, 0, n - 1)
    rows = np.repeat(np.arange(n), samples_per_cell)
    data = np.full(len(rows), 1.0 / samples_per_cell)
    return sparse.coo_matrix((data, (rows, images)), shape=(n, n)).tocsr()


def _branch_fractions(base: MapDescriptor, edges: np.ndarray) -> sparse.csr_matrix:
    """Lebesgue share of cell j inside T^-1(cell i), from the two inverse branches."""
    n = len(edges) - 1
    widths = np.diff(edges)
    rows, cols, data = [], [], []
    for branch in (0, 1):
        pre = base_inverse(base, edges, np.full(n + 1, branch))
        inside = edges[(edges > pre[0]) & (edges < pre[-1])]
        cuts = np.union1d(pre, inside)
        length = np.diff(cuts)
        keep = length > 0.0
        mid = 0.5 * (cuts[:-1] + cuts[1:])[keep]
        src = np.clip(np.searchsorted(edges, mid, side="right") - 1, 0, n - 1)
        dst = np.clip(np.searchsorted(pre, mid, side="right") - 1, 0, n - 1)
        rows.append(src)
        cols.append(dst)
        data.append(length[keep] / widths[src])
    rows, cols, data = np.concatenate(rows), np.concatenate(cols), np.concatenate(data)
    return sparse.coo_matrix((data, (rows, cols)), shape=(n, n)).tocsr()


def _stationary(s: sparse.csr_matrix, widths: np.ndarray) -> np.ndarray:
    """Stationary cell masses, solved as densities so that tiny cells keep full relative precision."""
    n = s.shape[0]
    q = sparse.diags(1.0 / widths) @ s.T @ sparse.diags(widths)
    a = (q - sparse.identity(n, format="csr")).tolil()
    a[n - 1, :] = widths
    rhs = np.zeros(n)
    rhs[n - 1] = 1.0
    density = np.asarray(spsolve(a.tocsc(), rhs))
    return density * widths


def build_ulam(desc: MapDescriptor, n: int, samples_per_cell: int = 64) -> UlamOperator:
    """Ulam operator on ``n`` cells.

    Doubling bases use uniform cells sampled at ``samples_per_cell`` quasi-random
    points each. LSV bases use the refined cells of :func:`ulam_edges`, whose
    deepest members are far narrower than any sample spacing, so their fractions
    come from the inverse branches instead.
    """
    if n < 2:
        raise DomainError(f"grid size must be >= 2, got {n}")
    if samples_per_cell < 32:
        raise DomainError(f"samples_per_cell must be >= 32, got {samples_per_cell}")
    base = desc.base
    edges = ulam_edges(desc, n)
    widths = np.diff(edges)
    if base.has_lsv_base:
        s = _branch_fractions(base, edges)
    else:
        s = _sampled_fractions(base, edges, samples_per_cell)
    s.sum_duplicates()
    # s[j, i]: fraction of cell j landing in cell i; rows summed to 1 exactly
    s = (sparse.diags(1.0 / np.asarray(s.sum(axis=1)).ravel()) @ s).tocsr()

    if base.kind == MapKind.DOUBLING:
        weights = widths.copy()
    else:
        weights = _stationary(s, widths)
    if np.any(weights <= 0.0):
        empty = int(np.sum(weights <= 0.0))
        raise ResolutionError(f"{empty} Ulam cells received no mass at N={n}; refine samples_per_cell")
    weights = weights / weights.sum()

    d = sparse.diags(weights)
    d_inv = sparse.diags(1.0 / weights)
    transfer = (d_inv @ s.T @ d).tocsr()
    logger.info("built Ulam operator for %s on %d cells (%d samples/cell)", base.label, n, samples_per_cell)
    return UlamOperator(desc=desc, matrix=s.T.tocsr(), transfer=transfer, koopman=s, cell_weights=weights, edges=edges)


def project(op: UlamOperator, obs: Observable) -> GridFunction:
    """Cell-midpoint values of a base observable."""
    if obs.needs_fiber:
        raise DomainError(f"observable {obs.name!r} depends on the fiber; project its fiber average instead")
    return GridFunction(obs(op.midpoints))


def lookup(op: UlamOperator, v: GridFunction, x: np.ndarray) -> np.ndarray:
    return v.values[op.cell_index(x)]


def _check(op: UlamOperator, v: GridFunction) -> None:
    if v.grid_size != op.grid_size:
        raise ShapeError(f"grid function has {v.grid_size} cells, operator has {op.grid_size}")


def apply_transfer(op: UlamOperator, v: GridFunction, n: int = 1) -> GridFunction:
    if n < 0:
        raise DomainError(f"n must be >= 0, got {n}")
    _check(op, v)
    if n == 0:
        return v
    values = v.values
    for _ in range(n):
        values = op.transfer @ values
    return GridFunction(values)


def compose(op: UlamOperator, v: GridFunction) -> GridFunction:
    """Grid approximation of v o T."""
    _check(op, v)
    return GridFunction(op.koopman @ v.values)


def grid_norm(op: UlamOperator, v: GridFunction, p: float = 1) -> float:
    _check(op, v)
    pointwise = np.linalg.norm(v.values, axis=1)
    if p == np.inf:
        return float(pointwise.max())
    return float(np.sum(op.cell_weights * pointwise**p) ** (1.0 / p))


def grid_mean(op: UlamOperator, v: GridFunction) -> np.ndarray:
    _check(op, v)
    return op.cell_weights @ v.values


def invariant_mean(op: UlamOperator, obs: Observable) -> np.ndarray:
    return grid_mean(op, project(op, obs))


def center_observable(op: UlamOperator, obs: Observable) -> Observable:
    mean = invariant_mean(op, obs)
    logger.debug("centering %s by %s", obs.name, mean)
    return obs.centered(mean)


def koopman_check(op: UlamOperator, v: GridFunction) -> float:
    """L^1 distance between P(v o T) and v; small because PU = I."""
    return grid_norm(op, apply_transfer(op, compose(op, v), 1) - v, 1)


# ---------------------------------------------------------------------------
# Decay series
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DecaySeries:
    n: np.ndarray
    norms: np.ndarray
    p: float
    fitted_exponent: Optional[float]
    tail_sum: float
    stderr: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        if np.any(np.asarray(self.norms) < 0):
            raise DomainError("decay norms must be nonnegative")

    def rows(self) -> list[tuple]:
        stderr = self.stderr if self.stderr is not None else np.zeros(len(self.n))
        return [(int(k), float(v), float(s)) for k, v, s in zip(self.n, self.norms, stderr)]


def fit_decay_exponent(n: np.ndarray, norms: np.ndarray) -> Optional[float]:
    """Least-squares log-log slope over the final half of the range."""
    n = np.asarray(n, dtype=np.float64)
    norms = np.asarray(norms, dtype=np.float64)
    n_max = n.max()
    keep = (n >= n_max / 2) & (n > 0) & (norms > 0)
    if keep.sum() < 2:
        return None
    slope, _ = np.polyfit(np.log(n[keep]), np.log(norms[keep]), 1)
    return float(slope)


def make_series(
    norms: np.ndarray,
    p: float,
    cutoff: int = 0,
    stderr: Optional[np.ndarray] = None,
) -> DecaySeries:
    norms = np.asarray(norms, dtype=np.float64)
    n = np.arange(len(norms))
    return DecaySeries(
        n=n,
        norms=norms,
        p=p,
        fitted_exponent=fit_decay_exponent(n, norms),
        tail_sum=float(norms[cutoff:].sum()),
        stderr=stderr,
    )


def gordin_l1_diagnostic(op: UlamOperator, v: GridFunction, n_max: int = 48, cutoff: int = 0) -> DecaySeries:
    if n_max < 8:
        raise DomainError(f"n_max must be >= 8, got {n_max}")
    _check(op, v)
    norms = np.empty(n_max + 1)
    current = v
    for n in range(n_max + 1):
        if n:
            current = apply_transfer(op, current, 1)
        norms[n] = grid_norm(op, current, 1)
    if np.any(norms > norms[0] * (1.0 + 1e-9) + 1e-12):
        raise InvariantViolation("|P^n v|_1 exceeded |v|_1; the operator is not an L^1 contraction")
    if np.any(np.diff(norms) > 1e-12):
        logger.warning("|P^n v|_1 is not monotone for %s", op.desc.label)
    series = make_series(norms, 1, cutoff)
    logger.info(
        "L1 Gordin series for %s: |v|_1=%.4g, |P^%d v|_1=%.4g, slope %s",
        op.desc.label,
        norms[0],
        n_max,
        norms[-1],
        "n/a" if series.fitted_exponent is None else f"{series.fitted_exponent:.3f}",
    )
    return series


# ---------------------------------------------------------------------------
# Lag correlations
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LagCorrelations:
    """C_j[a, b] = int v^a (w^b o T^j) dmu for j = 0..J.

    ``per_chain`` has shape (R, J + 1, d, d'); Ulam quadrature yields R = 1.
    """

    per_chain: np.ndarray
    method: str

    @property
    def max_lag(self) -> int:
        return self.per_chain.shape[1] - 1

    @property
    def mean(self) -> np.ndarray:
        return self.per_chain.mean(axis=0)

    @property
    def stderr(self) -> np.ndarray:
        chains = self.per_chain.shape[0]
        if chains < 2:
            return np.zeros(self.per_chain.shape[1:])
        return self.per_chain.std(axis=0, ddof=1) / np.sqrt(chains)


def _cross_correlate(x: np.ndarray, y: np.ndarray, max_lag: int) -> np.ndarray:
    """x, y: (R, L, d). Returns (R, max_lag + 1, dx, dy) lag averages."""
    chains, length = x.shape[:2]
    size = 1 << int(np.ceil(np.log2(2 * length)))
    counts = (length - np.arange(max_lag + 1)).astype(np.float64)
    out = np.empty((chains, max_lag + 1, x.shape[2], y.shape[2]))
    for lo in range(0, chains, 8):
        fx = np.fft.rfft(x[lo : lo + 8], n=size, axis=1)
        fy = np.fft.rfft(y[lo : lo + 8], n=size, axis=1)
        cross = np.fft.irfft(np.conj(fx)[..., :, None] * fy[..., None, :], n=size, axis=1)
        out[lo : lo + 8] = cross[:, : max_lag + 1] / counts[None, :, None, None]
    return out


def sample_chains(
    desc: MapDescriptor,
    observables: Sequence[Observable],
    length: int,
    chains: int,
    seed: int,
    burn_in: int = DEFAULT_BURN_IN,
) -> list[np.ndarray]:
    """Observable values along `chains` independent orbits, each (R, L, d)."""
    out = [np.empty((chains, length, obs.dimension)) for obs in observables]
    for t, (base, fiber) in enumerate(iterate_ensemble(desc, length, chains, seed, burn_in=burn_in)):
        for buf, obs in zip(out, observables):
            buf[:, t, :] = obs(base, fiber)
    return out


def lag_correlations(
    desc: MapDescriptor,
    v: Observable,
    max_lag: int,
    chains: int = 64,
    length: int = 1 << 15,
    seed: int = 0,
    w: Optional[Observable] = None,
    burn_in: int = DEFAULT_BURN_IN,
) -> LagCorrelations:
    """Time-average correlations along independent orbits; one estimate per chain."""
    if max_lag >= length:
        raise DomainError(f"max_lag {max_lag} must be below the chain length {length}")
    w = v if w is None else w
    vals = sample_chains(desc, [v, w], length, chains, seed, burn_in)
    per_chain = _cross_correlate(vals[0], vals[1], max_lag)
    logger.debug("Monte Carlo correlations: %d chains of %d steps, lags 0..%d", chains, length, max_lag)
    return LagCorrelations(per_chain=per_chain, method="monte_carlo")


def ulam_correlations(
    op: UlamOperator,
    v: GridFunction,
    max_lag: int,
    w: Optional[GridFunction] = None,
) -> LagCorrelations:
    """Quadrature of (P^j v) (x) w against the cell weights."""
    w = v if w is None else w
    _check(op, v)
    _check(op, w)
    out = np.empty((1, max_lag + 1, v.dimension, w.dimension))
    current = v.values
    for j in range(max_lag + 1):
        if j:
            current = op.transfer @ current
        out[0, j] = np.einsum("i,ia,ib->ab", op.cell_weights, current, w.values)
    return LagCorrelations(per_chain=out, method="ulam")


def correlation_decay(
    desc: MapDescriptor,
    v: Observable,
    w: Observable,
    n_max: int,
    orbit_budget: int = 1 << 21,
    seed: int = 0,
    chains: int = 64,
) -> DecaySeries:
    """|int v . (w o T^n) dmu| for n = 0..n_max with Monte Carlo standard errors."""
    if v.dimension != w.dimension:
        raise ShapeError("correlation_decay needs observables of equal dimension")
    length = max(orbit_budget // chains, 4 * (n_max + 1))
    corr = lag_correlations(desc, v, n_max, chains=chains, length=length, seed=seed, w=w)
    traced = np.trace(corr.per_chain, axis1=2, axis2=3)
    values = traced.mean(axis=0)
    stderr = traced.std(axis=0, ddof=1) / np.sqrt(traced.shape[0])
    return make_series(np.abs(values), 1, stderr=stderr)


def signed_correlation_decay(
    desc: MapDescriptor,
    v: Observable,
    w: Observable,
    n_max: int,
    orbit_budget: int = 1 << 21,
    seed: int = 0,
    chains: int = 64,
) -> tuple[np.ndarray, np.ndarray]:
    """Signed counterpart of correlation_decay: (values, stderr)."""
    length = max(orbit_budget // chains, 4 * (n_max + 1))
    corr = lag_correlations(desc, v, n_max, chains=chains, length=length, seed=seed, w=w)
    traced = np.trace(corr.per_chain, axis1=2, axis2=3)
    return traced.mean(axis=0), traced.std(axis=0, ddof=1) / np.sqrt(traced.shape[0])


def power_law_tail(values: np.ndarray, start: int) -> float:
    """Extrapolated sum of |values[n]| for n beyond the last recorded lag."""
    values = np.abs(np.asarray(values, dtype=np.float64))
    n = np.arange(len(values))
    exponent = fit_decay_exponent(n[start:], values[start:]) if len(values) - start >= 2 else None
    if exponent is None or exponent >= -1.0:
        return float("inf") if values[-1] > 0 else 0.0
    last = len(values) - 1
    # int_{last}^{inf} c n^s dn with c n^s matched at the last lag
    return float(values[-1] * last / (-exponent - 1.0))


# ---------------------------------------------------------------------------
# Slow-mixing bound
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BoundCheck:
    n: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray
    p: float

    @property
    def holds(self) -> bool:
        return bool(np.all(self.lhs <= self.rhs))


def extremal_correlations(op: UlamOperator, v: GridFunction, n_max: int) -> np.ndarray:
    """Grid value of a_n, attained at w = sign(P^n v); equals |P^n v|_1 on the grid."""
    _check(op, v)
    if v.dimension != 1:
        raise ShapeError("extremal correlations are defined for scalar observables")
    out = np.empty(n_max + 1)
    current = v.values
    for n in range(n_max + 1):
        if n:
            current = op.transfer @ current
        test = GridFunction(np.sign(current))
        # int v (w o T^n) computed through the Koopman side
        composed = test.values
        for _ in range(n):
            composed = op.koopman @ composed
        out[n] = abs(float(op.cell_weights @ (v.values[:, 0] * composed[:, 0])))
    return out


def bounded_test_functions(thresholds: int = 16) -> Observable:
    """Bounded test functions w with |w|_inf = 1, stacked as one vector observable.

    Steps sign(x - k/thresholds) for 0 < k < thresholds, plus the signs of
    cos 2 pi x and sin 2 pi x.
    """
    cuts = np.arange(1, thresholds) / thresholds

    def _eval(x: np.ndarray, y: Optional[np.ndarray]) -> np.ndarray:
        steps = np.sign(x[..., None] - cuts)
        waves = np.stack([np.sign(np.cos(2 * np.pi * x)), np.sign(np.sin(2 * np.pi * x))], axis=-1)
        return np.concatenate([steps, waves], axis=-1)

    return Observable("test_family", len(cuts) + 2, _eval, 1.0)


def monte_carlo_extremal_correlations(
    desc: MapDescriptor,
    v: Observable,
    n_max: int,
    orbit_budget: int = 1 << 21,
    seed: int = 0,
    chains: int = 64,
    burn_in: int = DEFAULT_BURN_IN,
    family: Optional[Observable] = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Measured a_n: the largest |int v (w o T^n) dmu| over a test-function family.

    Returns (a_n, stderr), the stderr being that of the maximising test function
    at each lag.
    """
    if v.dimension != 1:
        raise ShapeError("extremal correlations are defined for scalar observables")
    family = family or bounded_test_functions()
    length = max(orbit_budget // chains, 4 * (n_max + 1))
    corr = lag_correlations(desc, v, n_max, chains=chains, length=length, seed=seed, w=family, burn_in=burn_in)
    values = np.abs(corr.mean[:, 0, :])
    stderr = corr.stderr[:, 0, :]
    best = np.argmax(values, axis=1)
    lags = np.arange(n_max + 1)
    logger.debug("extremal correlations for %s: maximisers %s", v.name, np.bincount(best).tolist())
    return values[lags, best], stderr[lags, best]


def slow_mixing_bound_check(
    op: UlamOperator,
    v: GridFunction,
    a_n: np.ndarray,
    p: float,
    sup_norm: Optional[float] = None,
    slack: float = 1.5,
) -> BoundCheck:
    """|P^n v|_p <= slack * |v|_inf^(1 - 1/p) * a_n^(1/p)."""
    if p not in (1, 2):
        raise DomainError(f"p must be 1 or 2, got {p}")
    sup = grid_norm(op, v, np.inf) if sup_norm is None else sup_norm
    a_n = np.asarray(a_n, dtype=np.float64)
    lhs = np.empty(len(a_n))
    current = v
    for n in range(len(a_n)):
        if n:
            current = apply_transfer(op, current, 1)
        lhs[n] = grid_norm(op, current, p)
    rhs = slack * sup ** (1.0 - 1.0 / p) * np.maximum(a_n, 0.0) ** (1.0 / p)
    return BoundCheck(n=np.arange(len(a_n)), lhs=lhs, rhs=rhs + 1e-12, p=p)


# ---------------------------------------------------------------------------
# Binary dump
# ---------------------------------------------------------------------------

def dump_operator(op: UlamOperator, path: Path) -> None:
    """Dense little-endian float64 matrix after a 16-byte header, then the weights."""
    n = op.grid_size
    offset = _HEADER.size + 8 * n * n
    path = Path(path)
    with path.open("wb") as fh:
        fh.write(_HEADER.pack(ULAM_MAGIC, n, offset))
        fh.write(op.matrix.toarray().astype("<f8").tobytes())
        fh.write(op.cell_weights.astype("<f8").tobytes())
    logger.info("dumped %dx%d Ulam matrix to %s", n, n, path)


def load_operator(path: Path, desc: MapDescriptor) -> UlamOperator:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise ShapeError(f"{path}: truncated Ulam header")
    magic, n, offset = _HEADER.unpack_from(raw)
    if magic != ULAM_MAGIC:
        raise ShapeError(f"{path}: bad magic {magic!r}")
    if len(raw) != offset + 8 * n:
        raise ShapeError(f"{path}: expected {offset + 8 * n} bytes, found {len(raw)}")
    matrix = np.frombuffer(raw, dtype="<f8", count=n * n, offset=_HEADER.size).reshape(n, n)
    weights = np.frombuffer(raw, dtype="<f8", count=n, offset=offset).copy()
    s = sparse.csr_matrix(matrix.T)
    transfer = (sparse.diags(1.0 / weights) @ s.T @ sparse.diags(weights)).tocsr()
    return UlamOperator(
        desc=desc,
        matrix=sparse.csr_matrix(matrix),
        transfer=transfer,
        koopman=s,
        cell_weights=weights,
        edges=ulam_edges(desc, n),
    )

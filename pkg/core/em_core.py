"""
EM Solver for Poisson Linear Inverse Problems

Counts n_d at detector d are modelled as independent Poisson variables with
mean (A lambda)_d, where a_bd >= 0 couples source b to detector d. The
multiplicative EM update

    lambda'_b = (lambda_b / A_b) * sum_d a_bd * n_d / (A lambda)_d

never decreases the Poisson log-likelihood, keeps zeros at zero and keeps
the total expected count equal to the total observed count.
"""

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator, Optional, Tuple, Union

import numpy as np
from scipy import sparse

from core.errors import (
    DimensionMismatch, InvalidConfig, InvisibleSource, ZeroForwardProjection,
)
from core.logger import get_logger

logger = get_logger("em")

DEFAULT_REL_LL_TOL = 1e-8
DEFAULT_MAX_ITERS = 1000


@dataclass(frozen=True, eq=False)
class SystemMatrix:
    """
    Sparse nonnegative coupling between sources and detectors.

    ``matrix`` is stored detectors x sources so that the forward projection
    is a single CSR mat-vec; ``_back`` is its transpose, also in CSR.
    """
    matrix: sparse.csr_matrix
    col_sums: np.ndarray
    image_shape: Optional[Tuple[int, int]] = None
    _back: sparse.csr_matrix = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        m = self.matrix
        if m.nnz and (not np.all(np.isfinite(m.data)) or np.any(m.data < 0)):
            raise InvalidConfig("system matrix weights must be finite and >= 0")
        recomputed = np.asarray(m.sum(axis=0)).ravel()
        if not np.array_equal(recomputed, self.col_sums):
            raise InvalidConfig("col_sums does not match the matrix")
        invisible = np.flatnonzero(self.col_sums <= 0)
        if invisible.size:
            raise InvisibleSource(
                f"{invisible.size} source(s) seen by no detector, first: {int(invisible[0])}")
        if self.image_shape is not None:
            h, w = self.image_shape
            if h * w != m.shape[1]:
                raise DimensionMismatch(
                    f"image shape {self.image_shape} does not match {m.shape[1]} sources")
        if self._back is None:
            object.__setattr__(self, "_back", m.T.tocsr())

    @classmethod
    def from_triplets(cls, n_sources: int, n_detectors: int,
                      entries: Iterable[Tuple[int, int, float]],
                      image_shape: Optional[Tuple[int, int]] = None) -> "SystemMatrix":
        """Build from (source b, detector d, weight a_bd) triplets.

        Repeated (b, d) pairs are summed; explicit zeros are dropped.
        """
        triplets = np.asarray(list(entries), dtype=float).reshape(-1, 3)
        sources = triplets[:, 0].astype(np.int64)
        detectors = triplets[:, 1].astype(np.int64)
        weights = triplets[:, 2]
        if sources.size and (sources.min() < 0 or sources.max() >= n_sources):
            raise DimensionMismatch("source index out of range")
        if detectors.size and (detectors.min() < 0 or detectors.max() >= n_detectors):
            raise DimensionMismatch("detector index out of range")
        if weights.size and (not np.all(np.isfinite(weights)) or np.any(weights < 0)):
            raise InvalidConfig("system matrix weights must be finite and >= 0")
        m = sparse.coo_matrix((weights, (detectors, sources)),
                              shape=(n_detectors, n_sources)).tocsr()
        m.sum_duplicates()
        m.eliminate_zeros()
        m.sort_indices()
        return cls(matrix=m, col_sums=np.asarray(m.sum(axis=0)).ravel(),
                   image_shape=image_shape)

    @classmethod
    def from_dense(cls, weights, image_shape=None) -> "SystemMatrix":
        """Build from a dense array indexed [source, detector]."""
        dense = np.atleast_2d(np.asarray(weights, dtype=float))
        m = sparse.csr_matrix(dense.T)
        m.eliminate_zeros()
        m.sort_indices()
        return cls(matrix=m, col_sums=np.asarray(m.sum(axis=0)).ravel(),
                   image_shape=image_shape)

    @property
    def n_sources(self) -> int:
        return self.matrix.shape[1]

    @property
    def n_detectors(self) -> int:
        return self.matrix.shape[0]

    @property
    def nnz(self) -> int:
        return self.matrix.nnz

    def forward(self, intensities) -> np.ndarray:
        """Expected counts per detector, (A lambda)_d."""
        x = np.asarray(intensities, dtype=float).ravel()
        if x.size != self.n_sources:
            raise DimensionMismatch(f"expected {self.n_sources} sources, got {x.size}")
        return self.matrix @ x

    def back(self, values) -> np.ndarray:
        """Back projection, the exact transpose of forward()."""
        y = np.asarray(values, dtype=float).ravel()
        if y.size != self.n_detectors:
            raise DimensionMismatch(f"expected {self.n_detectors} detectors, got {y.size}")
        return self._back @ y

    def entries(self) -> Iterator[Tuple[int, int, float]]:
        """Triplets (b, d, a_bd) sorted by source, then detector."""
        coo = self._back.tocoo()
        order = np.lexsort((coo.col, coo.row))
        for k in order:
            yield int(coo.row[k]), int(coo.col[k]), float(coo.data[k])

    def to_dense(self) -> np.ndarray:
        """Dense copy indexed [detector, source]."""
        return self.matrix.toarray()


@dataclass(frozen=True)
class EmConfig:
    """Stopping policy for run_em; the tolerance is the over-fitting control."""
    max_iters: int = DEFAULT_MAX_ITERS
    rel_ll_tol: float = DEFAULT_REL_LL_TOL
    init: Union[str, np.ndarray] = "uniform"

    def __post_init__(self):
        if int(self.max_iters) < 1:
            raise InvalidConfig(f"max_iters must be >= 1, got {self.max_iters}")
        if not (self.rel_ll_tol >= 0):
            raise InvalidConfig(f"rel_ll_tol must be >= 0, got {self.rel_ll_tol}")
        if isinstance(self.init, str):
            if self.init != "uniform":
                raise InvalidConfig(f"unknown init {self.init!r}")
        else:
            object.__setattr__(self, "init", as_intensities(self.init))


def as_intensities(values) -> np.ndarray:
    """Validate an IntensityVector: finite and nonnegative."""
    x = np.asarray(values, dtype=float).ravel()
    if not np.all(np.isfinite(x)) or np.any(x < 0):
        raise InvalidConfig("intensities must be finite and >= 0")
    return x


def as_counts(values) -> np.ndarray:
    """Validate a CountVector: nonnegative integers."""
    raw = np.asarray(values).ravel()
    if raw.dtype.kind in "iu":
        counts = raw.astype(np.int64)
    else:
        as_float = raw.astype(float)
        if not np.all(np.isfinite(as_float)) or np.any(as_float != np.round(as_float)):
            raise InvalidConfig("counts must be integers")
        counts = as_float.astype(np.int64)
    if np.any(counts < 0):
        raise InvalidConfig("counts must be >= 0")
    return counts


def _check_dims(A: SystemMatrix, lam: np.ndarray, n: np.ndarray):
    if lam.size != A.n_sources:
        raise DimensionMismatch(f"intensities have {lam.size} entries, matrix has {A.n_sources} sources")
    if n.size != A.n_detectors:
        raise DimensionMismatch(f"counts have {n.size} entries, matrix has {A.n_detectors} detectors")


def log_likelihood(intensities, A: SystemMatrix, counts) -> float:
    """Poisson log-likelihood without the -log n_d! constant.

    Returns -inf when a detector with counts has zero expected counts.
    """
    lam = as_intensities(intensities)
    n = as_counts(counts)
    _check_dims(A, lam, n)
    m = A.forward(lam)
    hit = n > 0
    if np.any(m[hit] <= 0):
        return -math.inf
    return float(np.sum(n[hit] * np.log(m[hit])) - np.sum(m))


def kl_divergence(counts, expected) -> float:
    """KL(n || m) = sum n log(n/m) - n + m; zero-count terms contribute m."""
    n = np.asarray(counts, dtype=float).ravel()
    m = np.asarray(expected, dtype=float).ravel()
    if n.size != m.size:
        raise DimensionMismatch(f"{n.size} counts vs {m.size} expected values")
    if np.any(m < 0) or np.any(n < 0):
        raise InvalidConfig("counts and expected values must be >= 0")
    hit = n > 0
    if np.any(m[hit] == 0):
        return math.inf
    terms = m.copy()
    terms[hit] = n[hit] * np.log(n[hit] / m[hit]) - n[hit] + m[hit]
    return float(np.sum(terms))


def em_step(intensities, A: SystemMatrix, counts) -> np.ndarray:
    """One multiplicative EM update."""
    lam = as_intensities(intensities)
    n = as_counts(counts)
    _check_dims(A, lam, n)
    m = A.forward(lam)
    hit = n > 0
    if np.any(m[hit] <= 0):
        bad = np.flatnonzero(hit & (m <= 0))
        raise ZeroForwardProjection(
            f"{bad.size} detector(s) with counts but zero expected counts, first: {int(bad[0])}")
    ratio = np.zeros_like(m)
    ratio[hit] = n[hit] / m[hit]
    return lam * A.back(ratio) / A.col_sums


def uniform_init(A: SystemMatrix, counts) -> np.ndarray:
    """Flat start scaled so that the expected total equals the observed total."""
    n = as_counts(counts)
    return np.full(A.n_sources, float(n.sum()) / float(A.col_sums.sum()))


def run_em(A: SystemMatrix, counts, cfg: Optional[EmConfig] = None,
           callback: Optional[Callable[[int, np.ndarray, float], None]] = None
           ) -> Tuple[np.ndarray, np.ndarray]:
    """
    Iterate em_step until the relative log-likelihood improvement drops
    below ``cfg.rel_ll_tol`` or ``cfg.max_iters`` steps were taken. A zero
    tolerance always takes ``max_iters`` steps.

    Returns:
        (last iterate, log-likelihood trace starting with the initial value)
    """
    cfg = cfg or EmConfig()
    n = as_counts(counts)
    if isinstance(cfg.init, str):
        lam = uniform_init(A, n)
    else:
        lam = cfg.init.copy()
    _check_dims(A, lam, n)

    ll = log_likelihood(lam, A, n)
    trace = [ll]
    converged = False
    for iteration in range(1, int(cfg.max_iters) + 1):
        lam = em_step(lam, A, n)
        new_ll = log_likelihood(lam, A, n)
        trace.append(new_ll)
        if callback:
            callback(iteration, lam, new_ll)
        logger.debug("iteration %d log-likelihood %.12g", iteration, new_ll)
        # rel_ll_tol == 0 runs the whole budget
        if cfg.rel_ll_tol > 0 and math.isfinite(ll) and math.isfinite(new_ll):
            improvement = (new_ll - ll) / max(abs(ll), np.finfo(float).tiny)
            if improvement < cfg.rel_ll_tol:
                converged = True
                ll = new_ll
                break
        ll = new_ll

    logger.info("EM stopped after %d iteration(s), log-likelihood %.10g (%s)",
                len(trace) - 1, ll, "tolerance reached" if converged else "max_iters")
    return lam, np.asarray(trace)

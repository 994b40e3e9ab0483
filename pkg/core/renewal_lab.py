"""
Renewal Lab

Grid-sampled lifetime distributions and the operators that act on them:
the stationary residual-lifetime distribution, length-biased sampling, the
scaling-class defect, a fixed-point constructor for members of the scaling
class, and a sampling-bias simulator.

A GridCdf stores F on the uniform grid x_i = i * x_max / n and extends it
past x_max with an exponential tail 1 - F(x) = (1 - F(x_max)) e^{-r (x - x_max)}.
"""

import math
from dataclasses import dataclass
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy import stats
from scipy.integrate import cumulative_trapezoid, trapezoid
from scipy.special import logsumexp

from core.errors import InfiniteMean, InvalidCdf, InvalidConfig, NotConverged, QOutOfRange
from core.logger import get_logger
from core.rng import make_rng

logger = get_logger("renewal")

DEFAULT_X_MAX = 30.0
DEFAULT_GRID = 30000
DEFAULT_DAMPING = 0.5
DEFAULT_MAX_ITERS = 2000
CHANGE_TOL = 1e-8
DEFECT_TOL = 1e-3
# fraction of the grid (at the right end) used to fit the tail rate
TAIL_FIT_FRACTION = 0.1

_SLACK = 1e-12


def fit_tail_rate(x: np.ndarray, log_survival: np.ndarray) -> float:
    """Exponential rate from a least-squares line through log(1 - F) on the last grid points."""
    start = int(len(x) * (1.0 - TAIL_FIT_FRACTION))
    xs, ls = x[start:], log_survival[start:]
    ok = np.isfinite(ls)
    if np.count_nonzero(ok) < 2:
        return 0.0
    slope = np.polyfit(xs[ok], ls[ok], 1)[0]
    return float(max(-slope, 0.0))


def _log_survival(values: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(np.clip(1.0 - values, 0.0, None))


@dataclass(frozen=True, eq=False)
class GridCdf:
    """Monotone cdf on [0, x_max] with an exponential tail beyond it."""
    x_max: float
    values: np.ndarray
    tail_rate: float = 0.0

    def __post_init__(self):
        F = np.asarray(self.values, dtype=float).ravel()
        if not self.x_max > 0 or not np.isfinite(self.x_max):
            raise InvalidCdf(f"x_max must be finite and > 0, got {self.x_max}")
        if F.size < 2:
            raise InvalidCdf("grid needs at least two points")
        if not np.all(np.isfinite(F)):
            raise InvalidCdf("cdf values must be finite")
        if abs(F[0]) > _SLACK:
            raise InvalidCdf(f"F(0) must be 0, got {F[0]}")
        if np.any(np.diff(F) < -_SLACK):
            i = int(np.flatnonzero(np.diff(F) < -_SLACK)[0])
            raise InvalidCdf(f"cdf decreases after grid point {i}")
        if F.max() > 1.0 + _SLACK or F.min() < -_SLACK:
            raise InvalidCdf("cdf values must lie in [0, 1]")
        if not self.tail_rate >= 0 or not np.isfinite(self.tail_rate):
            raise InvalidCdf(f"tail rate must be finite and >= 0, got {self.tail_rate}")
        F = np.maximum.accumulate(np.clip(F, 0.0, 1.0))
        F[0] = 0.0
        object.__setattr__(self, "values", F)
        object.__setattr__(self, "x_max", float(self.x_max))
        object.__setattr__(self, "tail_rate", float(self.tail_rate))

    @classmethod
    def from_values(cls, x_max: float, values) -> "GridCdf":
        """Grid values with the tail rate fitted from their right end."""
        F = np.asarray(values, dtype=float)
        x = np.linspace(0.0, x_max, F.size)
        return cls(x_max, F, fit_tail_rate(x, _log_survival(F)))

    @classmethod
    def from_distribution(cls, dist, x_max: float = DEFAULT_X_MAX,
                          n: int = DEFAULT_GRID) -> "GridCdf":
        """Sample a frozen scipy.stats distribution; the tail is fitted to its logsf."""
        if n < 1:
            raise InvalidCdf(f"grid size must be >= 1, got {n}")
        x = np.linspace(0.0, x_max, int(n) + 1)
        F = dist.cdf(x)
        F[0] = 0.0
        return cls(x_max, F, fit_tail_rate(x, dist.logsf(x)))

    @property
    def n(self) -> int:
        return self.values.size - 1

    @property
    def dx(self) -> float:
        return self.x_max / self.n

    @property
    def x(self) -> np.ndarray:
        return np.linspace(0.0, self.x_max, self.n + 1)

    @property
    def tail_mass(self) -> float:
        return float(1.0 - self.values[-1])

    def _tail_integral(self) -> float:
        """Integral of 1 - F over [x_max, inf)."""
        if self.tail_mass <= _SLACK:
            return 0.0
        if self.tail_rate <= 0.0:
            raise InfiniteMean(
                f"no tail decay with 1 - F(x_max) = {self.tail_mass:.3g}; the mean is infinite")
        return self.tail_mass / self.tail_rate

    def mean(self) -> float:
        """Trapezoid integral of 1 - F plus the closed-form tail."""
        return float(trapezoid(1.0 - self.values, dx=self.dx)) + self._tail_integral()

    def evaluate(self, x) -> np.ndarray:
        """F at arbitrary points: linear interpolation on the grid, exponential tail beyond."""
        shape = np.shape(x)
        pts = np.atleast_1d(np.asarray(x, dtype=float)).ravel()
        out = np.interp(pts, self.x, self.values, left=0.0)
        beyond = pts > self.x_max
        if np.any(beyond):
            out[beyond] = 1.0 - self.tail_mass * np.exp(-self.tail_rate * (pts[beyond] - self.x_max))
        return out.reshape(shape)

    def quantile(self, u) -> np.ndarray:
        """Inverse cdf (left-continuous) at probabilities ``u`` in [0, 1)."""
        shape = np.shape(u)
        p = np.atleast_1d(np.asarray(u, dtype=float)).ravel()
        if np.any(p < 0) or np.any(p >= 1):
            raise InvalidConfig("quantile probabilities must lie in [0, 1)")
        F, x = self.values, self.x
        out = np.empty_like(p)
        inside = p <= F[-1]
        i = np.clip(np.searchsorted(F, p[inside], side="left"), 1, self.n)
        lo, hi = F[i - 1], F[i]
        frac = np.where(hi > lo, (p[inside] - lo) / np.where(hi > lo, hi - lo, 1.0), 0.0)
        out[inside] = x[i - 1] + frac * self.dx
        out[inside & (p == 0.0)] = 0.0
        if np.any(~inside):
            if self.tail_rate <= 0.0:
                raise InfiniteMean("quantile beyond x_max needs a decaying tail")
            out[~inside] = self.x_max + np.log(self.tail_mass / (1.0 - p[~inside])) / self.tail_rate
        return out.reshape(shape)

    def rescaled(self, factor: float) -> "GridCdf":
        """The cdf of X / factor on the same grid: F(factor * x)."""
        return GridCdf(self.x_max, self.evaluate(self.x * factor), self.tail_rate * factor)

    def sup_distance(self, other: "GridCdf") -> float:
        return float(np.max(np.abs(self.values - other.evaluate(self.x))))


class ScalingReport(NamedTuple):
    q: float
    defect: float
    iterations: int
    converged: bool


REPORT_COLUMNS = ScalingReport._fields


# Distribution catalog

def exponential(theta: float = 1.0, x_max: float = DEFAULT_X_MAX, n: int = DEFAULT_GRID) -> GridCdf:
    """Exp with rate ``theta``."""
    return GridCdf.from_distribution(stats.expon(scale=1.0 / theta), x_max, n)


def weibull(k: float, x_max: float = DEFAULT_X_MAX, n: int = DEFAULT_GRID) -> GridCdf:
    return GridCdf.from_distribution(stats.weibull_min(k), x_max, n)


def uniform(a: float = 1.0, x_max: float = DEFAULT_X_MAX, n: int = DEFAULT_GRID) -> GridCdf:
    """Uniform on [0, a]."""
    return GridCdf.from_distribution(stats.uniform(0.0, a), x_max, n)


def lognormal(sigma: float, x_max: float = DEFAULT_X_MAX, n: int = DEFAULT_GRID) -> GridCdf:
    """Lognormal with median 1 and log-scale ``sigma``."""
    return GridCdf.from_distribution(stats.lognorm(sigma), x_max, n)


def point_ramp(a: float = 1.0, width: float = 0.01, x_max: float = DEFAULT_X_MAX,
               n: int = DEFAULT_GRID) -> GridCdf:
    """Steep linear ramp centred on ``a``: a point mass smeared over ``width``."""
    if not 0 < width < 2 * a:
        raise InvalidConfig(f"ramp width must be in (0, 2a), got {width}")
    return GridCdf.from_distribution(stats.uniform(a - width / 2.0, width), x_max, n)


DISTRIBUTIONS = {
    "exp": exponential,
    "weibull": weibull,
    "uniform": uniform,
    "lognormal": lognormal,
    "ramp": point_ramp,
}

DEFAULT_PARAMS = {"exp": 1.0, "weibull": 2.0, "uniform": 1.0, "lognormal": 0.5, "ramp": 1.0}


def make_distribution(name: str, param: Optional[float] = None, x_max: float = DEFAULT_X_MAX,
                      n: int = DEFAULT_GRID) -> GridCdf:
    """Catalog lookup by name; ``param`` is the family's single shape/rate parameter."""
    if name not in DISTRIBUTIONS:
        raise InvalidConfig(f"unknown distribution {name!r}; choose from {', '.join(DISTRIBUTIONS)}")
    value = DEFAULT_PARAMS[name] if param is None else float(param)
    if not value > 0:
        raise InvalidConfig(f"{name} parameter must be > 0, got {value}")
    return DISTRIBUTIONS[name](value, x_max=x_max, n=n)


# Operators

def residual_cdf(F: GridCdf) -> GridCdf:
    """Stationary residual lifetime: G(x) = (1/mu) * integral_0^x (1 - F(t)) dt."""
    mu = F.mean()
    G = cumulative_trapezoid(1.0 - F.values, dx=F.dx, initial=0.0) / mu
    return GridCdf(F.x_max, np.minimum(G, 1.0), F.tail_rate)


def length_biased_cdf(F: GridCdf) -> GridCdf:
    """Length-biased lifetime: G(x) = (1/mu) * integral_0^x t dF(t)."""
    x = F.x
    increments = np.diff(F.values) * 0.5 * (x[:-1] + x[1:])
    tail = 0.0
    if F.tail_mass > _SLACK:
        if F.tail_rate <= 0.0:
            raise InfiniteMean("length bias needs a finite mean")
        tail = F.tail_mass * (F.x_max + 1.0 / F.tail_rate)
    partial = np.concatenate([[0.0], np.cumsum(increments)])
    total = partial[-1] + tail
    if not total > 0:
        raise InvalidCdf("distribution has zero mean")
    return GridCdf(F.x_max, np.minimum(partial / total, 1.0), F.tail_rate)


def scaling_defect(F: GridCdf, q: float) -> float:
    """sup over the grid of |residual_cdf(F)(x) - F(q x)|."""
    if not q > 0:
        raise QOutOfRange(f"q must be > 0, got {q}")
    G = residual_cdf(F)
    return float(np.max(np.abs(G.values - F.evaluate(q * F.x))))


def length_biased_defect(F: GridCdf, q: float) -> float:
    """sup over the grid of |length_biased_cdf(F)(x) - F(q x)|."""
    if not q > 0:
        raise QOutOfRange(f"q must be > 0, got {q}")
    G = length_biased_cdf(F)
    return float(np.max(np.abs(G.values - F.evaluate(q * F.x))))


# Members of C_q
#
# For 0 < q < 1 and beta in [1, 1/q) the survival function
#     S(x) = sum over all integers k of a_k exp(-beta q^-k x),
#     log a_k = k (k - 1) / 2 * log q - k log beta  (normalized so S(0) = 1)
# solves S'(x) = -S(x / q) / q, which is the C_q equation for a mean-1 cdf.
# Mixtures of these members are members again; at q = 1 every beta gives Exp(1).

CQ_BASIS = 16
# terms whose weight falls this many nats below the largest are dropped
_SERIES_NATS = 80.0


def _member_terms(q: float, beta: float) -> Tuple[np.ndarray, np.ndarray]:
    """Weights a_k and rates b_k of one member's exponential series."""
    log_q = math.log(q)
    reach = int(math.ceil(math.sqrt(2.0 * _SERIES_NATS / -log_q))) + 2
    k = np.arange(-reach, reach + 1, dtype=float)
    log_a = 0.5 * k * (k - 1.0) * log_q - k * math.log(beta)
    log_a -= logsumexp(log_a)
    keep = log_a > -_SERIES_NATS
    return np.exp(log_a[keep]), beta * np.exp(-k[keep] * log_q)


def _member_survival(q: float, beta: float, x: np.ndarray) -> Tuple[np.ndarray, float]:
    """1 - F on ``x`` and the integral of 1 - F past x[-1]."""
    if q == 1.0:
        s = np.exp(-x)
        return s, float(s[-1])
    a, b = _member_terms(q, beta)
    s = np.zeros_like(x)
    for ak, bk in zip(a, b):
        s += ak * np.exp(-bk * x)
    return s, float(np.sum(a * np.exp(-b * x[-1]) / b))


class CqBasis(NamedTuple):
    """Exact C_q members on one grid: survival rows and their tail integrals."""
    q: float
    x_max: float
    betas: np.ndarray
    survival: np.ndarray
    tail_integrals: np.ndarray

    def mixture(self, weights) -> GridCdf:
        """The member sum_j w_j F_j; its tail rate keeps the exact tail integral."""
        w = np.asarray(weights, dtype=float)
        s = w @ self.survival
        tail = float(w @ self.tail_integrals)
        rate = float(s[-1]) / tail if tail > 0 else 0.0
        return GridCdf(self.x_max, 1.0 - s, rate)

    def cell_masses(self) -> np.ndarray:
        """Probability of each grid cell plus the tail, one row per member."""
        cells = np.hstack([-np.diff(self.survival, axis=1), self.survival[:, -1:]])
        return np.clip(cells, 0.0, None)


def cq_basis(q: float, x_max: float = DEFAULT_X_MAX, n: int = DEFAULT_GRID,
             size: int = CQ_BASIS) -> CqBasis:
    """``size`` members with beta spread log-uniformly over [1, 1/q); one member at q = 1."""
    if not 0 < q <= 1:
        raise QOutOfRange(f"scaling class is only constructed for 0 < q <= 1, got q={q}")
    if int(size) < 1:
        raise InvalidConfig(f"basis size must be >= 1, got {size}")
    x = np.linspace(0.0, x_max, int(n) + 1)
    betas = np.ones(1) if q == 1.0 else q ** (-np.arange(int(size)) / int(size))
    rows, tails = zip(*(_member_survival(q, float(beta), x) for beta in betas))
    return CqBasis(float(q), float(x_max), betas, np.vstack(rows), np.asarray(tails))


def cq_member(q: float, beta: float = 1.0, x_max: float = DEFAULT_X_MAX,
              n: int = DEFAULT_GRID) -> GridCdf:
    """The single member with series offset ``beta`` (any beta > 0; beta and beta/q coincide)."""
    if not 0 < q <= 1:
        raise QOutOfRange(f"scaling class is only constructed for 0 < q <= 1, got q={q}")
    if not beta > 0:
        raise InvalidConfig(f"beta must be > 0, got {beta}")
    x = np.linspace(0.0, x_max, int(n) + 1)
    s, tail = _member_survival(float(q), float(beta), x)
    rate = float(s[-1]) / tail if tail > 0 else 0.0
    return GridCdf(x_max, 1.0 - s, rate)


def solve_cq(q: float, init: GridCdf, damping: float = DEFAULT_DAMPING,
             max_iters: int = DEFAULT_MAX_ITERS, change_tol: float = CHANGE_TOL,
             defect_tol: float = DEFECT_TOL, strict: bool = False) -> Tuple[GridCdf, ScalingReport]:
    """
    Damped fixed-point search for the mean-1 member of C_q nearest to ``init``.

    Iterates stay on the convex hull of cq_basis(q). Each sweep maps F to
    (1 - damping) F + damping M(F), where M re-weights the members of F by
    the multiplicative EM update (members as sources, grid cells as
    detectors, the mean-1 rescaled ``init`` as the observed cell masses).
    The fixed point minimizes KL(init || F) over the hull; the scaling
    defect of the result certifies membership on the grid.

    Raises:
        QOutOfRange: unless 0 < q <= 1
        InvalidCdf: when ``init`` puts no mass where the members live
        NotConverged: only when ``strict`` and the run did not converge
    """
    if not 0 < q <= 1:
        raise QOutOfRange(f"scaling class is only constructed for 0 < q <= 1, got q={q}")
    if not 0 < damping <= 1:
        raise InvalidConfig(f"damping must be in (0, 1], got {damping}")
    if int(max_iters) < 1:
        raise InvalidConfig(f"max_iters must be >= 1, got {max_iters}")
    if not change_tol >= 0:
        raise InvalidConfig(f"change_tol must be >= 0, got {change_tol}")

    start = init.rescaled(init.mean())
    basis = cq_basis(q, start.x_max, start.n)
    cells = basis.cell_masses()
    target = np.append(np.diff(start.values), start.tail_mass)
    hit = target > 0

    weights = np.full(basis.betas.size, 1.0 / basis.betas.size)
    change = np.inf
    iterations = 0
    for iterations in range(1, int(max_iters) + 1):
        expected = weights @ cells
        seen = hit & (expected > 0)
        ratio = np.zeros_like(expected)
        ratio[seen] = target[seen] / expected[seen]
        update = weights * (cells @ ratio)
        total = float(update.sum())
        if not total > 0:
            raise InvalidCdf(f"initial cdf has no mass where C_q members live (q={q})")
        step = damping * (update / total - weights)
        change = float(np.max(np.abs(step @ basis.survival)))
        weights = weights + step
        if change < change_tol:
            break

    member = basis.mixture(weights)
    defect = scaling_defect(member, q)
    converged = bool(change < change_tol and defect <= defect_tol)
    report = ScalingReport(float(q), defect, iterations, converged)
    if converged:
        logger.info("C_q member for q=%g after %d sweep(s), defect %.3g", q, iterations, defect)
    else:
        message = (f"no fixed point for q={q} within {iterations} sweep(s): "
                   f"last change {change:.3g}, defect {defect:.3g}")
        if strict:
            raise NotConverged(message)
        logger.warning(message)
    return member, report


def cq_spread(q: float, inits: Sequence[GridCdf], **kwargs) -> Tuple[float, List[GridCdf], List[ScalingReport]]:
    """Largest pairwise sup distance between the members reached from ``inits``."""
    members, reports = [], []
    for init in inits:
        member, report = solve_cq(q, init, **kwargs)
        members.append(member)
        reports.append(report)
    spread = 0.0
    for i in range(len(members)):
        for j in range(i + 1, len(members)):
            spread = max(spread, members[i].sup_distance(members[j]))
    logger.info("Spread of %d member(s) at q=%g: %.4g", len(members), q, spread)
    return spread, members, reports


def family_catalog(x_max: float = DEFAULT_X_MAX, n: int = DEFAULT_GRID) -> Dict[str, GridCdf]:
    """The documented families used as evidence when q > 1."""
    return {
        "exp(1)": exponential(1.0, x_max, n),
        "weibull(0.5)": weibull(0.5, x_max, n),
        "weibull(2)": weibull(2.0, x_max, n),
        "uniform(1)": uniform(1.0, x_max, n),
        "lognormal(0.5)": lognormal(0.5, x_max, n),
        "ramp(1, 0.1)": point_ramp(1.0, 0.1, x_max, n),
    }


def family_defects(q: float, x_max: float = DEFAULT_X_MAX, n: int = DEFAULT_GRID) -> Dict[str, float]:
    """Scaling defect at ``q`` for every catalog family (numerical evidence, not proof)."""
    return {name: scaling_defect(F, q) for name, F in family_catalog(x_max, n).items()}


# Sampling bias

class BiasSample(NamedTuple):
    mean: float
    count: int
    histogram: np.ndarray
    edges: np.ndarray
    samples: np.ndarray


BIAS_MODES = ("plain", "length_biased")


def bias_sim(F: GridCdf, n: int, mode: str = "plain", seed: int = 0, bins: int = 50) -> BiasSample:
    """
    Draw ``n`` lifetimes by inverse cdf, either as they occur (plain) or as
    an inspector finds them (length_biased: chance proportional to length).
    """
    if n < 1:
        raise InvalidConfig(f"sample size must be >= 1, got {n}")
    if mode not in BIAS_MODES:
        raise InvalidConfig(f"unknown mode {mode!r}; choose from {', '.join(BIAS_MODES)}")
    target = F if mode == "plain" else length_biased_cdf(F)
    rng = make_rng(seed, "bias", mode)
    samples = target.quantile(rng.random(int(n)))
    upper = max(float(samples.max()), target.dx)
    histogram, edges = np.histogram(samples, bins=int(bins), range=(0.0, upper))
    mean = float(samples.mean())
    logger.info("%s sample of %d: mean %.4f", mode, samples.size, mean)
    return BiasSample(mean, int(samples.size), histogram, edges, samples)

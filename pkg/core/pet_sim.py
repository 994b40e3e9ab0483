"""
Emission Tomography Simulator

Builds ellipse phantoms, parallel-beam system matrices and Poisson sinograms,
and reconstructs emission densities with the EM solver in core.em_core.
"""

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from core.em_core import EmConfig, SystemMatrix, as_counts, run_em
from core.errors import (
    DimensionMismatch, EmptyGrid, InvalidConfig, NegativeMean, PixelOutsideFOV,
)
from core.logger import get_logger
from core.rng import make_rng
from core.weighting import PixelGrid, get_weighting

logger = get_logger("pet")


@dataclass(frozen=True)
class Ellipse:
    """Ellipse with centre (cx, cy), semi-axes (a, b), rotation theta (radians)."""
    cx: float
    cy: float
    a: float
    b: float
    theta: float
    intensity: float

    def contains(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        dx, dy = x - self.cx, y - self.cy
        c, s = np.cos(self.theta), np.sin(self.theta)
        u = dx * c + dy * s
        v = -dx * s + dy * c
        return (u / self.a) ** 2 + (v / self.b) ** 2 <= 1.0


@dataclass(frozen=True, eq=False)
class Phantom:
    """Emission density on an H x W grid (row-major), built from ellipses."""
    grid: np.ndarray
    pixel_size: float
    ellipses: Tuple[Ellipse, ...] = ()

    @property
    def width(self) -> int:
        return self.grid.shape[1]

    @property
    def height(self) -> int:
        return self.grid.shape[0]

    @property
    def intensities(self) -> np.ndarray:
        return self.grid.ravel()


@dataclass(frozen=True)
class DetectorGeometry:
    """Parallel-beam geometry: angles uniform in [0, pi), bins across the FOV."""
    n_angles: int
    n_bins: int
    weighting: str = "line-length"

    def __post_init__(self):
        if self.n_angles < 1 or self.n_bins < 1:
            raise InvalidConfig(
                f"need at least one angle and one bin, got {self.n_angles}x{self.n_bins}")
        get_weighting(self.weighting)

    @property
    def n_detectors(self) -> int:
        return self.n_angles * self.n_bins

    def angles(self) -> np.ndarray:
        return np.arange(self.n_angles) * (np.pi / self.n_angles)

    def bin_edges(self, grid: PixelGrid) -> np.ndarray:
        """Bin boundaries spanning the circumscribed circle's diameter."""
        r = grid.fov_radius
        return -r + np.arange(self.n_bins + 1) * (2.0 * r / self.n_bins)


@dataclass(frozen=True, eq=False)
class Sinogram:
    counts: np.ndarray
    expected: Optional[np.ndarray] = field(default=None)

    def __post_init__(self):
        counts = np.asarray(self.counts)
        if counts.ndim != 2:
            raise DimensionMismatch("sinogram counts must be n_angles x n_bins")
        object.__setattr__(self, "counts", as_counts(counts).reshape(counts.shape))

    @property
    def shape(self) -> Tuple[int, int]:
        return self.counts.shape


def make_phantom(ellipses: Sequence[Ellipse], width: int, height: int,
                 pixel_size: float = 1.0) -> Phantom:
    """Rasterize ellipses by pixel-centre inclusion and clip the sum at 0."""
    if width < 1 or height < 1:
        raise EmptyGrid(f"grid must be at least 1x1, got {width}x{height}")
    grid = PixelGrid(width, height, pixel_size)
    x, y = grid.centers()
    image = np.zeros((height, width))
    for e in ellipses:
        image[e.contains(x, y)] += e.intensity
    np.clip(image, 0.0, None, out=image)
    return Phantom(grid=image, pixel_size=float(pixel_size), ellipses=tuple(ellipses))


def default_phantom_ellipses(width: int, height: int, pixel_size: float = 1.0) -> List[Ellipse]:
    """Positive background covering the whole grid with two hot inserts."""
    half_w, half_h = 0.5 * width * pixel_size, 0.5 * height * pixel_size
    cover = 1.5 * max(half_w, half_h)
    return [
        Ellipse(0.0, 0.0, cover, cover, 0.0, 0.5),
        Ellipse(-0.25 * half_w, 0.2 * half_h, 0.35 * half_w, 0.25 * half_h, 0.5, 1.0),
        Ellipse(0.35 * half_w, -0.3 * half_h, 0.2 * half_w, 0.3 * half_h, 0.0, 2.0),
    ]


def build_system_matrix(geom: DetectorGeometry, width: int, height: int,
                        pixel_size: float = 1.0) -> SystemMatrix:
    """
    Geometric weights a_bd for every pixel b and tube d = angle * n_bins + bin.

    Raises:
        PixelOutsideFOV: if some pixel lies in no tube
    """
    if width < 1 or height < 1:
        raise EmptyGrid(f"grid must be at least 1x1, got {width}x{height}")
    grid = PixelGrid(width, height, float(pixel_size))
    scheme = get_weighting(geom.weighting)
    edges = geom.bin_edges(grid)

    sources, detectors, weights = [], [], []
    for k, theta in enumerate(geom.angles()):
        b, bins, w = scheme.angle_block(grid, float(theta), edges)
        sources.append(b)
        detectors.append(k * geom.n_bins + bins)
        weights.append(w)
    sources = np.concatenate(sources)
    detectors = np.concatenate(detectors)
    weights = np.concatenate(weights)

    seen = np.bincount(sources, weights=weights, minlength=width * height)
    missed = np.flatnonzero(seen <= 0)
    if missed.size:
        rows, cols = np.divmod(missed, width)
        raise PixelOutsideFOV(
            f"{missed.size} pixel(s) outside every tube, first at row {int(rows[0])}, "
            f"column {int(cols[0])}; crop the grid or add bins")

    A = SystemMatrix.from_triplets(width * height, geom.n_detectors,
                                   np.column_stack([sources, detectors, weights]),
                                   image_shape=(height, width))
    logger.info("Built %s system matrix: %d pixels x %d tubes, %d nonzeros",
                geom.weighting, A.n_sources, A.n_detectors, A.nnz)
    return A


def forward_project(phantom: Phantom, A: SystemMatrix) -> np.ndarray:
    """Expected counts per tube for the phantom's emission density."""
    if A.n_sources != phantom.grid.size:
        raise DimensionMismatch(
            f"matrix has {A.n_sources} sources, phantom has {phantom.grid.size} pixels")
    return A.forward(phantom.intensities)


def sample_counts(expected, seed: int) -> np.ndarray:
    """Independent Poisson draw for each detector mean, reproducible from ``seed``."""
    means = np.asarray(expected, dtype=float)
    if not np.all(np.isfinite(means)) or np.any(means < 0):
        raise NegativeMean("detector means must be finite and >= 0")
    rng = make_rng(seed, "poisson-counts")
    return rng.poisson(means).astype(np.int64)


def simulate_sinogram(phantom: Phantom, A: SystemMatrix, geom: DetectorGeometry,
                      seed: int, total_counts: Optional[float] = None) -> Sinogram:
    """Forward project, optionally rescale to ``total_counts`` expected, and sample."""
    expected = forward_project(phantom, A)
    if total_counts is not None:
        total = expected.sum()
        if total <= 0:
            raise NegativeMean("phantom projects to zero expected counts")
        expected = expected * (float(total_counts) / total)
    counts = sample_counts(expected, seed)
    shape = (geom.n_angles, geom.n_bins)
    logger.info("Sampled sinogram: %d counts (%.6g expected)", int(counts.sum()), expected.sum())
    return Sinogram(counts=counts.reshape(shape), expected=expected.reshape(shape))


def reconstruct_pet(sino: Sinogram, A: SystemMatrix,
                    cfg: Optional[EmConfig] = None) -> Tuple[np.ndarray, np.ndarray]:
    """
    Maximum-likelihood emission density by EM.

    Returns:
        (intensities shaped like the matrix's image when known, likelihood trace)
    """
    n = sino.counts.ravel()
    if n.size != A.n_detectors:
        raise DimensionMismatch(
            f"sinogram has {n.size} bins, matrix has {A.n_detectors} detectors")
    lam, trace = run_em(A, n, cfg)
    if A.image_shape is not None:
        lam = lam.reshape(A.image_shape)
    return lam, trace

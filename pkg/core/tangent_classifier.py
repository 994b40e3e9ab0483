"""
Tangent-Subspace Classifier

Each test image gets an affine subspace spanned by the secant directions of
seven small image transformations; every training image is a point, and the
test image takes the label of the training point nearest to that subspace.
A plain Euclidean nearest-neighbour classifier is kept as the baseline.

Images are 16x16 grids of values in [0, 1] stored row-major; flat 256-vectors
are accepted wherever an image is.
"""

import time
from dataclasses import dataclass, field
from typing import List, NamedTuple, Sequence, Tuple

import numpy as np
from scipy import ndimage

from core.errors import (
    DegenerateImage, DimensionMismatch, InvalidConfig, InvalidCorpus, UnknownTransform,
)
from core.logger import get_logger

logger = get_logger("ocr")

GLYPH_SHAPE = (16, 16)
GLYPH_SIZE = GLYPH_SHAPE[0] * GLYPH_SHAPE[1]
N_CLASSES = 10

DEFAULT_EPSILON = 0.1
DEFAULT_SHIFT_EPSILON = 1.0
DROP_REL_TOL = 1e-8


class Transform:
    """Transform identifiers, in the default basis order."""
    THICKEN = "thicken"
    ROTATE = "rotate"
    TRANSLATE_X = "translate_x"
    TRANSLATE_Y = "translate_y"
    SCALE = "scale"
    SHEAR_X = "shear_x"
    SHEAR_Y = "shear_y"

    ALL = (THICKEN, ROTATE, TRANSLATE_X, TRANSLATE_Y, SCALE, SHEAR_X, SHEAR_Y)
    # epsilon is measured in pixels for these
    TRANSLATIONS = (TRANSLATE_X, TRANSLATE_Y)


def as_glyph(img) -> np.ndarray:
    """Validate a GlyphImage and return it as a float 16x16 array."""
    a = np.asarray(img, dtype=float)
    if a.size != GLYPH_SIZE:
        raise DimensionMismatch(f"glyph must have {GLYPH_SIZE} pixels, got {a.size}")
    if not np.all(np.isfinite(a)):
        raise DegenerateImage("glyph has non-finite pixels")
    return a.reshape(GLYPH_SHAPE)


def _linear_part(which: str, eps: float) -> Tuple[np.ndarray, np.ndarray]:
    """(L, s) in (row, col) coordinates for p_out = c + L (p_in - c) + s."""
    eye = np.eye(2)
    zero = np.zeros(2)
    if which == Transform.ROTATE:
        c, s = np.cos(eps), np.sin(eps)
        return np.array([[c, -s], [s, c]]), zero
    if which == Transform.SCALE:
        return (1.0 + eps) * eye, zero
    if which == Transform.SHEAR_X:
        return np.array([[1.0, 0.0], [eps, 1.0]]), zero
    if which == Transform.SHEAR_Y:
        return np.array([[1.0, eps], [0.0, 1.0]]), zero
    if which == Transform.TRANSLATE_X:
        return eye, np.array([0.0, eps])
    if which == Transform.TRANSLATE_Y:
        return eye, np.array([eps, 0.0])
    raise UnknownTransform(f"unknown transform {which!r}")


def _warp(image: np.ndarray, which: str, eps: float) -> np.ndarray:
    L, shift = _linear_part(which, eps)
    centre = (np.asarray(image.shape, dtype=float) - 1.0) / 2.0
    inverse = np.linalg.inv(L)
    offset = centre - inverse @ (centre + shift)
    return ndimage.affine_transform(image, inverse, offset=offset, order=1,
                                    mode="constant", cval=0.0)


def thicken(image: np.ndarray, eps: float) -> np.ndarray:
    """Blend towards the 3x3 grey dilation: img + eps * (dilate(img) - img)."""
    dilated = ndimage.grey_dilation(image, size=(3, 3), mode="constant", cval=0.0)
    return image + eps * (dilated - image)


def apply_transform(img, which: str, eps: float) -> np.ndarray:
    """
    Apply one of the seven transforms with strength ``eps``.

    Rotation is in radians, scale and shears are unitless, translations are
    in pixels. Geometric warps are bilinear about the image centre with zero
    padding; the result is clipped to [0, 1].

    Raises:
        UnknownTransform: if ``which`` is not one of Transform.ALL
    """
    if which not in Transform.ALL:
        raise UnknownTransform(f"unknown transform {which!r}; choose from {', '.join(Transform.ALL)}")
    image = as_glyph(img)
    eps = float(eps)
    if not np.isfinite(eps):
        raise InvalidConfig("transform strength must be finite")
    if which not in Transform.TRANSLATIONS and abs(eps) > 1.0:
        raise InvalidConfig(f"{which} strength must satisfy |eps| <= 1, got {eps}")
    if eps == 0.0:
        return image.copy()
    if which == Transform.THICKEN:
        out = thicken(image, eps)
    else:
        out = _warp(image, which, eps)
    return np.clip(out, 0.0, 1.0)


def orthonormalize(directions, rel_tol: float = DROP_REL_TOL) -> Tuple[np.ndarray, List[int]]:
    """
    Two-pass modified Gram-Schmidt over the rows of ``directions``.

    A direction whose remainder after projection is below ``rel_tol`` times
    the largest input norm is dropped.

    Returns:
        (Q with orthonormal columns, indices of the kept input rows)
    """
    V = np.atleast_2d(np.asarray(directions, dtype=float))
    dim = V.shape[1]
    norms = np.linalg.norm(V, axis=1) if V.size else np.zeros(0)
    scale = norms.max() if norms.size else 0.0
    columns, kept = [], []
    if scale > 0.0:
        for i, v in enumerate(V):
            v = v.copy()
            for _ in range(2):
                for q in columns:
                    v -= (q @ v) * q
            norm = np.linalg.norm(v)
            if norm < rel_tol * scale:
                continue
            columns.append(v / norm)
            kept.append(i)
    Q = np.column_stack(columns) if columns else np.zeros((dim, 0))
    return Q, kept


@dataclass(frozen=True, eq=False)
class TangentBasis:
    """Affine subspace origin + span(Q) attached to one test image."""
    origin: np.ndarray
    Q: np.ndarray
    directions: np.ndarray = field(repr=False)
    names: Tuple[str, ...] = ()

    @classmethod
    def from_directions(cls, origin, directions, names: Sequence[str] = (),
                        rel_tol: float = DROP_REL_TOL) -> "TangentBasis":
        o = np.asarray(origin, dtype=float).ravel()
        V = np.asarray(directions, dtype=float).reshape(-1, o.size)
        Q, kept = orthonormalize(V, rel_tol)
        kept_names = tuple(names[i] for i in kept) if names else ()
        return cls(origin=o, Q=Q, directions=V[kept], names=kept_names)

    @property
    def k(self) -> int:
        return self.Q.shape[1]

    @property
    def dim(self) -> int:
        return self.origin.size

    def truncated(self, j: int) -> "TangentBasis":
        """The basis restricted to its first ``j`` directions."""
        return TangentBasis(self.origin, self.Q[:, :j], self.directions[:j], self.names[:j])


def build_tangent_subspace(img, epsilon: float = DEFAULT_EPSILON,
                           shift_epsilon: float = DEFAULT_SHIFT_EPSILON,
                           transforms: Sequence[str] = Transform.ALL) -> TangentBasis:
    """Secant directions t(img) - img for each transform, orthonormalized."""
    if not 0.0 < epsilon <= 0.5:
        raise InvalidConfig(f"epsilon must be in (0, 0.5], got {epsilon}")
    if not shift_epsilon > 0.0:
        raise InvalidConfig(f"shift epsilon must be > 0, got {shift_epsilon}")
    image = as_glyph(img)
    directions = []
    for which in transforms:
        eps = shift_epsilon if which in Transform.TRANSLATIONS else epsilon
        directions.append((apply_transform(image, which, eps) - image).ravel())
    basis = TangentBasis.from_directions(image.ravel(), np.array(directions), tuple(transforms))
    if basis.k < len(transforms):
        logger.debug("Dropped %d degenerate tangent direction(s)", len(transforms) - basis.k)
    if basis.k == 0:
        logger.warning("Every tangent direction vanished; falling back to plain distance")
    return basis


def _as_points(X, dim: int) -> np.ndarray:
    P = np.asarray(X, dtype=float)
    P = P.reshape(-1, dim) if P.size % dim == 0 else P
    if P.ndim != 2 or P.shape[1] != dim:
        raise DimensionMismatch(f"points must have {dim} coordinates")
    if not np.all(np.isfinite(P)):
        raise DegenerateImage("points have non-finite values")
    return P


def subspace_distances(X, basis: TangentBasis) -> np.ndarray:
    """Distances from each row of ``X`` to the affine subspace."""
    R = _as_points(X, basis.dim) - basis.origin
    if basis.k:
        R = R - (R @ basis.Q) @ basis.Q.T
    return np.linalg.norm(R, axis=1)


def distance_to_subspace(x, basis: TangentBasis) -> float:
    """Length of the perpendicular from ``x`` to the subspace."""
    return float(subspace_distances(np.asarray(x, dtype=float).reshape(1, -1), basis)[0])


@dataclass(frozen=True, eq=False)
class LabeledCorpus:
    """Glyphs stored as an N x 256 matrix with integer labels 0..9."""
    images: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        images = np.asarray(self.images, dtype=float)
        labels = np.asarray(self.labels)
        if images.ndim == 3:
            images = images.reshape(images.shape[0], -1)
        if images.ndim != 2 or images.shape[0] == 0:
            raise InvalidCorpus("corpus must hold at least one image")
        if images.shape[1] != GLYPH_SIZE:
            raise InvalidCorpus(f"corpus images must have {GLYPH_SIZE} pixels, got {images.shape[1]}")
        if labels.shape != (images.shape[0],):
            raise InvalidCorpus(f"{labels.size} labels for {images.shape[0]} images")
        if labels.dtype.kind not in "iu" and not np.all(labels == np.round(labels)):
            raise InvalidCorpus("labels must be integers")
        labels = labels.astype(np.int64)
        if labels.min() < 0 or labels.max() >= N_CLASSES:
            raise InvalidCorpus(f"labels must be in 0..{N_CLASSES - 1}")
        if not np.all(np.isfinite(images)) or images.min() < 0.0 or images.max() > 1.0:
            raise InvalidCorpus("pixel values must be in [0, 1]")
        object.__setattr__(self, "images", images)
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return self.labels.size

    def item(self, i: int) -> Tuple[np.ndarray, int]:
        return self.images[i].reshape(GLYPH_SHAPE), int(self.labels[i])


class Classification(NamedTuple):
    label: int
    distance: float
    index: int


def _nearest(distances: np.ndarray, corpus: LabeledCorpus) -> Classification:
    # np.argmin returns the first minimum: ties go to the lowest corpus index
    i = int(np.argmin(distances))
    return Classification(int(corpus.labels[i]), float(distances[i]), i)


def classify_tangent(test, corpus: LabeledCorpus, epsilon: float = DEFAULT_EPSILON,
                     shift_epsilon: float = DEFAULT_SHIFT_EPSILON) -> Classification:
    """Label of the training image nearest to the test image's tangent subspace."""
    basis = build_tangent_subspace(test, epsilon, shift_epsilon)
    return _nearest(subspace_distances(corpus.images, basis), corpus)


def classify_tangent_naive(test, corpus: LabeledCorpus, epsilon: float = DEFAULT_EPSILON,
                           shift_epsilon: float = DEFAULT_SHIFT_EPSILON) -> Classification:
    """Same answer as classify_tangent, one least-squares solve per training image."""
    basis = build_tangent_subspace(test, epsilon, shift_epsilon)
    D = basis.directions.T
    distances = np.empty(len(corpus))
    for i, x in enumerate(corpus.images):
        r = x - basis.origin
        if basis.k:
            coef = np.linalg.lstsq(D, r, rcond=None)[0]
            r = r - D @ coef
        distances[i] = np.linalg.norm(r)
    return _nearest(distances, corpus)


def classify_l2_baseline(test, corpus: LabeledCorpus) -> Classification:
    """Plain Euclidean nearest neighbour."""
    x = as_glyph(test).ravel()
    return _nearest(np.linalg.norm(corpus.images - x, axis=1), corpus)


class BenchRow(NamedTuple):
    method: str
    n_train: int
    n_test: int
    errors: int
    error_rate: float
    wall_ms: float


BENCH_COLUMNS = BenchRow._fields


def run_benchmark(train: LabeledCorpus, test: LabeledCorpus,
                  epsilon: float = DEFAULT_EPSILON,
                  shift_epsilon: float = DEFAULT_SHIFT_EPSILON,
                  methods: Sequence[str] = ("tangent", "l2"),
                  timing: bool = True) -> List[BenchRow]:
    """
    Classify every test glyph with each method and count errors.

    Args:
        methods: any of "tangent", "l2", "tangent-naive"
        timing: when False wall_ms is reported as 0 so reports are reproducible

    Returns:
        one BenchRow per method, in the order given
    """
    classifiers = {
        "tangent": lambda img: classify_tangent(img, train, epsilon, shift_epsilon),
        "tangent-naive": lambda img: classify_tangent_naive(img, train, epsilon, shift_epsilon),
        "l2": lambda img: classify_l2_baseline(img, train),
    }
    rows = []
    for method in methods:
        if method not in classifiers:
            raise InvalidConfig(f"unknown benchmark method {method!r}")
        classify = classifiers[method]
        started = time.perf_counter()
        errors = 0
        for i in range(len(test)):
            image, label = test.item(i)
            if classify(image).label != label:
                errors += 1
        elapsed = (time.perf_counter() - started) * 1000.0 if timing else 0.0
        row = BenchRow(method, len(train), len(test), errors, errors / len(test), elapsed)
        logger.info("%s: %d/%d errors (%.2f%%)", method, errors, len(test), 100.0 * row.error_rate)
        rows.append(row)
    return rows

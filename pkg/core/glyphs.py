"""
Synthetic digit glyphs.

Digits 0-9 are drawn from fixed polyline templates onto a 16x16 grid: a pixel
is fully on within 0.6 px of a stroke and fades to 0 over the next pixel.
Jitter moves the template points before rendering (handwriting wobble, then
a scale and shear, then rotation and shift) and finally thickens the raster.
"""

from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from core.errors import InvalidConfig
from core.logger import get_logger
from core.rng import make_rng
from core.tangent_classifier import GLYPH_SHAPE, LabeledCorpus, N_CLASSES, thicken

logger = get_logger("glyphs")

Stroke = List[Tuple[float, float]]


class Jitter(NamedTuple):
    """Per-item variation ranges; a plain (rotation, shift, thicken) triple leaves the rest at 0."""
    rotation: float        # degrees, U(-r, r)
    shift: float           # pixels per axis, U(-s, s)
    thicken: float         # dilation blend, U(0, t)
    wobble: float = 0.0    # per-point displacement sd, pixels
    scale: float = 0.0     # size factor U(1 - a, 1 + a)
    shear: float = 0.0     # horizontal slant U(-h, h)

    @classmethod
    def coerce(cls, values) -> "Jitter":
        try:
            jitter = cls(*(float(v) for v in values))
        except TypeError:
            raise InvalidConfig(f"jitter needs 3 to 6 ranges, got {values!r}") from None
        if (min(jitter) < 0 or jitter.thicken > 1.0 or jitter.scale >= 1.0
                or not np.all(np.isfinite(jitter))):
            raise InvalidConfig(f"invalid jitter {tuple(values)}")
        return jitter


# +-10 degrees, +-2 px, thicken 0.2, with handwriting variation on top
DEFAULT_JITTER = Jitter(10.0, 2.0, 0.2, wobble=0.5, scale=0.25, shear=0.5)

_CENTRE = np.array([7.5, 7.5])
_FULL_WIDTH = 0.6


def _loop(cx: float, cy: float, rx: float, ry: float, n: int = 16) -> Stroke:
    t = np.linspace(0.0, 2.0 * np.pi, n + 1)
    return [(cx + rx * np.sin(a), cy - ry * np.cos(a)) for a in t]


def digit_templates() -> Dict[int, List[Stroke]]:
    """Stroke polylines per digit, points as (x, y) = (column, row)."""
    return {
        0: [_loop(7.5, 7.75, 3.75, 5.5)],
        1: [[(5.5, 4.0), (8.0, 2.0), (8.0, 13.5)], [(5.5, 13.5), (10.5, 13.5)]],
        2: [[(4.0, 5.0), (5.0, 2.75), (7.5, 2.0), (10.0, 2.75), (11.0, 5.0),
             (10.0, 7.5), (4.0, 13.5), (11.5, 13.5)]],
        3: [[(4.0, 3.0), (7.5, 2.0), (10.5, 3.5), (10.5, 6.0), (7.0, 7.5)],
            [(7.0, 7.5), (10.5, 9.0), (10.5, 12.0), (7.5, 13.5), (4.0, 12.5)]],
        4: [[(9.5, 13.5), (9.5, 2.0), (3.5, 10.0), (12.0, 10.0)]],
        5: [[(11.0, 2.0), (5.0, 2.0), (4.5, 7.0), (8.0, 6.5), (11.0, 8.0),
             (11.0, 11.5), (8.0, 13.5), (4.0, 12.5)]],
        6: [[(10.5, 2.5), (7.0, 2.5), (4.5, 6.0), (4.0, 10.0), (5.0, 13.0),
             (8.0, 13.5), (10.5, 12.0), (10.5, 9.0), (8.0, 7.5), (5.0, 8.5)]],
        7: [[(4.0, 2.0), (11.5, 2.0), (7.0, 13.5)]],
        8: [_loop(7.5, 4.75, 3.0, 2.75), _loop(7.5, 10.75, 3.5, 3.0)],
        9: [[(10.5, 7.5), (8.0, 9.0), (5.0, 8.0), (4.5, 5.0), (6.0, 2.5),
             (9.0, 2.5), (10.5, 5.0), (10.5, 9.0), (9.0, 13.5), (5.5, 13.5)]],
    }


_TEMPLATES = digit_templates()
_ROWS, _COLS = np.mgrid[0:GLYPH_SHAPE[0], 0:GLYPH_SHAPE[1]]
_PIXELS = np.column_stack([_COLS.ravel(), _ROWS.ravel()]).astype(float)


def _segments(strokes: Sequence[Stroke]) -> Tuple[np.ndarray, np.ndarray]:
    starts, ends = [], []
    for stroke in strokes:
        pts = np.asarray(stroke, dtype=float)
        starts.append(pts[:-1])
        ends.append(pts[1:])
    return np.concatenate(starts), np.concatenate(ends)


def _stroke_distance(starts: np.ndarray, ends: np.ndarray) -> np.ndarray:
    """Distance from every pixel centre to the nearest segment, shaped 16x16."""
    d = ends - starts
    length2 = np.maximum(np.sum(d * d, axis=1), 1e-12)
    rel = _PIXELS[:, None, :] - starts[None, :, :]
    t = np.clip(np.sum(rel * d[None], axis=2) / length2, 0.0, 1.0)
    nearest = starts[None] + t[..., None] * d[None]
    dist = np.linalg.norm(_PIXELS[:, None, :] - nearest, axis=2).min(axis=1)
    return dist.reshape(GLYPH_SHAPE)


def wobble_strokes(strokes: Sequence[Stroke], sigma: float,
                   rng: np.random.Generator) -> List[Stroke]:
    """
    Move every template point by an independent N(0, sigma^2) offset per axis.

    Points that coincide (a closed loop's ends, a join between strokes) move
    together, so loops stay closed and strokes stay connected.
    """
    if sigma < 0:
        raise InvalidConfig(f"wobble must be >= 0, got {sigma}")
    moved: Dict[Tuple[float, float], Tuple[float, float]] = {}
    out = []
    for stroke in strokes:
        points = []
        for x, y in stroke:
            key = (round(x, 9), round(y, 9))
            if key not in moved:
                dx, dy = rng.normal(0.0, sigma, size=2) if sigma else (0.0, 0.0)
                moved[key] = (float(x + dx), float(y + dy))
            points.append(moved[key])
        out.append(points)
    return out


def render_strokes(strokes: Sequence[Stroke], rotation_deg: float = 0.0,
                   shift: Tuple[float, float] = (0.0, 0.0), thickness: float = 0.0,
                   scale: float = 1.0, shear: float = 0.0) -> np.ndarray:
    """Rasterize polylines after scaling and shearing, then rotating, about the centre and shifting."""
    if not scale > 0:
        raise InvalidConfig(f"scale must be > 0, got {scale}")
    starts, ends = _segments(strokes)
    if rotation_deg or shift[0] or shift[1] or scale != 1.0 or shear:
        a = np.deg2rad(rotation_deg)
        R = np.array([[np.cos(a), -np.sin(a)], [np.sin(a), np.cos(a)]])
        A = R @ np.array([[scale, scale * shear], [0.0, scale]])
        move = np.asarray(shift, dtype=float)
        starts = (starts - _CENTRE) @ A.T + _CENTRE + move
        ends = (ends - _CENTRE) @ A.T + _CENTRE + move
    image = np.clip(1.0 - np.maximum(_stroke_distance(starts, ends) - _FULL_WIDTH, 0.0), 0.0, 1.0)
    if thickness:
        image = np.clip(thicken(image, thickness), 0.0, 1.0)
    return image


def render_digit(digit: int, rotation_deg: float = 0.0, shift: Tuple[float, float] = (0.0, 0.0),
                 thickness: float = 0.0, scale: float = 1.0, shear: float = 0.0) -> np.ndarray:
    """Rasterize one digit, optionally rotated (degrees), shifted (x, y pixels) and thickened."""
    if digit not in _TEMPLATES:
        raise InvalidConfig(f"digit must be in 0..{N_CLASSES - 1}, got {digit}")
    return render_strokes(_TEMPLATES[digit], rotation_deg, shift, thickness, scale, shear)


def gen_synthetic_glyphs(n_per_class: int, jitter: Optional[Sequence[float]] = DEFAULT_JITTER,
                         seed: int = 0, stream: str = "glyphs") -> LabeledCorpus:
    """
    ``n_per_class`` jittered renderings of each digit, classes in order 0..9.

    Item i of digit c draws, on its own substream (seed, stream, c, i), a
    rotation from U(-r, r) degrees, a shift from U(-s, s)^2 pixels and a
    thickening from U(0, t); then per-point wobble, a scale from
    U(1 - a, 1 + a) and a slant from U(-h, h). Corpora built with different
    ``stream`` names are independent. All-zero jitter reproduces the
    templates exactly.
    """
    if n_per_class < 1:
        raise InvalidConfig(f"n_per_class must be >= 1, got {n_per_class}")
    j = Jitter.coerce(DEFAULT_JITTER if jitter is None else jitter)

    images = np.empty((N_CLASSES * n_per_class, GLYPH_SHAPE[0] * GLYPH_SHAPE[1]))
    labels = np.repeat(np.arange(N_CLASSES), n_per_class)
    for digit in range(N_CLASSES):
        for i in range(n_per_class):
            rng = make_rng(seed, stream, digit, i)
            angle = rng.uniform(-j.rotation, j.rotation)
            move = rng.uniform(-j.shift, j.shift, size=2)
            amount = rng.uniform(0.0, j.thicken)
            strokes = _TEMPLATES[digit]
            if j.wobble:
                strokes = wobble_strokes(strokes, j.wobble, rng)
            size = rng.uniform(1.0 - j.scale, 1.0 + j.scale) if j.scale else 1.0
            slant = rng.uniform(-j.shear, j.shear) if j.shear else 0.0
            images[digit * n_per_class + i] = render_strokes(
                strokes, angle, tuple(move), amount, size, slant).ravel()
    logger.info("Generated %d glyphs (%s stream, jitter %s)", labels.size, stream, tuple(j))
    return LabeledCorpus(images, labels)

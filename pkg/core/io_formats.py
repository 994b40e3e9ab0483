"""
File formats shared by every subcommand.

Text formats write floats with repr() so a read after a write gives back the
same value. Readers raise MalformedFile naming the line (text) or byte offset
(binary) where the input stops making sense.
"""

import csv
from pathlib import Path
from typing import Iterable, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from core.em_core import SystemMatrix
from core.errors import DimensionMismatch, MalformedFile
from core.net_tomo import Graph, LinkCounts
from core.pet_sim import Ellipse, Sinogram
from core.renewal_lab import GridCdf
from core.tangent_classifier import GLYPH_SHAPE, GLYPH_SIZE, LabeledCorpus

PGM_MAXVAL = 65535
SCALE_SUFFIX = ".scale.txt"


def _cell(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _read_text(path) -> str:
    """Whole file as UTF-8 text; undecodable bytes are reported by offset."""
    data = Path(path).read_bytes()
    try:
        return data.decode("utf-8")
    except UnicodeDecodeError as e:
        line = data.count(b"\n", 0, e.start) + 1
        raise MalformedFile(path, f"not UTF-8 text at line {line}: {e.reason}",
                            offset=e.start) from None


def _parse(path, text: str, kind, line: int, what: str):
    try:
        return kind(text)
    except (TypeError, ValueError):
        raise MalformedFile(path, f"bad {what} {text!r}", line=line) from None


# CSV

def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    """Comma-separated rows under a header row."""
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    with p.open("w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(v) for v in row])
    return p


def read_csv(path, expected_header: Optional[Sequence[str]] = None
             ) -> Tuple[List[str], List[Tuple[int, List[str]]]]:
    """
    Read a header-first CSV, skipping blank lines and lines starting with '#'.

    Returns:
        (header, [(line number, cells), ...])
    """
    p = Path(path)
    lines = _read_text(p).splitlines()
    header, rows = None, []
    for number, text in enumerate(lines, start=1):
        if not text.strip() or text.startswith("#"):
            continue
        cells = next(csv.reader([text]))
        if header is None:
            header = [c.strip() for c in cells]
            if expected_header is not None and header != list(expected_header):
                raise MalformedFile(p, f"expected header {','.join(expected_header)}, "
                                       f"got {','.join(header)}", line=number)
            continue
        if len(cells) != len(header):
            raise MalformedFile(p, f"expected {len(header)} fields, got {len(cells)}", line=number)
        rows.append((number, [c.strip() for c in cells]))
    if header is None:
        raise MalformedFile(p, "missing header row", line=1)
    return header, rows


def _comments(path) -> dict:
    meta = {}
    for number, text in enumerate(_read_text(path).splitlines(), start=1):
        if text.startswith("#") and "=" in text:
            key, _, value = text[1:].partition("=")
            meta[key.strip()] = (number, value.strip())
    return meta


# PGM

class Pgm(NamedTuple):
    pixels: np.ndarray
    maxval: int


def write_pgm(grid, path, scale: Optional[float] = None) -> float:
    """
    Binary 16-bit PGM of a nonnegative grid, pixel = round(value / scale).

    ``scale`` defaults to max / 65535 and is recorded in ``path + .scale.txt``.
    """
    values = np.asarray(grid, dtype=float)
    if values.ndim != 2:
        raise DimensionMismatch("PGM needs a 2-D grid")
    if scale is None:
        peak = float(values.max()) if values.size else 0.0
        scale = peak / PGM_MAXVAL if peak > 0 else 1.0
    pixels = np.clip(np.rint(values / scale), 0, PGM_MAXVAL).astype(">u2")
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    height, width = values.shape
    with p.open("wb") as f:
        f.write(f"P5\n{width} {height}\n{PGM_MAXVAL}\n".encode("ascii"))
        f.write(pixels.tobytes())
    Path(str(p) + SCALE_SUFFIX).write_text(repr(float(scale)) + "\n", encoding="utf-8")
    return float(scale)


def _pgm_header(path, data: bytes) -> Tuple[List[int], int]:
    tokens, pos = [], 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise MalformedFile(path, "header ends early", offset=pos)
        token = data[start:pos]
        if not tokens:
            if token != b"P5":
                raise MalformedFile(path, f"magic is {token!r}, expected b'P5'", offset=start)
            tokens.append(5)
            continue
        if not token.isdigit():
            raise MalformedFile(path, f"bad header field {token!r}", offset=start)
        tokens.append(int(token))
    if pos >= len(data) or not data[pos:pos + 1].isspace():
        raise MalformedFile(path, "no whitespace after maxval", offset=pos)
    return tokens[1:], pos + 1


def read_pgm(path) -> Pgm:
    """Binary PGM (8- or 16-bit) as an integer array plus its maxval."""
    p = Path(path)
    data = p.read_bytes()
    (width, height, maxval), start = _pgm_header(p, data)
    if width < 1 or height < 1 or not 0 < maxval <= PGM_MAXVAL:
        raise MalformedFile(p, f"bad size {width}x{height} or maxval {maxval}", offset=0)
    depth = 2 if maxval > 255 else 1
    needed = width * height * depth
    body = data[start:start + needed]
    if len(body) < needed:
        raise MalformedFile(p, f"pixel data truncated: need {needed} bytes from offset {start}",
                            offset=len(data))
    pixels = np.frombuffer(body, dtype=">u2" if depth == 2 else np.uint8)
    pixels = pixels.reshape(height, width).astype(np.int64)
    if pixels.max() > maxval:
        raise MalformedFile(p, f"pixel value above maxval {maxval}", offset=start)
    return Pgm(pixels, maxval)


def read_pgm_scaled(path) -> np.ndarray:
    """Pixel values times the scale recorded next to the image (1.0 if absent)."""
    image = read_pgm(path)
    sidecar = Path(str(path) + SCALE_SUFFIX)
    scale = 1.0
    if sidecar.exists():
        scale = _parse(sidecar, _read_text(sidecar).strip(), float, 1, "scale")
    return image.pixels * scale


# Matrices and vectors

def write_matrix(A: SystemMatrix, path) -> Path:
    """Header ``sources detectors nnz`` then one ``b d a_bd`` triplet per line."""
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    with p.open("w", encoding="utf-8") as f:
        f.write(f"{A.n_sources} {A.n_detectors} {A.nnz}\n")
        for b, d, w in A.entries():
            f.write(f"{b} {d} {w!r}\n")
    return p


def read_matrix(path, image_shape: Optional[Tuple[int, int]] = None) -> SystemMatrix:
    p = Path(path)
    lines = _read_text(p).splitlines()
    if not lines:
        raise MalformedFile(p, "empty matrix file", line=1)
    head = lines[0].split()
    if len(head) != 3:
        raise MalformedFile(p, "header must be 'sources detectors nnz'", line=1)
    n_sources, n_detectors, nnz = (_parse(p, t, int, 1, "header field") for t in head)
    entries = []
    for number, text in enumerate(lines[1:], start=2):
        if not text.strip():
            continue
        parts = text.split()
        if len(parts) != 3:
            raise MalformedFile(p, "expected 'b d a_bd'", line=number)
        b = _parse(p, parts[0], int, number, "source index")
        d = _parse(p, parts[1], int, number, "detector index")
        w = _parse(p, parts[2], float, number, "weight")
        if not (0 <= b < n_sources and 0 <= d < n_detectors):
            raise MalformedFile(p, f"entry ({b}, {d}) outside {n_sources}x{n_detectors}", line=number)
        entries.append((b, d, w))
    if len(entries) != nnz:
        raise MalformedFile(p, f"header promises {nnz} entries, found {len(entries)}", line=1)
    return SystemMatrix.from_triplets(n_sources, n_detectors, entries, image_shape=image_shape)


def write_vector(values, path) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    with p.open("w", encoding="utf-8") as f:
        for v in np.asarray(values).ravel():
            f.write(_cell(v) + "\n")
    return p


def read_vector(path) -> np.ndarray:
    p = Path(path)
    values = []
    for number, text in enumerate(_read_text(p).splitlines(), start=1):
        if text.strip():
            values.append(_parse(p, text.strip(), float, number, "value"))
    return np.asarray(values)


# Emission tomography

SINOGRAM_HEADER = ("angle", "bin", "count")
ELLIPSE_HEADER = ("cx", "cy", "a", "b", "theta", "intensity")
TRACE_HEADER = ("iteration", "log_likelihood")


def write_sinogram(sino: Sinogram, path) -> Path:
    n_angles, n_bins = sino.shape
    rows = ((k, j, sino.counts[k, j]) for k in range(n_angles) for j in range(n_bins))
    return write_csv(path, SINOGRAM_HEADER, rows)


def read_sinogram(path) -> Sinogram:
    _, rows = read_csv(path, SINOGRAM_HEADER)
    cells = {}
    for number, (a, b, c) in rows:
        key = (_parse(path, a, int, number, "angle"), _parse(path, b, int, number, "bin"))
        count = _parse(path, c, int, number, "count")
        if key[0] < 0 or key[1] < 0 or count < 0:
            raise MalformedFile(path, "negative angle, bin or count", line=number)
        if key in cells:
            raise MalformedFile(path, f"duplicate cell {key}", line=number)
        cells[key] = count
    if not cells:
        raise MalformedFile(path, "no sinogram rows", line=1)
    n_angles = max(k for k, _ in cells) + 1
    n_bins = max(j for _, j in cells) + 1
    if len(cells) != n_angles * n_bins:
        raise MalformedFile(path, f"expected {n_angles * n_bins} cells, found {len(cells)}")
    counts = np.zeros((n_angles, n_bins), dtype=np.int64)
    for (k, j), c in cells.items():
        counts[k, j] = c
    return Sinogram(counts)


def write_ellipses(ellipses: Sequence[Ellipse], path) -> Path:
    return write_csv(path, ELLIPSE_HEADER,
                     ((e.cx, e.cy, e.a, e.b, e.theta, e.intensity) for e in ellipses))


def read_ellipses(path) -> List[Ellipse]:
    _, rows = read_csv(path, ELLIPSE_HEADER)
    ellipses = []
    for number, cells in rows:
        values = [_parse(path, c, float, number, name) for c, name in zip(cells, ELLIPSE_HEADER)]
        if values[2] <= 0 or values[3] <= 0:
            raise MalformedFile(path, "semi-axes must be > 0", line=number)
        ellipses.append(Ellipse(*values))
    return ellipses


def write_trace(trace, path) -> Path:
    return write_csv(path, TRACE_HEADER, enumerate(np.asarray(trace, dtype=float)))


# Network tomography

OD_HEADER = ("origin", "destination")
RATES_HEADER = ("route_id", "rate")
ESTIMATES_HEADER = ("route_id", "origin", "destination", "rate")


def write_graph(g: Graph, path) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    with p.open("w", encoding="utf-8") as f:
        f.write(f"{g.n_nodes} {g.n_links}\n")
        for u, v, w in g.edges:
            f.write(f"{u} {v} {w!r}\n")
    return p


def read_graph(path) -> Graph:
    """``n_nodes n_edges`` then ``u v weight`` per edge; bad edges are reported by line."""
    p = Path(path)
    lines = [(i, t) for i, t in enumerate(_read_text(p).splitlines(), start=1) if t.strip()]
    if not lines:
        raise MalformedFile(p, "empty graph file", line=1)
    number, text = lines[0]
    head = text.split()
    if len(head) != 2:
        raise MalformedFile(p, "header must be 'n_nodes n_edges'", line=number)
    n_nodes, n_edges = (_parse(p, t, int, number, "header field") for t in head)
    edges, seen = [], set()
    for number, text in lines[1:]:
        parts = text.split()
        if len(parts) != 3:
            raise MalformedFile(p, "expected 'u v weight'", line=number)
        u = _parse(p, parts[0], int, number, "node")
        v = _parse(p, parts[1], int, number, "node")
        w = _parse(p, parts[2], float, number, "weight")
        if u == v:
            raise MalformedFile(p, f"self-loop on node {u}", line=number)
        if not (0 <= u < n_nodes and 0 <= v < n_nodes):
            raise MalformedFile(p, f"edge ({u}, {v}) names a node outside 0..{n_nodes - 1}", line=number)
        if not (w > 0 and np.isfinite(w)):
            raise MalformedFile(p, f"weight must be > 0, got {w}", line=number)
        key = (min(u, v), max(u, v))
        if key in seen:
            raise MalformedFile(p, f"duplicate edge ({u}, {v})", line=number)
        seen.add(key)
        edges.append((u, v, w))
    if len(edges) != n_edges:
        raise MalformedFile(p, f"header promises {n_edges} edges, found {len(edges)}", line=lines[0][0])
    return Graph.from_edges(n_nodes, edges)


def write_od(od_pairs, path) -> Path:
    return write_csv(path, OD_HEADER, od_pairs)


def read_od(path) -> List[Tuple[int, int]]:
    _, rows = read_csv(path, OD_HEADER)
    return [(_parse(path, o, int, n, "origin"), _parse(path, d, int, n, "destination"))
            for n, (o, d) in rows]


def write_link_counts(Y: LinkCounts, path) -> Path:
    header = [f"link_{l}" for l in range(Y.n_links)]
    return write_csv(path, header, Y.counts)


def read_link_counts(path) -> LinkCounts:
    header, rows = read_csv(path)
    if not rows:
        raise MalformedFile(path, "no epochs", line=1)
    counts = []
    for n, cells in rows:
        row = [_parse(path, c, int, n, "count") for c in cells]
        if min(row) < 0:
            raise MalformedFile(path, "counts must be >= 0", line=n)
        counts.append(row)
    return LinkCounts(np.asarray(counts, dtype=np.int64).reshape(len(rows), len(header)))


def write_rates(rates, path) -> Path:
    return write_csv(path, RATES_HEADER, enumerate(np.asarray(rates, dtype=float)))


def read_rates(path) -> np.ndarray:
    _, rows = read_csv(path, RATES_HEADER)
    return np.asarray([_parse(path, r, float, n, "rate") for n, (_, r) in rows])


def write_estimates(routes, rates, path) -> Path:
    rows = ((i, o, d, r) for i, ((o, d), r) in enumerate(zip(routes, np.asarray(rates, dtype=float))))
    return write_csv(path, ESTIMATES_HEADER, rows)


# Glyph corpora

CORPUS_HEADER = ["label"] + [f"p{i}" for i in range(GLYPH_SIZE)]
PGM_LIST_HEADER = ("file", "label")


def write_corpus(corpus: LabeledCorpus, path) -> Path:
    rows = ([label] + list(image) for image, label in zip(corpus.images, corpus.labels))
    return write_csv(path, CORPUS_HEADER, rows)


def read_corpus(path) -> LabeledCorpus:
    """Either ``label,p0..p255`` rows or a ``file,label`` list of 8-bit 16x16 PGMs."""
    header, rows = read_csv(path)
    if header == list(PGM_LIST_HEADER):
        return _read_pgm_corpus(Path(path), rows)
    if header != CORPUS_HEADER:
        raise MalformedFile(path, "expected label,p0,...,p255 or file,label header", line=1)
    if not rows:
        raise MalformedFile(path, "corpus has no rows", line=1)
    labels, images = [], []
    for n, cells in rows:
        labels.append(_parse(path, cells[0], int, n, "label"))
        images.append([_parse(path, c, float, n, "pixel") for c in cells[1:]])
    return LabeledCorpus(np.asarray(images), np.asarray(labels))


def _read_pgm_corpus(path: Path, rows) -> LabeledCorpus:
    if not rows:
        raise MalformedFile(path, "corpus has no rows", line=1)
    labels, images = [], []
    for n, (name, label) in rows:
        image = read_pgm(path.parent / name)
        if image.pixels.shape != GLYPH_SHAPE:
            raise MalformedFile(path, f"{name} is {image.pixels.shape}, expected {GLYPH_SHAPE}", line=n)
        images.append(image.pixels.ravel() / image.maxval)
        labels.append(_parse(path, label, int, n, "label"))
    return LabeledCorpus(np.asarray(images), np.asarray(labels))


# Renewal

GRID_CDF_HEADER = ("x", "F")


def write_grid_cdf(F: GridCdf, path) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    with p.open("w", newline="", encoding="utf-8") as f:
        f.write(f"# x_max={F.x_max!r}\n# tail_rate={F.tail_rate!r}\n")
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(GRID_CDF_HEADER)
        for x, value in zip(F.x, F.values):
            writer.writerow([_cell(x), _cell(value)])
    return p


def read_grid_cdf(path) -> GridCdf:
    meta = _comments(path)
    for key in ("x_max", "tail_rate"):
        if key not in meta:
            raise MalformedFile(path, f"missing '# {key}=' comment", line=1)
    x_max = _parse(path, meta["x_max"][1], float, meta["x_max"][0], "x_max")
    tail_rate = _parse(path, meta["tail_rate"][1], float, meta["tail_rate"][0], "tail_rate")
    _, rows = read_csv(path, GRID_CDF_HEADER)
    values = [_parse(path, v, float, n, "F") for n, (_, v) in rows]
    return GridCdf(x_max, np.asarray(values), tail_rate)

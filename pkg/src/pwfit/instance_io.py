"""Data ingestion, synthetic instance generation, and serialization.

File formats
------------
Images load from PGM (P2 ASCII or P5 binary, 8/16-bit) or CSV; both are
normalized to [0, 1] (PGM by its maxval; CSV is kept verbatim when it is
already in range, otherwise min/max rescaled).

Run reports are JSON with a fixed field order and a ``format_version``
key; floats are written with full ``repr`` precision, so reading a
report back reproduces every numeric field bit-exactly.  Heuristic-only
runs carry explicit nulls for bound/gap/node fields.

Models serialize to CPLEX-style ``.lp`` text via :func:`write_lp_model`
for solver-independent debugging: a ``Minimize`` section listing every
residual and edge term, ``Subject To`` rows named after their provenance
(``link_*`` residual links, ``d2r_*``/``d2c_*`` second-derivative pairs
with ``p``/``m`` suffixes for the two linearized sides, ``cyc_*``/
``cut_*`` multicut inequalities), ``Bounds`` declaring the fitted values
free, and a ``Binary`` section for the edge variables.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass

import numpy as np

from .formulation import GridInstance, ModelDescription
from .grid import build_grid

REPORT_FORMAT_VERSION = 1


class ParseError(ValueError):
    """Malformed input file; the message names the failing byte offset."""


class SyntheticError(ValueError):
    pass


def _atomic_write(path, data: str | bytes):
    """Write via temp-and-rename so partial artifacts never appear."""
    path = os.fspath(path)
    mode = "wb" if isinstance(data, bytes) else "w"
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".pwfit-tmp-")
    try:
        with os.fdopen(fd, mode) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


# ---------------------------------------------------------------- images

def _pgm_tokens(data: bytes):
    """Yield (token, offset) over PGM header bytes, skipping comments."""
    pos = 0
    while pos < len(data):
        c = data[pos:pos + 1]
        if c.isspace():
            pos += 1
        elif c == b"#":
            while pos < len(data) and data[pos:pos + 1] != b"\n":
                pos += 1
        else:
            start = pos
            while pos < len(data) and not data[pos:pos + 1].isspace():
                pos += 1
            yield data[start:pos], start, pos


def _load_pgm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    toks = _pgm_tokens(data)

    def need(what):
        try:
            return next(toks)
        except StopIteration:
            raise ParseError(
                f"{path}: truncated PGM, expected {what} "
                f"at byte offset {len(data)}") from None

    magic, off, _ = need("magic number")
    if magic not in (b"P2", b"P5"):
        raise ParseError(f"{path}: not a PGM (magic {magic!r} at byte {off})")
    dims = []
    for what in ("width", "height", "maxval"):
        tok, off, end = need(what)
        try:
            dims.append(int(tok))
        except ValueError:
            raise ParseError(
                f"{path}: bad {what} {tok!r} at byte offset {off}") from None
    width, height, maxval = dims
    if width < 1 or height < 1 or maxval < 1:
        raise ParseError(f"{path}: empty or invalid PGM dimensions")
    count = width * height
    if magic == b"P5":
        start = end + 1  # single whitespace byte after maxval
        itemsize = 1 if maxval < 256 else 2
        needed = count * itemsize
        raster = data[start:start + needed]
        if len(raster) < needed:
            raise ParseError(
                f"{path}: truncated raster, expected {needed} bytes "
                f"at byte offset {start}, found {len(raster)}")
        dt = np.uint8 if itemsize == 1 else np.dtype(">u2")
        pix = np.frombuffer(raster, dtype=dt, count=count)
    else:
        vals = []
        for _ in range(count):
            tok, off, end = need("pixel value")
            try:
                vals.append(int(tok))
            except ValueError:
                raise ParseError(
                    f"{path}: bad pixel {tok!r} at byte offset {off}"
                ) from None
        pix = np.array(vals)
    img = pix.astype(np.float64).reshape(height, width)
    if img.min() < 0 or img.max() > maxval:
        raise ParseError(f"{path}: pixel values exceed maxval {maxval}")
    return img / maxval


def _load_csv(path) -> np.ndarray:
    try:
        arr = np.loadtxt(path, delimiter=",", dtype=np.float64, ndmin=2)
    except ValueError as exc:
        raise ParseError(f"{path}: CSV parse failure ({exc})") from None
    if arr.size == 0:
        raise ParseError(f"{path}: empty image")
    if not np.all(np.isfinite(arr)):
        raise ParseError(f"{path}: non-finite values")
    lo, hi = float(arr.min()), float(arr.max())
    if lo >= 0.0 and hi <= 1.0:
        return arr
    if hi > lo:
        return (arr - lo) / (hi - lo)
    return np.clip(arr, 0.0, 1.0)


def load_image(path, format: str | None = None) -> GridInstance:
    """Load a PGM or CSV image as a normalized instance.

    The format is inferred from the extension unless given explicitly.
    Row-major orientation is preserved.
    """
    fmt = format
    if fmt is None:
        ext = os.path.splitext(os.fspath(path))[1].lower()
        fmt = {".pgm": "pgm", ".pnm": "pgm", ".csv": "csv",
               ".txt": "csv"}.get(ext)
        if fmt is None:
            raise ParseError(f"{path}: cannot infer format from extension")
    if fmt == "pgm":
        y = _load_pgm(path)
    elif fmt == "csv":
        y = _load_csv(path)
    else:
        raise ParseError(f"unsupported format {fmt!r} (pgm or csv)")
    if y.size < 2:
        raise ParseError(f"{path}: image needs at least 2 pixels")
    return GridInstance(build_grid(y.shape[0], y.shape[1]), y)


def write_csv(path, arr) -> None:
    arr = np.atleast_2d(np.asarray(arr))
    lines = "\n".join(",".join(repr(float(v)) for v in row) for row in arr)
    _atomic_write(path, lines + "\n")


def write_pgm(path, arr, maxval: int = 255) -> None:
    """Write a [0, 1] array as ASCII PGM (P2)."""
    arr = np.atleast_2d(np.asarray(arr, dtype=np.float64))
    pix = np.clip(np.rint(arr * maxval), 0, maxval).astype(int)
    h, w = pix.shape
    body = "\n".join(" ".join(str(v) for v in row) for row in pix)
    _atomic_write(path, f"P2\n{w} {h}\n{maxval}\n{body}\n")


# ------------------------------------------------------------- synthetic

@dataclass(frozen=True)
class PlanePiece:
    """One affine facet over a node mask; slopes are per unit coordinate
    (coordinates scaled to [0, 1] over the full grid)."""

    mask: np.ndarray
    a1: float
    a2: float
    b: float


@dataclass(frozen=True)
class SyntheticSpec:
    name: str
    size: tuple[int, int]
    pieces: tuple[PlanePiece, ...]
    noise_sigma2: float = 0.0
    seed: int = 0


@dataclass(frozen=True)
class GroundTruth:
    labels: np.ndarray   # flat node -> piece index
    clean: np.ndarray    # (m, n) noise-free image
    clipped: int         # pixels clipped after noise injection


def generate_synthetic(spec: SyntheticSpec):
    """Deterministic instance + ground truth for a synthetic spec."""
    m, n = spec.size
    cover = np.zeros((m, n), dtype=np.int64)
    for p in spec.pieces:
        if p.mask.shape != (m, n):
            raise SyntheticError("piece mask does not match the grid size")
        cover += p.mask.astype(np.int64)
    if (cover > 1).any():
        raise SyntheticError("overlapping masks")
    if (cover < 1).any():
        raise SyntheticError("masks do not cover the grid")
    uu = (np.arange(m, dtype=np.float64) / max(m - 1, 1))[:, None]
    vv = (np.arange(n, dtype=np.float64) / max(n - 1, 1))[None, :]
    clean = np.zeros((m, n))
    labels = np.zeros(m * n, dtype=np.int32)
    for idx, p in enumerate(spec.pieces):
        plane = p.b + p.a1 * uu + p.a2 * vv
        clean = np.where(p.mask, plane, clean)
        labels[p.mask.ravel()] = idx
    if clean.min() < 0 or clean.max() > 1:
        raise SyntheticError("generated clean image leaves [0, 1]")
    clipped = 0
    y = clean
    if spec.noise_sigma2 > 0:
        rng = np.random.default_rng(spec.seed)
        y = clean + rng.normal(0.0, np.sqrt(spec.noise_sigma2), size=(m, n))
        clipped = int(((y < 0) | (y > 1)).sum())
        y = np.clip(y, 0.0, 1.0)
    instance = GridInstance(build_grid(m, n), y)
    return instance, GroundTruth(labels, clean, clipped)


# plane coefficients are deliberately non-round so that no two distinct
# segmentations of a clean image tie on cost (boundary weights derive
# from per-line second differences of the data)

def _quad_spec(m, n, noise, seed):
    r0, c0 = m // 2, n // 2
    ii = np.arange(m)[:, None]
    jj = np.arange(n)[None, :]
    top, left = ii < r0, jj < c0
    pieces = (
        PlanePiece(top & left, 0.1031, 0.1207, 0.0523),
        PlanePiece(top & ~left, 0.0817, -0.1411, 0.7043),
        PlanePiece(~top & left, -0.1193, -0.1019, 0.9011),
        PlanePiece(~top & ~left, 0.0991, 0.1223, 0.3037),
    )
    return SyntheticSpec("quad", (m, n), pieces, noise, seed)


def _diag_spec(m, n, noise, seed):
    # diagonal band between u+v = 0.521 and u+v = 1.479; since the two
    # thresholds are less than 1 apart, every grid row and every column
    # crosses at least one seam (a single diagonal cannot manage that,
    # leaving zero-weight border lines and tied optima)
    uu = (np.arange(m, dtype=np.float64) / max(m - 1, 1))[:, None]
    vv = (np.arange(n, dtype=np.float64) / max(n - 1, 1))[None, :]
    s = uu + vv
    upper, band = s <= 0.521, (s > 0.521) & (s <= 1.479)
    pieces = (
        PlanePiece(upper, 0.2471, 0.2039, 0.1511),
        PlanePiece(band, -0.1487, -0.1219, 0.8521),
        PlanePiece(~upper & ~band, 0.1623, 0.1377, 0.0891),
    )
    return SyntheticSpec("diag", (m, n), pieces, noise, seed)


def _bands_spec(m, n, noise, seed):
    r0, c0, c1 = m // 2, n // 3, (2 * n) // 3
    ii = np.arange(m)[:, None]
    jj = np.arange(n)[None, :]
    top = ii < r0
    b0, b1, b2 = jj < c0, (jj >= c0) & (jj < c1), jj >= c1
    pieces = (
        PlanePiece(top & b0, 0.1013, 0.1489, 0.1009),
        PlanePiece(top & b1, 0.0521, -0.1217, 0.6029),
        PlanePiece(top & b2, 0.1181, 0.1021, 0.2531),
        PlanePiece(~top & b0, -0.1031, -0.1201, 0.7517),
        PlanePiece(~top & b1, 0.0789, 0.1033, 0.2011),
        PlanePiece(~top & b2, -0.1213, -0.1511, 0.9043),
    )
    return SyntheticSpec("bands", (m, n), pieces, noise, seed)


BUILTIN_GENERATORS = {
    "quad": _quad_spec,
    "diag": _diag_spec,
    "bands": _bands_spec,
}


def builtin_synthetic(name: str, m: int, n: int, noise_sigma2: float = 0.0,
                      seed: int = 0):
    """Instance + ground truth from one of the built-in generators."""
    try:
        maker = BUILTIN_GENERATORS[name]
    except KeyError:
        raise SyntheticError(
            f"unknown generator {name!r}; available: "
            f"{sorted(BUILTIN_GENERATORS)}") from None
    return generate_synthetic(maker(m, n, noise_sigma2, seed))


# --------------------------------------------------------------- reports

@dataclass(frozen=True)
class RunReport:
    """Self-contained record of one run; with the input file and the same
    backend and seed it reproduces the run."""

    instance: dict
    variant: str
    params: dict
    limits: dict
    solve: dict
    metrics: dict | None = None
    format_version: int = REPORT_FORMAT_VERSION

    def to_dict(self) -> dict:
        return {
            "format_version": self.format_version,
            "instance": self.instance,
            "variant": self.variant,
            "params": self.params,
            "limits": self.limits,
            "solve": self.solve,
            "metrics": self.metrics,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunReport":
        if d.get("format_version") != REPORT_FORMAT_VERSION:
            raise ParseError(
                f"unsupported report format_version {d.get('format_version')}")
        return cls(instance=d["instance"], variant=d["variant"],
                   params=d["params"], limits=d["limits"], solve=d["solve"],
                   metrics=d.get("metrics"),
                   format_version=d["format_version"])


def _sanitize(obj):
    """Replace non-finite floats with None so the JSON stays portable."""
    if isinstance(obj, float):
        return obj if np.isfinite(obj) else None
    if isinstance(obj, (np.floating, np.integer)):
        return _sanitize(obj.item())
    if isinstance(obj, np.ndarray):
        return [_sanitize(v) for v in obj.tolist()]
    if isinstance(obj, dict):
        return {k: _sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_sanitize(v) for v in obj]
    return obj


def write_report(report: RunReport, path) -> None:
    text = json.dumps(_sanitize(report.to_dict()), indent=2,
                      allow_nan=False)
    _atomic_write(path, text + "\n")


def read_report(path) -> RunReport:
    with open(path) as fh:
        try:
            d = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: bad report JSON ({exc})") from None
    return RunReport.from_dict(d)


# -------------------------------------------------------------- LP files

def _lp_num(v: float) -> str:
    return repr(float(v))


def _lp_terms(names, coeffs) -> str:
    parts = []
    for name, c in zip(names, coeffs):
        c = float(c)
        if not parts:
            parts.append(f"{_lp_num(c)} {name}")
        elif c < 0:
            parts.append(f"- {_lp_num(-c)} {name}")
        else:
            parts.append(f"+ {_lp_num(c)} {name}")
    return " ".join(parts)


def write_lp_model(model: ModelDescription, path) -> None:
    """Serialize a model to CPLEX LP text (HiGHS can read it back)."""
    g = model.graph
    lines = [f"\\ pwfit model: {g.rows}x{g.cols} grid, "
             f"{g.num_edges} edges, {len(model.constraints)} rows",
             "Minimize"]
    cost = model.col_cost
    obj_names = [model.var_name(c) for c in range(model.num_nodes,
                                                  model.num_cols)]
    obj_coeffs = cost[model.num_nodes:]
    lines.append(" obj: " + _lp_terms(obj_names, obj_coeffs))
    lines.append("Subject To")
    for con in model.constraints:
        names = [model.var_name(int(c)) for c in con.indices]
        expr = _lp_terms(names, con.coeffs)
        if con.lower == con.upper:
            lines.append(f" {con.name}: {expr} = {_lp_num(con.lower)}")
        elif con.upper == np.inf:
            lines.append(f" {con.name}: {expr} >= {_lp_num(con.lower)}")
        elif con.lower == -np.inf:
            lines.append(f" {con.name}: {expr} <= {_lp_num(con.upper)}")
        else:  # pragma: no cover - no ranged rows are emitted today
            lines.append(f" {con.name}: {_lp_num(con.lower)} <= {expr} "
                         f"<= {_lp_num(con.upper)}")
    lines.append("Bounds")
    for k in range(model.num_nodes):
        lines.append(f" {model.var_name(k)} free")
    lines.append("Binary")
    for e in range(model.num_edges):
        lines.append(f" x_{e}")
    lines.append("End")
    _atomic_write(path, "\n".join(lines) + "\n")

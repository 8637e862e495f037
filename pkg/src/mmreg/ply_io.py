"""PLY point-cloud ingestion/output and CSV result persistence.

Supports ascii and binary_little_endian PLY files whose first data element
is ``vertex`` with float32/float64 ``x``, ``y``, ``z`` properties; any other
per-vertex scalar properties are skipped, and everything after the vertex
data (faces etc.) is ignored with a warning.  Big-endian files and list
properties inside the vertex element are rejected explicitly.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .core import InvalidInputError, PointCloud

_SCALAR_SIZES = {
    "char": 1, "int8": 1, "uchar": 1, "uint8": 1,
    "short": 2, "int16": 2, "ushort": 2, "uint16": 2,
    "int": 4, "int32": 4, "uint": 4, "uint32": 4,
    "float": 4, "float32": 4,
    "double": 8, "float64": 8,
}
_FLOAT_DTYPES = {"float": "<f4", "float32": "<f4", "double": "<f8", "float64": "<f8"}


class PlyError(ValueError):
    """Base for PLY parsing failures."""


class PlyUnsupportedFormatError(PlyError):
    """Format keyword the reader does not handle (e.g. big endian)."""


class PlyUnsupportedLayoutError(PlyError):
    """Element/property layout the reader does not handle."""


class PlyCorruptError(PlyError):
    """File body inconsistent with its header."""

    def __init__(self, message: str, byte_offset: int):
        super().__init__(f"{message} (at byte offset {byte_offset})")
        self.byte_offset = byte_offset


@dataclass(frozen=True)
class PlyHeaderInfo:
    """Parsed vertex layout of a PLY header."""

    format: str                      # "ascii" or "binary_little_endian"
    vertex_count: int
    properties: tuple[tuple[str, str], ...]  # (type, name) in declared order
    data_offset: int                 # first byte past end_header

    @property
    def xyz_indices(self) -> tuple[int, int, int]:
        names = [name for _, name in self.properties]
        return names.index("x"), names.index("y"), names.index("z")


def _parse_header(raw: bytes, path: str) -> PlyHeaderInfo:
    offset = 0
    lines: list[str] = []
    while True:
        end = raw.find(b"\n", offset)
        if end < 0:
            raise PlyCorruptError(f"{path}: header has no end_header line", len(raw))
        try:
            line = raw[offset:end].decode("ascii").strip()
        except UnicodeDecodeError as exc:
            raise PlyCorruptError(f"{path}: non-ascii bytes inside header", offset) from exc
        offset = end + 1
        if line == "end_header":
            break
        lines.append(line)

    if not lines or lines[0] != "ply":
        raise PlyUnsupportedFormatError(f"{path}: missing 'ply' magic line")

    fmt: str | None = None
    elements: list[tuple[str, int]] = []
    vertex_props: list[tuple[str, str]] = []
    for line in lines[1:]:
        fields = line.split()
        if not fields or fields[0] in ("comment", "obj_info"):
            continue
        if fields[0] == "format":
            if len(fields) < 2:
                raise PlyUnsupportedFormatError(f"{path}: malformed format line {line!r}")
            fmt = fields[1]
        elif fields[0] == "element":
            if len(fields) != 3:
                raise PlyUnsupportedLayoutError(f"{path}: malformed element line {line!r}")
            elements.append((fields[1], int(fields[2])))
        elif fields[0] == "property":
            if not elements:
                raise PlyUnsupportedLayoutError(f"{path}: property before any element")
            if elements[-1][0] != "vertex":
                continue  # properties of skipped elements
            if fields[1] == "list":
                raise PlyUnsupportedLayoutError(
                    f"{path}: list property {fields[-1]!r} in vertex element")
            if len(fields) != 3 or fields[1] not in _SCALAR_SIZES:
                raise PlyUnsupportedLayoutError(f"{path}: bad property line {line!r}")
            vertex_props.append((fields[1], fields[2]))

    if fmt not in ("ascii", "binary_little_endian"):
        raise PlyUnsupportedFormatError(f"{path}: unsupported format {fmt!r}")
    vertex_index = next((i for i, (name, _) in enumerate(elements) if name == "vertex"), None)
    if vertex_index is None:
        raise PlyUnsupportedLayoutError(f"{path}: no vertex element")
    if any(count > 0 for _, count in elements[:vertex_index]):
        raise PlyUnsupportedLayoutError(
            f"{path}: non-empty element precedes the vertex element")

    names = [name for _, name in vertex_props]
    for coord in ("x", "y", "z"):
        if coord not in names:
            raise PlyUnsupportedLayoutError(f"{path}: vertex element lacks property {coord!r}")
        ptype = vertex_props[names.index(coord)][0]
        if ptype not in _FLOAT_DTYPES:
            raise PlyUnsupportedLayoutError(
                f"{path}: coordinate {coord!r} has non-float type {ptype!r}")
    return PlyHeaderInfo(fmt, elements[vertex_index][1], tuple(vertex_props), offset)


def _read_binary_vertices(raw: bytes, header: PlyHeaderInfo, path: str) -> np.ndarray:
    stride = sum(_SCALAR_SIZES[t] for t, _ in header.properties)
    need = header.vertex_count * stride
    body = raw[header.data_offset:]
    if len(body) < need:
        raise PlyCorruptError(
            f"{path}: vertex data truncated, expected {need} bytes, found {len(body)}",
            header.data_offset + len(body))
    if len(body) > need:
        warnings.warn(f"{path}: ignoring {len(body) - need} trailing bytes", stacklevel=3)
    offsets, names, formats = [], [], []
    pos = 0
    for ptype, name in header.properties:
        if name in ("x", "y", "z"):
            names.append(name)
            formats.append(_FLOAT_DTYPES[ptype])
            offsets.append(pos)
        pos += _SCALAR_SIZES[ptype]
    dtype = np.dtype({"names": names, "formats": formats,
                      "offsets": offsets, "itemsize": stride})
    records = np.frombuffer(body, dtype=dtype, count=header.vertex_count)
    return np.column_stack([records["x"], records["y"], records["z"]]).astype(np.float64)


def _read_ascii_vertices(raw: bytes, header: PlyHeaderInfo, path: str) -> np.ndarray:
    ix, iy, iz = header.xyz_indices
    n_props = len(header.properties)
    pts = np.empty((header.vertex_count, 3))
    offset = header.data_offset
    for i in range(header.vertex_count):
        end = raw.find(b"\n", offset)
        chunk = raw[offset:] if end < 0 else raw[offset:end]
        tokens = chunk.split()
        if len(tokens) < n_props:
            raise PlyCorruptError(
                f"{path}: vertex {i} has {len(tokens)} fields, expected {n_props}", offset)
        try:
            pts[i] = float(tokens[ix]), float(tokens[iy]), float(tokens[iz])
        except ValueError as exc:
            raise PlyCorruptError(f"{path}: non-numeric coordinate in vertex {i}", offset) from exc
        if end < 0 and i < header.vertex_count - 1:
            raise PlyCorruptError(
                f"{path}: only {i + 1} of {header.vertex_count} vertex lines present", len(raw))
        offset = len(raw) if end < 0 else end + 1
    if raw[offset:].strip():
        warnings.warn(f"{path}: ignoring trailing data after vertex element", stacklevel=3)
    return pts


def read_ply(path: str | Path) -> PointCloud:
    """Read vertex coordinates from a PLY file, in file order.

    Raises :class:`PlyUnsupportedFormatError`, :class:`PlyUnsupportedLayoutError`
    or :class:`PlyCorruptError` for the failure modes described in the module
    docstring; missing files surface as the usual :class:`OSError`.
    """
    path = Path(path)
    raw = path.read_bytes()
    header = _parse_header(raw, str(path))
    if header.format == "binary_little_endian":
        pts = _read_binary_vertices(raw, header, str(path))
    else:
        pts = _read_ascii_vertices(raw, header, str(path))
    if not np.all(np.isfinite(pts)):
        raise PlyCorruptError(f"{str(path)}: non-finite vertex coordinates", header.data_offset)
    return PointCloud(pts, frame_label=path.stem)


def write_ply(cloud: PointCloud, path: str | Path,
              format: str = "binary_little_endian") -> None:
    """Write a cloud as a PLY vertex element with float32 x, y, z."""
    if format not in ("ascii", "binary_little_endian"):
        raise InvalidInputError(f"unsupported PLY format {format!r}")
    pts = cloud.points.astype(np.float32)
    header = "\n".join([
        "ply",
        f"format {format} 1.0",
        f"element vertex {len(cloud)}",
        "property float x",
        "property float y",
        "property float z",
        "end_header",
    ]) + "\n"
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        if format == "binary_little_endian":
            fh.write(np.ascontiguousarray(pts, dtype="<f4").tobytes())
        else:
            for p in pts:
                fh.write(f"{p[0]:.9g} {p[1]:.9g} {p[2]:.9g}\n".encode("ascii"))


def _format_cell(value: object) -> str:
    if isinstance(value, bool):
        return str(value)
    if isinstance(value, float):
        return f"{value:.17g}"
    if isinstance(value, (np.floating,)):
        return f"{float(value):.17g}"
    return str(value)


def write_results_csv(rows: Iterable[dict], path: str | Path,
                      fieldnames: Sequence[str] | None = None) -> None:
    """Write result rows as CSV: header line, comma delimiter, LF endings,
    floats at 17 significant digits (exact round-trip)."""
    rows = list(rows)
    if fieldnames is None:
        if not rows:
            raise InvalidInputError("fieldnames required when writing zero rows")
        fieldnames = list(rows[0].keys())
    for row in rows:
        if set(row.keys()) != set(fieldnames):
            raise InvalidInputError("rows do not share one schema")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(fieldnames)
        for row in rows:
            writer.writerow([_format_cell(row[name]) for name in fieldnames])

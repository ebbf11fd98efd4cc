"""Triangle meshes, voxel grids and the exact measures built on them.

Coordinates are meters. Loaders take a ``unit_scale`` so that cm-scale
library scans can be brought into meters at read time.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numba
import numpy as np

from .errors import AggkitError, DegenerateInputError, MeshParseError, NotWatertightError

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class TriMesh:
    """Triangle surface with optional per-vertex RGB colors.

    Arrays are stored read-only; operations return new meshes.
    """

    vertices: np.ndarray
    faces: np.ndarray
    vertex_colors: np.ndarray | None = None
    unit_scale: float = 1.0
    non_manifold: bool = field(default=False)

    def __post_init__(self):
        v = np.ascontiguousarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        f = np.ascontiguousarray(self.faces, dtype=np.int64).reshape(-1, 3)
        if f.size and (f.min() < 0 or f.max() >= len(v)):
            raise AggkitError("face index out of range")
        c = self.vertex_colors
        if c is not None:
            c = np.ascontiguousarray(c, dtype=np.uint8).reshape(-1, 3)
            if len(c) != len(v):
                raise AggkitError("vertex_colors must have one row per vertex")
            c.flags.writeable = False
        v.flags.writeable = False
        f.flags.writeable = False
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", f)
        object.__setattr__(self, "vertex_colors", c)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    @property
    def bounds(self) -> np.ndarray:
        """``(2, 3)`` array of min and max corner."""
        return np.stack([self.vertices.min(axis=0), self.vertices.max(axis=0)])

    @property
    def extent(self) -> np.ndarray:
        lo, hi = self.bounds
        return hi - lo

    @property
    def is_watertight(self) -> bool:
        return edges_are_closed(self.faces)

    def triangles(self) -> np.ndarray:
        """``(n_faces, 3, 3)`` corner coordinates."""
        return self.vertices[self.faces]

    def with_vertices(self, vertices: np.ndarray) -> "TriMesh":
        return TriMesh(vertices, self.faces, self.vertex_colors, self.unit_scale, self.non_manifold)

    def transformed(self, rotation=None, translation=None) -> "TriMesh":
        v = self.vertices
        if rotation is not None:
            v = v @ np.asarray(rotation, dtype=np.float64).T
        if translation is not None:
            v = v + np.asarray(translation, dtype=np.float64)
        return self.with_vertices(v)

    def scaled(self, s: float) -> "TriMesh":
        return self.with_vertices(self.vertices * float(s))


def edges_are_closed(faces: np.ndarray) -> bool:
    """True when every undirected edge is shared by exactly two faces."""
    if len(faces) == 0:
        return False
    e = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
    e.sort(axis=1)
    _, counts = np.unique(e, axis=0, return_counts=True)
    return bool(np.all(counts == 2))


# ---------------------------------------------------------------------------
# loading and saving


def load_mesh(path, unit_scale: float = 1.0) -> TriMesh:
    """Read an OBJ or PLY (ascii / binary little-endian) triangle mesh.

    Polygons are fan-triangulated. ``unit_scale`` multiplies coordinates,
    e.g. ``0.01`` for centimeter scans. The returned mesh carries
    ``non_manifold=True`` when the edge-sharing check fails; this is a
    warning, not an error.
    """
    if unit_scale <= 0:
        raise AggkitError("unit_scale must be positive")
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".obj":
        v, f, c = _read_obj(path)
    elif suffix == ".ply":
        v, f, c = _read_ply(path)
    else:
        raise MeshParseError(path, None, f"unsupported mesh format {suffix!r}")
    if len(f) == 0:
        raise MeshParseError(path, None, "no faces")
    v = v * float(unit_scale)
    closed = edges_are_closed(f)
    if not closed:
        log.warning("%s: mesh is not watertight (edge-sharing check failed)", path)
    return TriMesh(v, f, c, unit_scale=float(unit_scale), non_manifold=not closed)


def _color_to_u8(rgb: np.ndarray) -> np.ndarray:
    if rgb.size and rgb.max() <= 1.0:
        rgb = rgb * 255.0
    return np.clip(np.rint(rgb), 0, 255).astype(np.uint8)


def _read_obj(path: Path):
    verts, colors, faces = [], [], []
    with open(path, "r", encoding="utf-8", errors="replace") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            tag = parts[0]
            if tag == "v":
                if len(parts) not in (4, 5, 7, 8):
                    raise MeshParseError(path, lineno, f"malformed vertex: {line.strip()!r}")
                try:
                    vals = [float(p) for p in parts[1:]]
                except ValueError:
                    raise MeshParseError(path, lineno, f"non-numeric vertex: {line.strip()!r}") from None
                verts.append(vals[:3])
                if len(vals) >= 6:
                    colors.append(vals[-3:])
            elif tag == "f":
                if len(parts) < 4:
                    raise MeshParseError(path, lineno, "face needs at least 3 vertices")
                try:
                    idx = [int(p.split("/")[0]) for p in parts[1:]]
                except ValueError:
                    raise MeshParseError(path, lineno, f"bad face index: {line.strip()!r}") from None
                n = len(verts)
                idx = [i - 1 if i > 0 else n + i for i in idx]
                if min(idx) < 0 or max(idx) >= n:
                    raise MeshParseError(path, lineno, "face refers to an undefined vertex")
                for k in range(1, len(idx) - 1):
                    faces.append((idx[0], idx[k], idx[k + 1]))
    if not verts:
        raise MeshParseError(path, None, "no vertices")
    v = np.array(verts, dtype=np.float64)
    f = np.array(faces, dtype=np.int64).reshape(-1, 3)
    c = None
    if colors:
        if len(colors) != len(verts):
            raise MeshParseError(path, None, "vertex colors given for only some vertices")
        c = _color_to_u8(np.array(colors, dtype=np.float64))
    return v, f, c


_PLY_TYPES = {
    "char": "i1", "int8": "i1", "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2", "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4", "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4", "double": "f8", "float64": "f8",
}


class _PlyElement(NamedTuple):
    name: str
    count: int
    props: list  # (name, dtype) or (name, ("list", count_dtype, item_dtype))


def _read_ply_header(fh, path):
    first = fh.readline()
    if first.strip() != b"ply":
        raise MeshParseError(path, 1, "missing 'ply' magic")
    fmt = None
    elements: list[_PlyElement] = []
    lineno = 1
    while True:
        raw = fh.readline()
        lineno += 1
        if not raw:
            raise MeshParseError(path, lineno, "unexpected end of header")
        parts = raw.decode("ascii", errors="replace").split()
        if not parts or parts[0] in ("comment", "obj_info"):
            continue
        if parts[0] == "format":
            fmt = parts[1]
        elif parts[0] == "element":
            elements.append(_PlyElement(parts[1], int(parts[2]), []))
        elif parts[0] == "property":
            if not elements:
                raise MeshParseError(path, lineno, "property before element")
            try:
                if parts[1] == "list":
                    elements[-1].props.append((parts[4], ("list", _PLY_TYPES[parts[2]], _PLY_TYPES[parts[3]])))
                else:
                    elements[-1].props.append((parts[2], _PLY_TYPES[parts[1]]))
            except (KeyError, IndexError):
                raise MeshParseError(path, lineno, f"bad property line {raw!r}") from None
        elif parts[0] == "end_header":
            break
    if fmt not in ("ascii", "binary_little_endian"):
        raise MeshParseError(path, None, f"unsupported PLY format {fmt!r}")
    return fmt, elements, lineno


def read_ply_elements(path) -> dict[str, dict[str, np.ndarray]]:
    """Parse every element of a PLY file into column arrays.

    List properties come back as an object array of per-row arrays, or a
    2D array when all rows have the same length.
    """
    path = Path(path)
    with open(path, "rb") as fh:
        fmt, elements, header_lines = _read_ply_header(fh, path)
        body = fh.read()
    out: dict[str, dict[str, np.ndarray]] = {}
    if fmt == "ascii":
        lines = body.decode("ascii", errors="replace").splitlines()
        pos = 0
        for el in elements:
            cols: dict[str, list] = {name: [] for name, _ in el.props}
            for _ in range(el.count):
                while pos < len(lines) and not lines[pos].strip():
                    pos += 1
                if pos >= len(lines):
                    raise MeshParseError(path, header_lines + pos + 1, f"truncated {el.name} data")
                toks = lines[pos].split()
                lineno = header_lines + pos + 1
                pos += 1
                k = 0
                try:
                    for name, typ in el.props:
                        if isinstance(typ, tuple):
                            n = int(toks[k])
                            cols[name].append(np.array(toks[k + 1:k + 1 + n], dtype=typ[2]))
                            if len(cols[name][-1]) != n:
                                raise IndexError
                            k += 1 + n
                        else:
                            cols[name].append(np.dtype(typ).type(float(toks[k]) if typ[0] == "f" else int(toks[k])))
                            k += 1
                except (IndexError, ValueError):
                    raise MeshParseError(path, lineno, f"malformed {el.name} row") from None
            out[el.name] = {name: _stack_column(vals, typ) for (name, typ), vals in zip(el.props, cols.values())}
        return out

    offset = 0
    for el in elements:
        has_list = any(isinstance(t, tuple) for _, t in el.props)
        if not has_list:
            dt = np.dtype([(name, "<" + t) for name, t in el.props])
            need = dt.itemsize * el.count
            if offset + need > len(body):
                raise MeshParseError(path, None, f"truncated binary {el.name} data")
            arr = np.frombuffer(body, dtype=dt, count=el.count, offset=offset)
            offset += need
            out[el.name] = {name: arr[name].copy() for name, _ in el.props}
            continue
        # fast path: exactly one list property with a constant length
        if len(el.props) == 1 and el.count > 0:
            name, (_, cnt_t, item_t) = el.props[0]
            cnt_dt = np.dtype("<" + cnt_t)
            if offset + cnt_dt.itemsize > len(body):
                raise MeshParseError(path, None, f"truncated binary {el.name} data")
            n0 = int(np.frombuffer(body, cnt_dt, 1, offset)[0])
            dt = np.dtype([("n", cnt_dt), ("v", "<" + item_t, (n0,))])
            need = dt.itemsize * el.count
            if offset + need <= len(body):
                arr = np.frombuffer(body, dtype=dt, count=el.count, offset=offset)
                if np.all(arr["n"] == n0):
                    out[el.name] = {name: arr["v"].astype(np.int64 if item_t[0] in "iu" else np.float64)}
                    offset += need
                    continue
        cols = {name: [] for name, _ in el.props}
        for _ in range(el.count):
            for name, typ in el.props:
                if isinstance(typ, tuple):
                    cdt, idt = np.dtype("<" + typ[1]), np.dtype("<" + typ[2])
                    if offset + cdt.itemsize > len(body):
                        raise MeshParseError(path, None, f"truncated binary {el.name} data")
                    n = int(np.frombuffer(body, cdt, 1, offset)[0])
                    offset += cdt.itemsize
                    if offset + n * idt.itemsize > len(body):
                        raise MeshParseError(path, None, f"truncated binary {el.name} data")
                    cols[name].append(np.frombuffer(body, idt, n, offset).copy())
                    offset += n * idt.itemsize
                else:
                    d = np.dtype("<" + typ)
                    if offset + d.itemsize > len(body):
                        raise MeshParseError(path, None, f"truncated binary {el.name} data")
                    cols[name].append(np.frombuffer(body, d, 1, offset)[0])
                    offset += d.itemsize
        out[el.name] = {name: _stack_column(vals, typ) for (name, typ), vals in zip(el.props, cols.values())}
    return out


def _stack_column(vals, typ):
    if isinstance(typ, tuple):
        lens = {len(v) for v in vals}
        if len(lens) == 1:
            return np.array(vals, dtype=np.int64 if typ[2][0] in "iu" else np.float64).reshape(len(vals), -1)
        arr = np.empty(len(vals), dtype=object)
        arr[:] = vals
        return arr
    return np.array(vals, dtype=typ)


def _read_ply(path: Path):
    els = read_ply_elements(path)
    if "vertex" not in els:
        raise MeshParseError(path, None, "no vertex element")
    vx = els["vertex"]
    try:
        v = np.stack([vx["x"], vx["y"], vx["z"]], axis=1).astype(np.float64)
    except KeyError:
        raise MeshParseError(path, None, "vertex element lacks x/y/z") from None
    c = None
    if all(k in vx for k in ("red", "green", "blue")):
        c = np.stack([vx["red"], vx["green"], vx["blue"]], axis=1)
        c = _color_to_u8(c.astype(np.float64)) if c.dtype.kind == "f" else c.astype(np.uint8)
    faces = []
    fe = els.get("face", {})
    key = "vertex_indices" if "vertex_indices" in fe else ("vertex_index" if "vertex_index" in fe else None)
    if key is not None:
        col = fe[key]
        if col.dtype != object and col.ndim == 2 and col.shape[1] == 3:
            faces = col.astype(np.int64)
        else:
            tri = []
            for poly in col:
                poly = np.asarray(poly, dtype=np.int64).ravel()
                for k in range(1, len(poly) - 1):
                    tri.append((poly[0], poly[k], poly[k + 1]))
            faces = np.array(tri, dtype=np.int64).reshape(-1, 3)
    f = np.asarray(faces, dtype=np.int64).reshape(-1, 3)
    if f.size and (f.min() < 0 or f.max() >= len(v)):
        raise MeshParseError(path, None, "face refers to an undefined vertex")
    return v, f, c


def write_obj(mesh: TriMesh, path) -> None:
    """Write OBJ; vertex colors go in the common ``v x y z r g b`` extension."""
    with open(path, "w", encoding="utf-8") as fh:
        if mesh.vertex_colors is not None:
            rgb = mesh.vertex_colors / 255.0
            for p, c in zip(mesh.vertices.tolist(), rgb.tolist()):
                fh.write(f"v {p[0]!r} {p[1]!r} {p[2]!r} {c[0]:.6f} {c[1]:.6f} {c[2]:.6f}\n")
        else:
            for p in mesh.vertices.tolist():
                fh.write(f"v {p[0]!r} {p[1]!r} {p[2]!r}\n")
        for a, b, c in (mesh.faces + 1).tolist():
            fh.write(f"f {a} {b} {c}\n")


def write_ply(mesh: TriMesh, path, binary: bool = True) -> None:
    nv, nf = mesh.n_vertices, mesh.n_faces
    has_c = mesh.vertex_colors is not None
    header = ["ply", f"format {'binary_little_endian' if binary else 'ascii'} 1.0",
              f"element vertex {nv}", "property double x", "property double y", "property double z"]
    if has_c:
        header += ["property uchar red", "property uchar green", "property uchar blue"]
    header += [f"element face {nf}", "property list uchar int vertex_indices", "end_header"]
    with open(path, "wb") as fh:
        fh.write(("\n".join(header) + "\n").encode("ascii"))
        if binary:
            vdt = [("x", "<f8"), ("y", "<f8"), ("z", "<f8")]
            if has_c:
                vdt += [("red", "u1"), ("green", "u1"), ("blue", "u1")]
            va = np.empty(nv, dtype=vdt)
            va["x"], va["y"], va["z"] = mesh.vertices.T
            if has_c:
                va["red"], va["green"], va["blue"] = mesh.vertex_colors.T
            fh.write(va.tobytes())
            fa = np.empty(nf, dtype=[("n", "u1"), ("v", "<i4", (3,))])
            fa["n"] = 3
            fa["v"] = mesh.faces
            fh.write(fa.tobytes())
        else:
            for i in range(nv):
                row = " ".join(repr(float(x)) for x in mesh.vertices[i])
                if has_c:
                    row += " " + " ".join(str(int(x)) for x in mesh.vertex_colors[i])
                fh.write((row + "\n").encode("ascii"))
            for a, b, c in mesh.faces:
                fh.write(f"3 {a} {b} {c}\n".encode("ascii"))


# ---------------------------------------------------------------------------
# measures


class MeshMeasures(NamedTuple):
    volume: float | None
    surface_area: float
    centroid: np.ndarray | None


def surface_area(mesh: TriMesh) -> float:
    t = mesh.triangles()
    return float(0.5 * np.linalg.norm(np.cross(t[:, 1] - t[:, 0], t[:, 2] - t[:, 0]), axis=1).sum())


def mesh_measures(mesh: TriMesh) -> MeshMeasures:
    """Volume (signed-tetrahedron sum), surface area and solid centroid.

    Volume and centroid are ``None`` for meshes that are not closed. The
    sign of the tetrahedron sum is discarded, so inward-wound scans still
    report a positive volume.
    """
    area = surface_area(mesh)
    if not mesh.is_watertight:
        return MeshMeasures(None, area, None)
    t = mesh.triangles()
    # shift to the vertex mean for better conditioning; results are translated back
    ref = mesh.vertices.mean(axis=0)
    a, b, c = t[:, 0] - ref, t[:, 1] - ref, t[:, 2] - ref
    six_v = np.einsum("ij,ij->i", a, np.cross(b, c))
    total = six_v.sum()
    volume = abs(total) / 6.0
    if total == 0:
        return MeshMeasures(0.0, area, None)
    centroid = ((a + b + c) * six_v[:, None]).sum(axis=0) / (4.0 * total) + ref
    return MeshMeasures(float(volume), area, centroid)


def recenter(mesh: TriMesh) -> TriMesh:
    """Translate so the mean of the vertices sits at the origin."""
    if mesh.n_vertices == 0:
        raise DegenerateInputError("cannot recenter an empty mesh")
    v = mesh.vertices - mesh.vertices.mean(axis=0)
    # drive the residual mean to zero for large offsets
    v = v - v.mean(axis=0)
    return mesh.with_vertices(v)


# ---------------------------------------------------------------------------
# voxels


@dataclass(frozen=True, eq=False)
class VoxelGrid:
    """Axis-aligned occupancy lattice; cell ``(i, j, k)`` spans
    ``origin + [i, i+1) * cell_size`` along each axis."""

    origin: np.ndarray
    cell_size: float
    occupancy: np.ndarray

    def __post_init__(self):
        if not self.cell_size > 0:
            raise AggkitError("cell_size must be positive")
        occ = np.asarray(self.occupancy, dtype=bool)
        if occ.ndim != 3 or min(occ.shape) <= 0:
            raise AggkitError("occupancy must be a non-empty 3D array")
        object.__setattr__(self, "origin", np.asarray(self.origin, dtype=np.float64).reshape(3))
        object.__setattr__(self, "occupancy", occ)

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.occupancy.shape

    @property
    def count(self) -> int:
        return int(np.count_nonzero(self.occupancy))

    @property
    def volume(self) -> float:
        return self.count * self.cell_size ** 3

    def centers(self) -> np.ndarray:
        """World coordinates of the occupied cell centers."""
        idx = np.argwhere(self.occupancy)
        return self.origin + (idx + 0.5) * self.cell_size


@numba.njit(cache=True)
def _includes_tie(dx, dy):
    # exactly one of (d, -d) passes, so a shared edge is claimed once
    return dy > 0.0 or (dy == 0.0 and dx < 0.0)


@numba.njit(cache=True)
def _column_hits(V, F, ox, oy, cs, nx, ny, counts, zs, fill):
    """Parity crossings of +z columns through cell centers.

    First call with ``fill=False`` counts crossings per column, second call
    writes the z values using ``counts`` as running offsets.
    """
    for t in range(F.shape[0]):
        ia, ib, ic = F[t, 0], F[t, 1], F[t, 2]
        ax, ay = V[ia, 0], V[ia, 1]
        bx, by = V[ib, 0], V[ib, 1]
        cx, cy = V[ic, 0], V[ic, 1]
        area = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
        if area == 0.0:
            continue
        s = 1.0 if area > 0.0 else -1.0
        xmin = min(ax, bx, cx)
        xmax = max(ax, bx, cx)
        ymin = min(ay, by, cy)
        ymax = max(ay, by, cy)
        i0 = max(int(np.floor((xmin - ox) / cs - 0.5)), 0)
        i1 = min(int(np.ceil((xmax - ox) / cs - 0.5)), nx - 1)
        j0 = max(int(np.floor((ymin - oy) / cs - 0.5)), 0)
        j1 = min(int(np.ceil((ymax - oy) / cs - 0.5)), ny - 1)
        idx = (ia, ib, ic)
        for i in range(i0, i1 + 1):
            px = ox + (i + 0.5) * cs
            for j in range(j0, j1 + 1):
                py = oy + (j + 0.5) * cs
                inside = True
                w = np.zeros(3)
                for e in range(3):
                    p = idx[e]
                    q = idx[(e + 1) % 3]
                    lo = min(p, q)
                    hi = max(p, q)
                    sign = s if p == lo else -s
                    ex = V[hi, 0] - V[lo, 0]
                    ey = V[hi, 1] - V[lo, 1]
                    val = sign * (ex * (py - V[lo, 1]) - ey * (px - V[lo, 0]))
                    if val < 0.0 or (val == 0.0 and not _includes_tie(sign * ex, sign * ey)):
                        inside = False
                        break
                    # weight for the vertex opposite this edge
                    w[(e + 2) % 3] = val
                if not inside:
                    continue
                tot = w[0] + w[1] + w[2]
                if tot <= 0.0:
                    continue
                z = (w[0] * V[ia, 2] + w[1] * V[ib, 2] + w[2] * V[ic, 2]) / tot
                col = i * ny + j
                if fill:
                    zs[counts[col]] = z
                    counts[col] += 1
                else:
                    counts[col] += 1


@numba.njit(cache=True)
def _fill_columns(starts, ends, zs, oz, cs, occ):
    nx, ny, nz = occ.shape
    odd = 0
    for col in range(starts.shape[0]):
        a, b = starts[col], ends[col]
        n = b - a
        if n == 0:
            continue
        seg = np.sort(zs[a:b])
        if n % 2 == 1:
            odd += 1
            n -= 1
        i = col // ny
        j = col % ny
        for p in range(0, n, 2):
            z0, z1 = seg[p], seg[p + 1]
            k0 = max(int(np.ceil((z0 - oz) / cs - 0.5)), 0)
            k1 = min(int(np.ceil((z1 - oz) / cs - 0.5)), nz)
            for k in range(k0, k1):
                occ[i, j, k] = True
    return odd


def voxelize(mesh: TriMesh, cell_size: float, origin=None, dims=None) -> VoxelGrid:
    """Solid voxelization by parity counting along +z.

    A cell is occupied when its center lies inside the closed surface. The
    grid is padded by one empty cell on every side unless ``origin`` and
    ``dims`` are given.
    """
    if not cell_size > 0:
        raise AggkitError("cell_size must be positive")
    if not mesh.is_watertight:
        raise NotWatertightError("voxelize needs a watertight mesh")
    lo, hi = mesh.bounds
    if cell_size > float((hi - lo).max()):
        raise DegenerateInputError("cell_size larger than the mesh extent")
    if origin is None:
        origin = lo - cell_size
        dims = tuple(int(x) for x in np.ceil((hi - lo) / cell_size).astype(int) + 2)
    origin = np.asarray(origin, dtype=np.float64)
    nx, ny, nz = (int(d) for d in dims)
    V, F = mesh.vertices, mesh.faces
    counts = np.zeros(nx * ny, dtype=np.int64)
    _column_hits(V, F, origin[0], origin[1], cell_size, nx, ny, counts, np.empty(0), False)
    ends = np.cumsum(counts)
    starts = ends - counts
    zs = np.empty(int(ends[-1]) if len(ends) else 0)
    run = starts.copy()
    _column_hits(V, F, origin[0], origin[1], cell_size, nx, ny, run, zs, True)
    occ = np.zeros((nx, ny, nz), dtype=np.bool_)
    odd = _fill_columns(starts, ends, zs, origin[2], cell_size, occ)
    if odd:
        log.debug("voxelize: %d columns with odd crossing counts", odd)
    return VoxelGrid(origin, float(cell_size), occ)


# ---------------------------------------------------------------------------
# decimation


def decimate(mesh: TriMesh, target_faces: int) -> TriMesh:
    """Quadric edge-collapse simplification to at most ``target_faces``.

    Meshes already at or under the target come back unchanged. Vertex
    colors are carried over from the nearest original vertex.
    """
    import fast_simplification
    from scipy.spatial import cKDTree

    if target_faces < 4:
        raise DegenerateInputError("a closed surface needs at least 4 faces")
    if mesh.n_faces <= target_faces:
        return mesh
    goal = int(target_faces)
    # the extension rejects read-only buffers
    verts = np.array(mesh.vertices, dtype=np.float64)
    tris = np.array(mesh.faces, dtype=np.int32)
    for _ in range(8):
        v, f = fast_simplification.simplify(verts, tris, target_count=goal)
        if len(f) <= target_faces:
            break
        goal = max(4, goal - max(2, (len(f) - target_faces) + 2))
    else:
        raise AggkitError(f"could not reduce below {target_faces} faces")
    used = np.unique(f)
    remap = np.full(len(v), -1, dtype=np.int64)
    remap[used] = np.arange(len(used))
    v = v[used]
    f = remap[f]
    colors = None
    if mesh.vertex_colors is not None:
        _, nn = cKDTree(mesh.vertices).query(v)
        colors = mesh.vertex_colors[nn]
    return TriMesh(v, f, colors, mesh.unit_scale, not edges_are_closed(f))


def lod_chain(mesh: TriMesh, targets=(2000, 1000, 500)) -> list[TriMesh]:
    """Successive levels of detail, each decimated from the previous one."""
    out = []
    cur = mesh
    for t in targets:
        cur = decimate(cur, t)
        out.append(cur)
    return out

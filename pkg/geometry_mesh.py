"""
geometry_mesh.py
Triangulations of planar domains with an explicitly ordered boundary loop.
Structured unit-disk builder, text loader/writer, validation and the trace map.
"""

import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, TextIO, Tuple

import numpy as np

from config import InvalidParameterError, log


# =============================================================================
# ERRORS
# =============================================================================

class MeshError(Exception):
    """Base exception for mesh parse and validation errors"""
    def __init__(self, message: str, line: Optional[int] = None):
        self.message = message
        self.line = line
        where = f" (line {line})" if line is not None else ""
        super().__init__(f"{message}{where}")


class MeshParseError(MeshError):
    """Malformed counts or tokens"""


class MeshIndexError(MeshError):
    """Node index out of range"""
    def __init__(self, message: str, index: int, line: Optional[int] = None):
        self.index = index
        super().__init__(message, line)


class OpenLoopError(MeshError):
    """Boundary loop does not close over all boundary edges"""


class InvertedTriangleError(MeshError):
    """Triangle with non-positive signed area"""
    def __init__(self, message: str, triangle: int, line: Optional[int] = None):
        self.triangle = triangle
        super().__init__(message, line)


class NotBoundaryNodeError(KeyError):
    """Lookup of an interior node in the trace map"""
    def __init__(self, node: int):
        self.node = node
        super().__init__(f"node {node} is not a boundary node")


# =============================================================================
# TYPES
# =============================================================================

def _frozen(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class Mesh:
    """Conforming triangulation; nodes (V,2), counterclockwise triangles (F,3), boundary loop (m,)"""
    nodes: np.ndarray
    triangles: np.ndarray
    boundary_loop: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "nodes", _frozen(np.array(self.nodes, dtype=float).reshape(-1, 2)))
        object.__setattr__(self, "triangles", _frozen(np.array(self.triangles, dtype=np.int64).reshape(-1, 3)))
        object.__setattr__(self, "boundary_loop", _frozen(np.array(self.boundary_loop, dtype=np.int64).ravel()))

    @property
    def num_nodes(self) -> int:
        return len(self.nodes)

    @property
    def num_triangles(self) -> int:
        return len(self.triangles)

    @property
    def num_boundary(self) -> int:
        return len(self.boundary_loop)

    @property
    def tag(self) -> str:
        """Short identity used to associate state vectors with their mesh"""
        return f"V{self.num_nodes}-F{self.num_triangles}-m{self.num_boundary}"

    def signed_areas(self) -> np.ndarray:
        p = self.nodes[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def total_area(self) -> float:
        return float(self.signed_areas().sum())

    def mesh_size(self) -> float:
        """Longest edge length h"""
        p = self.nodes[self.triangles]
        edges = np.concatenate([p[:, 1] - p[:, 0], p[:, 2] - p[:, 1], p[:, 0] - p[:, 2]])
        return float(np.sqrt((edges ** 2).sum(axis=1)).max())

    def interior_nodes(self) -> np.ndarray:
        mask = np.ones(self.num_nodes, dtype=bool)
        mask[self.boundary_loop] = False
        return np.flatnonzero(mask)

    def same_as(self, other: "Mesh") -> bool:
        return (np.array_equal(self.nodes, other.nodes)
                and np.array_equal(self.triangles, other.triangles)
                and np.array_equal(self.boundary_loop, other.boundary_loop))


@dataclass(frozen=True, eq=False)
class TraceMap:
    """Identification of boundary nodes with positions along the loop"""
    loop: np.ndarray
    boundary_index_of: Dict[int, int]
    arc_weights: np.ndarray
    normals: np.ndarray = field(repr=False)
    # signed curvature of the circle through each node and its two loop neighbours
    curvatures: np.ndarray = field(repr=False)

    def position(self, node: int) -> int:
        try:
            return self.boundary_index_of[int(node)]
        except KeyError:
            raise NotBoundaryNodeError(int(node)) from None

    def node_at(self, position: int) -> int:
        return int(self.loop[position])

    def perimeter(self) -> float:
        return float(self.arc_weights.sum())


# =============================================================================
# VALIDATION
# =============================================================================

def boundary_edges(triangles: np.ndarray) -> Dict[Tuple[int, int], int]:
    """Edges that belong to exactly one triangle, keyed by sorted node pair"""
    counts: Dict[Tuple[int, int], int] = {}
    for tri in triangles:
        a, b, c = (int(v) for v in tri)
        for i, j in ((a, b), (b, c), (c, a)):
            key = (i, j) if i < j else (j, i)
            counts[key] = counts.get(key, 0) + 1
    return {edge: n for edge, n in counts.items() if n == 1}


def validate_mesh(mesh: Mesh,
                  triangle_lines: Optional[List[int]] = None,
                  loop_line: Optional[int] = None) -> Mesh:
    """
    Check every Mesh invariant eagerly.
    triangle_lines / loop_line let the loader cite file line numbers.
    """
    V = mesh.num_nodes
    if mesh.num_triangles == 0:
        raise MeshParseError("mesh has no triangles")

    for t, tri in enumerate(mesh.triangles):
        line = triangle_lines[t] if triangle_lines else None
        for idx in tri:
            if idx < 0 or idx >= V:
                raise MeshIndexError(f"triangle {t} references node index {int(idx)} >= V={V}", int(idx), line)

    areas = mesh.signed_areas()
    for t in np.flatnonzero(areas <= 0):
        line = triangle_lines[t] if triangle_lines else None
        raise InvertedTriangleError(
            f"triangle {int(t)} is inverted or degenerate (signed area {areas[t]:.3e})", int(t), line)

    for idx in mesh.boundary_loop:
        if idx < 0 or idx >= V:
            raise MeshIndexError(f"boundary loop references node index {int(idx)} >= V={V}", int(idx), loop_line)

    edges = boundary_edges(mesh.triangles)
    boundary_nodes = {v for edge in edges for v in edge}
    loop = [int(v) for v in mesh.boundary_loop]

    if len(set(loop)) != len(loop):
        raise OpenLoopError("open loop: boundary loop repeats a node", loop_line)
    missing = boundary_nodes - set(loop)
    if missing:
        raise OpenLoopError(f"open loop: boundary node(s) {sorted(missing)[:5]} missing from loop", loop_line)
    extra = set(loop) - boundary_nodes
    if extra:
        raise OpenLoopError(f"open loop: interior node(s) {sorted(extra)[:5]} listed in loop", loop_line)
    for pos, a in enumerate(loop):
        b = loop[(pos + 1) % len(loop)]
        key = (a, b) if a < b else (b, a)
        if key not in edges:
            raise OpenLoopError(f"open loop: nodes {a} and {b} do not share a boundary edge", loop_line)
    if len(edges) != len(loop):
        raise OpenLoopError(f"open loop: {len(edges)} boundary edges but loop has {len(loop)} nodes", loop_line)

    return mesh


# =============================================================================
# BUILDERS
# =============================================================================

def _zip_rings(inner: List[int], outer: List[int]) -> List[Tuple[int, int, int]]:
    """Fill the annulus between two rings that both start at angle 0"""
    m1, m2 = len(inner), len(outer)
    tris = []
    a = b = 0
    while a < m1 or b < m2:
        # advance along whichever ring has the next edge midpoint first in angle
        if b < m2 and (a == m1 or (2 * b + 1) * m1 < (2 * a + 1) * m2):
            tris.append((inner[a % m1], outer[b % m2], outer[(b + 1) % m2]))
            b += 1
        else:
            tris.append((inner[a % m1], outer[b % m2], inner[(a + 1) % m1]))
            a += 1
    return tris


def build_disk_mesh(rings: int) -> Mesh:
    """
    Concentric-ring triangulation of the unit disk.

    Center node plus ring j at radius j/rings carrying 6j equally spaced nodes.
    V = 1 + 3R(R+1), F = 6R^2, boundary loop = outermost ring in angular order.
    """
    if isinstance(rings, bool) or int(rings) != rings or rings < 1:
        raise InvalidParameterError("rings", f"rings must be a positive integer, got {rings}")
    rings = int(rings)

    nodes = [(0.0, 0.0)]
    ring_ids: List[List[int]] = [[0]]
    for j in range(1, rings + 1):
        radius = j / rings
        count = 6 * j
        ids = []
        for i in range(count):
            angle = 2.0 * math.pi * i / count
            ids.append(len(nodes))
            nodes.append((radius * math.cos(angle), radius * math.sin(angle)))
        ring_ids.append(ids)

    triangles: List[Tuple[int, int, int]] = []
    first = ring_ids[1]
    for i in range(6):
        triangles.append((0, first[i], first[(i + 1) % 6]))
    for j in range(2, rings + 1):
        triangles.extend(_zip_rings(ring_ids[j - 1], ring_ids[j]))

    mesh = Mesh(np.array(nodes), np.array(triangles), np.array(ring_ids[rings]))
    validate_mesh(mesh)
    log("MESH", f"disk mesh rings={rings}: V={mesh.num_nodes} F={mesh.num_triangles} m={mesh.num_boundary}")
    return mesh


# =============================================================================
# TEXT FORMAT
# =============================================================================

def _content_lines(text: Iterable[str]) -> List[Tuple[int, List[str]]]:
    rows = []
    for number, raw in enumerate(text, start=1):
        stripped = raw.strip()
        if not stripped or stripped.startswith("#"):
            continue
        rows.append((number, stripped.split()))
    return rows


def _parse_int(token: str, line: int) -> int:
    try:
        return int(token)
    except ValueError:
        raise MeshParseError(f"expected integer, got {token!r}", line) from None


def _parse_float(token: str, line: int) -> float:
    try:
        return float(token)
    except ValueError:
        raise MeshParseError(f"expected number, got {token!r}", line) from None


def load_mesh_text(text) -> Mesh:
    """
    Parse the whitespace-separated mesh format:
        V F m
        V lines "x y"
        F lines "i j k"   (0-based, counterclockwise)
        m lines           (boundary loop, cyclic order)
    Lines starting with '#' are comments. Accepts a string or a text stream.
    """
    if isinstance(text, str):
        text = text.splitlines()
    rows = _content_lines(text)
    if not rows:
        raise MeshParseError("empty mesh file")

    header_line, header = rows[0]
    if len(header) != 3:
        raise MeshParseError(f"header must be 'V F m', got {len(header)} fields", header_line)
    V, F, m = (_parse_int(tok, header_line) for tok in header)
    if V < 3 or F < 1 or m < 3:
        raise MeshParseError(f"invalid counts V={V} F={F} m={m}", header_line)
    if len(rows) - 1 != V + F + m:
        last = rows[-1][0]
        raise MeshParseError(f"expected {V + F + m} data lines after header, found {len(rows) - 1}", last)

    body = rows[1:]
    nodes = np.empty((V, 2))
    for i, (line, tokens) in enumerate(body[:V]):
        if len(tokens) != 2:
            raise MeshParseError(f"node line needs 2 coordinates, got {len(tokens)}", line)
        nodes[i] = (_parse_float(tokens[0], line), _parse_float(tokens[1], line))

    triangles = np.empty((F, 3), dtype=np.int64)
    triangle_lines = []
    for t, (line, tokens) in enumerate(body[V:V + F]):
        if len(tokens) != 3:
            raise MeshParseError(f"triangle line needs 3 indices, got {len(tokens)}", line)
        triangles[t] = [_parse_int(tok, line) for tok in tokens]
        for idx in triangles[t]:
            if idx < 0 or idx >= V:
                raise MeshIndexError(f"triangle {t} references node index {int(idx)} >= V={V}", int(idx), line)
        triangle_lines.append(line)

    loop = np.empty(m, dtype=np.int64)
    loop_start = body[V + F][0]
    for i, (line, tokens) in enumerate(body[V + F:]):
        if len(tokens) != 1:
            raise MeshParseError(f"boundary loop line needs 1 index, got {len(tokens)}", line)
        loop[i] = _parse_int(tokens[0], line)
        if loop[i] < 0 or loop[i] >= V:
            raise MeshIndexError(f"boundary loop references node index {int(loop[i])} >= V={V}", int(loop[i]), line)

    mesh = Mesh(nodes, triangles, loop)
    return validate_mesh(mesh, triangle_lines=triangle_lines, loop_line=loop_start)


def write_mesh_text(mesh: Mesh, stream: TextIO):
    """Serialize in the format read by load_mesh_text (coordinates round-trip exactly)"""
    stream.write(f"# V F m\n{mesh.num_nodes} {mesh.num_triangles} {mesh.num_boundary}\n")
    for x, y in mesh.nodes:
        stream.write(f"{float(x)!r} {float(y)!r}\n")
    for i, j, k in mesh.triangles:
        stream.write(f"{i} {j} {k}\n")
    stream.write("# boundary loop\n")
    for idx in mesh.boundary_loop:
        stream.write(f"{idx}\n")


# =============================================================================
# TRACE MAP
# =============================================================================

def trace_map(mesh: Mesh) -> TraceMap:
    """Boundary positions, chord lengths, node normals and curvatures of the loop"""
    loop = np.array(mesh.boundary_loop)
    pts = mesh.nodes[loop]
    chords = np.roll(pts, -1, axis=0) - pts
    weights = np.sqrt((chords ** 2).sum(axis=1))

    # shoelace sign decides which side is outward
    orientation = 0.5 * np.sum(pts[:, 0] * np.roll(pts[:, 1], -1) - np.roll(pts[:, 0], -1) * pts[:, 1])
    sign = 1.0 if orientation > 0 else -1.0
    edge_normals = sign * np.column_stack([chords[:, 1], -chords[:, 0]])
    node_normals = edge_normals + np.roll(edge_normals, 1, axis=0)
    node_normals /= np.linalg.norm(node_normals, axis=1, keepdims=True)

    # 4 area / (a b c) of (previous, node, next), exact for nodes on a circle
    prev_pts, next_pts = np.roll(pts, 1, axis=0), np.roll(pts, -1, axis=0)
    d1, d2 = pts - prev_pts, next_pts - pts
    twice_area = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    spans = np.linalg.norm(next_pts - prev_pts, axis=1)
    curvatures = sign * 2.0 * twice_area / (np.roll(weights, 1) * weights * spans)

    index_of = {int(node): pos for pos, node in enumerate(loop)}
    return TraceMap(_frozen(loop), index_of, _frozen(weights), _frozen(node_normals), _frozen(curvatures))

"""Triangulated surfaces as graphs: Laplacian, gradient, spectrum, distances."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components
from scipy.spatial.distance import cdist

from .errors import ConfigError, MeshError

EIGENDECOMPOSE_CAP = 5000


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class TriangleMesh:
    """Vertices (N, 3) in meters and triangles (M, 3) as vertex-index triples.

    Validated on construction: indices in range, no duplicate triangles,
    and the edge graph forms a single connected component.
    """

    vertices: np.ndarray
    triangles: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        t = np.asarray(self.triangles, dtype=np.int64)
        if v.ndim != 2 or v.shape[1] != 3:
            raise MeshError(f"vertices must be (N, 3), got {v.shape}")
        if t.ndim != 2 or t.shape[1] != 3:
            raise MeshError(f"triangles must be (M, 3), got {t.shape}")
        if t.shape[0] == 0:
            raise MeshError("mesh has no triangles")
        n = v.shape[0]
        if t.min() < 0 or t.max() >= n:
            bad = int(np.argmax((t < 0) | (t >= n)).item() // 3)
            raise MeshError(
                f"triangle {bad} references vertex index out of range [0, {n})"
            )
        if any(len(set(tri)) != 3 for tri in t.tolist()):
            raise MeshError("degenerate triangle with repeated vertex")
        keys = {tuple(sorted(tri)) for tri in t.tolist()}
        if len(keys) != t.shape[0]:
            raise MeshError("duplicate triangles")
        edges = _triangle_edges(t)
        a = sp.coo_matrix(
            (np.ones(len(edges)), (edges[:, 0], edges[:, 1])), shape=(n, n)
        )
        ncomp, _ = connected_components(a + a.T, directed=False)
        if ncomp != 1:
            raise MeshError(f"mesh is not edge-connected ({ncomp} components)")
        object.__setattr__(self, "vertices", _freeze(v))
        object.__setattr__(self, "triangles", _freeze(t))

    @property
    def N(self) -> int:
        return self.vertices.shape[0]


def _triangle_edges(triangles: np.ndarray) -> np.ndarray:
    """Unique undirected edges (k, k') with k < k' from triangle sides."""
    e = np.vstack(
        [triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [0, 2]]]
    )
    e = np.sort(e, axis=1)
    return np.unique(e, axis=0)


def load_mesh(path, format: str = "OFF") -> TriangleMesh:
    """Parse an ASCII OFF file into a validated TriangleMesh.

    Parameters
    ----------
    path : str or Path
        File starting with an "OFF" header line, then a counts line
        "nv nf ne", nv vertex lines, and nf face lines "3 i j k".
    format : str
        Only "OFF" is supported.

    Raises
    ------
    MeshError
        On parse failures (reported with line numbers) and on any
        TriangleMesh invariant violation.
    """
    if format != "OFF":
        raise ConfigError(f"unsupported mesh format {format!r}")
    with open(path) as fh:
        raw = fh.readlines()
    # strip comments and blanks, remembering original line numbers
    lines = []
    for i, text in enumerate(raw, start=1):
        body = text.split("#", 1)[0].strip()
        if body:
            lines.append((i, body))
    if not lines:
        raise MeshError(f"{path}: empty file")
    cursor = 0
    lineno, header = lines[cursor]
    if header != "OFF":
        raise MeshError(f"{path}:{lineno}: expected 'OFF' header, got {header!r}")
    cursor += 1
    try:
        lineno, counts = lines[cursor]
    except IndexError:
        raise MeshError(f"{path}: missing counts line") from None
    parts = counts.split()
    if len(parts) != 3:
        raise MeshError(f"{path}:{lineno}: counts line must have 3 fields")
    nv, nf = int(parts[0]), int(parts[1])
    cursor += 1
    if len(lines) < cursor + nv + nf:
        raise MeshError(f"{path}: truncated (expected {nv} vertices, {nf} faces)")
    vertices = np.empty((nv, 3))
    for k in range(nv):
        lineno, body = lines[cursor + k]
        fields = body.split()
        if len(fields) != 3:
            raise MeshError(f"{path}:{lineno}: vertex line must have 3 coordinates")
        try:
            vertices[k] = [float(x) for x in fields]
        except ValueError:
            raise MeshError(f"{path}:{lineno}: bad vertex coordinate") from None
    cursor += nv
    triangles = np.empty((nf, 3), dtype=np.int64)
    for k in range(nf):
        lineno, body = lines[cursor + k]
        fields = body.split()
        if len(fields) != 4 or fields[0] != "3":
            raise MeshError(f"{path}:{lineno}: face line must be '3 i j k'")
        try:
            triangles[k] = [int(x) for x in fields[1:]]
        except ValueError:
            raise MeshError(f"{path}:{lineno}: bad face index") from None
        if triangles[k].min() < 0 or triangles[k].max() >= nv:
            raise MeshError(f"{path}:{lineno}: face index out of range [0, {nv})")
    return TriangleMesh(vertices, triangles)


def save_mesh(path, mesh: TriangleMesh) -> None:
    """Write a mesh as ASCII OFF (inverse of load_mesh)."""
    with open(path, "w") as fh:
        fh.write("OFF\n")
        fh.write(f"{mesh.N} {mesh.triangles.shape[0]} 0\n")
        for x, y, z in mesh.vertices.tolist():
            fh.write(f"{x!r} {y!r} {z!r}\n")
        for t in mesh.triangles:
            fh.write(f"3 {t[0]} {t[1]} {t[2]}\n")


# icosahedron with edge length 2, vertices on circumscribed sphere
_PHI = (1.0 + np.sqrt(5.0)) / 2.0
_ICO_VERTS = np.array(
    [
        (-1, _PHI, 0), (1, _PHI, 0), (-1, -_PHI, 0), (1, -_PHI, 0),
        (0, -1, _PHI), (0, 1, _PHI), (0, -1, -_PHI), (0, 1, -_PHI),
        (_PHI, 0, -1), (_PHI, 0, 1), (-_PHI, 0, -1), (-_PHI, 0, 1),
    ],
    dtype=float,
)
_ICO_FACES = np.array(
    [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ],
    dtype=np.int64,
)


def generate_icosphere(subdivisions: int, radius: float) -> TriangleMesh:
    """Subdivided icosahedron projected onto the sphere of given radius.

    N = 10·4^s + 2 vertices for s subdivisions; s must be in [0, 6].
    """
    if not 0 <= subdivisions <= 6:
        raise ConfigError(f"subdivisions must be in [0, 6], got {subdivisions}")
    if radius <= 0:
        raise ConfigError(f"radius must be positive, got {radius}")
    verts = [v / np.linalg.norm(v) for v in _ICO_VERTS]
    faces = _ICO_FACES.tolist()
    for _ in range(subdivisions):
        cache: dict[tuple[int, int], int] = {}

        def midpoint(i: int, j: int) -> int:
            key = (i, j) if i < j else (j, i)
            if key not in cache:
                m = verts[i] + verts[j]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        faces = [
            sub
            for (a, b, c) in faces
            for sub in (
                (a, midpoint(a, b), midpoint(a, c)),
                (midpoint(a, b), b, midpoint(b, c)),
                (midpoint(a, c), midpoint(b, c), c),
                (midpoint(a, b), midpoint(b, c), midpoint(a, c)),
            )
        ]
    return TriangleMesh(radius * np.array(verts), np.array(faces, dtype=np.int64))


@dataclass(frozen=True)
class CorticalGraph:
    """Graph view of a mesh: adjacency, degrees, Laplacian, edge gradient.

    adjacency is symmetric with zero diagonal; laplacian = diag(degrees) −
    adjacency; gradient has one row per edge (k, k') with k < k', holding
    +w at k and −w at k'; edge_list is the (E, 2) array of those pairs.
    """

    adjacency: sp.csr_matrix
    degrees: np.ndarray
    laplacian: sp.csr_matrix
    gradient: sp.csr_matrix
    edge_list: np.ndarray

    @property
    def N(self) -> int:
        return self.adjacency.shape[0]

    @property
    def E(self) -> int:
        return self.edge_list.shape[0]


def graph_from_edges(n: int, edges, weights=None) -> CorticalGraph:
    """Assemble a CorticalGraph from explicit undirected edges.

    edges is a sequence of (k, k') pairs; weights default to binary.
    """
    e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    e = np.sort(e, axis=1)
    order = np.lexsort((e[:, 1], e[:, 0]))
    e = e[order]
    w = np.ones(len(e)) if weights is None else np.asarray(weights, float)[order]
    if len(e) and (e[:, 0] == e[:, 1]).any():
        raise MeshError("self-loop in edge list")
    adjacency = sp.coo_matrix((w, (e[:, 0], e[:, 1])), shape=(n, n))
    adjacency = (adjacency + adjacency.T).tocsr()
    degrees = np.asarray(adjacency.sum(axis=1)).ravel()
    laplacian = (sp.diags(degrees) - adjacency).tocsr()
    rows = np.repeat(np.arange(len(e)), 2)
    cols = e.ravel()
    vals = np.stack([w, -w], axis=1).ravel()
    gradient = sp.csr_matrix((vals, (rows, cols)), shape=(len(e), n))
    return CorticalGraph(adjacency, _freeze(degrees), laplacian, gradient, _freeze(e))


def build_graph(mesh: TriangleMesh, weights: str = "binary") -> CorticalGraph:
    """Mesh graph: A_{kk'} = 1 iff k, k' share a triangle edge."""
    if weights != "binary":
        raise ConfigError(f"unsupported weight scheme {weights!r}")
    return graph_from_edges(mesh.N, _triangle_edges(mesh.triangles))


@dataclass(frozen=True)
class LaplacianSpectrum:
    """Full Laplacian eigendecomposition, eigenvalues ascending.

    eigenvectors holds χ_l in column l, orthonormal.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    lambda_max: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "eigenvalues", _freeze(self.eigenvalues))
        object.__setattr__(self, "eigenvectors", _freeze(self.eigenvectors))
        object.__setattr__(self, "lambda_max", float(self.eigenvalues[-1]))

    @property
    def N(self) -> int:
        return self.eigenvalues.shape[0]


def eigendecompose(graph: CorticalGraph, cap: int = EIGENDECOMPOSE_CAP) -> LaplacianSpectrum:
    """Dense full eigendecomposition of the graph Laplacian.

    Cost is O(N³); refuses N > cap rather than silently stalling.
    """
    n = graph.N
    if n > cap:
        raise ConfigError(
            f"graph has {n} vertices, above the dense eigendecomposition cap "
            f"{cap}; lower the mesh resolution (fewer subdivisions)"
        )
    evals, evecs = scipy.linalg.eigh(graph.laplacian.toarray())
    evals = np.maximum(evals, 0.0)  # clip eigh round-off on the PSD spectrum
    return LaplacianSpectrum(evals, evecs)


def vertex_distances(mesh: TriangleMesh) -> np.ndarray:
    """Pairwise straight-line 3D distances between vertices, (N, N)."""
    d = cdist(mesh.vertices, mesh.vertices)
    np.fill_diagonal(d, 0.0)
    return d

"""Quasi-uniform simplicial meshes of the unit ball and their text format."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.spatial import Delaunay

from .errors import MeshError

MESH_HEADER = "#mesh v1"
_GOLDEN = math.pi * (3.0 - math.sqrt(5.0))


@dataclass(frozen=True, eq=False)
class BallMesh:
    """Vertices, positively oriented simplices and boundary flags."""

    dim: int
    vertices: np.ndarray
    simplices: np.ndarray
    boundary: np.ndarray
    size: float

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_simplices(self) -> int:
        return len(self.simplices)

    @cached_property
    def interior(self) -> np.ndarray:
        return np.flatnonzero(~self.boundary)

    @cached_property
    def boundary_nodes(self) -> np.ndarray:
        return np.flatnonzero(self.boundary)

    @cached_property
    def volumes(self) -> np.ndarray:
        return self._geometry[1]

    @cached_property
    def barycentric_gradients(self) -> np.ndarray:
        """(n_simplices, dim+1, dim) gradients of the hat functions."""
        return self._geometry[0]

    @cached_property
    def _geometry(self):
        X = self.vertices[self.simplices]
        E = X[:, 1:, :] - X[:, :1, :]
        det = np.linalg.det(E)
        Gi = np.transpose(np.linalg.inv(E), (0, 2, 1))
        G = np.concatenate([-Gi.sum(axis=1, keepdims=True), Gi], axis=1)
        return G, np.abs(det) / math.factorial(self.dim)

    @cached_property
    def boundary_facets(self) -> np.ndarray:
        """Facets lying on the sphere, as vertex index tuples."""
        d = self.dim
        faces = np.concatenate([np.delete(self.simplices, i, axis=1) for i in range(d + 1)])
        faces = np.sort(faces, axis=1)
        uniq, counts = np.unique(faces, axis=0, return_counts=True)
        return uniq[counts == 1]

    @cached_property
    def sparsity(self):
        """CSR pattern and the scatter map from element entries to it."""
        n = self.n_vertices
        s = self.simplices
        k = s.shape[1]
        rows = np.repeat(s, k, axis=1).ravel()
        cols = np.tile(s, (1, k)).ravel()
        keys = rows.astype(np.int64) * n + cols
        uniq, inverse = np.unique(keys, return_inverse=True)
        r, c = uniq // n, uniq % n
        indptr = np.concatenate([[0], np.cumsum(np.bincount(r, minlength=n))])
        return indptr.astype(np.int64), c.astype(np.int64), inverse.ravel(), len(uniq)


def _ring_radii(size: float) -> np.ndarray:
    n = max(1, int(math.ceil(1.0 / size)))
    return np.arange(1, n + 1) / n


def _disk_points(size: float) -> np.ndarray:
    pts = [np.zeros((1, 2))]
    for k, r in enumerate(_ring_radii(size)):
        n = max(6, int(round(2.0 * math.pi * r / size)))
        t = 2.0 * math.pi * (np.arange(n) + 0.5 * (k % 2)) / n
        pts.append(np.column_stack([r * np.cos(t), r * np.sin(t)]))
    return np.concatenate(pts)


def _fibonacci_sphere(n: int, twist: float = 0.0) -> np.ndarray:
    i = np.arange(n) + 0.5
    z = 1.0 - 2.0 * i / n
    r = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    phi = _GOLDEN * np.arange(n) + twist
    return np.column_stack([r * np.cos(phi), r * np.sin(phi), z])


def _ball_points(size: float) -> np.ndarray:
    pts = [np.zeros((1, 3))]
    cell = math.sqrt(3.0) / 2.0 * size * size
    for k, r in enumerate(_ring_radii(size)):
        n = max(8, int(round(4.0 * math.pi * r * r / cell)))
        pts.append(r * _fibonacci_sphere(n, twist=0.7 * k))
    return np.concatenate(pts)


def build_mesh(dim: int, size: float) -> BallMesh:
    """Concentric-shell Delaunay mesh of the unit ball with target edge length ``size``."""
    if dim not in (2, 3):
        raise ValueError(f"unsupported dimension {dim}")
    if not 0.0 < size < 1.0:
        raise ValueError("mesh size must lie in (0, 1)")
    pts = _disk_points(size) if dim == 2 else _ball_points(size)
    norms = np.linalg.norm(pts, axis=1)
    outer = np.abs(norms - 1.0) < 1e-9
    pts[outer] /= norms[outer, None]
    tri = Delaunay(pts)
    simplices = tri.simplices.astype(np.int64)
    X = pts[simplices]
    det = np.linalg.det(X[:, 1:, :] - X[:, :1, :])
    flip = det < 0
    simplices[flip, :2] = simplices[flip, 1::-1]
    vol = np.abs(det) / math.factorial(dim)
    tiny = vol < 1e-12 * size**dim
    if tiny.any():
        # Delaunay of cospherical points can emit flat simplices; they carry no
        # measure, so dropping them keeps the triangulation conforming only if
        # they are exactly flat, which we require.
        if np.any(vol[tiny] > 1e-15):
            raise MeshError(f"{int(tiny.sum())} near-degenerate simplices")
        simplices = simplices[~tiny]
    return BallMesh(dim, pts, simplices, outer, float(size))


def write_mesh(path: str | Path, mesh: BallMesh) -> None:
    lines = [MESH_HEADER, f"dim {mesh.dim}", f"size {mesh.size!r}", f"vertices {mesh.n_vertices}"]
    lines += [" ".join(repr(float(x)) for x in v) for v in mesh.vertices]
    lines.append(f"simplices {mesh.n_simplices}")
    lines += [" ".join(str(int(i)) for i in s) for s in mesh.simplices]
    lines.append(f"boundary {mesh.n_vertices}")
    lines += ["1" if b else "0" for b in mesh.boundary]
    Path(path).write_text("\n".join(lines) + "\n")


def read_mesh(path: str | Path) -> BallMesh:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0].strip() != MESH_HEADER:
        raise ValueError(f"{path}: missing '{MESH_HEADER}' header")
    pos = 1

    def header(name):
        nonlocal pos
        key, value = lines[pos].split()
        if key != name:
            raise ValueError(f"{path}: expected '{name}' at line {pos + 1}")
        pos += 1
        return value

    dim = int(header("dim"))
    size = float(header("size"))
    nv = int(header("vertices"))
    verts = np.array([[float(x) for x in lines[pos + i].split()] for i in range(nv)])
    pos += nv
    ns = int(header("simplices"))
    simp = np.array([[int(x) for x in lines[pos + i].split()] for i in range(ns)], dtype=np.int64)
    pos += ns
    nb = int(header("boundary"))
    flags = np.array([lines[pos + i].strip() == "1" for i in range(nb)])
    return BallMesh(dim, verts, simp, flags, size)

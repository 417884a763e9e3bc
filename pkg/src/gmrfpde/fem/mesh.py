"""Structured interval and triangle meshes."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ContractError, LocationError


@dataclass(frozen=True)
class Mesh:
    """Tensor-structured simplicial mesh.

    ``grid`` holds the breakpoints along each axis; in 2D every cell
    ``[x_i, x_{i+1}] x [y_j, y_{j+1}]`` is split along its rising diagonal into
    two counter-clockwise triangles.  ``boundary_tags`` maps a side name
    (``left``/``right`` and, in 2D, ``bottom``/``top``) to node indices.
    """

    dim: int
    nodes: np.ndarray
    elements: np.ndarray
    grid: tuple
    boundary_tags: dict = field(default_factory=dict)

    @property
    def n_nodes(self):
        return self.nodes.shape[0]

    @property
    def n_elements(self):
        return self.elements.shape[0]

    @property
    def bounds(self):
        return tuple((g[0], g[-1]) for g in self.grid)

    def node_tags(self, i):
        return {tag for tag, idx in self.boundary_tags.items() if i in set(idx.tolist())}

    def element_measures(self):
        X = self.nodes[self.elements]
        if self.dim == 1:
            return X[:, 1, 0] - X[:, 0, 0]
        e1 = X[:, 1] - X[:, 0]
        e2 = X[:, 2] - X[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    def centroids(self):
        return self.nodes[self.elements].mean(axis=1)

    def locate(self, points, tol=1e-12):
        """Element index and reference coordinates of each point."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if self.dim == 1 and pts.shape[0] == 1 and pts.shape[1] != 1:
            pts = pts.T
        if pts.shape[1] != self.dim:
            raise ContractError(f"points must have {self.dim} coordinates")
        idx = []
        local = []
        for d in range(self.dim):
            g = self.grid[d]
            x = pts[:, d]
            span = g[-1] - g[0]
            if np.any(x < g[0] - tol * span) or np.any(x > g[-1] + tol * span):
                bad = np.flatnonzero((x < g[0] - tol * span) | (x > g[-1] + tol * span))[0]
                raise LocationError(f"point {pts[bad]} lies outside the mesh")
            i = np.clip(np.searchsorted(g, x, side="right") - 1, 0, g.size - 2)
            idx.append(i)
            local.append((x - g[i]) / (g[i + 1] - g[i]))
        if self.dim == 1:
            return idx[0], local[0][:, None]
        nx = self.grid[0].size - 1
        s, t = local
        upper = t > s
        elem = 2 * (idx[1] * nx + idx[0]) + upper.astype(np.int64)
        # lower triangle (v00, v10, v11): xi = s - t, eta = t
        # upper triangle (v00, v11, v01): xi = s, eta = t - s
        xi = np.where(upper, s, s - t)
        eta = np.where(upper, t - s, t)
        return elem, np.column_stack([xi, eta])


def build_interval_mesh_from_nodes(xs):
    xs = np.asarray(xs, dtype=float)
    if xs.ndim != 1 or xs.size < 2 or np.any(np.diff(xs) <= 0):
        raise ContractError("interval breakpoints must be strictly increasing")
    n = xs.size - 1
    elements = np.column_stack([np.arange(n), np.arange(1, n + 1)])
    tags = {"left": np.array([0]), "right": np.array([n])}
    return Mesh(1, xs[:, None], elements, (xs,), tags)


def build_interval_mesh(n_elements, a=0.0, b=1.0):
    """Uniform partition of ``[a, b]`` into ``n_elements`` intervals."""
    if n_elements < 1:
        raise ContractError("n_elements must be at least 1")
    if not a < b:
        raise ContractError("interval requires a < b")
    return build_interval_mesh_from_nodes(np.linspace(a, b, int(n_elements) + 1))


def build_rect_mesh(xs, ys):
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    for g in (xs, ys):
        if g.ndim != 1 or g.size < 2 or np.any(np.diff(g) <= 0):
            raise ContractError("grid breakpoints must be strictly increasing")
    nx, ny = xs.size - 1, ys.size - 1
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    nodes = np.column_stack([X.ravel(), Y.ravel()])
    vid = np.arange((nx + 1) * (ny + 1)).reshape(ny + 1, nx + 1)
    v00 = vid[:-1, :-1].ravel()
    v10 = vid[:-1, 1:].ravel()
    v01 = vid[1:, :-1].ravel()
    v11 = vid[1:, 1:].ravel()
    lower = np.column_stack([v00, v10, v11])
    upper = np.column_stack([v00, v11, v01])
    elements = np.empty((2 * nx * ny, 3), dtype=np.int64)
    elements[0::2] = lower
    elements[1::2] = upper
    tags = {
        "left": vid[:, 0].copy(),
        "right": vid[:, -1].copy(),
        "bottom": vid[0, :].copy(),
        "top": vid[-1, :].copy(),
    }
    return Mesh(2, nodes, elements, (xs, ys), tags)


def build_unit_square_mesh(n_per_dim):
    if n_per_dim < 1:
        raise ContractError("n_per_dim must be at least 1")
    g = np.linspace(0.0, 1.0, int(n_per_dim) + 1)
    return build_rect_mesh(g, g)


def write_mesh(path, mesh):
    """Plain-text export: node count, coordinates, element count, connectivity."""
    with open(path, "w") as fh:
        fh.write(f"# dim {mesh.dim}\n")
        fh.write(f"nodes {mesh.n_nodes}\n")
        for x in mesh.nodes:
            fh.write(" ".join(f"{v:.17g}" for v in x) + "\n")
        fh.write(f"elements {mesh.n_elements}\n")
        for e in mesh.elements:
            fh.write(" ".join(str(int(v)) for v in e) + "\n")


def read_coefficient_grid(path):
    """Row-major grid file: header ``nx ny`` then ``nx * ny`` values."""
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise ContractError("coefficient grid header must be 'nx ny'")
        nx, ny = int(header[0]), int(header[1])
        vals = np.array(fh.read().split(), dtype=float)
    if vals.size != nx * ny:
        raise ContractError(f"expected {nx * ny} coefficient values, found {vals.size}")
    return vals.reshape(ny, nx)


def write_coefficient_grid(path, values):
    values = np.asarray(values, dtype=float)
    ny, nx = values.shape
    with open(path, "w") as fh:
        fh.write(f"{nx} {ny}\n")
        for row in values:
            fh.write(" ".join(f"{v:.17g}" for v in row) + "\n")


def sample_cell_field(mesh, values, bounds=((0.0, 1.0), (0.0, 1.0))):
    """Per-element coefficient: the grid cell containing each element centroid."""
    values = np.asarray(values, dtype=float)
    ny, nx = values.shape
    c = mesh.centroids()
    (x0, x1), (y0, y1) = bounds
    ix = np.clip(((c[:, 0] - x0) / (x1 - x0) * nx).astype(int), 0, nx - 1)
    iy = np.clip(((c[:, 1] - y0) / (y1 - y0) * ny).astype(int), 0, ny - 1)
    return values[iy, ix]

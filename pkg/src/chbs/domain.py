"""Discrete geometry and operator assembly on the unit square.

The bulk is triangulated with a structured right-angled mesh (two triangles
per grid cell) carrying P1 elements; the boundary is the closed chain of
boundary nodes carrying 1D P1 elements.  Assembly produces the bulk and
surface stiffness matrices and lumped mass vectors realizing the coupled
weak form

    a(u, z) = int_bulk grad(u).grad(z) + int_bnd grad_t(u).grad_t(z),

so no normal derivative is ever assembled; every strong-form statement is
evaluated through the weak identities.  Mass lumping makes the combined
inner product diagonal, nodewise nonlinearities variationally consistent,
and mass conservation exact at the algebraic level.

Construction also caches two sparse LU factorizations used throughout:
the mean-constrained saddle system for inverting the coupled stiffness on
zero-mean fields, and the full coupled V-norm matrix for dual norms.  A
:class:`DiscreteDomain` is immutable after construction and shareable
across threads.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import ConfigError


@dataclass(frozen=True, eq=False)
class DiscreteDomain:
    """Triangulated unit square with assembled coupled operators.

    Attributes
    ----------
    n : int
        Nodes per side; the mesh width is h = 1/(n-1).
    coords : (n_bulk, 2) ndarray
        Node coordinates, node index = row*n + column.
    triangles : (n_tri, 3) ndarray
        Connectivity of the bulk triangulation.
    boundary_chain : (n_boundary,) ndarray
        Global bulk indices of the boundary nodes, ordered cyclically
        counterclockwise from the origin; doubles as the trace map.
    K_bulk, K_surf : csr_matrix
        Bulk stiffness and surface (closed-chain) stiffness.
    M_bulk, M_surf : ndarray
        Lumped mass diagonals; they sum to the bulk volume 1 and the
        boundary length 4.
    combined_mass : ndarray
        M_bulk with the boundary masses added at boundary nodes; the lumped
        weight of the combined inner product in bulk coordinates.
    coupled_stiffness : csr_matrix
        K_bulk plus the surface stiffness scattered through the trace map.
    """

    n: int
    coords: np.ndarray
    triangles: np.ndarray
    boundary_chain: np.ndarray
    K_bulk: sp.csr_matrix
    K_surf: sp.csr_matrix
    M_bulk: np.ndarray
    M_surf: np.ndarray
    combined_mass: np.ndarray
    coupled_stiffness: sp.csr_matrix
    saddle_lu: object
    vnorm_lu: object

    @property
    def n_bulk(self):
        return self.coords.shape[0]

    @property
    def n_boundary(self):
        return self.boundary_chain.shape[0]

    @property
    def trace_map(self):
        """Chain position -> global bulk node index."""
        return self.boundary_chain

    @property
    def volume(self):
        return float(self.M_bulk.sum())

    @property
    def surface(self):
        return float(self.M_surf.sum())

    @property
    def total_measure(self):
        return self.volume + self.surface

    def trace(self, bulk_values):
        """Restrict a bulk nodal field to the boundary chain."""
        return np.asarray(bulk_values)[self.boundary_chain]

    def scatter(self, boundary_values):
        """Extend a boundary-chain field by zero to a bulk-sized vector."""
        out = np.zeros(self.n_bulk, dtype=float)
        out[self.boundary_chain] = boundary_values
        return out


def _boundary_chain(n):
    """Cyclic boundary node ordering: bottom, right, top, left."""
    bottom = np.arange(n)
    right = np.arange(1, n) * n + (n - 1)
    top = (n - 1) * n + np.arange(n - 2, -1, -1)
    left = np.arange(n - 2, 0, -1) * n
    return np.concatenate([bottom, right, top, left])


def build_unit_square(n):
    """Assemble the discrete domain on an n-by-n grid of the unit square.

    Parameters
    ----------
    n : int
        Nodes per side, at least 3.

    Returns
    -------
    DiscreteDomain
    """
    n = int(n)
    if n < 3:
        raise ConfigError(f"mesh resolution n must be at least 3, got {n}")
    side = np.linspace(0.0, 1.0, n)
    xx, yy = np.meshgrid(side, side)
    coords = np.column_stack([xx.ravel(), yy.ravel()])
    nb = n * n

    # two triangles per cell, diagonal from lower-left to upper-right
    i, j = np.meshgrid(np.arange(n - 1), np.arange(n - 1), indexing="ij")
    a = (j * n + i).ravel()
    b = a + 1
    c = a + n + 1
    d = a + n
    triangles = np.vstack([np.column_stack([a, b, c]),
                           np.column_stack([a, c, d])]).astype(np.int64)

    p = coords[triangles]
    x, y = p[:, :, 0], p[:, :, 1]
    bb = np.stack([y[:, 1] - y[:, 2], y[:, 2] - y[:, 0], y[:, 0] - y[:, 1]], axis=1)
    cc = np.stack([x[:, 2] - x[:, 1], x[:, 0] - x[:, 2], x[:, 1] - x[:, 0]], axis=1)
    area2 = (x[:, 1] - x[:, 0]) * (y[:, 2] - y[:, 0]) - (x[:, 2] - x[:, 0]) * (y[:, 1] - y[:, 0])
    ke = (bb[:, :, None] * bb[:, None, :] + cc[:, :, None] * cc[:, None, :]) / (2.0 * area2)[:, None, None]
    rows = np.repeat(triangles, 3, axis=1).ravel()
    cols = np.tile(triangles, (1, 3)).ravel()
    K_bulk = sp.coo_matrix((ke.ravel(), (rows, cols)), shape=(nb, nb)).tocsr()

    M_bulk = np.zeros(nb)
    np.add.at(M_bulk, triangles.ravel(), np.repeat(area2 / 6.0, 3))

    chain = _boundary_chain(n)
    ng = chain.size
    nxt = np.roll(np.arange(ng), -1)
    seg = coords[chain[nxt]] - coords[chain]
    lengths = np.hypot(seg[:, 0], seg[:, 1])
    vals = 1.0 / lengths
    rows_s = np.concatenate([np.arange(ng), np.arange(ng), nxt, nxt])
    cols_s = np.concatenate([np.arange(ng), nxt, np.arange(ng), nxt])
    data_s = np.concatenate([vals, -vals, -vals, vals])
    K_surf = sp.coo_matrix((data_s, (rows_s, cols_s)), shape=(ng, ng)).tocsr()

    M_surf = np.zeros(ng)
    np.add.at(M_surf, np.arange(ng), lengths / 2.0)
    np.add.at(M_surf, nxt, lengths / 2.0)

    S = sp.coo_matrix((np.ones(ng), (np.arange(ng), chain)), shape=(ng, nb)).tocsr()
    A = (K_bulk + S.T @ K_surf @ S).tocsr()
    gc = M_bulk.copy()
    gc[chain] += M_surf

    gcol = sp.coo_matrix((gc, (np.arange(nb), np.zeros(nb, dtype=int))), shape=(nb, 1))
    saddle = sp.bmat([[A, gcol], [gcol.T, None]], format="csc")
    saddle_lu = splu(saddle)
    vnorm_lu = splu((sp.diags(gc) + A).tocsc())

    return DiscreteDomain(n=n, coords=coords, triangles=triangles,
                          boundary_chain=chain, K_bulk=K_bulk, K_surf=K_surf,
                          M_bulk=M_bulk, M_surf=M_surf, combined_mass=gc,
                          coupled_stiffness=A, saddle_lu=saddle_lu,
                          vnorm_lu=vnorm_lu)


def integrate_bulk(dom, field):
    """Lumped quadrature of a bulk nodal field over the square."""
    field = np.asarray(field, dtype=float)
    if field.shape != (dom.n_bulk,):
        raise ValueError(f"bulk field has shape {field.shape}, expected ({dom.n_bulk},)")
    return float(dom.M_bulk @ field)


def integrate_surf(dom, trace_field):
    """Lumped quadrature of a boundary-chain field over the boundary."""
    trace_field = np.asarray(trace_field, dtype=float)
    if trace_field.shape != (dom.n_boundary,):
        raise ValueError(f"boundary field has shape {trace_field.shape}, expected ({dom.n_boundary},)")
    return float(dom.M_surf @ trace_field)


def dump_mesh(dom, path):
    """Write a plain-text node and element listing."""
    lines = [f"# unit square mesh, n = {dom.n}",
             f"# nodes {dom.n_bulk}"]
    for k, (x, y) in enumerate(dom.coords):
        lines.append(f"node {k} {float(x)!r} {float(y)!r}")
    lines.append(f"# triangles {dom.triangles.shape[0]}")
    for k, (a, b, c) in enumerate(dom.triangles):
        lines.append(f"tri {k} {a} {b} {c}")
    lines.append(f"# boundary chain {dom.n_boundary}")
    lines.append("chain " + " ".join(str(v) for v in dom.boundary_chain))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def write_field_csv(dom, values, path):
    """Export a bulk nodal field as CSV rows (node, x, y, value)."""
    values = np.asarray(values, dtype=float)
    if values.shape != (dom.n_bulk,):
        raise ValueError(f"field has shape {values.shape}, expected ({dom.n_bulk},)")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["node", "x", "y", "value"])
        for k in range(dom.n_bulk):
            writer.writerow([k, repr(float(dom.coords[k, 0])),
                             repr(float(dom.coords[k, 1])), repr(float(values[k]))])

"""Kuhn triangulations of boxes, P1 fields, element quadrature and norms."""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field as dc_field
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .fields import CoefficientField, sample_field
from .integrands import Integrand
from . import kernels

__all__ = ["Mesh", "DiscreteField", "element_coefficients", "energy", "norm", "load_vector"]


class Mesh:
    """Uniform simplicial mesh of ``origin + [0, L_1] x ... x [0, L_d]``.

    Every grid cube is split into ``d!`` simplices along the monotone lattice
    paths from its lower to its upper corner. Nodes are numbered with the
    first axis running fastest.
    """

    def __init__(self, origin, lengths, n: int):
        origin = np.asarray(origin, dtype=float).reshape(-1)
        lengths = np.asarray(lengths, dtype=float).reshape(-1)
        if origin.shape != lengths.shape:
            raise ValueError("origin and lengths must have the same dimension")
        d = origin.size
        if d not in (2, 3):
            raise ValueError("only d = 2 and d = 3 are supported")
        if n < 1 or np.any(lengths <= 0):
            raise ValueError("need n >= 1 and positive side lengths")
        self.origin = origin
        self.lengths = lengths
        self.n = int(n)
        self.d = d
        self.h = lengths / n

    @classmethod
    def cube(cls, t: float, n: int, d: int = 2, origin=None) -> "Mesh":
        origin = np.zeros(d) if origin is None else origin
        return cls(origin, np.full(d, float(t)), n)

    def __repr__(self):
        return f"Mesh(origin={self.origin.tolist()}, lengths={self.lengths.tolist()}, n={self.n})"

    def metadata(self) -> dict:
        return {"origin": self.origin.tolist(), "lengths": self.lengths.tolist(), "n": self.n, "d": self.d}

    # -- topology ---------------------------------------------------------

    @property
    def n_nodes(self) -> int:
        return (self.n + 1) ** self.d

    @property
    def n_elements(self) -> int:
        return math.factorial(self.d) * self.n**self.d

    @cached_property
    def node_index(self) -> np.ndarray:
        """Integer grid coordinates of every node, ``(n_nodes, d)``."""
        grids = np.meshgrid(*[np.arange(self.n + 1)] * self.d, indexing="ij")
        return np.stack([g.ravel(order="F") for g in grids], axis=1)

    @cached_property
    def nodes(self) -> np.ndarray:
        return self.origin + self.node_index * self.h

    @cached_property
    def boundary_mask(self) -> np.ndarray:
        idx = self.node_index
        return np.any((idx == 0) | (idx == self.n), axis=1)

    @cached_property
    def perms(self) -> np.ndarray:
        return np.array(list(itertools.permutations(range(self.d))), dtype=np.int64)

    def _flat(self, idx: np.ndarray) -> np.ndarray:
        strides = (self.n + 1) ** np.arange(self.d)
        return idx @ strides

    @cached_property
    def _topology(self):
        n, d = self.n, self.d
        grids = np.meshgrid(*[np.arange(n)] * d, indexing="ij")
        corners = np.stack([g.ravel(order="F") for g in grids], axis=1)
        nperm = len(self.perms)
        conn = np.empty((corners.shape[0], nperm, d + 1), dtype=np.int64)
        for k, perm in enumerate(self.perms):
            v = corners.copy()
            conn[:, k, 0] = self._flat(v)
            for j, axis in enumerate(perm):
                v[:, axis] += 1
                conn[:, k, j + 1] = self._flat(v)
        etype = np.tile(np.arange(nperm, dtype=np.int64), corners.shape[0])
        return conn.reshape(-1, d + 1), etype

    @property
    def conn(self) -> np.ndarray:
        """Element-to-node connectivity ``(n_elements, d + 1)``."""
        return self._topology[0]

    @property
    def etype(self) -> np.ndarray:
        """Index into :attr:`perms` / :attr:`gref` for each element."""
        return self._topology[1]

    @cached_property
    def gref(self) -> np.ndarray:
        """Barycentric gradients per element type, ``(d!, d + 1, d)``.

        Along a lattice path the partial derivative in the direction of step
        ``j`` is the difference of consecutive vertex values over ``h``.
        """
        d = self.d
        G = np.zeros((len(self.perms), d + 1, d))
        for k, perm in enumerate(self.perms):
            for j, axis in enumerate(perm):
                G[k, j + 1, axis] += 1.0 / self.h[axis]
                G[k, j, axis] -= 1.0 / self.h[axis]
        return G

    @property
    def vol(self) -> float:
        """Volume of every simplex."""
        return float(np.prod(self.h) / math.factorial(self.d))

    @cached_property
    def barycenters(self) -> np.ndarray:
        return self.nodes[self.conn].mean(axis=1)

    @property
    def volume(self) -> float:
        return float(np.prod(self.lengths))

    # -- periodic identification -------------------------------------------

    @cached_property
    def periodic_nodes(self) -> np.ndarray:
        """Map every node to its representative on the torus (``n^d`` classes)."""
        idx = np.mod(self.node_index, self.n)
        strides = self.n ** np.arange(self.d)
        return idx @ strides

    # -- element operations ----------------------------------------------

    def element_gradients(self, values: np.ndarray) -> np.ndarray:
        """Constant gradient of the P1 interpolant on every element, ``(n_el, m, d)``."""
        values = np.asarray(values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        return kernels.element_gradients(self.conn, self.etype, self.gref, values)

    @cached_property
    def path_edges(self):
        """Lattice-path edges ``(n_el, d, 2)`` and their axes ``(n_el, d)``.

        On a Kuhn simplex the derivative along axis ``perm[j]`` is the
        difference across edge ``j`` divided by ``h``, so any energy
        ``sum_j w_j (d_j u)^2`` is a weighted graph Laplacian on these edges.
        """
        conn = self.conn
        edges = np.stack([conn[:, :-1], conn[:, 1:]], axis=2)
        return edges, self.perms[self.etype]

    def edge_laplacian(self, weights: np.ndarray) -> sp.csr_matrix:
        """Sparse ``K`` with ``u^T K u = sum_e vol sum_k weights[e, k] (d_k u_e)^2``.

        ``weights`` has shape ``(n_el, d)``; ``d_k`` is the partial derivative
        along axis ``k`` on element ``e``.
        """
        weights = np.asarray(weights, dtype=float)
        edges, axes = self.path_edges
        w = self.vol * np.take_along_axis(weights, axes, axis=1) / self.h[axes] ** 2
        i = edges[:, :, 0].ravel()
        j = edges[:, :, 1].ravel()
        w = w.ravel()
        nn = self.n_nodes
        off = sp.coo_matrix((-w, (i, j)), shape=(nn, nn))
        diag = np.bincount(i, weights=w, minlength=nn) + np.bincount(j, weights=w, minlength=nn)
        K = off + off.T + sp.diags(diag)
        return K.tocsr()

    def barycenter_values(self, values: np.ndarray) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        return values[self.conn].mean(axis=1)

    def interpolate(self, func, m: int | None = None) -> np.ndarray:
        """Nodal values ``(n_nodes, m)`` of a callable ``func(points) -> (N,) or (N, m)``."""
        vals = np.asarray(func(self.nodes), dtype=float)
        if vals.ndim == 1:
            vals = vals[:, None]
        if m is not None and vals.shape[1] != m:
            raise ValueError(f"expected {m} components, got {vals.shape[1]}")
        return vals


@dataclass
class DiscreteField:
    """Nodal P1 field on a :class:`Mesh` (node-major ``(n_nodes, m)`` storage)."""

    mesh: Mesh
    values: np.ndarray
    boundary_mask: np.ndarray | None = dc_field(default=None)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if v.shape[0] != self.mesh.n_nodes:
            raise ValueError("dofs length must be m * (n + 1)^d")
        self.values = v
        if self.boundary_mask is None:
            self.boundary_mask = self.mesh.boundary_mask

    @classmethod
    def interpolate(cls, mesh: Mesh, func, m: int | None = None) -> "DiscreteField":
        return cls(mesh, mesh.interpolate(func, m))

    @property
    def m(self) -> int:
        return self.values.shape[1]

    @property
    def dofs(self) -> np.ndarray:
        return self.values.reshape(-1)

    def _check_same(self, other: "DiscreteField"):
        if other.mesh is not self.mesh and other.mesh.metadata() != self.mesh.metadata():
            raise ValueError("fields live on different meshes")
        if other.m != self.m:
            raise ValueError("fields have different component counts")

    def __sub__(self, other: "DiscreteField") -> "DiscreteField":
        self._check_same(other)
        return DiscreteField(self.mesh, self.values - other.values)

    def __add__(self, other: "DiscreteField") -> "DiscreteField":
        self._check_same(other)
        return DiscreteField(self.mesh, self.values + other.values)

    def gradients(self) -> np.ndarray:
        return self.mesh.element_gradients(self.values)

    def gradient_on_element(self, e: int) -> np.ndarray:
        if not 0 <= e < self.mesh.n_elements:
            raise IndexError(f"element {e} out of range")
        G = self.mesh.gref[self.mesh.etype[e]]
        return self.values[self.mesh.conn[e]].T @ G

    # -- export -------------------------------------------------------------

    def save(self, stem, fmt: str = "binary") -> list[Path]:
        """Write nodal values plus a JSON sidecar with the mesh metadata.

        ``binary`` writes little-endian float64 in node-major order to
        ``<stem>.f64``; ``csv`` writes one node per row with coordinates.
        """
        stem = Path(stem)
        meta = {
            "format": fmt,
            "dtype": "float64-le",
            "layout": "node-major",
            "m": self.m,
            "n_nodes": self.mesh.n_nodes,
            "mesh": self.mesh.metadata(),
            "node_numbering": "first axis fastest",
        }
        if fmt == "binary":
            data_path = stem.with_suffix(".f64")
            data_path.write_bytes(np.ascontiguousarray(self.values, dtype="<f8").tobytes())
        elif fmt == "csv":
            data_path = stem.with_suffix(".csv")
            cols = [f"x{k}" for k in range(self.mesh.d)] + [f"u{c}" for c in range(self.m)]
            rows = np.hstack([self.mesh.nodes, self.values])
            with open(data_path, "w", newline="") as fh:
                fh.write(",".join(cols) + "\n")
                for row in rows:
                    fh.write(",".join(repr(float(x)) for x in row) + "\n")
        else:
            raise ValueError("fmt must be 'binary' or 'csv'")
        meta["data"] = data_path.name
        side = stem.with_suffix(".json")
        side.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
        return [data_path, side]

    @classmethod
    def load(cls, sidecar) -> "DiscreteField":
        sidecar = Path(sidecar)
        meta = json.loads(sidecar.read_text())
        mm = meta["mesh"]
        mesh = Mesh(mm["origin"], mm["lengths"], mm["n"])
        data_path = sidecar.parent / meta["data"]
        if meta["format"] == "binary":
            vals = np.frombuffer(data_path.read_bytes(), dtype="<f8").reshape(meta["n_nodes"], meta["m"])
        else:
            arr = np.loadtxt(data_path, delimiter=",", skiprows=1, ndmin=2)
            vals = arr[:, mesh.d:]
        return cls(mesh, vals.copy())


def element_coefficients(mesh: Mesh, field: CoefficientField, seed: int, eps: float = 1.0):
    """Diagonal weights ``(n_el, d)`` and ``Lambda`` ``(n_el,)`` sampled at barycenters / eps."""
    if not eps > 0:
        raise ValueError("eps must be > 0")
    if field.d != mesh.d:
        raise ValueError("field and mesh dimensions differ")
    return sample_field(field, seed, mesh.barycenters / eps)


def energy(u: DiscreteField, f: Integrand, field: CoefficientField, seed: int, eps: float = 1.0) -> float:
    """Barycenter-sampled ``int_D f(omega, x / eps, grad u) dx``."""
    if not np.all(np.isfinite(u.values)):
        raise ValueError("non-finite dofs")
    A, Lam = element_coefficients(u.mesh, field, seed, eps)
    dens, _ = f.density(A, Lam, u.gradients())
    return float(u.mesh.vol * dens.sum())


def norm(u: DiscreteField, which: str = "L1", p: float | None = None) -> float:
    """Composite-midpoint quadrature of ``L1``, ``Lp``, ``Ld/(d-1)`` or ``W11`` norms."""
    mesh = u.mesh
    vals = np.sqrt(np.sum(mesh.barycenter_values(u.values) ** 2, axis=1))
    if which == "L1":
        return float(mesh.vol * vals.sum())
    if which in ("Lp", "L_d_over_d_minus_1"):
        q = p if which == "Lp" else mesh.d / (mesh.d - 1)
        if q is None or q < 1:
            raise ValueError("Lp needs p >= 1")
        return float((mesh.vol * np.sum(vals**q)) ** (1.0 / q))
    if which == "W11":
        g = u.gradients()
        gn = np.sqrt(np.einsum("nij,nij->n", g, g))
        return float(mesh.vol * (vals.sum() + gn.sum()))
    raise ValueError(f"unknown norm {which!r}")


def load_vector(mesh: Mesh, force: np.ndarray) -> np.ndarray:
    """Consistent-mass load ``int f_h phi_i`` for a nodal force density ``(n_nodes, m)``."""
    force = np.asarray(force, dtype=float)
    if force.ndim == 1:
        force = force[:, None]
    d = mesh.d
    w = mesh.vol / ((d + 1) * (d + 2))
    fe = force[mesh.conn]  # (n_el, d+1, m)
    contrib = w * (fe + fe.sum(axis=1, keepdims=True))
    out = np.zeros_like(force)
    for c in range(force.shape[1]):
        out[:, c] = np.bincount(mesh.conn.ravel(), weights=contrib[:, :, c].ravel(), minlength=mesh.n_nodes)
    return out

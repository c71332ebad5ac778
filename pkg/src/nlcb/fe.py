"""Planar von Karman beam kernel.

Two-node element with linear axial and cubic Hermite transverse
interpolation. Each node carries ``(u, w, theta)`` where ``u`` is the
axial displacement, ``w`` the transverse (z) displacement and
``theta = -dw/dx`` the rotation about the y axis. Initial elevation of
shallow arches enters through the ``w0' w'`` coupling term of the
membrane strain, with ``w0`` interpolated linearly between nodes.

Strain energy per element::

    U = 1/2 int EA (u' + w0' w' + 1/2 w'^2)^2 + EI (w'')^2 dx

All quadrature uses five Gauss points, which integrates every term of
the cubic internal force exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

DOFS_PER_NODE = 3
AXIAL, TRANSVERSE, ROTATION = 0, 1, 2

_GAUSS_X, _GAUSS_W = np.polynomial.legendre.leggauss(5)
# map from [-1, 1] to [0, 1]
_XI = 0.5 * (_GAUSS_X + 1.0)
_WXI = 0.5 * _GAUSS_W


@dataclass(frozen=True)
class Material:
    E: float
    rho: float
    nu: float = 0.3

    def __post_init__(self):
        if not (self.E > 0 and self.rho > 0):
            raise ValueError("Young's modulus and density must be positive")
        if not 0.0 <= self.nu < 0.5:
            raise ValueError(f"Poisson ratio {self.nu} outside [0, 0.5)")


@dataclass(frozen=True)
class Section:
    width: float
    thickness: float

    def __post_init__(self):
        if not (self.width > 0 and self.thickness > 0):
            raise ValueError("section width and thickness must be positive")

    @property
    def area(self) -> float:
        return self.width * self.thickness

    @property
    def inertia(self) -> float:
        return self.width * self.thickness**3 / 12.0


@dataclass(frozen=True)
class ElementTensors:
    """Dense operators of one element in ``(u1, w1, t1, u2, w2, t2)`` order.

    The element force is ``Ke d + K2e:(d d) + K3e:(d d d)``.
    """

    Ke: np.ndarray
    Me: np.ndarray
    K2e: np.ndarray
    K3e: np.ndarray

    def force(self, d):
        return (
            self.Ke @ d
            + np.einsum("ijk,j,k->i", self.K2e, d, d)
            + np.einsum("ijkl,j,k,l->i", self.K3e, d, d, d)
        )


def _shape_derivatives(length, slope):
    """Interpolation rows at the Gauss points of a batch of elements.

    Returns ``(a, g, b, nw, nu, wq)`` of shapes ``(E, G, 6)`` except the
    quadrature weights ``wq`` of shape ``(E, G)``. ``a`` is the linear
    membrane strain row (``u' + w0' w'``), ``g`` the slope row ``w'``,
    ``b`` the curvature row ``w''``, ``nw``/``nu`` the transverse and
    axial value rows.
    """
    L = np.asarray(length, dtype=float)[:, None]
    s = _XI[None, :]
    n_el, n_gp = L.shape[0], s.shape[1]
    shape = (n_el, n_gp, 6)
    a = np.zeros(shape)
    g = np.zeros(shape)
    b = np.zeros(shape)
    nw = np.zeros(shape)
    nu = np.zeros(shape)

    nu[..., 0] = 1.0 - s
    nu[..., 3] = s
    # Hermite functions; rotation columns carry theta = -w'
    nw[..., 1] = 1 - 3 * s**2 + 2 * s**3
    nw[..., 2] = -L * (s - 2 * s**2 + s**3)
    nw[..., 4] = 3 * s**2 - 2 * s**3
    nw[..., 5] = -L * (-(s**2) + s**3)

    g[..., 1] = (-6 * s + 6 * s**2) / L
    g[..., 2] = -(1 - 4 * s + 3 * s**2)
    g[..., 4] = (6 * s - 6 * s**2) / L
    g[..., 5] = -(-2 * s + 3 * s**2)

    b[..., 1] = (-6 + 12 * s) / L**2
    b[..., 2] = -(-4 + 6 * s) / L
    b[..., 4] = (6 - 12 * s) / L**2
    b[..., 5] = -(-2 + 6 * s) / L

    a[..., 0] = -1.0 / L
    a[..., 3] = 1.0 / L
    a += np.asarray(slope, dtype=float)[:, None, None] * g

    wq = _WXI[None, :] * L
    return a, g, b, nw, nu, wq


class BeamKernel:
    """Vectorized force, tangent and tensor evaluation over an element set.

    Parameters
    ----------
    coords : (E, 2, 2) array
        Node coordinates ``(x, z)`` of each element.
    dofs : (E, 6) int array
        Target DoF index of every element DoF, ``-1`` where constrained.
    n : int
        Size of the target DoF vector.
    section, material :
        Cross-section and material shared by all elements.
    """

    def __init__(self, coords, dofs, n, section, material):
        coords = np.asarray(coords, dtype=float)
        if not np.all(np.isfinite(coords)):
            raise ValueError("non-finite element geometry")
        dx = coords[:, 1, 0] - coords[:, 0, 0]
        dz = coords[:, 1, 1] - coords[:, 0, 1]
        if np.any(dx <= 0.0):
            bad = int(np.flatnonzero(dx <= 0.0)[0])
            raise ValueError(
                f"element {bad} has non-positive projected length {dx[bad]:g}; "
                "shallow-beam elements must run in +x"
            )
        self.length = dx
        self.slope = dz / dx
        self.dofs = np.asarray(dofs, dtype=np.int64)
        self.n = int(n)
        self.EA = material.E * section.area
        self.EI = material.E * section.inertia
        self.rhoA = material.rho * section.area
        self.a, self.g, self.b, self.nw, self.nu, self.wq = _shape_derivatives(
            self.length, self.slope
        )
        mask = self.dofs >= 0
        self._mask = mask
        rows = np.broadcast_to(self.dofs[:, :, None], (len(dx), 6, 6))
        cols = np.broadcast_to(self.dofs[:, None, :], (len(dx), 6, 6))
        self._pair_mask = (rows >= 0) & (cols >= 0)
        self._rows = rows[self._pair_mask]
        self._cols = cols[self._pair_mask]

    @property
    def n_elements(self):
        return len(self.length)

    def gather(self, d):
        """Element DoF values ``(E, 6)``; constrained entries are zero."""
        d = np.asarray(d, dtype=float)
        if d.shape != (self.n,):
            raise ValueError(f"expected vector of size {self.n}, got {d.shape}")
        de = np.zeros(self.dofs.shape)
        de[self._mask] = d[self.dofs[self._mask]]
        return de

    def scatter(self, fe):
        out = np.zeros(self.n)
        np.add.at(out, self.dofs[self._mask], fe[self._mask])
        return out

    def assemble(self, ke):
        """Sparse CSR assembly of a stack of ``(E, 6, 6)`` element matrices."""
        vals = ke[self._pair_mask]
        return sp.csr_matrix((vals, (self._rows, self._cols)), shape=(self.n, self.n))

    # linear operators

    @cached_property
    def element_stiffness(self):
        return np.einsum(
            "eg,egi,egj->eij", self.wq * self.EA, self.a, self.a
        ) + np.einsum("eg,egi,egj->eij", self.wq * self.EI, self.b, self.b)

    @cached_property
    def element_mass(self):
        return np.einsum(
            "eg,egi,egj->eij", self.wq * self.rhoA, self.nu, self.nu
        ) + np.einsum("eg,egi,egj->eij", self.wq * self.rhoA, self.nw, self.nw)

    def stiffness(self):
        return self.assemble(self.element_stiffness)

    def mass(self):
        return self.assemble(self.element_mass)

    # nonlinear evaluation by quadrature

    def _strains(self, d):
        de = self.gather(d)
        ad = np.einsum("egi,ei->eg", self.a, de)
        gd = np.einsum("egi,ei->eg", self.g, de)
        bd = np.einsum("egi,ei->eg", self.b, de)
        return ad, gd, bd

    def force(self, d):
        """Full elastic force ``K d + f(d)``."""
        ad, gd, bd = self._strains(d)
        normal = self.EA * (ad + 0.5 * gd**2)
        fe = np.einsum("eg,egi->ei", self.wq * normal, self.a + gd[..., None] * self.g)
        fe += np.einsum("eg,egi->ei", self.wq * self.EI * bd, self.b)
        return self.scatter(fe)

    def element_tangent(self, d):
        ad, gd, _ = self._strains(d)
        normal = self.EA * (ad + 0.5 * gd**2)
        h = self.a + gd[..., None] * self.g
        return (
            np.einsum("eg,egi,egj->eij", self.wq * self.EA, h, h)
            + np.einsum("eg,egi,egj->eij", self.wq * normal, self.g, self.g)
            + np.einsum("eg,egi,egj->eij", self.wq * self.EI, self.b, self.b)
        )

    def tangent(self, d):
        """Tangent stiffness ``d(force)/dd`` as a sparse matrix."""
        return self.assemble(self.element_tangent(d))

    def strain_energy(self, d):
        ad, gd, bd = self._strains(d)
        eps = ad + 0.5 * gd**2
        return 0.5 * float(np.sum(self.wq * (self.EA * eps**2 + self.EI * bd**2)))

    def stiffness_derivative(self, v, w):
        """Directional tangent-stiffness derivative ``d/de K_t(e v)|_0 . w``.

        Equals ``K2:(v w + w v)`` for the symmetric quadratic tensor.
        """
        ev, ew = self.gather(v), self.gather(w)
        av = np.einsum("egi,ei->eg", self.a, ev)
        gv = np.einsum("egi,ei->eg", self.g, ev)
        aw = np.einsum("egi,ei->eg", self.a, ew)
        gw = np.einsum("egi,ei->eg", self.g, ew)
        coef = self.wq * self.EA
        fe = np.einsum("eg,egi->ei", coef * (gv * aw + av * gw), self.g)
        fe += np.einsum("eg,egi->ei", coef * gv * gw, self.a)
        return self.scatter(fe)

    # exact element tensors

    @cached_property
    def element_quadratic(self):
        """Symmetric ``(E, 6, 6, 6)`` quadratic tensors."""
        c = 0.5 * self.wq * self.EA
        t = np.einsum("eg,egi,egj,egk->eijk", c, self.a, self.g, self.g)
        return t + t.transpose(0, 2, 1, 3) + t.transpose(0, 2, 3, 1)

    @cached_property
    def element_cubic(self):
        """Symmetric ``(E, 6, 6, 6, 6)`` cubic tensors."""
        c = 0.5 * self.wq * self.EA
        return np.einsum("eg,egi,egj,egk,egl->eijkl", c, self.g, self.g, self.g, self.g)

    def element_tensors(self, e) -> ElementTensors:
        return ElementTensors(
            Ke=self.element_stiffness[e],
            Me=self.element_mass[e],
            K2e=self.element_quadratic[e],
            K3e=self.element_cubic[e],
        )

    def line_load(self, q):
        """Consistent nodal vector of a uniform transverse line load ``q``."""
        fe = np.einsum("eg,egi->ei", self.wq * q, self.nw)
        return self.scatter(fe)


def element_operators(coords, section, material) -> ElementTensors:
    """Exact tensors of a single element with node coordinates ``coords``."""
    coords = np.asarray(coords, dtype=float).reshape(1, 2, 2)
    kernel = BeamKernel(coords, np.arange(6)[None, :], 6, section, material)
    return kernel.element_tensors(0)


@dataclass(frozen=True, eq=False)
class Model:
    """Beam FE model.

    ``fixed_dofs`` index the full DoF vector ``3 * node + local``. All
    assembled operators act on the free DoFs only, in increasing full
    index order.
    """

    nodes: np.ndarray
    elements: np.ndarray
    section: Section
    material: Material
    fixed_dofs: tuple = ()
    rayleigh: tuple = (0.0, 0.0)
    name: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        elements = np.asarray(self.elements, dtype=np.int64)
        if nodes.ndim != 2 or nodes.shape[1] != 2:
            raise ValueError("nodes must be an (N, 2) array of (x, z)")
        if elements.ndim != 2 or elements.shape[1] != 2:
            raise ValueError("elements must be an (E, 2) connectivity array")
        if elements.size and (elements.min() < 0 or elements.max() >= len(nodes)):
            raise ValueError("element references a missing node")
        if np.any(elements[:, 0] == elements[:, 1]):
            raise ValueError("element connects a node to itself")
        fixed = tuple(sorted({int(i) for i in self.fixed_dofs}))
        if fixed and (fixed[0] < 0 or fixed[-1] >= DOFS_PER_NODE * len(nodes)):
            raise ValueError("fixed DoF index out of range")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "elements", elements)
        object.__setattr__(self, "fixed_dofs", fixed)
        object.__setattr__(self, "rayleigh", tuple(float(c) for c in self.rayleigh))

    @property
    def n_nodes(self):
        return len(self.nodes)

    @cached_property
    def free_dofs(self) -> np.ndarray:
        """Full DoF index of every free DoF."""
        mask = np.ones(DOFS_PER_NODE * self.n_nodes, dtype=bool)
        mask[list(self.fixed_dofs)] = False
        return np.flatnonzero(mask)

    @property
    def n_dofs(self):
        return len(self.free_dofs)

    @cached_property
    def dof_map(self) -> np.ndarray:
        """Full DoF index -> free index, ``-1`` for constrained DoFs."""
        out = -np.ones(DOFS_PER_NODE * self.n_nodes, dtype=np.int64)
        out[self.free_dofs] = np.arange(self.n_dofs)
        return out

    def dof(self, node, local):
        """Free index of ``local`` DoF at ``node``; ``-1`` if constrained."""
        return int(self.dof_map[DOFS_PER_NODE * node + local])

    def element_dofs(self, elements=None) -> np.ndarray:
        conn = self.elements if elements is None else self.elements[elements]
        full = (DOFS_PER_NODE * conn[:, :, None] + np.arange(3)).reshape(len(conn), 6)
        return full

    @cached_property
    def kernel(self) -> BeamKernel:
        return self.make_kernel(np.arange(len(self.elements)), self.dof_map, self.n_dofs)

    def make_kernel(self, elements, target_map, n) -> BeamKernel:
        """Kernel over ``elements`` with full DoFs renumbered by ``target_map``."""
        elements = np.asarray(elements, dtype=np.int64)
        coords = self.nodes[self.elements[elements]]
        dofs = target_map[self.element_dofs(elements)]
        return BeamKernel(coords, dofs, n, self.section, self.material)

    def pressure_load(self, pressure):
        """Free-DoF load vector of a uniform pressure on the section width."""
        return self.kernel.line_load(pressure * self.section.width)

    def nodal_load(self, node, local, value=1.0):
        f = np.zeros(self.n_dofs)
        idx = self.dof(node, local)
        if idx < 0:
            raise ValueError(f"DoF {local} of node {node} is constrained")
        f[idx] = value
        return f

    def node_at(self, x):
        """Index of the node closest to abscissa ``x``."""
        return int(np.argmin(np.abs(self.nodes[:, 0] - x)))


def assemble_global(model: Model):
    """Sparse ``(M, K, D, free_dofs)`` over the free DoFs.

    A singular stiffness is not checked here; substructures may be
    floating until their interfaces are constrained.
    """
    M = model.kernel.mass()
    K = model.kernel.stiffness()
    alpha, beta = model.rayleigh
    D = alpha * M + beta * K
    return M, K, D, model.free_dofs


def internal_force(model: Model, d):
    return model.kernel.force(d)


def tangent_stiffness(model: Model, d):
    return model.kernel.tangent(d)


def clamped_beam(
    length,
    n_elements,
    section,
    material,
    rise=0.0,
    rayleigh=(0.0, 0.0),
    name="beam",
):
    """Clamped-clamped beam along x, optionally a shallow circular arch.

    ``rise`` is the midspan elevation of a uniformly curved arch.
    """
    if n_elements < 1:
        raise ValueError("need at least one element")
    x = np.linspace(0.0, length, n_elements + 1)
    if rise:
        radius = (length**2 / 4 + rise**2) / (2 * rise)
        z = np.sqrt(radius**2 - (x - length / 2) ** 2) - (radius - rise)
        z[0] = z[-1] = 0.0
    else:
        z = np.zeros_like(x)
    nodes = np.column_stack([x, z])
    elements = np.column_stack([np.arange(n_elements), np.arange(1, n_elements + 1)])
    last = n_elements
    fixed = [0, 1, 2, 3 * last, 3 * last + 1, 3 * last + 2]
    return Model(
        nodes=nodes,
        elements=elements,
        section=section,
        material=material,
        fixed_dofs=tuple(fixed),
        rayleigh=rayleigh,
        name=name,
        meta={"length": length, "rise": rise},
    )

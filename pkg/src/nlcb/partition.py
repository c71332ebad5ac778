"""Substructure partition, compatibility operators and primal assembly."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .fe import DOFS_PER_NODE, BeamKernel, Model


@dataclass(eq=False)
class Substructure:
    """One substructure with local DoFs ordered ``[internal, interface]``.

    ``dofs`` holds the model free index of every local DoF.
    """

    index: int
    model: Model
    elements: np.ndarray
    internal_dofs: np.ndarray
    interface_dofs: np.ndarray

    def __post_init__(self):
        if np.intersect1d(self.internal_dofs, self.interface_dofs).size:
            raise ValueError(f"substructure {self.index}: internal and interface DoFs overlap")

    @property
    def dofs(self):
        return np.concatenate([self.internal_dofs, self.interface_dofs])

    @property
    def n(self):
        return len(self.internal_dofs) + len(self.interface_dofs)

    @property
    def n_u(self):
        return len(self.internal_dofs)

    @property
    def n_q(self):
        return len(self.interface_dofs)

    @cached_property
    def kernel(self) -> BeamKernel:
        target = -np.ones(DOFS_PER_NODE * self.model.n_nodes, dtype=np.int64)
        target[self.model.free_dofs[self.dofs]] = np.arange(self.n)
        return self.model.make_kernel(self.elements, target, self.n)

    @cached_property
    def operators(self):
        """Sparse ``(M, K, D)`` in local ordering."""
        M = self.kernel.mass()
        K = self.kernel.stiffness()
        alpha, beta = self.model.rayleigh
        return M, K, alpha * M + beta * K

    def blocks(self, A):
        """``(uu, uq, qu, qq)`` blocks of a local operator."""
        A = sp.csr_matrix(A)
        u = slice(0, self.n_u)
        q = slice(self.n_u, self.n)
        return A[u, u], A[u, q], A[q, u], A[q, q]

    def interface_nodes(self):
        nodes = self.model.free_dofs[self.interface_dofs] // DOFS_PER_NODE
        return np.unique(nodes)

    def split(self, d):
        d = np.asarray(d)
        return d[: self.n_u], d[self.n_u :]


@dataclass(eq=False)
class Partition:
    """Substructures plus compatibility (``B``) and localization (``L``) maps.

    The global vector collects every substructure DoF once, numbered in
    order of first appearance when walking substructures by index and
    their local DoFs in order. ``global_dofs`` maps it to model free
    indices.
    """

    model: Model
    substructures: list
    global_dofs: np.ndarray
    L: list
    B: list
    interface_groups: list

    @property
    def n_global(self):
        return len(self.global_dofs)

    def to_global(self, d_model):
        """Model free-DoF vector -> partition global vector."""
        return np.asarray(d_model)[self.global_dofs]

    def to_model(self, d_global):
        out = np.zeros(self.model.n_dofs)
        out[self.global_dofs] = d_global
        return out

    def extract(self, d_global):
        return [Ls @ d_global for Ls in self.L]

    def compatibility_residual(self):
        """``sum_s B(s) L(s)`` as a sparse matrix."""
        total = sp.csr_matrix((self.B[0].shape[0] if self.B else 0, self.n_global))
        for Bs, Ls in zip(self.B, self.L):
            total = total + Bs @ Ls
        return total


def partition_model(model: Model, interface_nodes=()) -> Partition:
    """Split ``model`` along ``interface_nodes`` into connected element sets.

    Elements are grouped by connectivity through non-interface nodes.
    Every listed interface node must be shared by at least two
    substructures.
    """
    iface = {int(n) for n in interface_nodes}
    for n in iface:
        if not 0 <= n < model.n_nodes:
            raise ValueError(f"interface node {n} does not exist")
    conn = model.elements
    n_el = len(conn)

    # element adjacency through shared non-interface nodes
    rows, cols = [], []
    for node in range(model.n_nodes):
        if node in iface:
            continue
        touching = np.flatnonzero((conn == node).any(axis=1))
        for e in touching[1:]:
            rows.append(touching[0])
            cols.append(e)
    graph = sp.coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n_el, n_el))
    n_comp, labels = connected_components(graph, directed=False)
    # order substructures by their lowest element index
    order = np.argsort([np.flatnonzero(labels == c).min() for c in range(n_comp)])
    relabel = np.empty(n_comp, dtype=int)
    relabel[order] = np.arange(n_comp)
    labels = relabel[labels]
    element_sets = [np.flatnonzero(labels == s) for s in range(n_comp)]

    node_owners = [set() for _ in range(model.n_nodes)]
    for s, els in enumerate(element_sets):
        for node in np.unique(conn[els]):
            node_owners[node].add(s)
    for n in iface:
        if len(node_owners[n]) < 2:
            raise ValueError(f"interface node {n} does not separate substructures")
    shared_nodes = {n for n in range(model.n_nodes) if len(node_owners[n]) > 1}
    if shared_nodes - iface:
        raise ValueError("substructures share nodes that were not declared as interface")

    subs = []
    for s, els in enumerate(element_sets):
        nodes = np.unique(conn[els])
        full = (DOFS_PER_NODE * nodes[:, None] + np.arange(DOFS_PER_NODE)).ravel()
        free = model.dof_map[full]
        is_iface = np.repeat([n in shared_nodes for n in nodes], DOFS_PER_NODE)
        keep = free >= 0
        internal = np.sort(free[keep & ~is_iface])
        interface = np.sort(free[keep & is_iface])
        subs.append(Substructure(s, model, els, internal, interface))

    # global numbering: first appearance over (substructure, local index)
    number = {}
    for sub in subs:
        for dof in sub.dofs:
            number.setdefault(int(dof), len(number))
    global_dofs = np.empty(len(number), dtype=np.int64)
    for dof, k in number.items():
        global_dofs[k] = dof
    n_global = len(global_dofs)

    L = []
    for sub in subs:
        cols = np.array([number[int(d)] for d in sub.dofs], dtype=np.int64)
        L.append(sp.csr_matrix((np.ones(sub.n), (np.arange(sub.n), cols)), shape=(sub.n, n_global)))

    # signed Boolean constraints: each shared DoF tied to its first owner
    pairs = []
    local_pos = [{int(d): i for i, d in enumerate(sub.dofs)} for sub in subs]
    for dof in sorted(number, key=number.get):
        owners = [s for s in range(len(subs)) if dof in local_pos[s]]
        for other in owners[1:]:
            pairs.append((dof, owners[0], other))
    p = len(pairs)
    B = []
    for s, sub in enumerate(subs):
        r, c, v = [], [], []
        for k, (dof, first, other) in enumerate(pairs):
            if s == first:
                r.append(k)
                c.append(local_pos[s][dof])
                v.append(1.0)
            elif s == other:
                r.append(k)
                c.append(local_pos[s][dof])
                v.append(-1.0)
        B.append(sp.csr_matrix((v, (r, c)), shape=(p, sub.n)))

    groups = {}
    for n in sorted(shared_nodes):
        groups.setdefault(frozenset(node_owners[n]), []).append(n)
    interface_groups = [
        (tuple(sorted(owners)), np.array(nodes, dtype=np.int64))
        for owners, nodes in sorted(groups.items(), key=lambda kv: kv[1][0])
    ]
    return Partition(model, subs, global_dofs, L, B, interface_groups)


def _as_dense(L):
    return L.toarray() if sp.issparse(L) else np.asarray(L)


def primal_assemble(operators, L):
    """Assemble per-substructure operators through localization maps.

    Vectors become ``sum L^T v``, matrices ``sum L^T A L`` and higher
    order tensors are localized on every axis.
    """
    operators = list(operators)
    L = list(L)
    if len(operators) != len(L):
        raise ValueError("one localization matrix per operator is required")
    if not operators:
        raise ValueError("nothing to assemble")
    n = L[0].shape[1]
    total = None
    for A, Ls in zip(operators, L):
        if Ls.shape[1] != n:
            raise ValueError("localization matrices disagree on the global size")
        if sp.issparse(A):
            if A.shape != (Ls.shape[0], Ls.shape[0]):
                raise ValueError(f"operator shape {A.shape} does not match {Ls.shape}")
            term = (Ls.T @ A @ Ls).tocsr()
        else:
            A = np.asarray(A)
            if any(dim != Ls.shape[0] for dim in A.shape):
                raise ValueError(f"operator shape {A.shape} does not match {Ls.shape}")
            Ld = _as_dense(Ls)
            term = A
            for axis in range(A.ndim):
                term = np.tensordot(term, Ld, axes=([0], [0]))
            # tensordot moves each contracted axis to the end, so order is kept
        total = term if total is None else total + term
    return total

"""Substructure projection and primal assembly of the reduced model."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp

from .basis import (
    Factorization,
    fixed_interface_modes,
    identity_interface,
    static_modes,
    virtual_node_interface,
)
from .manifold import Manifold, compute_manifold
from .partition import Partition, primal_assemble


def symmetrize_trailing(T):
    """Average ``T`` over all permutations of its trailing axes."""
    T = np.asarray(T)
    k = T.ndim - 1
    if k < 2:
        return T.copy()
    perms = list(itertools.permutations(range(1, k + 1)))
    out = np.zeros_like(T)
    for p in perms:
        out += T.transpose((0,) + p)
    return out / len(perms)


@dataclass
class ReducedModel:
    """Cubic reduced model ``M xi'' + D xi' + K xi + K2:xi xi + K3:xi xi xi = f``.

    ``load_map`` maps the reduced coordinates to model free DoFs
    linearly (its transpose reduces nodal loads); ``quad_map`` carries
    the quadratic displacement correction for reconstruction.
    """

    M_r: np.ndarray
    D_r: np.ndarray
    K_r: np.ndarray
    K2_r: np.ndarray
    K3_r: np.ndarray
    load_map: np.ndarray | None = None
    quad_map: np.ndarray | None = None
    L_r: list = field(default_factory=list)
    dims: list = field(default_factory=list)

    @property
    def m(self):
        return self.K_r.shape[0]

    @property
    def K2t(self):
        return self.K2_r + self.K2_r.transpose(0, 2, 1)

    @property
    def K3t(self):
        K3 = self.K3_r
        return K3 + K3.transpose(0, 2, 1, 3) + K3.transpose(0, 1, 3, 2)

    def reduce_load(self, f):
        """Reduced load of a model free-DoF vector (linear part only)."""
        return self.load_map.T @ f

    def reconstruct(self, xi):
        """Model free-DoF displacement(s) of reduced state(s) ``xi`` (last axis m)."""
        xi = np.asarray(xi, dtype=float)
        d = xi @ self.load_map.T
        if self.quad_map is not None:
            d = d + np.einsum("ijk,...j,...k->...i", self.quad_map, xi, xi)
        return d

    def frequencies(self):
        """Undamped natural frequencies in Hz."""
        lam = la.eigh(self.K_r, self.M_r, eigvals_only=True)
        return np.sqrt(np.abs(lam)) / (2 * np.pi)

    def save(self, path):
        arrays = {
            "M_r": self.M_r,
            "D_r": self.D_r,
            "K_r": self.K_r,
            "K2_r": self.K2_r,
            "K3_r": self.K3_r,
            "dims": np.asarray(self.dims, dtype=np.int64).reshape(-1, 2),
        }
        if self.load_map is not None:
            arrays["load_map"] = self.load_map
        if self.quad_map is not None:
            arrays["quad_map"] = self.quad_map
        for s, Ls in enumerate(self.L_r):
            arrays[f"L_r_{s}"] = np.asarray(Ls.toarray() if sp.issparse(Ls) else Ls)
        np.savez(path, **arrays)

    @classmethod
    def load(cls, path):
        with np.load(path) as data:
            L_r = []
            s = 0
            while f"L_r_{s}" in data:
                L_r.append(data[f"L_r_{s}"])
                s += 1
            return cls(
                M_r=data["M_r"],
                D_r=data["D_r"],
                K_r=data["K_r"],
                K2_r=data["K2_r"],
                K3_r=data["K3_r"],
                load_map=data["load_map"] if "load_map" in data else None,
                quad_map=data["quad_map"] if "quad_map" in data else None,
                L_r=L_r,
                dims=[tuple(int(v) for v in row) for row in data["dims"]],
            )


def _element_restriction(kernel, A):
    """Rows of ``A`` gathered per element DoF; constrained rows are zero."""
    padded = np.concatenate([A, np.zeros((1,) + A.shape[1:])], axis=0)
    idx = np.where(kernel.dofs >= 0, kernel.dofs, A.shape[0])
    return padded[idx]


def _contract(T, factors):
    """``sum_e T_e`` with axis ``k`` of ``T_e`` contracted against ``factors[k][e]``.

    Contracts the trailing axis with a batched matmul and rotates the
    new axis to the front, so output axes follow ``factors`` order.
    """
    for F in reversed(factors):
        T = np.moveaxis(T @ F.reshape(F.shape[0], *([1] * (T.ndim - 3)), *F.shape[1:]), -1, 1)
    return T.sum(axis=0)


def project_substructure(substructure, manifold: Manifold) -> ReducedModel:
    """Galerkin projection of one substructure on its manifold.

    Linear operators use ``L_Gamma`` only; nonlinear tensors are built
    element by element without forming substructure-level tensors.
    """
    if manifold.n != substructure.n:
        raise ValueError(f"manifold has {manifold.n} rows, substructure {substructure.n} DoFs")
    M, K, D = substructure.operators
    L, Q = manifold.L_Gamma, manifold.Q_Gamma
    kernel = substructure.kernel
    Le = _element_restriction(kernel, L)
    Qe = _element_restriction(kernel, Q)
    K2e = kernel.element_quadratic
    K3e = kernel.element_cubic

    m = L.shape[1]
    Qf = Qe.reshape(Qe.shape[0], Qe.shape[1], m * m)
    K2_r = _contract(K2e, [Le, Le, Le])
    K3_r = _contract(K2e, [Le, Le, Qf]).reshape((m,) * 4)
    K3_r += _contract(K2e, [Le, Qf, Le]).reshape(m, m, m, m, order="C").transpose(0, 3, 1, 2)
    K3_r += _contract(K3e, [Le, Le, Le, Le])
    return ReducedModel(
        M_r=L.T @ (M @ L),
        D_r=L.T @ (D @ L),
        K_r=L.T @ (K @ L),
        K2_r=symmetrize_trailing(K2_r),
        K3_r=symmetrize_trailing(K3_r),
        dims=[(manifold.n_phi, manifold.n_chi)],
    )


def assemble_rom(substructure_roms, L_r) -> ReducedModel:
    """Primal assembly of substructure reduced models."""
    roms = list(substructure_roms)
    L_r = list(L_r)
    parts = {
        name: primal_assemble([getattr(r, name) for r in roms], L_r)
        for name in ("M_r", "D_r", "K_r", "K2_r", "K3_r")
    }
    return ReducedModel(
        M_r=0.5 * (parts["M_r"] + parts["M_r"].T),
        D_r=0.5 * (parts["D_r"] + parts["D_r"].T),
        K_r=0.5 * (parts["K_r"] + parts["K_r"].T),
        K2_r=symmetrize_trailing(parts["K2_r"]),
        K3_r=symmetrize_trailing(parts["K3_r"]),
        L_r=L_r,
        dims=[d for r in roms for d in r.dims],
    )


def reduced_force(rm: ReducedModel, xi):
    xi = np.asarray(xi, dtype=float)
    K2xi = np.tensordot(rm.K2_r, xi, axes=([2], [0]))
    K3xi = np.tensordot(rm.K3_r, xi, axes=([3], [0]))
    return rm.K_r @ xi + K2xi @ xi + (K3xi @ xi) @ xi


def reduced_jacobian(rm: ReducedModel, xi):
    xi = np.asarray(xi, dtype=float)
    return (
        rm.K_r
        + np.tensordot(rm.K2t, xi, axes=([2], [0]))
        + np.tensordot(rm.K3t, xi, axes=([3], [0])) @ xi
    )


def reduced_potential(rm: ReducedModel, xi):
    xi = np.asarray(xi, dtype=float)
    return (
        0.5 * xi @ rm.K_r @ xi
        + np.einsum("ijk,i,j,k->", rm.K2_r, xi, xi, xi) / 3.0
        + np.einsum("ijkl,i,j,k,l->", rm.K3_r, xi, xi, xi, xi) / 4.0
    )


def energies(rm: ReducedModel, xi, xidot):
    """``(kinetic, potential, dissipation rate, total)`` of a reduced state.

    The dissipation rate is ``xidot^T D_r xidot``, twice the Rayleigh
    dissipation function.
    """
    xidot = np.asarray(xidot, dtype=float)
    T = 0.5 * xidot @ rm.M_r @ xidot
    V = reduced_potential(rm, xi)
    P = xidot @ rm.D_r @ xidot
    return T, V, P, T + V


@dataclass
class ReducedCoordinates:
    """Layout of global reduced coordinates.

    ``[eta(1), ..., eta(N), chi(group 1), chi(group 2), ...]`` where each
    interface group is a set of nodes shared by the same substructures.
    """

    Psi: list
    L_r: list
    eta_slices: list
    chi_slices: list
    m: int


def interface_bases(partition: Partition, interface="virtual_node"):
    """Per-group interface bases and their per-substructure assembly."""
    model = partition.model
    group_dofs, group_bases = [], []
    for owners, nodes in partition.interface_groups:
        full = (3 * nodes[:, None] + np.arange(3)).ravel()
        dofs = model.dof_map[full]
        dofs = np.sort(dofs[dofs >= 0])
        if interface == "virtual_node":
            basis = virtual_node_interface(model, dofs)
        elif interface == "identity":
            basis = identity_interface(len(dofs))
        else:
            raise ValueError(f"unknown interface reduction {interface!r}")
        group_dofs.append(dofs)
        group_bases.append(basis)
    return group_dofs, group_bases


def reduced_layout(partition: Partition, n_phi, interface="virtual_node") -> ReducedCoordinates:
    subs = partition.substructures
    n_phi = [n_phi] * len(subs) if np.isscalar(n_phi) else list(n_phi)
    if len(n_phi) != len(subs):
        raise ValueError("one n_phi per substructure is required")
    group_dofs, group_bases = interface_bases(partition, interface)
    offset = 0
    eta_slices = []
    for k in n_phi:
        eta_slices.append(slice(offset, offset + k))
        offset += k
    chi_slices = []
    for basis in group_bases:
        chi_slices.append(slice(offset, offset + basis.shape[1]))
        offset += basis.shape[1]
    m = offset

    Psi_list, L_r = [], []
    for s, sub in enumerate(subs):
        groups = [g for g, (owners, _) in enumerate(partition.interface_groups) if s in owners]
        pos = {int(d): i for i, d in enumerate(sub.interface_dofs)}
        n_chi = sum(group_bases[g].shape[1] for g in groups)
        Psi = np.zeros((sub.n_q, n_chi))
        cols = list(range(eta_slices[s].start, eta_slices[s].stop))
        c = 0
        for g in groups:
            rows = [pos[int(d)] for d in group_dofs[g]]
            k = group_bases[g].shape[1]
            Psi[rows, c : c + k] = group_bases[g]
            cols.extend(range(chi_slices[g].start, chi_slices[g].stop))
            c += k
        Psi_list.append(Psi)
        L_r.append(sp.csr_matrix((np.ones(len(cols)), (np.arange(len(cols)), cols)), shape=(len(cols), m)))
    return ReducedCoordinates(Psi_list, L_r, eta_slices, chi_slices, m)


def _global_maps(partition, manifolds, L_r, m):
    n = partition.model.n_dofs
    V = np.zeros((n, m))
    Qg = np.zeros((n, m, m))
    for sub, man, Ls in zip(partition.substructures, manifolds, L_r):
        Ld = Ls.toarray()
        V[sub.dofs] = man.L_Gamma @ Ld
        Qs = np.tensordot(np.tensordot(man.Q_Gamma, Ld, axes=([1], [0])), Ld, axes=([1], [0]))
        Qg[sub.internal_dofs] = Qs[: sub.n_u]
    return V, Qg


def build_rom(partition: Partition, n_phi, interface="virtual_node", method="exact", ablation="none", h=None):
    """Manifolds, substructure ROMs and the assembled NL-CB reduced model."""
    layout = reduced_layout(partition, n_phi, interface)
    n_phi_list = [sl.stop - sl.start for sl in layout.eta_slices]
    manifolds, roms = [], []
    for sub, k, Psi in zip(partition.substructures, n_phi_list, layout.Psi):
        man = compute_manifold(sub, k, Psi, method=method, h=h)
        if ablation != "none":
            man = man.ablate(ablation)
        manifolds.append(man)
        roms.append(project_substructure(sub, man))
    rm = assemble_rom(roms, layout.L_r)
    rm.load_map, rm.quad_map = _global_maps(partition, manifolds, layout.L_r, layout.m)
    return rm, manifolds, roms


def classic_cb(partition: Partition, n_phi, interface="virtual_node", nonlinear=False):
    """Classic Craig-Bampton model on ``[[Phi, S Psi], [0, Psi]]`` bases.

    With ``nonlinear=True`` the cubic elastic forces are Galerkin
    projected onto the same basis.
    """
    layout = reduced_layout(partition, n_phi, interface)
    manifolds, roms = [], []
    for sub, sl, Psi in zip(partition.substructures, layout.eta_slices, layout.Psi):
        M, K, _ = sub.operators
        M_uu, _, _, _ = sub.blocks(M)
        K_uu, K_uq, _, _ = sub.blocks(K)
        factor = Factorization(K_uu)
        Phi, _ = fixed_interface_modes(K_uu, M_uu, sl.stop - sl.start)
        S = static_modes(K_uu, K_uq, factor)
        n_phi_s, n_chi = Phi.shape[1], Psi.shape[1]
        V = np.zeros((sub.n, n_phi_s + n_chi))
        V[: sub.n_u, :n_phi_s] = Phi
        V[: sub.n_u, n_phi_s:] = S @ Psi
        V[sub.n_u :, n_phi_s:] = Psi
        man = Manifold(V, np.zeros((sub.n, V.shape[1], V.shape[1])), n_phi_s, n_chi)
        r = project_substructure(sub, man)
        if not nonlinear:
            r.K2_r = np.zeros_like(r.K2_r)
            r.K3_r = np.zeros_like(r.K3_r)
        manifolds.append(man)
        roms.append(r)
    rm = assemble_rom(roms, layout.L_r)
    rm.load_map, rm.quad_map = _global_maps(partition, manifolds, layout.L_r, layout.m)
    return rm

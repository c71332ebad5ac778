"""Fixed-interface modes, static modes and interface bases."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .fe import AXIAL, DOFS_PER_NODE, ROTATION, TRANSVERSE

DENSE_LIMIT = 2000


class Factorization:
    """Reusable SPD solve: dense Cholesky up to ``DENSE_LIMIT``, sparse LU above."""

    def __init__(self, A):
        self.n = A.shape[0]
        if self.n <= DENSE_LIMIT:
            dense = A.toarray() if sp.issparse(A) else np.asarray(A, dtype=float)
            try:
                self._chol = la.cho_factor(dense, lower=True)
            except la.LinAlgError as exc:
                raise la.LinAlgError(f"Cholesky factorization failed: {exc}") from exc
            self._lu = None
        else:
            self._chol = None
            self._lu = spla.splu(sp.csc_matrix(A))

    def solve(self, rhs):
        rhs = np.asarray(rhs, dtype=float)
        if self.n == 0:
            return np.zeros_like(rhs)
        if self._chol is not None:
            return la.cho_solve(self._chol, rhs)
        return self._lu.solve(rhs)


@dataclass
class ReductionBasis:
    Phi: np.ndarray
    omega: np.ndarray
    S: np.ndarray
    Psi: np.ndarray

    @property
    def n_phi(self):
        return self.Phi.shape[1]

    @property
    def n_chi(self):
        return self.Psi.shape[1]


def _fix_signs(Phi):
    idx = np.argmax(np.abs(Phi), axis=0)
    signs = np.sign(Phi[idx, np.arange(Phi.shape[1])])
    signs[signs == 0] = 1.0
    return Phi * signs


def fixed_interface_modes(K_uu, M_uu, n_phi):
    """Lowest ``n_phi`` mass-normalized eigenpairs of ``(K_uu, M_uu)``.

    Returns ``(Phi, omega)`` with ``omega`` in rad/s, ascending. The
    entry of largest magnitude in every mode is made positive.
    """
    n_u = K_uu.shape[0]
    if not 1 <= n_phi <= n_u:
        raise ValueError(f"n_phi={n_phi} outside [1, {n_u}]")
    if n_u <= DENSE_LIMIT:
        K = K_uu.toarray() if sp.issparse(K_uu) else np.asarray(K_uu, dtype=float)
        M = M_uu.toarray() if sp.issparse(M_uu) else np.asarray(M_uu, dtype=float)
        lam, Phi = la.eigh(K, M, subset_by_index=[0, n_phi - 1])
    else:
        try:
            lam, Phi = spla.eigsh(
                sp.csc_matrix(K_uu), k=n_phi, M=sp.csc_matrix(M_uu), sigma=0.0, v0=np.ones(n_u)
            )
        except spla.ArpackNoConvergence as exc:
            raise RuntimeError(f"eigensolver did not converge: {exc}") from exc
        order = np.argsort(lam)
        lam, Phi = lam[order], Phi[:, order]
        # re-normalize against the mass matrix
        Phi = Phi / np.sqrt(np.einsum("ij,ij->j", Phi, M_uu @ Phi))
        resid = np.linalg.norm(K_uu @ Phi - (M_uu @ Phi) * lam, axis=0)
        if np.any(resid > 1e-6 * np.abs(lam) * np.linalg.norm(M_uu @ Phi, axis=0)):
            raise RuntimeError(f"eigenpair residuals too large: {resid}")
    if np.any(lam <= 0):
        raise ValueError("internal stiffness is not positive definite")
    return _fix_signs(Phi), np.sqrt(lam)


def static_modes(K_uu, K_uq, factor=None):
    """``S = -K_uu^{-1} K_uq`` with a single factorization of ``K_uu``."""
    factor = Factorization(K_uu) if factor is None else factor
    rhs = K_uq.toarray() if sp.issparse(K_uq) else np.asarray(K_uq, dtype=float)
    return -factor.solve(rhs)


def virtual_node_interface(model, interface_dofs):
    """Rigid interface basis for the free DoFs ``interface_dofs`` of ``model``.

    Columns are the x translation, z translation and rotation about the
    centroid of the interface nodes, orthonormalized in that order. Rows
    follow ``interface_dofs``.
    """
    interface_dofs = np.asarray(interface_dofs, dtype=np.int64)
    if interface_dofs.size == 0:
        raise ValueError("empty interface")
    full = model.free_dofs[interface_dofs]
    nodes = full // DOFS_PER_NODE
    local = full % DOFS_PER_NODE
    xz = model.nodes[nodes]
    centroid = model.nodes[np.unique(nodes)].mean(axis=0)
    Psi = np.zeros((len(interface_dofs), 3))
    Psi[local == AXIAL, 0] = 1.0
    Psi[local == TRANSVERSE, 1] = 1.0
    # small rotation theta about y: u = theta (z - zc), w = -theta (x - xc)
    Psi[local == AXIAL, 2] = (xz[:, 1] - centroid[1])[local == AXIAL]
    Psi[local == TRANSVERSE, 2] = -(xz[:, 0] - centroid[0])[local == TRANSVERSE]
    Psi[local == ROTATION, 2] = 1.0
    Psi = Psi[:, np.linalg.norm(Psi, axis=0) > 0]
    # Gram-Schmidt in column order keeps translations untouched
    Q, R = np.linalg.qr(Psi)
    return Q * np.sign(np.diag(R))


def identity_interface(n_q):
    return np.eye(n_q)


def principal_angles(A, B):
    """Principal angles (rad) between the column spans of ``A`` and ``B``."""
    return la.subspace_angles(A, B)

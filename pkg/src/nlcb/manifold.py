"""Quadratic substructure manifold.

The internal DoFs of a substructure are mapped from the reduced
coordinates ``xi = [eta, chi]`` (fixed-interface mode amplitudes and
interface-mode amplitudes) by::

    d = L_Gamma xi + Q_Gamma:(xi xi)

High-frequency fixed-interface modes are statically enslaved to second
order. Every coefficient vector is obtained from one factorization of
``K_uu`` followed by a mass-deflation against the retained modes, so the
high-frequency modes themselves are never formed.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace

import numpy as np

from .basis import Factorization, ReductionBasis, fixed_interface_modes, static_modes

_MAGIC = b"NLCBMAN1"

ABLATIONS = ("none", "quadratic", "quadratic-chi", "quadratic-cross")


@dataclass
class Manifold:
    """Substructure displacement map in local ``[internal, interface]`` order."""

    L_Gamma: np.ndarray
    Q_Gamma: np.ndarray
    n_phi: int
    n_chi: int
    basis: ReductionBasis | None = None
    PhiHat_B: np.ndarray | None = None

    @property
    def n(self):
        return self.L_Gamma.shape[0]

    @property
    def m(self):
        return self.L_Gamma.shape[1]

    @property
    def Q_tau(self):
        """``Q + Q_132``, the derivative operator of the quadratic part."""
        return self.Q_Gamma + self.Q_Gamma.transpose(0, 2, 1)

    def displacement(self, xi):
        xi = np.asarray(xi, dtype=float)
        return self.L_Gamma @ xi + np.einsum("ijk,j,k->i", self.Q_Gamma, xi, xi)

    def tangent(self, xi):
        """Jacobian ``d(displacement)/d(xi)``."""
        return self.L_Gamma + np.einsum("ijk,k->ij", self.Q_tau, np.asarray(xi, dtype=float))

    def ablate(self, kind):
        """Copy with part of the quadratic operator removed.

        ``quadratic`` zeros all of it, ``quadratic-chi`` the interface-only
        block and ``quadratic-cross`` the mode/interface coupling block.
        """
        if kind not in ABLATIONS:
            raise ValueError(f"unknown ablation {kind!r}; choose from {ABLATIONS}")
        Q = self.Q_Gamma.copy()
        p = self.n_phi
        if kind == "quadratic":
            Q[:] = 0.0
        elif kind == "quadratic-chi":
            Q[:, p:, p:] = 0.0
        elif kind == "quadratic-cross":
            Q[:, :p, p:] = 0.0
            Q[:, p:, :p] = 0.0
        return replace(self, Q_Gamma=Q)

    def dump(self, path):
        """Write a little-endian binary: magic, ``n, m, n_phi, n_chi``, L, Q."""
        with open(path, "wb") as fh:
            fh.write(_MAGIC)
            fh.write(struct.pack("<4q", self.n, self.m, self.n_phi, self.n_chi))
            fh.write(np.ascontiguousarray(self.L_Gamma, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(self.Q_Gamma, dtype="<f8").tobytes())

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            if fh.read(len(_MAGIC)) != _MAGIC:
                raise ValueError(f"{path} is not a manifold dump")
            n, m, n_phi, n_chi = struct.unpack("<4q", fh.read(32))
            L = np.frombuffer(fh.read(8 * n * m), dtype="<f8").reshape(n, m)
            Q = np.frombuffer(fh.read(8 * n * m * m), dtype="<f8").reshape(n, m, m)
        return cls(L.copy(), Q.copy(), n_phi, n_chi)


def _deflate(X, Phi, M_uu):
    """Apply ``I - Phi Phi^T M_uu`` column-wise."""
    return X - Phi @ (Phi.T @ (M_uu @ X))


def linear_part(basis: ReductionBasis, substructure, factor=None, rtol=1e-8):
    """Linear operator ``L_Gamma`` and the enslaved static part ``PhiHat_B``.

    ``PhiHat_B = -(I - Phi Phi^T M_uu) K_uu^{-1} K_uq Psi`` solves the
    first-order condition for the interface amplitudes restricted to the
    high-frequency modes.
    """
    M = substructure.operators[0]
    K = substructure.operators[1]
    M_uu, _, _, _ = substructure.blocks(M)
    K_uu, K_uq, _, _ = substructure.blocks(K)
    Phi, Psi = basis.Phi, basis.Psi
    n_u, n_q = substructure.n_u, substructure.n_q
    n_phi, n_chi = Phi.shape[1], Psi.shape[1]
    if Psi.shape[0] != n_q:
        raise ValueError(f"interface basis has {Psi.shape[0]} rows, expected {n_q}")
    if n_chi == 0:
        PhiHat_B = np.zeros((n_u, 0))
    else:
        factor = Factorization(K_uu) if factor is None else factor
        S_Psi = -factor.solve((K_uq @ Psi))
        PhiHat_B = _deflate(S_Psi, Phi, M_uu)
        resid = K_uu @ PhiHat_B + K_uq @ Psi
        resid = resid - M_uu @ (Phi @ (Phi.T @ resid))
        scale = np.abs(K_uq @ Psi).max() if n_q else 1.0
        if np.abs(resid).max() > rtol * max(scale, 1e-300):
            raise RuntimeError(
                f"linear manifold residual {np.abs(resid).max():.3e} exceeds {rtol:g} relative"
            )
    L = np.zeros((n_u + n_q, n_phi + n_chi))
    L[:n_u, :n_phi] = Phi
    L[:n_u, n_phi:] = PhiHat_B
    L[n_u:, n_phi:] = Psi
    return L, PhiHat_B


def rhs_pairs(n_phi, n_chi):
    """Column order of the second-order right-hand sides.

    ``eta_i eta_j`` (i <= j), then ``chi_i chi_j`` (i <= j), then
    ``eta_i chi_j``; indices are positions in ``xi``.
    """
    pairs = [(i, j) for i in range(n_phi) for j in range(i, n_phi)]
    pairs += [(n_phi + i, n_phi + j) for i in range(n_chi) for j in range(i, n_chi)]
    pairs += [(i, n_phi + j) for i in range(n_phi) for j in range(n_chi)]
    return pairs


def quadratic_rhs(substructure, L_Gamma, n_phi, method="exact", h=None):
    """Second-order forcing on the internal DoFs, one column per ``rhs_pairs``.

    Column ``(a, b)`` is ``-dK(L_a) . L_b`` halved when ``a == b``, where
    ``dK(v)`` is the derivative of the tangent stiffness along ``v`` at
    the undeformed state. ``method="fd"`` evaluates it by central
    differences of the tangent stiffness with step ``h`` (a displacement
    scale; each direction is normalized to unit max entry first).
    """
    kernel = substructure.kernel
    n_u = substructure.n_u
    m = L_Gamma.shape[1]
    pairs = rhs_pairs(n_phi, m - n_phi)
    F = np.zeros((n_u, len(pairs)))
    if method == "exact":

        def deriv(a, b):
            return kernel.stiffness_derivative(L_Gamma[:, a], L_Gamma[:, b])

    elif method == "fd":
        if h is None:
            # the tangent is quadratic in d, so central differences carry no
            # truncation error and a large step only limits cancellation
            h = 1e-2 * substructure.model.section.thickness
        cache = {}

        def deriv(a, b):
            if a not in cache:
                v = L_Gamma[:, a]
                scale = np.abs(v).max()
                step = h / scale
                diff = kernel.tangent(step * v) - kernel.tangent(-step * v)
                cache[a] = diff / (2.0 * step)
            return cache[a] @ L_Gamma[:, b]

    else:
        raise ValueError(f"unknown method {method!r}")

    for col, (a, b) in enumerate(pairs):
        f = -deriv(a, b)[:n_u]
        F[:, col] = 0.5 * f if a == b else f
    return F, pairs


def quadratic_part(factor, Phi, M_uu, F, pairs, n_q, m):
    """Solve every second-order column and scatter into symmetric ``Q_Gamma``.

    Off-diagonal pairs are split evenly between ``(a, b)`` and ``(b, a)``
    so that ``Q_Gamma:(xi xi)`` reproduces the Taylor polynomial.
    """
    n_u = Phi.shape[0]
    X = _deflate(factor.solve(F), Phi, M_uu) if F.size else np.zeros_like(F)
    Q = np.zeros((n_u + n_q, m, m))
    for col, (a, b) in enumerate(pairs):
        if a == b:
            Q[:n_u, a, a] = X[:, col]
        else:
            Q[:n_u, a, b] = 0.5 * X[:, col]
            Q[:n_u, b, a] = 0.5 * X[:, col]
    return Q


def compute_manifold(substructure, n_phi, Psi, method="exact", h=None) -> Manifold:
    """Full pipeline for one substructure: modes, linear and quadratic parts."""
    M = substructure.operators[0]
    K = substructure.operators[1]
    M_uu, _, _, _ = substructure.blocks(M)
    K_uu, K_uq, _, _ = substructure.blocks(K)
    factor = Factorization(K_uu)
    Phi, omega = fixed_interface_modes(K_uu, M_uu, n_phi)
    S = static_modes(K_uu, K_uq, factor)
    basis = ReductionBasis(Phi=Phi, omega=omega, S=S, Psi=np.asarray(Psi, dtype=float))
    L, PhiHat_B = linear_part(basis, substructure, factor)
    F, pairs = quadratic_rhs(substructure, L, n_phi, method=method, h=h)
    Q = quadratic_part(factor, Phi, M_uu, F, pairs, substructure.n_q, L.shape[1])
    return Manifold(L, Q, n_phi, basis.n_chi, basis=basis, PhiHat_B=PhiHat_B)

"""Brute-force oracles for checking the reduction pipeline.

Nothing here is meant to be fast. The energy oracle rebuilds the beam
strain energy from its own polynomial shape functions with a higher
quadrature order and differentiates it by complex step, so it shares no
code with the tensor and quadrature kernels it is used to check.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg as la
from numpy.polynomial import Polynomial

from .fe import DOFS_PER_NODE, Model

MAX_ORACLE_DOFS = 60


def global_tensor_oracle(model: Model, max_dofs=MAX_ORACLE_DOFS):
    """Dense global ``(K2, K3)`` over the free DoFs of a small model.

    Memory grows as ``n**4`` so models above ``max_dofs`` are refused.
    """
    n = model.n_dofs
    if n > max_dofs:
        raise ValueError(f"model has {n} DoFs; the dense oracle is capped at {max_dofs}")
    kernel = model.kernel
    K2 = np.zeros((n,) * 3)
    K3 = np.zeros((n,) * 4)
    for e, dofs in enumerate(kernel.dofs):
        keep = np.flatnonzero(dofs >= 0)
        idx = dofs[keep]
        K2[np.ix_(idx, idx, idx)] += kernel.element_quadratic[e][np.ix_(keep, keep, keep)]
        K3[np.ix_(idx, idx, idx, idx)] += kernel.element_cubic[e][np.ix_(keep, keep, keep, keep)]
    return K2, K3


def tensor_force(K, K2, K3, d):
    """``K d + K2:dd + K3:ddd`` from dense tensors."""
    return K @ d + np.einsum("ijk,j,k->i", K2, d, d) + np.einsum("ijkl,j,k,l->i", K3, d, d, d)


def _hermite(length):
    """Transverse shape polynomials in the physical coordinate, ``theta = -w'``."""
    Lx = float(length)
    x = Polynomial([0.0, 1.0 / Lx])
    one = Polynomial([1.0])
    return [
        one - 3 * x**2 + 2 * x**3,
        -Lx * (x - 2 * x**2 + x**3),
        3 * x**2 - 2 * x**3,
        -Lx * (-(x**2) + x**3),
    ]


def element_energy_oracle(coords, section, material, de, n_gauss=8):
    """Strain energy of one element for DoFs ``de`` (real or complex)."""
    coords = np.asarray(coords, dtype=float)
    Lx = coords[1, 0] - coords[0, 0]
    w0p = (coords[1, 1] - coords[0, 1]) / Lx
    H = _hermite(Lx)
    dH = [h.deriv() for h in H]
    ddH = [h.deriv(2) for h in H]
    xg, wg = np.polynomial.legendre.leggauss(n_gauss)
    xs = 0.5 * Lx * (xg + 1.0)
    ws = 0.5 * Lx * wg
    wdofs = [de[1], de[2], de[4], de[5]]
    up = (de[3] - de[0]) / Lx
    wp = sum(c * h(xs) for c, h in zip(wdofs, dH))
    wpp = sum(c * h(xs) for c, h in zip(wdofs, ddH))
    EA = material.E * section.area
    EI = material.E * section.inertia
    eps = up + w0p * wp + 0.5 * wp**2
    return 0.5 * np.sum(ws * (EA * eps**2 + EI * wpp**2))


def energy_oracle(model: Model, d):
    """Total strain energy of ``model`` at free-DoF vector ``d``."""
    d = np.asarray(d)
    full = np.zeros(DOFS_PER_NODE * model.n_nodes, dtype=d.dtype)
    full[model.free_dofs] = d
    total = 0.0
    for e, (i, j) in enumerate(model.elements):
        de = np.concatenate([full[3 * i : 3 * i + 3], full[3 * j : 3 * j + 3]])
        total = total + element_energy_oracle(model.nodes[[i, j]], model.section, model.material, de)
    return total


def force_oracle(model: Model, d, h=1e-30):
    """Elastic force as the complex-step gradient of ``energy_oracle``."""
    d = np.asarray(d, dtype=float)
    out = np.empty_like(d)
    for i in range(d.size):
        z = d.astype(complex)
        z[i] += 1j * h
        out[i] = energy_oracle(model, z).imag / h
    return out


def static_condensation_oracle(substructure, eta, chi, Phi, Psi, tol=1e-12, max_iter=50):
    """Nonlinear static condensation of the fast internal content.

    Solves for internal displacements ``u`` with the interface held at
    ``Psi chi`` such that the internal elastic force lies in the span of
    ``M_uu Phi`` and ``Phi^T M_uu u = eta``. Returns the local
    ``[internal, interface]`` displacement.
    """
    M = substructure.operators[0]
    M_uu = substructure.blocks(M)[0].toarray()
    n_u = substructure.n_u
    eta = np.asarray(eta, dtype=float)
    chi = np.asarray(chi, dtype=float)
    kernel = substructure.kernel
    K_uu = substructure.blocks(substructure.operators[1])[0]
    # constraint rows scaled to the stiffness so the saddle-point system is balanced
    MPhi = M_uu @ Phi
    c = abs(K_uu).max() / np.abs(MPhi).max()
    C = c * MPhi
    k = Phi.shape[1]
    d = np.concatenate([Phi @ eta, Psi @ chi])
    lam = np.zeros(k)
    scale = max(np.abs(kernel.stiffness() @ d).max(), 1e-300)
    for _ in range(max_iter):
        f = kernel.force(d)[:n_u]
        r = np.concatenate([f - C @ lam, C.T @ d[:n_u] - c * eta])
        bound = tol * (c * np.abs(eta) + np.abs(C).T @ np.abs(d[:n_u])).max()
        if np.abs(r[:n_u]).max() < tol * scale and np.abs(r[n_u:]).max() <= bound:
            return d
        Kt = kernel.tangent(d).toarray()[:n_u, :n_u]
        J = np.block([[Kt, -C], [C.T, np.zeros((k, k))]])
        step = la.solve(J, -r)
        d[:n_u] += step[:n_u]
        lam += step[n_u:]
    raise RuntimeError(f"static condensation did not converge; residual {np.abs(r).max():.3e}")


def scaling_probe(fn, directions, eps_range=(1e-4, 1e-2), n=7, return_all=False):
    """Least-squares log-log slope of ``||fn(eps v)||`` versus ``eps``.

    Returns the smallest slope over ``directions`` (rows), or every
    slope when ``return_all`` is set.
    """
    eps = np.geomspace(eps_range[0], eps_range[1], n)
    slopes = []
    for v in np.atleast_2d(directions):
        norms = np.array([np.linalg.norm(np.atleast_1d(fn(e * v))) for e in eps])
        if np.any(norms <= 0):
            raise ValueError("fn vanished on the probe range; the slope is undefined")
        slopes.append(np.polyfit(np.log(eps), np.log(norms), 1)[0])
    slopes = np.asarray(slopes)
    return slopes if return_all else float(slopes.min())

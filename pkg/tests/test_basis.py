import numpy as np
import pytest
import scipy.linalg as la
from conftest import cut, rel

import nlcb.basis as basis
from nlcb.basis import (
    Factorization,
    fixed_interface_modes,
    principal_angles,
    static_modes,
    virtual_node_interface,
)
from nlcb.fe import AXIAL, ROTATION, TRANSVERSE


@pytest.fixture
def blocks(curved_small):
    sub = cut(curved_small, 0.6).substructures[0]
    M, K, _ = sub.operators
    M_uu, _, _, _ = sub.blocks(M)
    K_uu, K_uq, _, _ = sub.blocks(K)
    return M_uu, K_uu, K_uq


def test_fixed_interface_modes_mass_normalized(blocks):
    M_uu, K_uu, _ = blocks
    Phi, omega = fixed_interface_modes(K_uu, M_uu, 4)
    assert rel(Phi.T @ M_uu @ Phi, np.eye(4)) < 1e-12
    assert rel(Phi.T @ K_uu @ Phi, np.diag(omega**2)) < 1e-10
    assert np.all(np.diff(omega) > 0)
    # sign rule: largest-magnitude entry of each mode is positive
    assert np.all(Phi[np.argmax(np.abs(Phi), axis=0), np.arange(4)] > 0)


def test_sparse_and_dense_eigensolvers_agree(blocks, monkeypatch):
    M_uu, K_uu, _ = blocks
    Phi_d, om_d = fixed_interface_modes(K_uu, M_uu, 3)
    monkeypatch.setattr(basis, "DENSE_LIMIT", 0)
    Phi_s, om_s = fixed_interface_modes(K_uu, M_uu, 3)
    assert rel(om_d, om_s) < 1e-10
    assert rel(Phi_d, Phi_s) < 1e-7


def test_static_modes_solve_interface_problem(blocks):
    _, K_uu, K_uq = blocks
    S = static_modes(K_uu, K_uq)
    assert np.abs(K_uu @ S + K_uq.toarray()).max() < 1e-9 * np.abs(K_uq).max()


def test_factorization_paths_agree(blocks, rng, monkeypatch):
    _, K_uu, _ = blocks
    b = rng.standard_normal(K_uu.shape[0])
    x_dense = Factorization(K_uu).solve(b)
    monkeypatch.setattr(basis, "DENSE_LIMIT", 0)
    assert rel(Factorization(K_uu).solve(b), x_dense) < 1e-10


def test_mode_count_validated(blocks):
    M_uu, K_uu, _ = blocks
    with pytest.raises(ValueError):
        fixed_interface_modes(K_uu, M_uu, 0)


def test_virtual_node_basis_spans_rigid_motion(curved_small):
    nodes = [5, 6]
    dofs = np.array([curved_small.dof(n, k) for n in nodes for k in (AXIAL, TRANSVERSE, ROTATION)])
    Psi = virtual_node_interface(curved_small, dofs)
    assert Psi.shape == (6, 3)
    assert rel(Psi.T @ Psi, np.eye(3)) < 1e-14
    xz = curved_small.nodes[nodes]
    c = xz.mean(axis=0)
    rot = np.concatenate([[xz[i, 1] - c[1], -(xz[i, 0] - c[0]), 1.0] for i in range(2)])
    assert np.linalg.norm(rot - Psi @ (Psi.T @ rot)) < 1e-12 * np.linalg.norm(rot)
    # translations keep their direction and sign
    assert np.all(Psi[[0, 3], 0] > 0) and np.all(Psi[[1, 4], 1] > 0)


def test_virtual_node_rejects_empty(curved_small):
    with pytest.raises(ValueError):
        virtual_node_interface(curved_small, [])


def test_principal_angles_of_rotated_basis(rng):
    A = rng.standard_normal((10, 3))
    B = A @ la.expm(rng.standard_normal((3, 3)) * 0.1)
    assert principal_angles(A, B).max() < 1e-12
    C = rng.standard_normal((10, 3))
    assert principal_angles(A, C).max() > 1e-3

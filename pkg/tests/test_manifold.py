import numpy as np
import pytest
from conftest import cut, rel

from nlcb import build_rom, principal_angles
from nlcb.manifold import Manifold, compute_manifold, quadratic_rhs, rhs_pairs
from nlcb.rom import reduced_layout
from nlcb.verify import scaling_probe, static_condensation_oracle


@pytest.fixture(scope="module")
def built(curved_medium):
    part = cut(curved_medium, 0.6)
    layout = reduced_layout(part, 2)
    mans = [compute_manifold(s, 2, Psi) for s, Psi in zip(part.substructures, layout.Psi)]
    return part, mans


def _span_cb(sub, man):
    B = man.basis
    V = np.zeros_like(man.L_Gamma)
    V[: sub.n_u, : B.n_phi] = B.Phi
    V[: sub.n_u, B.n_phi :] = B.S @ B.Psi
    V[sub.n_u :, B.n_phi :] = B.Psi
    return V


def test_linear_part_spans_craig_bampton_subspace(built):
    part, mans = built
    for sub, man in zip(part.substructures, mans):
        assert principal_angles(man.L_Gamma, _span_cb(sub, man)).max() < 1e-8


def test_enslaved_part_mass_orthogonal_to_kept_modes(built):
    part, mans = built
    for sub, man in zip(part.substructures, mans):
        M_uu = sub.blocks(sub.operators[0])[0]
        Phi = man.basis.Phi
        assert np.abs(Phi.T @ M_uu @ man.PhiHat_B).max() < 1e-10 * np.abs(man.PhiHat_B).max()
        Qu = man.Q_Gamma[: sub.n_u].reshape(sub.n_u, -1)
        assert np.abs(Phi.T @ M_uu @ Qu).max() < 1e-10 * np.abs(Qu).max() * np.abs(M_uu @ Phi).sum(axis=0).max()


def test_linear_stiffness_coupling_with_quadratic_part_vanishes(built):
    part, mans = built
    for sub, man in zip(part.substructures, mans):
        K = sub.operators[1]
        Q = man.Q_Gamma.reshape(sub.n, -1)
        KQ = K @ Q
        cross = man.L_Gamma.T @ KQ
        scale = np.abs(man.L_Gamma).sum(axis=0).max() * np.abs(KQ).max()
        assert np.abs(cross).max() < 1e-10 * scale


def test_quadratic_part_symmetric_and_internal_only(built):
    part, mans = built
    for sub, man in zip(part.substructures, mans):
        assert np.array_equal(man.Q_Gamma, man.Q_Gamma.transpose(0, 2, 1))
        assert np.all(man.Q_Gamma[sub.n_u :] == 0)


def test_exact_and_finite_difference_rhs_agree(built):
    part, mans = built
    for sub, man in zip(part.substructures, mans):
        F_ex, _ = quadratic_rhs(sub, man.L_Gamma, man.n_phi, "exact")
        F_fd, _ = quadratic_rhs(sub, man.L_Gamma, man.n_phi, "fd")
        for col in range(F_ex.shape[1]):
            assert rel(F_ex[:, col], F_fd[:, col]) < 1e-6


def test_taylor_accuracy_against_static_condensation(built, rng):
    part, mans = built
    t = part.model.section.thickness
    for sub, man in zip(part.substructures, mans):
        B = man.basis
        for _ in range(3):
            xi = rng.standard_normal(man.m)
            xi *= t / np.abs(man.L_Gamma @ xi).max()

            def err(x):
                ref = static_condensation_oracle(sub, x[: man.n_phi], x[man.n_phi :], B.Phi, B.Psi)
                return ref - man.displacement(x)

            assert scaling_probe(err, xi, (1e-3, 1e-1), n=5) >= 2.9


def test_oracle_zero_state(built):
    part, mans = built
    sub, man = part.substructures[0], mans[0]
    d = static_condensation_oracle(sub, np.zeros(man.n_phi), np.zeros(man.n_chi), man.basis.Phi, man.basis.Psi)
    assert np.all(d == 0)


def test_displacement_and_tangent(built, rng):
    _, mans = built
    man = mans[0]
    assert np.all(man.displacement(np.zeros(man.m)) == 0)
    assert np.array_equal(man.tangent(np.zeros(man.m)), man.L_Gamma)
    xi, v = rng.standard_normal((2, man.m)) * 1e-3
    h = 1e-6
    fd = (man.displacement(xi + h * v) - man.displacement(xi - h * v)) / (2 * h)
    assert rel(man.tangent(xi) @ v, fd) < 1e-8


@pytest.mark.parametrize(
    "kind, zero",
    [
        ("quadratic", (slice(None), slice(None))),
        ("quadratic-chi", (slice(2, None), slice(2, None))),
        ("quadratic-cross", (slice(None, 2), slice(2, None))),
    ],
)
def test_ablations_zero_their_block(built, kind, zero):
    _, mans = built
    man = mans[0]
    ab = man.ablate(kind)
    assert np.all(ab.Q_Gamma[:, zero[0], zero[1]] == 0)
    assert np.array_equal(ab.Q_Gamma, ab.Q_Gamma.transpose(0, 2, 1))
    assert np.abs(man.Q_Gamma[:, zero[0], zero[1]]).max() > 0
    assert man.ablate("none").Q_Gamma is not man.Q_Gamma
    with pytest.raises(ValueError):
        man.ablate("cubic")


def test_dump_round_trip(built, tmp_path):
    _, mans = built
    man = mans[0]
    path = tmp_path / "m.bin"
    man.dump(path)
    back = Manifold.load(path)
    assert np.array_equal(back.L_Gamma, man.L_Gamma)
    assert np.array_equal(back.Q_Gamma, man.Q_Gamma)
    assert (back.n_phi, back.n_chi) == (man.n_phi, man.n_chi)
    path.write_bytes(b"garbage!" + path.read_bytes()[8:])
    with pytest.raises(ValueError):
        Manifold.load(path)


def test_rhs_pair_order():
    pairs = rhs_pairs(2, 2)
    assert pairs == [(0, 0), (0, 1), (1, 1), (2, 2), (2, 3), (3, 3), (0, 2), (0, 3), (1, 2), (1, 3)]
    assert len(rhs_pairs(4, 3)) == 7 * 8 // 2


def test_unknown_rhs_method(built):
    part, mans = built
    with pytest.raises(ValueError):
        quadratic_rhs(part.substructures[0], mans[0].L_Gamma, 2, method="spline")


def test_flat_and_curved_dimensions(flat_small, curved_small):
    assert build_rom(cut(flat_small, 0.6), 1)[0].m == 5
    assert build_rom(cut(curved_small, 0.6), 4)[0].m == 11

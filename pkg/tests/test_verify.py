import numpy as np
import pytest
from conftest import LENGTH, STEEL, STRIP, rel
from hypothesis import given, settings
from hypothesis import strategies as st

from nlcb import Model, clamped_beam
from nlcb.fe import element_operators
from nlcb.verify import (
    element_energy_oracle,
    energy_oracle,
    global_tensor_oracle,
    scaling_probe,
    tensor_force,
)


def test_dense_oracle_refuses_large_models():
    with pytest.raises(ValueError, match="capped"):
        global_tensor_oracle(clamped_beam(LENGTH, 40, STRIP, STEEL))


def test_single_free_element_tensors_equal_element_tensors():
    coords = np.array([[0.0, 0.0], [0.01, 0.002]])
    model = Model(coords, [[0, 1]], STRIP, STEEL)
    K2, K3 = global_tensor_oracle(model)
    et = element_operators(coords, STRIP, STEEL)
    assert np.array_equal(K2, et.K2e)
    assert np.array_equal(K3, et.K3e)


def test_quadratic_tensor_is_stiffness_derivative(curved_small, rng):
    K2, _ = global_tensor_oracle(curved_small)
    for _ in range(5):
        v, w = rng.standard_normal((2, curved_small.n_dofs))
        ref = 2 * np.einsum("ijk,j,k->i", K2, v, w)
        assert rel(curved_small.kernel.stiffness_derivative(v, w), ref) < 1e-9


def test_dense_tensor_force_matches_quadrature_kernel(curved_small, rng):
    K2, K3 = global_tensor_oracle(curved_small)
    K = curved_small.kernel.stiffness().toarray()
    for _ in range(100):
        d = rng.standard_normal(curved_small.n_dofs) * 10 ** rng.uniform(-6, -3)
        assert rel(tensor_force(K, K2, K3, d), curved_small.kernel.force(d)) < 1e-12


def test_energy_oracle_matches_kernel_energy(curved_small, rng):
    assert energy_oracle(curved_small, np.zeros(curved_small.n_dofs)) == 0
    d = rng.standard_normal(curved_small.n_dofs)
    assert np.isclose(energy_oracle(curved_small, d), curved_small.kernel.strain_energy(d), rtol=1e-11)


@settings(max_examples=25, deadline=None)
@given(
    slope=st.floats(-0.3, 0.3),
    theta=st.floats(-np.pi, np.pi),
)
def test_element_energy_vanishes_under_rigid_translation(slope, theta):
    coords = np.array([[0.0, 0.0], [0.01, 0.01 * slope]])
    shift = np.array([np.cos(theta), np.sin(theta), 0.0]) * 1e-4
    de = np.concatenate([shift, shift])
    # a uniform shift leaves every displacement derivative unchanged
    assert abs(element_energy_oracle(coords, STRIP, STEEL, de)) < 1e-20


@pytest.mark.parametrize("power", [1, 3])
def test_scaling_probe_recovers_power(power, rng):
    directions = rng.standard_normal((3, 4))
    assert abs(scaling_probe(lambda x: x**power, directions) - power) < 1e-10


def test_scaling_probe_rejects_vanishing_function():
    with pytest.raises(ValueError):
        scaling_probe(lambda x: 0.0 * x, np.ones(3))

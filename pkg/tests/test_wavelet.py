import numpy as np
import pytest

from mswt.errors import DimensionError, ValidationError
from mswt.tensor import Tensor, grad_check, mul, sum as tensor_sum
from mswt.wavelet import HAAR, SUBBANDS, SubbandStack, dwt2, haar_dwt1d_multilevel, haar_idwt1d_multilevel, idwt2


def test_filters_are_orthonormal():
    stacked = HAAR.psi.reshape(4, 4)
    assert np.allclose(stacked @ stacked.T, np.eye(4), atol=1e-15)
    assert SUBBANDS == ("LL", "LH", "HL", "HH")
    with pytest.raises(ValueError):
        HAAR.psi[0, 0, 0] = 1.0


def test_closed_form_two_by_two():
    x = Tensor(np.array([[1.0, 2.0], [3.0, 4.0]])[..., None])
    stack = dwt2(x)
    assert stack.subband("LL")[0, 0, 0] == pytest.approx(5.0, abs=1e-15)
    assert stack.subband("LH")[0, 0, 0] == pytest.approx(-1.0, abs=1e-15)
    assert stack.subband("HL")[0, 0, 0] == pytest.approx(-2.0, abs=1e-15)
    assert stack.subband("HH")[0, 0, 0] == pytest.approx(0.0, abs=1e-15)


def test_constant_field_only_fills_ll():
    x = Tensor(np.full((4, 6, 1), 3.0))
    stack = dwt2(x)
    assert np.allclose(stack.subband("LL"), 6.0)
    for name in ("LH", "HL", "HH"):
        assert np.allclose(stack.subband(name), 0.0, atol=1e-15)


@pytest.mark.parametrize("height", [2, 3, 7, 16, 33, 65])
@pytest.mark.parametrize("width", [2, 5, 12, 64])
@pytest.mark.parametrize("channels", [1, 4])
def test_perfect_reconstruction(rng, height, width, channels):
    x = rng.standard_normal((height, width, channels))
    restored = idwt2(dwt2(Tensor(x))).data
    assert restored.shape == x.shape
    assert np.max(np.abs(restored - x)) <= 1e-12


def test_batched_reconstruction(rng):
    x = rng.standard_normal((3, 6, 10, 2))
    assert np.max(np.abs(idwt2(dwt2(Tensor(x))).data - x)) <= 1e-12


def test_energy_preserved_for_even_extents(rng):
    x = rng.standard_normal((8, 12, 3))
    coefficients = dwt2(Tensor(x)).values.data
    assert np.linalg.norm(coefficients) == pytest.approx(np.linalg.norm(x), rel=1e-12)


def test_odd_extent_output_size(rng):
    stack = dwt2(Tensor(rng.standard_normal((5, 7, 2))))
    assert stack.values.shape == (3, 4, 8)
    assert stack.original_extents == (5, 7)


def test_subband_stack_validation():
    with pytest.raises(DimensionError):
        SubbandStack(Tensor(np.zeros((2, 2, 3))), (4, 4))
    with pytest.raises(ValidationError):
        SubbandStack(Tensor(np.zeros((2, 2, 4))), (8, 4))


def test_multilevel_matches_pairwise_recursion():
    f = np.array([1.0, 2.0, 3.0, 4.0])
    alpha, details = haar_dwt1d_multilevel(f)
    assert alpha == pytest.approx(5.0)
    assert details[0] == pytest.approx([-1 / np.sqrt(2), -1 / np.sqrt(2)])
    assert details[1] == pytest.approx([-2.0])


def test_multilevel_round_trip_and_norm(rng):
    f = rng.standard_normal(64)
    alpha, details = haar_dwt1d_multilevel(f)
    assert len(details) == 6
    energy = alpha ** 2 + sum(np.sum(d ** 2) for d in details)
    assert np.sqrt(energy) == pytest.approx(np.linalg.norm(f), rel=1e-12)
    assert np.max(np.abs(haar_idwt1d_multilevel(alpha, details) - f)) <= 1e-12


def test_multilevel_rejects_non_power_of_two():
    with pytest.raises(ValidationError):
        haar_dwt1d_multilevel(np.ones(6))


def test_one_d_and_two_d_agree_on_separable_rows(rng):
    # A field constant along axis 1 has zero LH/HH and an LL/HL pair equal to
    # the first 1-D level scaled by sqrt(2).
    column = rng.standard_normal(8)
    x = np.repeat(column[:, None], 4, axis=1)[..., None]
    stack = dwt2(Tensor(x))
    alpha_pairs = (column[0::2] + column[1::2]) / np.sqrt(2)
    detail_pairs = (column[0::2] - column[1::2]) / np.sqrt(2)
    _, details = haar_dwt1d_multilevel(column)
    assert np.allclose(details[0], detail_pairs, atol=1e-15)
    assert np.allclose(stack.subband("LL")[:, 0, 0], np.sqrt(2) * alpha_pairs, atol=1e-14)
    assert np.allclose(stack.subband("HL")[:, 0, 0], np.sqrt(2) * detail_pairs, atol=1e-14)
    assert np.allclose(stack.subband("LH"), 0.0, atol=1e-14)
    assert np.allclose(stack.subband("HH"), 0.0, atol=1e-14)


def test_gradients_flow_through_both_transforms(rng):
    params = {"x": Tensor(rng.standard_normal((6, 4, 2)))}
    weights = Tensor(rng.standard_normal((6, 4, 2)))

    def f(p):
        restored = idwt2(dwt2(mul(p["x"], p["x"])))
        return tensor_sum(mul(restored, weights))

    assert grad_check(f, params) <= 1e-5


def test_dwt2_is_linear(rng):
    x, y = rng.standard_normal((6, 10, 2)), rng.standard_normal((6, 10, 2))
    combined = dwt2(Tensor(2.0 * x - 0.5 * y)).values.data
    separate = 2.0 * dwt2(Tensor(x)).values.data - 0.5 * dwt2(Tensor(y)).values.data
    assert np.max(np.abs(combined - separate)) <= 1e-12


def test_alternating_columns_only_fill_lh():
    x = np.tile((-1.0) ** np.arange(6), (4, 1))[..., None]
    stack = dwt2(Tensor(x))
    assert np.allclose(stack.subband("LH"), 2.0, atol=1e-15)
    for name in ("LL", "HL", "HH"):
        assert np.allclose(stack.subband(name), 0.0, atol=1e-15)
    assert np.sum(stack.subband("LH") ** 2) == pytest.approx(np.sum(x ** 2), rel=1e-14)


def test_odd_extents_wrap_before_transforming(rng):
    x = rng.standard_normal((3, 3, 1))
    wrap = np.array([0, 1, 2, 0])
    extended = x[wrap][:, wrap]
    stack = dwt2(Tensor(x))
    assert stack.values.shape == (2, 2, 4)
    for name in SUBBANDS:
        psi = HAAR.filter(name)
        expected = np.array([
            [np.sum(extended[2 * i:2 * i + 2, 2 * j:2 * j + 2, 0] * psi) for j in range(2)]
            for i in range(2)
        ])
        assert np.allclose(stack.subband(name)[..., 0], expected, atol=1e-14)
    assert np.allclose(stack.values.data, dwt2(Tensor(extended)).values.data, atol=1e-15)

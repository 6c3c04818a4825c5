import numpy as np
import pytest

from conftest import make_gbuffer
from neural_deferred.core import ContractError, Image
from neural_deferred.shadow_net import ShadowNet, apply_shadow, estimate_shadow, shadow_input


def _inputs(rng, h, w):
    return (Image(rng.random((h, w, 3))), Image(rng.random((h, w, 3))), Image(rng.random((h, w, 1))))


def test_zero_final_layer_gives_half(rng):
    net = ShadowNet(True, seed=0, final_bias=0.0)
    s = estimate_shadow(net, *_inputs(rng, 16, 16))
    assert np.allclose(s.data, 0.5)


@pytest.mark.parametrize("size", [64, 128])
def test_shape_preserved_and_in_range(rng, size):
    net = ShadowNet(True, seed=1)
    net.params[-2][...] = rng.normal(scale=0.5, size=net.params[-2].shape)
    s = estimate_shadow(net, *_inputs(rng, size, size))
    assert s.data.shape == (size, size, 1)
    assert np.all((s.data > 0) & (s.data < 1))


def test_deterministic(rng):
    net = ShadowNet(False, seed=1)
    x = _inputs(rng, 16, 16)
    assert np.array_equal(estimate_shadow(net, *x).data, estimate_shadow(net, *x).data)


def test_resolution_mismatch(rng):
    net = ShadowNet(True)
    u, n, _ = _inputs(rng, 16, 16)
    with pytest.raises(ContractError):
        estimate_shadow(net, u, n, Image(np.ones((8, 8, 1))))
    with pytest.raises(ContractError):
        apply_shadow(u, np.ones((8, 8, 1)))


def test_apply_shadow_identities(rng):
    u = rng.random((4, 4, 3))
    assert np.array_equal(apply_shadow(u, np.ones((4, 4, 1))), u)
    assert np.all(apply_shadow(u, np.zeros((4, 4))) == 0)
    assert np.array_equal(apply_shadow(u, np.full((4, 4, 1), 0.5)), u * 0.5)


def test_apply_shadow_never_brightens(rng):
    net = ShadowNet(True, seed=2)
    net.params[-2][...] = rng.normal(size=net.params[-2].shape)
    u, n, ao = _inputs(rng, 16, 16)
    out = apply_shadow(u, estimate_shadow(net, u, n, ao))
    assert np.all(out.data <= u.data)


def test_shadow_input_channels():
    g = make_gbuffer(8, 8)
    u = np.zeros((8, 8, 3))
    assert shadow_input(u, g, True).shape == (8, 8, 7)
    assert shadow_input(u, g, False).shape == (8, 8, 6)


def test_odd_sizes_rejected():
    with pytest.raises(ContractError):
        ShadowNet(True)(np.zeros((1, 12, 12, 7)))

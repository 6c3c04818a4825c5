import numpy as np
import pytest

from conftest import random_unit
from neural_deferred.core import ContractError
from neural_deferred.envmap import (EnvironmentMap, dir_to_uv, load_envmap, load_hdr, load_pfm,
                                    lookup, save_pfm, uv_to_dir)


def test_zenith_and_nadir_rows():
    assert dir_to_uv(np.array([0.0, 1.0, 0.0]))[1] == 0.0
    assert dir_to_uv(np.array([0.0, -1.0, 0.0]))[1] == pytest.approx(1.0)


def test_forward_direction_maps_to_center():
    u, v = dir_to_uv(np.array([0.0, 0.0, -1.0]))
    assert (u, v) == pytest.approx((0.5, 0.5))


def test_uv_center_maps_to_forward():
    assert uv_to_dir(0.5, 0.5) == pytest.approx([0.0, 0.0, -1.0], abs=1e-15)


@pytest.mark.parametrize("u", [0.0, 0.3, 0.99])
def test_zenith_is_u_degenerate(u):
    assert uv_to_dir(u, 0.0) == pytest.approx([0.0, 1.0, 0.0])


def test_round_trip_away_from_poles(rng):
    d = random_unit(rng, 5000)
    d = d[np.abs(d[:, 1]) < 0.999]
    back = uv_to_dir(*dir_to_uv(d))
    assert np.max(np.linalg.norm(back - d, axis=1)) < 1e-6
    assert np.max(np.abs(np.linalg.norm(back, axis=1) - 1)) < 1e-6


def test_contract_violations():
    with pytest.raises(ContractError):
        dir_to_uv(np.array([0.0, 0.0, -2.0]))
    with pytest.raises(ContractError):
        uv_to_dir(1.5, 0.2)


def test_constant_map_lookup(rng):
    env = EnvironmentMap(np.full((8, 16, 3), 2.0))
    assert np.allclose(lookup(env, random_unit(rng, 100)), 2.0)


def test_texel_center_and_midpoint_2x1():
    env = EnvironmentMap(np.array([[[1.0, 2.0, 3.0], [5.0, 6.0, 7.0]]]))
    at_center = uv_to_dir(0.25, 0.5)
    assert lookup(env, at_center) == pytest.approx([1.0, 2.0, 3.0])
    midway = uv_to_dir(0.5, 0.5)
    assert lookup(env, midway) == pytest.approx([3.0, 4.0, 5.0])


def test_lookup_wraps_horizontally():
    r = np.zeros((1, 2, 3))
    r[0, 0] = 1.0
    r[0, 1] = 3.0
    env = EnvironmentMap(r)
    # u = 0 sits halfway between the last and first texel centers
    assert lookup(env, uv_to_dir(0.0, 0.5)) == pytest.approx([2.0, 2.0, 2.0])


def test_lookup_scales_exactly_and_stays_non_negative(rng):
    base = rng.random((16, 32, 3))
    d = random_unit(rng, 500)
    a = lookup(EnvironmentMap(base), d)
    b = lookup(EnvironmentMap(base * 4.0), d)
    assert np.array_equal(b, a * 4.0)
    assert np.all(a >= 0)


def test_bad_maps_rejected():
    with pytest.raises(ContractError):
        EnvironmentMap(np.ones((16, 33, 3)))
    with pytest.raises(ContractError):
        EnvironmentMap(-np.ones((4, 8, 3)))


def test_pfm_round_trip(tmp_path, rng):
    env = EnvironmentMap(rng.random((16, 32, 3)).astype(np.float32))
    save_pfm(env, tmp_path / "e.pfm")
    back = load_pfm(tmp_path / "e.pfm")
    assert back.radiance.tobytes() == env.radiance.tobytes()


def test_pfm_grayscale_and_aspect_rejected(tmp_path):
    from neural_deferred.core import write_pfm
    write_pfm(tmp_path / "g.pfm", np.ones((16, 32, 1), np.float32))
    with pytest.raises(ContractError):
        load_pfm(tmp_path / "g.pfm")
    write_pfm(tmp_path / "a.pfm", np.ones((16, 33, 3), np.float32))
    with pytest.raises(ContractError, match="2:1"):
        load_pfm(tmp_path / "a.pfm")


def test_pfm_negative_and_nan_rejected(tmp_path):
    from neural_deferred.core import write_pfm
    bad = np.ones((4, 8, 3), np.float32)
    bad[0, 0, 0] = -1
    write_pfm(tmp_path / "n.pfm", bad)
    with pytest.raises(ContractError):
        load_pfm(tmp_path / "n.pfm")
    bad[0, 0, 0] = np.nan
    write_pfm(tmp_path / "nan.pfm", bad)
    with pytest.raises(ContractError):
        load_pfm(tmp_path / "nan.pfm")


# Reference RGBE encoder (flat and RLE) to exercise the reader.

def _float_to_rgbe(rgb):
    m = rgb.max(axis=-1)
    out = np.zeros(rgb.shape[:-1] + (4,), np.uint8)
    ok = m > 1e-32
    mant, exp = np.frexp(m[ok])
    scale = mant * 256.0 / m[ok]
    out[ok, :3] = np.floor(rgb[ok] * scale[:, None]).astype(np.uint8)
    out[ok, 3] = (exp + 128).astype(np.uint8)
    return out


def _rle_channel(values):
    out = bytearray()
    i = 0
    n = len(values)
    while i < n:
        run = 1
        while i + run < n and run < 127 and values[i + run] == values[i]:
            run += 1
        if run > 2:
            out += bytes([128 + run, values[i]])
            i += run
        else:
            j = i
            while j < n and j - i < 128 and not (j + 2 < n and values[j] == values[j + 1] == values[j + 2]):
                j += 1
            out += bytes([j - i]) + bytes(values[i:j])
            i = j
    return bytes(out)


def _write_hdr(path, rgb, rle):
    rgbe = _float_to_rgbe(rgb)
    h, w = rgb.shape[:2]
    parts = [b"#?RADIANCE\nFORMAT=32-bit_rle_rgbe\n\n", f"-Y {h} +X {w}\n".encode()]
    for y in range(h):
        if rle:
            parts.append(bytes([2, 2, w >> 8, w & 255]))
            for c in range(4):
                parts.append(_rle_channel(list(rgbe[y, :, c])))
        else:
            parts.append(rgbe[y].tobytes())
    path.write_bytes(b"".join(parts))
    return rgbe


@pytest.mark.parametrize("rle", [False, True])
def test_hdr_reader_decodes_rgbe(tmp_path, rng, rle):
    rgb = rng.random((8, 16, 3)) * 4.0
    rgb[2, 3:9] = 0.75  # a run for the RLE path
    rgbe = _write_hdr(tmp_path / "x.hdr", rgb, rle)
    env = load_hdr(tmp_path / "x.hdr")
    e = rgbe[..., 3].astype(int)
    expected = (rgbe[..., :3] + 0.5) * np.ldexp(1.0, e - 136)[..., None]
    assert np.allclose(env.radiance, expected, rtol=1e-6)
    # quantization error is bounded by the brightest channel of each texel
    bound = rgb.max(axis=-1, keepdims=True) * 2 ** -7
    assert np.all(np.abs(env.radiance - rgb) <= bound)


def test_load_envmap_applies_exposure(tmp_path, rng):
    env = EnvironmentMap(rng.random((4, 8, 3)).astype(np.float32))
    save_pfm(env, tmp_path / "e.pfm")
    assert np.allclose(load_envmap(tmp_path / "e.pfm", 2.0).radiance, env.radiance * 2.0)

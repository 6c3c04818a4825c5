"""Fast invariant probes behind ``neural-deferred check``.

Each probe prints one ``PASS``/``FAIL`` line; the whole suite takes a few seconds.
"""

from __future__ import annotations

import numpy as np

from .envmap import EnvironmentMap, dir_to_uv, lookup, uv_to_dir
from .metrics import psnr_from_mse, ssim
from .nn import Mlp
from .sampling import Rng, sample_uniform_hemisphere, tangent_frame
from .shading import LightSample, SurfacePoint, fresnel_schlick, ggx_ndf, ggx_specular, shade_classical
from .shadow_net import ShadowNet, apply_shadow


def _units(gen, n):
    v = gen.normal(size=(n, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def _fd_rel_err(f, params, grads, gen, per=6, eps=1e-6):
    num, ana = [], []
    for p, g in zip(params, grads):
        flat = p.reshape(-1)
        for i in gen.choice(flat.size, min(per, flat.size), replace=False):
            old = flat[i]
            flat[i] = old + eps
            hi = f()
            flat[i] = old - eps
            lo = f()
            flat[i] = old
            num.append((hi - lo) / (2 * eps))
            ana.append(g.reshape(-1)[i])
    num, ana = np.array(num), np.array(ana)
    return np.linalg.norm(num - ana) / max(np.linalg.norm(num), np.linalg.norm(ana), 1e-12)


def check_furnace(gen):
    n = np.array([0.0, 0.0, 1.0])
    d = sample_uniform_hemisphere(n, 200_000, Rng(int(gen.integers(1 << 31))))
    pt = SurfacePoint(np.ones(3), n, np.array(0.0), np.array(0.5))
    out = shade_classical(pt, n, LightSample(d, np.ones_like(d)))
    return bool(np.all(np.abs(out - 1) < 0.02)), f"albedo {out[0]:.4f}"


def check_ggx(gen):
    d_ok = abs(ggx_ndf(1.0, 0.5) - 1 / (np.pi * 0.25)) < 1e-6
    f_ok = fresnel_schlick(1.0, 0.04) == 0.04
    m = 10_000
    n = _units(gen, m)
    pt = SurfacePoint(gen.random((m, 3)), n, gen.random(m), gen.uniform(0.05, 1, m))
    l, v = (np.where((np.sum(x * n, -1) < 0)[:, None], -x, x) for x in (_units(gen, m), _units(gen, m)))
    a, b = ggx_specular(pt, l, v), ggx_specular(pt, v, l)
    recip = np.max(np.abs(a - b) / np.maximum(1, np.abs(a)))
    return d_ok and f_ok and recip < 1e-5, f"reciprocity {recip:.1e}"


def check_sampling(gen):
    n = _units(gen, 50)
    d = sample_uniform_hemisphere(n, 2000, Rng(1))
    cos = np.einsum("pk,pnk->pn", n, d)
    t, b, nn = tangent_frame(n)
    det = np.linalg.det(np.stack([t, b, nn], -1))
    ok = cos.min() >= -1e-12 and abs(cos.mean() - 0.5) < 0.01 and np.allclose(det, 1, atol=1e-6)
    return ok, f"mean cos {cos.mean():.4f}"


def check_envmap(gen):
    d = _units(gen, 1000)
    d = d[np.abs(d[:, 1]) < 0.999]
    err = np.max(np.linalg.norm(uv_to_dir(*dir_to_uv(d)) - d, axis=1))
    const = lookup(EnvironmentMap(np.full((8, 16, 3), 0.7)), d)
    return err < 1e-6 and np.allclose(const, 0.7), f"round trip {err:.1e}"


def check_metrics(gen):
    a = gen.random((16, 16, 3))
    return psnr_from_mse(0.01) == 20.0 and abs(ssim(a, a) - 1) < 1e-12, "psnr/ssim identities"


def check_mlp_gradient(gen):
    net = Mlp([6, 5, 3], seed=int(gen.integers(1 << 31)), dtype=np.float64)
    x = gen.normal(size=(4, 6))
    w = gen.normal(size=(4, 3))
    y, cache = net.forward(x)
    grads, _ = net.backward(cache, w)
    err = _fd_rel_err(lambda: float(np.sum(w * net(x))), net.params, grads, gen)
    return err < 1e-4, f"rel err {err:.1e}"


def check_shadow_gradient(gen):
    net = ShadowNet(True, seed=int(gen.integers(1 << 31)), dtype=np.float64)
    net.params[-2][...] = gen.normal(scale=0.3, size=net.params[-2].shape)
    x = gen.random((1, 8, 8, 7))
    u = gen.random((8, 8, 3))
    w = gen.normal(size=(8, 8, 3))
    s, cache = net.forward(x)
    grads = net.backward(cache, np.sum(w * u, -1, keepdims=True)[None])
    err = _fd_rel_err(lambda: float(np.sum(w * apply_shadow(u, net(x)[0]))), net.params, grads, gen)
    return err < 1e-4, f"rel err {err:.1e}"


CHECKS = [check_furnace, check_ggx, check_sampling, check_envmap, check_metrics,
          check_mlp_gradient, check_shadow_gradient]


def run_checks(seed: int = 0, out=print) -> int:
    """Run every probe and return the number of failures."""
    failures = 0
    for fn in CHECKS:
        gen = np.random.default_rng([seed, CHECKS.index(fn)])
        try:
            ok, detail = fn(gen)
        except Exception as exc:  # a crash is a failure, keep going
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        failures += not ok
        out(f"{'PASS' if ok else 'FAIL'} {fn.__name__[6:]}: {detail}")
    return failures

"""Central-difference gradient checks shared by the unit and acceptance suites."""

import numpy as np

from neural_deferred.neural_shader import pixel_features, ray_features, shade_grouped
from neural_deferred.shading import LightSample, SurfacePoint
from neural_deferred.shadow_net import ShadowNet, apply_shadow

EPS = 1e-5  # float64 roundoff dominates below this; truncation error is O(EPS^2)


def rel_err(analytic, numeric):
    a = np.asarray(analytic, float).ravel()
    n = np.asarray(numeric, float).ravel()
    scale = max(np.linalg.norm(a), np.linalg.norm(n), 1e-12)
    return float(np.linalg.norm(a - n) / scale)


def numeric_grad(f, x, entries):
    """Central differences of scalar ``f()`` w.r.t. flat ``entries`` of array ``x`` (in place)."""
    flat = x.reshape(-1)
    out = np.empty(len(entries))
    for k, i in enumerate(entries):
        old = flat[i]
        flat[i] = old + EPS
        hi = f()
        flat[i] = old - EPS
        lo = f()
        flat[i] = old
        out[k] = (hi - lo) / (2 * EPS)
    return out


def check_arrays(f, arrays, grads, gen, per_array=12):
    """Worst relative error over random entries of each array."""
    worst = 0.0
    for x, g in zip(arrays, grads):
        entries = gen.choice(x.size, min(per_array, x.size), replace=False)
        num = numeric_grad(f, x, entries)
        worst = max(worst, rel_err(g.reshape(-1)[entries], num))
    return worst


def dense_case(gen):
    from neural_deferred.nn.layers import dense_backward, dense_forward
    x = gen.normal(size=(5, 4))
    w = gen.normal(size=(4, 3))
    b = gen.normal(size=3)
    wt = gen.normal(size=(5, 3))

    def f():
        return float(np.sum(wt * dense_forward(x, w, b)))

    dx, dw, db = dense_backward(x, w, wt)
    return check_arrays(f, [x, w, b], [dx, dw, db], gen)


def conv_case(gen):
    from neural_deferred.nn.conv import (conv_backward, conv_forward, conv_transpose_backward,
                                         conv_transpose_forward)
    worst = 0.0
    for stride in (1, 2):
        x = gen.normal(size=(2, 6, 6, 3))
        w = gen.normal(size=(3, 3, 3, 4))
        b = gen.normal(size=4)
        y, cols = conv_forward(x, w, b, stride)
        wt = gen.normal(size=y.shape)

        def f():
            return float(np.sum(wt * conv_forward(x, w, b, stride)[0]))

        dx, dw, db = conv_backward(x.shape, cols, w, wt, stride)
        worst = max(worst, check_arrays(f, [x, w, b], [dx, dw, db], gen))
    y = gen.normal(size=(2, 3, 3, 4))
    w = gen.normal(size=(3, 3, 2, 4))
    b = gen.normal(size=2)
    wt = gen.normal(size=conv_transpose_forward(y, w, b).shape)

    def ft():
        return float(np.sum(wt * conv_transpose_forward(y, w, b)))

    dy, dw, db = conv_transpose_backward(y, w, wt)
    return max(worst, check_arrays(ft, [y, w, b], [dy, dw, db], gen))


def _random_pixels(gen, p, r):
    n = gen.normal(size=(p, 3))
    n /= np.linalg.norm(n, axis=1, keepdims=True)
    v = gen.normal(size=(p, 3))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    pt = SurfacePoint(gen.random((p, 3)), n, gen.random(p), gen.random(p))
    d = gen.normal(size=(p, r, 3))
    d /= np.linalg.norm(d, axis=-1, keepdims=True)
    samples = LightSample(d, gen.random((p, r, 3)) * 2)
    return pixel_features(pt, v), ray_features(n, samples)


def shader_case(gen, hidden=(8, 8)):
    """Per-pixel mean of per-ray MLP outputs, differentiated w.r.t. every weight."""
    from neural_deferred.neural_shader import make_shader_net
    net = make_shader_net(hidden, seed=int(gen.integers(1 << 30)), dtype=np.float64)
    for p in net.params[1::2]:
        p += gen.normal(scale=0.1, size=p.shape)
    pix, rays = _random_pixels(gen, 4, 5)
    wt = gen.normal(size=(4, 3))

    def f():
        return float(np.sum(wt * shade_grouped(net, pix, rays)[0]))

    y, cache = net.forward_grouped(pix, rays)
    dy = np.broadcast_to(wt[:, None, :] / y.shape[1], y.shape)
    grads, _ = net.backward(cache, dy)
    return check_arrays(f, net.params, grads, gen)


def shadow_pipeline_case(gen, use_ao=True):
    """Shaded image times learned shadow map, through both networks and the skip input."""
    from neural_deferred.neural_shader import make_shader_net
    h = w = 8
    mlp = make_shader_net((6,), seed=int(gen.integers(1 << 30)), dtype=np.float64)
    pix, rays = _random_pixels(gen, h * w, 3)
    normal = gen.normal(size=(h, w, 3))
    ao = gen.random((h, w, 1))
    net = ShadowNet(use_ao, seed=int(gen.integers(1 << 30)), dtype=np.float64)
    net.params[-2][...] = gen.normal(scale=0.3, size=net.params[-2].shape)
    wt = gen.normal(size=(h, w, 3))

    def compose():
        y, cache = mlp.forward_grouped(pix, rays)
        unshadowed = y.mean(axis=1).reshape(h, w, 3)
        x = np.concatenate([unshadowed, normal] + ([ao] if use_ao else []), axis=-1)[None]
        shadow, scache = net.forward(x)
        return unshadowed, y, cache, shadow[0], scache

    def f():
        u, _, _, s, _ = compose()
        return float(np.sum(wt * apply_shadow(u, s)))

    u, y, cache, s, scache = compose()
    dshadow = np.sum(wt * u, axis=-1, keepdims=True)
    sgrads, dx = net.backward(scache, dshadow[None], return_input_grad=True)
    du = wt * s + dx[0, ..., :3]
    dy = np.broadcast_to(du.reshape(-1, 1, 3) / y.shape[1], y.shape)
    mgrads, _ = mlp.backward(cache, dy)
    return check_arrays(f, net.params + mlp.params, sgrads + mgrads, gen, per_array=6)

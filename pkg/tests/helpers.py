"""Independent reference implementations used as test oracles.

Everything here is written as plain scalar loops, deliberately not
sharing code paths with the package: slow, obvious, and independently
derived, so agreement is evidence rather than tautology.
"""

from __future__ import annotations

import numpy as np

from aqrforecast.model import AqrParams, ModelHyper


def ref_forward(features, mask, params: AqrParams, clip: bool):
    """Scalar-loop forward pass for one sample; returns quantile list."""
    hp = params.hyper
    d, m = hp.n_lags, hp.n_levels
    x = [0.0 if mask[j] else float(features[j]) for j in range(d)]
    h = list(x)
    for l in range(hp.feature_layers):
        w = params.feature_weights[l]
        nh = []
        for i in range(d):
            acc = sum(float(w[i, j]) * h[j] for j in range(d))
            keep = 0.0 if mask[i] else 1.0
            nh.append(acc * keep + x[i])
        h = nh
    z = [h[i] + (float(params.adaptive_bias[i]) if mask[i] else 0.0) for i in range(d)]

    r = []
    for i in range(m):
        g = list(z)
        for l in range(hp.head_layers):
            w, b = params.head_weights[l][i], params.head_biases[l][i]
            g = [
                max(0.0, sum(float(w[a, j]) * g[j] for j in range(len(g))) + float(b[a]))
                for a in range(hp.hidden)
            ]
        r.append(sum(float(params.out_coeffs[i, j]) * g[j] for j in range(hp.hidden)))

    q = [r[0]]
    for i in range(1, m):
        q.append(q[-1] + max(0.0, r[i]))
    if clip:
        q = [min(1.0, max(0.0, v)) for v in q]
    return q


def ref_pinball(y: float, q: float, alpha: float) -> float:
    e = y - q
    return alpha * e if e >= 0 else (alpha - 1.0) * e


def ref_batch_loss(batch, params: AqrParams) -> float:
    levels = params.hyper.levels
    total = 0.0
    for i in range(len(batch)):
        q = ref_forward(batch.features[i], batch.mask[i], params, clip=False)
        for a, qa in zip(levels, q):
            total += ref_pinball(float(batch.targets[i]), qa, a)
    return total / (len(batch) * len(levels))


def grid_crps(quantiles, levels, y: float, step: float = 1e-5) -> float:
    """Riemann-sum CRPS over a uniform grid of the unit interval.

    Uses midpoint evaluation of the piecewise-linear CDF built from the
    same knot convention: (0,0), (q_i, a_i), (1,1).
    """
    knots_v = np.concatenate([[0.0], np.asarray(quantiles, dtype=float), [1.0]])
    knots_p = np.concatenate([[0.0], np.asarray(levels, dtype=float), [1.0]])
    grid = np.arange(0.0, 1.0, step) + step / 2.0
    cdf = np.interp(grid, knots_v, knots_p)
    ind = (grid >= y).astype(float)
    return float(np.sum((cdf - ind) ** 2) * step)


def random_params(rng: np.random.Generator, hyper: ModelHyper, scale: float = 1.0) -> AqrParams:
    """Params with entries drawn from scale * N(0,1); independent of init_params."""
    d, u, m = hyper.n_lags, hyper.hidden, hyper.n_levels
    return AqrParams(
        hyper=hyper,
        feature_weights=scale * rng.standard_normal((hyper.feature_layers, d, d)),
        adaptive_bias=scale * rng.standard_normal(d),
        head_weights=[
            scale * rng.standard_normal((m, u, d if l == 0 else u))
            for l in range(hyper.head_layers)
        ],
        head_biases=[scale * rng.standard_normal((m, u)) for l in range(hyper.head_layers)],
        out_coeffs=scale * rng.standard_normal((m, u)),
    )


def numeric_gradients(loss_fn, params: AqrParams, eps: float = 1e-5):
    """Central finite differences of loss_fn(params) for every entry."""
    grads = {}
    for name, arr in params.named_arrays():
        g = np.zeros_like(arr)
        flat = arr.reshape(-1)
        gf = g.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + eps
            up = loss_fn(params)
            flat[j] = orig - eps
            dn = loss_fn(params)
            flat[j] = orig
            gf[j] = (up - dn) / (2.0 * eps)
        grads[name] = g
    return grads


def kink_distances(batch, params: AqrParams) -> float:
    """Smallest |margin| across every relu and pinball kink in the batch.

    Margins collected: head-layer preactivations, the per-level increment
    readouts r_i for i >= 2, and the pinball residuals y - q_i. Gradcheck
    instances keep their distance above a floor so central differences
    never straddle a kink.
    """
    from aqrforecast.model import _forward_core  # white-box by design

    q, (mask_f, hs, z, r, ss, gs) = _forward_core(batch.features, batch.mask, params)
    margins = [np.abs(s).min() for s in ss]
    if r.shape[1] > 1:
        margins.append(np.abs(r[:, 1:]).min())
    margins.append(np.abs(batch.targets[:, None] - q).min())
    return float(min(margins))


def pattern_affine_map(params: AqrParams, pattern) -> tuple[np.ndarray, np.ndarray]:
    """Collapse the feature block for one fixed mask into z = A @ xhat + c.

    For a frozen pattern the block is affine in the zero-filled input, so
    the per-pattern submodel is quantile_head(A @ xhat + c). Built by
    matrix recursion, independently of the batched forward pass.
    """
    hp = params.hyper
    d = hp.n_lags
    keep = np.diag(1.0 - np.asarray(pattern, dtype=np.float64))
    a = np.eye(d)
    for l in range(hp.feature_layers):
        a = keep @ params.feature_weights[l] @ a + np.eye(d)
    c = params.adaptive_bias * np.asarray(pattern, dtype=np.float64)
    return a, c

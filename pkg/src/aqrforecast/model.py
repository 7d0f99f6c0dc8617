"""Missingness-adaptive non-crossing quantile regression network.

Forward pass, for a lag window x (NaN at missing lags) with mask m
(1 = missing) and quantile levels a_1 < ... < a_m:

1. zero fill:       xhat = x with NaN replaced by 0
2. feature block:   h0 = xhat;  h_l = (W_l h_{l-1}) * (1 - m) + h0
                    for l = 1..feature_layers (linear, no activation),
                    then z = h_last + b * m  (the bias term is the only
                    part of the block that switches on with missingness)
3. per-level head:  an MLP per level, g_l = relu(V_l g_{l-1} + c_l),
                    scalar readout r_i = w_i . g_last
4. non-crossing:    q_1 = r_1;  q_i = q_{i-1} + relu(r_i) for i > 1,
                    so predicted quantiles never cross by construction.

Forecast values are clipped to [0, 1] at prediction time only; the
training loss (mean pinball over samples and levels) uses the unclipped
quantiles so gradients stay alive at the boundary. Gradients are exact
reverse-mode accumulation through the recursion above, with subgradient 0
at relu and pinball kinks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ModelError
from .pipeline import LaggedSample, SampleBatch

__all__ = [
    "ModelHyper",
    "AqrParams",
    "QuantileForecast",
    "validate_levels",
    "init_params",
    "zero_fill",
    "feature_block",
    "quantile_head",
    "forward",
    "forward_batch",
    "pinball",
    "batch_loss",
    "loss_gradients",
    "loss_and_gradients",
]


def validate_levels(levels) -> tuple[float, ...]:
    out = tuple(float(a) for a in levels)
    if len(out) < 1:
        raise ModelError("need at least one quantile level")
    for a in out:
        if not 0.0 < a < 1.0:
            raise ModelError(f"quantile level {a} outside (0, 1)")
    if any(b <= a for a, b in zip(out, out[1:])):
        raise ModelError(f"quantile levels must be strictly increasing, got {out}")
    return out


@dataclass(frozen=True)
class ModelHyper:
    """Architecture constants: d lags in, per-level MLPs of width ``hidden``."""

    n_lags: int
    hidden: int = 64
    feature_layers: int = 3
    head_layers: int = 2
    levels: tuple[float, ...] = tuple(round(0.05 * i, 2) for i in range(1, 20))
    lead: int = 1
    init_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "levels", validate_levels(self.levels))
        for name in ("n_lags", "hidden", "feature_layers", "head_layers", "lead"):
            if getattr(self, name) < 1:
                raise ModelError(f"{name} must be >= 1, got {getattr(self, name)}")

    @property
    def n_levels(self) -> int:
        return len(self.levels)


@dataclass(frozen=True)
class QuantileForecast:
    """Quantile values, nondecreasing across strictly increasing levels."""

    levels: tuple[float, ...]
    values: np.ndarray

    def __post_init__(self):
        levels = validate_levels(self.levels)
        object.__setattr__(self, "levels", levels)
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.shape != (len(levels),):
            raise ModelError(
                f"forecast has {vals.shape} values for {len(levels)} levels"
            )
        if np.any(np.diff(vals) < 0):
            raise ModelError("forecast values must be nondecreasing across levels")
        object.__setattr__(self, "values", vals)


@dataclass(eq=False)
class AqrParams:
    """All trainable tensors plus the hyperparameters that fix their shapes.

    Canonical array order (used by the optimizer and the artifact format):
    feature_weights, adaptive_bias, head_weights_0..head_weights_{L2-1},
    head_biases_0..head_biases_{L2-1}, out_coeffs.
    """

    hyper: ModelHyper
    feature_weights: np.ndarray  # (feature_layers, d, d)
    adaptive_bias: np.ndarray  # (d,)
    head_weights: list[np.ndarray]  # [ (m, u, d), (m, u, u), ... ]
    head_biases: list[np.ndarray]  # [ (m, u), ... ]
    out_coeffs: np.ndarray  # (m, u)

    def __post_init__(self):
        hp = self.hyper
        d, u, m = hp.n_lags, hp.hidden, hp.n_levels
        expect = {
            "feature_weights": (hp.feature_layers, d, d),
            "adaptive_bias": (d,),
            "out_coeffs": (m, u),
        }
        for name, shape in expect.items():
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if arr.shape != shape:
                raise ModelError(f"{name} has shape {arr.shape}, expected {shape}")
            setattr(self, name, arr)
        if len(self.head_weights) != hp.head_layers or len(self.head_biases) != hp.head_layers:
            raise ModelError("head layer count does not match hyperparameters")
        fixed_w, fixed_b = [], []
        for l, (w, b) in enumerate(zip(self.head_weights, self.head_biases)):
            w = np.asarray(w, dtype=np.float64)
            b = np.asarray(b, dtype=np.float64)
            w_shape = (m, u, d if l == 0 else u)
            if w.shape != w_shape:
                raise ModelError(f"head_weights_{l} has shape {w.shape}, expected {w_shape}")
            if b.shape != (m, u):
                raise ModelError(f"head_biases_{l} has shape {b.shape}, expected {(m, u)}")
            fixed_w.append(w)
            fixed_b.append(b)
        self.head_weights = fixed_w
        self.head_biases = fixed_b
        for name, arr in self.named_arrays():
            if not np.all(np.isfinite(arr)):
                raise ModelError(f"parameter {name} contains non-finite entries")

    def named_arrays(self):
        """(name, array) pairs in the canonical order."""
        pairs = [
            ("feature_weights", self.feature_weights),
            ("adaptive_bias", self.adaptive_bias),
        ]
        pairs += [(f"head_weights_{l}", w) for l, w in enumerate(self.head_weights)]
        pairs += [(f"head_biases_{l}", b) for l, b in enumerate(self.head_biases)]
        pairs.append(("out_coeffs", self.out_coeffs))
        return pairs

    def copy(self) -> "AqrParams":
        return AqrParams(
            hyper=self.hyper,
            feature_weights=self.feature_weights.copy(),
            adaptive_bias=self.adaptive_bias.copy(),
            head_weights=[w.copy() for w in self.head_weights],
            head_biases=[b.copy() for b in self.head_biases],
            out_coeffs=self.out_coeffs.copy(),
        )


def init_params(hyper: ModelHyper) -> AqrParams:
    """Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) init, fixed draw order."""
    rng = np.random.default_rng(hyper.init_seed)
    d, u, m = hyper.n_lags, hyper.hidden, hyper.n_levels
    bd, bu = 1.0 / np.sqrt(d), 1.0 / np.sqrt(u)
    feature_weights = rng.uniform(-bd, bd, size=(hyper.feature_layers, d, d))
    adaptive_bias = rng.uniform(-bd, bd, size=d)
    head_weights, head_biases = [], []
    for l in range(hyper.head_layers):
        fan_in = d if l == 0 else u
        bound = bd if l == 0 else bu
        head_weights.append(rng.uniform(-bound, bound, size=(m, u, fan_in)))
        head_biases.append(rng.uniform(-bound, bound, size=(m, u)))
    out_coeffs = rng.uniform(-bu, bu, size=(m, u))
    return AqrParams(
        hyper=hyper,
        feature_weights=feature_weights,
        adaptive_bias=adaptive_bias,
        head_weights=head_weights,
        head_biases=head_biases,
        out_coeffs=out_coeffs,
    )


def zeros_like_params(hyper: ModelHyper) -> AqrParams:
    d, u, m = hyper.n_lags, hyper.hidden, hyper.n_levels
    return AqrParams(
        hyper=hyper,
        feature_weights=np.zeros((hyper.feature_layers, d, d)),
        adaptive_bias=np.zeros(d),
        head_weights=[
            np.zeros((m, u, d if l == 0 else u)) for l in range(hyper.head_layers)
        ],
        head_biases=[np.zeros((m, u)) for _ in range(hyper.head_layers)],
        out_coeffs=np.zeros((m, u)),
    )


# ---------------------------------------------------------------------------
# forward pass (batched core; the single-sample API wraps it)


def _zero_fill_batch(features: np.ndarray, mask_bool: np.ndarray) -> np.ndarray:
    # The mask is authoritative: every NaN must be flagged missing, but a
    # flagged coordinate may hold any value (it is zeroed out regardless),
    # which is what makes masked coordinates inert end to end.
    if np.any(np.isnan(features) & ~mask_bool):
        raise ModelError("feature is NA at a position the mask marks as observed")
    return np.where(mask_bool, 0.0, features)


def _feature_forward(xhat, keep, params, check=True):
    hs = [xhat]
    h = xhat
    for l, w in enumerate(params.feature_weights):
        h = (h @ w.T) * keep + xhat
        if check and not np.all(np.isfinite(h)):
            raise ModelError(f"non-finite feature-block output at layer {l + 1}")
        hs.append(h)
    return hs


def _head_forward(z, params):
    m = params.hyper.n_levels
    gs = [np.broadcast_to(z, (m,) + z.shape)]
    ss = []
    for w, b in zip(params.head_weights, params.head_biases):
        s = np.matmul(gs[-1], w.transpose(0, 2, 1)) + b[:, None, :]
        ss.append(s)
        gs.append(np.maximum(s, 0.0))
    r = np.matmul(gs[-1], params.out_coeffs[:, :, None])[:, :, 0].T  # (n, m)
    return r, ss, gs


def _compose_quantiles(r: np.ndarray) -> np.ndarray:
    if r.shape[1] == 1:
        return r.copy()
    inc = np.maximum(r[:, 1:], 0.0)
    return np.concatenate([r[:, :1], r[:, :1] + np.cumsum(inc, axis=1)], axis=1)


def _forward_core(features, mask, params):
    features = np.asarray(features, dtype=np.float64)
    mask = np.asarray(mask)
    if features.shape != mask.shape:
        raise ModelError("features and mask shapes differ")
    if features.shape[-1] != params.hyper.n_lags:
        raise ModelError(
            f"sample has {features.shape[-1]} lags, model expects {params.hyper.n_lags}"
        )
    mask_bool = mask.astype(bool)
    mask_f = mask_bool.astype(np.float64)
    xhat = _zero_fill_batch(features, mask_bool)
    hs = _feature_forward(xhat, 1.0 - mask_f, params)
    z = hs[-1] + mask_f * params.adaptive_bias
    r, ss, gs = _head_forward(z, params)
    return _compose_quantiles(r), (mask_f, hs, z, r, ss, gs)


def zero_fill(features, mask) -> np.ndarray:
    """Copy observed entries, set masked ones to 0."""
    features = np.asarray(features, dtype=np.float64)
    mask = np.asarray(mask)
    if features.ndim != 1 or features.shape != mask.shape:
        raise ModelError("zero_fill expects matching 1-D features and mask")
    return _zero_fill_batch(features, mask.astype(bool))


def feature_block(features, mask, params: AqrParams) -> np.ndarray:
    """Masked linear skip-connection stack plus the pattern-switched bias."""
    q, (mask_f, hs, z, *_rest) = _forward_core(
        np.asarray(features, dtype=np.float64)[None, :],
        np.asarray(mask)[None, :],
        params,
    )
    del q
    return z[0]


def quantile_head(z, params: AqrParams) -> QuantileForecast:
    """Per-level MLPs composed into nondecreasing quantiles (unclipped)."""
    z = np.asarray(z, dtype=np.float64)
    if z.shape != (params.hyper.n_lags,):
        raise ModelError(f"z has shape {z.shape}, expected ({params.hyper.n_lags},)")
    if not np.all(np.isfinite(z)):
        raise ModelError("z must be finite")
    r, _ss, _gs = _head_forward(z[None, :], params)
    q = _compose_quantiles(r)[0]
    return QuantileForecast(levels=params.hyper.levels, values=q)


def forward(sample: LaggedSample, params: AqrParams) -> QuantileForecast:
    """Full forecast for one sample, clipped to the physical range [0, 1]."""
    q, _ = _forward_core(sample.features[None, :], sample.mask[None, :], params)
    return QuantileForecast(
        levels=params.hyper.levels, values=np.clip(q[0], 0.0, 1.0)
    )


def forward_batch(features, mask, params: AqrParams, clip: bool = True) -> np.ndarray:
    """(n, m) quantile values for an (n, d) feature/mask batch."""
    q, _ = _forward_core(features, mask, params)
    return np.clip(q, 0.0, 1.0) if clip else q


# ---------------------------------------------------------------------------
# loss and exact gradients


def pinball(y: float, q: float, alpha: float) -> float:
    """max(alpha*(y-q), (alpha-1)*(y-q)); minimized by the alpha-quantile."""
    if not 0.0 < alpha < 1.0:
        raise ModelError(f"alpha must be in (0, 1), got {alpha}")
    e = y - q
    return float(max(alpha * e, (alpha - 1.0) * e))


def _check_targets(samples: SampleBatch):
    if np.any(np.isnan(samples.targets)):
        raise ModelError(
            "batch contains NA targets; filter them out before computing the loss"
        )


def _loss_core(samples: SampleBatch, params: AqrParams, want_grads: bool):
    _check_targets(samples)
    n = len(samples)
    if n == 0:
        raise ModelError("empty batch")
    alphas = np.asarray(params.hyper.levels)
    m = len(alphas)
    q, cache = _forward_core(samples.features, samples.mask, params)
    e = samples.targets[:, None] - q
    loss = float(np.mean(np.maximum(alphas * e, (alphas - 1.0) * e)))
    if not want_grads:
        return loss, None

    mask_f, hs, _z, r, ss, gs = cache
    keep = 1.0 - mask_f
    # pinball subgradient wrt q, 0 exactly at the kink
    dq = np.where(e > 0, -alphas, np.where(e < 0, 1.0 - alphas, 0.0)) / (n * m)
    # q_i = r_1 + sum_{j<=i, j>1} relu(r_j): suffix sums route dq back to r
    csum = np.cumsum(dq[:, ::-1], axis=1)[:, ::-1]
    dr = np.empty_like(dq)
    dr[:, 0] = csum[:, 0]
    if m > 1:
        dr[:, 1:] = csum[:, 1:] * (r[:, 1:] > 0)

    grads: dict[str, np.ndarray] = {}
    drt = dr.T  # (m, n)
    grads["out_coeffs"] = np.matmul(drt[:, None, :], gs[-1])[:, 0, :]
    dg = drt[:, :, None] * params.out_coeffs[:, None, :]
    for l in range(params.hyper.head_layers - 1, -1, -1):
        ds = dg * (ss[l] > 0)
        grads[f"head_weights_{l}"] = np.matmul(ds.transpose(0, 2, 1), gs[l])
        grads[f"head_biases_{l}"] = ds.sum(axis=1)
        dg = np.matmul(ds, params.head_weights[l])
    dz = dg.sum(axis=0)  # (n, d)
    grads["adaptive_bias"] = (dz * mask_f).sum(axis=0)
    dw1 = np.empty_like(params.feature_weights)
    g = dz
    for l in range(params.hyper.feature_layers - 1, -1, -1):
        da = g * keep
        dw1[l] = da.T @ hs[l]
        g = da @ params.feature_weights[l]
    grads["feature_weights"] = dw1

    for name, arr in grads.items():
        if not np.all(np.isfinite(arr)):
            raise ModelError(f"non-finite gradient for parameter {name}")
    return loss, grads


def batch_loss(samples: SampleBatch, params: AqrParams) -> float:
    """Mean pinball over samples x levels, on unclipped forecasts."""
    loss, _ = _loss_core(samples, params, want_grads=False)
    return loss


def loss_and_gradients(samples: SampleBatch, params: AqrParams):
    return _loss_core(samples, params, want_grads=True)


def loss_gradients(samples: SampleBatch, params: AqrParams) -> dict[str, np.ndarray]:
    """Exact gradient of batch_loss for every parameter array (by name)."""
    _, grads = _loss_core(samples, params, want_grads=True)
    return grads

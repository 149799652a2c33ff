"""Quantization and the Gaussian-mixture entropy model over integer symbols.

The mixture is held in unconstrained form: weights are ``softmax`` of
``weight_logits`` and scales are ``softplus`` of ``scale_logits``. The
probability of an integer ``q`` is the mixture mass on ``[q - 1/2, q + 1/2]``.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .errors import BadSchedule, InvalidK

LN2 = math.log(2.0)
PMF_FLOOR = 2.0 ** -16
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def softplus(x):
    return np.logaddexp(0.0, x)


def softplus_inv(y):
    y = np.asarray(y, dtype=np.float64)
    return y + np.log(-np.expm1(-y))


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(x, dtype=np.float64)))


def _softmax(x):
    e = np.exp(x - np.max(x))
    return e / e.sum()


@dataclass
class GmmParams:
    weight_logits: np.ndarray
    means: np.ndarray
    scale_logits: np.ndarray

    def __post_init__(self):
        self.weight_logits = np.asarray(self.weight_logits, dtype=np.float64).ravel()
        self.means = np.asarray(self.means, dtype=np.float64).ravel()
        self.scale_logits = np.asarray(self.scale_logits, dtype=np.float64).ravel()
        k = self.weight_logits.size
        if k < 1 or self.means.size != k or self.scale_logits.size != k:
            raise InvalidK("weight_logits, means and scale_logits need equal length >= 1")

    @property
    def K(self):
        return self.weight_logits.size

    @property
    def weights(self):
        return _softmax(self.weight_logits)

    @property
    def scales(self):
        return softplus(self.scale_logits)

    @classmethod
    def from_natural(cls, weights, means, scales):
        weights = np.asarray(weights, dtype=np.float64)
        return cls(np.log(weights), means, softplus_inv(scales))

    def to_flat(self):
        """Flat ``3K`` vector: weight logits, means, scale logits."""
        return np.concatenate([self.weight_logits, self.means, self.scale_logits])

    @classmethod
    def from_flat(cls, flat):
        flat = np.asarray(flat, dtype=np.float64).ravel()
        if flat.size == 0 or flat.size % 3:
            raise InvalidK(f"flat GMM vector length must be 3K, got {flat.size}")
        k = flat.size // 3
        return cls(flat[:k], flat[k:2 * k], flat[2 * k:])

    def copy(self):
        return GmmParams(self.weight_logits.copy(), self.means.copy(), self.scale_logits.copy())


@dataclass(frozen=True)
class QuantizedVector:
    symbols: np.ndarray

    @property
    def dim(self):
        return self.symbols.shape[-1]


def init_params(K):
    """alpha_k = 1/K, mu_k = 0, sigma_k = k**2."""
    if K < 1:
        raise InvalidK(f"K must be >= 1, got {K}")
    k = np.arange(1, K + 1, dtype=np.float64)
    return GmmParams(np.zeros(K), np.zeros(K), softplus_inv(k * k))


def quantize_train(latent, rng_seed):
    """Additive Uniform(-1/2, 1/2) noise, the training proxy for rounding.

    ``rng_seed`` may be an int or an existing ``np.random.Generator``.
    """
    latent = np.asarray(latent, dtype=np.float64)
    rng = np.random.default_rng(rng_seed)
    return latent + rng.uniform(-0.5, 0.5, size=latent.shape)


def round_half_away(x):
    x = np.asarray(x, dtype=np.float64)
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def quantize_infer(latent):
    return QuantizedVector(round_half_away(latent).astype(np.int64))


def gmm_pdf(x, params):
    x = np.asarray(x, dtype=np.float64)
    u = (x[..., None] - params.means) / params.scales
    dens = params.weights * np.exp(-0.5 * u * u) * _INV_SQRT_2PI / params.scales
    return dens.sum(axis=-1)


def gmm_cdf(x, params):
    x = np.asarray(x, dtype=np.float64)
    u = (x[..., None] - params.means) / params.scales
    return (params.weights * ndtr(u)).sum(axis=-1)


def _component_mass(q, params):
    """Per-component mass on [q - 1/2, q + 1/2], shape (..., K).

    Evaluated on the lower tail (via |q - mu|) so far-tail masses keep
    relative precision instead of cancelling near 1.
    """
    v = np.abs(np.asarray(q, dtype=np.float64)[..., None] - params.means)
    s = params.scales
    return ndtr((0.5 - v) / s) - ndtr((-0.5 - v) / s)


def gmm_pmf(q, params):
    return (params.weights * _component_mass(q, params)).sum(axis=-1)


def entropy_bits(q, params):
    """Estimated codelength ``-sum log2 pmf(q_i)`` with the 2**-16 floor."""
    if isinstance(q, QuantizedVector):
        q = q.symbols
    q = np.asarray(q, dtype=np.float64)
    if q.size == 0:
        return 0.0
    p = np.maximum(gmm_pmf(q, params), PMF_FLOOR)
    return float(-np.log2(p).sum())


@dataclass
class GmmGrads:
    weight_logits: np.ndarray
    means: np.ndarray
    scale_logits: np.ndarray

    def to_flat(self):
        return np.concatenate([self.weight_logits, self.means, self.scale_logits])


def rate_and_grads(q, params, counts=None):
    """Codelength of (possibly non-integer) symbols and its gradients.

    Returns ``(bits, dbits_dq, grads)`` where ``bits`` and ``dbits_dq`` have
    the shape of ``q`` and ``grads`` holds the gradient of ``bits.sum()``
    (weighted by ``counts`` if given) with respect to the mixture's
    unconstrained parameters. Symbols whose mass is below the floor cost a
    flat 16 bits and contribute no gradient.
    """
    q = np.asarray(q, dtype=np.float64)
    alpha = params.weights
    sigma = params.scales
    d = q[..., None] - params.means
    up = (d + 0.5) / sigma
    lo = (d - 0.5) / sigma
    phi_up = np.exp(-0.5 * up * up) * _INV_SQRT_2PI
    phi_lo = np.exp(-0.5 * lo * lo) * _INV_SQRT_2PI
    c = _component_mass(q, params)
    p = (alpha * c).sum(axis=-1)

    live = p >= PMF_FLOOR
    bits = np.where(live, -np.log2(np.maximum(p, PMF_FLOOR)), 16.0)
    # d bits / d p, zero where floored
    coef = np.where(live, -1.0 / (np.maximum(p, PMF_FLOOR) * LN2), 0.0)
    if counts is not None:
        w = coef * np.asarray(counts, dtype=np.float64)
    else:
        w = coef

    dc_dq = (phi_up - phi_lo) / sigma
    dp_dq = (alpha * dc_dq).sum(axis=-1)
    dbits_dq = coef * dp_dq

    flat_w = w.reshape(-1, 1)
    dp_dw = alpha * (c - p[..., None])
    dp_dmu = -alpha * dc_dq
    dp_dsigma = -alpha * (up * phi_up - lo * phi_lo) / sigma
    k = params.K
    grads = GmmGrads(
        weight_logits=(flat_w * dp_dw.reshape(-1, k)).sum(axis=0),
        means=(flat_w * dp_dmu.reshape(-1, k)).sum(axis=0),
        scale_logits=(flat_w * dp_dsigma.reshape(-1, k)).sum(axis=0) * sigmoid(params.scale_logits),
    )
    return bits, dbits_dq, grads


def lambda_at_epoch(lambda_max, i, E):
    """Warm-up of the rate weight: ``min(lambda_max * i / (E - 20), lambda_max)``."""
    if E <= 20:
        raise BadSchedule(f"total epochs must exceed 20, got E={E}")
    if not 1 <= i <= E:
        raise BadSchedule(f"epoch index {i} outside 1..{E}")
    return min(lambda_max * i / (E - 20), lambda_max)


def fit_gmm(samples, params=None, K=9, steps=2000, lr=0.05):
    """Maximum-likelihood fit of the mixture to integer samples.

    Minimizes the mean codelength with Adam-scaled gradient steps; plain
    momentum stalls on the wide components of the default initialization.
    """
    values, counts = np.unique(np.asarray(samples).ravel(), return_counts=True)
    params = init_params(K) if params is None else params.copy()
    n = counts.sum()
    theta = params.to_flat()
    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    b1, b2 = 0.9, 0.999
    for t in range(1, steps + 1):
        _, _, g = rate_and_grads(values, params, counts)
        g = g.to_flat() / n
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        theta = theta - lr * (m / (1 - b1 ** t)) / (np.sqrt(v / (1 - b2 ** t)) + 1e-8)
        params = GmmParams.from_flat(theta)
    return params


def kl_bits(p_true, q_model):
    """KL(p || q) in bits for two PMFs over the same support."""
    p_true = np.asarray(p_true, dtype=np.float64)
    q_model = np.asarray(q_model, dtype=np.float64)
    m = p_true > 0
    return float(np.sum(p_true[m] * np.log2(p_true[m] / q_model[m])))

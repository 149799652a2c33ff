"""Complex AWGN and slow-fading channels with unit average input power.

Real vectors of length 2B are packed into B complex symbols pairwise:
``(r[0] + 1j*r[1], r[2] + 1j*r[3], ...)``. Noise is circular complex
Gaussian with total variance ``sigma2`` (``sigma2 / 2`` per real part).
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import OddLength, ZeroVector

AWGN = "awgn"
SLOW_FADING = "slow_fading"
MODES = (AWGN, SLOW_FADING)


@dataclass(frozen=True)
class ChannelInput:
    symbols: np.ndarray  # complex128, shape (B,)

    @property
    def bandwidth(self):
        return self.symbols.shape[0]

    def average_power(self):
        return float(np.mean(np.abs(self.symbols) ** 2))


@dataclass(frozen=True)
class ChannelConfig:
    snr_db: float = math.inf
    fading_variance: float = 1.0
    mode: str = AWGN

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown channel mode {self.mode!r}")
        if self.fading_variance < 0:
            raise ValueError("fading variance must be nonnegative")
        if math.isnan(self.snr_db) or self.snr_db == -math.inf:
            raise ValueError(f"snr_db must be finite or +inf, got {self.snr_db}")

    @property
    def noise_var(self):
        scale = self.fading_variance if self.mode == SLOW_FADING else 1.0
        return snr_to_noise_var(self.snr_db) * scale


@dataclass(frozen=True)
class ChannelRealization:
    y: np.ndarray
    h: complex = 1 + 0j
    noise_seed: int = 0
    z: np.ndarray = field(default=None, repr=False)


def snr_to_noise_var(snr_db):
    """Noise variance for unit signal power; ``+inf`` dB maps to 0."""
    if snr_db == math.inf:
        return 0.0
    return 10.0 ** (-snr_db / 10.0)


def pack_complex(raw):
    """(..., 2B) reals -> (..., B) complex, consecutive pairs."""
    raw = np.asarray(raw, dtype=np.float64)
    if raw.shape[-1] % 2:
        raise OddLength(f"need an even number of reals, got {raw.shape[-1]}")
    return raw[..., 0::2] + 1j * raw[..., 1::2]


def unpack_complex(symbols):
    """(..., B) complex -> (..., 2B) reals; inverse of :func:`pack_complex`."""
    symbols = np.asarray(symbols)
    out = np.empty(symbols.shape[:-1] + (2 * symbols.shape[-1],))
    out[..., 0::2] = symbols.real
    out[..., 1::2] = symbols.imag
    return out


def normalize_power(raw):
    raw = np.asarray(raw, dtype=np.float64).ravel()
    if raw.size < 2 or raw.size % 2:
        raise OddLength(f"need an even number (>= 2) of reals, got {raw.size}")
    energy = float(np.dot(raw, raw))
    if energy < 1e-30:
        raise ZeroVector("cannot normalize an all-zero channel input")
    scale = math.sqrt((raw.size // 2) / energy)
    return ChannelInput(pack_complex(raw * scale))


def normalize_power_rows(x):
    """Row-wise power normalization of a (n, 2B) real batch."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] % 2:
        raise OddLength(f"need an even number of reals, got {x.shape[-1]}")
    energy = np.sum(x * x, axis=-1, keepdims=True)
    if np.any(energy < 1e-30):
        raise ZeroVector("cannot normalize an all-zero channel input")
    return x * np.sqrt((x.shape[-1] // 2) / energy)


def draw_gain(rng, fading_variance, size=None):
    """Circular complex Gaussian gain with total variance ``fading_variance``."""
    s = math.sqrt(fading_variance / 2.0)
    return s * rng.standard_normal(size) + 1j * s * rng.standard_normal(size)


def _complex_noise(rng, sigma2, shape):
    s = math.sqrt(sigma2 / 2.0)
    return s * rng.standard_normal(shape) + 1j * s * rng.standard_normal(shape)


def transmit(inp, cfg, rng_seed):
    """Send one normalized vector. Slow fading draws one gain per call."""
    rng = np.random.default_rng(rng_seed)
    x = inp.symbols
    h = 1 + 0j
    if cfg.mode == SLOW_FADING:
        h = complex(draw_gain(rng, cfg.fading_variance))
    sigma2 = cfg.noise_var
    if sigma2 == 0.0:
        z = np.zeros_like(x)
    else:
        z = _complex_noise(rng, sigma2, x.shape)
    return ChannelRealization(y=h * x + z, h=h, noise_seed=rng_seed, z=z)


def transmit_rows(x, cfg, rng):
    """Batch transmit of (n, 2B) real rows, one gain per row.

    Returns the (n, 2B) real outputs and the (n,) complex gains.
    """
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    sym = pack_complex(x)
    if cfg.mode == SLOW_FADING:
        h = draw_gain(rng, cfg.fading_variance, n)
        sym = sym * h[:, None]
    else:
        h = np.ones(n, dtype=np.complex128)
    sigma2 = cfg.noise_var
    if sigma2 > 0.0:
        sym = sym + _complex_noise(rng, sigma2, sym.shape)
    return unpack_complex(sym), h

"""Separate source/channel scheme: learned compressor + entropy coding,
evaluated against the capacity of the channel.

The compressor is a single dense reduction of the feature vector followed
by rounding; a Gaussian-mixture model prices the integer symbols and drives
the arithmetic coder. Retrieval compares quantized latents directly.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import arith_coder as ac
from .channel import draw_gain
from .entropy_model import (
    GmmParams, fit_gmm, init_params, lambda_at_epoch, quantize_infer, rate_and_grads,
)
from .errors import BadSchedule, BadSpec, EmptyDataset, EmptyFamily
from .nn_core import SGD, Dense, Network, cross_entropy
from .retrieval import Gallery, correct_at_1, evaluate

DEFAULT_LAMBDAS = (0.005, 0.01, 0.02, 0.05, 0.1, 0.2)


@dataclass
class DigitalCompressor:
    reducer: Network
    classifier: Network
    gmm: GmmParams
    lambda_max: float
    feature_encoder: Network = None
    support: tuple = ac.DEFAULT_SUPPORT

    @property
    def latent_dim(self):
        return self.reducer.out_dim

    def table(self):
        return ac.build_table(self.gmm, self.support)

    def features(self, x):
        """Raw inputs -> feature vectors (identity if there is no encoder)."""
        if self.feature_encoder is None:
            return np.asarray(x, dtype=np.float64)
        self.feature_encoder.eval()
        return self.feature_encoder.forward(x)

    def latents(self, features):
        self.reducer.eval()
        return self.reducer.forward(np.atleast_2d(features))


@dataclass
class DigitalPlan:
    epochs: int = 30
    lr: float = 0.01
    lr_drop_epoch: int = 12
    lr_after_drop: float = 0.001
    gmm_lr: float = 0.001
    refit_steps: int = 300
    refit_lr: float = 0.01
    batch_size: int = 16
    momentum: float = 0.9
    weight_decay: float = 5e-4


@dataclass
class RatePoint:
    lam: float
    mean_bits: float
    top1: float
    top5: float = 0.0
    map_score: float = 0.0

    def csv_row(self, bandwidth):
        snr = min_snr_for_bits(self.mean_bits, bandwidth)
        return [f"{self.lam:g}", f"{self.mean_bits:.6f}", f"{snr:.6f}",
                f"{self.top1:.6f}", f"{self.top5:.6f}", f"{self.map_score:.6f}"]


RATE_POINT_HEADER = ["lambda", "mean_bits", "snr_db_equivalent", "top1", "top5", "map"]


@dataclass
class DigitalEval:
    """Per-query coded lengths and top-1 correctness for one compressor."""

    lam: float
    bits: np.ndarray
    correct: np.ndarray
    point: RatePoint = field(default=None)


def build_compressor(feature_dim, latent_dim, num_ids, lambda_max, K=9, rng=None, feature_encoder=None):
    if latent_dim > feature_dim or latent_dim < 1:
        raise BadSpec(f"latent_dim {latent_dim} must lie in [1, feature_dim={feature_dim}]")
    rng = np.random.default_rng(rng)
    return DigitalCompressor(
        reducer=Network([Dense(feature_dim, latent_dim, rng=rng)]),
        classifier=Network([Dense(latent_dim, num_ids, rng=rng)]),
        gmm=init_params(K),
        lambda_max=lambda_max,
        feature_encoder=feature_encoder,
    )


class _Adam:
    def __init__(self, lr):
        self.lr = lr
        self.m = None
        self.v = None
        self.t = 0

    def step(self, theta, grad):
        if self.m is None:
            self.m = np.zeros_like(theta)
            self.v = np.zeros_like(theta)
        self.t += 1
        self.m = 0.9 * self.m + 0.1 * grad
        self.v = 0.999 * self.v + 0.001 * grad * grad
        mhat = self.m / (1 - 0.9 ** self.t)
        vhat = self.v / (1 - 0.999 ** self.t)
        return theta - self.lr * mhat / (np.sqrt(vhat) + 1e-8)


def train_digital(compressor, dataset, epochs=None, seed=0, plan=None):
    """Minimize ``ce + lambda_i * bits`` with uniform-noise quantization.

    ``bits`` is the mixture codelength of the noisy latent per sample;
    ``lambda_i`` ramps up per :func:`lambda_at_epoch` over global epochs.
    The mixture itself is fitted by Adam on the mean codelength per symbol,
    which has the same minimizer for every positive lambda but does not
    stall when lambda is small. After training the mixture is refitted to
    the rounded training latents. Returns ``(compressor, trace)``.
    """
    plan = plan or DigitalPlan()
    E = plan.epochs if epochs is None else epochs
    if E <= 20:
        raise BadSchedule(f"digital training needs more than 20 epochs, got {E}")
    data = getattr(dataset, "train", dataset)
    if len(data) < 2:
        raise EmptyDataset("no training samples")
    rng = np.random.default_rng([seed, 3])
    nets = [n for n in (compressor.feature_encoder, compressor.reducer, compressor.classifier) if n is not None]
    for n in nets:
        n.train()
    opt = SGD(plan.lr, plan.momentum, plan.weight_decay)
    gmm_opt = _Adam(plan.gmm_lr)
    trace = []
    for i in range(1, E + 1):
        lam = lambda_at_epoch(compressor.lambda_max, i, E)
        opt.lr = plan.lr if i <= plan.lr_drop_epoch else plan.lr_after_drop
        sums = np.zeros(3)
        count = 0
        for idx in _batches(len(data), plan.batch_size, rng):
            if len(idx) < 2:
                continue
            n = len(idx)
            x = data.x[idx]
            f = compressor.feature_encoder.forward(x) if compressor.feature_encoder is not None else x
            z = compressor.reducer.forward(f)
            z_noisy = z + rng.uniform(-0.5, 0.5, size=z.shape)
            ce, g_logits = cross_entropy(compressor.classifier.forward(z_noisy), data.labels[idx])
            bits, dbits_dq, g_gmm = rate_and_grads(z_noisy, compressor.gmm)
            rate = bits.sum() / n
            g_z = compressor.classifier.backward(g_logits) + lam * dbits_dq / n
            g_f = compressor.reducer.backward(g_z)
            if compressor.feature_encoder is not None:
                compressor.feature_encoder.backward(g_f)
            opt.step(*nets)
            theta = gmm_opt.step(compressor.gmm.to_flat(), g_gmm.to_flat() / bits.size)
            compressor.gmm = GmmParams.from_flat(theta)
            sums += np.array([ce + lam * rate, ce, rate]) * n
            count += n
        loss, ce, rate = sums / max(count, 1)
        trace.append({"epoch": i, "lambda": lam, "loss": loss, "ce": ce, "bits": rate, "lr": opt.lr})
    for n in nets:
        n.eval()
    if plan.refit_steps:
        # final ML fit of the mixture to the rounded latents the coder will see
        q = quantize_infer(compressor.latents(compressor.features(data.x))).symbols
        compressor.gmm = fit_gmm(q, compressor.gmm, steps=plan.refit_steps, lr=plan.refit_lr)
    return compressor, trace


def _batches(n, batch_size, rng):
    order = rng.permutation(n)
    for i in range(0, n, batch_size):
        yield order[i:i + batch_size]


def compress(compressor, feature):
    """One feature vector -> (quantized latent, arithmetic-coded bits)."""
    q = quantize_infer(compressor.latents(np.atleast_2d(feature))[0])
    return q, ac.encode(q, compressor.table())


FIT_RTOL = 1e-12


def capacity_bits(snr_db, B):
    """Bits per query deliverable over B complex uses: ``B log2(1 + snr)``."""
    if snr_db == math.inf:
        return math.inf
    # log(1 + e^a) without overflowing 10^(snr/10) at huge SNR
    return B * float(np.logaddexp(0.0, snr_db / 10.0 * math.log(10.0))) / math.log(2.0)


def min_snr_for_bits(bits, B):
    """Smallest SNR (dB) whose capacity carries ``bits``; -inf for 0 bits."""
    if bits <= 0:
        return -math.inf
    r = bits / B
    # 2^r - 1 = 2^r (1 - 2^-r), split so large r does not overflow
    return 10.0 * (r * math.log10(2.0) + math.log10(-math.expm1(-r * math.log(2.0))))


def evaluate_compressor(compressor, dataset, metric="l2"):
    """Code every query, score retrieval against quantized gallery latents."""
    table = compressor.table()
    g_lat = quantize_infer(compressor.latents(compressor.features(dataset.gallery.x))).symbols
    q_lat = quantize_infer(compressor.latents(compressor.features(dataset.query.x))).symbols
    bits = np.array([ac.encode(row, table).bit_count for row in q_lat], dtype=np.float64)
    gallery = Gallery(g_lat.astype(np.float64), dataset.gallery.labels)
    scores = evaluate(q_lat.astype(np.float64), dataset.query.labels, gallery, metric)
    correct = correct_at_1(q_lat.astype(np.float64), dataset.query.labels, gallery, metric)
    point = RatePoint(compressor.lambda_max, float(bits.mean()), scores.top1, scores.top5, scores.map)
    return DigitalEval(compressor.lambda_max, bits, correct, point)


def accuracy_at_snr(points, snr_db, B):
    """Static channel: best top-1 among rate points whose mean rate fits the
    capacity; 0 if none fits."""
    cap = capacity_bits(snr_db, B)
    # relative slack so a point evaluated at its own matched SNR still fits
    fitting = [p.top1 for p in points if p.mean_bits <= cap * (1 + FIT_RTOL)]
    return max(fitting) if fitting else 0.0


def _fading_capacity(avg_snr_db, B, n_trials, seed, fading_variance=1.0):
    rng = np.random.default_rng(seed)
    gain2 = np.abs(draw_gain(rng, fading_variance, n_trials)) ** 2
    if avg_snr_db == math.inf:
        return np.where(gain2 > 0, math.inf, 0.0)
    snr = 10.0 ** (avg_snr_db / 10.0)
    return B * np.log1p(gain2 * snr) / math.log(2.0)


@dataclass(frozen=True)
class OutageResult:
    accuracy: float
    success_fraction: float


def fading_outage(ev, avg_snr_db, B, n_trials, seed, fading_variance=1.0):
    """Fixed compressor: a query fails when its coded length exceeds the
    instantaneous capacity. Accuracy = success fraction x accuracy among
    successes (= correct-and-delivered fraction)."""
    cap = _fading_capacity(avg_snr_db, B, n_trials, seed, fading_variance)
    j = np.arange(n_trials) % ev.bits.size
    ok = ev.bits[j] <= cap
    success = float(ok.mean())
    acc = float((ok & ev.correct[j]).mean())
    return OutageResult(acc, success)


def fading_csi(evals, avg_snr_db, B, n_trials, seed, fading_variance=1.0):
    """Known channel gain: per trial use the lowest-lambda compressor whose
    coded length fits the instantaneous capacity; nothing fits -> failure."""
    if not evals:
        raise EmptyFamily("need at least one compressor")
    evals = sorted(evals, key=lambda e: e.lam)
    cap = _fading_capacity(avg_snr_db, B, n_trials, seed, fading_variance)
    j = np.arange(n_trials) % evals[0].bits.size
    hit = np.zeros(n_trials, dtype=bool)
    done = np.zeros(n_trials, dtype=bool)
    for ev in evals:
        fits = ~done & (ev.bits[j] <= cap)
        hit |= fits & ev.correct[j]
        done |= fits
    return float(hit.mean())


def eval_fading_outage(compressor, dataset, avg_snr_db, n_trials, seed, B, metric="l2"):
    return fading_outage(evaluate_compressor(compressor, dataset, metric), avg_snr_db, B, n_trials, seed)


def eval_fading_csi(compressors, dataset, avg_snr_db, n_trials, seed, B, metric="l2"):
    if not compressors:
        raise EmptyFamily("need at least one compressor")
    evals = [evaluate_compressor(c, dataset, metric) for c in compressors]
    return fading_csi(evals, avg_snr_db, B, n_trials, seed)


def analytic_success(bits, avg_snr_db, B, fading_variance=1.0):
    """P(capacity >= bits) under Rayleigh fading: exp(-threshold / H_c)."""
    snr = 10.0 ** (avg_snr_db / 10.0)
    thr = np.expm1(np.asarray(bits, dtype=np.float64) / B * math.log(2.0)) / snr
    return np.exp(-thr / fading_variance)

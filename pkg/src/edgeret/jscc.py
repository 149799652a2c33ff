"""Analog joint source-channel coding of feature vectors.

Two receivers are supported:

* ``ae`` -- a fully connected channel encoder maps each feature vector to
  2B reals, the channel output is decoded back into feature space and
  matched against clean gallery features.
* ``fc`` -- a single dense layer produces the channel input and the noisy
  channel symbols are used directly as the retrieval feature.

Training strategies: ``T3`` (joint only), ``T13`` (feature-encoder
pretraining then joint), ``T13_L1`` (as T13 with an extra L1 reconstruction
term in the joint phase) and ``T123`` (pretraining, autoencoder pretraining
on frozen features, then joint).
"""

from dataclasses import dataclass

import numpy as np

from . import channel as ch
from .errors import BadSpec, EmptyDataset
from .nn_core import (
    SGD, BatchNorm, Dense, LeakyReLU, Network, PowerNorm, PReLU, cross_entropy, l1_loss, load_checkpoint,
    save_checkpoint,
)
from .retrieval import Gallery, evaluate

VARIANTS = {"A": (3, 3), "B": (3, 2), "C": (3, 4), "D": (2, 3), "E": (4, 3)}
STRATEGIES = ("T3", "T13", "T13_L1", "T123")
ACTIVATIONS = ("leaky_relu", "prelu")


@dataclass(frozen=True)
class JsccModelSpec:
    variant: str = "D"
    feature_dim: int = 64
    bandwidth: int = 16
    activation: str = "leaky_relu"
    encoder_layers: int = None
    decoder_layers: int = None

    def layer_counts(self):
        if self.encoder_layers is not None or self.decoder_layers is not None:
            if self.encoder_layers is None or self.decoder_layers is None:
                raise BadSpec("explicit layer counts need both encoder_layers and decoder_layers")
            return self.encoder_layers, self.decoder_layers
        if self.variant not in VARIANTS:
            raise BadSpec(f"unknown variant {self.variant!r}")
        return VARIANTS[self.variant]


@dataclass(frozen=True)
class TrainPlan:
    """Phase schedule. Epoch counts of 0 drop a phase; the strategy decides
    which phases run at all."""

    strategy: str = "T123"
    snr_train_db: float = 0.0
    seed: int = 0
    batch_size: int = 16
    pretrain_epochs: int = 10
    pretrain_lr: float = 0.01
    ae_epochs: int = 40
    ae_lr: float = 0.1
    ae_lr_drop_epoch: int = 30
    joint_epochs: int = 10
    joint_lr: float = 0.001
    joint_tail_epochs: int = 5
    joint_tail_lr: float = 0.0001
    momentum: float = 0.9
    weight_decay: float = 5e-4
    channel_mode: str = ch.AWGN
    fading_variance: float = 1.0

    def phases(self):
        if self.strategy not in STRATEGIES:
            raise BadSpec(f"unknown strategy {self.strategy!r}")
        out = []
        if self.strategy != "T3":
            out.append("pretrain")
        if self.strategy == "T123":
            out.append("ae")
        out.append("joint")
        return out

    def total_epochs(self):
        n = {"pretrain": self.pretrain_epochs, "ae": self.ae_epochs,
             "joint": self.joint_epochs + self.joint_tail_epochs}
        return sum(n[p] for p in self.phases())

    def channel(self, snr_db=None):
        return ch.ChannelConfig(self.snr_train_db if snr_db is None else snr_db,
                                self.fading_variance, self.channel_mode)


def fc_plan(**overrides):
    """End-to-end schedule for the single-layer receiver: a joint phase at
    0.01 followed by a tail at 0.001, after feature pretraining."""
    base = dict(strategy="T13", joint_lr=0.01, joint_tail_lr=0.001, joint_epochs=10, joint_tail_epochs=5)
    base.update(overrides)
    return TrainPlan(**base)


@dataclass
class JsccSystem:
    feature_encoder: Network
    encoder: Network
    decoder: Network  # None for the fc receiver
    classifier: Network
    spec: JsccModelSpec
    kind: str = "ae"

    def networks(self):
        nets = [self.feature_encoder, self.encoder, self.decoder, self.classifier]
        return [n for n in nets if n is not None]

    def eval(self):
        for n in self.networks():
            n.eval()
        return self

    def train(self):
        for n in self.networks():
            n.train()
        return self


def _activation(name, dim):
    if name == "leaky_relu":
        return LeakyReLU(dim)
    if name == "prelu":
        return PReLU(dim)
    raise BadSpec(f"unknown activation {name!r}")


def _mlp(dims, activation, rng):
    """Dense layers through ``dims``; BN + activation between, none after the last."""
    layers = []
    for i in range(len(dims) - 1):
        if i:
            layers += [BatchNorm(dims[i]), _activation(activation, dims[i])]
        layers.append(Dense(dims[i], dims[i + 1], rng=rng))
    return Network(layers)


def build_jscc_ae(spec, rng=None):
    n_enc, n_dec = spec.layer_counts()
    if spec.bandwidth < 1 or spec.feature_dim < 1 or n_enc < 1 or n_dec < 1:
        raise BadSpec(f"invalid model spec {spec}")
    if spec.activation not in ACTIVATIONS:
        raise BadSpec(f"unknown activation {spec.activation!r}")
    rng = np.random.default_rng(rng)
    w = 2 * spec.bandwidth
    encoder = _mlp([spec.feature_dim] + [w] * n_enc, spec.activation, rng)
    decoder = _mlp([w] * n_dec + [spec.feature_dim], spec.activation, rng)
    return encoder, decoder


def build_jscc_fc(feature_dim, bandwidth, rng=None):
    if bandwidth < 1 or feature_dim < 1:
        raise BadSpec(f"invalid dimensions feature_dim={feature_dim}, B={bandwidth}")
    return Network([Dense(feature_dim, 2 * bandwidth, rng=rng)])


def build_feature_encoder(input_dim, feature_dim, rng=None):
    """Stand-in for the image backbone: two dense blocks with BN + leaky ReLU."""
    rng = np.random.default_rng(rng)
    return Network([
        Dense(input_dim, feature_dim, rng=rng), BatchNorm(feature_dim), LeakyReLU(feature_dim),
        Dense(feature_dim, feature_dim, rng=rng), BatchNorm(feature_dim), LeakyReLU(feature_dim),
    ])


class ChannelPass:
    """Differentiable channel for training: y = h x + z on 2B real pairs.

    The backward pass multiplies by conj(h) on each complex pair; the
    receiver-side networks never see h.
    """

    def __init__(self, cfg, rng):
        self.cfg = cfg
        self.rng = rng
        self.h = None

    def forward(self, x):
        y, self.h = ch.transmit_rows(x, self.cfg, self.rng)
        return y

    def backward(self, grad):
        if self.cfg.mode == ch.AWGN:
            return grad
        g = ch.pack_complex(grad) * np.conj(self.h)[:, None]
        return ch.unpack_complex(g)


def _check_power(x):
    p = np.sum(x * x, axis=1) / (x.shape[1] // 2)
    if np.any(np.abs(p - 1.0) > 1e-6):
        raise AssertionError(f"channel input violates the unit power constraint (max dev {np.abs(p - 1).max():.2e})")


def jscc_transmit(features, encoder, decoder, cfg, seed):
    """Encode, normalize, send and (for the autoencoder) decode a batch of
    feature vectors. With ``decoder=None`` the noisy 2B reals are returned."""
    features = np.atleast_2d(np.asarray(features, dtype=np.float64))
    rng = np.random.default_rng(seed)
    x = ch.normalize_power_rows(encoder.forward(features))
    _check_power(x)
    y, _ = ch.transmit_rows(x, cfg, rng)
    return y if decoder is None else decoder.forward(y)


def _batches(n, batch_size, rng):
    order = rng.permutation(n)
    for i in range(0, n, batch_size):
        yield order[i:i + batch_size]


def _usable(idx):
    # BN needs at least two rows for batch statistics
    return len(idx) >= 2


def _pretrain(fe, head, data, plan, rng, trace):
    opt = SGD(plan.pretrain_lr, plan.momentum, plan.weight_decay)
    fe.train()
    head.train()
    for epoch in range(plan.pretrain_epochs):
        total, count = 0.0, 0
        for idx in _batches(len(data), plan.batch_size, rng):
            if not _usable(idx):
                continue
            logits = head.forward(fe.forward(data.x[idx]))
            loss, g = cross_entropy(logits, data.labels[idx])
            fe.backward(head.backward(g))
            opt.step(fe, head)
            total += loss * len(idx)
            count += len(idx)
        trace.append({"phase": "pretrain", "epoch": epoch + 1, "loss": total / max(count, 1),
                      "metric": "ce", "lr": plan.pretrain_lr})


def _pretrain_ae(fe, encoder, decoder, data, plan, rng, trace):
    fe.eval()
    feats = fe.forward(data.x)
    pn = PowerNorm(encoder.out_dim)
    chan = ChannelPass(plan.channel(), rng)
    encoder.train()
    decoder.train()
    opt = SGD(plan.ae_lr, plan.momentum, plan.weight_decay)
    for epoch in range(plan.ae_epochs):
        if epoch == plan.ae_lr_drop_epoch:
            opt.lr = plan.ae_lr * 0.1
        total, count = 0.0, 0
        for idx in _batches(len(feats), plan.batch_size, rng):
            if not _usable(idx):
                continue
            f = feats[idx]
            recon = decoder.forward(chan.forward(pn.forward(encoder.forward(f))))
            loss, g = l1_loss(recon, f)
            encoder.backward(pn.backward(chan.backward(decoder.backward(g))))
            opt.step(encoder, decoder)
            total += loss * len(idx)
            count += len(idx)
        trace.append({"phase": "ae", "epoch": epoch + 1, "loss": total / max(count, 1),
                      "metric": "l1", "lr": opt.lr})


def _joint(system, data, plan, rng, trace, use_l1):
    fe, enc, dec, head = system.feature_encoder, system.encoder, system.decoder, system.classifier
    pn = PowerNorm(enc.out_dim)
    chan = ChannelPass(plan.channel(), rng)
    system.train()
    opt = SGD(plan.joint_lr, plan.momentum, plan.weight_decay)
    schedule = [plan.joint_lr] * plan.joint_epochs + [plan.joint_tail_lr] * plan.joint_tail_epochs
    for epoch, lr in enumerate(schedule):
        opt.lr = lr
        total, count = 0.0, 0
        for idx in _batches(len(data), plan.batch_size, rng):
            if not _usable(idx):
                continue
            f = fe.forward(data.x[idx])
            y = chan.forward(pn.forward(enc.forward(f)))
            out = dec.forward(y) if dec is not None else y
            loss, g = cross_entropy(head.forward(out), data.labels[idx])
            g_out = head.backward(g)
            if use_l1:
                # reconstruction target is held fixed within the step
                l1, g_l1 = l1_loss(out, f)
                g_out = g_out + g_l1
            g_y = dec.backward(g_out) if dec is not None else g_out
            fe.backward(enc.backward(pn.backward(chan.backward(g_y))))
            opt.step(*system.networks())
            total += loss * len(idx)
            count += len(idx)
        trace.append({"phase": "joint", "epoch": epoch + 1, "loss": total / max(count, 1),
                      "metric": "ce", "lr": lr})


def pretrain_feature_encoder(data, feature_dim, num_ids, plan):
    """The shared first step: feature encoder plus identity head. Returns
    ``(feature_encoder, head, trace)``; reuse the result across strategies to
    compare them from the same starting point."""
    if len(data) < 2 or np.unique(data.labels).size < 2:
        raise EmptyDataset("training needs at least two samples from two identities")
    rng = np.random.default_rng([plan.seed, 1])
    fe = build_feature_encoder(data.dim, feature_dim, rng)
    head = Network([Dense(feature_dim, num_ids, rng=rng)])
    trace = []
    _pretrain(fe, head, data, plan, rng, trace)
    return fe, head, trace


def train(plan, spec, dataset, kind="ae", pretrained=None):
    """Run the plan's phases and return ``(system, trace)``.

    ``dataset`` is a :class:`~edgeret.data.Dataset` (its training split is
    used) or a bare :class:`~edgeret.data.FeatureSet`. ``pretrained`` may
    carry the ``(feature_encoder, head, trace)`` of an earlier first step;
    copies are trained so the caller's networks are untouched.
    """
    data = getattr(dataset, "train", dataset)
    num_ids = getattr(dataset, "num_ids", None) or int(data.labels.max()) + 1
    if len(data) < 2 or np.unique(data.labels).size < 2:
        raise EmptyDataset("training needs at least two samples from two identities")
    if kind not in ("ae", "fc"):
        raise BadSpec(f"unknown JSCC kind {kind!r}")
    phases = plan.phases()
    if kind == "fc" and "ae" in phases:
        raise BadSpec("autoencoder pretraining needs a decoder; use T3/T13 for the fc receiver")
    trace = []
    rng = np.random.default_rng([plan.seed, 2])

    if "pretrain" in phases:
        if pretrained is None:
            pretrained = pretrain_feature_encoder(data, spec.feature_dim, num_ids, plan)
        fe, head, pre_trace = pretrained
        fe, head = fe.copy(), head.copy()
        trace.extend(pre_trace)
    else:
        fe = build_feature_encoder(data.dim, spec.feature_dim, rng)
        head = Network([Dense(spec.feature_dim, num_ids, rng=rng)])

    if kind == "ae":
        enc, dec = build_jscc_ae(spec, rng)
        classifier = head
    else:
        enc, dec = build_jscc_fc(spec.feature_dim, spec.bandwidth, rng), None
        classifier = Network([Dense(2 * spec.bandwidth, num_ids, rng=rng)])

    if "ae" in phases:
        _pretrain_ae(fe, enc, dec, data, plan, rng, trace)
    system = JsccSystem(fe, enc, dec, classifier, spec, kind)
    _joint(system, data, plan, rng, trace, use_l1=plan.strategy == "T13_L1")
    return system.eval(), trace


def gallery_features(system, x):
    """Receiver-side gallery entries: clean features for ``ae``, noiseless
    normalized channel inputs for ``fc``."""
    system.eval()
    f = system.feature_encoder.forward(x)
    if system.kind == "ae":
        return f
    return ch.normalize_power_rows(system.encoder.forward(f))


def query_features(system, x, cfg, seed):
    system.eval()
    f = system.feature_encoder.forward(x)
    return jscc_transmit(f, system.encoder, system.decoder, cfg, seed)


def evaluate_system(system, dataset, cfg, seed, metric="l2"):
    gallery = Gallery(gallery_features(system, dataset.gallery.x), dataset.gallery.labels)
    q = query_features(system, dataset.query.x, cfg, seed)
    return evaluate(q, dataset.query.labels, gallery, metric)


def save_system(path, system):
    blocks = {"feature_encoder": system.feature_encoder, "encoder": system.encoder,
              "classifier": system.classifier}
    if system.decoder is not None:
        blocks["decoder"] = system.decoder
    save_checkpoint(path, blocks)


def load_system(path, spec, kind="ae"):
    blocks = load_checkpoint(path)
    return JsccSystem(blocks["feature_encoder"], blocks["encoder"], blocks.get("decoder"),
                      blocks["classifier"], spec, kind).eval()

"""Small numpy neural-network toolkit with hand-written backward passes.

Batches are row-major: ``(n_samples, n_features)``. Layers cache what they
need in ``forward`` and fill ``self.grads`` in ``backward``, returning the
gradient with respect to their input.
"""

import copy
import math
import struct

import numpy as np

from .errors import CheckpointError, LabelOutOfRange, NoForwardCache, ShapeMismatch


class Layer:
    tag = "????"

    def __init__(self):
        self.params = {}
        self.grads = {}
        self.no_decay = set()
        self.training = True
        self._cache = None

    @property
    def in_dim(self):
        return None

    @property
    def out_dim(self):
        return self.in_dim

    def forward(self, x):
        raise NotImplementedError

    def backward(self, grad):
        raise NotImplementedError

    def _take_cache(self):
        if self._cache is None:
            raise NoForwardCache(f"{type(self).__name__}.backward called before forward")
        return self._cache

    # serialization: manifest dims + flat float state
    def manifest(self):
        return (self.in_dim,)

    def state(self):
        return [self.params[k] for k in sorted(self.params)]

    def load_state(self, arrays):
        for k, a in zip(sorted(self.params), arrays):
            self.params[k][...] = a


class Dense(Layer):
    tag = "DENS"

    def __init__(self, in_dim, out_dim, rng=None, weight=None, bias=None):
        super().__init__()
        if weight is None:
            rng = np.random.default_rng(rng)
            bound = 1.0 / math.sqrt(in_dim)
            weight = rng.uniform(-bound, bound, size=(out_dim, in_dim))
            bias = rng.uniform(-bound, bound, size=out_dim)
        weight = np.array(weight, dtype=np.float64)
        bias = np.zeros(weight.shape[0]) if bias is None else np.array(bias, dtype=np.float64)
        if weight.shape != (out_dim, in_dim) or bias.shape != (out_dim,):
            raise ShapeMismatch(f"dense weight {weight.shape} / bias {bias.shape} vs ({out_dim}, {in_dim})")
        self.params = {"W": weight, "b": bias}
        self.no_decay = {"b"}

    @property
    def in_dim(self):
        return self.params["W"].shape[1]

    @property
    def out_dim(self):
        return self.params["W"].shape[0]

    def manifest(self):
        return (self.in_dim, self.out_dim)

    def forward(self, x):
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise ShapeMismatch(f"expected (n, {self.in_dim}) input, got {x.shape}")
        self._cache = x
        return x @ self.params["W"].T + self.params["b"]

    def backward(self, grad):
        x = self._take_cache()
        self.grads = {"W": grad.T @ x, "b": grad.sum(axis=0)}
        return grad @ self.params["W"]


class BatchNorm(Layer):
    tag = "BNRM"

    def __init__(self, dim, momentum=0.1, eps=1e-5):
        super().__init__()
        self.params = {"gamma": np.ones(dim), "beta": np.zeros(dim)}
        self.no_decay = {"gamma", "beta"}
        self.running_mean = np.zeros(dim)
        self.running_var = np.ones(dim)
        self.momentum = momentum
        self.eps = eps

    @property
    def in_dim(self):
        return self.params["gamma"].shape[0]

    def forward(self, x):
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise ShapeMismatch(f"expected (n, {self.in_dim}) input, got {x.shape}")
        gamma, beta = self.params["gamma"], self.params["beta"]
        if self.training:
            n = x.shape[0]
            mean = x.mean(axis=0)
            var = x.var(axis=0)
            m = self.momentum
            self.running_mean = (1 - m) * self.running_mean + m * mean
            unbiased = var * n / (n - 1) if n > 1 else var
            self.running_var = (1 - m) * self.running_var + m * unbiased
        else:
            mean, var = self.running_mean, self.running_var
        inv_std = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mean) * inv_std
        self._cache = (xhat, inv_std, self.training)
        return gamma * xhat + beta

    def backward(self, grad):
        xhat, inv_std, batch_stats = self._take_cache()
        gamma = self.params["gamma"]
        self.grads = {"gamma": (grad * xhat).sum(axis=0), "beta": grad.sum(axis=0)}
        dxhat = grad * gamma
        if not batch_stats:
            return dxhat * inv_std
        n = grad.shape[0]
        return inv_std / n * (n * dxhat - dxhat.sum(axis=0) - xhat * (dxhat * xhat).sum(axis=0))

    def state(self):
        return [self.params["gamma"], self.params["beta"], self.running_mean, self.running_var,
                np.array([self.momentum, self.eps])]

    def load_state(self, arrays):
        g, b, rm, rv, hyper = arrays
        self.params["gamma"][...] = g
        self.params["beta"][...] = b
        self.running_mean = np.array(rm)
        self.running_var = np.array(rv)
        self.momentum, self.eps = float(hyper[0]), float(hyper[1])


class LeakyReLU(Layer):
    tag = "LRLU"

    def __init__(self, dim, slope=0.01):
        super().__init__()
        self.dim = dim
        self.slope = slope

    @property
    def in_dim(self):
        return self.dim

    def forward(self, x):
        mask = x > 0
        self._cache = mask
        return np.where(mask, x, self.slope * x)

    def backward(self, grad):
        mask = self._take_cache()
        return np.where(mask, grad, self.slope * grad)

    def state(self):
        return [np.array([self.slope])]

    def load_state(self, arrays):
        self.slope = float(arrays[0][0])


class PReLU(Layer):
    """Leaky ReLU with a learned negative slope per feature."""

    tag = "PRLU"

    def __init__(self, dim, init=0.25):
        super().__init__()
        self.params = {"a": np.full(dim, init, dtype=np.float64)}
        self.no_decay = {"a"}

    @property
    def in_dim(self):
        return self.params["a"].shape[0]

    def forward(self, x):
        self._cache = x
        return np.where(x > 0, x, self.params["a"] * x)

    def backward(self, grad):
        x = self._take_cache()
        neg = x <= 0
        self.grads = {"a": (grad * x * neg).sum(axis=0)}
        return np.where(neg, self.params["a"] * grad, grad)


class PowerNorm(Layer):
    """Scales each row of 2B reals to unit average complex-symbol power."""

    tag = "PNRM"

    def __init__(self, dim):
        super().__init__()
        if dim % 2:
            raise ShapeMismatch(f"power normalization needs an even width, got {dim}")
        self.dim = dim

    @property
    def in_dim(self):
        return self.dim

    def forward(self, x):
        energy = np.sum(x * x, axis=1, keepdims=True)
        energy = np.maximum(energy, 1e-30)
        scale = np.sqrt((self.dim // 2) / energy)
        self._cache = (x, scale, energy)
        return x * scale

    def backward(self, grad):
        x, scale, energy = self._take_cache()
        return scale * (grad - x * np.sum(x * grad, axis=1, keepdims=True) / energy)

    def state(self):
        return []


LAYER_TYPES = {cls.tag: cls for cls in (Dense, BatchNorm, LeakyReLU, PReLU, PowerNorm)}


class Network:
    def __init__(self, layers=()):
        self.layers = list(layers)
        self.frozen = False
        self.training = True
        prev = None
        for layer in self.layers:
            if prev is not None and layer.in_dim is not None and prev != layer.in_dim:
                raise ShapeMismatch(f"layer {type(layer).__name__} expects {layer.in_dim}, previous gives {prev}")
            prev = layer.out_dim if layer.out_dim is not None else prev

    @property
    def in_dim(self):
        return self.layers[0].in_dim

    @property
    def out_dim(self):
        return self.layers[-1].out_dim

    def train(self, mode=True):
        self.training = mode
        for layer in self.layers:
            layer.training = mode
        return self

    def eval(self):
        return self.train(False)

    def forward(self, x):
        x = np.asarray(x, dtype=np.float64)
        for layer in self.layers:
            x = layer.forward(x)
        return x

    __call__ = forward

    def backward(self, grad):
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad

    def parameters(self):
        """Yields ``(layer, name, array)`` triples."""
        for layer in self.layers:
            for name, p in layer.params.items():
                yield layer, name, p

    def num_parameters(self):
        return sum(p.size for _, _, p in self.parameters())

    def copy(self):
        return copy.deepcopy(self)

    def zero_cache(self):
        for layer in self.layers:
            layer._cache = None


def forward(net, batch):
    return net.forward(batch)


def backward(net, upstream_grad):
    """Returns ``(param_grads, input_grad)``; ``param_grads`` is a list of
    per-layer dicts aligned with ``net.layers``."""
    g = net.backward(upstream_grad)
    return [dict(layer.grads) for layer in net.layers], g


class SGD:
    """SGD with momentum and L2 weight decay folded into the buffer:
    ``v = momentum * v + grad + wd * param``, ``param -= lr * v``.
    Biases, BN affine terms and PReLU slopes are not decayed."""

    def __init__(self, lr=0.01, momentum=0.9, weight_decay=5e-4):
        self.lr = lr
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.buffers = {}

    def step(self, *nets):
        for net in nets:
            if net.frozen:
                continue
            for layer, name, p in net.parameters():
                g = layer.grads.get(name)
                if g is None:
                    continue
                if self.weight_decay and name not in layer.no_decay:
                    g = g + self.weight_decay * p
                key = id(p)
                v = self.buffers.get(key)
                if v is None:
                    v = np.zeros_like(p)
                    self.buffers[key] = v
                v *= self.momentum
                v += g
                p -= self.lr * v


def sgd_step(net, state, grads=None):
    """Functional form: apply ``state`` (an :class:`SGD`) to ``net``.
    ``grads`` defaults to the gradients left by the last backward."""
    if grads is not None:
        for layer, g in zip(net.layers, grads):
            layer.grads = g
    state.step(net)


def cross_entropy(logits, labels):
    """Mean softmax cross-entropy and its gradient w.r.t. the logits."""
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n, c = logits.shape
    if labels.shape != (n,):
        raise ShapeMismatch(f"labels shape {labels.shape} does not match {n} rows")
    if n and (labels.min() < 0 or labels.max() >= c):
        raise LabelOutOfRange(f"labels must lie in [0, {c})")
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_p = shifted - log_z
    rows = np.arange(n)
    loss = float(-log_p[rows, labels].mean())
    grad = np.exp(log_p)
    grad[rows, labels] -= 1.0
    return loss, grad / n


def l1_loss(pred, target):
    """Mean absolute error over all elements; subgradient 0 at ties."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ShapeMismatch(f"pred {pred.shape} vs target {target.shape}")
    diff = pred - target
    return float(np.abs(diff).mean()), np.sign(diff) / diff.size


# -- checkpoints -------------------------------------------------------------

MAGIC = b"EJNN"
FORMAT_VERSION = 1
GMM_TAG = "GMMP"


def _layer_from_manifest(tag, dims):
    if tag == "DENS":
        return Dense(dims[0], dims[1], weight=np.zeros((dims[1], dims[0])))
    if tag in LAYER_TYPES:
        return LAYER_TYPES[tag](dims[0])
    raise CheckpointError(f"unknown layer tag {tag!r}")


def save_checkpoint(path, blocks):
    """Write named networks (and GMM parameter sets) to one file.

    Layout: magic, u16 version, u16 block count; per block a u16-prefixed
    UTF-8 name and u16 layer count; per layer a 4-byte tag, u8 dim count and
    u32 dims. The float64 little-endian state of every layer follows, in
    manifest order.
    """
    from .entropy_model import GmmParams

    head = [MAGIC, struct.pack("<HH", FORMAT_VERSION, len(blocks))]
    payload = []
    for name, block in blocks.items():
        raw = name.encode("utf-8")
        if isinstance(block, GmmParams):
            entries = [(GMM_TAG, (block.K,), [block.to_flat()])]
        else:
            entries = [(layer.tag, layer.manifest(), layer.state()) for layer in block.layers]
        head.append(struct.pack("<H", len(raw)) + raw + struct.pack("<H", len(entries)))
        for tag, dims, state in entries:
            head.append(tag.encode("ascii") + struct.pack(f"<B{len(dims)}I", len(dims), *dims))
            payload.extend(np.asarray(a, dtype="<f8").ravel() for a in state)
    body = np.concatenate(payload).tobytes() if payload else b""
    with open(path, "wb") as f:
        f.write(b"".join(head) + body)


def load_checkpoint(path):
    from .entropy_model import GmmParams

    with open(path, "rb") as f:
        blob = f.read()
    if blob[:4] != MAGIC:
        raise CheckpointError(f"{path}: bad magic {blob[:4]!r}")
    version, n_blocks = struct.unpack_from("<HH", blob, 4)
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported format version {version}")
    pos = 8
    plan = []
    for _ in range(n_blocks):
        (name_len,) = struct.unpack_from("<H", blob, pos)
        pos += 2
        name = blob[pos:pos + name_len].decode("utf-8")
        pos += name_len
        (n_layers,) = struct.unpack_from("<H", blob, pos)
        pos += 2
        layers = []
        for _ in range(n_layers):
            tag = blob[pos:pos + 4].decode("ascii")
            (n_dims,) = struct.unpack_from("<B", blob, pos + 4)
            dims = struct.unpack_from(f"<{n_dims}I", blob, pos + 5)
            pos += 5 + 4 * n_dims
            layers.append((tag, dims))
        plan.append((name, layers))
    floats = np.frombuffer(blob, dtype="<f8", offset=pos).astype(np.float64)
    cursor = 0

    def take(size):
        nonlocal cursor
        if cursor + size > floats.size:
            raise CheckpointError(f"{path}: payload truncated")
        out = floats[cursor:cursor + size]
        cursor += size
        return out

    blocks = {}
    for name, layers in plan:
        if len(layers) == 1 and layers[0][0] == GMM_TAG:
            blocks[name] = GmmParams.from_flat(take(3 * layers[0][1][0]))
            continue
        built = []
        for tag, dims in layers:
            layer = _layer_from_manifest(tag, dims)
            shapes = [np.shape(a) for a in layer.state()]
            layer.load_state([take(int(np.prod(s))).reshape(s) for s in shapes])
            built.append(layer)
        blocks[name] = Network(built)
    if cursor != floats.size:
        raise CheckpointError(f"{path}: {floats.size - cursor} trailing floats")
    return blocks

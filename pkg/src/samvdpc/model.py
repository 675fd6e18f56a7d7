"""Multi-view network: per-view encoders, fusion strategies, classifier head.

Per sample, the V encoder outputs are stacked into Z (H x V). A fusion
strategy collapses Z into one representation vector: self-attention builds
an attention matrix A (d_c x V, rows softmax-normalized) and the embedding
M = A Z^T whose rows are concatenated; the baselines are per-row max, per-row
mean, and a softmax-weighted sum over views. Batches are handled as a leading
axis of independent per-sample computations.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numerics as nm
from .numerics import ConfigError, Rng, ShapeError, Tensor


@dataclass
class DropoutCtx:
    """Dropout behaviour for one forward pass."""
    training: bool = False
    rate: float = 0.0
    rng: Rng | None = None


EVAL_CTX = DropoutCtx()


@dataclass
class EncoderParams:
    """Three ReLU hidden layers; weights[i] has shape (width_i, width_{i-1})."""
    weights: list[Tensor]
    biases: list[Tensor]

    @property
    def in_dim(self):
        return self.weights[0].shape[1]

    @property
    def out_dim(self):
        return self.weights[-1].shape[0]


@dataclass
class AttentionParams:
    """Bias-free 2-layer attention MLP: w_s1 (d_s x H), w_s2 (d_c x d_s)."""
    w_s1: Tensor
    w_s2: Tensor

    @property
    def d_s(self):
        return self.w_s1.shape[0]

    @property
    def d_c(self):
        return self.w_s2.shape[0]


@dataclass
class HeadParams:
    """2-layer MLP classifier: (d_in -> hidden ReLU -> K) + row softmax."""
    w_hidden: Tensor
    b_hidden: Tensor
    w_out: Tensor
    b_out: Tensor

    @property
    def d_in(self):
        return self.w_hidden.shape[1]

    @property
    def n_classes(self):
        return self.w_out.shape[0]


@dataclass
class SelfAttention:
    params: AttentionParams
    name = "self-attention"


@dataclass
class MaxPool:
    name = "max"


@dataclass
class MeanPool:
    name = "mean"


@dataclass
class WeightedSum:
    """Learnable per-view logits, softmax-normalized before use."""
    weights: Tensor
    name = "weighted-sum"


FUSION_NAMES = ("max", "mean", "weighted-sum", "self-attention")


@dataclass
class ModelParams:
    encoders: list[EncoderParams]
    fusion: SelfAttention | MaxPool | MeanPool | WeightedSum
    head: HeadParams

    @property
    def n_views(self):
        return len(self.encoders)

    @property
    def hidden_dim(self):
        return self.encoders[0].out_dim

    def parameters(self):
        """Named leaf tensors, one entry per learnable matrix/vector."""
        out = []
        for v, enc in enumerate(self.encoders):
            for i, (w, b) in enumerate(zip(enc.weights, enc.biases)):
                out.append((f"encoder{v}_w{i}", w))
                out.append((f"encoder{v}_b{i}", b))
        if isinstance(self.fusion, SelfAttention):
            out.append(("attention_w_s1", self.fusion.params.w_s1))
            out.append(("attention_w_s2", self.fusion.params.w_s2))
        elif isinstance(self.fusion, WeightedSum):
            out.append(("fusion_weights", self.fusion.weights))
        out.append(("head_w_hidden", self.head.w_hidden))
        out.append(("head_b_hidden", self.head.b_hidden))
        out.append(("head_w_out", self.head.w_out))
        out.append(("head_b_out", self.head.b_out))
        return out


def xavier_init(shape, rng):
    """Uniform draws in ±sqrt(6 / (fan_in + fan_out))."""
    fan_out, fan_in = shape
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, shape)


def init_encoder(in_dim, widths, rng):
    if len(widths) != 3:
        raise ConfigError(f"encoders have exactly 3 hidden layers, got widths {widths}")
    if list(widths) != sorted(widths, reverse=True):
        raise ConfigError(f"encoder widths must be non-increasing, got {widths}")
    dims = [in_dim, *widths]
    weights, biases = [], []
    for i in range(3):
        weights.append(Tensor(xavier_init((dims[i + 1], dims[i]), rng), requires_grad=True))
        biases.append(Tensor(np.zeros(dims[i + 1]), requires_grad=True))
    return EncoderParams(weights, biases)


def init_fusion(strategy, n_views, hidden_dim, d_s, d_c, rng):
    if strategy == "max":
        return MaxPool()
    if strategy == "mean":
        return MeanPool()
    if strategy == "weighted-sum":
        return WeightedSum(Tensor(np.zeros(n_views), requires_grad=True))
    if strategy == "self-attention":
        if d_s < 1 or d_c < 1:
            raise ConfigError(f"d_s and d_c must be >= 1, got {d_s}, {d_c}")
        w_s1 = Tensor(xavier_init((d_s, hidden_dim), rng), requires_grad=True)
        w_s2 = Tensor(xavier_init((d_c, d_s), rng), requires_grad=True)
        return SelfAttention(AttentionParams(w_s1, w_s2))
    raise ConfigError(f"unknown fusion strategy {strategy!r}; choose one of {FUSION_NAMES}")


def init_model(view_dims, widths, n_classes, strategy, d_s, d_c, rng,
               head_hidden=512, encoders=None):
    """Build a full model; ``encoders`` overrides Xavier init (pretraining)."""
    if encoders is None:
        encoders = [init_encoder(d, widths, rng) for d in view_dims]
    hidden_dim = encoders[0].out_dim
    fusion = init_fusion(strategy, len(view_dims), hidden_dim, d_s, d_c, rng)
    d_in = d_c * hidden_dim if strategy == "self-attention" else hidden_dim
    head = HeadParams(
        w_hidden=Tensor(xavier_init((head_hidden, d_in), rng), requires_grad=True),
        b_hidden=Tensor(np.zeros(head_hidden), requires_grad=True),
        w_out=Tensor(xavier_init((n_classes, head_hidden), rng), requires_grad=True),
        b_out=Tensor(np.zeros(n_classes), requires_grad=True),
    )
    return ModelParams(encoders, fusion, head)


def encode_view(params, x, ctx=EVAL_CTX, view=None):
    """Run one view's encoder on a (batch x in_dim) feature block."""
    x = nm.as_tensor(x)
    if x.ndim == 1:
        x = nm.reshape(x, (1, x.shape[0]))
    if x.shape[1] != params.in_dim:
        where = f"view {view}" if view is not None else "input"
        raise ShapeError(f"{where}: encoder expects width {params.in_dim}, got {x.shape[1]}")
    h = x
    for w, b in zip(params.weights, params.biases):
        h = nm.relu(nm.add(nm.matmul(h, nm.transpose(w)), b))
        h = nm.dropout(h, ctx.rate, ctx.rng, ctx.training)
    return h


def encoder_block(encoders, views, ctx=EVAL_CTX):
    """Encode every view and stack into Z of shape (batch, H, V)."""
    if len(views) != len(encoders):
        raise ShapeError(f"expected {len(encoders)} views, got {len(views)}")
    columns = [encode_view(p, x, ctx, view=v) for v, (p, x) in enumerate(zip(encoders, views))]
    return nm.stack_last(columns)


def _as_batched(z):
    z = nm.as_tensor(z)
    if z.ndim == 2:
        return nm.reshape(z, (1, *z.shape)), True
    if z.ndim == 3:
        return z, False
    raise ShapeError(f"view stack must be (H, V) or (batch, H, V), got {z.shape}")


def attention_weights(params, z):
    """A = row_softmax(w_s2 · tanh(w_s1 · Z)), per sample; rows sum to 1."""
    z, single = _as_batched(z)
    if params.w_s1.shape[1] != z.shape[1]:
        raise ShapeError(f"attention expects H={params.w_s1.shape[1]}, got Z with H={z.shape[1]}")
    hidden = nm.tanh(nm.einsum("sh,bhv->bsv", params.w_s1, z))
    a = nm.row_softmax(nm.einsum("cs,bsv->bcv", params.w_s2, hidden))
    return nm.reshape(a, a.shape[1:]) if single else a


def attention_embed(a, z):
    """M = A · Z^T per sample; row i is the a_i-weighted sum of view encodings."""
    a, single_a = _as_batched(a)
    z, _ = _as_batched(z)
    if a.shape[-1] != z.shape[-1]:
        raise ShapeError(f"A has {a.shape[-1]} views but Z has {z.shape[-1]}")
    m = nm.einsum("bcv,bhv->bch", a, z)
    return nm.reshape(m, m.shape[1:]) if single_a else m


def fuse(fusion, z):
    """Collapse Z into (batch, rep_dim); returns (rep, A-or-None)."""
    z, single = _as_batched(z)
    attn = None
    if isinstance(fusion, SelfAttention):
        attn = attention_weights(fusion.params, z)
        m = attention_embed(attn, z)
        rep = nm.reshape(m, (m.shape[0], m.shape[1] * m.shape[2]))
    elif isinstance(fusion, MaxPool):
        rep = nm.max_last(z)
    elif isinstance(fusion, MeanPool):
        rep = nm.mean_last(z)
    elif isinstance(fusion, WeightedSum):
        w = nm.row_softmax(fusion.weights)
        rep = nm.einsum("bhv,v->bh", z, w)
    else:
        raise ConfigError(f"unknown fusion strategy {fusion!r}")
    if single:
        rep = nm.reshape(rep, rep.shape[1:])
        if attn is not None:
            attn = nm.reshape(attn, attn.shape[1:])
    return rep, attn


def classify(head, rep, ctx=EVAL_CTX):
    """Class probabilities for a (batch x d_in) representation block."""
    rep = nm.as_tensor(rep)
    if rep.ndim == 1:
        rep = nm.reshape(rep, (1, rep.shape[0]))
    if rep.shape[1] != head.d_in:
        raise ShapeError(f"head expects width {head.d_in}, got {rep.shape[1]}")
    h = nm.relu(nm.add(nm.matmul(rep, nm.transpose(head.w_hidden)), head.b_hidden))
    h = nm.dropout(h, ctx.rate, ctx.rng, ctx.training)
    logits = nm.add(nm.matmul(h, nm.transpose(head.w_out)), head.b_out)
    return nm.row_softmax(logits)


def forward(model, views, ctx=EVAL_CTX):
    """Full pipeline; returns (probs batch x K, A or None)."""
    z = encoder_block(model.encoders, views, ctx)
    rep, attn = fuse(model.fusion, z)
    probs = classify(model.head, rep, ctx)
    return probs, attn


def predict(probs):
    """Argmax class per row; ties break to the lowest index."""
    p = probs.value if isinstance(probs, Tensor) else np.asarray(probs)
    return np.argmax(p, axis=-1)

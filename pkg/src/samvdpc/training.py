"""Objective, optimization, initialization, and the train/evaluate loops.

The loss is mean cross-entropy plus lambda times the per-sample mean of
||A A^T - I||_F^2, which pushes the attention hops toward attending to
different views. Baseline fusions train with lambda = 0.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import model as mdl
from . import numerics as nm
from .data import DataError, minibatches
from .model import DropoutCtx, SelfAttention, xavier_init
from .numerics import ConfigError, Rng, Tensor


@dataclass
class TrainingConfig:
    lam: float = 1e-4
    lr: float = 1e-3
    decay_factor: float = 0.5
    patience: int = 5
    batch_size: int = 32
    dropout: float = 0.5
    epochs: int = 200
    seed: int = 0

    def validate(self):
        if self.lam < 0:
            raise ConfigError(f"lambda must be >= 0, got {self.lam}")
        if self.lr <= 0:
            raise ConfigError(f"learning rate must be positive, got {self.lr}")
        if not 0 < self.decay_factor < 1:
            raise ConfigError(f"decay factor must be in (0,1), got {self.decay_factor}")
        if self.batch_size < 1:
            raise ConfigError(f"batch size must be >= 1, got {self.batch_size}")
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")
        if not 0 <= self.dropout < 1:
            raise ConfigError(f"dropout must be in [0,1), got {self.dropout}")


@dataclass
class PretrainConfig:
    epochs: int = 100
    lr: float = 1e-3
    batch_size: int = 32


def one_hot(labels, n_classes):
    labels = np.asarray(labels)
    if labels.min() < 0 or labels.max() >= n_classes:
        raise DataError(f"label outside [0, {n_classes}): {labels.min()}..{labels.max()}")
    out = np.zeros((labels.size, n_classes))
    out[np.arange(labels.size), labels] = 1.0
    return out


def cross_entropy(probs, labels):
    """Mean -log p(true class); probabilities clamped at 1e-12 before log."""
    probs = nm.as_tensor(probs)
    if probs.ndim == 1:
        probs = nm.reshape(probs, (1, probs.shape[0]))
    hot = one_hot(labels, probs.shape[1])
    picked = nm.mul(nm.log(nm.clip_min(probs, 1e-12)), hot)
    return nm.mul(nm.total_sum(picked), -1.0 / hot.shape[0])


def attention_penalty(a):
    """Mean over samples of ||A A^T - I||_F^2."""
    a, single = mdl._as_batched(a)
    gram = nm.einsum("bcv,bdv->bcd", a, a)
    diff = nm.sub(gram, np.eye(a.shape[1]))
    return nm.mul(nm.total_sum(nm.mul(diff, diff)), 1.0 / a.shape[0])


def total_loss(model, views, labels, lam, ctx=mdl.EVAL_CTX):
    """Cross-entropy plus lambda * attention penalty; returns (loss, ce, penalty)."""
    if lam < 0:
        raise ConfigError(f"lambda must be >= 0, got {lam}")
    if lam > 0 and not isinstance(model.fusion, SelfAttention):
        raise ConfigError("lambda > 0 requires the self-attention fusion strategy")
    probs, attn = mdl.forward(model, views, ctx)
    ce = cross_entropy(probs, labels)
    if attn is None or lam == 0:
        return ce, ce, None
    penalty = attention_penalty(attn)
    return nm.add(ce, nm.mul(penalty, lam)), ce, penalty


class Adam:
    """Standard Adam with bias correction (beta1=0.9, beta2=0.999, eps=1e-8)."""

    def __init__(self, params, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(p.value) for p in self.params]
        self.v = [np.zeros_like(p.value) for p in self.params]
        self.t = 0

    def step(self, lr):
        self.t += 1
        for i, p in enumerate(self.params):
            g = p.grad
            if g is None:
                continue
            if g.shape != p.value.shape:
                raise nm.ShapeError(f"gradient shape {g.shape} != parameter shape {p.value.shape}")
            self.m[i] = self.beta1 * self.m[i] + (1 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1 - self.beta2) * g * g
            m_hat = self.m[i] / (1 - self.beta1 ** self.t)
            v_hat = self.v[i] / (1 - self.beta2 ** self.t)
            p.value -= lr * m_hat / (np.sqrt(v_hat) + self.eps)
        nm.zero_grads(self.params)


class PlateauSchedule:
    """Multiply lr by decay_factor after `patience` epochs without val improvement."""

    LR_FLOOR = 1e-7

    def __init__(self, lr, decay_factor=0.5, patience=5):
        if lr <= 0:
            raise ConfigError(f"learning rate must be positive, got {lr}")
        self.lr = lr
        self.decay_factor = decay_factor
        self.patience = patience
        self.best = np.inf
        self.stale = 0

    def step(self, val_loss):
        if val_loss < self.best - 1e-12:
            self.best = val_loss
            self.stale = 0
        else:
            self.stale += 1
            if self.stale >= self.patience:
                self.lr = max(self.lr * self.decay_factor, self.LR_FLOOR)
                self.stale = 0
        return self.lr


def _mirror_decoder(widths, in_dim, rng):
    dims = [widths[-1], *reversed(widths[:-1]), in_dim]
    weights = [Tensor(xavier_init((dims[i + 1], dims[i]), rng), requires_grad=True)
               for i in range(len(dims) - 1)]
    biases = [Tensor(np.zeros(dims[i + 1]), requires_grad=True) for i in range(len(dims) - 1)]
    return weights, biases


def reconstruction_mse(encoder, dec_w, dec_b, x):
    h = mdl.encode_view(encoder, x)
    for i, (w, b) in enumerate(zip(dec_w, dec_b)):
        h = nm.add(nm.matmul(h, nm.transpose(w)), b)
        if i < len(dec_w) - 1:
            h = nm.relu(h)  # linear output layer
    return nm.total_mean(nm.mul(nm.sub(h, x), nm.sub(h, x)))


def pretrain_autoencoders(train_views, widths, cfg, rng, with_history=False):
    """Train one autoencoder per view on its training features; return encoders.

    With ``with_history``, also returns per-view (initial, final) full-split
    reconstruction MSE.
    """
    encoders, history = [], []
    for v, x in enumerate(train_views):
        enc = mdl.init_encoder(x.shape[1], widths, rng.spawn(911 + v))
        dec_w, dec_b = _mirror_decoder(widths, x.shape[1], rng.spawn(917 + v))
        params = enc.weights + enc.biases + dec_w + dec_b
        opt = Adam(params)
        shuffler = rng.spawn(923 + v)
        n = x.shape[0]
        initial = float(reconstruction_mse(enc, dec_w, dec_b, x).value)
        for _ in range(cfg.epochs):
            order = shuffler.permutation(n)
            for start in range(0, n, cfg.batch_size):
                batch = x[order[start:start + cfg.batch_size]]
                loss = reconstruction_mse(enc, dec_w, dec_b, batch)
                nm.backward(loss)
                opt.step(cfg.lr)
        history.append((initial, float(reconstruction_mse(enc, dec_w, dec_b, x).value)))
        encoders.append(enc)
    return (encoders, history) if with_history else encoders


@dataclass
class EpochRecord:
    epoch: int
    train_total_loss: float
    train_ce: float
    train_penalty: float
    val_acc: float
    test_acc: float
    lr: float

    COLUMNS = ("epoch", "train_total_loss", "train_ce", "train_penalty",
               "val_acc", "test_acc", "lr")

    def row(self):
        return (self.epoch, self.train_total_loss, self.train_ce,
                self.train_penalty, self.val_acc, self.test_acc, self.lr)


def _gather(views, labels, idx):
    return [x[idx] for x in views], labels[idx]


def evaluate(model, views, labels):
    """Fraction of correct argmax predictions, computed in eval mode."""
    labels = np.asarray(labels)
    if labels.size == 0:
        raise DataError("cannot evaluate on an empty split")
    correct = 0
    for start in range(0, labels.size, 256):
        block = [x[start:start + 256] for x in views]
        probs, _ = mdl.forward(model, block)
        correct += int((mdl.predict(probs) == labels[start:start + 256]).sum())
    return correct / labels.size


def train(model, views, labels, splits, cfg):
    """Minibatch Adam training; returns (best-validation model, epoch records)."""
    cfg.validate()
    if len(splits.train) == 0 or len(splits.val) == 0 or len(splits.test) == 0:
        raise ConfigError("train/val/test splits must all be nonempty")
    labels = np.asarray(labels)
    lam = cfg.lam if isinstance(model.fusion, SelfAttention) else 0.0
    rng = Rng(cfg.seed)
    opt = Adam([p for _, p in model.parameters()])
    schedule = PlateauSchedule(cfg.lr, cfg.decay_factor, cfg.patience)
    train_views, train_labels = _gather(views, labels, splits.train)
    val_views, val_labels = _gather(views, labels, splits.val)
    test_views, test_labels = _gather(views, labels, splits.test)

    curves = []
    best = ([p.value.copy() for _, p in model.parameters()], -1.0)
    lr = schedule.lr
    for epoch in range(cfg.epochs):
        shuffle_rng = rng.spawn(2 * epoch)
        drop_rng = rng.spawn(2 * epoch + 1)
        ctx = DropoutCtx(training=True, rate=cfg.dropout, rng=drop_rng)
        totals = np.zeros(3)
        n_seen = 0
        for batch_idx in minibatches(np.arange(len(splits.train)), cfg.batch_size, shuffle_rng):
            bx = [x[batch_idx] for x in train_views]
            by = train_labels[batch_idx]
            loss, ce, penalty = total_loss(model, bx, by, lam, ctx)
            nm.backward(loss)
            opt.step(lr)
            w = len(batch_idx)
            totals += w * np.array([float(loss.value), float(ce.value),
                                    0.0 if penalty is None else float(penalty.value)])
            n_seen += w

        val_acc = evaluate(model, val_views, val_labels)
        test_acc = evaluate(model, test_views, test_labels)
        val_loss, _, _ = total_loss(model, val_views, val_labels, lam)
        mean_total, mean_ce, mean_pen = (totals / n_seen).tolist()
        curves.append(EpochRecord(epoch, mean_total, mean_ce, mean_pen,
                                  val_acc, test_acc, lr))
        if val_acc > best[1]:
            best = ([p.value.copy() for _, p in model.parameters()], val_acc)
        lr = schedule.step(float(val_loss.value))

    for (_, p), value in zip(model.parameters(), best[0]):
        p.value = value.copy()
    return model, curves

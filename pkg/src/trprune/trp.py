"""Trained Rank Pruning: SGD with periodic low-rank projection of conv filters.

At every iteration ``t`` with ``t % m == 0`` each participating conv's
filters are replaced by their energy-truncated low-rank approximation
before the forward pass, so the gradient step lands on the low-rank
filters. Optionally a nuclear-norm sub-gradient (``lambda * U_r V_r^T`` on
the same matricization) is added to those layers' gradients every step.
Momentum buffers are never touched by the projection.
"""
import copy
import csv
import dataclasses
import logging
from dataclasses import dataclass, field

import numpy as np

from . import linalg
from .errors import DegenerateRankError, ValidationError
from .lowrank import Scheme, dematricize, factorize, matricize, matrix_shape, rank_prune
from .models import build_model
from .nn import Conv2d, Model, SgdState, sgd_step, softmax_cross_entropy

log = logging.getLogger(__name__)

METRICS_HEADER = ["iter", "epoch", "lr", "loss", "nuclear_penalty", "pruned", "ranks", "rank_ratios"]


@dataclass
class TrpConfig:
    model: str = "tiny-cnn"
    scheme: str = "channel"
    m: int = 20
    e: float = 0.05
    lambda_: float = 3e-4
    trp_enabled: bool = True
    base_lr: float = 0.1
    lr_milestones: list = None
    lr_decay: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 1e-4
    epochs: int = 10
    batch_size: int = 64
    seed: int = 0
    decompose_first_layer: bool = True
    n_train: int = 10000
    n_test: int = 2000

    def __post_init__(self):
        self.scheme = Scheme.parse(self.scheme).value
        linalg.energy_ratio(self.e)
        if int(self.m) != self.m or self.m < 1:
            raise ValidationError(f"period m must be an integer >= 1, got {self.m}")
        if self.lambda_ < 0:
            raise ValidationError(f"lambda must be >= 0, got {self.lambda_}")
        if not self.base_lr > 0:
            raise ValidationError(f"base_lr must be positive, got {self.base_lr}")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValidationError("epochs and batch_size must be >= 1")
        if self.lr_milestones is not None:
            ms = list(self.lr_milestones)
            if any(b <= a for a, b in zip(ms, ms[1:])):
                raise ValidationError(f"lr_milestones must be strictly increasing, got {ms}")
            self.lr_milestones = ms

    @classmethod
    def from_dict(cls, d):
        """Build from JSON-style keys (``lambda`` for the nuclear weight); unknown keys fail."""
        d = dict(d)
        if "lambda" in d:
            d["lambda_"] = d.pop("lambda")
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - names)
        if unknown:
            raise ValidationError(f"unknown config keys: {', '.join(unknown)}")
        try:
            return cls(**d)
        except TypeError as exc:
            raise ValidationError(f"bad config value: {exc}") from None

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["lambda"] = d.pop("lambda_")
        return d

    def milestones(self):
        if self.lr_milestones is not None:
            return list(self.lr_milestones)
        # step decay at 50% and 75% of the run
        ms = sorted({int(self.epochs * 0.5), int(self.epochs * 0.75)})
        return [x for x in ms if x > 0]

    def lr_at(self, epoch):
        drops = sum(1 for ms in self.milestones() if epoch >= ms)
        return self.base_lr * self.lr_decay ** drops


@dataclass
class TrainRecord:
    t: int
    epoch: int
    lr: float
    loss: float
    nuclear_penalty: float
    pruned: bool
    ranks: tuple
    rank_ratios: tuple

    def csv_row(self):
        return [self.t, self.epoch, repr(self.lr), repr(self.loss), repr(self.nuclear_penalty),
                int(self.pruned), ";".join(str(k) for k in self.ranks),
                ";".join(repr(r) for r in self.rank_ratios)]


@dataclass
class TrainReport:
    records: list = field(default_factory=list)
    final_train_accuracy: float = float("nan")
    final_test_accuracy: float = float("nan")
    pruned_iterations: list = field(default_factory=list)


def participating_layers(model, cfg):
    """Indices of conv layers whose filters TRP projects (spatial kernels only)."""
    idx = [i for i, layer in enumerate(model.layers)
           if isinstance(layer, Conv2d) and layer.kernel[0] * layer.kernel[1] > 1]
    if not cfg.decompose_first_layer:
        convs = [i for i, layer in enumerate(model.layers) if isinstance(layer, Conv2d)]
        if convs and idx and idx[0] == convs[0]:
            idx = idx[1:]
    return idx


def nuclear_gradient_term(w, scheme, lam):
    """``lam * U_r V_r^T`` of the filters' matricization, folded back to 4-D."""
    if lam < 0:
        raise ValidationError(f"lambda must be >= 0, got {lam}")
    if lam == 0:
        return np.zeros_like(np.asarray(w, dtype=np.float64))
    return lam * dematricize(linalg.nuclear_subgradient(matricize(w, scheme)), w.shape, scheme)


def _min_dim(w, scheme):
    return min(matrix_shape(w.shape, scheme))


def trp_iteration(model, batch, t, cfg, opt, layers=None, last_ranks=None, on_prune=None):
    """One SGD step, preceded by rank pruning when ``t % m == 0``.

    Returns ``(loss, nuclear_penalty, pruned, ranks)``; ``ranks`` maps layer
    index to the rank kept at this iteration (or ``last_ranks`` otherwise).
    """
    x, y = batch
    if layers is None:
        layers = participating_layers(model, cfg)
    ranks = dict(last_ranks or {})
    pruned = bool(cfg.trp_enabled) and t % cfg.m == 0
    if pruned:
        for i in layers:
            w = model.layers[i].weight
            low, k = rank_prune(w, cfg.scheme, cfg.e)
            if k == 0:
                raise DegenerateRankError(f"iteration {t}: layer {i} pruned to rank 0")
            w[...] = low
            ranks[i] = k
        if on_prune is not None:
            on_prune(t, model, dict(ranks))

    logits = model.forward(x)
    loss, grad = softmax_cross_entropy(logits, y)
    model.backward(grad)

    penalty = 0.0
    if cfg.lambda_ > 0:
        for i in layers:
            layer = model.layers[i]
            nrm, sub = linalg.nuclear_norm_and_subgradient(matricize(layer.weight, cfg.scheme))
            penalty += cfg.lambda_ * nrm
            layer.grad_weight = layer.grad_weight + cfg.lambda_ * dematricize(
                sub, layer.weight.shape, cfg.scheme)

    sgd_step(model.named_params(), model.named_grads(), opt)
    return loss, penalty, pruned, ranks


def _batches(n, batch_size, rng):
    order = rng.permutation(n)
    for s in range(0, n, batch_size):
        yield order[s:s + batch_size]


def train(model_spec, dataset, cfg, model=None, on_prune=None, metrics_path=None):
    """Run ``cfg.epochs`` epochs of TRP (or plain SGD when disabled).

    With ``trp_enabled=False`` and ``lambda_=0`` this is exactly minibatch
    SGD with momentum and weight decay. Data order comes from a generator
    seeded by ``[seed, 1]``; weights from ``seed``.
    """
    if model is None:
        model = build_model(model_spec, cfg.seed)
    if len(dataset.train_y) == 0:
        raise ValidationError("training set is empty")
    opt = SgdState(cfg.lr_at(0), cfg.momentum, cfg.weight_decay)
    rng = np.random.default_rng([cfg.seed, 1])
    layers = participating_layers(model, cfg)
    mins = {i: _min_dim(model.layers[i].weight, cfg.scheme) for i in layers}
    report = TrainReport()
    ranks = {}
    t = 0

    writer = fh = None
    if metrics_path is not None:
        fh = open(metrics_path, "w", newline="", encoding="utf-8")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(METRICS_HEADER)
    try:
        for epoch in range(cfg.epochs):
            opt.lr = cfg.lr_at(epoch)
            first = len(report.records)
            for idx in _batches(len(dataset.train_y), cfg.batch_size, rng):
                batch = (dataset.train_x[idx], dataset.train_y[idx])
                loss, pen, pruned, ranks = trp_iteration(
                    model, batch, t, cfg, opt, layers, ranks, on_prune)
                if not np.isfinite(loss):
                    raise FloatingPointError(f"loss diverged at iteration {t}")
                if pruned:
                    report.pruned_iterations.append(t)
                ks = tuple(ranks[i] for i in layers if i in ranks)
                ratios = tuple(ranks[i] / mins[i] for i in layers if i in ranks)
                report.records.append(
                    TrainRecord(t, epoch, opt.lr, loss, pen, pruned, ks, ratios))
                t += 1
            if writer is not None:
                writer.writerows(r.csv_row() for r in report.records[first:])
                fh.flush()
            log.info("epoch %d lr %.3g loss %.4f", epoch, opt.lr, report.records[-1].loss)
    finally:
        if fh is not None:
            fh.close()

    report.final_train_accuracy = model.accuracy(dataset.train_x, dataset.train_y)
    report.final_test_accuracy = model.accuracy(dataset.test_x, dataset.test_y)
    return model, report


def rank_pruned_copy(model, cfg, e=None):
    """Copy of ``model`` whose participating filters are replaced by ``rank_prune``."""
    e = cfg.e if e is None else e
    out = copy.deepcopy(model)
    for i in participating_layers(out, cfg):
        w = out.layers[i].weight
        w[...] = rank_prune(w, cfg.scheme, e)[0]
    return out


def final_prune_and_export(model, cfg, e=None):
    """Replace every participating conv by its two-layer factorization.

    No fine-tuning follows; the factorized model computes exactly the
    rank-pruned network.
    """
    e = cfg.e if e is None else e
    layers = []
    part = set(participating_layers(model, cfg))
    for i, layer in enumerate(model.layers):
        if i in part:
            try:
                layers.append(factorize(layer.weight, cfg.scheme, e, layer.bias,
                                        layer.stride, layer.padding))
            except DegenerateRankError as exc:
                raise DegenerateRankError(f"layer {i}: {exc}") from None
        else:
            layers.append(copy.deepcopy(layer))
    return Model(layers, model.name, model.input_shape)

"""Optimizers, learning-rate schedules and the minibatch training loop."""

import copy
import json
import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .errors import InvalidInputError, TrainingFault
from .losses import DEFAULT_BETA, DEFAULT_EPSILON, DEFAULT_GCE_Q, loss_cce
from .model import DEFAULT_HIDDEN, ConfidenceHead, ConfidenceTable, Mlp
from .noise import check_transition_matrix
from .objective import ICE_METHODS, METHODS, MethodParams, backward
from .simplex import softmax

OPTIMIZERS = ("adam", "sgd")
SCHEDULES = ("exponential", "warmup_linear", "constant")


@dataclass
class TrainConfig:
    method: str = "cce"
    epsilon: float = DEFAULT_EPSILON
    beta: float = DEFAULT_BETA
    gce_q: float = DEFAULT_GCE_Q
    transition: list | None = None
    optimizer: str = "adam"
    lr: float = 1e-3
    momentum: float = 0.9
    weight_decay: float = 0.0
    schedule: str = "exponential"
    lr_end: float = 1e-4
    warmup_iters: int = 0
    batch_size: int = 512
    total_iters: int = 2000
    seed: int = 0
    val_fraction: float = 0.2
    hidden: tuple = DEFAULT_HIDDEN
    head_hidden: tuple = (64,)
    init_confidence: float = 0.9
    confidence_lr_scale: float = 100.0

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        self.head_hidden = tuple(int(h) for h in self.head_hidden)
        if self.method not in METHODS:
            raise InvalidInputError(f"unknown method {self.method!r}; choose from {', '.join(METHODS)}")
        if self.optimizer not in OPTIMIZERS:
            raise InvalidInputError(f"unknown optimizer {self.optimizer!r}")
        if self.schedule not in SCHEDULES:
            raise InvalidInputError(f"unknown schedule {self.schedule!r}")
        for name in ("epsilon", "beta"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise InvalidInputError(f"{name} must lie in [0, 1]")
        if not 0.0 < self.gce_q <= 1.0:
            raise InvalidInputError("gce_q must lie in (0, 1]")
        if self.batch_size < 1 or self.total_iters < 1:
            raise InvalidInputError("batch_size and total_iters must be positive")
        if not 0.0 <= self.val_fraction < 1.0:
            raise InvalidInputError("val_fraction must lie in [0, 1)")
        if not 0.0 < self.init_confidence < 1.0:
            raise InvalidInputError("init_confidence must lie in (0, 1)")
        if self.transition is not None:
            self.transition = check_transition_matrix(self.transition).tolist()

    def to_dict(self):
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        d["head_hidden"] = list(self.head_hidden)
        return d

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise InvalidInputError(f"unknown config keys: {', '.join(sorted(unknown))}")
        return cls(**d)

    @property
    def method_params(self):
        return MethodParams(self.epsilon, self.beta, self.gce_q, None if self.transition is None else np.array(self.transition))


def schedule_lr(config, iteration):
    total = config.total_iters
    if not 0 <= iteration < total:
        raise InvalidInputError(f"iteration {iteration} outside [0, {total})")
    if config.schedule == "constant":
        return config.lr
    if config.schedule == "exponential":
        if total == 1:
            return config.lr
        return config.lr * (config.lr_end / config.lr) ** (iteration / (total - 1))
    warm = config.warmup_iters
    if iteration <= warm and warm > 0:
        return config.lr * iteration / warm
    return config.lr * (total - iteration) / (total - warm)


class Sgd:
    """SGD with heavy-ball momentum: ``v = m v + g + wd w``, ``w -= lr v``."""

    def __init__(self, momentum=0.9, weight_decay=0.0):
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.velocity = {}

    def step(self, key, params, grads, lr, decay=True):
        vs = self.velocity.setdefault(key, [np.zeros_like(p) for p in params])
        for w, g, v in zip(params, grads, vs):
            if w.shape != g.shape:
                raise InvalidInputError(f"gradient shape {g.shape} != parameter shape {w.shape}")
            if decay and self.weight_decay:
                g = g + self.weight_decay * w
            v *= self.momentum
            v += g
            w -= lr * v

    def step_rows(self, key, w, rows, g, lr):
        v = self.velocity.setdefault(key, np.zeros_like(w))
        v[rows] = self.momentum * v[rows] + g
        w[rows] -= lr * v[rows]


class Adam:
    """Adam with bias correction; ``step_rows`` keeps per-row step counts."""

    def __init__(self, beta1=0.9, beta2=0.999, eps=1e-8, weight_decay=0.0):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.weight_decay = weight_decay
        self.state = {}

    def step(self, key, params, grads, lr, decay=True):
        st = self.state.setdefault(key, {"t": 0, "m": [np.zeros_like(p) for p in params], "v": [np.zeros_like(p) for p in params]})
        st["t"] += 1
        t = st["t"]
        c1 = 1.0 - self.beta1**t
        c2 = 1.0 - self.beta2**t
        for w, g, m, v in zip(params, grads, st["m"], st["v"]):
            if w.shape != g.shape:
                raise InvalidInputError(f"gradient shape {g.shape} != parameter shape {w.shape}")
            if decay and self.weight_decay:
                g = g + self.weight_decay * w
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            w -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def step_rows(self, key, w, rows, g, lr):
        st = self.state.setdefault(key, {"t": np.zeros(w.shape, dtype=np.int64), "m": np.zeros_like(w), "v": np.zeros_like(w)})
        st["t"][rows] += 1
        t = st["t"][rows]
        m = self.beta1 * st["m"][rows] + (1.0 - self.beta1) * g
        v = self.beta2 * st["v"][rows] + (1.0 - self.beta2) * g * g
        st["m"][rows] = m
        st["v"][rows] = v
        w[rows] -= lr * (m / (1.0 - self.beta1**t)) / (np.sqrt(v / (1.0 - self.beta2**t)) + self.eps)


def make_optimizer(config):
    if config.optimizer == "sgd":
        return Sgd(config.momentum, config.weight_decay)
    return Adam(weight_decay=config.weight_decay)


@dataclass
class EpochRecord:
    epoch: int
    iteration: int
    train_loss: float
    val_loss: float | None
    val_acc: float | None
    test_acc: float | None = None
    confidence: np.ndarray | None = field(default=None, repr=False)


@dataclass
class RunHistory:
    method: str
    seed: int
    train_index: np.ndarray
    val_index: np.ndarray
    epochs: list = field(default_factory=list)
    best_epoch: int | None = None

    @property
    def final_confidence(self):
        return self.epochs[-1].confidence if self.epochs else None

    def to_dict(self):
        def num(x):
            return None if x is None or (isinstance(x, float) and math.isnan(x)) else x

        return {
            "format": "iceconf-history",
            "version": 1,
            "method": self.method,
            "seed": self.seed,
            "best_epoch": self.best_epoch,
            "train_index": self.train_index.tolist(),
            "val_index": self.val_index.tolist(),
            "epochs": [
                {
                    "epoch": e.epoch,
                    "iteration": e.iteration,
                    "train_loss": num(e.train_loss),
                    "val_loss": num(e.val_loss),
                    "val_acc": num(e.val_acc),
                    "test_acc": num(e.test_acc),
                    "confidence": None if e.confidence is None else e.confidence.tolist(),
                }
                for e in self.epochs
            ],
        }

    @classmethod
    def from_dict(cls, d):
        if d.get("format") != "iceconf-history":
            raise InvalidInputError("not a run history document")
        h = cls(d["method"], d["seed"], np.array(d["train_index"], dtype=np.int64), np.array(d["val_index"], dtype=np.int64))
        h.best_epoch = d.get("best_epoch")
        for e in d["epochs"]:
            conf = e.get("confidence")
            h.epochs.append(
                EpochRecord(
                    e["epoch"],
                    e["iteration"],
                    e["train_loss"],
                    e["val_loss"],
                    e["val_acc"],
                    e.get("test_acc"),
                    None if conf is None else np.array(conf, dtype=np.float64),
                )
            )
        return h

    def dump(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class TrainedModel:
    classifier: Mlp
    confidence: ConfidenceTable | ConfidenceHead | None = None

    def predict_proba(self, x):
        return softmax(self.classifier.forward(x))

    def predict(self, x):
        return np.argmax(self.classifier.forward(x), axis=1)


def split_indices(n, val_fraction, rng):
    """Seeded shuffle of ``0..n-1``; the last ``val_fraction`` share is validation."""
    perm = rng.permutation(n)
    n_val = int(round(n * val_fraction))
    train, val = perm[: n - n_val], perm[n - n_val :]
    return np.sort(train), np.sort(val)


def _accuracy(model, x, y):
    if len(y) == 0:
        return None
    return float(np.mean(np.argmax(model.forward(x), axis=1) == y))


def _snapshot(source, x_train):
    if isinstance(source, ConfidenceTable):
        return source.all_confidences().copy()
    if isinstance(source, ConfidenceHead):
        return source.confidence(x_train).copy()
    return None


def _frozen(model, source):
    model._inputs = None
    if isinstance(source, ConfidenceHead):
        source.net._inputs = None
    return TrainedModel(copy.deepcopy(model), copy.deepcopy(source))


def train_run(dataset, config, test=None, log=None):
    """Train ``config.method`` on ``dataset`` and return ``(TrainedModel, RunHistory)``.

    ``test`` is an optional ``(features, clean_labels)`` pair scored each epoch.
    The returned model is the epoch-end state with the best validation accuracy
    (the final state when there is no validation split).
    """
    root = np.random.SeedSequence(config.seed)
    split_ss, init_ss, head_ss, shuffle_ss = root.spawn(4)
    train_idx, val_idx = split_indices(len(dataset), config.val_fraction, np.random.default_rng(split_ss))
    x, y = dataset.features, dataset.noisy_labels
    x_tr, y_tr = x[train_idx], y[train_idx]
    x_val, y_val = x[val_idx], y[val_idx]
    k = dataset.num_classes

    model = Mlp.init([x.shape[1], *config.hidden, k], np.random.default_rng(init_ss))
    source = None
    if config.method in ICE_METHODS:
        if ICE_METHODS[config.method][0] == "table":
            source = ConfidenceTable.init(len(train_idx), config.init_confidence)
        else:
            source = ConfidenceHead.init(x.shape[1], config.head_hidden, np.random.default_rng(head_ss), config.init_confidence)
    params = config.method_params
    if config.method == "forward" and params.transition is None:
        if dataset.transition is None:
            raise InvalidInputError("forward correction needs a transition matrix (config or dataset)")
        params.transition = check_transition_matrix(dataset.transition, k)

    opt = make_optimizer(config)
    shuffle = np.random.default_rng(shuffle_ss)
    history = RunHistory(config.method, config.seed, train_idx, val_idx)
    best = (-1.0, None)
    it = 0
    epoch = 0
    n_tr = len(train_idx)
    while it < config.total_iters:
        order = shuffle.permutation(n_tr)
        losses_seen = []
        for start in range(0, n_tr, config.batch_size):
            if it >= config.total_iters:
                break
            rows = order[start : start + config.batch_size]
            lr = schedule_lr(config, it)
            try:
                g = backward(config.method, model, source, x_tr[rows], y_tr[rows], rows, params)
            except TrainingFault as exc:
                raise TrainingFault(f"iteration {it}: {exc}", iteration=it, batch=train_idx[rows].tolist()) from None
            if not math.isfinite(g.loss):
                bad = train_idx[rows][~np.isfinite(g.per_instance)].tolist()
                raise TrainingFault(
                    f"non-finite loss at iteration {it}; offending instances {bad[:10]}",
                    iteration=it,
                    batch=train_idx[rows].tolist(),
                )
            opt.step("model", model.params, g.model, lr)
            if g.table is not None:
                opt.step_rows("table", source.raw, g.table[0], g.table[1], lr * config.confidence_lr_scale)
            if g.head is not None:
                opt.step("head", source.params, g.head, lr * config.confidence_lr_scale, decay=False)
            losses_seen.append(g.loss)
            it += 1

        val_loss = val_acc = None
        if len(val_idx):
            z = model.forward(x_val)
            val_loss = float(np.mean(loss_cce(softmax(z), y_val)))
            val_acc = float(np.mean(np.argmax(z, axis=1) == y_val))
        rec = EpochRecord(
            epoch,
            it,
            float(np.mean(losses_seen)),
            val_loss,
            val_acc,
            _accuracy(model, *test) if test is not None else None,
            _snapshot(source, x_tr),
        )
        history.epochs.append(rec)
        if log is not None:
            log(rec)
        score = val_acc if val_acc is not None else 0.0
        if val_acc is None or score > best[0]:
            best = (score, _frozen(model, source))
            history.best_epoch = epoch
        epoch += 1
    return best[1], history

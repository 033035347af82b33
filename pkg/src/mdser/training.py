"""AdamW, batching, dataset splits and the training loop."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .contrastive import auxiliary_loss, default_alpha, total_loss
from .metrics import EvalResult, score_domain
from .nn import cross_entropy
from .tensor import backward

logger = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    """Raised when training cannot continue (e.g. a non-finite loss)."""


class AdamW:
    """Adam with decoupled weight decay.

    ``p <- p - lr * (m_hat / (sqrt(v_hat) + eps) + weight_decay * p)``.
    Parameters whose ``.grad`` is ``None`` are left untouched (no decay, no
    moment update), so a batch only moves what it actually reached.  Each
    parameter keeps its own step count for bias correction.
    """

    def __init__(self, params, lr=1e-3, betas=(0.9, 0.999), eps=1e-8, weight_decay=1e-5, lr_scale=None):
        self.params = list(params)
        self.lr = lr
        self.lr_scale = lr_scale or {}
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self.state = {}

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def step(self):
        self.t += 1
        for p in self.params:
            g = p.grad
            if g is None:
                continue
            if g.shape != p.shape:
                raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape}")
            st = self.state.get(id(p))
            if st is None:
                st = self.state[id(p)] = {"m": np.zeros_like(p.data), "v": np.zeros_like(p.data), "t": 0}
            st["t"] += 1
            st["m"] = self.beta1 * st["m"] + (1 - self.beta1) * g
            st["v"] = self.beta2 * st["v"] + (1 - self.beta2) * g * g
            m_hat = st["m"] / (1 - self.beta1 ** st["t"])
            v_hat = st["v"] / (1 - self.beta2 ** st["t"])
            lr = self.lr * self.lr_scale.get(id(p), 1.0)
            p.data = p.data - lr * (m_hat / (np.sqrt(v_hat) + self.eps) + self.weight_decay * p.data)


def adamw_step(state, params, grads):
    """Functional form: assign ``grads`` to ``params`` and step ``state``."""
    for p, g in zip(params, grads):
        if g is not None and np.shape(g) != p.shape:
            raise ValueError(f"gradient shape {np.shape(g)} != parameter shape {p.shape}")
        p.grad = None if g is None else np.asarray(g, dtype=np.float64)
    state.step()
    return params


# ---------------------------------------------------------------------------
# data plumbing
# ---------------------------------------------------------------------------


def _round_half_up(x):
    return int(math.floor(x + 0.5))


def _allocate(counts, total):
    """Largest-remainder split of ``total`` proportional to ``counts``."""
    counts = np.asarray(counts, dtype=np.float64)
    if counts.sum() == 0:
        return np.zeros(len(counts), dtype=int)
    exact = counts * total / counts.sum()
    base = np.floor(exact).astype(int)
    order = np.argsort(-(exact - base), kind="stable")
    for i in order[: total - base.sum()]:
        base[i] += 1
    return base


def _stratified_take(items, labels, n_take, rng):
    classes = sorted(set(labels))
    by_class = {c: [i for i, lab in enumerate(labels) if lab == c] for c in classes}
    quotas = _allocate([len(by_class[c]) for c in classes], n_take)
    taken = []
    for c, q in zip(classes, quotas):
        idx = list(by_class[c])
        rng.shuffle(idx)
        taken.extend(idx[:q])
    taken_set = set(taken)
    rest = [i for i in range(len(items)) if i not in taken_set]
    return [items[i] for i in sorted(taken)], [items[i] for i in rest]


def split_dataset(bundles, rng, test_frac=0.2, val_frac=0.2):
    """Label-stratified train/val/test split of one domain's bundles.

    ``test = round(0.2 n)``, ``val = round(0.2 (n - test))`` (halves round up).
    """
    n = len(bundles)
    if n < 5:
        raise ValueError(f"dataset of {n} items is too small to split (need >= 5)")
    n_test = _round_half_up(test_frac * n)
    n_val = _round_half_up(val_frac * (n - n_test))
    test, dev = _stratified_take(list(bundles), [b.label for b in bundles], n_test, rng)
    val, train = _stratified_take(dev, [b.label for b in dev], n_val, rng)
    return train, val, test


def split_corpus(corpus, seed):
    """Split every domain independently; returns three domain -> list maps."""
    rng = np.random.default_rng(seed)
    train, val, test = {}, {}, {}
    for domain, bundles in corpus.by_domain().items():
        if bundles:
            train[domain], val[domain], test[domain] = split_dataset(bundles, rng)
    return train, val, test


def _chunks(items, size):
    return [items[i : i + size] for i in range(0, len(items), size)]


def make_batches(dataset, batch_size, rng):
    """Shuffle each domain and cut it into single-domain batches.

    ``dataset`` is a list of bundles or a domain -> list mapping.  Domains are
    interleaved evenly in proportion to their batch counts.  Returns a list of
    ``(domain, batch)`` pairs.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    if not isinstance(dataset, dict):
        dataset = {None: list(dataset)}
    if not any(dataset.values()):
        raise ValueError("cannot batch an empty dataset")
    keyed = []
    for rank, (domain, items) in enumerate(dataset.items()):
        order = rng.permutation(len(items))
        chunks = _chunks([items[i] for i in order], batch_size)
        for i, chunk in enumerate(chunks):
            keyed.append(((i + 0.5) / len(chunks), rank, domain, chunk))
    keyed.sort(key=lambda k: (k[0], k[1]))
    return [(domain if domain is not None else chunk[0].domain, chunk) for _, _, domain, chunk in keyed]


# ---------------------------------------------------------------------------
# training loop
# ---------------------------------------------------------------------------


@dataclass
class TrainSchedule:
    epochs: int = 20
    batch_size: int = 32
    seed: int = 1
    lr: float = 1e-3
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8
    weight_decay: float = 1e-5
    exclude_self_centroid: bool = False
    arch_lr_scale: float = 1.0

    def __post_init__(self):
        if self.arch_lr_scale <= 0:
            raise ValueError("arch_lr_scale must be positive")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


@dataclass
class TrainResult:
    log: list = field(default_factory=list)
    best_epoch: int = 0
    best_val_ua: float = float("nan")
    best_state: dict = field(default_factory=dict)

    def log_lines(self):
        return "".join(json.dumps(rec, sort_keys=True) + "\n" for rec in self.log)


def _labels_to_index(model, domain, batch):
    return np.array([model.label_index(domain, b.label) for b in batch], dtype=np.intp)


def batch_loss(model, domain, batch, alpha, train=True, rng=None, exclude_self=False, xi=None):
    """Forward one single-domain batch; returns (loss, ce, aux, logits, rep)."""
    logits, rep = model.forward(batch, domain, train=train, rng=rng, xi=xi)
    ce = cross_entropy(logits, _labels_to_index(model, domain, batch))
    aux = None
    if alpha > 0:
        aux = auxiliary_loss(rep, [b.label for b in batch], model.similarity, exclude_self=exclude_self)
    loss = total_loss(ce, aux, alpha)
    if model.nas is not None and model.nas.l0_penalty:
        loss = loss + model.nas.penalty(domain)
    return loss, ce, aux, logits, rep


def evaluate(model, data, batch_size=64):
    """Eval-mode predictions and scores per domain.

    ``data`` maps domain -> bundles.  Returns ``(EvalResult, outputs)`` where
    ``outputs[domain]`` holds ``preds``, ``labels`` (indices into the output
    label list), mean ``ce`` and stacked ``rep``.
    """
    result = EvalResult()
    outputs = {}
    for domain, bundles in data.items():
        if not bundles:
            continue
        preds, labels, reps, ce_sum = [], [], [], 0.0
        for chunk in _chunks(list(bundles), batch_size):
            logits, rep = model.forward(chunk, domain, train=False)
            idx = _labels_to_index(model, domain, chunk)
            ce_sum += cross_entropy(logits, idx).item() * len(chunk)
            preds.append(model.predict_indices(logits, domain))
            labels.append(idx)
            reps.append(rep.data)
        preds = np.concatenate(preds)
        labels = np.concatenate(labels)
        n_out = len(model.output_labels(domain))
        result.domains[domain] = score_domain(preds, labels, n_out)
        outputs[domain] = {
            "preds": preds,
            "labels": labels,
            "ce": ce_sum / len(labels),
            "rep": np.concatenate(reps, axis=0),
        }
    return result, outputs


def snapshot(model):
    return {name: p.data.copy() for name, p in model.named_parameters()}


def restore(model, state):
    for name, p in model.named_parameters():
        p.data = state[name].copy()


def fit(model, train, val, schedule=None, alphas=None, on_epoch=None):
    """Train ``model`` and leave it at the epoch with the best mean val UA.

    ``train``/``val`` map domain -> bundles.  ``alphas`` maps domain -> aux
    weight (defaults per language name).  Returns a :class:`TrainResult`
    whose ``log`` holds one record per (epoch, domain, split).
    """
    schedule = schedule or TrainSchedule()
    alphas = {d: (alphas or {}).get(d, default_alpha(d)) for d in train}
    rng = np.random.default_rng(schedule.seed)
    opt = AdamW(
        model.parameters(),
        lr=schedule.lr,
        betas=schedule.betas,
        eps=schedule.eps,
        weight_decay=schedule.weight_decay,
        lr_scale={id(p): schedule.arch_lr_scale for p in model.architecture_parameters()},
    )
    result = TrainResult()
    best = -np.inf
    for epoch in range(1, schedule.epochs + 1):
        stats = {d: {"correct": [], "labels": [], "ce": 0.0, "aux": 0.0, "n": 0, "n_aux": 0} for d in train}
        for domain, batch in make_batches(train, schedule.batch_size, rng):
            opt.zero_grad()
            loss, ce, aux, logits, _ = batch_loss(
                model, domain, batch, alphas[domain], train=True, rng=rng, exclude_self=schedule.exclude_self_centroid
            )
            value = loss.item()
            if not math.isfinite(value):
                raise TrainingError(
                    f"non-finite loss {value} at epoch {epoch}, domain {domain}, "
                    f"batch starting {batch[0].utterance_id}"
                )
            backward(loss)
            opt.step()
            model.similarity.clamp_()
            st = stats[domain]
            st["correct"].append(model.predict_indices(logits, domain))
            st["labels"].append(_labels_to_index(model, domain, batch))
            st["ce"] += ce.item() * len(batch)
            st["n"] += len(batch)
            if aux is not None:
                st["aux"] += aux.item()
                st["n_aux"] += 1
        for domain, st in stats.items():
            preds = np.concatenate(st["correct"])
            labels = np.concatenate(st["labels"])
            scored = score_domain(preds, labels, len(model.output_labels(domain)))
            result.log.append(
                {
                    "epoch": epoch,
                    "domain": domain,
                    "split": "train",
                    "WA": scored.WA,
                    "UA": scored.UA,
                    "L_CE": st["ce"] / st["n"],
                    "L_aux": st["aux"] / st["n_aux"] if st["n_aux"] else None,
                }
            )
        val_ua = []
        if val:
            scores, outputs = evaluate(model, val)
            for domain, r in scores.domains.items():
                result.log.append(
                    {
                        "epoch": epoch,
                        "domain": domain,
                        "split": "val",
                        "WA": r.WA,
                        "UA": r.UA,
                        "L_CE": outputs[domain]["ce"],
                        "L_aux": None,
                    }
                )
                val_ua.append(r.UA)
        score = float(np.mean(val_ua)) if val_ua else float(epoch)
        if score > best:
            best = score
            result.best_epoch = epoch
            result.best_val_ua = score if val_ua else float("nan")
            result.best_state = snapshot(model)
        logger.debug("epoch %d val UA %.4f", epoch, score)
        if on_epoch is not None:
            on_epoch(epoch, result)
    restore(model, result.best_state)
    return result

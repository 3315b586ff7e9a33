"""Task streams, the training loop and length-generalization evaluation."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from ..fsa import Group, all_permutations, perm_compose, perm_rank
from ..tasks import ArithVocab, gen_mod_arith, group_elements, parse_variant
from .model import ModelConfig, cross_entropy, forward, backward, init_params, predict
from .optim import AdamW, clip_grads, lr_at


class TrainingDiverged(RuntimeError):
    pass


# -- tasks ---------------------------------------------------------------------------


def multiplication_table(group: Group) -> np.ndarray:
    """``table[x, a]`` = element for "``a`` then ``x``" (rank encoding for symmetric groups)."""
    if group.kind == "cyclic":
        m = group.size
        return (np.arange(m)[:, None] + np.arange(m)[None, :]) % m
    perms = all_permutations(group.size)
    table = np.empty((len(perms), len(perms)), dtype=np.int64)
    for x, px in enumerate(perms):
        for a, pa in enumerate(perms):
            table[x, a] = perm_rank(perm_compose(px, pa))
    return table


class Task:
    """Batched sampler plus scoring rule for one training task.

    ``score`` is ``"last"`` (final position), ``"masked"`` (masked positions)
    or ``"sequence"`` (a sample counts only if every masked position is right).
    """

    name: str
    vocab: int
    n_out: int
    acc_rand: float
    score: str

    def batch(self, rng: np.random.Generator, size: int, length: int):
        raise NotImplementedError

    def describe(self) -> dict:
        raise NotImplementedError


class ParityTask(Task):
    name, vocab, n_out, acc_rand, score = "parity", 2, 2, 0.5, "last"

    def __init__(self, supervise: str = "last"):
        # "last": loss on the final parity only; "all": loss on every prefix parity.
        # Per-prefix loss lets the model fit short lengths with leaky decays.
        if supervise not in ("last", "all"):
            raise ValueError(f"supervise must be 'last' or 'all', got {supervise!r}")
        self.supervise = supervise

    def batch(self, rng, size, length):
        x = rng.integers(0, 2, (size, length))
        mask = np.ones((size, length))
        if self.supervise == "last":
            mask[:, :-1] = 0
        return x, np.cumsum(x, axis=1) % 2, mask

    def describe(self):
        return {"task": "parity", "supervise": self.supervise}


class ModArithTask(Task):
    score = "masked"

    def __init__(self, m: int = 5, brackets: bool = False):
        self.m, self.brackets = m, brackets
        self.vocab_obj = ArithVocab(m, brackets)
        self.name = "mod_arith_brackets" if brackets else "mod_arith"
        self.vocab = self.vocab_obj.size
        self.n_out = m
        self.acc_rand = 1.0 / m

    def batch(self, rng, size, length):
        lo = max(3, length - 4) if self.brackets else length
        samples = gen_mod_arith(self.m, self.brackets, min(lo, length), max(length, 5 if self.brackets else 3),
                                size, int(rng.integers(2 ** 31)))
        width = max(len(s.tokens) for s in samples)
        pad = self.vocab_obj.id("PAD")
        x = np.full((size, width), pad)
        y = np.zeros((size, width), dtype=np.int64)
        mask = np.zeros((size, width))
        for i, s in enumerate(samples):
            n = len(s.tokens)
            x[i, :n], y[i, :n], mask[i, :n] = s.tokens, s.labels, s.mask
        return x, y, mask

    def describe(self):
        return {"task": "mod_arith", "m": self.m, "brackets": self.brackets}


class GroupTask(Task):
    score = "sequence"
    acc_rand = 0.0

    def __init__(self, group: Group, variant: str = "full"):
        self.group = group
        self.variant = variant
        self.kind, self.k = parse_variant(variant)
        self.elems = np.asarray(group_elements(group, self.kind))
        self.table = multiplication_table(group)
        self.name = f"{group}/{variant}"
        self.vocab = group.order + (1 if self.kind == "k_tokens" else 0)
        self.n_out = group.order

    def batch(self, rng, size, length):
        order = self.group.order
        if self.kind == "k_tokens":
            x = np.full((size, length), order)
            pos = np.arange(0, length, self.k)
            x[:, pos] = self.elems[rng.integers(0, len(self.elems), (size, len(pos)))]
            as_elems = np.where(x == order, 0, x)
        else:
            x = self.elems[rng.integers(0, len(self.elems), (size, length))]
            as_elems = x
        prefix = np.empty_like(as_elems)
        acc = np.zeros(size, dtype=np.int64)
        for t in range(length):
            acc = self.table[as_elems[:, t], acc]
            prefix[:, t] = acc
        y = prefix
        if self.kind == "k_tokens" and self.k > 1:
            y = np.concatenate([np.zeros((size, self.k - 1), dtype=np.int64), prefix[:, :length - self.k + 1]], axis=1)
        return x, y, np.ones((size, length))

    def describe(self):
        return {"task": "group", "group": str(self.group), "variant": self.variant}


def make_task(name: str, **kw) -> Task:
    """``parity``, ``mod_arith`` (m, brackets) or ``group`` (group="symmetric:5", variant)."""
    if name == "parity":
        return ParityTask(kw.get("supervise", "last"))
    if name in ("mod_arith", "modarith"):
        return ModArithTask(int(kw.get("m", 5)), bool(kw.get("brackets", False)))
    if name in ("group", "s5"):
        g = kw.get("group", "symmetric:5")
        g = g if isinstance(g, Group) else Group.parse(g)
        return GroupTask(g, kw.get("variant", "full"))
    raise ValueError(f"unknown task {name!r}")


def task_from_dict(d: dict) -> Task:
    d = dict(d)
    return make_task(d.pop("task"), **d)


# -- configuration -----------------------------------------------------------------------


@dataclass
class TrainConfig:
    lr: float = 1e-3
    batch_size: int = 256
    steps: int = 20_000
    weight_decay: float = 0.1
    clip: float = 1.0
    schedule: str = "cosine"
    warmup_frac: float = 0.1
    seed: int = 0
    len_min: int = 3
    len_max: int = 40
    eval_lengths: tuple = (40, 64, 128, 256)
    eval_range: tuple = (40, 256)   # uniform-length test set; () to skip
    eval_count: int = 512
    eval_every: int = 0       # 0: only at the end

    def __post_init__(self):
        self.eval_lengths = tuple(int(x) for x in self.eval_lengths)
        self.eval_range = tuple(int(x) for x in self.eval_range)
        if self.eval_range and (len(self.eval_range) != 2 or not 1 <= self.eval_range[0] <= self.eval_range[1]):
            raise ValueError("eval_range must be (lo, hi) with 1 <= lo <= hi")
        if self.lr < 0 or self.batch_size < 1 or self.steps < 0 or self.clip < 0:
            raise ValueError("hyperparameters must be nonnegative (batch size positive)")
        if not 1 <= self.len_min <= self.len_max:
            raise ValueError("need 1 <= len_min <= len_max")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["eval_lengths"] = list(self.eval_lengths)
        d["eval_range"] = list(self.eval_range)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(**d)


# -- evaluation ----------------------------------------------------------------------------


def score_samples(task: Task, pred, labels, mask) -> tuple[np.ndarray, np.ndarray]:
    """Per-sample (correct, counted) totals under the task's scoring rule."""
    pred, labels, mask = np.asarray(pred), np.asarray(labels), np.asarray(mask) > 0
    if task.score == "last":
        return (pred[:, -1] == labels[:, -1]).astype(float), np.ones(len(pred))
    if task.score == "masked":
        return np.sum((pred == labels) & mask, axis=1).astype(float), np.sum(mask, axis=1).astype(float)
    return np.all((pred == labels) | ~mask, axis=1).astype(float), np.ones(len(pred))


def score_batch(task: Task, pred, labels, mask) -> float:
    correct, counted = score_samples(task, pred, labels, mask)
    return float(correct.sum() / counted.sum())


def scaled_accuracy(acc: float, acc_rand: float) -> float:
    return (acc - acc_rand) / (1.0 - acc_rand)


def eval_length_gen(predict_fn: Callable, task: Task, lengths: Sequence[int], count: int = 512,
                    seed: int = 12345, chunk: int = 256) -> dict:
    """Scaled accuracy per length; ``predict_fn`` maps ``(B, T)`` tokens to ``(B, T)`` labels."""
    if count < 1 or not lengths:
        raise ValueError("empty evaluation set")
    rng = np.random.default_rng(seed)
    out = {}
    for length in lengths:
        x, y, mask = task.batch(rng, count, int(length))
        accs = []
        for s in range(0, count, chunk):
            pred = predict_fn(x[s:s + chunk])
            accs.append(score_batch(task, pred, y[s:s + chunk], mask[s:s + chunk]) * len(x[s:s + chunk]))
        out[int(length)] = scaled_accuracy(sum(accs) / count, task.acc_rand)
    return out


def eval_length_range(predict_fn: Callable, task: Task, lo: int, hi: int, count: int = 512,
                      seed: int = 12345, chunk: int = 256) -> float:
    """Scaled accuracy on ``count`` samples whose lengths are uniform on ``lo..hi``."""
    if count < 1 or not 1 <= lo <= hi:
        raise ValueError("empty evaluation set")
    rng = np.random.default_rng(seed)
    lengths = rng.integers(lo, hi + 1, count)
    correct = counted = 0.0
    for length in np.unique(lengths):
        n = int(np.sum(lengths == length))
        x, y, mask = task.batch(rng, n, int(length))
        for s in range(0, n, chunk):
            c, k = score_samples(task, predict_fn(x[s:s + chunk]), y[s:s + chunk], mask[s:s + chunk])
            correct += c.sum()
            counted += k.sum()
    return scaled_accuracy(correct / counted, task.acc_rand)


def trainable_predictor(params: dict, cfg: ModelConfig) -> Callable:
    return lambda tokens: predict(params, cfg, tokens)


def compiled_predictor(model) -> Callable:
    from ..lrnn import model_run_batch

    return lambda tokens: model_run_batch(model, tokens)[0]


def evaluate(predict_fn: Callable, task: Task, tcfg: TrainConfig, seed: int = 12345) -> dict:
    """Metric row: ``acc@L`` per fixed length and ``acc@lo-hi`` for the uniform range."""
    row = {}
    if tcfg.eval_lengths:
        acc = eval_length_gen(predict_fn, task, tcfg.eval_lengths, tcfg.eval_count, seed=seed)
        row.update({f"acc@{k}": v for k, v in acc.items()})
    if tcfg.eval_range:
        lo, hi = tcfg.eval_range
        row[f"acc@{lo}-{hi}"] = eval_length_range(predict_fn, task, lo, hi, tcfg.eval_count, seed=seed + 1)
    return row


# -- training -----------------------------------------------------------------------------------


@dataclass
class TrainResult:
    params: dict
    history: list = field(default_factory=list)
    final_loss: float = float("nan")
    initial_loss: float = float("nan")


def train_loop(params: dict, cfg: ModelConfig, task: Task, tcfg: TrainConfig,
               log: Callable | None = None, time_budget: float | None = None) -> TrainResult:
    """AdamW training on freshly sampled batches; lengths drawn per batch.

    Evaluation rows (step, loss, scaled accuracy per eval length) are appended
    to the history every ``eval_every`` steps and at the end.
    """
    import time

    rng = np.random.default_rng(tcfg.seed)
    opt = AdamW(params, tcfg.weight_decay)
    history = []
    result = TrainResult(params)
    start = time.perf_counter()
    window = []
    for step in range(tcfg.steps):
        length = int(rng.integers(tcfg.len_min, tcfg.len_max + 1))
        x, y, mask = task.batch(rng, tcfg.batch_size, length)
        logits, cache = forward(params, cfg, x)
        loss, dlogits = cross_entropy(logits, y, mask)
        if not math.isfinite(loss):
            raise TrainingDiverged(f"loss became {loss} at step {step}")
        if step == 0:
            result.initial_loss = loss
        grads = backward(params, cfg, cache, dlogits)
        grads, gnorm = clip_grads(grads, tcfg.clip)
        opt.step(params, grads, lr_at(step, tcfg.steps, tcfg.lr, tcfg.schedule, tcfg.warmup_frac))
        window.append(loss)
        last = step == tcfg.steps - 1
        out_of_time = time_budget is not None and time.perf_counter() - start > time_budget
        if (tcfg.eval_every and (step + 1) % tcfg.eval_every == 0) or last or out_of_time:
            row = {"step": step + 1, "loss": float(np.mean(window))}
            row.update(evaluate(trainable_predictor(params, cfg), task, tcfg, seed=tcfg.seed + 1))
            history.append(row)
            window = []
            if log:
                log(row)
        result.final_loss = loss
        if out_of_time:
            break
    result.history = history
    return result


def write_metrics_csv(history: list, fh):
    if not history:
        return
    keys = list(history[0].keys())
    w = csv.DictWriter(fh, fieldnames=keys, lineterminator="\n")
    w.writeheader()
    for row in history:
        w.writerow({k: (f"{v:.10g}" if isinstance(v, float) else v) for k, v in row.items()})


# -- checkpoints ----------------------------------------------------------------------------------


def save_checkpoint(path, params: dict, cfg: ModelConfig, task: Task | None = None,
                    tcfg: TrainConfig | None = None):
    doc = {
        "format": "statetrack-trainable",
        "version": 1,
        "config": cfg.to_dict(),
        "task": task.describe() if task else None,
        "train_config": tcfg.to_dict() if tcfg else None,
        "params": {k: {"shape": list(v.shape), "data": v.reshape(-1).tolist()} for k, v in params.items()},
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_checkpoint(path) -> tuple[dict, ModelConfig, dict]:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format") != "statetrack-trainable":
        raise ValueError("not a trainable-model checkpoint")
    params = {k: np.array(v["data"], dtype=float).reshape(v["shape"]) for k, v in doc["params"].items()}
    return params, ModelConfig.from_dict(doc["config"]), doc


# -- per-task defaults --------------------------------------------------------------------------

# Desk-scale budgets: each run finishes in a few CPU minutes.
TASK_DEFAULTS = {
    "parity": ({"d_model": 16, "layers": ("diag", "diag")},
               {"lr": 3e-3, "batch_size": 64, "steps": 3000, "weight_decay": 0.01}),
    "mod_arith": ({"d_model": 64, "layers": ("diag", "diag", "diag")},
                  {"lr": 1e-3, "batch_size": 64, "steps": 5000, "weight_decay": 0.1}),
    "group": ({"d_model": 32, "layers": ("delta",), "heads": 4},
              {"lr": 1e-3, "batch_size": 64, "steps": 3000, "weight_decay": 0.01, "len_min": 32, "len_max": 32,
               "eval_lengths": (32, 64, 128, 256), "eval_range": ()}),
}


def default_config(task: str, layer: str = "diag", task_kw: dict | None = None) -> tuple[dict, dict]:
    """``(ModelConfig kwargs, TrainConfig kwargs)`` for a task and layer kind."""
    key = {"modarith": "mod_arith", "s5": "group"}.get(task, task)
    if key not in TASK_DEFAULTS:
        raise ValueError(f"unknown task {task!r}")
    model_kw, train_kw = (dict(x) for x in TASK_DEFAULTS[key])
    depth = len(model_kw["layers"])
    if layer == "full":
        model_kw["layers"] = ("full",)
    elif layer in ("diag", "delta"):
        model_kw["layers"] = (layer,) * depth
    else:
        raise ValueError(f"unknown layer kind {layer!r}")
    return model_kw, train_kw

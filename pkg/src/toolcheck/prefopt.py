"""DPO and KTO on a tabular autoregressive toy model.

Every context ``(x, y[:k])`` owns its own logit vector, so the per-logit
gradient formulas are exact. Losses and gradients are computed in batch by
compiling the contexts a set of pairs touches into rows of a matrix.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.special import expit, log_softmax, softmax

Key = tuple[tuple[int, ...], tuple[int, ...]]


class TokenOutOfRange(ValueError):
    pass


class PairNotMinimal(ValueError):
    pass


class NonFiniteLoss(FloatingPointError):
    pass


@dataclass
class ToyModel:
    vocab_size: int
    max_len: int
    logits: dict[Key, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if self.vocab_size < 2 or self.max_len < 1:
            raise ValueError("need vocab_size >= 2 and max_len >= 1")

    def row(self, key: Key) -> np.ndarray:
        g = self.logits.get(key)
        return np.zeros(self.vocab_size) if g is None else g

    def probs(self, x: Sequence[int], prefix: Sequence[int]) -> np.ndarray:
        return softmax(self.row((tuple(x), tuple(prefix))))

    def copy(self) -> "ToyModel":
        return ToyModel(self.vocab_size, self.max_len, {k: v.copy() for k, v in self.logits.items()})

    def relabel(self, perm: Sequence[int]) -> "ToyModel":
        """Apply token permutation ``t -> perm[t]`` to contexts and logit columns."""
        perm = np.asarray(perm)
        inv = np.argsort(perm)
        out = {}
        for (x, pre), g in self.logits.items():
            out[(tuple(int(perm[t]) for t in x), tuple(int(perm[t]) for t in pre))] = g[inv]
        return ToyModel(self.vocab_size, self.max_len, out)

    @classmethod
    def random(cls, vocab_size: int, max_len: int, pairs: Iterable["RefPair"], seed: int = 0, scale: float = 1.0):
        """Random logits on every context the pairs visit."""
        rng = np.random.default_rng(seed)
        model = cls(vocab_size, max_len)
        for p in pairs:
            for y in (p.y_w, p.y_l):
                for k in range(len(y)):
                    key = (tuple(p.x), tuple(y[:k]))
                    if key not in model.logits:
                        model.logits[key] = rng.normal(0.0, scale, vocab_size)
        return model


@dataclass(frozen=True)
class RefPair:
    x: tuple[int, ...]
    y_w: tuple[int, ...]
    y_l: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "x", tuple(int(t) for t in self.x))
        object.__setattr__(self, "y_w", tuple(int(t) for t in self.y_w))
        object.__setattr__(self, "y_l", tuple(int(t) for t in self.y_l))
        if self.y_w == self.y_l:
            raise ValueError("chosen and rejected sequences must differ")

    @property
    def differing_index(self) -> int | None:
        """The single differing position of an equal-length pair, else None."""
        if len(self.y_w) != len(self.y_l):
            return None
        diff = [k for k, (a, b) in enumerate(zip(self.y_w, self.y_l)) if a != b]
        return diff[0] if len(diff) == 1 else None

    def relabel(self, perm: Sequence[int]) -> "RefPair":
        f = lambda s: tuple(int(perm[t]) for t in s)  # noqa: E731
        return RefPair(f(self.x), f(self.y_w), f(self.y_l))


@dataclass(frozen=True)
class KtoConfig:
    beta: float = 0.1
    lambda_w: float = 1.0
    lambda_l: float = 1.0
    z0: float = 0.0

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        # zero weights are allowed: they switch a side of the loss off
        if not (self.lambda_w >= 0 and self.lambda_l >= 0):
            raise ValueError("lambdas must be non-negative")


@dataclass(frozen=True)
class GradientReport:
    """KTO loss, gradient and weights for one pair.

    ``a_w``/``a_l`` are the weights written as λσ(c)σ(1−c); ``exact_w``/``exact_l``
    are βλσ(c)σ(−c), the factors the true derivative carries and the ones
    ``grad`` is built from.
    """

    loss: float
    grad: dict[Key, np.ndarray]
    a_w: float
    a_l: float
    c_w: float
    c_l: float
    exact_w: float
    exact_l: float


def _check_tokens(model: ToyModel, *seqs: Sequence[int]) -> None:
    for s in seqs:
        for t in s:
            if not 0 <= t < model.vocab_size:
                raise TokenOutOfRange(f"token {t} outside vocabulary of size {model.vocab_size}")


class _Compiled:
    """Rows for every context visited by a list of (x, y) sequences."""

    def __init__(self, seqs: Sequence[tuple[Sequence[int], Sequence[int]]], vocab_size: int):
        self.keys: dict[Key, int] = {}
        ctx, tok, sid = [], [], []
        for s, (x, y) in enumerate(seqs):
            x = tuple(x)
            for k, t in enumerate(y):
                key = (x, tuple(y[:k]))
                ctx.append(self.keys.setdefault(key, len(self.keys)))
                tok.append(t)
                sid.append(s)
        self.ctx = np.asarray(ctx, dtype=np.intp)
        self.tok = np.asarray(tok, dtype=np.intp)
        self.sid = np.asarray(sid, dtype=np.intp)
        self.n_seq = len(seqs)
        self.vocab_size = vocab_size

    def matrix(self, model: ToyModel) -> np.ndarray:
        G = np.zeros((len(self.keys), self.vocab_size))
        for key, i in self.keys.items():
            G[i] = model.row(key)
        return G

    def logprobs(self, G: np.ndarray) -> np.ndarray:
        if not len(self.tok):
            return np.zeros(self.n_seq)
        ls = log_softmax(G, axis=1)
        return np.bincount(self.sid, weights=ls[self.ctx, self.tok], minlength=self.n_seq)

    def grad(self, G: np.ndarray, seq_weights: np.ndarray) -> np.ndarray:
        """Gradient of Σ_s w_s log π(y_s | x_s) with respect to G."""
        out = np.zeros_like(G)
        if not len(self.tok):
            return out
        w = seq_weights[self.sid]
        per_ctx = np.bincount(self.ctx, weights=w, minlength=len(self.keys))
        out -= per_ctx[:, None] * softmax(G, axis=1)
        np.add.at(out, (self.ctx, self.tok), w)
        return out

    def to_table(self, M: np.ndarray) -> dict[Key, np.ndarray]:
        return {key: M[i].copy() for key, i in self.keys.items()}


class PairBatch:
    """Pairs compiled once; losses evaluate against any (model, ref) logit matrices."""

    def __init__(self, pairs: Sequence[RefPair], vocab_size: int):
        if not pairs:
            raise ValueError("need at least one pair")
        self.pairs = list(pairs)
        self.n = len(pairs)
        seqs = [(p.x, p.y_w) for p in pairs] + [(p.x, p.y_l) for p in pairs]
        self.c = _Compiled(seqs, vocab_size)

    def logprobs(self, G: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        lp = self.c.logprobs(G)
        return lp[: self.n], lp[self.n :]

    def dpo(self, G: np.ndarray, R: np.ndarray, beta: float) -> tuple[float, np.ndarray]:
        lw, ll = self.logprobs(G)
        rw, rl = self.logprobs(R)
        m = beta * ((lw - rw) - (ll - rl))
        loss = float(np.mean(np.logaddexp(0.0, -m)))
        d = beta * expit(-m) / self.n
        return loss, self.c.grad(G, np.concatenate([-d, d]))

    def kto_parts(self, G: np.ndarray, R: np.ndarray, cfg: KtoConfig):
        lw, ll = self.logprobs(G)
        rw, rl = self.logprobs(R)
        c_w = cfg.beta * ((lw - rw) - cfg.z0)
        c_l = cfg.beta * (cfg.z0 - (ll - rl))
        losses = cfg.lambda_w * (1 - expit(c_w)) + cfg.lambda_l * (1 - expit(c_l))
        exact_w = cfg.beta * cfg.lambda_w * expit(c_w) * expit(-c_w)
        exact_l = cfg.beta * cfg.lambda_l * expit(c_l) * expit(-c_l)
        return losses, c_w, c_l, exact_w, exact_l

    def kto(self, G: np.ndarray, R: np.ndarray, cfg: KtoConfig) -> tuple[float, np.ndarray]:
        losses, _, _, ew, el = self.kto_parts(G, R, cfg)
        return float(np.mean(losses)), self.c.grad(G, np.concatenate([-ew, el]) / self.n)


def seq_logprob(model: ToyModel, x: Sequence[int], y: Sequence[int]) -> float:
    _check_tokens(model, x, y)
    c = _Compiled([(x, y)], model.vocab_size)
    return float(c.logprobs(c.matrix(model))[0])


def _single(model: ToyModel, ref: ToyModel, pair: RefPair):
    if model.vocab_size != ref.vocab_size:
        raise ValueError("model and reference vocabularies differ")
    _check_tokens(model, pair.x, pair.y_w, pair.y_l)
    b = PairBatch([pair], model.vocab_size)
    return b, b.c.matrix(model), b.c.matrix(ref)


def dpo_loss(model: ToyModel, ref: ToyModel, pair: RefPair, beta: float = 0.1) -> float:
    """−log σ(β(r_w − r_l)), with r the policy-minus-reference log-ratio."""
    b, G, R = _single(model, ref, pair)
    return b.dpo(G, R, beta)[0]


def dpo_gradient(model: ToyModel, ref: ToyModel, pair: RefPair, beta: float = 0.1) -> tuple[float, dict[Key, np.ndarray]]:
    b, G, R = _single(model, ref, pair)
    loss, grad = b.dpo(G, R, beta)
    return loss, b.c.to_table(grad)


def kto_loss(model: ToyModel, ref: ToyModel, pair: RefPair, cfg: KtoConfig = KtoConfig()) -> tuple[float, GradientReport]:
    """Paired KTO: λ_w(1 − σ(β(r_w − z0))) + λ_l(1 − σ(β(z0 − r_l))); z0 is a constant."""
    b, G, R = _single(model, ref, pair)
    losses, c_w, c_l, ew, el = b.kto_parts(G, R, cfg)
    _, grad = b.kto(G, R, cfg)
    cw, cl = float(c_w[0]), float(c_l[0])
    report = GradientReport(
        loss=float(losses[0]),
        grad=b.c.to_table(grad),
        a_w=cfg.lambda_w * float(expit(cw) * expit(1 - cw)),
        a_l=cfg.lambda_l * float(expit(cl) * expit(1 - cl)),
        c_w=cw,
        c_l=cl,
        exact_w=float(ew[0]),
        exact_l=float(el[0]),
    )
    return report.loss, report


def kto_token_gradient(
    model: ToyModel, ref: ToyModel, pair: RefPair, cfg: KtoConfig = KtoConfig(), weights: str = "exact"
) -> dict[Key, np.ndarray]:
    """Per-logit KTO gradient for a pair that differs at one position, by case split.

    Before the differing index the contexts are shared and each logit gets
    ``(a_w − a_l)·s_j``, minus ``(a_w − a_l)`` on the shared token. At the
    differing index the correct token gets ``−a_w + (a_w − a_l)·s_j``, the
    rejected token ``a_l + (a_w − a_l)·s_j`` and the rest ``(a_w − a_l)·s_j``.
    After it the two branches have separate contexts: ``−a_w(e_t − s)`` on the
    chosen side and ``a_l(e_t − s)`` on the rejected side.

    ``weights="exact"`` uses βλσ(c)σ(−c), which reproduces the true gradient;
    ``"printed"`` uses λσ(c)σ(1−c).
    """
    i = pair.differing_index
    if i is None:
        raise PairNotMinimal("pair must have equal lengths and differ at exactly one position")
    _, rep = kto_loss(model, ref, pair, cfg)
    if weights == "exact":
        a_w, a_l = rep.exact_w, rep.exact_l
    elif weights == "printed":
        a_w, a_l = rep.a_w, rep.a_l
    else:
        raise ValueError(f"unknown weights {weights!r}")

    x = pair.x
    out: dict[Key, np.ndarray] = {}
    for k in range(len(pair.y_w)):
        if k <= i:
            key = (x, pair.y_w[:k])
            s = model.probs(x, pair.y_w[:k])
            g = (a_w - a_l) * s
            if k < i:
                g[pair.y_w[k]] += -a_w + a_l
            else:
                g[pair.y_w[k]] += -a_w
                g[pair.y_l[k]] += a_l
            out[key] = g
        else:
            for y, a in ((pair.y_w, -a_w), (pair.y_l, a_l)):
                s = model.probs(x, y[:k])
                g = -a * s
                g[y[k]] += a
                out[(x, y[:k])] = g
    return out


def toy_pairs(
    n: int,
    vocab_size: int = 8,
    length: int = 4,
    n_prompts: int = 4,
    seed: int = 0,
    differing: str = "one",
    temperature: float = 2.5,
) -> list[RefPair]:
    """Pairs whose chosen side is sampled from a peaked random teacher.

    Rejected tokens are drawn from the teacher too (excluding the chosen
    token), so rejected sequences share contexts with other chosen ones.
    The chosen sequences depend only on ``seed``, not on ``differing``.
    """
    if differing not in ("one", "all"):
        raise ValueError("differing must be 'one' or 'all'")
    rng = np.random.default_rng(seed)
    rej_rng = np.random.default_rng([seed, 1])
    teacher: dict[Key, np.ndarray] = {}

    def dist(key):
        if key not in teacher:
            teacher[key] = softmax(temperature * np.random.default_rng([seed, 2, len(key[0]), *key[0], *key[1]]).normal(size=vocab_size))
        return teacher[key]

    def other(key, exclude):
        p = dist(key).copy()
        p[exclude] = 0.0
        return int(rej_rng.choice(vocab_size, p=p / p.sum()))

    prompts = [(p,) for p in range(n_prompts)]
    out = []
    for _ in range(n):
        x = prompts[int(rng.integers(n_prompts))]
        y_w: list[int] = []
        for _k in range(length):
            y_w.append(int(rng.choice(vocab_size, p=dist((x, tuple(y_w))))))
        i = int(rng.integers(length))
        if differing == "one":
            y_l = list(y_w)
            y_l[i] = other((x, tuple(y_w[:i])), y_w[i])
        else:
            y_l = []
            for k in range(length):
                y_l.append(other((x, tuple(y_l)), y_w[k]))
        out.append(RefPair(x, tuple(y_w), tuple(y_l)))
    return out


def fit_chosen(pairs: Sequence[RefPair], vocab_size: int, max_len: int, smoothing: float = 0.05) -> ToyModel:
    """Smoothed maximum-likelihood fit to the chosen sequences.

    Light smoothing keeps the start close to the chosen-data optimum, where any
    move away from it lowers the mean chosen log-likelihood.
    """
    counts: dict[Key, np.ndarray] = {}
    for p in pairs:
        for k, t in enumerate(p.y_w):
            key = (p.x, p.y_w[:k])
            counts.setdefault(key, np.zeros(vocab_size))[t] += 1
    logits = {k: np.log((c + smoothing) / (c.sum() + smoothing * vocab_size)) for k, c in counts.items()}
    return ToyModel(vocab_size, max_len, logits)


@dataclass(frozen=True)
class Trajectory:
    method: str
    loss: np.ndarray
    grad_norm: np.ndarray
    logp_chosen: np.ndarray
    logp_rejected: np.ndarray
    correct_logit: np.ndarray
    final: ToyModel

    COLUMNS = ("step", "loss", "grad_norm", "logp_chosen", "logp_rejected", "correct_logit")

    def __len__(self) -> int:
        return len(self.loss)

    def rows(self) -> list[tuple]:
        return [
            (s, float(a), float(b), float(c), float(d), float(e))
            for s, (a, b, c, d, e) in enumerate(
                zip(self.loss, self.grad_norm, self.logp_chosen, self.logp_rejected, self.correct_logit)
            )
        ]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.COLUMNS)
        for row in self.rows():
            w.writerow([row[0]] + [repr(v) for v in row[1:]])
        return buf.getvalue()


def _correct_logit(G: np.ndarray, batch: PairBatch) -> float:
    vals = []
    for p in batch.pairs:
        i = p.differing_index
        if i is None:
            continue
        vals.append(G[batch.c.keys[(p.x, p.y_w[:i])], p.y_w[i]])
    return float(np.mean(vals)) if vals else math.nan


def train_toy(
    pairs: Sequence[RefPair],
    method: str = "dpo",
    cfg: KtoConfig = KtoConfig(),
    steps: int = 100,
    learning_rate: float = 1.0,
    seed: int = 0,
    init: ToyModel | None = None,
    vocab_size: int | None = None,
) -> Trajectory:
    """Full-batch gradient descent on the mean loss, reference frozen at the start.

    Without ``init`` the start point is a smoothed fit to the chosen data plus
    seeded noise of scale 1e-3. ``cfg.beta`` is the DPO temperature as well.
    Row ``k`` of the trajectory is measured before update ``k+1``; there are
    ``steps + 1`` rows.
    """
    if not pairs:
        raise ValueError("need at least one pair")
    if method not in ("dpo", "kto"):
        raise ValueError("method must be 'dpo' or 'kto'")
    V = vocab_size or (init.vocab_size if init else 1 + max(max(p.x + p.y_w + p.y_l) for p in pairs))
    K = max(max(len(p.y_w), len(p.y_l)) for p in pairs)
    if init is None:
        init = fit_chosen(pairs, V, K)
        rng = np.random.default_rng(seed)
        for key in sorted(init.logits):
            init.logits[key] = init.logits[key] + rng.normal(0.0, 1e-3, V)
    for p in pairs:
        _check_tokens(init, p.x, p.y_w, p.y_l)
    batch = PairBatch(pairs, V)
    R = batch.c.matrix(init)
    G = R.copy()
    cols = {c: [] for c in ("loss", "gn", "lw", "ll", "cl")}
    for step in range(steps + 1):
        loss, grad = batch.dpo(G, R, cfg.beta) if method == "dpo" else batch.kto(G, R, cfg)
        if not math.isfinite(loss) or not np.all(np.isfinite(grad)):
            raise NonFiniteLoss(f"non-finite loss or gradient at step {step}")
        lw, ll = batch.logprobs(G)
        cols["loss"].append(loss)
        cols["gn"].append(float(np.linalg.norm(grad)))
        cols["lw"].append(float(lw.mean()))
        cols["ll"].append(float(ll.mean()))
        cols["cl"].append(_correct_logit(G, batch))
        if step < steps:
            G = G - learning_rate * grad
    final = init.copy()
    final.logits.update(batch.c.to_table(G))
    return Trajectory(method, *(np.asarray(cols[c]) for c in ("loss", "gn", "lw", "ll", "cl")), final)


def initial_grad_norm(pairs: Sequence[RefPair], model: ToyModel, beta: float = 0.1) -> float:
    """Norm of the mean-loss DPO gradient at ``model == ref``."""
    batch = PairBatch(pairs, model.vocab_size)
    G = batch.c.matrix(model)
    return float(np.linalg.norm(batch.dpo(G, G, beta)[1]))


def per_pair_grad_norm(pairs: Sequence[RefPair], model: ToyModel, beta: float = 0.1) -> float:
    """Mean over pairs of each pair's own DPO gradient norm at ``model == ref``.

    Unlike the batch norm this ignores interference between pairs, so it
    isolates the cancellation on contexts a pair's two sides share.
    """
    norms = []
    for p in pairs:
        batch = PairBatch([p], model.vocab_size)
        G = batch.c.matrix(model)
        norms.append(np.linalg.norm(batch.dpo(G, G, beta)[1]))
    return float(np.mean(norms))


@dataclass(frozen=True)
class DemoResult:
    dpo: Trajectory
    kto: Trajectory
    grad_norm_one: float
    grad_norm_all: float
    batch_grad_norm_one: float = math.nan
    batch_grad_norm_all: float = math.nan

    @property
    def verdicts(self) -> dict[str, bool]:
        return {
            "dpo_chosen_logp_decreases": bool(self.dpo.logp_chosen[-1] < self.dpo.logp_chosen[0]),
            "kto_correct_logit_increases": bool(self.kto.correct_logit[-1] > self.kto.correct_logit[0]),
            "dpo_grad_smaller_on_minimal_pairs": bool(self.grad_norm_one < self.grad_norm_all),
        }


def failure_mode_demo(
    n_pairs: int = 200,
    steps: int = 200,
    seed: int = 0,
    cfg: KtoConfig = KtoConfig(),
    learning_rate: float = 5.0,
    vocab_size: int = 8,
    length: int = 4,
) -> DemoResult:
    """DPO and KTO from the same start on minimal pairs, plus the gradient-norm comparison."""
    one = toy_pairs(n_pairs, vocab_size, length, seed=seed, differing="one")
    allp = toy_pairs(n_pairs, vocab_size, length, seed=seed, differing="all")
    start = fit_chosen(one, vocab_size, length)
    dpo = train_toy(one, "dpo", cfg, steps, learning_rate, seed, init=start)
    kto = train_toy(one, "kto", cfg, steps, learning_rate, seed, init=start)
    return DemoResult(
        dpo,
        kto,
        per_pair_grad_norm(one, start, cfg.beta),
        per_pair_grad_norm(allp, start, cfg.beta),
        initial_grad_norm(one, start, cfg.beta),
        initial_grad_norm(allp, start, cfg.beta),
    )

"""Toy decoder LM and the two-stage recipe.

Stage 1 trains with Lighthouse attention; stage 2 resumes the same weights
and optimizer state with dense attention. A dense-from-scratch baseline
runs the identical loop (same init, same batches) with dense attention
throughout. Data comes from a seeded Markov chain whose entropy rate is
the cross-entropy floor.

Everything is numpy with hand-written backward passes.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .config import LighthouseConfig
from .errors import ConfigError
from .layer import AttentionParams, dense_backward, dense_forward, lighthouse_backward, lighthouse_forward
from .numerics import as_dtype, make_rng

log = logging.getLogger(__name__)


# ------------------------------------------------------------------ data


class MarkovSource:
    """Order-``r`` Markov chain over ``alphabet`` symbols.

    ``transition[c, y]`` is P(next = y | context c) where the context index
    encodes the previous ``r`` symbols, oldest most significant.
    """

    def __init__(self, transition: np.ndarray, order: int):
        t = np.asarray(transition, dtype=np.float64)
        alphabet = t.shape[1]
        if t.ndim != 2 or t.shape[0] != alphabet**order:
            raise ConfigError(f"transition must be ({alphabet ** order}, {alphabet}), got {t.shape}")
        if not np.all(np.isfinite(t)) or (t < 0).any() or not np.allclose(t.sum(axis=1), 1.0, atol=1e-12):
            raise ConfigError("every transition row must be a probability distribution")
        self.transition = t
        self.order = order
        self.alphabet = alphabet
        self._cum = np.cumsum(t, axis=1)
        self.stationary = self._stationary()

    @classmethod
    def random(cls, seed: int, order: int = 2, alphabet: int = 8, concentration: float = 0.3):
        rng = make_rng(seed)
        t = rng.dirichlet(np.full(alphabet, concentration), size=alphabet**order)
        return cls(t, order)

    @classmethod
    def sticky(cls, stay: float, alphabet: int = 2):
        off = (1.0 - stay) / (alphabet - 1)
        t = np.full((alphabet, alphabet), off)
        np.fill_diagonal(t, stay)
        return cls(t, 1)

    def _context_chain(self) -> np.ndarray:
        a, r = self.alphabet, self.order
        n = a**r
        if r == 0:
            return np.ones((1, 1))
        chain = np.zeros((n, n))
        for c in range(n):
            shifted = (c * a) % n
            chain[c, shifted : shifted + a] = self.transition[c]
        return chain

    def _stationary(self) -> np.ndarray:
        chain = self._context_chain()
        n = chain.shape[0]
        lhs = np.vstack([chain.T - np.eye(n), np.ones((1, n))])
        rhs = np.zeros(n + 1)
        rhs[-1] = 1.0
        pi = np.linalg.lstsq(lhs, rhs, rcond=None)[0]
        pi = np.clip(pi, 0.0, None)
        return pi / pi.sum()

    def entropy_rate(self) -> float:
        """Achievable cross-entropy floor in nats per token."""
        t = self.transition
        with np.errstate(divide="ignore", invalid="ignore"):
            h = -np.where(t > 0, t * np.log(t), 0.0).sum(axis=1)
        return float(self.stationary @ h)

    def sample(self, rng: np.random.Generator, batch: int, length: int) -> np.ndarray:
        """``batch`` independent stationary sequences of ``length`` symbols."""
        a, r = self.alphabet, self.order
        n_ctx = a**r
        out = np.empty((batch, length), dtype=np.int64)
        ctx = rng.choice(n_ctx, size=batch, p=self.stationary)
        # unpack the initial context into its r symbols
        for j in range(min(r, length)):
            out[:, j] = (ctx // a ** (r - 1 - j)) % a
        for t in range(r, length):
            u = rng.random(batch)[:, None]
            y = (self._cum[ctx] < u).sum(axis=1)
            y = np.minimum(y, a - 1)
            out[:, t] = y
            ctx = (ctx * a + y) % n_ctx if r else ctx
        return out


def synth_source(seed: int, order: int = 2, alphabet: int = 8, length: int = 4096, concentration: float = 0.3):
    """Token stream from a random seeded Markov source, plus its entropy rate."""
    src = MarkovSource.random(seed, order, alphabet, concentration)
    tokens = src.sample(make_rng([seed, 1]), 1, length)[0]
    return tokens, src.entropy_rate()


# ------------------------------------------------------------------ config


@dataclass
class TrainConfig:
    layers: int = 2
    d_model: int = 64
    heads: int = 4
    head_dim: int = 16
    ffn_dim: int = 256
    vocab: int = 256
    seq_len: int = 256
    pool_factor: int = 2
    levels: int = 3
    budget: int = 16
    chunk_size: int = 2048
    buffer_m: int = 128
    selection: str = "hierarchical-descent"
    prefix_coverage: bool = True
    dense_layers: tuple[int, ...] = ()
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.95
    weight_decay: float = 0.1
    warmup_steps: int = 50
    clip_norm: float = 1.0
    stage_1_steps: int = 600
    total_steps: int = 1000
    batch_size: int = 8
    seed: int = 1
    source_seed: int = 0
    source_order: int = 2
    alphabet: int = 8
    source_concentration: float = 0.3
    precision: int = 64
    pos_init: str = "sinusoidal"

    def __post_init__(self):
        self.dense_layers = tuple(int(i) for i in self.dense_layers)
        if not 0 <= self.stage_1_steps <= self.total_steps:
            raise ConfigError("need 0 <= stage_1_steps <= total_steps")
        for name in ("layers", "d_model", "heads", "head_dim", "ffn_dim", "vocab", "seq_len", "total_steps", "batch_size"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if self.alphabet > self.vocab:
            raise ConfigError(f"alphabet {self.alphabet} exceeds vocab {self.vocab}")
        as_dtype(self.precision)
        if self.pos_init not in ("sinusoidal", "normal"):
            raise ConfigError(f"pos_init must be 'sinusoidal' or 'normal', got {self.pos_init!r}")
        self.lighthouse_config()

    def lighthouse_config(self) -> LighthouseConfig:
        return LighthouseConfig(
            seq_len=self.seq_len,
            head_dim=self.head_dim,
            pool_factor=self.pool_factor,
            levels=self.levels,
            budget=self.budget,
            chunk_size=self.chunk_size,
            buffer_m=self.buffer_m,
            selection=self.selection,
            prefix_coverage=self.prefix_coverage,
        )

    def source(self) -> MarkovSource:
        return MarkovSource.random(self.source_seed, self.source_order, self.alphabet, self.source_concentration)

    def as_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]


# ------------------------------------------------------------------ model


def rms_forward(x, gain, eps=1e-6):
    inv = 1.0 / np.sqrt((x * x).mean(axis=-1, keepdims=True) + eps)
    xhat = x * inv
    return xhat * gain, (xhat, inv)


def rms_backward(dy, gain, cache):
    xhat, inv = cache
    dgain = (dy * xhat).reshape(-1, xhat.shape[-1]).sum(axis=0)
    dxhat = dy * gain
    dx = inv * (dxhat - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))
    return dx, dgain


def sinusoid_table(n: int, dim: int) -> np.ndarray:
    """Fixed sin/cos table; only used as the starting value of learned positions."""
    pos = np.arange(n)[:, None]
    freq = 10000.0 ** (-np.arange(0, dim, 2) / dim)
    table = np.zeros((n, dim))
    table[:, 0::2] = np.sin(pos * freq)
    table[:, 1::2] = np.cos(pos * freq[: dim // 2])
    return table


class ToyLM:
    """Pre-norm decoder: embeddings + [attention, ReLU FFN] x layers + head."""

    def __init__(self, cfg: TrainConfig):
        self.cfg = cfg
        dt = as_dtype(cfg.precision)
        rng = make_rng([cfg.seed, 0])
        D, F, V = cfg.d_model, cfg.ffn_dim, cfg.vocab
        depth_scale = 1.0 / math.sqrt(2 * cfg.layers)
        p = {
            "tok_emb": rng.standard_normal((V, D)),
            "pos_emb": sinusoid_table(cfg.seq_len, D) if cfg.pos_init == "sinusoidal" else rng.standard_normal((cfg.seq_len, D)) * 0.1,
            "gain_f": np.ones(D),
            "w_head": rng.standard_normal((D, V)) / math.sqrt(D),
        }
        self.attn: list[AttentionParams] = []
        for i in range(cfg.layers):
            ap = AttentionParams.init(rng, D, cfg.heads, cfg.head_dim)
            ap.wo *= depth_scale
            self.attn.append(ap)
            p[f"l{i}.gain1"] = np.ones(D)
            p[f"l{i}.gain2"] = np.ones(D)
            p[f"l{i}.w1"] = rng.standard_normal((D, F)) / math.sqrt(D)
            p[f"l{i}.w2"] = rng.standard_normal((F, D)) / math.sqrt(F) * depth_scale
        self.params = {k: v.astype(dt) for k, v in p.items()}
        for ap in self.attn:
            for name, arr in ap.arrays().items():
                setattr(ap, name, arr.astype(dt))
        self.lh_cfg = cfg.lighthouse_config()

    def named_params(self) -> dict[str, np.ndarray]:
        out = dict(self.params)
        for i, ap in enumerate(self.attn):
            for name, arr in ap.arrays().items():
                out[f"l{i}.attn.{name}"] = arr
        return out

    def decays(self, name: str) -> bool:
        return not (name.startswith("tok_emb") or name.startswith("pos_emb") or "gain" in name)

    def bump_versions(self):
        for ap in self.attn:
            ap.version += 1

    def loss_and_grads(self, tokens: np.ndarray, lighthouse: bool):
        cfg, P = self.cfg, self.params
        inp, tgt = tokens[:, :-1], tokens[:, 1:]
        B, N = inp.shape
        h = P["tok_emb"][inp] + P["pos_emb"][None, :N]
        caches = []
        for i, ap in enumerate(self.attn):
            use_lh = lighthouse and i not in cfg.dense_layers
            a_in, c1 = rms_forward(h, P[f"l{i}.gain1"])
            outs, tapes = [], []
            for b in range(B):
                if use_lh:
                    o, tape = lighthouse_forward(a_in[b], ap, self.lh_cfg)
                else:
                    o, tape = dense_forward(a_in[b], ap)
                outs.append(o)
                tapes.append(tape)
            h = h + np.stack(outs)
            f_in, c2 = rms_forward(h, P[f"l{i}.gain2"])
            u = f_in @ P[f"l{i}.w1"]
            r = np.maximum(u, 0.0)
            h = h + r @ P[f"l{i}.w2"]
            caches.append((use_lh, c1, tapes, c2, f_in, u, r))
        z, cf = rms_forward(h, P["gain_f"])
        logits = z @ P["w_head"]
        mx = logits.max(axis=-1, keepdims=True)
        ex = np.exp(logits - mx)
        sum_ex = ex.sum(axis=-1, keepdims=True)
        logp_t = np.take_along_axis(logits - mx, tgt[..., None], axis=-1)[..., 0] - np.log(sum_ex[..., 0])
        loss = float(-logp_t.mean())

        # backward
        G = {}
        dlogits = ex / sum_ex
        np.put_along_axis(dlogits, tgt[..., None], np.take_along_axis(dlogits, tgt[..., None], axis=-1) - 1.0, axis=-1)
        dlogits /= B * N
        G["w_head"] = z.reshape(-1, z.shape[-1]).T @ dlogits.reshape(-1, dlogits.shape[-1])
        dz = dlogits @ P["w_head"].T
        dh, G["gain_f"] = rms_backward(dz, P["gain_f"], cf)
        attn_grads = [None] * cfg.layers
        for i in range(cfg.layers - 1, -1, -1):
            use_lh, c1, tapes, c2, f_in, u, r = caches[i]
            w1, w2 = P[f"l{i}.w1"], P[f"l{i}.w2"]
            G[f"l{i}.w2"] = r.reshape(-1, r.shape[-1]).T @ dh.reshape(-1, dh.shape[-1])
            du = (dh @ w2.T) * (u > 0)
            G[f"l{i}.w1"] = f_in.reshape(-1, f_in.shape[-1]).T @ du.reshape(-1, du.shape[-1])
            dfin = du @ w1.T
            dx, G[f"l{i}.gain2"] = rms_backward(dfin, P[f"l{i}.gain2"], c2)
            dh = dh + dx
            backward = lighthouse_backward if use_lh else dense_backward
            da_in = np.empty_like(dh)
            acc = None
            for b in range(B):
                gx, gp = backward(tapes[b], np.ascontiguousarray(dh[b]))
                da_in[b] = gx
                if acc is None:
                    acc = gp
                else:
                    for name, arr in gp.arrays().items():
                        getattr(acc, name).__iadd__(arr)
            attn_grads[i] = acc
            dx, G[f"l{i}.gain1"] = rms_backward(da_in, P[f"l{i}.gain1"], c1)
            dh = dh + dx
        G["pos_emb"] = np.zeros_like(P["pos_emb"])
        G["pos_emb"][:N] = dh.sum(axis=0)
        G["tok_emb"] = np.zeros_like(P["tok_emb"])
        np.add.at(G["tok_emb"], inp.reshape(-1), dh.reshape(-1, dh.shape[-1]))
        for i, ag in enumerate(attn_grads):
            for name, arr in ag.arrays().items():
                G[f"l{i}.attn.{name}"] = arr
        return loss, G


class AdamW:
    """Adam with decoupled weight decay, linear warmup and global-norm clipping."""

    def __init__(self, cfg: TrainConfig):
        self.cfg = cfg
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.t = 0

    def lr_at(self, step: int) -> float:
        w = self.cfg.warmup_steps
        return self.cfg.lr * min(1.0, (step + 1) / w) if w > 0 else self.cfg.lr

    def step(self, model: ToyLM, grads: dict[str, np.ndarray]) -> float:
        cfg = self.cfg
        params = model.named_params()
        norm = math.sqrt(sum(float((g * g).sum()) for g in grads.values()))
        scale = min(1.0, cfg.clip_norm / (norm + 1e-12)) if cfg.clip_norm > 0 else 1.0
        lr = self.lr_at(self.t)
        self.t += 1
        b1, b2 = cfg.beta1, cfg.beta2
        c1, c2 = 1 - b1**self.t, 1 - b2**self.t
        for name in sorted(params):
            p, g = params[name], grads[name] * scale
            m = self.m.setdefault(name, np.zeros_like(p))
            v = self.v.setdefault(name, np.zeros_like(p))
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            upd = (m / c1) / (np.sqrt(v / c2) + 1e-8)
            if model.decays(name):
                upd += cfg.weight_decay * p
            p -= lr * upd
        model.bump_versions()
        return norm


# ------------------------------------------------------------------ loop


class TrainingDiverged(FloatingPointError):
    def __init__(self, step: int, loss: float):
        super().__init__(f"non-finite loss {loss} at step {step}")
        self.step = step


@dataclass
class TrainReport:
    losses: np.ndarray
    stage_boundary: int
    entropy_rate: float
    wall_clock: tuple[float, float] = (0.0, 0.0)
    label: str = ""
    extra: dict = field(default_factory=dict)

    @property
    def final_loss(self) -> float:
        return float(self.losses[-1])

    @property
    def pre_switch_loss(self) -> float | None:
        b = self.stage_boundary
        return float(self.losses[b - 1]) if 0 < b < len(self.losses) else None

    @property
    def spike(self) -> float | None:
        """Loss at the first dense step minus loss at the last Lighthouse step."""
        pre = self.pre_switch_loss
        return None if pre is None else float(self.losses[self.stage_boundary]) - pre

    @property
    def steps_to_recover(self) -> int | None:
        """Steps after the switch until the loss first drops below the pre-switch loss."""
        pre = self.pre_switch_loss
        if pre is None:
            return None
        below = np.flatnonzero(self.losses[self.stage_boundary :] < pre)
        return int(below[0]) if below.size else None

    def to_csv(self, path) -> None:
        """Per-step losses; summary fields go in ``#`` header lines.

        Wall-clock is deliberately left out so equal configs give equal bytes.
        """
        def fmt(x):
            return "" if x is None else repr(x)

        lines = [
            f"# label={self.label}",
            f"# stage_boundary={self.stage_boundary}",
            f"# entropy_rate={self.entropy_rate!r}",
            f"# final_loss={self.final_loss!r}",
            f"# spike={fmt(self.spike)}",
            f"# steps_to_recover={fmt(self.steps_to_recover)}",
            "step,stage,loss",
        ]
        for s, l in enumerate(self.losses):
            stage = "lighthouse" if s < self.stage_boundary else "dense"
            lines.append(f"{s},{stage},{float(l)!r}")
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")


def _run(cfg: TrainConfig, lighthouse_steps: int, label: str) -> TrainReport:
    source = cfg.source()
    model = ToyLM(cfg)
    opt = AdamW(cfg)
    data_rng = make_rng([cfg.seed, 1])
    losses = np.empty(cfg.total_steps)
    clock = [0.0, 0.0]
    for step in range(cfg.total_steps):
        t0 = time.perf_counter()
        tokens = source.sample(data_rng, cfg.batch_size, cfg.seq_len + 1)
        lh = step < lighthouse_steps
        loss, grads = model.loss_and_grads(tokens, lighthouse=lh)
        if not math.isfinite(loss):
            raise TrainingDiverged(step, loss)
        opt.step(model, grads)
        losses[step] = loss
        clock[0 if lh else 1] += time.perf_counter() - t0
        if step % 100 == 0:
            log.info("%s step %d loss %.4f", label, step, loss)
    return TrainReport(losses, lighthouse_steps, source.entropy_rate(), tuple(clock), label)


def train_two_stage(cfg: TrainConfig) -> TrainReport:
    """Lighthouse for ``stage_1_steps``, then dense with the same weights and optimizer state."""
    return _run(cfg, cfg.stage_1_steps, "two_stage")


def train_dense_baseline(cfg: TrainConfig) -> TrainReport:
    """Dense attention for every step, same init and batches as the two-stage run."""
    return _run(cfg, 0, "baseline")

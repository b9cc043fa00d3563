"""Deterministic mini-batch training loop for the supervised imitation surrogate.

The published control stack trains with on-policy RL in simulation; at desk
scale the policy instead regresses the synthesized supervisory targets with
an adaptive-moment optimizer, which still drives every differentiable
component end to end. Proprioception and the previous action enter the
decoder as zeros here (no simulator state exists), keeping playback
vectorizable and deterministic.

Each epoch shuffles all (motion, frame) pairs with the run seed, inputs are
perturbed per the preset noise spec, and validation replays held-out motions
in mean mode against their clean targets.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .errors import ConfigError, NumericError
from .motion import (NoiseSpec, SupervisedPair, gather_windows, perturb_windows)
from .network import MdmeConfig, MdmeModel, build_ablation, init_params, trainable_names
from .objectives import MetricReport, MotionReport, component_errors, imitation_loss, smape
from .rng import Rng
from .tensor import Tensor

# rng stream ids, fixed so runs reproduce bit-for-bit
_STREAM_INIT, _STREAM_SHUFFLE, _STREAM_NOISE, _STREAM_EPS, _STREAM_SPLIT, _STREAM_VAL = range(6)


@dataclass(frozen=True)
class TrainConfig:
    seed: int = 0
    learning_rate: float = 1e-3
    batch_size: int = 32
    iterations: int = 1500
    beta: float = 1e-3
    val_every: int = 100
    val_count: int = 2
    ablation: str = "full"
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    noise: NoiseSpec | None = None

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigError(f"learning rate must be positive, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ConfigError(f"batch size must be >= 1, got {self.batch_size}")


@dataclass
class LearningCurve:
    iterations: list[int] = field(default_factory=list)
    loss: list[float] = field(default_factory=list)
    val_error: list[float | None] = field(default_factory=list)          # mean over motions
    val_per_motion: list[dict[str, float] | None] = field(default_factory=list)
    wall_clock: list[float] = field(default_factory=list)

    def record(self, iteration: int, loss: float, val_error: float | None, t0: float,
               per_motion: dict[str, float] | None = None):
        self.iterations.append(iteration)
        self.loss.append(loss)
        self.val_error.append(val_error)
        self.val_per_motion.append(per_motion)
        self.wall_clock.append(time.perf_counter() - t0)

    def to_csv(self) -> str:
        lines = ["iteration,loss[-],val_error[-]"]
        for it, lo, ve in zip(self.iterations, self.loss, self.val_error):
            lines.append(f"{it},{lo!r},{'' if ve is None else repr(ve)}")
        return "\n".join(lines) + "\n"


class Adam:
    """Adaptive moment estimation with bias correction; zero grad keeps params."""

    def __init__(self, names: list[str], beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.names = list(names)
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.t = 0

    def step(self, params: dict[str, Tensor], lr: float) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for name in self.names:
            p = params[name]
            g = p.grad
            if g is None:
                continue
            m = self.m.setdefault(name, np.zeros_like(p.data))
            v = self.v.setdefault(name, np.zeros_like(p.data))
            m += (1.0 - b1) * (g - m)
            v += (1.0 - b2) * (g * g - v)
            p.data -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def _first_nonfinite(params: dict[str, Tensor]) -> str | None:
    for name in sorted(params):
        if not np.isfinite(params[name].data).all():
            return name
        g = params[name].grad
        if g is not None and not np.isfinite(g).all():
            return f"{name}.grad"
    return None


def step(model: MdmeModel, windows: np.ndarray, targets: np.ndarray, adam: Adam,
         lr: float, beta: float, rng: Rng) -> float:
    """One optimizer update on a window batch; aborts on non-finite loss."""
    params = model.params
    for name in adam.names:
        params[name].grad = None
    with T.Tape() as tape:
        pred, latent, _ = model.forward(windows, rng=rng, mode="sample",
                                        train=True, update_stats=True)
        loss = imitation_loss(pred, targets, latent, beta)
    loss_val = loss.item()
    if not np.isfinite(loss_val):
        culprit = _first_nonfinite(params) or "loss"
        raise NumericError(f"non-finite loss at optimizer step; first bad tensor: {culprit}")
    tape.backward(loss)
    adam.step(params, lr)
    return loss_val


def playback(model: MdmeModel, pair: SupervisedPair, noise: NoiseSpec | None,
             noise_rng: Rng | None, chunk: int = 512) -> np.ndarray:
    """Mean-mode rollout over every frame; returns predicted actions (T, N)."""
    seq = pair.inputs
    cfg = model.cfg
    ts = np.arange(seq.frames)
    outs = []
    for start in range(0, seq.frames, chunk):
        wins = gather_windows(seq, ts[start:start + chunk], cfg.history)
        if noise is not None and noise_rng is not None:
            wins = perturb_windows(wins, seq.channels, noise, noise_rng)
        actions, _, _ = model.forward(wins, mode="mean", train=False)
        outs.append(actions.data)
    return np.vstack(outs)


def validation_error(model: MdmeModel, pairs: list[SupervisedPair],
                     noise: NoiseSpec | None, noise_seed: int) -> tuple[float, dict[str, float]]:
    """Mean-mode playback smape against clean targets: (mean, per-motion)."""
    per_motion = {}
    for i, pair in enumerate(pairs):
        nrng = Rng(noise_seed, stream=i + 1) if noise is not None else None
        pred = playback(model, pair, noise, nrng)
        per_motion[pair.name] = smape(pair.target, pred)
    return float(np.mean(list(per_motion.values()))), per_motion


@dataclass
class TrainResult:
    params: dict[str, Tensor]
    curve: LearningCurve
    model_cfg: MdmeConfig
    train_ids: list[str]
    val_ids: list[str]
    best_val: float
    batch_motions_seen: set = field(default_factory=set)


def train(pairs: list[SupervisedPair], model_cfg: MdmeConfig, cfg: TrainConfig) -> TrainResult:
    """Supervised run over all motions concurrently; returns the best-validation params."""
    if not pairs:
        raise ConfigError("training dataset is empty")
    if cfg.val_count >= len(pairs):
        raise ConfigError(f"val_count {cfg.val_count} needs fewer than {len(pairs)} motions")
    dims = {(p.inputs.dim, p.target.shape[1]) for p in pairs}
    if len(dims) != 1:
        raise ConfigError(f"motions disagree on input/target dims: {sorted(dims)}")
    model_cfg = build_ablation(cfg.ablation, model_cfg)
    master = Rng(cfg.seed)
    split_rng = master.split(_STREAM_SPLIT)
    order = split_rng.permutation(len(pairs))
    val_idx = set(int(i) for i in order[:cfg.val_count])
    train_pairs = [p for i, p in enumerate(pairs) if i not in val_idx]
    val_pairs = [p for i, p in enumerate(pairs) if i in val_idx]

    model = MdmeModel(model_cfg, params=init_params(model_cfg, master.split(_STREAM_INIT)))
    adam = Adam(trainable_names(model.params), cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)
    shuffle_rng = master.split(_STREAM_SHUFFLE)
    noise_rng = master.split(_STREAM_NOISE)
    eps_rng = master.split(_STREAM_EPS)
    val_seed = master.split(_STREAM_VAL).seed

    # epoch = every (motion, frame) pair once, reshuffled when exhausted
    index = np.array([(mi, t) for mi, p in enumerate(train_pairs)
                      for t in range(p.inputs.frames)], dtype=np.int64)
    targets_all = [p.target for p in train_pairs]

    curve = LearningCurve()
    t0 = time.perf_counter()
    best_val = float("inf")
    best_params = None
    seen: set = set()
    cursor = len(index)  # force shuffle on first batch
    epoch_order = None
    for it in range(cfg.iterations):
        if cursor + cfg.batch_size > len(index):
            epoch_order = index[shuffle_rng.permutation(len(index))]
            cursor = 0
        batch = epoch_order[cursor:cursor + cfg.batch_size]
        cursor += cfg.batch_size
        wins, tgts = [], []
        for mi, t in batch:
            p = train_pairs[mi]
            seen.add(p.name)
            wins.append(gather_windows(p.inputs, np.array([t]), model_cfg.history)[0])
            tgts.append(targets_all[mi][t])
        wins = np.stack(wins)
        tgts = np.stack(tgts)
        if cfg.noise is not None:
            wins = perturb_windows(wins, train_pairs[0].inputs.channels, cfg.noise, noise_rng)
        loss_val = step(model, wins, tgts, adam, cfg.learning_rate, cfg.beta, eps_rng)
        val_err, per_motion = None, None
        if val_pairs and ((it + 1) % cfg.val_every == 0 or it + 1 == cfg.iterations):
            val_err, per_motion = validation_error(model, val_pairs, cfg.noise, val_seed)
            if val_err < best_val:
                best_val = val_err
                best_params = {k: Tensor(v.data.copy()) for k, v in model.params.items()}
        curve.record(it, loss_val, val_err, t0, per_motion)
    params = best_params if best_params is not None else model.params
    return TrainResult(params=params, curve=curve, model_cfg=model_cfg,
                       train_ids=[p.name for p in train_pairs],
                       val_ids=[p.name for p in val_pairs],
                       best_val=best_val, batch_motions_seen=seen)


def evaluate(model: MdmeModel, pairs: list[SupervisedPair], layout: dict[str, list[int]],
             noise: NoiseSpec | None = None, runs: int = 5,
             seeds: tuple[int, ...] = (0, 1, 2, 3, 4)) -> MetricReport:
    """Mean-mode playback statistics over runs x seeds executions per motion.

    Every (seed, run) pair draws its own input perturbation; aggregation
    order is the sorted (seed, run) grid so reports reproduce exactly.
    """
    rows = []
    for pair in pairs:
        totals, comps = [], []
        for seed in sorted(seeds):
            for run in range(runs):
                nrng = Rng(seed, stream=1000 + run) if noise is not None else None
                pred = playback(model, pair, noise, nrng)
                rep = component_errors(pair.target, pred, layout, motion=pair.name)
                totals.append(rep.total)
                comps.append(rep.components)
        groups = comps[0].keys()
        rows.append(MotionReport(
            motion=pair.name,
            total=float(np.mean(totals)),
            total_std=float(np.std(totals)),
            components={g: float(np.mean([c[g] for c in comps])) for g in groups},
            components_std={g: float(np.std([c[g] for c in comps])) for g in groups},
        ))
    return MetricReport(rows=rows)

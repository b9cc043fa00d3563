"""Reward terms, training losses, and evaluation metrics.

Tracking rewards are Gaussian bumps w * exp(-||error|| / scale): maximal at
zero error and decaying with the Euclidean norm of the selected slice.
Metric reports use the symmetric mean absolute error, which is bounded in
[0, 2] elementwise. Platform presets mirroring the published reward tables
ship as JSON under mdme/presets (overridable via MDME_PRESET_DIR).
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import tensor as T
from .errors import ConfigError, DimensionError
from .network import StochasticLatent, kl_to_standard_normal
from .tensor import Tensor

DEFAULT_SMAPE_EPS = 1e-8
PRESET_NAMES = ("quadruped", "humanoid-h1", "humanoid-n1", "synth-quadruped")


@dataclass(frozen=True)
class RewardTerm:
    """One tracking term: weight, decay scale, and the state slice it compares."""

    name: str
    weight: float
    scale: float
    selector: str = ""

    def __post_init__(self):
        if self.scale <= 0:
            raise ConfigError(f"reward term {self.name!r} needs scale > 0, got {self.scale}")


def gaussian_tracking_reward(target, actual, weight: float, scale: float) -> float:
    """w * exp(-||target - actual|| / scale); equals w at zero error."""
    target = np.asarray(target, dtype=np.float64)
    actual = np.asarray(actual, dtype=np.float64)
    if target.shape != actual.shape:
        raise DimensionError(f"tracking slices differ: {target.shape} vs {actual.shape}")
    if scale <= 0:
        raise ConfigError(f"tracking scale must be positive, got {scale}")
    err = float(np.linalg.norm(target - actual))
    return weight * math.exp(-err / scale)


def penalty_terms(state: dict, action, prev_action, weights: dict) -> float:
    """Weighted sum of quadratic penalties plus the termination flag.

    `state` may carry 'torques', 'joint_accel' (vectors) and 'terminated'
    (flag); absent entries contribute nothing.
    """
    action = np.asarray(action, dtype=np.float64)
    prev_action = np.asarray(prev_action, dtype=np.float64)
    if action.shape != prev_action.shape:
        raise DimensionError(f"action shapes differ: {action.shape} vs {prev_action.shape}")
    total = weights.get("joint_action_rate", 0.0) * float(((action - prev_action) ** 2).sum())
    for key, slot in (("joint_torques", "torques"), ("joint_acceleration", "joint_accel")):
        if key in weights and slot in state:
            vec = np.asarray(state[slot], dtype=np.float64)
            total += weights[key] * float((vec ** 2).sum())
    if state.get("terminated"):
        total += weights.get("termination", 0.0)
    return total


def smape(target, actual, eps: float = DEFAULT_SMAPE_EPS) -> float:
    """Mean of |a-b| / ((|a|+|b|+eps)/2) over all elements; in [0, 2]."""
    target = np.asarray(target, dtype=np.float64)
    actual = np.asarray(actual, dtype=np.float64)
    if target.shape != actual.shape:
        raise DimensionError(f"trajectory shapes differ: {target.shape} vs {actual.shape}")
    if eps <= 0:
        raise ConfigError(f"smape eps must be positive, got {eps}")
    num = np.abs(target - actual)
    den = (np.abs(target) + np.abs(actual) + eps) / 2.0
    return float((num / den).mean())


def imitation_loss(pred: Tensor, target, latent: StochasticLatent | None,
                   beta: float) -> Tensor:
    """Mean squared reconstruction error plus beta * KL regularizer."""
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise DimensionError(f"prediction {pred.shape} vs target {target.shape}")
    loss = T.tmean(T.square(T.sub(pred, Tensor(target))))
    if latent is not None and beta != 0.0:
        loss = T.add(loss, T.mul(kl_to_standard_normal(latent), beta))
    return loss


# ---------------------------------------------------------------------------
# Metric reports
# ---------------------------------------------------------------------------

@dataclass
class MotionReport:
    motion: str
    total: float
    components: dict[str, float]
    total_std: float = 0.0
    components_std: dict[str, float] = field(default_factory=dict)


@dataclass
class MetricReport:
    rows: list[MotionReport]

    @property
    def mean_total(self) -> float:
        return float(np.mean([r.total for r in self.rows])) if self.rows else 0.0

    def mean_component(self, group: str) -> float:
        vals = [r.components[group] for r in self.rows if group in r.components]
        return float(np.mean(vals)) if vals else 0.0

    def to_json(self) -> str:
        payload = {
            "mean_total": self.mean_total,
            "rows": [
                {
                    "motion": r.motion,
                    "total": r.total,
                    "total_std": r.total_std,
                    "components": r.components,
                    "components_std": r.components_std,
                }
                for r in self.rows
            ],
        }
        return json.dumps(payload, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "MetricReport":
        payload = json.loads(text)
        rows = [
            MotionReport(
                motion=r["motion"], total=r["total"], total_std=r.get("total_std", 0.0),
                components=dict(r.get("components", {})),
                components_std=dict(r.get("components_std", {})),
            )
            for r in payload["rows"]
        ]
        return cls(rows=rows)

    def to_csv(self) -> str:
        groups = sorted({g for r in self.rows for g in r.components})
        header = "motion,total[-],total_std[-]" + "".join(f",{g}[-]" for g in groups)
        lines = [header]
        for r in self.rows:
            cells = [r.motion, repr(r.total), repr(r.total_std)]
            cells += [repr(r.components.get(g, float("nan"))) for g in groups]
            lines.append(",".join(cells))
        return "\n".join(lines) + "\n"


def component_errors(target, actual, layout: dict[str, list[int]],
                     motion: str = "", eps: float = DEFAULT_SMAPE_EPS) -> MotionReport:
    """Per-group smape plus the total over all channels."""
    target = np.asarray(target, dtype=np.float64)
    actual = np.asarray(actual, dtype=np.float64)
    if target.shape != actual.shape:
        raise DimensionError(f"trajectory shapes differ: {target.shape} vs {actual.shape}")
    cols = target.shape[-1]
    mapped = sorted(i for idx in layout.values() for i in idx)
    if mapped != list(range(cols)):
        missing = sorted(set(range(cols)) - set(mapped))
        raise ConfigError(f"metric layout must cover every channel exactly once; "
                          f"missing/duplicated: {missing or mapped}")
    comps = {g: smape(target[..., idx], actual[..., idx], eps) for g, idx in layout.items()}
    return MotionReport(motion=motion, total=smape(target, actual, eps), components=comps)


# ---------------------------------------------------------------------------
# Presets
# ---------------------------------------------------------------------------

_PRESET_DIR_ENV = "MDME_PRESET_DIR"


def preset_path(name: str) -> Path:
    """Resolve a preset by name: MDME_PRESET_DIR first, then the bundled files."""
    fname = name if name.endswith(".json") else f"{name}.json"
    override = os.environ.get(_PRESET_DIR_ENV)
    if override:
        cand = Path(override) / fname
        if cand.exists():
            return cand
    bundled = Path(__file__).parent / "presets" / fname
    if bundled.exists():
        return bundled
    raise ConfigError(f"no preset named {name!r} (searched {_PRESET_DIR_ENV} and bundled presets)")


def load_preset(name_or_path: str) -> dict:
    path = Path(name_or_path)
    if not path.exists():
        path = preset_path(str(name_or_path))
    try:
        with open(path) as fh:
            preset = json.load(fh)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON: {e}") from None
    _validate_preset(preset, path)
    return preset


def _validate_preset(preset: dict, path) -> None:
    for key in ("name", "model"):
        if key not in preset:
            raise ConfigError(f"{path}: preset missing required key {key!r}")
    model = preset["model"]
    for key in ("history", "goal_dim", "phase_channels", "levels", "latent_dim",
                "enc_hidden", "dec_hidden", "action_dim", "proprio_dim"):
        if key not in model:
            raise ConfigError(f"{path}: preset model missing {key!r}")
    for term in preset.get("tracking_rewards", []):
        for key in ("name", "weight", "scale"):
            if key not in term:
                raise ConfigError(f"{path}: tracking reward entry missing {key!r}: {term}")
        if term["scale"] <= 0:
            raise ConfigError(f"{path}: tracking reward {term['name']!r} has scale <= 0")
    for term in preset.get("other_rewards", []):
        if "name" not in term or "weight" not in term:
            raise ConfigError(f"{path}: other reward entry missing name/weight: {term}")


def tracking_terms(preset: dict) -> list[RewardTerm]:
    return [
        RewardTerm(name=t["name"], weight=t["weight"], scale=t["scale"],
                   selector=t.get("selector", ""))
        for t in preset.get("tracking_rewards", [])
    ]


def metric_layout(preset: dict) -> dict[str, list[int]]:
    layout = preset.get("metric_layout")
    if not layout:
        raise ConfigError(f"preset {preset.get('name')!r} has no metric_layout")
    return {g: list(idx) for g, idx in layout.items()}


def penalty_weights(preset: dict) -> dict[str, float]:
    return {t["name"]: t["weight"] for t in preset.get("other_rewards", [])}

"""Reward stack: per-edge movement-dynamics rewards, destination rewards,
the convex task reward and the task/style blend."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .plan import MovementDynamic

V_STAR = 1.0
EPSILON = 1e-3
ADAPTIVE_OFFSET = 0.1


def _uniform(n: int) -> tuple[float, ...]:
    return tuple([1.0 / n] * n) if n else ()


@dataclass(frozen=True)
class RewardWeights:
    lambda_edges: tuple[float, ...] = ()
    lambda_rmd: float = 1.0 / 3.0
    lambda_h: float = 1.0 / 3.0
    lambda_o: float = 1.0 / 3.0
    alpha_task: float = 0.5
    alpha_style: float = 0.5
    v_star: float = V_STAR
    epsilon: float = EPSILON

    def __post_init__(self):
        if self.lambda_edges:
            if min(self.lambda_edges) < 0 or abs(sum(self.lambda_edges) - 1.0) > 1e-9:
                raise ValueError("edge weights must be non-negative and sum to 1")
        terms = (self.lambda_rmd, self.lambda_h, self.lambda_o)
        if min(terms) < 0 or abs(sum(terms) - 1.0) > 1e-9:
            raise ValueError("term weights must be non-negative and sum to 1")
        if self.v_star <= 0 or self.epsilon <= 0:
            raise ValueError("v_star and epsilon must be positive")

    @classmethod
    def uniform(cls, n_edges: int, **kw) -> "RewardWeights":
        return cls(lambda_edges=_uniform(n_edges), **kw)

    def edge_weights(self, n: int) -> np.ndarray:
        if not self.lambda_edges:
            return np.full(n, 1.0 / n)
        if len(self.lambda_edges) != n:
            raise ValueError(f"have {len(self.lambda_edges)} edge weights for {n} edges")
        return np.asarray(self.lambda_edges)


@dataclass(frozen=True)
class RewardBreakdown:
    per_edge: tuple[float, ...]
    r_rmd_total: float
    r_dh: float
    r_do: float
    r_task: float
    r_style: float
    r_total: float
    weights: RewardWeights = field(default_factory=RewardWeights, compare=False)


def rmd_edge_reward(rel_pos, rel_vel, dynamic, v_star: float = V_STAR, epsilon: float = EPSILON) -> float:
    """Alignment of one (human part, object part) pair with its movement dynamic.

    Stationary rewards p.v == 0; approach rewards closeness plus closing speed
    ``v_star``; leave rewards separation plus opening speed ``v_star``; free is
    the constant 1. Below ``epsilon`` separation the direction is taken as zero.
    """
    w = MovementDynamic(dynamic)
    if w == MovementDynamic.FREE:
        return 1.0
    p = np.asarray(rel_pos, dtype=float)
    v = np.asarray(rel_vel, dtype=float)
    if w == MovementDynamic.STATIONARY:
        return math.exp(-float(p @ v) ** 2)
    dist2 = float(p @ p)
    dist = math.sqrt(dist2)
    proj = float(v @ p) / dist if dist >= epsilon else 0.0
    if w == MovementDynamic.APPROACH:
        return 0.5 * math.exp(-dist2) + 0.5 * math.exp(-((proj + v_star) ** 2))
    return 0.5 * (1.0 - math.exp(-dist2)) + 0.5 * math.exp(-((proj - v_star) ** 2))


def rmd_reward(features: Sequence, dynamics: Sequence, weights: RewardWeights) -> tuple[float, list[float]]:
    """Weighted sum of edge rewards; returns ``(total, per_edge)``."""
    if len(features) != len(dynamics):
        raise ValueError(f"{len(features)} features but {len(dynamics)} dynamics")
    if not features:
        raise ValueError("at least one edge is required")
    per_edge = [
        rmd_edge_reward(f.rel_position, f.rel_velocity, d, weights.v_star, weights.epsilon)
        for f, d in zip(features, dynamics)
    ]
    lam = weights.edge_weights(len(per_edge))
    return float(lam @ np.asarray(per_edge)), per_edge


def distance_reward(current, target) -> float:
    diff = np.asarray(current, dtype=float) - np.asarray(target, dtype=float)
    return math.exp(-float(diff @ diff))


def task_reward(r_rmd: float, r_dh: float, r_do: float | None, weights: RewardWeights) -> float:
    """Convex combination of the three task terms.

    ``r_do=None`` marks a step with no object destination; its weight is
    redistributed proportionally over the other two terms.
    """
    if r_do is None:
        lam_r, lam_h = weights.lambda_rmd, weights.lambda_h
        s = lam_r + lam_h
        if s <= 0:
            lam_r = lam_h = s = 1.0
        return (lam_r * r_rmd + lam_h * r_dh) / s
    return weights.lambda_rmd * r_rmd + weights.lambda_h * r_dh + weights.lambda_o * r_do


def _balance(rewards: Sequence[float]) -> tuple[float, ...]:
    raw = np.array([1.0 - r + ADAPTIVE_OFFSET for r in rewards])
    return tuple(float(x) for x in raw / raw.sum())


def adaptive_weights(
    per_edge: Sequence[float],
    term_rewards: tuple[float, float, float | None],
    base: RewardWeights | None = None,
) -> RewardWeights:
    """Shift weight toward lagging terms: each weight is proportional to
    ``1 - r + 0.1``, renormalized. A ``None`` object term gets weight 0."""
    base = base or RewardWeights()
    r_rmd, r_dh, r_do = term_rewards
    if r_do is None:
        lam_r, lam_h = _balance([r_rmd, r_dh])
        lam_o = 0.0
    else:
        lam_r, lam_h, lam_o = _balance([r_rmd, r_dh, r_do])
    return replace(base, lambda_edges=_balance(per_edge), lambda_rmd=lam_r, lambda_h=lam_h, lambda_o=lam_o)


def total_reward(r_task: float, r_style: float, weights: RewardWeights) -> float:
    return weights.alpha_task * r_task + weights.alpha_style * r_style


StyleProvider = Callable[..., float]


def zero_style(*_args, **_kwargs) -> float:
    """Placeholder for a learned motion-prior discriminator."""
    return 0.0


def evaluate_rewards(
    features: Sequence,
    dynamics: Sequence,
    root_xy,
    dest_h_xy,
    object_root,
    dest_o,
    mode: str = "adaptive",
    base: RewardWeights | None = None,
    r_style: float = 0.0,
) -> RewardBreakdown:
    """Full reward breakdown for one frame.

    ``dest_o=None`` marks a step without an object destination. In adaptive
    mode the weights are recomputed from this frame's term values.
    """
    base = base or RewardWeights()
    r_dh = distance_reward(root_xy, dest_h_xy)
    r_do = None if dest_o is None else distance_reward(object_root, dest_o)
    per_edge = [
        rmd_edge_reward(f.rel_position, f.rel_velocity, d, base.v_star, base.epsilon) for f, d in zip(features, dynamics)
    ]
    if mode == "adaptive":
        lam_edges = _balance(per_edge)
        r_balanced = float(np.dot(lam_edges, per_edge))
        weights = adaptive_weights(per_edge, (r_balanced, r_dh, r_do), base)
    elif mode == "uniform":
        weights = replace(base, lambda_edges=_uniform(len(per_edge)))
    else:
        raise ValueError(f"unknown weighting mode {mode!r}")
    r_rmd, _ = rmd_reward(features, dynamics, weights)
    r_task = task_reward(r_rmd, r_dh, r_do, weights)
    return RewardBreakdown(
        per_edge=tuple(per_edge),
        r_rmd_total=r_rmd,
        r_dh=r_dh,
        r_do=1.0 if r_do is None else r_do,
        r_task=r_task,
        r_style=r_style,
        r_total=total_reward(r_task, r_style, weights),
        weights=weights,
    )

"""Discrete kinematics of joint-angle trajectories.

A trajectory is a T x J matrix of joint angles sampled at unit time steps.
First differences give per-step angular velocity, second differences give
acceleration.  Smoothness is summarized by the worst-case (max over joints)
population variance of each derivative plus the mean absolute velocity, and
the three scalars serialize into a fixed-format text descriptor that travels
alongside the visual input of an evaluator.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

PROMPT_FORMAT = "KINEMATICS u_v=<{:.6f}> u_a=<{:.6f}> mu_v=<{:.6f}>"
_PROMPT_RE = re.compile(
    r"^KINEMATICS u_v=<(-?\d+\.\d{6})> u_a=<(-?\d+\.\d{6})> mu_v=<(-?\d+\.\d{6})>$"
)


def _as_matrix(q) -> np.ndarray:
    if isinstance(q, JointTrajectory):
        return q.data
    m = np.asarray(q, dtype=float)
    if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
        raise ValidationError("trajectory must be a nonempty T x J matrix")
    if not np.all(np.isfinite(m)):
        raise ValidationError("trajectory contains non-finite entries")
    return m


@dataclass(frozen=True)
class JointTrajectory:
    """T x J joint-angle matrix in radians, one row per unit time step.

    Episode trajectories carry 7 or 14 joints; the math below works for any
    J >= 1, and the dataset layer enforces the DoF restriction.
    """

    data: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "data", _as_matrix(self.data))

    @property
    def timesteps(self) -> int:
        return self.data.shape[0]

    @property
    def joints(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class DerivativeSeries:
    """Velocity (T-1 x J) and acceleration (T-2 x J) from first differences."""

    velocity: np.ndarray
    acceleration: np.ndarray


@dataclass(frozen=True)
class KinematicSummary:
    """Per-joint derivative variances and their scalar roll-ups.

    u_v / u_a are the max of var_v / var_a over joints (worst-case jitter);
    mu_v is the mean of |velocity| over all defined samples.
    """

    var_v: np.ndarray
    var_a: np.ndarray
    u_v: float
    u_a: float
    mu_v: float


@dataclass(frozen=True)
class PhysicsPrompt:
    """Serialized kinematic descriptor, fixed 6-decimal rendering."""

    text: str


def compute_derivatives(q) -> DerivativeSeries:
    """First differences: v_t = q_t - q_{t-1}, a_t = v_t - v_{t-1} (unit dt).

    T = 2 yields velocity only (acceleration has zero rows); T < 2 is an error.
    """
    m = _as_matrix(q)
    if m.shape[0] < 2:
        raise ValidationError("trajectory too short: need at least 2 timesteps")
    v = np.diff(m, axis=0)
    a = np.diff(v, axis=0)
    return DerivativeSeries(velocity=v, acceleration=a)


def summarize(q) -> KinematicSummary:
    """Population variances per joint, worst-joint maxima, mean |velocity|."""
    m = _as_matrix(q)
    if m.shape[0] < 3:
        raise ValidationError("trajectory too short: need at least 3 timesteps")
    d = compute_derivatives(m)
    var_v = d.velocity.var(axis=0)
    var_a = d.acceleration.var(axis=0)
    return KinematicSummary(
        var_v=var_v,
        var_a=var_a,
        u_v=float(var_v.max()),
        u_a=float(var_a.max()),
        mu_v=float(np.abs(d.velocity).mean()),
    )


def render_physics_prompt(k: KinematicSummary) -> PhysicsPrompt:
    """Render (u_v, u_a, mu_v) into the exact prompt grammar."""
    for name, value in (("u_v", k.u_v), ("u_a", k.u_a), ("mu_v", k.mu_v)):
        if not math.isfinite(value):
            raise ValidationError(f"non-finite summary field {name}")
    return PhysicsPrompt(PROMPT_FORMAT.format(k.u_v, k.u_a, k.mu_v))


def parse_physics_prompt(prompt) -> tuple[float, float, float]:
    """Invert render_physics_prompt; returns (u_v, u_a, mu_v)."""
    text = prompt.text if isinstance(prompt, PhysicsPrompt) else prompt
    m = _PROMPT_RE.match(text)
    if m is None:
        raise ValidationError(f"not a kinematics prompt: {text!r}")
    return tuple(float(g) for g in m.groups())

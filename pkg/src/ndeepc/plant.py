"""Simulated data-generating system: a damped pendulum under torque control.

Discrete dynamics (Forward-Euler at sample time Ts):

    x1+ = (1 - b*Ts/J) x1 + (Ts/J) u - (M*L*g*Ts/(2J)) sin(x2)
    x2+ = Ts x1 + x2
    y   = x2 (+ optional Gaussian measurement noise)

with x1 the angular velocity and x2 the angle.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError


@dataclass
class PendulumParams:
    mass: float = 1.0          # kg
    length: float = 1.0        # m
    gravity: float = 9.81      # m/s^2
    damping: float = 0.1       # N s/m
    ts: float = 0.033          # s

    def __post_init__(self):
        for name in ("mass", "length", "gravity", "damping", "ts"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"pendulum parameter {name} must be positive")

    @property
    def inertia(self) -> float:
        return self.mass * self.length**2 / 3.0

    def equilibrium_torque(self, angle: float) -> float:
        """Torque holding the pendulum at a constant angle."""
        return 0.5 * self.mass * self.length * self.gravity * np.sin(angle)


def pendulum_step(p: PendulumParams, x: np.ndarray, u: float) -> np.ndarray:
    """One Forward-Euler step; ``x = (angular velocity, angle)``."""
    j = p.inertia
    x1, x2 = float(x[0]), float(x[1])
    x1_next = (1.0 - p.damping * p.ts / j) * x1 + (p.ts / j) * u \
        - (p.mass * p.length * p.gravity * p.ts / (2.0 * j)) * np.sin(x2)
    x2_next = p.ts * x1 + x2
    return np.array([x1_next, x2_next])


def small_angle_system(p: PendulumParams) -> np.ndarray:
    """State matrix of the linearization around the hanging equilibrium."""
    j = p.inertia
    return np.array([
        [1.0 - p.damping * p.ts / j, -p.mass * p.length * p.gravity * p.ts / (2.0 * j)],
        [p.ts, 1.0],
    ])


def measure(x: np.ndarray, noise_std: float = 0.0, rng: np.random.Generator | None = None) -> float:
    """Output map y = angle, plus an optional seeded Gaussian noise draw."""
    if noise_std < 0:
        raise ConfigError("noise_std must be >= 0")
    y = float(x[1])
    if noise_std > 0.0:
        if rng is None:
            raise ConfigError("a random generator is required when noise_std > 0")
        y += noise_std * float(rng.standard_normal())
    return y


def open_loop_rollout(
    p: PendulumParams,
    x0,
    u_seq,
    noise_std: float = 0.0,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Outputs y(1..len(u_seq)): element k is measured after applying u(k)."""
    x = np.asarray(x0, dtype=float)
    out = np.empty(len(u_seq))
    for k, u in enumerate(np.asarray(u_seq, dtype=float)):
        x = pendulum_step(p, x, u)
        out[k] = measure(x, noise_std, rng)
    return out


class PendulumSimulator:
    """Stateful wrapper used by the closed-loop harness.

    ``step(u)`` advances the plant and returns the new measured output;
    ``output()`` measures the current state without advancing.
    """

    def __init__(self, params: PendulumParams | None = None, x0=(0.0, 0.0),
                 noise_std: float = 0.0, seed: int = 0):
        self.params = params or PendulumParams()
        self.noise_std = noise_std
        self._rng = np.random.default_rng(seed)
        self.state = np.asarray(x0, dtype=float)

    def reset(self, x0=(0.0, 0.0)):
        self.state = np.asarray(x0, dtype=float)

    def output(self) -> float:
        return measure(self.state, self.noise_std, self._rng if self.noise_std > 0 else None)

    def step(self, u: float) -> float:
        self.state = pendulum_step(self.params, self.state, u)
        return self.output()


def rollout_to_csv(path, u_seq, y_seq):
    """Rollout log: row k holds u(k) and the output measured after it."""
    if len(u_seq) != len(y_seq):
        raise ConfigError("u and y sequences must have equal length")
    lines = ["k,u,y"]
    for k, (u, y) in enumerate(zip(u_seq, y_seq)):
        lines.append(f"{k},{float(u)!r},{float(y)!r}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def rollout_from_csv(path):
    with open(path) as fh:
        header = fh.readline().strip()
        if header != "k,u,y":
            raise ConfigError(f"unexpected rollout CSV header {header!r}")
        u, y = [], []
        for line in fh:
            if not line.strip():
                continue
            _, us, ys = line.strip().split(",")
            u.append(float(us))
            y.append(float(ys))
    return np.asarray(u), np.asarray(y)

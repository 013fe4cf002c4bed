"""Block Hankel matrices over one recorded trajectory.

Conventions. ``TrajectoryData`` stores channel-major arrays ``u[:, k] = u(k)``
and ``y[:, k] = y(k)`` where ``y(k)`` is the output measured *before* input
``u(k)`` acts (so ``y(k+1)`` is the response to ``u(k)``). Columns of the
past/future blocks then read, for window start j:

    U_p[:, j] = col(u(j), ..., u(j+T_ini-1))
    Y_p[:, j] = col(y(j+1), ..., y(j+T_ini))
    U_f[:, j] = col(u(j+T_ini), ..., u(j+T_ini+N-1))
    Y_f[:, j] = col(y(j+T_ini+1), ..., y(j+T_ini+N))

which gives T = samples - T_ini - N columns, all of them verbatim
contiguous slices of the source trajectory.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError


def _as_channels(arr, name: str) -> np.ndarray:
    arr = np.asarray(arr, dtype=float)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be 1-D or (channels, samples), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DimensionError(f"{name} contains non-finite entries")
    return arr


@dataclass
class TrajectoryData:
    u: np.ndarray  # (m, samples)
    y: np.ndarray  # (p, samples)

    def __post_init__(self):
        self.u = _as_channels(self.u, "u")
        self.y = _as_channels(self.y, "y")
        if self.u.shape[1] != self.y.shape[1]:
            raise DimensionError(
                f"u has {self.u.shape[1]} samples but y has {self.y.shape[1]}"
            )

    @property
    def m(self) -> int:
        return self.u.shape[0]

    @property
    def p(self) -> int:
        return self.y.shape[0]

    @property
    def samples(self) -> int:
        return self.u.shape[1]

    @classmethod
    def from_rollout(cls, u_seq, y_rollout, y0: float = 0.0) -> "TrajectoryData":
        """Assemble aligned data from an open-loop rollout.

        ``y_rollout[k]`` is the response to ``u_seq[k]`` (the rollout
        convention); re-indexing to y(k) requires the pre-experiment output
        ``y0`` and drops the last measured sample.
        """
        u = np.asarray(u_seq, dtype=float)
        r = np.asarray(y_rollout, dtype=float)
        if u.shape != r.shape or u.ndim != 1:
            raise DimensionError("from_rollout expects equal-length 1-D sequences")
        y = np.concatenate([[float(y0)], r[:-1]])
        return cls(u=u, y=y)


@dataclass
class HankelSet:
    u_past: np.ndarray    # (m*T_ini, T)
    y_past: np.ndarray    # (p*T_ini, T)
    u_future: np.ndarray  # (m*N, T)
    y_future: np.ndarray  # (p*N, T)
    t_ini: int
    horizon: int
    m: int
    p: int

    @property
    def columns(self) -> int:
        return self.u_past.shape[1]

    @property
    def regressor(self) -> np.ndarray:
        """Stacked data matrix H = [U_p; Y_p; U_f]."""
        return np.vstack([self.u_past, self.y_past, self.u_future])

    @property
    def regressor_dim(self) -> int:
        return (self.m + self.p) * self.t_ini + self.m * self.horizon

    def to_csv(self, path):
        h = np.vstack([self.regressor, self.y_future])
        header = (
            f"rows={h.shape[0]},cols={h.shape[1]},t_ini={self.t_ini},"
            f"horizon={self.horizon},m={self.m},p={self.p}"
        )
        np.savetxt(path, h, delimiter=",", header=header)


def _windows(arr: np.ndarray, start: int, length: int, count: int) -> np.ndarray:
    """Stack ``count`` windows of ``length`` samples, channel blocks per step."""
    ch = arr.shape[0]
    out = np.empty((ch * length, count))
    for j in range(count):
        out[:, j] = arr[:, start + j: start + j + length].reshape(-1, order="F")
    return out


def build_hankel(data: TrajectoryData, t_ini: int, horizon: int) -> HankelSet:
    """Past/future block Hankel matrices per the conventions above."""
    if t_ini < 1 or horizon < 1:
        raise DimensionError("t_ini and horizon must be >= 1")
    t = data.samples - t_ini - horizon
    if t < 1:
        raise DimensionError(
            f"need more than {t_ini + horizon} samples for t_ini={t_ini}, "
            f"horizon={horizon}; got {data.samples} ({1 - t} short)"
        )
    return HankelSet(
        u_past=_windows(data.u, 0, t_ini, t),
        y_past=_windows(data.y, 1, t_ini, t),
        u_future=_windows(data.u, t_ini, horizon, t),
        y_future=_windows(data.y, t_ini + 1, horizon, t),
        t_ini=t_ini,
        horizon=horizon,
        m=data.m,
        p=data.p,
    )


def build_online_regressor(u_ini, y_ini, u_future, t_ini: int, horizon: int,
                           m: int = 1, p: int = 1) -> np.ndarray:
    """col(u_ini, y_ini, u_future) in exactly the row layout of H."""
    if t_ini < 1 or horizon < 1:
        raise DimensionError("t_ini and horizon must be >= 1")
    u_ini = np.asarray(u_ini, dtype=float).reshape(-1)
    y_ini = np.asarray(y_ini, dtype=float).reshape(-1)
    u_future = np.asarray(u_future, dtype=float).reshape(-1)
    if u_ini.size != m * t_ini:
        raise DimensionError(f"u_ini has {u_ini.size} entries, expected {m * t_ini}")
    if y_ini.size != p * t_ini:
        raise DimensionError(f"y_ini has {y_ini.size} entries, expected {p * t_ini}")
    if u_future.size != m * horizon:
        raise DimensionError(f"u_future has {u_future.size} entries, expected {m * horizon}")
    return np.concatenate([u_ini, y_ini, u_future])

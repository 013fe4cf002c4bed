"""Closed-loop receding-horizon simulation, metrics, and comparisons.

The loop protocol expects a plant object with ``reset(x0)``, ``output()``
(measure without advancing) and ``step(u) -> y`` (advance, then measure).
Log row k pairs the input applied at step k with the output measured at
step k, before that input acted.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

import numpy as np

from .controllers import ControlConfig, NeuralDeepcController, _weight_matrix
from .errors import ConfigError, DimensionError
from .predictors import DeepcContext


@dataclass
class ClosedLoopLog:
    k: np.ndarray
    u: np.ndarray
    y: np.ndarray
    r: np.ndarray
    u_ref: np.ndarray
    solve_s: np.ndarray
    converged: np.ndarray  # bool per step (warmup steps count as converged)
    metadata: dict = field(default_factory=dict)

    CSV_HEADER = "k,u,y,r,u_ref,solve_s,converged"

    def __post_init__(self):
        lengths = {arr.shape[0] for arr in (self.k, self.u, self.y, self.r,
                                            self.u_ref, self.solve_s, self.converged)}
        if len(lengths) != 1:
            raise DimensionError("log columns must have equal length")
        if np.any(np.diff(self.k) <= 0):
            raise DimensionError("step index must be strictly increasing")

    @property
    def steps(self) -> int:
        return self.k.shape[0]

    @property
    def warmup_steps(self) -> int:
        return int(self.metadata.get("warmup_steps", 0))

    def to_csv(self, path):
        lines = [self.CSV_HEADER]
        for i in range(self.steps):
            lines.append(
                f"{int(self.k[i])},{float(self.u[i])!r},{float(self.y[i])!r},"
                f"{float(self.r[i])!r},{float(self.u_ref[i])!r},"
                f"{float(self.solve_s[i])!r},{int(self.converged[i])}"
            )
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")

    @classmethod
    def from_csv(cls, path, metadata: dict | None = None) -> "ClosedLoopLog":
        with open(path) as fh:
            header = fh.readline().strip()
            if header != cls.CSV_HEADER:
                raise ConfigError(f"unexpected log header {header!r}")
            rows = [line.strip().split(",") for line in fh if line.strip()]
        cols = list(zip(*rows)) if rows else [[]] * 7
        return cls(
            k=np.asarray(cols[0], dtype=int),
            u=np.asarray(cols[1], dtype=float),
            y=np.asarray(cols[2], dtype=float),
            r=np.asarray(cols[3], dtype=float),
            u_ref=np.asarray(cols[4], dtype=float),
            solve_s=np.asarray(cols[5], dtype=float),
            converged=np.asarray(cols[6], dtype=int).astype(bool),
            metadata=metadata or {},
        )


@dataclass
class MetricsReport:
    j_ise: float
    j_iae: float
    j_u: float
    j_track: float
    mean_solve_s: float
    max_solve_s: float
    convergence_rate: float

    def to_dict(self):
        return dataclasses.asdict(self)

    def to_json(self, path, extra: dict | None = None):
        doc = self.to_dict()
        if extra:
            doc.update(extra)
        with open(path, "w") as fh:
            json.dump(doc, fh, indent=1)
            fh.write("\n")


def run_closed_loop(plant, controller: NeuralDeepcController, reference,
                    t_sim: int, x0=(0.0, 0.0), u_ref=None,
                    warmup_input: float = 0.0, metadata: dict | None = None) -> ClosedLoopLog:
    """Simulate ``t_sim`` steps of receding-horizon control.

    The first ``t_ini`` steps apply ``warmup_input`` to fill the initial
    windows; afterwards each step solves the controller on the current
    windows with an N-step reference preview and applies the first input.
    Per-step non-convergence is logged, never fatal.
    """
    ctx = controller.ctx
    if ctx.m != 1 or ctx.p != 1:
        raise ConfigError("the closed-loop harness logs single-channel experiments only")
    t_ini, n = ctx.t_ini, ctx.horizon
    reference = np.asarray(reference, dtype=float).reshape(-1)
    if reference.size < t_sim + n:
        raise DimensionError(
            f"reference must cover t_sim + horizon = {t_sim + n} samples, got {reference.size}"
        )
    if u_ref is None:
        u_ref = np.zeros_like(reference)
    u_ref = np.asarray(u_ref, dtype=float).reshape(-1)
    if u_ref.size < t_sim + n:
        raise DimensionError("u_ref must cover t_sim + horizon samples")

    plant.reset(x0)
    controller.reset()
    y_hist = [plant.output()]
    u_hist: list[float] = []
    rows_u, rows_y, rows_solve, rows_conv = [], [], [], []

    for k in range(t_sim):
        if k < t_ini:
            u_k = float(warmup_input)
            solve_s, conv = 0.0, True
        else:
            result = controller.step(
                u_ini=np.asarray(u_hist[k - t_ini: k]),
                y_ini=np.asarray(y_hist[k - t_ini + 1: k + 1]),
                y_ref=reference[k + 1: k + 1 + n],
                u_ref=u_ref[k: k + n],
            )
            u_k = float(result.u_applied[0])
            solve_s, conv = result.solve_seconds, result.converged
        rows_u.append(u_k)
        rows_y.append(y_hist[k])
        rows_solve.append(solve_s)
        rows_conv.append(conv)
        y_hist.append(plant.step(u_k))
        u_hist.append(u_k)

    meta = {"warmup_steps": t_ini, "t_sim": t_sim,
            "formulation": controller.config.formulation,
            "reg_weight": controller.config.reg_weight}
    meta.update(metadata or {})
    return ClosedLoopLog(
        k=np.arange(t_sim),
        u=np.asarray(rows_u),
        y=np.asarray(rows_y),
        r=reference[:t_sim].copy(),
        u_ref=u_ref[:t_sim].copy(),
        solve_s=np.asarray(rows_solve),
        converged=np.asarray(rows_conv, dtype=bool),
        metadata=meta,
    )


def compute_metrics(log: ClosedLoopLog, q_weight: float = 200.0,
                    r_weight: float = 0.5) -> MetricsReport:
    """Reduce a log to the standard tracking/effort indexes.

    Error sums run over every logged step; solve-time statistics and the
    convergence rate skip the warmup rows (no problem was solved there).
    """
    err = log.y - log.r
    eu = log.u - log.u_ref
    w = log.warmup_steps
    solve = log.solve_s[w:]
    conv = log.converged[w:]
    return MetricsReport(
        j_ise=float(np.sum(err**2)),
        j_iae=float(np.sum(np.abs(err))),
        j_u=float(np.sum(np.abs(log.u))),
        j_track=float(np.sum(q_weight * err**2 + r_weight * eu**2)),
        mean_solve_s=float(np.mean(solve)) if solve.size else 0.0,
        max_solve_s=float(np.max(solve)) if solve.size else 0.0,
        convergence_rate=float(np.mean(conv)) if conv.size else 1.0,
    )


@dataclass
class ComparisonReport:
    metrics: dict[str, MetricsReport]
    logs: dict[str, ClosedLoopLog]

    def table(self) -> str:
        names = list(self.metrics)
        header = f"{'formulation':<14}{'J_ISE':>12}{'J_IAE':>12}{'J_u':>12}" \
                 f"{'J_track':>12}{'mean CPU (s)':>14}"
        lines = [header, "-" * len(header)]
        for name in names:
            m = self.metrics[name]
            lines.append(
                f"{name:<14}{m.j_ise:>12.4g}{m.j_iae:>12.4g}{m.j_u:>12.4g}"
                f"{m.j_track:>12.6g}{m.mean_solve_s:>14.4g}"
            )
        return "\n".join(lines)

    def relative_deltas(self, baseline: str) -> dict[str, dict[str, float]]:
        base = self.metrics[baseline]
        out = {}
        for name, m in self.metrics.items():
            out[name] = {
                key: (getattr(m, key) - getattr(base, key)) / abs(getattr(base, key))
                if getattr(base, key) else 0.0
                for key in ("j_ise", "j_iae", "j_u", "j_track", "mean_solve_s")
            }
        return out

    def to_csv(self, path):
        lines = ["formulation,j_ise,j_iae,j_u,j_track,mean_solve_s,max_solve_s,convergence_rate"]
        for name, m in self.metrics.items():
            lines.append(
                f"{name},{m.j_ise!r},{m.j_iae!r},{m.j_u!r},{m.j_track!r},"
                f"{m.mean_solve_s!r},{m.max_solve_s!r},{m.convergence_rate!r}"
            )
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")


def compare_formulations(ctx: DeepcContext, config: ControlConfig, plant_factory,
                         reference, t_sim: int, x0=(0.0, 0.0), u_ref=None,
                         formulations=("p1", "p2", "p3"),
                         metadata: dict | None = None) -> ComparisonReport:
    """Run each formulation on the identical experiment, sequentially.

    Every run gets a fresh plant from ``plant_factory`` and its own
    controller sharing the one prepared context, so timing differences come
    from the optimization problems alone.
    """
    metrics, logs = {}, {}
    q_scalar = float(_weight_matrix(config.q_weight, ctx.p, "q_weight")[0, 0])
    r_scalar = float(_weight_matrix(config.r_weight, ctx.m, "r_weight")[0, 0])
    for name in formulations:
        cfg = dataclasses.replace(config, formulation=name)
        controller = NeuralDeepcController(ctx, cfg)
        log = run_closed_loop(plant_factory(), controller, reference, t_sim,
                              x0=x0, u_ref=u_ref, metadata=metadata)
        logs[name] = log
        metrics[name] = compute_metrics(log, q_scalar, r_scalar)
    return ComparisonReport(metrics=metrics, logs=logs)

"""Excitation inputs and reference trajectories.

The multisine generator mirrors the documented contract of the classic
system-identification input designers: a sum of sinusoids on the in-band DFT
grid of one period, Schroeder phasing with a seeded crest-factor search over
candidate frequency sets, and an exact affine map onto the requested range.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError


@dataclass
class MultisineSpec:
    amplitude_range: tuple[float, float] = (-4.0, 4.0)
    band: tuple[float, float] = (0.0, 1.0)  # fraction of Nyquist
    period: int = 1000
    num_periods: int = 1
    num_sines: int = 25
    freq_trials: int = 40
    phase_trials: int = 1
    seed: int = 0

    def validate(self):
        low, high = self.amplitude_range
        if not low < high:
            raise ConfigError(f"amplitude range must satisfy low < high, got {self.amplitude_range}")
        if not (0.0 <= self.band[0] < self.band[1] <= 1.0):
            raise ConfigError(f"band must be within [0, 1], got {self.band}")
        if self.period < 1 or self.num_periods < 1:
            raise ConfigError("period and num_periods must be >= 1")
        if self.num_sines < 1:
            raise ConfigError("need at least one sinusoid")
        if self.freq_trials < 1 or self.phase_trials < 1:
            raise ConfigError("trial grid sizes must be >= 1")


@dataclass
class ReferenceSpec:
    kind: str = "steps"  # "steps" | "chirp"
    levels: tuple[float, ...] = (0.5, -0.5)
    dwell: int = 150
    chirp_start_hz: float = 0.05
    chirp_end_hz: float = 0.4
    amplitude: float = 0.5
    ts: float = 0.033
    horizon: int = 600

    def validate(self):
        if self.horizon < 1:
            raise ConfigError("reference horizon must be >= 1")
        if self.kind == "steps":
            if not self.levels or self.dwell < 1:
                raise ConfigError("step reference needs levels and dwell >= 1")
        elif self.kind == "chirp":
            if self.chirp_start_hz <= 0 or self.chirp_end_hz < self.chirp_start_hz:
                raise ConfigError("chirp frequencies must be positive and non-decreasing")
            if self.ts <= 0:
                raise ConfigError("chirp needs a positive sample time")
        else:
            raise ConfigError(f"unknown reference kind {self.kind!r}")


def _crest_factor(signal: np.ndarray) -> float:
    rms = np.sqrt(np.mean(signal**2))
    return float(np.max(np.abs(signal)) / rms) if rms > 0 else np.inf


def _schroeder_phases(n: int) -> np.ndarray:
    j = np.arange(1, n + 1)
    return -np.pi * j * (j - 1) / n


def _crest_search(spec: MultisineSpec):
    period = spec.period
    lo_bin = max(1, int(np.ceil(spec.band[0] * period / 2.0)))
    hi_bin = min((period - 1) // 2, int(np.floor(spec.band[1] * period / 2.0)))
    grid = np.arange(lo_bin, hi_bin + 1)
    if grid.size < spec.num_sines:
        raise ConfigError(
            f"band holds {grid.size} DFT bins but {spec.num_sines} sinusoids were requested"
        )
    rng = np.random.default_rng(spec.seed)
    k = np.arange(period)
    best, best_bins, best_crest = None, None, np.inf
    for _ in range(spec.freq_trials):
        bins = np.sort(rng.choice(grid, size=spec.num_sines, replace=False))
        angles = 2.0 * np.pi * np.outer(k, bins) / period
        for trial in range(spec.phase_trials):
            if trial == 0:
                phases = _schroeder_phases(spec.num_sines)
            else:
                phases = rng.uniform(0.0, 2.0 * np.pi, spec.num_sines)
            candidate = np.sin(angles + phases).sum(axis=1)
            crest = _crest_factor(candidate)
            if crest < best_crest:
                best, best_bins, best_crest = candidate, bins, crest
    return best, best_bins


def multisine(spec: MultisineSpec) -> np.ndarray:
    """Generate one seeded multisine realization of length period*num_periods.

    Frequencies are distinct in-band DFT bins of one period; among
    ``freq_trials`` seeded bin draws (each with Schroeder phases plus
    ``phase_trials - 1`` random phase sets) the lowest-crest-factor signal
    wins. The output is scaled so min/max hit the requested range exactly.
    """
    spec.validate()
    best, _ = _crest_search(spec)
    low, high = spec.amplitude_range
    smin, smax = float(best.min()), float(best.max())
    if smax == smin:
        raise ConfigError("degenerate multisine candidate (constant signal)")
    one_period = low + (best - smin) * (high - low) / (smax - smin)
    return np.tile(one_period, spec.num_periods)


def multisine_bins(spec: MultisineSpec) -> np.ndarray:
    """DFT bins selected by the winning trial (recomputed deterministically)."""
    spec.validate()
    _, bins = _crest_search(spec)
    return bins


def reference(spec: ReferenceSpec) -> np.ndarray:
    """Reference trajectory of length ``spec.horizon``."""
    spec.validate()
    n = spec.horizon
    if spec.kind == "steps":
        blocks = []
        i = 0
        while sum(len(b) for b in blocks) < n:
            blocks.append(np.full(spec.dwell, spec.levels[i % len(spec.levels)]))
            i += 1
        return np.concatenate(blocks)[:n]
    # chirp: instantaneous frequency interpolated linearly over the horizon
    k = np.arange(n, dtype=float)
    denom = max(n - 1, 1)
    freq = spec.chirp_start_hz + (spec.chirp_end_hz - spec.chirp_start_hz) * k / denom
    return spec.amplitude * np.sin(2.0 * np.pi * freq * k * spec.ts)


def signal_to_csv(path, values: np.ndarray, column: str):
    lines = [column] + [repr(float(v)) for v in values]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")

"""Wind scenario generation and ingestion.

Provides the steady random winds used for training, the narrow/wide
sinusoidal validation environments, a mean-reverting synthetic gusty
generator standing in for measured records, and CSV ingestion of measured
series.  Measured and synthetic series are regularised so that between
consecutive steps at most one of {speed, direction} changes, by at most one
quantum (1 m/s or 1 degree) -- the same granularity as the control actions,
so a perfect one-action-per-step controller can track the wind exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

SPEED_QUANTUM = 1.0  # m/s
DIR_QUANTUM = 1.0    # degrees


class ParseError(Exception):
    """Malformed measured-series row; carries the 1-based row number."""

    def __init__(self, row: int, message: str):
        super().__init__(f"row {row}: {message}")
        self.row = row


class EmptySeries(Exception):
    pass


@dataclass(frozen=True)
class WindSample:
    speed: float      # m/s
    direction: float  # degrees, fixed frame


@dataclass
class WindSeries:
    """Immutable-by-convention time series of wind samples."""

    speed: np.ndarray
    direction: np.ndarray
    source: str = "unknown"

    def __post_init__(self):
        self.speed = np.asarray(self.speed, dtype=float)
        self.direction = np.asarray(self.direction, dtype=float)
        if self.speed.shape != self.direction.shape or self.speed.ndim != 1:
            raise ValueError("speed and direction must be 1-D and equal length")
        if len(self.speed) == 0:
            raise EmptySeries("wind series has no samples")
        if np.any(self.speed < 0):
            raise ValueError("wind speed must be non-negative")

    def __len__(self) -> int:
        return len(self.speed)

    def sample(self, i: int) -> WindSample:
        # clamp at the end so fixed-length rollouts can peek one past
        i = min(i, len(self.speed) - 1)
        return WindSample(float(self.speed[i]), float(self.direction[i]))

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write("step,speed_mps,direction_deg\n")
            for t, (s, d) in enumerate(zip(self.speed, self.direction)):
                fh.write(f"{t},{float(s)!r},{float(d)!r}\n")


@dataclass
class SinusoidSpec:
    """Sinusoidal speed/direction environment; periods in steps, phases in
    radians."""

    speed_min: float
    speed_max: float
    dir_min: float
    dir_max: float
    speed_period: int = 600
    dir_period: int = 400
    speed_phase: float = 0.0
    dir_phase: float = 0.0

    def __post_init__(self):
        if self.speed_min >= self.speed_max or self.dir_min >= self.dir_max:
            raise ValueError("min must be below max")
        if self.speed_period < 2 or self.dir_period < 2:
            raise ValueError("periods must be at least 2 steps")


def narrow_spec(rng=None) -> SinusoidSpec:
    """Sinusoid bounded to 7..13 m/s and +-10 degrees."""
    rng = rng or np.random.default_rng(0)
    return SinusoidSpec(7.0, 13.0, -10.0, 10.0,
                        speed_phase=float(rng.uniform(0, 2 * math.pi)),
                        dir_phase=float(rng.uniform(0, 2 * math.pi)))


def wide_spec(rng=None) -> SinusoidSpec:
    """Sinusoid reaching 1..13 m/s and +-30 degrees; the low-speed lobe
    deliberately leaves the 4..13 m/s training window."""
    rng = rng or np.random.default_rng(0)
    return SinusoidSpec(1.0, 13.0, -30.0, 30.0,
                        speed_phase=float(rng.uniform(0, 2 * math.pi)),
                        dir_phase=float(rng.uniform(0, 2 * math.pi)))


def steady_random(rng, n_steps: int, speed_bounds=(4.0, 13.0),
                  dir_bounds=(-30.0, 30.0)) -> WindSeries:
    """One random (speed, direction) pair held for the whole episode."""
    speed = float(rng.uniform(*speed_bounds))
    direction = float(rng.uniform(*dir_bounds))
    return WindSeries(np.full(n_steps, speed), np.full(n_steps, direction),
                      source="steady")


def sinusoid(spec: SinusoidSpec, n_steps: int, source: str = "sinusoid") -> WindSeries:
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    t = np.arange(n_steps)
    s_mid = 0.5 * (spec.speed_min + spec.speed_max)
    s_amp = 0.5 * (spec.speed_max - spec.speed_min)
    d_mid = 0.5 * (spec.dir_min + spec.dir_max)
    d_amp = 0.5 * (spec.dir_max - spec.dir_min)
    speed = s_mid + s_amp * np.sin(2 * math.pi * t / spec.speed_period + spec.speed_phase)
    direction = d_mid + d_amp * np.sin(2 * math.pi * t / spec.dir_period + spec.dir_phase)
    return WindSeries(speed, direction, source=source)


def _regular_steps(s0, d0, s1, d1):
    """Expand one raw transition into quantum-limited single-variable steps,
    alternating speed/direction moves (speed first)."""
    out = []
    s, d = s0, d0
    move_speed = True
    while s != s1 or d != d1:
        if move_speed and s != s1:
            ds = np.clip(s1 - s, -SPEED_QUANTUM, SPEED_QUANTUM)
            s = s1 if abs(s1 - s) <= SPEED_QUANTUM else s + ds
            out.append((s, d))
        elif not move_speed and d != d1:
            dd = np.clip(d1 - d, -DIR_QUANTUM, DIR_QUANTUM)
            d = d1 if abs(d1 - d) <= DIR_QUANTUM else d + dd
            out.append((s, d))
        move_speed = not move_speed
    return out


def regularize(raw: WindSeries) -> WindSeries:
    """Limit the series to one changed variable per step, one quantum at a
    time; bigger raw jumps become interpolated intermediate steps.

    Idempotent: a series that already satisfies the rule passes through
    unchanged.
    """
    speeds = [float(raw.speed[0])]
    dirs = [float(raw.direction[0])]
    for s1, d1 in zip(raw.speed[1:], raw.direction[1:]):
        s0, d0 = speeds[-1], dirs[-1]
        ds, dd = abs(s1 - s0), abs(d1 - d0)
        if (ds <= SPEED_QUANTUM and dd == 0) or (ds == 0 and dd <= DIR_QUANTUM):
            speeds.append(float(s1))
            dirs.append(float(d1))
            continue
        for s, d in _regular_steps(s0, d0, float(s1), float(d1)):
            speeds.append(s)
            dirs.append(d)
    return WindSeries(np.array(speeds), np.array(dirs), source=raw.source)


def is_regular(series: WindSeries) -> bool:
    ds = np.abs(np.diff(series.speed))
    dd = np.abs(np.diff(series.direction))
    one_at_a_time = (ds == 0) | (dd == 0)
    return bool(np.all(one_at_a_time) and np.all(ds <= SPEED_QUANTUM + 1e-12)
                and np.all(dd <= DIR_QUANTUM + 1e-12))


def synthetic_gusty(rng, n_steps: int, speed_bounds=(4.0, 13.0),
                    dir_bounds=(-30.0, 30.0), reversion: float = 0.03,
                    speed_vol: float = 0.5, dir_vol: float = 2.0,
                    speed_mean: float | None = None,
                    dir_mean: float | None = None) -> WindSeries:
    """Mean-reverting (Ornstein-Uhlenbeck) walk on speed and direction,
    clipped to bounds, quantised to the action lattice and regularised.

    Stands in for measured gusty records: unsteady, turbulent, but still
    trackable one quantum per step after regularisation.  The reversion
    means default to the middle of the bounds.
    """
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    s_mid = 0.5 * (speed_bounds[0] + speed_bounds[1]) if speed_mean is None \
        else speed_mean
    d_mid = 0.5 * (dir_bounds[0] + dir_bounds[1]) if dir_mean is None \
        else dir_mean
    speed = np.empty(n_steps)
    direction = np.empty(n_steps)
    s, d = s_mid, d_mid
    for t in range(n_steps):
        s += reversion * (s_mid - s) + speed_vol * rng.standard_normal()
        d += reversion * (d_mid - d) + dir_vol * rng.standard_normal()
        s = float(np.clip(s, *speed_bounds))
        d = float(np.clip(d, *dir_bounds))
        speed[t] = s
        direction[t] = d
    # snap to the 1 m/s / 1 deg lattice before regularising so the series
    # moves on exactly the grid the actions do
    speed = np.clip(np.round(speed), *speed_bounds)
    direction = np.clip(np.round(direction), *dir_bounds)
    series = WindSeries(speed, direction, source="synthetic-gusty")
    out = regularize(series)
    return WindSeries(out.speed[:n_steps] if len(out) > n_steps else out.speed,
                      out.direction[:n_steps] if len(out) > n_steps else out.direction,
                      source="synthetic-gusty")


def load_measured(path) -> WindSeries:
    """Read `timestamp,speed_mps,direction_deg` CSV, linearly fill gaps,
    then regularise."""
    speeds: list[float] = []
    dirs: list[float] = []
    with open(path) as fh:
        header = fh.readline()
        if header.strip().replace(" ", "") != "timestamp,speed_mps,direction_deg":
            raise ParseError(1, f"unexpected header {header.strip()!r}")
        for row, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            parts = line.rstrip("\n").split(",")
            if len(parts) != 3:
                raise ParseError(row, f"expected 3 fields, got {len(parts)}")
            s_raw, d_raw = parts[1].strip(), parts[2].strip()
            try:
                speeds.append(float(s_raw) if s_raw else math.nan)
                dirs.append(float(d_raw) if d_raw else math.nan)
            except ValueError as exc:
                raise ParseError(row, str(exc)) from None
    if not speeds:
        raise EmptySeries(f"no samples in {path}")
    speed = _fill_gaps(np.array(speeds))
    direction = _fill_gaps(np.array(dirs))
    series = WindSeries(speed, direction, source="measured")
    return regularize(series)


def _fill_gaps(values: np.ndarray) -> np.ndarray:
    """Linear interpolation over NaN runs; edge NaNs take the nearest value."""
    bad = np.isnan(values)
    if bad.all():
        raise EmptySeries("series contains no numeric samples")
    if bad.any():
        idx = np.arange(len(values))
        values = values.copy()
        values[bad] = np.interp(idx[bad], idx[~bad], values[~bad])
    return values

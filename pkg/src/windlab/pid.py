"""Quantized three-loop PID baseline.

One PID loop per degree of freedom: yaw tracks zero misalignment, rotor
speed and pitch track wind-dependent setpoint curves derived from the rotor
model's own optimum.  Raw loop outputs are quantized to {-1, 0, +1} (the
controller moves on the same lattice as the learning agents, just three
variables per step instead of one) and each variable's increment is
individually revocable by the environment.

The loops know nothing about the admissible state space; that blindness is
the point of the baseline.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .aero import RotorConfig, solve_rotor_batch

INTEGRAL_CLAMP = 10.0  # anti-windup bound on the accumulated error term


@dataclass(frozen=True)
class LoopGains:
    kp: float
    ki: float
    kd: float

    def __post_init__(self):
        for g in (self.kp, self.ki, self.kd):
            if not math.isfinite(g):
                raise ValueError("gains must be finite")


@dataclass(frozen=True)
class PidGains:
    yaw: LoopGains
    rpm: LoopGains
    pitch: LoopGains

    @classmethod
    def unit(cls) -> "PidGains":
        g = LoopGains(1.0, 1.0, 1.0)
        return cls(yaw=g, rpm=g, pitch=g)

    def save(self, path):
        doc = {name: {"kp": lg.kp, "ki": lg.ki, "kd": lg.kd}
               for name, lg in (("yaw", self.yaw), ("rpm", self.rpm),
                                ("pitch", self.pitch))}
        Path(path).write_text(yaml.safe_dump(doc, sort_keys=False))

    @classmethod
    def load(cls, path) -> "PidGains":
        doc = yaml.safe_load(Path(path).read_text())
        return cls(**{name: LoopGains(**doc[name]) for name in
                      ("yaw", "rpm", "pitch")})


def tuned_gains() -> PidGains:
    """Gains shipped with the package (random-search tuned on the narrow
    scenario)."""
    return PidGains.load(Path(__file__).parent / "data" / "pid_gains_tuned.yaml")


@dataclass
class LoopState:
    integral: float = 0.0
    prev_error: float = 0.0
    primed: bool = False  # no derivative kick on the first update


class PidState:
    """Integrator/derivative memory for the three loops."""

    def __init__(self):
        self.yaw = LoopState()
        self.rpm = LoopState()
        self.pitch = LoopState()

    def reset(self):
        self.__init__()


def pid_update(state: LoopState, gains: LoopGains, error: float,
               dt: float = 1.0, integral_clamp: float = INTEGRAL_CLAMP) -> float:
    """u = kp*e + ki*int(e) + kd*de/dt with the integral clamped so long
    revocation stretches cannot wind it up."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    state.integral = float(np.clip(state.integral + error * dt,
                                   -integral_clamp, integral_clamp))
    derivative = 0.0 if not state.primed else (error - state.prev_error) / dt
    state.prev_error = error
    state.primed = True
    return gains.kp * error + gains.ki * state.integral + gains.kd * derivative


def quantize(u: float) -> int:
    """Map a raw control to {-1, 0, +1}: half-unit deadband, symmetric."""
    if u >= 0.5:
        return 1
    if u <= -0.5:
        return -1
    return 0


@dataclass
class SetpointCurves:
    """Piecewise-linear rpm/pitch setpoints over wind speed; the implicit
    yaw setpoint is zero misalignment."""

    wind: np.ndarray
    rpm: np.ndarray
    pitch: np.ndarray

    def rpm_setpoint(self, wind_speed: float) -> float:
        return float(np.interp(wind_speed, self.wind, self.rpm))

    def pitch_setpoint(self, wind_speed: float) -> float:
        return float(np.interp(wind_speed, self.wind, self.pitch))

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write("wind_mps,rpm_setpoint,pitch_setpoint_deg\n")
            for w, r, p in zip(self.wind, self.rpm, self.pitch):
                fh.write(f"{float(w)!r},{float(r)!r},{float(p)!r}\n")

    @classmethod
    def from_csv(cls, path) -> "SetpointCurves":
        wind, rpm, pitch = [], [], []
        with open(path) as fh:
            header = fh.readline().strip()
            if header != "wind_mps,rpm_setpoint,pitch_setpoint_deg":
                raise ValueError(f"unexpected setpoint header {header!r}")
            for line in fh:
                if not line.strip():
                    continue
                w, r, p = line.split(",")
                wind.append(float(w))
                rpm.append(float(r))
                pitch.append(float(p))
        return cls(np.array(wind), np.array(rpm), np.array(pitch))


def derive_setpoints(cfg: RotorConfig, wind_grid=None,
                     tsr_resolution: float = 0.05,
                     pitch_resolution: float = 0.25,
                     constraints_tsr=(3.0, 12.0),
                     rpm_bounds=(6.0, 25.0),
                     pitch_bounds=(-20.0, 20.0)) -> SetpointCurves:
    """For each wind speed, grid-search the (rpm, pitch) pair maximising cp
    at zero misalignment, subject to the rpm box and the TSR bounds.

    cp at zero yaw depends on (TSR, pitch) only, so one dense surface
    serves every wind speed; per wind the search reduces to the feasible
    TSR window the rpm box allows.
    """
    wind_grid = np.arange(4.0, 13.0 + 1e-9, 0.5) if wind_grid is None else \
        np.asarray(wind_grid, dtype=float)
    tsr_axis = np.arange(constraints_tsr[0], constraints_tsr[1] + 1e-9,
                         tsr_resolution)
    pitch_axis = np.arange(pitch_bounds[0], pitch_bounds[1] + 1e-9,
                           pitch_resolution)
    t, p = np.meshgrid(tsr_axis, pitch_axis, indexing="ij")
    u_ref = 8.0
    rpm_ref = t * u_ref / cfg.radius * 30.0 / math.pi
    sol = solve_rotor_batch(cfg, u_ref, 0.0, p, rpm_ref)
    cp = np.where(sol.converged, sol.cp, -np.inf)

    rad_per_rpm = math.pi / 30.0
    rpm_best = np.empty_like(wind_grid)
    pitch_best = np.empty_like(wind_grid)
    for i, w in enumerate(wind_grid):
        tsr_lo = rpm_bounds[0] * rad_per_rpm * cfg.radius / w
        tsr_hi = rpm_bounds[1] * rad_per_rpm * cfg.radius / w
        feasible = (tsr_axis >= max(tsr_lo, constraints_tsr[0]) - 1e-9) & \
                   (tsr_axis <= min(tsr_hi, constraints_tsr[1]) + 1e-9)
        if not feasible.any():  # no rpm satisfies the TSR box at this wind
            nearest = np.argmin(np.abs(tsr_axis - np.clip(tsr_lo, *constraints_tsr)))
            feasible = np.zeros_like(feasible)
            feasible[nearest] = True
        sub = cp[feasible, :]
        k, j = np.unravel_index(np.argmax(sub), sub.shape)
        tsr_star = tsr_axis[feasible][k]
        rpm_star = tsr_star * w / cfg.radius / rad_per_rpm
        rpm_best[i] = float(np.clip(rpm_star, *rpm_bounds))
        pitch_best[i] = pitch_axis[j]
    return SetpointCurves(wind=wind_grid, rpm=rpm_best, pitch=pitch_best)


class PidController:
    """Three quantized loops sharing one setpoint table."""

    def __init__(self, gains: PidGains, curves: SetpointCurves, dt: float = 1.0):
        self.gains = gains
        self.curves = curves
        self.dt = dt
        self.state = PidState()

    def reset(self):
        self.state.reset()

    def act_increments(self, turbine_state) -> tuple[int, int, int]:
        """Per-variable increments (yaw, pitch, rpm), each in {-1, 0, +1}.

        Loop errors are setpoint minus measurement, so a positive error
        asks for an increase.
        """
        u = turbine_state.wind_speed
        e_yaw = 0.0 - turbine_state.yaw_misalignment
        e_rpm = self.curves.rpm_setpoint(u) - turbine_state.rotor_speed
        e_pitch = self.curves.pitch_setpoint(u) - turbine_state.pitch
        dy = quantize(pid_update(self.state.yaw, self.gains.yaw, e_yaw, self.dt))
        dp = quantize(pid_update(self.state.pitch, self.gains.pitch, e_pitch, self.dt))
        dr = quantize(pid_update(self.state.rpm, self.gains.rpm, e_rpm, self.dt))
        return dy, dp, dr


def tune(env_factory, scenario_factory, budget: int, rng,
         gains_bounds=(1e-2, 10.0), curves: SetpointCurves | None = None,
         cfg: RotorConfig | None = None) -> tuple[PidGains, float]:
    """Bounded random search over log-uniform per-loop gains, scored by the
    control capacity factor on the provided scenario.

    The unit-gain controller is always in the comparison set, so the result
    can never score below it.  Returns (gains, best ccf).
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    if curves is None:
        curves = derive_setpoints(cfg)

    lo, hi = np.log(gains_bounds[0]), np.log(gains_bounds[1])

    def sample_gains():
        vals = np.exp(rng.uniform(lo, hi, size=9))
        return PidGains(yaw=LoopGains(*vals[0:3]), rpm=LoopGains(*vals[3:6]),
                        pitch=LoopGains(*vals[6:9]))

    def score(gains: PidGains) -> float:
        env = env_factory()
        series = scenario_factory()
        controller = PidController(gains, curves)
        env.reset(series, np.random.default_rng(0))
        cps = []
        for _ in range(len(series) - 1):
            out = env.step_increments(controller.act_increments(env.state))
            cps.append(out.cp)
        return float(np.mean(cps)) / env.reward_cfg.cp_nom * 100.0

    candidates = [PidGains.unit()] + [sample_gains() for _ in range(budget)]
    scores = [score(g) for g in candidates]
    best = int(np.argmax(scores))
    return candidates[best], scores[best]

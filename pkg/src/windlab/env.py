"""Discrete control environment for the turbine.

State is (yaw, pitch, rotor speed) plus the current wind sample; the seven
actions nudge one degree of freedom by one unit (or hold).  An action whose
candidate state violates the admissible set is revoked -- the degrees of
freedom are held -- and, in training mode, punished with a fixed negative
reward.  Wind itself can push a state out of bounds (direction drift,
speed collapse); such violations are not the agent's fault, so only actions
that *introduce or worsen* a violation are revoked.

Rewards are the power coefficient normalised by the turbine's nominal
(maximum) power coefficient, with a one-off bonus once the normalised
reward has stayed at or above the win threshold for a full streak window;
in training mode that win ends the episode.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace, field
from enum import IntEnum

import numpy as np

from .aero import AeroSolution, RotorConfig, RotorSolver
from .wind import WindSample, WindSeries


class Action(IntEnum):
    YAW_UP = 0      # +1 degree yaw
    YAW_DOWN = 1    # -1 degree yaw
    PITCH_UP = 2    # +1 degree pitch
    PITCH_DOWN = 3  # -1 degree pitch
    RPM_UP = 4      # +1 rpm
    RPM_DOWN = 5    # -1 rpm
    HOLD = 6        # leave all degrees of freedom alone


# per-action (yaw, pitch, rpm) increments
ACTION_DELTAS = {
    Action.YAW_UP: (1.0, 0.0, 0.0),
    Action.YAW_DOWN: (-1.0, 0.0, 0.0),
    Action.PITCH_UP: (0.0, 1.0, 0.0),
    Action.PITCH_DOWN: (0.0, -1.0, 0.0),
    Action.RPM_UP: (0.0, 0.0, 1.0),
    Action.RPM_DOWN: (0.0, 0.0, -1.0),
    Action.HOLD: (0.0, 0.0, 0.0),
}

N_ACTIONS = 7


@dataclass(frozen=True)
class TurbineState:
    """Absolute yaw plus control DOFs and the wind the turbine sees."""

    yaw: float          # degrees, fixed frame
    pitch: float        # degrees
    rotor_speed: float  # rpm
    wind_speed: float   # m/s
    wind_dir: float     # degrees, fixed frame

    @property
    def yaw_misalignment(self) -> float:
        return self.yaw - self.wind_dir

    def dofs(self) -> tuple[float, float, float]:
        return (self.yaw, self.pitch, self.rotor_speed)

    def with_wind(self, sample: WindSample) -> "TurbineState":
        return replace(self, wind_speed=sample.speed, wind_dir=sample.direction)


@dataclass(frozen=True)
class ConstraintSet:
    """Box bounds plus the model-validity constraints (TSR, AoA)."""

    misalignment: tuple[float, float] = (-30.0, 30.0)
    pitch: tuple[float, float] = (-20.0, 20.0)
    rotor_speed: tuple[float, float] = (6.0, 25.0)
    wind_speed: tuple[float, float] = (4.0, 13.0)
    tsr: tuple[float, float] = (3.0, 12.0)
    aoa: tuple[float, float] = (-10.0, 15.0)


def _excess(value: float, bounds: tuple[float, float]) -> float:
    lo, hi = bounds
    if value < lo:
        return lo - value
    if value > hi:
        return value - hi
    return 0.0


def check_constraints(state: TurbineState, sol: AeroSolution,
                      constraints: ConstraintSet) -> dict[str, float]:
    """Violated constraints at `state`, mapped to how far past the bound
    the offending quantity sits (in its own units).

    A non-converged aero solution is treated as an `aero` violation: the
    model cannot certify the state, so conservatively it is out of bounds.
    """
    out: dict[str, float] = {}
    pairs = [
        ("misalignment", state.yaw_misalignment, constraints.misalignment),
        ("pitch", state.pitch, constraints.pitch),
        ("rotor_speed", state.rotor_speed, constraints.rotor_speed),
        ("tsr", sol.tsr, constraints.tsr),
        ("aoa_min", sol.aoa_min, constraints.aoa),
        ("aoa_max", sol.aoa_max, constraints.aoa),
    ]
    for name, value, bounds in pairs:
        e = _excess(value, bounds)
        if e > 0.0:
            out[name] = e
    if not sol.converged:
        out["aero"] = math.inf
    return out


def apply_action(state: TurbineState, action: int) -> TurbineState:
    """Candidate state: exactly one DOF moved one unit (or none for HOLD);
    wind untouched.  Validity is judged separately."""
    dy, dp, dr = ACTION_DELTAS[Action(action)]
    return replace(state, yaw=state.yaw + dy, pitch=state.pitch + dp,
                   rotor_speed=state.rotor_speed + dr)


@dataclass
class RewardConfig:
    cp_nom: float
    penalty: float = -2.0
    win_bonus: float = 5.0
    win_threshold: float = 0.975
    win_streak: int = 20


def reward(cp: float, revoked: bool, streak: int,
           config: RewardConfig) -> tuple[float, bool]:
    """Reward for one committed step.

    Revoked actions earn the flat penalty.  Otherwise the reward grows
    linearly from 0 at cp = 0 to 1 at cp = cp_nom (clipped at 1, since the
    nominal value comes from a finite search); once `streak` prior steps
    plus this one have all reached the win threshold, the win bonus lands
    on top.
    """
    if revoked:
        return config.penalty, False
    r = min(cp / config.cp_nom, 1.0)
    won = r >= config.win_threshold and (streak + 1) >= config.win_streak
    if won:
        r += config.win_bonus
    return r, won


@dataclass
class StepOutcome:
    next_state: TurbineState
    reward: float
    cp: float
    revoked: bool
    won: bool
    terminal: bool
    solution: AeroSolution | None = None


@dataclass
class IncrementOutcome:
    """Outcome of a per-variable increment step (PID path)."""

    next_state: TurbineState
    cp: float
    revoked: tuple[bool, bool, bool]  # per (yaw, pitch, rpm)
    reward: float
    won: bool


class TurbineEnv:
    """Single-episode state machine around the rotor model.

    mode="train": revoked actions are punished and a completed win streak
    terminates the episode.  mode="validation": revocation still blocks the
    movement (the physical limits exist regardless), but the penalty is only
    logged, rewards stay on the cp scale and nothing terminates.
    """

    def __init__(self, cfg: RotorConfig, cp_nom: float,
                 constraints: ConstraintSet | None = None,
                 mode: str = "train", dt: float = 60.0):
        if mode not in ("train", "validation"):
            raise ValueError("mode must be 'train' or 'validation'")
        self.cfg = cfg
        self.constraints = constraints or ConstraintSet()
        self.reward_cfg = RewardConfig(cp_nom=cp_nom)
        self.mode = mode
        self.dt = dt
        self.solver = RotorSolver(cfg)
        self.state: TurbineState | None = None
        self._series: WindSeries | None = None
        self._cursor = 0
        self._streak = 0

    # -- helpers ----------------------------------------------------------

    def _solve(self, state: TurbineState) -> AeroSolution:
        return self.solver.solve(state.wind_speed, state.yaw_misalignment,
                                 state.pitch, state.rotor_speed)

    def _violations(self, state: TurbineState) -> dict[str, float]:
        return check_constraints(state, self._solve(state), self.constraints)

    def wind_at(self, i: int) -> WindSample:
        return self._series.sample(i)

    @property
    def steps_taken(self) -> int:
        return self._cursor

    # -- episode control ---------------------------------------------------

    def reset(self, series: WindSeries, rng) -> TurbineState:
        """Sample DOFs uniformly from the valid interior of the state space
        (rejection sampling keeps TSR and AoA legal) under the first wind
        sample of `series`.

        Winds can make every rotor speed infeasible (TSR exceeds its bound
        at the minimum rpm once the wind drops far enough); then the
        least-violating candidate starts the episode instead.
        """
        self._series = series
        self._cursor = 0
        self._streak = 0
        w0 = series.sample(0)
        c = self.constraints
        best, best_excess = None, math.inf
        for _ in range(2000):
            gamma = rng.uniform(*c.misalignment)
            pitch = rng.uniform(*c.pitch)
            rpm = rng.uniform(*c.rotor_speed)
            cand = TurbineState(yaw=w0.direction + gamma, pitch=pitch,
                                rotor_speed=rpm, wind_speed=w0.speed,
                                wind_dir=w0.direction)
            viol = self._violations(cand)
            if not viol:
                self.state = cand
                return cand
            total = sum(v for v in viol.values() if math.isfinite(v))
            if math.isinf(max(viol.values())):
                total = math.inf
            if total < best_excess:
                best, best_excess = cand, total
        self.state = best
        return best

    def start_from(self, state: TurbineState, series: WindSeries) -> TurbineState:
        """Begin an episode at a caller-fixed state (wind fields are forced
        to the first sample of `series`)."""
        self._series = series
        self._cursor = 0
        self._streak = 0
        self.state = state.with_wind(series.sample(0))
        return self.state

    def step(self, action: int) -> StepOutcome:
        """Apply one action: the candidate is checked against the current
        wind; a violation the action caused (or worsened) revokes the DOF
        change.  Afterwards the wind advances one sample."""
        if self.state is None:
            raise RuntimeError("call reset() first")
        committed, revoked = self._attempt(self.state, action)
        return self._finalise(committed, revoked)

    def step_increments(self, increments: tuple[int, int, int]) -> IncrementOutcome:
        """Apply per-variable increments in (yaw, pitch, rpm) order, each
        individually revocable; used by multi-loop controllers that act on
        all three DOFs each step."""
        if self.state is None:
            raise RuntimeError("call reset() first")
        order = ((0, Action.YAW_UP, Action.YAW_DOWN),
                 (1, Action.PITCH_UP, Action.PITCH_DOWN),
                 (2, Action.RPM_UP, Action.RPM_DOWN))
        current = self.state
        revoked = [False, False, False]
        for slot, up, down in order:
            inc = increments[slot]
            if inc == 0:
                continue
            action = up if inc > 0 else down
            current, rev = self._attempt(current, int(action))
            revoked[slot] = rev
        any_rev = any(r for r, inc in zip(revoked, increments) if inc != 0)
        out = self._finalise(current, any_rev)
        return IncrementOutcome(next_state=out.next_state, cp=out.cp,
                                revoked=tuple(revoked), reward=out.reward,
                                won=out.won)

    def _attempt(self, state: TurbineState, action: int) -> tuple[TurbineState, bool]:
        """Candidate vs current violation comparison: revoke only if the
        action introduces a new violation or worsens an existing one (wind
        alone may have pushed the state out of bounds already)."""
        candidate = apply_action(state, action)
        if candidate.dofs() == state.dofs():
            return state, False
        cand_viol = self._violations(candidate)
        if not cand_viol:
            return candidate, False
        cur_viol = self._violations(state)
        for name, excess in cand_viol.items():
            if excess > cur_viol.get(name, 0.0) + 1e-12:
                return state, True
        return candidate, False

    def _finalise(self, committed: TurbineState, revoked: bool) -> StepOutcome:
        sol = self._solve(committed)
        cp = sol.cp
        r, won = reward(cp, revoked, self._streak, self.reward_cfg)
        if self.mode == "validation" and revoked:
            # physical limits still block the move, but the penalty is only
            # logged (via the revoked flag), not scored
            r = min(cp / self.reward_cfg.cp_nom, 1.0)

        base = min(cp / self.reward_cfg.cp_nom, 1.0)
        if revoked or base < self.reward_cfg.win_threshold:
            self._streak = 0
        else:
            self._streak += 1

        self._cursor += 1
        next_wind = self._series.sample(self._cursor)
        next_state = committed.with_wind(next_wind)
        self.state = next_state
        terminal = won and self.mode == "train"
        return StepOutcome(next_state=next_state, reward=r, cp=cp,
                           revoked=revoked, won=won, terminal=terminal,
                           solution=sol)

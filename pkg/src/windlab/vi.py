"""Tabular value-iteration controller.

The continuous state space is discretised at the action quantum (1 degree /
1 rpm) and, since the model assumes wind holds constant between actions,
each wind-speed slice forms an independent deterministic MDP.  The
transition and reward tables reuse the environment's own revocation rule,
so the solved model is exact for the environment whenever the wind really
does hold still.

The dominant cost is one rotor solve per grid point; both the solved tables
and the underlying cp grid are cached on disk keyed by the turbine hash.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .aero import RotorConfig, default_cache_dir, solve_rotor_batch
from .env import ACTION_DELTAS, Action, ConstraintSet, N_ACTIONS

DEFAULT_GAMMA = 0.95
DEFAULT_EPSILON = 1e-6


@dataclass(frozen=True)
class GridSpec:
    """Axes of the discrete state lattice; steps default to the action
    quantum."""

    gamma_step: float = 1.0   # yaw misalignment (deg)
    pitch_step: float = 1.0   # deg
    omega_step: float = 1.0   # rpm
    wind_step: float = 1.0    # m/s
    gamma_bounds: tuple[float, float] = (-30.0, 30.0)
    pitch_bounds: tuple[float, float] = (-20.0, 20.0)
    omega_bounds: tuple[float, float] = (6.0, 25.0)
    wind_bounds: tuple[float, float] = (4.0, 13.0)

    def axis(self, bounds, step) -> np.ndarray:
        return np.arange(bounds[0], bounds[1] + 1e-9, step)

    @property
    def gamma_axis(self) -> np.ndarray:
        return self.axis(self.gamma_bounds, self.gamma_step)

    @property
    def pitch_axis(self) -> np.ndarray:
        return self.axis(self.pitch_bounds, self.pitch_step)

    @property
    def omega_axis(self) -> np.ndarray:
        return self.axis(self.omega_bounds, self.omega_step)

    @property
    def wind_axis(self) -> np.ndarray:
        return self.axis(self.wind_bounds, self.wind_step)

    @property
    def shape(self) -> tuple[int, int, int]:
        return (len(self.gamma_axis), len(self.pitch_axis),
                len(self.omega_axis))

    @property
    def n_states(self) -> int:
        g, p, o = self.shape
        return g * p * o

    def state_id(self, ig: int, ip: int, io: int) -> int:
        _, np_, no = self.shape
        return (ig * np_ + ip) * no + io

    def unravel(self, sid: int) -> tuple[int, int, int]:
        _, np_, no = self.shape
        io = sid % no
        rem = sid // no
        return rem // np_, rem % np_, io

    def key(self) -> str:
        return (f"g{self.gamma_step}_p{self.pitch_step}_o{self.omega_step}"
                f"_w{self.wind_step}")

    def _snap(self, value: float, axis: np.ndarray) -> int:
        """Nearest grid index; exact midpoints round toward the axis
        centre (the grid interior)."""
        pos = (value - axis[0]) / (axis[1] - axis[0])
        lo = int(np.clip(math.floor(pos), 0, len(axis) - 1))
        hi = int(np.clip(lo + 1, 0, len(axis) - 1))
        dl = abs(value - axis[lo])
        dh = abs(axis[hi] - value)
        if abs(dl - dh) < 1e-12:  # midpoint: pick the more central node
            centre = 0.5 * (axis[0] + axis[-1])
            return lo if abs(axis[lo] - centre) <= abs(axis[hi] - centre) else hi
        return lo if dl < dh else hi

    def snap_state(self, wind_speed, misalignment, pitch, omega):
        """Continuous state -> (wind index, state id); wind is clamped onto
        its axis."""
        w = float(np.clip(wind_speed, self.wind_bounds[0], self.wind_bounds[1]))
        iw = self._snap(w, self.wind_axis)
        ig = self._snap(float(np.clip(misalignment, *self.gamma_bounds)),
                        self.gamma_axis)
        ip = self._snap(float(np.clip(pitch, *self.pitch_bounds)),
                        self.pitch_axis)
        io = self._snap(float(np.clip(omega, *self.omega_bounds)),
                        self.omega_axis)
        return iw, self.state_id(ig, ip, io)


@dataclass
class SliceModel:
    """Deterministic MDP for one wind speed: per (state, action) successor
    ids and rewards, plus the per-state cp used to build them."""

    wind_speed: float
    successors: np.ndarray  # (n_states, n_actions) int32
    rewards: np.ndarray     # (n_states, n_actions)
    cp: np.ndarray          # (n_states,)
    forbidden: np.ndarray   # (n_states,) bool


def _grid_solutions(grid: GridSpec, cfg: RotorConfig, wind: float):
    g, p, o = np.meshgrid(grid.gamma_axis, grid.pitch_axis, grid.omega_axis,
                          indexing="ij")
    sol = solve_rotor_batch(cfg, wind, g.ravel(), p.ravel(), o.ravel())
    return sol


def build_slice(grid: GridSpec, cfg: RotorConfig, wind: float, cp_nom: float,
                constraints: ConstraintSet | None = None,
                win_bonus: float = 0.0, win_threshold: float = 0.975,
                penalty: float = -2.0) -> SliceModel:
    """Rewards and successors for one wind slice.

    Transitions follow the environment's revocation semantics: an action is
    revoked (self-loop, penalty) if it leaves the grid box or introduces /
    worsens a TSR/AoA violation; moves inside an already-violated region
    that do not worsen it proceed, which is what lets the policy steer back
    toward validity when the wind has stranded the turbine outside.
    """
    c = constraints or ConstraintSet()
    sol = _grid_solutions(grid, cfg, wind)
    n = grid.n_states
    cp = sol.cp

    tsr_excess = np.maximum(sol.tsr - c.tsr[1], 0.0) + np.maximum(c.tsr[0] - sol.tsr, 0.0)
    aoa_excess = (np.maximum(sol.aoa_max - c.aoa[1], 0.0)
                  + np.maximum(c.aoa[0] - sol.aoa_min, 0.0))
    bad = ~sol.converged
    excess = tsr_excess + aoa_excess + np.where(bad, np.inf, 0.0)
    forbidden = excess > 0.0

    shape = grid.shape
    successors = np.empty((n, N_ACTIONS), dtype=np.int32)
    rewards = np.empty((n, N_ACTIONS))
    base_reward = np.minimum(cp / cp_nom, 1.0)
    if win_bonus:
        base_reward = base_reward + np.where(
            base_reward >= win_threshold, win_bonus, 0.0)

    ids = np.arange(n)
    ig, ip, io = np.unravel_index(ids, shape)
    for action in range(N_ACTIONS):
        dy, dp, dr = ACTION_DELTAS[Action(action)]
        # one lattice cell per action: on the default 1-unit grid this is
        # exactly the environment's one-unit move
        jg = ig + int(np.sign(dy))
        jp = ip + int(np.sign(dp))
        jo = io + int(np.sign(dr))
        inside = ((jg >= 0) & (jg < shape[0]) & (jp >= 0) & (jp < shape[1])
                  & (jo >= 0) & (jo < shape[2]))
        cand = np.where(inside,
                        (np.clip(jg, 0, shape[0] - 1) * shape[1]
                         + np.clip(jp, 0, shape[1] - 1)) * shape[2]
                        + np.clip(jo, 0, shape[2] - 1),
                        ids)
        # revoke when off the box, or when the candidate's violation
        # exceeds the current state's (new or worsened)
        worsens = excess[cand] > excess[ids] + 1e-12
        revoked = (~inside) | worsens
        successors[:, action] = np.where(revoked, ids, cand)
        rewards[:, action] = np.where(revoked, penalty,
                                      base_reward[successors[:, action]])
    return SliceModel(wind_speed=wind, successors=successors, rewards=rewards,
                      cp=cp, forbidden=forbidden)


def value_iteration(model: SliceModel, gamma: float = DEFAULT_GAMMA,
                    epsilon: float = DEFAULT_EPSILON,
                    return_deltas: bool = False):
    """Synchronous Bellman sweeps until the max update falls below
    `epsilon`; deterministic transitions make each backup a single lookup."""
    if epsilon <= 0 or not 0 <= gamma < 1:
        raise ValueError("need epsilon > 0 and gamma in [0, 1)")
    v = np.zeros(model.successors.shape[0])
    deltas = []
    while True:
        q = model.rewards + gamma * v[model.successors]
        v_new = q.max(axis=1)
        delta = float(np.abs(v_new - v).max())
        deltas.append(delta)
        v = v_new
        if delta < epsilon:
            break
    return (v, deltas) if return_deltas else v


def extract_policy(model: SliceModel, v: np.ndarray,
                   gamma: float = DEFAULT_GAMMA) -> np.ndarray:
    """Greedy action per state; np.argmax keeps the lowest index on ties."""
    q = model.rewards + gamma * v[model.successors]
    return q.argmax(axis=1).astype(np.int8)


@dataclass
class ViPolicy:
    """Stacked per-wind-slice policies with the grid metadata needed to
    snap continuous states."""

    grid: GridSpec
    policy: np.ndarray   # (n_wind, n_states) int8
    values: np.ndarray   # (n_wind, n_states)
    turbine_hash: str
    gamma: float

    def act(self, state) -> int:
        """Greedy table lookup at the nearest grid node; wind speeds off
        the axis are clamped to it."""
        iw, sid = self.grid.snap_state(state.wind_speed,
                                       state.yaw_misalignment, state.pitch,
                                       state.rotor_speed)
        return int(self.policy[iw, sid])

    def save(self, path):
        path = Path(path)
        meta = {"turbine": self.turbine_hash, "gamma": self.gamma,
                "grid": self.grid.key(), "n_wind": len(self.grid.wind_axis),
                "n_states": self.grid.n_states}
        np.savez_compressed(path, policy=self.policy, values=self.values,
                            meta=json.dumps(meta))

    @classmethod
    def load(cls, path, grid: GridSpec, turbine_hash: str):
        blob = np.load(path, allow_pickle=False)
        meta = json.loads(str(blob["meta"]))
        if meta["turbine"] != turbine_hash or meta["grid"] != grid.key():
            raise ValueError("stale policy cache: grid or turbine changed")
        return cls(grid=grid, policy=blob["policy"], values=blob["values"],
                   turbine_hash=turbine_hash, gamma=meta["gamma"])


def solve(cfg: RotorConfig, cp_nom: float, grid: GridSpec | None = None,
          gamma: float = DEFAULT_GAMMA, epsilon: float = DEFAULT_EPSILON,
          win_bonus: float = 0.0, use_cache: bool = True,
          cache_dir=None) -> ViPolicy:
    """Solve every wind slice (independent problems under the
    wind-constant assumption) and stack the policies."""
    grid = grid or GridSpec()
    cache_path = None
    thash = cfg.config_hash()
    if use_cache:
        cdir = Path(cache_dir) if cache_dir is not None else default_cache_dir()
        cdir.mkdir(parents=True, exist_ok=True)
        tag = f"vi_{thash[:16]}_{grid.key()}_g{gamma}_b{win_bonus}"
        cache_path = cdir / f"{tag}.npz"
        if cache_path.exists():
            try:
                return ViPolicy.load(cache_path, grid, thash)
            except ValueError:
                cache_path.unlink()

    winds = grid.wind_axis
    policy = np.empty((len(winds), grid.n_states), dtype=np.int8)
    values = np.empty((len(winds), grid.n_states))
    for iw, w in enumerate(winds):
        model = build_slice(grid, cfg, float(w), cp_nom, win_bonus=win_bonus)
        v = value_iteration(model, gamma=gamma, epsilon=epsilon)
        policy[iw] = extract_policy(model, v, gamma=gamma)
        values[iw] = v
    result = ViPolicy(grid=grid, policy=policy, values=values,
                      turbine_hash=thash, gamma=gamma)
    if cache_path is not None:
        result.save(cache_path)
    return result

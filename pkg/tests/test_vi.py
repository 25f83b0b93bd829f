import itertools
import math

import numpy as np
import pytest

from windlab import vi
from windlab.env import Action, TurbineState
from windlab.vi import GridSpec, SliceModel, build_slice, extract_policy, value_iteration

COARSE = GridSpec(gamma_step=5.0, pitch_step=5.0, omega_step=2.0)


@pytest.fixture(scope="module")
def coarse_slice(turbine, cp_nom):
    return build_slice(COARSE, turbine, 8.0, cp_nom)


def toy_model(rng, n_states=4, n_actions=7):
    succ = rng.integers(0, n_states, size=(n_states, n_actions)).astype(np.int32)
    rew = rng.uniform(-1, 1, size=(n_states, n_actions))
    return SliceModel(wind_speed=0.0, successors=succ, rewards=rew,
                      cp=np.zeros(n_states), forbidden=np.zeros(n_states, bool))


def policy_return(model, policy, gamma):
    """Exact value of a stationary policy on a deterministic MDP via the
    linear system v = r_pi + gamma P_pi v."""
    n = model.successors.shape[0]
    idx = np.arange(n)
    r = model.rewards[idx, policy]
    p = np.zeros((n, n))
    p[idx, model.successors[idx, policy]] = 1.0
    return np.linalg.solve(np.eye(n) - gamma * p, r)


def brute_force_optimum(model, gamma):
    """Best discounted return per state over every stationary policy."""
    n, a = model.successors.shape
    best = np.full(n, -np.inf)
    for combo in itertools.product(range(a), repeat=n):
        v = policy_return(model, np.array(combo), gamma)
        best = np.maximum(best, v)
    return best


# ---------------------------------------------------------------------------
# value iteration core


def test_single_absorbing_state_geometric_series():
    model = SliceModel(wind_speed=0.0,
                       successors=np.zeros((1, 7), dtype=np.int32),
                       rewards=np.full((1, 7), 1.0),
                       cp=np.zeros(1), forbidden=np.zeros(1, bool))
    v = value_iteration(model, gamma=0.5, epsilon=1e-12)
    assert v[0] == pytest.approx(2.0, abs=1e-10)


def test_gamma_zero_is_myopic():
    rng = np.random.default_rng(0)
    model = toy_model(rng)
    v = value_iteration(model, gamma=0.0, epsilon=1e-12)
    assert np.allclose(v, model.rewards.max(axis=1), atol=1e-12)


def test_toy_mdps_match_exhaustive_enumeration():
    rng = np.random.default_rng(42)
    for _ in range(20):
        n = int(rng.integers(2, 5))
        model = toy_model(rng, n_states=n)
        v = value_iteration(model, gamma=0.95, epsilon=1e-10)
        policy = extract_policy(model, v, gamma=0.95)
        achieved = policy_return(model, policy, 0.95)
        optimal = brute_force_optimum(model, 0.95)
        assert np.allclose(achieved, optimal, atol=1e-6)


def test_sweep_contraction():
    rng = np.random.default_rng(3)
    model = toy_model(rng, n_states=4)
    _, deltas = value_iteration(model, gamma=0.95, epsilon=1e-9,
                                return_deltas=True)
    for d0, d1 in zip(deltas, deltas[1:]):
        assert d1 <= 0.95 * d0 + 1e-12


def test_extract_policy_moves_toward_higher_value():
    # two states differing in pitch only; state 1 holds all the reward
    succ = np.zeros((2, 7), dtype=np.int32)
    rew = np.zeros((2, 7))
    for a in range(7):
        succ[0, a] = 0
        succ[1, a] = 1
    succ[0, Action.PITCH_UP] = 1      # pitch up reaches the good state
    rew[0, Action.PITCH_UP] = 1.0
    rew[1, :] = 1.0
    model = SliceModel(0.0, succ, rew, np.zeros(2), np.zeros(2, bool))
    v = value_iteration(model, gamma=0.9, epsilon=1e-10)
    policy = extract_policy(model, v, gamma=0.9)
    assert policy[0] == Action.PITCH_UP


def test_extract_policy_tie_breaks_lowest_index():
    succ = np.zeros((1, 7), dtype=np.int32)
    rew = np.ones((1, 7))
    model = SliceModel(0.0, succ, rew, np.zeros(1), np.zeros(1, bool))
    v = value_iteration(model, gamma=0.5, epsilon=1e-10)
    policy = extract_policy(model, v, gamma=0.5)
    assert policy[0] == 0  # all actions equal-valued: a1 wins the tie


# ---------------------------------------------------------------------------
# turbine model construction


def test_hold_action_self_loops_everywhere(coarse_slice):
    n = coarse_slice.successors.shape[0]
    assert np.array_equal(coarse_slice.successors[:, Action.HOLD], np.arange(n))


def test_edge_actions_revoked(coarse_slice, cp_nom):
    grid = COARSE
    # state on the positive misalignment edge: yaw-up must self-loop at -2
    ig = len(grid.gamma_axis) - 1
    sid = grid.state_id(ig, 2, 3)
    assert coarse_slice.successors[sid, Action.YAW_UP] == sid
    assert coarse_slice.rewards[sid, Action.YAW_UP] == -2.0


def test_reward_at_best_state_bounded_by_one(coarse_slice):
    best = np.argmax(coarse_slice.cp)
    r = coarse_slice.rewards[best, Action.HOLD]
    assert 0.0 < r <= 1.0


def test_rewards_use_successor_cp(coarse_slice, cp_nom):
    grid = COARSE
    sid = grid.state_id(3, 4, 5)
    succ = coarse_slice.successors[sid, Action.RPM_UP]
    if succ != sid:
        expected = min(coarse_slice.cp[succ] / cp_nom, 1.0)
        assert coarse_slice.rewards[sid, Action.RPM_UP] == pytest.approx(expected)


def test_policy_avoids_revoked_transitions(turbine, cp_nom):
    model = build_slice(COARSE, turbine, 8.0, cp_nom)
    v = value_iteration(model, gamma=0.95, epsilon=1e-8)
    policy = extract_policy(model, v, gamma=0.95)
    ids = np.arange(len(policy))
    chosen_succ = model.successors[ids, policy]
    self_loop = chosen_succ == ids
    # a self-loop under the policy is legitimate only for HOLD (never revoked)
    assert np.all(policy[self_loop] == int(Action.HOLD))


def test_slice_solve_order_irrelevant(turbine, cp_nom):
    grid = GridSpec(gamma_step=10.0, pitch_step=10.0, omega_step=5.0,
                    wind_step=3.0)
    winds = list(grid.wind_axis)
    res_fwd = {}
    for w in winds:
        m = build_slice(grid, turbine, float(w), cp_nom)
        res_fwd[w] = value_iteration(m, epsilon=1e-8)
    for w in reversed(winds):
        m = build_slice(grid, turbine, float(w), cp_nom)
        assert np.array_equal(res_fwd[w], value_iteration(m, epsilon=1e-8))


# ---------------------------------------------------------------------------
# acting


def test_act_on_exact_grid_node(turbine, cp_nom, tmp_path):
    grid = GridSpec()
    policy = np.zeros((len(grid.wind_axis), grid.n_states), dtype=np.int8)
    iw, sid = grid.snap_state(8.0, -3.0, 2.0, 14.0)
    policy[iw, sid] = 4
    vp = vi.ViPolicy(grid=grid, policy=policy, values=np.zeros_like(policy, float),
                     turbine_hash="x", gamma=0.95)
    state = TurbineState(yaw=-3.0, pitch=2.0, rotor_speed=14.0,
                         wind_speed=8.0, wind_dir=0.0)
    assert vp.act(state) == 4


def test_act_clamps_wind_to_axis():
    grid = GridSpec()
    iw, _ = grid.snap_state(3.2, 0.0, 0.0, 13.0)
    assert grid.wind_axis[iw] == 4.0
    iw, _ = grid.snap_state(99.0, 0.0, 0.0, 13.0)
    assert grid.wind_axis[iw] == 13.0


def test_snap_midpoint_rounds_toward_interior():
    grid = GridSpec()
    ax = grid.gamma_axis  # -30 .. 30
    # -29.5 sits between -30 and -29: the interior node is -29
    assert ax[grid._snap(-29.5, ax)] == -29.0
    # +29.5 between 29 and 30: interior is 29
    assert ax[grid._snap(29.5, ax)] == 29.0
    # exact node stays put
    assert ax[grid._snap(-30.0, ax)] == -30.0


def test_policy_save_load_rejects_stale(tmp_path):
    grid = GridSpec(gamma_step=10.0, pitch_step=10.0, omega_step=5.0,
                    wind_step=3.0)
    policy = np.zeros((len(grid.wind_axis), grid.n_states), dtype=np.int8)
    vp = vi.ViPolicy(grid=grid, policy=policy,
                     values=np.zeros_like(policy, float),
                     turbine_hash="abc", gamma=0.95)
    path = tmp_path / "policy.npz"
    vp.save(path)
    loaded = vi.ViPolicy.load(path, grid, "abc")
    assert np.array_equal(loaded.policy, policy)
    with pytest.raises(ValueError):
        vi.ViPolicy.load(path, grid, "different-turbine")
    with pytest.raises(ValueError):
        vi.ViPolicy.load(path, GridSpec(), "abc")


def test_grid_id_mapping_bijective():
    grid = GridSpec(gamma_step=10.0, pitch_step=10.0, omega_step=5.0)
    seen = set()
    g, p, o = grid.shape
    for ig in range(g):
        for ip in range(p):
            for io in range(o):
                sid = grid.state_id(ig, ip, io)
                assert grid.unravel(sid) == (ig, ip, io)
                seen.add(sid)
    assert seen == set(range(grid.n_states))


def test_coarse_grid_rollouts_reach_grid_max(turbine, cp_nom):
    """Greedy policy rollouts inside the model reach >= 97.5% of the grid's
    best cp from random starts."""
    model = build_slice(COARSE, turbine, 8.0, cp_nom)
    v = value_iteration(model, gamma=0.95, epsilon=1e-8)
    policy = extract_policy(model, v, gamma=0.95)
    grid_max = model.cp[~model.forbidden].max()
    rng = np.random.default_rng(1)
    valid_ids = np.flatnonzero(~model.forbidden)
    for start in rng.choice(valid_ids, size=25, replace=False):
        sid = int(start)
        for _ in range(150):
            sid = int(model.successors[sid, policy[sid]])
        assert model.cp[sid] >= 0.975 * grid_max

"""Command-line interface.

Subcommands: `train` (fit a DDQN agent), `validate` (roll a trained or
tabular controller over a scenario), `compare` (the agents x scenarios
matrix with CSV/SVG output), `surface` (cp sweeps), `setpoints` (PID curve
derivation) and `wind` (scenario CSV export).  Every run is reproducible
from its seed; `compare --check` exits non-zero if the expected controller
ordering does not hold.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import bench, ddqn, nn, pid, vi
from .aero import (SweepSpec, cp_nominal, cp_surface, load_turbine_config,
                   reference_turbine)
from .env import TurbineEnv
from .wind import WindSeries, load_measured


def _turbine(args):
    if getattr(args, "turbine", None):
        return load_turbine_config(args.turbine)
    return reference_turbine()


def _make_env(cfg, cp_nom, mode="validation", dt=60.0):
    return TurbineEnv(cfg, cp_nom, mode=mode, dt=dt)


def _scenario(args, name=None) -> WindSeries:
    name = name or args.scenario
    if name.endswith(".csv"):
        return load_measured(name)
    return bench.build_scenario(name, seed=args.wind_seed,
                                n_steps=getattr(args, "n_steps", None))


def _load_agent(spec: str, cfg, cp_nom, cache_dir=None):
    """agent spec: 'uncontrolled', 'pid', 'vi', or a DDQN checkpoint path."""
    if spec == "uncontrolled":
        return bench.UncontrolledAgent(cfg)
    if spec == "pid":
        curves = pid.derive_setpoints(cfg)
        return pid.PidController(pid.tuned_gains(), curves)
    if spec == "vi":
        policy = vi.solve(cfg, cp_nom, cache_dir=cache_dir)
        return policy
    agent = ddqn.DdqnAgent(ddqn.optimized_hyperparams(), seed=0)
    agent.load(spec)
    return _GreedyWrapper(agent)


class _GreedyWrapper:
    def __init__(self, agent):
        self._agent = agent

    def act(self, state):
        return self._agent.act_greedy(state)


def cmd_train(args):
    cfg = _turbine(args)
    cpn = cp_nominal(cfg)
    hp = (ddqn.optimized_hyperparams() if args.hp_set == "optimized"
          else ddqn.arbitrary_hyperparams() if args.hp_set == "arbitrary"
          else ddqn.load_hyperparams(args.hp_set))
    env = _make_env(cfg, cpn, mode="train")
    agent, log = ddqn.train(env, hp, seed=args.seed,
                            target_rule=args.target_rule,
                            episodes=args.episodes)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    agent.save(out / "agent.ckpt")
    log.to_csv(out / "training_log.csv")
    wins = log.episode_wins
    print(f"trained {len(wins)} episodes, wins {sum(wins)}"
          f" ({log.wall_seconds / 60:.1f} min); saved to {out}")
    return 0


def cmd_validate(args):
    cfg = _turbine(args)
    cpn = cp_nominal(cfg)
    agent = _load_agent(args.agent, cfg, cpn)
    series = _scenario(args)
    env = _make_env(cfg, cpn, dt=args.dt)
    log, metrics = bench.run_validation(agent, series, env, seed=args.seed,
                                        dt=args.dt)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    log.to_csv(out / "episode_log.csv")
    (out / "metrics.json").write_text(json.dumps(metrics.__dict__, indent=2))
    bench.write_series_svg(out / "cp.svg", {"cp": log.cp}, y_label="cp")
    print(f"CCF {metrics.ccf:.2f}%  CF {metrics.cf:.2f}%  "
          f"yearly {metrics.yearly_production_wh / 1e6:.2f} MWh")
    return 0


def cmd_compare(args):
    cfg = _turbine(args)
    cpn = cp_nominal(cfg)
    agents = {}
    for spec in args.agents.split(","):
        name, _, value = spec.partition("=")
        agents[name] = _load_agent(value or name, cfg, cpn)
    scenarios = {}
    for name in args.scenarios.split(","):
        scenarios[name] = _scenario(args, name)
    result = bench.compare_agents(
        agents, scenarios, lambda: _make_env(cfg, cpn, dt=args.dt),
        seed=args.seed, dt=args.dt, out_dir=args.out)
    matrix = result.ccf_matrix()
    for (agent, scen), value in matrix.items():
        print(f"{agent:>14} | {scen:<12} | CCF {value:7.2f}%")
    if args.check:
        failures = _ordering_failures(matrix, list(agents), list(scenarios))
        for f in failures:
            print("CHECK FAILED:", f, file=sys.stderr)
        return 1 if failures else 0
    return 0


def _ordering_failures(matrix, agents, scenarios):
    """Expected ranking on every scenario: any ddqn > vi > pid >
    uncontrolled, for whichever of those agents are present."""
    order = [a for a in agents if a not in ("uncontrolled",)] + \
        [a for a in agents if a == "uncontrolled"]
    ranked = [a for a in ("ddqn", "vi", "pid", "uncontrolled") if a in
              [x.split("=")[0] for x in order]]
    failures = []
    for scen in scenarios:
        values = {a: matrix.get((a, scen), float("nan")) for a in ranked}
        for hi, lo in zip(ranked, ranked[1:]):
            if not values[hi] > values[lo]:
                failures.append(f"{scen}: CCF({hi})={values[hi]:.2f} !>"
                                f" CCF({lo})={values[lo]:.2f}")
    return failures


def cmd_surface(args):
    cfg = _turbine(args)
    axes = {"tsr": np.arange(3.0, 12.0 + 1e-9, args.tsr_step),
            "pitch": np.arange(-20.0, 20.0 + 1e-9, args.pitch_step),
            "yaw": np.arange(-30.0, 30.0 + 1e-9, args.yaw_step)}
    sweep_axes = [a for a in ("tsr", "pitch", "yaw") if a != args.fixed]
    sweep = SweepSpec(sweep_axes[0], axes[sweep_axes[0]],
                      sweep_axes[1], axes[sweep_axes[1]],
                      args.fixed, args.fixed_value,
                      wind_speed=args.wind_speed)
    surf = cp_surface(cfg, sweep)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    surf.to_csv(out)
    print(f"wrote {out} ({surf.cp.shape[0]}x{surf.cp.shape[1]} grid, "
          f"{(~surf.valid).sum()} invalid cells)")
    return 0


def cmd_setpoints(args):
    cfg = _turbine(args)
    curves = pid.derive_setpoints(cfg)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    curves.to_csv(out)
    print(f"wrote {out} ({len(curves.wind)} wind samples)")
    return 0


def cmd_wind(args):
    series = _scenario(args)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    series.to_csv(out)
    print(f"wrote {out} ({len(series)} steps, source {series.source})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="windlab",
                                     description=__doc__.split("\n")[0])
    parser.add_argument("--turbine", help="turbine config YAML "
                        "(default: bundled reference rotor)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a DDQN agent")
    p.add_argument("--hp-set", default="optimized",
                   help="optimized | arbitrary | path to YAML")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--episodes", type=int, default=None,
                   help="override episode count (testing)")
    p.add_argument("--target-rule", default="ddqn",
                   choices=["ddqn", "paper-literal"])
    p.add_argument("--out", default="runs/train")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("validate", help="roll one agent over one scenario")
    p.add_argument("agent", help="checkpoint path | vi | pid | uncontrolled")
    p.add_argument("scenario", help="narrow | wide | gusty | gusty-long | "
                   "steady | measured CSV path")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--wind-seed", type=int, default=0)
    p.add_argument("--n-steps", type=int, default=None)
    p.add_argument("--dt", type=float, default=60.0)
    p.add_argument("--out", default="runs/validate")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("compare", help="agents x scenarios CCF matrix")
    p.add_argument("--agents", default="vi,pid,uncontrolled",
                   help="comma list: name or name=checkpoint.ckpt")
    p.add_argument("--scenarios", default="narrow,wide,gusty")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--wind-seed", type=int, default=0)
    p.add_argument("--n-steps", type=int, default=None)
    p.add_argument("--dt", type=float, default=60.0)
    p.add_argument("--out", default="runs/compare")
    p.add_argument("--check", action="store_true",
                   help="exit non-zero unless ddqn > vi > pid > uncontrolled")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("surface", help="export a cp sweep CSV")
    p.add_argument("--fixed", default="tsr", choices=["tsr", "pitch", "yaw"])
    p.add_argument("--fixed-value", type=float, default=8.0)
    p.add_argument("--wind-speed", type=float, default=8.0)
    p.add_argument("--tsr-step", type=float, default=0.25)
    p.add_argument("--pitch-step", type=float, default=1.0)
    p.add_argument("--yaw-step", type=float, default=1.0)
    p.add_argument("--out", default="runs/surface.csv")
    p.set_defaults(func=cmd_surface)

    p = sub.add_parser("setpoints", help="derive PID setpoint curves")
    p.add_argument("--out", default="runs/setpoints.csv")
    p.set_defaults(func=cmd_setpoints)

    p = sub.add_parser("wind", help="export a wind scenario CSV")
    p.add_argument("scenario")
    p.add_argument("--wind-seed", type=int, default=0)
    p.add_argument("--n-steps", type=int, default=None)
    p.add_argument("--out", default="runs/wind.csv")
    p.set_defaults(func=cmd_wind)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

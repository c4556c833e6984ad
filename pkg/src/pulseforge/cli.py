"""Command line front end: calibrate, train, eval, bench.

All four commands share the same shape: resolve a layered config, run, and
leave a run directory containing a manifest plus byte-reproducible artifacts.
Exit codes: 0 success, 2 bad config, 3 numerical halt, 4 threshold miss in
--strict mode.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import subprocess
import sys
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .config import (
    PRESETS,
    ConfigError,
    config_hash,
    resolve_config,
    validate_config,
)
from .errors import NumericalError, QExplosionError
from .gates import PAULI_LABELS, target_2q
from .manifest import MANIFEST_NAME, ManifestError, RunManifest
from .pulses import PulseGrid, load_pulse, save_pulse
from .system import DriveChannel, SystemParams

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_STRICT = 4

Q_EXPLOSION_ADVICE = (
    "Q-values exploded past the stability guard. Typical causes are action "
    "windows that are too wide for the gate duration or too aggressive a "
    "learning rate; shrink env w_u/w_d, lower agent.lr, or set "
    "agent.td3.enabled = true and rerun."
)

_STRICT_CALIBRATION = {"drag": 0.999, "direct": 0.998, "echoed": 0.993}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pulseforge",
        description="Design and analyze microwave control pulses for transmon gates.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    specs = (
        ("calibrate", "calibrate an analytical pulse scheme"),
        ("train", "train a pulse-shaping agent"),
        ("eval", "evaluate a pulse or checkpoint"),
        ("bench", "compare propagation backends"),
    )
    for name, help_text in specs:
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument(
            "--config",
            action="append",
            default=[],
            metavar="PATH",
            help="TOML/JSON config; repeat to layer, later files win",
        )
        cmd.add_argument("--preset", choices=sorted(PRESETS), help="named base config")
        cmd.add_argument("--seed", type=int, default=None)
        cmd.add_argument("--out-dir", default=None)
        cmd.add_argument(
            "--strict",
            action="store_true",
            help="exit 4 when the run misses its fidelity threshold",
        )
        cmd.add_argument(
            "--deterministic",
            action="store_true",
            help="single-threaded execution regardless of --workers",
        )
        cmd.add_argument("--workers", type=int, default=1, metavar="N")
        if name == "train":
            cmd.add_argument("--resume", metavar="CHECKPOINT", default=None)
        if name == "bench":
            cmd.add_argument(
                "--single",
                action="store_true",
                help="time only the backend active in this process",
            )
    return parser


# -- shared plumbing ---------------------------------------------------------


def _resolve(args, command: str) -> dict:
    cfg = resolve_config(preset=args.preset, paths=args.config)
    if args.seed is not None:
        cfg["seed"] = args.seed
    cfg.setdefault("seed", 0)
    cfg["command"] = command
    return validate_config(cfg, command)


def _out_dir(args, cfg: dict, run_id: str) -> Path:
    env_dir = os.environ.get("PULSEFORGE_OUT")
    chosen = env_dir or args.out_dir or cfg.get("out_dir") or os.path.join("runs", run_id)
    path = Path(chosen)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_manifest(manifest: RunManifest, out: Path, allow_sibling: bool = False) -> Path:
    try:
        return manifest.write(out)
    except ManifestError:
        if not allow_sibling:
            raise
        # a resumed run legitimately extends a directory that already belongs
        # to its parent run; both manifests stay, each immutable under its name
        alt = out / f"manifest-{manifest.run_id}.json"
        if not alt.exists():
            payload = asdict(manifest)
            payload["seeds"] = list(manifest.seeds)
            payload["artifacts"] = list(manifest.artifacts)
            alt.write_text(json.dumps(payload, indent=1, sort_keys=True), encoding="utf-8")
        return alt


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(
        json.dumps(payload, indent=1, sort_keys=True, allow_nan=False),
        encoding="utf-8",
    )


def _write_csv(path: Path, run_id: str, header: list[str], rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# run: {run_id}\n")
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def _workers(args) -> int:
    if args.deterministic:
        return 1
    return max(1, args.workers)


# -- calibrate ---------------------------------------------------------------


def _calibrate_worker(payload):
    from .baselines import calibrate, direct_problem, drag_problem, echoed_problem

    scheme, kwargs, budget, seed = payload
    factory = {"drag": drag_problem, "echoed": echoed_problem, "direct": direct_problem}[
        scheme
    ]
    return calibrate(factory(**kwargs), budget=budget, seed=seed)


def cmd_calibrate(args) -> int:
    cfg = _resolve(args, "calibrate")
    cal = cfg["calibrate"]
    scheme = cal["scheme"]
    seed = int(cfg["seed"])
    restarts = int(cal.get("restarts", 1))
    budget = int(cal.get("budget", 300))

    kwargs: dict = {"duration_ns": float(cal.get("duration_ns", 248.9))}
    if scheme == "drag":
        kwargs["duration_ns"] = float(cal.get("duration_ns", 35.6))
        if "transmon" in cal:
            kwargs["transmon"] = int(cal["transmon"])
    for key in ("sigma_ns", "max_cr_amp", "pi_ticks"):
        if key in cal and (scheme != "drag" or key == "sigma_ns"):
            kwargs[key] = cal[key]

    manifest = RunManifest.create(
        "calibrate",
        cfg,
        seeds=range(seed, seed + restarts),
        artifacts=("report.json", "pulse.json"),
    )
    out = _out_dir(args, cfg, manifest.run_id)
    # claim the directory before spending any compute; a mismatched existing
    # manifest aborts here instead of clobbering another run's artifacts
    _write_manifest(manifest, out)

    payloads = [(scheme, kwargs, budget, s) for s in range(seed, seed + restarts)]
    n_workers = _workers(args)
    if n_workers > 1 and len(payloads) > 1:
        import multiprocessing as mp

        with mp.get_context("fork").Pool(min(n_workers, len(payloads))) as pool:
            results = pool.map(_calibrate_worker, payloads)
    else:
        results = [_calibrate_worker(p) for p in payloads]

    best = max(results, key=lambda r: r.fidelity)
    report = best.report_dict()
    report.update(
        run_id=manifest.run_id,
        config_hash=manifest.config_hash,
        all_fidelities=[float(r.fidelity) for r in results],
        best_seed=int(best.seed),
    )
    _write_json(out / "report.json", report)
    if best.pulse is None:
        raise NumericalError("calibration returned no pulse")
    save_pulse(best.pulse, out / "pulse.json")

    print(
        f"{scheme} @ {report['duration_ns']:g} ns: fidelity {best.fidelity:.6f} "
        f"(best of {restarts}), artifacts in {out}"
    )
    threshold = float(cal.get("threshold", _STRICT_CALIBRATION[scheme]))
    if args.strict and best.fidelity < threshold:
        print(f"strict: fidelity {best.fidelity:.6f} < {threshold}", file=sys.stderr)
        return EXIT_STRICT
    return EXIT_OK


# -- train -------------------------------------------------------------------


def _build_env(env_cfg: dict, seed: int):
    from .envs import ToyQuadraticEnv, preset_env_config, TransmonGateEnv

    env_cfg = dict(env_cfg)
    preset = env_cfg.pop("preset", None)
    if preset == "toy":
        return ToyQuadraticEnv(seed=seed), None
    if "grid_ticks" in env_cfg:
        ticks, segments = env_cfg.pop("grid_ticks")
        env_cfg["grid"] = PulseGrid.from_ticks(int(ticks), int(segments))
    if "drives" in env_cfg:
        env_cfg["drives"] = tuple(DriveChannel(d) for d in env_cfg["drives"])
    try:
        if preset is not None:
            config = preset_env_config(preset, **env_cfg)
        else:
            from .envs import EnvConfig

            config = EnvConfig(**env_cfg)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"env: {exc}") from exc
    return TransmonGateEnv(config, seed=seed), config


def _build_agent(agent_cfg: dict, state_dim: int, action_dim: int, action_scale, seed: int):
    from .rl import AgentConfig, DDPGAgent, TD3Config

    agent_cfg = dict(agent_cfg)
    td3_cfg = agent_cfg.pop("td3", None)
    if "hidden" in agent_cfg:
        agent_cfg["hidden"] = tuple(int(h) for h in agent_cfg["hidden"])
    try:
        td3 = TD3Config(**td3_cfg) if td3_cfg else TD3Config()
        config = AgentConfig(
            state_dim=state_dim, action_dim=action_dim, td3=td3, **agent_cfg
        )
        return DDPGAgent(config, action_scale=action_scale, seed=seed)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"agent: {exc}") from exc


def _previous_curve(resume_path: str) -> list[tuple[int, float, float, float, float]]:
    curve = Path(resume_path).parent / "learning_curve.csv"
    if not curve.exists():
        return []
    rows = []
    with open(curve, encoding="utf-8") as fh:
        for line in fh:
            if line.startswith("#") or line.startswith("episode"):
                continue
            ep, score, mean, lo, hi = line.strip().split(",")
            rows.append((int(ep), float(score), float(mean), float(lo), float(hi)))
    return rows


def cmd_train(args) -> int:
    from .rl.agent import DDPGAgent, train

    cfg = _resolve(args, "train")
    seed = int(cfg["seed"])
    train_cfg = cfg.get("train", {})
    episodes = int(train_cfg.get("episodes", 1000))
    window = int(train_cfg.get("curve_window", 3500))
    checkpoint_every = int(train_cfg.get("checkpoint_every", 0))

    env, env_config = _build_env(cfg.get("env", {}), seed)
    state_dim = env_config.state_dim if env_config is not None else env.state_dim
    action_dim = env_config.action_dim if env_config is not None else env.action_dim
    action_scale = env_config.action_windows() if env_config is not None else 1.0

    if args.resume:
        agent = DDPGAgent.load(args.resume)
        if agent.config.state_dim != state_dim:
            raise ConfigError(
                f"checkpoint expects {agent.config.state_dim}-dim states, env "
                f"produces {state_dim}; resume with the training config"
            )
        cfg["resume"] = str(args.resume)
    else:
        agent = _build_agent(cfg.get("agent", {}), state_dim, action_dim, action_scale, seed)

    # echo every resolved hyperparameter, not just the ones the user set
    cfg["resolved"] = {
        "agent": asdict(agent.config),
        "env": _env_dict(env_config),
        "train": {"episodes": episodes, "curve_window": window},
    }
    manifest = RunManifest.create(
        "train",
        cfg,
        seeds=(seed,),
        artifacts=("learning_curve.csv", "agent_final.npz", "agent_final.json"),
    )
    out = _out_dir(args, cfg, manifest.run_id)
    _write_manifest(manifest, out, allow_sibling=bool(args.resume))

    try:
        history = train(
            agent,
            env,
            episodes=episodes,
            out_dir=out,
            checkpoint_every=checkpoint_every,
            curve_window=window,
        )
    except QExplosionError as exc:
        print(f"numerical halt: {exc}\n{Q_EXPLOSION_ADVICE}", file=sys.stderr)
        return EXIT_NUMERICAL
    except NumericalError as exc:
        print(f"numerical halt: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL

    prev = _previous_curve(args.resume) if args.resume else []
    offset = prev[-1][0] + 1 if prev else 0
    rows = prev + [
        (int(e) + offset, s, m, lo, hi)
        for e, s, m, lo, hi in zip(
            history["episode"], history["score"], history["mean"],
            history["min"], history["max"],
        )
    ]
    _write_csv(
        out / "learning_curve.csv",
        manifest.run_id,
        ["episode", "fidelity", "mean", "min", "max"],
        rows,
    )

    best = max(history["score"]) if history["score"] else float("nan")
    tail_mean = history["mean"][-1] if history["mean"] else float("nan")
    print(
        f"trained {episodes} episodes (total {offset + episodes}): best {best:.6f}, "
        f"trailing mean {tail_mean:.6f}, artifacts in {out}"
    )
    threshold = train_cfg.get("threshold")
    if args.strict and threshold is not None and best < float(threshold):
        print(f"strict: best {best:.6f} < {threshold}", file=sys.stderr)
        return EXIT_STRICT
    return EXIT_OK


def _env_dict(env_config) -> dict:
    if env_config is None:
        return {"preset": "toy"}
    return {
        "target": env_config.target,
        "ticks": env_config.grid.ticks,
        "segments": env_config.grid.segments,
        "drives": [d.value for d in env_config.drives],
        "w_u": env_config.w_u,
        "w_d": env_config.w_d,
        "drift": env_config.drift,
        "drift_scale": env_config.drift_scale,
        "context": env_config.context,
        "state_dim": env_config.state_dim,
        "action_dim": env_config.action_dim,
    }


# -- eval ----------------------------------------------------------------------


def _eval_target(name: str) -> np.ndarray:
    if name == "identity":
        return np.eye(4, dtype=complex)
    return target_2q(name)


def cmd_eval(args) -> int:
    from .evalkit import DriftSpec, drift_sweep, noise_sweep, role_analysis
    from .metrics import corrected_fidelity, leakage, rotation_angles
    from .qutrit import DT_NS, TwoTransmonSim

    cfg = _resolve(args, "eval")
    ev = cfg["eval"]
    seed = int(cfg["seed"])
    analyses = list(ev.get("analyses", ["fidelity"]))
    p0 = SystemParams.default()

    if "pulse" in ev:
        pulse = load_pulse(ev["pulse"])
        target_name = ev.get("target") or pulse.metadata.get("target")
        if target_name is None:
            raise ConfigError("eval.target: required when the pulse names none")
    else:
        from .rl.agent import DDPGAgent

        agent = DDPGAgent.load(ev["checkpoint"])
        env, env_config = _build_env(ev.get("env", {}), seed)
        if env_config is None or agent.config.state_dim != env_config.state_dim:
            raise ConfigError(
                "eval.env: checkpoint evaluation needs the training env config"
            )
        state = env.reset(seed=seed)
        done = False
        while not done:
            state, _, done = env.step(agent.act(state, noise=False))
        pulse = env.pulse()
        target_name = ev.get("target", env_config.target)

    target = _eval_target(str(target_name))
    artifacts: list[str] = ["metrics.json"]
    if "angles" in analyses:
        artifacts.append("angles.csv")
    if "noise" in analyses:
        artifacts += ["noise.csv", "noise_samples.jsonl"]
    if "drift" in analyses:
        kind = ev.get("drift", {}).get("kind", "all")
        artifacts += [f"drift_{kind}_bins.csv", f"drift_{kind}_samples.jsonl"]
    if "roles" in analyses:
        artifacts.append("roles.csv")
    manifest = RunManifest.create("eval", cfg, seeds=(seed,), artifacts=artifacts)
    out = _out_dir(args, cfg, manifest.run_id)
    _write_manifest(manifest, out)

    sim = TwoTransmonSim(p0, tuple(pulse.amplitudes))
    if {"angles", "roles"} & set(analyses):
        prop, cums = sim.propagate_cumulative(pulse)
        u = prop.matrix
    else:
        prop = sim.propagate(pulse)
        cums = None
        u = prop.matrix

    metrics_payload: dict = {
        "run_id": manifest.run_id,
        "target": str(target_name),
        "duration_ns": pulse.grid.ticks * DT_NS,
        "segments": pulse.grid.segments,
        "unitarity_defect": float(prop.unitarity_defect),
    }
    if "fidelity" in analyses or "leakage" in analyses:
        metrics_payload["fidelity"] = float(corrected_fidelity(u, target))
        metrics_payload["leakage"] = float(leakage(u))

    if "angles" in analyses:
        times = (np.arange(cums.shape[0]) + 1) * DT_NS
        trace = rotation_angles(cums, times_ns=times)
        header = ["time_ns"] + [
            f"theta_{a.lower()}{b.lower()}" for a in PAULI_LABELS for b in PAULI_LABELS
        ]
        rows = [
            [t] + [trace.theta[k, i, j] for i in range(4) for j in range(4)]
            for k, t in enumerate(trace.times_ns)
        ]
        _write_csv(out / "angles.csv", manifest.run_id, header, rows)

    if "noise" in analyses:
        noise_cfg = ev.get("noise", {})
        sigmas = [float(s) for s in noise_cfg.get("sigmas", (0.0, 0.01, 0.02, 0.03))]
        samples = int(noise_cfg.get("samples", 50))
        results = noise_sweep(pulse, target, sigmas, samples=samples, p0=p0, seed=seed)
        _write_csv(
            out / "noise.csv",
            manifest.run_id,
            ["sigma", "mean_fidelity", "std_fidelity", "sem", "samples"],
            [[r.sigma, r.mean, r.std, r.sem, len(r.fidelities)] for r in results],
        )
        with open(out / "noise_samples.jsonl", "w", encoding="utf-8") as fh:
            for r in results:
                fh.write(
                    json.dumps({"sigma": r.sigma, "fidelities": r.fidelities.tolist()})
                    + "\n"
                )
        metrics_payload["noise"] = {str(r.sigma): r.mean for r in results}

    if "drift" in analyses:
        drift_cfg = dict(ev.get("drift", {}))
        spec = DriftSpec(**drift_cfg)
        table = drift_sweep(pulse, spec, target=target, p0=p0, seed=seed)
        table.save(out, stem="drift")

    if "roles" in analyses:
        ra = role_analysis(pulse, target, p0=p0)
        _write_csv(
            out / "roles.csv",
            manifest.run_id,
            [
                "time_ns",
                "s_lin_full",
                "s_lin_removed",
                "control_fidelity_full",
                "control_fidelity_removed",
            ],
            zip(
                ra.times_ns,
                ra.s_lin_full,
                ra.s_lin_removed,
                ra.control_fidelity_full,
                ra.control_fidelity_removed,
            ),
        )
        metrics_payload["role_deviation"] = {
            "entropy": ra.max_entropy_deviation,
            "control_fidelity": ra.max_control_deviation,
        }

    _write_json(out / "metrics.json", metrics_payload)

    line = ", ".join(
        f"{k} {metrics_payload[k]:.6g}"
        for k in ("fidelity", "leakage")
        if k in metrics_payload
    )
    print(f"eval of {target_name}: {line or 'analysis tables written'}; artifacts in {out}")
    threshold = ev.get("threshold")
    if (
        args.strict
        and threshold is not None
        and metrics_payload.get("fidelity", 1.0) < float(threshold)
    ):
        print(
            f"strict: fidelity {metrics_payload['fidelity']:.6f} < {threshold}",
            file=sys.stderr,
        )
        return EXIT_STRICT
    return EXIT_OK


# -- bench ---------------------------------------------------------------------


def _bench_once() -> dict:
    """Time propagation in the current process (current backend)."""
    from . import backend
    from .qutrit import TwoTransmonSim
    from .pulses import PwcPulse

    rng = np.random.default_rng(0)
    grid = PulseGrid.from_ticks(1120, 20)
    amps = {
        DriveChannel.U01: rng.uniform(-0.5, 0.5, 20) + 1j * rng.uniform(-0.5, 0.5, 20),
        DriveChannel.D1: 0.1 * (rng.uniform(-1, 1, 20) + 1j * rng.uniform(-1, 1, 20)),
    }
    pulse = PwcPulse(grid, amps)
    sim = TwoTransmonSim(SystemParams.default(), tuple(amps))
    sim.propagate(pulse)  # warm the jit cache before timing
    times = []
    for _ in range(5):
        t0 = time.perf_counter()
        sim.propagate(pulse)
        times.append(time.perf_counter() - t0)
    best = min(times)
    return {
        "backend": "numba" if backend.USE_NUMBA else "numpy",
        "seconds_per_propagation": best,
        "ticks_per_second": grid.ticks / best,
    }


def cmd_bench(args) -> int:
    if args.single:
        print(json.dumps(_bench_once()))
        return EXIT_OK

    cfg = _resolve(args, "bench")
    manifest = RunManifest.create("bench", cfg, seeds=(0,), artifacts=("bench.json",))
    out = _out_dir(args, cfg, manifest.run_id)
    _write_manifest(manifest, out)
    rows = {}
    for choice in ("numba", "numpy"):
        env = dict(os.environ, PULSEFORGE_BACKEND=choice)
        proc = subprocess.run(
            [sys.executable, "-m", "pulseforge.cli", "bench", "--single"],
            env=env,
            capture_output=True,
            text=True,
        )
        if proc.returncode != 0:
            if choice == "numba":
                print("numba backend unavailable; skipping", file=sys.stderr)
                continue
            print(proc.stderr, file=sys.stderr)
            return EXIT_NUMERICAL
        rows[choice] = json.loads(proc.stdout.strip().splitlines()[-1])

    payload = {"run_id": manifest.run_id, "results": rows}
    if {"numba", "numpy"} <= rows.keys():
        payload["speedup"] = (
            rows["numpy"]["seconds_per_propagation"]
            / rows["numba"]["seconds_per_propagation"]
        )
    _write_json(out / "bench.json", payload)
    for choice, row in rows.items():
        print(
            f"{choice}: {row['seconds_per_propagation'] * 1e3:.2f} ms per 1120-tick "
            f"propagation ({row['ticks_per_second']:.0f} ticks/s)"
        )
    if "speedup" in payload:
        print(f"numba speedup: {payload['speedup']:.1f}x")
    return EXIT_OK


# -- entry ---------------------------------------------------------------------


_COMMANDS = {
    "calibrate": cmd_calibrate,
    "train": cmd_train,
    "eval": cmd_eval,
    "bench": cmd_bench,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ManifestError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except QExplosionError as exc:
        print(f"numerical halt: {exc}\n{Q_EXPLOSION_ADVICE}", file=sys.stderr)
        return EXIT_NUMERICAL
    except NumericalError as exc:
        print(f"numerical halt: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())

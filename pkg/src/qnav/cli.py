"""Command-line entry point: ``qnav {train,eval,attack,bus-demo,bench}``.

Exit codes: 0 success, 1 runtime failure, 2 configuration or input error.
Log verbosity comes from ``QNAV_LOG`` (a logging level name, default WARNING).
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import multiprocessing
import os
import platform
import socket
import sys
import tempfile
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import __version__
from .adversarial import StructuredAttack, degradation_percent, pgd_perturb, robust_training_step, structured_attack
from .bench import run_bench, sample_frames
from .config import ATTACK_NAMES, ExperimentConfig, load_config
from .environment import Action, reset, step
from .errors import ConfigError, QnavError
from .fusion import AttentionWeights, load_checkpoint, pack_frames, save_checkpoint, unpack_frames
from .navq import Policy, action_distribution
from .securebus import (
    MsgType,
    Role,
    SensorCredentials,
    SessionState,
    get_suite,
    handshake_finish,
    handshake_hello,
    handshake_respond,
    load_registry,
    open_frame,
    recv_frame,
    recv_frame_bytes,
    save_registry,
    seal_frame,
    send_frame,
)
from .securebus.registry import registry_from_json, registry_to_json
from .securebus.session import close_frame
from .training import episode_seeds, evaluate, random_baseline, train

log = logging.getLogger("qnav")

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2

# seed streams; distinct from the training streams 1 and 2
EVAL_STREAM = 3


class InputError(Exception):
    """Bad command-line input that is not part of the config file (exit 2)."""


# -- helpers ------------------------------------------------------------------------------

def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(out: Path, command: str, cfg: ExperimentConfig, extra: Optional[Dict] = None) -> None:
    doc = {
        "command": command,
        "seed": cfg.seed,
        "config_sha256": cfg.digest(),
        "config": cfg.to_dict(),
        "versions": {
            "qnav": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "platform": platform.platform(),
        },
    }
    doc.update(extra or {})
    (out / "manifest.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def initial_policy(cfg: ExperimentConfig) -> Policy:
    f = cfg.fusion
    return Policy.initial(f.depth, f.num_qubits, seed=cfg.seed, init_scale=f.init_scale, dims=f.dims_map,
                          beta=cfg.navq.beta)


def checkpoint_policy(cfg: ExperimentConfig, path: Optional[str]) -> Policy:
    """Load a checkpoint and check it against the configured shapes."""
    if path is None:
        raise InputError("--checkpoint is required for this command")
    try:
        circuit, attention = load_checkpoint(path)
    except OSError as exc:
        raise InputError(f"cannot read checkpoint {path}: {exc.strerror}") from None
    except ValueError as exc:
        raise InputError(f"{path}: {exc}") from None
    f = cfg.fusion
    if (circuit.depth, circuit.num_qubits) != (f.depth, f.num_qubits):
        raise InputError(f"checkpoint has depth {circuit.depth} and {circuit.num_qubits} qubits; config expects "
                         f"depth {f.depth} and {f.num_qubits} qubits")
    if attention.dims != f.dims_map:
        raise InputError("checkpoint attention widths do not match fusion.dims")
    return Policy(circuit, attention, cfg.navq.beta)


def eval_seeds(cfg: ExperimentConfig) -> np.ndarray:
    return episode_seeds(cfg.seed, cfg.adversarial.eval_episodes, EVAL_STREAM)


# -- commands -------------------------------------------------------------------------------

def cmd_train(cfg: ExperimentConfig, out: Path, args) -> int:
    policy = initial_policy(cfg)
    train_cfg = cfg.train_config()
    lam = cfg.adversarial.lam
    robust = None
    if lam > 0:
        attack = cfg.adversarial.attack(seed=cfg.seed)
        robust = lambda p, batch: robust_training_step(p, batch, lam, attack, train_cfg)  # noqa: E731

    def progress(record, _policy):
        log.info("update %d mean_return %.3f loss %.5f", record.index, record.mean_return, record.policy_loss)

    policy, history = train(policy, cfg.environment, train_cfg, cfg.navq.episodes, robust=robust,
                            on_update=progress)
    write_csv(out / "metrics.csv", ["update", "episodes", "mean_return", "policy_loss", "adv_loss"],
              [(r.index, r.episodes, r.mean_return, r.policy_loss, r.adv_loss) for r in history])
    # wall clock lives apart from metrics.csv so that file stays byte-identical across reruns
    write_csv(out / "timings.csv", ["update", "wall_ms"], [(r.index, round(r.wall_ms, 3)) for r in history])
    save_checkpoint(out / "checkpoint.txt", policy.circuit, policy.attention)
    write_manifest(out, "train", cfg, {"checkpoint_sha256": _sha256_file(out / "checkpoint.txt")})
    print(f"trained {len(history)} updates; final mean return {history[-1].mean_return:.3f}; wrote {out}")
    return EXIT_OK


def cmd_eval(cfg: ExperimentConfig, out: Path, args) -> int:
    policy = checkpoint_policy(cfg, args.checkpoint)
    seeds = eval_seeds(cfg)
    greedy = evaluate(policy, cfg.environment, seeds)
    rand = random_baseline(cfg.environment, seeds)
    write_csv(out / "eval.csv", ["episode", "env_seed", "greedy_return", "random_return"],
              [(i, int(s), float(g), float(r)) for i, (s, g, r) in enumerate(zip(seeds, greedy, rand))])
    write_manifest(out, "eval", cfg, {"checkpoint_sha256": _sha256_file(args.checkpoint)})
    print(f"greedy mean {greedy.mean():.3f} random mean {rand.mean():.3f} over {len(seeds)} episodes")
    return EXIT_OK


def _attack_hook(name: str, epsilon: float, cfg: ExperimentConfig):
    if epsilon == 0:
        return None
    if name == "pgd":
        attack = cfg.adversarial.attack(epsilon, seed=cfg.seed)
        return lambda policy, frames: pgd_perturb(policy, frames, attack).frames
    kind = StructuredAttack(name)
    return lambda policy, frames: structured_attack(frames, kind, epsilon).frames


def cmd_attack(cfg: ExperimentConfig, out: Path, args) -> int:
    attacks = cfg.adversarial.eval_attacks
    if args.attacks:
        attacks = tuple(a.strip() for a in args.attacks.split(",") if a.strip())
        unknown = [a for a in attacks if a not in ATTACK_NAMES]
        if unknown:
            raise InputError(f"unknown attack {unknown[0]!r}; choose from {list(ATTACK_NAMES)}")
    epsilons = cfg.adversarial.eval_epsilons
    if args.epsilons:
        try:
            epsilons = tuple(float(e) for e in args.epsilons.split(","))
        except ValueError:
            raise InputError(f"--epsilons must be comma-separated numbers, got {args.epsilons!r}") from None
        if any(not 0 <= e <= 1 for e in epsilons):
            raise InputError("--epsilons must lie in [0, 1]")
    policy = checkpoint_policy(cfg, args.checkpoint)
    seeds = eval_seeds(cfg)
    clean = float(evaluate(policy, cfg.environment, seeds).mean())
    rows = []
    for name in attacks:
        for eps in epsilons:
            hook = _attack_hook(name, eps, cfg)
            attacked = clean if hook is None else float(evaluate(policy, cfg.environment, seeds, observe=hook).mean())
            rows.append((name, eps, clean, attacked, degradation_percent(clean, attacked)))
            log.info("%s eps=%g attacked %.3f", name, eps, attacked)
    write_csv(out / "attack_report.csv",
              ["attack", "epsilon", "clean_mean_return", "attacked_mean_return", "degradation_pct"], rows)
    write_manifest(out, "attack", cfg, {"checkpoint_sha256": _sha256_file(args.checkpoint)})
    for name, eps, _, attacked, deg in rows:
        print(f"{name:>13} eps={eps:<5g} return {attacked:9.3f} degradation {deg:7.2f}%")
    return EXIT_OK


def cmd_bench(cfg: ExperimentConfig, out: Path, args) -> int:
    ticks = args.ticks or cfg.bench.ticks
    frames = sample_frames(cfg.environment, ticks, cfg.seed)
    report = run_bench(initial_policy(cfg), frames, suite_id=cfg.securebus.suite_id, seed=cfg.seed,
                       budget_ms=cfg.bench.latency_budget_ms, sensor_id=cfg.securebus.sensor_id)
    rows = report.rows()
    write_csv(out / "bench.csv", ["stage", "p50_ms", "p99_ms", "mean_ms"],
              [(r["stage"], r["p50_ms"], r["p99_ms"], r["mean_ms"]) for r in rows])
    verdict = "PASS" if report.passed else "FAIL"
    write_manifest(out, "bench", cfg, {"bench": {"ticks": report.ticks, "p99_ms": report.total.p99_ms,
                                                  "budget_ms": report.budget_ms, "verdict": verdict}})
    for r in rows:
        print(f"{r['stage']:>10} p50 {r['p50_ms']:8.3f} ms  p99 {r['p99_ms']:8.3f} ms")
    print(f"{verdict}: p99 {report.total.p99_ms:.3f} ms against a {report.budget_ms:g} ms budget "
          f"(Q={report.num_qubits}, L={report.depth}, {report.ticks} ticks)")
    return EXIT_OK


# -- bus demo: sensor in this process, processor in a child process -----------------------

def _processor_main(address: str, registry_json: str, suite_id: int, seed: int, checkpoint_text: str,
                    beta: float, sign_frames: bool, conn) -> None:
    """Child process: authenticate the sensor, answer every sensor frame with an action."""
    from .fusion import parse_checkpoint

    try:
        circuit, attention = parse_checkpoint(checkpoint_text)
        policy = Policy(circuit, attention, beta)
        registry = registry_from_json(registry_json)
        suite = get_suite(suite_id, seed + 1)
        with socket.socket(socket.AF_UNIX, socket.SOCK_STREAM) as listener:
            listener.bind(address)
            listener.listen(1)
            conn.send("ready")
            sock, _ = listener.accept()
            with sock:
                session = SessionState(Role.PROCESSOR, sign_frames=sign_frames)
                response, session = handshake_respond(session, suite, recv_frame_bytes(sock), registry)
                send_frame(sock, response)
                served = 0
                while True:
                    frame = recv_frame(sock)
                    if frame.msg_type is MsgType.CLOSE:
                        break
                    frames = unpack_frames(open_frame(session, frame))
                    probs = action_distribution(policy, frames)
                    send_frame(sock, seal_frame(session, bytes([int(np.argmax(probs))])))
                    served += 1
        conn.send(("ok", served))
    except Exception as exc:  # reported to the parent, which owns the exit code
        try:
            conn.send(("error", f"{type(exc).__name__}: {exc}"))
        except OSError:
            pass


def cmd_bus_demo(cfg: ExperimentConfig, out: Path, args) -> int:
    bus = cfg.securebus
    suite = get_suite(bus.suite_id, cfg.seed)
    creds = SensorCredentials.generate(suite, bus.sensor_id)
    registry = {bus.sensor_id: creds.record()}
    save_registry(out / "registry.json", registry)
    if bus.registry_path is not None:
        try:
            registry = load_registry(bus.registry_path)
        except OSError as exc:
            raise InputError(f"securebus.registry_path: cannot read {bus.registry_path}: {exc.strerror}") from None
    policy = checkpoint_policy(cfg, args.checkpoint) if args.checkpoint else initial_policy(cfg)
    from .fusion import dump_checkpoint

    ctx = multiprocessing.get_context("spawn")
    rows = []
    with tempfile.TemporaryDirectory() as tmp:
        address = os.path.join(tmp, "bus.sock")
        parent, child = ctx.Pipe()
        proc = ctx.Process(target=_processor_main, daemon=True,
                           args=(address, registry_to_json(registry), bus.suite_id, cfg.seed,
                                 dump_checkpoint(policy.circuit, policy.attention), cfg.navq.beta,
                                 bus.sign_frames, child))
        proc.start()
        try:
            if not parent.poll(60):
                raise RuntimeError("processor did not start")
            first = parent.recv()
            if first != "ready":
                raise RuntimeError(f"processor failed: {first[1]}")
            with socket.socket(socket.AF_UNIX, socket.SOCK_STREAM) as sock:
                sock.connect(address)
                session = SessionState(Role.SENSOR, bus.sensor_id, sign_frames=bus.sign_frames)
                send_frame(sock, handshake_hello(session, suite, creds.sig_sk))
                try:
                    handshake_finish(session, recv_frame_bytes(sock), creds.kem_sk)
                except EOFError:
                    raise RuntimeError("processor closed the connection during the handshake") from None
                result = reset(cfg.environment, cfg.seed)
                total = 0.0
                for tick in range(bus.frames):
                    if result.done:
                        break
                    frame = seal_frame(session, pack_frames(result.frames))
                    send_frame(sock, frame)
                    action = Action(open_frame(session, recv_frame(sock))[0])
                    result = step(result.state, action)
                    total += result.reward
                    rows.append((tick, frame.sequence, len(frame), action.name, result.reward))
                send_frame(sock, close_frame(session))
            proc.join(60)
            status = parent.recv() if parent.poll(5) else ("error", "no status from processor")
        finally:
            if proc.is_alive():
                proc.terminate()
    if status[0] != "ok":
        raise RuntimeError(f"processor failed: {status[1]}")
    write_csv(out / "bus_demo.csv", ["tick", "sequence", "frame_bytes", "action", "reward"], rows)
    write_manifest(out, "bus-demo", cfg, {"suite_id": bus.suite_id, "frames": len(rows)})
    print(f"processor pid {proc.pid} served {status[1]} authenticated frames; episode return {total:.3f}")
    return EXIT_OK


COMMANDS = {
    "train": cmd_train,
    "eval": cmd_eval,
    "attack": cmd_attack,
    "bus-demo": cmd_bus_demo,
    "bench": cmd_bench,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qnav", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"qnav {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON experiment config (defaults apply when omitted)")
        p.add_argument("--seed", type=int, help="overrides the config seed")
        p.add_argument("--out", help="output directory (overrides output_dir)")
        p.add_argument("--checkpoint", help="checkpoint to evaluate, attack or serve")
        if name == "attack":
            p.add_argument("--attacks", help=f"comma-separated subset of {','.join(ATTACK_NAMES)}")
            p.add_argument("--epsilons", help="comma-separated attack strengths")
        if name == "bench":
            p.add_argument("--ticks", type=int, help="overrides bench.ticks")
    return parser


def _configure_logging() -> None:
    level = os.environ.get("QNAV_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def main(argv: Optional[List[str]] = None) -> int:
    _configure_logging()
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config) if args.config else ExperimentConfig()
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("seed", f"must be >= 0, got {args.seed}")
            cfg = cfg.with_seed(args.seed)
        if args.command == "bench" and args.ticks is not None and args.ticks < 1:
            raise ConfigError("bench.ticks", "must be >= 1")
        out = Path(args.out or cfg.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](cfg, out, args)
    except (ConfigError, InputError) as exc:
        print(f"qnav: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (QnavError, RuntimeError, ValueError, OSError) as exc:
        print(f"qnav: runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        log.debug("traceback", exc_info=True)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

"""``fpg`` command line: ``verify``, ``train`` and ``variance``.

Exit codes: 0 success, 1 verification failure, 2 bad configuration,
3 training divergence.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import datetime as _dt
import json
import logging
import os
import subprocess
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import verification
from .config import ConfigError, RunConfig, config_to_dict, load_config
from .core_math import RngStream, SpdFactor
from .critic import HybridCritic, QuadricAtom, RbfAtom, TrigAtom
from .estimators import ORDERS, estimator_variance
from .policy import GaussianPolicy
from .trainer import METHODS, DivergenceError, run

EXIT_OK, EXIT_VERIFY, EXIT_CONFIG, EXIT_DIVERGED = 0, 1, 2, 3
OUT_ENV = "FPG_OUT_DIR"

log = logging.getLogger("fpg")


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def git_describe() -> str:
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty", "--tags"],
            cwd=Path(__file__).resolve().parent,
            capture_output=True,
            text=True,
            timeout=10,
        )
    except (OSError, subprocess.SubprocessError):
        return "unknown"
    return out.stdout.strip() or "unknown"


def _out_dir(flag: str | None) -> Path:
    root = Path(flag or os.environ.get(OUT_ENV) or ".")
    root.mkdir(parents=True, exist_ok=True)
    return root


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _write_csv_text(path: Path, text: str) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(text)


def _load(path: str | None) -> RunConfig:
    return RunConfig() if path is None else load_config(path)


# ---------------------------------------------------------------------------
# verify


def cmd_verify(args) -> int:
    try:
        results = verification.run_checks(args.only)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        with open(out, "w", newline="") as fh:
            verification.write_report(results, fh)
    failed = [r for r in results if not r.passed]
    for r in results:
        print(f"{r.status.upper():4s} {r.name}  max_error={r.max_error:.3e}  tol={r.tolerance:.1e}")
    if failed:
        print(f"{len(failed)} check(s) failed:", file=sys.stderr)
        for r in failed:
            print(f"  {r.name}: {r.max_error!r} > {r.tolerance!r}", file=sys.stderr)
        return EXIT_VERIFY
    return EXIT_OK


# ---------------------------------------------------------------------------
# train


def _train_one(job) -> dict:
    """Run one seed; returns a manifest dict. Top-level so it pickles."""
    cfg, seed, out_dir = job
    trainer = dataclasses.replace(cfg.trainer, seed=seed)
    env = dataclasses.replace(cfg.env, seed=seed)
    stem = f"{trainer.method}_seed{seed}"
    curve_path = out_dir / f"curve_{stem}.csv"
    manifest_path = out_dir / f"manifest_{stem}.json"
    snapshot = config_to_dict(dataclasses.replace(cfg, trainer=trainer, env=env))
    manifest = {
        "command": "train",
        "config": snapshot,
        "git_describe": git_describe(),
        "seed": seed,
        "started": _now(),
        "finished": None,
        "status": "running",
        "outputs": [str(curve_path), str(manifest_path)],
    }
    _write_json(manifest_path, manifest)
    try:
        curve = run(env, trainer, cfg.critic)
    except DivergenceError as exc:
        manifest.update(status="diverged", finished=_now(), error=str(exc))
        manifest["outputs"] = [str(manifest_path)]
        _write_json(manifest_path, manifest)
        return manifest
    _write_csv_text(curve_path, curve.to_csv())
    manifest.update(status="completed", finished=_now())
    _write_json(manifest_path, manifest)
    return manifest


def cmd_train(args) -> int:
    try:
        cfg = _load(args.config)
        overrides = {}
        if args.method is not None:
            overrides["method"] = args.method
        if args.steps is not None:
            overrides["steps"] = args.steps
        trainer = dataclasses.replace(cfg.trainer, **overrides)
    except ConfigError as exc:
        print(f"config error at {exc.path}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    cfg = dataclasses.replace(cfg, trainer=trainer)
    if args.parallel_seeds < 1:
        print("--parallel-seeds must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    base = trainer.seed if args.seed is None else args.seed
    out_dir = _out_dir(args.out)
    jobs = [(cfg, base + k, out_dir) for k in range(args.parallel_seeds)]
    if len(jobs) == 1:
        manifests = [_train_one(jobs[0])]
    else:
        with ProcessPoolExecutor(max_workers=len(jobs)) as pool:
            manifests = list(pool.map(_train_one, jobs))
    code = EXIT_OK
    for m in manifests:
        if m["status"] == "diverged":
            print(f"seed {m['seed']} diverged: {m['error']}", file=sys.stderr)
            code = EXIT_DIVERGED
        else:
            print(f"seed {m['seed']}: wrote {', '.join(m['outputs'])}")
    return code


# ---------------------------------------------------------------------------
# variance


def default_variance_case() -> tuple[HybridCritic, GaussianPolicy]:
    """1-d critic mixing the three smooth families, so every order applies."""
    critic = HybridCritic(
        (
            TrigAtom([1.3], 0.4),
            RbfAtom([0.2], SpdFactor.diag([0.7])),
            QuadricAtom([[0.5]], [0.1], 0.0, [0.3]),
        ),
        [1.0, 0.8, -0.2],
    )
    return critic, GaussianPolicy.isotropic([0.3], 0.5)


def cmd_variance(args) -> int:
    try:
        cfg = _load(args.config)
    except ConfigError as exc:
        print(f"config error at {exc.path}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    critic, policy = default_variance_case()
    critic = cfg.critic or critic
    if cfg.policy is not None:
        if not isinstance(cfg.policy, GaussianPolicy):
            print("config error at policy.type: variance sweeps need a gaussian policy", file=sys.stderr)
            return EXIT_CONFIG
        policy = cfg.policy
    orders = tuple(args.orders) if args.orders else cfg.variance.orders
    samples = args.samples if args.samples is not None else cfg.variance.samples
    if samples < 2:
        print("config error at samples: need at least two samples", file=sys.stderr)
        return EXIT_CONFIG
    out_dir = _out_dir(args.out)
    csv_path = out_dir / f"variance_seed{args.seed}.csv"
    manifest_path = out_dir / f"manifest_variance_seed{args.seed}.json"
    manifest = {
        "command": "variance",
        "config": config_to_dict(dataclasses.replace(cfg, critic=critic, policy=policy)),
        "orders": list(orders),
        "samples": samples,
        "git_describe": git_describe(),
        "seed": args.seed,
        "started": _now(),
        "finished": None,
        "status": "running",
        "outputs": [str(csv_path), str(manifest_path)],
    }
    _write_json(manifest_path, manifest)
    rng = RngStream(args.seed)
    rows = []
    try:
        for order, stream in zip(orders, rng.spawn(len(orders))):
            rows += estimator_variance(order, critic, policy, samples, stream)
    except Exception as exc:
        manifest.update(status="failed", finished=_now(), error=str(exc))
        _write_json(manifest_path, manifest)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("order", "coordinate", "mean", "variance", "n"))
        for r in rows:
            w.writerow((r.order, r.coordinate, repr(r.mean), repr(r.variance), r.n))
    manifest.update(status="completed", finished=_now())
    _write_json(manifest_path, manifest)
    for r in rows:
        print(f"order {r.order} {r.coordinate:12s} mean={r.mean:+.6e} var={r.variance:.6e}")
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    # argparse exits with 2 on bad flags, matching the config exit code
    p = argparse.ArgumentParser(prog="fpg", description="Expected policy gradients: checks, training, variance sweeps.")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True)

    v = sub.add_parser("verify", help="run the oracle check suite")
    v.add_argument("--only", nargs="+", choices=verification.GROUPS, metavar="GROUP",
                   help=f"subset of {', '.join(verification.GROUPS)}")
    v.add_argument("--out", help="CSV report path")
    v.set_defaults(func=cmd_verify)

    t = sub.add_parser("train", help="train on the turntable")
    t.add_argument("--method", choices=METHODS)
    t.add_argument("--steps", type=int)
    t.add_argument("--seed", type=int)
    t.add_argument("--config", help="JSON config path")
    t.add_argument("--out", help=f"output directory (default ${OUT_ENV} or .)")
    t.add_argument("--parallel-seeds", type=int, default=1,
                   help="run seeds seed..seed+k-1 in k processes")
    t.set_defaults(func=cmd_train)

    s = sub.add_parser("variance", help="estimator variance sweep")
    s.add_argument("--orders", type=int, nargs="+", choices=ORDERS)
    s.add_argument("--samples", type=int)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--config", help="JSON config path")
    s.add_argument("--out", help=f"output directory (default ${OUT_ENV} or .)")
    s.set_defaults(func=cmd_variance)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

"""Operator-facing command line.

Subcommands: gen-synth, ingest-check, train, evaluate, sweep, compare.

Configuration precedence: built-in defaults < --config JSON file < flags.
The fully resolved configuration is written to ``run_config.json`` in the
output directory before any computation starts, so every run directory is
self-describing and re-runnable (``--config <dir>/run_config.json``).

Exit codes: 0 success, 2 usage/config error, 3 data error, 4 numerical
failure.  The default output root is ``./runs`` or the directory named by
the BANDITROUTE_OUTPUT_ROOT environment variable.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
from pathlib import Path

from .checkpoint import checkpoint_id, load_checkpoint, load_router, save_checkpoint
from .data import SYNTHETIC_KINDS, SyntheticSpec, BanditEnvironment, EvalCapability, \
    gen_synthetic, ingest, write_jsonl
from .estimators import EpsilonGreedyRouter, LinTSRouter, LinUCBRouter, ReinforceRouter, \
    resolve_reward_spec
from .evaluation import DEFAULT_SWEEP_GRID, EvaluationReport, compare, evaluate, \
    render_text_table, sweep_preferences
from .exceptions import NotPositiveDefiniteError, NumericalDivergenceError, SchemaError
from .policy import HEAD_KINDS
from .reward import PreferenceVector

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4

OUTPUT_ROOT_ENV = "BANDITROUTE_OUTPUT_ROOT"

ALGORITHMS = ("reinforce", "linucb", "lints", "epsilon-greedy")


def _resolve_config(args, defaults: dict) -> dict:
    """defaults < config file < explicitly passed flags."""
    file_cfg = {}
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.exists():
            raise FileNotFoundError(f"config file not found: {path}")
        file_cfg = json.loads(path.read_text())
    resolved = {}
    for key, default in defaults.items():
        flag = getattr(args, key, None)
        if flag is not None:
            resolved[key] = flag
        elif key in file_cfg:
            resolved[key] = file_cfg[key]
        else:
            resolved[key] = default
    return resolved


def _out_dir(args, command: str, cfg: dict) -> Path:
    if getattr(args, "out", None):
        return Path(args.out)
    root = Path(os.environ.get(OUTPUT_ROOT_ENV, "runs"))
    digest = hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()[:8]
    return root / f"{command}-{digest}"


def _write_run_config(out_dir: Path, command: str, cfg: dict) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    payload = {"command": command, **cfg}
    (out_dir / "run_config.json").write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")


def _load_dataset(cfg: dict):
    path = Path(cfg["dataset"])
    if not path.exists():
        raise FileNotFoundError(f"dataset not found: {path}")
    embeddings = cfg.get("embeddings")
    if embeddings is None and cfg["format"] == "jsonl":
        base = Path(cfg["dataset"])
        if base.with_suffix(base.suffix + ".emb.bin").exists():
            embeddings = cfg["dataset"]
    return ingest(path, fmt=cfg["format"], embeddings_path=embeddings,
                  split_seed=cfg["split_seed"], strict=bool(cfg.get("strict", False)))


def _write_report_csv(path: Path, rows: list[tuple]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["task", "w_c", "score_pct", "cost_usd"])
        for row in rows:
            writer.writerow(["" if v is None else v for v in row])


# ----------------------------------------------------------------------
# subcommands
# ----------------------------------------------------------------------

def cmd_gen_synth(args) -> int:
    defaults = {
        "kind": "piecewise-preference", "n": 2000, "k_arms": 2, "d_e": 8,
        "tau": 1.0, "jitter": 0.0, "task_count": 1, "seed": 0,
        "scores": None, "costs": None,
    }
    cfg = _resolve_config(args, defaults)
    spec = SyntheticSpec(
        kind=cfg["kind"], n_records=int(cfg["n"]), k_arms=int(cfg["k_arms"]),
        d_e=int(cfg["d_e"]), tau=float(cfg["tau"]), jitter=float(cfg["jitter"]),
        task_count=int(cfg["task_count"]),
        scores=tuple(cfg["scores"]) if cfg["scores"] else None,
        costs=tuple(cfg["costs"]) if cfg["costs"] else None,
    )
    out_dir = _out_dir(args, "gen-synth", cfg)
    _write_run_config(out_dir, "gen-synth", cfg)
    dataset = gen_synthetic(spec, seed=int(cfg["seed"]))
    write_jsonl(dataset, out_dir / "dataset.jsonl")
    print(f"wrote {dataset.n_records} records ({spec.kind}, K={spec.k_arms}, "
          f"d_e={spec.d_e}) to {out_dir / 'dataset.jsonl'}")
    return EXIT_OK


def cmd_ingest_check(args) -> int:
    defaults = {"dataset": None, "format": "jsonl", "embeddings": None,
                "strict": False, "split_seed": 0}
    cfg = _resolve_config(args, defaults)
    if cfg["dataset"] is None:
        raise ValueError("--dataset is required")
    dataset = _load_dataset(cfg)
    summary = {
        "n_records": dataset.n_records,
        "k_arms": dataset.arm_set.k,
        "arms": list(dataset.arm_set.ids),
        "d_e": dataset.d_e,
        "tasks": dataset.tasks(),
        "n_train": len(dataset.split_indices("train")),
        "n_test": len(dataset.split_indices("test")),
        "synthetic_features": dataset.synthetic_features,
        "fingerprint": dataset.fingerprint(),
    }
    print(json.dumps(summary, sort_keys=True, indent=2))
    return EXIT_OK


_TRAIN_DEFAULTS = {
    "dataset": None, "format": "jsonl", "embeddings": None, "strict": False,
    "algo": "reinforce", "head": "mlp", "epochs": 100, "batch_size": 32,
    "learning_rate": 1e-4, "entropy_coef": 0.05, "tau": None,
    "d_p": 64, "pref_hidden": 64, "mlp_hidden": 256, "bilinear_rank": 8,
    "alpha": 1.0, "nu": 0.5, "epsilon": 0.1, "ridge_lambda": 1.0,
    "passes": 1, "rounds": None, "seed": 0, "split_seed": 0, "split": "train",
    "checkpoint_every": None,
}


def cmd_train(args) -> int:
    cfg = _resolve_config(args, _TRAIN_DEFAULTS)
    if cfg["dataset"] is None:
        raise ValueError("--dataset is required")
    if cfg["algo"] not in ALGORITHMS:
        raise ValueError(f"unknown algo {cfg['algo']!r}; expected one of {ALGORITHMS}")
    dataset = _load_dataset(cfg)  # validate before any output is created
    reward_spec = resolve_reward_spec(dataset, cfg["tau"])
    cfg["tau_resolved"] = reward_spec.tau

    out_dir = _out_dir(args, "train", cfg)
    _write_run_config(out_dir, "train", cfg)

    if cfg["algo"] == "reinforce":
        router = ReinforceRouter(
            head=cfg["head"], d_p=int(cfg["d_p"]), pref_hidden=int(cfg["pref_hidden"]),
            mlp_hidden=int(cfg["mlp_hidden"]), bilinear_rank=int(cfg["bilinear_rank"]),
            epochs=int(cfg["epochs"]), batch_size=int(cfg["batch_size"]),
            learning_rate=float(cfg["learning_rate"]), entropy_coef=float(cfg["entropy_coef"]),
            tau=reward_spec.tau, seed=int(cfg["seed"]),
        )
        every = cfg["checkpoint_every"]
        router.fit(dataset, split=cfg["split"], checkpoint_dir=out_dir,
                   checkpoint_every=None if every is None else int(every))
        payload = router.network_.to_checkpoint_dict()
        (out_dir / "trace.jsonl").write_text(router.trace_.to_jsonl())
        final = router.trace_.epochs[-1]
        print(f"trained reinforce ({cfg['head']} head) for {cfg['epochs']} epochs: "
              f"final mean reward {final.mean_reward:.4f}, entropy {final.mean_entropy:.4f}")
    else:
        kwargs = dict(ridge_lambda=float(cfg["ridge_lambda"]), passes=int(cfg["passes"]),
                      rounds=None if cfg["rounds"] is None else int(cfg["rounds"]),
                      tau=reward_spec.tau, seed=int(cfg["seed"]))
        if cfg["algo"] == "linucb":
            router = LinUCBRouter(alpha=float(cfg["alpha"]), **kwargs)
        elif cfg["algo"] == "lints":
            router = LinTSRouter(nu=float(cfg["nu"]), **kwargs)
        else:
            router = EpsilonGreedyRouter(epsilon=float(cfg["epsilon"]), **kwargs)
        router.fit(dataset, split=cfg["split"])
        payload = router.agent_.to_checkpoint_dict()
        print(f"trained {cfg['algo']} agent on {len(dataset.split_indices(cfg['split']))} records")

    save_checkpoint(out_dir / "checkpoint.json", payload)
    print(f"checkpoint: {out_dir / 'checkpoint.json'} (id {checkpoint_id(payload)})")
    return EXIT_OK


_EVAL_DEFAULTS = {
    "checkpoint": None, "dataset": None, "format": "jsonl", "embeddings": None,
    "strict": False, "w_c": 0.5, "split": "test", "split_seed": 0, "tau": None,
}


def _load_router_env(cfg: dict):
    ckpt_path = Path(cfg["checkpoint"])
    if not ckpt_path.exists():
        raise FileNotFoundError(f"checkpoint not found: {ckpt_path}")
    router = load_router(ckpt_path)
    dataset = _load_dataset(cfg)
    reward_spec = resolve_reward_spec(dataset, cfg["tau"])
    env = BanditEnvironment(dataset, reward_spec, split=cfg["split"])
    expected_d_e = router.dims.d_e if hasattr(router, "dims") else router.dim - 2
    expected_k = router.dims.k_arms if hasattr(router, "dims") else router.k_arms
    if expected_d_e != dataset.d_e or expected_k != dataset.arm_set.k:
        raise ValueError(
            f"checkpoint expects d_e={expected_d_e}, K={expected_k}; dataset has "
            f"d_e={dataset.d_e}, K={dataset.arm_set.k}"
        )
    payload = load_checkpoint(ckpt_path)
    meta = {"checkpoint_id": checkpoint_id(payload),
            "split": cfg["split"],
            "seed": payload.get("init_seed")}
    return router, env, meta


def cmd_evaluate(args) -> int:
    cfg = _resolve_config(args, _EVAL_DEFAULTS)
    for key in ("checkpoint", "dataset"):
        if cfg[key] is None:
            raise ValueError(f"--{key} is required")
    router, env, meta = _load_router_env(cfg)
    out_dir = _out_dir(args, "evaluate", cfg)
    _write_run_config(out_dir, "evaluate", cfg)
    pref = PreferenceVector.from_cost_weight(float(cfg["w_c"]))
    report = evaluate(router, env, pref, EvalCapability(), metadata=meta)
    (out_dir / "report.json").write_text(report.to_json())
    _write_report_csv(out_dir / "report.csv", report.csv_rows(w_c=pref.w_c))
    print(render_text_table(report))
    print(f"report: {out_dir / 'report.json'}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    defaults = dict(_EVAL_DEFAULTS)
    defaults["grid"] = list(DEFAULT_SWEEP_GRID)
    cfg = _resolve_config(args, defaults)
    for key in ("checkpoint", "dataset"):
        if cfg[key] is None:
            raise ValueError(f"--{key} is required")
    router, env, meta = _load_router_env(cfg)
    out_dir = _out_dir(args, "sweep", cfg)
    _write_run_config(out_dir, "sweep", cfg)
    points = sweep_preferences(router, env, cfg["grid"], EvalCapability(), metadata=meta)
    payload = {
        "metadata": meta,
        "points": [{"w_c": p.w_c, "score_pct": p.score_pct, "cost_usd": p.cost_usd}
                   for p in points],
    }
    (out_dir / "sweep.json").write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")
    _write_report_csv(out_dir / "sweep.csv",
                      [("all", p.w_c, p.score_pct, p.cost_usd) for p in points])
    for p in points:
        print(f"w_c={p.w_c:.2f}  score={p.score_pct:.2f}%  cost=${p.cost_usd:.6f}")
    print(f"sweep: {out_dir / 'sweep.json'}")
    return EXIT_OK


def cmd_compare(args) -> int:
    defaults = {"reference": None, "candidate": None}
    cfg = _resolve_config(args, defaults)
    for key in ("reference", "candidate"):
        if cfg[key] is None:
            raise ValueError(f"--{key} is required")
        if not Path(cfg[key]).exists():
            raise FileNotFoundError(f"report not found: {cfg[key]}")
    reference = EvaluationReport.from_dict(json.loads(Path(cfg["reference"]).read_text()))
    candidate = EvaluationReport.from_dict(json.loads(Path(cfg["candidate"]).read_text()))
    result = compare(reference, candidate)
    payload = {
        "score_improvement_pct": result.score_improvement_pct,
        "cost_reduction_pct": result.cost_reduction_pct,
        "rendered": result.rendered(),
    }
    print(json.dumps(payload, sort_keys=True, indent=2))
    if getattr(args, "out", None):
        out_dir = Path(args.out)
        _write_run_config(out_dir, "compare", cfg)
        (out_dir / "compare.json").write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")
    return EXIT_OK


# ----------------------------------------------------------------------
# parser
# ----------------------------------------------------------------------

def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file; flags override its values")
    p.add_argument("--out", help="output directory (default: derived under the output root)")


def _add_dataset_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--dataset", help="path to the logged dataset")
    p.add_argument("--format", choices=["jsonl", "csv"], default=None)
    p.add_argument("--embeddings", help="embedding sidecar base path (default: <dataset>)")
    p.add_argument("--strict", action=argparse.BooleanOptionalAction, default=None,
                   help="reject out-of-range scores instead of clamping")
    p.add_argument("--split-seed", dest="split_seed", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="banditroute",
        description="Preference-conditioned contextual-bandit routing over candidate LLMs.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-synth", help="generate a synthetic logged dataset")
    _add_common(p)
    p.add_argument("--kind", choices=list(SYNTHETIC_KINDS), default=None)
    p.add_argument("--n", type=int, default=None, help="number of records")
    p.add_argument("--k-arms", dest="k_arms", type=int, default=None)
    p.add_argument("--d-e", dest="d_e", type=int, default=None)
    p.add_argument("--tau", type=float, default=None)
    p.add_argument("--jitter", type=float, default=None)
    p.add_argument("--task-count", dest="task_count", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_gen_synth)

    p = sub.add_parser("ingest-check", help="validate a dataset and print a summary")
    _add_common(p)
    _add_dataset_flags(p)
    p.set_defaults(func=cmd_ingest_check)

    p = sub.add_parser("train", help="train a router on the train split")
    _add_common(p)
    _add_dataset_flags(p)
    p.add_argument("--algo", choices=list(ALGORITHMS), default=None)
    p.add_argument("--head", choices=list(HEAD_KINDS), default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", dest="batch_size", type=int, default=None)
    p.add_argument("--lr", dest="learning_rate", type=float, default=None)
    p.add_argument("--entropy-coef", dest="entropy_coef", type=float, default=None)
    p.add_argument("--tau", type=float, default=None)
    p.add_argument("--d-p", dest="d_p", type=int, default=None)
    p.add_argument("--pref-hidden", dest="pref_hidden", type=int, default=None)
    p.add_argument("--mlp-hidden", dest="mlp_hidden", type=int, default=None)
    p.add_argument("--bilinear-rank", dest="bilinear_rank", type=int, default=None)
    p.add_argument("--alpha", type=float, default=None, help="LinUCB exploration width")
    p.add_argument("--nu", type=float, default=None, help="LinTS prior scale")
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--ridge-lambda", dest="ridge_lambda", type=float, default=None)
    p.add_argument("--passes", type=int, default=None, help="agent passes over the split")
    p.add_argument("--rounds", type=int, default=None, help="agent rounds (overrides passes)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--split", choices=["train", "test", "all"], default=None)
    p.add_argument("--checkpoint-every", dest="checkpoint_every", type=int, default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="evaluate a checkpoint at one preference")
    _add_common(p)
    _add_dataset_flags(p)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--w-c", dest="w_c", type=float, default=None, help="cost weight in [0, 1]")
    p.add_argument("--split", choices=["train", "test", "all"], default=None)
    p.add_argument("--tau", type=float, default=None)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep", help="evaluate across a grid of cost weights")
    _add_common(p)
    _add_dataset_flags(p)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--grid", type=lambda s: [float(x) for x in s.split(",")], default=None,
                   help="comma-separated cost weights (default 0,0.2,0.4,0.5,0.6,0.8,1)")
    p.add_argument("--split", choices=["train", "test", "all"], default=None)
    p.add_argument("--tau", type=float, default=None)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("compare", help="relative deltas between two report JSONs")
    _add_common(p)
    p.add_argument("--reference", default=None)
    p.add_argument("--candidate", default=None)
    p.set_defaults(func=cmd_compare)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SchemaError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalDivergenceError, NotPositiveDefiniteError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (FileNotFoundError, NotADirectoryError, ValueError, KeyError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

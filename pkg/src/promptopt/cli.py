"""Command-line entry point.

Subcommands: train, eval, optimize, sweep, inspect-graph, serve. Each
builds one validated run configuration from an optional TOML file plus
flags (flags win). With --server the request/response commands (and
train/eval) are forwarded to a running service instead of executing
in-process. Exit codes: 0 success, 1 runtime failure, 2 bad configuration.
"""
from __future__ import annotations

import argparse
import json
import sys

import httpx

from .checkpoint import load_checkpoint
from .config import RunConfig, load_run_config
from .errors import (
    ArgumentError,
    ConfigError,
    DatasetParseError,
    EmptyDatasetError,
    PromptOptError,
    SchemaError,
    SizeError,
    TemplateError,
)
from .runtime import OptimizerRuntime

_CONFIG_ERRORS = (
    ConfigError,
    TemplateError,
    DatasetParseError,
    SchemaError,
    EmptyDatasetError,
    SizeError,
    ArgumentError,
)

_OVERRIDE_KEYS = (
    "seed", "dataset", "format", "splits", "pool_size", "template", "out_dir",
    "env", "base_url", "model", "token_env", "k_max", "variant", "hgt_layers",
    "heads", "dim", "epochs", "batch_size", "learning_rate", "optimizer",
    "baseline", "salt", "embedder_kind", "embedding_file", "max_tokens",
    "temperature",
)


def _common_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="TOML run configuration file")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--out-dir", dest="out_dir")
    parser.add_argument("--dataset", help="JSONL dataset path")
    parser.add_argument("--format", choices=["alpaca", "dolly", "alpaca_jsonl", "dolly_jsonl"])
    parser.add_argument("--splits", help="n_train,n_val,n_test (default 200,800,800)")
    parser.add_argument("--pool-size", dest="pool_size", type=int)
    parser.add_argument("--template", help="prompt template file")
    parser.add_argument("--env", choices=["mock", "http"])
    parser.add_argument("--base-url", dest="base_url")
    parser.add_argument("--model")
    parser.add_argument("--token-env", dest="token_env")
    parser.add_argument("--lambda", dest="lambda_", type=float, help="reward blend weight (default 0.4)")
    parser.add_argument("--k-max", dest="k_max", type=int)
    parser.add_argument("--variant", choices=["full", "no-kg", "knn-select"])
    parser.add_argument("--hgt-layers", dest="hgt_layers", type=int)
    parser.add_argument("--heads", type=int)
    parser.add_argument("--dim", type=int)
    parser.add_argument("--epochs", type=int)
    parser.add_argument("--batch-size", dest="batch_size", type=int)
    parser.add_argument("--learning-rate", dest="learning_rate", type=float)
    parser.add_argument("--optimizer", choices=["sgd", "adam"])
    parser.add_argument("--baseline", choices=["none", "ema"])
    parser.add_argument(
        "--no-baseline", dest="baseline", action="store_const", const="none",
        help="disable the reward baseline (plain score-function update)",
    )
    parser.add_argument("--embedder-kind", dest="embedder_kind", choices=["hash", "file", "http"])
    parser.add_argument("--embedding-file", dest="embedding_file")
    parser.add_argument("--salt", type=int)
    parser.add_argument("--max-tokens", dest="max_tokens", type=int)
    parser.add_argument("--temperature", type=float)
    parser.add_argument("--server", help="forward the command to a running service at this URL")


def _build_config(args) -> RunConfig:
    overrides = {key: getattr(args, key, None) for key in _OVERRIDE_KEYS}
    overrides["lambda"] = getattr(args, "lambda_", None)
    return load_run_config(args.config, overrides)


def _post(server: str, path: str, payload: dict) -> dict:
    response = httpx.post(server.rstrip("/") + path, json=payload, timeout=600.0)
    if response.status_code != 200:
        raise PromptOptError(f"server returned HTTP {response.status_code}: {response.text[:300]}")
    return response.json()


def _print_json(payload) -> None:
    print(json.dumps(payload, indent=2, sort_keys=True))


def cmd_train(args) -> int:
    config = _build_config(args)
    if config.dataset is None:
        raise ConfigError("corpus.dataset is required for training (--dataset or [corpus] dataset)")
    if args.server:
        _print_json(_post(args.server, "/train", {"resume": bool(args.resume)}))
        return 0
    checkpoint = load_checkpoint(args.resume_from) if args.resume_from else None
    runtime = OptimizerRuntime(config, checkpoint)
    summary = runtime.run_training(resume=args.resume_from is not None)
    _print_json(summary)
    return 0


def cmd_eval(args) -> int:
    if args.server:
        _print_json(_post(args.server, "/eval", {"split": args.split, "mode": args.mode, "limit": args.limit}))
        return 0
    config = _build_config(args)
    if config.dataset is None:
        raise ConfigError("corpus.dataset is required for evaluation")
    runtime = OptimizerRuntime.from_config(config, checkpoint_path=args.checkpoint)
    payload = runtime.run_evaluation(split_name=args.split, mode=args.mode, limit=args.limit)
    _print_json(payload)
    corpus = payload["corpus"]
    print(
        f"split={args.split} n={payload['count']} rouge1={corpus['rouge1']:.4f} "
        f"rouge2={corpus['rouge2']:.4f} rougeL={corpus['rougeL']:.4f} "
        f"bleu={corpus['bleu']:.4f} mean_reward={payload['mean_reward']:.4f}",
        file=sys.stderr,
    )
    return 0


def cmd_optimize(args) -> int:
    if args.server:
        payload = _post(
            args.server,
            "/optimize",
            {"query": args.query, "k_max": args.k_max, "mode": args.mode, "call_env": args.call_env},
        )
    else:
        config = _build_config(args)
        runtime = OptimizerRuntime.from_config(config, checkpoint_path=args.checkpoint)
        payload = runtime.optimize(args.query, k_max=args.k_max, mode=args.mode, call_env=args.call_env)
    print(f"query: {payload['query']}")
    for position, item in enumerate(payload["selected"], start=1):
        text = item["query"][:70]
        print(f"  {position}. candidate #{item['index']}: {text}")
    print(f"log_prob: {payload['log_prob']:.6f}")
    print("--- prompt ---")
    print(payload["prompt"])
    if payload.get("response") is not None:
        print("--- response ---")
        print(payload["response"])
    return 0


def cmd_sweep(args) -> int:
    config = _build_config(args)
    if config.dataset is None:
        raise ConfigError("corpus.dataset is required for sweeps")
    grid_raw = args.grid or args.lambda_grid
    if not grid_raw:
        raise ConfigError("provide --grid (or --lambda-grid) with comma-separated values")
    axis = args.axis.replace("-", "_")
    values = [float(v) if axis == "lambda" else int(v) for v in grid_raw.split(",")]
    runtime = OptimizerRuntime(config)
    rows = runtime.run_sweep(axis, values, split_name=args.split, limit=args.limit)
    _print_json(rows)
    for row in rows:
        if row["error"]:
            print(f"{axis}={row['value']}: ERROR {row['error']}", file=sys.stderr)
        else:
            corpus = row["metrics"]
            print(
                f"{axis}={row['value']}: rouge1={corpus['rouge1']:.4f} rouge2={corpus['rouge2']:.4f} "
                f"rougeL={corpus['rougeL']:.4f} bleu={corpus['bleu']:.4f}",
                file=sys.stderr,
            )
    return 0


def cmd_inspect_graph(args) -> int:
    if args.server:
        _print_json(_post(args.server, "/inspect-graph", {"query": args.query, "full": args.full}))
        return 0
    config = _build_config(args)
    runtime = OptimizerRuntime(config)
    _print_json(runtime.inspect_graph(query=args.query, full=args.full))
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    config = _build_config(args)
    runtime = OptimizerRuntime.from_config(config, checkpoint_path=args.checkpoint)
    uvicorn.run(create_app(runtime), host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="promptopt", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train the selection policy")
    _common_flags(p_train)
    p_train.add_argument("--resume-from", dest="resume_from", help="checkpoint to resume from")
    p_train.add_argument("--resume", action="store_true", help="(server mode) resume from the loaded checkpoint")
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint on a split")
    _common_flags(p_eval)
    p_eval.add_argument("--checkpoint", help="checkpoint file (default: fresh parameters)")
    p_eval.add_argument("--split", choices=["train", "val", "test"], default="test")
    p_eval.add_argument("--mode", choices=["greedy", "sample"], default="greedy")
    p_eval.add_argument("--limit", type=int)
    p_eval.set_defaults(func=cmd_eval)

    p_opt = sub.add_parser("optimize", help="construct the prompt for one query")
    _common_flags(p_opt)
    p_opt.add_argument("query", help="the user query text")
    p_opt.add_argument("--checkpoint", help="trained checkpoint file")
    p_opt.add_argument("--mode", choices=["greedy", "sample"], default="greedy")
    p_opt.add_argument("--call-env", dest="call_env", action="store_true", help="also call the environment")
    p_opt.set_defaults(func=cmd_optimize)

    p_sweep = sub.add_parser("sweep", help="train/evaluate across a parameter grid")
    _common_flags(p_sweep)
    p_sweep.add_argument("--axis", choices=["lambda", "hgt-layers", "hgt_layers"], default="lambda")
    p_sweep.add_argument("--grid", help="comma-separated grid values")
    p_sweep.add_argument("--lambda-grid", dest="lambda_grid", help="alias for --grid on the lambda axis")
    p_sweep.add_argument("--split", choices=["train", "val", "test"], default="val")
    p_sweep.add_argument("--limit", type=int, help="cap evaluation items per grid point")
    p_sweep.set_defaults(func=cmd_sweep)

    p_graph = sub.add_parser("inspect-graph", help="dump the prompt graph as JSON")
    _common_flags(p_graph)
    p_graph.add_argument("--query", help="query text (default: a fixed probe)")
    p_graph.add_argument("--full", action="store_true", help="include embedding values")
    p_graph.set_defaults(func=cmd_inspect_graph)

    p_serve = sub.add_parser("serve", help="run the HTTP service")
    _common_flags(p_serve)
    p_serve.add_argument("--checkpoint", help="checkpoint to serve")
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=8000)
    p_serve.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _CONFIG_ERRORS as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except PromptOptError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

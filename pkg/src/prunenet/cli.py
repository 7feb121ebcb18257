"""Command-line entry point: ``prunenet <subcommand> ...``.

Exit codes: 0 success, 1 domain error (bad config, ratio or shapes),
2 I/O error (missing or malformed files). argparse usage errors also exit 2.
"""
import argparse
import csv
import datetime as dt
import json
import logging
import os
import sys

from . import __version__, _backend
from .analysis import build_report, intrinsic_threshold
from .checkpoint import load_checkpoint, read_tensors, save_checkpoint, write_tensors
from .errors import CheckpointError
from .model import ModelConfig, synthesize_model
from .policy import PolicyParams, TrainConfig, train_policy
from .pruner import CompressionPlan, compress_model
from .spectral import singular_values
from .toyeval import output_drift


RUN_MANIFEST = "run.json"
PLAN_FILE = "plan.json"


def _dump_json(obj, path=None):
    text = json.dumps(obj, indent=2) + "\n"
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)


def _now():
    return dt.datetime.now(dt.timezone.utc).isoformat()


def _write_run_manifest(out_dir, args, started):
    record = {k: v for k, v in vars(args).items() if k != "func"}
    _dump_json(
        {
            "command": args.command,
            "arguments": record,
            "seed": getattr(args, "seed", None),
            "tool_version": __version__,
            "started_at": started,
            "finished_at": _now(),
        },
        os.path.join(out_dir, RUN_MANIFEST),
    )


def _parse_ratios(text):
    try:
        ratios = [float(part) for part in text.split(",")]
    except ValueError:
        raise ValueError(f"--ratio must be a number or comma-separated numbers, got {text!r}") from None
    for r in ratios:
        if not 0.0 <= r < 1.0:
            raise ValueError(f"compression ratio must lie in [0, 1), got {r}")
    return ratios


def load_policy(path):
    _, tensors = read_tensors(path)
    try:
        return PolicyParams(tensors["w_inter"], tensors["w_proj"])
    except KeyError as exc:
        raise CheckpointError(f"{path} is not a policy checkpoint (missing {exc})") from exc


def save_policy(policy, path, meta):
    write_tensors(path, [("w_inter", policy.w_inter), ("w_proj", policy.w_proj)], meta)


# ---------------------------------------------------------------------------
# subcommands


def cmd_synth(args):
    config = ModelConfig(
        d_hidden=args.d_hidden,
        d_intermediate=args.d_intermediate,
        n_layers=args.layers,
        vocab_size=args.vocab,
        n_heads=args.heads,
        ffn_style=args.ffn,
        activation=args.activation,
        ffn_bias=args.bias,
    )
    model = synthesize_model(config, args.seed)
    save_checkpoint(model, args.out)
    return args.out


def _spectrum_matrix(layer, which):
    if which == "attn_o":
        return layer.attention.w_o.T
    return getattr(layer.ffn, which)


def cmd_spectrum(args):
    model = load_checkpoint(args.model)
    rows = []
    for i, layer in enumerate(model.layers):
        w = _spectrum_matrix(layer, args.matrix)
        if w is None:
            raise ValueError(f"model has no {args.matrix} matrices")
        for j, s in enumerate(singular_values(w).values):
            rows.append((i, j, f"{s:.9g}"))
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        fh = open(os.path.join(args.out, "spectrum.csv"), "w", newline="", encoding="utf-8")
    else:
        fh = sys.stdout
    try:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["layer", "index", "singular_value"])
        writer.writerows(rows)
    finally:
        if fh is not sys.stdout:
            fh.close()
    return args.out


def cmd_train_policy(args):
    config = TrainConfig(
        gamma=args.gamma,
        learning_rate=args.lr,
        episodes=args.episodes,
        compression_ratio=args.ratio,
        seed=args.seed,
        reward_kind=args.reward,
        target=args.target,
    )
    model = load_checkpoint(args.model)
    policy, history = train_policy(model, config)
    os.makedirs(args.out, exist_ok=True)
    meta = dict(model.config.to_dict(), policy_target=config.target.value)
    save_policy(policy, args.out, meta)
    _dump_json(
        {
            "ratio": config.compression_ratio,
            "gamma": config.gamma,
            "learning_rate": config.learning_rate,
            "reward": config.reward_kind,
            "target": config.target.value,
            "seed": config.seed,
            "episodes": [dict(episode=i, **h.to_dict()) for i, h in enumerate(history)],
        },
        os.path.join(args.out, "history.json"),
    )
    return args.out


def cmd_prune(args):
    ratios = _parse_ratios(args.ratio)
    if args.selector != "random" and args.policy in (None, "none") and args.target != "attn":
        raise ValueError(f"selector {args.selector!r} needs --policy")
    model = load_checkpoint(args.model)
    if len(ratios) == 1:
        ratios = ratios * model.config.n_layers
    plan = CompressionPlan(tuple(ratios), args.target, args.selector, args.seed)
    policy = None if args.policy in (None, "none") else load_policy(args.policy)
    attn_policy = None if args.attn_policy in (None, "none") else load_policy(args.attn_policy)
    if args.selector == "random":
        policy = attn_policy = None
    result = compress_model(model, policy, plan, attn_policy)
    save_checkpoint(result.model, args.out)
    _dump_json(result.plan_record(plan), os.path.join(args.out, PLAN_FILE))
    return args.out


def cmd_report(args):
    original = load_checkpoint(args.original)
    compressed = load_checkpoint(args.compressed)
    diagnostics = None
    plan_path = os.path.join(args.compressed, PLAN_FILE)
    if os.path.exists(plan_path):
        with open(plan_path, encoding="utf-8") as fh:
            diagnostics = json.load(fh)
    report = build_report(original, compressed, diagnostics, args.seq_len)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        _dump_json(report.to_dict(), os.path.join(args.out, "report.json"))
        with open(os.path.join(args.out, "layers.csv"), "w", encoding="utf-8") as fh:
            fh.write(report.layers_csv())
    else:
        _dump_json(report.to_dict())
    return args.out


def cmd_eval_drift(args):
    original = load_checkpoint(args.original)
    compressed = load_checkpoint(args.compressed)
    metrics = output_drift(original, compressed, args.probes, args.seed)
    _dump_json(metrics.to_dict())
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        _dump_json(metrics.to_dict(), os.path.join(args.out, "drift.json"))
    return args.out


def cmd_threshold(args):
    value = intrinsic_threshold(args.d_hidden, args.d_intermediate)
    print(f"{value:.{args.digits}f}")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        _dump_json(
            {"d_hidden": args.d_hidden, "d_intermediate": args.d_intermediate, "threshold": value},
            os.path.join(args.out, "threshold.json"),
        )
    return args.out


# ---------------------------------------------------------------------------


def _default_seed():
    raw = os.environ.get("PRUNENET_SEED")
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise SystemExit(f"prunenet: PRUNENET_SEED must be an integer, got {raw!r}")


def build_parser():
    parser = argparse.ArgumentParser(prog="prunenet", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--threads", type=int, default=None, help="cap on worker threads")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    seed = _default_seed()

    p = sub.add_parser("synth", help="write a random model checkpoint")
    p.add_argument("--d-hidden", type=int, required=True)
    p.add_argument("--d-intermediate", type=int, required=True)
    p.add_argument("--layers", type=int, required=True)
    p.add_argument("--vocab", type=int, required=True)
    p.add_argument("--heads", type=int, default=1)
    p.add_argument("--ffn", choices=["two_matrix", "gated"], default="two_matrix")
    p.add_argument("--activation", choices=["gelu", "silu"], default="gelu")
    p.add_argument("--bias", action="store_true", help="give two-matrix FFNs bias vectors")
    p.add_argument("--seed", type=int, default=seed)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("spectrum", help="per-layer singular values as CSV")
    p.add_argument("--model", required=True)
    p.add_argument("--matrix", choices=["w_up", "w_gate", "w_down", "attn_o"], default="w_up")
    p.add_argument("--out", help="directory for spectrum.csv (stdout when omitted)")
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("train-policy", help="learn a row-selection policy")
    p.add_argument("--model", required=True)
    p.add_argument("--ratio", type=float, required=True)
    p.add_argument("--gamma", type=float, default=0.99)
    p.add_argument("--lr", type=float, default=5e-4)
    p.add_argument("--episodes", type=int, default=20)
    p.add_argument("--seed", type=int, default=seed)
    p.add_argument("--reward", choices=["ks", "ad"], default="ks")
    p.add_argument("--target", choices=["ffn", "attn"], default="ffn")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train_policy)

    p = sub.add_parser("prune", help="compress a model checkpoint")
    p.add_argument("--model", required=True)
    p.add_argument("--policy", default="none", help="policy checkpoint, or 'none'")
    p.add_argument("--attn-policy", default="none", help="attention policy checkpoint, or 'none'")
    p.add_argument("--ratio", required=True, help="one ratio, or one per layer comma-separated")
    p.add_argument("--target", choices=["ffn", "attn", "both"], default="ffn")
    p.add_argument("--selector", choices=["policy", "random", "topk"], default="policy")
    p.add_argument("--seed", type=int, default=seed)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_prune)

    p = sub.add_parser("report", help="parameter / FLOPs / sparsity report")
    p.add_argument("--original", required=True)
    p.add_argument("--compressed", required=True)
    p.add_argument("--seq-len", type=int, default=1024)
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("eval-drift", help="output drift between two models")
    p.add_argument("--original", required=True)
    p.add_argument("--compressed", required=True)
    p.add_argument("--probes", type=int, default=16)
    p.add_argument("--seed", type=int, default=seed)
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval_drift)

    p = sub.add_parser("threshold", help="break-even ratio for adapter-based compression")
    p.add_argument("--d-hidden", type=int, required=True)
    p.add_argument("--d-intermediate", type=int, required=True)
    p.add_argument("--digits", type=int, default=4)
    p.add_argument("--out")
    p.set_defaults(func=cmd_threshold)
    return parser


def _fail(code, exc):
    sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc)}) + "\n")
    return code


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    _backend.set_threads(args.threads)
    started = _now()
    try:
        out_dir = args.func(args)
        if out_dir:
            _write_run_manifest(out_dir, args, started)
    except OSError as exc:
        return _fail(2, exc)
    except (ValueError, ArithmeticError, IndexError) as exc:
        return _fail(1, exc)
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Command-line front end: gen, estimate, rank, search, eval-controller.

Thin shells over the library modules; all results are JSON (or aligned text
with --format text). Exit codes: 0 success, 1 usage error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import json
import shlex
import sys
from pathlib import Path

from . import controller as ctl
from .arch import canonical_hash, from_json_obj, loads, to_json_obj
from .engine import SearchConfig, SearchEngine
from .evaluate import SyntheticConfig
from .generate import generate_candidates, grow_candidates, search_space_sizes, trim_candidates
from .memory import estimate_memory, lifetime_csv
from .metric import SIGN_MODES
from .ranking import compare_controllers, comparison_table


class _Parser(argparse.ArgumentParser):
    # usage problems exit 1; runtime problems exit 2 (handled in main)
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(1)


def _load_arch(path: str):
    return loads(Path(path).read_text(encoding="utf-8"))


def _write_json(obj, out: str | None):
    text = json.dumps(obj, sort_keys=True, indent=1)
    if out:
        Path(out).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)


def _build_parser() -> _Parser:
    parser = _Parser(prog="memsearch", description=__doc__)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    gen = sub.add_parser("gen", help="enumerate grow/trim candidates of a base network")
    gen.add_argument("--arch", required=True, help="base architecture JSON file")
    gen.add_argument("--mode", choices=["grow", "trim", "both"], default="both")
    gen.add_argument("--out", help="write the candidate array here (default stdout)")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--format", choices=["json", "text"], default="json")

    est = sub.add_parser("estimate", help="parameter and peak intermediate memory")
    est.add_argument("--arch", required=True)
    est.add_argument("--bytes-per-element", type=int, default=2)
    est.add_argument("--bytes-per-weight", type=int, default=2)
    est.add_argument("--lifetime-csv", help="also write the peak block's lifetime table as CSV")
    est.add_argument("--out")
    est.add_argument("--seed", type=int, default=0)
    est.add_argument("--format", choices=["json", "text"], default="json")

    rank = sub.add_parser("rank", help="score a candidate file with the ranking controller")
    rank.add_argument("--candidates", required=True, help="JSON array from `gen`")
    rank.add_argument("--controller", help="controller checkpoint (default: fresh seeded init)")
    rank.add_argument("--k", type=int, default=0, help="only emit the top k (0 = all)")
    rank.add_argument("--out")
    rank.add_argument("--seed", type=int, default=0)
    rank.add_argument("--format", choices=["json", "text"], default="json")

    search = sub.add_parser("search", help="run the full round-based search")
    search.add_argument("--config", help="JSON file mirroring the search configuration")
    search.add_argument("--out", required=True, help="output directory")
    search.add_argument("--lambda", dest="lam", type=float)
    search.add_argument("--k", type=int)
    search.add_argument("--rounds", type=int)
    search.add_argument("--seed", type=int)
    search.add_argument("--evaluator", choices=["synthetic", "external"])
    search.add_argument("--trainer-cmd", help="trainer command line (external evaluator)")
    search.add_argument("--bytes-per-element", type=int)
    search.add_argument("--bytes-per-weight", type=int)
    search.add_argument("--metric-mode", choices=list(SIGN_MODES))
    search.add_argument("--stop-patience", type=int)
    search.add_argument("--init-arch", help="architecture JSON to start from")
    search.add_argument("--sigma", type=float, help="synthetic oracle noise level")
    search.add_argument("--format", choices=["json", "text"], default="json")

    evalc = sub.add_parser("eval-controller", help="compare controllers on a synthetic pool")
    evalc.add_argument("--seed", type=int, default=0)
    evalc.add_argument("--pool-size", type=int, default=200)
    evalc.add_argument("--train-size", type=int, default=150)
    evalc.add_argument("--lambda", dest="lam", type=float, default=0.5)
    evalc.add_argument("--epochs", type=int, default=30)
    evalc.add_argument("--k", default="50,100", help="comma-separated cutoffs")
    evalc.add_argument("--init-arch", help="pool base architecture JSON")
    evalc.add_argument("--out")
    evalc.add_argument("--format", choices=["json", "text"], default="json")

    return parser


def _cmd_gen(args) -> int:
    base = _load_arch(args.arch)
    if args.mode == "grow":
        cands = grow_candidates(base)
    elif args.mode == "trim":
        cands = trim_candidates(base)
    else:
        cands = generate_candidates(base)
    payload = [
        {"arch": to_json_obj(c.arch), "provenance": {"action": c.action, "detail": c.detail}}
        for c in cands
    ]
    sizes = search_space_sizes(base)
    summary = {
        "mode": args.mode,
        "emitted": len(cands),
        "closed_form": {
            "grow": sizes.grow,
            "trim": sizes.trim,
            "grow_combine_squared": sizes.grow_combine_squared,
        },
    }
    if args.out:
        _write_json(payload, args.out)
        print(json.dumps(summary, sort_keys=True))
    else:
        _write_json({"candidates": payload, "summary": summary}, None)
    return 0


def _cmd_estimate(args) -> int:
    arch = _load_arch(args.arch)
    est = estimate_memory(arch, args.bytes_per_element, args.bytes_per_weight)
    payload = {
        "param_bytes": est.param_bytes,
        "peak_intermediate_bytes": est.peak_intermediate_bytes,
        "total_bytes": est.total_bytes,
        "peak_block": est.peak_block_index + 1,
        "per_block": [
            {
                "peak_elements": t.peak,
                "per_step": list(t.per_step_memory),
                "lifetime_rows": [
                    {"rep": r.name, "gen": r.gen_time, "last_use": r.last_use_time, "size": r.size}
                    for r in t.rows
                ],
            }
            for t in est.per_block
        ],
    }
    if args.lifetime_csv:
        Path(args.lifetime_csv).write_text(lifetime_csv(est.lifetime), encoding="utf-8")
    if args.format == "text":
        lines = [
            f"param bytes:             {est.param_bytes}",
            f"peak intermediate bytes: {est.peak_intermediate_bytes}",
            f"total bytes:             {est.total_bytes}",
            f"peak block:              {est.peak_block_index + 1}",
            "per-block peak elements:  "
            + " ".join(str(t.peak) for t in est.per_block),
        ]
        text = "\n".join(lines)
        if args.out:
            Path(args.out).write_text(text + "\n", encoding="utf-8")
        else:
            print(text)
    else:
        _write_json(payload, args.out)
    return 0


def _cmd_rank(args) -> int:
    raw = json.loads(Path(args.candidates).read_text(encoding="utf-8"))
    if isinstance(raw, dict):
        raw = raw["candidates"]
    archs = [from_json_obj(item["arch"] if "arch" in item else item) for item in raw]
    if not archs:
        raise ValueError("candidate file is empty")
    if args.controller:
        params = ctl.load_controller(args.controller)
    else:
        params = ctl.init_controller(args.seed)
    hashes = [canonical_hash(a) for a in archs]
    order = sorted(range(len(archs)), key=lambda i: hashes[i])
    scores = ctl.rank(params, [archs[i] for i in order])
    ranked = sorted(zip(order, scores), key=lambda t: (-t[1], hashes[t[0]]))
    if args.k:
        ranked = ranked[: args.k]
    payload = [
        {"index": i, "hash": hashes[i], "score": float(s)} for i, s in ranked
    ]
    if args.format == "text":
        text = "\n".join(f"{row['score']: .6f}  {row['hash'][:16]}  #{row['index']}" for row in payload)
        if args.out:
            Path(args.out).write_text(text + "\n", encoding="utf-8")
        else:
            print(text)
    else:
        _write_json(payload, args.out)
    return 0


def _cmd_search(args) -> int:
    base = {}
    if args.config:
        base = json.loads(Path(args.config).read_text(encoding="utf-8"))
    overrides = {
        "lambda": args.lam,
        "k": args.k,
        "max_rounds": args.rounds,
        "seed": args.seed,
        "evaluator": args.evaluator,
        "bytes_per_element": args.bytes_per_element,
        "bytes_per_weight": args.bytes_per_weight,
        "metric_sign_mode": args.metric_mode,
        "stop_patience": args.stop_patience,
    }
    for key, value in overrides.items():
        if value is not None:
            base[key] = value
    if args.trainer_cmd:
        base["trainer_cmd"] = shlex.split(args.trainer_cmd)
    if args.init_arch:
        base["init_arch"] = to_json_obj(_load_arch(args.init_arch))
    if args.sigma is not None:
        synth = base.get("synth", {})
        synth["sigma"] = args.sigma
        base["synth"] = synth
    config = SearchConfig.from_dict(base)
    engine = SearchEngine(config, out_dir=args.out)
    best, rounds = engine.run_search()
    summary = {
        "rounds": len(rounds),
        "best_hash": canonical_hash(best),
        "best_y": rounds[-1].winner.y if rounds else None,
        "out_dir": str(args.out),
    }
    print(json.dumps(summary, sort_keys=True))
    return 0


def _cmd_eval_controller(args) -> int:
    ks = tuple(int(x) for x in str(args.k).split(",") if x)
    base = _load_arch(args.init_arch) if args.init_arch else None
    from .arch import default_arch

    result = compare_controllers(
        base or default_arch(),
        seed=args.seed,
        pool_size=args.pool_size,
        train_size=args.train_size,
        ks=ks,
        lam=args.lam,
        epochs=args.epochs,
        synth=SyntheticConfig(),
    )
    payload = [
        {
            "controller": row.name,
            **{f"AP@{k}": row.ap[k] for k in ks},
            **{f"NDCG@{k}": row.ndcg[k] for k in ks},
        }
        for row in result.rows
    ]
    if args.format == "text":
        text = comparison_table(result)
        if args.out:
            Path(args.out).write_text(text, encoding="utf-8")
        else:
            print(text, end="")
    else:
        _write_json(payload, args.out)
    return 0


_COMMANDS = {
    "gen": _cmd_gen,
    "estimate": _cmd_estimate,
    "rank": _cmd_rank,
    "search": _cmd_search,
    "eval-controller": _cmd_eval_controller,
}


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    if not args.command:
        parser.print_help()
        return 1
    try:
        return _COMMANDS[args.command](args)
    except SystemExit as e:
        return int(e.code or 0)
    except Exception as e:  # runtime failures are exit code 2
        print(f"memsearch {args.command}: {type(e).__name__}: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())

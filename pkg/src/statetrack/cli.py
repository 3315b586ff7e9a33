"""Command-line entry point: ``statetrack <command> [flags]``."""

from __future__ import annotations

import argparse
import contextlib
import json
import os
import sys

import numpy as np

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


# -- shared helpers ------------------------------------------------------------------


def _dump(obj) -> str:
    return json.dumps(obj, separators=(",", ":"))


def _write_text(path: str | None, text: str):
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


def _read_json(path: str):
    with open(path) as fh:
        return json.load(fh)


def parse_grid(text: str | None):
    """``uniform:lo:hi:step``, ``explicit:v1,v2,...``, a JSON object or a JSON file path."""
    from .precision import DEFAULT_GRID, CastGrid

    if text is None or text == "default":
        return DEFAULT_GRID
    if text.startswith("uniform:"):
        lo, hi, step = (float(x) for x in text[len("uniform:"):].split(":"))
        return CastGrid.uniform(lo, hi, step)
    if text.startswith("explicit:"):
        return CastGrid.explicit(float(x) for x in text[len("explicit:"):].split(","))
    if text.lstrip().startswith("{"):
        return CastGrid.from_dict(json.loads(text))
    return CastGrid.from_dict(_read_json(text))


def parse_word(text: str) -> list[int]:
    """``"0110"`` (one digit per token) or ``"3,12,4"``."""
    text = text.strip()
    if not text:
        return []
    if "," in text or " " in text:
        return [int(t) for t in text.replace(",", " ").split()]
    return [int(c) for c in text]


def read_words(path: str) -> list[list[int]]:
    """JSONL lines holding either a token list or an object with ``tokens``."""
    words = []
    with open(path) as fh:
        for line in fh:
            if not line.strip():
                continue
            item = json.loads(line)
            words.append([int(t) for t in (item["tokens"] if isinstance(item, dict) else item)])
    return words


def _thread_limit(default: int | None):
    raw = os.environ.get("STATETRACK_THREADS")
    n = int(raw) if raw else default
    if not n:
        return contextlib.nullcontext()
    if n < 1:
        raise ValueError("STATETRACK_THREADS must be a positive integer")
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=n)


def load_predictor(path: str):
    """A ``(B, T) -> (B, T)`` label function for a compiled or a trained checkpoint."""
    doc = _read_json(path)
    fmt = doc.get("format")
    if fmt == "statetrack-lrnn":
        from .lrnn import model_from_dict
        from .train import compiled_predictor

        return compiled_predictor(model_from_dict(doc)), doc
    if fmt == "statetrack-trainable":
        from .train import load_checkpoint, trainable_predictor

        params, cfg, _ = load_checkpoint(path)
        return trainable_predictor(params, cfg), doc
    raise ValueError(f"{path}: unknown checkpoint format {fmt!r}")


def _task_kwargs(args) -> dict:
    kw = {}
    if args.task in ("mod_arith", "modarith"):
        kw = {"m": args.m, "brackets": args.brackets}
    elif args.task in ("group", "s5"):
        kw = {"group": args.group, "variant": args.variant}
    return kw


def _add_task_flags(p: argparse.ArgumentParser, required: bool = True):
    p.add_argument("--task", required=required, choices=["parity", "mod_arith", "group"])
    p.add_argument("--m", type=int, default=5, help="modulus for mod_arith")
    p.add_argument("--brackets", action="store_true", help="mod_arith with brackets")
    p.add_argument("--group", default="symmetric:5", help="cyclic:m or symmetric:n")
    p.add_argument("--variant", default="full", help="full, swaps_only, up_to_3 or k_tokens(k)")


# -- commands ----------------------------------------------------------------------------


def cmd_compile(args) -> int:
    from .compiler import (cascade_to_lrnn, compile_cyclic, compile_mod_reflections, compile_parity,
                           compile_permutation_group)
    from .fsa import Cascade
    from .lrnn import model_to_dict

    kind, _, arg = args.target.partition(":")
    if kind == "parity":
        model = compile_parity(args.range)
    elif kind == "cyclic":
        model = compile_cyclic(int(arg), args.range, args.renormalize_every)
    elif kind == "perm":
        doc = _read_json(arg)
        model = compile_permutation_group(doc["generators"] if isinstance(doc, dict) else doc, args.range)
    elif kind == "modrefl":
        model = compile_mod_reflections(int(arg), args.range)
    elif kind == "cascade":
        model = cascade_to_lrnn(Cascade.load(arg), strict_gh=args.strict_gh, eigen_range=args.range)
    else:
        raise ValueError(f"unknown target {args.target!r}")
    _write_text(args.out, _dump(model_to_dict(model)) + "\n")
    return EXIT_OK


def cmd_run(args) -> int:
    from .lrnn import model_from_dict, model_run, model_run_cast

    doc = _read_json(args.model)
    if args.word is not None:
        words = [parse_word(args.word)]
    elif args.words:
        words = read_words(args.words)
    else:
        raise ValueError("give --word or --words")
    lines = []
    if doc.get("format") == "statetrack-lrnn":
        model = model_from_dict(doc)
        for w in words:
            if args.grid:
                labels = model_run_cast(model, w, parse_grid(args.grid), renormalize_every=args.renormalize_every)
            else:
                labels = model_run(model, w, renormalize_every=args.renormalize_every)
            lines.append(_dump({"labels": [int(x) for x in labels]}))
    else:
        if args.grid:
            raise ValueError("--grid only applies to compiled models")
        predict_fn, _ = load_predictor(args.model)
        for w in words:
            labels = predict_fn(np.asarray([w], dtype=np.int64))[0] if w else []
            lines.append(_dump({"labels": [int(x) for x in labels]}))
    _write_text(args.out, "".join(line + "\n" for line in lines))
    return EXIT_OK


def cmd_demo(args) -> int:
    from .lrnn import LrnnLayer, model_from_dict
    from .phenom import ConstantInput, demo_many, random_specs, rotation_spec

    grid = parse_grid(args.grid)
    if args.model:
        layer: LrnnLayer = model_from_dict(_read_json(args.model)).layers[args.layer]
        specs = [ConstantInput.from_layer(layer, args.token)]
    elif args.kind == "rotation":
        if args.m is None:
            raise ValueError("rotation demos need --m")
        specs = [rotation_spec(args.m)]
    else:
        specs = random_specs(args.kind, args.count, np.random.default_rng(args.seed), args.max_dim)
    reports = demo_many(args.kind, specs, grid, args.kmax, args.m, args.max_period)
    out = reports[0] if len(reports) == 1 else reports
    _write_text(args.out, json.dumps(out, indent=2) + "\n")
    return EXIT_OK if all(r["verdict"] == "pass" for r in reports) else EXIT_RUNTIME


def cmd_gen(args) -> int:
    from .fsa import Group
    from .tasks import gen_group_word, gen_mod_arith, gen_parity, write_jsonl

    if args.task == "parity":
        samples = gen_parity(args.len_min, args.len_max, args.count, args.seed)
    elif args.task == "mod_arith":
        samples = gen_mod_arith(args.m, args.brackets, args.len_min, args.len_max, args.count, args.seed)
    else:
        samples = gen_group_word(Group.parse(args.group), args.variant, args.length or args.len_max,
                                 args.count, args.seed)
    if args.out in (None, "-"):
        write_jsonl(samples, sys.stdout)
    else:
        with open(args.out, "w") as fh:
            write_jsonl(samples, fh)
    return EXIT_OK


def _train_configs(args, task):
    from .train import ModelConfig, TrainConfig, default_config

    model_kw, train_kw = default_config(args.task, args.layer, _task_kwargs(args))
    overrides = _read_json(args.config) if args.config else {}
    model_fields = set(ModelConfig.__dataclass_fields__)
    train_fields = set(TrainConfig.__dataclass_fields__)
    for key, value in overrides.items():
        if key in ("model", "train") and isinstance(value, dict):
            (model_kw if key == "model" else train_kw).update(value)
        elif key in model_fields:
            model_kw[key] = value
        elif key in train_fields:
            train_kw[key] = value
        else:
            raise ValueError(f"unknown config key {key!r}")
    for key in ("steps", "seed", "lr", "batch_size"):
        if getattr(args, key) is not None:
            train_kw[key] = getattr(args, key)
    model_kw.update(vocab=task.vocab, n_out=task.n_out, eigen_range=args.range)
    return ModelConfig(**model_kw), TrainConfig(**train_kw)


def cmd_train(args) -> int:
    from .train import init_params, make_task, save_checkpoint, train_loop, write_metrics_csv

    task = make_task(args.task, **_task_kwargs(args))
    cfg, tcfg = _train_configs(args, task)
    params = init_params(cfg, tcfg.seed)
    log = (lambda row: print(_dump(row), file=sys.stderr)) if args.verbose else None
    with _thread_limit(1):
        result = train_loop(params, cfg, task, tcfg, log=log, time_budget=args.time_budget)
    if args.out:
        save_checkpoint(args.out, result.params, cfg, task, tcfg)
    if args.metrics:
        with open(args.metrics, "w") as fh:
            write_metrics_csv(result.history, fh)
    print(_dump(result.history[-1] if result.history else {}))
    return EXIT_OK


def cmd_eval(args) -> int:
    from .train import TrainConfig, evaluate, make_task, task_from_dict

    predict_fn, doc = load_predictor(args.model)
    if args.task:
        task = make_task(args.task, **_task_kwargs(args))
    elif doc.get("task"):
        task = task_from_dict(doc["task"])
    else:
        raise ValueError("compiled checkpoints need --task")
    lengths = tuple(int(x) for x in args.lengths.split(",")) if args.lengths else ()
    rng = tuple(int(x) for x in args.range.split(":")) if args.range else ()
    tcfg = TrainConfig(eval_lengths=lengths, eval_range=rng, eval_count=args.count)
    with _thread_limit(None):
        row = evaluate(predict_fn, task, tcfg, seed=args.seed)
    print(_dump(row))
    return EXIT_OK


def cmd_verify(args) -> int:
    from .verify import format_table, run_suite

    with _thread_limit(None):
        rows = run_suite(args.suite, args.seed, args.quick)
    print(format_table(rows))
    return EXIT_OK if all(r["passed"] for r in rows) else EXIT_RUNTIME


# -- parser -------------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="statetrack", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compile", help="emit exact LRNN weights as JSON")
    p.add_argument("--target", required=True,
                   help="parity | cyclic:m | perm:<file> | modrefl:m | cascade:<file>")
    p.add_argument("--out", help="output file (default stdout)")
    p.add_argument("--range", default="symmetric", choices=["symmetric", "sym", "unit", "01"])
    p.add_argument("--renormalize-every", type=int, default=0)
    p.add_argument("--strict-gh", action="store_true", help="resets as n GH factors instead of Zero")
    p.set_defaults(func=cmd_compile)

    p = sub.add_parser("run", help="run a checkpoint on words, JSONL labels out")
    p.add_argument("--model", required=True)
    p.add_argument("--word", help='one word: "0110" or "3,2,4"')
    p.add_argument("--words", help="JSONL file of token lists or samples")
    p.add_argument("--grid", help="cast states onto this grid after every step")
    p.add_argument("--renormalize-every", type=int, default=None)
    p.add_argument("--out")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("demo", help="finite-precision period demo, JSON report")
    p.add_argument("--kind", required=True, choices=["positive_eigs", "negative_real", "rotation"])
    p.add_argument("--grid", default=None, help="uniform:lo:hi:step, explicit:..., JSON or file")
    p.add_argument("--kmax", type=int, default=10_000)
    p.add_argument("--m", type=int, help="rotation order")
    p.add_argument("--model", help="take A(token), B(token), H0 from a compiled checkpoint")
    p.add_argument("--layer", type=int, default=0)
    p.add_argument("--token", type=int, default=1)
    p.add_argument("--count", type=int, default=1, help="random layers to test")
    p.add_argument("--max-dim", type=int, default=4)
    p.add_argument("--max-period", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_demo)

    p = sub.add_parser("gen", help="generate a dataset as JSONL")
    _add_task_flags(p)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--len-min", type=int, default=3)
    p.add_argument("--len-max", type=int, default=40)
    p.add_argument("--length", type=int, help="fixed word length for group tasks")
    p.add_argument("--out")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="train a toy LRNN, write checkpoint and CSV metrics")
    _add_task_flags(p)
    p.add_argument("--layer", default="diag", choices=["diag", "delta", "full"])
    p.add_argument("--range", default="sym", choices=["01", "sym", "unit", "symmetric"])
    p.add_argument("--config", help="JSON overrides (ModelConfig / TrainConfig fields)")
    p.add_argument("--steps", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--time-budget", type=float, help="stop after this many seconds")
    p.add_argument("--out", help="checkpoint path")
    p.add_argument("--metrics", help="CSV metrics path")
    p.add_argument("--verbose", action="store_true", help="log evaluation rows to stderr")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="length-generalization accuracy of a checkpoint")
    p.add_argument("--model", required=True)
    _add_task_flags(p, required=False)
    p.add_argument("--lengths", default="40,64,128,256", help="comma-separated fixed lengths")
    p.add_argument("--range", default="40:256", help="lo:hi for uniformly sampled lengths ('' to skip)")
    p.add_argument("--count", type=int, default=512)
    p.add_argument("--seed", type=int, default=12345)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("verify", help="run the built-in invariant suite")
    p.add_argument("--suite", default="all", help="all, prop1, T1, T2, P1.1, P1.2, P1.3, T3, T4 or AppE")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--quick", action="store_true", help="smaller sample counts")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (KeyboardInterrupt, BrokenPipeError):
        return EXIT_RUNTIME
    except Exception as exc:
        print(f"statetrack {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

"""Command-line surface for the toolkit.

Subcommands: ``tokenize``, ``reduce-generate``, ``build-mcv``,
``ensemble-generate``, ``verify-lossless``, ``bench``.  Generation commands
can write a JSON-lines trace with one record per step (step index, chosen
sub-token, unnormalized marginals, normalizer, dropped top-K mass).

Exit codes: 0 on success (and verification PASS), 1 on runtime failure or
verification FAIL, 2 on usage or file-format errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .bench import run_bench
from .ensemble import EnsembleSpec
from .errors import FileFormatError, LvrError
from .files import (
    escape_bytes,
    load_table_model,
    load_tokenizer,
    load_vocabulary,
    save_merges,
    save_vocabulary,
    unescape_bytes,
)
from .mcv import build_mcv
from .model import train_ngram
from .oracle import lossless_check
from .reduction import DEFAULT_TOP_K, ReductionSession
from .tokenization import (
    BpeTokenizer,
    GreedyTokenizer,
    NestedTokenizer,
    byte_vocabulary,
)


def _parse_topk(value: str) -> int | None:
    if value == "exact":
        return None
    k = int(value)
    if k < 1:
        raise argparse.ArgumentTypeError("K must be >= 1 or 'exact'")
    return k


def _parse_member(value: str) -> dict[str, str]:
    fields: dict[str, str] = {}
    for part in value.split(","):
        if "=" not in part:
            raise argparse.ArgumentTypeError(
                f"member field {part!r} is not KEY=PATH"
            )
        key, _, path = part.partition("=")
        if key not in ("vocab", "merges", "model"):
            raise argparse.ArgumentTypeError(f"unknown member field {key!r}")
        fields[key] = path
    if "vocab" not in fields and "model" not in fields:
        raise argparse.ArgumentTypeError("member needs vocab= or model=")
    return fields


def _resolve_inner(subvocab: str, outer_tokenizers):
    if subvocab == "bytes":
        return GreedyTokenizer(byte_vocabulary(outer_tokenizers[0].vocab.alphabet))
    if subvocab == "mcv":
        if len(outer_tokenizers) < 2 or not all(
            isinstance(t, BpeTokenizer) for t in outer_tokenizers
        ):
            raise LvrError(
                "--subvocab mcv needs at least two members with merges files"
            )
        _, tokenizer = build_mcv(outer_tokenizers)
        return tokenizer
    return GreedyTokenizer(load_vocabulary(subvocab))


def _run_generation(next_dist, step_fn, vocab, args) -> bytes:
    rng = np.random.default_rng(args.seed) if args.decoding == "sample" else None
    eos = vocab.eos_id
    records = []
    out = bytearray()
    for i in range(args.max_steps):
        dist = next_dist()
        if rng is None:
            choice = int(np.argmax(dist.probs))
        else:
            cum = np.cumsum(dist.probs)
            choice = int(np.searchsorted(cum, rng.random() * cum[-1], side="right"))
        if args.trace is not None:
            records.append(
                {
                    "step": i,
                    "chosen": choice,
                    "chosen_surface": escape_bytes(vocab.surface(choice)),
                    "ptilde": [float(v) for v in dist.raw_marginals],
                    "normalizer": dist.normalizer,
                    "dropped_mass": dist.dropped_mass,
                }
            )
        step_fn(choice)
        if eos is not None and choice == eos:
            break
        out.extend(vocab.surface(choice))
    if args.trace is not None:
        Path(args.trace).write_text(
            "".join(json.dumps(r) + "\n" for r in records)
        )
    return bytes(out)


def _emit_text(text: bytes, args) -> None:
    if args.out is not None:
        Path(args.out).write_bytes(text)
    print(escape_bytes(text))


def cmd_tokenize(args) -> int:
    tokenizer = load_tokenizer(args.vocab, args.merges)
    if args.text is not None:
        data = unescape_bytes(args.text)
    else:
        data = sys.stdin.buffer.read()
    for tid in tokenizer.encode(data):
        print(f"{tid}\t{tokenizer.vocab.surface(tid).hex()}")
    return 0


def cmd_reduce_generate(args) -> int:
    model = load_table_model(args.model, args.merges)
    inner = _resolve_inner(args.subvocab, [model.tokenizer])
    session = ReductionSession(model, NestedTokenizer(model.tokenizer, inner), args.k)
    text = _run_generation(
        session.next_subtoken_dist, session.step, inner.vocab, args
    )
    _emit_text(text, args)
    return 0


def cmd_build_mcv(args) -> int:
    if len(args.vocab) < 2 or len(args.vocab) != len(args.merges):
        raise LvrError("build-mcv needs matching --vocab/--merges pairs, two or more")
    tokenizers = [
        load_tokenizer(v, m) for v, m in zip(args.vocab, args.merges)
    ]
    result, _ = build_mcv(tokenizers)
    save_vocabulary(result.vocab, args.out_vocab)
    save_merges(result.vocab, result.merges, args.out_merges)
    report = {
        "member_sizes": [len(t.vocab) for t in tokenizers],
        "intersection_size": len(result.vocab),
        "merges_kept": len(result.merges),
    }
    if args.report is not None:
        Path(args.report).write_text(json.dumps(report, indent=1) + "\n")
    print(json.dumps(report))
    return 0


def _load_members(args, need_model: bool):
    models = []
    tokenizers = []
    for fields in args.member:
        merges = fields.get("merges")
        if "model" in fields:
            model = load_table_model(fields["model"], merges)
        elif need_model:
            raise LvrError("every member needs model=")
        else:
            model = None
        if model is not None:
            tokenizer = model.tokenizer
        else:
            tokenizer = load_tokenizer(fields["vocab"], merges)
        models.append(model)
        tokenizers.append(tokenizer)
    return models, tokenizers


def cmd_ensemble_generate(args) -> int:
    models, tokenizers = _load_members(args, need_model=True)
    inner = _resolve_inner(args.subvocab, tokenizers)
    sessions = [
        ReductionSession(model, NestedTokenizer(tokenizer, inner), args.k)
        for model, tokenizer in zip(models, tokenizers)
    ]
    spec = EnsembleSpec(sessions, mode=args.mode)
    text = _run_generation(spec.next_dist, spec.step, inner.vocab, args)
    _emit_text(text, args)
    return 0


def cmd_verify_lossless(args) -> int:
    model = load_table_model(args.model, args.merges)
    inner = _resolve_inner(args.subvocab, [model.tokenizer])
    nested = NestedTokenizer(model.tokenizer, inner)
    report = lossless_check(
        model,
        nested,
        max_len=args.max_len,
        tol=args.tol,
        method=args.method,
        instance=str(args.model),
    )
    if args.out is not None:
        Path(args.out).write_text(json.dumps(report.to_json_dict(), indent=1) + "\n")
    verdict = "PASS" if report.passed else "FAIL"
    print(
        f"{verdict}: max discrepancy {report.max_discrepancy:.3e} over "
        f"{len(report.rows)} texts (tolerance {report.tolerance:.1e}, "
        f"method {report.method})"
    )
    return 0 if report.passed else 1


def cmd_bench(args) -> int:
    models, tokenizers = _load_members(args, need_model=False)
    corpus = [
        line for line in Path(args.corpus).read_bytes().splitlines() if line
    ]
    members = []
    for model, tokenizer in zip(models, tokenizers):
        if model is None:
            model = train_ngram(corpus, tokenizer, args.order, args.alpha)
        members.append((model, tokenizer))
    report = run_bench(
        members,
        corpus,
        target_bytes=args.target_bytes,
        seed=args.seed,
        topk=args.k,
        mode=args.mode,
    )
    if args.out is not None:
        Path(args.out).write_text(json.dumps(report, indent=1) + "\n")
    print(json.dumps(report))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lvr",
        description="Lossless vocabulary reduction toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_generation_flags(p):
        p.add_argument("--k", type=_parse_topk, default=DEFAULT_TOP_K,
                       help="top-K extensions per step, or 'exact'")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--decoding", choices=("greedy", "sample"), default="greedy")
        p.add_argument("--max-steps", type=int, default=64)
        p.add_argument("--trace", default=None, help="JSON-lines trace path")
        p.add_argument("--out", default=None, help="write raw output bytes here")

    p = sub.add_parser("tokenize", help="encode text and list tokens")
    p.add_argument("--vocab", required=True)
    p.add_argument("--merges", default=None)
    p.add_argument("--text", default=None,
                   help="escaped input text (default: read stdin)")
    p.set_defaults(func=cmd_tokenize)

    p = sub.add_parser("reduce-generate", help="generate from a reduced model")
    p.add_argument("--model", required=True)
    p.add_argument("--merges", default=None)
    p.add_argument("--subvocab", required=True, help="bytes | path to vocab JSON")
    add_generation_flags(p)
    p.set_defaults(func=cmd_reduce_generate)

    p = sub.add_parser("build-mcv", help="intersect BPE tokenizers")
    p.add_argument("--vocab", action="append", default=[])
    p.add_argument("--merges", action="append", default=[])
    p.add_argument("--out-vocab", required=True)
    p.add_argument("--out-merges", required=True)
    p.add_argument("--report", default=None)
    p.set_defaults(func=cmd_build_mcv)

    p = sub.add_parser("ensemble-generate", help="lock-step ensemble generation")
    p.add_argument("--member", action="append", required=True, type=_parse_member,
                   help="vocab=PATH[,merges=PATH][,model=PATH]")
    p.add_argument("--subvocab", required=True, help="mcv | bytes | path")
    p.add_argument("--mode", choices=("poe", "moe"), default="poe")
    add_generation_flags(p)
    p.set_defaults(func=cmd_ensemble_generate)

    p = sub.add_parser("verify-lossless", help="certify the reduction on a model")
    p.add_argument("--model", required=True)
    p.add_argument("--merges", default=None)
    p.add_argument("--subvocab", required=True, help="bytes | path")
    p.add_argument("--max-len", type=int, default=4)
    p.add_argument("--tol", type=float, default=1e-9)
    p.add_argument("--method", choices=("reduction", "naive"), default="reduction")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_verify_lossless)

    p = sub.add_parser("bench", help="byte-level vs MCV generation throughput")
    p.add_argument("--member", action="append", required=True, type=_parse_member)
    p.add_argument("--corpus", required=True)
    p.add_argument("--order", type=int, default=2)
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--target-bytes", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--k", type=_parse_topk, default=DEFAULT_TOP_K)
    p.add_argument("--mode", choices=("poe", "moe"), default="poe")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_bench)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except FileFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except LvrError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

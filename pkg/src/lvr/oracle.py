"""Brute-force text-distribution oracles.

Everything here computes probabilities of the form "the generated text
starts with these bytes" by exhaustive enumeration, independently of the
reduction engine's cover recursion, so the engine can be certified against
it on small instances.

Two independent routes exist for the original model: summing marginals over
the enumerated minimal cover of a text, and walking the token tree weighted
by conditionals.  The reduced model's text probabilities are assembled from
the engine's own unnormalized marginals but over *enumerated* covers, so a
defect in either side shows up as a discrepancy.

All enumerations charge a shared budget (default 2e6 visits, overridable
via the ``LVR_ENUM_BUDGET`` environment variable) and refuse to run past
it.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Callable, Sequence

from .errors import BudgetExceededError
from .files import escape_bytes
from .model import LanguageModel
from .reduction import ReductionSession, naive_restriction_dist
from .tokenization import DeterministicTokenizer, NestedTokenizer, TokenSeq

DEFAULT_ENUM_BUDGET = 2_000_000


def enumeration_budget() -> int:
    raw = os.environ.get("LVR_ENUM_BUDGET")
    return int(raw) if raw else DEFAULT_ENUM_BUDGET


class _Budget:
    def __init__(self, limit: int | None):
        self.limit = limit if limit is not None else enumeration_budget()
        self.used = 0

    def tick(self, n: int = 1) -> None:
        self.used += n
        if self.used > self.limit:
            raise BudgetExceededError(
                f"enumeration exceeded the budget of {self.limit} visits"
            )


def _as_budget(budget: "int | _Budget | None") -> _Budget:
    return budget if isinstance(budget, _Budget) else _Budget(budget)


def minimal_cover(
    tokenizer: DeterministicTokenizer, text: bytes, budget: int | _Budget | None = None
) -> list[TokenSeq]:
    """All valid token sequences that cover ``text`` and only just: dropping
    the last token leaves a proper prefix of ``text``.

    Enumerated exhaustively; decoded lengths never exceed ``len(text) - 1``
    plus one token surface.  The empty text is covered by the empty
    sequence alone.
    """
    if text == b"":
        return [()]
    bud = _as_budget(budget)
    surfaces = tokenizer.vocab.surfaces
    found: list[TokenSeq] = []

    def rec(seq: TokenSeq, decoded: bytes) -> None:
        for tid, surf in enumerate(surfaces):
            bud.tick()
            nd = decoded + surf
            if len(nd) >= len(text):
                if nd.startswith(text) and tokenizer.is_valid(seq + (tid,)):
                    found.append(seq + (tid,))
            elif text.startswith(nd):
                rec(seq + (tid,), nd)

    rec((), b"")
    return found


def text_prefix_prob(
    model: LanguageModel,
    tokenizer: DeterministicTokenizer,
    text: bytes,
    budget: int | _Budget | None = None,
) -> float:
    """Probability that the decoded output starts with ``text``: the sum of
    the model's marginals over the enumerated minimal cover."""
    return sum(model.marginal(seq) for seq in minimal_cover(tokenizer, text, budget))


def text_prefix_prob_exhaustive(
    model: LanguageModel, text: bytes, budget: int | _Budget | None = None
) -> float:
    """Same quantity by direct token-tree enumeration: walk every
    positive-probability token sequence until its decoding first extends
    ``text``, accumulating chain-rule marginals.  Shares no code with the
    cover route."""
    if text == b"":
        return 1.0
    bud = _as_budget(budget)
    surfaces = model.vocab.surfaces

    def rec(prefix: TokenSeq, decoded: bytes, marg: float) -> float:
        total = 0.0
        cond = model.next_token_dist(prefix)
        for tid, c in enumerate(cond):
            bud.tick()
            if c <= 0.0:
                continue
            nd = decoded + surfaces[tid]
            if nd.startswith(text):
                total += marg * c
            elif text.startswith(nd):
                total += rec(prefix + (tid,), nd, marg * c)
        return total

    return rec((), b"", 1.0)


def reduced_text_prefix_prob(
    session_factory: Callable[[], ReductionSession],
    text: bytes,
    budget: int | _Budget | None = None,
) -> float:
    """Text-prefix probability under the reduced model: enumerate the
    minimal cover of ``text`` with the nested tokenizer, then sum the
    engine's unnormalized marginals over it.

    Sessions must be exact (no top-K truncation) for the result to be a
    true probability.
    """
    probe = session_factory()
    if probe.topk is not None and probe.topk < len(probe.model.vocab):
        raise ValueError("reduced-model oracle requires exact (untruncated) sessions")
    cover = minimal_cover(probe.nested, text, budget)
    total = 0.0
    for ys in cover:
        total += _session_marginal(session_factory(), ys)
    return total


def _session_marginal(session: ReductionSession, ys: TokenSeq) -> float:
    if not ys:
        return 1.0
    for i, y in enumerate(ys):
        dist = session.next_subtoken_dist()
        raw = float(dist.raw_marginals[y])
        if raw <= 0.0:
            return 0.0
        if i + 1 == len(ys):
            return raw
        session.step(y)
    raise AssertionError("unreachable")


# -- whole-table enumeration ----------------------------------------------
#
# The per-text oracles above cost an enumeration per call.  The table
# variants compute prefix probabilities for *every* text up to a length in
# a single sweep, which is what the randomized acceptance suites run on.


def _content_symbols(model_vocab) -> list[int]:
    eos = model_vocab.alphabet.eos
    return sorted(s for s in model_vocab.alphabet.symbols if s != eos)


def _all_texts(symbols: Sequence[int], max_len: int) -> list[bytes]:
    texts: list[bytes] = [b""]
    frontier: list[bytes] = [b""]
    for _ in range(max_len):
        frontier = [t + bytes([s]) for t in frontier for s in symbols]
        texts.extend(frontier)
    return texts


def _contribute(
    table: dict[bytes, float], nd: bytes, lo: int, max_len: int, value: float
) -> None:
    # nd first covers every text nd[:n] with lo < n <= min(len(nd), max_len);
    # texts containing the terminator are not tabulated.
    for n in range(lo + 1, min(len(nd), max_len) + 1):
        t = nd[:n]
        if t in table:
            table[t] += value


def original_prefix_prob_table(
    model: LanguageModel, max_len: int, budget: int | _Budget | None = None
) -> dict[bytes, float]:
    """Token-tree sweep of the original model: prefix probability of every
    terminator-free text of length <= ``max_len``."""
    bud = _as_budget(budget)
    symbols = _content_symbols(model.vocab)
    table = {t: 0.0 for t in _all_texts(symbols, max_len)}
    table[b""] = 1.0
    surfaces = model.vocab.surfaces
    eos = model.vocab.eos_id

    def rec(prefix: TokenSeq, decoded: bytes, marg: float) -> None:
        cond = model.next_token_dist(prefix)
        for tid, c in enumerate(cond):
            bud.tick()
            if c <= 0.0 or tid == eos:
                continue
            nd = decoded + surfaces[tid]
            child = marg * float(c)
            _contribute(table, nd, len(decoded), max_len, child)
            if len(nd) <= max_len - 1:
                rec(prefix + (tid,), nd, child)

    rec((), b"", 1.0)
    return table


def reduced_prefix_prob_table(
    session: ReductionSession, max_len: int, budget: int | _Budget | None = None
) -> dict[bytes, float]:
    """Sub-token-tree sweep of the reduced model, using the engine's
    unnormalized marginals; the session must be fresh and exact."""
    bud = _as_budget(budget)
    symbols = _content_symbols(session.model.vocab)
    table = {t: 0.0 for t in _all_texts(symbols, max_len)}
    table[b""] = 1.0
    sub_surfaces = session.nested.vocab.surfaces
    eos = session.nested.vocab.eos_id

    def rec(sess: ReductionSession, decoded: bytes) -> None:
        dist = sess.next_subtoken_dist()
        raw = dist.raw_marginals
        for y in range(len(raw)):
            bud.tick()
            if raw[y] <= 0.0 or y == eos:
                continue
            nd = decoded + sub_surfaces[y]
            _contribute(table, nd, len(decoded), max_len, float(raw[y]))
            if len(nd) <= max_len - 1:
                rec(sess.branch(y), nd)

    rec(session, b"")
    return table


def naive_restriction_prefix_prob_table(
    model: LanguageModel,
    nested: NestedTokenizer,
    max_len: int,
    budget: int | _Budget | None = None,
) -> dict[bytes, float]:
    """Text-prefix probabilities of the naive-restriction baseline, treating
    it as an autoregressive generator over the sub-vocabulary."""
    bud = _as_budget(budget)
    symbols = _content_symbols(model.vocab)
    table = {t: 0.0 for t in _all_texts(symbols, max_len)}
    table[b""] = 1.0
    sub_surfaces = nested.vocab.surfaces
    eos = nested.vocab.eos_id

    def rec(prefix: TokenSeq, decoded: bytes, p: float) -> None:
        dist = naive_restriction_dist(model, nested, prefix)
        for y, q in enumerate(dist.probs):
            bud.tick()
            if q <= 0.0 or y == eos:
                continue
            nd = decoded + sub_surfaces[y]
            child = p * float(q)
            _contribute(table, nd, len(decoded), max_len, child)
            if len(nd) <= max_len - 1:
                rec(prefix + (y,), nd, child)

    rec((), b"", 1.0)
    return table


@dataclass
class PrefixProbReport:
    """Per-text comparison of original vs reduced prefix probabilities."""

    instance: str
    method: str
    max_len: int
    tolerance: float
    rows: list[tuple[bytes, float, float]]  # (text, original, reduced)
    max_discrepancy: float
    passed: bool
    budget_used: int

    def to_json_dict(self) -> dict:
        return {
            "instance": self.instance,
            "method": self.method,
            "max_len": self.max_len,
            "tolerance": self.tolerance,
            "max_discrepancy": self.max_discrepancy,
            "passed": self.passed,
            "budget_used": self.budget_used,
            "rows": [
                {
                    "text": escape_bytes(text),
                    "original": orig,
                    "reduced": red,
                    "discrepancy": abs(orig - red),
                }
                for text, orig, red in self.rows
            ],
        }


def lossless_check(
    model: LanguageModel,
    nested: NestedTokenizer,
    max_len: int,
    tol: float = 1e-9,
    budget: int | _Budget | None = None,
    method: str = "reduction",
    instance: str = "",
) -> PrefixProbReport:
    """Compare original and reduced text-prefix probabilities for every
    terminator-free text up to ``max_len``.

    ``method="reduction"`` checks the exact reduction engine (this is the
    lossless claim); ``method="naive"`` substitutes the naive-restriction
    baseline, which is expected to fail.  Raises ``BudgetExceededError``
    instead of starting an enumeration larger than the budget.
    """
    if method not in ("reduction", "naive"):
        raise ValueError(f"unknown method {method!r}")
    bud = _as_budget(budget)
    n_texts = len(_all_texts(_content_symbols(model.vocab), max_len))
    if n_texts > bud.limit:
        raise BudgetExceededError(
            f"{n_texts} texts of length <= {max_len} exceed the budget {bud.limit}"
        )
    original = original_prefix_prob_table(model, max_len, bud)
    if method == "reduction":
        session = ReductionSession(model, nested, topk=None)
        reduced = reduced_prefix_prob_table(session, max_len, bud)
    else:
        reduced = naive_restriction_prefix_prob_table(model, nested, max_len, bud)
    rows = [(t, float(original[t]), float(reduced[t])) for t in sorted(original)]
    max_disc = max(abs(o - r) for _, o, r in rows)
    return PrefixProbReport(
        instance=instance,
        method=method,
        max_len=max_len,
        tolerance=tol,
        rows=rows,
        max_discrepancy=max_disc,
        passed=bool(max_disc <= tol),
        budget_used=bud.used,
    )

"""Byte-level texts, vocabularies, and deterministic tokenizers.

A text is a ``bytes`` value over a configurable alphabet (the full 256-byte
alphabet by default, or a toy alphabet such as ``{0, 1}``).  A vocabulary is
an ordered list of distinct, nonempty byte-string surfaces; token ids are
dense indices into that list.  Two encoder families are provided (greedy
longest-match and BPE merge-list), plus the nested tokenizer that re-encodes
each token's surface with a sub-vocabulary tokenizer.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import TokenizationError

TokenSeq = tuple[int, ...]


@dataclass(frozen=True)
class Alphabet:
    """Set of byte values texts may use, with an optional reserved terminator.

    The terminator symbol, when present, may only appear as the surface of
    the dedicated end-of-sequence token; no other token surface may contain
    it.
    """

    symbols: frozenset[int]
    eos: int | None = None

    def __post_init__(self):
        if not self.symbols:
            raise TokenizationError("alphabet must be nonempty")
        if any(not 0 <= s <= 255 for s in self.symbols):
            raise TokenizationError("alphabet symbols must be byte values")
        if self.eos is not None and self.eos not in self.symbols:
            raise TokenizationError("terminator symbol must belong to the alphabet")

    @classmethod
    def bytes(cls, eos: int | None = None) -> "Alphabet":
        """Full 256-byte alphabet (the default for real tokenizers)."""
        return cls(frozenset(range(256)), eos=eos)

    @classmethod
    def of(cls, chars: str | bytes, eos: str | bytes | None = None) -> "Alphabet":
        """Toy alphabet built from the given characters."""
        data = chars.encode() if isinstance(chars, str) else bytes(chars)
        symbols = set(data)
        eos_val = None
        if eos is not None:
            eos_b = eos.encode() if isinstance(eos, str) else bytes(eos)
            if len(eos_b) != 1:
                raise TokenizationError("terminator must be a single symbol")
            eos_val = eos_b[0]
            symbols.add(eos_val)
        return cls(frozenset(symbols), eos=eos_val)

    def contains_text(self, text: bytes) -> bool:
        return all(b in self.symbols for b in text)


class Vocabulary:
    """Ordered set of tokens; each token is ``(id, surface)`` with the id
    equal to the surface's position in the list.

    Surfaces are pairwise-distinct nonempty byte strings.  The vocabulary is
    *complete* when every alphabet symbol occurs as a single-byte surface;
    completeness is what makes an encoder total on all texts.
    """

    def __init__(self, surfaces: Iterable[bytes], alphabet: Alphabet | None = None):
        self.surfaces: tuple[bytes, ...] = tuple(bytes(s) for s in surfaces)
        self.alphabet = alphabet if alphabet is not None else Alphabet.bytes()
        if not self.surfaces:
            raise TokenizationError("vocabulary must be nonempty")
        self.index: dict[bytes, int] = {}
        for tid, surf in enumerate(self.surfaces):
            if not surf:
                raise TokenizationError(f"token {tid} has an empty surface")
            if surf in self.index:
                raise TokenizationError(f"duplicate token surface {surf!r}")
            if not self.alphabet.contains_text(surf):
                raise TokenizationError(
                    f"token surface {surf!r} uses symbols outside the alphabet"
                )
            self.index[surf] = tid
        eos = self.alphabet.eos
        if eos is not None:
            for surf in self.surfaces:
                if eos in surf and surf != bytes([eos]):
                    raise TokenizationError(
                        f"surface {surf!r} contains the terminator symbol"
                    )
        self.eos_id: int | None = (
            self.index.get(bytes([eos])) if eos is not None else None
        )
        self.complete: bool = all(
            bytes([s]) in self.index for s in self.alphabet.symbols
        )

    def __len__(self) -> int:
        return len(self.surfaces)

    def surface(self, tid: int) -> bytes:
        if not 0 <= tid < len(self.surfaces):
            raise TokenizationError(f"unknown token id {tid}")
        return self.surfaces[tid]

    def id_of(self, surface: bytes) -> int:
        try:
            return self.index[surface]
        except KeyError:
            raise TokenizationError(f"unknown token surface {surface!r}") from None

    def decode(self, ids: Sequence[int]) -> bytes:
        """Concatenate surfaces; the decoder is a homomorphism and
        ``decode(()) == b""``."""
        return b"".join(self.surface(t) for t in ids)


def byte_vocabulary(alphabet: Alphabet) -> Vocabulary:
    """The single-symbol vocabulary over an alphabet, in symbol order: the
    byte-level special case of a sub-vocabulary."""
    return Vocabulary([bytes([s]) for s in sorted(alphabet.symbols)], alphabet)


class DeterministicTokenizer:
    """Encoder/decoder pair; ``decode(encode(t)) == t`` for every text."""

    vocab: Vocabulary

    def encode(self, text: bytes) -> TokenSeq:
        raise NotImplementedError

    def decode(self, ids: Sequence[int]) -> bytes:
        return self.vocab.decode(ids)

    def is_valid(self, ids: Sequence[int]) -> bool:
        """True iff re-encoding the decoded surface reproduces ``ids``
        exactly; these are precisely the sequences the encoder can emit."""
        ids = tuple(ids)
        return self.encode(self.decode(ids)) == ids

    def valid_continuations(self, prefix: Sequence[int]) -> np.ndarray:
        """Boolean mask over the vocabulary: entry ``x`` is True iff
        ``prefix + (x,)`` is a valid sequence."""
        prefix = tuple(prefix)
        decoded = self.decode(prefix)
        mask = np.zeros(len(self.vocab), dtype=bool)
        for tid, surf in enumerate(self.vocab.surfaces):
            mask[tid] = self.encode(decoded + surf) == prefix + (tid,)
        return mask


class GreedyTokenizer(DeterministicTokenizer):
    """Greedy forward matching: repeatedly consume the longest vocabulary
    surface that prefixes the remaining text."""

    def __init__(self, vocab: Vocabulary):
        if not vocab.complete:
            raise TokenizationError("greedy tokenizer requires a complete vocabulary")
        self.vocab = vocab
        # Trie of surfaces: child maps keyed by byte value; -1 marks "no token
        # ends here".
        self._children: list[dict[int, int]] = [{}]
        self._terminal: list[int] = [-1]
        for tid, surf in enumerate(vocab.surfaces):
            node = 0
            for b in surf:
                nxt = self._children[node].get(b)
                if nxt is None:
                    nxt = len(self._children)
                    self._children.append({})
                    self._terminal.append(-1)
                    self._children[node][b] = nxt
                node = nxt
            self._terminal[node] = tid

    def encode(self, text: bytes) -> TokenSeq:
        out: list[int] = []
        pos = 0
        n = len(text)
        children = self._children
        terminal = self._terminal
        while pos < n:
            node = 0
            best = -1
            best_len = 0
            i = pos
            while i < n:
                node = children[node].get(text[i], -1)
                if node < 0:
                    break
                i += 1
                if terminal[node] >= 0:
                    best = terminal[node]
                    best_len = i - pos
            if best < 0:
                raise TokenizationError(
                    f"no token matches text at offset {pos} (symbol {text[pos]:#04x})"
                )
            out.append(best)
            pos += best_len
        return tuple(out)


class BpeTokenizer(DeterministicTokenizer):
    """Byte-pair encoding: start from single-symbol tokens and repeatedly
    apply the lowest-ranked applicable merge, leftmost occurrence first among
    equal ranks, until no merge applies."""

    def __init__(self, vocab: Vocabulary, merges: Sequence[tuple[int, int]]):
        if not vocab.complete:
            raise TokenizationError("BPE tokenizer requires a complete vocabulary")
        self.vocab = vocab
        self.merges: tuple[tuple[int, int], ...] = tuple(
            (int(a), int(b)) for a, b in merges
        )
        self._single_table = np.full(256, -1, dtype=np.int64)
        for surf in vocab.surfaces:
            if len(surf) == 1:
                self._single_table[surf[0]] = vocab.index[surf]
        # (left, right) -> (rank, product id); first occurrence wins on dupes.
        self._pair_rank: dict[tuple[int, int], tuple[int, int]] = {}
        for rank, (a, b) in enumerate(self.merges):
            product = vocab.surface(a) + vocab.surface(b)
            pid = vocab.index.get(product)
            if pid is None:
                raise TokenizationError(
                    f"merge {rank} produces {product!r}, not in the vocabulary"
                )
            self._pair_rank.setdefault((a, b), (rank, pid))
        # dense (left, right) -> rank + 1 lookup for the vectorized pair scan
        size = len(vocab)
        self._rank_mat = None
        if self._pair_rank and size * size <= 8_000_000:
            self._rank_mat = np.zeros((size, size), dtype=np.int32)
            for (a, b), (rank, _) in self._pair_rank.items():
                self._rank_mat[a, b] = rank + 1

    def encode(self, text: bytes) -> TokenSeq:
        arr = self._single_table[np.frombuffer(text, dtype=np.uint8)]
        if arr.size and arr.min() < 0:
            bad = int(text[int(np.argmin(arr))])
            raise TokenizationError(f"no single-symbol token for byte {bad:#04x}")
        tok = arr.tolist()
        n = len(tok)
        if n < 2 or not self._pair_rank:
            return tuple(tok)
        nxt = list(range(1, n)) + [-1]
        prv = [-1] + list(range(n - 1))
        alive = [True] * n
        pair_rank = self._pair_rank
        if self._rank_mat is not None:
            ranks = self._rank_mat[arr[:-1], arr[1:]]
            positions = np.flatnonzero(ranks)
            heap = list(zip((ranks[positions] - 1).tolist(), positions.tolist()))
        else:
            heap = []
            for i in range(n - 1):
                hit = pair_rank.get((tok[i], tok[i + 1]))
                if hit is not None:
                    heap.append((hit[0], i))
        heapq.heapify(heap)
        while heap:
            rank, pos = heapq.heappop(heap)
            if not alive[pos]:
                continue
            right = nxt[pos]
            if right < 0:
                continue
            hit = pair_rank.get((tok[pos], tok[right]))
            if hit is None or hit[0] != rank:
                continue  # stale entry
            tok[pos] = hit[1]
            alive[right] = False
            after = nxt[right]
            nxt[pos] = after
            if after >= 0:
                prv[after] = pos
                new = pair_rank.get((tok[pos], tok[after]))
                if new is not None:
                    heapq.heappush(heap, (new[0], pos))
            before = prv[pos]
            if before >= 0:
                new = pair_rank.get((tok[before], tok[pos]))
                if new is not None:
                    heapq.heappush(heap, (new[0], before))
        out = []
        i = 0
        while i >= 0:
            out.append(tok[i])
            i = nxt[i]
        return tuple(out)


class NestedTokenizer(DeterministicTokenizer):
    """Composition of an outer tokenizer over V with an inner tokenizer over
    a sub-vocabulary: encode with the outer tokenizer, then re-encode each
    token's surface with the inner one.

    This is itself a deterministic tokenizer over the sub-vocabulary, so it
    plugs directly into the cover-enumeration oracle.
    """

    def __init__(self, outer: DeterministicTokenizer, inner: DeterministicTokenizer):
        for surf in inner.vocab.surfaces:
            if surf not in outer.vocab.index:
                raise TokenizationError(
                    f"sub-vocabulary surface {surf!r} is not an outer token"
                )
        self.outer = outer
        self.inner = inner
        self.vocab = inner.vocab  # the vocabulary this tokenizer emits
        # Per-token re-encoding of each outer surface.
        self.mapping: tuple[TokenSeq, ...] = tuple(
            inner.encode(surf) for surf in outer.vocab.surfaces
        )

    def nested_encode(self, outer_ids: Sequence[int]) -> TokenSeq:
        """Concatenated per-token re-encodings; preserves decode."""
        out: list[int] = []
        for t in outer_ids:
            if not 0 <= t < len(self.mapping):
                raise TokenizationError(f"unknown token id {t}")
            out.extend(self.mapping[t])
        return tuple(out)

    def encode(self, text: bytes) -> TokenSeq:
        return self.nested_encode(self.outer.encode(text))

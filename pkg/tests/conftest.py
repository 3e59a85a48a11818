"""Shared fixtures: the binary worked-example model and randomized desk-scale
instances (complete greedy vocabulary, validity-masked table model, complete
sub-vocabulary)."""

from __future__ import annotations

from typing import NamedTuple

import numpy as np
import pytest

from lvr import (
    Alphabet,
    GreedyTokenizer,
    NestedTokenizer,
    TableModel,
    Vocabulary,
)

LETTERS = b"abcdefgh"


class Instance(NamedTuple):
    model: TableModel
    tokenizer: GreedyTokenizer
    inner: GreedyTokenizer
    nested: NestedTokenizer


def binary_instance() -> Instance:
    """The 4-token binary model with two hand-written conditional tables:
    V = {0, 1, 00, 001} reduced onto {0, 1, 00}."""
    alphabet = Alphabet.of("01")
    vocab = Vocabulary([b"0", b"1", b"00", b"001"], alphabet)
    sub = Vocabulary([b"0", b"1", b"00"], alphabet)
    tokenizer = GreedyTokenizer(vocab)
    inner = GreedyTokenizer(sub)
    model = TableModel(
        tokenizer,
        {
            (): np.array([0.1, 0.1, 0.5, 0.3]),
            (2,): np.array([0.6, 0.0, 0.3, 0.1]),
        },
        default=np.full(4, 0.25),
    )
    return Instance(model, tokenizer, inner, NestedTokenizer(tokenizer, inner))


@pytest.fixture
def binary() -> Instance:
    return binary_instance()


def _random_positive_dist(rng: np.random.Generator, size: int) -> np.ndarray:
    vec = rng.uniform(0.05, 1.0, size)
    return vec / vec.sum()


def make_instance(
    rng: np.random.Generator,
    n_symbols: int = 2,
    with_eos: bool = True,
    n_multi: int = 3,
    max_surface: int = 3,
    n_sub_multi: int = 1,
) -> Instance:
    """Random instance: complete greedy vocabulary over a small alphabet
    (plus an optional ``$`` terminator), a table model with random positive
    conditionals for depth-0/1 prefixes and a random default, and a random
    complete sub-vocabulary."""
    content = LETTERS[:n_symbols]
    alphabet = Alphabet.of(content, eos="$" if with_eos else None)
    singles = [bytes([s]) for s in sorted(alphabet.symbols)]
    multis: list[bytes] = []
    while len(multis) < n_multi:
        length = int(rng.integers(2, max_surface + 1))
        surf = bytes(content[rng.integers(len(content))] for _ in range(length))
        if surf not in multis:
            multis.append(surf)
    vocab = Vocabulary(singles + multis, alphabet)
    chosen = [multis[i] for i in rng.permutation(len(multis))[:n_sub_multi]]
    sub = Vocabulary(singles + sorted(chosen), alphabet)
    tokenizer = GreedyTokenizer(vocab)
    inner = GreedyTokenizer(sub)
    size = len(vocab)
    entries = {(): _random_positive_dist(rng, size)}
    for tid in range(size):
        entries[(tid,)] = _random_positive_dist(rng, size)
    model = TableModel(
        tokenizer, entries, default=_random_positive_dist(rng, size)
    )
    return Instance(model, tokenizer, inner, NestedTokenizer(tokenizer, inner))

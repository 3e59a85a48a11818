"""On-disk formats: vocabulary JSON, merges text, and table-model JSON.

Vocabulary file: a JSON array of token surfaces; the array index is the
token id.  Surfaces are strings in which backslashes, control characters,
and bytes that are not valid UTF-8 are hex-escaped as ``\\xNN``.

Merges file: one merge per line, ``LEFT_SURFACE<TAB>RIGHT_SURFACE``, with
the line number as the merge rank.

Table-model file: ``{"vocab": <path>, "entries": [{"prefix": [ids],
"probs": [floats]}], "default": [floats] | null}``.

The alphabet of a loaded vocabulary is inferred from its single-byte
surfaces (a usable vocabulary always contains them); a NUL (``\\x00``)
single-byte token, when present, is treated as the reserved terminator.
"""

from __future__ import annotations

import json
import re
from pathlib import Path

import numpy as np

from .errors import FileFormatError
from .tokenization import Alphabet, BpeTokenizer, DeterministicTokenizer, GreedyTokenizer, Vocabulary

EOS_BYTE = 0x00

_ESCAPE_RE = re.compile(r"\\x([0-9a-fA-F]{2})|\\\\|(.)", re.DOTALL)


def escape_bytes(data: bytes) -> str:
    """Render arbitrary bytes as a printable string, ``\\xNN``-escaping
    anything that would not round-trip."""
    out: list[str] = []
    i = 0
    n = len(data)
    while i < n:
        ch = None
        for width in (1, 2, 3, 4):
            if i + width > n:
                break
            try:
                decoded = data[i : i + width].decode("utf-8")
            except UnicodeDecodeError:
                continue
            ch = decoded
            break
        if ch is not None and ch != "\\" and ch.isprintable():
            out.append(ch)
            i += len(ch.encode("utf-8"))
        else:
            out.append(f"\\x{data[i]:02x}")
            i += 1
    return "".join(out)


def unescape_bytes(text: str) -> bytes:
    """Inverse of :func:`escape_bytes`."""
    out = bytearray()
    for match in _ESCAPE_RE.finditer(text):
        if match.group(1) is not None:
            out.append(int(match.group(1), 16))
        elif match.group(0) == "\\\\":
            out.append(ord("\\"))
        else:
            out.extend(match.group(2).encode("utf-8"))
    return bytes(out)


def _infer_alphabet(surfaces: list[bytes]) -> Alphabet:
    symbols = {b for s in surfaces for b in s}
    eos = EOS_BYTE if any(s == b"\x00" for s in surfaces) else None
    return Alphabet(frozenset(symbols), eos=eos)


def save_vocabulary(vocab: Vocabulary, path: str | Path) -> None:
    rows = [escape_bytes(s) for s in vocab.surfaces]
    Path(path).write_text(json.dumps(rows, indent=0) + "\n")


def load_vocabulary(path: str | Path) -> Vocabulary:
    try:
        rows = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise FileFormatError(f"cannot parse vocabulary file {path}: {exc}") from exc
    if not isinstance(rows, list) or not all(isinstance(r, str) for r in rows):
        raise FileFormatError(f"{path}: expected a JSON array of strings")
    surfaces = [unescape_bytes(r) for r in rows]
    try:
        return Vocabulary(surfaces, _infer_alphabet(surfaces))
    except Exception as exc:
        raise FileFormatError(f"{path}: {exc}") from exc


def save_merges(vocab: Vocabulary, merges: list[tuple[int, int]], path: str | Path) -> None:
    lines = [
        f"{escape_bytes(vocab.surface(a))}\t{escape_bytes(vocab.surface(b))}"
        for a, b in merges
    ]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


def load_merges(vocab: Vocabulary, path: str | Path) -> list[tuple[int, int]]:
    merges: list[tuple[int, int]] = []
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise FileFormatError(f"cannot read merges file {path}: {exc}") from exc
    for lineno, line in enumerate(text.splitlines()):
        if not line:
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise FileFormatError(f"{path}:{lineno + 1}: expected LEFT<TAB>RIGHT")
        try:
            merges.append(
                (vocab.id_of(unescape_bytes(parts[0])), vocab.id_of(unescape_bytes(parts[1])))
            )
        except Exception as exc:
            raise FileFormatError(f"{path}:{lineno + 1}: {exc}") from exc
    return merges


def load_tokenizer(vocab_path: str | Path, merges_path: str | Path | None = None) -> DeterministicTokenizer:
    """Greedy tokenizer from a vocabulary file, or BPE when a merges file is
    also given."""
    vocab = load_vocabulary(vocab_path)
    if merges_path is None:
        return GreedyTokenizer(vocab)
    return BpeTokenizer(vocab, load_merges(vocab, merges_path))


def save_table_model(model, path: str | Path, vocab_path: str | Path) -> None:
    doc = {
        "vocab": str(vocab_path),
        "entries": [
            {"prefix": list(prefix), "probs": [float(p) for p in probs]}
            for prefix, probs in model.entries.items()
        ],
        "default": [float(p) for p in model.default] if model.default is not None else None,
    }
    if not model.renormalize:
        doc["renormalize"] = False
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")


def load_table_model(path: str | Path, merges_path: str | Path | None = None):
    """Load a table model; the vocabulary path inside the file is resolved
    relative to the file's directory."""
    from .model import TableModel

    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise FileFormatError(f"cannot parse model file {path}: {exc}") from exc
    try:
        vocab_path = Path(path).parent / doc["vocab"]
        tokenizer = load_tokenizer(vocab_path, merges_path)
        entries = {
            tuple(int(t) for t in row["prefix"]): np.asarray(row["probs"], dtype=float)
            for row in doc["entries"]
        }
        default = (
            np.asarray(doc["default"], dtype=float)
            if doc.get("default") is not None
            else None
        )
        return TableModel(
            tokenizer, entries, default=default, renormalize=doc.get("renormalize", True)
        )
    except FileFormatError:
        raise
    except Exception as exc:
        raise FileFormatError(f"{path}: {exc}") from exc

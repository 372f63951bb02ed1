import os
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from app.utils import format_float, write_lines_atomic


class EmbeddingFormatError(ValueError):
    pass


class MisspellingFormatError(ValueError):
    pass


@dataclass(frozen=True)
class Vocabulary:
    """Ordered word list. File order doubles as frequency rank."""
    words: Tuple[str, ...]
    id_of: Dict[str, int] = field(repr=False)
    freq_rank: Tuple[int, ...] = field(repr=False)

    @classmethod
    def from_words(cls, words: Sequence[str]) -> "Vocabulary":
        id_of: Dict[str, int] = {}
        for idx, word in enumerate(words):
            if not word:
                raise EmbeddingFormatError(f"empty word at position {idx}")
            if word in id_of:
                raise EmbeddingFormatError(
                    f"duplicate word '{word}' at positions {id_of[word]} and {idx}"
                )
            id_of[word] = idx
        return cls(tuple(words), id_of, tuple(range(len(words))))

    def __len__(self) -> int:
        return len(self.words)

    def __contains__(self, word: object) -> bool:
        return word in self.id_of

    def get(self, word: str) -> Optional[int]:
        return self.id_of.get(word)

    def same_as(self, other: "Vocabulary") -> bool:
        return self.words == other.words


@dataclass(frozen=True)
class EmbeddingTable:
    center: Optional[np.ndarray]
    context: Optional[np.ndarray] = None

    def __post_init__(self):
        for name, matrix in (('center', self.center), ('context', self.context)):
            if matrix is None:
                continue
            if matrix.ndim != 2:
                raise EmbeddingFormatError(f"{name} matrix must be 2-dimensional")
            if not np.all(np.isfinite(matrix)):
                raise EmbeddingFormatError(f"{name} matrix contains non-finite values")
        if self.center is not None and self.context is not None:
            if self.center.shape != self.context.shape:
                raise EmbeddingFormatError(
                    f"center {self.center.shape} and context {self.context.shape} shapes differ"
                )

    @property
    def dim(self) -> int:
        matrix = self.center if self.center is not None else self.context
        return int(matrix.shape[1])

    @property
    def size(self) -> int:
        matrix = self.center if self.center is not None else self.context
        return int(matrix.shape[0])

    def zero_vector(self) -> np.ndarray:
        return np.zeros(self.dim, dtype=np.float64)


class MisspellingDictionary:
    def __init__(self, variants_of: Dict[str, Sequence[str]]):
        self._variants: Dict[str, Tuple[str, ...]] = {}
        for word, variants in variants_of.items():
            if not word:
                raise MisspellingFormatError("empty correct word")
            if not variants:
                raise MisspellingFormatError(f"no variants for '{word}'")
            self._variants[word] = tuple(variants)

    def variants_of(self, word: str) -> List[str]:
        return list(self._variants.get(word, ()))

    def __contains__(self, word: object) -> bool:
        return word in self._variants

    def __len__(self) -> int:
        return len(self._variants)

    def items(self):
        return self._variants.items()


def read_word_vectors(path: str) -> Tuple[List[str], np.ndarray]:
    """Parse the '<n> <D>' header + '<word> <v1> ... <vD>' rows text format."""
    if not os.path.exists(path):
        raise FileNotFoundError(f"embedding file not found: {path}")

    with open(path, 'r', encoding='utf-8') as f:
        header = f.readline().rstrip('\r\n')
        parts = header.split(' ')
        if len(parts) != 2 or not all(p.isascii() and p.isdecimal() for p in parts):
            raise EmbeddingFormatError(f"{path}: line 1: malformed header '{header}'")
        n, dim = int(parts[0]), int(parts[1])
        if n == 0 or dim == 0:
            raise EmbeddingFormatError(f"{path}: line 1: empty table ({n} x {dim})")

        words: List[str] = []
        matrix = np.empty((n, dim), dtype=np.float64)

        for line_no, line in enumerate(f, start=2):
            line = line.rstrip('\r\n').rstrip(' ')
            if not line:
                continue
            fields = line.split(' ')
            if len(fields) != dim + 1:
                raise EmbeddingFormatError(
                    f"{path}: line {line_no}: expected {dim} values, got {len(fields) - 1}"
                )
            if len(words) >= n:
                raise EmbeddingFormatError(f"{path}: line {line_no}: more rows than header count {n}")
            try:
                matrix[len(words)] = [float(v) for v in fields[1:]]
            except ValueError:
                raise EmbeddingFormatError(f"{path}: line {line_no}: non-numeric value")
            words.append(fields[0])

    if len(words) != n:
        raise EmbeddingFormatError(f"{path}: header declares {n} rows, found {len(words)}")

    return words, matrix


def load_embeddings(
    path: str,
    which: str = 'center',
    store: Optional["VocabStore"] = None
) -> Tuple[Vocabulary, EmbeddingTable]:
    """Load one matrix of the table.

    With `store`, the file must share the store's vocabulary and dimension,
    and the returned table carries the store's other matrix alongside.
    """
    if which not in ('center', 'context'):
        raise ValueError(f"which must be 'center' or 'context', got '{which}'")

    words, matrix = read_word_vectors(path)
    vocab = Vocabulary.from_words(words)

    if store is None or store.tables is None:
        table = EmbeddingTable(center=matrix) if which == 'center' else EmbeddingTable(center=None, context=matrix)
        print(f"[VOCAB] Loaded {which} vectors: {len(vocab)} words (D={matrix.shape[1]}) from {path}", flush=True)
        return vocab, table

    if not store.vocab.same_as(vocab):
        raise EmbeddingFormatError(
            f"{path}: vocabulary mismatch ({len(vocab)} words vs {len(store.vocab)} in store)"
        )
    if matrix.shape[1] != store.tables.dim:
        raise EmbeddingFormatError(
            f"{path}: dimension mismatch ({matrix.shape[1]} vs {store.tables.dim} in store)"
        )

    if which == 'center':
        table = EmbeddingTable(center=matrix, context=store.tables.context)
    else:
        table = EmbeddingTable(center=store.tables.center, context=matrix)

    print(f"[VOCAB] Loaded {which} vectors into store from {path}", flush=True)
    return store.vocab, table


def save_embeddings(path: str, vocab: Vocabulary, matrix: np.ndarray) -> None:
    def rows() -> Iterable[str]:
        yield f"{len(vocab)} {matrix.shape[1]}"
        for word, vector in zip(vocab.words, matrix):
            yield word + ' ' + ' '.join(format_float(v) for v in vector)

    write_lines_atomic(path, rows())


def load_misspellings(path: str) -> MisspellingDictionary:
    """Read 'misspelling<TAB>correct' lines; groups keep input line order."""
    if not os.path.exists(path):
        raise FileNotFoundError(f"misspelling file not found: {path}")

    grouped: Dict[str, List[str]] = {}

    with open(path, 'r', encoding='utf-8') as f:
        for line_no, line in enumerate(f, start=1):
            line = line.rstrip('\r\n')
            if not line.strip():
                continue
            if line.count('\t') != 1:
                raise MisspellingFormatError(
                    f"{path}: line {line_no}: expected 'misspelling<TAB>correct'"
                )
            misspelling, correct = line.split('\t')
            if not misspelling or not correct:
                raise MisspellingFormatError(f"{path}: line {line_no}: empty field")
            grouped.setdefault(correct, []).append(misspelling)

    print(f"[VOCAB] Loaded misspellings for {len(grouped)} words from {path}", flush=True)
    return MisspellingDictionary(grouped)


class VocabStore:
    """Vocabulary, embedding tables and the optional misspelling dictionary.

    Immutable once loaded; share freely across workers.
    """

    def __init__(
        self,
        vocab: Optional[Vocabulary] = None,
        tables: Optional[EmbeddingTable] = None,
        misspellings: Optional[MisspellingDictionary] = None
    ):
        self.vocab = vocab
        self.tables = tables
        self.misspellings = misspellings

    @classmethod
    def from_arrays(
        cls,
        words: Sequence[str],
        center: np.ndarray,
        context: Optional[np.ndarray] = None,
        misspellings: Optional[MisspellingDictionary] = None
    ) -> "VocabStore":
        vocab = Vocabulary.from_words(words)
        center = np.asarray(center, dtype=np.float64)
        if context is not None:
            context = np.asarray(context, dtype=np.float64)
        table = EmbeddingTable(center=center, context=context)
        if table.size != len(vocab):
            raise EmbeddingFormatError(f"{table.size} rows for {len(vocab)} words")
        return cls(vocab, table, misspellings)

    @classmethod
    def load(
        cls,
        center_path: str,
        context_path: Optional[str] = None,
        misspellings_path: Optional[str] = None
    ) -> "VocabStore":
        store = cls()
        store.vocab, store.tables = load_embeddings(center_path, 'center')
        if context_path:
            store.vocab, store.tables = load_embeddings(context_path, 'context', store)
        if misspellings_path:
            store.misspellings = load_misspellings(misspellings_path)
        return store

    @property
    def has_context(self) -> bool:
        return self.tables is not None and self.tables.context is not None

    def center_vector(self, word_id: int) -> np.ndarray:
        return self.tables.center[word_id]

    def summary(self) -> Dict[str, object]:
        return {
            'words': len(self.vocab) if self.vocab else 0,
            'dim': self.tables.dim if self.tables else 0,
            'has_context': self.has_context,
            'misspelled_words': len(self.misspellings) if self.misspellings else 0,
        }

import math
from collections import Counter
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from app.rng import SplitMix64
from app.robust_model import TokenPosterior
from app.vocab_store import EmbeddingTable, Vocabulary

UNKNOWN_ID = -1


@dataclass
class EmbeddedSequence:
    vectors: np.ndarray  # l x D
    word_ids: np.ndarray  # l, UNKNOWN_ID where the row is the zero vector

    def __len__(self) -> int:
        return int(self.vectors.shape[0])

    def words(self, vocab: Vocabulary, surface: Optional[Sequence[str]] = None) -> List[str]:
        out = []
        for i, word_id in enumerate(self.word_ids):
            if word_id == UNKNOWN_ID:
                out.append(surface[i] if surface is not None else '<unk>')
            else:
                out.append(vocab.words[word_id])
        return out


@dataclass
class EnsembleBatch:
    sequences: List[EmbeddedSequence]
    sample_ids: np.ndarray  # m x l

    @property
    def m(self) -> int:
        return len(self.sequences)

    def sample_words(self, vocab: Vocabulary, surface: Optional[Sequence[str]] = None) -> List[List[str]]:
        return [seq.words(vocab, surface) for seq in self.sequences]


def _rows_for(ids: Sequence[int], tables: EmbeddingTable) -> np.ndarray:
    vectors = np.zeros((len(ids), tables.dim), dtype=np.float64)
    for i, word_id in enumerate(ids):
        if word_id != UNKNOWN_ID:
            vectors[i] = tables.center[word_id]
    return vectors


def sequence_from_ids(ids: Sequence[int], tables: EmbeddingTable) -> EmbeddedSequence:
    return EmbeddedSequence(_rows_for(ids, tables), np.asarray(ids, dtype=np.int64))


def map_embedding(posteriors: Sequence[Optional[TokenPosterior]], tables: EmbeddingTable) -> EmbeddedSequence:
    """Centre vector of each position's highest-posterior candidate.

    None entries (no candidate survived) embed as the zero vector.
    """
    if len(posteriors) == 0:
        raise ValueError("cannot embed an empty sequence")

    ids = [UNKNOWN_ID if post is None else post.map_candidate().word_id for post in posteriors]
    return sequence_from_ids(ids, tables)


def draw_index(post: TokenPosterior, rng: SplitMix64) -> int:
    """Inverse-CDF draw over exp(log_posterior)."""
    cdf = np.cumsum(post.probabilities)
    u = rng.random() * cdf[-1]
    idx = int(np.searchsorted(cdf, u, side='right'))
    return min(idx, len(cdf) - 1)


def sample_ensemble(
    posteriors: Sequence[Optional[TokenPosterior]],
    tables: EmbeddingTable,
    m: int,
    seed: int,
    sentence_index: int = 0
) -> EnsembleBatch:
    """m sequences; position i of sequence j is drawn from the stream
    derived from (seed, sentence_index, i, j)."""
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")

    sample_ids = np.full((m, len(posteriors)), UNKNOWN_ID, dtype=np.int64)

    for i, post in enumerate(posteriors):
        if post is None:
            continue
        if len(post.candidates) == 1:
            sample_ids[:, i] = post.candidates[0].word_id
            continue
        for j in range(m):
            rng = SplitMix64.derived(seed, sentence_index, i, j)
            sample_ids[j, i] = post.candidates[draw_index(post, rng)].word_id

    sequences = [sequence_from_ids(sample_ids[j], tables) for j in range(m)]
    return EnsembleBatch(sequences, sample_ids)


def _check_logits(logits: np.ndarray) -> np.ndarray:
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim != 2 or logits.shape[0] < 1:
        raise ValueError(f"logits must be an m x c matrix with m >= 1, got shape {logits.shape}")
    return logits


def aggregate_mean_logits(logits: np.ndarray) -> Tuple[np.ndarray, int]:
    logits = _check_logits(logits)
    # fsum is exactly rounded, so row order cannot change the result
    mean = np.array([math.fsum(column) for column in logits.T]) / logits.shape[0]
    return mean, int(np.argmax(mean))


def aggregate_majority(logits: np.ndarray) -> int:
    logits = _check_logits(logits)
    votes = Counter(int(c) for c in np.argmax(logits, axis=1))
    top = max(votes.values())
    return min(c for c, n in votes.items() if n == top)


def aggregate(logits: np.ndarray, method: str = 'mean') -> int:
    if method == 'mean':
        return aggregate_mean_logits(logits)[1]
    if method == 'majority':
        return aggregate_majority(logits)
    raise ValueError(f"unknown aggregation method '{method}'")

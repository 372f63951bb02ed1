import heapq
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import Levenshtein

from app.vocab_store import Vocabulary


def levenshtein(a: str, b: str) -> int:
    """Unit-cost insert/delete/substitute distance over unicode code points."""
    return Levenshtein.distance(a, b)


@dataclass(frozen=True)
class Candidate:
    word_id: int
    distance: int
    word: str


@dataclass(frozen=True)
class CandidateSet:
    query: str
    candidates: Tuple[Candidate, ...]

    def __len__(self) -> int:
        return len(self.candidates)

    def __iter__(self):
        return iter(self.candidates)

    def __getitem__(self, idx: int) -> Candidate:
        return self.candidates[idx]

    @property
    def word_ids(self) -> List[int]:
        return [c.word_id for c in self.candidates]

    @property
    def distances(self) -> List[int]:
        return [c.distance for c in self.candidates]

    @property
    def words(self) -> List[str]:
        return [c.word for c in self.candidates]

    def within(self, max_dist: Optional[int]) -> "CandidateSet":
        if max_dist is None:
            return self
        return CandidateSet(self.query, tuple(c for c in self.candidates if c.distance <= max_dist))


class _Node:
    __slots__ = ['word_id', 'children']

    def __init__(self, word_id: int):
        self.word_id = word_id
        self.children: Dict[int, "_Node"] = {}


class FuzzyIndex:
    """BK-tree over the vocabulary, built in vocabulary order."""

    def __init__(self, vocab: Vocabulary):
        if len(vocab) == 0:
            raise ValueError("cannot index an empty vocabulary")

        self.vocab = vocab
        self.root = _Node(0)

        for word_id in range(1, len(vocab)):
            self._add(word_id)

    def _add(self, word_id: int) -> None:
        word = self.vocab.words[word_id]
        node = self.root
        while True:
            distance = levenshtein(word, self.vocab.words[node.word_id])
            child = node.children.get(distance)
            if child is None:
                node.children[distance] = _Node(word_id)
                return
            node = child

    def _key(self, word_id: int, distance: int) -> Tuple[int, int, str]:
        return (distance, self.vocab.freq_rank[word_id], self.vocab.words[word_id])

    def top_k(self, token: str, k: int) -> CandidateSet:
        if k < 1:
            raise ValueError(f"k must be >= 1, got {k}")

        # max-heap on (distance, rank) via negation; ranks are unique
        best: List[Tuple[int, int, int]] = []
        stack = [self.root]

        while stack:
            node = stack.pop()
            distance = levenshtein(token, self.vocab.words[node.word_id])
            rank = self.vocab.freq_rank[node.word_id]

            if len(best) < k:
                heapq.heappush(best, (-distance, -rank, node.word_id))
            elif (distance, rank) < (-best[0][0], -best[0][1]):
                heapq.heapreplace(best, (-distance, -rank, node.word_id))

            radius = -best[0][0] if len(best) == k else None
            for edge, child in node.children.items():
                if radius is None or abs(distance - edge) <= radius:
                    stack.append(child)

        found = sorted(
            (self._key(word_id, -neg_distance), word_id) for neg_distance, _, word_id in best
        )
        return CandidateSet(token, tuple(
            Candidate(word_id, key[0], key[2]) for key, word_id in found
        ))


def build_index(vocab: Vocabulary) -> FuzzyIndex:
    index = FuzzyIndex(vocab)
    print(f"[FUZZY] Built BK-tree over {len(vocab)} words", flush=True)
    return index


def top_k(index: FuzzyIndex, token: str, k: int) -> CandidateSet:
    return index.top_k(token, k)


def brute_force_top_k(vocab: Vocabulary, token: str, k: int) -> CandidateSet:
    """Exhaustive-scan oracle with the same contract as `top_k`."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")

    keyed = [
        ((levenshtein(token, word), vocab.freq_rank[word_id], word), word_id)
        for word_id, word in enumerate(vocab.words)
    ]
    found = heapq.nsmallest(k, keyed)
    return CandidateSet(token, tuple(
        Candidate(word_id, key[0], key[2]) for key, word_id in found
    ))

"""Prior, likelihood and posterior over candidate corrections.

A token's robust embedding is a distribution over ground-embedding words:
an edit-distance prior (softmax of -d/tau over the k nearest words) times a
contextual likelihood, renormalized in log space. The same combiner serves
the skip-gram likelihood (Bayes rule) and external masked-LM scores
(product of experts).
"""
import functools
import math
import os
from dataclasses import dataclass
from typing import Dict, List, Optional, Protocol, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.special import logsumexp

from app.fuzzy_index import CandidateSet, FuzzyIndex, Candidate
from app.vocab_store import EmbeddingTable, VocabStore

MISSING_SCORE = -1e9
NORMALIZER_CACHE_SIZE = 65536
CANDIDATE_CACHE_SIZE = 65536


class ScoreFileError(ValueError):
    pass


class ScorerError(RuntimeError):
    pass


@dataclass(frozen=True)
class PriorConfig:
    tau: float = 0.1
    k: int = 10

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")


@dataclass(frozen=True)
class ScoringContext:
    """What a scorer may look at when scoring candidates for one position."""
    sentence_index: int
    position: int
    tokens: Tuple[str, ...]
    # (position, word id) of in-vocabulary context tokens
    context_ids: Tuple[Tuple[int, int], ...] = ()


@dataclass
class TokenPosterior:
    candidates: CandidateSet
    log_prior: np.ndarray
    log_likelihood: np.ndarray
    log_joint: np.ndarray
    log_posterior: np.ndarray

    @property
    def probabilities(self) -> np.ndarray:
        return np.exp(self.log_posterior)

    def argmax(self) -> int:
        # np.argmax returns the first maximum, i.e. the lowest-ordered candidate
        return int(np.argmax(self.log_posterior))

    def map_candidate(self) -> Candidate:
        return self.candidates[self.argmax()]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            'Candidate': self.candidates.words,
            'Distance': self.candidates.distances,
            'Log-Prior': self.log_prior,
            'Log-Likelihood': self.log_likelihood,
            'Log-Joint': self.log_joint,
            'Log-Posterior': self.log_posterior,
            'Probability': self.probabilities,
        })


def prior_log_weights(distances: Sequence[int], tau: float) -> np.ndarray:
    if len(distances) == 0:
        raise ValueError("prior needs at least one distance")
    if not tau > 0:
        raise ValueError(f"tau must be positive, got {tau}")

    logits = -np.asarray(distances, dtype=np.float64) / tau
    return logits - logsumexp(logits)


def prior_weights(distances: Sequence[int], tau: float) -> np.ndarray:
    """Softmax(-d / tau)."""
    return np.exp(prior_log_weights(distances, tau))


def combine_log_scores(log_prior: np.ndarray, log_likelihood: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Multiply-and-renormalize in log space. Returns (joint, normalized)."""
    log_joint = np.asarray(log_prior, dtype=np.float64) + np.asarray(log_likelihood, dtype=np.float64)
    return log_joint, log_joint - logsumexp(log_joint)


class ContextualScorer(Protocol):
    def score(self, candidates: CandidateSet, context: ScoringContext) -> np.ndarray:
        ...


class UniformScorer:
    """Flat likelihood; the posterior equals the prior."""

    name = 'uniform'

    def score(self, candidates: CandidateSet, context: ScoringContext) -> np.ndarray:
        return np.zeros(len(candidates), dtype=np.float64)


def uniform_scorer() -> UniformScorer:
    return UniformScorer()


def skipgram_log_likelihood(candidate_id: int, context_ids: Sequence[int], tables: EmbeddingTable) -> float:
    """sum over context words c of [c . w - log sum_{c'} exp(c' . w)]."""
    if tables.context is None:
        raise ValueError("skip-gram likelihood needs a context matrix")
    if len(context_ids) == 0:
        return 0.0

    scores = tables.context @ tables.center[candidate_id]
    normalizer = logsumexp(scores)
    return float(np.sum(scores[list(context_ids)]) - len(context_ids) * normalizer)


class SkipGramScorer:
    """Skip-gram likelihood of the in-vocabulary context given each candidate.

    The per-candidate normalizer is exact over the whole context matrix unless
    `normalizer_sample` is set, in which case a fixed seeded pool of that many
    rows stands in for it (scaled to the vocabulary size).
    """

    name = 'skipgram'

    def __init__(self, tables: EmbeddingTable, normalizer_sample: Optional[int] = None, seed: int = 0):
        if tables.context is None:
            raise ValueError("skip-gram likelihood needs a context matrix")
        self.tables = tables
        self.pool: Optional[np.ndarray] = None
        if normalizer_sample is not None and normalizer_sample < tables.size:
            rng = np.random.default_rng(seed)
            self.pool = np.sort(rng.choice(tables.size, size=normalizer_sample, replace=False))
        # Per-instance LRU; safe to share across threads.
        self.normalizer = functools.lru_cache(maxsize=NORMALIZER_CACHE_SIZE)(self._normalizer)

    def _normalizer(self, word_id: int) -> float:
        w = self.tables.center[word_id]
        if self.pool is None:
            value = float(logsumexp(self.tables.context @ w))
        else:
            value = float(logsumexp(self.tables.context[self.pool] @ w)
                          + math.log(self.tables.size / len(self.pool)))
        return value

    def score(self, candidates: CandidateSet, context: ScoringContext) -> np.ndarray:
        ids = [word_id for _, word_id in context.context_ids]
        if not ids:
            return np.zeros(len(candidates), dtype=np.float64)

        context_vectors = self.tables.context[ids]
        result = np.empty(len(candidates), dtype=np.float64)
        for j, cand in enumerate(candidates):
            dots = context_vectors @ self.tables.center[cand.word_id]
            result[j] = float(np.sum(dots)) - len(ids) * self.normalizer(cand.word_id)
        return result


class FileScorer:
    """Log scores produced offline (e.g. by a masked LM), keyed by
    (sentence_index, token_index, word)."""

    name = 'file'

    def __init__(self, scores: Dict[Tuple[int, int, str], float], missing: float = MISSING_SCORE):
        self.scores = scores
        self.missing = missing

    def lookup(self, sentence_index: int, token_index: int, word: str) -> float:
        return self.scores.get((sentence_index, token_index, word), self.missing)

    def score(self, candidates: CandidateSet, context: ScoringContext) -> np.ndarray:
        return np.array([
            self.lookup(context.sentence_index, context.position, word) for word in candidates.words
        ], dtype=np.float64)


def _is_index(text: str) -> bool:
    return text.isascii() and text.isdecimal()


def file_scorer_load(path: str) -> FileScorer:
    """Read 'sentence_index<TAB>token_index<TAB>word<TAB>log_score' lines."""
    if not os.path.exists(path):
        raise FileNotFoundError(f"score file not found: {path}")

    scores: Dict[Tuple[int, int, str], float] = {}

    with open(path, 'r', encoding='utf-8') as f:
        for line_no, line in enumerate(f, start=1):
            line = line.rstrip('\r\n')
            if not line.strip():
                continue
            fields = line.split('\t')
            if len(fields) != 4:
                raise ScoreFileError(f"{path}: line {line_no}: expected 4 tab-separated fields")
            sent, tok, word, value = fields
            if not (_is_index(sent) and _is_index(tok)) or not word:
                raise ScoreFileError(f"{path}: line {line_no}: malformed key")
            try:
                log_score = float(value)
            except ValueError:
                raise ScoreFileError(f"{path}: line {line_no}: malformed log score '{value}'")
            if not math.isfinite(log_score):
                raise ScoreFileError(f"{path}: line {line_no}: non-finite log score")
            key = (int(sent), int(tok), word)
            if key in scores:
                raise ScoreFileError(f"{path}: line {line_no}: duplicate key {key}")
            scores[key] = log_score

    print(f"[RED] Loaded {len(scores)} external scores from {path}", flush=True)
    return FileScorer(scores)


def posterior(
    candidates: CandidateSet,
    prior: np.ndarray,
    scorer: ContextualScorer,
    context: ScoringContext
) -> TokenPosterior:
    if len(candidates) == 0:
        raise ValueError("posterior needs at least one candidate")

    log_prior = np.log(np.asarray(prior, dtype=np.float64))
    return posterior_from_log_prior(candidates, log_prior, scorer, context)


def posterior_from_log_prior(
    candidates: CandidateSet,
    log_prior: np.ndarray,
    scorer: ContextualScorer,
    context: ScoringContext
) -> TokenPosterior:
    try:
        log_likelihood = np.asarray(scorer.score(candidates, context), dtype=np.float64)
    except Exception as e:
        raise ScorerError(
            f"scorer failed for token '{candidates.query}' at sentence {context.sentence_index}, "
            f"position {context.position}, candidates {candidates.words}: {e}"
        ) from e

    if log_likelihood.shape != (len(candidates),) or not np.all(np.isfinite(log_likelihood)):
        raise ScorerError(
            f"scorer returned invalid scores for token '{candidates.query}' "
            f"at sentence {context.sentence_index}, position {context.position}"
        )

    log_joint, log_post = combine_log_scores(log_prior, log_likelihood)
    return TokenPosterior(candidates, np.asarray(log_prior, dtype=np.float64), log_likelihood, log_joint, log_post)


def degenerate_posterior(candidate: Candidate, query: str) -> TokenPosterior:
    """Single-candidate posterior for tokens that are not reprocessed."""
    zero = np.zeros(1, dtype=np.float64)
    return TokenPosterior(CandidateSet(query, (candidate,)), zero, zero.copy(), zero.copy(), zero.copy())


class RobustEmbedder:
    """Builds a TokenPosterior (or None for pass-through) for every position.

    Processing is OOV-only unless `oov_only` is False. Context for the
    likelihood is the in-vocabulary tokens of the sentence, optionally limited
    to a symmetric window.
    """

    def __init__(
        self,
        store: VocabStore,
        index: FuzzyIndex,
        scorer: ContextualScorer,
        prior: PriorConfig = PriorConfig(),
        max_dist: Optional[int] = None,
        oov_only: bool = True,
        window: Optional[int] = None
    ):
        self.store = store
        self.vocab = store.vocab
        self.index = index
        self.scorer = scorer
        self.prior = prior
        self.max_dist = max_dist
        self.oov_only = oov_only
        self.window = window
        self.candidates = functools.lru_cache(maxsize=CANDIDATE_CACHE_SIZE)(self._candidates)

    def _candidates(self, token: str) -> CandidateSet:
        return self.index.top_k(token, self.prior.k).within(self.max_dist)

    def context_for(self, tokens: Sequence[str], position: int, sentence_index: int) -> ScoringContext:
        lo, hi = 0, len(tokens)
        if self.window is not None:
            lo = max(0, position - self.window)
            hi = min(len(tokens), position + self.window + 1)

        context_ids = tuple(
            (j, self.vocab.id_of[tokens[j]])
            for j in range(lo, hi)
            if j != position and tokens[j] in self.vocab
        )
        return ScoringContext(sentence_index, position, tuple(tokens), context_ids)

    def token_posterior(self, tokens: Sequence[str], position: int, sentence_index: int) -> Optional[TokenPosterior]:
        token = tokens[position]
        word_id = self.vocab.get(token)

        if word_id is not None and self.oov_only:
            return degenerate_posterior(Candidate(word_id, 0, token), token)

        candidates = self.candidates(token)
        if len(candidates) == 0:
            return None

        log_prior = prior_log_weights(candidates.distances, self.prior.tau)
        context = self.context_for(tokens, position, sentence_index)
        return posterior_from_log_prior(candidates, log_prior, self.scorer, context)

    def sentence_posteriors(self, tokens: Sequence[str], sentence_index: int = 0) -> List[Optional[TokenPosterior]]:
        return [self.token_posterior(tokens, i, sentence_index) for i in range(len(tokens))]

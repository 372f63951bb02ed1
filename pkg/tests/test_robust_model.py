import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest

from app.fuzzy_index import Candidate, CandidateSet, build_index
from app.robust_model import (
    CANDIDATE_CACHE_SIZE,
    MISSING_SCORE,
    NORMALIZER_CACHE_SIZE,
    PriorConfig,
    RobustEmbedder,
    ScoreFileError,
    ScorerError,
    ScoringContext,
    SkipGramScorer,
    combine_log_scores,
    file_scorer_load,
    posterior,
    prior_log_weights,
    prior_weights,
    skipgram_log_likelihood,
    uniform_scorer,
)
from app.vocab_store import EmbeddingTable
from conftest import write_text

CONTEXT = ScoringContext(sentence_index=0, position=0, tokens=('x',))

# Candidate, log-prior, log-likelihood, unnormalized log-posterior, probability
WORKED_DISTRIBUTION = [
    ('cops', -2.99573, -8.44108, -11.4368, 0.474132),
    ('actors', -2.99573, -8.44204, -11.4378, 0.473674),
    ('crows', -2.99573, -11.3638, -14.3595, 0.0255029),
    ('stops', -2.99573, -11.9221, -14.9179, 0.0145912),
    ('atoms', -2.99573, -13.5329, -16.5286, 0.0029145),
]


def fake_candidates(n: int, query: str = 'q') -> CandidateSet:
    return CandidateSet(query, tuple(Candidate(i, 1, f"w{i}") for i in range(n)))


class ShiftedScorer:
    def __init__(self, inner, shift):
        self.inner = inner
        self.shift = shift

    def score(self, candidates, context):
        return self.inner.score(candidates, context) + self.shift


class FixedScorer:
    def __init__(self, values):
        self.values = np.asarray(values, dtype=np.float64)

    def score(self, candidates, context):
        return self.values


class BrokenScorer:
    def score(self, candidates, context):
        raise KeyError('model offline')


def test_twenty_equidistant_candidates_give_log_one_twentieth():
    log_prior = prior_log_weights([2] * 20, 0.1)
    assert log_prior == pytest.approx([-2.99573] * 20, abs=1e-5)


def test_uniform_distances_give_one_over_k():
    rng = np.random.default_rng(0)
    for k in rng.integers(1, 51, size=200):
        d = int(rng.integers(0, 10))
        assert prior_weights([d] * int(k), float(rng.uniform(0.01, 5))) == pytest.approx([1 / k] * int(k), abs=1e-12)


def test_prior_sums_to_one_over_random_cases():
    rng = np.random.default_rng(1)
    for _ in range(10_000):
        k = int(rng.integers(1, 30))
        weights = prior_weights(rng.integers(0, 12, size=k), float(rng.uniform(1e-3, 3)))
        assert abs(weights.sum() - 1.0) <= 1e-12
        assert np.all(weights >= 0)


def test_prior_prefers_closer_candidates_and_survives_tiny_tau():
    weights = prior_weights([0, 1, 2], 0.1)
    assert weights[0] > weights[1] > weights[2]
    assert weights[1] / weights[2] == pytest.approx(math.exp(10))

    sharp = prior_weights([3, 4, 40], 1e-4)
    assert np.all(np.isfinite(sharp))
    assert sharp[0] == pytest.approx(1.0)


def test_prior_rejects_bad_input():
    with pytest.raises(ValueError):
        prior_weights([], 0.1)
    with pytest.raises(ValueError):
        prior_weights([1], 0.0)
    with pytest.raises(ValueError):
        PriorConfig(tau=-1)
    with pytest.raises(ValueError):
        PriorConfig(k=0)


def test_worked_distribution_is_additive_in_log_space():
    log_prior = np.array([row[1] for row in WORKED_DISTRIBUTION])
    log_likelihood = np.array([row[2] for row in WORKED_DISTRIBUTION])
    log_joint, log_post = combine_log_scores(log_prior, log_likelihood)

    # table inputs are printed to six significant figures
    assert log_joint == pytest.approx([row[3] for row in WORKED_DISTRIBUTION], abs=1e-4)
    assert log_joint[0] == pytest.approx(-11.4368, abs=5e-5)

    probabilities = np.exp(log_post)
    published = np.array([row[4] for row in WORKED_DISTRIBUTION])
    assert probabilities / probabilities[0] == pytest.approx(published / published[0], rel=2e-4)


def test_posterior_is_normalized_over_random_cases():
    rng = np.random.default_rng(2)
    for _ in range(10_000):
        n = int(rng.integers(1, 20))
        candidates = fake_candidates(n)
        prior = prior_weights(rng.integers(0, 6, size=n), float(rng.uniform(0.05, 2)))
        post = posterior(candidates, prior, FixedScorer(rng.normal(0, 20, size=n)), CONTEXT)
        assert abs(np.exp(post.log_posterior).sum() - 1.0) <= 1e-9


def test_flat_likelihood_returns_the_prior():
    rng = np.random.default_rng(3)
    for _ in range(10_000):
        n = int(rng.integers(1, 20))
        prior = prior_weights(rng.integers(0, 6, size=n), float(rng.uniform(0.05, 2)))
        post = posterior(fake_candidates(n), prior, uniform_scorer(), CONTEXT)
        assert np.max(np.abs(post.probabilities - prior)) <= 1e-12


def test_posterior_ignores_constant_likelihood_shift():
    rng = np.random.default_rng(4)
    for _ in range(10_000):
        n = int(rng.integers(1, 20))
        candidates = fake_candidates(n)
        prior = prior_weights(rng.integers(0, 6, size=n), 0.5)
        scorer = FixedScorer(rng.normal(0, 5, size=n))
        base = posterior(candidates, prior, scorer, CONTEXT)
        shifted = posterior(candidates, prior, ShiftedScorer(scorer, float(rng.uniform(-500, 500))), CONTEXT)
        assert np.max(np.abs(base.log_posterior - shifted.log_posterior)) <= 1e-9


def test_two_candidate_posterior_by_hand():
    post = posterior(fake_candidates(2), np.array([0.5, 0.5]),
                     FixedScorer([math.log(0.9), math.log(0.1)]), CONTEXT)
    assert np.max(np.abs(post.probabilities - [0.9, 0.1])) <= 1e-12


def test_equal_distances_give_softmax_of_scores():
    rng = np.random.default_rng(5)
    for _ in range(10_000):
        n = int(rng.integers(1, 20))
        prior = prior_weights([int(rng.integers(0, 6))] * n, float(rng.uniform(0.05, 2)))
        scores = rng.normal(0, 5, size=n)
        post = posterior(fake_candidates(n), prior, FixedScorer(scores), CONTEXT)
        expected = np.exp(scores - scores.max())
        expected /= expected.sum()
        assert np.max(np.abs(post.probabilities - expected)) <= 1e-12


def test_log_space_agrees_with_linear_product():
    rng = np.random.default_rng(6)
    checked = 0
    for _ in range(10_000):
        n = int(rng.integers(1, 20))
        prior = prior_weights(rng.integers(0, 4, size=n), float(rng.uniform(0.5, 2)))
        scores = rng.normal(0, 3, size=n)
        linear = prior * np.exp(scores)
        linear /= linear.sum()
        if linear.min() < 1e-10:
            continue
        post = posterior(fake_candidates(n), prior, FixedScorer(scores), CONTEXT)
        assert np.max(np.abs(post.probabilities - linear)) <= 1e-8
        checked += 1
    assert checked > 5_000


def test_posterior_argmax_breaks_ties_toward_first_candidate():
    post = posterior(fake_candidates(3), np.array([0.25, 0.5, 0.25]), FixedScorer([0.0, -1.0, 1.0]), CONTEXT)
    assert post.argmax() == 2
    tied = posterior(fake_candidates(2), np.array([0.5, 0.5]), uniform_scorer(), CONTEXT)
    assert tied.map_candidate().word == 'w0'


def test_scorer_failure_is_wrapped_with_context():
    with pytest.raises(ScorerError, match="'q'.*sentence 0.*w0"):
        posterior(fake_candidates(2), np.array([0.5, 0.5]), BrokenScorer(), CONTEXT)


@pytest.mark.parametrize("values", [[0.0], [0.0, np.nan], [0.0, np.inf]])
def test_scorer_returning_invalid_scores_is_rejected(values):
    with pytest.raises(ScorerError):
        posterior(fake_candidates(2), np.array([0.5, 0.5]), FixedScorer(values), CONTEXT)


def test_posterior_table_columns():
    post = posterior(fake_candidates(2), np.array([0.75, 0.25]), uniform_scorer(), CONTEXT)
    frame = post.to_frame()
    assert list(frame.columns) == [
        'Candidate', 'Distance', 'Log-Prior', 'Log-Likelihood', 'Log-Joint', 'Log-Posterior', 'Probability'
    ]
    assert frame['Probability'].tolist() == pytest.approx([0.75, 0.25])


def test_skipgram_log_likelihood_by_hand(toy_store):
    # centre of 'cat' is e1; context rows dot e1 = [1, 0, 0, 1, 0]
    expected = (0.0 + 1.0) - 2 * math.log(2 * math.e + 3)
    assert skipgram_log_likelihood(0, [1, 3], toy_store.tables) == pytest.approx(expected, abs=1e-12)
    assert skipgram_log_likelihood(0, [], toy_store.tables) == 0.0


def test_skipgram_symmetric_context_gives_log_half():
    tables = EmbeddingTable(center=np.array([[0.3, 0.7], [1.0, -2.0]]),
                            context=np.array([[1.0, 1.0], [1.0, 1.0]]))
    assert skipgram_log_likelihood(0, [1], tables) == pytest.approx(-0.693147, abs=1e-6)
    assert skipgram_log_likelihood(0, [1], tables) == pytest.approx(math.log(0.5), abs=1e-12)


def test_skipgram_two_word_direct_evaluation():
    tables = EmbeddingTable(center=np.array([[2.0, 0.0], [0.0, 0.0]]),
                            context=np.array([[1.0, 0.0], [0.0, 1.0]]))
    assert skipgram_log_likelihood(0, [0], tables) == pytest.approx(-0.126928, abs=1e-6)
    scorer = SkipGramScorer(tables)
    candidates = CandidateSet('ax', (Candidate(0, 1, 'a'),))
    context = ScoringContext(0, 1, ('a', 'ax'), ((0, 0),))
    assert scorer.score(candidates, context).tolist() == pytest.approx([-0.126928], abs=1e-6)


def test_skipgram_needs_context_matrix():
    tables = EmbeddingTable(center=np.eye(2))
    with pytest.raises(ValueError):
        skipgram_log_likelihood(0, [1], tables)
    with pytest.raises(ValueError):
        SkipGramScorer(tables)


def test_skipgram_scorer_matches_direct_formula(toy_store):
    scorer = SkipGramScorer(toy_store.tables)
    candidates = CandidateSet('cxt', (Candidate(0, 1, 'cat'), Candidate(2, 1, 'cut')))
    context = ScoringContext(0, 0, ('cxt', 'car', 'dog'), ((1, 1), (2, 3)))
    scores = scorer.score(candidates, context)
    assert scores == pytest.approx([
        skipgram_log_likelihood(0, [1, 3], toy_store.tables),
        skipgram_log_likelihood(2, [1, 3], toy_store.tables),
    ], abs=1e-12)


def test_sampled_normalizer_is_seeded_and_exact_when_pool_covers_vocab(toy_store):
    exact = SkipGramScorer(toy_store.tables)
    full = SkipGramScorer(toy_store.tables, normalizer_sample=10)
    assert full.pool is None
    assert full.normalizer(3) == pytest.approx(exact.normalizer(3))

    first = SkipGramScorer(toy_store.tables, normalizer_sample=3, seed=9)
    second = SkipGramScorer(toy_store.tables, normalizer_sample=3, seed=9)
    assert first.pool.tolist() == second.pool.tolist()
    assert len(first.pool) == 3
    assert first.normalizer(1) == second.normalizer(1)


def test_file_scorer_load_and_lookup(tmp_path):
    path = write_text(tmp_path / 's.tsv', ["0\t2\tin\t-0.5", "", "1\t0\tthe\t-1e-3"])
    scorer = file_scorer_load(path)
    assert scorer.lookup(0, 2, 'in') == -0.5
    assert scorer.lookup(1, 0, 'the') == pytest.approx(-1e-3)
    assert scorer.lookup(0, 2, 'on') == MISSING_SCORE

    candidates = CandidateSet('yn', (Candidate(5, 1, 'in'), Candidate(3, 1, 'on')))
    context = ScoringContext(0, 2, ('a', 'b', 'yn'))
    assert scorer.score(candidates, context).tolist() == [-0.5, MISSING_SCORE]


@pytest.mark.parametrize("line,message", [
    ("0\t1\tword", "expected 4"),
    ("a\t1\tword\t0.1", "malformed key"),
    ("\u00b2\t1\tword\t0.1", "line 1: malformed key"),
    ("0\t\u0663\tword\t0.1", "line 1: malformed key"),
    ("0\t1\tword\tabc", "malformed log score"),
    ("0\t1\tword\tnan", "non-finite"),
])
def test_file_scorer_rejects_malformed_lines(tmp_path, line, message):
    path = write_text(tmp_path / 's.tsv', [line])
    with pytest.raises(ScoreFileError, match=message):
        file_scorer_load(path)


def test_file_scorer_rejects_duplicate_keys(tmp_path):
    path = write_text(tmp_path / 's.tsv', ["0\t1\tw\t0.1", "0\t1\tw\t0.2"])
    with pytest.raises(ScoreFileError, match="line 2: duplicate"):
        file_scorer_load(path)


def test_file_scorer_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        file_scorer_load(str(tmp_path / 'absent.tsv'))


def test_embedder_passes_in_vocabulary_tokens_through(toy_store):
    embedder = RobustEmbedder(toy_store, build_index(toy_store.vocab), SkipGramScorer(toy_store.tables))
    posts = embedder.sentence_posteriors(['cat', 'cxr', 'road'])
    assert len(posts[0].candidates) == 1
    assert posts[0].map_candidate().word == 'cat'
    assert posts[0].probabilities.tolist() == [1.0]
    assert posts[2].map_candidate().word == 'road'
    assert posts[1].candidates.query == 'cxr'
    assert len(posts[1].candidates) == 5


def test_embedder_context_prefers_cooccurring_candidate(toy_store):
    embedder = RobustEmbedder(toy_store, build_index(toy_store.vocab), SkipGramScorer(toy_store.tables))
    # 'cxr' is one edit from cat, car and cut; 'road' shares the car direction
    post = embedder.token_posterior(['cxr', 'road'], 0, 0)
    assert post.candidates.words[:3] == ['cat', 'car', 'cut']
    assert post.map_candidate().word == 'car'


def test_embedder_window_limits_context(toy_store):
    embedder = RobustEmbedder(toy_store, build_index(toy_store.vocab), uniform_scorer(), window=1)
    context = embedder.context_for(['cat', 'zzz', 'dog', 'road'], 1, 4)
    assert context.context_ids == ((0, 0), (2, 3))
    assert context.sentence_index == 4

    unlimited = RobustEmbedder(toy_store, build_index(toy_store.vocab), uniform_scorer())
    assert unlimited.context_for(['cat', 'zzz', 'dog', 'road'], 1, 0).context_ids == ((0, 0), (2, 3), (3, 4))


def test_embedder_max_dist_can_leave_no_candidates(toy_store):
    embedder = RobustEmbedder(toy_store, build_index(toy_store.vocab), uniform_scorer(), max_dist=1)
    assert embedder.token_posterior(['qqqqqq'], 0, 0) is None
    assert embedder.token_posterior(['cxt'], 0, 0).candidates.distances == [1, 1]


def test_all_tokens_mode_reprocesses_in_vocabulary_words(toy_store):
    embedder = RobustEmbedder(toy_store, build_index(toy_store.vocab), uniform_scorer(), oov_only=False)
    post = embedder.token_posterior(['cat'], 0, 0)
    assert len(post.candidates) == 5
    assert post.map_candidate().word == 'cat'
    assert post.probabilities[0] > 0.99


def test_caches_are_bounded_and_shared_across_threads(toy_store):
    scorer = SkipGramScorer(toy_store.tables)
    embedder = RobustEmbedder(toy_store, build_index(toy_store.vocab), scorer)
    assert embedder.candidates.cache_info().maxsize == CANDIDATE_CACHE_SIZE
    assert scorer.normalizer.cache_info().maxsize == NORMALIZER_CACHE_SIZE

    sentences = [['cxr', 'road'], ['cat', 'dgo', 'kat'], ['rood', 'cut', 'cxt']] * 20
    expected = [
        [None if p is None else p.log_posterior.tolist() for p in embedder.sentence_posteriors(s, i)]
        for i, s in enumerate(sentences)
    ]

    fresh = RobustEmbedder(toy_store, build_index(toy_store.vocab), SkipGramScorer(toy_store.tables))

    def run(item):
        i, s = item
        return [None if p is None else p.log_posterior.tolist() for p in fresh.sentence_posteriors(s, i)]

    with ThreadPoolExecutor(max_workers=8) as pool:
        assert list(pool.map(run, enumerate(sentences))) == expected
    assert fresh.candidates.cache_info().currsize == len({t for s in sentences for t in s if t not in toy_store.vocab})

import numpy as np
import pytest

from app.config import ENV_NAMES
from app.vocab_store import MisspellingDictionary, Vocabulary, VocabStore, save_embeddings


@pytest.fixture(autouse=True)
def isolated_storage(tmp_path, monkeypatch):
    """Run log, report parts and exports go under tmp_path; no RED_* leaks in."""
    data_dir = tmp_path / 'data'
    monkeypatch.setenv('DATA_DIR', str(data_dir))
    monkeypatch.setenv('DATABASE_PATH', str(data_dir / 'runs.db'))
    monkeypatch.setenv('EXPORT_DIR', str(data_dir / 'processed'))
    for name in ENV_NAMES.values():
        monkeypatch.delenv(name, raising=False)
    monkeypatch.chdir(tmp_path)
    return data_dir


def write_vectors(path, words, matrix) -> str:
    save_embeddings(str(path), Vocabulary.from_words(words), np.asarray(matrix, dtype=np.float64))
    return str(path)


def write_text(path, lines) -> str:
    with open(path, 'w', encoding='utf-8') as f:
        f.write(''.join(line + '\n' for line in lines))
    return str(path)


def random_vectors(n: int, dim: int, seed: int = 0) -> np.ndarray:
    return np.random.default_rng(seed).normal(0.0, 0.5, size=(n, dim))


# Vocabulary order is frequency rank: the distractors come first so that the
# rank tie-break alone picks the wrong word at equal edit distance.
SAMPLE_WORDS = [
    '.', 'a', 'is', 'on', 'an', 'in', 'ale', 'anyone', 'someone', 'alley',
    'bowling', 'the', 'great', 'thing', 'to', 'keep', 'calm',
]
SAMPLE_NOISY = [
    'oneone is yn a bowlind aley .',
    'teh graet thing is ot keep clam .',
]
SAMPLE_EXPECTED = [
    'someone is in a bowling alley .',
    'the great thing is to keep calm .',
]
SAMPLE_TOP1 = [
    'anyone is on a bowling ale .',
    'the great thing is on keep calm .',
]
# Contextual preferences a masked LM would supply; anything absent scores -1e9.
SAMPLE_SCORES = [
    (0, 0, 'someone', -0.1), (0, 0, 'anyone', -6.0),
    (0, 2, 'in', -0.2), (0, 2, 'on', -5.0), (0, 2, 'an', -7.0),
    (0, 4, 'bowling', -0.1),
    (0, 5, 'alley', -0.3), (0, 5, 'ale', -8.0),
    (1, 0, 'the', -0.1), (1, 0, 'to', -3.0),
    (1, 1, 'great', -0.1),
    (1, 4, 'to', -0.1), (1, 4, 'on', -20.0),
    (1, 6, 'calm', -0.1),
]


@pytest.fixture
def sample_files(tmp_path):
    return {
        'center': write_vectors(tmp_path / 'center.vec', SAMPLE_WORDS, random_vectors(len(SAMPLE_WORDS), 4)),
        'scores': write_text(tmp_path / 'scores.tsv', [f"{s}\t{t}\t{w}\t{v}" for s, t, w, v in SAMPLE_SCORES]),
        'noisy': write_text(tmp_path / 'noisy.txt', SAMPLE_NOISY),
    }


@pytest.fixture
def toy_store():
    """Five words, D=3, with context vectors; 'cat' and 'car' co-occur strongly."""
    words = ['cat', 'car', 'cut', 'dog', 'road']
    center = np.array([
        [1.0, 0.0, 0.0],
        [0.0, 1.0, 0.0],
        [0.0, 0.0, 1.0],
        [1.0, 1.0, 0.0],
        [0.0, 2.0, 0.0],
    ])
    context = center.copy()
    misspellings = MisspellingDictionary({'cat': ['kat'], 'road': ['raod', 'rode']})
    return VocabStore.from_arrays(words, center, context, misspellings)


@pytest.fixture
def vector_files(tmp_path, toy_store):
    center = write_vectors(tmp_path / 'toy_center.vec', toy_store.vocab.words, toy_store.tables.center)
    context = write_vectors(tmp_path / 'toy_context.vec', toy_store.vocab.words, toy_store.tables.context)
    return {'center': center, 'context': context}


def corpus_lines(path) -> list:
    with open(path, 'r', encoding='utf-8') as f:
        return f.read().split('\n')[:-1]


def file_bytes(path) -> bytes:
    with open(path, 'rb') as f:
        return f.read()

"""Seeded synthetic corpus for desk-scale experiments.

Vocabulary words are random lowercase strings, a share of them one
substitution away from an earlier word so that equal-distance candidates
exist. Topic words lean along the first embedding axis (sign = class);
their context vectors follow their centre vectors so the skip-gram
likelihood prefers same-topic candidates. Sentences mix a few topic words
of their class with neutral filler.
"""
import os
import string
from dataclasses import dataclass
from typing import Dict, List

import numpy as np

from app.ingest import LabeledCorpus, format_labeled
from app.noise import SYNTHETIC_OPS, corrupt_word
from app.rng import SplitMix64
from app.utils import write_lines_atomic
from app.vocab_store import MisspellingDictionary, VocabStore, save_embeddings

NEUTRAL = -1
MISSPELLING_STREAM = 0x6D697373  # keeps misspelling draws apart from corpus noise streams


@dataclass(frozen=True)
class DeskConfig:
    vocab_size: int = 5000
    dim: int = 16
    min_len: int = 4
    max_len: int = 8
    confusable_fraction: float = 0.2
    topic_fraction: float = 0.2
    separation: float = 1.5
    spread: float = 0.3
    context_jitter: float = 0.1
    sentence_len: int = 10
    topic_words: int = 2
    n_train: int = 2000
    n_eval: int = 500
    misspellings_per_word: int = 2
    seed: int = 0

    def __post_init__(self):
        if self.vocab_size < 10 or self.dim < 1:
            raise ValueError("desk corpus needs vocab_size >= 10 and dim >= 1")
        if not 1 <= self.topic_words <= self.sentence_len:
            raise ValueError("topic_words must be within 1..sentence_len")
        if not 2 <= self.min_len <= self.max_len:
            raise ValueError("word lengths must satisfy 2 <= min_len <= max_len")


@dataclass
class DeskCorpus:
    config: DeskConfig
    words: List[str]
    word_class: np.ndarray  # NEUTRAL, 0 or 1 per word
    center: np.ndarray
    context: np.ndarray
    misspellings: MisspellingDictionary
    train: LabeledCorpus
    eval: LabeledCorpus

    def store(self) -> VocabStore:
        return VocabStore.from_arrays(self.words, self.center, self.context, self.misspellings)

    def write(self, out_dir: str) -> Dict[str, str]:
        os.makedirs(out_dir, exist_ok=True)
        store = self.store()
        paths = {
            'center': os.path.join(out_dir, 'center.vec'),
            'context': os.path.join(out_dir, 'context.vec'),
            'misspellings': os.path.join(out_dir, 'misspellings.tsv'),
            'train': os.path.join(out_dir, 'train.tsv'),
            'eval': os.path.join(out_dir, 'eval.tsv'),
        }
        save_embeddings(paths['center'], store.vocab, self.center)
        save_embeddings(paths['context'], store.vocab, self.context)
        write_lines_atomic(paths['misspellings'], (
            f"{variant}\t{word}" for word, variants in self.misspellings.items() for variant in variants
        ))
        for name in ('train', 'eval'):
            corpus = getattr(self, name)
            write_lines_atomic(paths[name], (format_labeled(label, tokens) for tokens, label in corpus.examples))

        print(f"[DESK] Wrote {len(self.words)} words, {len(self.train)} train and "
              f"{len(self.eval)} eval examples to {out_dir}", flush=True)
        return paths


def _random_word(rng: np.random.Generator, config: DeskConfig) -> str:
    length = int(rng.integers(config.min_len, config.max_len + 1))
    return ''.join(string.ascii_lowercase[i] for i in rng.integers(0, 26, size=length))


def _confusable(rng: np.random.Generator, base: str) -> str:
    pos = int(rng.integers(len(base)))
    letters = [c for c in string.ascii_lowercase if c != base[pos]]
    return base[:pos] + letters[int(rng.integers(len(letters)))] + base[pos + 1:]


def generate_words(rng: np.random.Generator, config: DeskConfig) -> List[str]:
    words: List[str] = []
    seen = set()
    while len(words) < config.vocab_size:
        if words and rng.random() < config.confusable_fraction:
            word = _confusable(rng, words[int(rng.integers(len(words)))])
        else:
            word = _random_word(rng, config)
        if word not in seen:
            seen.add(word)
            words.append(word)
    return words


def generate_misspellings(words: List[str], config: DeskConfig) -> MisspellingDictionary:
    """Non-vocabulary single-edit variants of every word, drawn from seeded streams."""
    vocab = set(words)
    variants_of: Dict[str, List[str]] = {}
    for word_id, word in enumerate(words):
        rng = SplitMix64.derived(config.seed, MISSPELLING_STREAM, word_id)
        variants: List[str] = []
        for _ in range(4 * config.misspellings_per_word):
            _, variant = corrupt_word(word, SYNTHETIC_OPS[rng.randbelow(len(SYNTHETIC_OPS))], rng)
            if variant not in vocab and variant not in variants:
                variants.append(variant)
            if len(variants) == config.misspellings_per_word:
                break
        if variants:
            variants_of[word] = variants
    return MisspellingDictionary(variants_of)


def _sentences(rng: np.random.Generator, count: int, class_words: List[np.ndarray],
               neutral_words: np.ndarray, words: List[str], config: DeskConfig) -> LabeledCorpus:
    examples = []
    for _ in range(count):
        label = int(rng.integers(2))
        topic = rng.choice(class_words[label], size=config.topic_words, replace=False)
        filler = rng.choice(neutral_words, size=config.sentence_len - config.topic_words, replace=True)
        ids = rng.permutation(np.concatenate([topic, filler]))
        examples.append(([words[i] for i in ids], label))
    return LabeledCorpus(examples, 2)


def generate_desk_corpus(config: DeskConfig = DeskConfig()) -> DeskCorpus:
    rng = np.random.default_rng(config.seed)
    words = generate_words(rng, config)

    word_class = rng.choice(
        [NEUTRAL, 0, 1], size=len(words),
        p=[1 - config.topic_fraction, config.topic_fraction / 2, config.topic_fraction / 2]
    )
    class_words = [np.flatnonzero(word_class == c) for c in (0, 1)]
    neutral_words = np.flatnonzero(word_class == NEUTRAL)
    if min(len(class_words[0]), len(class_words[1])) < config.topic_words or len(neutral_words) == 0:
        raise ValueError("vocabulary too small for the requested topic structure")

    center = rng.normal(0.0, config.spread, size=(len(words), config.dim))
    center[word_class == 0, 0] -= config.separation
    center[word_class == 1, 0] += config.separation
    context = center + rng.normal(0.0, config.context_jitter, size=center.shape)

    train = _sentences(rng, config.n_train, class_words, neutral_words, words, config)
    evaluation = _sentences(rng, config.n_eval, class_words, neutral_words, words, config)

    corpus = DeskCorpus(
        config=config,
        words=words,
        word_class=word_class,
        center=center,
        context=context,
        misspellings=generate_misspellings(words, config),
        train=train,
        eval=evaluation,
    )
    print(f"[DESK] Generated {len(words)} words (D={config.dim}), "
          f"{len(class_words[0])}/{len(class_words[1])} topic words, seed={config.seed}", flush=True)
    return corpus

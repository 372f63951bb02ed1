import string
from dataclasses import dataclass
from typing import Iterable, List, Sequence, Tuple

import pandas as pd

from app.rng import SplitMix64
from app.vocab_store import MisspellingDictionary

ALPHABET = string.ascii_lowercase
SYNTHETIC_OPS = ('delete', 'insert', 'swap', 'replace')
TRACE_COLUMNS = ['sentence_index', 'word_index', 'op', 'original', 'corrupted']


@dataclass(frozen=True)
class NoiseSpec:
    mode: str = 'synthetic'
    prob: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ('synthetic', 'natural'):
            raise ValueError(f"noise mode must be 'synthetic' or 'natural', got '{self.mode}'")
        if not 0.0 <= self.prob <= 1.0:
            raise ValueError(f"noise probability must be within [0, 1], got {self.prob}")

    @property
    def label(self) -> str:
        return f"{self.mode}:{self.prob:g}"


@dataclass(frozen=True)
class NoiseRecord:
    sentence_index: int
    word_index: int
    op: str
    original: str
    corrupted: str

    @property
    def detail(self) -> str:
        return f"{self.original}->{self.corrupted}"


NoiseTrace = List[NoiseRecord]


def parse_noise_setting(setting: str, seed: int = 0) -> NoiseSpec:
    """'clean' or '<mode>:<prob>'."""
    setting = setting.strip()
    if setting == 'clean':
        return NoiseSpec('synthetic', 0.0, seed)
    mode, sep, prob = setting.partition(':')
    if not sep:
        raise ValueError(f"noise setting must be 'clean' or '<mode>:<prob>', got '{setting}'")
    try:
        return NoiseSpec(mode, float(prob), seed)
    except ValueError as e:
        raise ValueError(f"bad noise setting '{setting}': {e}")


def corrupt_word(word: str, op: str, rng: SplitMix64) -> Tuple[str, str]:
    """Apply one synthetic op. Returns (op actually applied, corrupted word)."""
    if not word:
        op = 'insert'
    elif len(word) < 2 and op in ('delete', 'swap'):
        op = 'replace'

    if op == 'delete':
        pos = rng.randbelow(len(word))
        return op, word[:pos] + word[pos + 1:]

    if op == 'insert':
        gap = rng.randbelow(len(word) + 1)
        ch = ALPHABET[rng.randbelow(len(ALPHABET))]
        return op, word[:gap] + ch + word[gap:]

    if op == 'swap':
        i = rng.randbelow(len(word))
        j = rng.randbelow(len(word) - 1)
        if j >= i:
            j += 1
        chars = list(word)
        chars[i], chars[j] = chars[j], chars[i]
        return op, ''.join(chars)

    pos = rng.randbelow(len(word))
    choices = [c for c in ALPHABET if c != word[pos]]
    return 'replace', word[:pos] + choices[rng.randbelow(len(choices))] + word[pos + 1:]


def inject_synthetic(sentence: Sequence[str], spec: NoiseSpec, sentence_index: int) -> Tuple[List[str], NoiseTrace]:
    if spec.mode != 'synthetic':
        raise ValueError(f"inject_synthetic needs mode 'synthetic', got '{spec.mode}'")

    words: List[str] = []
    trace: NoiseTrace = []

    for word_index, word in enumerate(sentence):
        rng = SplitMix64.derived(spec.seed, sentence_index, word_index)
        if rng.random() < spec.prob:
            op, corrupted = corrupt_word(word, SYNTHETIC_OPS[rng.randbelow(len(SYNTHETIC_OPS))], rng)
        else:
            op, corrupted = 'none', word
        words.append(corrupted)
        trace.append(NoiseRecord(sentence_index, word_index, op, word, corrupted))

    return words, trace


def inject_natural(
    sentence: Sequence[str],
    spec: NoiseSpec,
    dictionary: MisspellingDictionary,
    sentence_index: int
) -> Tuple[List[str], NoiseTrace]:
    """Selected words with known misspellings get a uniformly chosen one;
    selected words without any are left as they are."""
    if spec.mode != 'natural':
        raise ValueError(f"inject_natural needs mode 'natural', got '{spec.mode}'")

    words: List[str] = []
    trace: NoiseTrace = []

    for word_index, word in enumerate(sentence):
        rng = SplitMix64.derived(spec.seed, sentence_index, word_index)
        op, corrupted = 'none', word
        if rng.random() < spec.prob:
            variants = dictionary.variants_of(word)
            if variants:
                op, corrupted = 'substitute_dict', variants[rng.randbelow(len(variants))]
        words.append(corrupted)
        trace.append(NoiseRecord(sentence_index, word_index, op, word, corrupted))

    return words, trace


def inject(
    sentence: Sequence[str],
    spec: NoiseSpec,
    sentence_index: int,
    dictionary: MisspellingDictionary = None
) -> Tuple[List[str], NoiseTrace]:
    if spec.mode == 'natural':
        if dictionary is None:
            raise ValueError("natural noise needs a misspelling dictionary")
        return inject_natural(sentence, spec, dictionary, sentence_index)
    return inject_synthetic(sentence, spec, sentence_index)


def noisify_corpus(
    sentences: Iterable[Sequence[str]],
    spec: NoiseSpec,
    dictionary: MisspellingDictionary = None
) -> Tuple[List[List[str]], NoiseTrace]:
    """Corrupt sentences in file order; sentence_index is the line number."""
    noisy: List[List[str]] = []
    trace: NoiseTrace = []
    for sentence_index, sentence in enumerate(sentences):
        words, records = inject(sentence, spec, sentence_index, dictionary)
        noisy.append(words)
        trace.extend(records)

    corrupted = sum(1 for r in trace if r.op != 'none')
    print(f"[NOISE] {spec.label} seed={spec.seed}: corrupted {corrupted}/{len(trace)} words", flush=True)
    return noisy, trace


def trace_frame(trace: NoiseTrace) -> pd.DataFrame:
    return pd.DataFrame(
        [(r.sentence_index, r.word_index, r.op, r.original, r.corrupted) for r in trace],
        columns=TRACE_COLUMNS
    )


def op_mix(trace: NoiseTrace) -> pd.DataFrame:
    df = trace_frame(trace)
    if df.empty:
        return pd.DataFrame(columns=['Op', 'Count', 'Percentage'])
    counts = df['op'].value_counts()
    total = int(counts.sum())
    return pd.DataFrame([
        {'Op': op, 'Count': int(count), 'Percentage': round(count / total * 100, 2)}
        for op, count in counts.items()
    ])

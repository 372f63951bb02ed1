import os
from dataclasses import dataclass
from typing import List, Sequence, Tuple

from app.utils import normalize_text


class CorpusFormatError(ValueError):
    pass


@dataclass
class LabeledCorpus:
    examples: List[Tuple[List[str], int]]
    num_classes: int

    def __post_init__(self):
        if not self.examples:
            raise CorpusFormatError("labeled corpus is empty")
        if self.num_classes < 2:
            raise CorpusFormatError(f"need at least 2 classes, got {self.num_classes}")
        for idx, (_, label) in enumerate(self.examples):
            if not 0 <= label < self.num_classes:
                raise CorpusFormatError(f"example {idx}: label {label} outside 0..{self.num_classes - 1}")

    def __len__(self) -> int:
        return len(self.examples)

    @property
    def sentences(self) -> List[List[str]]:
        return [tokens for tokens, _ in self.examples]

    @property
    def labels(self) -> List[int]:
        return [label for _, label in self.examples]

    def with_sentences(self, sentences: Sequence[Sequence[str]]) -> "LabeledCorpus":
        if len(sentences) != len(self.examples):
            raise CorpusFormatError(
                f"corpus length mismatch: {len(sentences)} sentences for {len(self.examples)} examples"
            )
        return LabeledCorpus(
            [(list(tokens), label) for tokens, (_, label) in zip(sentences, self.examples)],
            self.num_classes
        )


def _read_raw_lines(path: str) -> List[str]:
    if not os.path.exists(path):
        raise FileNotFoundError(f"corpus file not found: {path}")

    with open(path, 'r', encoding='utf-8-sig') as f:
        return [line.rstrip('\r\n') for line in f]


def read_corpus(path: str) -> List[List[str]]:
    """One sentence per line, normalized once here."""
    lines = _read_raw_lines(path)
    print(f"[INGEST] Read {len(lines)} sentences from {os.path.basename(path)}", flush=True)
    return [normalize_text(line) for line in lines]


def parse_labeled_line(line: str, line_no: int) -> Tuple[int, List[str]]:
    label, sep, text = line.partition('\t')
    if not sep:
        raise CorpusFormatError(f"line {line_no}: expected 'label<TAB>text'")
    try:
        value = int(label)
    except ValueError:
        raise CorpusFormatError(f"line {line_no}: label '{label}' is not an integer")
    tokens = normalize_text(text)
    if not tokens:
        raise CorpusFormatError(f"line {line_no}: empty text")
    return value, tokens


def read_labeled_lines(path: str) -> List[Tuple[int, List[str]]]:
    rows = []
    for line_no, line in enumerate(_read_raw_lines(path), start=1):
        if not line.strip():
            continue
        try:
            rows.append(parse_labeled_line(line, line_no))
        except CorpusFormatError as e:
            raise CorpusFormatError(f"{path}: {e}")
    return rows


def read_labeled_corpus(path: str, num_classes: int = None) -> LabeledCorpus:
    rows = read_labeled_lines(path)
    if not rows:
        raise CorpusFormatError(f"{path}: labeled corpus is empty")

    if num_classes is None:
        num_classes = max(2, max(label for label, _ in rows) + 1)

    print(f"[INGEST] Read {len(rows)} labeled examples ({num_classes} classes) from {os.path.basename(path)}", flush=True)
    return LabeledCorpus([(tokens, label) for label, tokens in rows], num_classes)


def format_sentence(tokens: Sequence[str]) -> str:
    return ' '.join(tokens)


def format_labeled(label: int, tokens: Sequence[str]) -> str:
    return f"{label}\t{format_sentence(tokens)}"

"""Desk-scale downstream consumer and evaluation harness.

A one-hidden-layer classifier over the mean of token embeddings stands in for
the large downstream models; the harness compares Naive, Top-1, RED (MAP) and
RED-Ens (sampled ensemble) pipelines on clean and noisy copies of an eval set.
"""
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from app.ensemble import (
    UNKNOWN_ID,
    EmbeddedSequence,
    EnsembleBatch,
    aggregate,
    map_embedding,
    sample_ensemble,
    sequence_from_ids,
)
from app.ingest import LabeledCorpus
from app.noise import NoiseSpec
from app.robust_model import RobustEmbedder, TokenPosterior

CORRECTION_PIPELINES = ('naive', 'top1', 'red_map')
EVAL_PIPELINES = ('naive', 'top1', 'red', 'red_sample', 'red_ens', 'oracle')
REPORT_NAMES = {
    'naive': 'Naive',
    'top1': 'Top-1',
    'red': 'RED',
    'red_sample': 'RED-Sample',
    'red_ens': 'RED-Ens',
    'oracle': 'Oracle',
}
# pipeline -> correction used for token-level accuracy
TOKEN_METRIC_SOURCE = {'naive': 'naive', 'top1': 'top1', 'red': 'red_map', 'oracle': 'oracle'}


class TrainingDivergedError(RuntimeError):
    pass


@dataclass(frozen=True)
class ClassifierConfig:
    hidden: int = 64
    epochs: int = 50
    lr: float = 0.05
    batch_size: int = 32
    seed: int = 0


@dataclass
class ClassifierModel:
    w1: np.ndarray  # D x H
    b1: np.ndarray  # H
    w2: np.ndarray  # H x c
    b2: np.ndarray  # c
    seed: int = 0

    PARAMS = ('w1', 'b1', 'w2', 'b2')

    @property
    def dim(self) -> int:
        return int(self.w1.shape[0])

    @property
    def num_classes(self) -> int:
        return int(self.w2.shape[1])

    def forward(self, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        hidden = np.tanh(x @ self.w1 + self.b1)
        return hidden @ self.w2 + self.b2, hidden

    def logits(self, x: np.ndarray) -> np.ndarray:
        return self.forward(x)[0]


def init_classifier(dim: int, num_classes: int, hidden: int, seed: int) -> ClassifierModel:
    rng = np.random.default_rng(seed)
    return ClassifierModel(
        w1=rng.normal(0.0, 1.0 / np.sqrt(dim), size=(dim, hidden)),
        b1=np.zeros(hidden),
        w2=rng.normal(0.0, 1.0 / np.sqrt(hidden), size=(hidden, num_classes)),
        b2=np.zeros(num_classes),
        seed=seed,
    )


def _log_softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def cross_entropy(model: ClassifierModel, x: np.ndarray, y: np.ndarray) -> float:
    logits = model.logits(np.atleast_2d(x))
    log_probs = _log_softmax(logits)
    return float(-log_probs[np.arange(len(y)), y].mean())


def loss_and_gradients(model: ClassifierModel, x: np.ndarray, y: np.ndarray) -> Tuple[float, Dict[str, np.ndarray]]:
    x = np.atleast_2d(x)
    n = x.shape[0]
    logits, hidden = model.forward(x)
    log_probs = _log_softmax(logits)
    loss = float(-log_probs[np.arange(n), y].mean())

    d_logits = np.exp(log_probs)
    d_logits[np.arange(n), y] -= 1.0
    d_logits /= n

    d_hidden = (d_logits @ model.w2.T) * (1.0 - hidden ** 2)
    grads = {
        'w2': hidden.T @ d_logits,
        'b2': d_logits.sum(axis=0),
        'w1': x.T @ d_hidden,
        'b1': d_hidden.sum(axis=0),
    }
    return loss, grads


def embed_mean(seq: EmbeddedSequence) -> np.ndarray:
    if len(seq) == 0:
        raise ValueError("cannot average an empty sequence")
    return seq.vectors.mean(axis=0)


def fit_classifier(
    features: np.ndarray,
    labels: Sequence[int],
    num_classes: int,
    config: ClassifierConfig = ClassifierConfig()
) -> ClassifierModel:
    """Mini-batch gradient descent on cross-entropy; single-threaded and
    fully determined by `config.seed`."""
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    model = init_classifier(features.shape[1], num_classes, config.hidden, config.seed)

    n = features.shape[0]
    for epoch in range(config.epochs):
        order = np.random.default_rng([config.seed, epoch]).permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, config.batch_size):
            batch = order[start:start + config.batch_size]
            loss, grads = loss_and_gradients(model, features[batch], labels[batch])
            if not np.isfinite(loss):
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch}, batch starting {start} "
                    f"(lr={config.lr}, hidden={config.hidden}); lower the learning rate"
                )
            for name in ClassifierModel.PARAMS:
                setattr(model, name, getattr(model, name) - config.lr * grads[name])
            epoch_loss += loss * len(batch)

        if epoch == config.epochs - 1 or (epoch + 1) % 10 == 0:
            print(f"[TRAIN] epoch {epoch + 1}/{config.epochs} loss={epoch_loss / n:.4f}", flush=True)

    return model


def predict_logits(model: ClassifierModel, seq: EmbeddedSequence) -> np.ndarray:
    return model.logits(embed_mean(seq)[None, :])[0]


def accuracy(model: ClassifierModel, features: np.ndarray, labels: Sequence[int]) -> float:
    predictions = np.argmax(model.logits(np.asarray(features)), axis=1)
    return float(np.mean(predictions == np.asarray(labels)))


def gradient_check(model: ClassifierModel, x: np.ndarray, y: int, step: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients.

    Entries whose magnitude is below 1e-5 are compared on an absolute scale.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    labels = np.array([y])
    _, analytic = loss_and_gradients(model, x, labels)

    worst = 0.0
    for name in ClassifierModel.PARAMS:
        param = getattr(model, name)
        numeric = np.zeros_like(param)
        for idx in np.ndindex(param.shape):
            original = param[idx]
            param[idx] = original + step
            plus = cross_entropy(model, x, labels)
            param[idx] = original - step
            minus = cross_entropy(model, x, labels)
            param[idx] = original
            numeric[idx] = (plus - minus) / (2 * step)

        scale = np.maximum(np.maximum(np.abs(analytic[name]), np.abs(numeric)), 1e-5)
        worst = max(worst, float(np.max(np.abs(analytic[name] - numeric) / scale)))

    return worst


class DownstreamPipelines:
    """Turns token lists into corrected text or embedded sequences for each
    pipeline, sharing candidate lookups and posteriors across pipelines."""

    def __init__(self, embedder: RobustEmbedder, m: int = 10, seed: int = 0, aggregate_method: str = 'mean'):
        self.embedder = embedder
        self.vocab = embedder.vocab
        self.tables = embedder.store.tables
        self.m = m
        self.seed = seed
        self.aggregate_method = aggregate_method

    def naive_ids(self, tokens: Sequence[str]) -> List[int]:
        return [self.vocab.id_of.get(token, UNKNOWN_ID) for token in tokens]

    def top1_ids(self, tokens: Sequence[str]) -> List[int]:
        ids = []
        for token in tokens:
            word_id = self.vocab.get(token)
            if word_id is None:
                candidates = self.embedder.candidates(token)
                word_id = candidates[0].word_id if len(candidates) else UNKNOWN_ID
            ids.append(word_id)
        return ids

    def posteriors(self, tokens: Sequence[str], sentence_index: int) -> List[Optional[TokenPosterior]]:
        return self.embedder.sentence_posteriors(tokens, sentence_index)

    def correct_text(self, tokens: Sequence[str], pipeline: str, sentence_index: int = 0,
                     posteriors: Optional[List[Optional[TokenPosterior]]] = None) -> List[str]:
        if pipeline == 'naive':
            return list(tokens)
        if pipeline == 'top1':
            ids = self.top1_ids(tokens)
        elif pipeline == 'red_map':
            if posteriors is None:
                posteriors = self.posteriors(tokens, sentence_index)
            ids = [UNKNOWN_ID if post is None else post.map_candidate().word_id for post in posteriors]
        else:
            raise ValueError(f"unknown correction pipeline '{pipeline}'")

        return [token if word_id == UNKNOWN_ID else self.vocab.words[word_id]
                for token, word_id in zip(tokens, ids)]

    def embed(self, tokens: Sequence[str], pipeline: str, sentence_index: int = 0,
              posteriors: Optional[List[Optional[TokenPosterior]]] = None):
        """EmbeddedSequence for single-vector pipelines, EnsembleBatch for red_ens."""
        if pipeline == 'naive':
            return sequence_from_ids(self.naive_ids(tokens), self.tables)
        if pipeline == 'top1':
            return sequence_from_ids(self.top1_ids(tokens), self.tables)

        if posteriors is None:
            posteriors = self.posteriors(tokens, sentence_index)

        if pipeline == 'red':
            return map_embedding(posteriors, self.tables)
        if pipeline == 'red_sample':
            return sample_ensemble(posteriors, self.tables, 1, self.seed, sentence_index).sequences[0]
        if pipeline == 'red_ens':
            return sample_ensemble(posteriors, self.tables, self.m, self.seed, sentence_index)
        raise ValueError(f"unknown pipeline '{pipeline}'")

    def predict(self, model: ClassifierModel, embedded) -> int:
        if isinstance(embedded, EnsembleBatch):
            logits = np.stack([predict_logits(model, seq) for seq in embedded.sequences])
            return aggregate(logits, self.aggregate_method)
        return int(np.argmax(predict_logits(model, embedded)))


def correct_text(sentence: Sequence[str], pipeline: str, pipelines: DownstreamPipelines,
                 sentence_index: int = 0) -> List[str]:
    return pipelines.correct_text(sentence, pipeline, sentence_index)


def train_classifier(
    corpus: LabeledCorpus,
    pipelines: DownstreamPipelines,
    config: ClassifierConfig = ClassifierConfig()
) -> ClassifierModel:
    """Train on the MAP embedding of `corpus` (clean text in the main protocol)."""
    features = np.stack([
        embed_mean(pipelines.embed(tokens, 'red', idx)) for idx, tokens in enumerate(corpus.sentences)
    ])
    print(f"[TRAIN] {len(corpus)} examples, D={features.shape[1]}, classes={corpus.num_classes}", flush=True)
    model = fit_classifier(features, corpus.labels, corpus.num_classes, config)
    print(f"[TRAIN] training accuracy {accuracy(model, features, corpus.labels):.4f}", flush=True)
    return model


@dataclass
class EvalReport:
    rows: pd.DataFrame
    runtimes: Dict[Tuple[str, str], float] = field(default_factory=dict)
    config: Dict[str, object] = field(default_factory=dict)

    COLUMNS = ['pipeline', 'noise_mode', 'rate', 'metric', 'value']

    def value(self, pipeline: str, noise_mode: str, rate: float, metric: str = 'accuracy') -> float:
        match = self.rows[
            (self.rows['pipeline'] == pipeline)
            & (self.rows['noise_mode'] == noise_mode)
            & (np.isclose(self.rows['rate'], rate))
            & (self.rows['metric'] == metric)
        ]
        if match.empty:
            raise KeyError(f"no {metric} for {pipeline} at {noise_mode}:{rate}")
        return float(match['value'].iloc[0])

    def to_lines(self) -> List[str]:
        lines = [f"# {key}={value}" for key, value in sorted(self.config.items())]
        for row in self.rows.itertuples(index=False):
            lines.append(f"{row.pipeline}\t{row.noise_mode}\t{row.rate:g}\t{row.metric}\t{row.value:.6f}")
        return lines

    def to_table(self) -> str:
        if self.rows.empty:
            return "(empty report)"
        df = self.rows.copy()
        df['setting'] = df['noise_mode'] + ':' + df['rate'].map(lambda r: f"{r:g}")
        pivot = df.pivot_table(index=['metric', 'pipeline'], columns='setting', values='value', sort=False)
        lines = ["Effective config:"]
        lines += [f"  {key} = {value}" for key, value in sorted(self.config.items())]
        lines += ["", pivot.round(4).to_string()]
        if self.runtimes:
            lines += ["", "Runtime (s):"]
            lines += [f"  {REPORT_NAMES.get(p, p)} @ {s}: {t:.2f}" for (p, s), t in self.runtimes.items()]
        return '\n'.join(lines)


def token_accuracy(clean: Sequence[Sequence[str]], noisy: Sequence[Sequence[str]],
                   corrected: Sequence[Sequence[str]]) -> Tuple[int, int]:
    """(restored, noised) counts over positions where noise changed the token."""
    restored = noised = 0
    for clean_s, noisy_s, fixed_s in zip(clean, noisy, corrected):
        for c, n, f in zip(clean_s, noisy_s, fixed_s):
            if c != n:
                noised += 1
                restored += int(c == f)
    return restored, noised


def evaluate(
    clean: LabeledCorpus,
    variants: Sequence[Tuple[NoiseSpec, LabeledCorpus]],
    pipelines: Sequence[str],
    model: ClassifierModel,
    downstream: DownstreamPipelines,
    config: Optional[Dict[str, object]] = None
) -> EvalReport:
    """Classification accuracy per pipeline x noise setting, plus token-level
    correction accuracy for the correcting pipelines."""
    for name in pipelines:
        if name not in EVAL_PIPELINES:
            raise ValueError(f"unknown pipeline '{name}'")

    rows = []
    runtimes: Dict[Tuple[str, str], float] = {}
    labels = np.asarray(clean.labels)

    for spec, noisy in variants:
        if len(noisy) != len(clean):
            raise ValueError(f"{spec.label}: {len(noisy)} noisy examples for {len(clean)} clean ones")

        mode = 'clean' if spec.prob == 0 else spec.mode
        setting = f"{mode}:{spec.prob:g}"
        sentences = noisy.sentences
        posterior_cache: Dict[int, List[Optional[TokenPosterior]]] = {}

        def cached_posteriors(idx: int):
            if idx not in posterior_cache:
                posterior_cache[idx] = downstream.posteriors(sentences[idx], idx)
            return posterior_cache[idx]

        for name in pipelines:
            started = time.perf_counter()
            predictions = []
            corrected = []
            for idx, tokens in enumerate(sentences):
                if name == 'oracle':
                    embedded = downstream.embed(clean.sentences[idx], 'red', idx)
                    corrected.append(list(clean.sentences[idx]))
                else:
                    posts = cached_posteriors(idx) if name.startswith('red') else None
                    embedded = downstream.embed(tokens, name, idx, posts)
                    source = TOKEN_METRIC_SOURCE.get(name)
                    if source is not None:
                        corrected.append(downstream.correct_text(tokens, source, idx, posts))
                predictions.append(downstream.predict(model, embedded))

            acc = float(np.mean(np.asarray(predictions) == labels))
            rows.append((name, mode, spec.prob, 'accuracy', acc))

            if name in TOKEN_METRIC_SOURCE:
                restored, noised = token_accuracy(clean.sentences, sentences, corrected)
                if noised:
                    rows.append((name, mode, spec.prob, 'token_accuracy', restored / noised))

            runtimes[(name, setting)] = time.perf_counter() - started
            print(f"[EVAL] {REPORT_NAMES[name]:>10} @ {setting}: accuracy={acc:.4f}", flush=True)

    return EvalReport(pd.DataFrame(rows, columns=EvalReport.COLUMNS), runtimes, dict(config or {}))

"""Pipeline configuration.

Precedence, lowest first: built-in defaults, environment (.env via
python-dotenv), a key=value --config file, command-line flags.
"""
import os
from dataclasses import asdict, dataclass, fields, replace
from typing import Any, Dict, Mapping, Optional, Tuple

from dotenv import load_dotenv

from app.downstream import EVAL_PIPELINES, DownstreamPipelines
from app.fuzzy_index import build_index
from app.robust_model import PriorConfig, RobustEmbedder, SkipGramScorer, file_scorer_load, uniform_scorer
from app.vocab_store import VocabStore

LIKELIHOODS = ('skipgram', 'uniform', 'file')
STRATEGIES = ('map', 'sample', 'ensemble')
AGGREGATES = ('mean', 'majority')

ENV_NAMES = {
    'tau': 'RED_TAU',
    'k': 'RED_K',
    'm': 'RED_M',
    'seed': 'RED_SEED',
    'likelihood': 'RED_LIKELIHOOD',
    'strategy': 'RED_STRATEGY',
    'aggregate': 'RED_AGGREGATE',
    'max_dist': 'RED_MAX_DIST',
    'window': 'RED_WINDOW',
    'center': 'RED_CENTER',
    'context': 'RED_CONTEXT',
    'misspellings': 'RED_MISSPELLINGS',
    'scores': 'RED_SCORES',
}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class PipelineConfig:
    center: Optional[str] = None
    context: Optional[str] = None
    misspellings: Optional[str] = None
    scores: Optional[str] = None
    tau: float = 0.1
    k: int = 10
    m: int = 10
    max_dist: Optional[int] = None
    likelihood: str = 'skipgram'
    strategy: str = 'map'
    aggregate: str = 'mean'
    oov_only: bool = True
    window: Optional[int] = None
    seed: int = 0
    noise_seed: Optional[int] = None
    normalizer_sample: Optional[int] = None
    hidden: int = 64
    epochs: int = 50
    lr: float = 0.05
    batch_size: int = 32
    pipelines: Tuple[str, ...] = ('naive', 'top1', 'red', 'red_ens')

    @classmethod
    def field_names(cls) -> Tuple[str, ...]:
        return tuple(f.name for f in fields(cls))

    @classmethod
    def from_env(cls) -> "PipelineConfig":
        load_dotenv()
        values = {}
        for name, env_name in ENV_NAMES.items():
            raw = os.getenv(env_name)
            if raw is not None and raw.strip() != '':
                values[name] = raw
        return cls().merged(values)

    @staticmethod
    def read_file(path: str) -> Dict[str, str]:
        """key=value lines; '#' comments and blank lines ignored."""
        if not os.path.exists(path):
            raise ConfigError(f"config file not found: {path}")

        values: Dict[str, str] = {}
        with open(path, 'r', encoding='utf-8') as f:
            for line_no, line in enumerate(f, start=1):
                line = line.strip()
                if not line or line.startswith('#'):
                    continue
                key, sep, value = line.partition('=')
                key = key.strip().replace('-', '_')
                if not sep or not key:
                    raise ConfigError(f"{path}: line {line_no}: expected key=value")
                if key not in PipelineConfig.field_names():
                    raise ConfigError(f"{path}: line {line_no}: unknown key '{key}'")
                values[key] = value.strip()
        return values

    @classmethod
    def from_file(cls, path: str, base: Optional["PipelineConfig"] = None) -> "PipelineConfig":
        return (base or cls()).merged(cls.read_file(path))

    def merged(self, overrides: Mapping[str, Any]) -> "PipelineConfig":
        """Apply overrides (None values skipped), coercing strings to field types."""
        changes = {}
        for key, value in overrides.items():
            if value is None:
                continue
            if key not in self.field_names():
                raise ConfigError(f"unknown config key '{key}'")
            changes[key] = _coerce(key, value)
        return replace(self, **changes)

    @property
    def effective_noise_seed(self) -> int:
        return self.seed if self.noise_seed is None else self.noise_seed

    def validate(self, need_vectors: bool = True) -> "PipelineConfig":
        if not self.tau > 0:
            raise ConfigError(f"--tau must be positive, got {self.tau}")
        if self.k < 1:
            raise ConfigError(f"--k must be >= 1, got {self.k}")
        if self.m < 1:
            raise ConfigError(f"--m must be >= 1, got {self.m}")
        if self.max_dist is not None and self.max_dist < 0:
            raise ConfigError(f"--max-dist must be >= 0, got {self.max_dist}")
        if self.window is not None and self.window < 0:
            raise ConfigError(f"--window must be >= 0, got {self.window}")
        if self.seed < 0:
            raise ConfigError(f"--seed must be non-negative, got {self.seed}")
        if self.normalizer_sample is not None and self.normalizer_sample < 1:
            raise ConfigError(f"--normalizer-sample must be >= 1, got {self.normalizer_sample}")
        if self.hidden < 1 or self.epochs < 0 or self.batch_size < 1 or not self.lr > 0:
            raise ConfigError("classifier settings need hidden >= 1, epochs >= 0, batch size >= 1, lr > 0")

        for name, value, allowed in (
            ('likelihood', self.likelihood, LIKELIHOODS),
            ('strategy', self.strategy, STRATEGIES),
            ('aggregate', self.aggregate, AGGREGATES),
        ):
            if value not in allowed:
                raise ConfigError(f"--{name} must be one of {', '.join(allowed)}, got '{value}'")

        unknown = [p for p in self.pipelines if p not in EVAL_PIPELINES]
        if unknown or not self.pipelines:
            raise ConfigError(f"--pipelines must be drawn from {', '.join(EVAL_PIPELINES)}, got {list(self.pipelines)}")

        if need_vectors:
            if not self.center:
                raise ConfigError("--center is required")
            if self.likelihood == 'skipgram' and not self.context:
                raise ConfigError("--likelihood skipgram requires --context")
            if self.likelihood == 'file' and not self.scores:
                raise ConfigError("--likelihood file requires --scores")
        return self

    def as_dict(self) -> Dict[str, Any]:
        values = asdict(self)
        values['pipelines'] = ','.join(self.pipelines)
        return values


_INT_FIELDS = {'k', 'm', 'max_dist', 'window', 'seed', 'noise_seed', 'normalizer_sample', 'hidden', 'epochs', 'batch_size'}
_FLOAT_FIELDS = {'tau', 'lr'}
_NULLABLE = {'center', 'context', 'misspellings', 'scores', 'max_dist', 'window', 'noise_seed', 'normalizer_sample'}


def _coerce(key: str, value: Any) -> Any:
    if isinstance(value, str):
        text = value.strip()
        if key in _NULLABLE and text.lower() in ('', 'none', 'unlimited'):
            return None
        try:
            if key in _INT_FIELDS:
                return int(text)
            if key in _FLOAT_FIELDS:
                return float(text)
        except ValueError:
            raise ConfigError(f"{key}: cannot parse '{value}'")
        if key == 'oov_only':
            if text.lower() in ('1', 'true', 'yes', 'on'):
                return True
            if text.lower() in ('0', 'false', 'no', 'off'):
                return False
            raise ConfigError(f"oov_only: cannot parse '{value}'")
        if key == 'pipelines':
            return tuple(p.strip() for p in text.split(',') if p.strip())
        return text

    if key == 'pipelines':
        return tuple(value)
    return value


def build_scorer(config: PipelineConfig, store: VocabStore):
    if config.likelihood == 'uniform':
        return uniform_scorer()
    if config.likelihood == 'file':
        return file_scorer_load(config.scores)
    if not store.has_context:
        raise ConfigError("--likelihood skipgram requires --context")
    return SkipGramScorer(store.tables, config.normalizer_sample, config.seed)


def load_store(config: PipelineConfig) -> VocabStore:
    context = config.context if config.likelihood == 'skipgram' else None
    return VocabStore.load(config.center, context, config.misspellings)


def build_pipelines(config: PipelineConfig, store: VocabStore) -> DownstreamPipelines:
    """Index, scorer and embedder wired for one effective config."""
    embedder = RobustEmbedder(
        store,
        build_index(store.vocab),
        build_scorer(config, store),
        prior=PriorConfig(config.tau, config.k),
        max_dist=config.max_dist,
        oov_only=config.oov_only,
        window=config.window,
    )
    return DownstreamPipelines(embedder, config.m, config.seed, config.aggregate)

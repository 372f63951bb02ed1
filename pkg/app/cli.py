"""Command-line front end: noisify, correct, embed, eval, desk.

Exit codes: 0 success, 1 runtime or input error, 2 usage or config error.
"""
import argparse
import json
import os
import sys
import traceback
from typing import Callable, List, Optional, Sequence, Tuple

from app.aggregate import ReportAggregator
from app.config import ConfigError, PipelineConfig, build_pipelines, load_store
from app.database import Database
from app.desk_corpus import DeskConfig, generate_desk_corpus
from app.downstream import (
    ClassifierConfig,
    DownstreamPipelines,
    evaluate,
    train_classifier,
)
from app.ensemble import sample_ensemble
from app.export import ReportExporter
from app.ingest import LabeledCorpus, format_labeled, format_sentence, read_corpus, read_labeled_corpus
from app.noise import NoiseSpec, noisify_corpus, parse_noise_setting, trace_frame
from app.rng import derive_seed
from app.utils import compute_file_hash, compute_text_hash, format_float, write_lines_atomic
from app.vocab_store import MisspellingDictionary, load_misspellings

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2

TRAINING_NOISE_STREAM = 1


class CliParser(argparse.ArgumentParser):
    """Usage errors print one `[CLI] error:` line instead of the usage block."""

    def error(self, message: str):
        print(f"[CLI] error: {self.prog}: {' '.join(message.split())}", file=sys.stderr, flush=True)
        sys.exit(EXIT_USAGE)


def _shared_flags() -> argparse.ArgumentParser:
    """Every flag defaults to None so that only explicitly given flags
    override the environment and the --config file."""
    shared = CliParser(add_help=False)
    shared.add_argument('--config', help='key=value file applied before flags')
    shared.add_argument('--center', help='centre vectors (word-vector text format)')
    shared.add_argument('--context', help='context vectors for the skip-gram likelihood')
    shared.add_argument('--misspellings', help="'misspelling<TAB>correct' dictionary")
    shared.add_argument('--scores', help='external log scores for --likelihood file')
    shared.add_argument('--tau', type=float)
    shared.add_argument('--k', type=int)
    shared.add_argument('--m', type=int)
    shared.add_argument('--max-dist', dest='max_dist', type=int)
    shared.add_argument('--likelihood', choices=['skipgram', 'uniform', 'file'])
    shared.add_argument('--strategy', choices=['map', 'sample', 'ensemble'])
    shared.add_argument('--aggregate', choices=['mean', 'majority'])
    scope = shared.add_mutually_exclusive_group()
    scope.add_argument('--oov-only', dest='oov_only', action='store_const', const=True)
    scope.add_argument('--all-tokens', dest='oov_only', action='store_const', const=False)
    shared.add_argument('--window', type=int)
    shared.add_argument('--seed', type=int)
    shared.add_argument('--noise-seed', dest='noise_seed', type=int)
    shared.add_argument('--normalizer-sample', dest='normalizer_sample', type=int)
    return shared


def build_parser() -> argparse.ArgumentParser:
    shared = _shared_flags()
    parser = CliParser(prog='red', description='Noise-robust embeddings via candidate distributions')
    sub = parser.add_subparsers(dest='command', required=True)

    noisify = sub.add_parser('noisify', parents=[shared], help='inject synthetic or natural noise')
    noisify.add_argument('input')
    noisify.add_argument('output')
    noisify.add_argument('--mode', choices=['synthetic', 'natural'], default='synthetic')
    noisify.add_argument('--prob', type=float, default=0.2)
    noisify.add_argument('--trace', help="trace sidecar, 'sentence<TAB>word<TAB>op<TAB>original<TAB>corrupted' "
                                        "rows without a header (default: <output>.trace.tsv)")
    noisify.add_argument('--labeled', action='store_true', help="input lines are 'label<TAB>text'")

    correct = sub.add_parser('correct', parents=[shared], help='denoise text')
    correct.add_argument('input')
    correct.add_argument('output')
    correct.add_argument('--pipeline', choices=['naive', 'top1', 'red'], default='red')

    embed = sub.add_parser('embed', parents=[shared], help='write per-token vectors')
    embed.add_argument('input')
    embed.add_argument('output')

    ev = sub.add_parser('eval', parents=[shared], help='train the desk classifier and compare pipelines')
    ev.add_argument('--train', required=True, help="labeled training corpus ('label<TAB>text')")
    ev.add_argument('--eval', dest='eval_path', required=True, help='labeled evaluation corpus')
    ev.add_argument('--settings', default='clean,synthetic:0.2,synthetic:0.5',
                    help="comma-separated noise settings: 'clean' or '<mode>:<prob>'")
    ev.add_argument('--out', required=True, help='report prefix; writes <out>.tsv and <out>.txt')
    ev.add_argument('--xlsx', help='also write an Excel workbook here')
    ev.add_argument('--pipelines', help='comma-separated subset of naive,top1,red,red_sample,red_ens,oracle')
    ev.add_argument('--noisy-training', dest='noisy_training', help='noise setting applied to the training corpus')
    ev.add_argument('--hidden', type=int)
    ev.add_argument('--epochs', type=int)
    ev.add_argument('--lr', type=float)
    ev.add_argument('--batch-size', dest='batch_size', type=int)

    desk = sub.add_parser('desk', help='generate the synthetic desk corpus')
    desk.add_argument('out_dir')
    desk.add_argument('--seed', type=int, default=0)
    desk.add_argument('--vocab-size', dest='vocab_size', type=int, default=DeskConfig.vocab_size)
    desk.add_argument('--dim', type=int, default=DeskConfig.dim)
    desk.add_argument('--n-train', dest='n_train', type=int, default=DeskConfig.n_train)
    desk.add_argument('--n-eval', dest='n_eval', type=int, default=DeskConfig.n_eval)

    return parser


def resolve_config(args: argparse.Namespace, need_vectors: bool = True) -> PipelineConfig:
    config = PipelineConfig.from_env()
    if getattr(args, 'config', None):
        config = PipelineConfig.from_file(args.config, config)
    flags = {name: getattr(args, name) for name in PipelineConfig.field_names() if hasattr(args, name)}
    return config.merged(flags).validate(need_vectors)


def _noise_spec(args: argparse.Namespace, config: PipelineConfig) -> NoiseSpec:
    try:
        return NoiseSpec(args.mode, args.prob, config.effective_noise_seed)
    except ValueError as e:
        raise ConfigError(str(e))


def cmd_noisify(args: argparse.Namespace) -> int:
    config = resolve_config(args, need_vectors=False)
    spec = _noise_spec(args, config)

    dictionary: Optional[MisspellingDictionary] = None
    if spec.mode == 'natural':
        if not config.misspellings:
            raise ConfigError("--mode natural requires --misspellings")
        dictionary = load_misspellings(config.misspellings)

    if args.labeled:
        corpus = read_labeled_corpus(args.input)
        noisy, trace = noisify_corpus(corpus.sentences, spec, dictionary)
        lines = [format_labeled(label, tokens) for tokens, label in zip(noisy, corpus.labels)]
    else:
        noisy, trace = noisify_corpus(read_corpus(args.input), spec, dictionary)
        lines = [format_sentence(tokens) for tokens in noisy]

    trace_path = args.trace or f"{args.output}.trace.tsv"
    frame = trace_frame(trace)
    write_lines_atomic(trace_path, [
        '\t'.join(str(v) for v in row) for row in frame.itertuples(index=False)
    ])
    return write_lines_atomic(args.output, lines)


def _sample_words(pipelines: DownstreamPipelines, tokens: Sequence[str], sentence_index: int, m: int) -> List[List[str]]:
    posteriors = pipelines.posteriors(tokens, sentence_index)
    batch = sample_ensemble(posteriors, pipelines.tables, m, pipelines.seed, sentence_index)
    return batch.sample_words(pipelines.vocab, tokens)


def cmd_correct(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    store = load_store(config)
    pipelines = build_pipelines(config, store)
    sentences = read_corpus(args.input)

    lines: List[str] = []
    for idx, tokens in enumerate(sentences):
        if args.pipeline != 'red' or config.strategy == 'map':
            name = 'red_map' if args.pipeline == 'red' else args.pipeline
            lines.append(format_sentence(pipelines.correct_text(tokens, name, idx)))
        elif config.strategy == 'sample':
            lines.append(format_sentence(_sample_words(pipelines, tokens, idx, 1)[0]))
        else:
            for j, words in enumerate(_sample_words(pipelines, tokens, idx, config.m)):
                lines.append(f"{idx}\t{j}\t{format_sentence(words)}")

    print(f"[CLI] Corrected {len(sentences)} sentences ({args.pipeline}, strategy={config.strategy})", flush=True)
    return write_lines_atomic(args.output, lines)


def embedding_rows(pipelines: DownstreamPipelines, sentences: Sequence[Sequence[str]],
                   strategy: str, m: int) -> List[Tuple[str, Sequence[float]]]:
    """(position header, vector) per emitted row, in input order."""
    rows = []
    for idx, tokens in enumerate(sentences):
        if not tokens:
            continue
        posteriors = pipelines.posteriors(tokens, idx)
        if strategy == 'map':
            sequences = [pipelines.embed(tokens, 'red', idx, posteriors)]
        else:
            draws = 1 if strategy == 'sample' else m
            sequences = sample_ensemble(posteriors, pipelines.tables, draws, pipelines.seed, idx).sequences
        for j, seq in enumerate(sequences):
            for i, vector in enumerate(seq.vectors):
                rows.append((f"{idx}:{i}:{j}", vector))
    return rows


def cmd_embed(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    store = load_store(config)
    pipelines = build_pipelines(config, store)
    rows = embedding_rows(pipelines, read_corpus(args.input), config.strategy, config.m)

    lines = [f"{len(rows)} {store.tables.dim}"]
    lines += [header + ' ' + ' '.join(format_float(v) for v in vector) for header, vector in rows]
    write_lines_atomic(args.output, lines)
    print(f"[CLI] Wrote {len(rows)} vectors (strategy={config.strategy})", flush=True)
    return len(rows)


def _noisy_variant(corpus: LabeledCorpus, spec: NoiseSpec, dictionary: Optional[MisspellingDictionary]) -> LabeledCorpus:
    if spec.prob == 0:
        return corpus
    if spec.mode == 'natural' and dictionary is None:
        raise ConfigError(f"noise setting {spec.label} requires --misspellings")
    noisy, _ = noisify_corpus(corpus.sentences, spec, dictionary)
    return corpus.with_sentences(noisy)


def parse_settings(text: str, seed: int) -> List[NoiseSpec]:
    try:
        specs = [parse_noise_setting(part, seed) for part in text.split(',') if part.strip()]
    except ValueError as e:
        raise ConfigError(str(e))
    if not specs:
        raise ConfigError("--settings must name at least one noise setting")
    return specs


def cmd_eval(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    specs = parse_settings(args.settings, config.effective_noise_seed)
    training_spec = None
    if args.noisy_training:
        training_spec = parse_settings(args.noisy_training, derive_seed(config.effective_noise_seed, TRAINING_NOISE_STREAM))[0]

    store = load_store(config)
    pipelines = build_pipelines(config, store)

    train = read_labeled_corpus(args.train)
    # labels outside the training classes fail here
    evaluation = read_labeled_corpus(args.eval_path, train.num_classes)

    if training_spec is not None:
        train = _noisy_variant(train, training_spec, store.misspellings)

    classifier = ClassifierConfig(config.hidden, config.epochs, config.lr, config.batch_size, config.seed)
    model = train_classifier(train, pipelines, classifier)

    variants = [(spec, _noisy_variant(evaluation, spec, store.misspellings)) for spec in specs]
    provenance = config.as_dict()
    provenance.update({
        'settings': args.settings,
        'noisy_training': args.noisy_training or 'none',
        'train': os.path.basename(args.train),
        'eval': os.path.basename(args.eval_path),
    })
    report = evaluate(evaluation, variants, config.pipelines, model, pipelines, provenance)

    write_lines_atomic(f"{args.out}.tsv", report.to_lines())
    write_lines_atomic(f"{args.out}.txt", report.to_table().split('\n'))
    if args.xlsx:
        ReportExporter(output_dir=os.path.dirname(os.path.abspath(args.xlsx))).generate_report_workbook(report, args.xlsx)

    ReportAggregator().write_report_part(report, args.run_hash)
    print(report.to_table(), flush=True)
    return len(report.rows)


def cmd_desk(args: argparse.Namespace) -> int:
    try:
        config = DeskConfig(
            vocab_size=args.vocab_size, dim=args.dim, n_train=args.n_train, n_eval=args.n_eval, seed=args.seed
        )
    except ValueError as e:
        raise ConfigError(str(e))
    corpus = generate_desk_corpus(config)
    corpus.write(args.out_dir)
    return len(corpus.words)


COMMANDS: dict = {
    'noisify': cmd_noisify,
    'correct': cmd_correct,
    'embed': cmd_embed,
    'eval': cmd_eval,
    'desk': cmd_desk,
}


def _input_paths(args: argparse.Namespace) -> List[str]:
    names = ('input', 'train', 'eval_path', 'center', 'context', 'misspellings', 'scores', 'config')
    return [getattr(args, n) for n in names if getattr(args, n, None)]


def run_hash_for(args: argparse.Namespace) -> str:
    """Hash of the command, its arguments and the contents of its input files."""
    file_hashes = [compute_file_hash(p) if os.path.isfile(p) else 'missing' for p in _input_paths(args)]
    arguments = json.dumps({k: v for k, v in sorted(vars(args).items()) if k != 'run_hash'}, default=str)
    return compute_text_hash(args.command, arguments, *file_hashes)


def run_command(args: argparse.Namespace, handler: Callable[[argparse.Namespace], int]) -> int:
    """Run a command under the run log: processing, then completed or failed."""
    db = Database()
    args.run_hash = run_hash_for(args)
    run_id = db.log_run_start(args.run_hash, args.command)

    try:
        rows = handler(args)
    except Exception as e:
        db.log_run_error(run_id, f"{type(e).__name__}: {e}")
        raise

    report_path = f"{args.out}.tsv" if args.command == 'eval' else getattr(args, 'output', None)
    db.log_run_complete(run_id, rows, report_path)
    return EXIT_OK


def _one_line(error: BaseException) -> str:
    return ' '.join(str(error).split()) or type(error).__name__


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    try:
        return run_command(args, COMMANDS[args.command])
    except ConfigError as e:
        print(f"[CLI] error: {_one_line(e)}", file=sys.stderr, flush=True)
        return EXIT_USAGE
    except (OSError, ValueError, RuntimeError, KeyError) as e:
        print(f"[CLI] error: {_one_line(e)}", file=sys.stderr, flush=True)
        if os.getenv('RED_DEBUG'):
            traceback.print_exc()
        return EXIT_FAILURE


if __name__ == '__main__':
    sys.exit(main())

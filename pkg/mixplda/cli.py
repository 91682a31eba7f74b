"""
Command-line entry point.

Exit codes: 0 success, 1 domain error, 2 usage error, 3 input missing,
4 parse error, 5 numeric failure.

"""

import argparse
import json
import sys
from collections.abc import Sequence
from pathlib import Path
from typing import Any, Literal

from pydantic import Field, ValidationError, field_validator

from mixplda.adapters.binary import load_model, save_model, write_embeddings_binary
from mixplda.adapters.text import (
    read_embeddings,
    read_kv_config,
    read_posteriors,
    read_rttm,
    read_sad,
    read_training_labels,
    read_type_labels,
    training_set,
    write_embeddings,
    write_posteriors,
    write_rttm,
    write_sad,
    write_training_labels,
    write_type_labels,
)
from mixplda.adapters.types import existing
from mixplda.conf import settings
from mixplda.exceptions import InputMissingError, MixPldaError, PriorError
from mixplda.experiments import SUITES, ExperimentConfig, run_suite
from mixplda.log import logger
from mixplda.metrics import compute_der, compute_der_per_recording, group_by_recording, per_recording_reports
from mixplda.mixture import MixturePlda, log_lr_mixture, parse_prior, train_mixture
from mixplda.pipeline import (
    ORACLE_THRESHOLD,
    SINGLE_THRESHOLD,
    DiarizationHypothesis,
    DiarizationMode,
    MixtureMode,
    NumSpeakers,
    OneSpeakerMode,
    OracleTypeSplitMode,
    RecordingInputs,
    SingleMode,
    StopRule,
    Threshold,
    diarize,
)
from mixplda.plda import PldaModel, length_normalize, log_lr_single, train_plda
from mixplda.schemas import SPEAKER_TYPES, ConversationSpec, LabeledEmbeddingSet, MixPldaModel, SpeakerType
from mixplda.synth import (
    balance_by_type,
    corpus_records,
    corpus_spec_from_config,
    draw_speakers,
    generate_conversation,
    generate_training_corpus,
    make_rng,
    structured_corpus_spec,
    synthesize_posteriors,
)
from mixplda.utils import run_parallel

__all__ = ["RunConfig", "build_parser", "main"]

USAGE_ERROR = 2
POSTERIOR_SUFFIX = ".post"
TEST_SPEAKER_SEED = 7919

Mode = Literal["single", "mixture", "oracle-split", "one-speaker"]


class UsageError(MixPldaError):
    exit_code = USAGE_ERROR


class RunConfig(MixPldaModel):
    """
    Validated options of one CLI run.

    """

    command: Literal["train", "diarize", "score-pair", "der", "simulate", "experiment"]
    config: Path | None = None

    embeddings: Path | None = None
    labels: Path | None = None
    model: Path | None = None
    sad: Path | None = None
    type_labels: Path | None = None
    posteriors: Path | None = None
    reference: Path | None = None
    hypothesis: Path | None = None
    output: Path | None = None
    output_dir: Path | None = None
    spec: Path | None = None
    corpus_config: Path | None = None

    per_type: bool = False
    iterations: int | None = Field(default=None, ge=1)
    balance: int | None = Field(default=None, ge=1)
    seed: int = 0
    prior: str | None = None
    prior2: str | None = None
    component: SpeakerType | None = None

    mode: Mode | None = None
    stop: str | None = None
    type_thresholds: str | None = None
    window: float = Field(default=settings.window, gt=0.0)
    hop: float = Field(default=settings.hop, gt=0.0)
    length_norm: bool = settings.length_norm
    jobs: int = Field(default=settings.jobs, ge=1)

    pairs: list[tuple[int, int]] | None = None

    collar: float = Field(default=0.0, ge=0.0)
    score_overlap: bool = True
    per_recording: bool = False

    suite: str | None = None
    seeds: str | None = None

    speakers: int = Field(default=2, ge=1)
    train_speakers: int = Field(default=100, ge=1)
    dim: int = Field(default=12, ge=3)
    separation: float = Field(default=2.0, gt=0.0)
    conversations: int = Field(default=1, ge=1)
    conversation_length: float = Field(default=60.0, gt=0.0)
    overlap: float = Field(default=0.0, ge=0.0, lt=1.0)
    write_posteriors: bool = False
    binary: bool = False

    @field_validator("stop")
    @classmethod
    def check_stop(cls, value: str | None) -> str | None:
        if value is not None:
            parse_stop(value)
        return value

    @field_validator("pairs", mode="before")
    @classmethod
    def pair_lists(cls, value: Any) -> Any:
        if isinstance(value, str):
            return [tuple(int(x) for x in item.split(":")) for item in value.replace(",", " ").split()]
        return value


def parse_stop(text: str) -> StopRule | Literal["gold"]:
    """
    Function parses `thresh:<t>`, `num:<k>` or `gold`.

    """
    if text == "gold":
        return "gold"
    kind, _, value = text.partition(":")
    try:
        if kind == "thresh":
            return Threshold(float(value))
        if kind == "num":
            return NumSpeakers(int(value))
    except ValueError:
        pass
    raise ValueError(f"invalid stop rule '{text}', expected thresh:<t>, num:<k> or gold")


def _parse_type_values(text: str | None) -> dict[SpeakerType, float]:
    if not text:
        return {}
    values = {}
    for item in text.split(","):
        key, sep, value = item.partition("=")
        try:
            values[SpeakerType(key.strip())] = float(value)
        except ValueError as exc:
            raise MixPldaError(f"Cannot parse per-type value '{item}'") from exc
        if not sep:
            raise MixPldaError(f"Cannot parse per-type value '{item}'")
    return values


def _require(config: RunConfig, *names: str) -> None:
    missing = [f"--{name.replace('_', '-')}" for name in names if getattr(config, name) is None]
    if missing:
        raise UsageError(f"{config.command} requires {', '.join(missing)}")


def _output_ready(path: Path) -> Path:
    if not path.parent.is_dir():
        raise InputMissingError(path.parent)
    return path


def _normalized(data: LabeledEmbeddingSet, enabled: bool) -> LabeledEmbeddingSet:
    if not enabled:
        return data
    return LabeledEmbeddingSet(
        embeddings=length_normalize(data.embeddings),
        speaker_ids=data.speaker_ids,
        speaker_types=data.speaker_types,
    )


def cmd_train(config: RunConfig) -> int:
    _require(config, "embeddings", "labels", "output")
    embeddings_path, labels_path = existing(config.embeddings), existing(config.labels)
    output = _output_ready(config.output)

    records, _ = read_embeddings(embeddings_path)
    data = _normalized(training_set(records, read_training_labels(labels_path)), config.length_norm)
    if config.balance is not None:
        data = balance_by_type(data, config.balance, config.seed)

    if config.per_type:
        prior = parse_prior(config.prior) if config.prior else None
        model = train_mixture(data, config.iterations, prior)
        for speaker_type in SPEAKER_TYPES:
            for k, value in enumerate(model.components[speaker_type].loglik_history):
                print(f"{speaker_type.value} iter={k} loglik={value:.6f}")
    else:
        model = train_plda(data, config.iterations)
        for k, value in enumerate(model.loglik_history):
            print(f"iter={k} loglik={value:.6f}")

    save_model(model, output)
    logger.info(f"Model written to {output}")
    return 0


def _load_model(config: RunConfig) -> PldaModel | MixturePlda:
    model = load_model(config.model)
    if isinstance(model, MixturePlda) and config.component is not None:
        return model.components[config.component]
    return model


def _mode(config: RunConfig, model: PldaModel | MixturePlda) -> Mode:
    mode = config.mode or ("mixture" if isinstance(model, MixturePlda) else "single")
    if mode == "single" and isinstance(model, MixturePlda):
        raise UsageError("single mode with a mixture model needs --component")
    if mode in ("mixture", "oracle-split") and not isinstance(model, MixturePlda):
        raise UsageError(f"{mode} mode needs a mixture model file")
    if mode == "oracle-split" and config.type_labels is None:
        raise UsageError("oracle-split mode needs --type-labels")
    if mode == "oracle-split" and config.stop and not isinstance(parse_stop(config.stop), Threshold):
        raise UsageError(f"oracle-split mode stops on per-type thresholds, got --stop {config.stop}")
    return mode


def _diarization_mode(
    config: RunConfig, mode: Mode, model: PldaModel | MixturePlda, recording_id: str
) -> DiarizationMode:
    if mode == "single":
        return SingleMode(model)
    if mode == "one-speaker":
        return OneSpeakerMode()
    if mode == "oracle-split":
        threshold = parse_stop(config.stop).t if config.stop and config.stop.startswith("thresh:") else None
        return OracleTypeSplitMode(
            model,
            thresholds=_parse_type_values(config.type_thresholds),
            default_threshold=ORACLE_THRESHOLD if threshold is None else threshold,
        )
    if config.posteriors is not None:
        posteriors = read_posteriors(existing(config.posteriors / (recording_id + POSTERIOR_SUFFIX)))
        return MixtureMode(model, posteriors=posteriors)
    if config.prior == "labels":
        if config.type_labels is None:
            raise UsageError("--prior labels needs --type-labels")
        return MixtureMode(model, oracle_prior=True)
    return MixtureMode(model, prior=parse_prior(config.prior) if config.prior else None)


def cmd_diarize(config: RunConfig) -> int:
    _require(config, "model", "embeddings", "sad", "output")
    for path in (config.model, config.embeddings, config.sad, config.type_labels, config.reference):
        if path is not None:
            existing(path)
    if config.posteriors is not None and not config.posteriors.is_dir():
        raise InputMissingError(config.posteriors)
    output = _output_ready(config.output)

    model = _load_model(config)
    mode = _mode(config, model)
    stop = parse_stop(config.stop) if config.stop else Threshold(
        ORACLE_THRESHOLD if mode == "oracle-split" else SINGLE_THRESHOLD
    )
    gold = {}
    if stop == "gold":
        if config.reference is None:
            raise UsageError("--stop gold needs --reference")
        gold = {
            recording_id: len({turn.speaker for turn in turns})
            for recording_id, turns in group_by_recording(read_rttm(config.reference)).items()
        }

    records, _ = read_embeddings(config.embeddings)
    sad = read_sad(config.sad)
    type_labels = read_type_labels(config.type_labels) if config.type_labels else {}
    by_recording: dict[str, list] = {}
    for record in records:
        by_recording.setdefault(record.recording_id, []).append(record)

    def run(recording_id: str) -> DiarizationHypothesis:
        if stop == "gold" and recording_id not in gold:
            raise MixPldaError(f"No reference speakers for {recording_id}")
        inputs = RecordingInputs(
            recording_id=recording_id,
            sad=sad[recording_id],
            embeddings=by_recording.get(recording_id, []),
            type_labels=type_labels.get(recording_id),
        )
        rule = NumSpeakers(gold[recording_id]) if stop == "gold" else stop
        return diarize(
            inputs,
            _diarization_mode(config, mode, model, recording_id),
            rule,
            window=config.window,
            hop=config.hop,
            length_norm=config.length_norm,
        )

    hypotheses = run_parallel(run, sorted(sad), config.jobs)
    write_rttm(output, [turn for hypothesis in hypotheses for turn in hypothesis.turns])
    for hypothesis in hypotheses:
        thresholds = ",".join(f"{key}={value}" for key, value in hypothesis.thresholds.items()) or "-"
        print(
            f"{hypothesis.recording_id} segments={len(hypothesis.segments)} "
            f"clusters={hypothesis.num_speakers} thresholds={thresholds}"
        )
    return 0


def cmd_score_pair(config: RunConfig) -> int:
    _require(config, "model", "embeddings")
    existing(config.model)
    records, _ = read_embeddings(existing(config.embeddings))
    model = _load_model(config)
    pairs = config.pairs or [(i, j) for i in range(len(records)) for j in range(i + 1, len(records))]

    for i, j in pairs:
        if not (0 <= i < len(records) and 0 <= j < len(records)):
            raise MixPldaError(f"Pair ({i}, {j}) out of range for {len(records)} embeddings")
        z1, z2 = records[i].vector, records[j].vector
        if isinstance(model, MixturePlda):
            if config.prior == "labels":
                raise PriorError("score-pair takes explicit priors only")
            prior1 = parse_prior(config.prior) if config.prior else model.default_prior
            prior2 = parse_prior(config.prior2) if config.prior2 else None
            score = log_lr_mixture(model, prior1, prior2, z1, z2, config.length_norm)
        else:
            score = log_lr_single(model, z1, z2, config.length_norm)
        print(f"{i} {j} {score!r}")
    return 0


def cmd_der(config: RunConfig) -> int:
    _require(config, "reference", "hypothesis")
    reference = read_rttm(existing(config.reference))
    hypothesis = read_rttm(existing(config.hypothesis))
    output = _output_ready(config.output) if config.output else None

    if config.per_recording:
        components = compute_der_per_recording(reference, hypothesis, config.collar, config.score_overlap)
        for recording_id, report in per_recording_reports(components).items():
            print(f"[{recording_id}]")
            print(report.to_kv())
        print("[all]")
    report = compute_der(reference, hypothesis, config.collar, config.score_overlap)
    print(report.to_kv())
    if output is not None:
        output.write_text(report.to_json() + "\n", encoding="utf-8")
    logger.info(f"DER {report.der:.4f} over {report.total_scored:.3f} s of scored speech")
    return 0


def cmd_simulate(config: RunConfig) -> int:
    """
    Function writes a synthetic training corpus and test conversations with references.

    """
    _require(config, "output_dir")
    output_dir = config.output_dir
    if config.corpus_config is not None:
        corpus_spec = corpus_spec_from_config(read_kv_config(config.corpus_config))
    else:
        corpus_spec = structured_corpus_spec(
            dim=config.dim, speakers=config.train_speakers, separation=config.separation, seed=config.seed
        )
    output_dir.mkdir(parents=True, exist_ok=True)

    data = generate_training_corpus(corpus_spec)
    train_records = corpus_records(data)
    test_spec = corpus_spec.model_copy(
        update={"types": {t: p.model_copy(update={"speakers": config.speakers}) for t, p in corpus_spec.types.items()}}
    )

    records, sad, turns, labels = [], {}, [], []
    posteriors = []
    for k in range(config.conversations):
        seed = config.seed + k
        speakers = draw_speakers(test_spec, make_rng(TEST_SPEAKER_SEED + seed), prefix=f"c{k:03d}_")
        conversation = generate_conversation(
            ConversationSpec(
                recording_id=f"conv{k:03d}",
                length=config.conversation_length,
                overlap=config.overlap,
                window=config.window,
                hop=config.hop,
                seed=seed,
            ),
            speakers,
        )
        records.extend(conversation.embeddings)
        sad[conversation.recording_id] = conversation.sad
        turns.extend(conversation.turns)
        labels.extend(conversation.type_labels)
        if config.write_posteriors:
            posteriors.append(synthesize_posteriors(conversation, seed=seed))

    write = write_embeddings_binary if config.binary else write_embeddings
    suffix = ".embb" if config.binary else ".emb"
    write(output_dir / f"train{suffix}", train_records, corpus_spec.dim)
    write_training_labels(output_dir / "train.labels", train_records, data)
    write(output_dir / f"test{suffix}", records, corpus_spec.dim)
    write_sad(output_dir / "test.sad", sad)
    write_type_labels(output_dir / "test.types", labels)
    write_rttm(output_dir / "test.rttm", turns)
    if posteriors:
        (output_dir / "posteriors").mkdir(exist_ok=True)
        for sequence in posteriors:
            write_posteriors(output_dir / "posteriors" / (sequence.recording_id + POSTERIOR_SUFFIX), sequence)

    print(f"train speakers={len(data.speakers())} embeddings={len(train_records)}")
    print(f"test recordings={len(sad)} segments={len(records)} turns={len(turns)}")
    return 0


def cmd_experiment(config: RunConfig) -> int:
    _require(config, "suite")
    values: dict[str, Any] = dict(read_kv_config(config.spec)) if config.spec else {}
    if config.seeds is not None:
        values["seeds"] = config.seeds
    if config.jobs > 1:
        values["jobs"] = config.jobs
    try:
        experiment_config = ExperimentConfig.model_validate(values)
    except ValidationError as exc:
        raise UsageError(f"Invalid experiment spec: {exc}") from exc

    table = run_suite(config.suite, experiment_config)
    document = json.dumps(table.model_dump(mode="json"), indent=2, sort_keys=True)
    print(document)
    if config.output is not None:
        _output_ready(config.output).write_text(document + "\n", encoding="utf-8")
    return 0


COMMANDS = {
    "train": cmd_train,
    "diarize": cmd_diarize,
    "score-pair": cmd_score_pair,
    "der": cmd_der,
    "simulate": cmd_simulate,
    "experiment": cmd_experiment,
}


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="flat key = value file, flags win")
    parser.add_argument("--length-norm", dest="length_norm", help="true|false")
    parser.add_argument("--jobs", type=int)


def build_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    parser = argparse.ArgumentParser(prog="mixplda", description="Speaker-type mixture PLDA diarization backend")
    subparsers = parser.add_subparsers(dest="command", required=True)
    commands = {}

    train = commands["train"] = subparsers.add_parser("train", help="train single or per-type PLDA")
    train.add_argument("--embeddings", type=Path)
    train.add_argument("--labels", type=Path)
    train.add_argument("--output", type=Path)
    train.add_argument("--per-type", dest="per_type", action="store_true", default=None)
    train.add_argument("--iterations", type=int)
    train.add_argument("--balance", type=int, help="speakers per type kept before training")
    train.add_argument("--seed", type=int)
    train.add_argument("--prior", help="default prior stored with a mixture")

    diarize_parser = commands["diarize"] = subparsers.add_parser("diarize", help="diarize recordings into RTTM")
    diarize_parser.add_argument("--model", type=Path)
    diarize_parser.add_argument("--embeddings", type=Path)
    diarize_parser.add_argument("--sad", type=Path)
    diarize_parser.add_argument("--output", type=Path)
    diarize_parser.add_argument("--mode", choices=["single", "mixture", "oracle-split", "one-speaker"])
    diarize_parser.add_argument("--component", choices=[t.value for t in SPEAKER_TYPES])
    diarize_parser.add_argument("--prior", help="uniform|paper|oracle:<M|F|C>|labels|F=..,C=..,M=..")
    diarize_parser.add_argument("--posteriors", type=Path, help="directory of <recording-id>.post files")
    diarize_parser.add_argument("--type-labels", dest="type_labels", type=Path)
    diarize_parser.add_argument("--type-thresholds", dest="type_thresholds", help="M=..,F=..,C=..")
    diarize_parser.add_argument("--stop", help="thresh:<t>|num:<k>|gold")
    diarize_parser.add_argument("--reference", type=Path, help="reference RTTM for --stop gold")
    diarize_parser.add_argument("--window", type=float)
    diarize_parser.add_argument("--hop", type=float)

    score = commands["score-pair"] = subparsers.add_parser("score-pair", help="score embedding pairs")
    score.add_argument("--model", type=Path)
    score.add_argument("--embeddings", type=Path)
    score.add_argument("--component", choices=[t.value for t in SPEAKER_TYPES])
    score.add_argument("--pairs", help="i:j pairs of record indices, default all pairs")
    score.add_argument("--prior")
    score.add_argument("--prior2", help="prior of the second embedding")

    der = commands["der"] = subparsers.add_parser("der", help="diarization error rate")
    der.add_argument("--reference", type=Path)
    der.add_argument("--hypothesis", type=Path)
    der.add_argument("--collar", type=float)
    der.add_argument("--score-overlap", dest="score_overlap", help="true|false")
    der.add_argument("--per-recording", dest="per_recording", action="store_true", default=None)
    der.add_argument("--output", type=Path, help="JSON report path")

    simulate = commands["simulate"] = subparsers.add_parser("simulate", help="write a synthetic corpus")
    simulate.add_argument("--output-dir", dest="output_dir", type=Path)
    simulate.add_argument("--corpus-config", dest="corpus_config", type=Path)
    simulate.add_argument("--train-speakers", dest="train_speakers", type=int)
    simulate.add_argument("--speakers", type=int, help="test speakers per type in each conversation")
    simulate.add_argument("--dim", type=int)
    simulate.add_argument("--separation", type=float)
    simulate.add_argument("--conversations", type=int)
    simulate.add_argument("--conversation-length", dest="conversation_length", type=float)
    simulate.add_argument("--overlap", type=float)
    simulate.add_argument("--seed", type=int)
    simulate.add_argument("--window", type=float)
    simulate.add_argument("--hop", type=float)
    simulate.add_argument("--write-posteriors", dest="write_posteriors", action="store_true", default=None)
    simulate.add_argument("--binary", action="store_true", default=None)

    experiment = commands["experiment"] = subparsers.add_parser("experiment", help="run a synthetic suite")
    experiment.add_argument("--suite", help=f"one of {', '.join(SUITES)}")
    experiment.add_argument("--spec", type=Path, help="flat key = value experiment spec")
    experiment.add_argument("--seeds", help="comma-separated seeds")
    experiment.add_argument("--output", type=Path)

    for subparser in commands.values():
        _common(subparser)
    return parser, commands


def _parse(argv: Sequence[str] | None) -> RunConfig:
    parser, commands = build_parser()
    args = parser.parse_args(argv)
    if args.config is not None:
        values = read_kv_config(args.config)
        known = {action.dest for action in commands[args.command]._actions}
        unknown = sorted(set(values) - known)
        if unknown:
            raise UsageError(f"Unknown config keys: {', '.join(unknown)}")
        commands[args.command].set_defaults(**values)
        args = parser.parse_args(argv)

    options = {key: value for key, value in vars(args).items() if value is not None}
    return RunConfig.model_validate(options)


def main(argv: Sequence[str] | None = None) -> int:
    try:
        config = _parse(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else USAGE_ERROR
    except ValidationError as exc:
        logger.error(f"Invalid arguments: {exc}")
        return USAGE_ERROR
    except MixPldaError as exc:
        logger.error(str(exc))
        return exc.exit_code

    try:
        return COMMANDS[config.command](config)
    except MixPldaError as exc:
        logger.error(str(exc))
        return exc.exit_code
    except (ValueError, OSError) as exc:
        logger.error(str(exc))
        return 1


if __name__ == "__main__":
    sys.exit(main())

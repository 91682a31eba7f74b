import numpy as np
import pytest

from mixplda.adapters.binary import (
    load_model,
    mixture_from_bytes,
    mixture_to_bytes,
    plda_from_bytes,
    plda_to_bytes,
    read_embeddings_binary,
    save_plda,
    write_embeddings_binary,
)
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
    write_training_labels,
)
from mixplda.exceptions import (
    InputMissingError,
    MissingEmbeddingError,
    ModelFormatError,
    ParseError,
    TrainingDataError,
)
from mixplda.priors import FramePosteriorSequence
from mixplda.schemas import EmbeddingRecord, SpeakerType
from mixplda.synth import corpus_records
from mixplda.tests.fixtures import random_mixture, random_plda


def _records(rng, count: int = 3, dim: int = 4) -> list[EmbeddingRecord]:
    return [EmbeddingRecord("rec1", 0.75 * k, 0.75 * k + 1.5, rng.standard_normal(dim)) for k in range(count)]


def test_text_embeddings_keep_full_precision(rng, tmp_path):
    records = _records(rng)
    write_embeddings(tmp_path / "a.emb", records, 4)
    loaded, dim = read_embeddings(tmp_path / "a.emb")
    assert dim == 4
    for original, copy in zip(records, loaded):
        assert (copy.recording_id, copy.onset, copy.offset) == (original.recording_id, original.onset, original.offset)
        np.testing.assert_array_equal(copy.vector, original.vector)


def test_binary_embeddings_are_detected(rng, tmp_path):
    records = _records(rng, dim=2)
    write_embeddings_binary(tmp_path / "a.embb", records, 2)
    loaded, dim = read_embeddings(tmp_path / "a.embb")
    assert dim == 2 and len(loaded) == 3
    np.testing.assert_array_equal(loaded[2].vector, records[2].vector)
    assert read_embeddings_binary(tmp_path / "a.embb")[0][1].onset == 0.75


def test_embeddings_wrong_width(tmp_path):
    path = tmp_path / "bad.emb"
    path.write_text("#emb v1 dim=3\nrec1 0.0 1.5 1.0 2.0\n", encoding="utf-8")
    with pytest.raises(ParseError) as info:
        read_embeddings(path)
    assert info.value.line == 2


def test_embeddings_invalid_utf8(tmp_path):
    path = tmp_path / "bad.emb"
    path.write_bytes(b"#emb v1 dim=2\nrec1 0.0 1.5 1.0 2.0\nrec\xff 1.5 3.0 1.0 2.0\n")
    with pytest.raises(ParseError, match="invalid UTF-8") as info:
        read_embeddings(path)
    assert info.value.line == 3


def test_embeddings_missing_header(tmp_path):
    path = tmp_path / "bad.emb"
    path.write_text("rec1 0.0 1.5 1.0 2.0\n", encoding="utf-8")
    with pytest.raises(ParseError):
        read_embeddings(path)


def test_missing_file(tmp_path):
    with pytest.raises(InputMissingError):
        read_sad(tmp_path / "absent.sad")


def test_sad_is_grouped_and_sorted(tmp_path):
    path = tmp_path / "a.sad"
    path.write_text("r2 5.0 6.0\n# speech\nr1 3.0 4.0\nr1 0.0 1.5\n", encoding="utf-8")
    assert read_sad(path) == {"r1": [(0.0, 1.5), (3.0, 4.0)], "r2": [(5.0, 6.0)]}


def test_sad_empty_region(tmp_path):
    path = tmp_path / "a.sad"
    path.write_text("r1 0.0 1.5\nr1 2.0 2.0\n", encoding="utf-8")
    with pytest.raises(ParseError) as info:
        read_sad(path)
    assert info.value.line == 2


def test_type_labels(tmp_path):
    path = tmp_path / "a.types"
    path.write_text("r1 2.0 3.0 C\nr1 0.0 2.0 F\n", encoding="utf-8")
    labels = read_type_labels(path)["r1"]
    assert [label.speaker_type for label in labels] == [SpeakerType.FEMALE, SpeakerType.CHILD]


def test_type_labels_unknown_type(tmp_path):
    path = tmp_path / "a.types"
    path.write_text("r1 0.0 2.0 X\n", encoding="utf-8")
    with pytest.raises(ParseError, match="unknown speaker type"):
        read_type_labels(path)


def test_training_files_rebuild_the_corpus(training_corpus, tmp_path):
    records = corpus_records(training_corpus)
    write_embeddings(tmp_path / "train.emb", records, training_corpus.dim)
    write_training_labels(tmp_path / "train.labels", records, training_corpus)

    loaded, _ = read_embeddings(tmp_path / "train.emb")
    data = training_set(loaded, read_training_labels(tmp_path / "train.labels"))
    np.testing.assert_array_equal(data.embeddings, training_corpus.embeddings)
    assert data.speaker_ids == training_corpus.speaker_ids
    assert data.speaker_types == training_corpus.speaker_types


def test_training_label_without_embedding(rng):
    records = _records(rng)
    labels = {("rec1", 0, 1500): ("a", SpeakerType.MALE), ("rec1", 9000, 10500): ("b", None)}
    with pytest.raises(MissingEmbeddingError):
        training_set(records, labels)


def test_training_label_type_conflict(rng):
    records = _records(rng)
    labels = {("rec1", 0, 1500): ("a", SpeakerType.MALE), ("rec1", 750, 2250): ("a", SpeakerType.CHILD)}
    with pytest.raises(TrainingDataError):
        training_set(records, labels)


def test_training_labels_duplicate_key(tmp_path):
    path = tmp_path / "a.labels"
    path.write_text("rec1 0.0 1.5 a M\nrec1 0.000 1.500 b F\n", encoding="utf-8")
    with pytest.raises(ParseError, match="duplicate"):
        read_training_labels(path)


def test_posteriors_file(rng, tmp_path):
    sequence = FramePosteriorSequence(recording_id="conv7", frame_rate=100.0, rows=rng.dirichlet(np.ones(3), size=20))
    write_posteriors(tmp_path / "conv7.post", sequence)
    loaded = read_posteriors(tmp_path / "conv7.post")
    assert loaded.recording_id == "conv7" and loaded.frame_rate == 100.0
    np.testing.assert_array_equal(loaded.rows, sequence.rows)


def test_posteriors_out_of_sequence(tmp_path):
    path = tmp_path / "a.post"
    path.write_text("#post v1 rate=100\n0 1 0 0\n2 0 1 0\n", encoding="utf-8")
    with pytest.raises(ParseError, match="out of sequence"):
        read_posteriors(path)


def test_kv_config(tmp_path):
    path = tmp_path / "a.conf"
    path.write_text("# run\nlength-norm = false\nstop = num:3\n", encoding="utf-8")
    assert read_kv_config(path) == {"length_norm": "false", "stop": "num:3"}


def test_kv_config_malformed(tmp_path):
    path = tmp_path / "a.conf"
    path.write_text("stop num:3\n", encoding="utf-8")
    with pytest.raises(ParseError):
        read_kv_config(path)


def test_plda_bytes(rng):
    model = random_plda(rng, 5)
    copy = plda_from_bytes(plda_to_bytes(model))
    np.testing.assert_array_equal(copy.mean, model.mean)
    np.testing.assert_array_equal(copy.transform, model.transform)
    np.testing.assert_array_equal(copy.psi, model.psi)


def test_mixture_bytes(rng):
    mixture = random_mixture(rng, 3)
    copy = mixture_from_bytes(mixture_to_bytes(mixture))
    for speaker_type, component in mixture.components.items():
        np.testing.assert_array_equal(copy.components[speaker_type].transform, component.transform)
    np.testing.assert_array_equal(copy.default_prior.as_array(), mixture.default_prior.as_array())


def test_plda_bad_magic(rng):
    data = bytearray(plda_to_bytes(random_plda(rng, 2)))
    data[:4] = b"XXXX"
    with pytest.raises(ModelFormatError, match="bad magic"):
        plda_from_bytes(bytes(data))


def test_plda_truncated(rng):
    with pytest.raises(ModelFormatError):
        plda_from_bytes(plda_to_bytes(random_plda(rng, 2))[:-8])


def test_load_model_picks_format(rng, tmp_path):
    save_plda(random_plda(rng, 2), tmp_path / "a.plda")
    (tmp_path / "b.plda").write_bytes(mixture_to_bytes(random_mixture(rng, 2)))
    assert load_model(tmp_path / "a.plda").dim == 2
    assert len(load_model(tmp_path / "b.plda").components) == 3


@pytest.mark.parametrize("reader", [read_sad, read_posteriors, read_rttm])
def test_invalid_utf8_reports_line(tmp_path, reader):
    path = tmp_path / "bad.txt"
    path.write_bytes(b"\xff\xfe0 1 0 0\n")
    with pytest.raises(ParseError) as info:
        reader(path)
    assert info.value.line == 1 and info.value.path == path

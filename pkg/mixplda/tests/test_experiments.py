import pytest
from pydantic import ValidationError

from mixplda.exceptions import UnknownSuiteError
from mixplda.experiments import SUITES, ExperimentConfig, _corpus_spec, run_suite
from mixplda.schemas import SpeakerType
from mixplda.utils import median

SMALL = {
    "seeds": [0, 1],
    "dim": 6,
    "train_speakers_per_type": 20,
    "em_iterations": 2,
    "conversation_length": 20.0,
    "conversation_speakers": {"M": 1, "F": 1, "C": 1},
}


def test_config_parses_strings():
    config = ExperimentConfig.model_validate({"seeds": "3, 4,5", "pool_speakers": "M=5,F=6,C=7"})
    assert config.seeds == [3, 4, 5]
    assert config.pool_speakers == {SpeakerType.MALE: 5, SpeakerType.FEMALE: 6, SpeakerType.CHILD: 7}


def test_config_defaults():
    config = ExperimentConfig()
    assert config.seeds == list(range(10))
    assert config.single_threshold == -0.2 and config.oracle_threshold == 0.0
    assert config.pool_speakers[SpeakerType.CHILD] == 300
    assert config.balanced_within == 2.0


def test_corpus_spec_within_override():
    config = ExperimentConfig(dim=6)
    default = _corpus_spec(config, 2).types[SpeakerType.FEMALE]
    wider = _corpus_spec(config, 2, within=config.balanced_within).types[SpeakerType.FEMALE]
    assert max(default.within_var) == max(wider.within_var) == 4.0
    assert sorted(wider.within_var)[0] == 2.0 and sorted(default.within_var)[0] == 0.25
    assert wider.between_var == default.between_var


def test_config_rejects_misspelled_key():
    with pytest.raises(ValidationError, match="train_speakers_per_typ"):
        ExperimentConfig.model_validate({"train_speakers_per_typ": 20})


def test_unknown_suite():
    with pytest.raises(UnknownSuiteError, match="available"):
        run_suite("gender-split")


def test_suites_are_registered():
    assert set(SUITES) == {"oracle-vs-baseline", "balanced-vs-unbalanced", "prior-sweep"}


def test_oracle_vs_baseline_table():
    table = run_suite("oracle-vs-baseline", ExperimentConfig.model_validate(SMALL))
    assert table.suite == "oracle-vs-baseline"
    assert [row.condition for row in table.rows] == ["single", "oracle-split", "same-speaker"]
    for row in table.rows:
        assert len(row.ders) == 2
        assert row.median == median(row.ders)
        assert all(der >= 0.0 for der in row.ders)


def test_prior_sweep_is_deterministic():
    config = ExperimentConfig.model_validate(SMALL)
    first = run_suite("prior-sweep", config)
    second = run_suite("prior-sweep", config.model_copy(update={"jobs": 2}))
    assert [row.condition for row in first.rows] == ["uniform", "paper", "oracle"]
    assert first == second


def test_balanced_vs_unbalanced_table():
    config = ExperimentConfig.model_validate(
        {
            **SMALL,
            "pool_speakers": {"M": 30, "F": 30, "C": 10},
            "balanced_per_type": 10,
            "imbalanced_conversation_speakers": {"M": 1, "F": 1, "C": 1},
        }
    )
    table = run_suite("balanced-vs-unbalanced", config)
    assert [row.condition for row in table.rows] == ["single", "imbalanced", "balanced", "balanced-uniform"]

import numpy as np
import pytest

from blockmf import ConfigError, preset_catalyst, preset_degree, preset_sir
from blockmf.process import ClosedFormTag, ProcessSpec


def test_sir_preset_tables():
    spec = preset_sir(beta=0.7, gamma=0.3)
    assert spec.states == ("S", "I", "R")
    spont = np.zeros((3, 3))
    spont[1, 2] = 0.3
    assert np.array_equal(spec.spontaneous, spont)
    inter = np.zeros((3, 3, 3))
    inter[1, 0, 1] = 0.7  # infected neighbor pushes S -> I
    assert np.array_equal(spec.interaction, inter)


def test_catalyst_preset_tables():
    spec = preset_catalyst()
    assert spec.states == ("a", "b", "c")
    assert np.all(spec.spontaneous == 0)
    inter = np.zeros((3, 3, 3))
    inter[2, 0, 1] = 1.0  # c neighbor converts a -> b
    assert np.array_equal(spec.interaction, inter)
    assert spec.tag is not None and spec.tag.kind == "catalyst"


def test_degree_preset_tables():
    spec = preset_degree()
    assert spec.states == ("a", "b")
    assert np.all(spec.spontaneous == 0)
    inter = np.zeros((2, 2, 2))
    inter[0, 0, 1] = 1.0
    inter[1, 0, 1] = 1.0  # any neighbor, in either state, converts a -> b
    assert np.array_equal(spec.interaction, inter)
    assert spec.tag is not None and spec.tag.kind == "degree"


def test_generator_rows_sum_to_zero():
    spec = preset_sir(1.2, 0.4)
    full = spec.spontaneous_full()
    assert np.allclose(full.sum(axis=1), 0.0, atol=1e-15)
    ifull = spec.interaction_full()
    assert np.allclose(ifull.sum(axis=2), 0.0, atol=1e-15)
    # outflow vectors are the negated diagonals
    assert np.allclose(spec.spontaneous_out(), -np.diag(full))
    for a in range(3):
        assert np.allclose(spec.interaction_out()[a], -np.diag(ifull[a]))


def test_json_round_trip():
    spec = preset_sir(0.9, 0.1)
    obj = spec.to_json_dict()
    back = ProcessSpec.from_json_dict(obj)
    assert back == spec
    assert back.to_json_dict() == obj


def test_json_round_trip_dense_random():
    rng = np.random.default_rng(21)
    spont = rng.uniform(0, 2, size=(4, 4))
    inter = rng.uniform(0, 2, size=(4, 4, 4))
    np.fill_diagonal(spont, 0.0)
    for a in range(4):
        np.fill_diagonal(inter[a], 0.0)
    spec = ProcessSpec(states=("w", "x", "y", "z"), spontaneous=spont,
                       interaction=inter)
    back = ProcessSpec.from_json_dict(spec.to_json_dict())
    assert np.array_equal(back.spontaneous, spec.spontaneous)
    assert np.array_equal(back.interaction, spec.interaction)


def test_save_load_file(tmp_path):
    spec = preset_catalyst()
    path = tmp_path / "proc.json"
    spec.save(path)
    back = ProcessSpec.load(path)
    assert back == spec
    assert back.states == spec.states


def test_equality_ignores_tag():
    spec = preset_degree()
    untagged = ProcessSpec(states=spec.states, spontaneous=spec.spontaneous,
                           interaction=spec.interaction)
    assert untagged == spec
    assert untagged.tag is None


def test_validation_errors():
    zeros2 = np.zeros((2, 2))
    zeros222 = np.zeros((2, 2, 2))
    with pytest.raises(ConfigError):
        ProcessSpec(states=("a", "a"), spontaneous=zeros2, interaction=zeros222)
    with pytest.raises(ConfigError):
        ProcessSpec(states=("a", "b"),
                    spontaneous=np.array([[0.0, -1.0], [0.0, 0.0]]),
                    interaction=zeros222)
    with pytest.raises(ConfigError):
        # stored diagonal must stay zero; the derived diagonal is implicit
        ProcessSpec(states=("a", "b"),
                    spontaneous=np.array([[1.0, 0.0], [0.0, 0.0]]),
                    interaction=zeros222)
    with pytest.raises(ConfigError):
        ProcessSpec(states=("a", "b"), spontaneous=np.zeros((2, 3)),
                    interaction=zeros222)
    with pytest.raises(ConfigError):
        ProcessSpec(states=("a", "b"), spontaneous=zeros2,
                    interaction=np.full((2, 2, 2), np.nan))


def test_state_index():
    spec = preset_sir(1.0, 1.0)
    assert spec.state_index("S") == 0
    assert spec.state_index("R") == 2
    with pytest.raises(ConfigError):
        spec.state_index("X")


def test_negative_preset_rates_rejected():
    with pytest.raises(ConfigError):
        preset_sir(-1.0, 0.5)


def test_tag_kind_checked():
    with pytest.raises(ConfigError):
        ClosedFormTag("bogus", ("a",))

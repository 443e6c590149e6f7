import csv
import json
import math

import numpy as np
import pytest

from pthmm.data_io import (CheckpointError, ConfigError, DataError, checkpoint, load_config, load_sequences,
                           parse_config, read_ladder, read_samples, read_trajectory, resume, write_ladder,
                           write_samples, write_sequences, write_trajectory)
from pthmm.engine import PtConfig, PtEngine, pt_run
from pthmm.hmm_core import ModelSpec, StreamFamily, simulate
from pthmm.priors import PriorConfig, sample_prior
from pthmm.store import SampleStore
from pthmm.targets import BimodalToy, HMMTarget

SPEC = ModelSpec(2, (StreamFamily.POISSON, StreamFamily.GAMMA), covariate_levels=1)


def test_single_row_loads(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("sequence_id,t,y1,y2\nA,1,3,2.5\n")
    data, names = load_sequences(p)
    assert names == ["y1", "y2"] and len(data.sequences) == 1
    np.testing.assert_array_equal(data.sequences[0], [[3.0, 2.5]])


def test_interleaved_sequences_name_the_line(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("sequence_id,t,y1\nA,1,1\nB,1,2\nA,2,3\n")
    with pytest.raises(DataError, match="line 4.*not contiguous"):
        load_sequences(p)


@pytest.mark.parametrize("body, msg", [
    ("A,1,1.5,2\n", "line 2.*integer counts"),
    ("A,1,1,-2\n", "line 2.*positive"),
    ("A,1,1,x\n", "line 2.*non-numeric"),
    ("A,2,1,2\n", "line 2.*expected t=1"),
    ("A,1,1\n", "line 2.*expected 4 fields"),
])
def test_bad_rows(tmp_path, body, msg):
    p = tmp_path / "d.csv"
    p.write_text("sequence_id,t,y1,y2\n" + body)
    with pytest.raises(DataError, match=msg):
        load_sequences(p, ModelSpec(1, (StreamFamily.POISSON, StreamFamily.GAMMA)))


def test_covariate_range_and_missing_values(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("sequence_id,t,y1,covariate\nA,1,,0\nA,2,4,1\n")
    data, _ = load_sequences(p, ModelSpec(2, (StreamFamily.POISSON,), covariate_levels=1))
    assert math.isnan(data.sequences[0][0, 0])
    np.testing.assert_array_equal(data.covariates[0], [0, 1])
    with pytest.raises(DataError, match="line 3.*out of range"):
        load_sequences(p, ModelSpec(2, (StreamFamily.POISSON,), covariate_levels=0))
    with pytest.raises(DataError, match="No such file"):
        load_sequences(tmp_path / "absent.csv")


def test_simulate_write_load_round_trip(tmp_path):
    th = sample_prior(SPEC, PriorConfig.default(SPEC), 4)
    cov = [np.arange(25) % 2, np.zeros(10, int)]
    data = simulate(SPEC, th, [25, 10], covariates=cov, seed=5)
    p = tmp_path / "d.csv"
    write_sequences(data, p, ["y1", "y2"])
    back, names = load_sequences(p, SPEC)
    assert names == ["y1", "y2"]
    for a, b in zip(data.sequences, back.sequences):
        np.testing.assert_array_equal(a, b)
    for a, b in zip(data.covariates, back.covariates):
        np.testing.assert_array_equal(a, b)


def test_samples_round_trip_is_bit_exact(tmp_path):
    rng = np.random.default_rng(0)
    vals = rng.normal(size=(40, SPEC.dim)) * 10.0 ** rng.integers(-300, 300, size=(40, SPEC.dim))
    store = SampleStore(SPEC.coordinate_names, np.arange(100, 140), vals)
    p = tmp_path / "s.csv"
    write_samples(store, p)
    assert len(next(csv.reader(p.open()))) == SPEC.dim + 1
    assert read_samples(p, SPEC.coordinate_names).equals(store)

    empty = SampleStore(["a", "b"], np.zeros(0, int), np.zeros((0, 2)))
    write_samples(empty, p)
    assert p.read_text().splitlines() == ["iteration,a,b"]
    assert len(read_samples(p)) == 0
    with pytest.raises(DataError, match="missing \\['c'\\], extra \\['b'\\]"):
        read_samples(p, ["a", "c"])


def test_trajectory_and_ladder_files(tmp_path):
    res = pt_run(BimodalToy(), PtConfig([1.0, 0.3, 0.1], n_iters=300, seed=1))
    write_trajectory(res.trajectory, tmp_path / "t.npz")
    back = read_trajectory(tmp_path / "t.npz")
    np.testing.assert_array_equal(back.positions, res.trajectory.positions)
    np.testing.assert_array_equal(back.attempt_accepted, res.trajectory.attempt_accepted)
    first = (tmp_path / "t.npz").read_bytes()
    write_trajectory(res.trajectory, tmp_path / "t.npz")
    assert (tmp_path / "t.npz").read_bytes() == first
    write_ladder(res.ladder, tmp_path / "l.json")
    lad = read_ladder(tmp_path / "l.json")
    np.testing.assert_array_equal(lad.betas, res.ladder.betas)
    np.testing.assert_array_equal(lad.swap_accepts, res.ladder.swap_accepts)


def _hmm_target():
    spec = ModelSpec(2, (StreamFamily.POISSON,))
    cfg = PriorConfig.default(spec)
    data = simulate(spec, sample_prior(spec, cfg, 2), [50], seed=3)
    return HMMTarget(spec, data, cfg)


def test_checkpoint_resume_is_bit_identical(tmp_path):
    target = _hmm_target()
    cfg = PtConfig([1.0, 0.5, 0.25], n_iters=1000, burn_in=300, seed=6)
    whole = pt_run(target, cfg)
    eng = PtEngine(target, cfg)
    eng.run(500)
    checkpoint(eng, tmp_path / "c.npz")
    del eng
    again = resume(tmp_path / "c.npz", target, cfg)
    again.run()
    res = again.result()
    assert res.samples.equals(whole.samples)
    np.testing.assert_array_equal(res.trajectory.positions, whole.trajectory.positions)
    np.testing.assert_array_equal(res.round_trips, whole.round_trips)


def test_checkpoint_before_first_iteration(tmp_path):
    cfg = PtConfig([1.0, 0.3], n_iters=200, seed=7)
    checkpoint(PtEngine(BimodalToy(), cfg), tmp_path / "c.npz")
    eng = resume(tmp_path / "c.npz", BimodalToy(), cfg)
    eng.run()
    assert eng.result().samples.equals(pt_run(BimodalToy(), cfg).samples)


def test_resume_refusals(tmp_path):
    cfg = PtConfig([1.0, 0.3], n_iters=200, seed=7)
    p = tmp_path / "c.npz"
    checkpoint(PtEngine(BimodalToy(), cfg), p)
    with pytest.raises(CheckpointError):
        resume(p, BimodalToy(), PtConfig([1.0, 0.3, 0.1], n_iters=200, seed=7))
    with pytest.raises(CheckpointError):
        resume(p, BimodalToy(), PtConfig([1.0, 0.3], n_iters=200, seed=8))

    # rewrite the header with a different format tag
    from pthmm.data_io import _read_npz, _write_npz
    arrays = _read_npz(p)
    header = json.loads(str(arrays["__header__"]))
    header["format"] = "pthmm-checkpoint/0"
    arrays["__header__"] = np.array(json.dumps(header))
    _write_npz(tmp_path / "old.npz", arrays)
    with pytest.raises(CheckpointError, match="format"):
        resume(tmp_path / "old.npz", BimodalToy(), cfg)

    raw = p.read_bytes()
    (tmp_path / "bad.npz").write_bytes(raw[: len(raw) // 2])
    with pytest.raises(CheckpointError):
        resume(tmp_path / "bad.npz", BimodalToy(), cfg)


def test_bundled_config_parses():
    cfg = load_config("configs/two_state_demo.ini")
    assert cfg.spec.stream_names == ("count", "depth")
    assert cfg.truth.emission("depth")[0].tolist() == [20.0, 120.0]
    pt = cfg.pt_config(cfg.seeds[0])
    assert pt.swap_scheme == "DEO" and pt.M == 2 and cfg.checkpoint_every == 1000


@pytest.mark.parametrize("text, field", [
    ("[model]\nn_states = 2\nstreams = [\"normal\"]\n", "model.streams"),
    ("[model]\nstreams = [\"poisson\"]\n", "model.n_states"),
    ("[model]\ntarget = \"bimodal_toy\"\n[pt]\nspeed = 3\n", "pt.speed"),
    ("[model]\ntarget = \"bimodal_toy\"\n[pt]\nbetas = [0.5, 1.0]\n", "pt.betas"),
    ("[model]\ntarget = \"bimodal_toy\"\n[pt]\nn_iters = ten\n", "pt.n_iters"),
    ("[model]\nn_states = 2\nstreams = [\"poisson\"]\n[truth]\ndelta = [0.5, 0.5]\n", "truth.y1"),
    ("not an ini file", "config"),
])
def test_config_errors_name_the_field(text, field):
    with pytest.raises(ConfigError) as err:
        parse_config(text)
    assert err.value.field == field


def test_data_path_is_relative_to_config(tmp_path):
    (tmp_path / "c.ini").write_text("[model]\ntarget = \"gaussian_toy\"\n[io]\ndata = \"x/data.csv\"\n")
    assert load_config(tmp_path / "c.ini").data == str(tmp_path / "x" / "data.csv")
    with pytest.raises(ConfigError, match="pt.betas"):
        load_config(tmp_path / "c.ini").pt_config(0)

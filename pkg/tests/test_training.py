import json

import numpy as np
import pytest

from kpseq import model as M
from kpseq.compute import ParameterStore
from kpseq.corpus import EOS, SyntheticSpec, build_vocabulary, generate_synthetic
from kpseq.training import (
    MAX_TARGET_LEN,
    AdamState,
    Checkpoint,
    CheckpointError,
    CheckpointMeta,
    CheckpointShapeError,
    CheckpointVersionError,
    TrainConfig,
    TrainingError,
    TruncatedCheckpointError,
    adam_update,
    clip_gradients,
    example_loss,
    global_norm,
    load_checkpoint,
    prepare,
    save_checkpoint,
    target_for,
    train,
)


def test_config_defaults_and_validation():
    c = TrainConfig()
    assert (c.validation_size, c.learning_rate, c.clip_norm, c.batch_size, c.coverage_weight) == (500, 1e-3, 1.0, 32, 1.0)
    for bad in (dict(epochs=0), dict(learning_rate=0), dict(ordering="sideways"), dict(preset="x"),
                dict(coverage_weight=-1)):
        with pytest.raises(ValueError):
            TrainConfig(**bad)


def test_config_file_keys(tmp_path):
    d = TrainConfig(epochs=3).to_dict()
    assert "eval-every" in d and "batch-size" in d
    assert TrainConfig.from_dict(d) == TrainConfig(epochs=3)
    with pytest.raises(ValueError, match="unknown"):
        TrainConfig.from_dict({"epochs": 2, "momentum": 0.9})
    f = tmp_path / "c.json"
    f.write_text(json.dumps({"ordering": "alpha", "learning-rate": 0.01}))
    assert TrainConfig.load(f).learning_rate == 0.01


def _store(**arrays):
    return ParameterStore({k: np.array(v, dtype=np.float64) for k, v in arrays.items()})


def test_adam_zero_gradient():
    p = _store(a=[1.0, -2.0])
    st = AdamState.zeros(p)
    adam_update(p, {"a": np.zeros(2)}, st, 1e-3)
    assert p["a"].tolist() == [1.0, -2.0] and not st.m["a"].any() and st.step == 1


def test_adam_first_step_is_lr():
    for g in (0.5, -3.0, 1e-4):
        p = _store(t=[0.0])
        adam_update(p, {"t": np.array([g])}, AdamState.zeros(p), 1e-3)
        assert abs(p["t"][0]) == pytest.approx(1e-3, rel=1e-3)
        assert np.sign(p["t"][0]) == -np.sign(g)


def test_clipping():
    g = {"a": np.array([6.0, 0.0]), "b": np.array([[8.0]])}
    clipped, norm = clip_gradients(g, 1.0)
    assert norm == pytest.approx(10.0)
    assert abs(global_norm(clipped) - 1.0) <= 1e-10
    same, _ = clip_gradients({"a": np.array([0.3])}, 1.0)
    assert same["a"][0] == 0.3


def test_adam_rejects_non_finite():
    p = _store(w=[1.0], v=[2.0])
    with pytest.raises(TrainingError, match="'v'"):
        adam_update(p, {"w": np.zeros(1), "v": np.array([np.inf])}, AdamState.zeros(p), 1e-3)


def test_target_truncation_keeps_eos():
    docs = generate_synthetic(SyntheticSpec(num_docs=1))
    vocab = build_vocabulary(docs)
    (ex,) = prepare(docs, vocab)
    ex.doc.gold_phrases = [[w] for w in ex.doc.source_tokens[:40]]
    t = target_for(ex, vocab, "no-sort", 7, 0)
    assert len(t) == MAX_TARGET_LEN and t[-1] == EOS


@pytest.fixture(scope="module")
def ten_docs():
    return generate_synthetic(SyntheticSpec(num_docs=10, seed=7))


def test_empty_corpus_is_error():
    with pytest.raises(TrainingError):
        train([], TrainConfig())


def test_determinism_and_single_final_evaluation(ten_docs):
    conf = TrainConfig(epochs=2, batch_size=4, seed=3, eval_every=10**6)
    a = train(ten_docs, conf)
    b = train(ten_docs, conf)
    assert a.params.equal(b.params)
    assert a.meta.step == 6 and len(a.history) == 1 and a.history[0]["step"] == 6


def test_checkpoint_selection_is_max(ten_docs):
    ck = train(ten_docs, TrainConfig(epochs=3, batch_size=5, eval_every=2, learning_rate=3e-3, seed=1))
    scores = [h["valid_f1_at_5"] for h in ck.history]
    assert len(scores) == 3 and ck.meta.valid_f1_at_5 == max(scores)
    first = scores.index(max(scores))
    assert ck.meta.step == ck.history[first]["step"]
    assert 0.0 <= ck.meta.valid_f1_at_5 <= 1.0


def _mean_loss(cfg, params, vocab, docs):
    exs = prepare(docs, vocab)
    return np.mean([example_loss(cfg, params, ex, target_for(ex, vocab, "appear-ap", 7, 0))[0] for ex in exs])


def test_loss_decreases_after_200_steps(ten_docs):
    conf = TrainConfig(epochs=20, batch_size=1, seed=7, eval_every=10**6)
    ck = train(ten_docs, conf)
    assert ck.meta.step == 200
    initial = M.init_params(ck.model_config, seed=7)
    assert _mean_loss(ck.model_config, ck.params, ck.vocab, ten_docs) < _mean_loss(
        ck.model_config, initial, ck.vocab, ten_docs
    )


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_reports_step(ten_docs):
    conf = TrainConfig(epochs=1, batch_size=2, seed=1, learning_rate=1e300, clip_norm=1e300)
    with pytest.raises(TrainingError, match=r"step \d+"):
        train(ten_docs, conf)


def _checkpoint(seed=0):
    docs = generate_synthetic(SyntheticSpec(num_docs=3, seed=seed))
    vocab = build_vocabulary(docs)
    cfg = M.ModelConfig(vocab.size, 4, 5, 6, preset="tiny")
    params = M.init_params(cfg, seed=seed, scale=0.7)
    return Checkpoint(cfg, params, vocab, CheckpointMeta(12, 1, 0.5, "2024-01-01T00:00:00+00:00"), TrainConfig())


def test_checkpoint_round_trip(tmp_path):
    ck = _checkpoint()
    save_checkpoint(ck, tmp_path / "ck")
    assert {p.name for p in (tmp_path / "ck").iterdir()} == {"manifest.json", "vocab.txt", "params.bin"}
    back = load_checkpoint(tmp_path / "ck")
    for name, arr in ck.params.items():
        assert np.array_equal(back.params[name], arr.astype(np.float32).astype(np.float64))
    assert back.meta == ck.meta and back.model_config == ck.model_config
    assert back.vocab.id_to_token == ck.vocab.id_to_token and back.train_config == ck.train_config
    # stored precision is a fixed point
    save_checkpoint(back, tmp_path / "ck2")
    assert (tmp_path / "ck" / "params.bin").read_bytes() == (tmp_path / "ck2" / "params.bin").read_bytes()


def test_params_bin_layout(tmp_path):
    ck = _checkpoint()
    save_checkpoint(ck, tmp_path / "ck")
    blob = (tmp_path / "ck" / "params.bin").read_bytes()
    first = ck.params.names()[0]
    n = len(first)
    assert int.from_bytes(blob[:4], "little") == n and blob[4 : 4 + n].decode() == first
    shape = ck.params[first].shape
    assert int.from_bytes(blob[4 + n : 8 + n], "little") == len(shape)
    vals = np.frombuffer(blob[8 + n + 4 * len(shape) :][: 4 * ck.params[first].size], dtype="<f4")
    assert np.array_equal(vals, ck.params[first].reshape(-1).astype(np.float32))


def test_checkpoint_errors(tmp_path):
    ck = _checkpoint()
    d = save_checkpoint(ck, tmp_path / "ck")
    blob = (d / "params.bin").read_bytes()
    (d / "params.bin").write_bytes(blob[:-1])
    with pytest.raises(TruncatedCheckpointError, match="truncated tensor record"):
        load_checkpoint(d)
    (d / "params.bin").write_bytes(blob)

    manifest = json.loads((d / "manifest.json").read_text())
    del manifest["format_version"]
    (d / "manifest.json").write_text(json.dumps(manifest))
    with pytest.raises(CheckpointVersionError):
        load_checkpoint(d)
    manifest["format_version"] = 2
    (d / "manifest.json").write_text(json.dumps(manifest))
    with pytest.raises(CheckpointVersionError):
        load_checkpoint(d)
    manifest["format_version"] = 1
    manifest["model"]["dec_hidden"] = 7
    (d / "manifest.json").write_text(json.dumps(manifest))
    with pytest.raises(CheckpointShapeError):
        load_checkpoint(d)
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "nowhere")
    # the three failure kinds are distinct types
    assert len({TruncatedCheckpointError, CheckpointVersionError, CheckpointShapeError}) == 3

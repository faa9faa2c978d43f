import numpy as np
import pytest

from phonmap import nn
from phonmap.errors import IntegrityError, InvalidArgumentError, TrainingError
from phonmap.gradsuite import STACK_TOL, check_asr, check_stack
from phonmap.models import (
    AsrArch,
    AsrTrainConfig,
    CnnAsr,
    Ptn,
    PtnArch,
    PtnTrainConfig,
    asr_forward,
    ptn_forward,
    train_asr,
    train_ptn,
)
from phonmap.models.checkpoint import save_checkpoint
from phonmap.nn.layers import INFER, TRAIN
from phonmap.synthlang import Corpus, SynthConfig, Utterance, generate_corpus, generate_language_pair


@pytest.fixture
def rng():
    return np.random.default_rng(99)


@pytest.fixture(scope="module")
def pair():
    return generate_language_pair(SynthConfig(seed=3))


def small_asr(rng, n_in=8, n_out=21):
    return CnnAsr(AsrArch(n_in, n_out, hidden=16, blocks=2), rng=rng)


class TestCnnAsr:
    def test_single_frame(self, rng):
        assert asr_forward(small_asr(rng), rng.normal(size=(1, 8))).shape == (1, 21)

    def test_frame_synchronous(self, rng):
        assert asr_forward(small_asr(rng), rng.normal(size=(37, 8))).shape == (37, 21)

    def test_posteriorgram_rows_sum_to_one(self, rng):
        post = small_asr(rng).posteriorgram(rng.normal(size=(20, 8)))
        assert np.abs(post.sum(axis=1) - 1).max() < 1e-9

    def test_no_cross_utterance_state_in_infer_mode(self, rng):
        model = small_asr(rng)
        a, b = rng.normal(size=(9, 8)), rng.normal(size=(4, 8))
        first = [asr_forward(model, a), asr_forward(model, b)]
        second = [asr_forward(model, b), asr_forward(model, a)]
        np.testing.assert_array_equal(first[0], second[1])
        np.testing.assert_array_equal(first[1], second[0])

    def test_width_mismatch(self, rng):
        with pytest.raises(InvalidArgumentError):
            asr_forward(small_asr(rng), rng.normal(size=(5, 7)))

    def test_backward_requires_train_mode(self, rng):
        model = small_asr(rng)
        logits, cache = model.forward(rng.normal(size=(5, 8)), INFER)
        with pytest.raises(InvalidArgumentError):
            model.backward(np.ones_like(logits), cache)

    def test_even_kernel_rejected(self):
        with pytest.raises(InvalidArgumentError):
            AsrArch(8, 21, kernel=4)

    def test_gradients_train_mode(self, rng):
        assert check_asr(rng) < 1e-5


class TestPtn:
    def test_rows_are_distributions(self, rng):
        ptn = Ptn(PtnArch(21, 21, hidden=16), rng=rng)
        post = nn.softmax_rows(rng.normal(size=(12, 21)))
        out = ptn_forward(ptn, post)
        assert out.shape == (12, 21)
        assert np.abs(out.sum(axis=1) - 1).max() < 1e-9

    def test_per_timestep_independence(self, rng):
        ptn = Ptn(PtnArch(6, 4, hidden=8), rng=rng)
        post = nn.softmax_rows(rng.normal(size=(3, 6)))
        out = ptn_forward(ptn, post[[0, 1, 1, 2]])
        np.testing.assert_array_equal(out[1], out[2])
        np.testing.assert_array_equal(out[[0, 1, 3]], ptn_forward(ptn, post))

    def test_infer_deterministic_train_stochastic(self, rng):
        ptn = Ptn(PtnArch(6, 4, hidden=32), rng=rng)
        post = nn.softmax_rows(rng.normal(size=(5, 6)))
        np.testing.assert_array_equal(ptn_forward(ptn, post), ptn_forward(ptn, post))
        a = ptn_forward(ptn, post, TRAIN, np.random.default_rng(0))
        b = ptn_forward(ptn, post, TRAIN, np.random.default_rng(1))
        assert not np.array_equal(a, b)

    def test_width_mismatch(self, rng):
        with pytest.raises(InvalidArgumentError):
            ptn_forward(Ptn(PtnArch(6, 4), rng=rng), np.full((2, 5), 0.2))

    def test_composed_stack_gradients(self, rng):
        assert check_stack(rng) < STACK_TOL


def tiny_corpus(lang, n, rng, prefix):
    return generate_corpus(lang, n, (3, 6), rng, prefix)


class TestTraining:
    def test_asr_learns_source_language(self, pair):
        src, _, _ = pair
        rng = np.random.default_rng(0)
        train, dev = tiny_corpus(src, 500, rng, "tr"), tiny_corpus(src, 60, rng, "dv")
        res = train_asr(train, dev, AsrTrainConfig(hidden=32, blocks=2, epochs=4, patience=4, seed=1))
        best = res.log[res.best_epoch - 1]
        assert best["dev_ser"] < 0.10
        assert best["dev_loss"] <= res.log[-1]["dev_loss"]
        assert res.checkpoint.metadata["steps"] == res.best_epoch * 500

    def test_asr_deterministic(self, pair):
        src, _, _ = pair
        rng = np.random.default_rng(0)
        train, dev = tiny_corpus(src, 30, rng, "tr"), tiny_corpus(src, 10, rng, "dv")
        conf = AsrTrainConfig(hidden=8, blocks=1, epochs=2, seed=5)
        a, b = train_asr(train, dev, conf), train_asr(train, dev, conf)
        assert a.checkpoint.tensor_digest() == b.checkpoint.tensor_digest()

    def test_infeasible_utterances_skipped_and_counted(self, pair):
        src, _, _ = pair
        rng = np.random.default_rng(0)
        train = tiny_corpus(src, 20, rng, "tr")
        train.utterances.append(Utterance("short", np.array([1, 1, 1]), rng.normal(size=(2, 8))))
        dev = tiny_corpus(src, 5, rng, "dv")
        res = train_asr(train, dev, AsrTrainConfig(hidden=8, blocks=1, epochs=1, seed=0))
        assert res.skipped == 1
        assert res.checkpoint.metadata["skipped_utterances"] == 1

    def test_empty_and_all_infeasible(self, pair):
        src, _, _ = pair
        empty = Corpus(src.inventory, [])
        with pytest.raises(InvalidArgumentError):
            train_asr(empty, empty)
        bad = Corpus(src.inventory, [Utterance("u", np.array([2, 2]), np.zeros((2, 8)))])
        with pytest.raises(TrainingError):
            train_asr(bad, bad)

    def test_ptn_keeps_asr_frozen(self, pair, tmp_path):
        src, tgt, _ = pair
        rng = np.random.default_rng(1)
        asr = train_asr(tiny_corpus(src, 30, rng, "s"), tiny_corpus(src, 5, rng, "sd"),
                        AsrTrainConfig(hidden=8, blocks=1, epochs=1, seed=0)).checkpoint
        path = tmp_path / "asr.ckpt"
        save_checkpoint(asr, path)
        before = path.read_bytes()
        digest = asr.tensor_digest()
        res = train_ptn(path, tiny_corpus(tgt, 20, rng, "t"), tiny_corpus(tgt, 5, rng, "td"),
                        PtnTrainConfig(hidden=8, epochs=2, seed=0))
        assert path.read_bytes() == before
        assert res.checkpoint.metadata["asr_tensor_digest"] == digest
        assert res.checkpoint.inventories["source"] == list(src.inventory.symbols)
        assert res.log[res.best_epoch - 1]["dev_loss"] <= res.log[0]["dev_loss"]

    def test_ptn_rejects_tampered_or_missing_asr(self, pair, tmp_path):
        src, tgt, _ = pair
        rng = np.random.default_rng(2)
        asr = train_asr(tiny_corpus(src, 10, rng, "s"), tiny_corpus(src, 3, rng, "sd"),
                        AsrTrainConfig(hidden=8, blocks=1, epochs=1, seed=0)).checkpoint
        asr.tensors["out.bias"] = asr.tensors["out.bias"] + 1e-3
        t, d = tiny_corpus(tgt, 5, rng, "t"), tiny_corpus(tgt, 3, rng, "td")
        with pytest.raises(IntegrityError):
            train_ptn(asr, t, d, PtnTrainConfig(epochs=1))
        with pytest.raises(IntegrityError):
            train_ptn(tmp_path / "missing.ckpt", t, d, PtnTrainConfig(epochs=1))

import json
import os

import numpy as np
import pytest

from adaf import tensor as T
from adaf.errors import ContractError, ValidationError
from adaf.model import AudioClassifier
from adaf.training import (Adam, TrainConfig, TrainDivergedError,
                           evaluate, load_training_state, lr_at, train)
from conftest import tiny_bb_cfg, tiny_fe_cfg, tiny_train_cfg


def make_model(seed=0):
    rng = np.random.Generator(np.random.PCG64(seed))
    return AudioClassifier(tiny_fe_cfg(), tiny_bb_cfg(), rng)


class TestLrSchedule:
    def test_cosine_endpoints_exact(self):
        cfg = TrainConfig(epochs=400, lr_start=2e-4, lr_end=1e-6)
        assert lr_at(0, cfg) == 2e-4
        assert lr_at(399, cfg) == pytest.approx(1e-6, rel=1e-12)

    def test_cosine_midpoint(self):
        cfg = TrainConfig(epochs=3, lr_start=2e-4, lr_end=1e-6)
        assert lr_at(1, cfg) == pytest.approx(1.005e-4, rel=1e-12)

    def test_linear_midpoint(self):
        cfg = TrainConfig(epochs=3, lr_schedule="linear")
        assert lr_at(1, cfg) == pytest.approx((2e-4 + 1e-6) / 2, rel=1e-12)

    def test_exponential_is_geometric(self):
        cfg = TrainConfig(epochs=3, lr_schedule="exponential")
        assert lr_at(1, cfg) == pytest.approx(np.sqrt(2e-4 * 1e-6), rel=1e-12)

    def test_monotone_nonincreasing(self):
        cfg = TrainConfig(epochs=50)
        lrs = [lr_at(e, cfg) for e in range(50)]
        assert all(a >= b for a, b in zip(lrs, lrs[1:]))

    def test_out_of_range(self):
        cfg = TrainConfig(epochs=10)
        with pytest.raises(ContractError):
            lr_at(-1, cfg)
        with pytest.raises(ContractError):
            lr_at(10, cfg)

    def test_single_epoch(self):
        assert lr_at(0, TrainConfig(epochs=1)) == 2e-4


class TestConfigValidation:
    def test_bad_lr_order(self):
        with pytest.raises(ValidationError, match="lr"):
            TrainConfig(lr_start=1e-6, lr_end=2e-4).validate()

    def test_bad_schedule(self):
        with pytest.raises(ValidationError, match="lr_schedule"):
            TrainConfig(lr_schedule="step").validate()


class TestAdam:
    def test_first_step_is_lr_sized(self):
        p = T.Tensor(np.zeros(3, dtype=np.float64), requires_grad=True)
        p.grad = np.array([1.0, -2.0, 0.5])
        opt = Adam({"p": p}, TrainConfig())
        opt.step(0.1)
        # bias-corrected Adam: first update is lr * sign(grad) up to eps
        np.testing.assert_allclose(p.data, [-0.1, 0.1, -0.1], atol=1e-6)

    def test_converges_on_quadratic(self):
        p = T.Tensor(np.array([5.0, -3.0]), requires_grad=True)
        opt = Adam({"p": p}, TrainConfig())
        for _ in range(2000):
            p.grad = p.data.copy()   # gradient of 0.5 * |p|^2
            opt.step(0.05)
        assert np.abs(p.data).max() < 1e-2

    def test_zero_grad_clears(self):
        p = T.Tensor(np.zeros(2), requires_grad=True)
        p.grad = np.ones(2)
        opt = Adam({"p": p}, TrainConfig())
        opt.zero_grad()
        assert p.grad is None

    def test_state_tensor_roundtrip(self):
        rng = np.random.default_rng(0)
        p = T.Tensor(rng.standard_normal(4).astype(np.float32),
                     requires_grad=True)
        opt = Adam({"p": p}, TrainConfig())
        for _ in range(3):
            p.grad = rng.standard_normal(4).astype(np.float32)
            opt.step(1e-3)
        state = {k: v.copy() for k, v in opt.state_tensors().items()}
        opt2 = Adam({"p": p}, TrainConfig())
        opt2.load_state_tensors(state)
        assert opt2.step_count == 3
        np.testing.assert_array_equal(opt2.m["p"], opt.m["p"])
        np.testing.assert_array_equal(opt2.v["p"], opt.v["p"])


class TestTrainLoop:
    def test_loss_decreases_and_logs(self, tiny_dataset, tmp_path):
        model = make_model(1)
        cfg = tiny_train_cfg(epochs=5, lr_start=3e-3, lr_end=1e-4)
        ckpt, reports = train(model, tiny_dataset["train"],
                              tiny_dataset["valid"], cfg, str(tmp_path))
        with open(tmp_path / "metrics.ndjson") as f:
            lines = [json.loads(l) for l in f]
        assert [l["epoch"] for l in lines] == list(range(5))
        assert lines[-1]["train_loss"] < lines[0]["train_loss"]
        assert len(reports) == 5
        assert os.path.exists(ckpt)

    def test_checkpoint_cadence(self, tiny_dataset, tmp_path):
        model = make_model(2)
        cfg = tiny_train_cfg(epochs=4, checkpoint_every=2)
        train(model, tiny_dataset["train"], tiny_dataset["valid"], cfg,
              str(tmp_path))
        names = sorted(p.name for p in tmp_path.glob("checkpoint-*.adaf"))
        assert names == ["checkpoint-0002.adaf", "checkpoint-0004.adaf"]

    def test_same_seed_bitwise_identical(self, tiny_dataset, tmp_path):
        cfg = tiny_train_cfg(epochs=2)
        ckpt_a, _ = train(make_model(3), tiny_dataset["train"],
                          tiny_dataset["valid"], cfg, str(tmp_path / "a"))
        ckpt_b, _ = train(make_model(3), tiny_dataset["train"],
                          tiny_dataset["valid"], cfg, str(tmp_path / "b"))
        with open(ckpt_a, "rb") as fa, open(ckpt_b, "rb") as fb:
            assert fa.read() == fb.read()

    def test_resume_matches_uninterrupted_run(self, tiny_dataset, tmp_path):
        cfg = tiny_train_cfg(epochs=4, checkpoint_every=1)
        ckpt_full, _ = train(make_model(4), tiny_dataset["train"],
                             tiny_dataset["valid"], cfg, str(tmp_path / "full"))

        # pretend the full run died after epoch 2 and pick up its checkpoint
        ckpt_half = str(tmp_path / "full" / "checkpoint-0002.adaf")
        model2 = make_model(999)  # wrong init, fully overwritten by restore
        next_epoch, opt, rng = load_training_state(ckpt_half, model2, cfg)
        assert next_epoch == 2
        ckpt_res, _ = train(model2, tiny_dataset["train"],
                            tiny_dataset["valid"], cfg,
                            str(tmp_path / "resumed"),
                            start_epoch=next_epoch, opt=opt, rng=rng)
        with open(ckpt_full, "rb") as fa, open(ckpt_res, "rb") as fb:
            assert fa.read() == fb.read()

    def test_divergence_detected(self, tiny_dataset, tmp_path):
        model = make_model(5)
        next(iter(model.params().values())).data[:] = np.nan
        with pytest.raises(TrainDivergedError) as exc:
            train(model, tiny_dataset["train"], tiny_dataset["valid"],
                  tiny_train_cfg(epochs=1), str(tmp_path))
        assert exc.value.epoch == 0 and exc.value.batch == 0


class TestEvaluate:
    def test_report_fields(self, tiny_dataset):
        model = make_model(6)
        report = evaluate(model, tiny_dataset["valid"], tiny_train_cfg())
        assert 0.0 <= report.map <= 1.0
        assert 0.0 <= report.top_k_patch <= 1.0
        assert 0.0 <= report.clip_accuracy <= 1.0
        assert np.isfinite(report.loss)

    def test_batch_size_does_not_change_metrics(self, tiny_dataset):
        model = make_model(7)
        r1 = evaluate(model, tiny_dataset["valid"], tiny_train_cfg(batch_size=2))
        r2 = evaluate(model, tiny_dataset["valid"], tiny_train_cfg(batch_size=16))
        assert r1.map == pytest.approx(r2.map, abs=1e-6)
        assert r1.loss == pytest.approx(r2.loss, abs=1e-6)

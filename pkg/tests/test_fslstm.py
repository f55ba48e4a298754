"""Fast-slow recurrent stack: cell wiring, heads, and the combined loss."""

import numpy as np
import pytest

from foleygen import tensor as T
from foleygen.dsp import StftParams
from foleygen.errors import (
    AlignmentError,
    ConfigError,
    InvalidArgument,
    ShapeError,
)
from foleygen.fslstm import (
    FsLstmConfig,
    fslstm_forward,
    fslstm_forward_batch,
    fslstm_loss,
    init_fslstm_params,
    lstm_cell_step,
    pooled_logits,
)
from foleygen.rng import stream
from foleygen.synthesis import ClassSpectrogramBank

CFG = FsLstmConfig(num_fast_cells=3, hidden_dim=8, num_classes=4,
                   residual_dim=5)
INPUT_DIM = 6
TOY_STFT = StftParams(fft_size=8, window_size=8, hop_size=4)  # 5 bins


def weights_for(cfg=CFG, seed=0, arch="fslstm"):
    return init_fslstm_params(cfg, INPUT_DIM, seed, arch)


def step_inputs(t_len, batch=2, seed=1):
    gen = stream(seed, "steps")
    return [T.Tensor(gen.normal(size=(batch, INPUT_DIM))) for _ in range(t_len)]


def toy_bank(num_frames=7):
    gen = stream(2, "bank")
    bases = gen.random((4, num_frames, 5))
    return ClassSpectrogramBank(("a", "b", "c", "d"), bases, (1, 1, 1, 1),
                                TOY_STFT, 8000)


class TestConfig:
    def test_minimum_two_fast_cells(self):
        with pytest.raises(ConfigError):
            FsLstmConfig(num_fast_cells=1)

    def test_cell_names(self):
        assert CFG.cell_names == ("L1", "L2", "L3", "U")

    def test_probability_ranges(self):
        with pytest.raises(ConfigError):
            FsLstmConfig(zoneout_prob=1.5)
        with pytest.raises(ConfigError):
            FsLstmConfig(dropout_prob=1.0)


class TestInit:
    def test_key_inventory(self):
        params = weights_for()
        # L1 (input wx), L2 and U (hidden-wide wx), L3 inputless
        assert "cell.L1.wx" in params
        assert "cell.L2.wx" in params
        assert "cell.U.wx" in params
        assert "cell.L3.wx" not in params
        for cell in ("L1", "L2", "L3", "U"):
            assert params[f"cell.{cell}.wh"].shape == (8, 32)
            for gate in "ifgo":
                assert params[f"cell.{cell}.ln.{gate}.g"].shape == (8,)
        assert params["head.cls.w"].shape == (8, 4)
        assert params["head.res.w"].shape == (8, 5)

    def test_input_widths(self):
        params = weights_for()
        assert params["cell.L1.wx"].shape == (INPUT_DIM, 32)
        assert params["cell.L2.wx"].shape == (8, 32)
        assert params["cell.U.wx"].shape == (8, 32)

    def test_forget_gate_bias(self):
        params = weights_for(FsLstmConfig(num_fast_cells=2, hidden_dim=8,
                                          num_classes=4, residual_dim=5,
                                          forget_bias_init=1.5))
        np.testing.assert_array_equal(params["cell.L1.ln.f.b"].data, 1.5)
        np.testing.assert_array_equal(params["cell.L1.ln.i.b"].data, 0.0)

    def test_simple_arch_single_cell(self):
        params = weights_for(arch="simple")
        cells = {k.split(".")[1] for k in params if k.startswith("cell.")}
        assert cells == {"L1"}
        assert "head.cls.w" in params and "head.res.w" in params

    def test_unknown_arch_rejected(self):
        with pytest.raises(ConfigError):
            weights_for(arch="gru")


class TestCellStep:
    def test_state_shapes(self):
        params = weights_for()
        h = T.Tensor(np.zeros((3, 8)))
        c = T.Tensor(np.zeros((3, 8)))
        x = T.Tensor(stream(3, "x").normal(size=(3, INPUT_DIM)))
        h2, c2 = lstm_cell_step(params, "L1", CFG, h, c, x)
        assert h2.shape == (3, 8)
        assert c2.shape == (3, 8)

    def test_inputless_cell_rejects_input(self):
        params = weights_for()
        h = T.Tensor(np.zeros((2, 8)))
        c = T.Tensor(np.zeros((2, 8)))
        x = T.Tensor(np.zeros((2, INPUT_DIM)))
        with pytest.raises(ShapeError):
            lstm_cell_step(params, "L3", CFG, h, c, x)

    def test_input_width_checked(self):
        params = weights_for()
        h = T.Tensor(np.zeros((2, 8)))
        c = T.Tensor(np.zeros((2, 8)))
        with pytest.raises(ShapeError):
            lstm_cell_step(params, "L1", CFG, h, c, T.Tensor(np.zeros((2, 3))))

    def test_zoneout_train_binary_eval_blend(self):
        cfg = FsLstmConfig(num_fast_cells=2, hidden_dim=8, num_classes=4,
                           residual_dim=5, zoneout_prob=0.4)
        params = init_fslstm_params(cfg, INPUT_DIM, 0)
        gen = stream(4, "zo")
        h = T.Tensor(gen.normal(size=(2, 8)))
        c = T.Tensor(gen.normal(size=(2, 8)))
        x = T.Tensor(gen.normal(size=(2, INPUT_DIM)))
        h_tr, _ = lstm_cell_step(params, "L1", cfg, h, c, x, "train", 7, (0,))
        h_ev, _ = lstm_cell_step(params, "L1", cfg, h, c, x, "eval", 7, (0,))
        cfg0 = FsLstmConfig(num_fast_cells=2, hidden_dim=8, num_classes=4,
                            residual_dim=5, zoneout_prob=0.0)
        h_new, _ = lstm_cell_step(params, "L1", cfg0, h, c, x, "eval", 7, (0,))
        # train: each unit is either carried or fresh
        carried = np.isclose(h_tr.data, h.data, atol=1e-12)
        fresh = np.isclose(h_tr.data, h_new.data, atol=1e-12)
        assert np.all(carried | fresh)
        assert 0 < carried.sum() < h.data.size
        # eval: exact expectation blend
        np.testing.assert_allclose(
            h_ev.data, 0.4 * h.data + 0.6 * h_new.data, atol=1e-12)

    def test_zoneout_mask_deterministic(self):
        cfg = FsLstmConfig(num_fast_cells=2, hidden_dim=8, num_classes=4,
                           residual_dim=5, zoneout_prob=0.3)
        params = init_fslstm_params(cfg, INPUT_DIM, 0)
        gen = stream(5, "zo")
        h = T.Tensor(gen.normal(size=(2, 8)))
        c = T.Tensor(gen.normal(size=(2, 8)))
        x = T.Tensor(gen.normal(size=(2, INPUT_DIM)))
        a, _ = lstm_cell_step(params, "L1", cfg, h, c, x, "train", 9, (3,))
        b, _ = lstm_cell_step(params, "L1", cfg, h, c, x, "train", 9, (3,))
        np.testing.assert_array_equal(a.data, b.data)


class TestForward:
    def test_output_lists(self):
        params = weights_for()
        logits, residuals = fslstm_forward_batch(params, CFG, step_inputs(5))
        assert len(logits) == 5 and len(residuals) == 5
        assert logits[0].shape == (2, 4)
        assert residuals[0].shape == (2, 5)

    def test_single_clip_wrapper_matches_batch(self):
        params = weights_for()
        feats = stream(6, "f").normal(size=(4, INPUT_DIM))
        steps = [T.Tensor(feats[t:t + 1]) for t in range(4)]
        logits_b, res_b = fslstm_forward_batch(params, CFG, steps)
        logits_s, res_s = fslstm_forward(feats, CFG, params)
        assert logits_s.shape == (4, 4)
        np.testing.assert_allclose(
            logits_s.data, np.concatenate([l.data for l in logits_b]),
            atol=1e-12)
        np.testing.assert_allclose(
            res_s.data, np.concatenate([r.data for r in res_b]), atol=1e-12)

    def test_batch_rows_independent(self):
        # each clip in a batch must be processed as if alone
        params = weights_for()
        steps = step_inputs(3, batch=4, seed=8)
        full, _ = fslstm_forward_batch(params, CFG, steps)
        solo_steps = [T.Tensor(s.data[1:2]) for s in steps]
        solo, _ = fslstm_forward_batch(params, CFG, solo_steps)
        np.testing.assert_allclose(full[-1].data[1], solo[-1].data[0],
                                   atol=1e-12)

    def test_slow_cell_engaged(self):
        # zeroing U's recurrence changes the output only for arch="fslstm"
        params = weights_for()
        steps = step_inputs(3, seed=9)
        base, _ = fslstm_forward_batch(params, CFG, steps)
        params2 = weights_for()
        params2["cell.U.wx"] = T.Tensor(np.zeros_like(
            params2["cell.U.wx"].data), requires_grad=True)
        changed, _ = fslstm_forward_batch(params2, CFG, steps)
        assert not np.allclose(base[-1].data, changed[-1].data)

    def test_simple_arch_ignores_extra_cells(self):
        cfg = FsLstmConfig(num_fast_cells=2, hidden_dim=8, num_classes=4,
                           residual_dim=5)
        params = init_fslstm_params(cfg, INPUT_DIM, 0, arch="simple")
        logits, residuals = fslstm_forward_batch(params, cfg, step_inputs(3),
                                                 arch="simple")
        assert logits[-1].shape == (2, 4)

    def test_empty_sequence_rejected(self):
        with pytest.raises(ShapeError):
            fslstm_forward_batch(weights_for(), CFG, [])

    def test_eval_deterministic_under_dropout_config(self):
        cfg = FsLstmConfig(num_fast_cells=2, hidden_dim=8, num_classes=4,
                           residual_dim=5, dropout_prob=0.5)
        params = init_fslstm_params(cfg, INPUT_DIM, 0)
        steps = step_inputs(3, seed=10)
        a, _ = fslstm_forward_batch(params, cfg, steps, "eval", seed=1)
        b, _ = fslstm_forward_batch(params, cfg, steps, "eval", seed=2)
        # dropout only acts in train mode, so the seed cannot matter here
        np.testing.assert_array_equal(a[-1].data, b[-1].data)

    def test_gradients_flow_to_every_weight(self):
        params = weights_for()
        logits, residuals = fslstm_forward_batch(params, CFG, step_inputs(3),
                                                 "train")
        loss = T.add(T.tensor_sum(T.square(T.stack(logits))),
                     T.tensor_sum(T.square(T.stack(residuals))))
        T.backward(loss)
        for name, p in params.items():
            assert p.grad is not None and np.any(p.grad != 0), name


class TestPooledLogits:
    def test_mean_over_time(self):
        rows = T.Tensor(np.array([[1.0, 3.0], [3.0, 5.0], [5.0, 1.0]]))
        out = pooled_logits(rows)
        assert out.shape == (1, 2)
        np.testing.assert_allclose(out.data, [[3.0, 3.0]], atol=1e-12)


class TestLoss:
    def run_loss(self, t_res=4, t_target=7, alpha=1.0, lam=1.0, label=1):
        params = weights_for()
        feats = stream(11, "lf").normal(size=(t_res, INPUT_DIM))
        logits, residuals = fslstm_forward(feats, CFG, params)
        bank = toy_bank(num_frames=t_target)
        target = stream(12, "lt").random((t_target, 5))
        loss = fslstm_loss(logits, residuals, label, target, bank,
                           lambda_residual=lam, alpha=alpha)
        return loss, (logits, residuals, target, bank)

    def test_scalar_loss(self):
        loss, _ = self.run_loss()
        assert loss.data.size == 1
        assert np.isfinite(loss.data)

    def test_reduces_to_cross_entropy_when_lambda_zero(self):
        loss, (logits, _, _, _) = self.run_loss(lam=0.0)
        ce = T.cross_entropy(pooled_logits(logits), [1])
        assert loss.item() == pytest.approx(ce.item(), abs=1e-12)

    def test_matches_hand_computed_robust_term(self):
        loss, (logits, residuals, target, bank) = self.run_loss()
        from foleygen.synthesis import alignment_matrix
        ce = T.cross_entropy(pooled_logits(logits), [1]).item()
        warped = alignment_matrix(4, 7) @ residuals.data
        pred = warped + bank.base_for("b")
        sq = ((pred - target) ** 2).sum(axis=1)
        expected = ce + np.log(1.0 + sq).sum()
        assert loss.item() == pytest.approx(expected, rel=1e-12)

    def test_class_name_and_index_agree(self):
        loss_by_index, _ = self.run_loss(label=2)
        loss_by_name, _ = self.run_loss(label="c")
        assert loss_by_index.item() == pytest.approx(loss_by_name.item(),
                                                     abs=1e-12)

    def test_alpha_must_be_positive(self):
        with pytest.raises(InvalidArgument):
            self.run_loss(alpha=0.0)

    def test_frame_mismatch_raises(self):
        params = weights_for()
        feats = stream(13, "lf").normal(size=(4, INPUT_DIM))
        logits, residuals = fslstm_forward(feats, CFG, params)
        bank = toy_bank(num_frames=7)
        target = stream(14, "lt").random((6, 5))  # bank says 7
        with pytest.raises(AlignmentError):
            fslstm_loss(logits, residuals, 0, target, bank)

    def test_loss_differentiable(self):
        params = weights_for()
        feats = stream(15, "lf").normal(size=(3, INPUT_DIM))
        logits, residuals = fslstm_forward(feats, CFG, params, "train")
        bank = toy_bank(num_frames=5)
        target = stream(16, "lt").random((5, 5))
        loss = fslstm_loss(logits, residuals, 0, target, bank)
        T.backward(loss)
        assert np.any(params["head.res.w"].grad != 0)
        assert np.any(params["cell.L1.wx"].grad != 0)


class TestLossGradient:
    def test_full_pipeline_grad_check(self):
        # finite differences through cells, heads, warping, and robust term
        cfg = FsLstmConfig(num_fast_cells=2, hidden_dim=4, num_classes=3,
                           residual_dim=5)
        params = init_fslstm_params(cfg, 3, 0)
        bank = ClassSpectrogramBank(
            ("a", "b", "c"), stream(17, "b").random((3, 4, 5)),
            (1, 1, 1), TOY_STFT, 8000)
        target = stream(18, "t").random((4, 5))
        feats = T.Tensor(stream(19, "f").normal(size=(3, 3)),
                         requires_grad=True)

        def fn(x):
            logits, residuals = fslstm_forward(x, cfg, params)
            return fslstm_loss(logits, residuals, 1, target, bank)

        report = T.grad_check(fn, [feats], tol=1e-4)
        assert report.passed, report.max_rel_error

import numpy as np
import pytest
import torch

from diffimpute.predictor import AttentionBlock, OneShotPredictor, ar_loss


def tiny_predictor(**kw):
    torch.manual_seed(0)
    args = dict(window_length=6, channels=2, latent_dim=8, heads=2, blocks=1,
                ffn_hidden=16)
    args.update(kw)
    return OneShotPredictor(**args)


class TestEmbed:
    def test_zero_input_gives_positional_table(self):
        net = tiny_predictor().double()
        zeros = torch.zeros(1, 6, 2, dtype=torch.float64)
        out = net.embed(zeros, zeros)
        assert torch.allclose(out[0], net.positional.double())

    def test_identity_like_projection(self):
        net = tiny_predictor(latent_dim=4).double()
        with torch.no_grad():
            net.positional.zero_()
            net.in_proj.weight.zero_()
            net.in_proj.weight[:2, :2] = torch.eye(2)  # pass values through
        x = torch.randn(1, 6, 2, dtype=torch.float64)
        mask = torch.zeros(1, 6, 2, dtype=torch.float64)
        out = net.embed(x, mask)
        assert torch.allclose(out[0, :, :2], x[0])
        assert torch.all(out[0, :, 2:] == 0)

    def test_matches_matmul_oracle(self):
        net = tiny_predictor().double()
        rng = np.random.default_rng(1)
        x = rng.standard_normal((1, 6, 2))
        m = (rng.random((1, 6, 2)) > 0.5).astype(float)
        out = net.embed(torch.from_numpy(x), torch.from_numpy(m)).detach().numpy()
        w = net.in_proj.weight.detach().numpy()
        pos = net.positional.detach().numpy()
        # naive triple-loop projection
        expected = np.zeros((6, 8))
        inp = np.concatenate([x[0], m[0]], axis=1)
        for t in range(6):
            for j in range(8):
                acc = 0.0
                for i in range(4):
                    acc += w[j, i] * inp[t, i]
                expected[t, j] = acc + pos[t, j]
        np.testing.assert_allclose(out[0], expected, atol=1e-10)


class TestAttention:
    def test_zero_query_gives_uniform_weights(self):
        torch.manual_seed(2)
        blk = AttentionBlock(8, heads=2, ffn_hidden=8)
        with torch.no_grad():
            blk.w_query.weight.zero_()
        x = torch.randn(2, 5, 8)
        context, weights = blk.attend(x)
        assert torch.allclose(weights, torch.full_like(weights, 1.0 / 5))
        # each head context is the column mean of its values
        v = blk.w_value(x).view(2, 5, 2, 4).transpose(1, 2)
        expected = v.mean(dim=2, keepdim=True).expand_as(v)
        got = context.view(2, 5, 2, 4).transpose(1, 2)
        assert torch.allclose(got, expected, atol=1e-6)

    def test_single_position_weight_is_one(self):
        torch.manual_seed(3)
        blk = AttentionBlock(4, heads=2, ffn_hidden=4)
        x = torch.randn(1, 1, 4)
        context, weights = blk.attend(x)
        assert torch.allclose(weights, torch.ones(1, 2, 1, 1))
        v = blk.w_value(x).view(1, 1, 2, 2).transpose(1, 2)
        assert torch.allclose(context.view(1, 1, 2, 2).transpose(1, 2), v)

    def test_rows_sum_to_one(self):
        torch.manual_seed(4)
        blk = AttentionBlock(8, heads=4, ffn_hidden=8)
        _, weights = blk.attend(torch.randn(3, 7, 8))
        sums = weights.sum(dim=-1)
        assert torch.allclose(sums, torch.ones_like(sums), atol=1e-6)

    def test_matches_hand_computed_softmax_sum(self):
        # L=3, d=4, H=2 against a numpy scratch oracle
        torch.manual_seed(5)
        blk = AttentionBlock(4, heads=2, ffn_hidden=4).double()
        x = torch.randn(1, 3, 4, dtype=torch.float64)
        context, _ = blk.attend(x)

        xq = x[0].numpy()
        wq = blk.w_query.weight.detach().numpy().T
        wk = blk.w_key.weight.detach().numpy().T
        wv = blk.w_value.weight.detach().numpy().T
        expected = np.zeros((3, 4))
        for h in range(2):
            cols = slice(2 * h, 2 * h + 2)
            q, k, v = xq @ wq[:, cols], xq @ wk[:, cols], xq @ wv[:, cols]
            scores = q @ k.T / np.sqrt(2.0)
            w = np.exp(scores - scores.max(axis=1, keepdims=True))
            w /= w.sum(axis=1, keepdims=True)
            expected[:, cols] = w @ v
        np.testing.assert_allclose(context[0].detach().numpy(), expected, atol=1e-8)

    def test_heads_must_divide_dim(self):
        with pytest.raises(ValueError):
            AttentionBlock(6, heads=4, ffn_hidden=8)


class TestForward:
    def test_shape_and_determinism(self):
        net = tiny_predictor()
        net.eval()
        x = torch.randn(3, 6, 2)
        m = (torch.rand(3, 6, 2) > 0.3).float()
        a = net(x, m)
        b = net(x, m)
        assert a.shape == (3, 6, 2)
        assert torch.equal(a, b)

    def test_stateless_across_batch_order(self):
        net = tiny_predictor()
        net.eval()
        x = torch.randn(4, 6, 2)
        m = torch.ones(4, 6, 2)
        full = net(x, m)
        perm = torch.tensor([2, 0, 3, 1])
        permuted = net(x[perm], m[perm])
        assert torch.allclose(full[perm], permuted, atol=1e-6)

    def test_shape_validation(self):
        net = tiny_predictor()
        with pytest.raises(ValueError):
            net(torch.randn(1, 5, 2), torch.ones(1, 5, 2))


class TestArLoss:
    def test_perfect_prediction(self):
        x = np.random.default_rng(0).standard_normal((4, 3))
        assert ar_loss(x, x, np.ones_like(x)) == 0.0

    def test_single_cell(self):
        z = np.zeros((2, 2))
        x = np.zeros((2, 2))
        x[1, 1] = 2.0
        m = np.zeros((2, 2))
        m[1, 1] = 1.0
        assert ar_loss(z, x, m) == 4.0

    def test_matches_double_loop_oracle(self):
        rng = np.random.default_rng(1)
        z = rng.standard_normal((5, 4))
        x = rng.standard_normal((5, 4))
        m = (rng.random((5, 4)) > 0.4).astype(float)
        total, count = 0.0, 0
        for i in range(5):
            for j in range(4):
                if m[i, j]:
                    total += (z[i, j] - x[i, j]) ** 2
                    count += 1
        assert ar_loss(z, x, m) == pytest.approx(total / count, rel=1e-12)

    def test_empty_mask_rejected(self):
        with pytest.raises(ValueError):
            ar_loss(np.zeros((2, 2)), np.zeros((2, 2)), np.zeros((2, 2)))

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError):
            ar_loss(np.zeros((2, 2)), np.zeros((2, 3)), np.zeros((2, 2)))

"""Encoder: SE gating, style heads, shapes and determinism."""

import numpy as np
import pytest
import torch

from styleblend import Encoder, se_block
from styleblend.encoder import SEGate, StyleHead

from oracles import leaky_relu, naive_conv2d


def test_se_gate_large_bias_is_identity():
    torch.manual_seed(0)
    gate = SEGate(4)
    with torch.no_grad():
        gate.fc2.bias.fill_(1e4)
    x = torch.randn(2, 4, 5, 5)
    assert torch.allclose(se_block(x, gate), x, atol=1e-6)


def test_se_gate_half():
    gate = SEGate(3)
    with torch.no_grad():
        for p in gate.parameters():
            p.zero_()
    # zero bottleneck output -> sigmoid(0) = 0.5 exactly, on a 1x1 spatial cell
    x = torch.tensor([[[[2.0]], [[-4.0]], [[0.5]]]])
    assert torch.equal(se_block(x, gate), x / 2)


def test_se_gate_zero_input():
    torch.manual_seed(1)
    gate = SEGate(4)
    x = torch.zeros(1, 4, 3, 3)
    assert torch.equal(se_block(x, gate), torch.zeros_like(x))


def test_se_gate_channel_mismatch():
    with pytest.raises(ValueError, match="channels"):
        SEGate(4)(torch.zeros(1, 3, 2, 2))


def test_se_gates_strictly_inside_unit_interval():
    torch.manual_seed(2)
    gate = SEGate(8)
    for scale in (1.0, 100.0):
        g = gate.gates(torch.randn(4, 8, 6, 6) * scale)
        assert (g > 0).all() and (g < 1).all()


def test_encode_desk_shapes():
    torch.manual_seed(3)
    enc = Encoder(64, 12, 64, 3)
    code, pyramid = enc(torch.rand(3, 64, 64) * 2 - 1)
    assert code.shape == (12, 64)
    assert [p.shape[-1] for p in pyramid] == [4, 8, 16]
    assert [p.shape[-2] for p in pyramid] == [4, 8, 16]
    assert len(pyramid) == 3


def test_encode_paper_scale_code_shape():
    # 18 style elements of 512 dims from a 256x256 input
    torch.manual_seed(4)
    enc = Encoder(256, 18, 512, 3)
    code, pyramid = enc(torch.rand(1, 3, 256, 256) * 2 - 1)
    assert code.shape == (1, 18, 512)
    assert [p.shape[-1] for p in pyramid] == [16, 32, 64]


def test_encode_rejects_wrong_size():
    enc = Encoder(64, 12, 64, 3)
    with pytest.raises(ValueError, match="64"):
        enc(torch.zeros(3, 32, 32))


def test_encode_deterministic():
    torch.manual_seed(5)
    enc = Encoder(64, 12, 64, 3)
    img = torch.rand(2, 3, 64, 64) * 2 - 1
    c1, p1 = enc(img)
    c2, p2 = enc(img.clone())
    assert torch.equal(c1, c2)
    assert all(torch.equal(a, b) for a, b in zip(p1, p2))


def test_style_head_zero_input_zero_bias():
    torch.manual_seed(6)
    head = StyleHead(4, 8, 8, 16)
    with torch.no_grad():
        for conv in head.convs:
            conv.bias.zero_()
        head.fc.bias.zero_()
    out = head(torch.zeros(1, 8, 4, 4))
    assert torch.equal(out, torch.zeros(1, 16))


def test_style_head_matches_direct_convolution_oracle():
    torch.manual_seed(7)
    head = StyleHead(4, 3, 5, 6).double()
    x = torch.randn(3, 4, 4, dtype=torch.float64)

    h = x.numpy()
    for conv in head.convs:
        h = naive_conv2d(h, conv.weight.detach().numpy(),
                         conv.bias.detach().numpy(), stride=2, pad=1)
        h = leaky_relu(h)
    expected = head.fc.weight.detach().numpy() @ h.reshape(-1) + head.fc.bias.detach().numpy()

    got = head(x.unsqueeze(0)).squeeze(0).detach().numpy()
    assert np.allclose(got, expected, atol=1e-12)
    assert got.shape == (6,)


def test_style_head_output_length_matches_style_dim():
    torch.manual_seed(8)
    head = StyleHead(8, 16, 16, 64)
    assert head(torch.zeros(2, 16, 8, 8)).shape == (2, 64)


@pytest.mark.parametrize("side,depth", [(1, 0), (2, 1), (4, 2), (8, 3), (16, 4)])
def test_style_head_depth_reaches_1x1(side, depth):
    head = StyleHead(side, 4, 4, 8)
    assert len(head.convs) == depth
    out = head(torch.zeros(1, 4, side, side))  # FC must see a 1x1 extent
    assert out.shape == (1, 8)


def test_style_head_rejects_wrong_level():
    head = StyleHead(8, 16, 16, 64)
    with pytest.raises(ValueError, match="8x8"):
        head(torch.zeros(1, 16, 4, 4))


def test_coarse_level_feeds_lowest_style_rows():
    # Zero every head except the coarse group's; only rows 0..L/P-1 can be nonzero biases
    torch.manual_seed(9)
    enc = Encoder(64, 6, 8, 3)
    with torch.no_grad():
        for i, head in enumerate(enc.heads):
            for conv in head.convs:
                conv.weight.zero_()
                conv.bias.zero_()
            head.fc.weight.zero_()
            head.fc.bias.fill_(float(i // enc.per_level + 1))
    code, _ = enc(torch.rand(3, 64, 64))
    level_of_row = code[:, 0]
    assert torch.equal(level_of_row, torch.tensor([1.0, 1.0, 2.0, 2.0, 3.0, 3.0]))

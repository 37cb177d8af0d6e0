"""Config validation, seeded streams and the checkpoint archive format."""

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from styleblend import (ConfigError, CorruptArchiveError, Manifest, ModelConfig,
                        SwapModel, UnsupportedVersionError, load_checkpoint,
                        save_checkpoint, seeded_rng, seeded_torch_generator)
from conftest import tiny_model_config


def manifest():
    return Manifest(config=ModelConfig(), step=0, phase=1)


# -- ModelConfig ------------------------------------------------------------

def test_desk_and_paper_presets_validate():
    desk = ModelConfig.desk()
    assert (desk.image_size, desk.style_count, desk.style_dim) == (64, 12, 64)
    paper = ModelConfig.paper()
    assert (paper.image_size, paper.style_count, paper.style_dim) == (1024, 18, 512)
    assert paper.decoder_blocks == 9 and paper.landmark_count == 19
    assert paper.sbm_layers == 4


def test_checkpoint_parameter_name_prefixes():
    model = SwapModel(tiny_model_config())
    names = set(model.named_params())
    assert "encoder/stage1/block1/conv1/weight" in names
    assert "sbm/layer1/q/weight" in names
    assert "decoder/block1/convs/0/weight" in names
    assert "critic/scale0/convs/0/weight" in names
    assert any(n.startswith("frozen/id/") for n in names)
    assert any(n.startswith("frozen/lm/") for n in names)


@pytest.mark.parametrize("overrides,fragment", [
    (dict(image_size=48, decoder_blocks=5), "power of two"),
    (dict(image_size=16, decoder_blocks=3), ">= 32"),
    (dict(style_dim=30, heads=4), "divisible by heads"),
    (dict(style_count=10, pyramid_levels=3), "pyramid_levels"),
    (dict(image_size=64, decoder_blocks=6), "2**(decoder_blocks+1)"),
    (dict(heads=0), "positive integer"),
    (dict(seed="x"), "seed"),
])
def test_config_violations_distinct_errors(overrides, fragment):
    with pytest.raises(ConfigError, match=None) as err:
        ModelConfig(**{**ModelConfig().to_json(), **overrides})
    assert fragment in str(err.value)


def test_config_rejects_unknown_keys():
    with pytest.raises(ConfigError, match="unknown"):
        ModelConfig.from_json({"image_size": 64, "bogus": 1})


def test_pyramid_sides_rule():
    assert ModelConfig().pyramid_sides() == [4, 8, 16]
    assert ModelConfig.paper().pyramid_sides() == [64, 128, 256]


# -- seeded streams ----------------------------------------------------------

def test_rng_same_seed_label_identical():
    a = seeded_rng(7, "init").random(100)
    b = seeded_rng(7, "init").random(100)
    assert np.array_equal(a, b)


def test_rng_label_separation():
    a = seeded_rng(7, "init").random(100)
    b = seeded_rng(7, "noise").random(100)
    assert not np.array_equal(a, b)


def test_rng_seed_separation():
    a = seeded_rng(7, "x").random(100)
    b = seeded_rng(8, "x").random(100)
    assert not np.array_equal(a, b)


def test_torch_generator_streams():
    a = torch.randn(50, generator=seeded_torch_generator(7, "init"))
    b = torch.randn(50, generator=seeded_torch_generator(7, "init"))
    c = torch.randn(50, generator=seeded_torch_generator(7, "noise"))
    assert torch.equal(a, b) and not torch.equal(a, c)


# -- checkpoint archive -------------------------------------------------------

def test_empty_checkpoint_roundtrip(tmp_path):
    path = tmp_path / "empty.sbld"
    save_checkpoint(path, {}, manifest())
    man, tensors = load_checkpoint(path)
    assert tensors == {} and man.step == 0 and man.config == ModelConfig()


def test_single_tensor_roundtrip(tmp_path):
    path = tmp_path / "one.sbld"
    w = np.arange(4, dtype=np.float32).reshape(2, 2) / 3
    save_checkpoint(path, {"w": w}, manifest())
    _, tensors = load_checkpoint(path)
    assert tensors["w"].dtype == np.float32
    assert np.array_equal(tensors["w"], w)


def test_full_model_roundtrip_bit_exact(tmp_path):
    model = SwapModel(ModelConfig())  # desk scale, ~2.7M parameters
    params = {n: p.detach().numpy() for n, p in model.named_params().items()}
    path = tmp_path / "model.sbld"
    save_checkpoint(path, params, Manifest(config=model.config, step=3, phase=1))
    man, tensors = load_checkpoint(path)
    assert man.step == 3 and man.config == model.config
    assert set(tensors) == set(params)
    for name in params:
        assert tensors[name].dtype == params[name].dtype
        assert np.array_equal(tensors[name], params[name]), name


@settings(max_examples=25, deadline=None)
@given(st.dictionaries(
    st.text(st.characters(codec="utf-8", exclude_categories=("Cs",)), min_size=1, max_size=30),
    st.tuples(
        st.sampled_from([np.float32, np.float64]),
        st.lists(st.integers(0, 4), max_size=3),
        st.integers(0, 2 ** 32 - 1)),
    max_size=6))
def test_roundtrip_property(tmp_path_factory, tensor_specs):
    tensors = {}
    for name, (dtype, shape, seed) in tensor_specs.items():
        vals = np.random.default_rng(seed).standard_normal(shape) * 1e3
        tensors[name] = vals.astype(dtype)
    path = tmp_path_factory.mktemp("rt") / "a.sbld"
    save_checkpoint(path, tensors, manifest())
    _, loaded = load_checkpoint(path)
    assert set(loaded) == set(tensors)
    for name, arr in tensors.items():
        assert loaded[name].dtype == arr.dtype
        assert loaded[name].shape == arr.shape
        assert np.array_equal(loaded[name], arr, equal_nan=True)


def test_save_load_save_byte_identical(tmp_path):
    rng = np.random.default_rng(0)
    tensors = {"b/x": rng.standard_normal((3, 2)).astype(np.float32),
               "a/y": rng.standard_normal(5).astype(np.float64),
               "scalar": np.float32(2.5).reshape(())}
    p1, p2 = tmp_path / "a.sbld", tmp_path / "b.sbld"
    save_checkpoint(p1, tensors, manifest())
    man, loaded = load_checkpoint(p1)
    save_checkpoint(p2, loaded, man)
    assert p1.read_bytes() == p2.read_bytes()


def test_duplicate_name_rejected(tmp_path):
    with pytest.raises(Exception, match="duplicate"):
        save_checkpoint(tmp_path / "d.sbld",
                        [("w", np.zeros(1, np.float32)), ("w", np.ones(1, np.float32))],
                        manifest())


def test_wrong_magic_is_corruption(tmp_path):
    path = tmp_path / "bad.sbld"
    path.write_bytes(b"NOPE" + b"\x00" * 64)
    with pytest.raises(CorruptArchiveError, match="magic"):
        load_checkpoint(path)


def test_future_version_rejected(tmp_path):
    path = tmp_path / "future.sbld"
    save_checkpoint(path, {}, manifest())
    raw = bytearray(path.read_bytes())
    raw[4:8] = (99).to_bytes(4, "little")
    path.write_bytes(bytes(raw))
    with pytest.raises(UnsupportedVersionError, match="99"):
        load_checkpoint(path)


def test_truncated_archive_is_corruption(tmp_path):
    path = tmp_path / "t.sbld"
    save_checkpoint(path, {"w": np.ones((8, 8), np.float32)}, manifest())
    raw = path.read_bytes()
    path.write_bytes(raw[:len(raw) - 17])
    with pytest.raises(CorruptArchiveError, match="truncated"):
        load_checkpoint(path)

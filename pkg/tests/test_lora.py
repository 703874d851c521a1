"""Low-rank adapters: identity at init, merge equivalence, frozen bases."""

import numpy as np
import pytest

from conftest import random_grid, tiny_dit_config
from robovid.lora import (
    attach,
    load_adapters,
    merge,
    save_adapters,
    select_targets,
    trainable_count,
    unmerge,
)
from robovid.model import DiTConfig, forward, init_parameters
from robovid.optim import OptimizerState, adamw_step, trainable, zero_grads
from robovid.tensor import Tensor, mse


def _model(seed=0):
    cfg = tiny_dit_config()
    return cfg, init_parameters(cfg, seed=seed)


def _run(cfg, params, adapters, seed=0):
    rng = np.random.default_rng(seed)
    cond, gen = random_grid(cfg, rng), random_grid(cfg, rng)
    return forward(params, cfg, cond, gen, 0.35, "Humanoid video",
                   adapters=adapters).data


def test_default_targets_cover_block_linears_only():
    cfg, params = _model()
    names = select_targets(params)
    assert len(names) == cfg.blocks * 6
    for n in names:
        assert n.startswith("block") and n.endswith(".weight")
    assert "time_mlp.fc1.weight" not in names  # shares a suffix, not a block
    assert not any(".mod." in n for n in names)
    assert "input_proj.weight" not in names


def test_desk_config_trainable_adapter_count():
    # rank 8 over 24 block weights of the full-size model
    cfg = DiTConfig()
    params = init_parameters(cfg, seed=0)
    adapters = attach(params, rank=8, alpha=16.0, seed=0)
    assert len(adapters) == 24
    expect = sum(8 * (params[n].shape[0] + params[n].shape[1]) for n in adapters)
    assert trainable_count(adapters) == expect == 76032


def test_fresh_adapter_is_exact_identity():
    cfg, params = _model()
    base_out = _run(cfg, params, None)
    adapters = attach(params, rank=4, alpha=8.0, seed=5)
    for ad in adapters.values():
        assert not ad.B.data.any()
        assert ad.A.data.any()
        assert ad.scaling == 2.0
    adapted_out = _run(cfg, params, adapters)
    assert np.array_equal(base_out, adapted_out)


def test_attach_freezes_targets_and_leaves_glue_trainable():
    _, params = _model()
    adapters = attach(params, rank=2, alpha=4.0)
    for name in adapters:
        assert not params[name].requires_grad
    assert params["input_proj.weight"].requires_grad
    assert params["time_mlp.fc1.weight"].requires_grad
    assert params["head.weight"].requires_grad
    assert all(ad.A.requires_grad and ad.B.requires_grad for ad in adapters.values())


def test_adapter_path_matches_merged_weights():
    cfg, params = _model(seed=3)
    adapters = attach(params, rank=3, alpha=6.0, seed=9)
    rng = np.random.default_rng(4)
    for ad in adapters.values():  # give the adapters something to say
        ad.B.data = (rng.standard_normal(ad.B.shape) * 0.05).astype(np.float32)
    via_adapters = _run(cfg, params, adapters, seed=8)
    merged = merge(params, adapters)
    via_merged = _run(cfg, merged, None, seed=8)
    worst = np.max(np.abs(via_adapters - via_merged) / np.maximum(1.0, np.abs(via_merged)))
    assert worst < 1e-5


def test_merge_with_zero_b_is_bitwise_noop():
    _, params = _model()
    adapters = attach(params, rank=4, alpha=16.0)
    merged = merge(params, adapters)
    for name in params:
        assert np.array_equal(merged[name].data, params[name].data)


def test_unmerge_round_trip():
    _, params = _model(seed=1)
    adapters = attach(params, rank=3, alpha=6.0, seed=2)
    rng = np.random.default_rng(0)
    for ad in adapters.values():
        ad.B.data = (rng.standard_normal(ad.B.shape) * 0.1).astype(np.float32)
    back = unmerge(merge(params, adapters), adapters)
    for name in params:
        a, b = back[name].data, params[name].data
        rel = np.max(np.abs(a - b) / np.maximum(np.abs(b), 1e-3))
        assert rel <= 1e-6


def test_selector_variants_and_errors():
    _, params = _model()
    only_q = attach(params, rank=2, alpha=2.0, selector=lambda n: n.endswith("attn.q.weight"))
    assert set(only_q) == {f"block{i}.attn.q.weight" for i in range(2)}
    by_substring = select_targets(params, selector=["attn.v.weight"])
    assert by_substring == [f"block{i}.attn.v.weight" for i in range(2)]
    with pytest.raises(ValueError, match="matched no parameters"):
        attach(params, rank=2, alpha=2.0, selector=lambda n: False)
    with pytest.raises(ValueError, match="not a 2-D weight"):
        select_targets(params, selector=["head.bias"])
    with pytest.raises(ValueError, match="rank"):
        attach(params, rank=0, alpha=1.0)


def test_adapter_checkpoint_round_trip(tmp_path):
    _, params = _model(seed=6)
    adapters = attach(params, rank=2, alpha=4.0, seed=1)
    rng = np.random.default_rng(2)
    for ad in adapters.values():
        ad.B.data = (rng.standard_normal(ad.B.shape) * 0.02).astype(np.float32)
    p = tmp_path / "adapter.xhckpt"
    save_adapters(p, adapters, step=42)

    _, fresh = _model(seed=6)
    assert fresh["block0.attn.q.weight"].requires_grad
    loaded = load_adapters(p, fresh)
    assert set(loaded) == set(adapters)
    for name in adapters:
        assert np.array_equal(loaded[name].A.data, adapters[name].A.data)
        assert np.array_equal(loaded[name].B.data, adapters[name].B.data)
        assert loaded[name].rank == 2 and loaded[name].alpha == 4.0
        assert not fresh[name].requires_grad  # loading freezes the wrapped base


def test_load_adapters_error_paths(tmp_path):
    cfg, params = _model()
    adapters = attach(params, rank=2, alpha=4.0)
    p = tmp_path / "adapter.xhckpt"
    save_adapters(p, adapters)

    from robovid.model import save_model
    base_path = tmp_path / "base.xhckpt"
    save_model(base_path, cfg, params)
    with pytest.raises(ValueError, match="not an adapter checkpoint"):
        load_adapters(base_path, params)

    shrunk = {k: v for k, v in params.items() if k != "block0.attn.q.weight"}
    with pytest.raises(ValueError, match="base model lacks"):
        load_adapters(p, shrunk)

    bigger, big_params = _model()
    wrong = {n: Tensor(np.zeros((3, 3), dtype=np.float32)) for n in adapters}
    merged_params = dict(big_params)
    merged_params.update(wrong)
    with pytest.raises(ValueError, match="shapes"):
        load_adapters(p, merged_params)


def test_base_weights_bit_identical_after_100_steps():
    # the frozen-base guarantee, exercised through a real optimization loop
    cfg, params = _model(seed=2)
    adapters = attach(params, rank=2, alpha=4.0, seed=3)
    frozen_before = {n: params[n].data.copy() for n in adapters}

    all_named = dict(params)
    for t, ad in adapters.items():
        all_named[f"lora.{t}.A"] = ad.A
        all_named[f"lora.{t}.B"] = ad.B
    opt = OptimizerState(lr=5e-3, weight_decay=1e-2)
    rng = np.random.default_rng(11)
    cond, gen = random_grid(cfg, rng), random_grid(cfg, rng)
    target = Tensor(rng.standard_normal((gen.count, cfg.token_dim)).astype(np.float32))

    train = trainable(all_named)
    assert not any(n in adapters for n in train)
    for step in range(100):
        zero_grads(all_named)
        out = forward(params, cfg, cond, gen, 0.5, "Humanoid video", adapters=adapters)
        loss = mse(out, target)
        loss.backward()
        adamw_step(train, opt)
    for name, before in frozen_before.items():
        assert np.array_equal(params[name].data, before), f"{name} drifted"
    # while the adapters and glue actually moved
    assert any(ad.B.data.any() for ad in adapters.values())

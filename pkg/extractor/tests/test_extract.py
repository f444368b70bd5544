"""Extraction contract: valid bundles, exact matrices, reproducibility."""

import json

import numpy as np
import pytest
import torch
from transformers import AutoModel, AutoTokenizer

from lms3 import load_bundle
from lms3_extractor import (
    ExtractionConfig,
    config_from_provenance,
    extract,
)
from lms3_extractor.cli import main as cli_main
from conftest import HIDDEN_SIZE, NUM_LAYERS


def bundle_bytes(path):
    return {f.name: f.read_bytes() for f in sorted(path.iterdir())}


def test_bundle_passes_primary_validation(checkpoint, text_files, tmp_path):
    demos_path, tests_path = text_files
    out = extract(ExtractionConfig(model=str(checkpoint)), demos_path, tests_path,
                  tmp_path / "bundle")
    bundle, pool, tests = load_bundle(out)
    assert bundle.d == HIDDEN_SIZE
    assert bundle.d_prime == HIDDEN_SIZE
    assert len(pool) == 3 and len(tests) == 1
    assert pool.items[0].problem == "the sum of 3 and 4"

    provenance = json.loads(bundle.source)
    assert provenance["layer"] == NUM_LAYERS // 2
    assert provenance["pooling"] == "last_token"
    assert provenance["head_handling"] == "merged_all_heads"
    assert provenance["truncated"] == []

    # loading and re-writing through the primary reproduces every byte
    from lms3 import write_bundle

    rewritten = tmp_path / "rewritten"
    write_bundle(bundle, pool, tests, rewritten)
    assert bundle_bytes(rewritten) == bundle_bytes(out)


def test_projections_match_attention_linear_maps(checkpoint, text_files, tmp_path):
    # the exported matrices must reproduce the block's own q/k/v linear maps:
    # x^T w_kq y == (key of x) . (query of y), and w_v x == value of x
    demos_path, tests_path = text_files
    out = extract(ExtractionConfig(model=str(checkpoint), layer=1), demos_path,
                  tests_path, tmp_path / "bundle")
    bundle, _, _ = load_bundle(out)

    model = AutoModel.from_pretrained(checkpoint).double().eval()
    attn = model.h[1].attn
    d = HIDDEN_SIZE

    def qkv_linear(vec):
        with torch.no_grad():
            x = torch.tensor(vec, dtype=torch.float64)
            full = attn.c_attn(x) - attn.c_attn(torch.zeros(d, dtype=torch.float64))
        return (full[:d].numpy(), full[d:2 * d].numpy(), full[2 * d:].numpy())

    rng = np.random.default_rng(0)
    for _ in range(5):
        x, y = rng.standard_normal(d), rng.standard_normal(d)
        _, key_x, value_x = qkv_linear(x)
        query_y, _, _ = qkv_linear(y)
        assert x @ bundle.w_kq @ y == pytest.approx(float(key_x @ query_y), rel=1e-10)
        np.testing.assert_allclose(bundle.w_v @ x, value_x, rtol=1e-10, atol=1e-12)


def test_embeddings_match_direct_forward(checkpoint, text_files, tmp_path):
    demos_path, tests_path = text_files
    layer = 2
    out = extract(ExtractionConfig(model=str(checkpoint), layer=layer), demos_path,
                  tests_path, tmp_path / "bundle")
    _, pool, tests = load_bundle(out)

    model = AutoModel.from_pretrained(checkpoint).double().eval()
    tokenizer = AutoTokenizer.from_pretrained(checkpoint)

    def direct(text):
        ids = tokenizer(text, add_special_tokens=False)["input_ids"]
        with torch.no_grad():
            states = model(input_ids=torch.tensor([ids]),
                           output_hidden_states=True).hidden_states
        return states[layer][0, -1].numpy()

    np.testing.assert_allclose(
        pool.items[0].embedding,
        direct("the sum of 3 and 4\nthe answer is 7"), atol=1e-12)
    np.testing.assert_allclose(tests[0].embedding,
                               direct("the sum of 2 and 9"), atol=1e-12)


def test_rerun_is_byte_identical(checkpoint, text_files, tmp_path):
    demos_path, tests_path = text_files
    cfg = ExtractionConfig(model=str(checkpoint))
    a = extract(cfg, demos_path, tests_path, tmp_path / "a")
    b = extract(cfg, demos_path, tests_path, tmp_path / "b")
    assert bundle_bytes(a) == bundle_bytes(b)


def test_pooling_choice_changes_embeddings(checkpoint, text_files, tmp_path):
    demos_path, tests_path = text_files
    last = extract(ExtractionConfig(model=str(checkpoint), pooling="last_token"),
                   demos_path, tests_path, tmp_path / "last")
    mean = extract(ExtractionConfig(model=str(checkpoint), pooling="mean"),
                   demos_path, tests_path, tmp_path / "mean")
    load_bundle(last), load_bundle(mean)  # both valid
    assert ((last / "demo_embeddings.f64").read_bytes()
            != (mean / "demo_embeddings.f64").read_bytes())


def test_provenance_rerun_reproduces_bundle(checkpoint, text_files, tmp_path):
    demos_path, tests_path = text_files
    first = extract(ExtractionConfig(model=str(checkpoint), layer=3, pooling="mean",
                                     max_length=16),
                    demos_path, tests_path, tmp_path / "first")
    bundle, _, _ = load_bundle(first)
    replayed_cfg = config_from_provenance(bundle.source)
    second = extract(replayed_cfg, demos_path, tests_path, tmp_path / "second")
    assert bundle_bytes(first) == bundle_bytes(second)


def test_layer_out_of_range(checkpoint, text_files, tmp_path):
    demos_path, tests_path = text_files
    with pytest.raises(ValueError, match="out of range"):
        extract(ExtractionConfig(model=str(checkpoint), layer=NUM_LAYERS),
                demos_path, tests_path, tmp_path / "bundle")


def test_bad_pooling_rejected():
    with pytest.raises(ValueError, match="pooling"):
        ExtractionConfig(model="x", pooling="first_token")


def test_truncation_recorded_in_provenance(checkpoint, text_files, tmp_path):
    demos_path, tests_path = text_files
    out = extract(ExtractionConfig(model=str(checkpoint), max_length=3),
                  demos_path, tests_path, tmp_path / "bundle")
    bundle, _, _ = load_bundle(out)
    provenance = json.loads(bundle.source)
    assert provenance["truncated"] == ["d1", "d2", "d3", "t1"]


def test_cli_end_to_end(checkpoint, text_files, tmp_path, capsys):
    demos_path, tests_path = text_files
    out_dir = tmp_path / "bundle"
    code = cli_main(["--model", str(checkpoint), "--demos", str(demos_path),
                     "--tests", str(tests_path), "--out", str(out_dir),
                     "--layer", "1", "--pooling", "mean"])
    assert code == 0
    bundle, pool, tests = load_bundle(out_dir)
    assert len(pool) == 3 and len(tests) == 1
    assert json.loads(bundle.source)["pooling"] == "mean"


def test_cli_reports_errors(checkpoint, text_files, tmp_path):
    demos_path, tests_path = text_files
    code = cli_main(["--model", str(checkpoint), "--demos", str(demos_path),
                     "--tests", str(tests_path), "--out", str(tmp_path / "b"),
                     "--layer", "99"])
    assert code == 2

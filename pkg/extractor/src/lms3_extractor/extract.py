"""Pull embeddings and attention projections out of a transformer checkpoint.

For one chosen decoder block, the key/query/value projection matrices are
exported in column-vector convention (full pre-head-split matrices, heads
never averaged), with the key and query maps folded into a single merged
matrix: w_kq = W_K^T @ W_Q, so that `(key proj of x) . (query proj of y)
== x^T @ w_kq @ y`.  Projection biases and positional rotations are not
part of the bilinear form and are not exported.

Text embeddings are pooled from the residual stream entering that same
block: a demonstration is embedded over its problem and solution joined
by a newline, a test item over its problem only.  Everything runs in
float64 on a single CPU thread, so the same configuration always writes
byte-identical array files.  The full configuration is serialized into
the bundle's provenance string and suffices to reproduce the extraction.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from transformers import AutoModel, AutoTokenizer

from lms3 import Demonstration, DemonstrationPool, ProjectionBundle, TestItem, write_bundle

TOOL_VERSION = "0.1.0"

POOLING_LAST_TOKEN = "last_token"
POOLING_MEAN = "mean"
POOLINGS = (POOLING_LAST_TOKEN, POOLING_MEAN)

HEAD_HANDLING = "merged_all_heads"
PROBLEM_SOLUTION_JOIN = "\n"


class UnsupportedArchitectureError(ValueError):
    """The checkpoint's attention layout is not one this tool understands."""


@dataclass(frozen=True)
class ExtractionConfig:
    model: str                      # checkpoint path or identifier
    layer: int | None = None        # decoder block index; None = middle block
    pooling: str = POOLING_LAST_TOKEN
    max_length: int = 512
    device: str = "cpu"

    def __post_init__(self):
        if self.pooling not in POOLINGS:
            raise ValueError(f"pooling must be one of {POOLINGS}, got {self.pooling!r}")
        if self.max_length < 1:
            raise ValueError(f"max_length must be positive, got {self.max_length}")


def extract(config: ExtractionConfig, demos_path, tests_path, out_path) -> Path:
    """Embed all texts, export the chosen block's projections, write a bundle."""
    demos = _read_records(demos_path, ("id", "problem", "solution"))
    tests = _read_records(tests_path, ("id", "problem"))

    tokenizer = AutoTokenizer.from_pretrained(config.model)
    model = AutoModel.from_pretrained(config.model)
    model = model.double().eval().to(config.device)

    blocks = _decoder_blocks(model)
    layer = config.layer if config.layer is not None else len(blocks) // 2
    if not (0 <= layer < len(blocks)):
        raise ValueError(
            f"layer {layer} out of range for a model with {len(blocks)} blocks")

    w_kq, w_v = _projections(blocks[layer])

    truncated: list[str] = []
    previous_threads = torch.get_num_threads()
    torch.set_num_threads(1)  # fixed reduction order keeps reruns byte-identical
    try:
        with torch.no_grad():
            demo_embs = [
                _embed(model, tokenizer, _demo_text(rec), layer, config, truncated, rec["id"])
                for rec in demos
            ]
            test_embs = [
                _embed(model, tokenizer, rec["problem"], layer, config, truncated, rec["id"])
                for rec in tests
            ]
    finally:
        torch.set_num_threads(previous_threads)

    provenance = {
        "tool": "lms3-extractor",
        "tool_version": TOOL_VERSION,
        "model": str(config.model),
        "layer": layer,
        "pooling": config.pooling,
        "max_length": config.max_length,
        "head_handling": HEAD_HANDLING,
        "hidden_state": "residual_stream_into_block",
        "join": PROBLEM_SOLUTION_JOIN,
        "dtype": "float64",
        "truncated": sorted(truncated),
    }

    bundle = ProjectionBundle(w_kq=w_kq, w_v=w_v,
                              source=json.dumps(provenance, sort_keys=True))
    pool = DemonstrationPool(
        items=tuple(
            Demonstration(id=rec["id"], problem=rec["problem"],
                          solution=rec["solution"], embedding=emb)
            for rec, emb in zip(demos, demo_embs)),
        d=bundle.d)
    test_items = [
        TestItem(id=rec["id"], problem=rec["problem"], embedding=emb)
        for rec, emb in zip(tests, test_embs)
    ]
    out = Path(out_path)
    write_bundle(bundle, pool, test_items, out)
    return out


def config_from_provenance(source: str) -> ExtractionConfig:
    """Rebuild the configuration recorded in a bundle's provenance string."""
    fields = json.loads(source)
    return ExtractionConfig(model=fields["model"], layer=fields["layer"],
                            pooling=fields["pooling"],
                            max_length=fields["max_length"])


def _demo_text(record: dict) -> str:
    return record["problem"] + PROBLEM_SOLUTION_JOIN + record["solution"]


def _read_records(path, keys) -> list[dict]:
    records = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}: invalid JSON at line {lineno} ({exc})") from exc
            for key in keys:
                if key not in rec:
                    raise ValueError(f"{path}: line {lineno} missing key {key!r}")
            records.append(rec)
    return records


def _decoder_blocks(model) -> list:
    """Locate the list of decoder blocks across common layouts."""
    roots = [model]
    for attr in ("transformer", "model"):
        if hasattr(model, attr):
            roots.append(getattr(model, attr))
    for root in roots:
        for attr in ("h", "layers", "blocks"):
            blocks = getattr(root, attr, None)
            if blocks is not None and len(blocks) > 0:
                return list(blocks)
    raise UnsupportedArchitectureError(
        f"could not find decoder blocks on {type(model).__name__}")


def _projections(block) -> tuple[np.ndarray, np.ndarray]:
    """Column-convention (merged key-query, value) matrices of one block."""
    attn = getattr(block, "attn", None) or getattr(block, "self_attn", None)
    if attn is None:
        raise UnsupportedArchitectureError(
            f"block {type(block).__name__} has no attn/self_attn module")

    if hasattr(attn, "c_attn"):
        # fused qkv as x @ W + b with W of shape (d, 3d); columns are q, k, v
        weight = attn.c_attn.weight.detach().double().cpu().numpy()
        d = weight.shape[0]
        if weight.shape[1] != 3 * d:
            raise UnsupportedArchitectureError(
                f"fused qkv weight has shape {weight.shape}, expected (d, 3d)")
        wq_rows, wk_rows, wv_rows = weight[:, :d], weight[:, d:2 * d], weight[:, 2 * d:]
        w_q, w_k, w_v = wq_rows.T, wk_rows.T, wv_rows.T  # to column convention
    elif all(hasattr(attn, name) for name in ("q_proj", "k_proj", "v_proj")):
        w_q = attn.q_proj.weight.detach().double().cpu().numpy()
        w_k = attn.k_proj.weight.detach().double().cpu().numpy()
        w_v = attn.v_proj.weight.detach().double().cpu().numpy()
    else:
        raise UnsupportedArchitectureError(
            f"attention module {type(attn).__name__} exposes neither c_attn "
            f"nor q_proj/k_proj/v_proj")

    if w_k.shape != w_q.shape:
        raise UnsupportedArchitectureError(
            f"key and query projections differ in shape ({w_k.shape} vs "
            f"{w_q.shape}); grouped-query checkpoints are not supported")
    return w_k.T @ w_q, w_v


def _embed(model, tokenizer, text: str, layer: int, config: ExtractionConfig,
           truncated: list[str], record_id: str) -> np.ndarray:
    ids = tokenizer(text, add_special_tokens=False)["input_ids"]
    if not ids:
        raise ValueError(f"record {record_id!r}: text produced no tokens")
    if len(ids) > config.max_length:
        ids = ids[:config.max_length]
        truncated.append(record_id)
    input_ids = torch.tensor([ids], dtype=torch.long, device=config.device)
    states = model(input_ids=input_ids, output_hidden_states=True).hidden_states
    hidden = states[layer][0]  # residual stream entering the chosen block
    if config.pooling == POOLING_LAST_TOKEN:
        pooled = hidden[-1]
    else:
        pooled = hidden.mean(dim=0)
    return pooled.double().cpu().numpy().astype(np.float64)

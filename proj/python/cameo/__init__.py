"""Streaming event narration with episodic memory and confabulation-aware attention."""

import json

from ._cameo import (
    bleu,
    credibility_weight,
    generate_corpus,
    rouge_l,
    run_cli,
    semantic_entropy,
    sts_proxy,
)

__all__ = [
    "bleu",
    "credibility_weight",
    "default_config",
    "generate_corpus",
    "rouge_l",
    "run_cli",
    "semantic_entropy",
    "sts_proxy",
]


def default_config() -> dict:
    """The full default experiment configuration."""
    code, out, err = run_cli(["--print-config"])
    if code != 0:
        raise RuntimeError(err)
    return json.loads(out)

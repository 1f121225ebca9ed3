"""Seeded synthetic document streams with a heavy length tail.

Lengths mix a log-normal body (most documents are short) with a Pareto
tail capped at the context window, so a small but steady fraction of
documents reaches a large share of the window and the very longest sit
exactly at the cap. Global batches are filled to an exact token target;
sampled documents that overflow the remaining space are deferred to the
next batch and any residual gap is closed with a filler document, so
every batch totals exactly tokens_per_global_batch.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .workload import Document

_FAMILIES = ("mixture", "lognormal", "bounded_pareto")


@dataclass(frozen=True)
class SyntheticSpec:
    """Parameters of the synthetic length distribution.

    tail_scale is the Pareto scale as a fraction of the context window;
    draws above the window are truncated to it (the cap keeps a visible
    mass of full-window documents).
    """

    context_window: int
    tokens_per_global_batch: int
    family: str = "mixture"
    body_median: float = 2000.0
    body_sigma: float = 0.25
    tail_fraction: float = 0.035
    tail_scale: float = 0.6
    pareto_shape: float = 1.1
    min_length: int = 16

    def __post_init__(self):
        if self.family not in _FAMILIES:
            raise ConfigError(f"family must be one of {_FAMILIES}")
        if self.context_window < 1:
            raise ConfigError("context_window must be >= 1")
        if self.tokens_per_global_batch < self.context_window:
            raise ConfigError(
                "tokens_per_global_batch must be >= context_window")
        if not 0.0 <= self.tail_fraction <= 1.0:
            raise ConfigError("tail_fraction must be in [0, 1]")
        if not 0.0 < self.tail_scale <= 1.0:
            raise ConfigError("tail_scale must be in (0, 1]")
        if self.pareto_shape <= 0 or self.body_sigma <= 0:
            raise ConfigError("pareto_shape and body_sigma must be > 0")
        if not 1 <= self.min_length <= self.context_window:
            raise ConfigError("min_length must be in [1, context_window]")

    @classmethod
    def from_dict(cls, data: dict) -> "SyntheticSpec":
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown synthetic keys: {sorted(unknown)}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc


def _sample_length(spec: SyntheticSpec, rng: np.random.Generator) -> int:
    if spec.family == "mixture":
        tail = rng.random() < spec.tail_fraction
    else:
        tail = spec.family == "bounded_pareto"
    if tail:
        u = rng.random()
        x = spec.tail_scale * spec.context_window * (1.0 - u) ** (-1.0 / spec.pareto_shape)
    else:
        x = rng.lognormal(math.log(spec.body_median), spec.body_sigma)
    return max(spec.min_length, min(spec.context_window, int(round(x))))


def generate_synthetic_stream(spec: SyntheticSpec, seed: int,
                              n_batches: int) -> list[list[Document]]:
    """Deterministic global batches, each exactly the configured size."""
    rng = np.random.default_rng(seed)
    batches: list[list[Document]] = []
    deferred: deque[int] = deque()
    next_id = 0

    def emit(batch: list[Document], length: int, arrival: int) -> None:
        nonlocal next_id
        batch.append(Document(next_id, length, arrival))
        next_id += 1

    for b in range(n_batches):
        batch: list[Document] = []
        used = 0
        while used < spec.tokens_per_global_batch:
            space = spec.tokens_per_global_batch - used
            if space < spec.min_length:
                emit(batch, space, b)
                break
            if deferred and deferred[0] <= space:
                length = deferred.popleft()
            else:
                length = None
                for _ in range(20):
                    cand = _sample_length(spec, rng)
                    if cand <= space:
                        length = cand
                        break
                    deferred.append(cand)
                if length is None:
                    emit(batch, space, b)
                    break
            emit(batch, length, b)
            used += length
        batches.append(batch)
    return batches

"""The four compared agents: which extractor they use and how objects are sampled in training."""

from __future__ import annotations

from dataclasses import dataclass

from ..sampling import SamplerMode


@dataclass(frozen=True)
class AgentVariant:
    name: str
    extractor: str
    sampler: SamplerMode


VARIANTS = {
    "vpm": AgentVariant("vpm", "vpm", SamplerMode.UNIFORM),
    "stacked": AgentVariant("stacked", "stacked", SamplerMode.UNIFORM),
    "ugru": AgentVariant("ugru", "gru", SamplerMode.UNIFORM),
    "egru": AgentVariant("egru", "gru", SamplerMode.EXPONENTIAL),
}


def get_variant(name: str) -> AgentVariant:
    try:
        return VARIANTS[name]
    except KeyError:
        raise ValueError(f"unknown variant {name!r}; choose from {sorted(VARIANTS)}") from None

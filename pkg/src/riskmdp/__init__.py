"""Risk-averse total-reward optimization on MDPs with deviation-penalized expectations."""
from .model import (
    Chain,
    CounterScheduler,
    FiniteMemoryDeterministic,
    Mdp,
    MemorylessRandomized,
    RewardBasedRandomized,
    RewardDistribution,
    induce_chain,
    parse_model,
    serialize,
    validate,
)
from .preprocess import NormalizedMdp, mec_decomposition, normalize

__version__ = "0.1.0"

__all__ = [
    "Chain",
    "CounterScheduler",
    "FiniteMemoryDeterministic",
    "Mdp",
    "MemorylessRandomized",
    "NormalizedMdp",
    "RewardBasedRandomized",
    "RewardDistribution",
    "induce_chain",
    "mec_decomposition",
    "normalize",
    "parse_model",
    "serialize",
    "validate",
]

"""
Deterministic seed partitioning.

A single master seed drives a run. Independent streams for parameter
initialisation, the network input, per-iteration input perturbations and
synthetic corruption are spawned from it, so toggling one feature never
shifts the random numbers another feature sees.
"""
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class RunSeeds:
    """Seeds derived from one master seed."""
    init: int
    input: int
    perturb: int
    corruption: int


def derive_seeds(master_seed: int) -> RunSeeds:
    """
    Split a master seed into independent sub-seeds.

    Args:
        master_seed: Non-negative integer seed of the run

    Returns:
        RunSeeds: one 63-bit seed per stream
    """
    if master_seed < 0:
        raise ValueError(f"Seed must be non-negative, got {master_seed}")
    children = np.random.SeedSequence(master_seed).spawn(4)
    init, input_, perturb, corruption = (
        int(child.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1)) for child in children
    )
    return RunSeeds(init=init, input=input_, perturb=perturb, corruption=corruption)


def make_rng(seed: int) -> np.random.Generator:
    """Seeded PCG64 generator."""
    return np.random.default_rng(seed)


def iteration_rng(seed: int, iteration: int) -> np.random.Generator:
    """Generator keyed by (seed, iteration); draws differ across iterations."""
    return np.random.default_rng([seed, iteration])

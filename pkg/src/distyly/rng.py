"""Deterministic per-consumer random streams.

Every stochastic routine derives its generators as
``SeedSequence(master_seed, spawn_key=(tag, *indices))`` with a tag unique
to the consumer.  Streams therefore depend only on the master seed and the
logical index of the draw (run number, environment number, ...), never on
worker count or scheduling order.
"""

import numpy as np

# Stream tags.  Never renumber: reproducibility of published runs depends
# on these values.
TAG_RUN = 1        # simulate_extinction, per run
TAG_COUPLED = 2    # coupled_monotonicity_trial, per pair
TAG_DECAY = 3      # decay_experiment, per (mu index, run)
TAG_ENV = 4        # quenched environment sign streams, per environment
TAG_TRAJ = 5       # quenched trajectories, per (environment, run)
TAG_MARTINGALE = 6
TAG_HITTING = 7    # hitting_bound_checks, per (check, run)
TAG_BEHAVIOR = 8   # standard_behavior_check, per run


def stream(master_seed: int, *key: int) -> np.random.Generator:
    """A PCG64 generator for the given (tag, indices...) spawn key."""
    ss = np.random.SeedSequence(master_seed, spawn_key=tuple(key))
    return np.random.Generator(np.random.PCG64(ss))

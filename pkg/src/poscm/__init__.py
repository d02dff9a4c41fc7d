"""Simulation and identification toolkit for structural causal models whose
graphs are themselves generated by latent contexts.

Highlights: ordered two-phase world generation with addressed exogenous
randomness (exact paired-world replay), a four-tier intervention vocabulary
(context/value, node/edge-channel), message-structured mechanisms with
fixed-dimension sum-of-univariate forms, probing-based structure readout and
kernel/message identification procedures, two-sample statistics (KS, MMD),
and a layered graded-synapse network for the experiment protocols.
"""

__version__ = "0.1.0"

from . import (  # noqa: F401
    batch,
    core,
    exact,
    identify,
    interventions,
    kernels,
    layered,
    mechanisms,
    messages,
    models,
    modelspec,
    rng,
    stats,
)

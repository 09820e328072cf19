"""Multi-treatment causal representation learning with adaptive balancing.

Trains compressed representations under three balancing strategies
(pairwise MMD, one-vs-all MMD, HSIC treatment aggregation), selects the
balancing weight by minimizing an empirical profile bound, and ships the
synthetic generators and evaluation tooling for the desk-scale experiments.
"""

__version__ = "0.1.0"

"""Directed polymers in random environments on strongly recurrent graphs.

Submodules: graphs (gasket / line / custom builders), environment
(counter-based disorder), walk (exact heat kernels and dimension fits),
polymer (log-domain partition DP), free_energy (quenched/annealed gap
scans), coarse_grain (block-scale contraction and percolation
diagnostics), cli (experiment runner).
"""

__version__ = "0.1.0"

"""Desk-scale laboratory for N-agent ad hoc teamwork.

Subpackages:
  nn         minimal differentiable-computation layer (dense/LN/GRU/Adam)
  kernels    fused hot kernels, compiled extension with numpy fallback
  envs       bit matrix game and predator-prey environments
  teams      policy registry and per-episode team sampling
  poam       the POAM learner and its baseline/ablation variants
  evaluation cross-play / self-play / OOD / diagnostic protocols
  cli        batch front door (train / eval / lemmas / registry)
"""

__version__ = "0.1.0"

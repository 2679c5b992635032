"""
Contains the numerical library: scenario & channel generation, performance metrics, baseline beamformers, the
per-realization energy efficiency optimizer and the large-system (deterministic equivalent) optimizer.
"""

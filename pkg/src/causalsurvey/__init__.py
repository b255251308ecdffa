"""Influence-function estimation toolkit for survey-based causal analyses:
average effects, two-mediator interventional decompositions, incremental
propensity interventions, sensitivity bounds, and honest subgroup discovery,
all validated against brute-force oracles on synthetic data."""

__version__ = "0.1.0"

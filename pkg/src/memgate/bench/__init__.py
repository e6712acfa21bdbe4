"""Deterministic smoke-scale benchmark: dataset generation, experiment suites, reports."""

"""Experiment harness: configuration, runs, sweeps, metrics and outputs."""

"""Benchmark toolkit for counterfactual explanation (recourse) methods on tabular classifiers."""

__version__ = "0.1.0"

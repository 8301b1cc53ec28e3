"""Pydantic models used across latentsft.

Submodules:
    types: literal aliases shared by the models.
    config: layered run configuration.
    data: problems, multi-chain problems and the corpus manifest.
    trace: reasoning traces written by inference.
    reports: evaluation, analysis and acceptance reports.
"""

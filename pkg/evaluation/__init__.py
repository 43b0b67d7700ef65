"""Metrics, attention-weight analysis, dataset-size study and report files."""

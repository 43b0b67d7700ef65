"""Synthetic battery fleets for desk-scale runs of the full pipeline."""

"""Battery telemetry ingestion, normalization and moving-frame construction."""

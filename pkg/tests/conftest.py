"""Makes tests/ importable (oracles.py) when pytest runs from the repo root."""

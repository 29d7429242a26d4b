"""
Test suite for the MAR confidence band toolkit.

Test categories:
- Unit tests: Kernels, estimators, bandwidth selection, bands, file I/O
- Integration tests: CLI output against direct library calls
- Slow tests: Coverage reproductions with 300 replications

Run tests with:
    pytest tests/ -v -m "not slow" --cov=src --cov-report=term-missing
"""

"""FastAPI service over the derived result files."""

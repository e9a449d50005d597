"""Temperature-based re-reference interval prediction: cache simulation and profile tooling."""

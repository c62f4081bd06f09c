"""Rolling-horizon market simulation, synthetic data, reports and CLI."""

"""Benchmark drivers: hysteresis, energy crossover, switching dynamics,
chiral-texture relaxation, integrator cost accounting, dataset generation,
surrogate checks, and plot emission."""

"""
The experiments: the plans, the concurrent scheduling of the cells,
the ablation grids and sweeps, and the deterministic reports.
"""

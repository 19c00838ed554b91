"""
Quality and rate metrics, and the Bjøntegaard comparison of the RD curves.

All the functions are pure and can be used from any thread.
"""

"""
The videos: the synthetic clips with known motion, and the raw planar files.
"""

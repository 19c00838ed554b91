"""
Persistence of the lab's state: the model checkpoints and the atomic file writes.

The bitstreams are written through the same atomic writes,
but their format belongs to `epac.bitstream`.
"""

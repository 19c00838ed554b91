"""
The online updating of the encoder at inference time, per frame.

The decoder never changes: only a private copy of the encoder side
(or the latents themselves) is optimised for the frame being coded.
"""

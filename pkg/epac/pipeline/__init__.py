"""
The coding of whole sequences: where the codec, the online updating,
and the bitstream meet.
"""

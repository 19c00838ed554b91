"""
The actual bytes: the quantized frequency tables, the range coder,
and the versioned container of the coded sequences.
"""

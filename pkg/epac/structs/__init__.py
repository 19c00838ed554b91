"""
Plain data of the lab: the settings, the frames, the parameter collections,
and the roots of the errors.

Everything here is purely data-manipulative and computational.
No coding, no training, no file i/o happens here.
"""

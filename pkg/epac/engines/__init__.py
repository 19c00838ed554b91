"""
Engines are things that run around the experiments to help them,
but are not part of them: e.g. the logging with the per-clip context.
"""

"""
The offline training of the codec: the single-frame stage and the multi-frame
(error-propagation-aware) stage, and the held-out evaluation of both.
"""

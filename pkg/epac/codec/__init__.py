"""
The miniature hybrid motion-compensated codec.

The networks (`networks`), the quantization and the entropy models (`entropy`),
the rate-distortion terms (`distortion`), and the coding of the individual
frames (`coding`). The models are immutable (`models.CodecModel`).

The range coding of the latents into the actual bytes is in `epac.bitstream`.
"""

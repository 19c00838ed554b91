"""
The main lab module for all the exported functions & classes.
"""

# Unlike all other places, where we import other modules and refer
# the functions via the modules, this is the lab's top-level interface,
# as it is seen by the users. So, we export the individual functions.

from epac.bitstream.containers import (
    Bitstream,
    IncompatibleModelError,
    read_sequence,
    write_sequence,
)
from epac.bitstream.rangecoding import (
    ParseError,
    range_decode,
    range_encode,
)
from epac.codec.coding import (
    ProvenanceError,
    decode_frame_i,
    decode_frame_p,
    encode_frame_i,
    encode_frame_p,
)
from epac.codec.models import (
    CodecModel,
    create_model,
)
from epac.data.rawvideo import (
    RawVideoHeader,
    load_raw,
    save_raw,
)
from epac.data.synthesis import (
    SynthSpec,
    synth_dataset,
)
from epac.engines.logging import (
    configure,
    ContextLogger,
)
from epac.harness.experiments import (
    ablate,
    fig2_trace,
    gop_sweep,
    t_sweep,
)
from epac.harness.plans import (
    ExperimentPlan,
    load_plan,
)
from epac.metrics.bjontegaard import (
    RDCurve,
    bd_psnr,
    bd_rate,
)
from epac.metrics.quality import (
    RDPoint,
    ms_ssim,
    psnr,
)
from epac.online.updating import (
    DecoderMutationError,
    online_update,
)
from epac.online.variants import (
    Variant,
)
from epac.pipeline.sequences import (
    decode_sequence,
    encode_sequence,
)
from epac.storage.checkpoints import (
    CheckpointError,
    load_model,
    save_model,
)
from epac.structs.configuration import (
    LabSettings,
    CodingSettings,
    TrainingSettings,
    OnlineSettings,
    SynthesisSettings,
    ExecutionSettings,
    DebuggingSettings,
)
from epac.structs.errors import (
    LabError,
    DataError,
    ContractViolation,
    ConfigError,
    NonFiniteError,
)
from epac.structs.frames import (
    FrameBuffer,
)
from epac.training.stages import (
    train_epa,
    train_single_frame,
)

__all__ = [
    'Bitstream', 'IncompatibleModelError', 'read_sequence', 'write_sequence',
    'ParseError', 'range_decode', 'range_encode',
    'ProvenanceError', 'decode_frame_i', 'decode_frame_p', 'encode_frame_i', 'encode_frame_p',
    'CodecModel', 'create_model',
    'RawVideoHeader', 'load_raw', 'save_raw',
    'SynthSpec', 'synth_dataset',
    'configure', 'ContextLogger',
    'ablate', 'fig2_trace', 'gop_sweep', 't_sweep',
    'ExperimentPlan', 'load_plan',
    'RDCurve', 'bd_psnr', 'bd_rate',
    'RDPoint', 'ms_ssim', 'psnr',
    'DecoderMutationError', 'online_update',
    'Variant',
    'decode_sequence', 'encode_sequence',
    'CheckpointError', 'load_model', 'save_model',
    'LabSettings', 'CodingSettings', 'TrainingSettings', 'OnlineSettings',
    'SynthesisSettings', 'ExecutionSettings', 'DebuggingSettings',
    'LabError', 'DataError', 'ContractViolation', 'ConfigError', 'NonFiniteError',
    'FrameBuffer',
    'train_epa', 'train_single_frame',
]

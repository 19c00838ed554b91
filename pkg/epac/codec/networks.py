"""
The networks of the hybrid motion-compensated codec, at the desk scale.

The encoder side: the optical flow net, the motion vector encoder,
the residual encoder (and the intra encoder for the I-frames).
The decoder side: the motion vector decoder, the motion compensation net,
the residual decoder (and the intra decoder).

All down-/up-sampling is by 4 (two stride-2 convolutions, two nearest
upsamplings), so the latents are ``[1, C, H/4, W/4]``. The final layers
of the decoders, of the flow net, and of the compensation refinement start
at zero: the untrained codec predicts the reference frame as is.
"""
import dataclasses
from typing import Dict, Iterator, Tuple

import numpy as np

from epac.autodiff import graphs
from epac.autodiff import ops
from epac.codec.layers import Conv
from epac.structs import params

SLOPE = 0.1
INITIAL_RAW_SCALE = 0.5413  # softplus(0.5413) ≈ 1.0

ENCODER, DECODER, ENTROPY = params.Side.ENCODER, params.Side.DECODER, params.Side.ENTROPY


@dataclasses.dataclass(frozen=True)
class Architecture:
    channels: int = 1
    hidden: int = 32
    flow_hidden: int = 16
    refine_hidden: int = 16
    motion_channels: int = 8
    residual_channels: int = 16
    intra_channels: int = 16

    def latent_channels(self, kind: str) -> int:
        return {
            'motion': self.motion_channels,
            'residual': self.residual_channels,
            'intra': self.intra_channels,
        }[kind]


@dataclasses.dataclass(frozen=True)
class Layers:
    """ All layers of an architecture, grouped by the network. """
    flow_net: Tuple[Conv, ...]
    mv_encoder: Tuple[Conv, ...]
    mv_decoder: Tuple[Conv, ...]
    motion_comp: Tuple[Conv, ...]
    residual_encoder: Tuple[Conv, ...]
    residual_decoder: Tuple[Conv, ...]
    intra_encoder: Tuple[Conv, ...]
    intra_decoder: Tuple[Conv, ...]

    def all(self) -> Iterator[Conv]:
        for field in dataclasses.fields(self):
            yield from getattr(self, field.name)


def layers(arch: Architecture) -> Layers:
    c, hid, fh, rh = arch.channels, arch.hidden, arch.flow_hidden, arch.refine_hidden
    return Layers(
        flow_net=(
            Conv('flow_net.conv1', ENCODER, 2 * c, fh),
            Conv('flow_net.conv2', ENCODER, fh, fh),
            Conv('flow_net.conv3', ENCODER, fh, fh),
            Conv('flow_net.conv4', ENCODER, fh, 2, zero_init=True),
        ),
        mv_encoder=(
            Conv('mv_encoder.conv1', ENCODER, 2, hid, stride=2),
            Conv('mv_encoder.conv2', ENCODER, hid, arch.motion_channels, stride=2),
        ),
        mv_decoder=(
            Conv('mv_decoder.conv1', DECODER, arch.motion_channels, hid),
            Conv('mv_decoder.conv2', DECODER, hid, 2, zero_init=True),
        ),
        motion_comp=(
            Conv('motion_comp.conv1', DECODER, 2 * c + 2, rh),
            Conv('motion_comp.conv2', DECODER, rh, c, zero_init=True),
        ),
        residual_encoder=(
            Conv('residual_encoder.conv1', ENCODER, c, hid, stride=2),
            Conv('residual_encoder.conv2', ENCODER, hid, arch.residual_channels, stride=2),
        ),
        residual_decoder=(
            Conv('residual_decoder.conv1', DECODER, arch.residual_channels, hid),
            Conv('residual_decoder.conv2', DECODER, hid, c, zero_init=True),
        ),
        intra_encoder=(
            Conv('intra_encoder.conv1', ENCODER, c, hid, stride=2),
            Conv('intra_encoder.conv2', ENCODER, hid, arch.intra_channels, stride=2),
        ),
        intra_decoder=(
            Conv('intra_decoder.conv1', DECODER, arch.intra_channels, hid),
            Conv('intra_decoder.conv2', DECODER, hid, c, zero_init=True),
        ),
    )


def last_layers(arch: Architecture) -> Tuple[Conv, ...]:
    """ The final layers of the motion and residual encoders. """
    net = layers(arch)
    return net.mv_encoder[-1], net.residual_encoder[-1]


def is_intra(name: str) -> bool:
    return name.startswith(('intra_encoder.', 'intra_decoder.', 'entropy.intra.'))


def initial_params(arch: Architecture, rng: np.random.Generator, *, zero_final: bool = True) -> params.ParamSet:
    values: Dict[str, np.ndarray] = {}
    sides: Dict[str, params.Side] = {}
    for conv in layers(arch).all():
        for name, value in conv.initial(rng, zero_final=zero_final).items():
            values[name] = value
            sides[name] = conv.side
    for kind in ('motion', 'residual', 'intra'):
        channels = arch.latent_channels(kind)
        values[f'entropy.{kind}.loc'] = np.zeros(channels)
        values[f'entropy.{kind}.raw_scale'] = np.full(channels, INITIAL_RAW_SCALE)
        sides[f'entropy.{kind}.loc'] = ENTROPY
        sides[f'entropy.{kind}.raw_scale'] = ENTROPY
    return params.ParamSet(values, sides)


def _chain(bound: graphs.Bound, convs: Tuple[Conv, ...], x: graphs.Tensor) -> graphs.Tensor:
    for conv in convs[:-1]:
        x = ops.leaky_relu(conv(bound, x), SLOPE)
    return convs[-1](bound, x)


def _decode(bound: graphs.Bound, convs: Tuple[Conv, ...], latent: graphs.Tensor) -> graphs.Tensor:
    first, last = convs
    x = ops.leaky_relu(first(bound, ops.upsample2x_nearest(latent)), SLOPE)
    return last(bound, ops.upsample2x_nearest(x))


def flow_net(bound: graphs.Bound, net: Layers, x: graphs.Tensor, ref: graphs.Tensor) -> graphs.Tensor:
    return _chain(bound, net.flow_net, ops.concat([x, ref]))


def mv_encoder(bound: graphs.Bound, net: Layers, flow: graphs.Tensor) -> graphs.Tensor:
    return _chain(bound, net.mv_encoder, flow)


def mv_decoder(bound: graphs.Bound, net: Layers, latent: graphs.Tensor) -> graphs.Tensor:
    return _decode(bound, net.mv_decoder, latent)


def motion_comp(bound: graphs.Bound, net: Layers, ref: graphs.Tensor, flow: graphs.Tensor) -> graphs.Tensor:
    warped = ops.bilinear_warp(ref, flow)
    refinement = _chain(bound, net.motion_comp, ops.concat([warped, ref, flow]))
    return ops.clamp01(warped + refinement)


def residual_encoder(bound: graphs.Bound, net: Layers, residual: graphs.Tensor) -> graphs.Tensor:
    return _chain(bound, net.residual_encoder, residual)


def residual_decoder(bound: graphs.Bound, net: Layers, latent: graphs.Tensor) -> graphs.Tensor:
    return _decode(bound, net.residual_decoder, latent)


def intra_encoder(bound: graphs.Bound, net: Layers, x: graphs.Tensor) -> graphs.Tensor:
    return _chain(bound, net.intra_encoder, x - 0.5)


def intra_decoder(bound: graphs.Bound, net: Layers, latent: graphs.Tensor) -> graphs.Tensor:
    return ops.clamp01(_decode(bound, net.intra_decoder, latent) + 0.5)

from .losses import log_mel_tensor, reconstruction_loss, reconstruction_terms
from .model import FULL_SCALE_CODEC, Codec, CodecConfig, decode, encode, map_boundaries, pad_to_ratio
from .stream import StreamFormatError, TokenStream, read_stream, write_stream
from .train import CodecTrainResult, heldout_loss, train_codec

__all__ = [
    "Codec", "CodecConfig", "CodecTrainResult", "FULL_SCALE_CODEC", "StreamFormatError", "TokenStream",
    "decode", "encode", "heldout_loss", "log_mel_tensor", "map_boundaries", "pad_to_ratio",
    "read_stream", "reconstruction_loss", "reconstruction_terms", "train_codec", "write_stream",
]

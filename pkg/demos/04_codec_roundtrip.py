"""Encode a waveform to a variable-rate token stream and decode it back.

A small codec trains for a handful of steps so the script finishes in well under a minute.
The tokens are real; the reconstruction is rough until the codec sees many more steps.
"""
import tempfile
from pathlib import Path

from distok.codec import CodecConfig, decode, encode, read_stream, train_codec, write_stream
from distok.corpus import load_audio, make_tone_corpus, read_manifest
from distok.detector import DetectorConfig, train_detector
from distok.evalkit import mel_error, stoi, stream_bps, stream_tkr
from distok.quant import QuantizerSpec

work = Path(tempfile.mkdtemp(prefix="distok-demo-"))
manifest, _ = make_tone_corpus(work / "tones", 6, seed=1)

detector = train_detector(manifest, DetectorConfig(distance=3), steps=20, seed=0).model
cfg = CodecConfig(base_channels=8, latent_dim=32, quantizer=QuantizerSpec("gsq_m2o", 16, 4, 24))
res = train_codec(manifest, detector, cfg, steps=30, seed=0)
print(f"held-out reconstruction loss {res.heldout_initial:.3f} -> {res.heldout_final:.3f}")

x = load_audio(read_manifest(manifest)[0])
stream = encode(x, detector, res.model)
print(f"{len(x.samples)} samples -> {len(stream.records)} tokens "
      f"({float(stream_tkr(stream)):.2f} tokens/s, {float(stream_bps(stream)[0]):.1f} bit/s payload)")
print("segment lengths in codec frames", [n for n, _ in stream.records][:10])

# The byte stream alone is enough to decode.
path = work / "utt.dtok"
write_stream(stream, path)
print("stream file size", path.stat().st_size, "bytes")
x_hat = decode(read_stream(path), res.model).samples
print(f"decoded {len(x_hat)} samples  mel error {mel_error(x.samples, x_hat):.3f}  "
      f"stoi {stoi(x.samples, x_hat):.3f}")

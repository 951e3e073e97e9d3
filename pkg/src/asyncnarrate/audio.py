"""PCM audio primitives: frames, clips, deterministic synthesis, crossfading.

All audio is 16-bit signed little-endian mono. Transport frames are fixed
20 ms slices. The simulated synthesizer renders per-word sine bursts so that
output duration, bytes, and RMS are exact functions of the input text; a real
TTS engine plugs in behind the same contract.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

FRAME_MS = 20
VALID_SAMPLE_RATES = (16000, 24000, 48000)
DEFAULT_SAMPLE_RATE = 16000
DEFAULT_SPEAKING_RATE_WPM = 180.0

_WORD_GAP_MS = 10
_BURST_AMPLITUDE = 0.3  # of full scale; synthetic peak stays well under 0.9
_EDGE_RAMP_MS = 4


class SynthError(ValueError):
    """Synthesis or splicing failure. `reason` is a stable tag."""

    def __init__(self, reason: str, detail: str = ""):
        self.reason = reason
        super().__init__(f"{reason}: {detail}" if detail else reason)


def frame_byte_length(sample_rate: int) -> int:
    """Bytes in one 20 ms mono 16-bit frame."""
    return sample_rate // 50 * 2


def frame_sample_count(sample_rate: int) -> int:
    return sample_rate // 50


@dataclass(frozen=True)
class AudioFrame:
    """Exactly one 20 ms slice of PCM for transport."""

    data: bytes
    sample_rate: int = DEFAULT_SAMPLE_RATE

    def __post_init__(self):
        if self.sample_rate not in VALID_SAMPLE_RATES:
            raise SynthError("rate", f"unsupported sample rate {self.sample_rate}")
        expected = frame_byte_length(self.sample_rate)
        if len(self.data) != expected:
            raise SynthError(
                "frame_length", f"{len(self.data)} bytes, expected {expected}"
            )


@dataclass
class AudioClip:
    """A contiguous stretch of mono PCM samples."""

    samples: np.ndarray  # int16
    sample_rate: int = DEFAULT_SAMPLE_RATE

    @property
    def duration_ms(self) -> float:
        return self.samples.size * 1000.0 / self.sample_rate

    def to_bytes(self) -> bytes:
        return self.samples.astype("<i2").tobytes()

    def to_frames(self) -> list[AudioFrame]:
        """Slice into 20 ms frames, zero-padding the final partial frame."""
        per = frame_sample_count(self.sample_rate)
        frames = []
        for start in range(0, self.samples.size, per):
            chunk = self.samples[start : start + per]
            if chunk.size < per:
                chunk = np.concatenate(
                    [chunk, np.zeros(per - chunk.size, dtype=np.int16)]
                )
            frames.append(AudioFrame(chunk.astype("<i2").tobytes(), self.sample_rate))
        return frames


def _word_frequency(word: str) -> float:
    # Stable across runs and platforms; spans 180-600 Hz, below Nyquist at 16 kHz.
    return 180.0 + (zlib.crc32(word.encode("utf-8")) % 421)


@lru_cache(maxsize=128)
def _render_words(text: str, speaking_rate_wpm: float, sample_rate: int) -> np.ndarray:
    """Pure render behind simulated_tts; cached since output is deterministic."""
    words = text.split()
    duration_ms = int(round(len(words) * 60000.0 / speaking_rate_wpm))
    total_samples = duration_ms * sample_rate // 1000

    count = len(words)
    base = total_samples // count
    remainder = total_samples % count
    gap = min(_WORD_GAP_MS * sample_rate // 1000, base)
    ramp = max(_EDGE_RAMP_MS * sample_rate // 1000, 1)

    # One vectorized pass: per-sample word index, local offset, burst mask.
    slots = np.full(count, base, dtype=np.int64)
    slots[:remainder] += 1
    starts = np.concatenate(([0], np.cumsum(slots)[:-1]))
    bursts = np.maximum(slots - gap, 0)
    freqs = np.array([_word_frequency(w) for w in words], dtype=np.float32)

    word_idx = np.repeat(np.arange(count), slots)
    n_local = np.arange(total_samples, dtype=np.float32) - starts[word_idx]
    burst_len = bursts[word_idx].astype(np.float32)
    envelope = np.clip(
        np.minimum(n_local + 1.0, burst_len - n_local) / ramp, 0.0, 1.0
    )
    phase = (2.0 * np.pi / sample_rate) * freqs[word_idx] * n_local
    out = (_BURST_AMPLITUDE * 32767.0) * np.sin(phase) * envelope

    samples = np.round(out).astype(np.int16)
    samples.setflags(write=False)
    return samples


def simulated_tts(
    text: str,
    speaking_rate_wpm: float = DEFAULT_SPEAKING_RATE_WPM,
    sample_rate: int = DEFAULT_SAMPLE_RATE,
) -> AudioClip:
    """Deterministic pseudo-speech: one sine burst per word, 10 ms gaps.

    Output duration is round(word_count * 60000 / speaking_rate_wpm) ms, so
    timing math downstream can be verified by hand. Identical inputs yield
    identical bytes.
    """
    if not text.split():
        raise SynthError("empty", "no words to synthesize")
    if sample_rate not in VALID_SAMPLE_RATES:
        raise SynthError("rate", f"unsupported sample rate {sample_rate}")
    samples = _render_words(text, float(speaking_rate_wpm), int(sample_rate))
    return AudioClip(samples.copy(), sample_rate)


def crossfade_gains(n_samples: int) -> tuple[np.ndarray, np.ndarray]:
    """Equal-power gain ramps over the overlap: cos/sin of the same argument.

    gain_out(0) = 1, gain_in(0) = 0 at the overlap start; the roles invert
    exactly at the final overlap sample, and gain_out^2 + gain_in^2 == 1 at
    every sample in between.
    """
    if n_samples < 1:
        raise SynthError("too_short", "overlap must span at least one sample")
    if n_samples == 1:
        u = np.zeros(1)
    else:
        u = np.linspace(0.0, 1.0, n_samples)
    theta = 0.5 * np.pi * u
    return np.cos(theta), np.sin(theta)


def crossfade(tail: AudioClip, head: AudioClip, overlap_ms: int = 50) -> AudioClip:
    """Splice two clips with an equal-power crossfade over `overlap_ms`.

    The output lasts tail + head - overlap; samples outside the overlap pass
    through unchanged.
    """
    if tail.sample_rate != head.sample_rate:
        raise SynthError(
            "rate_mismatch", f"{tail.sample_rate} vs {head.sample_rate}"
        )
    n = overlap_ms * tail.sample_rate // 1000
    if tail.samples.size < n or head.samples.size < n:
        raise SynthError("too_short", f"both clips must span {overlap_ms} ms")

    gain_out, gain_in = crossfade_gains(n)
    mixed = (
        tail.samples[-n:].astype(np.float64) * gain_out
        + head.samples[:n].astype(np.float64) * gain_in
    )
    mixed_i16 = np.clip(np.round(mixed), -32768, 32767).astype(np.int16)
    samples = np.concatenate([tail.samples[:-n], mixed_i16, head.samples[n:]])
    return AudioClip(samples, tail.sample_rate)


def linear_fade_out(clip: AudioClip, start_sample: int, window_ms: int) -> AudioClip:
    """Protection-window tail: up to `window_ms` from `start_sample`, ramped 1 -> 0."""
    n = min(window_ms * clip.sample_rate // 1000, clip.samples.size - start_sample)
    if n <= 0:
        return AudioClip(np.zeros(0, dtype=np.int16), clip.sample_rate)
    section = clip.samples[start_sample : start_sample + n].astype(np.float64)
    ramp = np.linspace(1.0, 0.0, n)
    return AudioClip(np.round(section * ramp).astype(np.int16), clip.sample_rate)


def rms(samples: np.ndarray) -> float:
    """Root-mean-square amplitude normalized to full scale."""
    if samples.size == 0:
        return 0.0
    x = samples.astype(np.float64) / 32768.0
    return float(np.sqrt(np.mean(x * x)))


def rms_bytes(pcm: bytes) -> float:
    return rms(np.frombuffer(pcm, dtype="<i2"))

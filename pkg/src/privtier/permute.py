"""Keyed deterministic block permutations.

One permutation exists per (key, video_id, frame_index, block_size). The
derivation is fixed end to end so that independent runs on any platform
reproduce identical mappings:

  nonce   = SHA-256(utf8("{video_id}|{frame_index}|{block_size}"))[0:8]
  stream  = AES-128-CTR keystream over counter blocks nonce || be64(j), j = 0, 1, ...
  mapping = Fisher-Yates over [0..n), descending, drawing uniform indices by
            rejection sampling big-endian 32-bit words from the stream

The SHA-256 hash-chain fallback replaces only the stream; its output is
flagged non-canonical and must never be labelled as regenerating the
published data.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field
from typing import Callable, Iterator

import numpy as np
from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes

from .validation import ValidationError

KEY_BYTES = 16
NONCE_BYTES = 8
AUDIT_BLOCK_SIZES = (2, 4, 8, 16, 32)  # canonical {4,8,16} plus audit sizes
_MAX_REJECTIONS = 1000
_U32 = 1 << 32

ByteSource = Callable[[int], bytes]  # read(nbytes) -> exactly nbytes


class PermutationFault(RuntimeError):
    """Rejection-sampling cap exceeded; indicates a broken byte source."""


@dataclass(frozen=True)
class KeyMaterial:
    """A 16-byte AES-128 key plus where it came from."""

    key: bytes
    origin: str = "cli_flag"  # cli_flag | env_var | keyfile

    def __post_init__(self):
        if not isinstance(self.key, bytes) or len(self.key) != KEY_BYTES:
            raise ValidationError(f"key must be exactly {KEY_BYTES} bytes")
        if self.origin not in ("cli_flag", "env_var", "keyfile"):
            raise ValidationError(f"unknown key origin {self.origin!r}")

    @classmethod
    def from_hex(cls, hex_str: str, origin: str = "cli_flag") -> "KeyMaterial":
        text = hex_str.strip()
        if len(text) != 2 * KEY_BYTES:
            raise ValidationError(f"key must be {2 * KEY_BYTES} hex chars, got {len(text)}")
        try:
            return cls(key=bytes.fromhex(text), origin=origin)
        except ValueError:
            raise ValidationError("key is not valid hex") from None

    def fingerprint(self) -> str:
        """SHA-256 of the raw key; safe to record in run metadata."""
        return hashlib.sha256(self.key).hexdigest()


def derive_nonce(video_id: str, frame_index: int, block_size: int) -> bytes:
    """First 8 bytes of SHA-256 over the canonical preimage string."""
    if frame_index < 0:
        raise ValidationError(f"frame_index must be non-negative, got {frame_index}")
    if block_size < 1:
        raise ValidationError(f"block_size must be positive, got {block_size}")
    preimage = f"{video_id}|{frame_index}|{block_size}".encode("utf-8")
    return hashlib.sha256(preimage).digest()[:NONCE_BYTES]


@dataclass(frozen=True)
class PermutationSeed:
    """Validated (video, frame, block size) triple with its derived nonce."""

    video_id: str
    frame_index: int
    block_size: int
    nonce: bytes = field(init=False)

    def __post_init__(self):
        if self.block_size not in AUDIT_BLOCK_SIZES:
            raise ValidationError(
                f"block_size {self.block_size} not in {AUDIT_BLOCK_SIZES}"
            )
        object.__setattr__(
            self, "nonce", derive_nonce(self.video_id, self.frame_index, self.block_size)
        )


@dataclass(frozen=True, eq=False)
class BlockPermutation:
    """A bijection pi over block indices: block i moves to slot mapping[i]."""

    n: int
    mapping: np.ndarray
    generator: str  # aes_ctr | csprng_fallback

    def __post_init__(self):
        if self.generator not in ("aes_ctr", "csprng_fallback"):
            raise ValidationError(f"unknown generator {self.generator!r}")
        m = np.asarray(self.mapping)
        if m.shape != (self.n,) or not np.array_equal(np.sort(m), np.arange(self.n)):
            raise ValidationError("mapping is not a bijection on [0, n)")

    def inverse(self) -> np.ndarray:
        inv = np.empty(self.n, dtype=np.int64)
        inv[self.mapping] = np.arange(self.n)
        return inv


def aes_ctr_source(key: KeyMaterial, nonce: bytes) -> ByteSource:
    """Unbounded AES-128-CTR keystream starting at counter block nonce || be64(0)."""
    if len(nonce) != NONCE_BYTES:
        raise ValidationError(f"nonce must be {NONCE_BYTES} bytes")
    encryptor = Cipher(
        algorithms.AES(key.key), modes.CTR(nonce + bytes(8))
    ).encryptor()
    return lambda nbytes: encryptor.update(bytes(nbytes))


def fallback_source(key: KeyMaterial, nonce: bytes) -> ByteSource:
    """SHA-256 hash-chain byte source: block_j = SHA-256(key || nonce || be64(j))."""
    prefix = key.key + nonce
    state = {"j": 0, "buf": b""}

    def read(nbytes: int) -> bytes:
        parts = [state["buf"]]
        have = len(state["buf"])
        while have < nbytes:
            block = hashlib.sha256(prefix + struct.pack(">Q", state["j"])).digest()
            state["j"] += 1
            parts.append(block)
            have += len(block)
        data = b"".join(parts)
        state["buf"] = data[nbytes:]
        return data[:nbytes]

    return read


def keystream(key: KeyMaterial, nonce: bytes, length: int) -> bytes:
    """First `length` bytes of the AES-CTR keystream for (key, nonce)."""
    if length < 1:
        raise ValidationError(f"length must be >= 1, got {length}")
    return aes_ctr_source(key, nonce)(length)


def _words(read: ByteSource, chunk_words: int = 4096) -> Iterator[int]:
    while True:
        buf = read(4 * chunk_words)
        yield from np.frombuffer(buf, dtype=">u4").tolist()


def permutation_from_stream(n: int, read: ByteSource, generator: str = "aes_ctr") -> BlockPermutation:
    """Fisher-Yates shuffle of [0..n) driven by a byte source.

    Descending pass: for i = n-1 .. 1, draw j uniform on [0, i] by rejection
    sampling 32-bit big-endian words (reject w >= floor(2^32/m)*m for
    m = i+1), then swap. The byte-consumption order is part of the canonical
    definition; do not reorder the loop.
    """
    if n < 1:
        raise ValidationError(f"n must be >= 1, got {n}")
    perm = list(range(n))
    words = _words(read, chunk_words=min(4096, max(16, n)))
    for i in range(n - 1, 0, -1):
        m = i + 1
        limit = (_U32 // m) * m
        w = next(words)
        rejections = 0
        while w >= limit:
            rejections += 1
            if rejections > _MAX_REJECTIONS:
                raise PermutationFault(f"{rejections} rejections drawing index for m={m}")
            w = next(words)
        j = w % m
        perm[i], perm[j] = perm[j], perm[i]
    return BlockPermutation(n=n, mapping=np.array(perm, dtype=np.int64), generator=generator)


def derive_permutation(
    key: KeyMaterial,
    video_id: str,
    frame_index: int,
    block_size: int,
    n: int,
    generator: str = "aes_ctr",
) -> BlockPermutation:
    """Canonical permutation for one frame's block grid."""
    nonce = derive_nonce(video_id, frame_index, block_size)
    if generator == "aes_ctr":
        read = aes_ctr_source(key, nonce)
    elif generator == "csprng_fallback":
        read = fallback_source(key, nonce)
    else:
        raise ValidationError(f"unknown generator {generator!r}")
    return permutation_from_stream(n, read, generator=generator)


def csprng_fallback_permutation(n: int, seed: PermutationSeed, key: KeyMaterial) -> BlockPermutation:
    """Fallback-path permutation; expected to differ from the AES path."""
    return permutation_from_stream(n, fallback_source(key, seed.nonce), generator="csprng_fallback")

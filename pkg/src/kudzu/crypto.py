"""Threshold signature shares and k-of-n certificates.

``HmacThresholdScheme`` is a deterministic stand-in for a BLS-style threshold
scheme. A share is an HMAC under the signer's secret; a certificate carries
the sorted signer set and each signer's share, so holding the scheme object
is equivalent to holding every public key. A real scheme plugs in by
implementing the ``ThresholdScheme`` protocol.
"""
from __future__ import annotations

import enum
import hashlib
import hmac
import struct
from dataclasses import dataclass, field
from typing import Iterable, Protocol


class Kind(enum.IntEnum):
    NOTAR = 1
    FIRST = 2
    FINAL = 3


@dataclass(frozen=True)
class MessageBody:
    """What a share signs: protocol instance, slot and block hash (``None`` = timeout)."""

    instance: str
    slot: int
    target: bytes | None

    def to_bytes(self) -> bytes:
        inst = self.instance.encode()
        out = struct.pack("<H", len(inst)) + inst + struct.pack("<Q", self.slot)
        if self.target is None:
            return out + b"\x00"
        return out + b"\x01" + self.target


def signing_input(kind: Kind, body: MessageBody) -> bytes:
    return bytes([int(kind)]) + body.to_bytes()


@dataclass(frozen=True)
class SignerKey:
    signer: int
    secret: bytes = field(repr=False)


@dataclass(frozen=True)
class SignShare:
    signer: int
    kind: Kind
    body: MessageBody
    share: bytes = field(repr=False)


@dataclass(frozen=True)
class Certificate:
    kind: Kind
    body: MessageBody
    threshold: int
    signers: tuple[int, ...]
    proof: tuple[bytes, ...] = field(repr=False)

    def shares(self) -> list[SignShare]:
        return [SignShare(s, self.kind, self.body, sig) for s, sig in zip(self.signers, self.proof)]


class ThresholdScheme(Protocol):
    n: int

    def key(self, signer: int) -> SignerKey: ...

    def sign_share(self, key: SignerKey, kind: Kind, body: MessageBody) -> SignShare: ...

    def verify_share(self, share: SignShare) -> bool: ...

    def assemble_certificate(self, shares: Iterable[SignShare], k: int) -> Certificate | None: ...

    def verify_certificate(self, cert: Certificate, kind: Kind, body: MessageBody, k: int) -> bool: ...


def _derive_secret(seed: int, signer: int) -> bytes:
    return hashlib.sha256(b"kudzu-test-key" + struct.pack("<qH", seed, signer)).digest()


class HmacThresholdScheme:
    """Keyed-digest threshold scheme with keys derived from a scenario seed."""

    def __init__(self, n: int, seed: int = 0):
        if n < 1 or n > 0xFFFF:
            raise ValueError("n out of range")
        self.n = n
        self.seed = seed
        self._secrets = {i: _derive_secret(seed, i) for i in range(1, n + 1)}

    def key(self, signer: int) -> SignerKey:
        return SignerKey(signer, self._secrets[signer])

    @staticmethod
    def _mac(secret: bytes, kind: Kind, body: MessageBody) -> bytes:
        return hmac.new(secret, signing_input(kind, body), hashlib.sha256).digest()

    def sign_share(self, key: SignerKey, kind: Kind, body: MessageBody) -> SignShare:
        return SignShare(key.signer, Kind(kind), body, self._mac(key.secret, kind, body))

    def verify_share(self, share: SignShare) -> bool:
        secret = self._secrets.get(share.signer)
        if secret is None or not isinstance(share.share, bytes):
            return False
        return hmac.compare_digest(self._mac(secret, share.kind, share.body), share.share)

    def assemble_certificate(self, shares: Iterable[SignShare], k: int) -> Certificate | None:
        """Combine shares from at least ``k`` distinct signers; ``None`` if too few.

        Raises ``ValueError`` when shares disagree on (kind, body) or fail to verify.
        """
        by_signer: dict[int, SignShare] = {}
        ref = None
        for sh in shares:
            if ref is None:
                ref = (sh.kind, sh.body)
            elif (sh.kind, sh.body) != ref:
                raise ValueError("shares sign different messages")
            if not self.verify_share(sh):
                raise ValueError(f"invalid share from signer {sh.signer}")
            by_signer.setdefault(sh.signer, sh)
        if ref is None or len(by_signer) < k:
            return None
        signers = tuple(sorted(by_signer))
        return Certificate(ref[0], ref[1], k, signers, tuple(by_signer[s].share for s in signers))

    def verify_certificate(self, cert: Certificate, kind: Kind, body: MessageBody, k: int) -> bool:
        if cert.kind != kind or cert.body != body or cert.threshold != k:
            return False
        signers = cert.signers
        if len(signers) < k or len(signers) != len(cert.proof):
            return False
        if any(b <= a for a, b in zip(signers, signers[1:])):
            return False
        return all(self.verify_share(sh) for sh in cert.shares())

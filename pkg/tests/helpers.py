"""Small builders shared by the protocol-level tests."""
from __future__ import annotations

import random
import warnings

from kudzu.codec import encode
from kudzu.crypto import HmacThresholdScheme, Kind
from kudzu.types import (GENESIS_HASH, Block, FinalVote, FirstVote, NotarVote, ProtocolParams,
                         block_hash, body_for, timeout_block)


class World:
    def __init__(self, n=4, f=1, p=0, seed=0):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            self.params = ProtocolParams(n, f, p)
        self.scheme = HmacThresholdScheme(n, seed)
        self.materials: dict[Block, list] = {}
        self.rng = random.Random(seed)

    @property
    def n(self):
        return self.params.n

    def block(self, slot, parent=GENESIS_HASH, payload=None):
        if isinstance(parent, Block):
            parent = self.hash(parent)
        payload = self.rng.randbytes(64) if payload is None else payload
        tag, frags = encode(self.params.codec, payload)
        b = Block(slot, tag, parent)
        self.materials[b] = (payload, frags)
        return b

    def hash(self, block):
        return block_hash(block, self.params.hash_name)

    def share(self, signer, kind, block):
        return self.scheme.sign_share(self.scheme.key(signer), kind, body_for(block, self.params))

    def notar(self, signer, block):
        frag = None if block.is_timeout else self.materials[block][1][signer - 1]
        return NotarVote(block, self.share(signer, Kind.NOTAR, block), frag)

    def first(self, signer, block):
        return FirstVote(self.share(signer, Kind.FIRST, block), self.notar(signer, block))

    def final(self, signer, block):
        return FinalVote(block, self.share(signer, Kind.FINAL, block))

    def timeout(self, slot):
        return timeout_block(slot)

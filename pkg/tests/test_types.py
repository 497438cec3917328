import dataclasses
import warnings

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kudzu.crypto import Kind
from kudzu.types import (GENESIS_HASH, Block, BlockProposal, CertKind, CertObject, FirstVote,
                         ParameterError, ProtocolParams, WireError, block_hash, check_resilience,
                         decode_message, encode_message, timeout_block, validate_certificate,
                         validate_proposal_form, validate_vote)

from helpers import World


@pytest.mark.parametrize("n,f,p,ok", [(4, 1, 0, True), (3, 1, 0, False), (6, 1, 1, True),
                                      (5, 1, 1, False), (11, 2, 2, True), (10, 2, 2, False),
                                      (4, 0, 0, False), (7, 2, 0, True)])
def test_resilience(n, f, p, ok):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        if ok:
            check_resilience(n, f, p)
        else:
            with pytest.raises(ParameterError):
                check_resilience(n, f, p)


def test_upper_bound_warns_or_raises():
    with pytest.warns(UserWarning):
        check_resilience(7, 1, 0)
    with pytest.raises(ParameterError):
        check_resilience(7, 1, 0, strict_upper=True)


def test_thresholds():
    p = ProtocolParams(11, 2, 2)
    assert (p.notar_threshold, p.fast_threshold, p.d) == (7, 9, 5)
    assert CertKind.FAST_FINAL.threshold(p) == 9
    assert CertKind.TIMEOUT.threshold(p) == 7


def test_block_hash_changes_with_every_field():
    w = World()
    b = w.block(2)
    base = block_hash(b)
    tag = b.tag
    assert block_hash(dataclasses.replace(b, slot=3)) != base
    assert block_hash(dataclasses.replace(b, parent_hash=b"\x01" * 32)) != base
    assert block_hash(dataclasses.replace(b, tag=dataclasses.replace(tag, payload_len=tag.payload_len + 1))) != base
    assert block_hash(dataclasses.replace(b, tag=dataclasses.replace(tag, root=bytes(32)))) != base
    assert block_hash(timeout_block(2)) != block_hash(timeout_block(3))
    assert block_hash(b, "sha3_256") != base


def test_timeout_block_shape():
    with pytest.raises(ValueError):
        Block(1, None, GENESIS_HASH)
    with pytest.raises(ValueError):
        Block(0, None)
    assert timeout_block(4).is_timeout


def all_messages(w):
    b = w.block(1)
    t = w.timeout(1)
    cert = w.scheme.assemble_certificate([w.notar(i, b).share for i in (1, 2, 3)], 3)
    tcert = w.scheme.assemble_certificate([w.notar(i, t).share for i in (1, 2, 3)], 3)
    return [
        BlockProposal(b, w.materials[b][1][1]),
        w.notar(2, b), w.notar(2, t), w.first(3, b), w.first(3, t), w.final(4, b),
        CertObject(CertKind.NOTAR, b, cert), CertObject(CertKind.TIMEOUT, t, tcert),
    ]


def test_wire_roundtrip():
    w = World()
    for m in all_messages(w):
        assert decode_message(encode_message(m), w.params) == m


def test_truncation_and_trailing_bytes_rejected():
    w = World()
    for m in all_messages(w):
        data = encode_message(m)
        for cut in range(len(data)):
            with pytest.raises(WireError):
                decode_message(data[:cut], w.params)
        with pytest.raises(WireError):
            decode_message(data + b"\x00", w.params)


def test_every_single_byte_mutation_is_caught():
    """Flipping any byte of a valid vote either breaks parsing or validation."""
    w = World()
    for m in all_messages(w)[1:6]:
        data = encode_message(m)
        assert validate_vote(decode_message(data, w.params), w.params, w.scheme)
        for i in range(len(data)):
            bad = data[:i] + bytes([data[i] ^ 0x01]) + data[i + 1:]
            try:
                msg = decode_message(bad, w.params)
            except WireError:
                continue
            if msg == m:
                continue
            assert not validate_vote(msg, w.params, w.scheme), (type(m).__name__, i)


def test_certificate_mutations_caught():
    w = World()
    for m in all_messages(w)[6:]:
        data = encode_message(m)
        assert validate_certificate(decode_message(data, w.params), w.params, w.scheme)
        for i in range(len(data)):
            bad = data[:i] + bytes([data[i] ^ 0x80]) + data[i + 1:]
            try:
                msg = decode_message(bad, w.params)
            except WireError:
                continue
            assert not validate_certificate(msg, w.params, w.scheme), i


def test_cross_wired_first_vote_rejected():
    w = World()
    b1, b2 = w.block(1), w.block(1)
    # first share on one block wrapping a notarization vote on another
    fv = FirstVote(w.share(2, Kind.FIRST, b1), w.notar(2, b2))
    assert not validate_vote(fv, w.params, w.scheme)
    # signer mismatch between the outer share and the inner vote
    fv = FirstVote(w.share(1, Kind.FIRST, b1), w.notar(2, b1))
    assert not validate_vote(fv, w.params, w.scheme)
    # a notarization share relabelled as a first share
    inner = w.notar(2, b1)
    fv = FirstVote(dataclasses.replace(inner.share, kind=Kind.FIRST), inner)
    assert not validate_vote(fv, w.params, w.scheme)


def test_vote_fragment_rules():
    w = World()
    b = w.block(1)
    v = w.notar(2, b)
    assert validate_vote(v, w.params, w.scheme)
    assert not validate_vote(dataclasses.replace(v, fragment=w.materials[b][1][2]), w.params, w.scheme)
    assert not validate_vote(dataclasses.replace(v, fragment=None), w.params, w.scheme)
    t = w.notar(2, w.timeout(1))
    assert not validate_vote(dataclasses.replace(t, fragment=w.materials[b][1][1]), w.params, w.scheme)
    final_timeout = w.final(1, w.timeout(1))
    assert not validate_vote(final_timeout, w.params, w.scheme)


def test_certificate_kind_must_match_block():
    w = World()
    t = w.timeout(1)
    tcert = w.scheme.assemble_certificate([w.notar(i, t).share for i in (1, 2, 3)], 3)
    assert not validate_certificate(CertObject(CertKind.NOTAR, t, tcert), w.params, w.scheme)
    b = w.block(1)
    fast = w.scheme.assemble_certificate([w.first(i, b).first_share for i in (1, 2, 3)], 3)
    # three first votes are below the n - p = 4 fast threshold
    assert not validate_certificate(CertObject(CertKind.FAST_FINAL, b, fast), w.params, w.scheme)


def test_proposal_form():
    w = World()
    b = w.block(1)
    frags = w.materials[b][1]
    assert validate_proposal_form(BlockProposal(b, frags[2]), 3, w.params)
    assert not validate_proposal_form(BlockProposal(b, frags[2]), 2, w.params)


@settings(max_examples=50, deadline=None)
@given(data=st.binary(max_size=300))
def test_decoder_never_crashes(data):
    w = World()
    try:
        decode_message(data, w.params)
    except WireError:
        pass

import dataclasses

import pytest
from hypothesis import given
from hypothesis import strategies as st

from kudzu.crypto import Certificate, HmacThresholdScheme, Kind, MessageBody

BODY = MessageBody("kudzu", 3, b"\x11" * 32)


def shares(scheme, signers, kind=Kind.NOTAR, body=BODY):
    return [scheme.sign_share(scheme.key(i), kind, body) for i in signers]


def test_share_verifies_and_binds_everything():
    s = HmacThresholdScheme(4, seed=1)
    sh = s.sign_share(s.key(2), Kind.NOTAR, BODY)
    assert s.verify_share(sh)
    assert not s.verify_share(dataclasses.replace(sh, signer=3))
    assert not s.verify_share(dataclasses.replace(sh, kind=Kind.FINAL))
    assert not s.verify_share(dataclasses.replace(sh, body=MessageBody("kudzu", 4, BODY.target)))
    assert not s.verify_share(dataclasses.replace(sh, body=MessageBody("other", 3, BODY.target)))
    assert not s.verify_share(dataclasses.replace(sh, body=MessageBody("kudzu", 3, None)))
    assert not s.verify_share(dataclasses.replace(sh, signer=9))
    # different deployment seed means different keys
    assert not HmacThresholdScheme(4, seed=2).verify_share(sh)


def test_certificate_threshold():
    s = HmacThresholdScheme(6)
    assert s.assemble_certificate(shares(s, [1, 2, 3]), 4) is None
    cert = s.assemble_certificate(shares(s, [4, 1, 3, 2]), 4)
    assert cert.signers == (1, 2, 3, 4)
    assert s.verify_certificate(cert, Kind.NOTAR, BODY, 4)
    # threshold is part of what the certificate claims
    assert not s.verify_certificate(cert, Kind.NOTAR, BODY, 5)
    assert not s.verify_certificate(cert, Kind.NOTAR, BODY, 3)
    assert not s.verify_certificate(cert, Kind.FIRST, BODY, 4)


def test_duplicate_signer_counts_once():
    s = HmacThresholdScheme(4)
    dup = shares(s, [1, 1, 1, 2])
    assert s.assemble_certificate(dup, 3) is None
    assert s.assemble_certificate(dup, 2).signers == (1, 2)


def test_forged_and_tampered_certificates_rejected():
    s = HmacThresholdScheme(4)
    cert = s.assemble_certificate(shares(s, [1, 2, 3]), 3)
    forged = dataclasses.replace(cert, proof=(cert.proof[0], b"\x00" * 32, cert.proof[2]))
    assert not s.verify_certificate(forged, Kind.NOTAR, BODY, 3)
    swapped = dataclasses.replace(cert, signers=(1, 2, 4))
    assert not s.verify_certificate(swapped, Kind.NOTAR, BODY, 3)
    repeated = dataclasses.replace(cert, signers=(1, 1, 2), proof=(cert.proof[0],) * 2 + (cert.proof[1],))
    assert not s.verify_certificate(repeated, Kind.NOTAR, BODY, 3)
    short = dataclasses.replace(cert, proof=cert.proof[:2])
    assert not s.verify_certificate(short, Kind.NOTAR, BODY, 3)
    lowered = Certificate(Kind.NOTAR, BODY, 2, cert.signers[:2], cert.proof[:2])
    assert not s.verify_certificate(lowered, Kind.NOTAR, BODY, 3)


def test_assemble_rejects_mixed_or_invalid():
    s = HmacThresholdScheme(4)
    mixed = shares(s, [1, 2]) + shares(s, [3], body=MessageBody("kudzu", 3, None))
    with pytest.raises(ValueError):
        s.assemble_certificate(mixed, 3)
    bad = shares(s, [1, 2])
    bad.append(dataclasses.replace(bad[0], signer=3))
    with pytest.raises(ValueError):
        s.assemble_certificate(bad, 3)


@given(signers=st.sets(st.integers(1, 7), min_size=1), k=st.integers(1, 7))
def test_certificate_exists_iff_enough_signers(signers, k):
    s = HmacThresholdScheme(7)
    cert = s.assemble_certificate(shares(s, sorted(signers)), k)
    assert (cert is not None) == (len(signers) >= k)
    if cert is not None:
        assert s.verify_certificate(cert, Kind.NOTAR, BODY, k)

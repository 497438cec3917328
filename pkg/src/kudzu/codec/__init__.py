from .avid import (CertifiedFragment, CodecParams, Tag, decode, encode, fragment_size,
                   reconstruct, verify_fragment)
from .merkle import DIGEST_SIZE

__all__ = ["CertifiedFragment", "CodecParams", "Tag", "decode", "encode", "fragment_size",
           "reconstruct", "verify_fragment", "DIGEST_SIZE"]

"""Named sub-seeds derived from one master seed."""

from __future__ import annotations

import hashlib

__all__ = ["derive_seed"]


def derive_seed(master: int, role: str) -> int:
    """First 4 bytes (little-endian) of ``sha256(f"{master}:{role}")``.

    The result fits in 32 bits so it can seed every generator in use.
    """
    digest = hashlib.sha256(f"{int(master)}:{role}".encode()).digest()
    return int.from_bytes(digest[:4], "little")

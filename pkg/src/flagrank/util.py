"""Seed derivation and small shared helpers."""

import hashlib
import math


def derive_seed(root: int, label: str) -> int:
    """Deterministically derive a child seed from a root seed and a label.

    Every source of randomness in the package draws its seed through this
    function (component name + index in the label), so no two components
    ever share a stream by accident.
    """
    digest = hashlib.sha256(f"{root}/{label}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") & 0x7FFF_FFFF_FFFF_FFFF


def ceil_frac(fraction: float, n: int) -> int:
    """Ceiling of fraction*n, robust to float noise in the product.

    ceil(0.8*35) should be 28, but 0.8*35 evaluates to 28.000000000000004;
    a tiny downward nudge restores the intended integer before rounding up.
    """
    return max(0, math.ceil(fraction * n - 1e-9))

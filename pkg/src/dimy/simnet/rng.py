import hashlib
import random


def named_rng(seed: int, *labels) -> random.Random:
    """Independent deterministic stream for ``labels`` under one master seed."""
    key = "|".join([str(seed), *map(str, labels)]).encode()
    return random.Random(int.from_bytes(hashlib.sha256(key).digest(), "big"))

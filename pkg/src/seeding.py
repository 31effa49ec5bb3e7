import hashlib

import numpy as np


def stable_hash(name: str) -> int:
    """Inteiro de 64 bits de sha256(name); não depende de PYTHONHASHSEED."""
    return int.from_bytes(hashlib.sha256(name.encode("utf-8")).digest()[:8], "little")


def derive_seed(seed: int, *streams) -> np.random.SeedSequence:
    """SeedSequence de um fluxo nomeado da semente global.

    Fluxos são strings (com hash) ou inteiros não negativos; um fluxo novo
    não altera a aleatoriedade dos outros.
    """
    entropy = [int(seed)]
    for s in streams:
        entropy.append(stable_hash(s) if isinstance(s, str) else int(s))
    return np.random.SeedSequence(entropy)


def rng_for(seed: int, *streams) -> np.random.Generator:
    return np.random.default_rng(derive_seed(seed, *streams))

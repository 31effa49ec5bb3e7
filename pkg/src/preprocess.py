# === preprocess.py ===
# Features do modelo de recuperação de referência: one-hots de atributos
# para a torre de imagem, bag of words com hash para a torre de texto e
# mascaramento de palavras para a cabeça de tokens mascarados.
import numpy as np
import pandas as pd
from sklearn.feature_extraction.text import HashingVectorizer
from sklearn.preprocessing import OneHotEncoder

from src.schema import ALL_KEYS

MASK_TOKEN = "[mask]"
TOKEN_PATTERN = r"(?u)\b[\w-]+\b"


def attribute_frame(rows) -> pd.DataFrame:
    """Uma linha por imagem, uma coluna por chave de atributo."""
    return pd.DataFrame([{key.value: row[key] for key in ALL_KEYS} for row in rows],
                        columns=[key.value for key in ALL_KEYS])


def fit_attribute_encoder(rows) -> OneHotEncoder:
    encoder = OneHotEncoder(handle_unknown="ignore", sparse_output=False, dtype=np.float64)
    encoder.fit(attribute_frame(rows))
    return encoder


def image_features(encoder: OneHotEncoder, rows) -> np.ndarray:
    """One-hots dos atributos, normalizados (l2) por imagem."""
    x = encoder.transform(attribute_frame(rows))
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    return x / np.maximum(norms, 1e-12)


def make_text_hasher(hash_dim: int) -> HashingVectorizer:
    """Unigramas e bigramas com hash MurmurHash3 de 32 bits (com sinal) em
    `hash_dim` posições, normalizados (l2); sem estado."""
    return HashingVectorizer(
        n_features=hash_dim,
        ngram_range=(1, 2),
        alternate_sign=False,
        norm="l2",
        lowercase=True,
        token_pattern=TOKEN_PATTERN,
    )


def tokenize(hasher: HashingVectorizer, text: str) -> list[str]:
    return hasher.build_tokenizer()(text.lower())


def build_vocabulary(hasher: HashingVectorizer, texts) -> list[str]:
    return sorted({tok for text in texts for tok in tokenize(hasher, text)})


def mask_captions(hasher: HashingVectorizer, texts, vocabulary, mask_rate: float, rng):
    """Troca um subconjunto aleatório (pelo menos uma palavra) das palavras
    de cada legenda que estão no vocabulário pelo token de máscara.

    Retorna (textos_mascarados, alvos); alvos[t] são os índices no
    vocabulário das palavras mascaradas do texto t, em ordem.
    """
    index = {w: i for i, w in enumerate(vocabulary)}
    masked_texts, targets = [], []
    for text in texts:
        tokens = tokenize(hasher, text)
        candidates = [i for i, tok in enumerate(tokens) if tok in index]
        if not candidates:
            masked_texts.append(text)
            targets.append(np.zeros(0, dtype=int))
            continue
        n_mask = max(1, int(round(mask_rate * len(candidates))))
        chosen = np.sort(rng.choice(candidates, size=n_mask, replace=False))
        targets.append(np.array([index[tokens[i]] for i in chosen], dtype=int))
        chosen_set = set(chosen.tolist())
        masked_texts.append(" ".join(MASK_TOKEN if i in chosen_set else tok for i, tok in enumerate(tokens)))
    return masked_texts, targets

# === synthetic.py ===
# Corpus sintético de busca de pessoas com rótulos verdadeiros: identidades
# com vetores de atributos distintos, split disjunto por identidade,
# legendas de referência e um corpus de estilo separado, não pareado.
import logging

from src.a2t import pronoun_for
from src.records import ManifestLine
from src.schema import ABSENT, ALL_KEYS, PRESENT, VARIABLE_KEYS, AttributeKey, TextRecord
from src.seeding import rng_for

logger = logging.getLogger(__name__)

K = AttributeKey

COLORS = ("black", "white", "red", "blue", "green", "yellow", "gray", "brown", "pink", "purple", "orange")
VALUES = {
    K.clothes_color: COLORS,
    K.clothes_style: ("t-shirt", "jacket", "coat", "sweater", "shirt", "hoodie", "dress"),
    K.pants_color: COLORS,
    K.pants_style: ("jeans", "shorts", "skirt", "trousers", "pants"),
    K.shoes_color: COLORS,
    K.shoes_style: ("sneakers", "boots", "sandals", "shoes"),
    K.gender: ("man", "woman"),
    K.hair_color: ("black", "brown", "blonde", "gray"),
    K.hair_length: ("long", "short"),
}
ACCESSORY_RATE = 0.3
SPLIT_FRACTIONS = (0.7, 0.1, 0.2)

_ITEM = {K.bag: "a bag", K.glasses: "glasses", K.phone: "a phone", K.umbrella: "an umbrella"}


def value_table(values_per_key: int = 0) -> dict[AttributeKey, tuple[str, ...]]:
    """VALUES cortado nos primeiros `values_per_key` valores de cada chave; 0 mantém todos."""
    if values_per_key < 0:
        raise ValueError("values_per_key must be >= 0")
    if values_per_key == 0:
        return dict(VALUES)
    return {key: values[:values_per_key] for key, values in VALUES.items()}


def _draw_vector(rng, table=VALUES) -> dict[AttributeKey, str]:
    row = {key: str(values[int(rng.integers(len(values)))]) for key, values in table.items()}
    for key in VARIABLE_KEYS:
        row[key] = PRESENT if rng.random() < ACCESSORY_RATE else ABSENT
    return {key: row[key] for key in ALL_KEYS}


def distinct_vectors(n: int, rng, table=VALUES) -> list[dict[AttributeKey, str]]:
    capacity = 2 ** len(VARIABLE_KEYS)
    for values in table.values():
        capacity *= len(values)
    if n > capacity:
        raise ValueError(f"only {capacity} distinct attribute vectors exist, {n} requested")
    vectors, seen = [], set()
    while len(vectors) < n:
        row = _draw_vector(rng, table)
        signature = tuple(row[k] for k in ALL_KEYS)
        if signature not in seen:
            seen.add(signature)
            vectors.append(row)
    return vectors


def reference_caption(row: dict[AttributeKey, str]) -> str:
    """Descrição no estilo humano, com redação diferente do template."""
    v = row
    text = (
        f"A {v[K.gender]} wearing a {v[K.clothes_color]} {v[K.clothes_style]} and "
        f"{v[K.pants_color]} {v[K.pants_style]}, with {v[K.hair_color]} {v[K.hair_length]} hair "
        f"and {v[K.shoes_color]} {v[K.shoes_style]}."
    )
    items = [phrase for key, phrase in _ITEM.items() if v[key] == PRESENT]
    if items:
        text += f" {pronoun_for(v[K.gender])} carries {' and '.join(items)}."
    if v[K.bike] == PRESENT:
        text += " They ride a bike."
    return text


_STYLES = (
    "The {gender} has {hair_color} {hair_length} hair and wears a {clothes_color} {clothes_style} "
    "with {pants_color} {pants_style}.",
    "A young {gender} in a {clothes_color} {clothes_style} is walking, wearing {shoes_color} "
    "{shoes_style} and {pants_color} {pants_style}.",
    "This {gender} wears {pants_color} {pants_style}, {shoes_color} {shoes_style} and a "
    "{clothes_color} {clothes_style}.",
    "A {gender} with {hair_color} hair, dressed in a {clothes_color} {clothes_style}, carries a bag.",
)


def style_corpus(n_texts: int, rng) -> list[TextRecord]:
    """Descrições soltas; nenhuma forma par com imagem do manifesto."""
    records = []
    for i in range(n_texts):
        row = {k.value: v for k, v in _draw_vector(rng).items()}
        template = _STYLES[int(rng.integers(len(_STYLES)))]
        records.append(TextRecord(text_id=f"s{i:05d}", text=template.format(**row)))
    return records


def make_synthetic(n_identities: int, images_per_identity: int, seed: int, values_per_key: int = 0):
    """Retorna (linhas do manifesto, corpus de estilo). Um `values_per_key`
    pequeno faz as identidades dividirem quase toda a aparência, e os
    acessórios pesam mais no ranking."""
    if n_identities < 3:
        raise ValueError("a synthetic corpus needs at least 3 identities for train/val/test")
    rng = rng_for(seed, "synthetic")
    vectors = distinct_vectors(n_identities, rng, value_table(values_per_key))
    order = rng.permutation(n_identities)
    n_val = max(1, int(round(SPLIT_FRACTIONS[1] * n_identities)))
    n_test = max(1, int(round(SPLIT_FRACTIONS[2] * n_identities)))
    n_train = n_identities - n_val - n_test
    split_of = {}
    for rank, ident in enumerate(order):
        split_of[int(ident)] = "train" if rank < n_train else "val" if rank < n_train + n_val else "test"

    lines = []
    for ident, row in enumerate(vectors):
        attributes = {k.value: v for k, v in row.items()}
        caption = reference_caption(row)
        for j in range(images_per_identity):
            image_id = f"img{ident:04d}_{j:02d}"
            lines.append(ManifestLine(
                image_id=image_id,
                path=f"images/{image_id}.jpg",
                identity_id=f"p{ident:04d}",
                split=split_of[ident],
                attributes=attributes,
                caption=caption,
            ))
    texts = style_corpus(2 * n_identities, rng_for(seed, "synthetic-style"))
    logger.info("Synthetic corpus: %d identities, %d images, %d style texts",
                n_identities, len(lines), len(texts))
    return lines, texts

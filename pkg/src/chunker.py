# === chunker.py ===
# Chunker de sintagmas nominais: etiquetas por léxico + sufixo e uma
# gramática RegexpParser do nltk. Não precisa baixar modelos.
from typing import Protocol

import nltk
from nltk.tokenize import RegexpTokenizer


class NounPhraseParser(Protocol):
    def noun_phrases(self, text: str) -> list[str]:
        ...


_COLORS = (
    "black white red blue green yellow gray grey brown pink purple orange beige "
    "navy khaki dark light bright pale"
)
_ADJECTIVES = (
    "long short blonde curly straight striped plaid checked denim leather "
    "white-and-black black-and-white small large big little young old tall "
    "casual loose tight slim sleeveless"
)
_NOUNS = (
    "man woman men women boy girl person lady gentleman male female guy "
    "hair clothes shirt t-shirt tshirt top blouse jacket coat sweater hoodie "
    "vest dress suit uniform pants jeans trousers shorts skirt leggings "
    "shoes sneakers boots sandals heels slippers socks bag backpack handbag "
    "purse glasses sunglasses phone umbrella bike bicycle hat cap street road "
    "photo picture sleeves"
)
_VERBS = (
    "is are was wears wearing wore has have had carries carrying carried "
    "holds holding held rides riding walks walking walked stands standing "
    "looks looking seems appears"
)

LEXICON = {}
for _words, _tag in ((_COLORS, "JJ"), (_ADJECTIVES, "JJ"), (_NOUNS, "NN"), (_VERBS, "VB")):
    for _w in _words.split():
        LEXICON[_w] = _tag
LEXICON.update({
    "the": "DT", "a": "DT", "an": "DT", "this": "DT", "that": "DT", "some": "DT",
    "his": "PRP$", "her": "PRP$", "their": "PRP$",
    "he": "PRP", "she": "PRP", "they": "PRP", "it": "PRP",
    "with": "IN", "in": "IN", "on": "IN", "of": "IN", "at": "IN", "over": "IN",
    "and": "CC", "or": "CC", "but": "CC",
    "not": "RB", "also": "RB", "very": "RB",
})

_SUFFIX_RULES = [
    (r"^[^\w]+$", "."),
    (r"^\d+$", "CD"),
    (r".*ing$", "VBG"),
    (r".*ed$", "VBD"),
    (r".*ly$", "RB"),
    (r".*", "NN"),
]

GRAMMAR = r"NP: {<DT|PRP\$>?<JJ>*<NN>+}"


class LexiconChunker:
    """Chunks determinante/adjetivo/substantivo sobre um léxico embutido.

    Os sintagmas são recortados da entrada pelos offsets dos tokens, então
    cada um é um trecho contíguo do texto.
    """

    def __init__(self, lexicon=None, grammar=GRAMMAR):
        self.tokenizer = RegexpTokenizer(r"[\w'-]+|[^\w\s]+")
        self.tagger = nltk.UnigramTagger(
            model=dict(lexicon or LEXICON), backoff=nltk.RegexpTagger(_SUFFIX_RULES)
        )
        self.parser = nltk.RegexpParser(grammar)

    def tag(self, text: str):
        spans = list(self.tokenizer.span_tokenize(text))
        words = [text[a:b].lower() for a, b in spans]
        return spans, self.tagger.tag(words)

    def noun_phrases(self, text: str) -> list[str]:
        spans, tagged = self.tag(text)
        if not tagged:
            return []
        indexed = [(str(i), tag) for i, (_, tag) in enumerate(tagged)]
        tree = self.parser.parse(indexed)
        phrases = []
        for subtree in tree.subtrees(lambda t: t.label() == "NP"):
            leaves = subtree.leaves()
            first, last = int(leaves[0][0]), int(leaves[-1][0])
            phrases.append(text[spans[first][0]:spans[last][1]])
        return phrases

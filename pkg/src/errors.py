# === errors.py ===
# Hierarquia de exceções de todas as etapas. `code` vai no prefixo da CLI
# GTR-ERR:<code>: e `exit_code` no status do processo.


class GtrError(Exception):
    code = "error"
    exit_code = 1


# === Esquema / atributos ===
class MissingKey(GtrError):
    code = "missing-key"

    def __init__(self, key):
        super().__init__(f"attribute set has no answer for '{key}'")
        self.key = key


class DuplicateKey(GtrError):
    code = "duplicate-key"

    def __init__(self, key):
        super().__init__(f"attribute '{key}' answered more than once")
        self.key = key


class ConfidenceOutOfRange(GtrError):
    code = "confidence-range"


class UnparseableAnswer(GtrError):
    code = "unparseable-answer"

    def __init__(self, key, raw, image_id=None):
        where = f" (image {image_id})" if image_id else ""
        super().__init__(f"cannot read a yes/no answer for '{key}' from {raw!r}{where}")
        self.key = key
        self.raw = raw
        self.image_id = image_id


class UnknownImage(GtrError):
    code = "unknown-image"


# === Backends ===
class BackendFailure(GtrError):
    code = "backend"
    exit_code = 2

    def __init__(self, message, key=None, image_id=None):
        super().__init__(message)
        self.key = key
        self.image_id = image_id


class UnknownBackend(GtrError):
    code = "backend"
    exit_code = 2


# === Texto ===
class EmptyText(GtrError):
    code = "empty-text"


class EmptyExtraction(GtrError):
    code = "empty-extraction"


# === Perdas / métricas ===
class DegenerateBatch(GtrError):
    code = "degenerate-batch"


class NoNegativeAvailable(GtrError):
    code = "no-negative"


class DimensionMismatch(GtrError):
    code = "dimension-mismatch"


class InvalidBatch(GtrError):
    code = "invalid-batch"


class DegenerateCorpus(GtrError):
    code = "degenerate-corpus"


class NoRelevantItem(GtrError):
    code = "no-relevant-item"


# === Pipeline ===
class ParseError(GtrError):
    code = "parse"

    def __init__(self, message, line=None, path=None):
        where = f"{path}:{line}: " if line is not None else ""
        super().__init__(f"{where}{message}")
        self.line = line
        self.path = path


class DuplicateImageId(GtrError):
    code = "duplicate-image-id"


class MixedAttributeCoverage(GtrError):
    code = "mixed-attributes"


class EmptyTrainSet(GtrError):
    code = "empty-train-set"


class NonFiniteLoss(GtrError):
    code = "non-finite-loss"

    def __init__(self, epoch, step, parts):
        super().__init__(f"non-finite loss at epoch {epoch}, step {step}: {parts}")
        self.epoch = epoch
        self.step = step


class ConfigError(GtrError):
    code = "config"

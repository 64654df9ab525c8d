"""Error taxonomy; ``category`` feeds the CLI exit code."""


class BridgeError(Exception):
    category = "error"


class ConfigError(BridgeError):
    category = "config"


class ValidationError(BridgeError):
    category = "validation"


class FormatError(BridgeError):
    category = "format"


class AlignmentError(BridgeError):
    category = "alignment"

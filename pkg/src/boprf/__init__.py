"""Blocklisted oblivious PRF: a PRF evaluation the server refuses when the
client's input is close to a blocklisted item, without learning the input."""

from .algebra import FIELD, P128, Polynomial, PrimeField
from .blocklist import Blocklist, build_blocklist, is_blocked, measure_accuracy
from .crypto import PrfKey, PrpKey
from .embed import EmbeddingKey, Scheme, embed
from .metric import MetricParams, recover_gcd
from .mpc import DealerBackend, TrustedBackend
from .protocol import Keystore, ServerState, run_explicit_check, run_implicit_check

__version__ = "0.1.0"

__all__ = [
    "FIELD",
    "P128",
    "Polynomial",
    "PrimeField",
    "Blocklist",
    "build_blocklist",
    "is_blocked",
    "measure_accuracy",
    "PrfKey",
    "PrpKey",
    "EmbeddingKey",
    "Scheme",
    "embed",
    "MetricParams",
    "recover_gcd",
    "DealerBackend",
    "TrustedBackend",
    "Keystore",
    "ServerState",
    "run_explicit_check",
    "run_implicit_check",
]

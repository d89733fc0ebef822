"""Attribute management with a split-key support server.

A user's signing and decryption keys are shared with an attribute management
server, so credentials stay encrypted at rest and every use of them is logged
where only the user can read it back.
"""

from .crypto_suite import FULL, TEST, Rng, Suite
from .parties import Config, Deployment

__all__ = ["FULL", "TEST", "Rng", "Suite", "Config", "Deployment"]

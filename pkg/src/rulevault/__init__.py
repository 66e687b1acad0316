"""rulevault: end-to-end encrypted trigger-action automation.

Rules and device readings are plaintext only inside a simulated trusted
boundary; everything in transit and at rest rides in authenticated
envelopes. The package also ships the two evaluation harnesses used to
study the engine: a three-mode timing benchmark and a KL-divergence
access-trace analyzer.
"""

__version__ = "0.1.0"

from .model import (  # noqa: F401
    ActionCommand,
    Combinator,
    Condition,
    DeviceEvent,
    Operator,
    Rule,
    evaluate_rule,
    match_condition,
    parse_event,
    parse_rule,
    parse_ruleset,
)
from .envelope import (  # noqa: F401
    Envelope,
    NonceSequence,
    SealedRecord,
    SymmetricKey,
    decrypt,
    encrypt,
    seal_rules,
    unseal_rules,
)

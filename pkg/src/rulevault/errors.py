"""Exception hierarchy shared across the package.

Anything raised on a message-rejection path derives from AuthenticationError
so callers can treat "this message must not be acted on" uniformly.
"""


class RuleVaultError(Exception):
    """Base class for all errors raised by rulevault."""


class MessageSyntaxError(RuleVaultError):
    """Payload is not valid UTF-8 JSON."""


class SchemaError(RuleVaultError):
    """Payload is valid JSON but violates the rule/event schema."""


class AuthenticationError(RuleVaultError):
    """Envelope failed integrity, authenticity, or format checks."""


class KeyMismatch(AuthenticationError):
    """Envelope references a key id the receiver does not hold."""


class NonceExhausted(RuleVaultError):
    """The 64-bit nonce counter wrapped; the key must be retired."""


class PayloadTooLarge(RuleVaultError):
    """Plaintext or wire payload exceeds the 1 MiB limit."""


class BindingError(RuleVaultError):
    """A rule offered for sealing does not reference the target device."""


class AttestationRejected(RuleVaultError):
    """Quote verification failed; no key material was released."""


class ModeChangeWhileBusy(RuleVaultError):
    """set_mode called while events were in flight."""


class TracingDisabled(RuleVaultError):
    """Trace recording requested but the boundary has no trace sink."""


class EmptyTrace(RuleVaultError):
    """A distribution cannot be built from a trace with no symbols."""


class AlphabetMismatch(RuleVaultError):
    """KL divergence requires both distributions on the same alphabet."""


class InvalidConfig(RuleVaultError):
    """Benchmark or component configuration is out of range."""


class NotConnected(RuleVaultError):
    """Broker operation attempted on a closed connection."""


class TopicInvalid(RuleVaultError):
    """Topic does not match any of the allowed topic patterns."""


class PatternInvalid(RuleVaultError):
    """Subscription pattern is neither an exact topic nor a single-level wildcard."""


class Backpressure(RuleVaultError):
    """A subscriber queue stayed full; the publish was refused."""


class BrokerUnreachable(RuleVaultError):
    """Could not connect to the broker address."""


class UnknownCommand(RuleVaultError):
    """Actuator received a command it does not implement."""


class CommandTargetMismatch(RuleVaultError):
    """Command addressed to a different device than the actuator."""


class PublishError(RuleVaultError):
    """Rule provisioning could not be published or acknowledged."""


class ConfigError(RuleVaultError):
    """Component configuration file is missing, malformed, or unusable."""


class BindError(RuleVaultError):
    """Requested listen address is already in use."""

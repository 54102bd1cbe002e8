"""Key-insulated RFID mutual authentication: protocol, server, channels, games."""

from .errors import (
    ChannelClosed,
    ChannelError,
    ChannelTimeout,
    DecodeError,
    ProtocolError,
    RegistryError,
    SessionStateError,
)
from .keys import MasterKey, PartialKey, SessionKey, SharedKey, keygen, partial_key, session_key, update_key
from .primitives import BitString, HashFunction, Prng, concat, draw, hash_bits, split, xor
from .protocol import (
    Challenge,
    OpCounts,
    Reason,
    ServerAuth,
    SessionOutcome,
    SessionResult,
    TagAuth,
    TagNonce,
    TagState,
    Transcript,
    run_session,
    server_auth_entry,
    server_begin,
    server_verify,
    tag_respond,
    tag_verify_and_reply,
)
from .registry import Registry, ServerRecord

__version__ = "0.1.0"

class ProtocolError(Exception):
    """A peer sent something the protocol cannot accept."""


class DecodeError(ProtocolError):
    def __init__(self, reason: str, offset: int):
        super().__init__(f"{reason} (at byte offset {offset})")
        self.reason = reason
        self.offset = offset


class SessionStateError(RuntimeError):
    """Operation called out of order for the session phase."""


class ChannelError(Exception):
    pass


class ChannelTimeout(ChannelError):
    pass


class ChannelClosed(ChannelError):
    pass


class RegistryError(Exception):
    """Registry file is corrupt, duplicated, or of an unknown version."""

class ShardSearchError(Exception):
    pass


class DuplicatePath(ShardSearchError):
    pass


class EmptyIdentity(ShardSearchError):
    pass


class UnsupportedLanguage(ShardSearchError):
    pass


class CorruptShard(ShardSearchError):
    pass


class VersionMismatch(ShardSearchError):
    pass


class ParseError(ShardSearchError):
    """Query text could not be parsed.

    ``position`` is the byte offset into the UTF-8 encoded query where the
    problem was detected.
    """

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at byte {position})")
        self.message = message
        self.position = position


class MissingFile(ShardSearchError):
    pass


class AdapterFailure(ShardSearchError):
    pass


class ClientUnreachable(ShardSearchError):
    pass


class MalformedQuery(ShardSearchError):
    """The search service rejected a query as unparseable (HTTP 400)."""


class Overloaded(ShardSearchError):
    """The search service refused a request because it is at capacity (HTTP 503)."""


class RequestTimeout(ShardSearchError):
    pass

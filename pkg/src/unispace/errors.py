"""Error codes shared by the engines, the wire protocol and the CLI.

Every failure that can cross the wire carries a stable token from
this module; the protocol maps them 1:1 into error replies and the
CLI maps them onto exit codes.
"""

from __future__ import annotations

# Lookup / access
NOT_FOUND = "NOT_FOUND"
ACCESS_DENIED = "ACCESS_DENIED"
NOT_OWNER = "NOT_OWNER"
SCOPE_ESCALATION = "SCOPE_ESCALATION"

# Domain structure
ALREADY_MOUNTED = "ALREADY_MOUNTED"
SOURCE_UNREACHABLE = "SOURCE_UNREACHABLE"
INVALID_TEMPLATE = "INVALID_TEMPLATE"
CYCLE_DETECTED = "CYCLE_DETECTED"

# Portals / session
PORTAL_DANGLING = "PORTAL_DANGLING"
AT_ROOT = "AT_ROOT"
BAD_RECORD = "BAD_RECORD"
SIGNATURE_INVALID = "SIGNATURE_INVALID"
NO_ROUTE = "NO_ROUTE"

# Tasks
WRONG_STATE = "WRONG_STATE"
NO_PARENT = "NO_PARENT"
OPEN_CHILDREN = "OPEN_CHILDREN"

# Storage
DEPTH_LIMIT = "DEPTH_LIMIT"
LEASE_CONFLICT = "LEASE_CONFLICT"
STALE_HANDLE = "STALE_HANDLE"
EMPTY_CLIPBOARD = "EMPTY_CLIPBOARD"
NOT_IN_TRASH = "NOT_IN_TRASH"
LOG_CORRUPT = "LOG_CORRUPT"

# Protocol / server
MALFORMED = "MALFORMED"
UNSUPPORTED_VERSION = "UNSUPPORTED_VERSION"
AUTH_FAILED = "AUTH_FAILED"
UNREACHABLE = "UNREACHABLE"
UNKNOWN_TOOL = "UNKNOWN_TOOL"
BIND_FAILED = "BIND_FAILED"
REJECTED = "REJECTED"
LEASES_OPEN = "LEASES_OPEN"
ARCHIVE_CORRUPT = "ARCHIVE_CORRUPT"
SCRIPT_PARSE = "SCRIPT_PARSE"


class UniError(Exception):
    """Domain error with a stable wire-level code."""

    def __init__(self, code: str, message: str = ""):
        self.code = code
        self.message = message or code
        super().__init__(f"{code}: {self.message}" if message else code)


def not_found(what: str) -> UniError:
    return UniError(NOT_FOUND, f"no such {what}")


def denied(why: str = "no grant covers this operation") -> UniError:
    return UniError(ACCESS_DENIED, why)

"""Unified virtual user environment: personal-domain server, wire
protocol, scripting CLI and structure linter."""

__version__ = "0.1.0"

from .domain import Domain, DomainConfig
from .errors import UniError
from .model import ComplexityLimits
from .server import DomainServer

__all__ = ["Domain", "DomainConfig", "DomainServer", "ComplexityLimits", "UniError", "__version__"]

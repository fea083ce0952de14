"""Reference remote scorer for meshforge."""

__version__ = "0.1.0"

from .app import ServiceConfig, create_app  # noqa: F401

"""Reference autoseq-proto/1 server hosting a Hugging Face encoder-decoder."""

from .server import HFModelBackend, ProtocolServer, main

__version__ = "0.1.0"

__all__ = ["HFModelBackend", "ProtocolServer", "main"]

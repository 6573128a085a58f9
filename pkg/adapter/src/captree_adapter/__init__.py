"""HTTP adapter exposing vision/language model roles over the captree wire contract."""

from .canned import CannedStore, request_key
from .config import AdapterConfig, RoleConfig
from .server import create_app

__all__ = ["AdapterConfig", "CannedStore", "RoleConfig", "create_app", "request_key"]

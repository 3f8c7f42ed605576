"""blendkit: call declaratively described HTTP APIs through one uniform session."""

__version__ = "0.1.0"

from .controller import Blender, BlendResult, GeneralConfig  # noqa: E402
from .description import Catalog, ServerSpec, load_catalog, parse_server_spec, serialize_server_spec  # noqa: E402
from .chain import ChainResult, parse_chain, run_chain  # noqa: E402

__all__ = [
    "Blender",
    "BlendResult",
    "Catalog",
    "ChainResult",
    "GeneralConfig",
    "ServerSpec",
    "load_catalog",
    "parse_chain",
    "parse_server_spec",
    "run_chain",
    "serialize_server_spec",
]

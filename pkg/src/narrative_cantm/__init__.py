"""Classification-aware neural topic model for vaccine narrative posts."""

__version__ = "0.1.0"

from .labels import CLASSES  # noqa: E402

__all__ = ["CLASSES", "__version__"]

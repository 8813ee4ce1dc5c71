"""Rule-based local explanations for global forecasting models."""

from gfmexplain.errors import ExplainError, InputError, NumericalError

__version__ = "0.1.0"

__all__ = ["ExplainError", "InputError", "NumericalError", "__version__"]

"""Small-loss learning under partial feedback via freezing."""
from .core import (
    Distribution,
    EstimatedLossVector,
    FeedbackGraph,
    LossOracle,
    LossVector,
    RoundRecord,
    SmallLossError,
    expected_loss,
    make_distribution,
)

__all__ = [
    "Distribution",
    "EstimatedLossVector",
    "FeedbackGraph",
    "LossOracle",
    "LossVector",
    "RoundRecord",
    "SmallLossError",
    "expected_loss",
    "make_distribution",
]

__version__ = "0.1.0"

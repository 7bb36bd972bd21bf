"""Historic name trails: map a name as it was once held to its holder's current name."""

from .errors import HintsError
from .histname import HistoricName, PrimaryName, parse_historic_name
from .historian import Historian, HistorianConfig, Outcome, ResolutionResult

__all__ = [
    "HintsError",
    "HistoricName",
    "Historian",
    "HistorianConfig",
    "Outcome",
    "PrimaryName",
    "ResolutionResult",
    "parse_historic_name",
]

__version__ = "0.1.0"

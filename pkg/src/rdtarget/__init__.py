"""Rate-distortion learning targets for capacity-limited bandit and MDP agents."""
from .info import (
    ValidationError,
    entropy,
    kl_divergence,
    mutual_information,
)
from .rd import (
    RDPoint,
    ba_iterate,
    distortion_at_rate,
    rate_at_distortion,
    rd_curve,
)

__version__ = "0.1.0"

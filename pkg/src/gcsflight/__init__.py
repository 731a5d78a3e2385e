"""Coverage-aware UAV trajectory planning over a graph of convex sets."""

__version__ = "0.1.0"

from gcsflight.channel import BaseStation, ChannelParams
from gcsflight.regions import Airspace, FeasibleDisk, IntersectionGraph
from gcsflight.urllc import UrllcParams
from gcsflight.bezier import BezierCurve, SegmentPair

__all__ = [
    "Airspace",
    "BaseStation",
    "BezierCurve",
    "ChannelParams",
    "FeasibleDisk",
    "IntersectionGraph",
    "SegmentPair",
    "UrllcParams",
    "__version__",
]

"""
AGB Feedback
Antenna-group-beamforming CSI feedback compression and its evaluation harness
"""

from agb_feedback.core.agb import (
    AgbContext,
    FeedbackPacket,
    agb_decode,
    agb_encode,
    build_context,
    build_layout,
)
from agb_feedback.core.codebook import Codebook, line_packing_codebook, statistic_codebook
from agb_feedback.core.patterns import GroupPattern, PatternSet, select_pattern_set
from agb_feedback.exceptions import AgbError

__version__ = "0.1.0"

__all__ = [
    "AgbContext",
    "AgbError",
    "Codebook",
    "FeedbackPacket",
    "GroupPattern",
    "PatternSet",
    "agb_decode",
    "agb_encode",
    "build_context",
    "build_layout",
    "line_packing_codebook",
    "select_pattern_set",
    "statistic_codebook",
]

"""
Reference Instances with Known Ambiguity

Two hand-built source sets whose difference graphs have the shapes the
ambiguity analysis cares about. In both, none of the events A, B, C, D
occurs, yet the (k+1)-mer set has exactly two reconstructions.

TWO_PATH_EXCHANGE (k=5, n=14, m=2)
    Two sources share the 5-mers 00010 and 11101 in the same order and with
    the same gap, so the middle segments can be exchanged. Difference graph:
    2 maximal shared subpaths.

FOUR_PATH_CYCLE (k=6, n=16, m=4)
    Four sources linked in a ring by four shared 6-mers (first and second,
    third and fourth share a k-mer near the start; first and fourth, second
    and third near the end). Rewiring the ring gives the only alternative.
    Difference graph: 4 maximal shared subpaths.
"""

from core_model import SourceSet

TWO_PATH_EXCHANGE_K = 5
TWO_PATH_EXCHANGE = ("10001001110100", "10000101111011")
TWO_PATH_EXCHANGE_ALT = ("10001011110100", "10000100111011")

FOUR_PATH_CYCLE_K = 6
FOUR_PATH_CYCLE = (
    "0000001101001100",
    "0100000101100101",
    "1111110111001000",
    "1011111000100111",
)
FOUR_PATH_CYCLE_ALT = (
    "0100000110100111",
    "0000001011001000",
    "1011111011100101",
    "1111110001001100",
)


def two_path_exchange() -> SourceSet:
    return SourceSet.from_strings(TWO_PATH_EXCHANGE)


def two_path_exchange_alt() -> SourceSet:
    return SourceSet.from_strings(TWO_PATH_EXCHANGE_ALT)


def four_path_cycle() -> SourceSet:
    return SourceSet.from_strings(FOUR_PATH_CYCLE)


def four_path_cycle_alt() -> SourceSet:
    return SourceSet.from_strings(FOUR_PATH_CYCLE_ALT)

"""
slice-sim - Uplink Network Slicing Simulator

Monte Carlo evaluation of eMBB/URLLC/mMTC coexistence under OMA, NOMA
and RSMA: outage probabilities, maximum rates, rate regions and mMTC
arrival-rate frontiers.
"""

__version__ = "1.0.0"
TOOL_NAME = "slice-sim"

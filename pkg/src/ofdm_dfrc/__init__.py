"""OFDM-MIMO dual-function radar-communication simulator.

One waveform serves a monostatic radar and a downlink.  Bits select the
active transmit antennas (generalized spatial modulation) and fill the
QAM symbols; a few private subcarriers per OFDM symbol belong to a single
antenna each, which lets the radar form a virtual array.
"""

from importlib import metadata

try:
    __version__ = metadata.version("artifact")
except metadata.PackageNotFoundError:  # running from a source tree
    __version__ = "0.0.0"

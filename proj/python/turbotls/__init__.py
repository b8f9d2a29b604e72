"""TurboTLS delivery-layer toolkit.

Wire codecs, request-based fragmentation, bounded reassembly, HTTPS-RR
discovery, and a deterministic network simulator for comparing handshake
latency against plain TLS over TCP.
"""

from ._turbotls import *  # noqa: F401,F403
from ._turbotls import __version__  # noqa: F401

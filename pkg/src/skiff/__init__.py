"""skiff: a small scheduling compiler over a sea-of-nodes IR with fork-join parallelism."""

__version__ = "0.1.0"

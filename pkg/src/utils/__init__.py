"""
Shared logger and runtime knobs
"""
import logging
import os

LOGGER = logging.getLogger("putr")


def set_logging(verbose=True):
    """Attach a single stream handler to the package logger."""
    if not LOGGER.handlers:
        handler = logging.StreamHandler()
        handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(message)s", "%H:%M:%S"))
        LOGGER.addHandler(handler)
    LOGGER.setLevel(logging.INFO if verbose else logging.WARNING)
    return LOGGER


def set_threads():
    """Apply PUTR_NUM_THREADS to torch, if set. Returns the thread count in use."""
    import torch

    value = os.environ.get("PUTR_NUM_THREADS")
    if value:
        torch.set_num_threads(max(1, int(value)))
    return torch.get_num_threads()

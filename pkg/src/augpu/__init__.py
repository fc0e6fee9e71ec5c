from .errors import AugPUError
__version__ = "0.1.0"

from .logs import Timer, setup_logger

__all__ = ["setup_logger", "Timer"]

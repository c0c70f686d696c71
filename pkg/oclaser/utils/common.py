from typing import Mapping, Any, Callable
import importlib
import logging
import os
import sys
import time
import functools

from ..model.config import Config


def get_obj_from_str(string: str, reload: bool = False) -> Any:
    module, cls = string.rsplit(".", 1)
    if reload:
        module_imp = importlib.import_module(module)
        importlib.reload(module_imp)
    return getattr(importlib.import_module(module, package=None), cls)


def instantiate_from_config(config: Mapping[str, Any]) -> Any:
    if not "target" in config:
        raise KeyError("Expected key `target` to instantiate.")
    return get_obj_from_str(config["target"])(**config.get("params", dict()))


_HANDLER = None


def get_logger(name: str) -> logging.Logger:
    """
    Module logger writing `[LEVEL] name: message` lines to stderr.
    All oclaser loggers share one handler attached to the package root logger.
    """
    global _HANDLER
    root = logging.getLogger("oclaser")
    if _HANDLER is None:
        _HANDLER = logging.StreamHandler(sys.stderr)
        _HANDLER.setFormatter(logging.Formatter("[%(levelname)s] %(name)s: %(message)s"))
        root.addHandler(_HANDLER)
        root.setLevel(Config.log_level)
        root.propagate = False
    return logging.getLogger(name)


def set_log_level(level: int) -> None:
    get_logger("oclaser").setLevel(level)
    logging.getLogger("oclaser").setLevel(level)


def progress_enabled(progress: bool = True) -> bool:
    return progress and sys.stderr.isatty()


COUNT_TIME = bool(os.environ.get("OCLASER_COUNT_TIME", False))

def count_time_usage(func: Callable) -> Callable:
    if not COUNT_TIME:
        return func

    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        start = time.perf_counter()
        ret = func(*args, **kwargs)
        elapsed = time.perf_counter() - start
        get_logger(func.__module__).info(f"{func.__name__} took {elapsed:.3f} s")
        return ret
    return wrapper

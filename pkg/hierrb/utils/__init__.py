from .container import load_container, save_container
from .helpers import *

__all__ = ["load_container", "save_container"]

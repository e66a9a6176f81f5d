from . import offline, online, studies

__all__ = ["offline", "online", "studies"]

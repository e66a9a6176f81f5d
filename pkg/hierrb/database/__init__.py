from .database import Database
from .models import Run, ThetaEntry, GreedyStep

__all__ = ["Database", "Run", "ThetaEntry", "GreedyStep"]

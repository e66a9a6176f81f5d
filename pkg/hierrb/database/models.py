from datetime import datetime
from typing import Optional
from sqlalchemy import String, Float, Boolean, DateTime, Integer, Text, ForeignKey
from sqlalchemy.orm import DeclarativeBase, Mapped, mapped_column, relationship


class Base(DeclarativeBase):
    pass


class Run(Base):
    """Offline run of one experiment config"""
    __tablename__ = "runs"

    id: Mapped[int] = mapped_column(Integer, primary_key=True, autoincrement=True)
    config_hash: Mapped[str] = mapped_column(String(64), index=True)
    problem: Mapped[str] = mapped_column(String(50))
    sampling: Mapped[str] = mapped_column(String(20))

    # Status
    status: Mapped[str] = mapped_column(String(20), default="running")  # 'running', 'complete', 'failed'
    message: Mapped[Optional[str]] = mapped_column(Text, nullable=True)

    # Timing
    started_at: Mapped[datetime] = mapped_column(DateTime, default=datetime.utcnow)
    finished_at: Mapped[Optional[datetime]] = mapped_column(DateTime, nullable=True)
    wall_time: Mapped[Optional[float]] = mapped_column(Float, nullable=True)  # seconds

    output_dir: Mapped[str] = mapped_column(String(500))

    # Relations
    thetas: Mapped[list["ThetaEntry"]] = relationship(back_populates="run", cascade="all, delete-orphan")
    steps: Mapped[list["GreedyStep"]] = relationship(back_populates="run", cascade="all, delete-orphan")

    def __repr__(self):
        return f"<Run {self.id} {self.problem}/{self.sampling} {self.status}>"


class ThetaEntry(Base):
    """Saturation constant of one (N, M) pair"""
    __tablename__ = "theta_entries"

    id: Mapped[int] = mapped_column(Integer, primary_key=True, autoincrement=True)
    run_id: Mapped[int] = mapped_column(Integer, ForeignKey("runs.id"))
    variant: Mapped[str] = mapped_column(String(30))  # 'N+2', 'taylor_K2', 'greedy'
    n: Mapped[int] = mapped_column(Integer)
    m: Mapped[int] = mapped_column(Integer)
    theta: Mapped[float] = mapped_column(Float)
    valid: Mapped[bool] = mapped_column(Boolean)

    run: Mapped["Run"] = relationship(back_populates="thetas")

    def __repr__(self):
        return f"<ThetaEntry {self.variant} N={self.n} M={self.m} {self.theta:.4g}>"


class GreedyStep(Base):
    """One iteration of the greedy trace"""
    __tablename__ = "greedy_steps"

    id: Mapped[int] = mapped_column(Integer, primary_key=True, autoincrement=True)
    run_id: Mapped[int] = mapped_column(Integer, ForeignKey("runs.id"))
    n: Mapped[int] = mapped_column(Integer)
    mu: Mapped[str] = mapped_column(String(200))  # comma separated coordinates
    selector_value: Mapped[Optional[float]] = mapped_column(Float, nullable=True)
    max_value: Mapped[float] = mapped_column(Float)
    theta: Mapped[Optional[float]] = mapped_column(Float, nullable=True)
    k_n: Mapped[Optional[int]] = mapped_column(Integer, nullable=True)
    seconds: Mapped[float] = mapped_column(Float, default=0.0)

    run: Mapped["Run"] = relationship(back_populates="steps")

    def __repr__(self):
        return f"<GreedyStep run={self.run_id} N={self.n} mu=({self.mu})>"

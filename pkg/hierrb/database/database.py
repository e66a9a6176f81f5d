from datetime import datetime
from pathlib import Path
from typing import Iterable, List, Optional
from sqlalchemy import create_engine, select, update, func
from sqlalchemy.engine import make_url
from sqlalchemy.orm import Session, sessionmaker, selectinload

from .models import Base, Run, ThetaEntry, GreedyStep


class Database:
    def __init__(self, db_url: str):
        url = make_url(db_url)
        if url.get_backend_name() == "sqlite" and url.database not in (None, "", ":memory:"):
            Path(url.database).parent.mkdir(parents=True, exist_ok=True)
        self.engine = create_engine(db_url, echo=False)
        self.session_maker = sessionmaker(self.engine, class_=Session, expire_on_commit=False)

    def init_db(self):
        """Create the tables"""
        Base.metadata.create_all(self.engine)

    # ============ RUNS ============

    def start_run(self, config_hash: str, problem: str, sampling: str, output_dir: str) -> Run:
        with self.session_maker() as session:
            run = Run(
                config_hash=config_hash,
                problem=problem,
                sampling=sampling,
                status="running",
                output_dir=str(output_dir)
            )
            session.add(run)
            session.commit()
            session.refresh(run)
            return run

    def finish_run(self, run_id: int, status: str, message: str = None, wall_time: float = None):
        """Mark a run complete or failed"""
        with self.session_maker() as session:
            session.execute(
                update(Run)
                .where(Run.id == run_id)
                .values(status=status, message=message, wall_time=wall_time, finished_at=datetime.utcnow())
            )
            session.commit()

    def get_run(self, run_id: int) -> Optional[Run]:
        with self.session_maker() as session:
            result = session.execute(
                select(Run)
                .options(selectinload(Run.thetas), selectinload(Run.steps))
                .where(Run.id == run_id)
            )
            return result.scalar_one_or_none()

    def find_complete_run(self, config_hash: str) -> Optional[Run]:
        """Latest complete run of a config"""
        with self.session_maker() as session:
            result = session.execute(
                select(Run)
                .where(Run.config_hash == config_hash, Run.status == "complete")
                .order_by(Run.id.desc())
            )
            return result.scalars().first()

    def get_runs(self, limit: int = 50) -> List[Run]:
        with self.session_maker() as session:
            result = session.execute(select(Run).order_by(Run.id.desc()).limit(limit))
            return result.scalars().all()

    # ============ THETA ============

    def add_thetas(self, run_id: int, entries: Iterable[tuple]):
        """entries: (variant, N, M, Theta)"""
        with self.session_maker() as session:
            for variant, n, m, theta in entries:
                session.add(ThetaEntry(
                    run_id=run_id,
                    variant=variant,
                    n=int(n),
                    m=int(m),
                    theta=float(theta),
                    valid=bool(theta < 1.0)
                ))
            session.commit()

    def get_thetas(self, run_id: int, variant: str = None) -> List[ThetaEntry]:
        with self.session_maker() as session:
            query = select(ThetaEntry).where(ThetaEntry.run_id == run_id)
            if variant is not None:
                query = query.where(ThetaEntry.variant == variant)
            result = session.execute(query.order_by(ThetaEntry.variant, ThetaEntry.n))
            return result.scalars().all()

    # ============ GREEDY ============

    def add_greedy_steps(self, run_id: int, steps: Iterable):
        """steps: greedy trace steps (n, mu, selector_value, max_value, theta, k_n, seconds)"""
        with self.session_maker() as session:
            for step in steps:
                session.add(GreedyStep(
                    run_id=run_id,
                    n=step.n,
                    mu=",".join(repr(float(x)) for x in step.mu),
                    selector_value=step.selector_value,
                    max_value=step.max_value,
                    theta=step.theta,
                    k_n=step.k_n,
                    seconds=step.seconds
                ))
            session.commit()

    def get_greedy_steps(self, run_id: int) -> List[GreedyStep]:
        with self.session_maker() as session:
            result = session.execute(
                select(GreedyStep).where(GreedyStep.run_id == run_id).order_by(GreedyStep.n)
            )
            return result.scalars().all()

    # ============ STATISTICS ============

    def get_statistics(self) -> dict:
        """Run counts per status"""
        with self.session_maker() as session:
            result = session.execute(select(Run.status, func.count(Run.id)).group_by(Run.status))
            counts = {status: count for status, count in result.all()}
            return {
                "total": sum(counts.values()),
                "complete": counts.get("complete", 0),
                "failed": counts.get("failed", 0),
                "running": counts.get("running", 0),
            }

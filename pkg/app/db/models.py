"""SQLAlchemy models for experiment runs and their trials."""
from sqlalchemy import Boolean, DateTime, Float, ForeignKey, Integer, String, Text
from sqlalchemy.orm import Mapped, mapped_column, relationship
from sqlalchemy.sql import func

from app.db.database import Base  # Base is defined in database.py


class ExperimentRun(Base):
    __tablename__ = "experiment_runs"

    id: Mapped[int] = mapped_column(primary_key=True)
    map_name: Mapped[str] = mapped_column(String(128))
    backend: Mapped[str] = mapped_column(String(32))  # "oracle" or "tabular"
    base_seed: Mapped[int] = mapped_column(Integer)
    trials: Mapped[int] = mapped_column(Integer)
    config_json: Mapped[str] = mapped_column(Text)  # full ExperimentConfig dump
    created_at: Mapped[DateTime] = mapped_column(DateTime, server_default=func.now())

    results: Mapped[list["TrialResult"]] = relationship(back_populates="run", cascade="all, delete-orphan")


class TrialResult(Base):
    __tablename__ = "trial_results"

    id: Mapped[int] = mapped_column(primary_key=True)
    run_id: Mapped[int] = mapped_column(ForeignKey("experiment_runs.id"))
    trial: Mapped[int] = mapped_column(Integer)
    seed: Mapped[int] = mapped_column(Integer)
    algorithm: Mapped[str] = mapped_column(String(32))
    K: Mapped[float | None] = mapped_column(Float, nullable=True)  # NULL means no limit
    alpha: Mapped[float] = mapped_column(Float)
    difficulty: Mapped[float | None] = mapped_column(Float, nullable=True)  # NULL under the room protocol
    planned: Mapped[bool] = mapped_column(Boolean, default=False)
    success: Mapped[bool] = mapped_column(Boolean, default=False)
    steps: Mapped[int] = mapped_column(Integer)
    negated_reward: Mapped[float] = mapped_column(Float)
    realized_cost: Mapped[float] = mapped_column(Float)
    certificate_cvar: Mapped[float | None] = mapped_column(Float, nullable=True)
    violated: Mapped[bool] = mapped_column(Boolean, default=False)
    created_at: Mapped[DateTime] = mapped_column(DateTime, server_default=func.now())

    run: Mapped["ExperimentRun"] = relationship(back_populates="results")

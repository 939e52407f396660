"""Database setup for experiment results."""
from typing import Iterator, Optional

from sqlalchemy import create_engine
from sqlalchemy.engine import Engine
from sqlalchemy.orm import Session, declarative_base, sessionmaker

from app.core.config import get_settings

# Create Base here to avoid circular import
Base = declarative_base()

DEFAULT_DATABASE_URL = "sqlite:///./coprl_results.db"


def make_engine(url: Optional[str] = None) -> Engine:
    url = url or get_settings().results_db_url or DEFAULT_DATABASE_URL
    connect_args = {"check_same_thread": False} if url.startswith("sqlite") else {}
    return create_engine(url, connect_args=connect_args)


def init_db(url: Optional[str] = None) -> sessionmaker:
    """Create the tables for ``url`` and return a session factory bound to it."""
    # Import models here to ensure they're registered with Base
    from app.db import models  # noqa: F401
    engine = make_engine(url)
    Base.metadata.create_all(bind=engine)
    return sessionmaker(autocommit=False, autoflush=False, bind=engine)


def get_db(url: Optional[str] = None) -> Iterator[Session]:
    """Get database session"""
    db = init_db(url)()
    try:
        yield db
    finally:
        db.close()

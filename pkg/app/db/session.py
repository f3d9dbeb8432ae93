from pathlib import Path

from sqlalchemy.pool import StaticPool
from sqlmodel import Session, SQLModel, create_engine, select

from app.core.config import settings
from app.models.run import RunRecord, RunRecordCreate, RunRecordRead


def _engine_for(url: str):
    if url in ("sqlite://", "sqlite:///:memory:"):
        return create_engine(url, connect_args={"check_same_thread": False}, poolclass=StaticPool)
    if url.startswith("sqlite:///"):
        Path(url[len("sqlite:///"):]).parent.mkdir(parents=True, exist_ok=True)
    return create_engine(url, connect_args={"check_same_thread": False})


engine = _engine_for(settings.LEDGER_URL)


def SessionLocal():
    """Create a new ledger session"""
    return Session(engine)


def init_db():
    SQLModel.metadata.create_all(engine)


def record_run(record_in: RunRecordCreate) -> RunRecordRead:
    db_obj = RunRecord.model_validate(record_in)
    with SessionLocal() as session:
        session.add(db_obj)
        session.commit()
        session.refresh(db_obj)
        return RunRecordRead.model_validate(db_obj)


def recent_runs(limit: int = 20) -> list[RunRecordRead]:
    with SessionLocal() as session:
        rows = session.exec(select(RunRecord).order_by(RunRecord.id.desc()).limit(limit)).all()
        return [RunRecordRead.model_validate(row) for row in rows]

from datetime import datetime, timezone
from enum import Enum
from typing import Optional

from sqlmodel import Field, SQLModel


class RunStatus(str, Enum):
    SUCCEEDED = "succeeded"
    FAILED = "failed"


class RunRecordBase(SQLModel):
    command: str
    config_hash: str
    out_dir: str
    status: RunStatus = Field(default=RunStatus.SUCCEEDED)
    exit_code: int = 0
    summary: str = "{}"


class RunRecord(RunRecordBase, table=True):
    id: Optional[int] = Field(default=None, primary_key=True)
    created_at: datetime = Field(default_factory=lambda: datetime.now(timezone.utc))


class RunRecordCreate(RunRecordBase):
    pass


class RunRecordRead(RunRecordBase):
    id: int
    created_at: datetime

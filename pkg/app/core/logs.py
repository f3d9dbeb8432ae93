import logging

from app.core.config import settings

_FORMAT = "[%(component)s] %(message)s"


class ComponentFilter(logging.Filter):
    """Adds a `component` tag from the logger name: app.physics.radial_profile -> Radial Profile."""

    def filter(self, record: logging.LogRecord) -> bool:
        tail = record.name.rsplit(".", 1)[-1]
        record.component = tail.replace("_", " ").title()
        return True


def setup_logging(level: str | None = None) -> None:
    root = logging.getLogger("app")
    if any(isinstance(f, ComponentFilter) for h in root.handlers for f in h.filters):
        root.setLevel(level or settings.LOG_LEVEL)
        return
    handler = logging.StreamHandler()
    handler.addFilter(ComponentFilter())
    handler.setFormatter(logging.Formatter(_FORMAT))
    root.addHandler(handler)
    root.setLevel(level or settings.LOG_LEVEL)
    root.propagate = False

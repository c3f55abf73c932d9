# envguard/services/report_store.py
import hashlib
from pathlib import Path
from typing import List, Optional, Union


class ReportStore:
    """
    Append-only artifact store. Each artifact is written once under a name
    derived from the sha256 of its content; storing the same bytes again is a
    no-op that returns the same name.
    """

    def __init__(self, root: Union[str, Path], logger=None):
        self.root = Path(root)
        self.logger = logger

    @staticmethod
    def digest(data: Union[str, bytes]) -> str:
        if isinstance(data, str):
            data = data.encode("utf-8")
        return hashlib.sha256(data).hexdigest()

    def put(self, kind: str, data: Union[str, bytes], suffix: str = ".txt") -> str:
        name = f"{kind}-{self.digest(data)[:16]}{suffix}"
        path = self.root / name
        if path.exists():
            return name
        self.root.mkdir(parents=True, exist_ok=True)
        if isinstance(data, str):
            path.write_text(data, encoding="utf-8")
        else:
            path.write_bytes(data)
        if self.logger:
            self.logger.debug("stored %s", path)
        return name

    def has(self, name: str) -> bool:
        return (self.root / name).is_file()

    def get(self, name: str) -> Optional[str]:
        path = self.root / name
        return path.read_text(encoding="utf-8") if path.is_file() else None

    def names(self, kind: Optional[str] = None) -> List[str]:
        if not self.root.is_dir():
            return []
        prefix = f"{kind}-" if kind else ""
        return sorted(p.name for p in self.root.iterdir() if p.is_file() and p.name.startswith(prefix))

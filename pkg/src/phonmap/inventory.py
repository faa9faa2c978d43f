from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path

from .errors import InvalidArgumentError

BLANK = "<blank>"


@dataclass(frozen=True)
class SymbolInventory:
    """Ordered linguistic symbols; the CTC blank sits implicitly at index ``len(self)``."""

    symbols: tuple[str, ...]

    def __post_init__(self):
        symbols = tuple(self.symbols)
        object.__setattr__(self, "symbols", symbols)
        seen = set()
        for s in symbols:
            if not isinstance(s, str) or not s or s != s.strip() or "\t" in s or "\n" in s:
                raise InvalidArgumentError(f"invalid symbol {s!r}: must be a non-empty string without whitespace padding or tabs")
            if s == BLANK:
                raise InvalidArgumentError(f"{BLANK!r} is reserved for the CTC blank")
            if s.startswith("#"):
                raise InvalidArgumentError(f"symbol {s!r} may not start with '#'")
            if s in seen:
                raise InvalidArgumentError(f"duplicate symbol {s!r}")
            seen.add(s)
        object.__setattr__(self, "_index", {s: i for i, s in enumerate(symbols)})

    def __len__(self) -> int:
        return len(self.symbols)

    def __getitem__(self, i: int) -> str:
        return self.symbols[i]

    @property
    def blank(self) -> int:
        return len(self.symbols)

    @property
    def width(self) -> int:
        """Posteriorgram width: symbols plus blank."""
        return len(self.symbols) + 1

    def index(self, symbol: str) -> int:
        try:
            return self._index[symbol]
        except KeyError:
            raise InvalidArgumentError(f"unknown symbol {symbol!r}") from None

    def __contains__(self, symbol) -> bool:
        return symbol in self._index

    @property
    def digest(self) -> str:
        text = "\n".join(self.symbols) + "\n"
        return hashlib.sha256(text.encode("utf-8")).hexdigest()

    def to_text(self) -> str:
        return "".join(s + "\n" for s in self.symbols)

    def save(self, path) -> None:
        Path(path).write_text(self.to_text(), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "SymbolInventory":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        return cls(tuple(lines))

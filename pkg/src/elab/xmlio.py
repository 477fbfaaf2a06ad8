"""Small canonical XML writer.

Both the manifest codec and the data-access wire protocol need byte-stable
output: fixed element order is the caller's job, this writer contributes
sorted attributes, fixed indentation, and stable escaping.
"""

from __future__ import annotations

from xml.sax.saxutils import escape, quoteattr

_DECLARATION = '<?xml version="1.0" encoding="UTF-8"?>'


def fmt_float(x: float) -> str:
    return repr(float(x))


def fmt_bool(x: bool) -> str:
    return "true" if x else "false"


def parse_bool(text: str) -> bool:
    if text == "true":
        return True
    if text == "false":
        return False
    raise ValueError(f"not a boolean: {text!r}")


class XmlWriter:
    """Builds an indented XML document with deterministic attribute order."""

    def __init__(self, indent: str = "  ", declaration: bool = True):
        self._indent = indent
        self._lines: list[str] = [_DECLARATION] if declaration else []
        self._stack: list[str] = []

    def _attrs(self, attrs: dict[str, str | None]) -> str:
        parts = []
        for key in sorted(attrs):
            value = attrs[key]
            if value is None:
                continue
            parts.append(f" {key}={quoteattr(value)}")
        return "".join(parts)

    def open(self, tag: str, **attrs: str | None) -> None:
        pad = self._indent * len(self._stack)
        self._lines.append(f"{pad}<{tag}{self._attrs(attrs)}>")
        self._stack.append(tag)

    def close(self) -> None:
        tag = self._stack.pop()
        pad = self._indent * len(self._stack)
        self._lines.append(f"{pad}</{tag}>")

    def element(self, tag: str, text: str | None = None, **attrs: str | None) -> None:
        pad = self._indent * len(self._stack)
        if text is None:
            self._lines.append(f"{pad}<{tag}{self._attrs(attrs)}/>")
        else:
            self._lines.append(
                f"{pad}<{tag}{self._attrs(attrs)}>{escape(text)}</{tag}>"
            )

    def result(self) -> str:
        if self._stack:
            raise RuntimeError(f"unclosed elements: {self._stack}")
        return "\n".join(self._lines) + "\n"

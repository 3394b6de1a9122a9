"""Strict reader for the TOML subset used by run configurations.

The standard library gained a TOML parser only in 3.11 and this package
supports 3.10, so configs are parsed here. Supported: ``[section]``
tables, ``key = value`` pairs with strings, integers, floats, booleans
and (nested) arrays, plus ``#`` comments. Anything else is a ConfigError.
"""

from __future__ import annotations

from .errors import ConfigError


def loads(text: str) -> dict:
    root: dict = {}
    current = root
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = _strip_comment(raw).strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError(f"line {lineno}: malformed table header {raw!r}")
            name = line[1:-1].strip()
            if not name or "[" in name or "]" in name:
                raise ConfigError(f"line {lineno}: malformed table header {raw!r}")
            current = root
            for part in name.split("."):
                part = part.strip()
                if not part:
                    raise ConfigError(f"line {lineno}: empty table name component")
                current = current.setdefault(part, {})
                if not isinstance(current, dict):
                    raise ConfigError(f"line {lineno}: {name!r} is not a table")
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip().strip('"')
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        if key in current:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        current[key] = _parse_value(value.strip(), lineno)
    return root


def load(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return loads(fh.read())


def _strip_comment(line: str) -> str:
    out = []
    in_string = False
    for ch in line:
        if ch == '"':
            in_string = not in_string
        if ch == "#" and not in_string:
            break
        out.append(ch)
    return "".join(out)


def _parse_value(token: str, lineno: int):
    if not token:
        raise ConfigError(f"line {lineno}: missing value")
    if token.startswith("["):
        value, rest = _parse_array(token, lineno)
        if rest.strip():
            raise ConfigError(f"line {lineno}: trailing data after array")
        return value
    return _parse_scalar(token, lineno)


def _parse_scalar(token: str, lineno: int):
    if token.startswith('"'):
        if len(token) < 2 or not token.endswith('"'):
            raise ConfigError(f"line {lineno}: unterminated string")
        return token[1:-1]
    if token == "true":
        return True
    if token == "false":
        return False
    try:
        if any(c in token for c in ".eE") and not token.startswith("0x"):
            return float(token)
        return int(token)
    except ValueError:
        try:
            return float(token)
        except ValueError:
            raise ConfigError(f"line {lineno}: cannot parse value {token!r}") from None


def _parse_array(token: str, lineno: int):
    assert token.startswith("[")
    items = []
    rest = token[1:]
    while True:
        rest = rest.lstrip().lstrip(",").lstrip()
        if not rest:
            raise ConfigError(f"line {lineno}: unterminated array")
        if rest.startswith("]"):
            return items, rest[1:]
        if rest.startswith("["):
            value, rest = _parse_array(rest, lineno)
            items.append(value)
            continue
        end = len(rest)
        depth_string = rest.startswith('"')
        for i, ch in enumerate(rest):
            if depth_string:
                if ch == '"' and i > 0:
                    end = i + 1
                    break
            elif ch in ",]":
                end = i
                break
        items.append(_parse_scalar(rest[:end].strip(), lineno))
        rest = rest[end:]

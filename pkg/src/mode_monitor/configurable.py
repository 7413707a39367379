from __future__ import annotations

import abc
import json
import logging
import typing

from . import errors

log = logging.getLogger(__name__)

PayloadType = typing.TypeVar('PayloadType')

class HasPath:
    @abc.abstractmethod
    def path(self) -> typing.List[str]:
        raise RuntimeError(f"Unsupported method")

class Var(typing.Generic[PayloadType]):
    """Named configuration value with an optional default and an optional closed option list"""
    _parent: typing.Union[HasPath, None]
    _name: typing.Union[str, None]
    _default: typing.Union[PayloadType, None]
    _selected: typing.Union[PayloadType, None]
    _options: typing.List[PayloadType]

    def __init__(self, parent: typing.Union[HasPath, None], name: typing.Union[str, None], default: typing.Union[PayloadType,None]=None, *options: PayloadType):
        self._parent = parent
        self._name = name
        self._default = default
        self._selected = None
        self._options = list(options)

    def path(self) -> typing.List[str]:
        if self._name is None:
            raise RuntimeError('name has not been set so path is not yet determined')

        terms: typing.List[str] = []
        if self._parent is not None:
            terms += self._parent.path()
        terms += [ self._name ]
        return terms

    def proto(self):
        return f"VAR {'.'.join(self.path())}"

    def field(self) -> str:
        return '.'.join(self.path())

    def __str__(self):
        value = '?' if self._selected is None else str(self._selected)
        return f"{self._name} = {value}"

    def __bool__(self):
        return self._selected is not None

    def configure(self):
        if self._selected is None and self._default is not None:
            log.debug(f"DEFAULT {self.proto()} := {self._default}")
            self._selected = self._default
        return bool(self)

    def __call__(self) -> PayloadType:
        if self._selected is None:
            if self._default is None:
                raise errors.ConfigurationError(self.field(), "read before a value has been selected")
            self._selected = self._default
        return self._selected

    def clear(self):
        self._selected = None
        return self

    def select(self, value: PayloadType):
        if self._options and value is not None and value not in self._options:
            raise errors.ConfigurationError(self.field(), f"{value!r} is not one of {self._options}")
        self._selected = value
        return self

    def select_text(self, text: str):
        """Select a value given on the command line, coerced to the type of the default"""
        kind = type(self._default) if self._default is not None else str
        try:
            if text.lstrip().startswith(('[', '{')) or (self._default is None and is_number(text)):
                value: typing.Any = json.loads(text)
            elif kind is bool:
                value = text.strip().lower() in ('1', 'true', 'yes', 'on')
            elif kind in (int, float):
                value = kind(text)
            elif kind in (list, tuple):
                value = kind(float(item) if '.' in item else int(item) for item in text.split(','))
            else:
                value = text
        except ValueError:
            # json.JSONDecodeError is a ValueError
            raise errors.ConfigurationError(self.field(), f"cannot read {text!r} as {kind.__name__}")
        return self.select(value)

def is_number(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True

#! env python3

from __future__ import annotations

import abc
import logging
import os
import time
import typing

from . import configurable
from . import errors
from . import formats

log = logging.getLogger(__name__)

class Persistor:
    file_name: str
    root: Artifact

    @abc.abstractmethod
    def save(self, *artifacts: Artifact):
        pass

class NoPersistor(Persistor):
    def save(self, *artifacts: Artifact):
        pass

class PersistInFile(Persistor):
    """Keeps one artifact on disk; saves go through a .next file and an atomic rename"""
    def __init__(self, file_name: str, root: Artifact):
        self.file_name = file_name
        self.root = root

    def save(self, *artifacts: Artifact):
        next_file_name = f"{self.file_name}.next"
        with open(next_file_name, 'wt') as fp:
            fp.write(formats.dumps(self.root))
        os.replace(next_file_name, self.file_name)

    def load(self):
        if os.path.exists(self.file_name):
            formats.load_file(self.file_name, into=self.root)
        return self.root

class Artifact(configurable.HasPath):
    """Base class for configuration objects and files written by the pipeline.
    Every configurable.Var attribute is marshalled as a plain JSON value under its own name."""
    name: typing.Union[ None, str ]

    def __init__(self, artifact_path: typing.Union[ None, typing.List[str] ] = None):
        if artifact_path is not None:
            self.name = '.'.join(artifact_path)
        else:
            self.name = None

    def __str__(self):
        name = f'"{self.name}"' if self.name is not None else '?'
        return f"{self.__class__.__qualname__}:{name}"

    def path(self) -> typing.List[str]:
        return [] if self.name is None else self.name.split('.')

    def vars(self) -> typing.Dict[str, configurable.Var]:
        return { key: value for key, value in self.__dict__.items() if isinstance(value, configurable.Var) }

    def alias(self, **kwargs):
        for key, value in kwargs.items():
            if isinstance(value, configurable.Var):
                self.__dict__[key] = value
            elif key in self.vars():
                self.vars()[key].select(value)
            else:
                raise errors.ConfigurationError(f"{self.name or self.__class__.__qualname__}.{key}", "no such configuration field")
        return self

    def marshal(self, visitor: formats.JSONReader|formats.JSONWriter, inner: typing.Callable[[ formats.JSONReader|formats.JSONWriter ], typing.Any ] = lambda visitor: 0 ):
        visitor.beginObject(self)
        for key in self.vars():
            visitor.var(key)
        inner(visitor)
        visitor.endObject(self)

    def collect(self, var: typing.Set[configurable.Var]):
        """Gather every configuration variable reachable from this artifact"""
        for key, value in self.__dict__.items():
            if isinstance(value, configurable.Var):
                var.add(value)
            elif isinstance(value, Artifact):
                value.collect(var)

    def configure(self):
        for value in self.vars().values():
            value.configure()
        return self

    def settings(self) -> typing.Dict[str, typing.Any]:
        """Plain dict of every selected or defaulted value, in declaration order"""
        return { key: value() if (value or value._default is not None) else None for key, value in self.vars().items() }

class Phase:
    """Logs BEGIN/END around one stage of work and saves the persistor when the stage completes"""
    description: str
    persistor: Persistor
    artifacts: typing.List[Artifact]

    def __init__(self, description: str, persistor: None|Persistor = None, *artifacts: Artifact):
        self.description = description
        self.persistor = persistor if persistor is not None else NoPersistor()
        self.artifacts = list(artifacts)
        self.started = 0.0

    def __enter__(self):
        log.info(f"BEGIN {self.description}")
        self.started = time.perf_counter()
        return self

    def __exit__(self, type, value, traceback):
        elapsed = time.perf_counter() - self.started
        if type is not None:
            log.info(f"FAIL  {self.description} after {elapsed:.3f}s")
            return False
        log.info(f"END   {self.description} ({elapsed:.3f}s)")
        self.persistor.save(*self.artifacts)
        return False

    def elapsed(self) -> float:
        return time.perf_counter() - self.started


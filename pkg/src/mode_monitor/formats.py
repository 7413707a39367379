#! env python3

from __future__ import annotations

from typing import Any, Dict

import hashlib
import importlib
import json
import logging

import numpy as np

from . import errors

log = logging.getLogger(__name__)

PACKAGE = __name__.rsplit('.', 1)[0]

def encode_array(array: np.ndarray) -> Dict[str, Any]:
    """Encode an ndarray as {'_ndarray_object': ..., 'dtype': ..., 'shape': ...}; complex arrays keep real and imag lists"""
    array = np.asarray(array)
    if np.iscomplexobj(array):
        data: Any = dict(real=array.real.ravel().tolist(), imag=array.imag.ravel().tolist())
    else:
        data = array.ravel().tolist()
    return dict(_ndarray_object=data, dtype=str(array.dtype), shape=list(array.shape))

def decode_array(dct: Dict[str, Any]) -> np.ndarray:
    data = dct['_ndarray_object']
    dtype = np.dtype(dct.get('dtype', 'float64'))
    shape = tuple(dct.get('shape', [len(data)]))
    if isinstance(data, dict):
        array = np.array(data['real'], dtype=np.float64) + 1j * np.array(data['imag'], dtype=np.float64)
        return array.astype(dtype).reshape(shape)
    return np.array(data, dtype=dtype).reshape(shape)

def plain(value: Any) -> Any:
    """Convert numpy scalars and arrays to JSON-native values"""
    if isinstance(value, np.ndarray):
        return encode_array(value)
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, (list, tuple)):
        return [ plain(item) for item in value ]
    if isinstance(value, dict):
        return { str(key): plain(item) for key, item in value.items() }
    return value

def lookup_class(class_name: str):
    """Resolve 'module.Qualified.Name' relative to this package"""
    module_name, *suffix = class_name.split('.')
    try:
        found: Any = importlib.import_module(f"{PACKAGE}.{module_name}")
    except ImportError:
        raise errors.ConfigurationError('__class__', f"no module {module_name} for class {class_name}")
    prefix = [ module_name ]
    for term in suffix:
        if not hasattr(found, term):
            raise errors.ConfigurationError('__class__', f"In module {'.'.join(prefix)} cannot locate definition for class {'.'.join(suffix)}")
        found = getattr(found, term)
        prefix.append(term)
    return found

def class_name_of(obj) -> str:
    path = [*obj.__class__.__module__.split('.'), *obj.__class__.__qualname__.split('.')]
    return '.'.join(path[1:])

class JSONReader:
    """Reads in-memory representation from semi-self-describing JSON by introspecting objects using their marshal method"""
    def __init__(self, json, refs=None):
        self.json = json
        self.obj = None
        self.refs = refs if refs is not None else dict()
        self.is_ref = False

    def beginObject(self, obj):
        """Must be called at the start of any marshal method. Tells this object that we are visiting the body of that object next"""
        if self.obj is None:
            self.obj = obj
        class_name = self.json.get('__class__', class_name_of(obj))
        if class_name != class_name_of(obj):
            raise errors.ConfigurationError('__class__', f"expected {class_name_of(obj)} but file holds {class_name}")
        by_id = self.refs.setdefault(class_name, {})
        if '__id__' in self.json:
            if self.json['__id__'] in by_id:
                self.obj = by_id[self.json['__id__']]
                self.is_ref = True
            else:
                by_id[self.json['__id__']] = self.obj

    def endObject(self, obj):
        """Must be called at the end of any marshal method. Tells this object that we are done visiting the body of that object"""
        known = set(obj.vars()) if hasattr(obj, 'vars') else set()
        for key in self.json:
            if not key.startswith('__') and key not in known and not hasattr(obj, key):
                raise errors.ConfigurationError(f"{class_name_of(obj)}.{key}", "unknown field")

    def inline(self, attr_name):
        """For the in-memory object currently being read from JSON, read the value of attribute :attr_name from JSON propery attr_name."""
        if self.json is None:
            raise RuntimeError('No JSON here')
        elif attr_name in self.json:
            setattr(self.obj, attr_name, JSONReader(self.json[attr_name], self.refs).read(getattr(self.obj, attr_name, None)))
        elif not self.is_ref:
            log.warning(f"While reading object of type {self.obj.__class__.__qualname__} property {attr_name} is missing")

    def var(self, attr_name):
        """Read a plain JSON value into the configurable.Var held by attribute :attr_name"""
        if self.json is not None and attr_name in self.json:
            value = JSONReader(self.json[attr_name], self.refs).read()
            target = getattr(self.obj, attr_name)
            if value is None:
                target.clear()
            else:
                target.select(value)

    def instantiate(self, class_name: str):
        klass = lookup_class(class_name)
        return klass()

    def read(self, obj=None):
        if isinstance(self.json, list):
            self.obj = [ JSONReader(item, self.refs).read() for item in self.json ]
        elif isinstance(self.json, dict):
            if '_ndarray_object' in self.json:
                self.obj = decode_array(self.json)
            elif obj is not None and hasattr(obj, 'marshal'):
                self.obj = obj
                self.obj.marshal(self)
            elif '__class__' in self.json:
                self.obj = self.instantiate(self.json['__class__'])
                self.obj.marshal(self)
            else:
                self.obj = { key: JSONReader(value, self.refs).read() for key, value in self.json.items() }
        else:
            self.obj = self.json
        return self.obj

class JSONWriter:
    """Write in-memory representation to semi-self-describing JSON by introspecting objects using their marshal method"""
    obj: Any
    json: Any
    is_ref: bool
    refs: Any

    def __init__(self, obj, refs=None):
        self.obj = obj
        self.json = None
        self.is_ref = False
        self.refs = refs if refs is not None else dict()

    def beginObject(self, obj):
        """Must be called at the start of any marshal method. Tells this object that we are visiting the body of that object next"""
        self.json = {}
        class_name = class_name_of(obj)
        by_id = self.refs.setdefault(class_name, {})
        self.json['__class__'] = class_name
        if id(obj) in by_id:
            self.is_ref = True
        else:
            by_id[id(obj)] = str(len(by_id))
        self.json['__id__'] = by_id[id(obj)]

    def endObject(self, obj):
        pass

    def inline(self, attr_name):
        """For the in-memory object currently being written to JSON, write the value of attribute :attr_name to JSON propery attr_name."""
        if not self.is_ref:
            self.json[attr_name] = JSONWriter(getattr(self.obj, attr_name), self.refs).toJSON()

    def var(self, attr_name):
        """Write the effective value (selected, else default) of the configurable.Var held by :attr_name"""
        if not self.is_ref:
            target = getattr(self.obj, attr_name)
            value = target._selected if target else target._default
            self.json[attr_name] = plain(value)

    def toJSON(self):
        if self.json is not None:
            pass
        elif isinstance(self.obj, np.ndarray):
            self.json = encode_array(self.obj)
        elif isinstance(self.obj, (list, tuple)):
            self.json = [ JSONWriter(item, self.refs).toJSON() for item in self.obj ]
        elif isinstance(self.obj, dict):
            self.json = { str(key): JSONWriter(value, self.refs).toJSON() for key, value in self.obj.items() }
        elif hasattr(self.obj, 'marshal'):
            self.obj.marshal(self)
        else:
            self.json = plain(self.obj)
        return self.json

    def toString(self):
        return json.dumps(self.toJSON(), indent=4)

def digest(settings: Dict[str, Any]) -> str:
    """sha256 of the canonical JSON (sorted keys, no whitespace) of plain settings"""
    canonical = json.dumps(plain(settings), sort_keys=True, separators=(',', ':'))
    return hashlib.sha256(canonical.encode('utf-8')).hexdigest()

def dumps(obj) -> str:
    return JSONWriter(obj).toString()

def loads(text: str, into=None):
    try:
        as_json = json.loads(text)
    except json.JSONDecodeError as e:
        raise errors.ConfigurationError('json', f"malformed JSON at line {e.lineno} column {e.colno}: {e.msg}")
    return JSONReader(as_json).read(into)

def load_file(file_name: str, into=None):
    try:
        with open(file_name, 'rt') as fp:
            text = fp.read()
    except OSError as e:
        raise errors.ConfigurationError(file_name, f"cannot read file: {e.strerror}")
    return loads(text, into)

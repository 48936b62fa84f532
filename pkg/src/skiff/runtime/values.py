"""Runtime values and the tensor JSON interchange format.

Scalars are numpy scalar types so both executors perform identical IEEE
arithmetic (a float32 multiply is a float32 multiply everywhere). Arrays of
scalars are numpy arrays; products are Python tuples; summations are
(variant tag, value) pairs.
"""

from __future__ import annotations

import json

import numpy as np

from ..dynconst import evaluate
from ..types import (ArrayType, BoolType, FloatType, IntType, ProductType,
                     SummationType, Type, is_scalar, numpy_dtype)


class RuntimeError_(Exception):
    pass


def typed_scalar(value, ty: Type):
    if isinstance(ty, BoolType):
        return bool(value)
    if isinstance(ty, IntType):
        return numpy_dtype(ty).type(int(value))
    if isinstance(ty, FloatType):
        return numpy_dtype(ty).type(float(value))
    raise RuntimeError_(f"not a scalar type: {ty}")


def zero_value(ty: Type, dc_params):
    if is_scalar(ty):
        return typed_scalar(0, ty) if not isinstance(ty, BoolType) else False
    if isinstance(ty, ArrayType):
        shape = tuple(evaluate(e, dc_params) for e in ty.extents)
        if is_scalar(ty.element):
            return np.zeros(shape, dtype=numpy_dtype(ty.element))
        flat = np.empty(int(np.prod(shape)), dtype=object)
        for i in range(flat.size):
            flat[i] = zero_value(ty.element, dc_params)
        return flat.reshape(shape)
    if isinstance(ty, ProductType):
        return tuple(zero_value(f, dc_params) for f in ty.fields)
    if isinstance(ty, SummationType):
        return (0, zero_value(ty.variants[0], dc_params))
    raise RuntimeError_(f"cannot build zero of {ty}")


_NUMPY_ERRSTATE = {"over": "ignore", "invalid": "ignore", "divide": "ignore"}


def scalar_binop(op: str, a, b, ty: Type):
    with np.errstate(**_NUMPY_ERRSTATE):
        if op == "add":
            return a + b
        if op == "sub":
            return a - b
        if op == "mul":
            return a * b
        if op == "div":
            if isinstance(ty, IntType):
                if int(b) == 0:
                    raise RuntimeError_("integer division by zero")
                q = int(a) // int(b)
                if (int(a) % int(b) != 0) and ((int(a) < 0) != (int(b) < 0)):
                    q += 1  # trunc toward zero, matching compiled semantics
                return typed_scalar(q, ty)
            return a / b
        if op == "rem":
            if isinstance(ty, IntType):
                if int(b) == 0:
                    raise RuntimeError_("integer remainder by zero")
                return typed_scalar(int(np.fmod(int(a), int(b))), ty)
            return np.fmod(a, b)
        if op == "and":
            return (a and b) if isinstance(a, bool) else a & b
        if op == "or":
            return (a or b) if isinstance(a, bool) else a | b
        if op == "xor":
            return (a != b) if isinstance(a, bool) else a ^ b
        if op == "shl":
            return a << b
        if op == "shr":
            return a >> b
        if op == "min":
            return min(a, b)
        if op == "max":
            return max(a, b)
        if op == "lt":
            return bool(a < b)
        if op == "le":
            return bool(a <= b)
        if op == "gt":
            return bool(a > b)
        if op == "ge":
            return bool(a >= b)
        if op == "eq":
            return bool(a == b)
        if op == "ne":
            return bool(a != b)
    raise RuntimeError_(f"unknown binary op {op}")


def scalar_unop(op: str, a, ty: Type):
    if op == "neg":
        with np.errstate(**_NUMPY_ERRSTATE):
            return -a
    if op == "not":
        return not bool(a)
    if op == "cast":
        return typed_scalar(a, ty)
    raise RuntimeError_(f"unknown unary op {op}")


DTYPE_NAMES = {
    "bool": BoolType(),
    "i8": IntType(8, True), "i16": IntType(16, True),
    "i32": IntType(32, True), "i64": IntType(64, True),
    "u8": IntType(8, False), "u16": IntType(16, False),
    "u32": IntType(32, False), "u64": IntType(64, False),
    "f32": FloatType(32), "f64": FloatType(64),
}


def dtype_name(ty: Type) -> str:
    for name, t in DTYPE_NAMES.items():
        if t == ty:
            return name
    raise RuntimeError_(f"no dtype name for {ty}")


def load_tensor(path: str):
    """Read ``{"dtype": ..., "shape": [...], "data": [... row-major ...]}``."""
    with open(path) as f:
        doc = json.load(f)
    ty = DTYPE_NAMES.get(doc.get("dtype"))
    if ty is None:
        raise RuntimeError_(f"unknown dtype {doc.get('dtype')!r} in {path}")
    shape = tuple(int(x) for x in doc["shape"])
    data = np.asarray(doc["data"], dtype=numpy_dtype(ty))
    if shape == ():
        return data.reshape(()).item() if isinstance(ty, BoolType) else \
            numpy_dtype(ty).type(data.reshape(()).item())
    return data.reshape(shape)


def dump_tensor(value, path: str) -> None:
    if isinstance(value, np.ndarray):
        arr = value
    else:
        arr = np.asarray(value)
    name = None
    for n, t in DTYPE_NAMES.items():
        if numpy_dtype(t) == arr.dtype or (n == "bool" and arr.dtype == np.uint8):
            name = n
            break
    if arr.dtype == np.bool_:
        name, arr = "bool", arr.astype(np.uint8)
    if name is None:
        raise RuntimeError_(f"cannot serialize dtype {arr.dtype}")
    doc = {"dtype": name, "shape": list(arr.shape),
           "data": [x.item() for x in arr.reshape(-1)]}
    with open(path, "w") as f:
        json.dump(doc, f)
        f.write("\n")

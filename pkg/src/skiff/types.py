"""Value types: scalars plus the three collection kinds (product, summation, array)."""

from __future__ import annotations

from dataclasses import dataclass

from .dynconst import DynConst, DcLiteral, dc_mul, evaluate, render


@dataclass(frozen=True)
class Type:
    pass


@dataclass(frozen=True)
class BoolType(Type):
    pass


@dataclass(frozen=True)
class IntType(Type):
    width: int  # 8, 16, 32, 64
    signed: bool


@dataclass(frozen=True)
class FloatType(Type):
    width: int  # 32 or 64


@dataclass(frozen=True)
class ProductType(Type):
    fields: tuple[Type, ...]


@dataclass(frozen=True)
class SummationType(Type):
    variants: tuple[Type, ...]


@dataclass(frozen=True)
class ArrayType(Type):
    element: Type
    extents: tuple[DynConst, ...]  # non-empty


BOOL = BoolType()
I8 = IntType(8, True)
I16 = IntType(16, True)
I32 = IntType(32, True)
I64 = IntType(64, True)
U8 = IntType(8, False)
U16 = IntType(16, False)
U32 = IntType(32, False)
U64 = IntType(64, False)
F32 = FloatType(32)
F64 = FloatType(64)

SCALAR_NAMES = {
    "bool": BOOL,
    "i8": I8, "i16": I16, "i32": I32, "i64": I64,
    "u8": U8, "u16": U16, "u32": U32, "u64": U64,
    "f32": F32, "f64": F64,
    "usize": U64,
}


def is_scalar(t: Type) -> bool:
    return isinstance(t, (BoolType, IntType, FloatType))


def is_collection(t: Type) -> bool:
    return isinstance(t, (ProductType, SummationType, ArrayType))


def is_integer(t: Type) -> bool:
    return isinstance(t, (IntType, BoolType))


def scalar_size(t: Type) -> int:
    if isinstance(t, BoolType):
        return 1
    if isinstance(t, (IntType, FloatType)):
        return t.width // 8
    raise TypeError(f"{t} is not scalar")


def size_bytes(t: Type) -> DynConst:
    """Symbolic unpadded byte size."""
    if is_scalar(t):
        return DcLiteral(scalar_size(t))
    if isinstance(t, ProductType):
        total: DynConst = DcLiteral(0)
        for f in t.fields:
            total = total + size_bytes(f)
        return total
    if isinstance(t, SummationType):
        # tag byte plus the largest variant; variants must be fixed-size
        worst = 0
        for v in t.variants:
            sz = size_bytes(v)
            if not isinstance(sz, DcLiteral):
                raise TypeError("summation variants must have static size")
            worst = max(worst, sz.value)
        return DcLiteral(1 + worst)
    assert isinstance(t, ArrayType)
    total = size_bytes(t.element)
    for e in t.extents:
        total = dc_mul(total, e)
    return total


def alignment(t: Type) -> int:
    """Collections align to their element size (power-of-two capped at 8)."""
    if is_scalar(t):
        return scalar_size(t)
    if isinstance(t, ArrayType):
        return alignment(t.element)
    if isinstance(t, ProductType):
        return max((alignment(f) for f in t.fields), default=1)
    return 8


def element_count(t: ArrayType, params) -> int:
    n = 1
    for e in t.extents:
        n *= evaluate(e, params)
    return n


def render_type(t: Type, dc_names=None) -> str:
    if isinstance(t, BoolType):
        return "bool"
    if isinstance(t, IntType):
        return f"{'i' if t.signed else 'u'}{t.width}"
    if isinstance(t, FloatType):
        return f"f{t.width}"
    if isinstance(t, ProductType):
        return "prod(" + ", ".join(render_type(f, dc_names) for f in t.fields) + ")"
    if isinstance(t, SummationType):
        return "sum(" + ", ".join(render_type(v, dc_names) for v in t.variants) + ")"
    assert isinstance(t, ArrayType)
    dims = ", ".join(render(e, dc_names) for e in t.extents)
    return f"{render_type(t.element, dc_names)}[{dims}]"


def numpy_dtype(t: Type):
    """Dtype for scalar and array-of-scalar storage."""
    import numpy as np

    if isinstance(t, BoolType):
        return np.dtype(np.uint8)
    if isinstance(t, IntType):
        return np.dtype(f"{'i' if t.signed else 'u'}{t.width // 8}")
    if isinstance(t, FloatType):
        return np.dtype(f"f{t.width // 8}")
    if isinstance(t, ArrayType):
        return numpy_dtype(t.element)
    raise TypeError(f"no flat dtype for {t}")

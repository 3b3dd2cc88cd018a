"""Abstract syntax of the pointer IR (.pir files).

A program is a set of functions made of labelled basic blocks.  Operands are
three-address: variables, integer literals, ``null`` and ``&var``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

VAR_SIZE = 8


# -- operands ----------------------------------------------------------------

@dataclass(frozen=True)
class Var:
    name: str

    def __str__(self):
        return self.name


@dataclass(frozen=True)
class Const:
    value: int

    def __str__(self):
        return str(self.value)


@dataclass(frozen=True)
class Null:
    def __str__(self):
        return "null"


@dataclass(frozen=True)
class AddrOf:
    name: str

    def __str__(self):
        return f"&{self.name}"


Operand = Union[Var, Const, Null, AddrOf]


# -- expressions --------------------------------------------------------------

ARITH_OPS = ("+", "-", "*", "/")
CMP_OPS = ("==", "!=", "<", "<=", ">", ">=")


@dataclass(frozen=True)
class BinOp:
    op: str
    left: Operand
    right: Operand

    def __str__(self):
        return f"{self.left} {self.op} {self.right}"


@dataclass(frozen=True)
class Negate:
    operand: Operand

    def __str__(self):
        return f"-{self.operand}"


Rhs = Union[Operand, BinOp, Negate]


@dataclass(frozen=True)
class Cmp:
    op: str
    left: Operand
    right: Operand

    def __str__(self):
        return f"{self.left} {self.op} {self.right}"


@dataclass(frozen=True)
class And:
    left: "Cond"
    right: "Cond"

    def __str__(self):
        return f"({self.left} && {self.right})"


@dataclass(frozen=True)
class Or:
    left: "Cond"
    right: "Cond"

    def __str__(self):
        return f"({self.left} || {self.right})"


@dataclass(frozen=True)
class Not:
    operand: "Cond"

    def __str__(self):
        return f"!({self.operand})"


Cond = Union[Cmp, And, Or, Not]


# -- instructions -------------------------------------------------------------

@dataclass(frozen=True)
class Assign:
    dst: str
    rhs: Rhs

    def __str__(self):
        return f"{self.dst} = {self.rhs}"


@dataclass(frozen=True)
class Alloc:
    dst: str
    size: Operand
    zeroed: bool = False

    def __str__(self):
        fn = "calloc" if self.zeroed else "alloc"
        return f"{self.dst} = {fn}({self.size})"


@dataclass(frozen=True)
class Free:
    operand: Operand

    def __str__(self):
        return f"free({self.operand})"


@dataclass(frozen=True)
class Load:
    dst: str
    addr: Operand
    offset: int
    width: int

    def __str__(self):
        return f"{self.dst} = load({self.addr}, {self.offset}, {self.width})"


@dataclass(frozen=True)
class Store:
    addr: Operand
    offset: int
    width: int
    src: Operand

    def __str__(self):
        return f"store({self.addr}, {self.offset}, {self.width}, {self.src})"


@dataclass(frozen=True)
class PtrAdd:
    dst: str
    base: Operand
    delta: Operand

    def __str__(self):
        return f"{self.dst} = ptr_add({self.base}, {self.delta})"


@dataclass(frozen=True)
class Call:
    dst: Optional[str]
    fn: str
    args: tuple[Operand, ...] = ()

    def __str__(self):
        call = f"call {self.fn}({', '.join(map(str, self.args))})"
        return f"{self.dst} = {call}" if self.dst else call


@dataclass(frozen=True)
class Clobber:
    var: str

    def __str__(self):
        return f"clobber({self.var})"


@dataclass(frozen=True)
class Nondet:
    dst: str

    def __str__(self):
        return f"{self.dst} = nondet()"


@dataclass(frozen=True)
class Assume:
    cond: Cond

    def __str__(self):
        return f"assume({self.cond})"


@dataclass(frozen=True)
class ErrorMark:
    def __str__(self):
        return "reach_error()"


Instr = Union[Assign, Alloc, Free, Load, Store, PtrAdd, Call, Clobber, Nondet,
              Assume, ErrorMark]


# -- terminators --------------------------------------------------------------

@dataclass(frozen=True)
class Goto:
    target: str

    def __str__(self):
        return f"goto {self.target}"


@dataclass(frozen=True)
class Branch:
    cond: Cond
    then: str
    orelse: str

    def __str__(self):
        return f"if {self.cond} then {self.then} else {self.orelse}"


@dataclass(frozen=True)
class Return:
    value: Optional[Operand] = None

    def __str__(self):
        return "return" if self.value is None else f"return {self.value}"


@dataclass(frozen=True)
class Halt:
    def __str__(self):
        return "halt"


Terminator = Union[Goto, Branch, Return, Halt]


# -- containers ---------------------------------------------------------------

@dataclass(frozen=True)
class Local:
    name: str
    size: int = VAR_SIZE
    scope: Optional[str] = None


@dataclass(frozen=True)
class Block:
    label: str
    instrs: tuple[Instr, ...]
    terminator: Terminator


@dataclass(frozen=True)
class Function:
    name: str
    params: tuple[str, ...]
    locals: tuple[Local, ...]
    blocks: tuple[Block, ...]
    noreturn: bool = False

    @property
    def entry(self) -> str:
        return self.blocks[0].label

    def block(self, label: str) -> Block:
        return self.block_map[label]

    @property
    def block_map(self) -> dict[str, Block]:
        cache = self.__dict__.get("_block_map")
        if cache is None:
            cache = {b.label: b for b in self.blocks}
            object.__setattr__(self, "_block_map", cache)
        return cache

    def var_size(self, name: str) -> int:
        for loc in self.locals:
            if loc.name == name:
                return loc.size
        return VAR_SIZE


@dataclass(frozen=True)
class Global:
    name: str
    size: int = VAR_SIZE


@dataclass(frozen=True)
class Program:
    functions: dict[str, Function]
    entry: str = "main"
    globals: tuple[Global, ...] = field(default=())

    def __hash__(self):
        return id(self)

    def function(self, name: str) -> Function:
        return self.functions[name]

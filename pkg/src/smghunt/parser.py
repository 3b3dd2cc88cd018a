"""Parser and pretty-printer for the textual IR (.pir).

The grammar is documented in docs/GRAMMAR.md.  Statements are separated by
newlines or semicolons; ``#`` starts a comment that runs to end of line.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Optional

from .ir import (
    ARITH_OPS, CMP_OPS, VAR_SIZE, AddrOf, Alloc, And, Assign, Assume, BinOp,
    Block, Branch, Call, Clobber, Cmp, Cond, Const, ErrorMark, Free, Function,
    Global, Goto, Halt, Instr, Load, Local, Negate, Nondet, Not, Null, Operand,
    Or, Program, PtrAdd, Return, Store, Var,
)

INT64_MIN = -(2**63)
INT64_MAX = 2**63 - 1

KEYWORDS = frozenset({
    "fn", "noreturn", "global", "local", "alloc", "calloc", "load", "store",
    "ptr_add", "call", "nondet", "free", "clobber", "assume", "reach_error",
    "goto", "if", "then", "else", "return", "halt", "null",
})


class ParseError(Exception):
    def __init__(self, message: str, line: int = 0, col: int = 0):
        super().__init__(f"{line}:{col}: {message}" if line else message)
        self.message = message
        self.line = line
        self.col = col


@dataclass(frozen=True)
class Token:
    kind: str  # ident, int, op, nl, scope, eof
    text: str
    line: int
    col: int


_TOKEN_RE = re.compile(r"""
    (?P<ws>[ \t\r]+)
  | (?P<comment>\#[^\n]*)
  | (?P<nl>\n)
  | (?P<scope>@[A-Za-z_][A-Za-z0-9_.]*)
  | (?P<int>[0-9]+)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>==|!=|<=|>=|&&|\|\||[-+*/<>=!&(){}\[\],:;])
""", re.VERBOSE)


def tokenize(text: str) -> list[Token]:
    tokens = []
    line, line_start, pos = 1, 0, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        col = pos - line_start + 1
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", line, col)
        kind = m.lastgroup
        if kind == "nl":
            tokens.append(Token("nl", "\n", line, col))
            line += 1
            line_start = m.end()
        elif kind == "op" and m.group() == ";":
            tokens.append(Token("nl", ";", line, col))
        elif kind not in ("ws", "comment"):
            tokens.append(Token(kind, m.group(), line, col))
        pos = m.end()
    tokens.append(Token("eof", "", line, pos - line_start + 1))
    return tokens


class _FunctionScope:
    """Collects variable declarations while a function body is parsed."""

    def __init__(self, params: tuple[str, ...], globals_: set[str]):
        self.params = params
        self.globals = globals_
        self.locals: dict[str, Local] = {}
        self.scope_counter = 0

    def declare(self, tok: Token, name: str, size: int, scope: Optional[str]):
        if name in self.params or name in self.locals:
            raise ParseError(f"duplicate name {name}", tok.line, tok.col)
        self.locals[name] = Local(name, size, scope)

    def use(self, name: str):
        if name in self.params or name in self.locals or name in self.globals:
            return
        self.locals[name] = Local(name, VAR_SIZE, None)


class Parser:
    def __init__(self, text: str):
        self.tokens = tokenize(text)
        self.pos = 0
        self.globals: list[Global] = []
        self.fscope: Optional[_FunctionScope] = None

    # -- token helpers --------------------------------------------------------

    @property
    def tok(self) -> Token:
        return self.tokens[self.pos]

    def peek(self, offset: int = 1) -> Token:
        return self.tokens[min(self.pos + offset, len(self.tokens) - 1)]

    def advance(self) -> Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def error(self, message: str, tok: Optional[Token] = None) -> ParseError:
        tok = tok or self.tok
        return ParseError(message, tok.line, tok.col)

    def at(self, text: str) -> bool:
        return self.tok.kind in ("op", "ident") and self.tok.text == text

    def expect(self, text: str) -> Token:
        if not self.at(text):
            shown = self.tok.text if self.tok.kind != "nl" else "end of statement"
            raise self.error(f"expected {text!r}, found {shown!r}")
        return self.advance()

    def ident(self) -> Token:
        if self.tok.kind != "ident" or self.tok.text in KEYWORDS:
            raise self.error(f"expected identifier, found {self.tok.text!r}")
        return self.advance()

    def integer(self) -> int:
        sign = 1
        if self.at("-"):
            self.advance()
            sign = -1
        if self.tok.kind != "int":
            raise self.error(f"expected integer, found {self.tok.text!r}")
        tok = self.advance()
        value = sign * int(tok.text)
        if not INT64_MIN <= value <= INT64_MAX:
            raise self.error("integer literal out of 64-bit range", tok)
        return value

    def skip_newlines(self):
        while self.tok.kind == "nl":
            self.advance()

    def end_statement(self):
        if self.tok.kind == "nl":
            self.skip_newlines()
        elif not (self.at("}") or self.tok.kind == "eof"):
            raise self.error(f"expected end of statement, found {self.tok.text!r}")

    # -- program ----------------------------------------------------------------

    def parse_program(self) -> Program:
        functions: dict[str, Function] = {}
        self.skip_newlines()
        while self.tok.kind != "eof":
            if self.at("global"):
                self.parse_global(functions)
            else:
                start = self.tok
                fn = self.parse_function()
                if fn.name in functions or fn.name in {g.name for g in self.globals}:
                    raise ParseError(f"duplicate name {fn.name}", start.line, start.col)
                functions[fn.name] = fn
            self.skip_newlines()
        prog = Program(functions, "main", tuple(self.globals))
        validate(prog)
        return prog

    def parse_global(self, functions):
        self.expect("global")
        tok = self.ident()
        size = self.parse_size()
        if tok.text in functions or any(g.name == tok.text for g in self.globals):
            raise ParseError(f"duplicate name {tok.text}", tok.line, tok.col)
        self.globals.append(Global(tok.text, size))
        self.end_statement()

    def parse_size(self) -> int:
        if not self.at("["):
            return VAR_SIZE
        self.advance()
        tok = self.tok
        size = self.integer()
        if size <= 0:
            raise ParseError("variable size must be positive", tok.line, tok.col)
        self.expect("]")
        return size

    def parse_function(self) -> Function:
        noreturn = False
        if self.at("noreturn"):
            self.advance()
            noreturn = True
        self.expect("fn")
        name = self.ident().text
        self.expect("(")
        params: list[str] = []
        if not self.at(")"):
            while True:
                tok = self.ident()
                if tok.text in params:
                    raise ParseError(f"duplicate name {tok.text}", tok.line, tok.col)
                params.append(tok.text)
                if not self.at(","):
                    break
                self.advance()
        self.expect(")")
        self.expect("{")
        self.fscope = _FunctionScope(tuple(params), {g.name for g in self.globals})
        self.skip_newlines()
        while self.at("local"):
            self.parse_local(scope=None)
            self.end_statement()
        blocks: list[Block] = []
        labels: set[str] = set()
        while not self.at("}"):
            if self.tok.kind == "eof":
                raise self.error("unterminated function body")
            tok = self.tok
            block = self.parse_block()
            if block.label in labels:
                raise ParseError(f"duplicate label {block.label}", tok.line, tok.col)
            labels.add(block.label)
            blocks.append(block)
            self.skip_newlines()
        self.expect("}")
        if not blocks:
            raise self.error(f"function {name} has no blocks")
        fn = Function(name, tuple(params), tuple(self.fscope.locals.values()),
                      tuple(blocks), noreturn)
        self.fscope = None
        return fn

    def parse_local(self, scope: Optional[str]) -> str:
        self.expect("local")
        tok = self.ident()
        size = self.parse_size()
        if self.tok.kind == "scope":
            scope = self.advance().text[1:]
        self.fscope.declare(tok, tok.text, size, scope)
        return tok.text

    def parse_block(self) -> Block:
        label = self.ident().text
        self.expect(":")
        self.skip_newlines()
        instrs: list[Instr] = []
        while True:
            if self.at("{"):
                self.parse_scope(label, instrs)
                self.end_statement()
                continue
            term = self.try_terminator()
            if term is not None:
                self.end_statement()
                return Block(label, tuple(instrs), term)
            if self.at("}") or self.tok.kind == "eof":
                raise self.error(f"block {label} has no terminator")
            instrs.append(self.parse_instr())
            self.end_statement()

    def parse_scope(self, label: str, instrs: list[Instr]):
        self.expect("{")
        self.fscope.scope_counter += 1
        scope = f"{label}.{self.fscope.scope_counter}"
        declared: list[str] = []
        self.skip_newlines()
        while not self.at("}"):
            if self.tok.kind == "eof":
                raise self.error("unterminated scope")
            if self.at("local"):
                declared.append(self.parse_local(scope))
            elif self.at("{"):
                self.parse_scope(label, instrs)
            else:
                if self.try_terminator_keyword():
                    raise self.error("terminators are not allowed inside a scope")
                instrs.append(self.parse_instr())
            self.end_statement()
        self.expect("}")
        for name in reversed(declared):
            instrs.append(Clobber(name))

    # -- instructions ---------------------------------------------------------------

    def try_terminator_keyword(self) -> bool:
        return self.tok.kind == "ident" and self.tok.text in ("goto", "if", "return", "halt")

    def try_terminator(self):
        if not self.try_terminator_keyword():
            return None
        kw = self.advance().text
        if kw == "goto":
            return Goto(self.ident().text)
        if kw == "halt":
            return Halt()
        if kw == "return":
            if self.tok.kind == "nl" or self.at("}"):
                return Return(None)
            return Return(self.operand())
        cond = self.cond()
        self.expect("then")
        then = self.ident().text
        self.expect("else")
        return Branch(cond, then, self.ident().text)

    def var_name(self) -> str:
        name = self.ident().text
        self.fscope.use(name)
        return name

    def parse_instr(self) -> Instr:
        tok = self.tok
        if tok.kind != "ident":
            raise self.error(f"expected instruction, found {tok.text!r}")
        kw = tok.text
        if kw == "free":
            self.advance()
            self.expect("(")
            op = self.operand()
            self.expect(")")
            return Free(op)
        if kw == "store":
            self.advance()
            self.expect("(")
            addr = self.operand()
            self.expect(",")
            offset = self.integer()
            self.expect(",")
            width = self.width()
            self.expect(",")
            src = self.operand()
            self.expect(")")
            return Store(addr, offset, width, src)
        if kw == "clobber":
            self.advance()
            self.expect("(")
            name = self.var_name()
            self.expect(")")
            return Clobber(name)
        if kw == "assume":
            self.advance()
            self.expect("(")
            cond = self.cond()
            self.expect(")")
            return Assume(cond)
        if kw == "reach_error":
            self.advance()
            self.expect("(")
            self.expect(")")
            return ErrorMark()
        if kw == "call":
            self.advance()
            return self.call_rest(None)
        dst = self.var_name()
        self.expect("=")
        return self.parse_rhs_instr(dst)

    def width(self) -> int:
        tok = self.tok
        width = self.integer()
        if width <= 0:
            raise ParseError("width must be positive", tok.line, tok.col)
        return width

    def call_rest(self, dst: Optional[str]) -> Call:
        fn = self.ident().text
        self.expect("(")
        args: list[Operand] = []
        if not self.at(")"):
            while True:
                args.append(self.operand())
                if not self.at(","):
                    break
                self.advance()
        self.expect(")")
        return Call(dst, fn, tuple(args))

    def parse_rhs_instr(self, dst: str) -> Instr:
        tok = self.tok
        if tok.kind == "ident" and self.peek().text == "(" and tok.text in (
                "alloc", "calloc", "load", "ptr_add", "nondet"):
            kw = self.advance().text
            self.expect("(")
            if kw in ("alloc", "calloc"):
                size = self.operand()
                self.expect(")")
                return Alloc(dst, size, kw == "calloc")
            if kw == "nondet":
                self.expect(")")
                return Nondet(dst)
            if kw == "load":
                addr = self.operand()
                self.expect(",")
                offset = self.integer()
                self.expect(",")
                width = self.width()
                self.expect(")")
                return Load(dst, addr, offset, width)
            base = self.operand()
            self.expect(",")
            delta = self.operand()
            self.expect(")")
            return PtrAdd(dst, base, delta)
        if self.at("call"):
            self.advance()
            return self.call_rest(dst)
        if self.at("-") and self.peek().kind != "int":
            self.advance()
            return Assign(dst, Negate(self.operand()))
        left = self.operand()
        if self.tok.kind == "op" and self.tok.text in ARITH_OPS:
            op_tok = self.advance()
            right = self.operand()
            if op_tok.text == "/" and (not isinstance(right, Const) or right.value == 0):
                raise ParseError("division requires a nonzero constant divisor",
                                 op_tok.line, op_tok.col)
            return Assign(dst, BinOp(op_tok.text, left, right))
        return Assign(dst, left)

    def operand(self) -> Operand:
        tok = self.tok
        if tok.kind == "int" or (self.at("-") and self.peek().kind == "int"):
            return Const(self.integer())
        if self.at("null"):
            self.advance()
            return Null()
        if self.at("&"):
            self.advance()
            return AddrOf(self.var_name())
        if tok.kind == "ident":
            return Var(self.var_name())
        raise self.error(f"expected operand, found {tok.text!r}")

    # -- conditions -----------------------------------------------------------------

    def cond(self) -> Cond:
        left = self.cond_and()
        while self.at("||"):
            self.advance()
            left = Or(left, self.cond_and())
        return left

    def cond_and(self) -> Cond:
        left = self.cond_not()
        while self.at("&&"):
            self.advance()
            left = And(left, self.cond_not())
        return left

    def cond_not(self) -> Cond:
        if self.at("!"):
            self.advance()
            return Not(self.cond_not())
        if self.at("("):
            self.advance()
            inner = self.cond()
            self.expect(")")
            return inner
        left = self.operand()
        if not (self.tok.kind == "op" and self.tok.text in CMP_OPS):
            raise self.error(f"expected comparison operator, found {self.tok.text!r}")
        op = self.advance().text
        return Cmp(op, left, self.operand())


def _fail(fn: Function, message: str):
    raise ParseError(f"in function {fn.name}: {message}")


def validate(prog: Program) -> None:
    """Check cross-reference invariants the grammar cannot express."""
    if prog.entry not in prog.functions:
        raise ParseError(f"unresolved function {prog.entry} (program entry)")
    for fn in prog.functions.values():
        labels = {b.label for b in fn.blocks}
        for block in fn.blocks:
            term = block.terminator
            targets = ()
            if isinstance(term, Goto):
                targets = (term.target,)
            elif isinstance(term, Branch):
                targets = (term.then, term.orelse)
            elif isinstance(term, Return) and fn.noreturn:
                _fail(fn, "noreturn function contains a return")
            for target in targets:
                if target not in labels:
                    _fail(fn, f"unresolved label {target}")
            for ins in block.instrs:
                if isinstance(ins, Clobber) and ins.var not in fn.params and not any(
                        loc.name == ins.var for loc in fn.locals):
                    _fail(fn, f"clobber of non-local variable {ins.var}")
                if isinstance(ins, Call):
                    callee = prog.functions.get(ins.fn)
                    if callee is None:
                        _fail(fn, f"unresolved function {ins.fn}")
                    if len(ins.args) != len(callee.params):
                        _fail(fn, f"call to {ins.fn} passes {len(ins.args)} arguments, "
                                  f"expected {len(callee.params)}")


def parse_program(text: str) -> Program:
    return Parser(text).parse_program()


def parse_file(path) -> Program:
    with open(path, encoding="utf-8") as fh:
        return parse_program(fh.read())


# -- pretty printing ------------------------------------------------------------------

def _fmt_local(loc: Local) -> str:
    text = f"local {loc.name}"
    if loc.size != VAR_SIZE:
        text += f"[{loc.size}]"
    if loc.scope is not None:
        text += f" @{loc.scope}"
    return text


def format_function(fn: Function) -> str:
    head = "noreturn fn" if fn.noreturn else "fn"
    lines = [f"{head} {fn.name}({', '.join(fn.params)}) {{"]
    lines += [f"  {_fmt_local(loc)}" for loc in fn.locals]
    for block in fn.blocks:
        lines.append(f"{block.label}:")
        lines += [f"  {ins}" for ins in block.instrs]
        lines.append(f"  {block.terminator}")
    lines.append("}")
    return "\n".join(lines)


def format_program(prog: Program) -> str:
    parts = []
    for g in prog.globals:
        parts.append(f"global {g.name}" + (f"[{g.size}]" if g.size != VAR_SIZE else ""))
    parts += [format_function(fn) for fn in prog.functions.values()]
    return "\n".join(parts) + "\n"

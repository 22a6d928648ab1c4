"""Parser for scenario files (grammar in docs/scenario-format.md)."""
from __future__ import annotations

import dataclasses
import re
from dataclasses import dataclass
from pathlib import Path

from .abi import NAMED_CONSTANTS
from .boot import BootConfig
from .harness import (
    AddImm, AssertMem, AssertReg, Expectations, GuestScript, Halt, Jump, JumpIfZero, LoadWord,
    MachineConfig, Move, Scenario, SetReg, StoreWord, Syscall,
)
from .memory import MMIO_LEN, MMIO_STDERR_BASE, MMIO_STDOUT_BASE, RODATA_BASE, RODATA_LEN
from .mm import ALLOCATORS
from .trapframe import MAX_SCRIPTS, reg_index


class ScenarioError(Exception):
    def __init__(self, message: str, line: int, col: int = 1):
        super().__init__(f"{line}:{col}: {message}")
        self.message, self.line, self.col = message, line, col


@dataclass(frozen=True)
class Token:
    kind: str  # str | punct | word
    text: str
    col: int


_TOKEN = re.compile(r'''
    (?P<space>\s+)
  | (?P<comment>\#.*)
  | (?P<str>"(?:[^"\\]|\\.)*")
  | (?P<punct>==|[,=():\[\]])
  | (?P<word>[^\s,=():\[\]"\#]+)
''', re.VERBOSE)


def tokenize(text: str, lineno: int) -> list[Token]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise ScenarioError("unterminated string" if text[pos] == '"' else f"unexpected character {text[pos]!r}",
                                lineno, pos + 1)
        kind = m.lastgroup
        if kind == "comment":
            break
        if kind != "space":
            tokens.append(Token(kind, m.group(), pos + 1))
        pos = m.end()
    return tokens


_ESCAPE = re.compile(r"(?P<lit>[^\\]+)|\\(?P<esc>x[0-9a-fA-F]{2}|.)")
_SIMPLE_ESCAPES = {"n": 10, "t": 9, "r": 13, "0": 0, "\\": 92, '"': 34}


class _Line:
    """Cursor over the tokens of one source line."""

    def __init__(self, tokens: list[Token], lineno: int, width: int):
        self.tokens, self.lineno, self.pos, self.width = tokens, lineno, 0, width

    def error(self, message: str, tok: Token | None = None) -> ScenarioError:
        if tok is None:
            tok = self.tokens[self.pos] if self.pos < len(self.tokens) else None
        return ScenarioError(message, self.lineno, tok.col if tok else self.width + 1)

    def peek(self) -> Token | None:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def next(self, what: str) -> Token:
        tok = self.peek()
        if tok is None:
            raise self.error(f"expected {what}")
        self.pos += 1
        return tok

    def expect(self, text: str) -> Token:
        tok = self.peek()
        if tok is None or tok.text != text:
            raise self.error(f"expected {text!r}")
        self.pos += 1
        return tok

    def accept(self, text: str) -> bool:
        tok = self.peek()
        if tok is not None and tok.text == text:
            self.pos += 1
            return True
        return False

    def end(self) -> None:
        if self.pos < len(self.tokens):
            raise self.error(f"unexpected {self.tokens[self.pos].text!r}")


class _Parser:
    def __init__(self, text: str):
        self.lines = text.split("\n")
        self.script_names: dict[str, int] = {}
        self.machine = MachineConfig()
        self.boot: dict[str, object] = {}
        self.expect = Expectations()
        self.data: list[tuple[int, bytes, int]] = []
        self.scripts: list[GuestScript] = []
        self.section_lines: dict[str, int] = {}

    # -- values --------------------------------------------------------------

    def immediate(self, ln: _Line) -> int:
        tok = ln.next("an integer")
        if tok.kind != "word":
            raise ln.error("expected an integer", tok)
        text = tok.text
        neg = text.startswith("-")
        body = text[1:] if neg else text
        try:
            value = int(body, 0)
        except ValueError:
            if body in NAMED_CONSTANTS:
                value = NAMED_CONSTANTS[body]
            elif body in self.script_names:
                value = self.script_names[body]
            else:
                raise ln.error(f"bad integer or unknown name {text!r}", tok) from None
        return -value if neg else value

    def register(self, ln: _Line) -> int:
        tok = ln.next("a register")
        try:
            return reg_index(tok.text)
        except ValueError:
            raise ln.error(f"unknown register {tok.text!r}", tok) from None

    def string(self, ln: _Line) -> bytes:
        tok = ln.next("a string")
        if tok.kind != "str":
            raise ln.error("expected a quoted string", tok)
        out = bytearray()
        body = tok.text[1:-1]
        for m in _ESCAPE.finditer(body):
            lit, esc = m.group("lit"), m.group("esc")
            if lit is not None:
                out += lit.encode("utf-8")
            elif esc in _SIMPLE_ESCAPES:
                out.append(_SIMPLE_ESCAPES[esc])
            elif esc.startswith("x") and len(esc) == 3:
                out.append(int(esc[1:], 16))
            else:
                raise ScenarioError(f"bad string escape '\\{esc}'", ln.lineno, tok.col + 1 + m.start())
        return bytes(out)

    def blob(self, ln: _Line) -> bytes:
        tok = ln.peek()
        if tok is not None and tok.kind == "str":
            return self.string(ln)
        tag = ln.next("a string, hex:, u32: or u64: value")
        ln.expect(":")
        if tag.text == "hex":
            body = ln.next("hex digits")
            try:
                return bytes.fromhex(body.text)
            except ValueError:
                raise ln.error("bad hex bytes", body) from None
        if tag.text in ("u32", "u64"):
            width = 4 if tag.text == "u32" else 8
            return (self.immediate(ln) & ((1 << (8 * width)) - 1)).to_bytes(width, "little")
        raise ln.error(f"unknown value kind {tag.text!r}", tag)

    def mem_operand(self, ln: _Line) -> tuple[int, int]:
        """``imm(reg)``, ``(reg)`` or a bare absolute address."""
        offset = 0
        tok = ln.peek()
        if tok is not None and tok.text != "(":
            offset = self.immediate(ln)
        if ln.accept("("):
            base = self.register(ln)
            ln.expect(")")
            return base, offset
        return 0, offset

    # -- sections ------------------------------------------------------------

    def parse(self) -> Scenario:
        self._prescan()
        section = None
        script_lines: list[tuple[_Line, Token]] = []
        for lineno, raw in enumerate(self.lines, 1):
            tokens = tokenize(raw, lineno)
            if not tokens:
                continue
            ln = _Line(tokens, lineno, len(raw))
            if tokens[0].text == "[":
                if section and section.startswith("script "):
                    self._finish_script(section[7:], script_lines)
                    script_lines = []
                section = self._header(ln)
                continue
            if section is None:
                raise ln.error("content before the first [section]")
            if section.startswith("script "):
                script_lines.append((ln, tokens[0]))
            elif section == "data":
                addr = self.immediate(ln)
                ln.expect("=")
                self.data.append((addr, self.blob(ln), lineno))
                ln.end()
            else:
                self._keyvalue(section, ln)
        if section and section.startswith("script "):
            self._finish_script(section[7:], script_lines)
        if not self.scripts:
            raise ScenarioError("scenario has no [script ...] section", 1)
        return self._build()

    def _prescan(self) -> None:
        for lineno, raw in enumerate(self.lines, 1):
            tokens = tokenize(raw, lineno)
            if len(tokens) >= 3 and tokens[0].text == "[" and tokens[1].text == "script":
                name = tokens[2].text
                if name in self.script_names:
                    raise ScenarioError(f"duplicate script {name!r}", lineno, tokens[2].col)
                self.script_names[name] = len(self.script_names)
        if len(self.script_names) > MAX_SCRIPTS:
            raise ScenarioError(f"at most {MAX_SCRIPTS} scripts", 1)

    def _header(self, ln: _Line) -> str:
        ln.expect("[")
        kind = ln.next("a section name")
        if kind.text == "script":
            name = ln.next("a script name")
            ln.expect("]")
            ln.end()
            return f"script {name.text}"
        if kind.text not in ("machine", "boot", "expect", "data"):
            raise ln.error(f"unknown section {kind.text!r}", kind)
        ln.expect("]")
        ln.end()
        if kind.text in self.section_lines:
            raise ln.error(f"duplicate section [{kind.text}]", kind)
        self.section_lines[kind.text] = ln.lineno
        return kind.text

    def _keyvalue(self, section: str, ln: _Line) -> None:
        key = ln.next("a key")
        ln.expect("=")
        k = key.text
        if section == "machine":
            if k == "allocator":
                tok = ln.next("an allocator name")
                if tok.text not in ALLOCATORS:
                    raise ln.error(f"unknown allocator {tok.text!r}", tok)
                self.machine.allocator = tok.text
            elif k in ("memory_size", "heap_start", "heap_size", "stack_top", "step_budget"):
                value = self.immediate(ln)
                if k == "step_budget" and value <= 0:
                    raise ln.error("step_budget must be positive", key)
                setattr(self.machine, k, value)
            else:
                raise ln.error(f"unknown machine key {k!r}", key)
        elif section == "boot":
            if k == "program_name":
                name = self.string(ln)
                self.boot[k] = name if name.endswith(b"\0") else name + b"\0"
            elif k in ("initial_sp", "buffer_capacity"):
                self.boot[k] = self.immediate(ln)
            elif k == "entropy":
                first = self.immediate(ln)
                ln.expect(",")
                self.boot[k] = (first, self.immediate(ln))
            else:
                raise ln.error(f"unknown boot key {k!r}", key)
        elif section == "expect":
            if k == "exit_code":
                self.expect.exit_code = self.immediate(ln)
            elif k in ("stdout", "stderr"):
                setattr(self.expect, k, self.string(ln))
            else:
                raise ln.error(f"unknown expect key {k!r}", key)
        ln.end()

    def _finish_script(self, name: str, lines: list[tuple[_Line, Token]]) -> None:
        labels: dict[str, int] = {}
        pending = []  # (op index, ln, label token) for jumps
        ops = []
        for ln, first in lines:
            nxt = ln.tokens[1] if len(ln.tokens) > 1 else None
            if nxt is not None and nxt.text == ":" and len(ln.tokens) == 2:
                if first.text in labels:
                    raise ln.error(f"duplicate label {first.text!r}", first)
                labels[first.text] = len(ops)
                continue
            ops.append(self._instruction(ln, pending, len(ops)))
        for index, ln, tok in pending:
            if tok.text not in labels:
                raise ln.error(f"undefined label {tok.text!r}", tok)
            ops[index] = dataclasses.replace(ops[index], target=labels[tok.text])
        self.scripts.append(GuestScript(name, ops, labels))

    def _instruction(self, ln: _Line, pending: list, index: int):
        tok = ln.next("an instruction")
        m = tok.text
        if m == "li":
            rd = self.register(ln); ln.expect(","); op = SetReg(rd, self.immediate(ln))
        elif m == "mv":
            rd = self.register(ln); ln.expect(","); op = Move(rd, self.register(ln))
        elif m == "addi":
            rd = self.register(ln); ln.expect(","); rs = self.register(ln); ln.expect(",")
            op = AddImm(rd, rs, self.immediate(ln))
        elif m in ("ld", "lw", "lwu"):
            rd = self.register(ln); ln.expect(",")
            base, offset = self.mem_operand(ln)
            op = LoadWord(rd, base, offset, 8 if m == "ld" else 4, m == "lw")
        elif m in ("sd", "sw"):
            rs = self.register(ln); ln.expect(",")
            base, offset = self.mem_operand(ln)
            op = StoreWord(rs, base, offset, 8 if m == "sd" else 4)
        elif m == "ecall":
            op = Syscall()
        elif m == "assert":
            reg = self.register(ln); ln.expect("==")
            op = AssertReg(reg, self.immediate(ln))
        elif m == "assert_mem":
            base, offset = self.mem_operand(ln); ln.expect(",")
            op = AssertMem(base, offset, self.blob(ln))
        elif m == "j":
            pending.append((index, ln, ln.next("a label")))
            op = Jump(-1)
        elif m == "beqz":
            reg = self.register(ln); ln.expect(",")
            pending.append((index, ln, ln.next("a label")))
            op = JumpIfZero(reg, -1)
        elif m == "halt":
            op = Halt()
        else:
            raise ln.error(f"unknown instruction {m!r}", tok)
        ln.end()
        return op

    def _build(self) -> Scenario:
        machine_line = self.section_lines.get("machine", 1)
        try:
            mem = self.machine.make_memory()
        except ValueError as exc:
            raise ScenarioError(f"invalid machine config: {exc}", machine_line) from None
        try:
            boot = BootConfig(**self.boot)
        except ValueError as exc:
            raise ScenarioError(f"invalid boot config: {exc}", self.section_lines.get("boot", 1)) from None
        reserved = [(MMIO_STDOUT_BASE, MMIO_LEN), (MMIO_STDERR_BASE, MMIO_LEN), (RODATA_BASE, RODATA_LEN)]
        for addr, blob, lineno in self.data:
            if not mem.in_bounds(addr, len(blob)):
                raise ScenarioError(f"data at {addr:#x} lies outside memory", lineno)
            for base, length in reserved:
                if addr < base + length and base < addr + len(blob):
                    raise ScenarioError(f"data at {addr:#x} overlaps the platform region at {base:#x}", lineno)
        return Scenario(self.scripts, self.machine, boot, [(a, b) for a, b, _ in self.data], self.expect)


def parse_scenario(text: str, name: str = "scenario") -> Scenario:
    scenario = _Parser(text).parse()
    scenario.name = name
    return scenario


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    return parse_scenario(path.read_text(encoding="utf-8"), path.stem)

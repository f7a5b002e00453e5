"""Plain-text process description format.

Grammar (one statement per line, ``#`` starts a comment)::

    process   <name>
    variable  <name> <role> <size> [labels <label> ...]
    mechanism <name> [given <parent> ...]
    <parent-symbol> ... : <p_0> <p_1> ... <p_{size-1}>

``role`` is one of ``latent``, ``action``, ``observation``, ``goal``.  Row
lines belong to the most recent ``mechanism`` header; a parentless mechanism
has a single row starting with ``:``.  Parent symbols are written as labels
when the parent declares them, otherwise as integers.  Variables are ordered
by declaration, and every parent must be declared before its child.

The serializer emits the canonical form: variables in order, each followed by
its mechanism, rows sorted by parent symbols, probabilities with 17
significant digits so that parsing reproduces the floats bit for bit.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass, field

import numpy as np

from .engine import ROW_TOLERANCE, CausalProcess, Mechanism, Role, VariableSpec
from .errors import CausalSeqError

__all__ = ["ProcessSyntaxError", "ProcessSemanticError", "parse_process", "serialize_process"]

_TOKEN = re.compile(r":|[^\s:#]+")
_NAME = re.compile(r"[A-Za-z_][A-Za-z0-9_\-]*$")
_ROLES = {r.value: r for r in Role}


class ProcessSyntaxError(CausalSeqError, ValueError):
    def __init__(self, message: str, line: int, column: int):
        self.line = line
        self.column = column
        super().__init__(f"line {line}, column {column}: {message}")


class ProcessSemanticError(CausalSeqError, ValueError):
    def __init__(self, message: str, variable: str | None = None, line: int | None = None):
        self.variable = variable
        self.line = line
        where = f"line {line}: " if line is not None else ""
        who = f"{variable}: " if variable is not None else ""
        super().__init__(f"{where}{who}{message}")


@dataclass
class _Token:
    text: str
    column: int


@dataclass
class _VarDecl:
    name: str
    role: Role
    size: int
    labels: tuple[str, ...] | None
    line: int


@dataclass
class _MechDecl:
    name: str
    parents: list[str]
    line: int
    rows: list[tuple[list[_Token], list[_Token], int]] = field(default_factory=list)


def _tokenize(line: str) -> list[_Token]:
    line = line.split("#", 1)[0]
    return [_Token(m.group(0), m.start() + 1) for m in _TOKEN.finditer(line)]


def _int(tok: _Token, lineno: int, what: str) -> int:
    try:
        value = int(tok.text)
    except ValueError:
        raise ProcessSyntaxError(f"expected {what}, got {tok.text!r}", lineno, tok.column) from None
    return value


def _float(tok: _Token, lineno: int) -> float:
    try:
        return float(tok.text)
    except ValueError:
        raise ProcessSyntaxError(
            f"expected a probability, got {tok.text!r}", lineno, tok.column
        ) from None


def _name(tok: _Token, lineno: int) -> str:
    if not _NAME.match(tok.text):
        raise ProcessSyntaxError(f"invalid name {tok.text!r}", lineno, tok.column)
    return tok.text


def _read(document: str):
    name = "process"
    variables: list[_VarDecl] = []
    mechanisms: list[_MechDecl] = []
    current: _MechDecl | None = None
    for lineno, raw in enumerate(document.splitlines(), start=1):
        toks = _tokenize(raw)
        if not toks:
            continue
        head = toks[0].text
        if head == "process":
            if len(toks) != 2:
                raise ProcessSyntaxError("expected: process <name>", lineno, toks[0].column)
            name = _name(toks[1], lineno)
            current = None
        elif head == "variable":
            if len(toks) < 4:
                raise ProcessSyntaxError(
                    "expected: variable <name> <role> <size> [labels ...]", lineno, toks[0].column
                )
            vname = _name(toks[1], lineno)
            role = _ROLES.get(toks[2].text)
            if role is None:
                raise ProcessSemanticError(
                    f"unknown role {toks[2].text!r} (expected one of {', '.join(_ROLES)})",
                    vname, lineno,
                )
            size = _int(toks[3], lineno, "a domain size")
            if size < 1:
                raise ProcessSemanticError("domain size must be positive", vname, lineno)
            labels = None
            if len(toks) > 4:
                if toks[4].text != "labels":
                    raise ProcessSyntaxError("expected 'labels'", lineno, toks[4].column)
                labels = tuple(t.text for t in toks[5:])
                if len(labels) != size or len(set(labels)) != size:
                    raise ProcessSemanticError(
                        f"need {size} distinct labels, got {len(labels)}", vname, lineno
                    )
            variables.append(_VarDecl(vname, role, size, labels, lineno))
            current = None
        elif head == "mechanism":
            if len(toks) < 2:
                raise ProcessSyntaxError("expected: mechanism <name>", lineno, toks[0].column)
            mname = _name(toks[1], lineno)
            parents = []
            if len(toks) > 2:
                if toks[2].text != "given":
                    raise ProcessSyntaxError("expected 'given'", lineno, toks[2].column)
                if len(toks) == 3:
                    raise ProcessSyntaxError("'given' needs a parent", lineno, toks[2].column)
                parents = [_name(t, lineno) for t in toks[3:]]
            current = _MechDecl(mname, parents, lineno)
            mechanisms.append(current)
        else:
            colon = [i for i, t in enumerate(toks) if t.text == ":"]
            if not colon:
                raise ProcessSyntaxError(f"unknown statement {head!r}", lineno, toks[0].column)
            if current is None:
                raise ProcessSyntaxError("row outside a mechanism block", lineno, toks[0].column)
            if len(colon) > 1:
                raise ProcessSyntaxError("more than one ':' in row", lineno, toks[colon[1]].column)
            k = colon[0]
            if k == len(toks) - 1:
                raise ProcessSyntaxError("row has no probabilities", lineno, toks[k].column)
            current.rows.append((toks[:k], toks[k + 1 :], lineno))
    return name, variables, mechanisms


def _symbol(decl: _VarDecl, tok: _Token, lineno: int, child: str) -> int:
    if decl.labels is not None:
        if tok.text in decl.labels:
            return decl.labels.index(tok.text)
        raise ProcessSemanticError(
            f"parent {decl.name} has no symbol {tok.text!r}", child, lineno
        )
    value = _int(tok, lineno, f"a symbol of {decl.name}")
    if not 0 <= value < decl.size:
        raise ProcessSemanticError(f"symbol {value} out of range for parent {decl.name}", child, lineno)
    return value


def parse_process(document: str) -> CausalProcess:
    """Parse a process description; raise a positioned error on bad input."""
    name, variables, mechanisms = _read(document)
    if not variables:
        raise ProcessSemanticError("document declares no variables")
    order: dict[str, int] = {}
    for i, decl in enumerate(variables):
        if decl.name in order:
            raise ProcessSemanticError("variable declared twice", decl.name, decl.line)
        order[decl.name] = i

    by_var: dict[int, Mechanism] = {}
    for mdecl in mechanisms:
        if mdecl.name not in order:
            raise ProcessSemanticError("mechanism for undeclared variable", mdecl.name, mdecl.line)
        vid = order[mdecl.name]
        vdecl = variables[vid]
        if vid in by_var:
            raise ProcessSemanticError("mechanism declared twice", mdecl.name, mdecl.line)
        parent_ids = []
        for pname in mdecl.parents:
            if pname not in order:
                raise ProcessSemanticError(f"unknown parent {pname!r}", mdecl.name, mdecl.line)
            pid = order[pname]
            if pid >= vid:
                raise ProcessSemanticError(
                    f"parent {pname!r} is declared after its child (ordering violation)",
                    mdecl.name, mdecl.line,
                )
            if pid in parent_ids:
                raise ProcessSemanticError(f"parent {pname!r} listed twice", mdecl.name, mdecl.line)
            parent_ids.append(pid)

        parent_decls = [variables[p] for p in parent_ids]
        shape = tuple(d.size for d in parent_decls) + (vdecl.size,)
        table = np.zeros(shape)
        filled = set()
        for ptoks, qtoks, lineno in mdecl.rows:
            if len(ptoks) != len(parent_decls):
                col = ptoks[0].column if ptoks else qtoks[0].column
                raise ProcessSyntaxError(
                    f"row gives {len(ptoks)} parent symbols, mechanism has {len(parent_decls)} parents",
                    lineno, col,
                )
            if len(qtoks) != vdecl.size:
                raise ProcessSyntaxError(
                    f"row gives {len(qtoks)} probabilities, {vdecl.name} has {vdecl.size} symbols",
                    lineno, qtoks[0].column,
                )
            key = tuple(_symbol(d, t, lineno, vdecl.name) for d, t in zip(parent_decls, ptoks))
            if key in filled:
                raise ProcessSemanticError(f"duplicate row for parents {key}", vdecl.name, lineno)
            probs = np.array([_float(t, lineno) for t in qtoks])
            if np.any(probs < 0) or not np.all(np.isfinite(probs)):
                raise ProcessSemanticError("negative or non-finite probability", vdecl.name, lineno)
            if abs(probs.sum() - 1.0) > ROW_TOLERANCE:
                raise ProcessSemanticError(
                    f"row sums to {probs.sum()!r}, not 1 (normalization)", vdecl.name, lineno
                )
            table[key] = probs
            filled.add(key)
        missing = [k for k in itertools.product(*(range(d.size) for d in parent_decls)) if k not in filled]
        if missing:
            raise ProcessSemanticError(
                f"{len(missing)} parent assignment(s) without a row, first {missing[0]}",
                vdecl.name, mdecl.line,
            )
        by_var[vid] = Mechanism(vid, tuple(parent_ids), table)

    for i, decl in enumerate(variables):
        if i not in by_var:
            raise ProcessSemanticError("no mechanism declared", decl.name, decl.line)
    specs = tuple(
        VariableSpec(i, d.name, d.role, d.size, d.labels) for i, d in enumerate(variables)
    )
    return CausalProcess(specs, tuple(by_var[i] for i in range(len(specs))), name=name)


def _fmt(p: float) -> str:
    return format(float(p), ".17g")


def serialize_process(process: CausalProcess) -> str:
    """Canonical text form of ``process``."""
    lines = [f"process {process.name}"]
    for var, mech in zip(process.variables, process.mechanisms):
        decl = f"variable {var.name} {var.role.value} {var.domain_size}"
        if var.labels is not None:
            decl += " labels " + " ".join(var.labels)
        lines.append("")
        lines.append(decl)
        header = f"mechanism {var.name}"
        parents = [process.variables[p] for p in mech.parents]
        if parents:
            header += " given " + " ".join(p.name for p in parents)
        lines.append(header)
        for key in itertools.product(*(range(p.domain_size) for p in parents)):
            left = " ".join(p.label(k) for p, k in zip(parents, key))
            right = " ".join(_fmt(x) for x in mech.table[key])
            lines.append(f"  {left} : {right}" if left else f"  : {right}")
    return "\n".join(lines) + "\n"

"""Basic-block recovery, jump-target resolution and traversal ordering.

EVM jump destinations are stack values, not instruction operands, so the
graph cannot be read off the listing directly.  Resolution tracks PUSH
constants through an abstract stack (every other producer yields an
unknown), first per block in isolation and then by propagating entry
stacks along the edges found so far until nothing new appears.  This is
enough for compiler-emitted code, where almost every jump is fed by a
nearby PUSH.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, replace

from .disassembler import DisassemblyListing, Instruction, disassemble, render_instruction
from .opcodes import Bytecode, OpcodeKind

# Stack slots hold either an int constant or None (unknown).  Entry stacks
# are implicitly bottomed out with unknowns, so a canonical stack never
# carries unknown values at its bottom end.
STACK_DEPTH_LIMIT = 1024

_NO_JUMP = object()


class EmptyGraphError(ValueError):
    """Raised when a traversal is asked for on a graph with no blocks."""


@dataclass(frozen=True)
class BasicBlock:
    start_pc: int
    instructions: tuple[Instruction, ...]
    successors: frozenset[int] = frozenset()
    unresolved_jump: bool = False

    @property
    def last(self) -> Instruction:
        return self.instructions[-1]


@dataclass(frozen=True)
class ControlFlowGraph:
    blocks: dict[int, BasicBlock]
    entry: int = 0
    unresolved_count: int = 0

    @property
    def edge_count(self) -> int:
        return sum(len(b.successors) for b in self.blocks.values())


@dataclass(frozen=True)
class OpcodeSequence:
    mnemonics: tuple[str, ...]
    source_id: str | None = None

    def __len__(self) -> int:
        return len(self.mnemonics)


# Kinds that end a basic block.  INVALID counts: execution cannot continue
# past an undecodable byte any more than past a STOP.
_BLOCK_ENDERS = frozenset(
    {
        OpcodeKind.JUMP,
        OpcodeKind.CONDITIONAL_JUMP,
        OpcodeKind.TERMINATOR,
        OpcodeKind.INVALID,
    }
)

# mnemonic -> (stack pops, stack pushes) for everything that is not a
# PUSH/DUP/SWAP (those are modeled precisely, not through arity).
_ARITY: dict[str, tuple[int, int]] = {
    "STOP": (0, 0),
    "ADD": (2, 1),
    "MUL": (2, 1),
    "SUB": (2, 1),
    "DIV": (2, 1),
    "SDIV": (2, 1),
    "MOD": (2, 1),
    "SMOD": (2, 1),
    "ADDMOD": (3, 1),
    "MULMOD": (3, 1),
    "EXP": (2, 1),
    "SIGNEXTEND": (2, 1),
    "LT": (2, 1),
    "GT": (2, 1),
    "SLT": (2, 1),
    "SGT": (2, 1),
    "EQ": (2, 1),
    "ISZERO": (1, 1),
    "AND": (2, 1),
    "OR": (2, 1),
    "XOR": (2, 1),
    "NOT": (1, 1),
    "BYTE": (2, 1),
    "SHL": (2, 1),
    "SHR": (2, 1),
    "SAR": (2, 1),
    "SHA3": (2, 1),
    "ADDRESS": (0, 1),
    "BALANCE": (1, 1),
    "ORIGIN": (0, 1),
    "CALLER": (0, 1),
    "CALLVALUE": (0, 1),
    "CALLDATALOAD": (1, 1),
    "CALLDATASIZE": (0, 1),
    "CALLDATACOPY": (3, 0),
    "CODESIZE": (0, 1),
    "CODECOPY": (3, 0),
    "GASPRICE": (0, 1),
    "EXTCODESIZE": (1, 1),
    "EXTCODECOPY": (4, 0),
    "RETURNDATASIZE": (0, 1),
    "RETURNDATACOPY": (3, 0),
    "EXTCODEHASH": (1, 1),
    "BLOCKHASH": (1, 1),
    "COINBASE": (0, 1),
    "TIMESTAMP": (0, 1),
    "NUMBER": (0, 1),
    "PREVRANDAO": (0, 1),
    "GASLIMIT": (0, 1),
    "CHAINID": (0, 1),
    "SELFBALANCE": (0, 1),
    "BASEFEE": (0, 1),
    "POP": (1, 0),
    "MLOAD": (1, 1),
    "MSTORE": (2, 0),
    "MSTORE8": (2, 0),
    "SLOAD": (1, 1),
    "SSTORE": (2, 0),
    "JUMP": (1, 0),
    "JUMPI": (2, 0),
    "PC": (0, 1),
    "MSIZE": (0, 1),
    "GAS": (0, 1),
    "JUMPDEST": (0, 0),
    "LOG0": (2, 0),
    "LOG1": (3, 0),
    "LOG2": (4, 0),
    "LOG3": (5, 0),
    "LOG4": (6, 0),
    "CREATE": (3, 1),
    "CALL": (7, 1),
    "CALLCODE": (7, 1),
    "RETURN": (2, 0),
    "DELEGATECALL": (6, 1),
    "CREATE2": (4, 1),
    "STATICCALL": (6, 1),
    "REVERT": (2, 0),
    "INVALID": (0, 0),
    "SELFDESTRUCT": (1, 0),
}


def split_blocks(listing: DisassemblyListing) -> list[BasicBlock]:
    """Partition the listing at block leaders.

    Leaders: pc 0, every JUMPDEST, and every instruction following a
    JUMP/JUMPI/terminator.  Successors are left empty for resolve_jumps.
    """
    blocks: list[BasicBlock] = []
    current: list[Instruction] = []
    for ins in listing.instructions:
        if current and ins.spec.kind is OpcodeKind.JUMPDEST:
            blocks.append(BasicBlock(current[0].pc, tuple(current)))
            current = []
        current.append(ins)
        if ins.spec.kind in _BLOCK_ENDERS:
            blocks.append(BasicBlock(current[0].pc, tuple(current)))
            current = []
    if current:
        blocks.append(BasicBlock(current[0].pc, tuple(current)))
    return blocks


def _ensure_depth(stack: list, depth: int) -> None:
    if len(stack) < depth:
        stack[0:0] = [None] * (depth - len(stack))


def _canonical(stack: list) -> list:
    drop = 0
    while drop < len(stack) and stack[drop] is None:
        drop += 1
    return stack[drop:]


def _meet(a: list, b: list) -> list:
    # Top-aligned per-slot meet: agreeing constants survive, anything else
    # degrades to unknown.
    merged = []
    for i in range(1, max(len(a), len(b)) + 1):
        va = a[-i] if i <= len(a) else None
        vb = b[-i] if i <= len(b) else None
        merged.append(va if va == vb else None)
    merged.reverse()
    return _canonical(merged)


def _run_block(block: BasicBlock, entry: list) -> tuple[list, object]:
    """Abstract-interpret one block; returns (exit stack, jump target).

    The target is _NO_JUMP unless the block ends in JUMP/JUMPI, in which
    case it is the abstract value on top of the stack at that point.
    """
    stack = list(entry)
    target: object = _NO_JUMP
    for ins in block.instructions:
        spec = ins.spec
        kind = spec.kind
        if kind is OpcodeKind.JUMP or kind is OpcodeKind.CONDITIONAL_JUMP:
            _ensure_depth(stack, 1)
            target = stack[-1]
            pops = 1 if kind is OpcodeKind.JUMP else 2
            _ensure_depth(stack, pops)
            del stack[len(stack) - pops :]
        elif spec.immediate_len > 0:
            if ins.immediate is None:
                stack.append(None)
            else:
                stack.append(int.from_bytes(ins.immediate, "big"))
        elif spec.mnemonic == "PUSH0":
            stack.append(0)
        elif spec.mnemonic.startswith("DUP") and kind is OpcodeKind.OTHER:
            n = int(spec.mnemonic[3:])
            _ensure_depth(stack, n)
            stack.append(stack[-n])
        elif spec.mnemonic.startswith("SWAP") and kind is OpcodeKind.OTHER:
            n = int(spec.mnemonic[4:])
            _ensure_depth(stack, n + 1)
            stack[-1], stack[-n - 1] = stack[-n - 1], stack[-1]
        else:
            pops, pushes = _ARITY.get(spec.mnemonic, (0, 0))
            _ensure_depth(stack, pops)
            del stack[len(stack) - pops :]
            stack.extend([None] * pushes)
        if len(stack) > STACK_DEPTH_LIMIT:
            del stack[: len(stack) - STACK_DEPTH_LIMIT]
    return _canonical(stack), target


def resolve_jumps(blocks: list[BasicBlock]) -> ControlFlowGraph:
    """Connect blocks into a graph by two-phase constant propagation.

    Phase 1 interprets every block against an all-unknown entry stack,
    which resolves the common PUSH-then-JUMP idiom locally.  Phase 2
    propagates entry stacks from the entry block along discovered edges to
    a fixpoint, accumulating any additional constant targets; edges are
    only ever added.  A jump whose final target is unknown or not a
    JUMPDEST gets no edge and marks its block unresolved.
    """
    blocks = list(blocks)
    if not blocks:
        return ControlFlowGraph(blocks={}, entry=0, unresolved_count=0)

    by_pc = {b.start_pc: b for b in blocks}
    pcs = [b.start_pc for b in blocks]
    following = {pcs[i]: pcs[i + 1] for i in range(len(pcs) - 1)}
    jumpdests = {
        pc for pc, b in by_pc.items() if b.instructions[0].spec.kind is OpcodeKind.JUMPDEST
    }

    resolved: dict[int, set[int]] = {pc: set() for pc in pcs}

    def fall_through(pc: int) -> set[int]:
        kind = by_pc[pc].last.spec.kind
        out: set[int] = set()
        if kind is OpcodeKind.CONDITIONAL_JUMP or kind not in _BLOCK_ENDERS:
            if pc in following:
                out.add(following[pc])
        return out

    def note_target(pc: int, value: object) -> None:
        if isinstance(value, int) and value in jumpdests:
            resolved[pc].add(value)

    # Phase 1: local pass.
    for pc in pcs:
        _, target = _run_block(by_pc[pc], [])
        if target is not _NO_JUMP:
            note_target(pc, target)

    # Phase 2: propagate entry stacks from the entry block.
    entries: dict[int, list] = {pcs[0]: []}
    work = deque([pcs[0]])
    while work:
        pc = work.popleft()
        exit_stack, target = _run_block(by_pc[pc], entries[pc])
        if target is not _NO_JUMP:
            note_target(pc, target)
        for succ in fall_through(pc) | resolved[pc]:
            if succ not in entries:
                entries[succ] = exit_stack
                work.append(succ)
            else:
                merged = _meet(entries[succ], exit_stack)
                if merged != entries[succ]:
                    entries[succ] = merged
                    work.append(succ)

    # Final verdicts against the fixpoint entry stacks.
    out: dict[int, BasicBlock] = {}
    unresolved_count = 0
    for pc in pcs:
        _, target = _run_block(by_pc[pc], entries.get(pc, []))
        unresolved = False
        if target is not _NO_JUMP:
            if isinstance(target, int) and target in jumpdests:
                resolved[pc].add(target)
            else:
                unresolved = True
        unresolved_count += unresolved
        out[pc] = replace(
            by_pc[pc],
            successors=frozenset(fall_through(pc) | resolved[pc]),
            unresolved_jump=unresolved,
        )
    return ControlFlowGraph(blocks=out, entry=pcs[0], unresolved_count=unresolved_count)


def build_cfg(bytecode: Bytecode) -> ControlFlowGraph:
    return resolve_jumps(split_blocks(disassemble(bytecode)))


def dfs_extract(cfg: ControlFlowGraph) -> OpcodeSequence:
    """Depth-first mnemonic stream from the entry block.

    Explicit stack with a visited set; a block's mnemonics are appended in
    instruction order the first time it is popped, PUSH operands dropped.
    Successors are pushed in ascending start_pc order, so the highest
    address is explored first.  Unreachable blocks contribute nothing.
    """
    if not cfg.blocks:
        raise EmptyGraphError("control flow graph has no blocks")
    visited: set[int] = set()
    stack = [cfg.entry]
    mnemonics: list[str] = []
    while stack:
        pc = stack.pop()
        if pc in visited:
            continue
        visited.add(pc)
        block = cfg.blocks[pc]
        mnemonics.extend(ins.spec.mnemonic for ins in block.instructions)
        stack.extend(sorted(s for s in block.successors if s not in visited))
    return OpcodeSequence(tuple(mnemonics))


def opcode_sequence(bytecode: Bytecode) -> OpcodeSequence:
    """Full per-contract analysis: disassemble, build the graph, traverse."""
    cfg = build_cfg(bytecode)
    if not cfg.blocks:
        return OpcodeSequence((), source_id=bytecode.source_id)
    return replace(dfs_extract(cfg), source_id=bytecode.source_id)


def to_dot(cfg: ControlFlowGraph) -> str:
    """Graphviz rendering for inspection; nodes and edges in pc order."""
    lines = ["digraph cfg {"]
    for pc in sorted(cfg.blocks):
        block = cfg.blocks[pc]
        label = "\\n".join(
            [f"0x{pc:X}"] + [render_instruction(ins) for ins in block.instructions]
        )
        lines.append(f'  "0x{pc:X}" [label="{label}"];')
    for pc in sorted(cfg.blocks):
        for succ in sorted(cfg.blocks[pc].successors):
            lines.append(f'  "0x{pc:X}" -> "0x{succ:X}";')
    lines.append("}")
    return "\n".join(lines)

"""Linear-sweep disassembly of EVM bytecode into program-counter listings.

Bytes are decoded in order from offset 0; PUSH immediates are consumed
inline.  No attempt is made to separate code from trailing data regions:
whatever the bytes decode to is what the listing shows.
"""

from __future__ import annotations

from dataclasses import dataclass

from .opcodes import Bytecode, OpcodeSpec, lookup_opcode


@dataclass(frozen=True, slots=True)
class Instruction:
    pc: int
    spec: OpcodeSpec
    immediate: bytes | None = None
    truncated: bool = False

    @property
    def mnemonic(self) -> str:
        return self.spec.mnemonic


@dataclass(frozen=True, slots=True)
class DisassemblyListing:
    instructions: tuple[Instruction, ...]
    total_bytes: int

    def __len__(self) -> int:
        return len(self.instructions)


def disassemble(bytecode: Bytecode) -> DisassemblyListing:
    """Decode every byte; a trailing underfull PUSH is flagged, not fatal."""
    raw = bytecode.data
    instructions: list[Instruction] = []
    pc = 0
    while pc < len(raw):
        spec = lookup_opcode(raw[pc])
        if spec.immediate_len == 0:
            instructions.append(Instruction(pc, spec))
            pc += 1
            continue
        available = len(raw) - pc - 1
        if available < spec.immediate_len:
            instructions.append(Instruction(pc, spec, immediate=None, truncated=True))
            pc = len(raw)
        else:
            immediate = raw[pc + 1 : pc + 1 + spec.immediate_len]
            instructions.append(Instruction(pc, spec, immediate=immediate))
            pc += 1 + spec.immediate_len
    return DisassemblyListing(tuple(instructions), len(raw))


def render_instruction(instruction: Instruction) -> str:
    """One listing line: uppercase-hex pc, mnemonic, lowercase-hex immediate."""
    line = f"0x{instruction.pc:X} {instruction.mnemonic}"
    if instruction.immediate is not None:
        line += f" 0x{instruction.immediate.hex()}"
    return line


def render(listing: DisassemblyListing) -> str:
    return "\n".join(render_instruction(ins) for ins in listing.instructions)


def reassemble(listing: DisassemblyListing) -> bytes:
    """Inverse of disassemble for listings without a truncated tail."""
    out = bytearray()
    for ins in listing.instructions:
        if ins.truncated:
            raise ValueError(f"cannot reassemble truncated instruction at pc {ins.pc}")
        out.append(ins.spec.byte_value)
        if ins.immediate is not None:
            out.extend(ins.immediate)
    return bytes(out)

"""Canonical EVM opcode table and raw bytecode container.

The table is frozen to the Shanghai revision of the public instruction set
(PUSH0 included).  Unassigned byte values decode to INVALID, so every byte
value 0-255 resolves to a spec and decoding never fails.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum


class MalformedHexError(ValueError):
    """Bytecode hex input is odd-length or contains a non-hex character."""


class OpcodeKind(Enum):
    JUMP = "jump"
    CONDITIONAL_JUMP = "conditional_jump"
    JUMPDEST = "jumpdest"
    TERMINATOR = "terminator"
    OTHER = "other"
    INVALID = "invalid"


@dataclass(frozen=True, slots=True)
class OpcodeSpec:
    byte_value: int
    mnemonic: str
    immediate_len: int
    kind: OpcodeKind


@dataclass(frozen=True, slots=True)
class Bytecode:
    """Immutable byte string of a deployed contract plus an optional id."""

    data: bytes
    source_id: str | None = None

    def __len__(self) -> int:
        return len(self.data)

    def to_hex(self) -> str:
        return self.data.hex()


_HEX_BODY = re.compile(r"[0-9a-fA-F]*\Z")


def parse_hex(text: str) -> Bytecode:
    """Parse a hex string (optional 0x prefix, even length) into Bytecode."""
    body = text[2:] if text[:2] in ("0x", "0X") else text
    if len(body) % 2 != 0:
        raise MalformedHexError(f"odd-length hex string ({len(body)} digits)")
    if not _HEX_BODY.match(body):
        raise MalformedHexError(f"non-hex character in {body!r}")
    return Bytecode(bytes.fromhex(body))


# Assigned opcodes: byte -> (mnemonic, immediate bytes).  Only PUSH1..PUSH32
# carry immediates.
_ASSIGNED: dict[int, tuple[str, int]] = {
    # Stop & arithmetic
    0x00: ("STOP", 0),
    0x01: ("ADD", 0),
    0x02: ("MUL", 0),
    0x03: ("SUB", 0),
    0x04: ("DIV", 0),
    0x05: ("SDIV", 0),
    0x06: ("MOD", 0),
    0x07: ("SMOD", 0),
    0x08: ("ADDMOD", 0),
    0x09: ("MULMOD", 0),
    0x0A: ("EXP", 0),
    0x0B: ("SIGNEXTEND", 0),
    # Comparison & bitwise
    0x10: ("LT", 0),
    0x11: ("GT", 0),
    0x12: ("SLT", 0),
    0x13: ("SGT", 0),
    0x14: ("EQ", 0),
    0x15: ("ISZERO", 0),
    0x16: ("AND", 0),
    0x17: ("OR", 0),
    0x18: ("XOR", 0),
    0x19: ("NOT", 0),
    0x1A: ("BYTE", 0),
    0x1B: ("SHL", 0),
    0x1C: ("SHR", 0),
    0x1D: ("SAR", 0),
    # Hashing
    0x20: ("SHA3", 0),
    # Environment
    0x30: ("ADDRESS", 0),
    0x31: ("BALANCE", 0),
    0x32: ("ORIGIN", 0),
    0x33: ("CALLER", 0),
    0x34: ("CALLVALUE", 0),
    0x35: ("CALLDATALOAD", 0),
    0x36: ("CALLDATASIZE", 0),
    0x37: ("CALLDATACOPY", 0),
    0x38: ("CODESIZE", 0),
    0x39: ("CODECOPY", 0),
    0x3A: ("GASPRICE", 0),
    0x3B: ("EXTCODESIZE", 0),
    0x3C: ("EXTCODECOPY", 0),
    0x3D: ("RETURNDATASIZE", 0),
    0x3E: ("RETURNDATACOPY", 0),
    0x3F: ("EXTCODEHASH", 0),
    # Block context
    0x40: ("BLOCKHASH", 0),
    0x41: ("COINBASE", 0),
    0x42: ("TIMESTAMP", 0),
    0x43: ("NUMBER", 0),
    0x44: ("PREVRANDAO", 0),
    0x45: ("GASLIMIT", 0),
    0x46: ("CHAINID", 0),
    0x47: ("SELFBALANCE", 0),
    0x48: ("BASEFEE", 0),
    # Stack / memory / storage / control
    0x50: ("POP", 0),
    0x51: ("MLOAD", 0),
    0x52: ("MSTORE", 0),
    0x53: ("MSTORE8", 0),
    0x54: ("SLOAD", 0),
    0x55: ("SSTORE", 0),
    0x56: ("JUMP", 0),
    0x57: ("JUMPI", 0),
    0x58: ("PC", 0),
    0x59: ("MSIZE", 0),
    0x5A: ("GAS", 0),
    0x5B: ("JUMPDEST", 0),
    0x5F: ("PUSH0", 0),
    # PUSH1..PUSH32, DUP1..DUP16, SWAP1..SWAP16
    **{0x60 + i: (f"PUSH{i + 1}", i + 1) for i in range(32)},
    **{0x80 + i: (f"DUP{i + 1}", 0) for i in range(16)},
    **{0x90 + i: (f"SWAP{i + 1}", 0) for i in range(16)},
    # Logging
    0xA0: ("LOG0", 0),
    0xA1: ("LOG1", 0),
    0xA2: ("LOG2", 0),
    0xA3: ("LOG3", 0),
    0xA4: ("LOG4", 0),
    # System
    0xF0: ("CREATE", 0),
    0xF1: ("CALL", 0),
    0xF2: ("CALLCODE", 0),
    0xF3: ("RETURN", 0),
    0xF4: ("DELEGATECALL", 0),
    0xF5: ("CREATE2", 0),
    0xFA: ("STATICCALL", 0),
    0xFD: ("REVERT", 0),
    0xFE: ("INVALID", 0),
    0xFF: ("SELFDESTRUCT", 0),
}

# Execution cannot continue past any of these.
TERMINATORS = frozenset({"STOP", "RETURN", "REVERT", "SELFDESTRUCT", "INVALID"})

_KIND_BY_MNEMONIC = {
    "JUMP": OpcodeKind.JUMP,
    "JUMPI": OpcodeKind.CONDITIONAL_JUMP,
    "JUMPDEST": OpcodeKind.JUMPDEST,
}


def _build_table() -> tuple[OpcodeSpec, ...]:
    table = []
    for byte_value in range(256):
        if byte_value in _ASSIGNED:
            mnemonic, imm = _ASSIGNED[byte_value]
            kind = _KIND_BY_MNEMONIC.get(mnemonic, OpcodeKind.OTHER)
            if mnemonic in TERMINATORS:
                kind = OpcodeKind.TERMINATOR
            table.append(OpcodeSpec(byte_value, mnemonic, imm, kind))
        else:
            table.append(OpcodeSpec(byte_value, "INVALID", 0, OpcodeKind.INVALID))
    return tuple(table)


OPCODE_TABLE: tuple[OpcodeSpec, ...] = _build_table()


def lookup_opcode(byte_value: int) -> OpcodeSpec:
    """Total lookup over 0-255; unassigned bytes come back as INVALID."""
    if not 0 <= byte_value <= 255:
        raise ValueError(f"byte value out of range: {byte_value}")
    return OPCODE_TABLE[byte_value]

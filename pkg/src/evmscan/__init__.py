"""Bytecode-level vulnerability screening for EVM smart contracts.

Pipeline: disassemble raw bytecode, recover the control flow graph,
linearize it depth-first into an opcode sequence, encode sequences as
n-gram/tf-idf feature rows, and classify them with a metric-learning MLP.
"""

from .cfg import (
    BasicBlock,
    ControlFlowGraph,
    OpcodeSequence,
    build_cfg,
    dfs_extract,
    opcode_sequence,
    resolve_jumps,
    split_blocks,
    to_dot,
)
from .disassembler import (
    DisassemblyListing,
    Instruction,
    disassemble,
    render,
    render_instruction,
)
from .features import (
    FeatureMatrix,
    IntegerEncoding,
    IntegerSequenceEncoder,
    NgramTfidfVectorizer,
    OpcodeSequenceExtractor,
    Vocabulary,
    build_feature_matrix,
    build_integer_encoding,
    build_vocabulary,
    extract_ngrams,
    integer_encode,
    tfidf_encode,
)
from .model import (
    MetricMLPClassifier,
    ModelParameters,
    NetworkConfig,
    TrainingConfig,
    predict,
    train,
)
from .opcodes import Bytecode, OpcodeKind, OpcodeSpec, lookup_opcode, parse_hex

__version__ = "0.1.0"

__all__ = [
    "BasicBlock",
    "Bytecode",
    "ControlFlowGraph",
    "DisassemblyListing",
    "FeatureMatrix",
    "Instruction",
    "IntegerEncoding",
    "IntegerSequenceEncoder",
    "MetricMLPClassifier",
    "ModelParameters",
    "NetworkConfig",
    "NgramTfidfVectorizer",
    "OpcodeKind",
    "OpcodeSequence",
    "OpcodeSequenceExtractor",
    "OpcodeSpec",
    "TrainingConfig",
    "Vocabulary",
    "build_cfg",
    "build_feature_matrix",
    "build_integer_encoding",
    "build_vocabulary",
    "dfs_extract",
    "disassemble",
    "extract_ngrams",
    "integer_encode",
    "lookup_opcode",
    "opcode_sequence",
    "parse_hex",
    "predict",
    "render",
    "render_instruction",
    "resolve_jumps",
    "split_blocks",
    "tfidf_encode",
    "to_dot",
    "train",
    "__version__",
]

"""Memory-lean Viterbi decoding: pruned non-recursive divide-and-conquer
(FLASH), its dynamic beam-search variant (FLASH-BS), the baselines they are
measured against, and a metered benchmark harness.
"""

from .baselines import checkpoint_viterbi, sieve_mp_decode, static_beam_decode
from .beam import (
    BeamDiagnostics,
    BeamElement,
    BeamHeap,
    beam_push,
    beam_step,
    flash_bs_decode,
    relative_error,
)
from .errors import (
    BeamExhaustedError,
    ConfigurationError,
    FlashViterbiError,
    InfeasibleDecodeError,
    InternalConsistencyError,
    ModelFormatError,
)
from .flash import (
    OutputBoard,
    SubtaskSpec,
    TaskQueue,
    decode_initial_task,
    decode_subtask,
    flash_decode,
    plan_segments,
)
from .metering import ALGORITHMS, MemoryReport, Meter, TimingReport, metered_run
from .model import (
    GeneratorConfig,
    HmmModel,
    ObservationSequence,
    generate_er_hmm,
    load_model,
    load_observations,
    sample_observations,
    save_model,
    save_observations,
)
from .oracle import DecodedPath, brute_force_decode, path_score, vanilla_viterbi

__version__ = "0.1.0"

__all__ = [
    "ALGORITHMS",
    "BeamDiagnostics",
    "BeamElement",
    "BeamExhaustedError",
    "BeamHeap",
    "ConfigurationError",
    "DecodedPath",
    "FlashViterbiError",
    "GeneratorConfig",
    "HmmModel",
    "InfeasibleDecodeError",
    "InternalConsistencyError",
    "MemoryReport",
    "Meter",
    "ModelFormatError",
    "ObservationSequence",
    "OutputBoard",
    "SubtaskSpec",
    "TaskQueue",
    "TimingReport",
    "beam_push",
    "beam_step",
    "brute_force_decode",
    "checkpoint_viterbi",
    "decode_initial_task",
    "decode_subtask",
    "flash_bs_decode",
    "flash_decode",
    "generate_er_hmm",
    "load_model",
    "load_observations",
    "metered_run",
    "path_score",
    "plan_segments",
    "relative_error",
    "sample_observations",
    "save_model",
    "save_observations",
    "sieve_mp_decode",
    "static_beam_decode",
    "vanilla_viterbi",
]

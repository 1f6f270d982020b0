# ==============================================================================
# GROOVESYNTH - ERRORS
# ==============================================================================
# Version: 1.0
# Last Updated: October 2026
# Author: GrooveSynth Team
# Purpose: Exception hierarchy and CLI exit codes
# ==============================================================================


class GrooveSynthError(Exception):
    """
    Base class for every error the system raises on purpose.

    The CLI maps ``exit_code`` straight to the process exit status, so each
    family below pins its own code.
    """

    exit_code = 1


# =============================================================================
# CONFIGURATION ERRORS (exit 2)
# =============================================================================

class ConfigError(GrooveSynthError):
    exit_code = 2


class MissingCheckpoint(ConfigError):
    pass


class StageOrderError(ConfigError):
    pass


# =============================================================================
# DATA ERRORS (exit 3)
# =============================================================================

class DataError(GrooveSynthError):
    exit_code = 3


class ShapeMismatch(DataError):
    pass


class InvalidTopology(DataError):
    pass


class DegenerateBone(DataError):
    def __init__(self, frame: int, bone: int, length: float):
        super().__init__(f"Bone {bone} collapses at frame {frame} (length {length:.3e})")
        self.frame = frame
        self.bone = bone


class MissingRoot(DataError):
    pass


class TooShortClip(DataError):
    pass


class NoBeatsFound(DataError):
    pass


class EmptyBeats(DataError):
    pass


class IndexOutOfRange(DataError):
    pass


class CoverageError(DataError):
    pass


class TooFewSegments(DataError):
    pass


class DegenerateCorpus(DataError):
    pass


class NoKinematicBeats(DataError):
    pass


class ManifestError(DataError):
    pass


class FormatError(DataError):
    pass


class TooShortSeed(DataError):
    pass


class TooShortAudio(DataError):
    pass


# =============================================================================
# NUMERIC ERRORS (exit 4)
# =============================================================================

class NumericError(GrooveSynthError):
    exit_code = 4


class NonFiniteLoss(NumericError):
    def __init__(self, stage: str, epoch: int, batch: int, value: float):
        super().__init__(f"Non-finite {stage} loss ({value}) at epoch {epoch}, batch {batch}")
        self.stage = stage
        self.epoch = epoch
        self.batch = batch

"""Exception hierarchy shared across the runtime."""


class TableCrewError(Exception):
    """Base class for all domain errors."""


# -- table parsing ----------------------------------------------------------

class NoTableFound(TableCrewError):
    """No pipe-delimited table block exists in the given text."""


class HeaderMismatch(TableCrewError):
    """No parsed header cell could be aligned to any schema column."""


# -- workboard --------------------------------------------------------------

class PathExists(TableCrewError):
    """A workboard already occupies the target location."""


class MalformedBoard(TableCrewError):
    """Board sections or slot tags are missing or unbalanced."""


class SlotNotOwned(TableCrewError):
    """The writer has no result slot on the board."""


class NotAuthorized(TableCrewError):
    """A worker attempted to change a peer's checklist line."""


class LockTimeout(TableCrewError):
    """The exclusive board lock was not acquired within the wait budget."""


# -- skill bank -------------------------------------------------------------

class VersionConflict(TableCrewError):
    """Appended skill version is not latest + 1 for its name."""


class SyntaxInvalid(TableCrewError):
    """A skill body or frontmatter failed validation."""


class NotResolvable(TableCrewError):
    """All resolver stages failed and no creator is configured."""


class SynthesisFailed(TableCrewError):
    """The synthesis backend produced no valid skill within the retry budget."""


class RepairFailed(TableCrewError):
    """No repair candidate validated within the retry budget."""


class CompatibilityBroken(TableCrewError):
    """A skill revision dropped its entry command or an existing argument."""


class BankFrozen(TableCrewError):
    """Append attempted on a frozen skill bank."""


class UnknownSkill(TableCrewError):
    """The named skill does not exist in the bank."""


# -- agents -----------------------------------------------------------------

class NoStrategy(TableCrewError):
    """Neither the router skill nor the fallback produced a strategy label."""


class DecompositionInvalid(TableCrewError):
    """Backend output could not be parsed into subtask specs."""


class EmptyResult(TableCrewError):
    """Every worker slot was empty or unparseable at aggregation time."""


class GenerationTimeout(TableCrewError):
    """A generation call exceeded its time budget."""


class BackendError(TableCrewError):
    """The generation backend returned an error payload."""


class PlaybookMiss(TableCrewError):
    """No playbook entry pattern matched the prompt (scripted backend)."""


# -- tools / environment ----------------------------------------------------

class UnknownTool(TableCrewError):
    """Tool name is not registered."""


class ToolTimeout(TableCrewError):
    """A tool handler exceeded its time budget."""


class SandboxViolation(TableCrewError):
    """A file tool tried to escape its sandbox root."""


class FixtureMiss(TableCrewError):
    """Replay request not present in the fixture corpus (miss policy: error)."""


class WebTransportError(TableCrewError):
    """Live web request failed at the transport level."""


# -- evolution --------------------------------------------------------------

class ReflectionInvalid(TableCrewError):
    """Reflection output kept violating the placeholder constraint."""


# -- cli --------------------------------------------------------------------

class ConfigError(TableCrewError):
    """Run configuration is missing, malformed, or references absent paths."""

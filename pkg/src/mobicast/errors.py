"""Shared exception types.

Semantics:
  ShapeError      -- tensor/layer dimension disagreement
  DomainError     -- value outside an operation's documented domain
  ContractError   -- API misuse (wrong call order, invalid configuration)
  IngestionError  -- structural problems in input files (gaps, missing regions)
  DataValidationError -- well-formed input with invalid values (negative counts)
  ScenarioFormatError -- malformed scenario file
  DivergenceError -- training produced non-finite loss/gradients
  CheckpointError -- unreadable or incompatible checkpoint file
"""


class ShapeError(ValueError):
    pass


class DomainError(ValueError):
    pass


class ContractError(RuntimeError):
    pass


class IngestionError(ValueError):
    pass


class DataValidationError(ValueError):
    pass


class ScenarioFormatError(ValueError):
    pass


class DivergenceError(RuntimeError):
    pass


class CheckpointError(ValueError):
    pass

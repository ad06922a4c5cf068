"""Exception hierarchy.

Every error carries the process exit code the CLI maps it to, so scripts can
branch on failures without parsing messages.
"""


class SchrodiffError(Exception):
    exit_code = 1
    stage = "pipeline"


# -- parsing (exit 1) --------------------------------------------------------

class ParseError(SchrodiffError):
    exit_code = 1
    stage = "parse"

    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f":{line}"
        super().__init__(f"{where}: {message}" if where else message)


class NonTriangleFace(ParseError):
    pass


class DegenerateTriangle(ParseError):
    def __init__(self, message, faces=(), line=None, path=None):
        self.faces = list(faces)
        super().__init__(message, line=line, path=path)


class MissingColor(SchrodiffError):
    exit_code = 1
    stage = "parse"


# -- operator assembly (exit 2) ----------------------------------------------

class AssemblyError(SchrodiffError):
    exit_code = 2
    stage = "assembly"


class DegenerateMesh(AssemblyError):
    pass


class SingularTriangle(AssemblyError):
    pass


class NegativePotential(AssemblyError):
    pass


# -- spectrum (exit 3) -------------------------------------------------------

class EigenError(SchrodiffError):
    exit_code = 3
    stage = "eigensolve"


class ConvergenceFailure(EigenError):
    def __init__(self, message, iterations=None):
        self.iterations = iterations
        super().__init__(message)


class KTooLarge(EigenError):
    pass


class SolveFailure(EigenError):
    pass


# -- io (exit 4) -------------------------------------------------------------

class SignatureIOError(SchrodiffError):
    exit_code = 4
    stage = "io"


class SchemaError(SignatureIOError):
    def __init__(self, message, field=None):
        self.field = field
        super().__init__(message)


# -- comparison / batch / experiments ----------------------------------------

class BinMismatch(SchrodiffError):
    exit_code = 5
    stage = "compare"


class EmptyDatabase(SchrodiffError):
    exit_code = 6
    stage = "retrieve"


class HypothesisViolated(SchrodiffError):
    exit_code = 7
    stage = "stability"


class PipelineError(SchrodiffError):
    """Wraps a failure of one database entry, naming the stage that failed."""

    def __init__(self, path, stage, cause):
        self.path = path
        self.stage = stage
        self.cause = cause
        self.exit_code = getattr(cause, "exit_code", 1)
        super().__init__(f"{path}: {stage} failed: {cause}")

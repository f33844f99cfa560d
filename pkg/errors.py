"""Error taxonomy shared by every layer of the package."""


class SysIdError(Exception):
    """Base class for all errors raised by this package."""


class SpecError(SysIdError):
    """A model specification or estimate violates one of its invariants."""


class DimensionMismatch(SpecError):
    def __init__(self, field, expected, got):
        self.field = field
        self.expected = tuple(expected) if expected is not None else None
        self.got = tuple(got) if got is not None else None
        super().__init__(f"{field}: expected shape {self.expected}, got {self.got}")


class NotSPD(SpecError):
    def __init__(self, matrix, min_eigenvalue, detail=None):
        self.matrix = matrix
        self.min_eigenvalue = float(min_eigenvalue)
        message = detail or f"smallest eigenvalue {self.min_eigenvalue:.3e}"
        super().__init__(f"{matrix} is not symmetric positive definite: {message}")


class NotSymmetric(NotSPD):
    def __init__(self, matrix, asymmetry):
        self.asymmetry = float(asymmetry)
        super().__init__(matrix, float("nan"), detail=f"asymmetry {self.asymmetry:.3e}")


class NonPositiveWeight(SpecError):
    def __init__(self, name, value):
        self.name = name
        self.value = value
        super().__init__(f"{name} must be > 0, got {value}")


class NegativeNoiseScale(SpecError):
    def __init__(self, value):
        self.value = value
        super().__init__(f"noise_scale must be >= 0, got {value}")


class NonFiniteValue(SpecError):
    def __init__(self, field):
        self.field = field
        super().__init__(f"{field} contains non-finite entries")


class InvalidGrid(SysIdError):
    pass


class UnknownKind(SysIdError):
    def __init__(self, kind):
        self.kind = kind
        super().__init__(f"unknown control kind '{kind}'")


class SingularSystem(SysIdError):
    def __init__(self, where, detail=""):
        self.where = where
        super().__init__(f"singular system in {where}: {detail}" if detail else f"singular system in {where}")


class DescentViolation(SysIdError):
    """J increased across a sweep. Carries the sweep's DescentGap."""

    def __init__(self, iteration, gap, J_prev, J_next):
        self.iteration = iteration
        self.gap = gap
        self.J_prev = J_prev
        self.J_next = J_next
        super().__init__(
            f"J increased at sweep {iteration}: {J_prev:.17g} -> {J_next:.17g} "
            f"(E-step half lhs={gap.estep_lhs:.6e} rhs={gap.estep_rhs:.6e}, "
            f"M-step half lhs={gap.mstep_lhs:.6e} rhs={gap.mstep_rhs:.6e})"
        )


class DatasetFormatError(SysIdError):
    def __init__(self, path, row, detail):
        self.path = str(path)
        self.row = row
        where = f"row {row}" if row is not None else "header"
        super().__init__(f"{self.path}: {where}: {detail}")


class SizeCapExceeded(SysIdError):
    def __init__(self, field, value, cap):
        self.field = field
        super().__init__(f"size cap exceeded: {field}={value} > {cap}")

class MulticalError(Exception):
    exit_code = 1
    kind = 'error'


class DataError(MulticalError):
    exit_code = 3
    kind = 'data'


class ConfigError(DataError):
    kind = 'config'


class NotRepresentableError(DataError):
    kind = 'not-representable'


class NumericError(MulticalError):
    exit_code = 4
    kind = 'numeric'

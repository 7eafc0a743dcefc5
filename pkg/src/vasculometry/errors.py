"""Exception types shared across the package."""


class InputError(ValueError):
    """An input file or value violates a documented contract.

    Raised for undecodable images, dimension mismatches between the
    likelihood map and companion grids, malformed manifests, and other
    problems with user-supplied data.  The CLI maps this to exit code 2.
    """


class ConfigError(ValueError):
    """A configuration document is malformed or out of range.

    The CLI maps this to exit code 3.
    """

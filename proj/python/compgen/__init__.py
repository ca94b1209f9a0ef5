"""Python access to the compgen core: splits, factorization, metrics and experiment runs."""

from ._core import *  # noqa: F401,F403
from ._core import CompgenError, ErrorCode, __doc__  # noqa: F401

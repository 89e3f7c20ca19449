"""Exceptions raised by the embedding toolkit."""


class BipartiteEmbeddingError(Exception):
    """Base class for all toolkit errors"""


class EdgeListParseError(BipartiteEmbeddingError):
    """A line of an edge-list or rating file could not be parsed"""

    def __init__(self, line_number, line, reason="expected <a_id>\\t<b_id>[\\t<weight>]"):
        self.line_number = line_number
        self.line = line
        super().__init__(f"line {line_number}: {reason}: {line!r}")


class BipartiteViolationError(BipartiteEmbeddingError):
    """A node id appears on both sides of the edge list"""


class EmptyGraphError(BipartiteEmbeddingError):
    """An operation produced or received a graph without edges"""


class ParameterError(BipartiteEmbeddingError, ValueError):
    """A numeric parameter is outside its allowed range"""


class NoNegativesError(BipartiteEmbeddingError):
    """The graph is complete bipartite, so no cross-part non-edge exists"""


class NegativeExhaustionError(BipartiteEmbeddingError):
    """More negative pairs were requested than there are non-edges"""


class NoNeighborError(BipartiteEmbeddingError):
    """A walk was started from an isolated node"""


class NodeLookupError(BipartiteEmbeddingError, KeyError):
    """A node is missing from a coordinate or embedding table"""

    def __str__(self):
        return str(self.args[0]) if self.args else "unknown node"


class MalformedRecordError(BipartiteEmbeddingError):
    """A sample record violates its kind's shape"""


class DivergenceError(BipartiteEmbeddingError):
    """Training produced a non-finite loss"""

    def __init__(self, epoch, loss):
        self.epoch = epoch
        self.loss = loss
        super().__init__(f"training diverged at epoch {epoch} (loss={loss})")


class DegenerateClassifierError(BipartiteEmbeddingError):
    """A classifier was asked to fit data with a single class"""


class EmptyTaskError(BipartiteEmbeddingError):
    """An evaluation task has no qualifying nodes, users or test edges"""


class ShapeError(BipartiteEmbeddingError, ValueError):
    """Input vectors do not match the expected dimension"""


class SkipUser(BipartiteEmbeddingError):
    """Signal that a user cannot be ranked and is left out of the mean"""
